//! Stationary random coefficient fields with finite range of dependence.
//!
//! A field is described by a [`FieldDescriptor`]; no cell data is ever stored.
//! Each unit lattice cell `z + [0,1)^d` owns one symmetric matrix drawn from
//! the counter stream keyed by `(seed, z)`, and the field value at `x` is a
//! convex combination of the cell matrices near `x` with weights given by a
//! product biweight mollifier of radius `ρ < 1/2`. Convexity of the admissible
//! set keeps every value inside the ellipticity class, and the weights make
//! `A(x)` depend only on the cells within `L∞` distance `ρ` of `x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, StreamId};
use crate::sym::SymMat;

pub const DEFAULT_RHO: f64 = 0.25;
pub const DEFAULT_CROSS_MARGIN: f64 = 0.2;
pub const DEFAULT_K0: f64 = 50.0;

/// Uniform ellipticity and Hölder regularity constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityParams {
    pub lambda: f64,
    #[serde(rename = "Lambda_")]
    pub big_lambda: f64,
    pub alpha0: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub cross_margin: f64,
}

impl EllipticityParams {
    /// Lipschitz regularity, the default cross margin and a generous Hölder constant.
    pub fn new(lambda: f64, big_lambda: f64) -> Self {
        Self {
            lambda,
            big_lambda,
            alpha0: 1.0,
            k0: DEFAULT_K0,
            cross_margin: DEFAULT_CROSS_MARGIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            bad.push(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.big_lambda >= self.lambda && self.big_lambda.is_finite()) {
            bad.push(format!(
                "Lambda = {} must be finite and >= lambda",
                self.big_lambda
            ));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            bad.push(format!("alpha0 = {} must lie in (0, 1]", self.alpha0));
        }
        if !(self.k0 >= 1.0 && self.k0.is_finite()) {
            bad.push(format!("K0 = {} must be >= 1", self.k0));
        }
        if !(self.cross_margin > 0.0 && self.cross_margin < 1.0) {
            bad.push(format!(
                "cross_margin = {} must lie in (0, 1)",
                self.cross_margin
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Topology {
    FreeSpace,
    Torus { period: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Interpolation {
    /// Raw cell values; discontinuous, used for closed-form oracles only.
    PiecewiseConstant,
    Mollified { rho: f64 },
}

impl Default for Interpolation {
    fn default() -> Self {
        Interpolation::Mollified { rho: DEFAULT_RHO }
    }
}

/// Law of a single cell matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellLaw {
    /// Diagonal entries uniform in `[λ, Λ]`, off-diagonal uniform in the band
    /// allowed by the eigenvalue bounds and the cross margin.
    Uniform,
    /// `a·I` with `a ∈ {low, high}` equiprobable.
    TwoPoint { low: f64, high: f64 },
    /// `diag(a(x₁), b(x₁))` constant along `x₂`; `a` and `b` independent and
    /// each equiprobable on its two values.
    Laminar { a: [f64; 2], b: [f64; 2] },
}

impl Default for CellLaw {
    fn default() -> Self {
        CellLaw::Uniform
    }
}

/// Complete, serializable description of a field realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub seed: u64,
    pub dimension: usize,
    pub topology: Topology,
    pub params: EllipticityParams,
    #[serde(default)]
    pub law: CellLaw,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Integer lattice shift accumulated by translations.
    #[serde(default)]
    pub offset: [i64; 2],
}

impl FieldDescriptor {
    pub fn new(seed: u64, params: EllipticityParams, dimension: usize, topology: Topology) -> Self {
        Self {
            seed,
            dimension,
            topology,
            params,
            law: CellLaw::Uniform,
            interpolation: Interpolation::default(),
            offset: [0, 0],
        }
    }

    pub fn with_law(mut self, law: CellLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn build(self) -> Result<CoefficientField> {
        CoefficientField::from_descriptor(self)
    }
}

/// Anything that assigns a symmetric matrix to each point of the plane (or line).
pub trait Coefficients: Sync {
    fn dim(&self) -> usize;
    fn coeff(&self, x: [f64; 2]) -> SymMat;
    /// Bounds `(λ, Λ)` on the eigenvalues of every value.
    fn ellipticity(&self) -> (f64, f64);
}

/// A constant coefficient matrix.
#[derive(Clone, Copy, Debug)]
pub struct ConstantCoefficients(pub SymMat);

impl Coefficients for ConstantCoefficients {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn coeff(&self, _x: [f64; 2]) -> SymMat {
        self.0
    }
    fn ellipticity(&self) -> (f64, f64) {
        self.0.eigenvalues()
    }
}

/// The rescaled field `x ↦ A(x/ε)`.
pub struct Scaled<'a, C: Coefficients + ?Sized> {
    pub inner: &'a C,
    pub eps: f64,
}

impl<C: Coefficients + ?Sized> Coefficients for Scaled<'_, C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn coeff(&self, x: [f64; 2]) -> SymMat {
        self.inner.coeff([x[0] / self.eps, x[1] / self.eps])
    }
    fn ellipticity(&self) -> (f64, f64) {
        self.inner.ellipticity()
    }
}

/// A realization of the stationary random field.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    desc: FieldDescriptor,
}

/// Draws a field with the default cell law and mollifier.
pub fn sample_field(
    seed: u64,
    params: EllipticityParams,
    dimension: usize,
    topology: Topology,
) -> Result<CoefficientField> {
    FieldDescriptor::new(seed, params, dimension, topology).build()
}

/// CDF of the biweight density `15/16 (1 − u²)²` on `[−1, 1]`.
#[inline]
fn biweight_cdf(u: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    let u3 = u * u * u;
    0.5 + 15.0 / 16.0 * (u - 2.0 * u3 / 3.0 + u3 * u * u / 5.0)
}

/// Peak of the biweight density of radius `rho`.
fn biweight_peak(rho: f64) -> f64 {
    15.0 / (16.0 * rho)
}

impl CoefficientField {
    pub fn from_descriptor(desc: FieldDescriptor) -> Result<Self> {
        desc.params.validate()?;
        if desc.dimension != 1 && desc.dimension != 2 {
            return Err(Error::Parameter(format!(
                "dimension must be 1 or 2, got {}",
                desc.dimension
            )));
        }
        if let Topology::Torus { period } = desc.topology {
            if period < 3 {
                return Err(Error::Domain(format!(
                    "torus period must be at least 3, got {period}"
                )));
            }
        }
        let p = &desc.params;
        let in_band = |v: f64| v >= p.lambda && v <= p.big_lambda;
        match desc.law {
            CellLaw::Uniform => {}
            CellLaw::TwoPoint { low, high } => {
                if !(in_band(low) && in_band(high) && low <= high) {
                    return Err(Error::Parameter(format!(
                        "two-point values ({low}, {high}) must be ordered and lie in [lambda, Lambda]"
                    )));
                }
            }
            CellLaw::Laminar { a, b } => {
                if !a.iter().chain(b.iter()).all(|&v| in_band(v)) {
                    return Err(Error::Parameter(format!(
                        "laminar values a = {a:?}, b = {b:?} must lie in [lambda, Lambda]"
                    )));
                }
            }
        }
        let field = Self { desc };
        match field.desc.interpolation {
            Interpolation::PiecewiseConstant => {}
            Interpolation::Mollified { rho } => {
                if !(rho > 0.0 && rho < 0.5) {
                    return Err(Error::Parameter(format!(
                        "mollification radius rho = {rho} must lie in (0, 1/2)"
                    )));
                }
                let need = field.construction_holder_bound().unwrap_or(0.0);
                let k0 = field.desc.params.k0;
                if need > k0 {
                    return Err(Error::Parameter(format!(
                        "K0 = {k0} is below the Hölder constant {need:.6} guaranteed by the construction"
                    )));
                }
            }
        }
        Ok(field)
    }

    pub fn descriptor(&self) -> &FieldDescriptor {
        &self.desc
    }

    pub fn seed(&self) -> u64 {
        self.desc.seed
    }

    pub fn params(&self) -> &EllipticityParams {
        &self.desc.params
    }

    pub fn topology(&self) -> Topology {
        self.desc.topology
    }

    /// Frobenius diameter of the support of the cell law.
    pub fn law_oscillation(&self) -> f64 {
        let p = &self.desc.params;
        let d = self.desc.dimension;
        match self.desc.law {
            CellLaw::Uniform => {
                let spread = p.big_lambda - p.lambda;
                if d == 1 {
                    spread
                } else {
                    let off = ((1.0 - p.cross_margin) * p.big_lambda).min(0.5 * spread);
                    (2.0 * spread * spread + 2.0 * (2.0 * off).powi(2)).sqrt()
                }
            }
            CellLaw::TwoPoint { low, high } => (high - low) * (d as f64).sqrt(),
            CellLaw::Laminar { a, b } => {
                let da = (a[1] - a[0]).abs();
                let db = (b[1] - b[0]).abs();
                if d == 1 {
                    da
                } else {
                    (da * da + db * db).sqrt()
                }
            }
        }
    }

    /// Hölder seminorm bound `max(Lip, osc)` implied by the mollifier, valid for
    /// every `α₀ ∈ (0, 1]`; `None` for piecewise-constant fields.
    pub fn construction_holder_bound(&self) -> Option<f64> {
        match self.desc.interpolation {
            Interpolation::PiecewiseConstant => None,
            Interpolation::Mollified { rho } => {
                let osc = self.law_oscillation();
                let lip = (self.desc.dimension as f64).sqrt() * biweight_peak(rho) * osc;
                Some(lip.max(osc))
            }
        }
    }

    /// Lattice cell index after translation and periodic reduction.
    fn canonical_cell(&self, cell: [i64; 2]) -> [i64; 2] {
        let mut c = [cell[0] + self.desc.offset[0], cell[1] + self.desc.offset[1]];
        if self.desc.dimension == 1 || matches!(self.desc.law, CellLaw::Laminar { .. }) {
            c[1] = 0;
        }
        if let Topology::Torus { period } = self.desc.topology {
            let l = period as i64;
            c[0] = c[0].rem_euclid(l);
            c[1] = c[1].rem_euclid(l);
        }
        c
    }

    /// Random stream that owns the cell with lattice index `cell`.
    pub fn cell_stream(&self, cell: [i64; 2]) -> StreamId {
        StreamId::new(self.desc.seed, domain::FIELD_CELL, self.canonical_cell(cell))
    }

    /// Matrix attached to the unit cell `cell + [0,1)^d`.
    pub fn cell_value(&self, cell: [i64; 2]) -> SymMat {
        let s = self.cell_stream(cell);
        let p = &self.desc.params;
        let d = self.desc.dimension;
        match self.desc.law {
            CellLaw::Uniform => {
                let spread = p.big_lambda - p.lambda;
                let a11 = p.lambda + spread * s.uniform(0);
                if d == 1 {
                    return SymMat::new1(a11);
                }
                let a22 = p.lambda + spread * s.uniform(1);
                let mean = 0.5 * (a11 + a22);
                let half = 0.5 * (a11 - a22).abs();
                let rmax = (mean - p.lambda).min(p.big_lambda - mean);
                let eig_room = (rmax * rmax - half * half).max(0.0).sqrt();
                let bound = ((1.0 - p.cross_margin) * a11.min(a22)).min(eig_room);
                let a12 = (2.0 * s.uniform(2) - 1.0) * bound;
                SymMat::new2(a11, a12, a22)
            }
            CellLaw::TwoPoint { low, high } => {
                SymMat::scalar(d, if s.uniform(0) < 0.5 { low } else { high })
            }
            CellLaw::Laminar { a, b } => {
                let av = if s.uniform(0) < 0.5 { a[0] } else { a[1] };
                let bv = if s.uniform(1) < 0.5 { b[0] } else { b[1] };
                SymMat::diag(d, av, bv)
            }
        }
    }

    /// Cells contributing along one axis, with their weights.
    #[inline]
    fn axis_weights(&self, x: f64) -> ([i64; 3], [f64; 3], usize) {
        let c = x.floor();
        let f = x - c;
        let c = c as i64;
        match self.desc.interpolation {
            Interpolation::PiecewiseConstant => ([c, 0, 0], [1.0, 0.0, 0.0], 1),
            Interpolation::Mollified { rho } => {
                let phi_f = biweight_cdf(f / rho);
                let phi_fm1 = biweight_cdf((f - 1.0) / rho);
                let mut cells = [0i64; 3];
                let mut w = [0f64; 3];
                let mut k = 0;
                for (cell, weight) in [(c - 1, 1.0 - phi_f), (c, phi_f - phi_fm1), (c + 1, phi_fm1)] {
                    if weight > 0.0 {
                        cells[k] = cell;
                        w[k] = weight;
                        k += 1;
                    }
                }
                (cells, w, k)
            }
        }
    }

    /// Field value at `x`; `x` must have `dimension` finite coordinates.
    pub fn evaluate(&self, x: &[f64]) -> Result<SymMat> {
        if x.len() != self.desc.dimension {
            return Err(Error::Domain(format!(
                "point has {} coordinates, field dimension is {}",
                x.len(),
                self.desc.dimension
            )));
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 4.0e15) {
            return Err(Error::Domain(format!("non-finite or out-of-range point {x:?}")));
        }
        let mut p = [0.0; 2];
        p[..x.len()].copy_from_slice(x);
        Ok(self.value_at(p))
    }

    fn value_at(&self, x: [f64; 2]) -> SymMat {
        let d = self.desc.dimension;
        let (c0, w0, n0) = self.axis_weights(x[0]);
        let laminar = matches!(self.desc.law, CellLaw::Laminar { .. });
        if d == 1 || laminar {
            let mut acc = SymMat::zero(d);
            for k in 0..n0 {
                acc = acc.add(&self.cell_value([c0[k], 0]).scale(w0[k]));
            }
            return acc;
        }
        let (c1, w1, n1) = self.axis_weights(x[1]);
        let mut acc = SymMat::zero(d);
        for k in 0..n0 {
            for l in 0..n1 {
                acc = acc.add(&self.cell_value([c0[k], c1[l]]).scale(w0[k] * w1[l]));
            }
        }
        acc
    }

    /// Translate by a lattice vector: the result evaluates at `x` to the value
    /// of `self` at `x + z`.
    pub fn translate(&self, z: &[f64]) -> Result<CoefficientField> {
        if z.len() != self.desc.dimension {
            return Err(Error::Domain(format!(
                "translation has {} coordinates, field dimension is {}",
                z.len(),
                self.desc.dimension
            )));
        }
        let mut shift = [0i64; 2];
        for (k, &v) in z.iter().enumerate() {
            if !v.is_finite() || v.fract() != 0.0 || v.abs() > 1.0e15 {
                return Err(Error::Domain(format!(
                    "translation {z:?} is not an integer lattice vector"
                )));
            }
            shift[k] = v as i64;
        }
        Ok(self.translate_lattice(shift))
    }

    pub fn translate_lattice(&self, z: [i64; 2]) -> CoefficientField {
        let mut desc = self.desc.clone();
        desc.offset[0] += z[0];
        desc.offset[1] += z[1];
        CoefficientField { desc }
    }

    /// Lattice cells whose values influence `A` on the axis-aligned box.
    pub fn cells_touching(&self, region: &Region) -> Vec<[i64; 2]> {
        let rho = match self.desc.interpolation {
            Interpolation::PiecewiseConstant => 0.0,
            Interpolation::Mollified { rho } => rho,
        };
        let d = self.desc.dimension;
        let range = |k: usize| {
            let lo = (region.lo[k] - rho).floor() as i64;
            let hi = (region.hi[k] + rho).floor() as i64;
            lo..=hi
        };
        let mut out = Vec::new();
        for i in range(0) {
            if d == 1 {
                out.push([i, 0]);
            } else {
                for j in range(1) {
                    out.push([i, j]);
                }
            }
        }
        out
    }

    /// Binary descriptor: `"HLAB"`, version, dimension, topology, parameters,
    /// seed, cell law, interpolation and lattice offset, little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.desc;
        let mut b = Vec::with_capacity(128);
        b.extend_from_slice(DESCRIPTOR_MAGIC);
        b.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
        b.push(d.dimension as u8);
        match d.topology {
            Topology::FreeSpace => {
                b.push(0);
                b.extend_from_slice(&0u32.to_le_bytes());
            }
            Topology::Torus { period } => {
                b.push(1);
                b.extend_from_slice(&period.to_le_bytes());
            }
        }
        for v in [
            d.params.lambda,
            d.params.big_lambda,
            d.params.alpha0,
            d.params.k0,
            d.params.cross_margin,
        ] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&d.seed.to_le_bytes());
        let (tag, vals) = match d.law {
            CellLaw::Uniform => (0u8, [0.0; 4]),
            CellLaw::TwoPoint { low, high } => (1, [low, high, 0.0, 0.0]),
            CellLaw::Laminar { a, b } => (2, [a[0], a[1], b[0], b[1]]),
        };
        b.push(tag);
        for v in vals {
            b.extend_from_slice(&v.to_le_bytes());
        }
        match d.interpolation {
            Interpolation::PiecewiseConstant => {
                b.push(0);
                b.extend_from_slice(&0f64.to_le_bytes());
            }
            Interpolation::Mollified { rho } => {
                b.push(1);
                b.extend_from_slice(&rho.to_le_bytes());
            }
        }
        for o in d.offset {
            b.extend_from_slice(&o.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CoefficientField> {
        let mut r = ByteReader { b: bytes, pos: 0 };
        if r.take(4)? != DESCRIPTOR_MAGIC {
            return Err(Error::Format("missing HLAB magic".into()));
        }
        let version = r.u32()?;
        if version != DESCRIPTOR_VERSION {
            return Err(Error::Format(format!(
                "unsupported descriptor version {version}"
            )));
        }
        let dimension = r.u8()? as usize;
        let topo_tag = r.u8()?;
        let period = r.u32()?;
        let topology = match topo_tag {
            0 => Topology::FreeSpace,
            1 => Topology::Torus { period },
            t => return Err(Error::Format(format!("unknown topology tag {t}"))),
        };
        let params = EllipticityParams {
            lambda: r.f64()?,
            big_lambda: r.f64()?,
            alpha0: r.f64()?,
            k0: r.f64()?,
            cross_margin: r.f64()?,
        };
        let seed = r.u64()?;
        let law_tag = r.u8()?;
        let v = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let law = match law_tag {
            0 => CellLaw::Uniform,
            1 => CellLaw::TwoPoint {
                low: v[0],
                high: v[1],
            },
            2 => CellLaw::Laminar {
                a: [v[0], v[1]],
                b: [v[2], v[3]],
            },
            t => return Err(Error::Format(format!("unknown law tag {t}"))),
        };
        let interp_tag = r.u8()?;
        let rho = r.f64()?;
        let interpolation = match interp_tag {
            0 => Interpolation::PiecewiseConstant,
            1 => Interpolation::Mollified { rho },
            t => return Err(Error::Format(format!("unknown interpolation tag {t}"))),
        };
        let offset = [r.u64()? as i64, r.u64()? as i64];
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after descriptor".into()));
        }
        CoefficientField::from_descriptor(FieldDescriptor {
            seed,
            dimension,
            topology,
            params,
            law,
            interpolation,
            offset,
        })
    }

    /// Hex SHA-256 of the binary descriptor.
    pub fn descriptor_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"HLAB";
pub const DESCRIPTOR_VERSION: u32 = 1;

struct ByteReader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::Format("descriptor truncated".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Coefficients for CoefficientField {
    fn dim(&self) -> usize {
        self.desc.dimension
    }
    #[inline]
    fn coeff(&self, x: [f64; 2]) -> SymMat {
        self.value_at(x)
    }
    fn ellipticity(&self) -> (f64, f64) {
        (self.desc.params.lambda, self.desc.params.big_lambda)
    }
}

/// Axis-aligned box `[lo, hi]` (only the first `d` coordinates are used).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Region {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi }
    }

    /// Euclidean distance between two boxes.
    pub fn distance(&self, other: &Region, dim: usize) -> f64 {
        (0..dim)
            .map(|k| {
                let gap = (other.lo[k] - self.hi[k]).max(self.lo[k] - other.hi[k]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Deterministic `n^d` lattice of sample points inside the box.
    pub fn sample_points(&self, dim: usize, n: usize) -> Vec<[f64; 2]> {
        let coord = |k: usize, i: usize| {
            self.lo[k] + (self.hi[k] - self.lo[k]) * (i as f64 + 0.5) / n as f64
        };
        let mut pts = Vec::new();
        for i in 0..n {
            if dim == 1 {
                pts.push([coord(0, i), 0.0]);
            } else {
                for j in 0..n {
                    pts.push([coord(0, i), coord(1, j)]);
                }
            }
        }
        pts
    }
}

/// Monte Carlo diagnostics of stationarity and finite range of dependence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldStatistics {
    pub n_seeds: usize,
    /// Seed average of the mean of `A` over `U`.
    pub empirical_mean_a: SymMat,
    /// Absolute Pearson correlation of the mean traces over `U` and `V`.
    pub cross_set_correlation: f64,
    /// Frobenius distance between the seed averages of the means over `U` and `V`.
    pub translation_mismatch: f64,
    /// Three standard errors of a correlation estimate under independence.
    pub threshold: f64,
    pub box_distance: f64,
    /// Set only when the boxes are at distance at least one.
    pub independence_claimed: bool,
    /// Zero variance: the correlation is undefined and reported as zero.
    pub degenerate: bool,
}

/// Estimates the correlation between summary functionals of `A` on `U` and on
/// `V` over the seeds `base_seed, …, base_seed + n_seeds − 1`.
pub fn decorrelation_probe(
    template: &FieldDescriptor,
    n_seeds: usize,
    u: Region,
    v: Region,
) -> Result<FieldStatistics> {
    if n_seeds < 100 {
        return Err(Error::Parameter(format!(
            "decorrelation probe needs at least 100 seeds, got {n_seeds}"
        )));
    }
    let dim = template.dimension;
    let pu = u.sample_points(dim, 4);
    let pv = v.sample_points(dim, 4);
    let mut fu = Vec::with_capacity(n_seeds);
    let mut fv = Vec::with_capacity(n_seeds);
    let mut mean_u = SymMat::zero(dim);
    let mut mean_v = SymMat::zero(dim);
    for s in 0..n_seeds as u64 {
        let mut desc = template.clone();
        desc.seed = template.seed.wrapping_add(s);
        let field = desc.build()?;
        let avg = |pts: &[[f64; 2]]| {
            let mut acc = SymMat::zero(dim);
            for p in pts {
                acc = acc.add(&field.coeff(*p));
            }
            acc.scale(1.0 / pts.len() as f64)
        };
        let au = avg(&pu);
        let av = avg(&pv);
        fu.push(au.trace());
        fv.push(av.trace());
        mean_u = mean_u.add(&au);
        mean_v = mean_v.add(&av);
    }
    let n = n_seeds as f64;
    mean_u = mean_u.scale(1.0 / n);
    mean_v = mean_v.scale(1.0 / n);
    let mu = fu.iter().sum::<f64>() / n;
    let mv = fv.iter().sum::<f64>() / n;
    let (mut cuv, mut cuu, mut cvv) = (0.0, 0.0, 0.0);
    for (a, b) in fu.iter().zip(&fv) {
        cuv += (a - mu) * (b - mv);
        cuu += (a - mu) * (a - mu);
        cvv += (b - mv) * (b - mv);
    }
    let scale = (cuu * cvv).sqrt();
    let degenerate = !(scale > 1e-300 * n);
    let corr = if degenerate { 0.0 } else { (cuv / scale).abs() };
    let box_distance = u.distance(&v, dim);
    Ok(FieldStatistics {
        n_seeds,
        empirical_mean_a: mean_u,
        cross_set_correlation: corr,
        translation_mismatch: mean_u.sub(&mean_v).frobenius(),
        threshold: 3.0 / n.sqrt(),
        box_distance,
        independence_claimed: box_distance >= 1.0,
        degenerate,
    })
}
