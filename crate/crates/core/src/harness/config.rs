//! Experiment configuration (JSON) and field specifications.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjoint::RadialField;
use crate::clt::GaussianData;
use crate::error::{Error, Result};
use crate::field::{CoefficientField, Coefficients, ConstantCoefficients, FieldDescriptor, Topology};
use crate::parabolic::Scheme;
use crate::sym::SymMat;

use super::io::sha256_hex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Green,
    InvariantMeasure,
    Homogenize,
    Clt,
    CdError,
    Sde,
    Report,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Green => "green",
            ExperimentKind::InvariantMeasure => "invariant-measure",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::Clt => "clt",
            ExperimentKind::CdError => "cd-error",
            ExperimentKind::Sde => "sde",
            ExperimentKind::Report => "report",
        }
    }
}

/// Where the coefficients come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Random { descriptor: FieldDescriptor },
    Constant { matrix: SymMat },
    Radial {
        lambda: f64,
        #[serde(rename = "Lambda_")]
        big_lambda: f64,
    },
    /// A binary (`HLAB`) or JSON descriptor on disk.
    File { path: PathBuf },
}

/// Coefficients resolved from a [`FieldSpec`].
#[derive(Clone, Debug)]
pub enum LoadedField {
    Random(CoefficientField),
    Constant(ConstantCoefficients),
    Radial(RadialField),
}

impl Coefficients for LoadedField {
    fn dim(&self) -> usize {
        match self {
            LoadedField::Random(f) => f.dim(),
            LoadedField::Constant(c) => c.dim(),
            LoadedField::Radial(r) => r.dim(),
        }
    }
    fn coeff(&self, x: [f64; 2]) -> SymMat {
        match self {
            LoadedField::Random(f) => f.coeff(x),
            LoadedField::Constant(c) => c.coeff(x),
            LoadedField::Radial(r) => r.coeff(x),
        }
    }
    fn ellipticity(&self) -> (f64, f64) {
        match self {
            LoadedField::Random(f) => f.ellipticity(),
            LoadedField::Constant(c) => c.ellipticity(),
            LoadedField::Radial(r) => r.ellipticity(),
        }
    }
}

impl LoadedField {
    pub fn random(&self) -> Option<&CoefficientField> {
        match self {
            LoadedField::Random(f) => Some(f),
            _ => None,
        }
    }

    /// Torus period of a periodic random field.
    pub fn period(&self) -> Option<u32> {
        match self.random()?.topology() {
            Topology::Torus { period } => Some(period),
            Topology::FreeSpace => None,
        }
    }
}

/// Reads a field descriptor from a binary or JSON file.
pub fn load_descriptor(path: &Path) -> Result<FieldDescriptor> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(crate::field::DESCRIPTOR_MAGIC) {
        Ok(CoefficientField::from_bytes(&bytes)?.descriptor().clone())
    } else {
        Ok(serde_json::from_slice(&bytes)?)
    }
}

impl FieldSpec {
    pub fn load(&self) -> Result<LoadedField> {
        Ok(match self {
            FieldSpec::Random { descriptor } => LoadedField::Random(descriptor.clone().build()?),
            FieldSpec::Constant { matrix } => {
                if !matrix.is_spd() {
                    return Err(Error::Parameter(format!("constant matrix {matrix:?} is not positive definite")));
                }
                LoadedField::Constant(ConstantCoefficients(*matrix))
            }
            FieldSpec::Radial { lambda, big_lambda } => LoadedField::Radial(RadialField::new(*lambda, *big_lambda, 2)?),
            FieldSpec::File { path } => LoadedField::Random(load_descriptor(path)?.build()?),
        })
    }

    /// Same specification with the random seed replaced.
    pub fn with_seed(&self, seed: u64) -> Result<FieldSpec> {
        let mut d = match self {
            FieldSpec::Random { descriptor } => descriptor.clone(),
            FieldSpec::File { path } => load_descriptor(path)?,
            _ => return Ok(self.clone()),
        };
        d.seed = seed;
        Ok(FieldSpec::Random { descriptor: d })
    }

    pub fn hash(&self) -> Result<String> {
        match self.load()? {
            LoadedField::Random(f) => Ok(f.descriptor_hash()),
            _ => Ok(sha256_hex(&serde_json::to_vec(self)?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMethod {
    Green,
    Adjoint,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbarRoute {
    Delta,
    Measure,
    Closed,
}

/// Boundary and initial data of the Cauchy–Dirichlet experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdProfile {
    /// `x₁² + x₁x₂ + 2x₂²` (`x₁²` in one dimension).
    Quadratic,
    /// `sin(πx₁) sin(πx₂)`-free data: `cos(2x₁) + x₂²`.
    Trig,
}

impl CdProfile {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            CdProfile::Quadratic => x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1],
            CdProfile::Trig => (2.0 * x[0]).cos() + x[1] * x[1],
        }
    }
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(k)).collect()
}

/// Numerical knobs. Every field has a default; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub h: f64,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub sources: Vec<[f64; 2]>,
    pub rtol: f64,
    pub t0: f64,
    pub t_max: f64,
    pub truncation_tol: f64,
    pub measure_method: MeasureMethod,
    pub abar_routes: Vec<AbarRoute>,
    pub deltas: Vec<f64>,
    pub sides: Vec<f64>,
    pub abar: Option<SymMat>,
    pub r: f64,
    pub m_amp: f64,
    pub data: GaussianData,
    pub alpha: f64,
    pub flatness_eps: Vec<f64>,
    pub eps: Vec<f64>,
    pub cd_h: Vec<f64>,
    pub t_final: f64,
    pub cd_profile: CdProfile,
    pub n_paths: usize,
    pub dt: f64,
    pub t_ladder: Vec<f64>,
    pub etas: Vec<f64>,
    pub xi: f64,
    pub annulus: [f64; 2],
    pub hs: Vec<f64>,
    pub inputs: Vec<PathBuf>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            h: 0.5,
            scheme: Scheme::Explicit,
            times: dyadic(0, 6),
            sources: Vec::new(),
            rtol: 1e-4,
            t0: 4.0,
            t_max: 65536.0,
            truncation_tol: 1e-10,
            measure_method: MeasureMethod::Adjoint,
            abar_routes: vec![AbarRoute::Delta, AbarRoute::Measure],
            deltas: dyadic(-5, -1).into_iter().rev().collect(),
            sides: Vec::new(),
            abar: None,
            r: 1.0,
            m_amp: 1.0,
            data: GaussianData::SquaredExponential,
            alpha: 0.5,
            flatness_eps: Vec::new(),
            eps: dyadic(-4, -1).into_iter().rev().collect(),
            cd_h: Vec::new(),
            t_final: 0.25,
            cd_profile: CdProfile::Quadratic,
            n_paths: 1000,
            dt: 0.01,
            t_ladder: vec![100.0, 400.0, 1600.0],
            etas: vec![0.05, 0.1, 0.2, 0.4],
            xi: 0.5,
            annulus: [0.2, 0.8],
            hs: vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            inputs: Vec::new(),
        }
    }
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

impl Numerics {
    /// Offending keys with reasons.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, key: &str, why: &str| {
            if !ok {
                bad.push(format!("numerics.{key}: {why}"));
            }
        };
        check(self.h > 0.0 && self.h <= 1.0, "h", "must lie in (0, 1]");
        if let Scheme::Implicit { dt } = self.scheme {
            check(dt > 0.0 && dt.is_finite(), "scheme.dt", "must be positive");
        }
        check(
            !self.times.is_empty() && self.times[0] > 0.0 && increasing(&self.times),
            "times",
            "must be positive and strictly increasing",
        );
        check(self.rtol > 1e-8 && self.rtol < 1e-2, "rtol", "must lie in (1e-8, 1e-2)");
        check(self.t0 > 0.0, "t0", "must be positive");
        check(self.t_max >= 2.0, "t_max", "must be at least 2");
        check(self.truncation_tol > 0.0 && self.truncation_tol < 1.0, "truncation_tol", "must lie in (0, 1)");
        check(
            self.deltas.iter().all(|&d| d > 0.0 && d <= 1.0) && self.deltas.windows(2).all(|w| w[1] < w[0]),
            "deltas",
            "must be decreasing values in (0, 1]",
        );
        check(self.sides.iter().all(|&s| s > 0.0) && increasing(&self.sides), "sides", "must be positive and increasing");
        if let Some(a) = &self.abar {
            check(a.is_spd(), "abar", "must be symmetric positive definite");
        }
        check(self.r >= 1.0, "r", "must be at least 1");
        check(self.m_amp > 0.0, "m_amp", "must be positive");
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha", "must lie in (0, 1]");
        check(
            self.flatness_eps.iter().all(|&e| e > 0.0 && e <= 1.0),
            "flatness_eps",
            "must lie in (0, 1]",
        );
        check(
            self.eps.iter().all(|&e| e > 0.0 && e <= 1.0) && self.eps.windows(2).all(|w| w[1] < w[0]),
            "eps",
            "must be decreasing values in (0, 1]",
        );
        check(self.cd_h.is_empty() || self.cd_h.len() == self.eps.len(), "cd_h", "needs one entry per eps");
        check(self.t_final > 0.0, "t_final", "must be positive");
        check(self.n_paths >= 1, "n_paths", "must be at least 1");
        check(self.dt > 0.0 && self.dt <= 0.1, "dt", "must lie in (0, 0.1]");
        check(
            !self.t_ladder.is_empty() && self.t_ladder[0] > 0.0 && increasing(&self.t_ladder),
            "t_ladder",
            "must be positive and strictly increasing",
        );
        check(increasing(&self.etas) && self.etas.iter().all(|&e| e > 0.0), "etas", "must be positive and increasing");
        check(self.xi > 0.0 && self.xi < 1.0, "xi", "must lie in (0, 1)");
        check(
            self.annulus[0] > 0.0 && self.annulus[1] > self.annulus[0],
            "annulus",
            "needs 0 < r_in < r_out",
        );
        check(self.hs.iter().all(|&h| h > 0.0), "hs", "must be positive");
        bad
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub numerics: Numerics,
    /// Seeds replacing the descriptor seed; empty runs the descriptor once.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, field: Option<FieldSpec>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            field,
            numerics: Numerics::default(),
            seeds: Vec::new(),
            output_dir: output_dir.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(vec![e.to_string()]))
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = self.numerics.problems();
        match (&self.field, self.kind) {
            (None, ExperimentKind::Report) => {}
            (None, _) => bad.push("field: required for this experiment kind".into()),
            (Some(spec), _) => {
                match spec.load() {
                    Err(e @ (Error::Io(_) | Error::Json(_) | Error::Format(_))) => return Err(e),
                    Err(e) => bad.push(format!("field: {e}")),
                    Ok(_) => {}
                }
                if matches!(spec, FieldSpec::Constant { .. } | FieldSpec::Radial { .. }) && !self.seeds.is_empty() {
                    bad.push("seeds: only random fields take seeds".into());
                }
            }
        }
        if self.kind == ExperimentKind::Report && self.numerics.inputs.is_empty() {
            bad.push("numerics.inputs: a report needs at least one manifest (may be an empty list only via the CLI)".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            bad.push("seeds: must be distinct".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// SHA-256 of the canonical (compact) JSON serialization.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("configuration serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::EllipticityParams;

    fn cfg() -> ExperimentConfig {
        let d = FieldDescriptor::new(1, EllipticityParams::new(1.0, 2.0), 2, Topology::Torus { period: 9 });
        ExperimentConfig::new(ExperimentKind::Green, Some(FieldSpec::Random { descriptor: d }), "out")
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = cfg();
        c.numerics.h = 1.0 / 3.0;
        c.seeds = vec![4, 5];
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert_eq!(c.hash(), ExperimentConfig::from_json(&text).unwrap().hash());
    }

    #[test]
    fn validation_lists_keys() {
        let mut c = cfg();
        c.numerics.h = -1.0;
        c.numerics.xi = 2.0;
        c.seeds = vec![3, 3];
        match c.validate() {
            Err(Error::Validation(v)) => {
                assert!(v.iter().any(|s| s.starts_with("numerics.h")));
                assert!(v.iter().any(|s| s.starts_with("numerics.xi")));
                assert!(v.iter().any(|s| s.starts_with("seeds")));
            }
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_json(r#"{"kind":"green","output_dir":"x","bogus":1}"#).is_err());
    }
}
