//! Dispatch of an [`ExperimentConfig`] to the numerical modules, with
//! persistence of every output and a hash-verifiable manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adjoint::{null_space_check, radial_example_check, stationary_measure_op, InvariantDensity, NullVectorMethod};
use crate::clt::{c_limit, measure_pairing, run_local_clt, weak_norm_decay, CltSetup};
use crate::diffusion::{ergodicity_from_ensemble, invariance_from_ensemble, simulate_ensemble};
use crate::error::{Error, Result};
use crate::field::{Coefficients, Topology};
use crate::green::{free_space_box, green_evolve_op, invariant_density_at, nash_aronson_fit, EnvelopeWidths};
use crate::grid::Grid;
use crate::homogenize::{
    cd_error_experiment, closed_form_abar, corrector_box, estimate_abar, measure_average, AbarMethod, CdSetup,
    HomogenizedMatrix, LadderRung, DEFAULT_SPREAD_BOUND,
};
use crate::operator::assemble_generator;
use crate::rate::FitWindow;
use crate::sym::SymMat;

use super::config::{AbarRoute, ExperimentConfig, ExperimentKind, LoadedField, MeasureMethod, Numerics};
use super::io::{sha256_file, write_csv, write_grid_function, write_json};
use super::report::emit_report;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub tag: String,
    pub seed: Option<u64>,
    pub field_hash: Option<String>,
    pub summary: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub code_version: String,
    pub wall_time_seconds: f64,
    /// Report sections this run contributes to.
    pub tags: Vec<String>,
    pub results: Vec<ResultSet>,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl Manifest {
    /// Recomputes every file hash; returns the entries that are missing or altered.
    pub fn verify(&self, root: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| sha256_file(&root.join(&f.path)).map(|h| h != f.sha256).unwrap_or(true))
            .map(|f| f.path.clone())
            .collect()
    }
}

/// Collects written files relative to the output root.
struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = if sub.is_empty() { self.root.clone() } else { self.root.join(sub) };
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn csv(&mut self, dir: &Path, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let p = dir.join(name);
        write_csv(&p, header, rows)?;
        self.files.push(p);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        let p = dir.join(name);
        write_json(&p, value)?;
        self.files.push(p);
        Ok(())
    }

    fn grid_fn(&mut self, dir: &Path, stem: &str, grid: &Grid, time: Option<f64>, hash: Option<&str>, values: &[f64]) -> Result<()> {
        let written = write_grid_function(&dir.join(stem), grid, time, hash, stem, values)?;
        self.files.extend(written);
        Ok(())
    }

    fn entries(&self) -> Result<Vec<FileEntry>> {
        self.files
            .iter()
            .map(|p| {
                Ok(FileEntry {
                    path: p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(p)?,
                })
            })
            .collect()
    }
}

/// Nodes per unit length for a mesh size `h` with integer `1/h`.
pub fn nodes_per_unit(h: f64) -> Result<usize> {
    let n = (1.0 / h).round();
    if n < 1.0 || ((1.0 / h) - n).abs() > 1e-9 * n {
        return Err(Error::Validation(vec![format!("numerics.h: 1/h = {} must be an integer", 1.0 / h)]));
    }
    Ok(n as usize)
}

fn torus_grid(field: &LoadedField, h: f64) -> Result<Option<Grid>> {
    match field.period() {
        Some(p) => Ok(Some(Grid::torus(field.dim(), p as usize, nodes_per_unit(h)?)?)),
        None => Ok(None),
    }
}

fn need_torus(field: &LoadedField, h: f64, what: &str) -> Result<Grid> {
    torus_grid(field, h)?.ok_or_else(|| Error::Domain(format!("{what} needs a periodic random field")))
}

fn sym_row(a: &SymMat) -> Vec<f64> {
    vec![a.a11, a.a12, a.a22]
}

/// `ā` from the override, the closed form, or the torus measure average.
fn resolve_abar(field: &LoadedField, n: &Numerics) -> Result<(SymMat, &'static str)> {
    if let Some(a) = n.abar {
        return Ok((a, "override"));
    }
    if let LoadedField::Constant(c) = field {
        return Ok((c.0, "constant"));
    }
    let grid = need_torus(field, n.h, "estimating the homogenized matrix")?;
    if let Ok(a) = closed_form_abar(field, &grid) {
        return Ok((a, "closed-form"));
    }
    let op = assemble_generator(field, &grid)?;
    let m = stationary_measure_op(&op, NullVectorMethod::Auto)?;
    Ok((measure_average(field, &m, f64::INFINITY)?, "measure-average"))
}

fn default_sources(field: &LoadedField) -> Vec<[f64; 2]> {
    match field.period() {
        Some(p) => {
            let q = p as f64 / 2.0;
            if field.dim() == 1 {
                vec![[0.0, 0.0], [q, 0.0]]
            } else {
                vec![[0.0, 0.0], [q, 0.0], [0.0, q], [q, q]]
            }
        }
        None => vec![[0.0, 0.0]],
    }
}

fn boundary_peak_ratio(grid: &Grid, v: &[f64]) -> f64 {
    if grid.periodic {
        return 0.0;
    }
    let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let edge = (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .fold(0.0f64, |a, i| a.max(v[i].abs()));
    if peak > 0.0 {
        edge / peak
    } else {
        0.0
    }
}

fn run_green(field: &LoadedField, n: &Numerics, hash: &str, dir: &Path, out: &mut Outputs) -> Result<Value> {
    let sources = if n.sources.is_empty() { default_sources(field) } else { n.sources.clone() };
    let torus = torus_grid(field, n.h)?;
    let torus_op = torus.as_ref().map(|g| assemble_generator(field, g)).transpose()?;
    let torus_m = torus_op.as_ref().map(|op| stationary_measure_op(op, NullVectorMethod::Auto)).transpose()?;
    let (lam, big) = field.ellipticity();
    let t_last = *n.times.last().unwrap();
    let mut per_source = Vec::new();
    for (k, &y) in sources.iter().enumerate() {
        let boxed;
        let op = match &torus_op {
            Some(op) => op,
            None => {
                let g = free_space_box(field.dim(), big, y, t_last, n.truncation_tol, n.h)?;
                boxed = assemble_generator(field, &g)?;
                &boxed
            }
        };
        let snaps = green_evolve_op(op, y, &n.times, n.scheme)?;
        let rows: Vec<Vec<f64>> = snaps
            .iter()
            .map(|s| vec![s.time, s.mass, boundary_peak_ratio(&s.grid, &s.values)])
            .collect();
        out.csv(dir, &format!("green_mass_{k}.csv"), &["t", "mass", "tail"], &rows)?;
        let last = snaps.last().unwrap();
        out.grid_fn(dir, &format!("green_kernel_{k}"), &last.grid, Some(last.time), Some(hash), &last.values)?;
        let m_y = match &torus_m {
            Some(m) => m.values[last.source_node],
            None => last.mass,
        };
        let fit = nash_aronson_fit(&snaps, m_y, EnvelopeWidths::for_ellipticity(lam, big), n.t0).ok();
        per_source.push(json!({
            "y": y,
            "node": last.source,
            "m_y": m_y,
            "masses": snaps.iter().map(|s| s.mass).collect::<Vec<_>>(),
            "envelope": fit.as_ref().map(|f| json!({
                "c": f.c, "C": f.big_c, "ratio": f.ratio(), "violations": f.violations, "window": [f.window.0, f.window.1],
            })),
        }));
    }
    Ok(json!({ "times": n.times, "sources": per_source }))
}

fn run_radial(field: &LoadedField, n: &Numerics, dir: &Path, out: &mut Outputs) -> Result<Value> {
    let LoadedField::Radial(r) = field else { unreachable!() };
    let rep = radial_example_check(r.lambda, r.big_lambda, n.annulus[0], n.annulus[1], &n.hs)?;
    let rows: Vec<Vec<f64>> = rep.rows.iter().map(|r| vec![r.h, r.relative_error]).collect();
    out.csv(dir, "radial_error.csv", &["h", "relative_error"], &rows)?;
    out.json(dir, "radial.json", &rep)?;
    Ok(json!({
        "gamma": rep.gamma,
        "errors": rep.rows.iter().map(|r| r.relative_error).collect::<Vec<_>>(),
        "monotone": rep.monotone(),
    }))
}

fn run_invariant_measure(field: &LoadedField, n: &Numerics, hash: &str, dir: &Path, out: &mut Outputs) -> Result<Value> {
    if matches!(field, LoadedField::Radial(_)) {
        return run_radial(field, n, dir, out);
    }
    let grid = need_torus(field, n.h, "the invariant measure")?;
    let op = assemble_generator(field, &grid)?;
    let mut summary = json!({});
    let mut adjoint: Option<InvariantDensity> = None;
    if matches!(n.measure_method, MeasureMethod::Adjoint | MeasureMethod::Both) {
        let m = stationary_measure_op(&op, NullVectorMethod::Auto)?;
        out.grid_fn(dir, "measure", &grid, None, Some(hash), &m.values)?;
        summary["adjoint"] = json!({
            "mean": m.mean(), "min": m.min(), "max": m.max(),
            "relative_residual": m.relative_residual, "method": m.method, "iterations": m.iterations,
        });
        adjoint = Some(m);
    }
    if matches!(n.measure_method, MeasureMethod::Green | MeasureMethod::Both) {
        let sources = if n.sources.is_empty() { default_sources(field) } else { n.sources.clone() };
        let mut rows = Vec::new();
        let mut values = Vec::new();
        let mut max_rel = 0.0f64;
        for &y in &sources {
            let v = invariant_density_at(&op, y, n.rtol, n.t0, n.t_max, n.scheme)?;
            let node = grid.nearest_node(y)?;
            let p = grid.point(node);
            let reference = adjoint.as_ref().map(|m| m.values[node]);
            let rel = reference.map(|r| (v.m_y - r).abs() / r).unwrap_or(f64::NAN);
            if rel.is_finite() {
                max_rel = max_rel.max(rel);
            }
            rows.push(vec![p[0], p[1], v.m_y, reference.unwrap_or(f64::NAN), rel, v.t_star]);
            values.push(v);
        }
        out.csv(dir, "measure_green.csv", &["x1", "x2", "m_green", "m_adjoint", "relative_difference", "t_star"], &rows)?;
        out.json(dir, "measure_green.json", &values)?;
        summary["green"] = json!({
            "values": values.iter().map(|v| v.m_y).collect::<Vec<_>>(),
            "t_star": values.iter().map(|v| v.t_star).collect::<Vec<_>>(),
        });
        if adjoint.is_some() {
            summary["max_relative_difference"] = json!(max_rel);
            let ns = null_space_check(&op)?;
            summary["null_space"] = serde_json::to_value(&ns)?;
        }
    }
    if let (Some(m), false) = (&adjoint, n.flatness_eps.is_empty()) {
        let abar = match n.abar {
            Some(a) => a,
            None => measure_average(field, m, f64::INFINITY)?,
        };
        let rep = weak_norm_decay(field, m, &abar, &n.flatness_eps, n.alpha)?;
        let rows: Vec<Vec<f64>> = rep.rows.iter().map(|r| vec![r.eps, r.m, r.ma_max()]).collect();
        out.csv(dir, "weak_norm.csv", &["eps", "m_minus_1", "ma_minus_abar"], &rows)?;
        out.json(dir, "weak_norm.json", &rep)?;
        summary["weak_norm"] = json!({
            "abar": abar,
            "m_exponent": rep.m_rate.exponent,
            "ma_exponent": rep.ma_rate.exponent,
            "m_r_squared": rep.m_rate.r_squared,
            "ma_r_squared": rep.ma_rate.r_squared,
        });
    }
    Ok(summary)
}

/// Delta-corrector ladder on per-rung boxes for fields without a period.
fn delta_ladder_on_boxes(field: &LoadedField, n: &Numerics) -> Result<HomogenizedMatrix> {
    let (_, big) = field.ellipticity();
    let mut ladder = Vec::new();
    for &d in &n.deltas {
        let g = corrector_box(field.dim(), big, d, n.h, n.truncation_tol)?;
        let one = estimate_abar(field, &g, &AbarMethod::DeltaCorrector { deltas: vec![d] })?;
        ladder.push(LadderRung { scale: d, abar: one.abar });
    }
    let last = ladder.last().ok_or_else(|| Error::Parameter("empty delta ladder".into()))?.abar;
    let spread = if ladder.len() > 1 { last.sub(&ladder[ladder.len() - 2].abar).frobenius() } else { 0.0 };
    Ok(HomogenizedMatrix {
        abar: last,
        method: AbarMethod::DeltaCorrector { deltas: n.deltas.clone() },
        ladder,
        spread,
        low_confidence: spread > DEFAULT_SPREAD_BOUND,
    })
}

fn default_sides(period: u32) -> Vec<f64> {
    let mut s = Vec::new();
    let mut k = 1u32;
    while k < period {
        s.push(k as f64);
        k *= 3;
    }
    s.push(period as f64);
    s
}

fn run_homogenize(field: &LoadedField, n: &Numerics, dir: &Path, out: &mut Outputs) -> Result<Value> {
    let torus = torus_grid(field, n.h)?;
    let mut summary = json!({});
    for route in &n.abar_routes {
        let (name, est) = match route {
            AbarRoute::Delta => (
                "delta",
                match &torus {
                    Some(g) => estimate_abar(field, g, &AbarMethod::DeltaCorrector { deltas: n.deltas.clone() })?,
                    None => delta_ladder_on_boxes(field, n)?,
                },
            ),
            AbarRoute::Measure => {
                let g = need_torus(field, n.h, "the measure-average route")?;
                let sides = if n.sides.is_empty() { default_sides(field.period().unwrap()) } else { n.sides.clone() };
                ("measure", estimate_abar(field, &g, &AbarMethod::MeasureAverage { sides })?)
            }
            AbarRoute::Closed => {
                let g = match &torus {
                    Some(g) => g.clone(),
                    None if matches!(field, LoadedField::Constant(_)) => Grid::torus(field.dim(), 3, 1)?,
                    None => return Err(Error::Domain("the closed form needs a periodic or constant field".into())),
                };
                ("closed", estimate_abar(field, &g, &AbarMethod::ClosedForm)?)
            }
        };
        let rows: Vec<Vec<f64>> = est
            .ladder
            .iter()
            .map(|r| {
                let mut row = vec![r.scale];
                row.extend(sym_row(&r.abar));
                row
            })
            .collect();
        out.csv(dir, &format!("abar_{name}.csv"), &["scale", "a11", "a12", "a22"], &rows)?;
        out.json(dir, &format!("abar_{name}.json"), &est)?;
        summary[name] = json!({ "abar": est.abar, "spread": est.spread, "low_confidence": est.low_confidence });
    }
    Ok(summary)
}

fn run_clt(field: &LoadedField, n: &Numerics, hash: &str, dir: &Path, out: &mut Outputs) -> Result<Value> {
    let (abar, abar_source) = resolve_abar(field, n)?;
    let setup = CltSetup {
        r: n.r,
        m_amp: n.m_amp,
        data: n.data,
        center: [0.0, 0.0],
        h: n.h,
        times: n.times.clone(),
        abar,
        truncation_tol: n.truncation_tol,
        half_width: None,
        scheme: n.scheme,
    };
    let run = run_local_clt(field, &setup)?;
    let rows: Vec<Vec<f64>> = n
        .times
        .iter()
        .zip(&run.c_t)
        .zip(&run.errors)
        .map(|((&t, &c), &e)| vec![t, c, e])
        .collect();
    out.csv(dir, "clt.csv", &["t", "c_t", "error"], &rows)?;
    out.json(dir, "clt.json", &run)?;
    out.grid_fn(dir, "clt_initial", &run.grid, Some(0.0), Some(hash), &run.v0)?;
    let limit = c_limit(&run, n.rtol);
    let pairing = match torus_grid(field, n.h)? {
        Some(g) => {
            let m = stationary_measure_op(&assemble_generator(field, &g)?, NullVectorMethod::Auto)?;
            Some(measure_pairing(&run.grid, &run.v0, &m)?)
        }
        None => None,
    };
    Ok(json!({
        "abar": abar,
        "abar_source": abar_source,
        "c_t": run.c_t,
        "c_limit": limit.as_ref().ok(),
        "c_settled": limit.is_ok(),
        "measure_pairing": pairing,
        "errors": run.errors,
        "gamma_fit": run.gamma_fit,
        "r_squared": run.rate.as_ref().map(|r| r.r_squared),
    }))
}

fn run_cd_error(field: &LoadedField, n: &Numerics, dir: &Path, out: &mut Outputs) -> Result<Value> {
    let (abar, abar_source) = resolve_abar(field, n)?;
    let hs = if n.cd_h.is_empty() { n.eps.iter().map(|e| e / 8.0).collect() } else { n.cd_h.clone() };
    let setup = CdSetup {
        eps: n.eps.clone(),
        h: hs,
        t_final: n.t_final,
        snapshots: vec![n.t_final / 4.0, n.t_final / 2.0],
        scheme: n.scheme,
        window: FitWindow::All,
    };
    let profile = n.cd_profile;
    let g = move |_t: f64, x: [f64; 2]| profile.eval(x);
    let rep = cd_error_experiment(field, &abar, &g, &setup)?;
    let rows: Vec<Vec<f64>> = rep.rows.iter().map(|r| vec![r.eps, r.h, r.error]).collect();
    out.csv(dir, "cd_error.csv", &["eps", "h", "error"], &rows)?;
    out.json(dir, "cd_error.json", &rep)?;
    Ok(json!({
        "abar": abar,
        "abar_source": abar_source,
        "beta": rep.beta,
        "r_squared": rep.table.r_squared,
        "errors": rep.rows.iter().map(|r| r.error).collect::<Vec<_>>(),
    }))
}

fn run_sde(field: &LoadedField, n: &Numerics, seed: u64, dir: &Path, out: &mut Outputs) -> Result<Value> {
    let (abar, abar_source) = resolve_abar(field, n)?;
    let ens = simulate_ensemble(field, n.n_paths, n.dt, &n.t_ladder, seed)?;
    let erg = ergodicity_from_ensemble(field, &ens, &n.etas, &abar, n.xi)?;
    let inv = invariance_from_ensemble(&ens, &abar)?;
    let mut tail_rows = Vec::new();
    for (k, &t) in erg.times.iter().enumerate() {
        for (e, &eta) in erg.etas.iter().enumerate() {
            tail_rows.push(vec![t, eta, erg.tails[k][e]]);
        }
    }
    out.csv(dir, "sde_tails.csv", &["T", "eta", "probability"], &tail_rows)?;
    let med_rows: Vec<Vec<f64>> = erg
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            vec![t, erg.medians[k], erg.endpoint_mean[k][0], erg.endpoint_se[k][0], erg.endpoint_mean[k][1], erg.endpoint_se[k][1]]
        })
        .collect();
    out.csv(dir, "sde_medians.csv", &["T", "median", "mean_x1", "se_x1", "mean_x2", "se_x2"], &med_rows)?;
    let k = ens.checkpoints.len() - 1;
    let end_rows: Vec<Vec<f64>> = ens.paths.iter().map(|p| vec![p[k].x[0], p[k].x[1]]).collect();
    out.csv(dir, "sde_endpoints.csv", &["x1", "x2"], &end_rows)?;
    out.json(dir, "sde.json", &json!({ "ergodicity": erg, "invariance": inv }))?;
    Ok(json!({
        "abar": abar,
        "abar_source": abar_source,
        "path_seed": seed,
        "medians": erg.medians,
        "medians_decreasing": erg.medians_decreasing(),
        "tails_nonincreasing_in_eta": erg.tails_nonincreasing_in_eta(),
        "endpoint_z": erg.endpoint_z(),
        "low_n_paths": erg.low_n_paths,
        "concentration_slope": erg.concentration_slope,
        "invariance_max_z": inv.max_z,
        "ks_statistic": inv.ks_statistic,
    }))
}

fn tags_for(kind: ExperimentKind, config: &ExperimentConfig) -> Vec<String> {
    let radial = matches!(config.field, Some(super::config::FieldSpec::Radial { .. }));
    let t: &[&str] = match kind {
        ExperimentKind::Green => &["t.GF", "c.NA"],
        ExperimentKind::InvariantMeasure if radial => &["appendix-radial"],
        ExperimentKind::InvariantMeasure if !config.numerics.flatness_eps.is_empty() => &["t.GF", "t.mto1"],
        ExperimentKind::InvariantMeasure => &["t.GF"],
        ExperimentKind::Homogenize | ExperimentKind::CdError => &["t.algrate"],
        ExperimentKind::Clt => &["t.realthm"],
        ExperimentKind::Sde => &["t.environmental"],
        ExperimentKind::Report => &[],
    };
    t.iter().map(|s| s.to_string()).collect()
}

fn run_one(
    config: &ExperimentConfig,
    field: &LoadedField,
    hash: &str,
    seed: u64,
    dir: &Path,
    out: &mut Outputs,
) -> Result<Value> {
    let n = &config.numerics;
    match config.kind {
        ExperimentKind::Green => run_green(field, n, hash, dir, out),
        ExperimentKind::InvariantMeasure => run_invariant_measure(field, n, hash, dir, out),
        ExperimentKind::Homogenize => run_homogenize(field, n, dir, out),
        ExperimentKind::Clt => run_clt(field, n, hash, dir, out),
        ExperimentKind::CdError => run_cd_error(field, n, dir, out),
        ExperimentKind::Sde => run_sde(field, n, seed, dir, out),
        ExperimentKind::Report => unreachable!(),
    }
}

/// Validates `config`, runs it, and writes `manifest.json` in the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    config.validate()?;
    let start = Instant::now();
    let mut out = Outputs {
        root: config.output_dir.clone(),
        files: Vec::new(),
    };
    let root = out.dir("")?;
    let mut results = Vec::new();
    if config.kind == ExperimentKind::Report {
        let rep = emit_report(&config.numerics.inputs, &root)?;
        out.files.extend(rep.files.iter().cloned());
        results.push(ResultSet {
            tag: "report".into(),
            seed: None,
            field_hash: None,
            summary: json!({ "sections": rep.section_count(), "missing": rep.missing }),
        });
    } else {
        let spec = config.field.as_ref().expect("validated");
        let sets: Vec<(String, Option<u64>)> = if config.seeds.is_empty() {
            vec![(String::new(), None)]
        } else {
            config.seeds.iter().map(|&s| (format!("seed-{s}"), Some(s))).collect()
        };
        for (tag, seed) in sets {
            let spec = match seed {
                Some(s) => spec.with_seed(s)?,
                None => spec.clone(),
            };
            let field = spec.load()?;
            let hash = spec.hash()?;
            let dir = out.dir(&tag)?;
            if let Some(f) = field.random() {
                out.json(&dir, "field.json", f.descriptor())?;
            }
            let path_seed = seed.or(field.random().map(|f| f.seed())).unwrap_or(0);
            let summary = run_one(config, &field, &hash, path_seed, &dir, &mut out)?;
            out.json(&dir, "summary.json", &summary)?;
            results.push(ResultSet {
                tag: if tag.is_empty() { "base".into() } else { tag },
                seed,
                field_hash: Some(hash),
                summary,
            });
        }
    }
    out.json(&root, "config.json", config)?;
    let manifest = Manifest {
        kind: config.kind,
        config_hash: config.hash(),
        code_version: CODE_VERSION.into(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        tags: tags_for(config.kind, config),
        results,
        files: out.entries()?,
    };
    write_json(&root.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

/// Topology of a loaded field for display.
pub fn describe_topology(field: &LoadedField) -> String {
    match field.random().map(|f| f.topology()) {
        Some(Topology::Torus { period }) => format!("torus of period {period}"),
        Some(Topology::FreeSpace) => "free space".into(),
        None => "deterministic".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::FieldSpec;
    use crate::harness::io::read_csv;

    fn constant_green(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            ExperimentKind::Green,
            Some(FieldSpec::Constant { matrix: SymMat::identity(1) }),
            dir,
        );
        c.numerics.h = 0.25;
        c.numerics.times = vec![1.0, 2.0, 4.0];
        c
    }

    #[test]
    fn constant_green_mass_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&constant_green(dir.path())).unwrap();
        let mass = m.files.iter().find(|f| f.path.ends_with("green_mass_0.csv")).unwrap();
        let (h, rows) = read_csv(&dir.path().join(&mass.path)).unwrap();
        assert_eq!(h[1], "mass");
        assert!(rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-9), "{rows:?}");
        assert!(m.verify(dir.path()).is_empty());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = run_experiment(&constant_green(a.path())).unwrap();
        let mut cb = constant_green(b.path());
        cb.output_dir = b.path().into();
        let mb = run_experiment(&cb).unwrap();
        let hashes = |m: &Manifest| {
            m.files
                .iter()
                .filter(|f| !f.path.ends_with("config.json"))
                .map(|f| (f.path.clone(), f.sha256.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(hashes(&ma), hashes(&mb));
    }
}
