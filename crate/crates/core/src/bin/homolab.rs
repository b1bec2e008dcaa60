//! `homolab`: command-line front end of the experiment harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use homolab::clt::GaussianData;
use homolab::field::{CellLaw, EllipticityParams, FieldDescriptor, Interpolation, Topology};
use homolab::grid::Grid;
use homolab::harness::config::{load_descriptor, ExperimentConfig, ExperimentKind, FieldSpec, LoadedField};
use homolab::harness::io::{to_json_string, write_grid_function, write_json};
use homolab::harness::run::{describe_topology, nodes_per_unit};
use homolab::harness::{configure_workers, emit_report, run_experiment};
use homolab::operator::assemble_generator;
use homolab::parabolic::{solve_cauchy_dirichlet, Scheme};
use homolab::{Coefficients, Error, Result};

#[derive(Parser)]
#[command(name = "homolab", version, about = "Numerical experiments for nondivergence-form homogenization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random coefficient field and write its binary descriptor.
    GenField(GenField),
    /// Evolve initial data under the discrete parabolic operator.
    Solve(Solve),
    /// Green-function evolution, mass history and Gaussian envelope.
    Green(Experiment),
    /// Invariant measure by the adjoint null vector and/or Green mass limits.
    InvariantMeasure(Experiment),
    /// Homogenized matrix along the corrector and measure ladders.
    Homogenize(Experiment),
    /// Local central limit theorem benchmark.
    Clt(Experiment),
    /// Cauchy–Dirichlet homogenization error across scales.
    CdError(Experiment),
    /// Diffusion ensembles: environmental ergodicity and invariance principle.
    Sde(Experiment),
    /// Aggregate run manifests into a report.
    Report(Report),
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Uniform,
    TwoPoint,
    Laminar,
}

#[derive(Args)]
struct GenField {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "Lambda", default_value_t = 2.0)]
    big_lambda: f64,
    /// Torus period in lattice units; free space when omitted.
    #[arg(long)]
    period: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Law::Uniform)]
    law: Law,
    /// Mollifier radius; 0 selects piecewise-constant cells.
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    /// Output path of the binary descriptor; a JSON copy is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Initial {
    Delta,
    Gaussian,
}

#[derive(Args)]
struct Solve {
    /// Field descriptor (binary or JSON); the identity when omitted.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    /// Half-width of the Dirichlet box for fields without a period.
    #[arg(long, default_value_t = 16.0)]
    half_width: f64,
    #[arg(long, value_enum, default_value_t = Initial::Gaussian)]
    initial: Initial,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long)]
    t_final: f64,
    /// Implicit step; explicit stepping when omitted.
    #[arg(long)]
    implicit_dt: Option<f64>,
    /// Output stem of the grid function.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Experiment {
    /// JSON configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Field descriptor file (binary or JSON).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Constant coefficient matrix `a11,a12,a22` (or `a` in one dimension).
    #[arg(long, conflicts_with = "field")]
    constant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    h: Option<f64>,
    /// Replaces the descriptor seed; repeat for a seed ladder.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Override a numerical knob, e.g. `--set times=[1,2,4]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct Report {
    /// Manifests or run directories.
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_constant(s: &str) -> Result<FieldSpec> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Validation(vec![format!("--constant {s}: {e}")]))?;
    let matrix = match v.as_slice() {
        [a] => homolab::SymMat::new1(*a),
        [a11, a12, a22] => homolab::SymMat::new2(*a11, *a12, *a22),
        _ => return Err(Error::Validation(vec![format!("--constant {s}: expected 1 or 3 entries")])),
    };
    Ok(FieldSpec::Constant { matrix })
}

fn apply_sets(cfg: &mut ExperimentConfig, sets: &[String]) -> Result<()> {
    let mut numerics = serde_json::to_value(&cfg.numerics)?;
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Validation(vec![format!("--set {s}: expected KEY=VALUE")]))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        numerics[key.trim()] = value;
    }
    cfg.numerics = serde_json::from_value(numerics).map_err(|e| Error::Validation(vec![format!("numerics: {e}")]))?;
    Ok(())
}

fn experiment_config(kind: ExperimentKind, a: &Experiment) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::new(kind, None, "homolab-out"),
    };
    cfg.kind = kind;
    if let Some(p) = &a.field {
        cfg.field = Some(FieldSpec::File { path: p.clone() });
    }
    if let Some(c) = &a.constant {
        cfg.field = Some(parse_constant(c)?);
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if let Some(h) = a.h {
        cfg.numerics.h = h;
    }
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    apply_sets(&mut cfg, &a.sets)?;
    Ok(cfg)
}

fn gen_field(a: &GenField) -> Result<()> {
    let topology = match a.period {
        Some(period) => Topology::Torus { period },
        None => Topology::FreeSpace,
    };
    let law = match a.law {
        Law::Uniform => CellLaw::Uniform,
        Law::TwoPoint => CellLaw::TwoPoint { low: a.lambda, high: a.big_lambda },
        Law::Laminar => CellLaw::Laminar {
            a: [a.lambda, a.big_lambda],
            b: [a.lambda, a.big_lambda],
        },
    };
    let interpolation = if a.rho == 0.0 {
        Interpolation::PiecewiseConstant
    } else {
        Interpolation::Mollified { rho: a.rho }
    };
    let field = FieldDescriptor::new(a.seed, EllipticityParams::new(a.lambda, a.big_lambda), a.dim, topology)
        .with_law(law)
        .with_interpolation(interpolation)
        .build()?;
    std::fs::write(&a.out, field.to_bytes())?;
    write_json(&a.out.with_extension("json"), field.descriptor())?;
    println!("{}", field.descriptor_hash());
    Ok(())
}

fn solve(a: &Solve) -> Result<()> {
    let field = match &a.field {
        Some(p) => LoadedField::Random(load_descriptor(p)?.build()?),
        None => LoadedField::Constant(homolab::field::ConstantCoefficients(homolab::SymMat::identity(a.dim))),
    };
    let dim = field.dim();
    let grid = match field.period() {
        Some(p) => Grid::torus(dim, p as usize, nodes_per_unit(a.h)?)?,
        None => Grid::centered_box(dim, [0.0; 2], a.half_width, a.h)?,
    };
    let u0 = match a.initial {
        Initial::Delta => homolab::green::discrete_delta(&grid, [0.0; 2])?.1,
        Initial::Gaussian => grid.sample(|x| GaussianData::SquaredExponential.value(1.0, a.r, dim, x)),
    };
    let scheme = match a.implicit_dt {
        Some(dt) => Scheme::Implicit { dt },
        None => Scheme::Explicit,
    };
    let op = assemble_generator(&field, &grid)?;
    let zero = |_: f64, _: [f64; 2]| 0.0;
    let g: Option<homolab::parabolic::BoundaryData> = if grid.periodic { None } else { Some(&zero) };
    let run = solve_cauchy_dirichlet(&op, &u0, g, a.t_final, &[], scheme)?;
    let last = run.snapshots.last().expect("final snapshot");
    let hash = field.random().map(|f| f.descriptor_hash());
    let files = write_grid_function(&a.out, &grid, Some(last.time), hash.as_deref(), "u", &last.values)?;
    let info = serde_json::json!({
        "domain": describe_topology(&field),
        "steps": run.steps,
        "dt": run.dt,
        "mass": grid.integrate(&last.values),
        "files": files,
    });
    print!("{}", to_json_string(&info)?);
    Ok(())
}

fn experiment(kind: ExperimentKind, a: &Experiment) -> Result<()> {
    let cfg = experiment_config(kind, a)?;
    let manifest = run_experiment(&cfg)?;
    let out = serde_json::json!({
        "manifest": Path::new(&cfg.output_dir).join(homolab::harness::run::MANIFEST_NAME),
        "wall_time_seconds": manifest.wall_time_seconds,
        "results": manifest.results,
    });
    print!("{}", to_json_string(&out)?);
    Ok(())
}

fn report(a: &Report) -> Result<()> {
    let rep = emit_report(&a.manifests, &a.out)?;
    for m in &rep.missing {
        eprintln!("missing: {m}");
    }
    println!("{} sections written to {}", rep.section_count(), a.out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    configure_workers()?;
    match &cli.command {
        Command::GenField(a) => gen_field(a),
        Command::Solve(a) => solve(a),
        Command::Green(a) => experiment(ExperimentKind::Green, a),
        Command::InvariantMeasure(a) => experiment(ExperimentKind::InvariantMeasure, a),
        Command::Homogenize(a) => experiment(ExperimentKind::Homogenize, a),
        Command::Clt(a) => experiment(ExperimentKind::Clt, a),
        Command::CdError(a) => experiment(ExperimentKind::CdError, a),
        Command::Sde(a) => experiment(ExperimentKind::Sde, a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
