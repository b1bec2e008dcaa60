//! Aggregation of run manifests into a summary keyed by theorem tag, with one
//! self-contained gnuplot script per experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

use super::io::{fmt_f64, read_csv, read_json, write_json};
use super::run::{Manifest, MANIFEST_NAME};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportEntry {
    pub manifest: String,
    pub kind: String,
    pub config_hash: String,
    pub results: Vec<Value>,
    pub plot_script: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub sections: BTreeMap<String, Vec<ReportEntry>>,
    /// Manifests or listed files that could not be read or failed verification.
    pub missing: Vec<String>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl ReportSummary {
    pub fn section_count(&self) -> usize {
        self.sections.len()
    }
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_NAME)
    } else {
        p.to_path_buf()
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// gnuplot script embedding every CSV of one experiment; tables with the
/// same header share one plot.
fn plot_script(title: &str, tables: &[(String, Vec<String>, Vec<Vec<f64>>)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {title}");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    for (k, (_, header, rows)) in tables.iter().enumerate() {
        let _ = writeln!(s, "$data{k} << EOD");
        let _ = writeln!(s, "{}", header.join(","));
        for r in rows {
            let cells: Vec<String> = r.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        let _ = writeln!(s, "EOD");
    }
    let mut groups: Vec<(Vec<String>, Vec<usize>)> = Vec::new();
    for (k, (_, header, _)) in tables.iter().enumerate() {
        match groups.iter_mut().find(|g| &g.0 == header) {
            Some(g) => g.1.push(k),
            None => groups.push((header.clone(), vec![k])),
        }
    }
    for (g, (header, members)) in groups.iter().enumerate() {
        let positive = members
            .iter()
            .all(|&k| tables[k].2.iter().all(|r| r.iter().all(|&v| v > 0.0)));
        let _ = writeln!(s, "set output '{}_{g}.png'", slug(title));
        let _ = writeln!(s, "set xlabel '{}'", header[0]);
        if positive {
            let _ = writeln!(s, "set logscale xy");
        } else {
            let _ = writeln!(s, "unset logscale");
        }
        let mut parts = Vec::new();
        for &k in members {
            for (c, name) in header.iter().enumerate().skip(1) {
                parts.push(format!("$data{k} using 1:{} skip 1 with linespoints title '{} {}'", c + 1, tables[k].0, name));
            }
        }
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s
}

/// Reads each manifest (or directory holding one), verifies its files, and
/// writes `summary.json` plus plot scripts into `out`. Unreadable inputs are
/// listed under `missing` and the rest of the report is still produced.
pub fn emit_report(manifests: &[PathBuf], out: &Path) -> Result<ReportSummary> {
    fs::create_dir_all(out)?;
    let mut rep = ReportSummary::default();
    for (idx, input) in manifests.iter().enumerate() {
        let path = manifest_path(input);
        let manifest: Manifest = match read_json(&path) {
            Ok(m) => m,
            Err(_) => {
                rep.missing.push(path.display().to_string());
                continue;
            }
        };
        let root = path.parent().unwrap_or(Path::new("."));
        let bad = manifest.verify(root);
        rep.missing.extend(bad.iter().map(|f| root.join(f).display().to_string()));
        let mut tables = Vec::new();
        for f in manifest.files.iter().filter(|f| f.path.ends_with(".csv") && !bad.contains(&f.path)) {
            match read_csv(&root.join(&f.path)) {
                Ok((h, rows)) => tables.push((f.path.clone(), h, rows)),
                Err(_) => rep.missing.push(root.join(&f.path).display().to_string()),
            }
        }
        let plot_script_name = if tables.is_empty() {
            None
        } else {
            let title = format!("{idx}_{}", manifest.kind.name());
            let name = format!("plot_{}.gp", slug(&title));
            let p = out.join(&name);
            fs::write(&p, plot_script(&title, &tables))?;
            rep.files.push(p);
            Some(name)
        };
        let entry = ReportEntry {
            manifest: path.display().to_string(),
            kind: manifest.kind.name().into(),
            config_hash: manifest.config_hash.clone(),
            results: manifest
                .results
                .iter()
                .map(|r| serde_json::json!({ "tag": r.tag, "seed": r.seed, "summary": r.summary }))
                .collect(),
            plot_script: plot_script_name,
        };
        for tag in &manifest.tags {
            rep.sections.entry(tag.clone()).or_default().push(entry.clone());
        }
    }
    let summary = out.join("summary.json");
    write_json(&summary, &rep)?;
    rep.files.push(summary);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ExperimentConfig, ExperimentKind, FieldSpec};
    use crate::harness::run::run_experiment;
    use crate::sym::SymMat;

    #[test]
    fn empty_report_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let rep = emit_report(&[], dir.path()).unwrap();
        assert_eq!(rep.section_count(), 0);
        let v: Value = read_json(&dir.path().join("summary.json")).unwrap();
        assert_eq!(v["sections"].as_object().unwrap().len(), 0);
    }

    #[test]
    fn green_run_gives_one_script_and_missing_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join("run");
        let mut c = ExperimentConfig::new(
            ExperimentKind::Green,
            Some(FieldSpec::Constant { matrix: SymMat::identity(1) }),
            &run_dir,
        );
        c.numerics.h = 0.5;
        c.numerics.times = vec![1.0, 2.0];
        run_experiment(&c).unwrap();
        let out = dir.path().join("report");
        let rep = emit_report(&[run_dir.clone(), dir.path().join("nope")], &out).unwrap();
        assert_eq!(rep.sections["t.GF"].len(), 1);
        assert_eq!(rep.missing.len(), 1);
        let scripts: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "gp"))
            .collect();
        assert_eq!(scripts.len(), 1);
        let text = fs::read_to_string(scripts[0].path()).unwrap();
        assert!(text.contains("mass"));
    }
}
