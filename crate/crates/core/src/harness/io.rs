//! Output formats: 17-significant-digit CSV and JSON, binary grid functions
//! with JSON sidecars, and content hashes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "row of length {} under a header of length {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(format!("{c}: {e}"))))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((header, rows))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub const GRID_MAGIC: &[u8; 4] = b"HLGF";
pub const GRID_VERSION: u32 = 1;

/// JSON sidecar of a binary grid function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunctionMeta {
    pub grid: Grid,
    pub time: Option<f64>,
    pub field_hash: Option<String>,
    pub quantity: String,
    pub values_file: String,
    pub sha256: String,
}

/// Writes `stem.bin` (magic, version, node count, little-endian values) and
/// `stem.json`; returns both paths.
pub fn write_grid_function(
    stem: &Path,
    grid: &Grid,
    time: Option<f64>,
    field_hash: Option<&str>,
    quantity: &str,
    values: &[f64],
) -> Result<[PathBuf; 2]> {
    if values.len() != grid.len() {
        return Err(Error::Format("grid function length does not match the grid".into()));
    }
    let mut bytes = Vec::with_capacity(16 + 8 * values.len());
    bytes.extend_from_slice(GRID_MAGIC);
    bytes.extend_from_slice(&GRID_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    fs::write(&bin, &bytes)?;
    let meta = GridFunctionMeta {
        grid: grid.clone(),
        time,
        field_hash: field_hash.map(str::to_owned),
        quantity: quantity.into(),
        values_file: bin.file_name().unwrap().to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
    };
    write_json(&json, &meta)?;
    Ok([bin, json])
}

/// Reads a grid function from its sidecar path and verifies the hash.
pub fn read_grid_function(sidecar: &Path) -> Result<(GridFunctionMeta, Vec<f64>)> {
    let meta: GridFunctionMeta = read_json(sidecar)?;
    let bin = sidecar.with_file_name(&meta.values_file);
    let bytes = fs::read(&bin)?;
    if sha256_hex(&bytes) != meta.sha256 {
        return Err(Error::Format(format!("{} does not match its recorded hash", bin.display())));
    }
    if bytes.len() < 16 || &bytes[..4] != GRID_MAGIC {
        return Err(Error::Format(format!("{} is not a grid function", bin.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid function version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + 8 * n || n != meta.grid.len() {
        return Err(Error::Format("grid function length mismatch".into()));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(s.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
        }
        let j = to_json_string(&serde_json::json!({"a": [0.1, 2]})).unwrap();
        assert!(j.contains("1.0000000000000001e-1"), "{j}");
        let back: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(back["a"][0].as_f64(), Some(0.1));
    }

    #[test]
    fn grid_function_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::torus(2, 3, 1).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| i as f64 / 7.0).collect();
        let [_, side] = write_grid_function(&dir.path().join("u"), &g, Some(1.5), Some("abc"), "u", &v).unwrap();
        let (meta, back) = read_grid_function(&side).unwrap();
        assert_eq!(back, v);
        assert_eq!(meta.grid, g);
        assert_eq!(meta.time, Some(1.5));
        fs::write(dir.path().join("u.bin"), b"HLGF").unwrap();
        assert!(matches!(read_grid_function(&side), Err(Error::Format(_))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["t", "mass"], &[vec![1.0, 0.1], vec![2.0, 1.0 / 3.0]]).unwrap();
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["t", "mass"]);
        assert_eq!(rows[1][1], 1.0 / 3.0);
        assert!(write_csv(&p, &["t"], &[vec![1.0, 2.0]]).is_err());
    }
}
