//! File formats: legacy VTK structured points, raw little-endian `f64` with a
//! JSON sidecar, and CSV for boundary records and optimization traces.
//!
//! Floats in text formats are printed with 17 significant digits so they
//! read back bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::BoundaryRecord;
use crate::grid::{FaceClass, Grid3, ScalarField3};
use crate::inversion::OptTrace;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Path of the JSON sidecar that describes a raw file.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// ASCII legacy VTK, `STRUCTURED_POINTS`, one point-data scalar array.
pub fn write_vtk(path: &Path, field: &ScalarField3, name: &str) -> Result<()> {
    let g = field.grid();
    let mut w = create(path)?;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", g.n[0], g.n[1], g.n[2])?;
    writeln!(w, "ORIGIN {:.16e} {:.16e} {:.16e}", g.bbox.lo[0], g.bbox.lo[1], g.bbox.lo[2])?;
    writeln!(w, "SPACING {:.16e} {:.16e} {:.16e}", g.h, g.h, g.h)?;
    writeln!(w, "POINT_DATA {}", g.len())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in field.values() {
        writeln!(w, "{v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sidecar {
    ScalarField { grid: Grid3, dtype: String },
    BoundaryRecord { grid: Grid3, face: FaceClass, tau: f64, steps: usize, node_count: usize, dtype: String },
}

const DTYPE: &str = "f64le";

fn write_raw(path: &Path, values: &[f64], sidecar: &Sidecar) -> Result<()> {
    let mut w = create(path)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let mut s = create(&sidecar_path(path))?;
    serde_json::to_writer_pretty(&mut s, sidecar)?;
    writeln!(s)?;
    s.flush()?;
    Ok(())
}

fn read_raw(path: &Path) -> Result<(Vec<f64>, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::DataMismatch(format!("{} is not a whole number of f64 values", path.display())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((values, sidecar))
}

pub fn write_field_raw(path: &Path, field: &ScalarField3) -> Result<()> {
    write_raw(path, field.values(), &Sidecar::ScalarField { grid: *field.grid(), dtype: DTYPE.into() })
}

pub fn read_field_raw(path: &Path) -> Result<ScalarField3> {
    match read_raw(path)? {
        (values, Sidecar::ScalarField { grid, dtype }) if dtype == DTYPE => ScalarField3::new(grid, values),
        _ => Err(Error::DataMismatch(format!("{} does not describe a scalar field", path.display()))),
    }
}

pub fn write_record_raw(path: &Path, rec: &BoundaryRecord) -> Result<()> {
    let sidecar = Sidecar::BoundaryRecord {
        grid: rec.grid,
        face: rec.face,
        tau: rec.tau,
        steps: rec.steps,
        node_count: rec.node_count(),
        dtype: DTYPE.into(),
    };
    write_raw(path, &rec.samples, &sidecar)
}

pub fn read_record_raw(path: &Path) -> Result<BoundaryRecord> {
    match read_raw(path)? {
        (values, Sidecar::BoundaryRecord { grid, face, tau, steps, node_count, dtype }) if dtype == DTYPE => {
            let mut rec = BoundaryRecord::zeros(grid, tau, steps);
            if face != rec.face || node_count != rec.node_count() || values.len() != rec.samples.len() {
                return Err(Error::DataMismatch(format!("{} has an inconsistent layout", path.display())));
            }
            rec.samples = values;
            Ok(rec)
        }
        _ => Err(Error::DataMismatch(format!("{} does not describe a boundary record", path.display()))),
    }
}

/// `step,time,node,value`, one row per sample, time-major.
pub fn write_record_csv(path: &Path, rec: &BoundaryRecord) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,time,node,value")?;
    let n = rec.node_count();
    for m in 0..=rec.steps {
        let t = m as f64 * rec.tau;
        for (s, &node) in rec.nodes.iter().enumerate() {
            writeln!(w, "{m},{t:.16e},{node},{:.16e}", rec.samples[m * n + s])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a record CSV for a known grid and step; rows may come in any order
/// but must cover every (step, node) pair exactly once.
pub fn read_record_csv(path: &Path, grid: Grid3, tau: f64) -> Result<BoundaryRecord> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut max_step = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::DataMismatch(format!("{}:{}: malformed row", path.display(), lineno + 1));
        let mut parts = line.split(',');
        let step: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let _time: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let node: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let value: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        max_step = max_step.max(step);
        rows.push((step, node, value));
    }
    let mut rec = BoundaryRecord::zeros(grid, tau, max_step);
    let n = rec.node_count();
    if rows.len() != rec.samples.len() {
        return Err(Error::DataMismatch(format!("expected {} rows, found {}", rec.samples.len(), rows.len())));
    }
    let mut seen = vec![false; rec.samples.len()];
    for (step, node, value) in rows {
        let s = rec
            .nodes
            .binary_search(&node)
            .map_err(|_| Error::DataMismatch(format!("node {node} is not on the front face")))?;
        let k = step * n + s;
        if seen[k] {
            return Err(Error::DataMismatch(format!("duplicate sample at step {step}, node {node}")));
        }
        seen[k] = true;
        rec.samples[k] = value;
    }
    Ok(rec)
}

/// `iter,J,gradnorm,maxc,contrast_error_pct,step`.
pub fn write_trace_csv(path: &Path, trace: &OptTrace) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iter,J,gradnorm,maxc,contrast_error_pct,step")?;
    for e in &trace.entries {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.iter, e.j, e.grad_norm, e.max_c, e.contrast_error_pct, e.step
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Box3};
    use crate::inversion::{StopReason, TraceEntry};

    fn grid() -> Grid3 {
        build_grid(Box3::new([-0.2, 0.0, 0.1], [0.2, 0.3, 0.3]).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn vtk_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let f = ScalarField3::from_fn(grid(), |x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let p = dir.path().join("c.vtk");
        write_vtk(&p, &f, "c").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 5 4 3");
        assert_eq!(lines[7], "POINT_DATA 60");
        let vals: Vec<f64> = lines[10..].iter().map(|l| l.parse().unwrap()).collect();
        assert_eq!(vals, f.values());
    }

    #[test]
    fn raw_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let f = ScalarField3::from_fn(grid(), |x| (x[0] * 7.3).sin() / 3.0);
        let p = dir.path().join("sub/c.raw");
        write_field_raw(&p, &f).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 60 * 8);
        assert_eq!(read_field_raw(&p).unwrap(), f);
        assert!(read_record_raw(&p).is_err());

        let mut rec = BoundaryRecord::zeros(grid(), 0.003, 7);
        for (k, v) in rec.samples.iter_mut().enumerate() {
            *v = (k as f64).sqrt() * 1e-3;
        }
        let q = dir.path().join("rec.raw");
        write_record_raw(&q, &rec).unwrap();
        assert_eq!(read_record_raw(&q).unwrap(), rec);
    }

    #[test]
    fn csv_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = BoundaryRecord::zeros(grid(), 0.003, 5);
        for (k, v) in rec.samples.iter_mut().enumerate() {
            *v = 1.0 / (k as f64 + 3.0) - 0.1;
        }
        let p = dir.path().join("rec.csv");
        write_record_csv(&p, &rec).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("step,time,node,value\n0,0.0000000000000000e0,"));
        assert!(!text.contains('\r'));
        let back = read_record_csv(&p, grid(), 0.003).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn trace_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let e = TraceEntry { iter: 0, j: 1.5, grad_norm: 0.25, max_c: 1.0, contrast_error_pct: 83.33, step: 0.0 };
        let t = OptTrace { entries: vec![e, TraceEntry { iter: 1, ..e }], stop: StopReason::MaxIterations };
        let p = dir.path().join("trace.csv");
        write_trace_csv(&p, &t).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,J,gradnorm,maxc,contrast_error_pct,step");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,1.5000000000000000e0,"));
    }
}
