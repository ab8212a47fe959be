//! Text formats shared by the pipeline and the command line tool.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which is
//! enough for an exact `f64` round trip. Sidecars are JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::LocalizationReport;
use crate::densmat::{DensityMatrixSlice, Normalization, QuadratureSpec, SliceGrid1D};
use crate::potential::PotentialModel;
use crate::solver::{RadialGrid, RadialState};
use crate::{Error, PhysicalSetup, Result};

pub const CHECKPOINT_HEADER: &str = "r,re_u,im_u";
pub const KERNEL_HEADER: &str = "x_i,x_j,re_k,im_k";
pub const SPECTRUM_HEADER: &str = "j,p_j";

/// JSON sidecar of a checkpoint CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub setup: PhysicalSetup,
    pub grid: RadialGrid,
    pub model: PotentialModel,
    pub t: f64,
    pub step: usize,
    pub n_steps: usize,
    pub dt: f64,
    /// `Σ|u|²dr - 1` of this state.
    pub norm_drift: f64,
}

/// JSON sidecar of a kernel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub grid: SliceGrid1D,
    pub normalization: Normalization,
    pub quadrature: Option<QuadratureSpec>,
    pub t: f64,
    /// Ball radius, cm.
    pub radius: f64,
    pub lambda_g: f64,
    pub gravity: bool,
    pub trace: f64,
    pub hermiticity_error: f64,
}

/// `foo.csv` → `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line}: bad number {field:?}: {e}")))
}

fn data_rows<R: BufRead>(reader: R, header: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| Error::Parse("empty file".into()))??;
    if first.trim() != header {
        return Err(Error::Parse(format!("expected header {header:?}, got {first:?}")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Parse(format!(
                "line {}: expected {columns} columns, got {}",
                k + 2,
                fields.len()
            )));
        }
        rows.push(fields.iter().map(|f| parse_f64(f, k + 2)).collect::<Result<Vec<_>>>()?);
    }
    Ok(rows)
}

pub fn write_state_csv<W: Write>(state: &RadialState, mut out: W) -> Result<()> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    for (i, u) in state.u.iter().enumerate() {
        writeln!(out, "{},{},{}", fmt(state.grid.r(i)), fmt(u.re), fmt(u.im))?;
    }
    Ok(())
}

/// Reads `u` back onto `grid`; the `r` column must match the grid nodes exactly.
pub fn read_state_csv<R: BufRead>(reader: R, grid: RadialGrid, t: f64) -> Result<RadialState> {
    let rows = data_rows(reader, CHECKPOINT_HEADER, 3)?;
    if rows.len() != grid.n_points {
        return Err(Error::Parse(format!(
            "expected {} rows, got {}",
            grid.n_points,
            rows.len()
        )));
    }
    let mut u = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if fmt(row[0]) != fmt(grid.r(i)) {
            return Err(Error::Parse(format!("row {i}: r = {} is off the grid", row[0])));
        }
        u.push(Complex64::new(row[1], row[2]));
    }
    Ok(RadialState { grid, u, t })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes `path` (CSV) and its JSON sidecar; returns both paths.
pub fn save_checkpoint(path: &Path, state: &RadialState, meta: &CheckpointMeta) -> Result<[PathBuf; 2]> {
    let mut out = BufWriter::new(File::create(path)?);
    write_state_csv(state, &mut out)?;
    out.flush()?;
    let side = sidecar_path(path);
    write_json(meta, &side)?;
    Ok([path.to_path_buf(), side])
}

pub fn load_checkpoint(path: &Path) -> Result<(RadialState, CheckpointMeta)> {
    let meta: CheckpointMeta = read_json(&sidecar_path(path))?;
    let state = read_state_csv(BufReader::new(File::open(path)?), meta.grid, meta.t)?;
    Ok((state, meta))
}

pub fn write_kernel_csv<W: Write>(slice: &DensityMatrixSlice, mut out: W) -> Result<()> {
    writeln!(out, "{KERNEL_HEADER}")?;
    let n = slice.n();
    for i in 0..n {
        let xi = fmt(slice.grid.x(i));
        for j in 0..n {
            let k = slice.get(i, j);
            writeln!(out, "{xi},{},{},{}", fmt(slice.grid.x(j)), fmt(k.re), fmt(k.im))?;
        }
    }
    Ok(())
}

/// Rows must come in row-major order on `grid`.
pub fn read_kernel_csv<R: BufRead>(
    reader: R,
    grid: SliceGrid1D,
    normalization: Normalization,
) -> Result<DensityMatrixSlice> {
    let rows = data_rows(reader, KERNEL_HEADER, 4)?;
    let n = grid.n;
    if rows.len() != n * n {
        return Err(Error::Parse(format!("expected {} rows, got {}", n * n, rows.len())));
    }
    let xs: Vec<String> = grid.points().into_iter().map(fmt).collect();
    let mut kernel = Vec::with_capacity(n * n);
    for (k, row) in rows.iter().enumerate() {
        let (i, j) = (k / n, k % n);
        if fmt(row[0]) != xs[i] || fmt(row[1]) != xs[j] {
            return Err(Error::Parse(format!("row {k}: ({}, {}) is off the grid", row[0], row[1])));
        }
        kernel.push(Complex64::new(row[2], row[3]));
    }
    Ok(DensityMatrixSlice {
        grid,
        kernel,
        normalization,
    })
}

pub fn save_kernel(path: &Path, slice: &DensityMatrixSlice, meta: &KernelMeta) -> Result<[PathBuf; 2]> {
    let mut out = BufWriter::new(File::create(path)?);
    write_kernel_csv(slice, &mut out)?;
    out.flush()?;
    let side = sidecar_path(path);
    write_json(meta, &side)?;
    Ok([path.to_path_buf(), side])
}

pub fn load_kernel(path: &Path) -> Result<(DensityMatrixSlice, KernelMeta)> {
    let meta: KernelMeta = read_json(&sidecar_path(path))?;
    let slice = read_kernel_csv(BufReader::new(File::open(path)?), meta.grid, meta.normalization)?;
    Ok((slice, meta))
}

pub fn write_spectrum_csv<W: Write>(p: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "{SPECTRUM_HEADER}")?;
    for (j, v) in p.iter().enumerate() {
        writeln!(out, "{j},{}", fmt(*v))?;
    }
    Ok(())
}

pub fn read_spectrum_csv<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let rows = data_rows(reader, SPECTRUM_HEADER, 2)?;
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            if row[0] != k as f64 {
                return Err(Error::Parse(format!("row {k}: index {} out of order", row[0])));
            }
            Ok(row[1])
        })
        .collect()
}

/// Writes the report JSON and the spectrum CSV next to it.
pub fn save_report(path: &Path, report: &LocalizationReport) -> Result<[PathBuf; 2]> {
    write_json(report, path)?;
    let spec = path.with_file_name(format!(
        "{}_spectrum.csv",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("report")
    ));
    let mut out = BufWriter::new(File::create(&spec)?);
    write_spectrum_csv(&report.spectrum, &mut out)?;
    out.flush()?;
    Ok([path.to_path_buf(), spec])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::CGS;
    use proptest::prelude::*;

    fn state(n: usize, seed: f64) -> RadialState {
        let grid = RadialGrid::new(n, 2.4e-5).unwrap();
        let u = (0..n)
            .map(|i| {
                let x = i as f64 + seed;
                Complex64::new((0.37 * x).sin() / 3.0, (x * x * 1e-3).cos() * 1e-7)
            })
            .collect();
        RadialState { grid, u, t: 10.0 }
    }

    #[test]
    fn checkpoint_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let st = state(50, 0.1);
        let meta = CheckpointMeta {
            setup: PhysicalSetup::new(0.38e12 * CGS.m_p, 4.8e-5, 8.96e-6).unwrap(),
            grid: st.grid,
            model: PotentialModel::Full,
            t: st.t,
            step: 10,
            n_steps: 10,
            dt: 1.0,
            norm_drift: -3e-14,
        };
        let path = dir.path().join("cp.csv");
        save_checkpoint(&path, &st, &meta).unwrap();
        let (back, m) = load_checkpoint(&path).unwrap();
        assert_eq!(back, st);
        assert_eq!(m, meta);
    }

    #[test]
    fn rejects_bad_input() {
        let g = RadialGrid::new(2, 1.0).unwrap();
        assert!(read_state_csv("r,u\n".as_bytes(), g, 0.0).is_err());
        assert!(read_state_csv("r,re_u,im_u\n1,2\n".as_bytes(), g, 0.0).is_err());
        assert!(read_state_csv("r,re_u,im_u\n0.5,1,0\n".as_bytes(), g, 0.0).is_err());
        let bad = format!("r,re_u,im_u\n{},1,0\n{},x,0\n", fmt(g.r(0)), fmt(g.r(1)));
        assert!(matches!(read_state_csv(bad.as_bytes(), g, 0.0), Err(Error::Parse(_))));
    }

    #[test]
    fn kernel_and_spectrum_round_trip() {
        let g = SliceGrid1D::new(7, 1.3e-5).unwrap();
        let sl = DensityMatrixSlice::from_fn(g, Normalization::UnitTrace, |x, xp| {
            Complex64::new((-(x * x + xp * xp) / 1e-10).exp(), (x - xp) * 1e4)
        });
        let mut buf = Vec::new();
        write_kernel_csv(&sl, &mut buf).unwrap();
        let back = read_kernel_csv(buf.as_slice(), g, Normalization::UnitTrace).unwrap();
        assert_eq!(back, sl);

        let p = vec![0.9, 0.0999, 1e-4, 0.0];
        let mut buf = Vec::new();
        write_spectrum_csv(&p, &mut buf).unwrap();
        assert_eq!(read_spectrum_csv(buf.as_slice()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn state_csv_is_bit_exact(
            vals in proptest::collection::vec((any::<f64>(), any::<f64>()), 2..40),
        ) {
            prop_assume!(vals.iter().all(|(a, b)| a.is_finite() && b.is_finite()));
            let grid = RadialGrid::new(vals.len(), 1e-3).unwrap();
            let st = RadialState {
                grid,
                u: vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect(),
                t: 0.0,
            };
            let mut buf = Vec::new();
            write_state_csv(&st, &mut buf).unwrap();
            let back = read_state_csv(buf.as_slice(), grid, 0.0).unwrap();
            for (a, b) in back.u.iter().zip(&st.u) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }
}
