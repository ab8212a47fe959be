//! Plot data and a gnuplot script for the standard figures: `|χ|` before and
//! after the evolution, the `|ρ̃|` surface, and its longitudinal and
//! transverse cross-sections with the fitted Gaussian overlaid.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;

use gravloc::analysis::GaussianFit;
use gravloc::densmat::DensityMatrixSlice;
use gravloc::solver::RadialState;

/// Transverse sections `|ρ̃(X, -X + k·TRANSVERSE_STEP·R)|`.
pub const TRANSVERSE_STEP: f64 = 0.08;
pub const TRANSVERSE_COUNT: usize = 5;

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".into()
    }
}

pub fn write_chi(dir: &Path, radius: f64, initial: &RadialState, last: &RadialState) -> Result<PathBuf> {
    let mut s = String::from("r_over_R,abs_chi_initial,abs_chi_final\n");
    for (i, r) in initial.grid.nodes().enumerate() {
        let a = initial.u[i].norm() / r;
        let b = last.u[i].norm() / r;
        writeln!(s, "{},{},{}", fmt(r / radius), fmt(a), fmt(b))?;
    }
    let path = dir.join("chi.csv");
    fs::write(&path, s)?;
    Ok(path)
}

/// `|K|` in gnuplot's blocked grid layout, one block per row.
pub fn write_surface(dir: &Path, stem: &str, radius: f64, slice: &DensityMatrixSlice) -> Result<PathBuf> {
    let mut s = String::from("# x_over_R xp_over_R abs_k\n");
    for i in 0..slice.n() {
        for j in 0..slice.n() {
            let (x, xp) = (slice.grid.x(i), slice.grid.x(j));
            writeln!(s, "{} {} {}", fmt(x / radius), fmt(xp / radius), fmt(slice.get(i, j).norm()))?;
        }
        s.push('\n');
    }
    let path = dir.join(format!("{stem}_surface.dat"));
    fs::write(&path, s)?;
    Ok(path)
}

/// Bilinear interpolation of `|K|`; `None` off the grid.
pub fn abs_kernel_at(slice: &DensityMatrixSlice, x: f64, xp: f64) -> Option<f64> {
    let g = slice.grid;
    let pos = |v: f64| (v + g.x_max) / g.dx();
    let (a, b) = (pos(x), pos(xp));
    let top = (g.n - 1) as f64;
    if !(0.0..=top).contains(&a) || !(0.0..=top).contains(&b) {
        return None;
    }
    let (i, j) = ((a.floor() as usize).min(g.n - 2), (b.floor() as usize).min(g.n - 2));
    let (fa, fb) = (a - i as f64, b - j as f64);
    let k = |p: usize, q: usize| slice.get(p, q).norm();
    Some(
        (1.0 - fa) * (1.0 - fb) * k(i, j)
            + fa * (1.0 - fb) * k(i + 1, j)
            + (1.0 - fa) * fb * k(i, j + 1)
            + fa * fb * k(i + 1, j + 1),
    )
}

/// Longitudinal section `|K(x,x)|` and transverse sections, each with the fit.
pub fn write_sections(
    dir: &Path,
    stem: &str,
    radius: f64,
    slice: &DensityMatrixSlice,
    fit: &GaussianFit,
) -> Result<[PathBuf; 2]> {
    let mut lon = String::from("x_over_R,abs_k,fit\n");
    for i in 0..slice.n() {
        let x = slice.grid.x(i);
        writeln!(lon, "{},{},{}", fmt(x / radius), fmt(slice.get(i, i).norm()), fmt(fit.eval(x, x)))?;
    }
    let mut tr = String::from("x_over_R");
    for k in 0..TRANSVERSE_COUNT {
        write!(tr, ",abs_k_{k},fit_{k}")?;
    }
    tr.push('\n');
    for i in 0..slice.n() {
        let x = slice.grid.x(i);
        write!(tr, "{}", fmt(x / radius))?;
        for k in 0..TRANSVERSE_COUNT {
            let xp = -x + k as f64 * TRANSVERSE_STEP * radius;
            let data = abs_kernel_at(slice, x, xp).unwrap_or(f64::NAN);
            write!(tr, ",{},{}", fmt(data), fmt(fit.eval(x, xp)))?;
        }
        tr.push('\n');
    }
    let a = dir.join(format!("{stem}_longitudinal.csv"));
    let b = dir.join(format!("{stem}_transverse.csv"));
    fs::write(&a, lon)?;
    fs::write(&b, tr)?;
    Ok([a, b])
}

/// Gnuplot script rendering every data file that exists for `stem`.
pub fn write_script(dir: &Path, stem: &str, with_chi: bool) -> Result<PathBuf> {
    let mut s = String::new();
    writeln!(s, "# gnuplot {stem}.gp")?;
    writeln!(s, "set datafile separator comma")?;
    writeln!(s, "set terminal pngcairo size 900,650")?;
    if with_chi {
        writeln!(s, "set output 'chi.png'")?;
        writeln!(s, "set xlabel 'r / R'; set ylabel '|chi|'")?;
        writeln!(
            s,
            "plot 'chi.csv' skip 1 using 1:2 with lines title 't = 0', \\\n     '' skip 1 using 1:3 with lines title 'final'"
        )?;
    }
    writeln!(s, "set output '{stem}_surface.png'")?;
    writeln!(s, "set datafile separator whitespace")?;
    writeln!(s, "set xlabel 'X / R'; set ylabel \"X' / R\"; set zlabel '|rho|'")?;
    writeln!(s, "set hidden3d")?;
    writeln!(s, "splot '{stem}_surface.dat' using 1:2:3 with lines notitle")?;
    writeln!(s, "unset hidden3d")?;
    writeln!(s, "set datafile separator comma")?;
    writeln!(s, "set output '{stem}_longitudinal.png'")?;
    writeln!(s, "set xlabel 'X / R'; set ylabel '|rho(X,X)|'")?;
    writeln!(
        s,
        "plot '{stem}_longitudinal.csv' skip 1 using 1:2 with points pt 7 ps 0.5 title 'numerical', \\\n     '' skip 1 using 1:3 with lines title 'Gaussian fit'"
    )?;
    writeln!(s, "set output '{stem}_transverse.png'")?;
    writeln!(s, "set xlabel 'X / R'; set ylabel \"|rho(X, -X + k 0.08 R)|\"")?;
    let mut parts = Vec::new();
    for k in 0..TRANSVERSE_COUNT {
        let (d, f) = (2 + 2 * k, 3 + 2 * k);
        parts.push(format!(
            "'{stem}_transverse.csv' skip 1 using 1:{d} with points pt 7 ps 0.4 title 'k={k}', '' skip 1 using 1:{f} with lines notitle"
        ));
    }
    writeln!(s, "plot {}", parts.join(", \\\n     "))?;
    let path = dir.join(format!("{stem}.gp"));
    fs::write(&path, s)?;
    Ok(path)
}
