//! Partial trace over the hidden partner.
//!
//! The meta-wavefunction is `Ξ(X,Y) = ψ_cm((X+Y)/2) · φ(|X-Y|)`. For points on
//! the `x₁` axis both factors depend on `Y` only through its axial coordinate
//! `y` and its distance `s` from the axis, so the three-dimensional trace
//! `∫d³Y Ξ(X,Y) Ξ*(X',Y)` reduces exactly to `2π ∫dy ∫ s ds`.

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::CmState;
use crate::solver::RadialState;
use crate::{Error, Result};

/// Ratio of edge to peak integrand above which the quadrature box is rejected.
pub const EDGE_TOLERANCE: f64 = 1e-6;

/// Number of quadrature nodes evaluated per pass of the accumulation loop.
const CHUNK: usize = 2048;

/// Relative-motion factor of the meta-wavefunction, normalized in three dimensions.
pub trait RelativeFactor: Sync {
    fn phi(&self, r: f64) -> Complex64;
    /// Separation beyond which `phi` vanishes or is negligible, cm.
    fn extent(&self) -> f64;
}

impl RelativeFactor for RadialState {
    fn phi(&self, r: f64) -> Complex64 {
        RadialState::phi(self, r)
    }

    fn extent(&self) -> f64 {
        self.grid.r_max()
    }
}

/// `Ξ(X, Y)` for arbitrary points.
pub fn meta_wavefunction<R: RelativeFactor + ?Sized>(
    cm: &CmState,
    rel: &R,
    x: [f64; 3],
    y: [f64; 3],
) -> Complex64 {
    let mut sum_sq = 0.0;
    let mut diff_sq = 0.0;
    for k in 0..3 {
        sum_sq += (x[k] + y[k]).powi(2);
        diff_sq += (x[k] - y[k]).powi(2);
    }
    cm.amplitude(0.25 * sum_sq) * rel.phi(diff_sq.sqrt())
}

/// Symmetric uniform grid on `[-x_max, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid1D {
    pub n: usize,
    pub x_max: f64,
}

impl SliceGrid1D {
    pub fn new(n: usize, x_max: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("slice_n", "need at least three points"));
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::invalid("x_max", format!("must be positive, got {x_max}")));
        }
        Ok(Self { n, x_max })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        // mirror-exact about the center
        let half = (self.n - 1) as f64 / 2.0;
        (i as f64 - half) * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoidal weights.
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n, self.dx())
    }
}

/// Uniform trapezoidal rule on `y ∈ [y_min, y_max]`, `s ∈ [0, s_max]`, with an
/// endpoint correction on the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub n_y: usize,
    pub n_s: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub s_max: f64,
}

impl QuadratureSpec {
    pub const DEFAULT_N_Y: usize = 512;
    pub const DEFAULT_N_S: usize = 256;
    /// Box half-size in units of the center of meta-mass width.
    pub const CM_WIDTHS: f64 = 4.0;

    /// Default box: the center of meta-mass factor confines `|X+Y|` to four of
    /// its widths and the relative factor confines `|X-Y|` to its extent.
    pub fn auto<R: RelativeFactor + ?Sized>(cm: &CmState, rel: &R, grid: &SliceGrid1D) -> Self {
        Self::auto_with(cm, rel, grid, Self::DEFAULT_N_Y, Self::DEFAULT_N_S)
    }

    pub fn auto_with<R: RelativeFactor + ?Sized>(
        cm: &CmState,
        rel: &R,
        grid: &SliceGrid1D,
        n_y: usize,
        n_s: usize,
    ) -> Self {
        let reach = (Self::CM_WIDTHS * cm.sum_width()).min(rel.extent());
        let y_half = grid.x_max + reach;
        Self {
            n_y,
            n_s,
            y_min: -y_half,
            y_max: y_half,
            s_max: reach,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_y < 2 || self.n_s < 2 {
            return Err(Error::invalid("quadrature", "need at least two nodes per axis"));
        }
        if !(self.y_max > self.y_min && self.s_max > 0.0) {
            return Err(Error::invalid("quadrature", "empty integration box"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    UnitTrace,
}

/// `ρ̃(x_i, x_j) = ρ(x_i,0,0; x_j,0,0)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrixSlice {
    pub grid: SliceGrid1D,
    pub kernel: Vec<Complex64>,
    pub normalization: Normalization,
}

impl DensityMatrixSlice {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.kernel[i * self.grid.n + j]
    }

    /// `Σ_i w_i K(x_i, x_i)`.
    pub fn trace(&self) -> f64 {
        let w = self.grid.weights();
        (0..self.n()).map(|i| w[i] * self.get(i, i).re).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.kernel.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|K_ij - conj(K_ji)|` relative to `max|K|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        let scale = self.max_abs();
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    pub fn to_unit_trace(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0 && tr.is_finite()) {
            return Err(Error::CorruptedSlice(format!("non-positive trace {tr:e}")));
        }
        Ok(Self {
            grid: self.grid,
            kernel: self.kernel.iter().map(|z| z / tr).collect(),
            normalization: Normalization::UnitTrace,
        })
    }

    /// Builds a slice by evaluating `f(x_i, x_j)` on the grid.
    pub fn from_fn(grid: SliceGrid1D, normalization: Normalization, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let xs = grid.points();
        let mut kernel = Vec::with_capacity(grid.n * grid.n);
        for &x in &xs {
            for &xp in &xs {
                kernel.push(f(x, xp));
            }
        }
        Self {
            grid,
            kernel,
            normalization,
        }
    }
}

/// `Tr K² / (Tr K)²` with trapezoidal weights on both indices.
pub fn purity(slice: &DensityMatrixSlice) -> Result<f64> {
    let tr = slice.trace();
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::CorruptedSlice(format!("non-positive trace {tr:e}")));
    }
    let w = slice.grid.weights();
    let n = slice.n();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            sum += w[i] * w[j] * (slice.get(i, j) * slice.get(j, i)).re;
        }
    }
    Ok(sum / (tr * tr))
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

struct Node {
    y: f64,
    s: f64,
    weight: f64,
    on_edge: bool,
}

fn quadrature_nodes(q: &QuadratureSpec) -> Vec<Node> {
    let dy = (q.y_max - q.y_min) / (q.n_y - 1) as f64;
    let ds = q.s_max / (q.n_s - 1) as f64;
    let wy = trapezoid_weights(q.n_y, dy);
    let ws = trapezoid_weights(q.n_s, ds);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut nodes = Vec::with_capacity(q.n_y * q.n_s);
    for (a, &wya) in wy.iter().enumerate() {
        let y = q.y_min + a as f64 * dy;
        for (b, &wsb) in ws.iter().enumerate() {
            let s = b as f64 * ds;
            // The s-integrand 2πs·f(s²) has slope 2πf(0) at the axis, which costs
            // the plain trapezoid O(ds²); the Euler–Maclaurin endpoint term
            // restores O(ds⁴) and lands on the otherwise weightless s = 0 node.
            let radial = if b == 0 { two_pi * ds * ds / 12.0 } else { two_pi * s * wsb };
            nodes.push(Node {
                y,
                s,
                weight: radial * wya,
                on_edge: a == 0 || a == q.n_y - 1 || b == q.n_s - 1,
            });
        }
    }
    nodes
}

fn map_rows<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Traces the hidden body out of `Ξ` on the slice grid (raw normalization).
///
/// Every kernel entry is accumulated in a fixed order over quadrature nodes,
/// so the result does not depend on the number of worker threads.
pub fn trace_out_slice<R: RelativeFactor + ?Sized>(
    cm: &CmState,
    rel: &R,
    grid: &SliceGrid1D,
    quad: &QuadratureSpec,
) -> Result<DensityMatrixSlice> {
    quad.validate()?;
    let nodes = quadrature_nodes(quad);
    let xs = grid.points();
    let n = grid.n;

    // upper triangle, row i holds j = i..n
    let mut upper: Vec<Vec<Complex64>> = (0..n).map(|i| vec![Complex64::new(0.0, 0.0); n - i]).collect();
    let mut peak: f64 = 0.0;
    let mut edge_peak: f64 = 0.0;

    for chunk in nodes.chunks(CHUNK) {
        // amp[i][q] = Ξ((x_i,0,0), Y_q)
        let amp: Vec<Vec<Complex64>> = map_rows(n, |i| {
            let x = xs[i];
            chunk
                .iter()
                .map(|nd| {
                    let sum_sq = (x + nd.y).powi(2) + nd.s * nd.s;
                    let diff = ((x - nd.y).powi(2) + nd.s * nd.s).sqrt();
                    cm.amplitude(0.25 * sum_sq) * rel.phi(diff)
                })
                .collect()
        });
        for row in &amp {
            for (a, nd) in row.iter().zip(chunk) {
                let v = a.norm_sqr();
                peak = peak.max(v);
                if nd.on_edge {
                    edge_peak = edge_peak.max(v);
                }
            }
        }
        let weighted: Vec<Vec<Complex64>> = amp
            .iter()
            .map(|row| row.iter().zip(chunk).map(|(a, nd)| a * nd.weight).collect())
            .collect();
        let partial: Vec<Vec<Complex64>> = map_rows(n, |i| {
            let wi = &weighted[i];
            (i..n)
                .map(|j| {
                    let aj = &amp[j];
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for (p, q) in wi.iter().zip(aj) {
                        // p * conj(q)
                        re += p.re * q.re + p.im * q.im;
                        im += p.im * q.re - p.re * q.im;
                    }
                    Complex64::new(re, im)
                })
                .collect()
        });
        for (acc, part) in upper.iter_mut().zip(partial) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }

    if peak > 0.0 && edge_peak > EDGE_TOLERANCE * peak {
        return Err(Error::QuadratureTooSmall {
            edge: "outer",
            ratio: edge_peak / peak,
        });
    }

    let mut kernel = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for (k, &v) in upper[i].iter().enumerate() {
            let j = i + k;
            if i == j {
                kernel[i * n + i] = Complex64::new(v.re, 0.0);
            } else {
                kernel[i * n + j] = v;
                kernel[j * n + i] = v.conj();
            }
        }
    }
    Ok(DensityMatrixSlice {
        grid: *grid,
        kernel,
        normalization: Normalization::Raw,
    })
}
