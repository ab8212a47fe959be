//! Localization observables of a density-matrix slice.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::densmat::{purity, DensityMatrixSlice};
use crate::{Error, Result};

pub const MAX_FIT_ITERATIONS: usize = 200;
pub const FIT_TOLERANCE: f64 = 1e-10;
/// Eigenvalues below this are treated as a quadrature failure rather than noise.
pub const NEGATIVE_EIGENVALUE_LIMIT: f64 = -1e-8;
/// Hermiticity required of fit and spectral inputs, relative to `max|K|`.
pub const HERMITICITY_LIMIT: f64 = 1e-10;

/// `A·exp(-(x+x')²/Λ₊²)·exp(-(x-x')²/Λ₋²)` fitted to `|K|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    /// Ensemble width, cm.
    pub lambda_plus: f64,
    /// Coherence length, cm.
    pub lambda_minus: f64,
    /// RMS residual relative to `max|K|`.
    pub rms_residual: f64,
    pub iterations: usize,
}

impl GaussianFit {
    pub fn ratio(&self) -> f64 {
        self.lambda_minus / self.lambda_plus
    }

    pub fn eval(&self, x: f64, xp: f64) -> f64 {
        let u = x + xp;
        let v = x - xp;
        self.amplitude
            * (-(u * u) / (self.lambda_plus * self.lambda_plus)
                - v * v / (self.lambda_minus * self.lambda_minus))
                .exp()
    }
}

fn check_hermitian(slice: &DensityMatrixSlice) -> Result<()> {
    let err = slice.hermiticity_error();
    if err > HERMITICITY_LIMIT {
        return Err(Error::CorruptedSlice(format!("not Hermitian (error {err:e})")));
    }
    Ok(())
}

/// Damped Gauss–Newton (Levenberg–Marquardt) fit of the double Gaussian to `|K|`,
/// started from the second moments of `|K|` along `x+x'` and `x-x'`.
pub fn fit_double_gaussian(slice: &DensityMatrixSlice) -> Result<GaussianFit> {
    check_hermitian(slice)?;
    let xs = slice.grid.points();
    let n = slice.n();
    let mut u = Vec::with_capacity(n * n);
    let mut v = Vec::with_capacity(n * n);
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            u.push(xs[i] + xs[j]);
            v.push(xs[i] - xs[j]);
            data.push(slice.get(i, j).norm());
        }
    }
    let peak = data.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::CorruptedSlice("all-zero kernel".into()));
    }

    let total: f64 = data.iter().sum();
    let mom_u: f64 = data.iter().zip(&u).map(|(d, u)| d * u * u).sum::<f64>() / total;
    let mom_v: f64 = data.iter().zip(&v).map(|(d, v)| d * v * v).sum::<f64>() / total;
    let dx = slice.grid.dx();
    let mut p = Vector3::new(peak, (2.0 * mom_u).sqrt().max(dx), (2.0 * mom_v).sqrt().max(dx));

    let cost = |p: &Vector3<f64>| -> f64 {
        let (a, lp2, lm2) = (p[0], p[1] * p[1], p[2] * p[2]);
        (0..data.len())
            .map(|k| {
                let r = a * (-u[k] * u[k] / lp2 - v[k] * v[k] / lm2).exp() - data[k];
                r * r
            })
            .sum()
    };

    let mut current = cost(&p);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        let (a, lp, lm) = (p[0], p[1], p[2]);
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for k in 0..data.len() {
            let (uk2, vk2) = (u[k] * u[k], v[k] * v[k]);
            let e = (-uk2 / (lp * lp) - vk2 / (lm * lm)).exp();
            let f = a * e;
            let jac = Vector3::new(e, 2.0 * f * uk2 / lp.powi(3), 2.0 * f * vk2 / lm.powi(3));
            jtj += jac * jac.transpose();
            jtr += jac * (f - data[k]);
        }
        let mut damped = jtj;
        for d in 0..3 {
            damped[(d, d)] *= 1.0 + mu;
        }
        let Some(delta) = damped.lu().solve(&(-jtr)) else {
            mu *= 10.0;
            continue;
        };
        let trial = p + delta;
        let trial_cost = if trial.iter().all(|&c| c > 0.0) { cost(&trial) } else { f64::INFINITY };
        if trial_cost <= current {
            let rel = (0..3).map(|d| (delta[d] / p[d]).abs()).fold(0.0, f64::max);
            p = trial;
            current = trial_cost;
            mu = (mu / 3.0).max(1e-12);
            if rel < FIT_TOLERANCE {
                converged = true;
                break;
            }
        } else {
            mu *= 4.0;
            if mu > 1e16 {
                // no downhill direction left at working precision
                converged = true;
                break;
            }
        }
    }

    let rms_residual = (current / data.len() as f64).sqrt() / peak;
    if !converged {
        return Err(Error::FitNotConverged {
            iterations,
            rms_residual,
        });
    }
    Ok(GaussianFit {
        amplitude: p[0],
        lambda_plus: p[1],
        lambda_minus: p[2],
        rms_residual,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntropy {
    /// Size of the equiprobable ensemble with the same purity.
    pub n_eff: f64,
    /// nats
    pub s_axis: f64,
    /// nats, three independent Cartesian axes
    pub s_total: f64,
}

pub fn ensemble_entropy(purity: f64) -> Result<EnsembleEntropy> {
    if !(purity > 0.0 && purity <= 1.0) {
        return Err(Error::invalid("purity", format!("must be in (0, 1], got {purity}")));
    }
    let n_eff = 1.0 / purity;
    let s_axis = n_eff.ln();
    Ok(EnsembleEntropy {
        n_eff,
        s_axis,
        s_total: 3.0 * s_axis,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Eigenvalues of the unit-trace kernel, descending, clipped at zero.
    pub p: Vec<f64>,
    /// Most negative eigenvalue before clipping.
    pub min_raw: f64,
    /// `-Σ p ln p`, nats.
    pub entropy: f64,
}

impl Spectrum {
    pub fn purity(&self) -> f64 {
        self.p.iter().map(|p| p * p).sum()
    }
}

/// Diagonalizes `W^{1/2} K W^{1/2} / Tr K`, where `W` holds the trapezoidal weights.
pub fn spectral_entropy(slice: &DensityMatrixSlice) -> Result<Spectrum> {
    check_hermitian(slice)?;
    let tr = slice.trace();
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::CorruptedSlice(format!("non-positive trace {tr:e}")));
    }
    let n = slice.n();
    let sw: Vec<f64> = slice.grid.weights().iter().map(|w| w.sqrt()).collect();
    let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| slice.get(i, j) * (sw[i] * sw[j] / tr));
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let min_raw = eig.last().copied().unwrap_or(0.0);
    if min_raw < NEGATIVE_EIGENVALUE_LIMIT {
        return Err(Error::NegativeEigenvalue { value: min_raw });
    }
    let p: Vec<f64> = eig.into_iter().map(|e| e.max(0.0)).collect();
    let entropy = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    Ok(Spectrum { p, min_raw, entropy })
}

/// `Λ₊ / Λ_G`: how many non-overlapping ground-width cells fit in the ensemble.
pub fn naive_count(fit: &GaussianFit, lambda_g: f64) -> Result<f64> {
    if !(lambda_g > 0.0) {
        return Err(Error::invalid("lambda_g", "must be positive"));
    }
    Ok(fit.lambda_plus / lambda_g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub fit: GaussianFit,
    /// Integral purity `Tr ρ̃² / (Tr ρ̃)²`.
    pub purity: f64,
    pub n_eff: f64,
    pub s_axis: f64,
    pub s_total: f64,
    pub spectrum: Vec<f64>,
    pub spectral_purity: f64,
    pub s_spectral: f64,
    pub naive_count: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

/// Runs every observable on a slice; `lambda_g` feeds the naive count.
pub fn analyze(slice: &DensityMatrixSlice, lambda_g: f64) -> Result<LocalizationReport> {
    let unit = slice.to_unit_trace()?;
    let fit = fit_double_gaussian(&unit)?;
    let purity = purity(&unit)?;
    let ens = ensemble_entropy(purity.min(1.0))?;
    let spec = spectral_entropy(&unit)?;
    Ok(LocalizationReport {
        naive_count: naive_count(&fit, lambda_g)?,
        fit,
        purity,
        n_eff: ens.n_eff,
        s_axis: ens.s_axis,
        s_total: ens.s_total,
        spectral_purity: spec.purity(),
        s_spectral: spec.entropy,
        min_eigenvalue: spec.min_raw,
        spectrum: spec.p,
        hermiticity_error: unit.hermiticity_error(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densmat::{Normalization, SliceGrid1D};
    use approx::assert_relative_eq;

    fn double_gaussian(n: usize, a: f64, lp: f64, lm: f64) -> DensityMatrixSlice {
        let g = SliceGrid1D::new(n, 3.0 * lp).unwrap();
        DensityMatrixSlice::from_fn(g, Normalization::Raw, |x, xp| {
            let (u, v) = (x + xp, x - xp);
            Complex64::new(a * (-u * u / (lp * lp) - v * v / (lm * lm)).exp(), 0.0)
        })
    }

    /// Eigenvalues of the double-Gaussian kernel form a geometric sequence
    /// `(1-q) q^k` with `q = B / (A + √(A²-B²))`, `A = 1/Λ₊² + 1/Λ₋²`,
    /// `B = 1/Λ₋² - 1/Λ₊²` (Mehler kernel).
    fn geometric_spectrum(lp: f64, lm: f64, count: usize) -> Vec<f64> {
        let a = 1.0 / (lp * lp) + 1.0 / (lm * lm);
        let b = 1.0 / (lm * lm) - 1.0 / (lp * lp);
        let q = b / (a + (a * a - b * b).sqrt());
        (0..count).map(|k| (1.0 - q) * q.powi(k as i32)).collect()
    }

    #[test]
    fn fit_recovers_exact_model() {
        let sl = double_gaussian(121, 2.5, 1.3e-5, 2.1e-6);
        let fit = fit_double_gaussian(&sl).unwrap();
        assert_relative_eq!(fit.amplitude, 2.5, epsilon = 0.0, max_relative = 1e-6);
        assert_relative_eq!(fit.lambda_plus, 1.3e-5, epsilon = 0.0, max_relative = 1e-6);
        assert_relative_eq!(fit.lambda_minus, 2.1e-6, epsilon = 0.0, max_relative = 1e-6);
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn fit_is_idempotent() {
        let sl = double_gaussian(101, 1.0, 1.0, 0.4);
        let first = fit_double_gaussian(&sl).unwrap();
        let refit = DensityMatrixSlice::from_fn(sl.grid, Normalization::Raw, |x, xp| {
            Complex64::new(first.eval(x, xp), 0.0)
        });
        let second = fit_double_gaussian(&refit).unwrap();
        assert_relative_eq!(first.lambda_plus, second.lambda_plus, epsilon = 0.0, max_relative = 1e-6);
        assert_relative_eq!(first.lambda_minus, second.lambda_minus, epsilon = 0.0, max_relative = 1e-6);
        assert_relative_eq!(first.amplitude, second.amplitude, epsilon = 0.0, max_relative = 1e-6);
    }

    #[test]
    fn fit_rejects_degenerate_and_non_hermitian() {
        let g = SliceGrid1D::new(11, 1.0).unwrap();
        let zero = DensityMatrixSlice::from_fn(g, Normalization::Raw, |_, _| Complex64::new(0.0, 0.0));
        assert!(matches!(fit_double_gaussian(&zero), Err(Error::CorruptedSlice(_))));
        let skew = DensityMatrixSlice::from_fn(g, Normalization::Raw, |x, xp| Complex64::new(1.0, x - 2.0 * xp));
        assert!(fit_double_gaussian(&skew).is_err());
    }

    #[test]
    fn ensemble_entropy_values() {
        let e = ensemble_entropy(1.0).unwrap();
        assert_eq!((e.n_eff, e.s_axis, e.s_total), (1.0, 0.0, 0.0));
        let e = ensemble_entropy(0.5).unwrap();
        assert_relative_eq!(e.s_axis, 2f64.ln(), epsilon = 0.0, max_relative = 1e-15);
        let e = ensemble_entropy(6e-2).unwrap();
        assert_relative_eq!(e.n_eff, 16.666_666_666_666_668, epsilon = 0.0, max_relative = 1e-14);
        assert!((e.s_axis - 17f64.ln()).abs() < 0.03);
        assert_eq!(e.s_total, 3.0 * e.s_axis);
        assert!(ensemble_entropy(0.0).is_err());
        assert!(ensemble_entropy(1.5).is_err());
    }

    #[test]
    fn rank_one_spectrum() {
        let g = SliceGrid1D::new(61, 4.0).unwrap();
        let f = |x: f64| Complex64::new(0.0, x).exp() * (-x * x / 2.0).exp();
        let sl = DensityMatrixSlice::from_fn(g, Normalization::Raw, |x, xp| f(x) * f(xp).conj());
        let spec = spectral_entropy(&sl).unwrap();
        assert_relative_eq!(spec.p[0], 1.0, epsilon = 0.0, max_relative = 1e-10);
        assert!(spec.entropy < 1e-8);
    }

    #[test]
    fn gaussian_kernel_spectrum_is_geometric() {
        let (lp, lm) = (1.0, 0.06);
        let sl = double_gaussian(401, 1.0, lp, lm);
        let spec = spectral_entropy(&sl).unwrap();
        for (got, want) in spec.p.iter().zip(geometric_spectrum(lp, lm, 10)) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!((spec.purity() - lm / lp).abs() < 1e-3);
        assert_relative_eq!(spec.purity(), purity(&sl).unwrap(), epsilon = 0.0, max_relative = 1e-10);
        let sum: f64 = spec.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-8);
    }

    #[test]
    fn naive_count_identity() {
        let fit = GaussianFit {
            amplitude: 1.0,
            lambda_plus: 2e-6,
            lambda_minus: 1e-7,
            rms_residual: 0.0,
            iterations: 1,
        };
        assert_eq!(naive_count(&fit, 2e-6).unwrap(), 1.0);
        assert!(naive_count(&fit, 0.0).is_err());
    }
}
