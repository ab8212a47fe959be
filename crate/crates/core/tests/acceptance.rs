//! Acceptance criteria, one test each. Every test writes a single verdict line
//! to stdout (bypassing the test harness capture) before asserting, so that a
//! full `cargo test` log shows the state of every criterion.
//!
//! The full-scale runs are shared between tests through `OnceLock`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use gravloc::analysis::{ensemble_entropy, spectral_entropy};
use gravloc::densmat::{purity, DensityMatrixSlice, Normalization, SliceGrid1D};
use gravloc::io::write_kernel_csv;
use gravloc::pipeline::{run, scaling_check_against, trace_state, Plan, RunConfig, RunOutcome};
use gravloc::potential::{
    harmonic_params, overlapping_branch, potential, separated_branch, PotentialModel, PotentialTable,
};
use gravloc::solver::{evolve, gaussian_state, initial_state, EvolveParams, RadialGrid, RadialState};
use gravloc::units::CGS;
use gravloc::Complex64;

// Tolerances and bands, as stated in the acceptance criteria.
const NORM_TOLERANCE: f64 = 1e-8;
const LAMBDA_MINUS_OVER_R: (f64, f64) = (1.3e-2, 2.3e-2);
const RATIO_BAND: (f64, f64) = (0.045, 0.09);
const PURITY_BAND: (f64, f64) = (0.04, 0.08);
const PURITY_AGREEMENT: f64 = 1e-3;
const CLOSED_FORM_PURITY: f64 = 1e-6;
const ENTROPY_TARGET_STATES: f64 = 17.0;
const ENTROPY_BAND: f64 = 0.4;
const CONTROL_WIDTH_EQUALITY: f64 = 2e-2;
const CONTROL_PURITY: f64 = 0.999;
const CONTROL_ENTROPY: f64 = 0.05;
const RICHARDSON_BAND: (f64, f64) = (3.6, 4.4);
const CONTINUITY: f64 = 1e-10;
const CURVATURE: f64 = 1e-4;
const STATIONARITY: f64 = 1e-3;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[acceptance] {id:>2} {name:<28} {verdict}  {detail}").unwrap();
    out.flush().unwrap();
}

fn in_band(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

fn gravity_run() -> &'static RunOutcome {
    static RUN: OnceLock<RunOutcome> = OnceLock::new();
    RUN.get_or_init(|| run(&Plan::from_config(&RunConfig::default()).unwrap()).unwrap())
}

fn control_run() -> &'static RunOutcome {
    static RUN: OnceLock<RunOutcome> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = RunConfig { gravity: false, ..RunConfig::default() };
        run(&Plan::from_config(&cfg).unwrap()).unwrap()
    })
}

#[test]
fn criterion_01_norm_conservation() {
    let out = gravity_run();
    let evo = out.evolution.as_ref().unwrap();
    let drift = (evo.state.norm_sqr() - 1.0).abs();
    let pass = drift < NORM_TOLERANCE && evo.steps_taken == 100_000 && out.plan.grid.n_points == 10_000;
    report(1, "norm conservation", pass, &format!("|norm - 1| = {drift:.3e} after {} steps", evo.steps_taken));
    assert!(pass);
}

#[test]
fn criterion_02_localization_lengths() {
    let out = gravity_run();
    let fit = &out.report.fit;
    let radius = out.plan.setup.radius();
    let lm = fit.lambda_minus / radius;
    let ratio = fit.ratio();
    let pass = in_band(lm, LAMBDA_MINUS_OVER_R) && in_band(ratio, RATIO_BAND);
    report(
        2,
        "localization lengths",
        pass,
        &format!(
            "Lambda-/R = {lm:.4e} (band {:?}), Lambda-/Lambda+ = {ratio:.4} (band {:?}), Lambda+/R = {:.4}",
            LAMBDA_MINUS_OVER_R,
            RATIO_BAND,
            fit.lambda_plus / radius
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_purity() {
    let r = &gravity_run().report;
    let band = in_band(r.purity, PURITY_BAND);
    let agreement = (r.spectral_purity / r.purity - 1.0).abs();
    let agree = agreement < PURITY_AGREEMENT;
    report(
        3,
        "purity",
        band && agree,
        &format!(
            "Tr rho^2 = {:.6} (band {:?}: {}), integral vs spectral {agreement:.2e} (< {PURITY_AGREEMENT:e}: {})",
            r.purity,
            PURITY_BAND,
            if band { "ok" } else { "out" },
            if agree { "ok" } else { "out" }
        ),
    );
    assert!(band && agree);
}

#[test]
fn criterion_04_closed_form_purity() {
    // the analytic double-Gaussian kernel at the quoted widths
    let (lp, lm) = (1.3e-5, 1.3e-5 * 0.067);
    let grid = SliceGrid1D::new(401, 3.0 * lp).unwrap();
    let sl = DensityMatrixSlice::from_fn(grid, Normalization::Raw, |x, xp| {
        let (u, v) = (x + xp, x - xp);
        Complex64::new((-u * u / (lp * lp) - v * v / (lm * lm)).exp(), 0.0)
    });
    let p = purity(&sl).unwrap();
    let err = (p / (lm / lp) - 1.0).abs();
    let pass = err < CLOSED_FORM_PURITY;
    report(4, "closed-form purity", pass, &format!("purity = {p:.10}, Lambda-/Lambda+ = {:.10}, rel err {err:.2e}", lm / lp));
    assert!(pass);
}

#[test]
fn criterion_05_entropy() {
    let r = &gravity_run().report;
    let target = ENTROPY_TARGET_STATES.ln();
    let near = (r.s_spectral - target).abs() <= ENTROPY_BAND;
    let ens = ensemble_entropy(r.purity.min(1.0)).unwrap();
    let exact = ens.s_total == 3.0 * ens.s_axis && r.s_total == 3.0 * r.s_axis;
    report(
        5,
        "entropy",
        near && exact,
        &format!(
            "S_spectral = {:.4} nats (target {target:.4} +/- {ENTROPY_BAND}), S_axis = {:.4}, S_total = 3 S_axis: {exact}",
            r.s_spectral, r.s_axis
        ),
    );
    assert!(near && exact);
}

#[test]
fn criterion_06_control_run() {
    let r = &control_run().report;
    let ratio = r.fit.ratio();
    let pass = (ratio - 1.0).abs() <= CONTROL_WIDTH_EQUALITY && r.purity > CONTROL_PURITY && r.s_spectral < CONTROL_ENTROPY;
    report(
        6,
        "gravity-free control",
        pass,
        &format!(
            "Lambda+ = {:.4e}, Lambda- = {:.4e} (ratio {ratio:.5}), purity = {:.6}, S_spectral = {:.2e}",
            r.fit.lambda_plus, r.fit.lambda_minus, r.purity, r.s_spectral
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_scaling() {
    let s = scaling_check_against(gravity_run(), 32.0).unwrap();
    report(
        7,
        "scaling lambda = 32",
        s.pass,
        &format!(
            "Lambda+ x{:.6}, Lambda- x{:.6} (expect x{:.6}), purity deviation {:.2e}",
            s.lambda_plus_ratio, s.lambda_minus_ratio, s.expected_length_ratio, s.purity_deviation
        ),
    );
    assert!(s.pass);
}

fn l2(a: &RadialState, b: &RadialState) -> f64 {
    (a.u.iter().zip(&b.u).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * a.grid.dr).sqrt()
}

#[test]
fn criterion_08_solver_order() {
    // Reference setup over the full 10 s, ladder starting at the production step
    // count. The wall cuts the initial Gaussian, and that jump feeds stiff
    // modes whose error falls off slower than dt²; the harmonic ground state
    // on the same grid is smooth and shows the scheme's own order.
    let setup = RunConfig::default().setup().unwrap();
    let grid = RadialGrid::new(10_000, setup.radius() / 2.0).unwrap();
    let table = PotentialTable::new(&setup, &grid, PotentialModel::Full);
    let ladder = |init: &RadialState, base: usize| {
        let at = |n: usize| {
            let p = EvolveParams { t_final: 10.0, n_steps: n, checkpoint_every: 0 };
            evolve(&table, init, &p).unwrap().0.state
        };
        let (a, b, c) = (at(base), at(2 * base), at(4 * base));
        l2(&a, &b) / l2(&b, &c)
    };
    let ratio = ladder(&initial_state(&setup, &grid).unwrap(), 100_000);
    let (ground, _) = gaussian_state(&grid, harmonic_params(&setup).ground_width).unwrap();
    let smooth = ladder(&ground, 10_000);
    let pass = in_band(ratio, RICHARDSON_BAND);
    report(
        8,
        "solver order (Richardson)",
        pass,
        &format!("ratio = {ratio:.4} for N = 1e5/2e5/4e5 over 10 s; smooth ground state, N = 1e4/2e4/4e4: {smooth:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_potential_checks() {
    let s = RunConfig::default().setup().unwrap();
    let (m, r) = (s.mass(), s.radius());
    let scale = CGS.g * m * m / r;
    let gap = (overlapping_branch(m, r, 2.0 * r) - separated_branch(m, 2.0 * r)).abs() / scale;
    let eps = 1e-8 * r;
    let one_sided = (potential(&s, 2.0 * r - eps).unwrap() - potential(&s, 2.0 * r + eps).unwrap()).abs() / scale;
    let v0 = potential(&s, 0.0).unwrap() / scale;
    let expect = 2.0 * harmonic_params(&s).quadratic_coefficient;
    // V is even in r, so the centred stencil at the origin folds onto V(h)
    let h = 1e-4 * r;
    let fd0 = 2.0 * (potential(&s, h).unwrap() - potential(&s, 0.0).unwrap()) / (h * h);
    let curv = (fd0 / expect - 1.0).abs();
    // off the origin the cubic term bends V'' away from 2k by 9x/8R
    let x = 1e-3 * r;
    let fd = (potential(&s, x + h).unwrap() - 2.0 * potential(&s, x).unwrap() + potential(&s, x - h).unwrap()) / (h * h);
    let curv_off = (fd / expect - 1.0).abs();
    let pass = gap < CONTINUITY && (v0 + 0.6).abs() < 1e-12 && curv < CURVATURE;
    report(
        9,
        "potential checks",
        pass,
        &format!(
            "branch gap at 2R = {gap:.2e} GM²/R, V(0) = {v0:.15} GM²/R, curvature at origin rel err {curv:.2e}; \
             at 1e-3 R rel err {curv_off:.2e} (9/8 x 1e-3 from the cubic term); \
             one-sided gap at 1e-8 R = {one_sided:.2e} GM²/R (slope GM²/8R² x 2e-8 R = 2.5e-9)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_stationarity() {
    let s = RunConfig::default().setup().unwrap();
    let hp = harmonic_params(&s);
    let grid = RadialGrid::new(10_000, s.radius() / 2.0).unwrap();
    let table = PotentialTable::new(&s, &grid, PotentialModel::Harmonic);
    let (ground, _) = gaussian_state(&grid, hp.ground_width).unwrap();
    let drift = |t_final: f64| {
        let p = EvolveParams { t_final, n_steps: 100, checkpoint_every: 0 };
        let st = evolve(&table, &ground, &p).unwrap().0.state;
        let num: f64 = st.u.iter().zip(&ground.u).map(|(a, b)| (a.norm() - b.norm()).powi(2)).sum();
        let den: f64 = ground.u.iter().map(|z| z.norm_sqr()).sum();
        (num / den).sqrt()
    };
    let production = drift(100.0 * 1e-4);
    let period = drift(2.0 * PI / hp.omega);
    let pass = production < STATIONARITY && period < STATIONARITY;
    report(
        10,
        "harmonic stationarity",
        pass,
        &format!("|u| drift over 100 steps: {production:.2e} at dt = 1e-4 s, {period:.2e} across one period"),
    );
    assert!(pass);
}

#[test]
fn criterion_11_determinism() {
    let out = gravity_run();
    let state = &out.evolution.as_ref().unwrap().state;
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let (slice, _) = pool.install(|| trace_state(&out.plan, state)).unwrap();
        let mut buf = Vec::new();
        write_kernel_csv(&slice, &mut buf).unwrap();
        buf
    };
    let mut reference = Vec::new();
    write_kernel_csv(&out.slice, &mut reference).unwrap();
    let one = csv(1);
    let four = csv(4);
    let pass = one == reference && four == reference;
    report(
        11,
        "determinism",
        pass,
        &format!("kernel CSV ({} bytes) identical for default, 1 and 4 worker threads: {pass}", reference.len()),
    );
    assert!(pass);
}

#[test]
fn observation_spectral_entropy_matches_ensemble() {
    // not a criterion: records how the two entropy definitions compare on the reference run
    let r = &gravity_run().report;
    let spec = spectral_entropy(&gravity_run().slice.to_unit_trace().unwrap()).unwrap();
    report(
        0,
        "observation",
        true,
        &format!(
            "reference run: N = {:.4}, S_axis = {:.4e}, S_spectral = {:.4e}, p_0 = {:.6}, naive count = {:.3}",
            r.n_eff, r.s_axis, spec.entropy, spec.p[0], r.naive_count
        ),
    );
}
