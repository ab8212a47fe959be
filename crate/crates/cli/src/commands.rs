use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde_json::json;

use gravloc::analysis::{analyze as analyze_slice, spectral_entropy, LocalizationReport};
use gravloc::densmat::{purity, DensityMatrixSlice, QuadratureSpec, SliceGrid1D};
use gravloc::io::{self, CheckpointMeta, KernelMeta};
use gravloc::pipeline::{
    expected_lambda_plus, free_slice, scaling_check as run_scaling_check, trace_state, CheckpointSummary, Plan,
    RunConfig, Timings,
};
use gravloc::potential::{harmonic_params, PotentialModel, PotentialTable};
use gravloc::solver::{evolve_with, gaussian_state, RadialState};
use gravloc::units::{threshold_mass, CGS};
use gravloc::PhysicalSetup;

use crate::manifest::{Failure, Manifest};
use crate::{plot, CheckFailed};

fn derived(cfg: &RunConfig, setup: &PhysicalSetup) -> Result<serde_json::Value> {
    let h = harmonic_params(setup);
    let m_t = threshold_mass(setup.density())?;
    Ok(json!({
        "mass_g": setup.mass(),
        "mass_mp": setup.mass_in_proton_masses(),
        "radius_cm": setup.radius(),
        "density_g_cm3": setup.density(),
        "density_mp_cm3": setup.density() / CGS.m_p,
        "lambda_g_formula_cm": setup.lambda_g(),
        "lambda_g_reference_cm": cfg.lambda_g_ref,
        "lambda0_cm": setup.lambda0(),
        "lambda_g_over_radius": setup.lambda_g() / setup.radius(),
        "tau_g_s": setup.tau_g(),
        "threshold_mass_g": m_t,
        "threshold_mass_mp": m_t / CGS.m_p,
        "mass_over_threshold": setup.mass() / m_t,
        "omega_per_s": h.omega,
        "harmonic_period_s": 2.0 * std::f64::consts::PI / h.omega,
        "harmonic_ground_width_cm": h.ground_width,
    }))
}

pub fn derive(cfg: &RunConfig) -> Result<()> {
    let setup = cfg.setup()?;
    let d = derived(cfg, &setup)?;
    let rows: [(&str, &str, &str); 14] = [
        ("M", "mass_g", "g"),
        ("M / m_p", "mass_mp", ""),
        ("R", "radius_cm", "cm"),
        ("rho", "density_g_cm3", "g/cm^3"),
        ("rho / m_p", "density_mp_cm3", "cm^-3"),
        ("Lambda_G (closed form)", "lambda_g_formula_cm", "cm"),
        ("Lambda_G (reference)", "lambda_g_reference_cm", "cm"),
        ("Lambda (initial width)", "lambda0_cm", "cm"),
        ("Lambda_G / R", "lambda_g_over_radius", ""),
        ("tau_g", "tau_g_s", "s"),
        ("M_t", "threshold_mass_g", "g"),
        ("M_t / m_p", "threshold_mass_mp", ""),
        ("omega", "omega_per_s", "1/s"),
        ("harmonic ground width", "harmonic_ground_width_cm", "cm"),
    ];
    for (label, key, unit) in rows {
        let v = match d[key].as_f64() {
            Some(v) => format!("{v:.6e}"),
            None => "-".into(),
        };
        println!("{label:<24} {v:>14} {unit}");
    }
    Ok(())
}

fn prepare_dir(root: &Path, name: &str) -> Result<PathBuf> {
    let dir = root.join(name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Tracks the current stage so that a failure can be reported against it.
struct Stages {
    current: &'static str,
    files: Vec<PathBuf>,
    timings: Timings,
    clock: Instant,
}

impl Stages {
    fn new() -> Self {
        Self {
            current: "setup",
            files: Vec::new(),
            timings: Timings::default(),
            clock: Instant::now(),
        }
    }

    fn enter(&mut self, stage: &'static str) {
        let elapsed = self.clock.elapsed().as_secs_f64();
        match self.current {
            "setup" => self.timings.setup += elapsed,
            "evolve" => self.timings.evolve += elapsed,
            "trace" => self.timings.trace += elapsed,
            _ => self.timings.analyze += elapsed,
        }
        self.current = stage;
        self.clock = Instant::now();
    }
}

/// Runs `body`, then writes the manifest whether or not it succeeded.
fn with_manifest(
    dir: &Path,
    mut manifest: Manifest,
    body: impl FnOnce(&mut Stages, &mut Manifest) -> Result<()>,
) -> Result<()> {
    let mut stages = Stages::new();
    let result = body(&mut stages, &mut manifest);
    let stage = stages.current;
    stages.enter("done");
    manifest.timings = stages.timings;
    manifest.complete = result.is_ok();
    if let Err(e) = &result {
        manifest.failure = Some(Failure {
            stage,
            message: format!("{e:#}"),
        });
    }
    let path = manifest.finish(dir, stages.files)?;
    result.with_context(|| format!("stage {stage} failed; partial outputs listed in {}", path.display()))?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn kernel_meta(slice: &DensityMatrixSlice, quad: &QuadratureSpec, t: f64, plan: &Plan, gravity: bool) -> KernelMeta {
    KernelMeta {
        grid: slice.grid,
        normalization: slice.normalization,
        quadrature: Some(*quad),
        t,
        radius: plan.setup.radius(),
        lambda_g: plan.lambda_g,
        gravity,
        trace: slice.trace(),
        hermiticity_error: slice.hermiticity_error(),
    }
}

fn report_diagnostics(report: &LocalizationReport) -> serde_json::Value {
    json!({
        "fit_iterations": report.fit.iterations,
        "fit_rms_residual": report.fit.rms_residual,
        "hermiticity_error": report.hermiticity_error,
        "min_eigenvalue": report.min_eigenvalue,
        "purity_integral_vs_spectral": (report.spectral_purity / report.purity - 1.0).abs(),
    })
}

fn print_report(report: &LocalizationReport, radius: f64) {
    let f = &report.fit;
    println!(
        "Lambda+ = {:.4e} cm ({:.4} R)  Lambda- = {:.4e} cm ({:.4} R)  ratio = {:.4}",
        f.lambda_plus,
        f.lambda_plus / radius,
        f.lambda_minus,
        f.lambda_minus / radius,
        f.ratio()
    );
    println!(
        "purity = {:.6}  N = {:.3}  S_axis = {:.4}  S_total = {:.4}  S_spectral = {:.4}  naive count = {:.3}",
        report.purity, report.n_eff, report.s_axis, report.s_total, report.s_spectral, report.naive_count
    );
}

fn write_plots(
    dir: &Path,
    stem: &str,
    radius: f64,
    slice: &DensityMatrixSlice,
    report: &LocalizationReport,
    chi: Option<(&RadialState, &RadialState)>,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let unit = slice.to_unit_trace()?;
    if let Some((a, b)) = chi {
        files.push(plot::write_chi(dir, radius, a, b)?);
    }
    files.push(plot::write_surface(dir, stem, radius, &unit)?);
    files.extend(plot::write_sections(dir, stem, radius, &unit, &report.fit)?);
    files.push(plot::write_script(dir, stem, chi.is_some())?);
    Ok(())
}

pub fn run(cfg: &RunConfig, root: &Path, name: &str) -> Result<()> {
    let dir = prepare_dir(root, name)?;
    let manifest = Manifest::new(name, cfg);
    with_manifest(&dir, manifest, |st, man| {
        let plan = Plan::from_config(cfg)?;
        let setup = plan.setup;
        man.derived = derived(cfg, &setup)?;
        let (initial, tail) = gaussian_state(&plan.grid, setup.lambda0())?;
        let model = if plan.gravity { plan.potential } else { PotentialModel::Free };
        let table = PotentialTable::new(&setup, &plan.grid, model);
        let pot = dir.join("potential.csv");
        table.write_csv(BufWriter::new(File::create(&pot)?))?;
        st.files.push(pot);

        let stem = if plan.gravity { "gravity" } else { "free" };
        let mut diag = json!({ "truncated_tail": tail, "gravity": plan.gravity });
        let (slice, quad, last) = if plan.gravity {
            st.enter("evolve");
            let cp_dir = dir.join("checkpoints");
            fs::create_dir_all(&cp_dir)?;
            let dt = plan.evolve.t_final / plan.evolve.n_steps as f64;
            let save = |step: usize, state: &RadialState, files: &mut Vec<PathBuf>| -> gravloc::Result<()> {
                let meta = CheckpointMeta {
                    setup,
                    grid: plan.grid,
                    model,
                    t: state.t,
                    step,
                    n_steps: plan.evolve.n_steps,
                    dt,
                    norm_drift: state.norm_sqr() - 1.0,
                };
                let path = cp_dir.join(format!("step_{step:09}.csv"));
                files.extend(io::save_checkpoint(&path, state, &meta)?);
                Ok(())
            };
            save(0, &initial, &mut st.files)?;
            let mut states = Vec::new();
            let evo = evolve_with(&table, &initial, &plan.evolve, |step, state| {
                save(step, state, &mut st.files)?;
                if plan.trace_checkpoints {
                    states.push((step, state.clone()));
                }
                Ok(())
            })?;
            diag["norm_drift"] = json!(evo.norm_drift);
            diag["dt"] = json!(evo.dt);
            diag["steps"] = json!(evo.steps_taken);
            println!("evolved {} steps, norm drift {:.3e}", evo.steps_taken, evo.norm_drift);

            st.enter("trace");
            let (slice, quad) = trace_state(&plan, &evo.state)?;
            if plan.trace_checkpoints {
                let mut rows = String::from("step,t,purity,s_spectral\n");
                let mut summaries: Vec<CheckpointSummary> = Vec::new();
                for (step, state) in &states {
                    let (sl, _) = trace_state(&plan, state)?;
                    let unit = sl.to_unit_trace()?;
                    let s = CheckpointSummary {
                        step: *step,
                        t: state.t,
                        purity: purity(&unit)?,
                        s_spectral: spectral_entropy(&unit)?.entropy,
                    };
                    rows += &format!("{},{:.16e},{:.16e},{:.16e}\n", s.step, s.t, s.purity, s.s_spectral);
                    summaries.push(s);
                }
                let monotone = summaries.windows(2).all(|w| w[1].s_spectral >= w[0].s_spectral - 1e-3);
                diag["entropy_non_decreasing"] = json!(monotone);
                let path = dir.join("checkpoint_entropy.csv");
                fs::write(&path, rows)?;
                st.files.push(path);
            }
            (slice, quad, Some(evo.state))
        } else {
            st.enter("trace");
            let (slice, quad) = free_slice(&plan, plan.evolve.t_final)?;
            (slice, quad, None)
        };
        diag["quadrature"] = serde_json::to_value(quad)?;
        let kpath = dir.join("kernel.csv");
        st.files.extend(io::save_kernel(&kpath, &slice, &kernel_meta(&slice, &quad, plan.evolve.t_final, &plan, plan.gravity))?);

        st.enter("analyze");
        let report = analyze_slice(&slice, plan.lambda_g)?;
        st.files.extend(io::save_report(&dir.join("report.json"), &report)?);
        if let serde_json::Value::Object(extra) = report_diagnostics(&report) {
            diag.as_object_mut().unwrap().extend(extra);
        }
        man.diagnostics = diag;
        print_report(&report, setup.radius());

        st.enter("plot");
        let chi = last.as_ref().map(|s| (&initial, s));
        write_plots(&dir, stem, setup.radius(), &slice, &report, chi, &mut st.files)?;
        Ok(())
    })
}

pub fn trace(cfg: &RunConfig, root: &Path, checkpoint: &Path) -> Result<()> {
    let dir = prepare_dir(root, "trace")?;
    with_manifest(&dir, Manifest::new("trace", cfg), |st, man| {
        let (state, meta) = io::load_checkpoint(checkpoint)
            .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
        let mut plan = Plan::from_config(cfg)?;
        plan.setup = meta.setup;
        plan.grid = meta.grid;
        let x_max = cfg.slice_extent * expected_lambda_plus(&meta.setup, meta.t)?;
        plan.slice = SliceGrid1D::new(cfg.slice_n, x_max)?;
        man.derived = derived(cfg, &meta.setup)?;
        st.enter("trace");
        let (slice, quad) = trace_state(&plan, &state)?;
        let kpath = dir.join("kernel.csv");
        st.files.extend(io::save_kernel(&kpath, &slice, &kernel_meta(&slice, &quad, meta.t, &plan, meta.model != PotentialModel::Free))?);
        man.diagnostics = json!({
            "checkpoint": checkpoint.display().to_string(),
            "step": meta.step,
            "t": meta.t,
            "quadrature": quad,
            "hermiticity_error": slice.hermiticity_error(),
        });
        println!("kernel: {}", kpath.display());
        Ok(())
    })
}

pub fn analyze(cfg: &RunConfig, root: &Path, kernel: &Path, lambda_g: Option<f64>) -> Result<()> {
    let dir = prepare_dir(root, "analyze")?;
    with_manifest(&dir, Manifest::new("analyze", cfg), |st, man| {
        let (slice, meta) =
            io::load_kernel(kernel).with_context(|| format!("loading kernel {}", kernel.display()))?;
        st.enter("analyze");
        let report = analyze_slice(&slice, lambda_g.unwrap_or(meta.lambda_g))?;
        st.files.extend(io::save_report(&dir.join("report.json"), &report)?);
        let mut diag = report_diagnostics(&report);
        diag["kernel"] = json!(kernel.display().to_string());
        man.diagnostics = diag;
        print_report(&report, meta.radius);
        st.enter("plot");
        let stem = if meta.gravity { "gravity" } else { "free" };
        write_plots(&dir, stem, meta.radius, &slice, &report, None, &mut st.files)?;
        Ok(())
    })
}

pub fn scaling_check(cfg: &RunConfig, root: &Path, lambda: f64) -> Result<()> {
    let dir = prepare_dir(root, "scaling-check")?;
    with_manifest(&dir, Manifest::new("scaling-check", cfg), |st, man| {
        let plan = Plan::from_config(cfg)?;
        man.derived = derived(cfg, &plan.setup)?;
        st.enter("evolve");
        let report = run_scaling_check(&plan, lambda)?;
        st.enter("analyze");
        let path = dir.join("scaling.json");
        io::write_json(&report, &path)?;
        st.files.push(path);
        man.diagnostics = serde_json::to_value(&report)?;
        println!(
            "lambda = {lambda}: Lambda+ x{:.5}, Lambda- x{:.5} (expected x{:.5}), purity deviation {:.2e} -> {}",
            report.lambda_plus_ratio,
            report.lambda_minus_ratio,
            report.expected_length_ratio,
            report.purity_deviation,
            if report.pass { "PASS" } else { "FAIL" }
        );
        if !report.pass {
            return Err(anyhow!(CheckFailed(format!("scaling by {lambda} outside tolerance"))));
        }
        Ok(())
    })
}
