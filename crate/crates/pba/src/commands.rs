//! `generate`, `solve` and `gradcheck`.

use std::io::Write;
use std::path::Path;

use pba_core::gradcheck::{run_gradcheck, GradcheckConfig, GradcheckReport};
use pba_core::metrics::{param_errors, ParamErrors};
use pba_core::solver::{Method, Params, SolveStatus, Warning};
use pba_core::synth::{perturb_parameters, render_sequence, rendering_consistency, Scene};
use pba_core::{
    fc_solve, ic_solve, Clock, NoClock, PatchPattern, ProblemState, SolveReport, StdClock,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverChoice};
use crate::io::{self, ConsistencyEntry, MetricsRow};
use crate::{CliError, Outcome};

fn say(out: &mut dyn Write, line: String) {
    // Progress output is best effort.
    let _ = writeln!(out, "{line}");
}

/// Renders the configured scene into `config.out`.
pub fn generate(config: &ExperimentConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    config.validate()?;
    let spec = config.scene.to_spec(!config.deterministic)?;
    let scene = render_sequence(&spec)?;
    let patterns = [
        ("1x1".to_owned(), PatchPattern::single()),
        (
            patch_label(spec.patch_radius),
            PatchPattern::square(spec.patch_radius),
        ),
    ];
    let mut consistency = Vec::new();
    for (label, pattern) in patterns {
        let (mean, max) = rendering_consistency(&scene, pattern)?;
        say(
            out,
            format!("rendering consistency ({label}): mean |r| {mean:.3e}, max |r| {max:.3e}"),
        );
        consistency.push(ConsistencyEntry {
            pattern: label,
            mean_abs_residual: mean,
            max_abs_residual: max,
        });
    }
    io::write_scene(&config.out, &scene, spec.patch_radius, consistency)?;
    say(
        out,
        format!(
            "wrote {} frames, {} points to {}",
            scene.frames(),
            scene.anchors.len(),
            config.out.display()
        ),
    );
    Ok(Outcome::Success)
}

fn patch_label(radius: u32) -> String {
    let side = 2 * radius + 1;
    format!("{side}x{side}")
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalReport {
    pub method: &'static str,
    pub status: &'static str,
    pub converged: bool,
    pub iterations: usize,
    pub hessian_builds: usize,
    pub hessian_factorizations: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub total_ms: f64,
    pub rot_rms: f64,
    pub trans_rms: f64,
    pub idepth_rms: f64,
    pub warnings: Vec<String>,
    /// Frames `1..F`, row-major 4×4, scale-normalized.
    pub poses: Vec<[f64; 16]>,
    pub inv_depths: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub method: &'static str,
    pub status: &'static str,
    pub iterations: usize,
    pub final_energy: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub sigma: f64,
    pub seed: u64,
    pub runs: Vec<RunSummary>,
    /// IC over FC solver time; absent when timings are disabled.
    pub ic_over_fc_time: Option<f64>,
    /// `|E_ic − E_fc| / E_fc` at the final iterates.
    pub final_energy_rel_diff: f64,
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "max_iterations",
        SolveStatus::Diverged => "diverged",
    }
}

fn warning_text(w: &Warning) -> String {
    match w {
        Warning::ZeroInitialTranslation { frame } => {
            format!("frame {} has zero initial translation", frame + 1)
        }
        Warning::UnobservableDepth { point } => {
            format!("inverse depth of point {point} is unobservable")
        }
    }
}

/// Per-iteration metrics of a solve against the ground truth.
pub fn metrics_rows(report: &SolveReport, truth: &Params) -> Vec<MetricsRow> {
    report
        .records
        .iter()
        .zip(&report.snapshots)
        .map(|(rec, snap)| {
            let e = param_errors(
                &Params {
                    poses: snap.poses.clone(),
                    inv_depths: snap.inv_depths.clone(),
                },
                truth,
            );
            MetricsRow {
                iter: rec.iteration,
                energy: rec.energy,
                rot_rms: e.rotation,
                trans_rms: e.translation,
                idepth_rms: e.inv_depth,
                wall_ms: rec.wall_ms,
                hessian_builds: rec.hessian_builds,
                hessian_factorizations: rec.hessian_factorizations,
            }
        })
        .collect()
}

fn final_report(report: &SolveReport, state: &ProblemState, errors: &ParamErrors) -> FinalReport {
    FinalReport {
        method: report.method.short_name(),
        status: status_name(report.status),
        converged: report.converged(),
        iterations: report.iterations,
        hessian_builds: report.hessian_builds,
        hessian_factorizations: report.hessian_factorizations,
        initial_energy: report.initial_energy(),
        final_energy: report.final_energy(),
        total_ms: report.total_ms,
        rot_rms: errors.rotation,
        trans_rms: errors.translation,
        idepth_rms: errors.inv_depth,
        warnings: report.warnings.iter().map(warning_text).collect(),
        poses: state.poses.iter().map(|p| p.to_row_major()).collect(),
        inv_depths: state.inv_depths.clone(),
    }
}

/// Runs one solver from `init` and writes its metrics and final parameters.
fn solve_one(
    method: Method,
    scene: &Scene,
    init: &Params,
    pattern: &PatchPattern,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<SolveReport, CliError> {
    let truth = scene.ground_truth();
    let mut state = scene.problem(init, pattern.clone())?;
    let solver = config.solver_config()?;
    let clock: Box<dyn Clock> = if config.deterministic {
        Box::new(NoClock)
    } else {
        Box::new(StdClock::default())
    };
    let report = match method {
        Method::ForwardsCompositional => fc_solve(&mut state, &solver, clock.as_ref())?,
        Method::InverseCompositional => ic_solve(&mut state, &solver, clock.as_ref())?,
    };
    let name = method.short_name();
    io::write_metrics(
        &io::output_path(dir, &format!("metrics_{name}.csv"))?,
        &metrics_rows(&report, &truth),
    )?;
    let errors = param_errors(&state.params(), &truth);
    io::write_json(
        &dir.join(format!("final_{name}.json")),
        &final_report(&report, &state, &errors),
    )?;
    Ok(report)
}

/// Perturbs the ground truth of the scene directory and runs the selected
/// solvers from the same initialization.
pub fn solve(config: &ExperimentConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    config.validate()?;
    let (scene, file) = io::read_scene(config.scene_dir())?;
    let init = perturb_parameters(&scene.ground_truth(), config.sigma, config.seed)?;
    let pattern = PatchPattern::square(file.patch_radius);
    let methods: &[Method] = match config.solver {
        SolverChoice::Fc => &[Method::ForwardsCompositional],
        SolverChoice::Ic => &[Method::InverseCompositional],
        SolverChoice::Both => &[Method::ForwardsCompositional, Method::InverseCompositional],
    };
    let mut runs = Vec::new();
    for &method in methods {
        let report = solve_one(method, &scene, &init, &pattern, config, &config.out)?;
        say(
            out,
            format!(
                "{}: {} after {} iterations, energy {:.6e} -> {:.6e}, {} Hessian builds, {} factorizations, {:.1} ms",
                method.short_name(),
                status_name(report.status),
                report.iterations,
                report.initial_energy(),
                report.final_energy(),
                report.hessian_builds,
                report.hessian_factorizations,
                report.total_ms
            ),
        );
        for w in &report.warnings {
            say(
                out,
                format!("{}: warning: {}", method.short_name(), warning_text(w)),
            );
        }
        runs.push(report);
    }
    if let [fc, ic] = runs.as_slice() {
        let ratio = (!config.deterministic && fc.total_ms > 0.0).then(|| ic.total_ms / fc.total_ms);
        let summary = PairSummary {
            sigma: config.sigma,
            seed: config.seed,
            runs: runs
                .iter()
                .map(|r| RunSummary {
                    method: r.method.short_name(),
                    status: status_name(r.status),
                    iterations: r.iterations,
                    final_energy: r.final_energy(),
                    total_ms: r.total_ms,
                })
                .collect(),
            ic_over_fc_time: ratio,
            final_energy_rel_diff: (ic.final_energy() - fc.final_energy()).abs()
                / fc.final_energy(),
        };
        if let Some(ratio) = ratio {
            say(out, format!("ic/fc solver time: {ratio:.3}"));
        }
        io::write_json(&config.out.join("summary.json"), &summary)?;
    }
    if runs.iter().any(|r| r.status == SolveStatus::Diverged) {
        return Ok(Outcome::Diverged);
    }
    Ok(Outcome::Success)
}

/// Prints the finite-difference comparison and the degeneracy table.
pub fn gradcheck(config: &GradcheckConfig, out: &mut dyn Write) -> Outcome {
    let report = run_gradcheck(config);
    print_gradcheck(&report, out);
    if report.passed() {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    }
}

fn print_gradcheck(report: &GradcheckReport, out: &mut dyn Write) {
    say(out, format!("tolerance {:e}", report.tolerance));
    say(
        out,
        format!(
            "{:<22} {:>8} {:>14}  result",
            "jacobian", "samples", "max rel err"
        ),
    );
    for c in &report.checks {
        say(
            out,
            format!(
                "{:<22} {:>8} {:>14.3e}  {}",
                c.name,
                c.samples,
                c.max_rel_error,
                if c.passed { "pass" } else { "FAIL" }
            ),
        );
    }
    say(out, String::new());
    say(
        out,
        format!(
            "{:<28} {:>10} {:>14}  status",
            "case", "|t0|", "|depth col|"
        ),
    );
    for row in &report.degeneracy {
        say(
            out,
            format!(
                "{:<28} {:>10.3e} {:>14.3e}  {}",
                row.case,
                row.translation_norm,
                row.depth_column_norm,
                row.status.label()
            ),
        );
    }
}
