mod common;

use nalgebra::{DMatrix, DVector, Vector2};

use pba_core::solver::{build_ic_system, LinearSolver, Params, SolveStatus, Warning};
use pba_core::synth::{perturb_parameters, render_sequence, Scene, Trajectory};
use pba_core::*;

fn tiny_scene(frames: usize, points: usize) -> Scene {
    let spec = synth::SceneSpec {
        trajectory: Trajectory::Orbit {
            frames: frames + 1,
            extent_deg: 6.0,
        },
        points,
        min_spacing: 20.0,
        ..common::small_spec()
    };
    render_sequence(&spec).unwrap()
}

fn tiny_problem(frames: usize, points: usize, pattern: PatchPattern, sigma: f64) -> ProblemState {
    let scene = tiny_scene(frames, points);
    let init = perturb_parameters(&scene.ground_truth(), sigma, 3).unwrap();
    scene.problem(&init, pattern).unwrap()
}

/// Template pixels of `state` in residual order, `None` where the reference
/// gradient footprint leaves the image.
fn template_pixels(state: &ProblemState) -> Vec<Option<(Vector2<f64>, f64)>> {
    let k = state.reference.intrinsics();
    let mut out = Vec::new();
    for anchor in &state.anchors {
        for o in state.pattern.offsets() {
            let (u, v) = (anchor.x + o[0] as f64, anchor.y + o[1] as f64);
            let x = k.to_normalized(u, v);
            let ok = state.reference.gradient(&x).is_ok();
            out.push(ok.then(|| (x, state.reference.sample(&x).unwrap())));
        }
    }
    out
}

/// Residual `I₀(x) − I_f(W(x; p))` for every (frame, point, offset), by
/// direct loops over the parameters.
fn naive_residuals(state: &ProblemState) -> Vec<Option<f64>> {
    let pixels = template_pixels(state);
    let k = state.pattern.len();
    let mut out = Vec::new();
    for (f, target) in state.targets.iter().enumerate() {
        for n in 0..state.points() {
            for i in 0..k {
                let r = pixels[n * k + i].and_then(|(x, i0)| {
                    let y = project_warp(&x, &state.poses[f], state.inv_depths[n]).ok()?;
                    Some(i0 - target.sample(&y).ok()?)
                });
                out.push(r);
            }
        }
    }
    out
}

#[test]
fn energy_matches_a_naive_double_loop() {
    for pattern in [PatchPattern::single(), PatchPattern::square(1)] {
        let state = tiny_problem(2, 3, pattern, 2e-3);
        let huber = HuberLoss::default();
        let set = energy_eval(&state, &huber).unwrap();
        let naive = naive_residuals(&state);
        let mut energy = 0.0;
        for (i, r) in naive.iter().enumerate() {
            assert_eq!(set.valid[i], r.is_some());
            if let Some(r) = r {
                assert!((set.values[i] - r).abs() < 1e-15);
                energy += huber.loss(*r);
            }
        }
        assert!(
            (set.energy - energy).abs() < 1e-12,
            "{} vs {}",
            set.energy,
            energy
        );
    }
}

#[test]
fn identical_images_give_zero_energy() {
    let mut state = tiny_problem(2, 3, PatchPattern::default(), 0.0);
    for t in &mut state.targets {
        *t = state.reference.clone();
    }
    for p in &mut state.poses {
        *p = Pose::identity();
    }
    state.inv_depths = vec![0.7, 1.3, 2.0];
    assert_eq!(
        energy_eval(&state, &HuberLoss::default()).unwrap().energy,
        0.0
    );
}

/// Dense `J` of the inverse compositional linearization: row
/// `∇I₀(x) · ∂φ/∂Δp` in the columns of its frame pose and point depth.
fn dense_ic_jacobian(state: &ProblemState) -> DMatrix<f64> {
    let (nf, np, k) = (state.frames(), state.points(), state.pattern.len());
    let pixels = template_pixels(state);
    let mut j = DMatrix::zeros(nf * np * k, 6 * nf + np);
    for f in 0..nf {
        for n in 0..np {
            for i in 0..k {
                let Some((x, _)) = pixels[n * k + i] else {
                    continue;
                };
                let pc = make_proxy_constants(&x, &state.poses[f], state.inv_depths[n]).unwrap();
                let jphi = ic_jacobian_row(&x, &pc).unwrap().image;
                let row = state.reference.gradient(&x).unwrap().transpose() * jphi;
                let r = (f * np + n) * k + i;
                for c in 0..6 {
                    j[(r, 6 * f + c)] = row[c];
                }
                j[(r, 6 * nf + n)] = row[6];
            }
        }
    }
    j
}

#[test]
fn one_ic_step_matches_a_dense_oracle() {
    let state = tiny_problem(2, 3, PatchPattern::single(), 1e-3);
    let huber = HuberLoss::default();
    let system = build_ic_system(&state, &huber).unwrap();
    let naive = naive_residuals(&state);
    let j = dense_ic_jacobian(&state);
    let m = naive.len();
    let r = DVector::from_fn(m, |i, _| naive[i].unwrap_or(0.0));
    let w = DVector::from_fn(m, |i, _| naive[i].map_or(0.0, |r| huber.weight(r)));
    let jt_w = j.transpose() * DMatrix::from_diagonal(&w);
    let lambda = solver::Damping::default().initial;
    let n = j.ncols();
    let h = &jt_w * &j + DMatrix::identity(n, n) * lambda;
    let g = &jt_w * &r;
    let expected = -h.lu().solve(&g).unwrap();

    let residuals = energy_eval(&state, &huber).unwrap();
    for solver in [LinearSolver::Schur, LinearSolver::Dense] {
        let step = system
            .solve_step(&residuals, lambda, solver)
            .unwrap()
            .to_dense();
        let err = (&step - &expected).amax();
        assert!(
            err < 1e-10,
            "{solver:?}: {err:e}, step {:e}",
            expected.amax()
        );
    }
}

#[test]
fn single_pair_hessian_is_the_outer_product() {
    let state = tiny_problem(1, 1, PatchPattern::single(), 1e-3);
    let huber = HuberLoss::default();
    let system = build_ic_system(&state, &huber).unwrap();
    let j = dense_ic_jacobian(&state);
    let r = energy_eval(&state, &huber).unwrap().values[0];
    let expected = j.transpose() * &j * huber.weight(r);
    let h = system.hessian.to_dense(0.0);
    assert_eq!(h.shape(), (7, 7));
    assert!((h - expected).amax() < 1e-12);
}

#[test]
fn untranslated_initialization_is_detected() {
    let mut state = tiny_problem(2, 3, PatchPattern::single(), 0.0);
    for p in &mut state.poses {
        p.translation.fill(0.0);
    }
    let system = build_ic_system(&state, &HuberLoss::default()).unwrap();
    assert!(system.hessian.depth.iter().all(|h| *h == 0.0));
    assert!(system
        .hessian
        .coupling
        .iter()
        .all(|c| c.iter().all(|v| *v == 0.0)));
    for f in 0..2 {
        assert!(system
            .warnings
            .contains(&Warning::ZeroInitialTranslation { frame: f }));
    }
    for n in 0..3 {
        assert!(system
            .warnings
            .contains(&Warning::UnobservableDepth { point: n }));
    }
}

#[test]
fn flat_texture_converges_without_progress() {
    let mut state = tiny_problem(2, 3, PatchPattern::default(), 1e-3);
    let flat = Image::new(
        state.reference.width(),
        state.reference.height(),
        vec![0.5; state.reference.data().len()],
        *state.reference.intrinsics(),
    )
    .unwrap();
    state.reference = flat.clone();
    for t in &mut state.targets {
        *t = flat.clone();
    }
    let before = state.params();
    let report = ic_solve(&mut state, &SolverConfig::default(), &NoClock).unwrap();
    assert!(report.converged());
    assert_eq!(report.hessian_builds, 1);
    assert_eq!(report.final_energy(), 0.0);
    let mut normalized = before;
    normalized.normalize_scale();
    assert!(metrics::param_errors(&state.params(), &normalized).max() < 1e-15);
}

/// Minimizes a convex scalar function on `[a, b]` by golden-section search.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while (b - a).abs() > 1e-13 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    0.5 * (a + b)
}

#[test]
fn huber_irls_fixed_point_matches_direct_minimization() {
    let huber = HuberLoss::default();
    let data = [0.11, 0.13, 0.1, 0.12, 0.14, 0.5, -0.3, 0.125, 0.9];
    let energy = |m: f64| data.iter().map(|a| huber.loss(m - a)).sum::<f64>();
    let mut m = data.iter().sum::<f64>() / data.len() as f64;
    for _ in 0..200 {
        let w: Vec<f64> = data.iter().map(|a| huber.weight(m - a)).collect();
        m = data.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / w.iter().sum::<f64>();
    }
    let direct = golden_section(energy, -1.0, 1.0);
    assert!((m - direct).abs() < 1e-8, "{m} vs {direct}");
}

#[test]
fn huber_weight_spot_checks() {
    let g = 0.03;
    assert_eq!(huber_weight(0.0, g), 1.0);
    assert_eq!(huber_weight(g, g), 1.0);
    assert_eq!(huber_weight(2.0 * g, g), 0.5);
    assert_eq!(huber_weight(-4.0 * g, g), 0.25);
    let h = HuberLoss::new(g).unwrap();
    assert!((h.loss(g + 1e-12) - h.loss(g)).abs() < 1e-12);
    assert!(HuberLoss::new(0.0).is_err());
}

fn problem_from(spec: &synth::SceneSpec, sigma: f64, seed: u64) -> (ProblemState, Params) {
    let scene = render_sequence(spec).unwrap();
    let truth = scene.ground_truth();
    let init = perturb_parameters(&truth, sigma, seed).unwrap();
    (
        scene.problem(&init, PatchPattern::default()).unwrap(),
        truth,
    )
}

fn small_problem(sigma: f64, seed: u64) -> (ProblemState, Params) {
    problem_from(&common::small_spec(), sigma, seed)
}

type Solve = fn(&mut ProblemState, &SolverConfig, &dyn Clock) -> Result<SolveReport>;

const SOLVERS: [(&str, Solve); 2] = [("fc", fc_solve), ("ic", ic_solve)];

#[test]
fn accepted_iterations_never_increase_energy_or_active_residuals() {
    let (state, _) = small_problem(2e-3, 5);
    for (name, solve) in SOLVERS {
        let mut s = state.clone();
        let report = solve(&mut s, &SolverConfig::default(), &NoClock).unwrap();
        assert!(report.converged(), "{name}: {:?}", report.status);
        for pair in report.records.windows(2) {
            assert!(pair[1].energy <= pair[0].energy, "{name}");
            assert!(
                pair[1].active_residuals <= pair[0].active_residuals,
                "{name}"
            );
        }
        for pair in report.records.windows(2) {
            assert!(pair[1].hessian_builds >= pair[0].hessian_builds);
            assert!(pair[1].hessian_factorizations >= pair[0].hessian_factorizations);
        }
    }
}

#[test]
fn hessian_counters_follow_the_method() {
    let (state, _) = small_problem(1e-3, 7);
    let mut s = state.clone();
    let fc = fc_solve(&mut s, &SolverConfig::default(), &NoClock).unwrap();
    assert_eq!(fc.hessian_builds, fc.iterations);
    let mut s = state.clone();
    let ic = ic_solve(&mut s, &SolverConfig::default(), &NoClock).unwrap();
    assert_eq!(ic.hessian_builds, 1);
    assert!(ic.records.iter().all(|r| r.hessian_builds == 1));
    let rejected = ic.iterations + 1 - ic.records.len();
    assert!(ic.hessian_factorizations <= 1 + rejected);
}

#[test]
fn linear_solvers_agree() {
    let (state, _) = small_problem(1e-3, 11);
    for (name, solve) in SOLVERS {
        let mut a = state.clone();
        let mut b = state.clone();
        solve(&mut a, &SolverConfig::default(), &NoClock).unwrap();
        let dense = SolverConfig {
            linear_solver: LinearSolver::Dense,
            ..SolverConfig::default()
        };
        solve(&mut b, &dense, &NoClock).unwrap();
        let e = metrics::param_errors(&a.params(), &b.params());
        assert!(e.max() < 1e-9, "{name}: {e:?}");
    }
}

#[test]
fn parallel_and_sequential_runs_are_bit_identical() {
    let (state, _) = small_problem(1e-3, 13);
    for (name, solve) in SOLVERS {
        let mut a = state.clone();
        let mut b = state.clone();
        let ra = solve(&mut a, &SolverConfig::default(), &NoClock).unwrap();
        let sequential = SolverConfig {
            parallel: false,
            ..SolverConfig::default()
        };
        let rb = solve(&mut b, &sequential, &NoClock).unwrap();
        assert_eq!(a.params(), b.params(), "{name}");
        assert_eq!(ra.records, rb.records, "{name}");
    }
}

#[test]
fn ground_truth_start_stays_at_the_optimum() {
    let (state, truth) = problem_from(&common::exact_spec(), 0.0, 0);
    for (name, solve) in SOLVERS {
        let mut s = state.clone();
        let report = solve(&mut s, &SolverConfig::default(), &NoClock).unwrap();
        assert!(report.converged(), "{name}");
        assert!(report.iterations <= 2, "{name}: {}", report.iterations);
        let e = metrics::param_errors(&s.params(), &truth);
        assert!(e.max() < 1e-6, "{name}: {e:?}");
    }
}

#[test]
fn exact_instance_recovers_the_ground_truth_from_noise() {
    let (state, truth) = problem_from(&common::exact_spec(), 1e-3, 2);
    for (name, solve) in SOLVERS {
        let mut s = state.clone();
        let report = solve(&mut s, &SolverConfig::default(), &NoClock).unwrap();
        assert!(report.converged(), "{name}");
        let e = metrics::param_errors(&s.params(), &truth);
        assert!(e.max() < 1e-4, "{name}: {e:?}");
    }
}

#[test]
fn large_noise_is_reported_not_fatal() {
    let (state, _) = small_problem(0.1, 17);
    for (name, solve) in SOLVERS {
        let mut s = state.clone();
        let config = SolverConfig {
            max_iterations: 30,
            ..SolverConfig::default()
        };
        match solve(&mut s, &config, &NoClock) {
            Ok(report) => assert!(
                matches!(
                    report.status,
                    SolveStatus::Converged | SolveStatus::MaxIterations | SolveStatus::Diverged
                ),
                "{name}"
            ),
            Err(e) => assert!(matches!(e, Error::EmptyProblem), "{name}: {e}"),
        }
    }
}
