//! Damped Gauss-Newton loop shared by the two solvers.

use alloc::vec;
use alloc::vec::Vec;

use super::hessian::{BlockHessian, BlockVector, HessianFactor, Matrix7, Vector7};
use super::problem::{
    evaluate_residuals, max_update_px, Params, ProblemState, ResidualSet, Template,
};
use super::{
    Clock, IterationRecord, Method, Snapshot, SolveReport, SolveStatus, SolverConfig, Warning,
};
use crate::par;
use crate::{Error, Result};

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Counters {
    pub builds: usize,
    pub factorizations: usize,
}

/// What differs between the forwards and inverse compositional solvers.
pub(crate) trait Linearization {
    const METHOD: Method;

    /// Gradient `g = Jᵀ W r` at the current parameters. May rebuild the
    /// Hessian (and must then drop any cached factor).
    fn linearize(
        &mut self,
        state: &ProblemState,
        params: &Params,
        residuals: &ResidualSet,
        counters: &mut Counters,
    ) -> Result<BlockVector>;

    /// Factor of `H + λI`, refactoring only when needed.
    fn factor(&mut self, damping: f64, counters: &mut Counters) -> Result<&HessianFactor>;

    /// Parameters after applying the solved increment.
    fn candidate(&self, params: &Params, step: &BlockVector) -> Result<Params>;

    /// Whether damping is relaxed after an accepted step.
    fn relaxes_damping(&self) -> bool;

    /// Residual mask used to evaluate a candidate.
    fn mask(&self) -> &[bool];

    /// Called with the residuals of an accepted candidate and the factor by
    /// which its scale was normalized.
    fn accepted(&mut self, residuals: &ResidualSet, scale: f64);

    fn warnings(&self) -> Vec<Warning> {
        Vec::new()
    }
}

pub(crate) struct Session<'a> {
    pub state: &'a ProblemState,
    pub template: Template,
    pub config: &'a SolverConfig,
    pub clock: &'a dyn Clock,
    pub start_ms: f64,
}

impl Session<'_> {
    pub fn evaluate(&self, params: &Params, mask: &[bool]) -> ResidualSet {
        evaluate_residuals(
            self.state,
            &self.template,
            params,
            mask,
            &self.config.huber,
            self.config.parallel,
        )
    }

    fn elapsed(&self) -> f64 {
        self.clock.now_ms() - self.start_ms
    }
}

pub(crate) fn run<L: Linearization>(
    session: Session<'_>,
    mut params: Params,
    mut current: ResidualSet,
    mut lin: L,
    mut counters: Counters,
) -> Result<(SolveReport, Params)> {
    let config = session.config;
    let snapshot = |p: &Params| Snapshot {
        poses: p.poses.clone(),
        inv_depths: p.inv_depths.clone(),
    };
    let mut damping = config.damping.map(|d| d.initial).unwrap_or(0.0);
    let mut report = SolveReport {
        method: L::METHOD,
        status: SolveStatus::MaxIterations,
        iterations: 0,
        records: Vec::new(),
        snapshots: Vec::new(),
        hessian_builds: 0,
        hessian_factorizations: 0,
        warnings: lin.warnings(),
        total_ms: 0.0,
    };
    let record =
        |iteration: usize, energy, moved, c: &Counters, active, damping, ms| IterationRecord {
            iteration,
            energy,
            max_update_px: moved,
            wall_ms: ms,
            hessian_builds: c.builds,
            hessian_factorizations: c.factorizations,
            active_residuals: active,
            damping,
        };
    report.records.push(record(
        0,
        current.energy,
        0.0,
        &counters,
        current.in_bounds,
        damping,
        session.elapsed(),
    ));
    if config.record_snapshots {
        report.snapshots.push(snapshot(&params));
    }

    let mut increases = 0usize;
    'outer: for iteration in 1..=config.max_iterations {
        report.iterations = iteration;
        let gradient = lin.linearize(session.state, &params, &current, &mut counters)?;
        let rhs = BlockVector {
            poses: gradient.poses.iter().map(|g| -g).collect(),
            depths: gradient.depths.iter().map(|g| -g).collect(),
        };
        let mut bad = 0usize;
        loop {
            let step = match lin.factor(damping, &mut counters) {
                Ok(factor) => Some(factor.solve(&rhs)),
                Err(e @ Error::SingularHessian { .. }) if config.damping.is_none() => {
                    return Err(e)
                }
                Err(Error::SingularHessian { .. }) => None,
                Err(e) => return Err(e),
            };
            let trial = step.map(|s| lin.candidate(&params, &s));
            if let Some(Ok(mut cand)) = trial {
                let scale = cand.normalize_scale();
                let moved = max_update_px(
                    &session.template,
                    &session.state.anchors,
                    &session.state.reference,
                    &params,
                    &cand,
                    lin.mask(),
                );
                let eval = session.evaluate(&cand, lin.mask());
                let improved = eval.in_bounds > 0 && eval.energy <= current.energy;
                if improved || (config.damping.is_none() && eval.in_bounds > 0) {
                    increases = if improved { 0 } else { increases + 1 };
                    params = cand;
                    current = eval;
                    lin.accepted(&current, scale);
                    if lin.relaxes_damping() {
                        if let Some(d) = &config.damping {
                            damping = (damping / d.decrease).max(d.min);
                        }
                    }
                    report.records.push(record(
                        iteration,
                        current.energy,
                        moved,
                        &counters,
                        current.in_bounds,
                        damping,
                        session.elapsed(),
                    ));
                    if config.record_snapshots {
                        report.snapshots.push(snapshot(&params));
                    }
                    if moved < config.threshold_px {
                        report.status = SolveStatus::Converged;
                        break 'outer;
                    }
                    if increases >= config.max_bad_steps {
                        report.status = SolveStatus::Diverged;
                        break 'outer;
                    }
                    break;
                }
                if moved < config.threshold_px {
                    // The remaining step is below the threshold; keep the
                    // better parameters.
                    report.status = SolveStatus::Converged;
                    break 'outer;
                }
            }
            bad += 1;
            let Some(d) = &config.damping else {
                report.status = SolveStatus::Diverged;
                break 'outer;
            };
            if bad >= config.max_bad_steps {
                report.status = SolveStatus::Diverged;
                break 'outer;
            }
            damping = if damping > 0.0 {
                damping * d.increase
            } else {
                d.initial.max(d.min).max(1e-12)
            };
        }
    }
    report.hessian_builds = counters.builds;
    report.hessian_factorizations = counters.factorizations;
    report.total_ms = session.elapsed();
    Ok((report, params))
}

/// Sums per-pair normal equations `(Σ Jᵀ w J, Σ Jᵀ w r)` into block form.
/// Pairs are computed independently (optionally in parallel) and reduced in
/// a fixed order.
pub(crate) fn accumulate_pairs<F>(
    frames: usize,
    points: usize,
    parallel: bool,
    pair_system: F,
) -> (BlockHessian, BlockVector)
where
    F: Fn(usize) -> (Matrix7, Vector7) + Sync + Send,
{
    let mut pairs = vec![(Matrix7::zeros(), Vector7::zeros()); frames * points];
    par::for_each_chunk(&mut pairs, 1, parallel, |pair, out| {
        out[0] = pair_system(pair)
    });
    let mut h = BlockHessian::zeros(frames, points);
    let mut g = BlockVector::zeros(frames, points);
    for (pair, (hp, gp)) in pairs.iter().enumerate() {
        let (f, n) = (pair / points, pair % points);
        h.add_pair(f, n, hp);
        g.poses[f] += gp.fixed_rows::<6>(0);
        g.depths[n] += gp[6];
    }
    (h, g)
}
