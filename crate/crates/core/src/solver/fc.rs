//! Forwards compositional baseline.
//!
//! Every iteration re-linearizes at the current parameters: the Jacobian
//! rows `−∇I_f(W) · ∂W/∂δ` use the target-image gradient at the warped
//! point, so `H = Jᵀ W J` is rebuilt and refactored each time. Poses take
//! the left update `exp(δθ) · T`, inverse depths the additive `d + δd`.

use alloc::vec::Vec;

use super::driver::{self, accumulate_pairs, Counters, Linearization, Session};
use super::hessian::{BlockHessian, BlockVector, HessianFactor, LinearSolver, Matrix7, Vector7};
use super::problem::{warp_point, Params, ProblemState, ResidualSet, Template};
use super::{Clock, HuberLoss, Method, SolveReport, SolverConfig};
use crate::geometry::fc_warp_jacobian;
use crate::{Error, Result};

struct FcLinearization {
    template: Template,
    mask: Vec<bool>,
    huber: HuberLoss,
    solver: LinearSolver,
    parallel: bool,
    hessian: Option<BlockHessian>,
    factor: Option<(f64, HessianFactor)>,
}

impl Linearization for FcLinearization {
    const METHOD: Method = Method::ForwardsCompositional;

    fn linearize(
        &mut self,
        state: &ProblemState,
        params: &Params,
        residuals: &ResidualSet,
        counters: &mut Counters,
    ) -> Result<BlockVector> {
        let t = &self.template;
        let k = t.patch;
        let huber = &self.huber;
        let (h, g) = accumulate_pairs(t.frames, t.points, self.parallel, |pair| {
            let (f, n) = (pair / t.points, pair % t.points);
            let (pose, d) = (&params.poses[f], params.inv_depths[n]);
            let target = &state.targets[f];
            let intr = target.intrinsics();
            let mut h = Matrix7::zeros();
            let mut g = Vector7::zeros();
            for i in 0..k {
                let idx = pair * k + i;
                if !residuals.valid[idx] {
                    continue;
                }
                let tp = t.pixel(pair, i);
                let Some(v) = warp_point(&tp.x, pose, d) else {
                    continue;
                };
                let (u, w) = (intr.fx * v.x / v.z + intr.cx, intr.fy * v.y / v.z + intr.cy);
                let Some(grad) = target.gradient_pixel(u, w) else {
                    continue;
                };
                let Ok(jw) = fc_warp_jacobian(&tp.x, pose, d) else {
                    continue;
                };
                let grad = nalgebra::Vector2::new(grad.x * intr.fx, grad.y * intr.fy);
                let row: Vector7 = -(grad.transpose() * jw.image).transpose();
                let r = residuals.values[idx];
                let weight = huber.weight(r);
                h += row * row.transpose() * weight;
                g += row * (weight * r);
            }
            (h, g)
        });
        self.hessian = Some(h);
        self.factor = None;
        counters.builds += 1;
        Ok(g)
    }

    fn factor(&mut self, damping: f64, counters: &mut Counters) -> Result<&HessianFactor> {
        if self.factor.as_ref().map(|(d, _)| *d) != Some(damping) {
            self.factor = None;
            let h = self.hessian.as_ref().ok_or(Error::EmptyProblem)?;
            let f = h.factorize(damping, self.solver)?;
            counters.factorizations += 1;
            self.factor = Some((damping, f));
        }
        Ok(&self.factor.as_ref().expect("factor was just set").1)
    }

    fn candidate(&self, params: &Params, step: &BlockVector) -> Result<Params> {
        let poses = params
            .poses
            .iter()
            .zip(&step.poses)
            .map(|(p, s)| p.boxplus(s))
            .collect();
        let inv_depths = params
            .inv_depths
            .iter()
            .zip(&step.depths)
            .map(|(d, s)| {
                let v = d + s;
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(Error::InvalidDepth { value: v })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Params { poses, inv_depths })
    }

    fn relaxes_damping(&self) -> bool {
        true
    }

    fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn accepted(&mut self, _residuals: &ResidualSet, _scale: f64) {}
}

/// Runs the forwards compositional solver from the state's parameters and
/// writes the result back into `state`.
pub fn fc_solve(
    state: &mut ProblemState,
    config: &SolverConfig,
    clock: &dyn Clock,
) -> Result<SolveReport> {
    config.validate()?;
    state.validate()?;
    let start_ms = clock.now_ms();
    let mut params = state.params();
    params.normalize_scale();
    let template = Template::new(state);
    let mask = template.base_mask();
    let session = Session {
        state,
        template: template.clone(),
        config,
        clock,
        start_ms,
    };
    let current = session.evaluate(&params, &mask);
    if current.in_bounds == 0 {
        return Err(Error::EmptyProblem);
    }
    let lin = FcLinearization {
        template,
        mask,
        huber: config.huber,
        solver: config.linear_solver,
        parallel: config.parallel,
        hessian: None,
        factor: None,
    };
    let (report, params) = driver::run(session, params, current, lin, Counters::default())?;
    state.set_params(params);
    Ok(report)
}
