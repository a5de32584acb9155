//! Inverse compositional solver with proxy templates.
//!
//! The Jacobian rows `∇I₀(x) · ∂φ/∂Δp` are computed once at the initial
//! parameters, and so is `H = Jᵀ W₀ J`. Each iteration only evaluates the
//! residuals and the gradient `Jᵀ W r`, then composes the current warp with
//! the inverse increment. Damping only ever grows, so the Hessian is factored
//! again only after a rejected step.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use super::driver::{self, accumulate_pairs, Counters, Linearization, Session};
use super::hessian::{BlockHessian, BlockVector, HessianFactor, LinearSolver, Matrix7, Vector7};
use super::problem::{evaluate_residuals, Params, ProblemState, ResidualSet, Template};
use super::{Clock, HuberLoss, Method, SolveReport, SolverConfig, Warning};
use crate::geometry::{ic_depth_update, ic_photometric_row, ic_pose_update};
use crate::par;
use crate::{Error, Result};

/// Normal equations of the inverse compositional linearization, frozen at
/// the parameters the system was built from.
#[derive(Debug, Clone)]
pub struct IcSystem {
    /// Parameters `p⁰` the proxy constants were frozen at.
    pub initial: Params,
    /// One row of `J` per residual, zero where masked.
    pub rows: Vec<Vector7>,
    /// Residuals that take part in the solve.
    pub mask: Vec<bool>,
    /// IRLS weights at `p⁰`.
    pub weights: Vec<f64>,
    pub hessian: BlockHessian,
    /// Residuals at `p⁰`.
    pub residuals: ResidualSet,
    pub warnings: Vec<Warning>,
    template: Template,
    huber: HuberLoss,
}

/// Builds the inverse compositional system at the state's current parameters.
pub fn build_ic_system(state: &ProblemState, huber: &HuberLoss) -> Result<IcSystem> {
    state.validate()?;
    IcSystem::build(state, &state.params(), huber, false)
}

impl IcSystem {
    fn build(
        state: &ProblemState,
        params: &Params,
        huber: &HuberLoss,
        parallel: bool,
    ) -> Result<Self> {
        let template = Template::new(state);
        let k = template.patch;
        let mut rows = vec![None; template.len()];
        par::for_each_chunk(&mut rows, k, parallel, |pair, out| {
            let (f, n) = (pair / template.points, pair % template.points);
            let (pose, d) = (&params.poses[f], params.inv_depths[n]);
            for (i, slot) in out.iter_mut().enumerate() {
                let tp = template.pixel(pair, i);
                if !tp.valid {
                    continue;
                }
                let row = ic_photometric_row(&tp.x, &tp.gradient, pose, d);
                *slot = row.ok().filter(|r| r.iter().all(|v| v.is_finite()));
            }
        });
        let base: Vec<bool> = rows.iter().map(Option::is_some).collect();
        let residuals = evaluate_residuals(state, &template, params, &base, huber, parallel);
        if residuals.in_bounds == 0 {
            return Err(Error::EmptyProblem);
        }
        let mask = residuals.valid.clone();
        let weights = residuals
            .values
            .iter()
            .zip(&mask)
            .map(|(r, m)| if *m { huber.weight(*r) } else { 0.0 })
            .collect();
        let rows = rows
            .into_iter()
            .zip(&mask)
            .map(|(r, m)| {
                if *m {
                    r.unwrap_or_default()
                } else {
                    Vector7::zeros()
                }
            })
            .collect();
        let mut warnings = Vec::new();
        for (f, p) in params.poses.iter().enumerate() {
            if p.translation == Vector3::zeros() {
                warnings.push(Warning::ZeroInitialTranslation { frame: f });
            }
        }
        let mut system = Self {
            initial: params.clone(),
            rows,
            mask,
            weights,
            hessian: BlockHessian::zeros(state.frames(), state.points()),
            residuals,
            warnings,
            template,
            huber: *huber,
        };
        system.hessian = system.build_hessian(None, parallel);
        for (n, h) in system.hessian.depth.iter().enumerate() {
            if *h == 0.0 {
                system
                    .warnings
                    .push(Warning::UnobservableDepth { point: n });
            }
        }
        Ok(system)
    }

    /// `Jᵀ W J` with the stored weights, or with the IRLS weights of
    /// `residuals` when given.
    fn build_hessian(&self, residuals: Option<&ResidualSet>, parallel: bool) -> BlockHessian {
        let k = self.template.patch;
        let (h, _) = accumulate_pairs(
            self.template.frames,
            self.template.points,
            parallel,
            |pair| {
                let mut h = Matrix7::zeros();
                for i in pair * k..(pair + 1) * k {
                    if !self.mask[i] {
                        continue;
                    }
                    let w = match residuals {
                        Some(set) if set.valid[i] => self.huber.weight(set.values[i]),
                        Some(_) => continue,
                        None => self.weights[i],
                    };
                    let row = &self.rows[i];
                    h += row * row.transpose() * w;
                }
                (h, Vector7::zeros())
            },
        );
        h
    }

    /// `Jᵀ W r` with IRLS weights of the given residuals.
    pub fn gradient(&self, residuals: &ResidualSet) -> BlockVector {
        self.gradient_with(residuals, false)
    }

    fn gradient_with(&self, residuals: &ResidualSet, parallel: bool) -> BlockVector {
        let k = self.template.patch;
        let (_, g) = accumulate_pairs(
            self.template.frames,
            self.template.points,
            parallel,
            |pair| {
                let mut g = Vector7::zeros();
                for i in pair * k..(pair + 1) * k {
                    if self.mask[i] && residuals.valid[i] {
                        let r = residuals.values[i];
                        g += self.rows[i] * (self.huber.weight(r) * r);
                    }
                }
                (Matrix7::zeros(), g)
            },
        );
        g
    }

    /// `Δp = −(H + λI)⁻¹ Jᵀ W r`.
    pub fn solve_step(
        &self,
        residuals: &ResidualSet,
        damping: f64,
        solver: LinearSolver,
    ) -> Result<BlockVector> {
        let factor = self.hessian.factorize(damping, solver)?;
        Ok(negated(&factor.solve(&self.gradient(residuals))))
    }

    /// Composes `params` with the inverse of the increment `step`. `scale`
    /// is the accumulated gauge rescaling since the system was built.
    pub fn apply(&self, params: &Params, step: &BlockVector, scale: f64) -> Result<Params> {
        let poses = params
            .poses
            .iter()
            .zip(&self.initial.poses)
            .zip(&step.poses)
            .map(|((pose, p0), s)| {
                let omega = s.fixed_rows::<3>(0).into_owned();
                let dt = s.fixed_rows::<3>(3) * scale;
                ic_pose_update(pose, &p0.rotation, &omega, &dt)
            })
            .collect();
        let inv_depths = params
            .inv_depths
            .iter()
            .zip(&self.initial.inv_depths)
            .zip(&step.depths)
            .map(|((d, d0), dd)| ic_depth_update(*d, *d0, *dd))
            .collect::<Result<Vec<_>>>()?;
        Ok(Params { poses, inv_depths })
    }
}

fn negated(v: &BlockVector) -> BlockVector {
    BlockVector {
        poses: v.poses.iter().map(|p| -p).collect(),
        depths: v.depths.iter().map(|d| -d).collect(),
    }
}

struct IcLinearization {
    system: IcSystem,
    solver: LinearSolver,
    parallel: bool,
    refresh: bool,
    fresh: bool,
    factor: Option<(f64, HessianFactor)>,
    scale: f64,
}

impl Linearization for IcLinearization {
    const METHOD: Method = Method::InverseCompositional;

    fn linearize(
        &mut self,
        _state: &ProblemState,
        _params: &Params,
        residuals: &ResidualSet,
        counters: &mut Counters,
    ) -> Result<BlockVector> {
        if self.refresh && !self.fresh {
            self.system.hessian = self.system.build_hessian(Some(residuals), self.parallel);
            self.factor = None;
            counters.builds += 1;
        }
        self.fresh = false;
        Ok(self.system.gradient_with(residuals, self.parallel))
    }

    fn factor(&mut self, damping: f64, counters: &mut Counters) -> Result<&HessianFactor> {
        if self.factor.as_ref().map(|(d, _)| *d) != Some(damping) {
            self.factor = None;
            let f = self.system.hessian.factorize(damping, self.solver)?;
            counters.factorizations += 1;
            self.factor = Some((damping, f));
        }
        Ok(&self.factor.as_ref().expect("factor was just set").1)
    }

    fn candidate(&self, params: &Params, step: &BlockVector) -> Result<Params> {
        self.system.apply(params, step, self.scale)
    }

    fn relaxes_damping(&self) -> bool {
        false
    }

    fn mask(&self) -> &[bool] {
        &self.system.mask
    }

    fn accepted(&mut self, residuals: &ResidualSet, scale: f64) {
        // Residuals that leave the target image stay out for the rest of the
        // solve; the Hessian keeps their rows.
        for (m, v) in self.system.mask.iter_mut().zip(&residuals.valid) {
            *m &= *v;
        }
        self.scale *= scale;
    }

    fn warnings(&self) -> Vec<Warning> {
        self.system.warnings.clone()
    }
}

/// Runs the inverse compositional solver from the state's parameters and
/// writes the result back into `state`.
pub fn ic_solve(
    state: &mut ProblemState,
    config: &SolverConfig,
    clock: &dyn Clock,
) -> Result<SolveReport> {
    config.validate()?;
    state.validate()?;
    let start_ms = clock.now_ms();
    let mut params = state.params();
    params.normalize_scale();
    let system = IcSystem::build(state, &params, &config.huber, config.parallel)?;
    let current = system.residuals.clone();
    let session = Session {
        state,
        template: system.template.clone(),
        config,
        clock,
        start_ms,
    };
    let lin = IcLinearization {
        system,
        solver: config.linear_solver,
        parallel: config.parallel,
        refresh: config.ic_refresh_weights,
        fresh: true,
        factor: None,
        scale: 1.0,
    };
    let counters = Counters {
        builds: 1,
        factorizations: 0,
    };
    let (report, params) = driver::run(session, params, current, lin, counters)?;
    state.set_params(params);
    Ok(report)
}
