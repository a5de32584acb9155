//! Block-sparse normal equations of photometric bundle adjustment.
//!
//! Every residual touches one frame pose (6 unknowns) and one inverse depth,
//! so the Hessian has 6×6 pose blocks on the diagonal, a diagonal depth
//! block, and a 6×1 coupling per point-frame pair. Depths are eliminated with
//! a Schur complement, leaving a dense `6F × 6F` system for the poses.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix6, SMatrix, SVector, Vector6};

use crate::{Error, Result};

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SVector<f64, 7>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Eliminate depths, factor the reduced pose system.
    #[default]
    Schur,
    /// Factor the full matrix; for small problems and cross-checks.
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHessian {
    pub frames: usize,
    pub points: usize,
    pub pose_blocks: Vec<Matrix6<f64>>,
    pub depth: Vec<f64>,
    /// Indexed `f · N + n`.
    pub coupling: Vec<Vector6<f64>>,
}

/// Gradient (or right-hand side) split the same way as the Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub poses: Vec<Vector6<f64>>,
    pub depths: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(frames: usize, points: usize) -> Self {
        Self {
            poses: vec![Vector6::zeros(); frames],
            depths: vec![0.0; points],
        }
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let f = self.poses.len();
        DVector::from_fn(6 * f + self.depths.len(), |i, _| {
            if i < 6 * f {
                self.poses[i / 6][i % 6]
            } else {
                self.depths[i - 6 * f]
            }
        })
    }

    pub fn from_dense(v: &DVector<f64>, frames: usize) -> Self {
        Self {
            poses: (0..frames)
                .map(|f| v.fixed_rows::<6>(6 * f).into_owned())
                .collect(),
            depths: v
                .rows(6 * frames, v.len() - 6 * frames)
                .iter()
                .copied()
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.poses
            .iter()
            .flat_map(|p| p.iter())
            .chain(self.depths.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

impl BlockHessian {
    pub fn zeros(frames: usize, points: usize) -> Self {
        Self {
            frames,
            points,
            pose_blocks: vec![Matrix6::zeros(); frames],
            depth: vec![0.0; points],
            coupling: vec![Vector6::zeros(); frames * points],
        }
    }

    pub fn unknowns(&self) -> usize {
        6 * self.frames + self.points
    }

    /// Adds the 7×7 normal-equation block of one point-frame pair.
    pub fn add_pair(&mut self, frame: usize, point: usize, h: &Matrix7) {
        self.pose_blocks[frame] += h.fixed_view::<6, 6>(0, 0);
        self.depth[point] += h[(6, 6)];
        self.coupling[frame * self.points + point] += h.fixed_view::<6, 1>(0, 6);
    }

    /// Full symmetric matrix, poses first, with `damping` on the diagonal.
    pub fn to_dense(&self, damping: f64) -> DMatrix<f64> {
        let p = 6 * self.frames;
        let mut m = DMatrix::zeros(self.unknowns(), self.unknowns());
        for (f, b) in self.pose_blocks.iter().enumerate() {
            m.view_mut((6 * f, 6 * f), (6, 6)).copy_from(b);
        }
        for (n, d) in self.depth.iter().enumerate() {
            m[(p + n, p + n)] = *d;
        }
        for f in 0..self.frames {
            for n in 0..self.points {
                let c = &self.coupling[f * self.points + n];
                m.view_mut((6 * f, p + n), (6, 1)).copy_from(c);
                m.view_mut((p + n, 6 * f), (1, 6)).copy_from(&c.transpose());
            }
        }
        for i in 0..m.nrows() {
            m[(i, i)] += damping;
        }
        m
    }

    /// Factors `H + damping · I`.
    pub fn factorize(&self, damping: f64, solver: LinearSolver) -> Result<HessianFactor> {
        match solver {
            LinearSolver::Dense => {
                let chol = Cholesky::new(self.to_dense(damping))
                    .ok_or(Error::SingularHessian { damping })?;
                Ok(HessianFactor {
                    frames: self.frames,
                    kind: FactorKind::Dense(chol),
                })
            }
            LinearSolver::Schur => self.factorize_schur(damping),
        }
    }

    fn factorize_schur(&self, damping: f64) -> Result<HessianFactor> {
        let (nf, np) = (self.frames, self.points);
        let mut depth_inv = Vec::with_capacity(np);
        for d in &self.depth {
            let v = d + damping;
            if !(v > 0.0) {
                return Err(Error::SingularHessian { damping });
            }
            depth_inv.push(1.0 / v);
        }
        let mut s = DMatrix::zeros(6 * nf, 6 * nf);
        for (f, b) in self.pose_blocks.iter().enumerate() {
            let mut blk = *b;
            for i in 0..6 {
                blk[(i, i)] += damping;
            }
            s.view_mut((6 * f, 6 * f), (6, 6)).copy_from(&blk);
        }
        // S −= Σ_n c_n c_nᵀ / h_n over the frames observing n.
        let mut scaled = vec![Vector6::zeros(); nf];
        for n in 0..np {
            let inv = depth_inv[n];
            for f in 0..nf {
                scaled[f] = self.coupling[f * np + n] * inv;
            }
            for f1 in 0..nf {
                let c1 = &self.coupling[f1 * np + n];
                if c1.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for f2 in f1..nf {
                    let outer = scaled[f2] * c1.transpose();
                    let mut view = s.view_mut((6 * f2, 6 * f1), (6, 6));
                    view -= outer;
                }
            }
        }
        // Only the lower block triangle was updated; mirror it.
        for f1 in 0..nf {
            for f2 in (f1 + 1)..nf {
                let blk = s.view((6 * f2, 6 * f1), (6, 6)).transpose();
                s.view_mut((6 * f1, 6 * f2), (6, 6)).copy_from(&blk);
            }
        }
        let chol = Cholesky::new(s).ok_or(Error::SingularHessian { damping })?;
        Ok(HessianFactor {
            frames: nf,
            kind: FactorKind::Schur {
                reduced: chol,
                depth_inv,
                coupling: self.coupling.clone(),
            },
        })
    }
}

#[derive(Debug, Clone)]
enum FactorKind {
    Dense(Cholesky<f64, Dyn>),
    Schur {
        reduced: Cholesky<f64, Dyn>,
        depth_inv: Vec<f64>,
        coupling: Vec<Vector6<f64>>,
    },
}

/// A factored (damped) Hessian, reusable for any right-hand side.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    frames: usize,
    kind: FactorKind,
}

impl HessianFactor {
    /// Solves `(H + λI) x = rhs`.
    pub fn solve(&self, rhs: &BlockVector) -> BlockVector {
        match &self.kind {
            FactorKind::Dense(chol) => {
                BlockVector::from_dense(&chol.solve(&rhs.to_dense()), self.frames)
            }
            FactorKind::Schur {
                reduced,
                depth_inv,
                coupling,
            } => {
                let (nf, np) = (self.frames, depth_inv.len());
                let mut reduced_rhs = DVector::zeros(6 * nf);
                for f in 0..nf {
                    let mut b = rhs.poses[f];
                    for n in 0..np {
                        b -= coupling[f * np + n] * (rhs.depths[n] * depth_inv[n]);
                    }
                    reduced_rhs.fixed_rows_mut::<6>(6 * f).copy_from(&b);
                }
                let xp = reduced.solve(&reduced_rhs);
                let poses: Vec<Vector6<f64>> = (0..nf)
                    .map(|f| xp.fixed_rows::<6>(6 * f).into_owned())
                    .collect();
                let depths = (0..np)
                    .map(|n| {
                        let mut b = rhs.depths[n];
                        for (f, p) in poses.iter().enumerate() {
                            b -= coupling[f * np + n].dot(p);
                        }
                        b * depth_inv[n]
                    })
                    .collect();
                BlockVector { poses, depths }
            }
        }
    }
}
