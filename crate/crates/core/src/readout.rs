//! Linear readout: ridge training, prediction and interpolation between
//! readouts trained at different mixing fractions.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::dynsys::TimeSeries;
use crate::error::{invalid, Error, Result};
use crate::reservoir::StateTrajectory;

/// Default ridge constant.
pub const DEFAULT_RIDGE_REG: f64 = 1e-8;

/// How the normal equations were solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeSolver {
    Cholesky,
    /// Fallback when the regularized Gram matrix is not numerically positive definite.
    PseudoInverse,
}

/// Trained output matrix `W_out` (M_o × N).
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub w_out: DMatrix<f64>,
    pub trained_alpha: Option<f64>,
    pub ridge_reg: f64,
    /// Fingerprint of the reservoir the states came from, when known.
    pub reservoir: Option<u64>,
    pub solver: RidgeSolver,
}

impl ReadoutWeights {
    pub fn n_nodes(&self) -> usize {
        self.w_out.ncols()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.trained_alpha = Some(alpha);
        self
    }

    pub fn with_reservoir(mut self, fingerprint: u64) -> Self {
        self.reservoir = Some(fingerprint);
        self
    }

    /// Scalar output for each column of an N × b state block.
    pub fn predict_block(&self, states: &DMatrix<f64>) -> Vec<f64> {
        debug_assert_eq!(states.nrows(), self.n_nodes());
        let row = self.w_out.row(0);
        states
            .column_iter()
            .map(|c| row.iter().zip(c.iter()).map(|(w, r)| w * r).sum())
            .collect()
    }
}

/// Streaming accumulator for `R Rᵀ` and `S Rᵀ`.
///
/// Only the lower triangle of the Gram matrix is accumulated; blocks of
/// states are folded in with a strided GEMM so that the full state matrix is
/// never held in memory.
#[derive(Debug, Clone)]
pub struct RidgeAccumulator {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    samples: usize,
}

const TRI_BLOCK: usize = 256;

impl RidgeAccumulator {
    pub fn new(n_nodes: usize, n_outputs: usize) -> Self {
        Self {
            gram: DMatrix::zeros(n_nodes, n_nodes),
            cross: DMatrix::zeros(n_outputs, n_nodes),
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Adds an N × b block of states with its M_o × b targets.
    pub fn push(&mut self, states: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
        let n = self.gram.nrows();
        if states.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "state rows",
                left: states.nrows(),
                right: n,
            });
        }
        if targets.nrows() != self.cross.nrows() || targets.ncols() != states.ncols() {
            return Err(Error::LengthMismatch {
                what: "target columns",
                left: targets.ncols(),
                right: states.ncols(),
            });
        }
        let b = states.ncols();
        if b == 0 {
            return Ok(());
        }
        let r = states.as_slice();
        let g = self.gram.as_mut_slice();
        // Lower-triangular block GEMM: G[i-block, j-block] += R_i R_jᵀ for j ≤ i.
        let mut i0 = 0;
        while i0 < n {
            let mi = TRI_BLOCK.min(n - i0);
            let mut j0 = 0;
            while j0 <= i0 {
                let nj = TRI_BLOCK.min(n - j0);
                // SAFETY: all pointers address element ranges inside `r` and `g`
                // with strides matching their column-major layouts
                // (states: N × b, gram: N × N); the output block does not
                // alias the inputs.
                unsafe {
                    matrixmultiply::dgemm(
                        mi,
                        b,
                        nj,
                        1.0,
                        r.as_ptr().add(i0),
                        1,
                        n as isize,
                        r.as_ptr().add(j0),
                        n as isize,
                        1,
                        1.0,
                        g.as_mut_ptr().add(i0 + j0 * n),
                        1,
                        n as isize,
                    );
                }
                j0 += TRI_BLOCK;
            }
            i0 += TRI_BLOCK;
        }
        self.cross.gemm(1.0, targets, &states.transpose(), 1.0);
        self.samples += b;
        Ok(())
    }

    /// Minimizer of reg·‖W‖² + ‖W R − S‖² over everything pushed so far.
    pub fn solve(&self, reg: f64) -> Result<ReadoutWeights> {
        if !(reg >= 0.0) || !reg.is_finite() {
            return Err(invalid("ridge_reg", format!("must be >= 0, got {reg}")));
        }
        if self.samples == 0 {
            return Err(Error::TooShort {
                what: "ridge training",
                needed: 1,
                got: 0,
            });
        }
        let n = self.gram.nrows();
        let mut a = self.gram.clone();
        for j in 0..n {
            for i in 0..j {
                a[(i, j)] = a[(j, i)];
            }
            a[(j, j)] += reg;
        }
        let rhs = self.cross.transpose();
        let (wt, solver) = match Cholesky::new(a.clone()) {
            Some(ch) => (ch.solve(&rhs), RidgeSolver::Cholesky),
            None => {
                let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
                let pinv = a
                    .svd(true, true)
                    .pseudo_inverse(scale * n as f64 * f64::EPSILON)
                    .map_err(|e| Error::Singular(e.to_string()))?;
                (pinv * rhs, RidgeSolver::PseudoInverse)
            }
        };
        if wt.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite readout weights".into()));
        }
        Ok(ReadoutWeights {
            w_out: wt.transpose(),
            trained_alpha: None,
            ridge_reg: reg,
            reservoir: None,
            solver,
        })
    }
}

/// Ridge regression `W = S Rᵀ (R Rᵀ + reg·I)⁻¹` for targets `S` (M_o × T).
pub fn train_ridge(r: &StateTrajectory, s: &DMatrix<f64>, reg: f64) -> Result<ReadoutWeights> {
    if s.ncols() != r.len() {
        return Err(Error::LengthMismatch {
            what: "targets vs states",
            left: s.ncols(),
            right: r.len(),
        });
    }
    let mut acc = RidgeAccumulator::new(r.n_nodes(), s.nrows());
    acc.push(&r.states, s)?;
    acc.solve(reg)
}

/// reg·‖W‖² + ‖W R − S‖², the quantity `train_ridge` minimizes.
pub fn ridge_objective(w: &DMatrix<f64>, r: &DMatrix<f64>, s: &DMatrix<f64>, reg: f64) -> f64 {
    reg * w.norm_squared() + (w * r - s).norm_squared()
}

/// ŝ(t) = W_out r(t) for a single-output readout.
pub fn predict(w: &ReadoutWeights, r: &StateTrajectory) -> Result<TimeSeries> {
    if w.n_nodes() != r.n_nodes() {
        return Err(Error::LengthMismatch {
            what: "readout vs state dimension",
            left: w.n_nodes(),
            right: r.n_nodes(),
        });
    }
    if w.w_out.nrows() != 1 {
        return Err(invalid("w_out", "scalar prediction needs a single output row"));
    }
    TimeSeries::new(w.predict_block(&r.states), r.dt)
}

/// Convex combination of two readouts trained at α = q− and α = q+:
///
/// ```text
/// W_q = (q − q−)/(q+ − q−) · W_{q+} + (q+ − q)/(q+ − q−) · W_{q−}
/// ```
pub fn interpolate(lo: &ReadoutWeights, hi: &ReadoutWeights, q: f64) -> Result<ReadoutWeights> {
    let (Some(q_lo), Some(q_hi)) = (lo.trained_alpha, hi.trained_alpha) else {
        return Err(invalid("trained_alpha", "both readouts must carry their training α"));
    };
    match (lo.reservoir, hi.reservoir) {
        (Some(a), Some(b)) if a != b => return Err(Error::ReservoirMismatch { left: a, right: b }),
        _ => {}
    }
    if lo.w_out.shape() != hi.w_out.shape() {
        return Err(Error::LengthMismatch {
            what: "readout shapes",
            left: lo.w_out.len(),
            right: hi.w_out.len(),
        });
    }
    if q_lo > q_hi || q < q_lo || q > q_hi {
        return Err(invalid(
            "q",
            format!("need q- <= q <= q+, got {q_lo} <= {q} <= {q_hi}"),
        ));
    }
    if q_lo == q_hi {
        return Ok(lo.clone().with_alpha(q));
    }
    let span = q_hi - q_lo;
    let c_hi = (q - q_lo) / span;
    let c_lo = (q_hi - q) / span;
    Ok(ReadoutWeights {
        w_out: &hi.w_out * c_hi + &lo.w_out * c_lo,
        trained_alpha: Some(q),
        ridge_reg: lo.ridge_reg,
        reservoir: lo.reservoir.or(hi.reservoir),
        solver: lo.solver,
    })
}
