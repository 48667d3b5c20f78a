//! Damped Newton solver for summed losses, over in-memory blocks or entire
//! stores.
//!
//! Each update solves the Newton system with the exact Hessian and then
//! backtracks by step halving until the loss stops increasing. Convergence
//! is declared on the max-norm of the gradient. Every failure mode is an
//! explicit error: a non-factorable Hessian or a provably divergent iterate
//! reports [`Error::SingularHessian`]; running out of iterations or of step
//! halvings reports [`Error::MaxIterExceeded`]. A fit never returns a
//! silently wrong answer.
//!
//! [`fit_global`] runs the same iteration against a whole store, streaming
//! each pass in fixed-size chunks that may be processed in parallel. The
//! chunk partials are reduced in index order, so results are identical
//! whatever the thread count.

use rayon::prelude::*;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg::{axpy, max_abs, Matrix};
use crate::model::{LossModel, NewtonTerms};
use crate::store::{DataBlock, RowStore};

/// Rows per chunk for store-streaming passes. Results depend on this
/// constant (it fixes the reduction tree) but never on the thread count.
const SCAN_CHUNK_ROWS: usize = 8192;

/// Outcome of a successful fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Coefficients at convergence.
    pub theta: Vec<f64>,
    /// Newton updates applied.
    pub iterations: usize,
    /// Max-norm of the gradient at the solution.
    pub final_grad_norm: f64,
    /// Hessian of the summed loss at the solution.
    pub hessian: Matrix,
}

/// Evaluate Newton terms either on a block or by scanning a store.
trait TermSource {
    fn terms(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> Result<NewtonTerms>;
    fn loss(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> Result<f64>;
    fn diverged(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> bool;
}

struct BlockSource<'a>(&'a DataBlock);

impl TermSource for BlockSource<'_> {
    fn terms(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> Result<NewtonTerms> {
        model.newton_terms(self.0, theta)
    }

    fn loss(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> Result<f64> {
        model.loss_sum(self.0, theta)
    }

    fn diverged(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> bool {
        model.check_divergence(self.0, theta).is_some()
    }
}

struct StoreSource<'a>(&'a RowStore);

impl StoreSource<'_> {
    fn chunk_ranges(&self) -> Vec<(u64, usize)> {
        let n = self.0.n_rows();
        let chunk = SCAN_CHUNK_ROWS as u64;
        let mut ranges = Vec::with_capacity(n.div_ceil(chunk) as usize);
        let mut start = 0u64;
        while start < n {
            let len = chunk.min(n - start) as usize;
            ranges.push((start, len));
            start += len as u64;
        }
        ranges
    }
}

impl TermSource for StoreSource<'_> {
    fn terms(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> Result<NewtonTerms> {
        let partials: Vec<Result<NewtonTerms>> = self
            .chunk_ranges()
            .into_par_iter()
            .map(|(start, len)| {
                let block = self.0.fetch_range(start, len)?;
                model.newton_terms(&block, theta)
            })
            .collect();
        // Reduce in chunk order: deterministic across thread counts.
        let p = model.dim();
        let mut total = NewtonTerms {
            loss: 0.0,
            grad: vec![0.0; p],
            hess: Matrix::zeros(p, p),
        };
        for partial in partials {
            let t = partial?;
            total.loss += t.loss;
            axpy(&mut total.grad, 1.0, &t.grad);
            total.hess.add_assign(&t.hess);
        }
        Ok(total)
    }

    fn loss(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> Result<f64> {
        let partials: Vec<Result<f64>> = self
            .chunk_ranges()
            .into_par_iter()
            .map(|(start, len)| {
                let block = self.0.fetch_range(start, len)?;
                model.loss_sum(&block, theta)
            })
            .collect();
        let mut total = 0.0;
        for partial in partials {
            total += partial?;
        }
        Ok(total)
    }

    fn diverged(&self, model: &(impl LossModel + ?Sized), theta: &[f64]) -> bool {
        // Divergence means *every* observation sits past the margin, so a
        // single non-divergent chunk clears the whole store.
        self.chunk_ranges().into_iter().all(|(start, len)| {
            match self.0.fetch_range(start, len) {
                Ok(block) => model.check_divergence(&block, theta).is_some(),
                Err(_) => false,
            }
        })
    }
}

/// Fit a model on an in-memory block by damped Newton iteration, starting
/// from the zero vector.
pub fn fit_block(
    model: &(impl LossModel + ?Sized),
    block: &DataBlock,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    newton_loop(model, &BlockSource(block), cfg)
}

/// Fit a model on an entire store by damped Newton iteration with chunked,
/// parallel scan passes. Reads `n_rows` rows per pass.
pub fn fit_global(
    model: &(impl LossModel + ?Sized),
    store: &RowStore,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if store.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    newton_loop(model, &StoreSource(store), cfg)
}

fn newton_loop(
    model: &(impl LossModel + ?Sized),
    source: &impl TermSource,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    let p = model.dim();
    let mut theta = vec![0.0; p];
    let mut terms = source.terms(model, &theta)?;
    let mut iterations = 0usize;

    loop {
        let grad_norm = max_abs(&terms.grad);
        if grad_norm <= cfg.grad_tol {
            // A gradient this small can also mean the objective has gone
            // flat along a divergent ray; refuse to report such a point.
            if source.diverged(model, &theta) {
                return Err(Error::SingularHessian {
                    iteration: iterations,
                });
            }
            return Ok(FitResult {
                theta,
                iterations,
                final_grad_norm: grad_norm,
                hessian: terms.hess,
            });
        }
        if iterations >= cfg.max_iter {
            return Err(Error::MaxIterExceeded {
                max_iter: cfg.max_iter,
                grad_norm,
            });
        }

        let step = terms.hess.spd_solve(&terms.grad).map_err(|e| match e {
            Error::SingularMatrix { .. } => Error::SingularHessian {
                iteration: iterations + 1,
            },
            other => other,
        })?;

        // Backtracking: accept the first halved step that does not increase
        // the loss; a candidate that overflows the loss is treated as worse.
        // The acceptance test allows a rounding-level slack: near the
        // optimum the true decrease of a Newton step falls below the
        // resolution of the summed loss, and without slack the search would
        // reject every productive step and stall above the gradient
        // tolerance.
        let slack = 1e-14 * (1.0 + terms.loss.abs());
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..=cfg.step_halving_max {
            let mut candidate = theta.clone();
            axpy(&mut candidate, -scale, &step);
            match source.loss(model, &candidate) {
                Ok(loss) if loss <= terms.loss + slack => {
                    let new_terms = source.terms(model, &candidate)?;
                    theta = candidate;
                    terms = new_terms;
                    accepted = true;
                    break;
                }
                Ok(_) => {}
                Err(Error::NonFiniteLoss { .. }) | Err(Error::NonFiniteValue { .. }) => {}
                Err(other) => return Err(other),
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::MaxIterExceeded {
                max_iter: cfg.max_iter,
                grad_norm,
            });
        }
        iterations += 1;
    }
}
