//! Loss models: per-row objective terms and their Newton ingredients.
//!
//! A model maps a coefficient vector `theta` to a summed loss over a block
//! of rows, together with the gradient and Hessian needed for Newton
//! iteration. The built-in [`GlmLoss`] covers three negative log-likelihood
//! families (additive constants dropped), written in terms of the linear
//! predictor `u = xᵀtheta`:
//!
//! * linear (Gaussian): `(y - u)² / 2`, curvature weight `1`;
//! * logistic (Bernoulli): `softplus(u) - y·u`, weight `σ(u)(1 - σ(u))`;
//! * count (Poisson, log link): `exp(u) - y·u`, weight `exp(u)`.
//!
//! The logistic and count losses are evaluated in overflow-safe forms; the
//! count loss refuses linear predictors beyond `|u| > 700`, where `exp`
//! leaves the `f64` range.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::store::DataBlock;

/// Classification margin past which a logistic fit is declared divergent.
///
/// If every observation is classified correctly with margin above this
/// value, the summed loss is below `n · softplus(-15) ≈ n · 3.1e-7`. Data
/// that are not completely separated admit no such point: some observation
/// always contributes at least `softplus(0) = ln 2`. Hitting this regime
/// therefore proves the maximizer lies at infinity (for any realistic `n`),
/// and the solver reports failure instead of a silently "converged" answer.
const LOGISTIC_DIVERGENCE_MARGIN: f64 = 15.0;

/// Response family of a [`GlmLoss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Gaussian response, identity link (least squares).
    Linear,
    /// Bernoulli response, logit link.
    Logistic,
    /// Poisson response, log link.
    Poisson,
}

impl Family {
    /// Parse from the names used on the command line.
    pub fn parse(name: &str) -> Result<Family> {
        match name {
            "linear" => Ok(Family::Linear),
            "logistic" => Ok(Family::Logistic),
            "poisson" => Ok(Family::Poisson),
            other => Err(Error::invalid(format!(
                "unknown family {other:?}; expected linear, logistic, or poisson"
            ))),
        }
    }

    /// Canonical lower-case name.
    pub fn name(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
            Family::Poisson => "poisson",
        }
    }
}

/// Loss, gradient, and Hessian of one block at one point.
#[derive(Debug, Clone)]
pub struct NewtonTerms {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub hess: Matrix,
}

/// A twice-differentiable summed loss over data blocks.
///
/// Implementations must be pure functions of `(block, theta)`: the solver
/// relies on re-evaluation giving bit-identical results.
pub trait LossModel: Sync {
    /// Coefficient dimension (must match the block's covariate columns).
    fn dim(&self) -> usize;

    /// Summed loss over the block.
    fn loss_sum(&self, block: &DataBlock, theta: &[f64]) -> Result<f64>;

    /// Summed gradient over the block.
    fn grad_sum(&self, block: &DataBlock, theta: &[f64]) -> Result<Vec<f64>>;

    /// Summed Hessian over the block (exactly symmetric).
    fn hess_sum(&self, block: &DataBlock, theta: &[f64]) -> Result<Matrix>;

    /// All three Newton ingredients at once. The default composes the three
    /// single-purpose methods; implementations with a cheaper fused pass
    /// should override it, preserving the same accumulation order.
    fn newton_terms(&self, block: &DataBlock, theta: &[f64]) -> Result<NewtonTerms> {
        Ok(NewtonTerms {
            loss: self.loss_sum(block, theta)?,
            grad: self.grad_sum(block, theta)?,
            hess: self.hess_sum(block, theta)?,
        })
    }

    /// Detect a provably divergent iterate (an optimum at infinity), such
    /// as a logistic fit on completely separated data. Returns a
    /// human-readable reason when divergence is established. The default
    /// never reports divergence.
    fn check_divergence(&self, _block: &DataBlock, _theta: &[f64]) -> Option<String> {
        None
    }
}

/// Generalized linear model loss for one of the three [`Family`] choices.
#[derive(Debug, Clone)]
pub struct GlmLoss {
    family: Family,
    dim: usize,
}

/// Per-row terms: `(loss, d loss / d u, curvature weight)`.
#[inline]
fn linear_terms(u: f64, y: f64) -> (f64, f64, f64) {
    let r = u - y;
    (0.5 * r * r, r, 1.0)
}

/// Numerically stable logistic sigmoid.
#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logistic_terms(u: f64, y: f64) -> (f64, f64, f64) {
    // softplus(u) - y*u, evaluated without overflow on either side.
    let loss = if u > 0.0 {
        (1.0 - y) * u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p() - y * u
    };
    let s = sigmoid(u);
    (loss, s - y, s * (1.0 - s))
}

#[inline]
fn poisson_terms(u: f64, y: f64) -> Result<(f64, f64, f64)> {
    if u.abs() > 700.0 {
        return Err(Error::NonFiniteLoss {
            detail: format!("count-model linear predictor {u:.3e} overflows exp"),
        });
    }
    let eu = u.exp();
    Ok((eu - y * u, eu - y, eu))
}

impl GlmLoss {
    /// A loss of the given family over `dim` coefficients.
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        Ok(GlmLoss { family, dim })
    }

    /// The response family.
    pub fn family(&self) -> Family {
        self.family
    }

    /// Per-row terms for this family.
    #[inline]
    fn row_terms(&self, u: f64, y: f64) -> Result<(f64, f64, f64)> {
        match self.family {
            Family::Linear => Ok(linear_terms(u, y)),
            Family::Logistic => Ok(logistic_terms(u, y)),
            Family::Poisson => poisson_terms(u, y),
        }
    }

    fn check_block(&self, block: &DataBlock, theta: &[f64]) {
        assert_eq!(
            theta.len(),
            self.dim,
            "loss model: theta has wrong dimension"
        );
        assert_eq!(
            block.x.cols(),
            self.dim,
            "loss model: block covariate dimension mismatch"
        );
    }
}

impl LossModel for GlmLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss_sum(&self, block: &DataBlock, theta: &[f64]) -> Result<f64> {
        self.check_block(block, theta);
        let mut loss = 0.0;
        for i in 0..block.n_rows() {
            let u = dot(block.x.row(i), theta);
            let (l, _, _) = self.row_terms(u, block.y[i])?;
            loss += l;
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                detail: format!("summed {} loss is not finite", self.family.name()),
            });
        }
        Ok(loss)
    }

    fn grad_sum(&self, block: &DataBlock, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_block(block, theta);
        let mut grad = vec![0.0; self.dim];
        for i in 0..block.n_rows() {
            let x = block.x.row(i);
            let u = dot(x, theta);
            let (_, du, _) = self.row_terms(u, block.y[i])?;
            axpy(&mut grad, du, x);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: format!("{} gradient", self.family.name()),
            });
        }
        Ok(grad)
    }

    fn hess_sum(&self, block: &DataBlock, theta: &[f64]) -> Result<Matrix> {
        self.check_block(block, theta);
        let mut hess = Matrix::zeros(self.dim, self.dim);
        for i in 0..block.n_rows() {
            let x = block.x.row(i);
            let u = dot(x, theta);
            let (_, _, w) = self.row_terms(u, block.y[i])?;
            hess.add_sym_outer(x, w);
        }
        hess.mirror_upper();
        if hess.diag().iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: format!("{} Hessian", self.family.name()),
            });
        }
        Ok(hess)
    }

    /// Fused single pass: one linear-predictor evaluation per row feeds the
    /// loss, gradient, and Hessian together, in the same accumulation order
    /// as the single-purpose methods.
    fn newton_terms(&self, block: &DataBlock, theta: &[f64]) -> Result<NewtonTerms> {
        self.check_block(block, theta);
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        let mut hess = Matrix::zeros(self.dim, self.dim);
        for i in 0..block.n_rows() {
            let x = block.x.row(i);
            let u = dot(x, theta);
            let (l, du, w) = self.row_terms(u, block.y[i])?;
            loss += l;
            axpy(&mut grad, du, x);
            hess.add_sym_outer(x, w);
        }
        hess.mirror_upper();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                detail: format!("summed {} loss is not finite", self.family.name()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: format!("{} gradient", self.family.name()),
            });
        }
        if hess.diag().iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: format!("{} Hessian", self.family.name()),
            });
        }
        Ok(NewtonTerms { loss, grad, hess })
    }

    /// For the logistic family: report divergence when every observation is
    /// classified correctly with margin above [`LOGISTIC_DIVERGENCE_MARGIN`]
    /// — a state only completely separated data can reach.
    fn check_divergence(&self, block: &DataBlock, theta: &[f64]) -> Option<String> {
        if self.family != Family::Logistic {
            return None;
        }
        let mut min_margin = f64::INFINITY;
        for i in 0..block.n_rows() {
            let u = dot(block.x.row(i), theta);
            let margin = (2.0 * block.y[i] - 1.0) * u;
            if !(margin > 0.0) {
                return None;
            }
            min_margin = min_margin.min(margin);
        }
        if block.n_rows() > 0 && min_margin > LOGISTIC_DIVERGENCE_MARGIN {
            Some(format!(
                "complete separation: every observation classified with margin above {min_margin:.1}"
            ))
        } else {
            None
        }
    }
}
