//! Configuration types for the solver and the bagging ensemble.

use crate::error::{Error, Result};

/// Newton solver controls.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Convergence tolerance on the max-norm of the gradient.
    pub grad_tol: f64,
    /// Maximum Newton updates before giving up.
    pub max_iter: usize,
    /// Maximum step halvings within one update before giving up.
    pub step_halving_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-8,
            max_iter: 100,
            step_halving_max: 30,
        }
    }
}

impl SolverConfig {
    /// Check that the controls are usable.
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(Error::invalid(format!(
                "gradient tolerance must be positive and finite, got {}",
                self.grad_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Worker-thread policy for ensemble fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Use the process-wide default thread pool.
    Auto,
    /// Use a dedicated pool with exactly this many threads.
    Fixed(usize),
}

/// Controls for one bagged estimation run.
#[derive(Debug, Clone)]
pub struct BaggingConfig {
    /// Rows drawn per subsample (`n`).
    pub subsample_size: usize,
    /// Number of subsamples in the ensemble (`K`).
    pub n_subsamples: usize,
    /// Master seed; all per-subsample and per-retry streams are derived
    /// from it by hashing.
    pub master_seed: u64,
    /// How many fresh draws to attempt when a subsample fit fails.
    pub retry_limit: usize,
    /// Worker-thread policy.
    pub parallelism: Parallelism,
    /// Solver controls applied to every subsample fit.
    pub solver: SolverConfig,
}

impl BaggingConfig {
    /// A configuration with the given subsample geometry and seed, default
    /// retry limit, automatic parallelism, and default solver controls.
    pub fn new(subsample_size: usize, n_subsamples: usize, master_seed: u64) -> Self {
        BaggingConfig {
            subsample_size,
            n_subsamples,
            master_seed,
            retry_limit: 3,
            parallelism: Parallelism::Auto,
            solver: SolverConfig::default(),
        }
    }

    /// Check the configuration against a store of `n_rows` rows.
    pub fn validate(&self, n_rows: u64) -> Result<()> {
        self.solver.validate()?;
        if self.subsample_size == 0 {
            return Err(Error::invalid("subsample size must be at least 1"));
        }
        if self.n_subsamples == 0 {
            return Err(Error::invalid("number of subsamples must be at least 1"));
        }
        if n_rows == 0 {
            return Err(Error::EmptyInput);
        }
        if let Parallelism::Fixed(0) = self.parallelism {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        Ok(())
    }

    /// Advisory warnings about statistically questionable geometry. These
    /// do not block the run; callers decide where to surface them.
    pub fn warnings(&self, n_rows: u64) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.subsample_size as f64;
        let total = n_rows as f64;
        if self.subsample_size as u64 > n_rows {
            out.push(format!(
                "subsample size {} exceeds the {} rows available; \
                 draws will repeat rows heavily",
                self.subsample_size, n_rows
            ));
        }
        if n <= total.sqrt() {
            out.push(format!(
                "subsample size {} is at or below sqrt(N) = {:.1}; \
                 aggregation-based intervals may undercover — prefer n \
                 growing faster than sqrt(N)",
                self.subsample_size,
                total.sqrt()
            ));
        }
        out
    }
}

/// Default subsample size for a store of `n_rows` rows:
/// `floor(sqrt(N) * ln(ln(N)))`, clamped to at least 1.
///
/// This grows faster than `sqrt(N)` by a slowly increasing factor, the
/// regime in which the aggregated estimator is asymptotically normal with
/// estimable variance, while keeping the per-subsample fit cheap.
pub fn auto_subsample_size(n_rows: u64) -> usize {
    let n = n_rows as f64;
    let raw = n.sqrt() * n.ln().ln();
    if raw.is_finite() && raw >= 1.0 {
        raw.floor() as usize
    } else {
        1
    }
}
