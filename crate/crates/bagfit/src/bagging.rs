//! Subsampled ensemble estimation: draw, fit, aggregate, and attach
//! spread-based inference.
//!
//! An ensemble run draws `K` subsamples of size `n` uniformly with
//! replacement from an `N`-row store, fits the model on each, and averages
//! the per-subsample coefficient vectors into the bagged estimate. The
//! spread of the ensemble then yields a covariance estimate
//!
//! ```text
//! SE²  =  (1/(nK) + 1/N) · (n/K) · Σ_k (θ̂ₖ - θ̄)(θ̂ₖ - θ̄)ᵀ
//! ```
//!
//! with the sum over all `K` subsamples divided by `K` exactly as written
//! (the factor `n/K` carries the divisor; no additional `K-1` correction).
//! The two bracketed terms account for subsampling noise and for the
//! sampling variability of the full dataset itself, so intervals built from
//! this estimate target the population parameter, not merely the full-data
//! fit.
//!
//! Every subsample's draw stream is derived by hashing, so results are
//! identical regardless of thread count or scheduling; a failed fit is
//! retried on fresh, equally deterministic draws a configured number of
//! times before the run as a whole reports failure.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BaggingConfig, Parallelism};
use crate::error::{Error, Result};
use crate::linalg::{vec_sub, Matrix};
use crate::model::LossModel;
use crate::sampler::{draw_indices, retry_key, subsample_key};
use crate::solver::fit_block;
use crate::stats::{std_normal_quantile, two_sided_p};
use crate::store::RowStore;

/// Output of one ensemble run.
#[derive(Debug, Clone)]
pub struct BaggingResult {
    /// Ensemble average of the per-subsample coefficient vectors.
    pub theta_bag: Vec<f64>,
    /// Per-subsample coefficient vectors, in subsample order (`K` rows).
    pub subsample_thetas: Vec<Vec<f64>>,
    /// Spread-based covariance estimate of `theta_bag`; `None` when the
    /// ensemble has a single subsample (spread is undefined).
    pub covariance: Option<Matrix>,
    /// Rows drawn per subsample (`n`).
    pub subsample_size: usize,
    /// Number of subsamples (`K`).
    pub n_subsamples: usize,
    /// Rows in the store (`N`).
    pub n_rows: u64,
    /// Master seed the run was keyed by.
    pub master_seed: u64,
    /// Total fresh-draw retries consumed across all subsamples.
    pub retries_used: usize,
}

impl BaggingResult {
    /// Per-coordinate standard errors (square roots of the covariance
    /// diagonal); `None` when the ensemble has a single subsample.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| c.diag().iter().map(|d| d.sqrt()).collect())
    }
}

/// Run a full ensemble estimation against a store.
///
/// Validates the configuration, fits all `K` subsamples (in parallel under
/// the configured policy), and aggregates. Reads exactly `n·K` rows when no
/// retries occur; each retry reads a further `n`.
pub fn bagging_estimate(
    model: &(impl LossModel + ?Sized),
    store: &RowStore,
    cfg: &BaggingConfig,
) -> Result<BaggingResult> {
    cfg.validate(store.n_rows())?;
    if model.dim() != store.covariate_dim() {
        return Err(Error::invalid(format!(
            "model dimension {} does not match store covariate dimension {}",
            model.dim(),
            store.covariate_dim()
        )));
    }

    let fits = match cfg.parallelism {
        Parallelism::Auto => fit_all_subsamples(model, store, cfg),
        Parallelism::Fixed(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
            pool.install(|| fit_all_subsamples(model, store, cfg))
        }
    };

    // Surface failures in subsample order, independent of scheduling.
    let mut thetas = Vec::with_capacity(cfg.n_subsamples);
    let mut retries_used = 0usize;
    for fit in fits {
        let (theta, retries) = fit?;
        thetas.push(theta);
        retries_used += retries;
    }

    let p = model.dim();
    let k = cfg.n_subsamples;
    let mut theta_bag = vec![0.0; p];
    for theta in &thetas {
        for (acc, v) in theta_bag.iter_mut().zip(theta) {
            *acc += v;
        }
    }
    for acc in theta_bag.iter_mut() {
        *acc /= k as f64;
    }

    let covariance = if k >= 2 {
        Some(aggregate_covariance(
            &thetas,
            &theta_bag,
            cfg.subsample_size,
            store.n_rows(),
        )?)
    } else {
        None
    };

    Ok(BaggingResult {
        theta_bag,
        subsample_thetas: thetas,
        covariance,
        subsample_size: cfg.subsample_size,
        n_subsamples: k,
        n_rows: store.n_rows(),
        master_seed: cfg.master_seed,
        retries_used,
    })
}

/// Fit every subsample, returning per-subsample outcomes in order.
fn fit_all_subsamples(
    model: &(impl LossModel + ?Sized),
    store: &RowStore,
    cfg: &BaggingConfig,
) -> Vec<Result<(Vec<f64>, usize)>> {
    (1..=cfg.n_subsamples)
        .into_par_iter()
        .map(|k| fit_one_subsample(model, store, cfg, k))
        .collect()
}

/// Fit subsample `k` (1-based), retrying on fresh draws up to the retry
/// limit. Returns the coefficients and the number of retries consumed.
fn fit_one_subsample(
    model: &(impl LossModel + ?Sized),
    store: &RowStore,
    cfg: &BaggingConfig,
    k: usize,
) -> Result<(Vec<f64>, usize)> {
    let mut last_error = None;
    for attempt in 0..=cfg.retry_limit {
        let key = if attempt == 0 {
            subsample_key(cfg.master_seed, k)
        } else {
            retry_key(cfg.master_seed, k, attempt)
        };
        let indices = draw_indices(key, cfg.subsample_size, store.n_rows());
        let block = store.fetch_rows(&indices)?;
        match fit_block(model, &block, &cfg.solver) {
            Ok(fit) => return Ok((fit.theta, attempt)),
            Err(e) if is_retryable_fit_failure(&e) => last_error = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::SubsampleFitFailed {
        subsample: k,
        attempts: cfg.retry_limit + 1,
        source: Box::new(last_error.expect("loop ran at least once")),
    })
}

/// Failures that a fresh draw can plausibly fix; anything else (I/O,
/// configuration, indexing bugs) propagates immediately.
fn is_retryable_fit_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::SingularHessian { .. }
            | Error::MaxIterExceeded { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteValue { .. }
            | Error::SingularMatrix { .. }
    )
}

/// The spread-based covariance estimate of the ensemble average:
/// `(1/(nK) + 1/N) · (n/K) · Σ_k (θ̂ₖ - center)(θ̂ₖ - center)ᵀ`.
///
/// Requires at least two subsamples; the sum runs over all of them and the
/// divisor is `K` exactly, carried by the `n/K` factor.
pub fn aggregate_covariance(
    thetas: &[Vec<f64>],
    center: &[f64],
    subsample_size: usize,
    n_rows: u64,
) -> Result<Matrix> {
    let k = thetas.len();
    if k < 2 {
        return Err(Error::Degenerate {
            detail: format!("covariance of an ensemble needs at least 2 subsamples, got {k}"),
        });
    }
    if subsample_size == 0 || n_rows == 0 {
        return Err(Error::Degenerate {
            detail: "covariance needs positive subsample size and row count".to_string(),
        });
    }
    let p = center.len();
    let mut spread = Matrix::zeros(p, p);
    for theta in thetas {
        if theta.len() != p {
            return Err(Error::invalid(
                "subsample coefficient vectors have inconsistent dimensions",
            ));
        }
        let d = vec_sub(theta, center);
        spread.add_sym_outer(&d, 1.0);
    }
    spread.mirror_upper();

    let n = subsample_size as f64;
    let kf = k as f64;
    let total = n_rows as f64;
    let factor = (1.0 / (n * kf) + 1.0 / total) * (n / kf);
    spread.scale(factor);
    Ok(spread)
}

/// Per-coordinate confidence intervals `theta ± z · se` at the given
/// two-sided level (e.g. `0.95`).
pub fn confidence_intervals(
    theta: &[f64],
    covariance: &Matrix,
    level: f64,
) -> Result<Vec<[f64; 2]>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must be strictly between 0 and 1, got {level}"
        )));
    }
    let z = std_normal_quantile((1.0 + level) / 2.0)?;
    Ok(theta
        .iter()
        .zip(covariance.diag())
        .map(|(t, var)| {
            let se = var.sqrt();
            [t - z * se, t + z * se]
        })
        .collect())
}

/// Two-sided Wald p-values per coordinate. A coordinate with zero standard
/// error is p = 1 when its estimate is exactly zero and an error otherwise
/// (the test statistic is undefined).
pub fn wald_p_values(theta: &[f64], covariance: &Matrix) -> Result<Vec<f64>> {
    theta
        .iter()
        .zip(covariance.diag())
        .enumerate()
        .map(|(j, (t, var))| {
            let se = var.sqrt();
            if se == 0.0 {
                if *t == 0.0 {
                    Ok(1.0)
                } else {
                    Err(Error::ZeroSe { coordinate: j })
                }
            } else {
                Ok(two_sided_p(t / se))
            }
        })
        .collect()
}

/// Serializable summary of an ensemble run, shaped for machine consumers.
///
/// `se`, `ci`, and `p_values` are `null` when the ensemble had a single
/// subsample. Per-subsample coefficients appear only on request.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub theta_bag: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub ci: Option<Vec<[f64; 2]>>,
    pub p_values: Option<Vec<f64>>,
    pub n: usize,
    #[serde(rename = "K")]
    pub n_subsamples: usize,
    #[serde(rename = "N")]
    pub n_rows: u64,
    pub seed: u64,
    pub retries_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_subsample_thetas: Option<Vec<Vec<f64>>>,
}

impl FitReport {
    /// Assemble a report at the given confidence level, optionally carrying
    /// the per-subsample coefficient vectors.
    pub fn from_result(
        result: &BaggingResult,
        level: f64,
        include_subsample_thetas: bool,
    ) -> Result<FitReport> {
        let (se, ci, p_values) = match &result.covariance {
            Some(cov) => (
                Some(
                    result
                        .standard_errors()
                        .expect("covariance present implies standard errors"),
                ),
                Some(confidence_intervals(&result.theta_bag, cov, level)?),
                Some(wald_p_values(&result.theta_bag, cov)?),
            ),
            None => (None, None, None),
        };
        Ok(FitReport {
            theta_bag: result.theta_bag.clone(),
            se,
            ci,
            p_values,
            n: result.subsample_size,
            n_subsamples: result.n_subsamples,
            n_rows: result.n_rows,
            seed: result.master_seed,
            retries_used: result.retries_used,
            per_subsample_thetas: include_subsample_thetas
                .then(|| result.subsample_thetas.clone()),
        })
    }
}


#[cfg(test)]
mod retry_tests {
    use super::*;
    use crate::model::{Family, GlmLoss};
    use crate::sampler::CounterRng;
    use crate::store::{Column, FieldValue, MemStoreBuilder, Schema};

    /// Intercept + one covariate, with a rare positive class: small
    /// subsamples frequently contain no positives at all, making the
    /// logistic fit diverge and forcing a fresh draw.
    fn rare_positive_store() -> RowStore {
        let schema = Schema::new(vec![
            Column::numeric("one"),
            Column::numeric("x"),
            Column::response("y"),
        ])
        .unwrap();
        let mut b = MemStoreBuilder::with_capacity(schema, 2000);
        let mut rng = CounterRng::new(1);
        for _ in 0..2000 {
            let x = rng.next_normal();
            let y = f64::from(rng.next_f64() < 0.05);
            b.append_row(&[
                FieldValue::Numeric(1.0),
                FieldValue::Numeric(x),
                FieldValue::Numeric(y),
            ])
            .unwrap();
        }
        b.finish()
    }

    #[test]
    fn failed_subsamples_are_retried_on_fresh_draws() {
        let store = rare_positive_store();
        let model = GlmLoss::new(Family::Logistic, 2).unwrap();
        let cfg = BaggingConfig::new(30, 10, 0);
        let result = bagging_estimate(&model, &store, &cfg).unwrap();
        assert_eq!(result.retries_used, 2, "frozen seed draws two retries");
        assert_eq!(result.subsample_thetas.len(), 10);
        // Retries cost one extra subsample read each.
        assert_eq!(store.read_counter(), 30 * (10 + 2));
    }

    #[test]
    fn exhausted_retries_surface_the_failing_subsample() {
        let store = rare_positive_store();
        let model = GlmLoss::new(Family::Logistic, 2).unwrap();
        let cfg = BaggingConfig::new(30, 10, 18);
        match bagging_estimate(&model, &store, &cfg) {
            Err(Error::SubsampleFitFailed {
                subsample,
                attempts,
                source,
            }) => {
                assert_eq!(subsample, 8, "frozen seed fails at subsample 8");
                assert_eq!(attempts, 4, "initial draw plus three retries");
                assert!(matches!(*source, Error::SingularHessian { .. }));
            }
            other => panic!("expected SubsampleFitFailed, got {other:?}"),
        }
    }

    #[test]
    fn zero_retry_limit_fails_fast() {
        let store = rare_positive_store();
        let model = GlmLoss::new(Family::Logistic, 2).unwrap();
        let mut cfg = BaggingConfig::new(30, 10, 0);
        cfg.retry_limit = 0;
        match bagging_estimate(&model, &store, &cfg) {
            Err(Error::SubsampleFitFailed { attempts: 1, .. }) => {}
            other => panic!("expected single-attempt failure, got {other:?}"),
        }
    }
}
