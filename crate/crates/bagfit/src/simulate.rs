//! Synthetic data generation and Monte Carlo validation.
//!
//! Three reference designs share one coefficient vector spanning negative,
//! zero, and positive effects, so every recovery metric is exercised on
//! both signed and null coordinates:
//!
//! * linear: `y = xᵀθ + ε`, standard normal covariates and noise;
//! * logistic: `P(y=1) = σ(xᵀθ)`, standard normal covariates;
//! * count: `y ~ Poisson(exp(xᵀθ))`, covariates with AR(1) correlation 0.5.
//!
//! [`monte_carlo`] repeatedly regenerates data, runs the ensemble estimator
//! over a grid of `(n, K)` choices, and summarizes per-coordinate bias,
//! Monte Carlo spread, average estimated standard error, and empirical
//! interval coverage. [`mse_curve`] traces estimation error against the
//! ensemble size `K` and compares it with the full-data fit. Replication
//! `b` derives all of its randomness from `hash(design seed, b)`, so every
//! report is reproducible at any thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bagging::{bagging_estimate, BaggingResult};
use crate::config::{BaggingConfig, Parallelism, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Family, GlmLoss};
use crate::sampler::{hash64, CounterRng};
use crate::solver::{fit_global, FitResult};
use crate::stats::std_normal_quantile;
use crate::store::{Column, FieldValue, FileStoreWriter, MemStoreBuilder, RowStore, Schema};

/// Default coefficient vector of the reference designs.
pub const DEFAULT_THETA: [f64; 5] = [-0.2, -0.1, 0.0, 0.1, 0.2];

/// Correlation structure of the simulated covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovStructure {
    /// Independent standard normal covariates.
    Identity,
    /// AR(1) covariance: `cov(x_i, x_j) = rho^|i-j|`.
    Ar1(f64),
}

/// A fully specified data-generating design.
#[derive(Debug, Clone, Serialize)]
pub struct SimDesign {
    /// Response family.
    #[serde(serialize_with = "serialize_family")]
    pub family: Family,
    /// Rows per generated dataset (`N`).
    pub n_total: u64,
    /// True coefficients.
    pub theta0: Vec<f64>,
    /// Covariate correlation structure.
    pub covariates: CovStructure,
    /// Design seed; every replication derives its streams from it.
    pub seed: u64,
}

fn serialize_family<S: serde::Serializer>(f: &Family, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(f.name())
}

impl SimDesign {
    /// Linear design: independent covariates, unit-variance noise.
    pub fn linear(n_total: u64, seed: u64) -> Self {
        SimDesign {
            family: Family::Linear,
            n_total,
            theta0: DEFAULT_THETA.to_vec(),
            covariates: CovStructure::Identity,
            seed,
        }
    }

    /// Logistic design: independent covariates.
    pub fn logistic(n_total: u64, seed: u64) -> Self {
        SimDesign {
            family: Family::Logistic,
            n_total,
            theta0: DEFAULT_THETA.to_vec(),
            covariates: CovStructure::Identity,
            seed,
        }
    }

    /// Count design: AR(1) covariates with correlation 0.5.
    pub fn poisson(n_total: u64, seed: u64) -> Self {
        SimDesign {
            family: Family::Poisson,
            n_total,
            theta0: DEFAULT_THETA.to_vec(),
            covariates: CovStructure::Ar1(0.5),
            seed,
        }
    }

    /// The reference design for a family.
    pub fn for_family(family: Family, n_total: u64, seed: u64) -> Self {
        match family {
            Family::Linear => SimDesign::linear(n_total, seed),
            Family::Logistic => SimDesign::logistic(n_total, seed),
            Family::Poisson => SimDesign::poisson(n_total, seed),
        }
    }

    /// Coefficient dimension.
    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::EmptyInput);
        }
        if self.theta0.is_empty() || self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta0 must be non-empty and finite"));
        }
        if let CovStructure::Ar1(rho) = self.covariates {
            if !(rho.abs() < 1.0) {
                return Err(Error::invalid(format!(
                    "AR(1) correlation must satisfy |rho| < 1, got {rho}"
                )));
            }
        }
        Ok(())
    }

    /// Schema of the generated store: `x1..xp` numeric plus response `y`.
    pub fn schema(&self) -> Schema {
        let mut cols: Vec<Column> = (1..=self.dim())
            .map(|j| Column::numeric(format!("x{j}")))
            .collect();
        cols.push(Column::response("y"));
        Schema::new(cols).expect("design schema is valid by construction")
    }

    /// Generate one in-memory dataset from this design's seed.
    ///
    /// Row `i` consumes a fixed number of stream draws (`p` covariate
    /// normals, then one response draw), so the generated data depend only
    /// on `(design, seed)`.
    pub fn generate(&self) -> Result<RowStore> {
        self.generate_seeded(self.seed)
    }

    /// Generate one in-memory dataset from an explicit seed (used by the
    /// Monte Carlo driver to give each replication its own data).
    pub fn generate_seeded(&self, seed: u64) -> Result<RowStore> {
        let mut builder = MemStoreBuilder::with_capacity(self.schema(), self.n_total);
        self.generate_rows(seed, |row| builder.append_row(row))?;
        Ok(builder.finish())
    }

    /// Generate one dataset directly into an on-disk store, identical
    /// field-for-field to what [`SimDesign::generate`] builds in memory.
    pub fn generate_file(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut writer = FileStoreWriter::create(path, self.schema(), self.n_total)?;
        self.generate_rows(self.seed, |row| writer.append_row(row))?;
        writer.finish()
    }

    fn generate_rows(
        &self,
        seed: u64,
        mut sink: impl FnMut(&[FieldValue]) -> Result<()>,
    ) -> Result<()> {
        self.validate()?;
        let p = self.dim();
        let chol = match self.covariates {
            CovStructure::Identity => None,
            CovStructure::Ar1(rho) => {
                let mut sigma = Matrix::zeros(p, p);
                for i in 0..p {
                    for j in 0..p {
                        sigma.set(i, j, rho.powi((i as i32 - j as i32).abs()));
                    }
                }
                Some(sigma.cholesky()?)
            }
        };

        let mut rng = CounterRng::new(seed);
        let mut eps = vec![0.0; p];
        let mut values = Vec::with_capacity(p + 1);
        for _ in 0..self.n_total {
            for e in eps.iter_mut() {
                *e = rng.next_normal();
            }
            let x = match &chol {
                None => eps.clone(),
                Some(f) => f.apply(&eps),
            };
            let u: f64 = x.iter().zip(&self.theta0).map(|(a, b)| a * b).sum();
            let y = match self.family {
                Family::Linear => u + rng.next_normal(),
                Family::Logistic => {
                    let prob = 1.0 / (1.0 + (-u).exp());
                    f64::from(rng.next_f64() < prob)
                }
                Family::Poisson => rng.next_poisson(u.exp()) as f64,
            };
            values.clear();
            values.extend(x.iter().map(|&v| FieldValue::Numeric(v)));
            values.push(FieldValue::Numeric(y));
            sink(&values)?;
        }
        Ok(())
    }
}

/// Per-coordinate recovery metrics for one `(n, K)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct CoordMetrics {
    /// Covariate name.
    pub name: String,
    /// True coefficient.
    pub theta0: f64,
    /// Absolute difference between the Monte Carlo mean estimate and the
    /// truth.
    pub bias: f64,
    /// Monte Carlo standard deviation of the estimates.
    pub se_mc: f64,
    /// Average of the per-replication estimated standard errors.
    pub se_hat_mean: f64,
    /// Empirical coverage of the per-replication confidence intervals.
    pub ecp: f64,
}

/// Metrics for one `(n, K)` grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    /// Rows per subsample.
    pub n: usize,
    /// Subsamples per ensemble.
    pub k: usize,
    /// `n / sqrt(N)` — interval calibration improves as this grows.
    pub subsample_ratio: f64,
    /// `nK / N` — the fraction of the dataset read per run.
    pub read_fraction: f64,
    /// Per-coordinate metrics, in covariate order.
    pub coords: Vec<CoordMetrics>,
}

/// Full Monte Carlo summary over a grid of `(n, K)` cells.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub design: SimDesign,
    pub b_reps: usize,
    pub level: f64,
    pub cells: Vec<CellReport>,
}

impl SimulationReport {
    /// Write one CSV row per (cell, coordinate) with a fixed header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family",
            "seed",
            "n_total",
            "b_reps",
            "level",
            "n",
            "k",
            "subsample_ratio",
            "read_fraction",
            "coord",
            "name",
            "theta0",
            "bias",
            "se_mc",
            "se_hat_mean",
            "ecp",
        ])
        .map_err(Error::from)?;
        for cell in &self.cells {
            for (j, c) in cell.coords.iter().enumerate() {
                w.write_record([
                    self.design.family.name().to_string(),
                    self.design.seed.to_string(),
                    self.design.n_total.to_string(),
                    self.b_reps.to_string(),
                    self.level.to_string(),
                    cell.n.to_string(),
                    cell.k.to_string(),
                    cell.subsample_ratio.to_string(),
                    cell.read_fraction.to_string(),
                    j.to_string(),
                    c.name.clone(),
                    c.theta0.to_string(),
                    c.bias.to_string(),
                    c.se_mc.to_string(),
                    c.se_hat_mean.to_string(),
                    c.ecp.to_string(),
                ])
                .map_err(Error::from)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One replication's outcome for every grid cell.
struct RepOutcome {
    /// Per cell: the bagged estimate, its standard errors, and whether each
    /// coordinate's interval covered the truth.
    cells: Vec<(Vec<f64>, Vec<f64>, Vec<bool>)>,
}

/// Run `b_reps` independent replications of the full pipeline (generate,
/// subsample, fit, aggregate) for every `(n, K)` cell of the grid, and
/// summarize recovery per coordinate.
///
/// All cells of one replication share the same generated dataset and the
/// same ensemble seed, so cell-to-cell comparisons are common-random-number
/// comparisons. Replication `b` uses data seed `hash(seed, b, 1)` and
/// ensemble seed `hash(seed, b, 2)`.
pub fn monte_carlo(
    design: &SimDesign,
    grid: &[(usize, usize)],
    b_reps: usize,
    level: f64,
) -> Result<SimulationReport> {
    design.validate()?;
    if grid.is_empty() {
        return Err(Error::invalid("grid must contain at least one (n, K) cell"));
    }
    if b_reps < 2 {
        return Err(Error::invalid(
            "Monte Carlo summaries need at least 2 replications",
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let z = std_normal_quantile((1.0 + level) / 2.0)?;
    let p = design.dim();

    let outcomes: Vec<Result<RepOutcome>> = (1..=b_reps as u64)
        .into_par_iter()
        .map(|b| {
            let rep_seed = hash64(&[design.seed, b]);
            let data_seed = hash64(&[rep_seed, 1]);
            let bag_seed = hash64(&[rep_seed, 2]);
            let store = design.generate_seeded(data_seed)?;
            let model = GlmLoss::new(design.family, p)?;
            let mut cells = Vec::with_capacity(grid.len());
            for &(n, k) in grid {
                let mut cfg = BaggingConfig::new(n, k, bag_seed);
                cfg.parallelism = Parallelism::Auto;
                let result = bagging_estimate(&model, &store, &cfg)?;
                let se = result
                    .standard_errors()
                    .ok_or_else(|| Error::Degenerate {
                        detail: "Monte Carlo cells need K >= 2".to_string(),
                    })?;
                let covered: Vec<bool> = result
                    .theta_bag
                    .iter()
                    .zip(&se)
                    .zip(&design.theta0)
                    .map(|((est, s), truth)| (est - truth).abs() <= z * s)
                    .collect();
                cells.push((result.theta_bag, se, covered));
            }
            Ok(RepOutcome { cells })
        })
        .collect();

    // Collate in replication order.
    let mut reps = Vec::with_capacity(b_reps);
    for outcome in outcomes {
        reps.push(outcome?);
    }

    let names = design.schema().expanded_names();
    let total = design.n_total as f64;
    let cells = grid
        .iter()
        .enumerate()
        .map(|(cell_idx, &(n, k))| {
            let coords = (0..p)
                .map(|j| {
                    let estimates: Vec<f64> =
                        reps.iter().map(|r| r.cells[cell_idx].0[j]).collect();
                    let mean = estimates.iter().sum::<f64>() / b_reps as f64;
                    let var = estimates
                        .iter()
                        .map(|e| (e - mean) * (e - mean))
                        .sum::<f64>()
                        / b_reps as f64;
                    let se_hat_mean = reps
                        .iter()
                        .map(|r| r.cells[cell_idx].1[j])
                        .sum::<f64>()
                        / b_reps as f64;
                    let ecp = reps
                        .iter()
                        .filter(|r| r.cells[cell_idx].2[j])
                        .count() as f64
                        / b_reps as f64;
                    CoordMetrics {
                        name: names[j].clone(),
                        theta0: design.theta0[j],
                        bias: (mean - design.theta0[j]).abs(),
                        se_mc: var.sqrt(),
                        se_hat_mean,
                        ecp,
                    }
                })
                .collect();
            CellReport {
                n,
                k,
                subsample_ratio: n as f64 / total.sqrt(),
                read_fraction: (n * k) as f64 / total,
                coords,
            }
        })
        .collect();

    Ok(SimulationReport {
        design: design.clone(),
        b_reps,
        level,
        cells,
    })
}

/// Estimation error of the ensemble average as the ensemble grows, against
/// the full-data fit on the same datasets.
#[derive(Debug, Clone, Serialize)]
pub struct MseCurveReport {
    pub design: SimDesign,
    pub b_reps: usize,
    /// Rows per subsample.
    pub n: usize,
    /// Ensemble sizes evaluated, ascending.
    pub k_grid: Vec<usize>,
    /// Mean squared error (summed over coordinates) of the ensemble
    /// average at each `k_grid` entry.
    pub mse_bag: Vec<f64>,
    /// Mean squared error of the full-data fit.
    pub mse_global: f64,
}

impl MseCurveReport {
    /// Write one CSV row per ensemble size with a fixed header; the
    /// full-data reference appears on every row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family",
            "seed",
            "n_total",
            "b_reps",
            "n",
            "k",
            "mse_bag",
            "mse_global",
        ])
        .map_err(Error::from)?;
        for (k, mse) in self.k_grid.iter().zip(&self.mse_bag) {
            w.write_record([
                self.design.family.name().to_string(),
                self.design.seed.to_string(),
                self.design.n_total.to_string(),
                self.b_reps.to_string(),
                self.n.to_string(),
                k.to_string(),
                mse.to_string(),
                self.mse_global.to_string(),
            ])
            .map_err(Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trace mean squared estimation error against ensemble size.
///
/// Each replication draws the *largest* requested ensemble once and reuses
/// its leading subsamples for the smaller sizes — the first `K` fits of an
/// ensemble are themselves a complete size-`K` ensemble, so every grid
/// point sees identically distributed draws while sharing data, which
/// keeps the traced curve smooth at moderate replication counts.
pub fn mse_curve(
    design: &SimDesign,
    subsample_size: usize,
    k_grid: &[usize],
    b_reps: usize,
) -> Result<MseCurveReport> {
    design.validate()?;
    if k_grid.is_empty() {
        return Err(Error::invalid("k grid must not be empty"));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) || k_grid[0] == 0 {
        return Err(Error::invalid(
            "k grid must be positive and strictly increasing",
        ));
    }
    if b_reps == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let k_max = *k_grid.last().expect("non-empty grid");
    let p = design.dim();

    let per_rep: Vec<Result<(Vec<f64>, f64)>> = (1..=b_reps as u64)
        .into_par_iter()
        .map(|b| {
            let rep_seed = hash64(&[design.seed, b]);
            let data_seed = hash64(&[rep_seed, 1]);
            let bag_seed = hash64(&[rep_seed, 2]);
            let store = design.generate_seeded(data_seed)?;
            let model = GlmLoss::new(design.family, p)?;

            let global: FitResult = fit_global(&model, &store, &SolverConfig::default())?;
            let global_err = squared_error(&global.theta, &design.theta0);

            let cfg = BaggingConfig::new(subsample_size, k_max, bag_seed);
            let result: BaggingResult = bagging_estimate(&model, &store, &cfg)?;

            // Prefix means over the per-subsample coefficients.
            let mut bag_errs = Vec::with_capacity(k_grid.len());
            let mut running = vec![0.0; p];
            let mut next_grid = 0usize;
            for (count, theta) in result.subsample_thetas.iter().enumerate() {
                for (acc, v) in running.iter_mut().zip(theta) {
                    *acc += v;
                }
                let k = count + 1;
                if next_grid < k_grid.len() && k == k_grid[next_grid] {
                    let mean: Vec<f64> =
                        running.iter().map(|s| s / k as f64).collect();
                    bag_errs.push(squared_error(&mean, &design.theta0));
                    next_grid += 1;
                }
            }
            Ok((bag_errs, global_err))
        })
        .collect();

    let mut mse_bag = vec![0.0; k_grid.len()];
    let mut mse_global = 0.0;
    for rep in per_rep {
        let (bag_errs, global_err) = rep?;
        for (acc, e) in mse_bag.iter_mut().zip(&bag_errs) {
            *acc += e;
        }
        mse_global += global_err;
    }
    for acc in mse_bag.iter_mut() {
        *acc /= b_reps as f64;
    }
    mse_global /= b_reps as f64;

    Ok(MseCurveReport {
        design: design.clone(),
        b_reps,
        n: subsample_size,
        k_grid: k_grid.to_vec(),
        mse_bag,
        mse_global,
    })
}

fn squared_error(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum()
}

// ---------------------------------------------------------------------------
// A larger categorical-heavy synthetic design, shaped like a flight-delay
// table: a binary outcome against distance, departure slot, weekday, and
// month (22 expanded coefficients including the intercept).
// ---------------------------------------------------------------------------

const DEP_SLOTS: [&str; 4] = ["midnight", "morning", "afternoon", "evening"];
const WEEKDAYS: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];
const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Schema of the flight-delay-shaped design: intercept, one numeric
/// covariate, three categorical covariates, binary response.
pub fn flights_schema() -> Schema {
    Schema::new(vec![
        Column::numeric("intercept"),
        Column::numeric("Distance"),
        Column::categorical("DepTime", DEP_SLOTS.iter().map(|s| s.to_string()).collect()),
        Column::categorical("DayOfWeek", WEEKDAYS.iter().map(|s| s.to_string()).collect()),
        Column::categorical("Month", MONTHS.iter().map(|s| s.to_string()).collect()),
        Column::response("Delayed"),
    ])
    .expect("flights schema is valid by construction")
}

/// True coefficients of the flight-delay-shaped design, aligned with
/// [`flights_schema`]'s expanded covariate order: a negative intercept
/// (delays are the minority class), a positive distance effect, delay odds
/// rising through the day, and mild weekday/month effects with a December
/// uptick.
pub fn flights_truth() -> Vec<f64> {
    let mut theta = vec![
        -2.0, // intercept
        0.12, // Distance
        0.40, 0.86, 1.06, // DepTime: morning, afternoon, evening
        -0.05, 0.05, 0.20, 0.25, -0.17, -0.015, // DayOfWeek: Tuesday..Sunday
    ];
    theta.extend_from_slice(&[
        -0.10, -0.06, -0.18, -0.28, -0.09, -0.16, -0.24, -0.53, -0.39, -0.33,
        0.15, // Month: February..December
    ]);
    theta
}

/// Generate the flight-delay-shaped design into any row sink.
fn generate_flights_rows(
    n_rows: u64,
    seed: u64,
    mut sink: impl FnMut(&[FieldValue]) -> Result<()>,
) -> Result<()> {
    let truth = flights_truth();
    let mut rng = CounterRng::new(seed);
    for _ in 0..n_rows {
        let distance = rng.next_normal();
        let dep = rng.next_index(DEP_SLOTS.len() as u64);
        let day = rng.next_index(WEEKDAYS.len() as u64);
        let month = rng.next_index(MONTHS.len() as u64);

        let mut u = truth[0] + truth[1] * distance;
        if dep > 0 {
            u += truth[1 + dep as usize]; // morning/afternoon/evening at 2..=4
        }
        if day > 0 {
            u += truth[4 + day as usize]; // Tuesday..Sunday at 5..=10
        }
        if month > 0 {
            u += truth[10 + month as usize]; // February..December at 11..=21
        }
        let prob = 1.0 / (1.0 + (-u).exp());
        let y = f64::from(rng.next_f64() < prob);

        sink(&[
            FieldValue::Numeric(1.0),
            FieldValue::Numeric(distance),
            FieldValue::Code(dep),
            FieldValue::Code(day),
            FieldValue::Code(month),
            FieldValue::Numeric(y),
        ])?;
    }
    Ok(())
}

/// Generate the flight-delay-shaped design in memory.
pub fn flights_store_mem(n_rows: u64, seed: u64) -> Result<RowStore> {
    let mut builder = MemStoreBuilder::with_capacity(flights_schema(), n_rows);
    generate_flights_rows(n_rows, seed, |row| builder.append_row(row))?;
    Ok(builder.finish())
}

/// Generate the flight-delay-shaped design into an on-disk store.
pub fn flights_store_file(path: impl AsRef<std::path::Path>, n_rows: u64, seed: u64) -> Result<()> {
    let mut writer = FileStoreWriter::create(path, flights_schema(), n_rows)?;
    generate_flights_rows(n_rows, seed, |row| writer.append_row(row))?;
    writer.finish()
}
