//! Acceptance gate: one test per shipping criterion, each asserting the
//! stated tolerance and printing a one-line summary (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria at a glance:
//!  1. linear fits match the closed-form least-squares oracle;
//!  2. analytic derivatives match finite differences for all families;
//!  3. the ensemble variance estimator matches a straight-line
//!     re-evaluation of its formula, including a hand-computed case;
//!  4. Monte Carlo SE and mean estimated SE track sqrt(1/(nK) + 1/N);
//!  5. interval coverage is near nominal when n/sqrt(N) >= 3;
//!  6. bias decays like 1/n (ratio near 4 when n quadruples);
//!  7. MSE is monotone in K and approaches the full-data fit;
//!  8. an ensemble fit reads exactly n*K rows;
//!  9. CLI outputs are byte-identical across reruns and thread counts;
//! 10. the index sampler passes a chi-square uniformity test.
//!
//! Full-scale reference studies (hours of runtime) are `#[ignore]`d; run
//! them with `cargo test --test acceptance -- --ignored`.

use std::process::Command;
use std::sync::OnceLock;

use bagfit::bagging::{aggregate_covariance, bagging_estimate};
use bagfit::config::{auto_subsample_size, BaggingConfig, SolverConfig};
use bagfit::linalg::Matrix;
use bagfit::model::{Family, GlmLoss, LossModel};
use bagfit::sampler::{hash64, CounterRng};
use bagfit::simulate::{
    flights_store_mem, flights_truth, monte_carlo, mse_curve, SimDesign, SimulationReport,
};
use bagfit::solver::{fit_block, fit_global};
use bagfit::store::{DataBlock, MemStoreBuilder, RowStore, Schema};

// ---------------------------------------------------------------------------
// Criterion 1: linear oracle equivalence.
// ---------------------------------------------------------------------------

/// Test-local least-squares oracle: solve the normal equations by Gaussian
/// elimination with partial pivoting (independent of the library's
/// Cholesky path).
fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..x.rows() {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += x.get(i, r) * x.get(i, c);
            }
            a[r][p] += x.get(i, r) * y[i];
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-10, "oracle system is singular");
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for c in col..=p {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut theta = vec![0.0; p];
    for row in (0..p).rev() {
        let mut s = a[row][p];
        for c in row + 1..p {
            s -= a[row][c] * theta[c];
        }
        theta[row] = s / a[row][row];
    }
    theta
}

fn random_linear_block(rng: &mut CounterRng, rows: usize, p: usize) -> DataBlock {
    let theta_star: Vec<f64> = (0..p).map(|_| rng.next_normal()).collect();
    let mut x = Matrix::zeros(rows, p);
    let mut y = vec![0.0; rows];
    for i in 0..rows {
        let mut u = 0.0;
        for j in 0..p {
            let v = rng.next_normal();
            x.set(i, j, v);
            u += v * theta_star[j];
        }
        y[i] = u + rng.next_normal();
    }
    DataBlock { x, y }
}

#[test]
fn criterion_01_linear_fits_match_the_least_squares_oracle() {
    let p = 5;
    let cfg = SolverConfig::default();
    let model = GlmLoss::new(Family::Linear, p).unwrap();
    let mut worst: f64 = 0.0;
    for instance in 0..50u64 {
        let mut rng = CounterRng::new(hash64(&[10_001, instance]));
        let rows = if instance % 2 == 0 { 50 } else { 5_000 };
        let block = random_linear_block(&mut rng, rows, p);
        let oracle = ols_oracle(&block.x, &block.y);

        let direct = fit_block(&model, &block, &cfg).unwrap();

        let mut builder = MemStoreBuilder::with_capacity(linear_schema(p), rows as u64);
        for i in 0..rows {
            let mut values: Vec<bagfit::store::FieldValue> = (0..p)
                .map(|j| bagfit::store::FieldValue::Numeric(block.x.get(i, j)))
                .collect();
            values.push(bagfit::store::FieldValue::Numeric(block.y[i]));
            builder.append_row(&values).unwrap();
        }
        let store = builder.finish();
        let scanned = fit_global(&model, &store, &cfg).unwrap();

        for j in 0..p {
            worst = worst
                .max((direct.theta[j] - oracle[j]).abs())
                .max((scanned.theta[j] - oracle[j]).abs());
        }
    }
    assert!(
        worst <= 1e-8,
        "worst |fit - oracle| = {worst:e}, beyond 1e-8"
    );
    println!("criterion 01: PASS  worst |fit - oracle| = {worst:.2e} over 50 instances");
}

fn linear_schema(p: usize) -> Schema {
    let mut cols: Vec<bagfit::store::Column> = (1..=p)
        .map(|j| bagfit::store::Column::numeric(format!("x{j}")))
        .collect();
    cols.push(bagfit::store::Column::response("y"));
    Schema::new(cols).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 2: derivative correctness by finite differences.
// ---------------------------------------------------------------------------

fn random_family_block(rng: &mut CounterRng, family: Family, rows: usize, p: usize) -> DataBlock {
    let theta_star: Vec<f64> = (0..p).map(|_| rng.next_normal() * 0.4).collect();
    let mut x = Matrix::zeros(rows, p);
    let mut y = vec![0.0; rows];
    for i in 0..rows {
        let mut u = 0.0;
        for j in 0..p {
            let v = rng.next_normal() * 0.8;
            x.set(i, j, v);
            u += v * theta_star[j];
        }
        y[i] = match family {
            Family::Linear => u + rng.next_normal(),
            Family::Logistic => f64::from(rng.next_f64() < 1.0 / (1.0 + (-u).exp())),
            Family::Poisson => rng.next_poisson(u.exp()) as f64,
        };
    }
    DataBlock { x, y }
}

#[test]
fn criterion_02_derivatives_match_finite_differences() {
    let p = 4;
    let rows = 30;
    let mut worst_grad: f64 = 0.0;
    let mut worst_hess: f64 = 0.0;
    for (f_idx, family) in [Family::Linear, Family::Logistic, Family::Poisson]
        .into_iter()
        .enumerate()
    {
        let model = GlmLoss::new(family, p).unwrap();
        for draw in 0..100u64 {
            let mut rng = CounterRng::new(hash64(&[20_002, f_idx as u64, draw]));
            let block = random_family_block(&mut rng, family, rows, p);
            let theta: Vec<f64> = (0..p).map(|_| rng.next_normal() * 0.3).collect();

            let grad = model.grad_sum(&block, &theta).unwrap();
            let hess = model.hess_sum(&block, &theta).unwrap();

            for j in 0..p {
                let h = 1e-6 * (1.0 + theta[j].abs());
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (model.loss_sum(&block, &up).unwrap()
                    - model.loss_sum(&block, &down).unwrap())
                    / (2.0 * h);
                let rel = (fd - grad[j]).abs() / grad[j].abs().max(1.0);
                worst_grad = worst_grad.max(rel);
                assert!(
                    rel <= 1e-5,
                    "{} gradient coordinate {j}: fd {fd} vs {g}, rel {rel:e}",
                    family.name(),
                    g = grad[j],
                );

                let h = 1e-5 * (1.0 + theta[j].abs());
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let gu = model.grad_sum(&block, &up).unwrap();
                let gd = model.grad_sum(&block, &down).unwrap();
                for i in 0..p {
                    let fd = (gu[i] - gd[i]) / (2.0 * h);
                    let rel = (fd - hess.get(i, j)).abs() / hess.get(i, j).abs().max(1.0);
                    worst_hess = worst_hess.max(rel);
                    assert!(
                        rel <= 1e-4,
                        "{} hessian ({i},{j}): fd {fd} vs {h0}, rel {rel:e}",
                        family.name(),
                        h0 = hess.get(i, j),
                    );
                }
            }
        }
    }
    println!(
        "criterion 02: PASS  worst relative error: gradient {worst_grad:.2e}, hessian {worst_hess:.2e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: the variance estimator equals its printed formula.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_variance_estimator_matches_straight_line_formula() {
    // Hand case: one coordinate, thetas {0, 2}, n = 10, K = 2, N = 100.
    // spread = (0-1)^2 + (2-1)^2 = 2; factor = (1/20 + 1/100) * (10/2) = 0.3.
    let hand = aggregate_covariance(&[vec![0.0], vec![2.0]], &[1.0], 10, 100).unwrap();
    assert!((hand.get(0, 0) - 0.6).abs() < 1e-15, "hand case: {}", hand.get(0, 0));

    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let mut rng = CounterRng::new(hash64(&[30_003, case]));
        let p = 1 + (rng.next_index(4) as usize);
        let k = 2 + (rng.next_index(11) as usize);
        let n = 5 + (rng.next_index(46) as usize);
        let n_rows = 50 + rng.next_index(951);
        let thetas: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..p).map(|_| rng.next_normal()).collect())
            .collect();
        let center: Vec<f64> = (0..p)
            .map(|j| thetas.iter().map(|t| t[j]).sum::<f64>() / k as f64)
            .collect();

        let cov = aggregate_covariance(&thetas, &center, n, n_rows).unwrap();

        // Straight-line re-evaluation, term by term.
        let factor = (1.0 / (n as f64 * k as f64) + 1.0 / n_rows as f64) * (n as f64 / k as f64);
        for i in 0..p {
            for j in 0..p {
                let spread: f64 = thetas
                    .iter()
                    .map(|t| (t[i] - center[i]) * (t[j] - center[j]))
                    .sum();
                let expected = factor * spread;
                let diff = (cov.get(i, j) - expected).abs();
                worst = worst.max(diff);
                assert!(
                    diff <= 1e-12,
                    "case {case} entry ({i},{j}): {} vs {expected}, diff {diff:e}",
                    cov.get(i, j),
                );
            }
        }
    }
    println!("criterion 03: PASS  hand case exact, worst |entry - formula| = {worst:.2e}");
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5 share one Monte Carlo study: linear design, N = 20000,
// B = 200, grid {500, 1000} x {50, 200}.
// ---------------------------------------------------------------------------

static SE_STUDY: OnceLock<SimulationReport> = OnceLock::new();

fn se_study() -> &'static SimulationReport {
    SE_STUDY.get_or_init(|| {
        let design = SimDesign::linear(20_000, 4_242);
        let grid = [(500, 50), (500, 200), (1_000, 50), (1_000, 200)];
        monte_carlo(&design, &grid, 200, 0.95).unwrap()
    })
}

#[test]
fn criterion_04_standard_errors_follow_the_scaling_law() {
    let report = se_study();
    let n_total = 20_000f64;
    let mut worst: f64 = 0.0;
    for cell in &report.cells {
        let target = (1.0 / (cell.n as f64 * cell.k as f64) + 1.0 / n_total).sqrt();
        for c in &cell.coords {
            let mc_dev = (c.se_mc / target - 1.0).abs();
            let mean_dev = (c.se_hat_mean / target - 1.0).abs();
            worst = worst.max(mc_dev).max(mean_dev);
            assert!(
                mc_dev <= 0.15,
                "(n={}, K={}) {}: monte carlo SE {:.5} vs target {target:.5} ({:+.1}%)",
                cell.n,
                cell.k,
                c.name,
                c.se_mc,
                (c.se_mc / target - 1.0) * 100.0
            );
            assert!(
                mean_dev <= 0.15,
                "(n={}, K={}) {}: mean estimated SE {:.5} vs target {target:.5} ({:+.1}%)",
                cell.n,
                cell.k,
                c.name,
                c.se_hat_mean,
                (c.se_hat_mean / target - 1.0) * 100.0
            );
        }
    }
    println!(
        "criterion 04: PASS  worst deviation from sqrt(1/(nK)+1/N): {:.1}% (allowed 15%)",
        worst * 100.0
    );
}

#[test]
fn criterion_05_coverage_is_near_nominal_when_subsamples_are_large_enough() {
    let report = se_study();
    let mut lo: f64 = 1.0;
    let mut hi: f64 = 0.0;
    for cell in &report.cells {
        assert!(
            cell.subsample_ratio >= 3.0,
            "cell (n={}, K={}) was meant to satisfy n/sqrt(N) >= 3",
            cell.n,
            cell.k
        );
        for c in &cell.coords {
            lo = lo.min(c.ecp);
            hi = hi.max(c.ecp);
            assert!(
                (0.90..=0.98).contains(&c.ecp),
                "(n={}, K={}) {}: coverage {} outside [0.90, 0.98]",
                cell.n,
                cell.k,
                c.name,
                c.ecp
            );
        }
    }
    println!("criterion 05: PASS  coverage across all cells and coordinates in [{lo:.3}, {hi:.3}]");
}

/// Full-scale reference for criterion 5 (slow; run with `-- --ignored`):
/// at N = 200000, B = 1000, the (n = 500, K = 50) cell's first coordinate
/// shows SE in [0.63, 0.77]e-2 and coverage within 0.02 of 0.927.
#[test]
#[ignore = "full-scale reference study; hours of runtime"]
fn criterion_05_full_scale_reference() {
    let design = SimDesign::linear(200_000, 4_242);
    let report = monte_carlo(&design, &[(500, 50)], 1_000, 0.95).unwrap();
    let c = &report.cells[0].coords[0];
    assert!(
        (0.0063..=0.0077).contains(&c.se_mc),
        "SE_1 = {} outside [0.63, 0.77]e-2",
        c.se_mc
    );
    assert!(
        (c.ecp - 0.927).abs() <= 0.02,
        "ECP_1 = {} beyond 0.927 +/- 0.02",
        c.ecp
    );
    println!(
        "criterion 05 (full scale): PASS  SE_1 = {:.4e}, ECP_1 = {:.3}",
        c.se_mc, c.ecp
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: bias decays like 1/n.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_bias_shrinks_like_one_over_subsample_size() {
    let design = SimDesign::logistic(20_000, 6_006);
    let report = monte_carlo(&design, &[(250, 250), (1_000, 250)], 1_000, 0.95).unwrap();
    let bias_small = report.cells[0].coords[0].bias;
    let bias_large = report.cells[1].coords[0].bias;
    let ratio = bias_small / bias_large;
    assert!(
        (2.0..=8.0).contains(&ratio),
        "bias ratio {ratio:.2} outside [2, 8] (bias: {bias_small:.2e} vs {bias_large:.2e})"
    );
    println!(
        "criterion 06: PASS  bias_1 {bias_small:.3e} (n=250) vs {bias_large:.3e} (n=1000), ratio {ratio:.2} (nominal 4)"
    );
}

/// Full-scale reference for criterion 6 (slow; run with `-- --ignored`):
/// at N = 200000 the K = 250 biases for n = 250 vs n = 1000 sit near
/// 0.302e-2 and 0.156e-2.
#[test]
#[ignore = "full-scale reference study; hours of runtime"]
fn criterion_06_full_scale_reference() {
    let design = SimDesign::logistic(200_000, 6_006);
    let report = monte_carlo(&design, &[(250, 250), (1_000, 250)], 1_000, 0.95).unwrap();
    let bias_small = report.cells[0].coords[0].bias;
    let bias_large = report.cells[1].coords[0].bias;
    let ratio = bias_small / bias_large;
    assert!(
        (2.0..=8.0).contains(&ratio),
        "bias ratio {ratio:.2} outside [2, 8] (bias: {bias_small:.2e} vs {bias_large:.2e})"
    );
    println!(
        "criterion 06 (full scale): PASS  bias_1 {bias_small:.3e} vs {bias_large:.3e}, ratio {ratio:.2}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: MSE is monotone in K and approaches the full-data fit.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_mse_decreases_in_k_toward_the_full_data_fit() {
    let design = SimDesign::linear(20_000, 7_007);
    let report = mse_curve(&design, 500, &[10, 40, 160, 640], 200).unwrap();
    for w in report.mse_bag.windows(2) {
        assert!(
            w[1] <= w[0] * 1.05,
            "MSE increased beyond 5% slack: {} -> {}",
            w[0],
            w[1]
        );
    }
    let final_ratio = report.mse_bag[3] / report.mse_global;
    assert!(
        final_ratio <= 1.2,
        "MSE(K=640)/MSE(global) = {final_ratio:.3} > 1.2"
    );
    let curve: Vec<String> = report
        .k_grid
        .iter()
        .zip(&report.mse_bag)
        .map(|(k, m)| format!("K={k}: {m:.2e}"))
        .collect();
    println!(
        "criterion 07: PASS  {}; global {:.2e}; final ratio {final_ratio:.3}",
        curve.join(", "),
        report.mse_global
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: an ensemble fit reads exactly n*K rows.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_fit_reads_exactly_n_times_k_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("million.store");
    SimDesign::linear(1_000_000, 8_008).generate_file(&path).unwrap();

    let store = RowStore::open(&path).unwrap();
    assert_eq!(store.n_rows(), 1_000_000);
    let model = GlmLoss::new(Family::Linear, store.covariate_dim()).unwrap();

    store.reset_read_counter();
    let result = bagging_estimate(&model, &store, &BaggingConfig::new(1_000, 100, 42)).unwrap();
    assert_eq!(result.retries_used, 0, "retries would add reads");
    assert_eq!(
        store.read_counter(),
        100_000,
        "read counter must equal n*K exactly"
    );
    println!(
        "criterion 08: PASS  N = 1000000, n = 1000, K = 100 -> read counter {}",
        store.read_counter()
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: CLI byte-determinism across reruns and thread counts.
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> (Vec<u8>, Vec<u8>, Option<i32>) {
    let out = Command::new(env!("CARGO_BIN_EXE_bagfit"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.stdout, out.stderr, out.status.code())
}

#[test]
fn criterion_09_cli_output_is_byte_identical_across_reruns_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("determinism.store");
    SimDesign::linear(50_000, 9_009).generate_file(&store_path).unwrap();
    let store_arg = store_path.to_str().unwrap();

    // fit: same flags, thread counts 1 and 8, twice each.
    let mut fit_outputs = Vec::new();
    for (threads, json_name) in [("1", "a.json"), ("8", "b.json"), ("1", "c.json"), ("8", "d.json")]
    {
        let json_path = dir.path().join(json_name);
        let (stdout, stderr, code) = run_cli(&[
            "fit",
            "--store",
            store_arg,
            "--family",
            "linear",
            "--n",
            "500",
            "--k",
            "40",
            "--seed",
            "7",
            "--threads",
            threads,
            "--json",
            json_path.to_str().unwrap(),
        ]);
        assert_eq!(code, Some(0), "fit failed: {}", String::from_utf8_lossy(&stderr));
        fit_outputs.push((stdout, std::fs::read(&json_path).unwrap()));
    }
    for (stdout, json) in &fit_outputs[1..] {
        assert_eq!(stdout, &fit_outputs[0].0, "fit table differs between runs");
        assert_eq!(json, &fit_outputs[0].1, "fit JSON differs between runs");
    }

    // simulate: same flags, thread counts 1 and 8, twice each.
    let mut sim_outputs = Vec::new();
    for threads in ["1", "8", "1", "8"] {
        let (stdout, stderr, code) = run_cli(&[
            "simulate",
            "--design",
            "linear",
            "--grid",
            "n=120;K=12",
            "--b",
            "10",
            "--n-total",
            "3000",
            "--seed",
            "5",
            "--threads",
            threads,
        ]);
        assert_eq!(
            code,
            Some(0),
            "simulate failed: {}",
            String::from_utf8_lossy(&stderr)
        );
        sim_outputs.push(stdout);
    }
    for stdout in &sim_outputs[1..] {
        assert_eq!(stdout, &sim_outputs[0], "simulate CSV differs between runs");
    }

    println!(
        "criterion 09: PASS  fit table {} bytes, fit JSON {} bytes, simulate CSV {} bytes, all byte-identical across 4 runs",
        fit_outputs[0].0.len(),
        fit_outputs[0].1.len(),
        sim_outputs[0].len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: index sampler uniformity.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_index_sampler_passes_chi_square_uniformity() {
    const BINS: u64 = 64;
    const DRAWS: u64 = 1_000_000;
    // chi-square(63) upper 0.001 quantile.
    const CRITICAL: f64 = 103.44237731987324;

    let mut rng = CounterRng::new(101_010);
    let mut counts = [0u64; BINS as usize];
    for _ in 0..DRAWS {
        counts[rng.next_index(BINS) as usize] += 1;
    }
    let expected = DRAWS as f64 / BINS as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(
        stat < CRITICAL,
        "chi-square statistic {stat:.2} exceeds the 0.001 critical value {CRITICAL:.2}"
    );
    println!(
        "criterion 10: PASS  chi-square({}) = {stat:.2} < {CRITICAL:.2} over {DRAWS} draws",
        BINS - 1
    );
}

// ---------------------------------------------------------------------------
// Real-data substitute: the categorical-heavy synthetic design recovers
// generator signs on every strongly significant coefficient, and the
// automatic subsample rule reproduces its reference value.
// ---------------------------------------------------------------------------

#[test]
fn criterion_note_categorical_design_recovers_signs_and_auto_rule_value() {
    assert_eq!(auto_subsample_size(120_748_239), 32_126);

    let store = flights_store_mem(200_000, 4).unwrap();
    let model = GlmLoss::new(Family::Logistic, store.covariate_dim()).unwrap();
    let n = auto_subsample_size(store.n_rows());
    let result = bagging_estimate(&model, &store, &BaggingConfig::new(n, 100, 42)).unwrap();
    let report = bagfit::bagging::FitReport::from_result(&result, 0.95, false).unwrap();
    let p_values = report.p_values.as_ref().unwrap();

    let truth = flights_truth();
    let mut significant = 0;
    for (j, name) in store.schema().expanded_names().iter().enumerate() {
        if p_values[j] < 1e-3 {
            significant += 1;
            assert_eq!(
                report.theta_bag[j].signum(),
                truth[j].signum(),
                "{name}: strongly significant coefficient with the wrong sign"
            );
        }
    }
    assert!(
        significant >= 12,
        "only {significant}/22 coefficients significant at p < 0.001"
    );
    println!(
        "criterion note: PASS  auto n(120748239) = 32126; {significant}/22 coefficients at p < 1e-3, all with generator signs (n = {n})"
    );
}
