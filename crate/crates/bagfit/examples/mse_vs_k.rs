//! How many subsamples are enough? Trace estimation error against K.
//!
//! The ensemble's mean squared error decays like 1/(nK) toward a floor set
//! by the full dataset (the 1/N term), so doubling K stops paying once
//! nK approaches N. Run with `cargo run --release --example mse_vs_k`.

use bagfit::simulate::{mse_curve, SimDesign};

fn main() -> bagfit::Result<()> {
    let design = SimDesign::linear(20_000, 42);
    let subsample_size = 500;
    let k_grid = [5, 10, 20, 40, 80, 160];
    let replications = 60;

    let report = mse_curve(&design, subsample_size, &k_grid, replications)?;

    println!(
        "linear design, N = {}, n = {}, {} replications\n",
        design.n_total, subsample_size, replications
    );
    println!(
        "{:>5} {:>12} {:>18} {:>14}",
        "K", "mse", "vs full-data fit", "rows read"
    );
    for (k, mse) in report.k_grid.iter().zip(&report.mse_bag) {
        println!(
            "{:>5} {:>12.3e} {:>17.2}x {:>14}",
            k,
            mse,
            mse / report.mse_global,
            k * subsample_size
        );
    }
    println!(
        "\nfull-data fit: mse {:.3e} reading all {} rows",
        report.mse_global, design.n_total
    );
    println!(
        "at K = {} the ensemble reads {} of {} rows and is within {:.0}% of it",
        k_grid[5],
        k_grid[5] * subsample_size,
        design.n_total,
        (report.mse_bag[5] / report.mse_global - 1.0) * 100.0
    );
    Ok(())
}
