//! Ingest a CSV file into a binary store and fit against it.
//!
//! Ingestion standardizes numeric covariates to population mean 0 and
//! standard deviation 1, encodes categorical levels in first-seen order
//! (the first level is the baseline), and stores the response unchanged.
//! Run with `cargo run --example ingest_csv`.

use std::fmt::Write as _;

use bagfit::bagging::{bagging_estimate, FitReport};
use bagfit::config::BaggingConfig;
use bagfit::ingest::{ingest_csv, ColumnSpec, IngestOptions};
use bagfit::model::{Family, GlmLoss};
use bagfit::sampler::CounterRng;
use bagfit::store::RowStore;

fn main() -> bagfit::Result<()> {
    let dir = std::env::temp_dir().join("bagfit_ingest_csv");
    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join("visits.csv");
    let store_path = dir.join("visits.store");

    // A synthetic "site visits" table: minutes on site, device class, and
    // whether the visit converted.
    let mut csv = String::from("minutes,device,converted\n");
    let mut rng = CounterRng::new(11);
    for _ in 0..5_000 {
        let minutes = (rng.next_normal() * 4.0 + 10.0).abs();
        let device = ["desktop", "phone", "tablet"][rng.next_index(3) as usize];
        let boost = match device {
            "phone" => -0.8,
            "tablet" => -0.3,
            _ => 0.0,
        };
        let u = -1.5 + 0.15 * (minutes - 10.0) + boost;
        let converted = u64::from(rng.next_f64() < 1.0 / (1.0 + (-u).exp()));
        let _ = writeln!(csv, "{minutes:.2},{device},{converted}");
    }
    std::fs::write(&csv_path, csv)?;

    // Declare how each column enters the model; unlisted CSV columns are
    // ignored. The intercept flag prepends a constant-one covariate.
    let options = IngestOptions::new(vec![
        ColumnSpec::numeric("minutes"),
        ColumnSpec::categorical("device"),
        ColumnSpec::response("converted"),
    ])
    .with_intercept();
    let report = ingest_csv(&csv_path, &store_path, &options)?;
    println!("{}", report.describe());

    // Fit a logistic ensemble against the store.
    let store = RowStore::open(&store_path)?;
    let model = GlmLoss::new(Family::Logistic, store.covariate_dim())?;
    let cfg = BaggingConfig::new(400, 40, 42);
    let result = bagging_estimate(&model, &store, &cfg)?;
    let fit = FitReport::from_result(&result, 0.95, false)?;

    let se = fit.se.as_ref().expect("K >= 2 yields standard errors");
    println!("{:<16} {:>10} {:>9}", "coefficient", "estimate", "se");
    for (j, name) in store.schema().expanded_names().iter().enumerate() {
        println!("{:<16} {:>10.4} {:>9.4}", name, fit.theta_bag[j], se[j]);
    }
    println!(
        "\nminutes is reported per standard deviation of the raw column; \
         device=phone and device=tablet are offsets from the desktop baseline."
    );
    Ok(())
}
