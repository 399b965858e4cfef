//! Sweep the routing sub-grid (experts × capacity × dispatch) with a very
//! small budget and print the resulting CSV table.
//!
//! ```bash
//! cargo run --release --example ablation_mini
//! ```

use chartcode::chartlab::{gen_dataset, TypeMix};
use chartcode::training::{run_ablation, GridSelect, RunConfig};

fn main() {
    let base = RunConfig::from_toml(
        "epochs = 1\n\
         batch = 2\n\
         train_limit = 6\n\
         eval_limit = 4\n\
         model.d = 16\n\
         model.heads = 2\n\
         lora.rank = 4\n",
        &[],
    )
    .expect("config");
    let dataset = gen_dataset(base.seed, 30, &TypeMix::default_mix()).expect("dataset");

    let dir = tempfile::tempdir().expect("tempdir");
    let csv = dir.path().join("ablation.csv");
    run_ablation(
        &base,
        &dataset,
        GridSelect::Moe,
        &csv,
        &dir.path().join("cells"),
        2,
    )
    .expect("grid");

    let table = std::fs::read_to_string(&csv).expect("csv");
    for line in table.lines() {
        // trim the row to the identifying and headline columns
        let cells: Vec<&str> = line.split(',').collect();
        println!(
            "{:<5} {:<4} {:<7} {:<8} {:<7} {:<10} {:<9} {}",
            cells[0], cells[1], cells[2], cells[3], cells[4], cells[8], cells[9], cells[15]
        );
    }
}
