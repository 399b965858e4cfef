//! A miniature but complete training run: synthesize a small dataset, train
//! for one epoch, and print the loss trajectory plus validation metrics.
//! Everything lands in a temp directory.
//!
//! ```bash
//! cargo run --release --example train_smoke
//! ```

use chartcode::chartlab::{gen_dataset, TypeMix};
use chartcode::training::{train, RunConfig, StepRecord};

fn main() {
    let cfg = RunConfig::from_toml(
        "epochs = 2\n\
         batch = 4\n\
         train_limit = 32\n\
         eval_limit = 8\n\
         semantic_interval = 10\n\
         model.d = 32\n\
         moe.experts = 4\n\
         moe.capacity = 16\n\
         lora.rank = 4\n",
        &[],
    )
    .expect("config");
    println!("config hash {}", &cfg.hash()[..12]);

    let dataset = gen_dataset(cfg.seed, 60, &TypeMix::default_mix()).expect("dataset");
    let c = dataset.counts();
    println!("dataset: {} train / {} val / {} test", c.train, c.val, c.test);

    let dir = tempfile::tempdir().expect("tempdir");
    let out = train(&cfg, &dataset, dir.path()).expect("training run");

    let log = std::fs::read_to_string(&out.run_log).expect("run log");
    println!("\nstep   lr        total     syntax");
    for (i, line) in log.lines().enumerate() {
        let rec: StepRecord = serde_json::from_str(line).expect("log line");
        if i % 4 == 0 || i + 1 == out.steps as usize {
            println!(
                "{:<6} {:.2e}  {:<9.4} {:.4}",
                rec.step, rec.lr, rec.breakdown.total, rec.breakdown.syntax
            );
        }
    }
    println!(
        "\nsyntax loss {:.4} -> {:.4} over {} steps ({:.1}s wall)",
        out.initial_syntax, out.final_syntax, out.steps, out.wall_secs
    );
    for eval in &out.evals {
        println!(
            "eval @ step {:<4} success {:.3}  iou {:.3}  parse {:.3}",
            eval.step, eval.success_rate, eval.mean_iou, eval.parse_rate
        );
    }
    println!("memory proxy: {} scalars", out.memory_proxy());
}
