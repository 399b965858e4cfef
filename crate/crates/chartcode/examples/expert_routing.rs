//! Watch complexity-aware routing at work: run a few charts through the
//! model, print the complexity score and per-token expert selections, and
//! dump the expert-by-chart-type utilization heatmap.
//!
//! ```bash
//! cargo run --example expert_routing
//! ```

use chartcode::chartlab::{rasterize_spec, sample_spec, TypeMix};
use chartcode::model::{LoraConfig, Model, ModelConfig, TrainMode, UtilizationTracker};
use chartcode::numerics::Graph;
use chartcode::rng::Rng;

fn main() {
    let cfg = ModelConfig {
        d: 32,
        heads: 4,
        experts: 4,
        capacity: 64,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, TrainMode::MoeLora, LoraConfig::default(), 9).expect("model");
    let mut tracker = UtilizationTracker::default_window(cfg.experts);
    let rng = Rng::from_seed(7);

    for i in 0..6 {
        let spec = sample_spec(&mut rng.child_idx("chart", i), &TypeMix::default_mix());
        let image = rasterize_spec(&spec).expect("renders").to_f64();
        let g = Graph::eval();
        let mut fwd_rng = rng.child_idx("fwd", i);
        let fwd = model
            .forward_sample(&g, &image, spec.chart_type, &[3, 4], false, &mut fwd_rng)
            .expect("forward");
        let mut counts = vec![0usize; cfg.experts];
        for sel in &fwd.decision.selected {
            for &(e, _) in sel {
                counts[e] += 1;
            }
        }
        println!(
            "{:<8} complexity {:.3}  tokens/expert {:?}",
            spec.chart_type.name(),
            fwd.decision.complexity,
            counts
        );
        tracker.record_step(&[(spec.chart_type, fwd.decision.selected.as_slice())]);
    }

    let u = tracker.utilization();
    println!("\nrolling utilization: {u:?}  (sum = {:.3})", u.iter().sum::<f64>());
    println!("\nheatmap (share of each chart type's slots per expert):");
    print!("{}", tracker.heatmap_csv());
}
