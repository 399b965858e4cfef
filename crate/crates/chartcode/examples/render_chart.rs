//! Sample a random chart spec, emit its DSL program, execute the program,
//! and verify the render matches the ground truth exactly (IoU = 1).
//! Writes the chart to `chart.png` in the working directory.
//!
//! ```bash
//! cargo run --example render_chart
//! ```

use chartcode::chartlab::{emit_code, execute, iou, rasterize_spec, sample_spec, TypeMix};
use chartcode::rng::Rng;

fn main() {
    let mut rng = Rng::from_seed(2024);
    let spec = sample_spec(&mut rng, &TypeMix::default_mix());
    println!(
        "sampled a {} chart with {} element(s)",
        spec.chart_type.name(),
        spec.elements.len()
    );

    let program = emit_code(&spec);
    println!("program: {}", program.to_text());

    let truth = rasterize_spec(&spec).expect("spec renders");
    let rendered = execute(&program).expect("program executes");
    let score = iou(&rendered, &truth).expect("same dimensions");
    println!("mask IoU against ground truth: {score}");

    std::fs::write("chart.png", rendered.to_png()).expect("write png");
    println!("wrote chart.png ({}x{})", rendered.width, rendered.height);

    // a wrong program scores strictly lower
    let mut wrong = program.clone();
    let last_value = wrong
        .tokens
        .iter()
        .rposition(|&t| (14..78).contains(&t))
        .expect("has a numeric literal");
    wrong.tokens[last_value] = 14; // clamp one value to the bottom bin
    if let Ok(r) = execute(&wrong) {
        println!("perturbed program IoU: {:.4}", iou(&r, &truth).unwrap());
    }
}
