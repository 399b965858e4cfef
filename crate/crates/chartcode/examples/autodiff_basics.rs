//! Record a small expression on the autodiff tape, backprop it, and
//! cross-check against the finite-difference oracle.
//!
//! ```bash
//! cargo run --example autodiff_basics
//! ```

use chartcode::model::ParamStore;
use chartcode::numerics::gradcheck::{finite_diff_grad, max_violation, ParamVals};
use chartcode::numerics::Graph;
use chartcode::rng::Rng;

fn main() {
    // trainable 2x3 matrix and 3x2 matrix; loss = sum(softmax_rows(A.B)^2)
    let mut store = ParamStore::new();
    let rng = Rng::from_seed(1);
    store.xavier(&rng, "a", 2, 3);
    store.xavier(&rng, "b", 3, 2);

    let loss_of = |vals: &ParamVals| -> f64 {
        let mut s = ParamStore::new();
        s.insert("a", 2, 3, vals["a"].clone());
        s.insert("b", 3, 2, vals["b"].clone());
        let g = Graph::eval();
        let prod = s.bind(&g, "a").matmul(&s.bind(&g, "b"));
        prod.softmax_rows().mul(&prod.softmax_rows()).sum().item()
    };

    let g = Graph::new(); // recording tape
    let prod = store.bind(&g, "a").matmul(&store.bind(&g, "b"));
    let loss = prod.softmax_rows().mul(&prod.softmax_rows()).sum();
    println!("loss = {:.6}", loss.item());

    let analytic = g.backward(&loss).expect("backward");
    println!("d loss / d a = {:?}", analytic["a"]);

    let vals: ParamVals = store
        .iter()
        .map(|(n, p)| (n.to_string(), p.data.clone()))
        .collect();
    let numeric = finite_diff_grad(&vals, loss_of, 1e-5);
    match max_violation(&analytic, &numeric, 1e-4, 1e-8) {
        None => println!("analytic gradients match central finite differences"),
        Some((name, i, a, n)) => println!("mismatch at {name}[{i}]: {a} vs {n}"),
    }
}
