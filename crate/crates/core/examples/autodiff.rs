//! Reverse-mode differentiation on a small graph, then the finite-difference
//! checks used to validate every primitive and model.
//!
//! ```text
//! cargo run --release --example autodiff
//! ```

use fwqa::gradcheck::check_primitives;
use fwqa::model::{ModelConfig, ModelKind};
use fwqa::pipeline::check_model_gradients;
use fwqa::{Graph, Tensor};

fn main() -> fwqa::Result<()> {
    // loss = sum(tanh(W x + b))
    let mut g = Graph::new();
    let w = g.leaf(Tensor::matrix(2, 3, vec![0.5, -1.0, 0.25, 1.5, 0.0, -0.5])?);
    let x = g.leaf(Tensor::vector(&[1.0, 2.0, -1.0]));
    let b = g.leaf(Tensor::vector(&[0.1, -0.2]));
    let wx = g.matvec(w, x)?;
    let pre = g.add(wx, b)?;
    let act = g.tanh(pre);
    let loss = g.sum(act);
    let grads = g.backward(loss)?;
    println!("loss       {:.6}", g.value(loss).item());
    println!("dloss/dW   {:?}", grads.get(w).data());
    println!("dloss/dx   {:?}", grads.get(x).data());
    println!("dloss/db   {:?}", grads.get(b).data());

    println!();
    for (name, report) in check_primitives(0, 1e-6, 1e-6) {
        println!("{name:<16} max relative error {:.2e}", report.max_relative_error);
    }
    let cfg = ModelConfig::toy();
    for kind in ModelKind::ALL {
        let r = check_model_gradients(kind, &cfg, 3, 5, 0, 1e-4, 1e-4)?;
        println!(
            "{kind:<16} {} parameters, max relative error {:.2e}, pass {}",
            r.checked, r.max_relative_error, r.pass
        );
    }
    Ok(())
}
