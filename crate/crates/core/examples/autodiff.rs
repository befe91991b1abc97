//! Builds a small two-layer network on the tape, backpropagates a softmax
//! cross-entropy and compares every gradient with finite differences.

use ndarray::{array, Array2};
use dang_lab::gradcheck::{max_rel_error, numeric_grad};
use dang_lab::tensor::Tape;

fn loss(tape: &mut Tape, w1: &Array2<f64>, w2: &Array2<f64>) -> dang_lab::Result<(f64, Vec<Array2<f64>>)> {
    let x = tape.constant(array![[0.5, -1.0, 2.0], [1.5, 0.3, -0.7], [-0.2, 0.8, 0.1]]);
    let a = tape.var(w1.clone());
    let b = tape.var(w2.clone());
    let h = tape.matmul(x, a)?;
    let h = tape.sigmoid(h);
    let logits = tape.matmul(h, b)?;
    let y = tape.row_softmax(logits);
    let l = tape.masked_cross_entropy(y, &[0, 1, 1], &[true, true, false])?;
    tape.backward(l)?;
    let grads = vec![tape.grad(a).unwrap().clone(), tape.grad(b).unwrap().clone()];
    Ok((tape.scalar(l), grads))
}

fn main() -> dang_lab::Result<()> {
    let w1 = array![[0.1, -0.3], [0.7, 0.2], [-0.4, 0.5]];
    let w2 = array![[0.3, -0.6], [0.9, 0.1]];
    let (value, analytic) = loss(&mut Tape::new(), &w1, &w2)?;
    let numeric = numeric_grad(|v| loss(&mut Tape::new(), &v[0], &v[1]).unwrap().0, &[w1, w2], 1e-6);
    println!("loss {value:.6}");
    for (name, (a, n)) in ["w1", "w2"].iter().zip(analytic.iter().zip(&numeric)) {
        println!("{name}: max rel error {:.2e}", max_rel_error(a, n));
    }
    Ok(())
}
