//! Central finite differences, used as an independent check on the tape's
//! backward rules. Only forward values of the function are consulted.

use ndarray::{Array2, Zip};

/// Entries whose analytic and numeric magnitudes are both below this are
/// compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

/// Numeric gradient of `f` with respect to every entry of every input.
pub fn numeric_grad<F>(mut f: F, inputs: &[Array2<f64>], h: f64) -> Vec<Array2<f64>>
where
    F: FnMut(&[Array2<f64>]) -> f64,
{
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Array2::zeros(inputs[k].dim());
        let (rows, cols) = inputs[k].dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = work[k][[r, c]];
                work[k][[r, c]] = orig + h;
                let fp = f(&work);
                work[k][[r, c]] = orig - h;
                let fm = f(&work);
                work[k][[r, c]] = orig;
                g[[r, c]] = (fp - fm) / (2.0 * h);
            }
        }
        out.push(g);
    }
    out
}

/// `max |a - b| / max(|a|, |b|, REL_FLOOR)` over all entries.
pub fn max_rel_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "gradient shapes differ");
    let mut worst: f64 = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| {
        let denom = x.abs().max(y.abs()).max(REL_FLOOR);
        worst = worst.max((x - y).abs() / denom);
    });
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let g = numeric_grad(|v| v[0].mapv(|t| t * t).sum(), &[x.clone()], 1e-5);
        assert!(max_rel_error(&g[0], &(x * 2.0)) < 1e-8);
    }
}
