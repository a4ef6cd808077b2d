//! Dot-product (adjoint) and Taylor tests for linear and linearized operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::{dot, norm, sub};
use crate::problem::WindowModel;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `|<Av, w> - <v, A^T w>| / (|v| |w|)` for random `v`, `w`.
pub fn adjoint_defect<F, G>(mut forward: F, mut adjoint: G, n_in: usize, n_out: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = random_vec(&mut rng, n_in);
    let w = random_vec(&mut rng, n_out);
    let av = forward(&v)?;
    let atw = adjoint(&w)?;
    Ok((dot(&av, &w) - dot(&v, &atw)).abs() / (norm(&v) * norm(&w)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorTest {
    pub steps: Vec<f64>,
    /// `|M(x + e dx) - M(x) - e M'(x) dx|` per step.
    pub remainders: Vec<f64>,
    /// `log2` of successive remainder ratios; 2 for a consistent TLM.
    pub orders: Vec<f64>,
}

impl TaylorTest {
    /// Best observed order (rounding spoils the smallest steps).
    pub fn order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Taylor test of subwindow `j`'s linearization at `x` along a random direction
/// scaled to `scale * |x|`, halving the step `n_steps` times.
pub fn taylor_test(model: &dyn WindowModel, j: usize, x: &[f64], scale: f64, n_steps: usize, seed: u64) -> Result<TaylorTest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dx = random_vec(&mut rng, x.len());
    let s = scale * norm(x).max(1.0) / norm(&dx);
    dx.iter_mut().for_each(|v| *v *= s);
    let (mx, block) = model.linearize(j, x)?;
    let mut mdx = vec![0.0; x.len()];
    block.apply(&dx, &mut mdx);
    let mut steps = Vec::new();
    let mut remainders = Vec::new();
    let mut eps = 1.0;
    for _ in 0..n_steps {
        let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + eps * d).collect();
        let mp = model.propagate(j, &xp)?;
        let lin: Vec<f64> = mx.iter().zip(&mdx).map(|(a, d)| a + eps * d).collect();
        steps.push(eps);
        remainders.push(norm(&sub(&mp, &lin)));
        eps *= 0.5;
    }
    let orders = remainders.windows(2).map(|r| (r[0] / r[1]).log2()).collect();
    Ok(TaylorTest { steps, remainders, orders })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_pair_has_zero_defect() {
        let a = [[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]];
        let fwd = |v: &[f64]| Ok(a.iter().map(|r| dot(r, v)).collect());
        let adj = |w: &[f64]| Ok((0..3).map(|j| a[0][j] * w[0] + a[1][j] * w[1]).collect());
        assert!(adjoint_defect(fwd, adj, 3, 2, 7).unwrap() < 1e-15);
        let wrong = |w: &[f64]| Ok((0..3).map(|j| a[0][j] * w[1] + a[1][j] * w[0]).collect());
        assert!(adjoint_defect(fwd, wrong, 3, 2, 7).unwrap() > 1e-3);
    }
}
