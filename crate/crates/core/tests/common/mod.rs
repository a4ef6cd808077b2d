#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::formulations::GnSubproblem;
use wc4dvar::operators::{InverseMode, ModelApprox};
use wc4dvar::problem::AssimilationProblem;

/// Tiny Burgers instance small enough for dense oracles.
pub fn tiny_config(n: usize, n_sw: usize, seed: u64) -> BurgersConfig {
    BurgersConfig { seed, ..BurgersConfig::small(n, n_sw, 10, (n / 2).max(1)) }
}

pub fn tiny_problem(n: usize, n_sw: usize, seed: u64) -> AssimilationProblem {
    generate_problem(&tiny_config(n, n_sw, seed)).unwrap()
}

pub fn subproblem(problem: &AssimilationProblem, approx: ModelApprox) -> GnSubproblem {
    GnSubproblem::from_problem(problem, &problem.first_guess, approx, InverseMode::Exact).unwrap()
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Materializes a linear map by applying it to unit vectors.
pub fn dense<F>(mut f: F, n_in: usize) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> wc4dvar::Result<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(n_in);
    for i in 0..n_in {
        let mut e = vec![0.0; n_in];
        e[i] = 1.0;
        cols.push(DVector::from_vec(f(&e).unwrap()));
    }
    DMatrix::from_columns(&cols)
}

pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Random SPD matrix `G G^T + shift I`.
pub fn random_spd(n: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let g = DMatrix::from_vec(n, n, random_vec(n * n, seed));
    &g * g.transpose() + DMatrix::identity(n, n) * shift
}

pub fn matvec(a: &DMatrix<f64>) -> impl FnMut(&[f64]) -> wc4dvar::Result<Vec<f64>> + '_ {
    move |v: &[f64]| Ok(vec_of(&(a * DVector::from_column_slice(v))))
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    wc4dvar::linalg::max_abs_diff(a, b) / wc4dvar::linalg::norm(b).max(f64::MIN_POSITIVE)
}

/// Dense blocks of one linearized subproblem.
pub struct DenseSubproblem {
    pub l: DMatrix<f64>,
    pub l_tilde: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    pub dd: DVector<f64>,
}

impl DenseSubproblem {
    pub fn new(sub: &GnSubproblem) -> Self {
        let (s, m) = (sub.state_len(), sub.obs_len());
        Self {
            l: dense(|v| sub.apply_l(v), s),
            l_tilde: dense(|v| sub.apply_ltilde(v), s),
            d: dense(|v| sub.apply_d(v), s),
            r: dense(|v| sub.apply_r(v), m),
            h: dense(|v| sub.apply_h(v), s),
            b: DVector::from_column_slice(&sub.b),
            dd: DVector::from_column_slice(&sub.d),
        }
    }

    pub fn dinv(&self) -> DMatrix<f64> {
        self.d.clone().cholesky().unwrap().inverse()
    }

    pub fn rinv(&self) -> DMatrix<f64> {
        self.r.clone().cholesky().unwrap().inverse()
    }

    /// Normal-equations solution of the quadratic subproblem.
    pub fn dx_star(&self) -> DVector<f64> {
        let (dinv, rinv) = (self.dinv(), self.rinv());
        let a = self.l.transpose() * &dinv * &self.l + self.h.transpose() * &rinv * &self.h;
        let rhs = self.l.transpose() * &dinv * &self.b + self.h.transpose() * &rinv * &self.dd;
        a.cholesky().unwrap().solve(&rhs)
    }

    pub fn saddle(&self) -> DMatrix<f64> {
        let (s, m) = (self.l.nrows(), self.h.nrows());
        let mut k = DMatrix::zeros(2 * s + m, 2 * s + m);
        k.view_mut((0, 0), (s, s)).copy_from(&self.d);
        k.view_mut((0, s + m), (s, s)).copy_from(&self.l);
        k.view_mut((s, s), (m, m)).copy_from(&self.r);
        k.view_mut((s, s + m), (m, s)).copy_from(&self.h);
        k.view_mut((s + m, 0), (s, s)).copy_from(&self.l.transpose());
        k.view_mut((s + m, s), (s, m)).copy_from(&self.h.transpose());
        k
    }

    /// `L~^T D^{-1} L~`
    pub fn schur(&self) -> DMatrix<f64> {
        self.l_tilde.transpose() * self.dinv() * &self.l_tilde
    }
}
