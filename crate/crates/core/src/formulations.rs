//! One Gauss-Newton linearization and its three formulations: the state
//! normal equations, the forcing change of variables `dp = L dx`, and the
//! saddle (KKT) system in `(dlambda, dmu, dx)`.
//!
//! Operator applications are counted so that solver traces can be fed to the
//! cost model.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::linalg::{dot, sub};
use crate::operators::{BlockBidiagonal, BlockDiagonalSpd, Direction, InverseMode, ModelApprox, SelectionObservation};
use crate::problem::AssimilationProblem;

/// Counted operator kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Model,
    ObsModel,
    L,
    Lt,
    Linv,
    LinvT,
    LTilde,
    LTildeInv,
    LTildeInvT,
    D,
    Dinv,
    R,
    Rinv,
    H,
    Ht,
}

const N_OPS: usize = 15;

/// Snapshot of operator-application counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub model: u64,
    pub obs_model: u64,
    pub l: u64,
    pub lt: u64,
    pub linv: u64,
    pub linvt: u64,
    pub ltilde: u64,
    pub ltilde_inv: u64,
    pub ltilde_invt: u64,
    pub d: u64,
    pub dinv: u64,
    pub r: u64,
    pub rinv: u64,
    pub h: u64,
    pub ht: u64,
}

impl OpCounts {
    pub const COLUMNS: [&'static str; N_OPS] = [
        "n_model", "n_obs_model", "n_l", "n_lt", "n_linv", "n_linvt", "n_ltilde", "n_ltilde_inv",
        "n_ltilde_invt", "n_d", "n_dinv", "n_r", "n_rinv", "n_h", "n_ht",
    ];

    pub fn as_array(&self) -> [u64; N_OPS] {
        [
            self.model, self.obs_model, self.l, self.lt, self.linv, self.linvt, self.ltilde,
            self.ltilde_inv, self.ltilde_invt, self.d, self.dinv, self.r, self.rinv, self.h, self.ht,
        ]
    }

    pub fn from_array(a: [u64; N_OPS]) -> Self {
        Self {
            model: a[0],
            obs_model: a[1],
            l: a[2],
            lt: a[3],
            linv: a[4],
            linvt: a[5],
            ltilde: a[6],
            ltilde_inv: a[7],
            ltilde_invt: a[8],
            d: a[9],
            dinv: a[10],
            r: a[11],
            rinv: a[12],
            h: a[13],
            ht: a[14],
        }
    }

    pub fn minus(&self, other: &OpCounts) -> OpCounts {
        let (a, b) = (self.as_array(), other.as_array());
        let mut out = [0; N_OPS];
        for i in 0..N_OPS {
            out[i] = a[i] - b[i];
        }
        Self::from_array(out)
    }
}

#[derive(Debug, Default)]
pub struct OpCounter {
    counts: [AtomicU64; N_OPS],
    paused: AtomicBool,
}

impl OpCounter {
    pub fn tick(&self, op: Op) {
        if !self.paused.load(Ordering::Relaxed) {
            self.counts[op as usize].fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> OpCounts {
        let mut a = [0; N_OPS];
        for (i, c) in self.counts.iter().enumerate() {
            a[i] = c.load(Ordering::Relaxed);
        }
        OpCounts::from_array(a)
    }
}

/// `(dlambda, dmu, dx)` in one flat vector of length `2s + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaddleVector {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub x: Vec<f64>,
}

impl SaddleVector {
    pub fn split(v: &[f64], s: usize, m: usize) -> Result<Self> {
        check_len("saddle vector", v.len(), 2 * s + m)?;
        Ok(Self { lambda: v[..s].to_vec(), mu: v[s..s + m].to_vec(), x: v[s + m..].to_vec() })
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.lambda.len() * 2 + self.mu.len());
        out.extend_from_slice(&self.lambda);
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.x);
        out
    }
}

/// Saddle preconditioner family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaddlePrecond {
    /// Inexact constraint preconditioner.
    Constraint,
    /// Upper block triangular.
    Triangular,
    /// Block diagonal.
    BlockDiagonal,
    None,
}

/// Quadratic subproblem at `x_k`:
/// `q_st(dx) = 1/2 |L dx - b|^2_{D^-1} + 1/2 |H dx - d|^2_{R^-1}`.
#[derive(Debug)]
pub struct GnSubproblem {
    pub l: BlockBidiagonal,
    pub l_tilde: BlockBidiagonal,
    pub h: SelectionObservation,
    pub d_cov: BlockDiagonalSpd,
    pub r_cov: BlockDiagonalSpd,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    dinv_b: Vec<f64>,
    rinv_d: Vec<f64>,
    counter: OpCounter,
}

impl GnSubproblem {
    pub fn new(
        l: BlockBidiagonal,
        approx: ModelApprox,
        h: SelectionObservation,
        d_cov: BlockDiagonalSpd,
        r_cov: BlockDiagonalSpd,
        b: Vec<f64>,
        d: Vec<f64>,
    ) -> Result<Self> {
        let s = l.len();
        check_len("H state space", h.state_len(), s)?;
        check_len("D", d_cov.len(), s)?;
        check_len("R", r_cov.len(), h.obs_len())?;
        check_len("b", b.len(), s)?;
        check_len("d", d.len(), h.obs_len())?;
        let counter = OpCounter::default();
        counter.tick(Op::Dinv);
        counter.tick(Op::Rinv);
        let dinv_b = d_cov.apply_inverse(&b)?;
        let rinv_d = r_cov.apply_inverse(&d)?;
        let l_tilde = l.approximate(approx);
        Ok(Self { l, l_tilde, h, d_cov, r_cov, b, d, dinv_b, rinv_d, counter })
    }

    /// Linearizes `problem` at `x` (one nonlinear model run and one
    /// observation-operator run) with the requested `L~` and `D^{-1}` mode.
    pub fn from_problem(
        problem: &AssimilationProblem,
        x: &[f64],
        approx: ModelApprox,
        dinv: InverseMode,
    ) -> Result<Self> {
        let (l, b, d) = problem.linearize(x)?;
        let sub = Self::new(
            l,
            approx,
            problem.obs_operator.clone(),
            problem.d_cov.with_mode(dinv),
            problem.r_cov.clone(),
            b,
            d,
        )?;
        sub.counter.tick(Op::Model);
        sub.counter.tick(Op::ObsModel);
        Ok(sub)
    }

    pub fn state_len(&self) -> usize {
        self.l.len()
    }

    pub fn obs_len(&self) -> usize {
        self.h.obs_len()
    }

    pub fn saddle_len(&self) -> usize {
        2 * self.state_len() + self.obs_len()
    }

    pub fn counts(&self) -> OpCounts {
        self.counter.snapshot()
    }

    pub fn tick(&self, op: Op) {
        self.counter.tick(op);
    }

    /// Runs `f` without recording operator applications (diagnostics).
    pub fn uncounted<T>(&self, f: impl FnOnce(&Self) -> T) -> T {
        let was = self.counter.paused.swap(true, Ordering::Relaxed);
        let out = f(self);
        self.counter.paused.store(was, Ordering::Relaxed);
        out
    }

    /// `J(x_k) = q_st(0)` from the cached weighted misfits.
    pub fn j_value(&self) -> f64 {
        0.5 * dot(&self.b, &self.dinv_b) + 0.5 * dot(&self.d, &self.rinv_d)
    }

    /// `D^{-1} b` and `R^{-1} d`, available once `J` has been evaluated.
    pub fn weighted_misfits(&self) -> (&[f64], &[f64]) {
        (&self.dinv_b, &self.rinv_d)
    }

    /// `g = -(L^T D^{-1} b + H^T R^{-1} d)`
    pub fn gradient(&self) -> Result<Vec<f64>> {
        Ok(self.state_rhs()?.iter().map(|v| -v).collect())
    }

    pub fn eval_qst(&self, dx: &[f64]) -> Result<f64> {
        let r1 = sub(&self.apply_l(dx)?, &self.b);
        let r2 = sub(&self.apply_h(dx)?, &self.d);
        Ok(0.5 * dot(&r1, &self.apply_dinv(&r1)?) + 0.5 * dot(&r2, &self.apply_rinv(&r2)?))
    }

    /// `q_fo(dp) = 1/2 |dp - b|^2_{D^-1} + 1/2 |H L^{-1} dp - d|^2_{R^-1}`
    pub fn eval_qfo(&self, dp: &[f64]) -> Result<f64> {
        let r1 = sub(dp, &self.b);
        let r2 = sub(&self.apply_h(&self.apply_linv(dp)?)?, &self.d);
        Ok(0.5 * dot(&r1, &self.apply_dinv(&r1)?) + 0.5 * dot(&r2, &self.apply_rinv(&r2)?))
    }

    pub fn apply_l(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::L);
        self.l.apply(Direction::Forward, v)
    }

    pub fn apply_lt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::Lt);
        self.l.apply(Direction::Transpose, v)
    }

    pub fn apply_linv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::Linv);
        self.l.solve(Direction::Forward, v)
    }

    pub fn apply_linvt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::LinvT);
        self.l.solve(Direction::Transpose, v)
    }

    pub fn apply_ltilde(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::LTilde);
        self.l_tilde.apply(Direction::Forward, v)
    }

    pub fn apply_ltilde_inv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::LTildeInv);
        self.l_tilde.solve(Direction::Forward, v)
    }

    pub fn apply_ltilde_invt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::LTildeInvT);
        self.l_tilde.solve(Direction::Transpose, v)
    }

    pub fn apply_d(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::D);
        self.d_cov.apply(v)
    }

    pub fn apply_dinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::Dinv);
        self.d_cov.apply_inverse(v)
    }

    pub fn apply_r(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::R);
        self.r_cov.apply(v)
    }

    pub fn apply_rinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::Rinv);
        self.r_cov.apply_inverse(v)
    }

    pub fn apply_h(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::H);
        self.h.apply(v)
    }

    pub fn apply_ht(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.tick(Op::Ht);
        self.h.apply_transpose(v)
    }

    fn split(&self, v: &[f64]) -> Result<SaddleVector> {
        SaddleVector::split(v, self.state_len(), self.obs_len())
    }

    /// `(D dl + L dx, R dm + H dx, L^T dl + H^T dm)`
    pub fn saddle_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let v = self.split(v)?;
        let lx = self.apply_l(&v.x)?;
        let hx = self.apply_h(&v.x)?;
        let out = SaddleVector {
            lambda: crate::linalg::add(&self.apply_d(&v.lambda)?, &lx),
            mu: crate::linalg::add(&self.apply_r(&v.mu)?, &hx),
            x: crate::linalg::add(&self.apply_lt(&v.lambda)?, &self.apply_ht(&v.mu)?),
        };
        Ok(out.concat())
    }

    pub fn saddle_rhs(&self) -> Vec<f64> {
        SaddleVector { lambda: self.b.clone(), mu: self.d.clone(), x: vec![0.0; self.state_len()] }.concat()
    }

    /// `S^{-1} v = L~^{-1} D L~^{-T} v`
    pub fn apply_s_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_ltilde_inv(&self.apply_d(&self.apply_ltilde_invt(v)?)?)
    }

    pub fn apply_pm_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let r = self.split(r)?;
        let lambda = self.apply_ltilde_invt(&r.x)?;
        let mu = self.apply_rinv(&r.mu)?;
        let x = self.apply_ltilde_inv(&sub(&r.lambda, &self.apply_d(&lambda)?))?;
        Ok(SaddleVector { lambda, mu, x }.concat())
    }

    pub fn apply_pb_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let r = self.split(r)?;
        let lambda = self.apply_dinv(&r.lambda)?;
        let mu = self.apply_rinv(&r.mu)?;
        let x = self.apply_s_inverse(&r.x)?.iter().map(|v| -v).collect();
        Ok(SaddleVector { lambda, mu, x }.concat())
    }

    pub fn apply_pt_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let r = self.split(r)?;
        let x = self.apply_s_inverse(&r.x)?;
        let mu = self.apply_rinv(&sub(&r.mu, &self.apply_h(&x)?))?;
        let lambda = self.apply_dinv(&sub(&r.lambda, &self.apply_ltilde(&x)?))?;
        Ok(SaddleVector { lambda, mu, x }.concat())
    }

    pub fn apply_saddle_precond(&self, kind: SaddlePrecond, r: &[f64]) -> Result<Vec<f64>> {
        match kind {
            SaddlePrecond::Constraint => self.apply_pm_inverse(r),
            SaddlePrecond::Triangular => self.apply_pt_inverse(r),
            SaddlePrecond::BlockDiagonal => self.apply_pb_inverse(r),
            SaddlePrecond::None => Ok(r.to_vec()),
        }
    }

    /// `(L^T D^{-1} L + H^T R^{-1} H) v`
    pub fn state_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let a = self.apply_lt(&self.apply_dinv(&self.apply_l(v)?)?)?;
        let c = self.apply_ht(&self.apply_rinv(&self.apply_h(v)?)?)?;
        Ok(crate::linalg::add(&a, &c))
    }

    /// `L^T D^{-1} b + H^T R^{-1} d`, reusing the weighted misfits.
    pub fn state_rhs(&self) -> Result<Vec<f64>> {
        let a = self.apply_lt(&self.dinv_b)?;
        let c = self.apply_ht(&self.rinv_d)?;
        Ok(crate::linalg::add(&a, &c))
    }

    /// `(D^{-1} + L^{-T} H^T R^{-1} H L^{-1}) v`
    pub fn forcing_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let a = self.apply_dinv(v)?;
        let c = self.apply_linvt(&self.apply_ht(&self.apply_rinv(&self.apply_h(&self.apply_linv(v)?)?)?)?)?;
        Ok(crate::linalg::add(&a, &c))
    }

    /// `D^{-1} b + L^{-T} H^T R^{-1} d`
    pub fn forcing_rhs(&self) -> Result<Vec<f64>> {
        let c = self.apply_linvt(&self.apply_ht(&self.rinv_d)?)?;
        Ok(crate::linalg::add(&self.dinv_b, &c))
    }
}

/// `(b, d)` for the problem linearized at `x`.
pub fn compute_misfits(problem: &AssimilationProblem, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    problem.misfits(x)
}

impl crate::krylov::ForcingOperators for GnSubproblem {
    fn len(&self) -> usize {
        self.state_len()
    }
    fn linv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_linv(v)
    }
    fn linvt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_linvt(v)
    }
    fn h(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_h(v)
    }
    fn ht(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_ht(v)
    }
    fn rinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_rinv(v)
    }
    fn d(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_d(v)
    }
}
