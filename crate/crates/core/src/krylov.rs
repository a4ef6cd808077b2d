//! Inner Krylov solvers: left-preconditioned GMRES, the left-preconditioned
//! FOM with coupled bases, its specialised forcing variant, and plain CG.
//!
//! Operators are passed as closures returning `Result<Vec<f64>>` so that
//! covariance solves can report failures from inside an iteration.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, combine, dot, norm, scaled, solve_hessenberg};
use crate::operators::{BlockBidiagonal, BlockDiagonalSpd, Direction, SelectionObservation};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverControls {
    pub max_iterations: usize,
    /// Relative stopping threshold on the (preconditioned) residual; `None` disables it.
    pub residual_tolerance: Option<f64>,
    /// Absolute residual norm treated as an exact solve.
    pub full_accuracy_tolerance: f64,
    pub check_period: usize,
    /// Keep every approximate solution (small problems and tests only).
    pub record_iterates: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            residual_tolerance: None,
            full_accuracy_tolerance: 1e-12,
            check_period: 1,
            record_iterates: false,
        }
    }
}

impl SolverControls {
    pub fn with_max_iterations(max_iterations: usize) -> Self {
        Self { max_iterations, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.check_period == 0 {
            return Err(Error::Parameter("iteration counts must be at least 1".into()));
        }
        if !(self.full_accuracy_tolerance > 0.0) || self.residual_tolerance.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Parameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Tolerance,
    QuadraticDecrease,
    FullAccuracy,
    IterationCap,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Tolerance => "tolerance",
            TerminationReason::QuadraticDecrease => "quadratic_decrease",
            TerminationReason::FullAccuracy => "full_accuracy",
            TerminationReason::IterationCap => "iteration_cap",
        }
    }
}

/// Per-iteration log of one inner solve. Entry 0 describes the zero start.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerTrace {
    pub residual_norms: Vec<f64>,
    pub q_values: Vec<Option<f64>>,
    pub termination: TerminationReason,
    pub iterates: Vec<Vec<f64>>,
    /// `max |Q^T U - I|` after each FOM iteration, when iterates are recorded.
    pub orthogonality: Vec<f64>,
}

impl InnerTrace {
    fn new(r0: f64) -> Self {
        Self {
            residual_norms: vec![r0],
            q_values: vec![None],
            termination: TerminationReason::IterationCap,
            iterates: Vec::new(),
            orthogonality: Vec::new(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.residual_norms.len() - 1
    }
}

/// What a stop probe sees at a check.
pub struct ProbeStep<'a> {
    pub iteration: usize,
    pub residual_norm: f64,
    /// Quadratic model value tracked by FOM.
    pub q_value: Option<f64>,
    /// Current approximate solution (GMRES only).
    pub solution: Option<&'a [f64]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProbeVerdict {
    pub stop: bool,
    /// Quadratic value computed by the probe, recorded in the trace.
    pub q_value: Option<f64>,
}

pub type Probe<'p> = Option<&'p mut dyn FnMut(&ProbeStep<'_>) -> Result<ProbeVerdict>>;

/// Left-preconditioned GMRES from the zero vector, modified Gram-Schmidt with
/// a single conditional reorthogonalization pass, no restarts.
pub fn gmres_left<A, P>(
    mut matvec: A,
    mut precond_inverse: P,
    rhs: &[f64],
    controls: &SolverControls,
    mut probe: Probe<'_>,
) -> Result<(Vec<f64>, InnerTrace)>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    controls.validate()?;
    let n = rhs.len();
    let r0 = precond_inverse(rhs)?;
    check_len("preconditioned residual", r0.len(), n)?;
    let beta = norm(&r0);
    let mut trace = InnerTrace::new(beta);
    if beta == 0.0 {
        trace.termination = TerminationReason::FullAccuracy;
        return Ok((vec![0.0; n], trace));
    }

    let mut basis = vec![scaled(1.0 / beta, &r0)];
    // Rotated Hessenberg columns (upper triangular part) and Givens rotations.
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut solution = vec![0.0; n];

    for j in 1..=controls.max_iterations {
        let mut w = precond_inverse(&matvec(&basis[j - 1])?)?;
        check_len("preconditioned operator image", w.len(), n)?;
        let w_norm0 = norm(&w);
        let mut h = vec![0.0; j + 1];
        for (i, v) in basis.iter().enumerate() {
            h[i] = dot(&w, v);
            axpy(-h[i], v, &mut w);
        }
        let mut w_norm = norm(&w);
        if w_norm < 0.7 * w_norm0 {
            let c: Vec<f64> = basis.iter().map(|v| dot(&w, v)).collect();
            if c.iter().any(|ci| ci.abs() > 1e-8 * w_norm.max(f64::MIN_POSITIVE)) {
                for (i, v) in basis.iter().enumerate() {
                    axpy(-c[i], v, &mut w);
                    h[i] += c[i];
                }
                w_norm = norm(&w);
            }
        }
        h[j] = w_norm;

        for (i, &(c, s)) in rot.iter().enumerate() {
            let (a, b) = (h[i], h[i + 1]);
            h[i] = c * a + s * b;
            h[i + 1] = -s * a + c * b;
        }
        let (a, b) = (h[j - 1], h[j]);
        let r = a.hypot(b);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
        rot.push((c, s));
        h[j - 1] = r;
        h[j] = 0.0;
        let gj = g[j - 1];
        g[j - 1] = c * gj;
        g.push(-s * gj);
        h.truncate(j);
        rcols.push(h);

        let res = g[j].abs();
        trace.residual_norms.push(res);
        trace.q_values.push(None);

        let breakdown = w_norm <= 1e-14 * w_norm0.max(f64::MIN_POSITIVE);
        if breakdown && res > 1e-8 * beta {
            return Err(Error::Breakdown(format!(
                "Arnoldi breakdown at iteration {j} with residual {res:e}"
            )));
        }

        let mut formed = false;
        let form = |solution: &mut Vec<f64>| -> Result<()> {
            let y = back_substitute(&rcols, &g[..j])?;
            *solution = combine(&basis, &y, n);
            Ok(())
        };

        let mut reason = None;
        if res <= controls.full_accuracy_tolerance || breakdown {
            reason = Some(TerminationReason::FullAccuracy);
        } else if controls.residual_tolerance.is_some_and(|t| res <= t * beta) {
            reason = Some(TerminationReason::Tolerance);
        }
        if let Some(p) = probe.as_mut() {
            if j % controls.check_period == 0 {
                form(&mut solution)?;
                formed = true;
                let verdict = p(&ProbeStep {
                    iteration: j,
                    residual_norm: res,
                    q_value: None,
                    solution: Some(&solution),
                })?;
                trace.q_values[j] = verdict.q_value;
                if verdict.stop && reason.is_none() {
                    reason = Some(TerminationReason::QuadraticDecrease);
                }
            }
        }
        if reason.is_none() && j == controls.max_iterations {
            reason = Some(TerminationReason::IterationCap);
        }
        if controls.record_iterates || reason.is_some() {
            if !formed {
                form(&mut solution)?;
            }
            if controls.record_iterates {
                trace.iterates.push(solution.clone());
            }
        }
        if let Some(reason) = reason {
            trace.termination = reason;
            return Ok((solution, trace));
        }
        basis.push(scaled(1.0 / w_norm, &w));
    }
    unreachable!("loop always returns at the iteration cap")
}

fn back_substitute(rcols: &[Vec<f64>], g: &[f64]) -> Result<Vec<f64>> {
    let k = g.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= rcols[j][i] * y[j];
        }
        let d = rcols[i][i];
        if d == 0.0 {
            return Err(Error::Breakdown("singular least-squares factor".into()));
        }
        y[i] = s / d;
    }
    Ok(y)
}

/// Shared bookkeeping of the two FOM variants: coupled bases `U` (M-images)
/// and `Q`, Hessenberg columns, and `z = U^T b`.
struct FomState {
    u: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    z: Vec<f64>,
    hcols: Vec<Vec<f64>>,
    beta: f64,
    last_gamma: f64,
}

const ROUNDING_FLOOR: f64 = 1.5e-8;

impl FomState {
    /// Steps 2.3 to 2.7: orthogonalize, compute the subdiagonal entry, solve
    /// the projected system and return `(y, gamma, q, h_next, w, v)`.
    fn step(
        &mut self,
        mut w: Vec<f64>,
        mut v: Vec<f64>,
    ) -> Result<(Vec<f64>, f64, f64, f64, Vec<f64>, Vec<f64>)> {
        let k = self.u.len();
        let scale = norm(&w) * norm(&v);
        let mut h = vec![0.0; k + 1];
        // Second pass keeps Q^T U = I once Ritz values start to converge.
        for _ in 0..2 {
            for jj in 0..k {
                let c = dot(&self.q[jj], &v);
                h[jj] += c;
                axpy(-c, &self.u[jj], &mut v);
                axpy(-c, &self.q[jj], &mut w);
            }
        }
        let wv = dot(&w, &v);
        // Once the residual is at the rounding floor of the coupled
        // recurrences, a nonpositive w^T v means the Krylov space is exhausted.
        let converged = self.last_gamma <= ROUNDING_FLOOR * self.beta;
        if wv < -1e-13 * scale && !converged {
            return Err(Error::LossOfPositivity { context: "FOM orthogonalization", value: wv });
        }
        h[k] = wv.max(0.0).sqrt();
        self.hcols.push(h);
        let mut e1 = vec![0.0; k];
        e1[0] = self.beta;
        let y = solve_hessenberg(&self.hcols, &e1)?;
        let gamma = (self.hcols[k - 1][k] * y[k - 1]).abs();
        self.last_gamma = gamma;
        let qk = -0.5 * dot(&self.z, &y);
        Ok((y, gamma, qk, self.hcols[k - 1][k], w, v))
    }

    fn orthogonality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, qi) in self.q.iter().enumerate() {
            for (j, uj) in self.u.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(qi, uj) - target).abs());
            }
        }
        worst
    }
}

fn fom_decide(
    k: usize,
    gamma: f64,
    qk: f64,
    h_next: f64,
    controls: &SolverControls,
    probe: &mut Probe<'_>,
    trace: &mut InnerTrace,
) -> Result<Option<TerminationReason>> {
    trace.residual_norms.push(gamma);
    trace.q_values.push(Some(qk));
    let mut reason = None;
    if gamma <= controls.full_accuracy_tolerance || h_next == 0.0 {
        reason = Some(TerminationReason::FullAccuracy);
    } else if controls.residual_tolerance.is_some_and(|t| gamma <= t * trace.residual_norms[0]) {
        reason = Some(TerminationReason::Tolerance);
    }
    if let Some(p) = probe.as_mut() {
        if k % controls.check_period == 0 {
            let verdict = p(&ProbeStep { iteration: k, residual_norm: gamma, q_value: Some(qk), solution: None })?;
            if verdict.stop && reason.is_none() {
                reason = Some(TerminationReason::QuadraticDecrease);
            }
        }
    }
    if reason.is_none() && k == controls.max_iterations {
        reason = Some(TerminationReason::IterationCap);
    }
    Ok(reason)
}

/// FOM for `M A x = M b` with `A` and `M` SPD, where `M` is only ever applied
/// directly. Tracks `q_k = q(x_k) - q(0)` for `q(x) = x^T A x / 2 - b^T x`.
pub fn fom_left<A, M>(
    mut matvec: A,
    mut precond: M,
    rhs: &[f64],
    controls: &SolverControls,
    mut probe: Probe<'_>,
) -> Result<(Vec<f64>, InnerTrace)>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    M: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    controls.validate()?;
    let n = rhs.len();
    let w = precond(rhs)?;
    check_len("preconditioned right-hand side", w.len(), n)?;
    let bw = dot(rhs, &w);
    if bw == 0.0 && norm(rhs) == 0.0 {
        let mut trace = InnerTrace::new(0.0);
        trace.termination = TerminationReason::FullAccuracy;
        return Ok((vec![0.0; n], trace));
    }
    if !(bw > 0.0) {
        return Err(Error::LossOfPositivity { context: "FOM initialization", value: bw });
    }
    let beta = bw.sqrt();
    let u1 = scaled(1.0 / beta, &w);
    let z1 = dot(&u1, rhs);
    let mut st = FomState { u: vec![u1], q: vec![scaled(1.0 / beta, rhs)], z: vec![z1], hcols: Vec::new(), beta, last_gamma: f64::INFINITY };
    let mut trace = InnerTrace::new(beta);

    for k in 1..=controls.max_iterations {
        let w = matvec(&st.u[k - 1])?;
        let v = precond(&w)?;
        let (y, gamma, qk, h_next, w, v) = st.step(w, v)?;
        let reason = fom_decide(k, gamma, qk, h_next, controls, &mut probe, &mut trace)?;
        if controls.record_iterates {
            trace.iterates.push(combine(&st.u, &y, n));
            trace.orthogonality.push(st.orthogonality_defect());
        }
        if let Some(reason) = reason {
            trace.termination = reason;
            return Ok((combine(&st.u, &y, n), trace));
        }
        let u_next = scaled(1.0 / h_next, &v);
        st.z.push(dot(&u_next, rhs));
        st.u.push(u_next);
        st.q.push(scaled(1.0 / h_next, &w));
    }
    unreachable!("loop always returns at the iteration cap")
}

/// Operators needed by the forcing FOM.
pub trait ForcingOperators {
    fn len(&self) -> usize;
    fn linv(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn linvt(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn h(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn ht(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn rinv(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn d(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// Plain (uncounted) bundle of `L`, `D`, `H`, `R`.
pub struct ForcingBundle<'a> {
    pub l: &'a BlockBidiagonal,
    pub d: &'a BlockDiagonalSpd,
    pub h: &'a SelectionObservation,
    pub r: &'a BlockDiagonalSpd,
}

impl ForcingOperators for ForcingBundle<'_> {
    fn len(&self) -> usize {
        self.l.len()
    }
    fn linv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.l.solve(Direction::Forward, v)
    }
    fn linvt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.l.solve(Direction::Transpose, v)
    }
    fn h(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.h.apply(v)
    }
    fn ht(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.h.apply_transpose(v)
    }
    fn rinv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.r.apply_inverse(v)
    }
    fn d(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.d.apply(v)
    }
}

/// FOM on the forcing system `(D^{-1} + L^{-T} H^T R^{-1} H L^{-1}) dp = r`
/// preconditioned by `D`, returning `dx = L^{-1} dp` through the auxiliary
/// basis `P = L^{-1} U` so that no backsolve is needed.
pub fn fom_forcing<O: ForcingOperators + ?Sized>(
    ops: &O,
    rhs: &[f64],
    controls: &SolverControls,
    mut probe: Probe<'_>,
) -> Result<(Vec<f64>, InnerTrace)> {
    controls.validate()?;
    let n = rhs.len();
    check_len("forcing right-hand side", n, ops.len())?;
    let w = ops.d(rhs)?;
    let wr = dot(&w, rhs);
    if wr == 0.0 && norm(rhs) == 0.0 {
        let mut trace = InnerTrace::new(0.0);
        trace.termination = TerminationReason::FullAccuracy;
        return Ok((vec![0.0; n], trace));
    }
    if !(wr > 0.0) {
        return Err(Error::LossOfPositivity { context: "forcing FOM initialization", value: wr });
    }
    let beta = wr.sqrt();
    let u1 = scaled(1.0 / beta, &w);
    let z1 = dot(&u1, rhs);
    let mut st = FomState { u: vec![u1], q: vec![scaled(1.0 / beta, rhs)], z: vec![z1], hcols: Vec::new(), beta, last_gamma: f64::INFINITY };
    let mut p_basis: Vec<Vec<f64>> = Vec::new();
    let mut trace = InnerTrace::new(beta);

    for k in 1..=controls.max_iterations {
        let pk = ops.linv(&st.u[k - 1])?;
        let v = ops.linvt(&ops.ht(&ops.rinv(&ops.h(&pk)?)?)?)?;
        p_basis.push(pk);
        let mut w = st.q[k - 1].clone();
        axpy(1.0, &v, &mut w);
        let mut v_new = st.u[k - 1].clone();
        axpy(1.0, &ops.d(&v)?, &mut v_new);
        let (y, gamma, qk, h_next, w, v) = st.step(w, v_new)?;
        let reason = fom_decide(k, gamma, qk, h_next, controls, &mut probe, &mut trace)?;
        if controls.record_iterates {
            trace.iterates.push(combine(&p_basis, &y, n));
            trace.orthogonality.push(st.orthogonality_defect());
        }
        if let Some(reason) = reason {
            trace.termination = reason;
            return Ok((combine(&p_basis, &y, n), trace));
        }
        let u_next = scaled(1.0 / h_next, &v);
        st.z.push(dot(&u_next, rhs));
        st.u.push(u_next);
        st.q.push(scaled(1.0 / h_next, &w));
    }
    unreachable!("loop always returns at the iteration cap")
}

/// Exactly `iterations` unpreconditioned CG steps from zero, stopping early
/// only on an exactly zero residual.
pub fn cg<A>(mut matvec: A, rhs: &[f64], iterations: usize) -> Result<Vec<f64>>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if iterations == 0 {
        return Err(Error::Parameter("cg needs at least one iteration".into()));
    }
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..iterations {
        if rr == 0.0 {
            break;
        }
        let ap = matvec(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotSpd(format!("nonpositive curvature p^T A p = {pap:e}")));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense(m: &DMatrix<f64>) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + '_ {
        move |v| Ok((m * DVector::from_column_slice(v)).as_slice().to_vec())
    }

    fn ident(v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }

    #[test]
    fn gmres_identity_one_iteration() {
        let b = [1.0, -2.0, 3.0];
        let (x, t) = gmres_left(ident, ident, &b, &SolverControls::default(), None).unwrap();
        assert_eq!(t.iterations(), 1);
        assert!(crate::linalg::max_abs_diff(&x, &b) < 1e-15);
    }

    #[test]
    fn gmres_diagonal_two_iterations() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let (x, t) = gmres_left(dense(&a), ident, &[1.0, 1.0], &SolverControls::default(), None).unwrap();
        assert!(t.iterations() <= 2);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gmres_zero_rhs() {
        let (x, t) = gmres_left(ident, ident, &[0.0; 4], &SolverControls::default(), None).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(t.iterations(), 0);
    }

    #[test]
    fn fom_identity_one_iteration() {
        let b = [1.0, 2.0, -1.0];
        let (x, t) = fom_left(ident, ident, &b, &SolverControls::default(), None).unwrap();
        assert_eq!(t.iterations(), 1);
        assert!(crate::linalg::max_abs_diff(&x, &b) < 1e-15);
        assert!((t.q_values[1].unwrap() + 0.5 * 6.0).abs() < 1e-14);
    }

    #[test]
    fn fom_rejects_indefinite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -3.0]));
        let r = fom_left(ident, dense(&m), &[1.0, 1.0], &SolverControls::default(), None);
        assert!(matches!(r, Err(Error::LossOfPositivity { .. })));
    }

    #[test]
    fn cg_examples() {
        let x = cg(ident, &[3.0, 4.0], 1).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let x = cg(dense(&a), &[1.0, 1.0, 1.0], 3).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12 && (x[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cg_detects_negative_curvature() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        assert!(matches!(cg(dense(&a), &[1.0, 0.0], 2), Err(Error::NotSpd(_))));
    }

    #[test]
    fn probe_period_is_respected() {
        let a = DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let mut seen = Vec::new();
        let mut probe = |s: &ProbeStep<'_>| -> Result<ProbeVerdict> {
            seen.push(s.iteration);
            Ok(ProbeVerdict::default())
        };
        let controls = SolverControls { max_iterations: 5, check_period: 2, ..Default::default() };
        let b = [1.0; 6];
        let _ = gmres_left(dense(&a), ident, &b, &controls, Some(&mut probe)).unwrap();
        assert_eq!(seen, vec![2, 4]);
    }
}
