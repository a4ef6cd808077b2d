//! Outer Gauss-Newton loop for every algorithmic variant: the original
//! saddle algorithm with unit steps, and the globalized saddle, state and
//! forcing variants with a periodic quadratic-decrease test and a
//! backtracking linesearch.
//!
//! Variant names follow `<SA|ST|FO>Q<l>-<P>[-<M~>]`, e.g. `SAQ15-M-0`,
//! `STQ1-S-M`, `FOQ50-D`, `SAQ0-B-0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulations::{GnSubproblem, OpCounts, SaddlePrecond, SaddleVector};
use crate::krylov::{self, InnerTrace, ProbeStep, ProbeVerdict, SolverControls, TerminationReason};
use crate::linalg::{add, axpy, dot, norm, sub as sub_vec};
use crate::operators::{InverseMode, ModelApprox};
use crate::problem::AssimilationProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Formulation {
    Saddle,
    State,
    Forcing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preconditioner {
    /// Inexact constraint preconditioner (saddle).
    M,
    /// Upper block triangular (saddle).
    T,
    /// Block diagonal (saddle).
    B,
    /// `S^{-1} = L~^{-1} D L~^{-T}` (state).
    S,
    /// `D` (forcing).
    D,
    /// Unpreconditioned.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VariantSpec {
    pub formulation: Formulation,
    /// `l`; zero selects the original residual-only saddle algorithm.
    pub check_period: usize,
    pub preconditioner: Preconditioner,
    pub approx: Option<ModelApprox>,
}

impl VariantSpec {
    pub fn new(
        formulation: Formulation,
        check_period: usize,
        preconditioner: Preconditioner,
        approx: Option<ModelApprox>,
    ) -> Result<Self> {
        let v = Self { formulation, check_period, preconditioner, approx };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        use Preconditioner as P;
        let bad = |reason: &str| Err(Error::Variant { name: self.to_string(), reason: reason.into() });
        let needs_approx = matches!(self.preconditioner, P::M | P::T | P::B | P::S);
        if needs_approx != self.approx.is_some() {
            return bad("model approximation must be given exactly for M, T, B and S preconditioners");
        }
        match self.formulation {
            Formulation::Saddle if !matches!(self.preconditioner, P::M | P::T | P::B | P::None) => {
                bad("saddle variants take M, T, B or n")
            }
            Formulation::State if !matches!(self.preconditioner, P::S | P::None) => bad("state variants take S or n"),
            Formulation::Forcing if !matches!(self.preconditioner, P::D | P::None) => bad("forcing variants take D or n"),
            Formulation::State | Formulation::Forcing if self.check_period == 0 => {
                bad("check period 0 exists only for saddle variants")
            }
            _ => Ok(()),
        }
    }

    pub fn is_globalized(&self) -> bool {
        self.check_period > 0
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Formulation family tag (`SA`, `ST`, `FO`).
    pub fn family(&self) -> &'static str {
        match self.formulation {
            Formulation::Saddle => "SA",
            Formulation::State => "ST",
            Formulation::Forcing => "FO",
        }
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.preconditioner {
            Preconditioner::M => "M",
            Preconditioner::T => "T",
            Preconditioner::B => "B",
            Preconditioner::S => "S",
            Preconditioner::D => "D",
            Preconditioner::None => "n",
        };
        write!(f, "{}Q{}-{}", self.family(), self.check_period, p)?;
        if let Some(a) = self.approx {
            write!(f, "-{}", a.tag())?;
        }
        Ok(())
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Variant { name: s.into(), reason: reason.into() };
        let formulation = match s.get(..2) {
            Some("SA") => Formulation::Saddle,
            Some("ST") => Formulation::State,
            Some("FO") => Formulation::Forcing,
            _ => return Err(bad("expected prefix SA, ST or FO")),
        };
        let rest = s[2..].strip_prefix('Q').ok_or_else(|| bad("expected `Q<l>` after the family"))?;
        let mut parts = rest.split('-');
        let check_period = parts
            .next()
            .and_then(|l| l.parse::<usize>().ok())
            .ok_or_else(|| bad("check period must be a nonnegative integer"))?;
        let preconditioner = match parts.next() {
            Some("M") => Preconditioner::M,
            Some("T") => Preconditioner::T,
            Some("B") => Preconditioner::B,
            Some("S") => Preconditioner::S,
            Some("D") => Preconditioner::D,
            Some("n") => Preconditioner::None,
            _ => return Err(bad("unknown preconditioner")),
        };
        let approx = match parts.next() {
            None => None,
            Some("0") => Some(ModelApprox::Zero),
            Some("I") => Some(ModelApprox::Identity),
            Some("M") => Some(ModelApprox::Exact),
            Some(_) => return Err(bad("model approximation must be 0, I or M")),
        };
        if parts.next().is_some() {
            return Err(bad("trailing components"));
        }
        let v = Self { formulation, check_period, preconditioner, approx };
        v.validate().map_err(|e| match e {
            Error::Variant { reason, .. } => bad(&reason),
            other => other,
        })?;
        Ok(v)
    }
}

impl Serialize for VariantSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VariantSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The 36 variants compared in the cost study: SAQl-{n, M-0, M-I, M-M},
/// STQl-{n, S-0, S-I, S-M} and FOQl-D for l in {1, 15, 25, 50}.
pub fn study_variants() -> Vec<VariantSpec> {
    let mut out = Vec::new();
    for l in [1, 15, 25, 50] {
        for tail in ["n", "M-0", "M-I", "M-M"] {
            out.push(format!("SAQ{l}-{tail}").parse().unwrap());
        }
        for tail in ["n", "S-0", "S-I", "S-M"] {
            out.push(format!("STQ{l}-{tail}").parse().unwrap());
        }
        out.push(format!("FOQ{l}-D").parse().unwrap());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinesearchParams {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LinesearchParams {
    fn default() -> Self {
        Self { shrink: 0.5, sufficient_decrease: 1e-4, max_backtracks: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnControls {
    pub max_outer: usize,
    /// `n_inner`: iteration budget of the original algorithm and the scale
    /// of the `theta_j` schedule.
    pub n_inner: usize,
    /// Hard cap on inner iterations of the globalized variants.
    pub max_inner: usize,
    pub eps_r: f64,
    pub eps_q: f64,
    pub full_accuracy: f64,
    pub gradient_tolerance: f64,
    pub linesearch: LinesearchParams,
    pub dinv: InverseMode,
    /// Record `q_st` at every inner iterate of the original saddle algorithm
    /// (not counted as work).
    pub trace_inner_q: bool,
    /// Also record `J` at those iterates.
    pub trace_inner_j: bool,
    /// Solve every subproblem to full accuracy (no quadratic-decrease stop).
    pub full_accuracy_inner: bool,
    /// Stop the outer loop once `|J_k - J_{k+1}| <= tol * J_k`.
    pub stagnation_tolerance: Option<f64>,
}

impl Default for GnControls {
    fn default() -> Self {
        Self {
            max_outer: 10,
            n_inner: 50,
            max_inner: 100,
            eps_r: 1e-6,
            eps_q: 0.01,
            full_accuracy: 1e-12,
            gradient_tolerance: 1e-10,
            linesearch: LinesearchParams::default(),
            dinv: InverseMode::Exact,
            trace_inner_q: true,
            trace_inner_j: false,
            full_accuracy_inner: false,
            stagnation_tolerance: None,
        }
    }
}

impl GnControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_q > 0.0 && self.eps_q < 1.0) || !(self.eps_r > 0.0 && self.eps_r < 1.0) {
            return Err(Error::Parameter("eps_q and eps_r must lie in (0, 1)".into()));
        }
        if self.max_outer == 0 || self.n_inner == 0 || self.max_inner == 0 {
            return Err(Error::Parameter("iteration budgets must be positive".into()));
        }
        let ls = &self.linesearch;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
            return Err(Error::Parameter("linesearch constants must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub q_st: Option<f64>,
    pub j_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    /// `J(x_k)` as seen by the algorithm.
    pub j_value: f64,
    /// `J(x_k)` with exact covariance inverses.
    pub j_exact: f64,
    pub gradient_norm: f64,
    /// `|q_st(0) - J(x_k)| / J(x_k)` with `J` evaluated term by term.
    pub q0_mismatch: f64,
    /// Gap between `grad q_st(0)` and the term-by-term gradient, relative to
    /// the magnitude of the gradient's summands.
    pub gradient_mismatch: f64,
    pub inner_iterations: usize,
    pub q_evaluations: usize,
    pub termination: TerminationReason,
    pub step_norm: f64,
    pub gtdx: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha: f64,
    pub backtracks: usize,
    pub accepted: bool,
    pub inner: Vec<InnerRecord>,
    pub ops: OpCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    OuterBudget,
    GradientConverged,
    StepRejected,
    Stagnated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub variant: VariantSpec,
    pub dinv: InverseMode,
    pub initial_j: f64,
    pub final_j: f64,
    pub final_j_exact: f64,
    pub status: RunStatus,
    pub outer: Vec<OuterRecord>,
    #[serde(skip)]
    pub x_final: Vec<f64>,
}

impl RunTrace {
    pub fn n_outer(&self) -> usize {
        self.outer.len()
    }

    pub fn n_inner(&self) -> usize {
        self.outer.iter().map(|o| o.inner_iterations).sum()
    }

    pub fn n_q_evaluations(&self) -> usize {
        self.outer.iter().map(|o| o.q_evaluations).sum()
    }

    /// `J(x_0), J(x_1), ..., J(x_final)` as seen by the algorithm.
    pub fn j_sequence(&self) -> Vec<f64> {
        let mut js: Vec<f64> = self.outer.iter().map(|o| o.j_value).collect();
        js.push(self.final_j);
        js
    }

    pub fn ops(&self) -> OpCounts {
        let mut total = [0u64; 15];
        for o in &self.outer {
            for (t, v) in total.iter_mut().zip(o.ops.as_array()) {
                *t += v;
            }
        }
        OpCounts::from_array(total)
    }

    pub fn is_monotone(&self) -> bool {
        self.j_sequence().windows(2).all(|w| w[1] <= w[0])
    }
}

/// `max(0, (q0 / 2)^{max(1, n_inner / j)} - 1)`
pub fn theta_schedule(j: usize, n_inner: usize, q0: f64) -> f64 {
    let exponent = (n_inner as f64 / j.max(1) as f64).max(1.0);
    ((0.5 * q0).powf(exponent) - 1.0).max(0.0)
}

/// Quadratic-decrease test applied every `l` inner iterations.
pub fn inner_termination(q0: f64, q_current: f64, g_norm: f64, eps_q: f64, theta: f64) -> bool {
    q0 - q_current >= (eps_q * g_norm.powi(2).min(1.0)).max(theta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinesearchOutcome {
    pub alpha: f64,
    pub x_next: Vec<f64>,
    pub j_next: f64,
    pub backtracks: usize,
    pub accepted: bool,
}

/// Armijo backtracking along a descent direction.
pub fn backtracking_linesearch<F>(
    mut objective: F,
    x: &[f64],
    dx: &[f64],
    j_x: f64,
    g: &[f64],
    params: &LinesearchParams,
) -> Result<LinesearchOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let slope = dot(g, dx);
    if !(slope < 0.0) {
        return Err(Error::NotDescent(slope));
    }
    let mut alpha = 1.0;
    let mut fallback: Option<(f64, Vec<f64>, f64)> = None;
    for backtracks in 0..=params.max_backtracks {
        let mut trial = x.to_vec();
        axpy(alpha, dx, &mut trial);
        // Trial points may leave the model's stability region.
        let j_trial = match objective(&trial) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::Instability { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if j_trial <= j_x + params.sufficient_decrease * alpha * slope {
            return Ok(LinesearchOutcome { alpha, x_next: trial, j_next: j_trial, backtracks, accepted: true });
        }
        if j_trial < j_x {
            fallback = Some((alpha, trial, j_trial));
        }
        alpha *= params.shrink;
    }
    Ok(match fallback {
        Some((alpha, x_next, j_next)) => LinesearchOutcome {
            alpha,
            x_next,
            j_next,
            backtracks: params.max_backtracks,
            accepted: true,
        },
        None => LinesearchOutcome {
            alpha: 0.0,
            x_next: x.to_vec(),
            j_next: j_x,
            backtracks: params.max_backtracks,
            accepted: false,
        },
    })
}

/// `J(x)` with the covariance inverse applied in `dinv` mode.
pub fn objective(problem: &AssimilationProblem, x: &[f64], dinv: InverseMode) -> Result<f64> {
    let (b, d) = problem.misfits(x)?;
    let wb = problem.d_cov.with_mode(dinv).apply_inverse(&b)?;
    let wd = problem.r_cov.apply_inverse(&d)?;
    Ok(0.5 * dot(&b, &wb) + 0.5 * dot(&d, &wd))
}

/// `J(x)` and `g = -(L^T D^{-1} b + H^T R^{-1} d)` with exact inverses.
pub fn evaluate_j_and_gradient(problem: &AssimilationProblem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let sub = GnSubproblem::from_problem(problem, x, ModelApprox::Zero, InverseMode::Exact)?;
    Ok((sub.j_value(), sub.gradient()?))
}

struct InnerOutcome {
    dx: Vec<f64>,
    trace: InnerTrace,
    q_evaluations: usize,
    inner_j: Vec<Option<f64>>,
}

fn saddle_precond(p: Preconditioner) -> SaddlePrecond {
    match p {
        Preconditioner::M => SaddlePrecond::Constraint,
        Preconditioner::T => SaddlePrecond::Triangular,
        Preconditioner::B => SaddlePrecond::BlockDiagonal,
        _ => SaddlePrecond::None,
    }
}

fn solve_inner(
    problem: &AssimilationProblem,
    x: &[f64],
    sub: &GnSubproblem,
    variant: &VariantSpec,
    controls: &GnControls,
    q0: f64,
    g_norm: f64,
) -> Result<InnerOutcome> {
    let (s, m) = (sub.state_len(), sub.obs_len());
    let mut q_evaluations = 0;
    let mut inner_j = Vec::new();
    let stop_rule = |j: usize, q: f64| {
        if controls.full_accuracy_inner {
            return false;
        }
        let theta = theta_schedule(j, controls.n_inner, q0);
        inner_termination(q0, q, g_norm, controls.eps_q, theta)
    };

    match variant.formulation {
        Formulation::Saddle => {
            let kind = saddle_precond(variant.preconditioner);
            let rhs = sub.saddle_rhs();
            let (sol, trace) = if variant.check_period == 0 {
                let sc = SolverControls {
                    max_iterations: controls.n_inner,
                    residual_tolerance: Some(controls.eps_r),
                    full_accuracy_tolerance: controls.full_accuracy,
                    check_period: 1,
                    record_iterates: false,
                };
                let mut probe = |step: &ProbeStep<'_>| -> Result<ProbeVerdict> {
                    let dx = &step.solution.unwrap()[s + m..];
                    let q = sub.uncounted(|sp| sp.eval_qst(dx))?;
                    if controls.trace_inner_j {
                        inner_j.push(Some(objective(problem, &add(x, dx), controls.dinv)?));
                    }
                    Ok(ProbeVerdict { stop: false, q_value: Some(q) })
                };
                let probe: krylov::Probe<'_> = if controls.trace_inner_q { Some(&mut probe) } else { None };
                krylov::gmres_left(
                    |v: &[f64]| sub.saddle_matvec(v),
                    |r: &[f64]| sub.apply_saddle_precond(kind, r),
                    &rhs,
                    &sc,
                    probe,
                )?
            } else {
                let sc = SolverControls {
                    max_iterations: controls.max_inner,
                    residual_tolerance: None,
                    full_accuracy_tolerance: controls.full_accuracy,
                    check_period: variant.check_period,
                    record_iterates: false,
                };
                let mut probe = |step: &ProbeStep<'_>| -> Result<ProbeVerdict> {
                    let dx = &step.solution.unwrap()[s + m..];
                    let q = sub.eval_qst(dx)?;
                    q_evaluations += 1;
                    Ok(ProbeVerdict { stop: stop_rule(step.iteration, q), q_value: Some(q) })
                };
                krylov::gmres_left(
                    |v: &[f64]| sub.saddle_matvec(v),
                    |r: &[f64]| sub.apply_saddle_precond(kind, r),
                    &rhs,
                    &sc,
                    Some(&mut probe),
                )?
            };
            let dx = SaddleVector::split(&sol, s, m)?.x;
            Ok(InnerOutcome { dx, trace, q_evaluations, inner_j })
        }
        Formulation::State | Formulation::Forcing => {
            let sc = SolverControls {
                max_iterations: controls.max_inner,
                residual_tolerance: None,
                full_accuracy_tolerance: controls.full_accuracy,
                check_period: variant.check_period,
                record_iterates: false,
            };
            // q_k tracked by FOM is q(dx) - q(0); no extra operator work.
            let mut probe = |step: &ProbeStep<'_>| -> Result<ProbeVerdict> {
                let q = q0 + step.q_value.unwrap();
                Ok(ProbeVerdict { stop: stop_rule(step.iteration, q), q_value: Some(q) })
            };
            let (dx, mut trace) = match (variant.formulation, variant.preconditioner) {
                (Formulation::State, p) => {
                    let rhs = sub.state_rhs()?;
                    let precond = |v: &[f64]| -> Result<Vec<f64>> {
                        if p == Preconditioner::S {
                            sub.apply_s_inverse(v)
                        } else {
                            Ok(v.to_vec())
                        }
                    };
                    krylov::fom_left(|v: &[f64]| sub.state_matvec(v), precond, &rhs, &sc, Some(&mut probe))?
                }
                (_, Preconditioner::D) => {
                    let rhs = sub.forcing_rhs()?;
                    krylov::fom_forcing(sub, &rhs, &sc, Some(&mut probe))?
                }
                _ => {
                    let rhs = sub.forcing_rhs()?;
                    let (dp, t) = krylov::fom_left(
                        |v: &[f64]| sub.forcing_matvec(v),
                        |v: &[f64]| Ok(v.to_vec()),
                        &rhs,
                        &sc,
                        Some(&mut probe),
                    )?;
                    (sub.apply_linv(&dp)?, t)
                }
            };
            for q in trace.q_values.iter_mut().skip(1) {
                *q = q.map(|v| q0 + v);
            }
            trace.q_values[0] = Some(q0);
            Ok(InnerOutcome { dx, trace, q_evaluations, inner_j })
        }
    }
}

/// Runs one algorithmic variant from the problem's first guess.
pub fn run_variant(problem: &AssimilationProblem, variant: &VariantSpec, controls: &GnControls) -> Result<RunTrace> {
    run_variant_from(problem, variant, controls, &problem.first_guess)
}

pub fn run_variant_from(
    problem: &AssimilationProblem,
    variant: &VariantSpec,
    controls: &GnControls,
    x0: &[f64],
) -> Result<RunTrace> {
    variant.validate()?;
    controls.validate()?;
    let approx = variant.approx.unwrap_or(ModelApprox::Zero);
    let mut x = x0.to_vec();
    let mut outer = Vec::new();
    let mut status = RunStatus::OuterBudget;
    let mut carried_j: Option<f64> = None;
    let mut initial_j = f64::NAN;

    for k in 1..=controls.max_outer {
        let sub = GnSubproblem::from_problem(problem, &x, approx, controls.dinv)?;
        let j_value = sub.j_value();
        if k == 1 {
            initial_j = j_value;
        }
        let g = sub.gradient()?;
        let g_norm = norm(&g);

        let (q0_mismatch, gradient_mismatch, j_exact) = sub.uncounted(|sp| -> Result<(f64, f64, f64)> {
            let q0 = sp.eval_qst(&vec![0.0; sp.state_len()])?;
            let j_direct = if controls.dinv == InverseMode::Exact { problem.cost(&x)? } else { j_value };
            let (g_direct, g_scale) = problem.gradient_from(&sp.l, &sp.b, &sp.d, &sp.d_cov)?;
            let j_exact = if controls.dinv == InverseMode::Exact { j_direct } else { problem.cost(&x)? };
            let g_gap = norm(&sub_vec(&g, &g_direct)) / g_scale.max(norm(&g)).max(f64::MIN_POSITIVE);
            Ok(((q0 - j_direct).abs() / j_direct.abs().max(f64::MIN_POSITIVE), g_gap, j_exact))
        })?;

        if g_norm <= controls.gradient_tolerance {
            status = RunStatus::GradientConverged;
            carried_j = Some(j_value);
            break;
        }

        let inner = solve_inner(problem, &x, &sub, variant, controls, j_value, g_norm)?;
        let dx = inner.dx;
        let gtdx = dot(&g, &dx);
        let step_norm = norm(&dx);
        let mut inner_records: Vec<InnerRecord> = inner
            .trace
            .residual_norms
            .iter()
            .zip(&inner.trace.q_values)
            .enumerate()
            .map(|(i, (r, q))| InnerRecord { iteration: i, residual_norm: *r, q_st: *q, j_value: None })
            .collect();
        if let Some(first) = inner_records.first_mut() {
            first.q_st = Some(j_value);
            first.j_value = Some(j_value);
        }
        for (rec, jv) in inner_records.iter_mut().skip(1).zip(&inner.inner_j) {
            rec.j_value = *jv;
        }

        let (alpha, x_next, j_next, backtracks, accepted) = if variant.is_globalized() {
            if gtdx < 0.0 {
                let ls = backtracking_linesearch(
                    |y| objective(problem, y, controls.dinv),
                    &x,
                    &dx,
                    j_value,
                    &g,
                    &controls.linesearch,
                )?;
                (ls.alpha, ls.x_next, ls.j_next, ls.backtracks, ls.accepted)
            } else {
                (0.0, x.clone(), j_value, 0, false)
            }
        } else {
            let x_next = add(&x, &dx);
            let j_next = objective(problem, &x_next, controls.dinv).unwrap_or(f64::INFINITY);
            (1.0, x_next, j_next, 0, true)
        };

        outer.push(OuterRecord {
            outer: k,
            j_value,
            j_exact,
            gradient_norm: g_norm,
            q0_mismatch,
            gradient_mismatch,
            inner_iterations: inner.trace.iterations(),
            q_evaluations: inner.q_evaluations,
            termination: inner.trace.termination,
            step_norm,
            gtdx,
            kappa1: -gtdx / (g_norm * g_norm),
            kappa2: step_norm / g_norm,
            alpha,
            backtracks,
            accepted,
            inner: inner_records,
            ops: sub.counts(),
        });
        if !accepted {
            status = RunStatus::StepRejected;
            carried_j = Some(j_value);
            break;
        }
        x = x_next;
        carried_j = Some(j_next);
        if !j_next.is_finite() {
            break;
        }
        if controls.stagnation_tolerance.is_some_and(|t| (j_value - j_next).abs() <= t * j_value.abs()) {
            status = RunStatus::Stagnated;
            break;
        }
    }

    let final_j = match carried_j {
        Some(j) => j,
        None => objective(problem, &x, controls.dinv)?,
    };
    let final_j_exact = if controls.dinv == InverseMode::Exact || !final_j.is_finite() {
        final_j
    } else {
        problem.cost(&x)?
    };
    if initial_j.is_nan() {
        initial_j = final_j;
    }
    Ok(RunTrace {
        variant: *variant,
        dinv: controls.dinv,
        initial_j,
        final_j,
        final_j_exact,
        status,
        outer,
        x_final: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_examples() {
        assert_eq!(theta_schedule(7, 50, 2.0), 0.0);
        assert_eq!(theta_schedule(25, 50, 8.0), 15.0);
        assert_eq!(theta_schedule(60, 50, 8.0), 3.0);
        assert_eq!(theta_schedule(50, 50, 8.0), 3.0);
    }

    #[test]
    fn termination_examples() {
        assert!(!inner_termination(5.0, 5.0, 3.0, 0.01, 0.0));
        assert!(inner_termination(5.0, 4.0, 2.0, 0.01, 0.0));
        assert!(!inner_termination(20.0, 10.0, 2.0, 0.01, 15.0));
    }

    #[test]
    fn linesearch_examples() {
        let f = |x: &[f64]| Ok(0.5 * x[0] * x[0]);
        let out = backtracking_linesearch(f, &[1.0], &[-1.0], 0.5, &[1.0], &LinesearchParams::default()).unwrap();
        assert_eq!(out.alpha, 1.0);
        assert!(out.accepted && out.j_next == 0.0);
        let err = backtracking_linesearch(f, &[1.0], &[1.0], 0.5, &[1.0], &LinesearchParams::default());
        assert!(matches!(err, Err(Error::NotDescent(_))));
    }

    #[test]
    fn linesearch_backtracks_on_overshoot() {
        let f = |x: &[f64]| Ok(0.5 * x[0] * x[0]);
        let out = backtracking_linesearch(f, &[1.0], &[-4.0], 0.5, &[1.0], &LinesearchParams::default()).unwrap();
        assert_eq!(out.alpha, 0.25);
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in study_variants() {
            let again: VariantSpec = v.to_string().parse().unwrap();
            assert_eq!(again, v);
        }
        assert_eq!(study_variants().len(), 36);
        for name in ["SAQ0-B-0", "SAQ0-T-I", "SAQ40-M-0", "FOQ1-n"] {
            assert_eq!(name.parse::<VariantSpec>().unwrap().to_string(), name);
        }
    }

    #[test]
    fn illegal_variants_are_rejected() {
        for name in ["SAQ1-S-0", "STQ1-M-0", "FOQ1-D-0", "STQ0-S-0", "SAQ1-M", "XXQ1-n", "SAQx-n", "SAQ1-n-0"] {
            assert!(name.parse::<VariantSpec>().is_err(), "{name}");
        }
    }
}
