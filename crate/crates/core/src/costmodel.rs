//! Analytic parallel cost of a run: the `pi_p` task-packing estimate, the
//! building-block cost table, and per-variant totals in the sequential,
//! fully-MPI and hybrid MPI/OpenMP settings.
//!
//! One unit is the integration of the nonlinear model over the whole window.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussnewton::{Formulation, Preconditioner, RunTrace, VariantSpec};
use crate::operators::ModelApprox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Sequential,
    FullyMpi,
    Hybrid,
}

impl CostMode {
    pub const ALL: [CostMode; 3] = [CostMode::Sequential, CostMode::FullyMpi, CostMode::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            CostMode::Sequential => "sequential",
            CostMode::FullyMpi => "fully_mpi",
            CostMode::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(CostMode::Sequential),
            "fully_mpi" | "mpi" => Ok(CostMode::FullyMpi),
            "hybrid" => Ok(CostMode::Hybrid),
            _ => Err(Error::Parameter(format!("unknown cost mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub n_subwindows: usize,
    pub processes: usize,
    pub c_dinv: f64,
    pub mode: CostMode,
    /// Cost of `L~^{-1}` and of `L~^{-T}` when `M~` is `0` or `I`. With
    /// `M~ = M` the exact `L^{-1}`/`L^{-T}` costs are charged instead.
    pub c_ltilde_inv: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { n_subwindows: 50, processes: 1, c_dinv: 0.5, mode: CostMode::FullyMpi, c_ltilde_inv: 0.0 }
    }
}

impl CostParams {
    pub fn new(n_subwindows: usize, processes: usize, c_dinv: f64, mode: CostMode) -> Result<Self> {
        let p = Self { n_subwindows, processes, c_dinv, mode, c_ltilde_inv: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.processes == 0 || self.n_subwindows == 0 {
            return Err(Error::Parameter("processes and subwindow count must be at least 1".into()));
        }
        if !(self.c_dinv > 0.0) || !(self.c_ltilde_inv >= 0.0) {
            return Err(Error::Parameter("c_dinv must be positive and c_ltilde_inv nonnegative".into()));
        }
        Ok(())
    }

    fn effective_processes(&self) -> usize {
        match self.mode {
            CostMode::Sequential => 1,
            _ => self.processes,
        }
    }
}

/// `max(ceil(k/p) * mean(c), max(c))`
pub fn pi_p(costs: &[f64], p: usize) -> Result<f64> {
    if costs.is_empty() || p == 0 {
        return Err(Error::Parameter("pi_p needs at least one task and one process".into()));
    }
    let k = costs.len();
    let mean = costs.iter().sum::<f64>() / k as f64;
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((k.div_ceil(p) as f64 * mean).max(max))
}

fn pi2(a: f64, b: f64) -> f64 {
    pi_p(&[a, b], 2).expect("two tasks")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub c_model: f64,
    pub c_obs_model: f64,
    pub c_d: f64,
    pub c_r: f64,
    pub c_rinv: f64,
    pub c_h: f64,
    pub c_ht: f64,
    pub c_l: f64,
    pub c_lt: f64,
    pub c_linv: f64,
    pub c_linvt: f64,
}

pub fn building_block_costs(params: &CostParams) -> Result<CostTable> {
    params.validate()?;
    let nsw = params.n_subwindows as f64;
    let pi = pi_p(&vec![1.0; params.n_subwindows], params.effective_processes())?;
    Ok(CostTable {
        c_model: 1.0,
        c_obs_model: pi / (20.0 * nsw),
        c_d: pi / (2.0 * nsw),
        c_r: pi / (100.0 * nsw),
        c_rinv: pi / (100.0 * nsw),
        c_h: pi / (10.0 * nsw),
        c_ht: pi / (10.0 * nsw),
        c_l: 2.0 * pi / nsw,
        c_lt: 4.0 * pi / nsw,
        c_linv: 2.0,
        c_linvt: 4.0,
    })
}

/// Composite costs for one parameter set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeCosts {
    pub table: CostTable,
    pub c_dinv: f64,
    pub c_ltilde_inv: f64,
    pub hybrid: bool,
}

impl CompositeCosts {
    pub fn new(params: &CostParams) -> Result<Self> {
        Ok(Self {
            table: building_block_costs(params)?,
            c_dinv: params.c_dinv,
            c_ltilde_inv: params.c_ltilde_inv,
            hybrid: params.mode == CostMode::Hybrid,
        })
    }

    fn pair(&self, a: f64, b: f64) -> f64 {
        if self.hybrid {
            pi2(a, b)
        } else {
            a + b
        }
    }

    pub fn c_q(&self) -> f64 {
        let t = &self.table;
        self.pair(t.c_l + self.c_dinv, t.c_h + t.c_rinv)
    }

    pub fn c_j(&self) -> f64 {
        let t = &self.table;
        t.c_model + t.c_obs_model + self.pair(t.c_lt + self.c_dinv, t.c_ht + t.c_rinv)
    }

    pub fn c_k_sa(&self) -> f64 {
        let t = &self.table;
        if self.hybrid {
            pi2(t.c_l + t.c_d + t.c_h, t.c_lt + t.c_r + t.c_ht)
        } else {
            t.c_l + t.c_d + t.c_lt + t.c_h + t.c_ht + t.c_r
        }
    }

    fn ltilde_inv(&self, approx: ModelApprox) -> (f64, f64) {
        match approx {
            ModelApprox::Exact => (self.table.c_linv, self.table.c_linvt),
            _ => (self.c_ltilde_inv, self.c_ltilde_inv),
        }
    }

    fn ltilde(&self, approx: ModelApprox) -> f64 {
        match approx {
            ModelApprox::Exact => self.table.c_l,
            _ => 0.0,
        }
    }

    pub fn c_s_inv(&self, approx: ModelApprox) -> f64 {
        let (a, b) = self.ltilde_inv(approx);
        b + self.table.c_d + a
    }

    pub fn c_pm(&self, approx: ModelApprox) -> f64 {
        self.pair(self.c_s_inv(approx), self.table.c_rinv)
    }

    /// Block diagonal preconditioner (extrapolated: independent blocks).
    pub fn c_pb(&self, approx: ModelApprox) -> f64 {
        self.pair(self.c_dinv + self.table.c_rinv, self.c_s_inv(approx))
    }

    /// Block triangular preconditioner (extrapolated: `S^{-1}` first, then
    /// the two independent block solves).
    pub fn c_pt(&self, approx: ModelApprox) -> f64 {
        let t = &self.table;
        self.c_s_inv(approx) + self.pair(t.c_h + t.c_rinv, self.ltilde(approx) + self.c_dinv)
    }

    pub fn c_k_st(&self) -> f64 {
        let t = &self.table;
        self.pair(t.c_l + self.c_dinv + t.c_lt, t.c_h + t.c_rinv + t.c_ht)
    }

    pub fn c_rhs_st(&self) -> f64 {
        self.pair(self.table.c_lt, self.table.c_ht)
    }

    pub fn c_k_fo(&self) -> f64 {
        let t = &self.table;
        t.c_d + t.c_linv + t.c_h + t.c_rinv + t.c_ht + t.c_linvt
    }

    pub fn c_rhs_fo(&self) -> f64 {
        self.table.c_linvt + self.table.c_ht
    }

    /// Per-outer, per-inner and per-`q_st`-evaluation costs of a variant.
    pub fn unit_costs(&self, variant: &VariantSpec) -> UnitCosts {
        let approx = variant.approx.unwrap_or(ModelApprox::Zero);
        let c_j = self.c_j();
        match variant.formulation {
            Formulation::Saddle => {
                let c_p = match variant.preconditioner {
                    Preconditioner::M => self.c_pm(approx),
                    Preconditioner::T => self.c_pt(approx),
                    Preconditioner::B => self.c_pb(approx),
                    _ => 0.0,
                };
                UnitCosts { per_outer: c_j + c_p, per_inner: self.c_k_sa() + c_p, per_q: self.c_q() }
            }
            Formulation::State => {
                let c_s = match variant.preconditioner {
                    Preconditioner::S => self.c_s_inv(approx),
                    _ => 0.0,
                };
                UnitCosts {
                    per_outer: c_j + self.c_rhs_st() + c_s,
                    per_inner: self.c_k_st() + c_s,
                    per_q: 0.0,
                }
            }
            Formulation::Forcing => match variant.preconditioner {
                Preconditioner::D => UnitCosts {
                    per_outer: c_j + self.c_rhs_fo() + self.table.c_d,
                    per_inner: self.c_k_fo(),
                    per_q: 0.0,
                },
                // Unpreconditioned: D^{-1} in the operator instead of D, plus
                // one L^{-1} backsolve per outer.
                _ => UnitCosts {
                    per_outer: c_j + self.c_rhs_fo() + self.table.c_linv,
                    per_inner: self.c_k_fo() - self.table.c_d + self.c_dinv,
                    per_q: 0.0,
                },
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub per_outer: f64,
    pub per_inner: f64,
    pub per_q: f64,
}

impl UnitCosts {
    pub fn total(&self, n_outer: usize, n_inner: usize, n_q: usize) -> f64 {
        n_outer as f64 * self.per_outer + n_inner as f64 * self.per_inner + n_q as f64 * self.per_q
    }
}

/// Total modeled cost of a recorded run.
pub fn variant_cost(trace: &RunTrace, params: &CostParams) -> Result<f64> {
    let unit = CompositeCosts::new(params)?.unit_costs(&trace.variant);
    Ok(unit.total(trace.n_outer(), trace.n_inner(), trace.n_q_evaluations()))
}

/// `(cumulative cost, J)` after each outer iteration, starting at `(0, J(x_0))`.
pub fn cost_curve(trace: &RunTrace, params: &CostParams) -> Result<Vec<(f64, f64)>> {
    let unit = CompositeCosts::new(params)?.unit_costs(&trace.variant);
    let mut out = vec![(0.0, trace.initial_j)];
    let mut acc = 0.0;
    let js = trace.j_sequence();
    for (k, o) in trace.outer.iter().enumerate() {
        acc += unit.total(1, o.inner_iterations, o.q_evaluations);
        out.push((acc, js[k + 1]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pi_p_examples() {
        assert_eq!(pi_p(&[1.0; 50], 1).unwrap(), 50.0);
        assert_eq!(pi_p(&[1.0; 50], 50).unwrap(), 1.0);
        assert_eq!(pi_p(&[1.0, 2.0], 2).unwrap(), 2.0);
        assert!(pi_p(&[], 3).is_err());
    }

    #[test]
    fn table_examples() {
        let t = building_block_costs(&CostParams::default()).unwrap();
        assert_relative_eq!(t.c_l, 2.0);
        assert_relative_eq!(t.c_lt, 4.0);
        assert_relative_eq!(t.c_h, 0.1);
        assert_relative_eq!(t.c_rinv, 0.01);
        assert_relative_eq!(t.c_d, 0.5);
        let p50 = CostParams { processes: 50, ..CostParams::default() };
        let t = building_block_costs(&p50).unwrap();
        assert_relative_eq!(t.c_l, 0.04);
        assert_relative_eq!(t.c_d, 0.01);
        assert_eq!(t.c_linv, 2.0);
    }

    #[test]
    fn sequential_ignores_processes() {
        let seq = CostParams { processes: 50, mode: CostMode::Sequential, ..CostParams::default() };
        assert_eq!(building_block_costs(&seq).unwrap(), building_block_costs(&CostParams::default()).unwrap());
    }

    #[test]
    fn composite_examples() {
        let c = CompositeCosts::new(&CostParams::default()).unwrap();
        assert_relative_eq!(c.c_q(), 2.61, epsilon = 1e-12);
        assert_relative_eq!(c.c_j(), 5.66, epsilon = 1e-12);
        assert_relative_eq!(c.c_k_sa(), 6.71, epsilon = 1e-12);
        assert_relative_eq!(c.c_pm(ModelApprox::Zero), 0.51, epsilon = 1e-12);
        assert_relative_eq!(c.c_s_inv(ModelApprox::Exact), 6.5, epsilon = 1e-12);
    }
}
