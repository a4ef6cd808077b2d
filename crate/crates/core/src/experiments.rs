//! The variant matrix, the reference optimum and best-method maps.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::costmodel::{variant_cost, CostMode, CostParams};
use crate::error::{Error, Result};
use crate::gaussnewton::{run_variant, run_variant_from, study_variants, GnControls, RunStatus, RunTrace, VariantSpec};
use crate::operators::log_spaced;
use crate::problem::AssimilationProblem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub c_dinv: Vec<f64>,
    pub rho: Vec<f64>,
    pub processes: Vec<usize>,
    pub modes: Vec<CostMode>,
    pub n_subwindows: usize,
    pub variants: Vec<VariantSpec>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            c_dinv: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            rho: log_spaced(9, 1e-3, 1e-1),
            processes: vec![1, 15, 25, 50],
            modes: vec![CostMode::FullyMpi],
            n_subwindows: 50,
            variants: study_variants(),
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.c_dinv.is_empty() || self.rho.is_empty() || self.processes.is_empty() || self.modes.is_empty() {
            return Err(Error::Parameter("experiment grid axes must be nonempty".into()));
        }
        if self.rho.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Parameter("rho values must lie in (0, 1)".into()));
        }
        if self.c_dinv.iter().any(|c| !(*c > 0.0)) || self.processes.contains(&0) {
            return Err(Error::Parameter("c_dinv must be positive and p at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptimum {
    pub j_star: f64,
    pub gradient_norm: f64,
    pub n_outer: usize,
    pub status: RunStatus,
    #[serde(skip)]
    pub x_star: Vec<f64>,
}

/// Runs STQ1-S-M with full-accuracy inner solves until the gradient
/// vanishes or `J` stops changing.
pub fn reference_optimum(problem: &AssimilationProblem, max_outer: usize) -> Result<ReferenceOptimum> {
    let controls = GnControls {
        max_outer,
        max_inner: 500,
        full_accuracy_inner: true,
        trace_inner_q: false,
        stagnation_tolerance: Some(1e-12),
        ..GnControls::default()
    };
    let variant: VariantSpec = "STQ1-S-M".parse()?;
    let trace = run_variant_from(problem, &variant, &controls, &problem.first_guess)?;
    let gradient_norm = trace.outer.last().map_or(0.0, |o| o.gradient_norm);
    let converged = match trace.status {
        RunStatus::GradientConverged | RunStatus::Stagnated => true,
        // A rejected step at the rounding floor: no descent is left to find.
        RunStatus::StepRejected => {
            let js = trace.j_sequence();
            js.len() >= 3 && {
                let (a, b) = (js[js.len() - 3], js[js.len() - 1]);
                (a - b).abs() <= 1e-10 * a.abs().max(1.0)
            }
        }
        RunStatus::OuterBudget => false,
    };
    if !converged {
        return Err(Error::Parameter(format!(
            "reference solve did not converge in {max_outer} outer iterations (status {:?}, |g| = {gradient_norm:e})",
            trace.status
        )));
    }
    Ok(ReferenceOptimum {
        j_star: trace.final_j_exact,
        gradient_norm,
        n_outer: trace.n_outer(),
        status: trace.status,
        x_star: trace.x_final,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: VariantSpec,
    pub trace: Option<RunTrace>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsStore {
    pub schema: String,
    pub n_subwindows: usize,
    pub initial_j: f64,
    pub reference: ReferenceOptimum,
    pub controls: GnControls,
    pub outcomes: Vec<VariantOutcome>,
}

pub const RESULTS_SCHEMA: &str = "wc4dvar.results/1";

impl ResultsStore {
    pub fn traces(&self) -> impl Iterator<Item = &RunTrace> {
        self.outcomes.iter().filter_map(|o| o.trace.as_ref())
    }

    pub fn trace(&self, name: &str) -> Option<&RunTrace> {
        self.traces().find(|t| t.variant.to_string() == name)
    }
}

/// Runs every variant once; failures are recorded and the matrix continues.
pub fn run_variants(
    problem: &AssimilationProblem,
    variants: &[VariantSpec],
    controls: &GnControls,
    threads: usize,
) -> Vec<VariantOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<VariantOutcome>>> = Mutex::new(vec![None; variants.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, variants.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(v) = variants.get(i) else { break };
                let outcome = match run_variant(problem, v, controls) {
                    Ok(trace) => VariantOutcome { variant: *v, trace: Some(trace), error: None },
                    Err(e) => VariantOutcome { variant: *v, trace: None, error: Some(e.to_string()) },
                };
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|o| o.expect("every slot filled")).collect()
}

pub fn run_matrix(
    problem: &AssimilationProblem,
    grid: &ExperimentGrid,
    controls: &GnControls,
    threads: usize,
) -> Result<ResultsStore> {
    grid.validate()?;
    let reference = reference_optimum(problem, 50)?;
    let outcomes = run_variants(problem, &grid.variants, controls, threads);
    Ok(ResultsStore {
        schema: RESULTS_SCHEMA.into(),
        n_subwindows: problem.n_subwindows(),
        initial_j: problem.cost(&problem.first_guess)?,
        reference,
        controls: controls.clone(),
        outcomes,
    })
}

/// `J(x_f) - J* <= rho (J(x_0) - J*)`
pub fn passes_filter(j_final: f64, j0: f64, j_star: f64, rho: f64) -> bool {
    j_final.is_finite() && j_final - j_star <= rho * (j0 - j_star)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub c_dinv: f64,
    pub rho: f64,
    pub p: usize,
    pub mode: CostMode,
    pub winner: Option<VariantSpec>,
    pub min_cost: Option<f64>,
    pub passed: Vec<VariantSpec>,
}

/// Candidates sorted by cost, ties broken by variant name.
pub fn rank_by_cost(candidates: impl IntoIterator<Item = (VariantSpec, f64)>) -> Vec<(VariantSpec, f64)> {
    let mut out: Vec<(String, VariantSpec, f64)> = candidates.into_iter().map(|(v, c)| (v.to_string(), v, c)).collect();
    out.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
    out.into_iter().map(|(_, v, c)| (v, c)).collect()
}

/// Cheapest passing variant per `(c_dinv, rho, p, mode)`; ties go to the
/// lexicographically smallest name.
pub fn best_method_map(
    traces: &[&RunTrace],
    grid: &ExperimentGrid,
    j0: f64,
    j_star: f64,
) -> Result<Vec<MapCell>> {
    grid.validate()?;
    let mut cells = Vec::new();
    for &mode in &grid.modes {
        for &p in &grid.processes {
            for &c_dinv in &grid.c_dinv {
                let params = CostParams { processes: p, c_dinv, mode, n_subwindows: grid.n_subwindows, c_ltilde_inv: 0.0 };
                let costs: Vec<f64> = traces.iter().map(|t| variant_cost(t, &params)).collect::<Result<_>>()?;
                for &rho in &grid.rho {
                    let passed = rank_by_cost(
                        traces
                            .iter()
                            .zip(&costs)
                            .filter(|(t, _)| passes_filter(t.final_j_exact, j0, j_star, rho))
                            .map(|(t, c)| (t.variant, *c)),
                    );
                    cells.push(MapCell {
                        c_dinv,
                        rho,
                        p,
                        mode,
                        winner: passed.first().map(|w| w.0),
                        min_cost: passed.first().map(|w| w.1),
                        passed: passed.iter().map(|w| w.0).collect(),
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Count of cells won per variant at one `(p, mode)`, most frequent first.
pub fn winner_tally(cells: &[MapCell], p: usize, mode: CostMode) -> Vec<(VariantSpec, usize)> {
    let mut tally: Vec<(VariantSpec, usize)> = Vec::new();
    for c in cells.iter().filter(|c| c.p == p && c.mode == mode) {
        if let Some(w) = c.winner {
            match tally.iter_mut().find(|(v, _)| *v == w) {
                Some(entry) => entry.1 += 1,
                None => tally.push((w, 1)),
            }
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.to_string().cmp(&b.0.to_string())));
    tally
}
