use proptest::prelude::*;
use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::costmodel::{building_block_costs, cost_curve, pi_p, variant_cost, CompositeCosts, CostMode, CostParams};
use wc4dvar::experiments::{best_method_map, rank_by_cost, reference_optimum, run_variants, ExperimentGrid};
use wc4dvar::gaussnewton::{study_variants, GnControls, RunTrace, VariantSpec};

fn small_traces() -> (Vec<RunTrace>, f64, f64) {
    let problem = generate_problem(&BurgersConfig::small(20, 5, 20, 8)).unwrap();
    let controls = GnControls { max_outer: 6, n_inner: 20, max_inner: 40, ..GnControls::default() };
    let traces = run_variants(&problem, &study_variants(), &controls, 4).into_iter().map(|o| o.trace.unwrap()).collect();
    let j_star = reference_optimum(&problem, 30).unwrap().j_star;
    (traces, problem.cost(&problem.first_guess).unwrap(), j_star)
}

#[test]
fn quadratic_evaluation_cost_anchor() {
    let c = CompositeCosts::new(&CostParams { n_subwindows: 50, processes: 1, c_dinv: 0.5, ..CostParams::default() }).unwrap();
    assert_eq!(c.c_q(), 2.0 + 0.5 + 0.1 + 0.01);
}

#[test]
fn one_outer_without_inner_costs_objective_and_preconditioner() {
    let (traces, _, _) = small_traces();
    let t = traces.iter().find(|t| t.variant.name() == "SAQ1-M-0").unwrap();
    let params = CostParams::default();
    let c = CompositeCosts::new(&params).unwrap();
    let unit = c.unit_costs(&t.variant);
    assert_eq!(unit.total(1, 0, 0), c.c_j() + c.c_pm(wc4dvar::operators::ModelApprox::Zero));
    let curve = cost_curve(t, &params).unwrap();
    assert_eq!(curve[0], (0.0, t.initial_j));
    assert!((curve.last().unwrap().0 - variant_cost(t, &params).unwrap()).abs() < 1e-9);
    assert!(curve.windows(2).all(|w| w[1].0 > w[0].0));
}

#[test]
fn trace_costs_respect_parallel_structure() {
    let (traces, _, _) = small_traces();
    for t in &traces {
        let mut prev = f64::INFINITY;
        for p in [1, 2, 7, 15, 25, 50, 80] {
            let mpi = variant_cost(t, &CostParams { processes: p, ..CostParams::default() }).unwrap();
            let hybrid = variant_cost(t, &CostParams { processes: p, mode: CostMode::Hybrid, ..CostParams::default() }).unwrap();
            assert!(hybrid <= mpi * (1.0 + 1e-12), "{}: hybrid {hybrid} > mpi {mpi}", t.variant);
            assert!(mpi <= prev * (1.0 + 1e-12), "{} not monotone in p", t.variant);
            prev = mpi;
        }
        let seq = variant_cost(t, &CostParams { processes: 50, mode: CostMode::Sequential, ..CostParams::default() }).unwrap();
        assert_eq!(seq, variant_cost(t, &CostParams::default()).unwrap());

        let mut last = 0.0;
        for c_dinv in [0.1, 0.5, 1.0, 5.0] {
            let c = variant_cost(t, &CostParams { c_dinv, ..CostParams::default() }).unwrap();
            assert!(c > last, "{} not increasing in c_dinv", t.variant);
            last = c;
        }
    }
}

#[test]
fn sequential_backsolves_do_not_parallelize() {
    for p in [1, 3, 50, 200] {
        let t = building_block_costs(&CostParams { processes: p, ..CostParams::default() }).unwrap();
        assert_eq!((t.c_linv, t.c_linvt), (2.0, 4.0));
    }
    let fo: VariantSpec = "FOQ1-D".parse().unwrap();
    let (u1, u50) = (
        CompositeCosts::new(&CostParams::default()).unwrap().unit_costs(&fo),
        CompositeCosts::new(&CostParams { processes: 50, ..CostParams::default() }).unwrap().unit_costs(&fo),
    );
    // Every inner iteration keeps its L^{-1} and L^{-T} costs.
    assert!(u50.per_inner >= 6.0 && u1.per_inner > u50.per_inner);
}

#[test]
fn single_and_pairwise_winners() {
    let v: Vec<VariantSpec> = ["FOQ1-D", "SAQ1-M-0"].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(rank_by_cost([(v[1], 5.0)])[0].0, v[1]);
    assert_eq!(rank_by_cost([(v[1], 20.0), (v[0], 10.0)])[0].0, v[0]);
    assert_eq!(rank_by_cost([(v[1], 10.0), (v[0], 10.0)])[0].0, v[0]);
    assert!(rank_by_cost(std::iter::empty()).is_empty());
}

#[test]
fn map_properties_on_small_matrix() {
    let (traces, j0, j_star) = small_traces();
    let refs: Vec<&RunTrace> = traces.iter().collect();
    let grid = ExperimentGrid {
        n_subwindows: 5,
        processes: vec![1, 2, 3, 5],
        modes: vec![CostMode::FullyMpi, CostMode::Hybrid],
        ..ExperimentGrid::default()
    };
    let cells = best_method_map(&refs, &grid, j0, j_star).unwrap();
    assert_eq!(cells.len(), 2 * 4 * 5 * 9);
    for c in &cells {
        if let Some(w) = c.winner {
            assert!(c.passed.contains(&w));
            assert_eq!(c.passed[0], w);
        } else {
            assert!(c.passed.is_empty());
        }
        // Tightening rho keeps only a subset.
        for d in cells.iter().filter(|d| d.p == c.p && d.mode == c.mode && d.c_dinv == c.c_dinv && d.rho < c.rho) {
            assert!(d.passed.iter().all(|v| c.passed.contains(v)));
        }
        // Minimum cost never grows with more processes.
        for d in cells.iter().filter(|d| d.mode == c.mode && d.c_dinv == c.c_dinv && d.rho == c.rho && d.p > c.p) {
            if let (Some(a), Some(b)) = (c.min_cost, d.min_cost) {
                assert!(b <= a * (1.0 + 1e-12));
            }
        }
    }
    // Loosest filter: every variant that reached J* within 10% of the initial gap passes.
    let loose = cells.iter().filter(|c| c.rho == grid.rho[8]).map(|c| c.passed.len()).max().unwrap();
    assert!(loose > 0);
}

proptest! {
    #[test]
    fn pi_p_properties(costs in prop::collection::vec(0.01f64..10.0, 1..60), p in 1usize..80) {
        let sum: f64 = costs.iter().sum();
        let max = costs.iter().copied().fold(0.0, f64::max);
        let v = pi_p(&costs, p).unwrap();
        prop_assert!(v >= max - 1e-12);
        prop_assert!(v >= sum / p as f64 - 1e-9);
        prop_assert!(v <= sum + max + 1e-9);
        prop_assert!(pi_p(&costs, p + 1).unwrap() <= v + 1e-12);
        prop_assert!((pi_p(&costs, 1).unwrap() - sum).abs() <= 1e-9 * sum);
        prop_assert_eq!(pi_p(&costs, costs.len()).unwrap(), max);
    }

    #[test]
    fn ranking_is_invariant_under_uniform_rescaling(costs in prop::collection::vec(0.1f64..100.0, 1..36), scale in 1e-3f64..1e3) {
        let variants = study_variants();
        let cands: Vec<(VariantSpec, f64)> = variants.iter().copied().zip(costs.iter().copied()).collect();
        let scaled: Vec<(VariantSpec, f64)> = cands.iter().map(|(v, c)| (*v, c * scale)).collect();
        let (a, b) = (rank_by_cost(cands), rank_by_cost(scaled));
        prop_assert_eq!(a[0].0, b[0].0);
    }

    #[test]
    fn composite_costs_are_positive(p in 1usize..100, c_dinv in 0.01f64..20.0, mode in 0usize..3) {
        let params = CostParams { processes: p, c_dinv, mode: CostMode::ALL[mode], ..CostParams::default() };
        let c = CompositeCosts::new(&params).unwrap();
        for v in study_variants() {
            let u = c.unit_costs(&v);
            prop_assert!(u.per_outer > 0.0 && u.per_inner > 0.0 && u.per_q >= 0.0);
        }
    }
}
