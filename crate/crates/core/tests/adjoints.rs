mod common;

use common::*;
use proptest::prelude::*;
use wc4dvar::burgers::BurgersModel;
use wc4dvar::checks::{adjoint_defect, taylor_test};
use wc4dvar::linalg::dot;
use wc4dvar::operators::{Direction, ModelApprox};
use wc4dvar::problem::WindowModel;

#[test]
fn linearized_operators_pass_dot_product_tests() {
    let problem = tiny_problem(12, 4, 1);
    let (l, _, _) = problem.linearize(&problem.first_guess).unwrap();
    let (n, s, m) = (problem.state_dim(), problem.state_len(), problem.obs_len());
    for (j, block) in l.blocks().iter().enumerate() {
        let d = adjoint_defect(
            |v| {
                let mut out = vec![0.0; n];
                block.apply(v, &mut out);
                Ok(out)
            },
            |w| {
                let mut out = vec![0.0; n];
                block.apply_transpose(w, &mut out);
                Ok(out)
            },
            n,
            n,
            j as u64,
        )
        .unwrap();
        assert!(d < 1e-12, "block {j}: {d:e}");
    }
    for approx in [ModelApprox::Exact, ModelApprox::Zero, ModelApprox::Identity] {
        let lt = l.approximate(approx);
        assert!(adjoint_defect(|v| lt.apply(Direction::Forward, v), |w| lt.apply(Direction::Transpose, w), s, s, 7).unwrap() < 1e-12);
        assert!(adjoint_defect(|v| lt.solve(Direction::Forward, v), |w| lt.solve(Direction::Transpose, w), s, s, 8).unwrap() < 1e-12);
    }
    let h = &problem.obs_operator;
    assert!(adjoint_defect(|v| h.apply(v), |w| h.apply_transpose(w), s, m, 9).unwrap() < 1e-14);
    let sub = subproblem(&problem, ModelApprox::Exact);
    let (v, w) = (random_vec(s, 10), random_vec(s, 11));
    for apply in [
        &(|x: &[f64]| sub.apply_s_inverse(x).unwrap()) as &dyn Fn(&[f64]) -> Vec<f64>,
        &|x: &[f64]| problem.d_cov.apply_inverse(x).unwrap(),
        &|x: &[f64]| problem.d_cov.apply(x).unwrap(),
    ] {
        let (av, aw) = (apply(&v), apply(&w));
        let scale = wc4dvar::linalg::norm(&av) * wc4dvar::linalg::norm(&w);
        assert!((dot(&av, &w) - dot(&v, &aw)).abs() < 1e-12 * scale);
    }
}

#[test]
fn dense_and_matrix_free_tangent_linear_agree() {
    let problem = tiny_problem(10, 3, 2);
    let model = BurgersModel::new(tiny_config(10, 3, 2)).unwrap();
    let x = problem.first_guess.block(1).to_vec();
    let tlm = model.tlm(2, &x).unwrap();
    let (_, block) = model.linearize(2, &x).unwrap();
    let v = random_vec(10, 3);
    let (mut a, mut b) = (vec![0.0; 10], vec![0.0; 10]);
    use wc4dvar::operators::ModelBlock;
    tlm.apply(&v, &mut a);
    block.apply(&v, &mut b);
    assert!(rel(&a, &b) < 1e-13);
}

#[test]
fn taylor_remainder_is_second_order() {
    let problem = tiny_problem(16, 3, 4);
    for j in 1..=3 {
        let t = taylor_test(problem.model.as_ref(), j, problem.first_guess.block(j - 1), 1e-1, 6, j as u64).unwrap();
        assert!((t.order() - 2.0).abs() < 0.1, "subwindow {j}: orders {:?}", t.orders);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let problem = tiny_problem(8, 3, 5);
    let x: Vec<f64> = problem.first_guess.to_vec();
    let g = problem.gradient(&x).unwrap();
    for seed in 0..4 {
        let v = random_vec(x.len(), 100 + seed);
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let fd = (problem.cost(&xp).unwrap() - problem.cost(&xm).unwrap()) / (2.0 * h);
        let an = dot(&g, &v);
        assert!((fd - an).abs() <= 1e-5 * an.abs(), "fd {fd} vs adjoint {an}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn model_blocks_are_adjoint_at_random_states(seed in 0u64..10_000, j in 1usize..=3) {
        let model = BurgersModel::new(tiny_config(9, 3, 0)).unwrap();
        let x: Vec<f64> = random_vec(9, seed).iter().map(|v| 0.1 * v).collect();
        let (_, block) = model.linearize(j, &x).unwrap();
        let d = adjoint_defect(
            |v| { let mut o = vec![0.0; 9]; block.apply(v, &mut o); Ok(o) },
            |w| { let mut o = vec![0.0; 9]; block.apply_transpose(w, &mut o); Ok(o) },
            9, 9, seed,
        ).unwrap();
        prop_assert!(d < 1e-12);
    }
}
