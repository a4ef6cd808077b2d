//! Dot-product tests of every linear operator and Taylor tests of the
//! tangent-linear model on the default Burgers problem.

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::checks::{adjoint_defect, taylor_test};
use wc4dvar::operators::{Direction, ModelApprox};

fn main() -> wc4dvar::Result<()> {
    let problem = generate_problem(&BurgersConfig::default())?;
    let x = &problem.first_guess;
    let (l, _, _) = problem.linearize(x)?;
    let n = problem.state_dim();
    let (s, m) = (problem.state_len(), problem.obs_len());

    let mut worst_block: f64 = 0.0;
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
        )?;
        worst_block = worst_block.max(d);
    }
    println!("M_j   worst adjoint defect {worst_block:.2e}");

    for approx in [ModelApprox::Exact, ModelApprox::Zero, ModelApprox::Identity] {
        let lt = l.approximate(approx);
        let d = adjoint_defect(|v| lt.apply(Direction::Forward, v), |w| lt.apply(Direction::Transpose, w), s, s, 1)?;
        let di = adjoint_defect(|v| lt.solve(Direction::Forward, v), |w| lt.solve(Direction::Transpose, w), s, s, 2)?;
        println!("L (M~={})  apply {d:.2e}  solve {di:.2e}", approx.tag());
    }
    let h = &problem.obs_operator;
    println!("H     {:.2e}", adjoint_defect(|v| h.apply(v), |w| h.apply_transpose(w), s, m, 3)?);

    for j in [1, 25, 50] {
        let t = taylor_test(problem.model.as_ref(), j, x.block(j - 1), 1e-2, 8, j as u64)?;
        let orders: Vec<String> = t.orders.iter().map(|o| format!("{o:.2}")).collect();
        println!("Taylor subwindow {j:>2}: orders {}", orders.join(" "));
    }
    Ok(())
}
