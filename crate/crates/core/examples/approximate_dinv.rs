//! Replaces exact `D^{-1}` by a fixed number of unpreconditioned CG
//! iterations per covariance block.

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::gaussnewton::{run_variant, GnControls};
use wc4dvar::krylov::cg;
use wc4dvar::linalg::{norm, sub};
use wc4dvar::operators::InverseMode;

fn main() -> wc4dvar::Result<()> {
    let problem = generate_problem(&BurgersConfig::default())?;

    let b = problem.d_cov.blocks()[0].clone();
    let rhs: Vec<f64> = (0..b.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut exact = vec![0.0; rhs.len()];
    b.solve(&rhs, &mut exact);
    for k in [5, 10, 25, 50] {
        let approx = cg(
            |v: &[f64]| {
                let mut out = vec![0.0; v.len()];
                b.apply(v, &mut out);
                Ok(out)
            },
            &rhs,
            k,
        )?;
        let mut resid = vec![0.0; rhs.len()];
        b.apply(&approx, &mut resid);
        println!(
            "cg({k:>2}) on B: relative residual {:.2e}, relative error {:.2e}",
            norm(&sub(&resid, &rhs)) / norm(&rhs),
            norm(&sub(&approx, &exact)) / norm(&exact)
        );
    }

    for mode in [InverseMode::Exact, InverseMode::Cg(25)] {
        let controls = GnControls { dinv: mode, ..GnControls::default() };
        let trace = run_variant(&problem, &"SAQ50-M-I".parse()?, &controls)?;
        println!(
            "SAQ50-M-I with {mode}: {} outer, {} inner, final J {:.6} (exact-inverse J {:.6}), monotone {}",
            trace.n_outer(),
            trace.n_inner(),
            trace.final_j,
            trace.final_j_exact,
            trace.is_monotone()
        );
    }
    Ok(())
}
