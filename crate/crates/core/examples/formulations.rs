//! The state, saddle and forcing formulations of one Gauss-Newton subproblem
//! give the same increment when solved to full accuracy.

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::formulations::{GnSubproblem, SaddlePrecond};
use wc4dvar::krylov::{fom_forcing, fom_left, gmres_left, SolverControls};
use wc4dvar::linalg::{max_abs_diff, norm};
use wc4dvar::operators::{InverseMode, ModelApprox};

fn main() -> wc4dvar::Result<()> {
    let cfg = BurgersConfig::small(12, 4, 20, 4);
    let problem = generate_problem(&cfg)?;
    let sub = GnSubproblem::from_problem(&problem, &problem.first_guess, ModelApprox::Identity, InverseMode::Exact)?;
    let (s, m) = (sub.state_len(), sub.obs_len());
    let controls = SolverControls::with_max_iterations(2 * s + m);

    let (dx_state, t) = fom_left(
        |v: &[f64]| sub.state_matvec(v),
        |v: &[f64]| sub.apply_s_inverse(v),
        &sub.state_rhs()?,
        &controls,
        None,
    )?;
    println!("state   (FOM, S^-1): {:>3} iterations", t.iterations());

    let (sol, t) = gmres_left(
        |v: &[f64]| sub.saddle_matvec(v),
        |r: &[f64]| sub.apply_saddle_precond(SaddlePrecond::Constraint, r),
        &sub.saddle_rhs(),
        &controls,
        None,
    )?;
    let dx_saddle = &sol[s + m..];
    println!("saddle  (GMRES, P_M): {:>3} iterations", t.iterations());

    let (dx_forcing, t) = fom_forcing(&sub, &sub.forcing_rhs()?, &controls, None)?;
    println!("forcing (FOM, D):    {:>3} iterations", t.iterations());

    let scale = norm(&dx_state);
    println!("|dx_saddle - dx_state| / |dx|  = {:.1e}", max_abs_diff(dx_saddle, &dx_state) / scale);
    println!("|dx_forcing - dx_state| / |dx| = {:.1e}", max_abs_diff(&dx_forcing, &dx_state) / scale);
    println!("q_st(0) = {:.6e}, q_st(dx) = {:.6e}", sub.eval_qst(&vec![0.0; s])?, sub.eval_qst(&dx_state)?);
    Ok(())
}
