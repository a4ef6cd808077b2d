//! Generates the default forced Burgers problem and prints its main features.

use wc4dvar::burgers::{generate_problem, BurgersConfig, ProblemDescriptor};
use wc4dvar::linalg::condition_number;

fn main() -> wc4dvar::Result<()> {
    let cfg = BurgersConfig::default();
    let problem = generate_problem(&cfg)?;

    println!(
        "n = {}, subwindows = {}, steps per subwindow = {}, T = {}",
        cfg.n,
        cfg.n_subwindows,
        cfg.steps_per_subwindow,
        cfg.window_length()
    );
    println!("state length {} ({} blocks), observations {}", problem.state_len(), cfg.n_subwindows + 1, problem.obs_len());

    let d = problem.d_cov.blocks();
    println!("cond(B)   = {:.3e}", condition_number(d[0].matrix()));
    println!("cond(Q_j) = {:.3e}", condition_number(d[1].matrix()));
    let r1 = problem.r_cov.blocks()[1].matrix();
    println!("cond(R_j) = {:.3e}", condition_number(r1));

    let terms = problem.cost_terms(&problem.first_guess)?;
    println!(
        "J(x0) = {:.4e}  (background {:.3e}, observations {:.3e}, model error {:.3e})",
        terms.total(),
        terms.background,
        terms.observation,
        terms.model_error
    );
    if let Some(truth) = &problem.truth {
        println!("J(truth) = {:.4e}", problem.cost(truth)?);
    }

    let desc = ProblemDescriptor::describe(&cfg, &problem);
    println!("observation digest {}", &desc.digests.observations[..16]);
    let again = desc.regenerate()?;
    println!("regenerated from descriptor: J(x0) = {:.4e}", again.cost(&again.first_guess)?);
    Ok(())
}
