//! The original saddle algorithm: residual-only inner stopping and unit steps.
//! With the block-diagonal preconditioner the state never moves after the
//! first outer iteration; with the constraint preconditioner `q_st` and `J`
//! rise and fall along the inner iterations.

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::gaussnewton::{run_variant, GnControls};

fn main() -> wc4dvar::Result<()> {
    let problem = generate_problem(&BurgersConfig::default())?;
    let controls = GnControls { trace_inner_j: true, ..GnControls::default() };

    for name in ["SAQ0-M-0", "SAQ0-T-0", "SAQ0-B-0", "SAQ1-M-0"] {
        let trace = run_variant(&problem, &name.parse()?, &controls)?;
        let js: Vec<String> = trace.j_sequence().iter().map(|j| format!("{j:.3e}")).collect();
        println!("{name:<9} J: {}", js.join(" "));
        if name == "SAQ0-B-0" {
            let steps: Vec<String> = trace.outer.iter().map(|o| format!("{:.1e}", o.step_norm)).collect();
            println!("          |dx_k|: {}", steps.join(" "));
        }
    }

    let trace = run_variant(&problem, &"SAQ0-M-0".parse()?, &controls)?;
    println!("\nSAQ0-M-0, first outer iteration:");
    println!("{:>5} {:>14} {:>14} {:>12}", "inner", "q_st", "J", "residual");
    for r in trace.outer[0].inner.iter().take(20) {
        println!(
            "{:>5} {:>14.6e} {:>14.6e} {:>12.3e}",
            r.iteration,
            r.q_st.unwrap_or(f64::NAN),
            r.j_value.unwrap_or(f64::NAN),
            r.residual_norm
        );
    }
    Ok(())
}
