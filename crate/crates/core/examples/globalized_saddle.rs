//! Globalized saddle variants SAQl-M-0: periodic quadratic-decrease checks and
//! a backtracking linesearch give monotone decrease of J.

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::costmodel::{cost_curve, CostParams};
use wc4dvar::gaussnewton::{run_variant, GnControls};

fn main() -> wc4dvar::Result<()> {
    let problem = generate_problem(&BurgersConfig::default())?;
    let controls = GnControls::default();
    let seq = CostParams::default();

    for l in [1, 15, 25, 50] {
        let name = format!("SAQ{l}-M-0");
        let trace = run_variant(&problem, &name.parse()?, &controls)?;
        println!("{name}: {:?}, {} outer / {} inner / {} q evaluations", trace.status, trace.n_outer(), trace.n_inner(), trace.n_q_evaluations());
        println!("  {:>5} {:>12} {:>10} {:>6} {:>8} {:>20}", "outer", "J", "|g|", "n_i", "alpha", "termination");
        for o in &trace.outer {
            println!(
                "  {:>5} {:>12.5e} {:>10.3e} {:>6} {:>8.4} {:>20}",
                o.outer,
                o.j_value,
                o.gradient_norm,
                o.inner_iterations,
                o.alpha,
                o.termination.as_str()
            );
        }
        let curve = cost_curve(&trace, &seq)?;
        let (cost, j) = curve.last().unwrap();
        println!("  final J {j:.5e} after sequential cost {cost:.1}\n");
    }
    Ok(())
}
