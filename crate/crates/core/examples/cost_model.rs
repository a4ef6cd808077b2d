//! Building-block costs, composite costs and the parallel speedup of a trace.

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::costmodel::{building_block_costs, pi_p, variant_cost, CompositeCosts, CostMode, CostParams};
use wc4dvar::gaussnewton::{run_variant, GnControls};
use wc4dvar::operators::ModelApprox;

fn main() -> wc4dvar::Result<()> {
    println!("pi_50(ones(50)) = {}, pi_1 = {}", pi_p(&[1.0; 50], 50)?, pi_p(&[1.0; 50], 1)?);
    for p in [1, 15, 25, 50] {
        let params = CostParams { processes: p, ..CostParams::default() };
        let t = building_block_costs(&params)?;
        let c = CompositeCosts::new(&params)?;
        println!(
            "p={p:>2}: c_L={:.3} c_LT={:.3} c_D={:.3} c_H={:.4}  c_q={:.4} c_J={:.4} c_Ksa={:.4} c_PM={:.4} c_Kfo={:.3}",
            t.c_l,
            t.c_lt,
            t.c_d,
            t.c_h,
            c.c_q(),
            c.c_j(),
            c.c_k_sa(),
            c.c_pm(ModelApprox::Zero),
            c.c_k_fo()
        );
    }

    let problem = generate_problem(&BurgersConfig::default())?;
    for name in ["SAQ1-M-0", "SAQ25-M-0", "STQ1-S-0", "FOQ15-D"] {
        let trace = run_variant(&problem, &name.parse()?, &GnControls::default())?;
        let mut line = format!("{name:<10}");
        for mode in [CostMode::Sequential, CostMode::FullyMpi, CostMode::Hybrid] {
            let params = CostParams { processes: 50, mode, ..CostParams::default() };
            line += &format!("  {mode}={:.1}", variant_cost(&trace, &params)?);
        }
        let seq = variant_cost(&trace, &CostParams::default())?;
        let par = variant_cost(&trace, &CostParams { processes: 50, ..CostParams::default() })?;
        println!("{line}  speedup(50)={:.1}", seq / par);
    }
    Ok(())
}
