//! Runs the 36-variant matrix on the default Burgers problem and builds the
//! best-method maps. CSV files go to the directory given as first argument
//! (default `target/best_method_map`).

use std::path::PathBuf;

use wc4dvar::burgers::{generate_problem, BurgersConfig};
use wc4dvar::costmodel::CostMode;
use wc4dvar::experiments::{best_method_map, run_matrix, winner_tally, ExperimentGrid};
use wc4dvar::gaussnewton::GnControls;
use wc4dvar::io;

fn main() -> wc4dvar::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("target/best_method_map"));
    std::fs::create_dir_all(&out)?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());

    let problem = generate_problem(&BurgersConfig::default())?;
    let grid = ExperimentGrid { modes: vec![CostMode::FullyMpi, CostMode::Hybrid], ..ExperimentGrid::default() };
    let store = run_matrix(&problem, &grid, &GnControls::default(), threads)?;
    println!("J(x0) = {:.4e}, J* = {:.6}", store.initial_j, store.reference.j_star);

    let traces: Vec<_> = store.traces().collect();
    let cells = best_method_map(&traces, &grid, store.initial_j, store.reference.j_star)?;
    for &mode in &grid.modes {
        for &p in &grid.processes {
            let tally: Vec<String> = winner_tally(&cells, p, mode).iter().map(|(v, n)| format!("{v} x{n}")).collect();
            let max_min_cost = cells
                .iter()
                .filter(|c| c.p == p && c.mode == mode)
                .filter_map(|c| c.min_cost)
                .fold(0.0, f64::max);
            println!("{mode:<9} p={p:>2}: {} (largest minimum cost {max_min_cost:.1})", tally.join(", "));
        }
    }

    io::write_map_csv(io::create(&out.join("map.csv"))?, &cells)?;
    io::write_trace_csv(io::create(&out.join("traces.csv"))?, &traces)?;
    io::write_outer_csv(io::create(&out.join("outer.csv"))?, &traces)?;
    io::write_json(&out.join("results.json"), &store)?;
    println!("wrote {}", out.display());
    Ok(())
}
