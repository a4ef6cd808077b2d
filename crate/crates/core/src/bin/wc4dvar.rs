use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wc4dvar::burgers::{generate_problem, BurgersConfig, ProblemDescriptor};
use wc4dvar::costmodel::{CostMode, CostParams};
use wc4dvar::experiments::{best_method_map, run_matrix, ExperimentGrid};
use wc4dvar::gaussnewton::{study_variants, GnControls, VariantSpec};
use wc4dvar::io;
use wc4dvar::operators::{log_spaced, InverseMode};
use wc4dvar::Result;

#[derive(Parser)]
#[command(name = "wc4dvar", version, about = "Weak-constraint 4D-Var Gauss-Newton experiments on the Burgers problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the Burgers problem and write its descriptor.
    Generate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one or more variants (all 36 study variants by default).
    Run(RunArgs),
    /// Evaluate the cost model on stored traces.
    Cost {
        #[arg(long, default_value = "out/results.json")]
        results: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        p: Vec<usize>,
        #[arg(long = "c-dinv", value_delimiter = ',', default_value = "0.5")]
        c_dinv: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "fully_mpi")]
        mode: Vec<CostMode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build best-method maps and minimum-cost surfaces from stored traces.
    Map {
        #[arg(long, default_value = "out/results.json")]
        results: PathBuf,
        #[arg(long = "c-dinv", value_delimiter = ',', default_value = "0.5,1,2,5,10")]
        c_dinv: Vec<f64>,
        #[arg(long, default_value_t = 9)]
        rho_points: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,15,25,50")]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "fully_mpi")]
        mode: Vec<CostMode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ProblemArgs {
    /// Burgers configuration as JSON (defaults otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ProblemArgs {
    fn config(&self) -> Result<BurgersConfig> {
        let mut cfg = match &self.config {
            Some(path) => io::read_json(path)?,
            None => BurgersConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Variant name such as SAQ15-M-0, STQ1-S-M or FOQ25-D; repeatable.
    #[arg(long)]
    variant: Vec<VariantSpec>,
    #[arg(long = "n-inner", default_value_t = 50)]
    n_inner: usize,
    #[arg(long = "max-inner", default_value_t = 100)]
    max_inner: usize,
    #[arg(long = "max-outer", default_value_t = 10)]
    max_outer: usize,
    #[arg(long = "eps-q", default_value_t = 0.01)]
    eps_q: f64,
    #[arg(long = "eps-r", default_value_t = 1e-6)]
    eps_r: f64,
    /// Apply D^{-1} with this many CG iterations instead of exactly.
    #[arg(long = "dinv-cg")]
    dinv_cg: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { problem, out } => generate(&problem, &out),
        Command::Run(args) => run_variants(&args),
        Command::Cost { results, p, c_dinv, mode, out } => cost(&results, &p, &c_dinv, &mode, &out),
        Command::Map { results, c_dinv, rho_points, p, mode, out } => {
            let grid = ExperimentGrid {
                c_dinv,
                rho: log_spaced(rho_points.max(1), 1e-3, 1e-1),
                processes: p,
                modes: mode,
                ..ExperimentGrid::default()
            };
            map(&results, &grid, &out)
        }
    }
}

fn generate(args: &ProblemArgs, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let cfg = args.config()?;
    let problem = generate_problem(&cfg)?;
    let descriptor = ProblemDescriptor::describe(&cfg, &problem);
    io::write_json(&out.join("problem.json"), &descriptor)?;
    let mut manifest = io::Manifest::new("generate", cfg.seed, &cfg)?;
    manifest.files = vec!["problem.json".into()];
    io::write_json(&out.join("manifest.json"), &manifest)?;
    println!("J(x0) = {:.6e}, {} observations", problem.cost(&problem.first_guess)?, problem.obs_len());
    Ok(())
}

fn run_variants(args: &RunArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let cfg = args.problem.config()?;
    let problem = generate_problem(&cfg)?;
    let controls = GnControls {
        max_outer: args.max_outer,
        n_inner: args.n_inner,
        max_inner: args.max_inner,
        eps_q: args.eps_q,
        eps_r: args.eps_r,
        dinv: args.dinv_cg.map_or(InverseMode::Exact, InverseMode::Cg),
        ..GnControls::default()
    };
    let variants = if args.variant.is_empty() { study_variants() } else { args.variant.clone() };
    let grid = ExperimentGrid { variants, n_subwindows: cfg.n_subwindows, ..ExperimentGrid::default() };
    let store = run_matrix(&problem, &grid, &controls, args.threads)?;

    for o in &store.outcomes {
        match &o.trace {
            Some(t) => println!(
                "{:<11} outer {:>2}  inner {:>5}  J_final {:.6e}",
                o.variant.to_string(),
                t.n_outer(),
                t.n_inner(),
                t.final_j_exact
            ),
            None => println!("{:<11} failed: {}", o.variant.to_string(), o.error.as_deref().unwrap_or("")),
        }
    }
    println!("J* = {:.6e}", store.reference.j_star);

    let traces: Vec<_> = store.traces().collect();
    io::write_json(&args.out.join("results.json"), &store)?;
    io::write_trace_csv(io::create(&args.out.join("traces.csv"))?, &traces)?;
    io::write_outer_csv(io::create(&args.out.join("outer.csv"))?, &traces)?;
    io::write_json(&args.out.join("problem.json"), &ProblemDescriptor::describe(&cfg, &problem))?;
    let mut manifest = io::Manifest::new("run", cfg.seed, &cfg)?;
    manifest.controls = Some(serde_json::to_value(&controls)?);
    manifest.files = ["results.json", "traces.csv", "outer.csv", "problem.json"].map(String::from).to_vec();
    io::write_json(&args.out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn cost(results: &Path, p: &[usize], c_dinv: &[f64], modes: &[CostMode], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let store = io::read_results(results)?;
    let n_sw = store.n_subwindows;
    let mut params = Vec::new();
    for &mode in modes {
        for &pp in p {
            for &c in c_dinv {
                params.push(CostParams::new(n_sw, pp, c, mode)?);
            }
        }
    }
    let traces: Vec<_> = store.traces().collect();
    io::write_cost_csv(io::create(&out.join("costs.csv"))?, &traces, &params)?;
    io::write_cost_curve_csv(io::create(&out.join("cost_curves.csv"))?, &traces, &params)?;
    for t in &traces {
        let costs: Vec<String> = params
            .iter()
            .map(|pr| wc4dvar::costmodel::variant_cost(t, pr).map(|c| format!("{c:.1}")))
            .collect::<Result<_>>()?;
        println!("{:<11} {}", t.variant.to_string(), costs.join("  "));
    }
    Ok(())
}

fn map(results: &Path, grid: &ExperimentGrid, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let store = io::read_results(results)?;
    let grid = ExperimentGrid { n_subwindows: store.n_subwindows, ..grid.clone() };
    let grid = &grid;
    let traces: Vec<_> = store.traces().collect();
    let cells = best_method_map(&traces, grid, store.initial_j, store.reference.j_star)?;
    io::write_map_csv(io::create(&out.join("map.csv"))?, &cells)?;
    for &mode in &grid.modes {
        for &p in &grid.processes {
            let tally = wc4dvar::experiments::winner_tally(&cells, p, mode);
            let parts: Vec<String> = tally.iter().map(|(v, n)| format!("{v} x{n}")).collect();
            println!("{mode} p={p}: {}", parts.join(", "));
        }
    }
    Ok(())
}
