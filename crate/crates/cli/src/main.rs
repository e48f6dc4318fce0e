use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pomdp_ope::data::{load_dataset, save_dataset};
use pomdp_ope_cli::report::slope_fits;
use pomdp_ope_cli::{load_experiment, run, run_experiment, thread_pool, Experiment, ResultRow};

#[derive(Parser)]
#[command(name = "pomdp-ope", version, about = "Off-policy evaluation experiments for tabular POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "POMDP_OPE_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep, diagnostics and dynamics; writes results and report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one offline dataset file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Tuples to draw (defaults to the first n_grid entry).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured estimators on a dataset file.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory for results.csv / results.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank conditions and condition numbers of the population law.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sequence probabilities under the evaluation policy.
    Dynamics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The n_grid x seeds product with error-vs-n slopes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<Experiment> {
    let mut exp = load_experiment(&common.config)?;
    if let Some(s) = common.seed_override {
        exp.config.seeds = vec![s];
    }
    Ok(exp)
}

fn out_dir(exp: &Experiment, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| exp.config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"))
}

fn print_rows(rows: &[ResultRow]) {
    println!("{:<24} {:>8} {:>8} {:>14} {:>14} {:>12}  status", "estimator", "n", "seed", "j_hat", "j_true", "abs_error");
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    let g = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
    for r in rows {
        let err = r.reference_diff.or(r.abs_error);
        println!(
            "{:<24} {:>8} {:>8} {:>14} {:>14} {:>12}  {}",
            r.estimator,
            r.n,
            r.seed,
            f(r.j_hat),
            f(r.j_true),
            g(err),
            r.status
        );
    }
}

fn print_slopes(rows: &[ResultRow]) {
    for fit in slope_fits(rows) {
        match fit.slope {
            Some(s) => println!("{}: log-error vs log-n slope {s:.4}", fit.estimator),
            None => println!("{}: single grid point, no slope", fit.estimator),
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { common, out } => {
            let exp = load(&common)?;
            let dir = out_dir(&exp, out);
            let res = thread_pool(common.jobs)?.install(|| run_experiment(&exp, &dir, true))?;
            print_rows(&res.rows);
            print_slopes(&res.rows);
            println!("wrote {}", dir.display());
        }
        Command::Sweep { common, out } => {
            let exp = load(&common)?;
            let dir = out_dir(&exp, out);
            let res = thread_pool(common.jobs)?.install(|| run_experiment(&exp, &dir, false))?;
            print_slopes(&res.rows);
            println!("{} rows; wrote {}", res.rows.len(), dir.display());
        }
        Command::Simulate { common, n, out } => {
            let exp = load(&common)?;
            let n = n.unwrap_or(exp.config.n_grid[0]);
            let seed = exp.config.seeds[0];
            let ds = thread_pool(common.jobs)?.install(|| run::simulate(&exp, n, seed))?;
            save_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} tuples and {} initial samples to {}", ds.n(), ds.n_init(), out.display());
        }
        Command::Estimate { common, data, out } => {
            let exp = load(&common)?;
            let ds = load_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            let hash = run::diagnostics_hash(&run::diagnose(&exp));
            let rows = thread_pool(common.jobs)?.install(|| run::estimate(&exp, &ds, &hash))?;
            print_rows(&rows);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                run::write_csv(&rows, &dir.join("results.csv"))?;
                run::write_jsonl(&rows, &dir.join("results.jsonl"))?;
            }
        }
        Command::Diagnose { common, out } => {
            let exp = load(&common)?;
            let r = run::diagnose(&exp)?;
            let (k, c) = (&r.ranks, &r.numbers);
            println!(
                "ranks: Pr(F̄|S̄) {}, Pr(S̄,H) {}, Pr(F̄,H) {}, |S̄_b| {}",
                k.rank_f_given_s, k.rank_s_h, k.rank_f_h, k.s_bar_b_size
            );
            println!("observability: {}", if k.observability { "ok" } else { "FAILS" });
            println!("invertibility: {}", if k.invertibility { "ok" } else { "FAILS" });
            println!("IV1 {:.4e}  Dr {:.4e}  kappa {:.4e}  max mu {:.4}", c.iv1, c.dr, c.kappa, c.mu_max);
            if let Some(p) = out {
                write_json(&r, &p)?;
            }
        }
        Command::Dynamics { common, out } => {
            let exp = load(&common)?;
            let rows = thread_pool(common.jobs)?.install(|| run::dynamics(&exp))?;
            for r in &rows {
                println!(
                    "{:<16} {:?}: truth {:.6e}, spectral {}, minimax {}  {}",
                    r.source,
                    r.sequence,
                    r.truth,
                    r.spectral.map_or("-".into(), |v| format!("{v:.6e}")),
                    r.minimax.map_or("-".into(), |v| format!("{v:.6e}")),
                    r.status
                );
            }
            if let Some(p) = out {
                run::write_jsonl(&rows, &p)?;
            }
        }
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(v: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
