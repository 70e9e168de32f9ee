use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use fejermon::rates::EvalBudget;
use fejermon_cli::{
    counter_from_desc, emit_csv, oracle_report, run_experiment, ExperimentConfig,
    ExperimentOutput, RunOptions, Status,
};

#[derive(Parser)]
#[command(name = "fejermon", about = "Run iteration experiments and verify their quantitative bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent experiments.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Recursion step budget for rate evaluation.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs end to end.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        configs: Vec<PathBuf>,
    },
    /// Run a single check from a config.
    Check {
        #[command(flatten)]
        common: CommonOpts,
        config: PathBuf,
        #[arg(long)]
        only: String,
    },
    /// Evaluate the rate-of-convergence bound at one delta and verify the window.
    Rate {
        #[command(flatten)]
        common: CommonOpts,
        config: PathBuf,
        #[arg(long)]
        delta: String,
    },
    /// Brute-force the minimal metastability index and compare with the bound.
    Oracle {
        #[command(flatten)]
        common: CommonOpts,
        config: PathBuf,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        g: String,
    },
}

fn options(common: &CommonOpts) -> RunOptions {
    RunOptions {
        budget: EvalBudget { max_steps: common.budget, ..EvalBudget::default() },
        only: None,
        extra_deltas: Vec::new(),
        seed_override: common.seed,
    }
}

fn print_rows(name: &str, out: &ExperimentOutput) {
    for row in &out.rows {
        println!(
            "[{name}] {}: {}{}{}",
            row.check,
            row.status,
            if row.witness.is_empty() { String::new() } else { format!("  witness: {}", row.witness) },
            if row.bound.is_empty() { String::new() } else { format!("  bound: {}", row.bound) },
        );
    }
}

fn run_many(common: &CommonOpts, configs: &[PathBuf], opts: &RunOptions) -> i32 {
    let loaded: Vec<_> = configs
        .iter()
        .map(|p| ExperimentConfig::from_path(p).map_err(|e| (p.clone(), e)))
        .collect();
    let mut any_fail = false;
    let mut any_error = false;
    let jobs = common.jobs.max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<ExperimentOutput, String>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(loaded.len().max(1)) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= loaded.len() {
                    break;
                }
                let item = match &loaded[idx] {
                    Ok(cfg) => run_experiment(cfg, opts).map_err(|e| e.to_string()),
                    Err((p, e)) => Err(format!("{}: {e}", p.display())),
                };
                results.lock().unwrap().push((idx, item));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    for (idx, item) in results {
        match item {
            Ok(out) => {
                print_rows(&out.name, &out);
                if out.has_failures() {
                    any_fail = true;
                }
                match emit_csv(&common.out, &out.name, &out.trajectory, &out.rows) {
                    Ok((t, r)) => {
                        println!("[{}] wrote {} and {}", out.name, t.display(), r.display())
                    }
                    Err(e) => {
                        eprintln!("[{}] io error: {e}", out.name);
                        any_error = true;
                    }
                }
            }
            Err(msg) => {
                eprintln!("error in config #{idx}: {msg}");
                any_error = true;
            }
        }
    }
    if any_error {
        2
    } else if any_fail {
        1
    } else {
        0
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run { common, configs } => {
            if configs.is_empty() {
                eprintln!("no configs given");
                2
            } else {
                run_many(common, configs, &options(common))
            }
        }
        Command::Check { common, config, only } => {
            let mut opts = options(common);
            opts.only = Some(only.clone());
            run_many(common, std::slice::from_ref(config), &opts)
        }
        Command::Rate { common, config, delta } => {
            let mut opts = options(common);
            opts.only = Some("rate".to_string());
            opts.extra_deltas = vec![delta.clone()];
            run_many(common, std::slice::from_ref(config), &opts)
        }
        Command::Oracle { common, config, k, g } => {
            let opts = options(common);
            match ExperimentConfig::from_path(config)
                .map_err(|e| e.to_string())
                .and_then(|cfg| {
                    let counter = counter_from_desc(g).map_err(|e| e.to_string())?;
                    oracle_report(&cfg, &opts, *k, &counter).map_err(|e| e.to_string())
                }) {
                Ok(row) => {
                    println!(
                        "{}: {}  witness: {}  bound: {}",
                        row.check, row.status, row.witness, row.bound
                    );
                    if row.status == Status::Fail {
                        1
                    } else {
                        0
                    }
                }
                Err(msg) => {
                    eprintln!("error: {msg}");
                    2
                }
            }
        }
    };
    std::process::exit(code);
}
