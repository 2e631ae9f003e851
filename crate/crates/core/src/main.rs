use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use qcqp_esb::bench::{compare, gap_csv, gen_bbp, gen_pooling_toy, runs_csv, summary_csv, GenError, PoolingKind};
use qcqp_esb::bnb::{solve, SolverConfig, Verdict};
use qcqp_esb::branching::{BranchParams, Rule};
use qcqp_esb::instance::{parse_instance, InstanceError, QcqpInstance};

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Instance {
        path: PathBuf,
        source: InstanceError,
    },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("{0}")]
    Usage(String),
}

/// Spatial branch-and-bound for box-constrained QCQPs with extreme strong
/// branching.
#[derive(Debug, Parser)]
#[command(name = "qcqp-esb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and print a JSON report.
    ///
    /// Exit status: 0 gap reached, 2 node or time limit (or unresolved),
    /// 3 infeasible, 1 usage or input error.
    Solve {
        /// Instance file (JSON).
        path: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Include a per-node trace in the report.
        #[arg(long)]
        trace: bool,
        /// Leave wall-clock time out of the report, for byte-identical output.
        #[arg(long)]
        omit_timing: bool,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several rules on every `*.json` instance in a directory.
    Compare {
        dir: PathBuf,
        /// Rules to run, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "basic,balance,esb")]
        rules: Vec<Rule>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write runs.csv, summary.csv and gaps.csv here; otherwise print
        /// the per-run table.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a generated instance.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
}

#[derive(Debug, Subcommand)]
enum GenKind {
    /// Bilinear bipartite instance: products couple a left and a right group.
    Bbp {
        n_left: usize,
        n_right: usize,
        /// Probability that a left/right pair carries a product, in (0, 1].
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-pool blending instance.
    Pooling {
        #[arg(long, value_enum, default_value_t = PoolingArg::HaverlyLike)]
        kind: PoolingArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    HaverlyLike,
    ZeroSpread,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Branching rule.
    #[arg(long, default_value = "esb")]
    rule: Rule,
    /// Binary-search steps per side and variable (esb).
    #[arg(long, default_value_t = 4)]
    iter_max: usize,
    /// Floor of each factor in the product score.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Midpoint weight of the basic rule's branching point.
    #[arg(long, default_value_t = 0.25)]
    lambda: f64,
    /// Relative optimality gap at which to stop (0.001 = 0.1%).
    #[arg(long, default_value_t = 1e-3)]
    gap_tol: f64,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    /// Maximum number of processed nodes.
    #[arg(long, default_value_t = 100_000)]
    node_cap: usize,
    /// Run the local search every this many processed nodes (0 disables).
    #[arg(long, default_value_t = 10)]
    ub_frequency: usize,
    /// Seed of the root multi-start search.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constraint violation accepted for incumbents.
    #[arg(long, default_value_t = 1e-6)]
    feas_tol: f64,
    /// Seconds given to the root multi-start search.
    #[arg(long, default_value_t = 5.0)]
    root_budget: f64,
    /// Branch on every variable, not only those appearing in products.
    #[arg(long)]
    branch_all_vars: bool,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, CliError> {
        let positive = [
            ("--epsilon", self.epsilon),
            ("--gap-tol", self.gap_tol),
            ("--time-limit", self.time_limit),
            ("--feas-tol", self.feas_tol),
        ];
        for (flag, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("{flag} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CliError::Usage(format!("--lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.root_budget >= 0.0 && self.root_budget.is_finite()) {
            return Err(CliError::Usage("--root-budget must be non-negative".into()));
        }
        Ok(SolverConfig {
            rule: self.rule,
            branch: BranchParams {
                iter_max: self.iter_max,
                epsilon: self.epsilon,
                lambda: self.lambda,
                branch_all_vars: self.branch_all_vars,
                ..BranchParams::default()
            },
            gap_tol: self.gap_tol,
            node_cap: self.node_cap,
            time_limit: Duration::from_secs_f64(self.time_limit),
            ub_frequency: self.ub_frequency,
            feas_tol: self.feas_tol,
            seed: self.seed,
            root_budget: Duration::from_secs_f64(self.root_budget),
            trace: false,
        })
    }
}

fn read_instance(path: &Path) -> Result<QcqpInstance, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance(&text).map_err(|source| CliError::Instance {
        path: path.to_path_buf(),
        source,
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Solve {
            path,
            solver,
            trace,
            omit_timing,
            out,
        } => {
            let mut config = solver.config()?;
            config.trace = trace;
            let instance = read_instance(&path)?;
            let mut report = solve(&instance, &config);
            if omit_timing {
                report.wall_seconds = None;
            }
            write_output(out.as_deref(), &(report.to_json() + "\n"))?;
            Ok(ExitCode::from(match report.verdict {
                Verdict::GapReached => 0,
                Verdict::NodeLimit | Verdict::TimeLimit | Verdict::Unresolved => 2,
                Verdict::Infeasible => 3,
            }))
        }
        Command::Compare {
            dir,
            rules,
            solver,
            out_dir,
        } => {
            let config = solver.config()?;
            let entries = fs::read_dir(&dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            paths.sort();
            let instances = paths
                .iter()
                .map(|p| read_instance(p))
                .collect::<Result<Vec<_>, _>>()?;
            let records = compare(&instances, &rules, &config);
            match out_dir {
                Some(d) => {
                    fs::create_dir_all(&d).map_err(|source| CliError::Io {
                        path: d.clone(),
                        source,
                    })?;
                    write_output(Some(&d.join("runs.csv")), &runs_csv(&records))?;
                    write_output(Some(&d.join("summary.csv")), &summary_csv(&records, &rules))?;
                    write_output(Some(&d.join("gaps.csv")), &gap_csv(&records, &rules))?;
                }
                None => write_output(None, &runs_csv(&records))?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { kind } => {
            let (instance, out) = match kind {
                GenKind::Bbp {
                    n_left,
                    n_right,
                    density,
                    seed,
                    out,
                } => (gen_bbp(n_left, n_right, density, seed)?, out),
                GenKind::Pooling { kind, seed, out } => {
                    let kind = match kind {
                        PoolingArg::HaverlyLike => PoolingKind::HaverlyLike,
                        PoolingArg::ZeroSpread => PoolingKind::ZeroSpread,
                    };
                    (gen_pooling_toy(kind, seed), out)
                }
            };
            write_output(out.as_deref(), &(instance.to_json() + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors share exit status 1 with other input errors; 2 means a
    // limit was reached.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
