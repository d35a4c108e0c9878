use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use supg_wrom::bench::{cmd_offline, cmd_online, cmd_peclet, cmd_report, BenchmarkConfig, Scale};
use supg_wrom::error::ErrorCategory;
use supg_wrom::problems::ProblemId;
use supg_wrom::rom::StabilizationMode;
use supg_wrom::sampling::Rule;
use supg_wrom::{Error, Result};

#[derive(Parser)]
#[command(name = "supg-wrom", version, about = "Weighted reduced order models for stabilized parametric optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration as TOML.
    Config(Common),
    /// Compute snapshots and build one reduced model per rule.
    Offline(Common),
    /// Solve the reduced problem at one parameter and export the fields.
    Online {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rule: String,
        /// Parameter values, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Vec<f64>,
        /// Reduced basis size (defaults to the largest available).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "offline-online")]
        mode: String,
        /// Also solve the truth problem and print relative errors.
        #[arg(long)]
        compare: bool,
    },
    /// Evaluate persisted models on the testing sets and write CSV tables and plots.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_plots: bool,
    },
    /// Write element Péclet numbers at one parameter.
    Peclet {
        #[command(flatten)]
        common: Common,
        /// Defaults to the upper corner of the parameter box.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no configuration file is given.
    #[arg(long, default_value = "desk")]
    scale: String,
    /// graetz-steady, graetz-parabolic, square-steady or square-parabolic.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker thread cap for snapshot and truth solves.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    n_t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timing_reps: Option<usize>,
    /// Comma-separated rule tags, e.g. `mc,pod,smolyak-cc`.
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<String>>,
    /// Comma-separated modes: offline-only, offline-online.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
}

impl Common {
    fn resolve(&self) -> Result<BenchmarkConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let c = BenchmarkConfig::load(path)?;
                if let Some(p) = &self.problem {
                    if p.parse::<ProblemId>()? != c.problem {
                        return Err(Error::Config {
                            field: "problem".into(),
                            message: format!("--problem {p} disagrees with {}", path.display()),
                        });
                    }
                }
                c
            }
            None => {
                let problem: ProblemId = self
                    .problem
                    .as_deref()
                    .ok_or_else(|| Error::Config {
                        field: "problem".into(),
                        message: "pass --problem or --config".into(),
                    })?
                    .parse()?;
                BenchmarkConfig::preset(problem, self.scale.parse::<Scale>()?)
            }
        };
        if let Some(v) = &self.output {
            c.output = v.clone();
        }
        if let Some(v) = self.h {
            c.h = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.n_train {
            c.n_train = v;
        }
        if let Some(v) = self.n_max {
            c.n_max = v;
        }
        if let Some(v) = self.n_test {
            c.n_test = v;
        }
        if let Some(v) = self.n_t {
            c.n_t = Some(v);
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.timing_reps {
            c.timing_reps = v;
        }
        if let Some(v) = &self.rules {
            c.rules = v.iter().map(|r| r.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = &self.modes {
            c.modes = v.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        }
        c.validate()?;
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(Error::Config {
                    field: "jobs".into(),
                    message: "must be at least 1".into(),
                });
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| Error::Config {
                    field: "jobs".into(),
                    message: e.to_string(),
                })?;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Config(common) => {
            print!("{}", common.resolve()?.to_toml()?);
        }
        Command::Offline(common) => {
            let c = common.resolve()?;
            for s in cmd_offline(&c)? {
                let head: Vec<String> = s.eigenvalues_y.iter().take(3).map(|v| format!("{v:.3e}")).collect();
                println!(
                    "{:<11} N_train = {:>4}  N_max = {:>3}  leading eigenvalues of y: {}  -> {}",
                    s.rule.tag(),
                    s.n_train,
                    s.n_basis,
                    head.join(", "),
                    s.dir.display()
                );
            }
        }
        Command::Online { common, rule, mu, n, mode, compare } => {
            let c = common.resolve()?;
            let rule: Rule = rule.parse()?;
            let mode: StabilizationMode = mode.parse()?;
            let out = cmd_online(&c, rule, &mu, n.unwrap_or(c.n_max), mode, compare)?;
            println!("reduced system of size {} solved in {:.3e} s", out.reduced_dim, out.online_seconds);
            if let Some([ey, eu, ep]) = out.errors {
                println!("relative errors: e_y = {ey:.3e}, e_u = {eu:.3e}, e_p = {ep:.3e}");
            }
            for f in out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Report { common, no_plots } => {
            let c = common.resolve()?;
            let report = cmd_report(&c, !no_plots)?;
            for &mode in &c.modes {
                for &rule in &c.rules {
                    if let Some(last) = report.series(rule, mode).last() {
                        println!(
                            "{:<14} {:<11} N = {:>3}  e_y = {:.2e}  e_u = {:.2e}  e_p = {:.2e}  speedup = {:.1}",
                            mode.to_string(),
                            rule.tag(),
                            last.n,
                            last.e_y,
                            last.e_u,
                            last.e_p,
                            last.speedup
                        );
                    }
                }
            }
            for f in report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Peclet { common, mu } => {
            let c = common.resolve()?;
            let s = cmd_peclet(&c, mu)?;
            println!(
                "mu = {:?}: element Peclet numbers in [{:.3e}, {:.3e}], advection dominated: {}",
                s.mu, s.min, s.max, s.advection_dominated
            );
            println!("wrote {}", s.file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Numeric => 3,
                ErrorCategory::Io => 4,
            })
        }
    }
}
