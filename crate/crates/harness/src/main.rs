use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use uam_prefs::config::ExperimentConfig;
use uam_prefs::export::{write_metrics, write_trajectories};
use uam_prefs::runner::{self, RunOptions};
use uam_prefs::service::{self, LiveService};
use uam_prefs_core::iteration::{final_stochastic_model, sample_initial_states, stream_rng, Purpose};
use uam_prefs_core::RewardWeights;

#[derive(Parser)]
#[command(name = "uam-prefs", version, about = "Learn landing reward weights from pairwise preferences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulated-expert sessions (a sweep when list-valued keys are given).
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for metrics.csv, final_weights.csv and sessions/.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Fill the wall_seconds metric column.
        #[arg(long)]
        timing: bool,
        /// Worker threads; 0 uses every available core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Export trajectories from the softmax policy for fixed weights.
    Sample {
        #[command(flatten)]
        config: ConfigArgs,
        /// Weights as alpha,beta,gamma_accel.
        #[arg(long)]
        weights: String,
        /// Number of trajectories, one per sampled initial state.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a live elicitation session over HTTP.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Session file; resumed if it exists.
        #[arg(long)]
        session: Option<PathBuf>,
    },
    /// Continue an interrupted session file.
    Resume {
        session: PathBuf,
        /// Run to this many iterations instead of the stored max_iter.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Metrics CSV for the whole session; defaults to <session>.metrics.csv.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
}

/// Configuration file plus overrides. Named flags are shorthands for `--set`.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. --set mu=0,500.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    samples: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    max_iter: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    w_true: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    precision: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    time_step: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let named = [
            ("method", &self.method),
            ("mu", &self.mu),
            ("k", &self.k),
            ("samples", &self.samples),
            ("max_iter", &self.max_iter),
            ("epsilon", &self.epsilon),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("w_true", &self.w_true),
            ("precision", &self.precision),
            ("lambda", &self.lambda),
            ("time_step", &self.time_step),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            timing,
            threads,
        } => {
            let config = config.load()?;
            let options = RunOptions {
                out_dir: Some(out.clone()),
                timing,
                threads,
            };
            let outcomes = runner::run_experiment(&config, &options)?;
            for o in &outcomes {
                let w = o.estimate.as_array();
                println!(
                    "{}: estimate {:.4},{:.4},{:.4} cosine {}",
                    o.config.id,
                    w[0],
                    w[1],
                    w[2],
                    o.cosine_at(o.config.max_iter)
                        .map_or("-".into(), |c| format!("{c:.4}"))
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Sample {
            config,
            weights,
            count,
            out,
        } => {
            let config = config.load()?;
            let parts: Vec<f64> = weights
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .context("--weights must be three numbers")?;
            let arr: [f64; 3] = parts
                .try_into()
                .map_err(|_| anyhow::anyhow!("--weights must be three numbers"))?;
            let w = RewardWeights::try_from(arr)?;
            let model = config.build_model()?;
            let trajectories = if count == 0 {
                Vec::new()
            } else {
                let mut rng = stream_rng(config.seed, 0, Purpose::InitialStates);
                let starts = sample_initial_states(&model, count, &mut rng)?;
                let mut rng = stream_rng(config.seed, 0, Purpose::Rollout);
                final_stochastic_model(&model, &w, config.lambda, &starts, 1, &mut rng)?
            };
            match out {
                Some(p) => write_trajectories(fs::File::create(&p)?, &model, &trajectories)
                    .with_context(|| format!("writing {}", p.display()))?,
                None => write_trajectories(io::stdout().lock(), &model, &trajectories)?,
            }
        }
        Command::Serve {
            config,
            bind,
            session,
        } => {
            let config = config.load()?;
            if config.w_true.is_some() {
                anyhow::bail!("serve runs a live session; remove w_true from the configuration");
            }
            let session_config = config
                .sessions()
                .into_iter()
                .next()
                .context("configuration expands to no sessions")?;
            let service = LiveService::new(session_config, session.as_deref())?;
            tokio::runtime::Runtime::new()?.block_on(service::serve(service, &bind))?;
        }
        Command::Resume {
            session,
            max_iter,
            metrics,
            timing,
        } => {
            let outcome = runner::resume_session(&session, max_iter, timing)?;
            let path = metrics.unwrap_or_else(|| {
                let mut p = session.clone().into_os_string();
                p.push(".metrics.csv");
                PathBuf::from(p)
            });
            write_metrics(fs::File::create(&path)?, &outcome.rows)
                .with_context(|| format!("writing {}", path.display()))?;
            let w = outcome.estimate.as_array();
            println!(
                "{}: {} iterations, estimate {:.4},{:.4},{:.4}",
                outcome.config.id,
                outcome.rows.len(),
                w[0],
                w[1],
                w[2]
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
