use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softctrl::experiment::{
    generate_files, run_bc, run_eval, run_rl, run_sweep, RunConfig, SuiteSpec, SweepAxis,
};
use softctrl::oracle::{run_suite, SuiteOptions};
use softctrl::scenario::ScenarioKind;
use softctrl::Result;

#[derive(Parser)]
#[command(
    name = "softctrl",
    version,
    about = "Closed-loop driving RL with entropy and KL-to-teacher control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of scene files to use instead of the configured suite.
    #[arg(long)]
    scenarios: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(d) = &self.scenarios {
            cfg.scenarios = SuiteSpec::from_dir(d);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write generated scene files.
    Gen {
        /// Scenario kind, or `all` to cycle through every kind.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, default_value_t = 12)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the behavior-cloned teacher.
    TrainBc(Common),
    /// Fine-tune an actor from a teacher checkpoint.
    TrainRl {
        #[command(flatten)]
        common: Common,
        /// Teacher checkpoint; defaults to `<out>/teacher.json`.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Score a teacher or actor checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and score once per value of one regularization weight.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of w_h, w_kl, exkl_kl_coef.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Run the tabular oracle checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_kinds(kind: &str) -> Result<Vec<ScenarioKind>> {
    if kind == "all" {
        Ok(ScenarioKind::ALL.to_vec())
    } else {
        Ok(vec![kind.parse()?])
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            kind,
            count,
            seed,
            out,
        } => {
            let files = generate_files(&parse_kinds(&kind)?, count, seed, &out)?;
            println!("wrote {} scenes to {}", files.len(), out.display());
        }
        Command::TrainBc(common) => {
            let cfg = common.load()?;
            let run = run_bc(&cfg)?;
            let s = run.report.summary();
            println!(
                "teacher {} ({} samples, final loss {:.6}) failures {} discomfort {:.4}",
                run.checkpoint.display(),
                run.outcome.samples,
                run.outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
                s.failure,
                s.mu_acc
            );
        }
        Command::TrainRl { common, teacher } => {
            let mut cfg = common.load()?;
            if teacher.is_some() {
                cfg.teacher = teacher;
            }
            let run = run_rl(&cfg)?;
            let s = run.report.summary();
            println!(
                "{} run in {}: {} updates, best step {}, failures {} discomfort {:.4}",
                run.metadata.variant,
                cfg.out_dir.display(),
                run.outcome.updates,
                run.outcome.best_step,
                s.failure,
                s.mu_acc
            );
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?.resolved()?;
            let scenes = cfg.scenarios.load()?;
            let report = run_eval(&checkpoint, &scenes, &cfg.sim, cfg.eval.seed, &cfg.out_dir)?;
            print!("{}", report.summary_json());
        }
        Command::Sweep {
            common,
            axis,
            values,
            teacher,
        } => {
            let mut cfg = common.load()?;
            if teacher.is_some() {
                cfg.teacher = teacher;
            }
            let axis: SweepAxis = axis.parse()?;
            let rows = run_sweep(&cfg, axis, &values)?;
            for r in &rows {
                println!(
                    "{axis}={} tau={:.4} alpha={:.4} failures {} discomfort {:.4}",
                    r.value, r.tau, r.alpha, r.failure, r.mu_acc
                );
            }
        }
        Command::Verify { seed } => {
            let checks = run_suite(&SuiteOptions {
                seed,
                ..SuiteOptions::default()
            })?;
            println!(
                "{:<26} {:>14} {:>10}  result",
                "check", "max discrepancy", "tolerance"
            );
            for c in &checks {
                println!(
                    "{:<26} {:>14.3e} {:>10.1e}  {}",
                    c.name,
                    c.max_discrepancy,
                    c.tolerance,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
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
