//! Config-driven runs shared by the command line and the acceptance suite.

mod config;
mod pipeline;

pub use config::{load_dir, CheckpointChoice, EvalSettings, RunConfig, SuiteSpec};
pub use pipeline::{
    generate_files, load_teacher, run_bc, run_eval, run_rl, run_sweep, sweep_dir, BcRun,
    LoadedPolicy, RlRun, RunMetadata, SweepAxis, SweepRow, ACTOR_KIND, TEACHER_KIND,
};
