use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use redflag::pipeline::{Pipeline, PipelineStage, RunOptions};
use redflag::synth::{self, SynthSpec};
use redflag::RunConfig;

#[derive(Parser)]
#[command(name = "redflag", version, about = "Red-flag indicators for public procurement and their IRT validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the dimension sweep.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for the quasi-random grid and rotation starts.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage, or only the one given with --stage.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        stage: Option<PipelineStage>,
    },
    Ingest(Common),
    Flags(Common),
    Discretize(Common),
    Screen(Common),
    Fit(Common),
    Select(Common),
    Report(Common),
    /// Write synthetic stage tables and a matching config.
    Synth {
        /// Target directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthSpec::default().authorities)]
        authorities: usize,
        #[arg(long, default_value_t = SynthSpec::default().seed)]
        seed: u64,
    },
}

fn run(common: &Common, stages: &[PipelineStage]) -> ExitCode {
    let config = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { threads: common.threads, seed: common.seed, out: common.out.clone() };
    let pipeline = Pipeline::new(config, &opts);
    match pipeline.run(stages) {
        Ok(m) => {
            for s in stages {
                if let Some(r) = m.stages.get(s) {
                    println!("{s}: {:.2}s, {} outputs", r.seconds, r.outputs.len());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    use PipelineStage as S;
    match cli.command {
        Command::Run { common, stage } => match stage {
            Some(s) => run(&common, &[s]),
            None => run(&common, &S::ALL),
        },
        Command::Ingest(c) => run(&c, &[S::Ingest]),
        Command::Flags(c) => run(&c, &[S::Flags]),
        Command::Discretize(c) => run(&c, &[S::Discretize]),
        Command::Screen(c) => run(&c, &[S::Screen]),
        Command::Fit(c) => run(&c, &[S::Fit]),
        Command::Select(c) => run(&c, &[S::Select]),
        Command::Report(c) => run(&c, &[S::Report]),
        Command::Synth { out, authorities, seed } => {
            let spec = SynthSpec { authorities, seed, ..SynthSpec::default() };
            match synth::write(&out, &spec) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
