use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evpose::config::{split_pair, ConfigError, RunConfig};
use evpose::pipeline;
use evpose::Error;

#[derive(Parser)]
#[command(name = "evpose", version, about = "Event-camera pose toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// key = value config file
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set beta=0.8`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, short = 'i')]
    input: Option<PathBuf>,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    /// Print the resolved config before running
    #[arg(long)]
    manifest: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Frames (+ masks, background, skeleton, camera) to events and labels
    Simulate(CmdArgs),
    /// Events to one TORE tensor per window
    Tore(CmdArgs),
    /// Mask TORE tensors under the reuse scheduler
    Filter(CmdArgs),
    /// MPJPE / PCK / AUC report from a JSON manifest
    Eval(CmdArgs),
    /// Parse, ingest and materialization throughput
    Bench(CmdArgs),
}

#[derive(Args)]
struct CmdArgs {
    #[command(flatten)]
    common: Common,
}

fn resolve(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &c.sets {
        let (k, v) = split_pair(s).map_err(|reason| ConfigError::BadValue {
            key: s.clone(),
            reason,
        })?;
        cfg.set(k, v)?;
    }
    if let Some(p) = &c.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &c.output {
        cfg.output = Some(p.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, cmd) = match &cli.cmd {
        Cmd::Simulate(a) | Cmd::Tore(a) | Cmd::Filter(a) | Cmd::Eval(a) | Cmd::Bench(a) => {
            (&a.common, &cli.cmd)
        }
    };
    let cfg = resolve(common)?;
    if common.manifest {
        print!("{}", cfg.render());
    }
    match cmd {
        Cmd::Simulate(_) => {
            let s = pipeline::cmd_simulate(&cfg)?;
            println!(
                "events = {}\nframes = {}\nlabel_frames = {}",
                s.events, s.frames, s.label_frames
            );
        }
        Cmd::Tore(_) => {
            let s = pipeline::cmd_tore(&cfg)?;
            println!(
                "events = {}\nwindows = {}\nwritten = {}",
                s.events, s.windows, s.written
            );
        }
        Cmd::Filter(_) => {
            let s = pipeline::cmd_filter(&cfg)?;
            println!("frames = {}\nbackend_calls = {}", s.frames, s.backend_calls);
        }
        Cmd::Eval(_) => {
            let r = pipeline::cmd_eval(&cfg)?;
            let names: Vec<String> = evpose::sim::labels::DEFAULT_JOINT_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect();
            print!("{}", r.to_table(&names));
        }
        Cmd::Bench(_) => print!("{}", pipeline::cmd_bench(&cfg)?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
