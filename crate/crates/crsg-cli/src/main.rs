//! Command line front end: build graphs from scenes, run navigation
//! sequences, query stored graphs, render traces.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crsg::commands::{cmd_build, cmd_query, cmd_render, cmd_run, RunRequest};
use crsg::navigation::RunMode;

#[derive(Parser)]
#[command(
    name = "crsg",
    about = "Carrier-relationship scene graphs with a fixed-policy navigator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scene graph from a scene's initial world and save it as JSON.
    Build(BuildArgs),
    /// Run the task sequence of a scene, writing traces and metrics.
    Run(RunArgs),
    /// Rank a stored graph's objects against a text query.
    Query(QueryArgs),
    /// Render a scene with optional episode traces to SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Where to write the graph JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Start from this stored graph instead of building one fresh.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// full, only-carriers-random, only-carriers-llm, no-update, w/o-gpt,
    /// w/o-text, or w/o-rgb.
    #[arg(long, default_value = "full")]
    mode: String,
    /// Seed for one sequence; repeat the flag for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory for traces, metrics and final graphs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-seed runs.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct QueryArgs {
    /// Stored graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Query text; `X on the Y` restricts the ranking to matching carriers.
    #[arg(long)]
    text: String,
    /// How many results to print.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Trace files to overlay; repeat the flag for several.
    #[arg(long = "trace")]
    traces: Vec<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Build(args) => {
            let summary = cmd_build(&args.scene, &args.out).context("build failed")?;
            println!(
                "built {} -> {}: {} rooms, {} objects ({} carriers, {} carried, {} other), world {}",
                summary.building,
                summary.out.display(),
                summary.rooms,
                summary.objects,
                summary.carriers,
                summary.carried,
                summary.others,
                &summary.world_hash[..12],
            );
        }
        Command::Run(args) => {
            let mode: RunMode = args.mode.parse().context("bad --mode")?;
            let request = RunRequest {
                scene: args.scene,
                graph: args.graph,
                mode,
                seeds: args.seeds,
                out: args.out,
                parallel: args.parallel,
            };
            let output = cmd_run(&request).context("run failed")?;
            let s = &output.summary;
            println!(
                "{} [{}] seeds {:?}: {} episodes, success {:.3}, spl {:.3}",
                s.scene, s.mode, s.seeds, s.episodes, s.mean_success, s.mean_spl
            );
            for (i, sr) in s.tasks_sr.iter().enumerate() {
                println!("  tasks_sr({}) = {:.3}", i + 1, sr);
            }
        }
        Command::Query(args) => {
            let ranked = cmd_query(&args.graph, &args.text, args.top_k).context("query failed")?;
            for (id, sim) in ranked {
                println!("{sim:.4}  {id}");
            }
        }
        Command::Render(args) => {
            let path = cmd_render(&args.scene, &args.traces, &args.out).context("render failed")?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
