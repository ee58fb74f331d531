//! End-to-end operations behind the CLI: build a graph from a scene, run
//! task sequences against the world, query a stored graph, render traces.
//!
//! Navigation failures are results, not errors: a run that never finds its
//! targets still returns Ok with zeroed metrics. Errors are reserved for bad
//! configuration and broken inputs.

use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::navigation::{run_episode, EpisodeContext, NavError, RunMode};
use crate::providers::{ProviderConfig, Providers};
use crate::render::render_svg;
use crate::scenegraph::{
    build_graph, load_graph, query as graph_query, resolve_command, save_graph, GraphError,
};
use crate::simworld::{
    embedder_info, load_scene, materialize_displacements, Scene, SceneError,
};
use crate::trace::{read_trace, write_metrics_csv, write_trace, EpisodeTrace, TaskSummary};
use crate::{CarrierRelationshipSceneGraph, ObjectId, PlanOutcome};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("geometry failed: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error("io failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// What a graph build produced.
#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub out: PathBuf,
    pub building: String,
    pub world_hash: String,
    pub rooms: usize,
    pub objects: usize,
    pub carriers: usize,
    pub carried: usize,
    pub others: usize,
}

/// Builds a graph from a scene's initial world and writes it to `out`.
pub fn cmd_build(scene_path: &FsPath, out: &FsPath) -> Result<BuildSummary, CommandError> {
    let scene = load_scene(scene_path)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let providers = Providers::from_env(&scene.provider);
    let graph = build_graph(
        scene.name.clone(),
        scene.world.records(),
        scene.world.rooms.clone(),
        &scene.construction,
        &providers,
        embedder_info(&scene.provider),
    )?;
    save_graph(&graph, out)?;
    Ok(BuildSummary {
        out: out.to_path_buf(),
        building: graph.building.clone(),
        world_hash: scene.world.world_hash(),
        rooms: graph.rooms.len(),
        objects: graph.objects.len(),
        carriers: graph.carriers.len(),
        carried: graph.carried.values().map(|s| s.len()).sum(),
        others: graph.others.len(),
    })
}

/// One seed's pass over every task of a scene.
#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub seed: u64,
    pub tasks: Vec<TaskSummary>,
    pub traces: Vec<EpisodeTrace>,
    pub graph: CarrierRelationshipSceneGraph,
}

/// Runs the whole task sequence of a scene under one seed. The graph starts
/// from `initial_graph` when given (stale knowledge is allowed), otherwise
/// it is built fresh from the pristine world; displacements apply to the
/// world only, before their task. The robot keeps its pose across tasks.
pub fn run_sequence(
    scene: &Scene,
    initial_graph: Option<&CarrierRelationshipSceneGraph>,
    mode: RunMode,
    seed: u64,
) -> Result<SequenceOutcome, CommandError> {
    let providers = Providers::from_env(&scene.provider);
    let mut world = scene.world.clone();
    let mut graph = match initial_graph {
        Some(g) => g.clone(),
        None => build_graph(
            scene.name.clone(),
            world.records(),
            world.rooms.clone(),
            &scene.construction,
            &providers,
            embedder_info(&scene.provider),
        )?,
    };
    let events = materialize_displacements(
        &scene.displacements,
        &world,
        &scene.provider.affinity,
        &scene.construction,
        seed,
    )?;

    let ctx = EpisodeContext {
        providers: &providers,
        policy: &scene.policy,
        verify: &scene.verify,
        construction: &scene.construction,
        matching: &scene.matching,
        mode,
        histogram_bins: scene.provider.histogram_bins,
    };

    let mut pose = world.start;
    let mut tasks = Vec::new();
    let mut traces = Vec::new();
    for (idx, task) in scene.tasks.iter().enumerate() {
        for ev in events.iter().filter(|e| e.before_task == idx + 1) {
            world.displace(&ev.object, &ev.to, &scene.construction)?;
        }
        let input = task.command_input(&world);
        let command = resolve_command(&graph, &input, &providers)?;

        // Shortest feasible path to the true target, for the efficiency
        // score. An unreachable target scores as zero-length.
        let true_pos = world
            .objects
            .get(&task.target)
            .expect("targets are validated at load")
            .record
            .centroid
            .xy();
        let shortest_m = match world.grid.nearest_free_cell(true_pos) {
            Some(goal) => match crate::geometry::plan_path(&world.grid, pose.position, goal)? {
                PlanOutcome::Path(path) => path.length(),
                PlanOutcome::Unreachable => 0.0,
            },
            None => 0.0,
        };

        let task_seed = seed ^ (idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let trace = run_episode(&world, &mut graph, &command, &ctx, pose, task_seed)?;
        let success = trace.found && trace.accepted.as_deref() == Some(task.target.as_str());
        tasks.push(TaskSummary {
            task_idx: idx,
            mode: mode.name().to_string(),
            seed,
            true_target: task.target.clone(),
            resolved_target: command.resolved_target_id.clone(),
            success,
            spl: metrics::spl(success, shortest_m, trace.total_path_m),
            actions: trace.actions_taken(),
            path_m: trace.total_path_m,
            shortest_m,
            found: trace.found,
            accepted: trace.accepted.clone(),
            graph_version: graph.version,
        });
        pose = trace.end_pose;
        traces.push(trace);
    }
    Ok(SequenceOutcome { seed, tasks, traces, graph })
}

/// A full run request: which scene, which starting graph, how to behave,
/// which seeds, where to write.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub scene: PathBuf,
    pub graph: Option<PathBuf>,
    pub mode: RunMode,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub parallel: usize,
}

/// Aggregates written to `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scene: String,
    pub mode: String,
    pub seeds: Vec<u64>,
    pub world_hash: String,
    pub episodes: usize,
    pub mean_success: f64,
    pub mean_spl: f64,
    /// Fraction of sequences with their first i tasks all successful.
    pub tasks_sr: Vec<f64>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub sequences: Vec<SequenceOutcome>,
}

/// Runs one or more seeded sequences, optionally in worker threads, and
/// writes traces, per-task metrics, final graphs, and the aggregate summary
/// under `out`. Sequence results are ordered by their position in `seeds`
/// regardless of scheduling.
pub fn cmd_run(req: &RunRequest) -> Result<RunOutput, CommandError> {
    let scene = load_scene(&req.scene)?;
    let initial = match &req.graph {
        Some(path) => {
            let graph = load_graph(path)?;
            if graph.embedder != embedder_info(&scene.provider) {
                return Err(CommandError::BadConfig(format!(
                    "graph at {} was embedded with dim {} seed {}, scene expects dim {} seed {}",
                    path.display(),
                    graph.embedder.dim,
                    graph.embedder.seed,
                    scene.provider.embed_dim,
                    scene.provider.embed_seed,
                )));
            }
            Some(graph)
        }
        None => None,
    };
    let seeds = if req.seeds.is_empty() { vec![scene.seed] } else { req.seeds.clone() };
    {
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != seeds.len() {
            return Err(CommandError::BadConfig("duplicate seeds in one run".into()));
        }
    }

    let workers = req.parallel.max(1).min(seeds.len().max(1));
    let mut indexed: Vec<(usize, Result<SequenceOutcome, CommandError>)> = Vec::new();
    if workers <= 1 {
        for (i, seed) in seeds.iter().enumerate() {
            indexed.push((i, run_sequence(&scene, initial.as_ref(), req.mode, *seed)));
        }
    } else {
        let next = AtomicUsize::new(0);
        let collected: Mutex<Vec<(usize, Result<SequenceOutcome, CommandError>)>> =
            Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= seeds.len() {
                        break;
                    }
                    let result = run_sequence(&scene, initial.as_ref(), req.mode, seeds[i]);
                    collected.lock().unwrap().push((i, result));
                });
            }
        });
        indexed = collected.into_inner().unwrap();
    }
    indexed.sort_by_key(|(i, _)| *i);
    let mut sequences = Vec::with_capacity(indexed.len());
    for (_, result) in indexed {
        sequences.push(result?);
    }

    let successes: Vec<Vec<bool>> =
        sequences.iter().map(|s| s.tasks.iter().map(|t| t.success).collect()).collect();
    let all_tasks: Vec<&TaskSummary> = sequences.iter().flat_map(|s| s.tasks.iter()).collect();
    let summary = RunSummary {
        scene: scene.name.clone(),
        mode: req.mode.name().to_string(),
        seeds: seeds.clone(),
        world_hash: scene.world.world_hash(),
        episodes: all_tasks.len(),
        mean_success: metrics::mean(
            &all_tasks.iter().map(|t| if t.success { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        ),
        mean_spl: metrics::mean(&all_tasks.iter().map(|t| t.spl).collect::<Vec<_>>()),
        tasks_sr: metrics::tasks_sr(&successes),
    };

    if let Some(out) = &req.out {
        std::fs::create_dir_all(out)?;
        for seq in &sequences {
            let dir = out.join(format!("seq-{}", seq.seed));
            std::fs::create_dir_all(&dir)?;
            for (trace, task) in seq.traces.iter().zip(&seq.tasks) {
                let mut buf = Vec::new();
                write_trace(&mut buf, trace, task)?;
                std::fs::write(dir.join(format!("task-{}.jsonl", task.task_idx)), buf)?;
            }
            save_graph(&seq.graph, &dir.join("graph_final.json"))?;
        }
        let rows: Vec<TaskSummary> =
            sequences.iter().flat_map(|s| s.tasks.iter().cloned()).collect();
        let mut csv = Vec::new();
        write_metrics_csv(&mut csv, &rows)?;
        std::fs::write(out.join("metrics.csv"), csv)?;
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        std::fs::write(out.join("run.json"), text)?;
    }

    Ok(RunOutput { summary, sequences })
}

/// Ranks recorded objects of a stored graph against a text query. The
/// embedding uses the identity stored in the graph, so scores match what the
/// graph was built with.
pub fn cmd_query(
    graph_path: &FsPath,
    text: &str,
    top_k: usize,
) -> Result<Vec<(ObjectId, f64)>, CommandError> {
    let graph = load_graph(graph_path)?;
    let config = ProviderConfig {
        embed_dim: graph.embedder.dim,
        embed_seed: graph.embedder.seed,
        ..ProviderConfig::default()
    };
    let providers = Providers::local(&config);
    Ok(graph_query(&graph, text, top_k, &providers)?)
}

/// Renders a scene's world with any number of trace files into an SVG.
pub fn cmd_render(
    scene_path: &FsPath,
    trace_paths: &[PathBuf],
    out: &FsPath,
) -> Result<PathBuf, CommandError> {
    let scene = load_scene(scene_path)?;
    let mut traces = Vec::with_capacity(trace_paths.len());
    for path in trace_paths {
        traces.push(read_trace(path)?);
    }
    let svg = render_svg(&scene.world, &traces);
    std::fs::write(out, svg)?;
    Ok(out.to_path_buf())
}
