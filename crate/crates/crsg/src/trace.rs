//! Episode trace files: one JSON line per executed action, then one summary
//! line with the task outcome. Lines are self-describing via a `kind` tag so
//! a file can be read back without outside context.

use std::io::{BufRead, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::adaptation::GraphDelta;
use crate::navigation::{Action, NavState, Verdict};
use crate::{ObjectId, Pose, Vec2};

/// One executed action: the state the decision was made in, the action, the
/// walked path, and everything observed, changed, and verified on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub state: NavState,
    pub action: Action,
    pub path_m: f64,
    #[serde(default)]
    pub waypoints: Vec<Vec2>,
    pub observations: Vec<ObjectId>,
    pub graph_delta: GraphDelta,
    pub verdicts: Vec<Verdict>,
}

/// A finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub found: bool,
    pub accepted: Option<ObjectId>,
    pub total_path_m: f64,
    pub start_pose: Pose,
    pub end_pose: Pose,
    pub initial_unexplored: usize,
}

impl EpisodeTrace {
    /// Executed non-stop actions.
    pub fn actions_taken(&self) -> usize {
        self.steps.iter().filter(|s| s.action != Action::Stop).count()
    }
}

/// Outcome line closing a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_idx: usize,
    pub mode: String,
    pub seed: u64,
    pub true_target: ObjectId,
    pub resolved_target: ObjectId,
    pub success: bool,
    pub spl: f64,
    pub actions: usize,
    pub path_m: f64,
    pub shortest_m: f64,
    pub found: bool,
    pub accepted: Option<ObjectId>,
    pub graph_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Step(TraceStep),
    Summary(TaskSummary),
}

/// Writes an episode as JSON lines: every step, then the summary.
pub fn write_trace(
    w: &mut impl Write,
    trace: &EpisodeTrace,
    summary: &TaskSummary,
) -> std::io::Result<()> {
    for step in &trace.steps {
        let line = serde_json::to_string(&TraceLine::Step(step.clone()))?;
        writeln!(w, "{line}")?;
    }
    let line = serde_json::to_string(&TraceLine::Summary(summary.clone()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

/// Reads a trace file back, line by line.
pub fn read_trace(path: &FsPath) -> std::io::Result<Vec<TraceLine>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes the task metrics table. One row per task in input order.
pub fn write_metrics_csv(w: &mut impl Write, rows: &[TaskSummary]) -> std::io::Result<()> {
    writeln!(w, "task_idx,success,spl,actions,path_m")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.task_idx, row.success, row.spl, row.actions, row.path_m
        )?;
    }
    Ok(())
}
