//! Target search over a carrier-relationship graph as a finite decision
//! process with a fixed policy.
//!
//! The state is (pose, unexplored carriers, target candidates, found). The
//! policy stops when the target is found or no carrier is left, goes to the
//! best-rated candidate when one exists, and otherwise explores the
//! commonsense-ranked best carrier. Every non-stop action consumes at least
//! one unexplored carrier, so an episode executes at most as many actions as
//! there are carriers at the start.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{
    carrier_subset_ahead, footprint_cells, match_carriers, update_carried, AdaptError, GraphDelta,
};
use crate::features::{
    cosine_similarity, histogram_similarity, rgb_histogram, FeatureError, Swatch,
};
use crate::geometry::{in_frustum, path_length, plan_path, GeometryError, PlanOutcome};
use crate::num::Real;
use crate::providers::{ProviderError, Providers};
use crate::scenegraph::{assign_room, rests_on, ConstructionParams, GraphError};
use crate::simworld::{ObservedObject, WorldModel};
use crate::trace::{EpisodeTrace, TraceStep};
use crate::{CarrierRelationshipSceneGraph, FeatureVector, ObjectId, Pose, RoomId, Vec2};

#[derive(Debug, Error)]
pub enum NavError {
    #[error("geometry failed: {0}")]
    Geometry(#[from] GeometryError),
    #[error("feature computation failed: {0}")]
    Feature(#[from] FeatureError),
    #[error("provider call failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("graph operation failed: {0}")]
    Graph(#[from] GraphError),
    #[error("graph update failed: {0}")]
    Adapt(#[from] AdaptError),
    #[error("cannot explore {0}: not an unexplored carrier")]
    UnknownExplore(ObjectId),
    #[error("cannot go to {0}: not a candidate")]
    UnknownGoto(ObjectId),
    #[error("graph record {0} is missing")]
    MissingRecord(ObjectId),
    #[error("random carrier policy needs a seeded generator")]
    MissingRng,
    #[error("unknown run mode {0:?}")]
    UnknownMode(String),
}

/// What the user hands the robot: free text, an image patch, or both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandInput {
    pub text: Option<String>,
    pub image: Option<Swatch>,
    pub image_hint: Option<String>,
}

/// A command resolved against the graph: the text actually used for
/// similarity (described from the image when no text was given), its
/// embedding, and the recorded object the search is aimed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavCommand {
    pub text: Option<String>,
    pub image: Option<Swatch>,
    pub image_hint: Option<String>,
    pub effective_text: String,
    pub target_embedding: FeatureVector,
    pub resolved_target_id: ObjectId,
    pub target_room_id: RoomId,
}

/// Weights of the candidate rating and the semantic gate for candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams<T> {
    /// Gain on semantic similarity in the rating numerator.
    pub w1: T,
    /// Gain on travel distance in the rating denominator.
    pub w2: T,
    /// Depth with the highest confidence; nearer falls off fast, farther slow.
    pub d_tilde_knee: T,
    /// Steep slope for depths below the knee.
    pub alpha: T,
    /// Gentle slope for depths above the knee.
    pub beta: T,
    /// Room factor when the candidate shares the target's room.
    pub w_room_same: T,
    /// Room factor otherwise.
    pub w_room_diff: T,
    /// Semantic similarity a detection needs to become a candidate.
    pub sigma1: T,
}

impl<T: Real> Default for PolicyParams<T> {
    fn default() -> Self {
        Self {
            w1: T::c(5.0),
            w2: T::c(1.0),
            d_tilde_knee: T::c(0.3),
            alpha: T::c(10.0),
            beta: T::c(0.1),
            w_room_same: T::c(1.0),
            w_room_diff: T::c(0.8),
            sigma1: T::c(0.6),
        }
    }
}

/// Confidence in a detection as a function of its mean depth: 1 at the knee,
/// a steep exponential falloff below it and a gentle one above it.
pub fn depth_confidence<T: Real>(d_tilde: T, params: &PolicyParams<T>) -> T {
    let off = d_tilde - params.d_tilde_knee;
    if d_tilde < params.d_tilde_knee {
        (params.alpha * off).exp()
    } else {
        (-params.beta * off).exp()
    }
}

/// Rating of a candidate: semantic similarity scaled by depth confidence,
/// discounted by travel distance and by being in another room.
pub fn priority_rating<T: Real>(
    ss: T,
    d: T,
    d_tilde: T,
    same_room: bool,
    params: &PolicyParams<T>,
) -> T {
    let room = if same_room { params.w_room_same } else { params.w_room_diff };
    room * (params.w1 * ss * depth_confidence(d_tilde, params)) / (T::one() + params.w2 * d)
}

/// Signal weights and thresholds for deciding whether a detection is the
/// target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyParams {
    /// Accept threshold when only text similarity is available.
    pub theta_text: f64,
    /// Accept threshold on the combined image score.
    pub theta_combo: f64,
    /// Combined acceptance is vetoed when the oracle score drops below this.
    pub gpt_veto: f64,
    pub w_text: f64,
    pub w_gpt: f64,
    pub w_rgb: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            theta_text: 0.75,
            theta_combo: 0.7,
            gpt_veto: 0.2,
            w_text: 0.4,
            w_gpt: 0.35,
            w_rgb: 0.25,
        }
    }
}

/// How a run deviates from the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Graph candidates, ranked exploration, live updates, all signals.
    Full,
    /// Ignore candidates; explore a uniformly random unexplored carrier.
    OnlyCarriersRandom,
    /// Ignore candidates; explore the top-ranked unexplored carrier.
    OnlyCarriersLlm,
    /// Full policy but the graph is never updated.
    NoUpdate,
    /// Verification runs without the image oracle signal.
    WithoutGpt,
    /// Verification runs without the text similarity signal.
    WithoutText,
    /// Verification runs without the color histogram signal.
    WithoutRgb,
}

/// Which action source the policy uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Full,
    RandomCarriers,
    RankedCarriers,
}

/// Which verification signals stay enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalMask {
    pub text: bool,
    pub gpt: bool,
    pub rgb: bool,
}

impl RunMode {
    pub fn policy(self) -> PolicyKind {
        match self {
            RunMode::OnlyCarriersRandom => PolicyKind::RandomCarriers,
            RunMode::OnlyCarriersLlm => PolicyKind::RankedCarriers,
            _ => PolicyKind::Full,
        }
    }

    pub fn updates_enabled(self) -> bool {
        self != RunMode::NoUpdate
    }

    pub fn signal_mask(self) -> SignalMask {
        SignalMask {
            text: self != RunMode::WithoutText,
            gpt: self != RunMode::WithoutGpt,
            rgb: self != RunMode::WithoutRgb,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Full => "full",
            RunMode::OnlyCarriersRandom => "only-carriers-random",
            RunMode::OnlyCarriersLlm => "only-carriers-llm",
            RunMode::NoUpdate => "no-update",
            RunMode::WithoutGpt => "w/o-gpt",
            RunMode::WithoutText => "w/o-text",
            RunMode::WithoutRgb => "w/o-rgb",
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "full" => Ok(RunMode::Full),
            "only-carriers-random" => Ok(RunMode::OnlyCarriersRandom),
            "only-carriers-llm" => Ok(RunMode::OnlyCarriersLlm),
            "no-update" => Ok(RunMode::NoUpdate),
            "w/o-gpt" | "wo-gpt" => Ok(RunMode::WithoutGpt),
            "w/o-text" | "wo-text" => Ok(RunMode::WithoutText),
            "w/o-rgb" | "wo-rgb" => Ok(RunMode::WithoutRgb),
            other => Err(NavError::UnknownMode(other.to_string())),
        }
    }
}

/// A possible target sighting tied to the unexplored carrier it rests on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub object_id: ObjectId,
    pub carrier_id: ObjectId,
    /// Semantic similarity to the command.
    pub ss: f64,
    /// Planned travel distance from the robot, meters.
    pub d: f64,
    /// Mean depth of the detection that produced the candidate.
    pub d_tilde: f64,
    pub room_id: RoomId,
    pub position: Vec2,
}

/// Search state: where the robot is, what is left to explore, which
/// sightings are worth walking to, and whether the target has been found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub pose: Pose,
    pub unexplored: BTreeSet<ObjectId>,
    pub candidates: Vec<CandidateInfo>,
    pub found: bool,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Stop,
    Explore { id: ObjectId },
    Goto { id: ObjectId },
}

/// Initial search state: every carrier is unexplored, and when the resolved
/// target is recorded on a carrier (or is one) it seeds the candidate set
/// with knee-depth confidence.
pub fn initial_state(
    graph: &CarrierRelationshipSceneGraph,
    command: &NavCommand,
    start: Pose,
    params: &PolicyParams<f64>,
) -> Result<NavState, NavError> {
    let mut candidates = Vec::new();
    if let Some(obj) = graph.objects.get(&command.resolved_target_id) {
        let carrier_id = if graph.carriers.contains(&obj.id) {
            Some(obj.id.clone())
        } else {
            graph.carrier_of(&obj.id).cloned()
        };
        if let Some(carrier_id) = carrier_id {
            candidates.push(CandidateInfo {
                object_id: obj.id.clone(),
                carrier_id,
                ss: cosine_similarity(&command.target_embedding, &obj.text_feature)?,
                d: start.position.distance(obj.centroid.xy()),
                d_tilde: params.d_tilde_knee,
                room_id: obj.room_id.clone(),
                position: obj.centroid.xy(),
            });
        }
    }
    Ok(NavState {
        pose: start,
        unexplored: graph.carriers.clone(),
        candidates,
        found: false,
        step: 0,
    })
}

/// Picks the next action. Stops when found or nothing is left; otherwise
/// walks to the best-rated candidate, falling back to exploring the
/// best-ranked carrier. Carrier-only policies never consult candidates.
/// Rating ties break toward the lowest candidate id.
pub fn choose_action(
    state: &NavState,
    graph: &CarrierRelationshipSceneGraph,
    command: &NavCommand,
    providers: &Providers,
    params: &PolicyParams<f64>,
    kind: PolicyKind,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Action, NavError> {
    if state.found || state.unexplored.is_empty() {
        return Ok(Action::Stop);
    }
    match kind {
        PolicyKind::RandomCarriers => {
            let rng = rng.as_deref_mut().ok_or(NavError::MissingRng)?;
            let pool: Vec<&ObjectId> = state.unexplored.iter().collect();
            let id = pool[rng.gen_range(0..pool.len())].clone();
            Ok(Action::Explore { id })
        }
        PolicyKind::RankedCarriers => explore_ranked(state, graph, command, providers),
        PolicyKind::Full => {
            if state.candidates.is_empty() {
                return explore_ranked(state, graph, command, providers);
            }
            let mut sorted: Vec<&CandidateInfo> = state.candidates.iter().collect();
            sorted.sort_by(|a, b| a.object_id.cmp(&b.object_id));
            let mut best: Option<(f64, &CandidateInfo)> = None;
            for c in sorted {
                let rating = priority_rating(
                    c.ss,
                    c.d,
                    c.d_tilde,
                    c.room_id == command.target_room_id,
                    params,
                );
                if best.map_or(true, |(br, _)| rating > br) {
                    best = Some((rating, c));
                }
            }
            let (_, c) = best.expect("nonempty candidate list");
            Ok(Action::Goto { id: c.object_id.clone() })
        }
    }
}

fn explore_ranked(
    state: &NavState,
    graph: &CarrierRelationshipSceneGraph,
    command: &NavCommand,
    providers: &Providers,
) -> Result<Action, NavError> {
    let summaries = graph.carrier_summaries(state.unexplored.iter());
    let ranking =
        providers
            .ranker
            .rank_carriers(&command.effective_text, &command.target_room_id, &summaries)?;
    let id = ranking.into_iter().next().expect("nonempty unexplored set yields a ranking");
    Ok(Action::Explore { id })
}

/// Everything the robot picked up while walking one action's path.
#[derive(Debug, Clone, Default)]
pub struct MovementLog {
    pub waypoints: Vec<Vec2>,
    /// Latest detection per source id.
    pub observed: BTreeMap<ObjectId, ObservedObject>,
    /// Carrier records seen in the frustum at least once.
    pub sensed_carriers: BTreeSet<ObjectId>,
}

/// State deltas one movement produces.
#[derive(Debug, Clone, Default)]
pub struct ObservationEffects {
    /// Unexplored carriers swept closely, seen, and holding no candidate.
    pub cr_observed: BTreeSet<ObjectId>,
    /// Fresh candidates from high-similarity detections on unexplored
    /// carriers.
    pub ct_new: Vec<CandidateInfo>,
    /// Prior candidates that survive (their carrier was not swept away).
    pub ct_star: Vec<CandidateInfo>,
}

/// Classifies this movement's detections against the unexplored carriers.
///
/// A detection becomes a candidate when it rests on an unexplored carrier
/// (nearest one on ties) and its similarity clears the gate. An unexplored
/// carrier counts as observed when it was seen, the walk came within the
/// close-observation radius of its centroid, and nothing on it cleared the
/// gate; observed carriers also sweep away prior candidates resting on them.
///
/// `dismissed` holds objects already ruled out by verification this episode.
/// They neither become candidates again nor keep their carrier unexplored;
/// without this a rejected lookalike would pin its carrier forever.
pub fn collect_observation_effects(
    state: &NavState,
    graph: &CarrierRelationshipSceneGraph,
    movement: &MovementLog,
    command: &NavCommand,
    params: &PolicyParams<f64>,
    construction: &ConstructionParams,
    observe_radius: f64,
    dismissed: &BTreeSet<ObjectId>,
) -> Result<ObservationEffects, NavError> {
    let mut assigned: Vec<(ObjectId, ObjectId, f64, &ObservedObject)> = Vec::new();
    for obs in movement.observed.values() {
        let mut best: Option<(f64, &ObjectId)> = None;
        for carrier_id in &state.unexplored {
            let carrier = graph
                .objects
                .get(carrier_id)
                .ok_or_else(|| NavError::MissingRecord(carrier_id.clone()))?;
            if obs.source_id == *carrier_id
                || !rests_on(&carrier.aabb, carrier.centroid, &obs.aabb, obs.centroid, construction)
            {
                continue;
            }
            let d = obs.centroid.xy().distance(carrier.centroid.xy());
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, carrier_id));
            }
        }
        if let Some((_, carrier_id)) = best {
            let ss = cosine_similarity(&command.target_embedding, &obs.text_feature)?;
            assigned.push((obs.source_id.clone(), carrier_id.clone(), ss, obs));
        }
    }

    let mut hot_carriers: BTreeSet<&ObjectId> = BTreeSet::new();
    for (object_id, carrier_id, ss, _) in &assigned {
        if *ss > params.sigma1 && !dismissed.contains(object_id) {
            hot_carriers.insert(carrier_id);
        }
    }

    let mut cr_observed = BTreeSet::new();
    for carrier_id in &state.unexplored {
        if !movement.sensed_carriers.contains(carrier_id) || hot_carriers.contains(carrier_id) {
            continue;
        }
        let carrier = graph
            .objects
            .get(carrier_id)
            .ok_or_else(|| NavError::MissingRecord(carrier_id.clone()))?;
        let center = carrier.centroid.xy();
        if movement.waypoints.iter().any(|wp| wp.distance(center) <= observe_radius) {
            cr_observed.insert(carrier_id.clone());
        }
    }

    let mut ct_new = Vec::new();
    for (object_id, carrier_id, ss, obs) in assigned {
        if ss <= params.sigma1 || dismissed.contains(&object_id) {
            continue;
        }
        let end = movement.waypoints.last().copied().unwrap_or(state.pose.position);
        ct_new.push(CandidateInfo {
            object_id,
            carrier_id,
            ss,
            d: end.distance(obs.centroid.xy()),
            d_tilde: obs.mean_depth,
            room_id: assign_room(&graph.rooms, obs.centroid.xy()),
            position: obs.centroid.xy(),
        });
    }
    ct_new.sort_by(|a, b| a.object_id.cmp(&b.object_id));

    let ct_star = state
        .candidates
        .iter()
        .filter(|c| !cr_observed.contains(&c.carrier_id) && !dismissed.contains(&c.object_id))
        .cloned()
        .collect();

    Ok(ObservationEffects { cr_observed, ct_new, ct_star })
}

/// Advances the state by one executed action. The acted carrier and every
/// observed carrier leave the unexplored set; fresh candidates replace stale
/// sightings of the same object; candidates whose carrier is no longer
/// unexplored drop out.
pub fn apply_transition(
    state: &NavState,
    action: &Action,
    effects: &ObservationEffects,
    end_pose: Pose,
    found: bool,
) -> Result<NavState, NavError> {
    let mut unexplored = state.unexplored.clone();
    let mut merged: BTreeMap<ObjectId, CandidateInfo> =
        effects.ct_star.iter().map(|c| (c.object_id.clone(), c.clone())).collect();
    for c in &effects.ct_new {
        merged.insert(c.object_id.clone(), c.clone());
    }
    match action {
        Action::Stop => {}
        Action::Explore { id } => {
            if !unexplored.remove(id) {
                return Err(NavError::UnknownExplore(id.clone()));
            }
        }
        Action::Goto { id } => {
            let c = state
                .candidates
                .iter()
                .find(|c| c.object_id == *id)
                .ok_or_else(|| NavError::UnknownGoto(id.clone()))?;
            unexplored.remove(&c.carrier_id);
            merged.remove(id);
        }
    }
    for id in &effects.cr_observed {
        unexplored.remove(id);
    }
    let candidates: Vec<CandidateInfo> =
        merged.into_values().filter(|c| unexplored.contains(&c.carrier_id)).collect();
    Ok(NavState {
        pose: end_pose,
        unexplored,
        candidates,
        found: state.found || found,
        step: state.step + 1,
    })
}

/// One verification outcome. Absent signals were masked out or failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub object: ObjectId,
    pub sim_text: Option<f64>,
    pub sim_gpt: Option<f64>,
    pub sim_rgb: Option<f64>,
    pub score: f64,
    pub accepted: bool,
}

/// Decides whether a close detection is the commanded target.
///
/// Text-only commands accept on text similarity alone. Commands with an
/// image combine text, oracle, and histogram similarities; weights of
/// missing signals are renormalized over the rest, and an available oracle
/// score below the veto threshold rejects regardless of the combination.
/// No surviving signal at all rejects.
pub fn verify_target(
    command: &NavCommand,
    obs: &ObservedObject,
    providers: &Providers,
    params: &VerifyParams,
    mask: SignalMask,
    histogram_bins: usize,
) -> Result<Verdict, NavError> {
    let sim_text = if mask.text {
        Some(cosine_similarity(&command.target_embedding, &obs.text_feature)?)
    } else {
        None
    };
    let mut sim_gpt = None;
    let mut sim_rgb = None;
    let (score, accepted) = match &command.image {
        None => {
            let score = sim_text.unwrap_or(0.0);
            (score, sim_text.map_or(false, |s| s >= params.theta_text))
        }
        Some(image) => {
            if mask.gpt {
                match providers.imager.compare(image, &obs.appearance) {
                    Ok(p) => sim_gpt = Some(p),
                    Err(err) => log::warn!("image oracle unavailable, dropping signal: {err}"),
                }
            }
            if mask.rgb {
                let a = rgb_histogram::<f64>(image, histogram_bins)?;
                let b = rgb_histogram::<f64>(&obs.appearance, histogram_bins)?;
                sim_rgb = Some(histogram_similarity(&a, &b)?);
            }
            let signals = [
                (params.w_text, sim_text),
                (params.w_gpt, sim_gpt),
                (params.w_rgb, sim_rgb),
            ];
            let total: f64 = signals.iter().filter(|(_, s)| s.is_some()).map(|(w, _)| w).sum();
            if total <= 0.0 {
                (0.0, false)
            } else {
                let score = signals
                    .iter()
                    .filter_map(|(w, s)| s.map(|v| w * v))
                    .sum::<f64>()
                    / total;
                let vetoed = sim_gpt.map_or(false, |g| g < params.gpt_veto);
                (score, score >= params.theta_combo && !vetoed)
            }
        }
    };
    Ok(Verdict { object: obs.source_id.clone(), sim_text, sim_gpt, sim_rgb, score, accepted })
}

/// Borrowed configuration an episode runs under.
pub struct EpisodeContext<'a> {
    pub providers: &'a Providers,
    pub policy: &'a PolicyParams<f64>,
    pub verify: &'a VerifyParams,
    pub construction: &'a ConstructionParams,
    pub matching: &'a crate::adaptation::MatchParams,
    pub mode: RunMode,
    pub histogram_bins: usize,
}

fn bearing(from: Vec2, to: Vec2) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

/// Drops candidates the planner cannot reach and refreshes the travel
/// distance of the rest from the current pose.
fn refresh_candidate_distances(state: &mut NavState, world: &WorldModel) -> Result<(), NavError> {
    let mut kept = Vec::with_capacity(state.candidates.len());
    for mut c in state.candidates.drain(..) {
        let goal = match world.grid.nearest_free_cell(c.position) {
            Some(g) => g,
            None => {
                log::warn!("candidate {} has no reachable surroundings, dropping", c.object_id);
                continue;
            }
        };
        match plan_path(&world.grid, state.pose.position, goal)? {
            PlanOutcome::Path(path) => {
                c.d = path.length();
                kept.push(c);
            }
            PlanOutcome::Unreachable => {
                log::warn!("candidate {} is unreachable, dropping", c.object_id);
            }
        }
    }
    state.candidates = kept;
    Ok(())
}

/// Runs one task to completion against the world.
///
/// Each loop turn picks an action, walks its planned path waypoint by
/// waypoint while sensing, updating the graph (unless disabled), and
/// verifying close high-similarity detections; acceptance truncates the walk.
/// Unreachable goals are skipped, logged, and consume their carrier or
/// candidate. The trace records one step per executed action plus the final
/// stop.
pub fn run_episode(
    world: &WorldModel,
    graph: &mut CarrierRelationshipSceneGraph,
    command: &NavCommand,
    ctx: &EpisodeContext<'_>,
    start: Pose,
    seed: u64,
) -> Result<EpisodeTrace, NavError> {
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut sense_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
    let mut state = initial_state(graph, command, start, ctx.policy)?;
    let initial_unexplored = state.unexplored.len();
    let mask = ctx.mode.signal_mask();
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut rejected: BTreeSet<ObjectId> = BTreeSet::new();
    let mut accepted: Option<ObjectId> = None;
    let mut total_path_m = 0.0;
    let cap = initial_unexplored * 2 + 4;

    loop {
        if steps.len() >= cap {
            log::warn!("action cap reached, forcing stop");
            break;
        }
        refresh_candidate_distances(&mut state, world)?;
        let summary = state.clone();
        let rng = match ctx.mode.policy() {
            PolicyKind::RandomCarriers => Some(&mut policy_rng),
            _ => None,
        };
        let action = choose_action(
            &state,
            graph,
            command,
            ctx.providers,
            ctx.policy,
            ctx.mode.policy(),
            rng,
        )?;
        if action == Action::Stop {
            steps.push(TraceStep {
                step: steps.len(),
                state: summary,
                action,
                path_m: 0.0,
                waypoints: Vec::new(),
                observations: Vec::new(),
                graph_delta: GraphDelta::default(),
                verdicts: Vec::new(),
            });
            break;
        }

        let goal_point = match &action {
            Action::Explore { id } => graph
                .objects
                .get(id)
                .ok_or_else(|| NavError::MissingRecord(id.clone()))?
                .centroid
                .xy(),
            Action::Goto { id } => {
                state
                    .candidates
                    .iter()
                    .find(|c| c.object_id == *id)
                    .expect("chosen candidate exists")
                    .position
            }
            Action::Stop => unreachable!(),
        };
        let reachable = world
            .grid
            .nearest_free_cell(goal_point)
            .map(|goal| plan_path(&world.grid, state.pose.position, goal))
            .transpose()?;
        let path = match reachable {
            Some(PlanOutcome::Path(path)) => path,
            _ => {
                log::warn!("goal for {action:?} is unreachable, skipping");
                match &action {
                    Action::Explore { id } => {
                        state.unexplored.remove(id);
                    }
                    Action::Goto { id } => {
                        state.candidates.retain(|c| c.object_id != *id);
                    }
                    Action::Stop => unreachable!(),
                }
                continue;
            }
        };

        let mut movement = MovementLog::default();
        let mut verdicts: Vec<Verdict> = Vec::new();
        let mut delta = GraphDelta::default();
        let mut found_now = false;
        let mut end_pose = state.pose;
        let n = path.waypoints.len();
        for (i, wp) in path.waypoints.iter().enumerate() {
            let yaw = if i + 1 < n {
                bearing(*wp, path.waypoints[i + 1])
            } else if i > 0 {
                bearing(path.waypoints[i - 1], *wp)
            } else {
                state.pose.yaw
            };
            let pose = Pose::new(*wp, yaw);
            movement.waypoints.push(*wp);
            end_pose = pose;

            let mut seen = world.sense(&pose);
            if world.detection_dropout > 0.0 {
                seen.retain(|_| sense_rng.gen::<f64>() >= world.detection_dropout);
            }
            for obs in &seen {
                if graph.carriers.contains(&obs.source_id) {
                    movement.sensed_carriers.insert(obs.source_id.clone());
                }
                movement.observed.insert(obs.source_id.clone(), obs.clone());
            }

            if ctx.mode.updates_enabled() {
                let ahead = carrier_subset_ahead(graph, &pose);
                let matched = match_carriers(&seen, &ahead, graph, ctx.matching)?;
                let mut by_carrier: Vec<&ObjectId> = matched.values().collect();
                by_carrier.sort();
                for carrier_id in by_carrier {
                    let record = graph
                        .objects
                        .get(carrier_id)
                        .ok_or_else(|| NavError::MissingRecord(carrier_id.clone()))?
                        .clone();
                    let on_it: Vec<ObservedObject> = seen
                        .iter()
                        .filter(|o| {
                            o.source_id != *carrier_id
                                && rests_on(
                                    &record.aabb,
                                    record.centroid,
                                    &o.aabb,
                                    o.centroid,
                                    ctx.construction,
                                )
                        })
                        .cloned()
                        .collect();
                    // Record removal reaches guard_dist from any observed
                    // cell, so a cell only counts as observed when its whole
                    // guard neighborhood was inspectable: otherwise a record
                    // out of range, or in a wall shadow just behind a visible
                    // patch, would be dropped without ever being checked.
                    let guard = ctx.matching.guard_dist;
                    let half_diag = world.grid.resolution * std::f64::consts::SQRT_2 * 0.5;
                    let diag = guard * std::f64::consts::SQRT_2 * 0.5;
                    let inspected = |p: Vec2| -> bool {
                        if world.grid.cell_of(p).is_none() {
                            return true; // off the map, nothing can rest there
                        }
                        pose.position.distance(p) + half_diag <= world.sensor.range
                            && in_frustum(&pose, &world.sensor, &world.grid, p)
                    };
                    let observed_cells: BTreeSet<(usize, usize)> =
                        footprint_cells(&world.grid, &record)
                            .into_iter()
                            .filter(|(cx, cy)| {
                                let c = world.grid.center_of(*cx, *cy);
                                inspected(c)
                                    && inspected(Vec2::new(c.x + guard, c.y))
                                    && inspected(Vec2::new(c.x - guard, c.y))
                                    && inspected(Vec2::new(c.x, c.y + guard))
                                    && inspected(Vec2::new(c.x, c.y - guard))
                                    && inspected(Vec2::new(c.x + diag, c.y + diag))
                                    && inspected(Vec2::new(c.x + diag, c.y - diag))
                                    && inspected(Vec2::new(c.x - diag, c.y + diag))
                                    && inspected(Vec2::new(c.x - diag, c.y - diag))
                            })
                            .collect();
                    let d = update_carried(
                        graph,
                        carrier_id,
                        &on_it,
                        &observed_cells,
                        &world.grid,
                        ctx.matching,
                    )?;
                    delta.absorb(d);
                }
            }

            if accepted.is_none() {
                for obs in &seen {
                    if rejected.contains(&obs.source_id) {
                        continue;
                    }
                    if obs.mean_depth > world.sensor.observe_radius {
                        continue;
                    }
                    let ss = cosine_similarity(&command.target_embedding, &obs.text_feature)?;
                    if ss <= ctx.policy.sigma1 {
                        continue;
                    }
                    let verdict = verify_target(
                        command,
                        obs,
                        ctx.providers,
                        ctx.verify,
                        mask,
                        ctx.histogram_bins,
                    )?;
                    let ok = verdict.accepted;
                    verdicts.push(verdict);
                    if ok {
                        accepted = Some(obs.source_id.clone());
                        found_now = true;
                        break;
                    }
                    rejected.insert(obs.source_id.clone());
                }
            }
            if found_now {
                break;
            }
        }

        let path_m = path_length(&movement.waypoints);
        total_path_m += path_m;
        let effects = collect_observation_effects(
            &state,
            graph,
            &movement,
            command,
            ctx.policy,
            ctx.construction,
            world.sensor.observe_radius,
            &rejected,
        )?;
        let observations: Vec<ObjectId> = movement.observed.keys().cloned().collect();
        state = apply_transition(&state, &action, &effects, end_pose, found_now)?;
        steps.push(TraceStep {
            step: steps.len(),
            state: summary,
            action,
            path_m,
            waypoints: movement.waypoints.clone(),
            observations,
            graph_delta: delta,
            verdicts,
        });
    }

    Ok(EpisodeTrace {
        steps,
        found: state.found,
        accepted,
        total_path_m,
        start_pose: start,
        end_pose: state.pose,
        initial_unexplored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> PolicyParams<f64> {
        PolicyParams::default()
    }

    #[test]
    fn depth_confidence_matches_hand_values() {
        let p = params();
        assert_relative_eq!(depth_confidence(0.3, &p), 1.0, max_relative = 1e-12);
        assert_relative_eq!(depth_confidence(0.2, &p), (-1.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(depth_confidence(1.3, &p), (-0.1f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn priority_rating_matches_hand_values() {
        let p = params();
        let same = priority_rating(0.8, 2.0, 0.5, true, &p);
        assert_relative_eq!(same, 1.3069315644090070, max_relative = 1e-12);
        let other = priority_rating(0.8, 2.0, 0.5, false, &p);
        assert_relative_eq!(other, 1.0455452515272056, max_relative = 1e-12);
        // Generic over the scalar: f32 agrees to its own precision.
        let p32 = PolicyParams::<f32>::default();
        let r32 = priority_rating(0.8f32, 2.0, 0.5, true, &p32);
        assert!((r32 - 1.306_931_5).abs() < 1e-5);
    }

    #[test]
    fn mode_strings_round_trip() {
        for (text, mode) in [
            ("full", RunMode::Full),
            ("only-carriers-random", RunMode::OnlyCarriersRandom),
            ("only-carriers-llm", RunMode::OnlyCarriersLlm),
            ("no-update", RunMode::NoUpdate),
            ("w/o-gpt", RunMode::WithoutGpt),
            ("wo-text", RunMode::WithoutText),
            ("w/o-rgb", RunMode::WithoutRgb),
        ] {
            assert_eq!(text.parse::<RunMode>().unwrap(), mode);
        }
        assert_eq!(RunMode::WithoutGpt.name(), "w/o-gpt");
        assert!("strolling".parse::<RunMode>().is_err());
        assert!(!RunMode::WithoutText.signal_mask().text);
        assert!(!RunMode::NoUpdate.updates_enabled());
        assert_eq!(RunMode::NoUpdate.policy(), PolicyKind::Full);
    }
}
