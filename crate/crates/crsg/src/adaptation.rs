//! Keeps a graph's carried sets current as the robot moves: carriers ahead
//! of the robot are matched against observations, and each matched carrier's
//! carried set is reconciled with what the sensor actually saw.
//!
//! Removals are guarded by the observed portion of the carrier surface, so a
//! recorded object on an unseen corner of a half-observed table is left
//! alone. A displaced object re-observed elsewhere is re-linked to its old
//! record (a move) instead of being minted as a new object.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine_similarity, histogram_similarity, rgb_histogram, FeatureError};
use crate::scenegraph::{assign_room, SceneObject};
use crate::simworld::ObservedObject;
use crate::{CarrierRelationshipSceneGraph, ObjectId, OccupancyGrid, Pose, Vec3};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("{0} is not a carrier in this graph")]
    UnknownCarrier(ObjectId),
    #[error("feature computation failed: {0}")]
    Feature(#[from] FeatureError),
}

/// Gates for matching observations against recorded objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Largest centroid distance an observation may sit from a record.
    pub max_centroid_dist: f64,
    /// Allowed observed/recorded box volume ratio.
    pub size_ratio_range: (f64, f64),
    /// Smallest text feature similarity for a match or re-link.
    pub min_text_sim: f64,
    /// A recorded-but-unseen object is removed only when its box lies within
    /// this distance of the observed portion of the carrier surface.
    pub guard_dist: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            max_centroid_dist: 0.5,
            size_ratio_range: (0.6, 1.67),
            min_text_sim: 0.8,
            guard_dist: 0.5,
        }
    }
}

/// Object added to a carrier's carried set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedEntry {
    pub carrier: ObjectId,
    pub object: SceneObject,
}

/// Object dropped from a carrier's carried set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedEntry {
    pub carrier: ObjectId,
    pub object: ObjectId,
    /// Where the record sat when it was dropped; kept for rendering.
    pub last_centroid: Vec3,
}

/// Object re-linked from one carrier to another, keeping its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovedEntry {
    pub from: ObjectId,
    pub to: ObjectId,
    pub object: ObjectId,
    pub from_centroid: Vec3,
    pub to_centroid: Vec3,
}

/// Net change one update applied to a graph. Added and removed never share
/// an object id; re-links are reported as moves instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub added: Vec<AddedEntry>,
    pub removed: Vec<RemovedEntry>,
    pub moved: Vec<MovedEntry>,
    pub unchanged_count: usize,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.moved.is_empty()
    }

    /// Folds another delta into this one.
    pub fn absorb(&mut self, other: GraphDelta) {
        self.added.extend(other.added);
        self.removed.extend(other.removed);
        self.moved.extend(other.moved);
        self.unchanged_count += other.unchanged_count;
    }
}

/// Carriers whose centroid lies in the half-plane ahead of the pose
/// (heading dot offset >= 0, boundary inclusive).
pub fn carrier_subset_ahead(
    graph: &CarrierRelationshipSceneGraph,
    pose: &Pose,
) -> BTreeSet<ObjectId> {
    let heading = pose.heading();
    graph
        .carriers
        .iter()
        .filter(|id| {
            graph
                .objects
                .get(*id)
                .map(|o| heading.dot(o.centroid.xy().sub(pose.position)) >= 0.0)
                .unwrap_or(false)
        })
        .cloned()
        .collect()
}

fn volume_ratio_ok(observed: &ObservedObject, record: &SceneObject, params: &MatchParams) -> bool {
    let ov = observed.aabb.volume();
    let rv = record.aabb.volume();
    if rv <= 0.0 {
        return ov <= 0.0;
    }
    let ratio = ov / rv;
    ratio >= params.size_ratio_range.0 && ratio <= params.size_ratio_range.1
}

fn text_sim(observed: &ObservedObject, record: &SceneObject) -> Result<f64, FeatureError> {
    cosine_similarity(&observed.text_feature, &record.text_feature)
}

/// Greedy one-to-one assignment of observations to recorded carriers in the
/// ahead subset, by ascending centroid distance under the match gates.
/// Returns observation index -> carrier id.
pub fn match_carriers(
    observations: &[ObservedObject],
    subset: &BTreeSet<ObjectId>,
    graph: &CarrierRelationshipSceneGraph,
    params: &MatchParams,
) -> Result<BTreeMap<usize, ObjectId>, AdaptError> {
    let mut pairs: Vec<(f64, usize, &ObjectId)> = Vec::new();
    for carrier_id in subset {
        let record = match graph.objects.get(carrier_id) {
            Some(r) => r,
            None => continue,
        };
        for (idx, obs) in observations.iter().enumerate() {
            let dist = obs.centroid.xy().distance(record.centroid.xy());
            if dist > params.max_centroid_dist
                || !volume_ratio_ok(obs, record, params)
                || text_sim(obs, record)? < params.min_text_sim
            {
                continue;
            }
            pairs.push((dist, idx, carrier_id));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(b.2))
    });
    let mut taken_obs = BTreeSet::new();
    let mut taken_carriers = BTreeSet::new();
    let mut out = BTreeMap::new();
    for (_, idx, carrier_id) in pairs {
        if taken_obs.contains(&idx) || taken_carriers.contains(carrier_id) {
            continue;
        }
        taken_obs.insert(idx);
        taken_carriers.insert(carrier_id.clone());
        out.insert(idx, carrier_id.clone());
    }
    Ok(out)
}

/// Cells of `grid` whose square intersects the record's ground footprint.
pub fn footprint_cells(grid: &OccupancyGrid, record: &SceneObject) -> Vec<(usize, usize)> {
    let res = grid.resolution;
    let x0 = ((record.aabb.min.x - grid.origin.x) / res).floor() as isize;
    let y0 = ((record.aabb.min.y - grid.origin.y) / res).floor() as isize;
    // Strict intersection: a box ending exactly on a cell edge excludes that
    // cell, matching how footprints block the grid.
    let x1 = ((record.aabb.max.x - grid.origin.x) / res).ceil() as isize - 1;
    let y1 = ((record.aabb.max.y - grid.origin.y) / res).ceil() as isize - 1;
    let mut out = Vec::new();
    for cy in y0.max(0)..=y1.min(grid.height as isize - 1) {
        for cx in x0.max(0)..=x1.min(grid.width as isize - 1) {
            out.push((cx as usize, cy as usize));
        }
    }
    out
}

fn record_from_observation(id: ObjectId, obs: &ObservedObject, rooms: &[crate::RoomPolygon]) -> SceneObject {
    SceneObject {
        id,
        aabb: obs.aabb,
        centroid: obs.centroid,
        captions: obs.captions.clone(),
        text_feature: obs.text_feature.clone(),
        visual_feature: obs.text_feature.clone(),
        appearance: obs.appearance.clone(),
        room_id: assign_room(rooms, obs.centroid.xy()),
    }
}

/// Reconciles one carrier's carried set with the objects observed on it.
///
/// `observations` are the objects classified onto this carrier this cycle;
/// `observed_cells` are the grid cells the sensor covered while collecting
/// them. Matched records are refreshed in place. Unmatched observations
/// re-link a displaced record when one matches by text and size (preferring
/// the closest appearance), otherwise they are added under a fresh
/// `observed-` id. Unmatched records are removed only when their box lies
/// within `guard_dist` of the observed portion of the carrier footprint.
/// The graph version increments once when the resulting delta is nonempty.
pub fn update_carried(
    graph: &mut CarrierRelationshipSceneGraph,
    carrier_id: &ObjectId,
    observations: &[ObservedObject],
    observed_cells: &BTreeSet<(usize, usize)>,
    grid: &OccupancyGrid,
    params: &MatchParams,
) -> Result<GraphDelta, AdaptError> {
    if !graph.carriers.contains(carrier_id) {
        return Err(AdaptError::UnknownCarrier(carrier_id.clone()));
    }
    let recorded: Vec<ObjectId> = graph.carried[carrier_id].iter().cloned().collect();

    // Pair observations with this carrier's records, nearest first.
    let mut pairs: Vec<(f64, usize, ObjectId)> = Vec::new();
    for (idx, obs) in observations.iter().enumerate() {
        for rec_id in &recorded {
            let record = &graph.objects[rec_id];
            let dist = obs.centroid.xy().distance(record.centroid.xy());
            if dist > params.max_centroid_dist
                || !volume_ratio_ok(obs, record, params)
                || text_sim(obs, record)? < params.min_text_sim
            {
                continue;
            }
            pairs.push((dist, idx, rec_id.clone()));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    let mut matched_obs: BTreeSet<usize> = BTreeSet::new();
    let mut matched_recs: BTreeSet<ObjectId> = BTreeSet::new();
    let mut assignments: Vec<(usize, ObjectId)> = Vec::new();
    for (_, idx, rec_id) in pairs {
        if matched_obs.contains(&idx) || matched_recs.contains(&rec_id) {
            continue;
        }
        matched_obs.insert(idx);
        matched_recs.insert(rec_id.clone());
        assignments.push((idx, rec_id));
    }

    let mut delta = GraphDelta { unchanged_count: assignments.len(), ..GraphDelta::default() };

    // Refresh matched records with the observed geometry.
    for (idx, rec_id) in &assignments {
        let obs = &observations[*idx];
        let room = assign_room(&graph.rooms, obs.centroid.xy());
        let record = graph.objects.get_mut(rec_id).unwrap();
        record.aabb = obs.aabb;
        record.centroid = obs.centroid;
        record.room_id = room;
    }

    // Unmatched observations: re-link a displaced record or add a new one.
    for (idx, obs) in observations.iter().enumerate() {
        if matched_obs.contains(&idx) {
            continue;
        }
        let mut relink: Option<(f64, ObjectId, ObjectId)> = None; // (appearance sim, old carrier, object)
        let obs_hist = rgb_histogram::<f64>(&obs.appearance, crate::features::DEFAULT_HISTOGRAM_BINS)?;
        for (other_carrier, set) in &graph.carried {
            if other_carrier == carrier_id {
                continue;
            }
            for rec_id in set {
                let record = &graph.objects[rec_id];
                if !volume_ratio_ok(obs, record, params)
                    || text_sim(obs, record)? < params.min_text_sim
                {
                    continue;
                }
                let rec_hist =
                    rgb_histogram::<f64>(&record.appearance, crate::features::DEFAULT_HISTOGRAM_BINS)?;
                let sim = histogram_similarity(&obs_hist, &rec_hist)?;
                let better = match &relink {
                    None => true,
                    Some((best, _, best_id)) => {
                        sim > *best || (sim == *best && rec_id < best_id)
                    }
                };
                if better {
                    relink = Some((sim, other_carrier.clone(), rec_id.clone()));
                }
            }
        }
        match relink {
            Some((_, old_carrier, object_id)) => {
                let from_centroid = graph.objects[&object_id].centroid;
                graph.carried.get_mut(&old_carrier).unwrap().remove(&object_id);
                graph.carried.get_mut(carrier_id).unwrap().insert(object_id.clone());
                let room = assign_room(&graph.rooms, obs.centroid.xy());
                let record = graph.objects.get_mut(&object_id).unwrap();
                record.aabb = obs.aabb;
                record.centroid = obs.centroid;
                record.room_id = room;
                delta.moved.push(MovedEntry {
                    from: old_carrier,
                    to: carrier_id.clone(),
                    object: object_id,
                    from_centroid,
                    to_centroid: obs.centroid,
                });
            }
            None => {
                let id = graph.mint_observed_id();
                let record = record_from_observation(id.clone(), obs, &graph.rooms);
                graph.objects.insert(id.clone(), record.clone());
                graph.carried.get_mut(carrier_id).unwrap().insert(id.clone());
                delta.added.push(AddedEntry { carrier: carrier_id.clone(), object: record });
            }
        }
    }

    // Unmatched records: drop only those the sensor should have seen.
    let carrier_record = graph.objects[carrier_id].clone();
    let surface: Vec<(usize, usize)> = footprint_cells(grid, &carrier_record)
        .into_iter()
        .filter(|c| observed_cells.contains(c))
        .collect();
    for rec_id in &recorded {
        if matched_recs.contains(rec_id) {
            continue;
        }
        let record = &graph.objects[rec_id];
        let visible = surface.iter().any(|(cx, cy)| {
            record.aabb.distance_xy_to_point(grid.center_of(*cx, *cy)) <= params.guard_dist
        });
        if !visible {
            continue;
        }
        let last_centroid = record.centroid;
        graph.carried.get_mut(carrier_id).unwrap().remove(rec_id);
        graph.objects.remove(rec_id);
        delta.removed.push(RemovedEntry {
            carrier: carrier_id.clone(),
            object: rec_id.clone(),
            last_centroid,
        });
    }

    if !delta.is_empty() {
        graph.version += 1;
    }
    Ok(delta)
}
