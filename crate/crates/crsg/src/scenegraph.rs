//! The carrier-relationship scene graph: rooms at the top, furniture able to
//! hold objects (carriers) below them, the objects resting on each carrier
//! under that, and everything else in a flat remainder layer.
//!
//! Construction runs three gates over every object: text similarity to a
//! carrier query, a caption filter served by the ranking provider, and a
//! geometric gate on footprint size and base height. Carried objects are
//! then attached to the nearest carrier whose surface they rest on.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine_similarity, tokenize, FeatureError, Swatch};
use crate::geometry::aabb_overlap_ratio_xy;
use crate::navigation::{CommandInput, NavCommand};
use crate::providers::{CarrierCandidateSummary, ProviderError, Providers};
use crate::{Aabb, FeatureVector, ObjectId, RoomId, RoomPolygon, Vec3};

/// Room id given to objects outside every room polygon.
pub const FALLBACK_ROOM_ID: &str = "hallway";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("scene has no rooms")]
    NoRooms,
    #[error("graph has no objects")]
    EmptyGraph,
    #[error("unknown object id {0}")]
    UnknownObject(ObjectId),
    #[error("command carries neither text nor image")]
    EmptyCommand,
    #[error("carrier selection failed at stage {stage}: {source}")]
    Construction {
        stage: &'static str,
        source: ProviderError,
    },
    #[error("feature computation failed: {0}")]
    Feature(#[from] FeatureError),
    #[error("provider call failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("graph file io failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file malformed: {0}")]
    Format(#[from] serde_json::Error),
    #[error("graph layers do not partition the objects: {0}")]
    BrokenPartition(String),
}

/// One caption with the number of views that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub count: u32,
}

/// Up to three most frequent captions, ties broken lexicographically.
pub fn top_captions(captions: &[Caption]) -> Vec<String> {
    let mut sorted: Vec<&Caption> = captions.iter().collect();
    sorted.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
    sorted.into_iter().take(3).map(|c| c.text.clone()).collect()
}

/// Sorted deduplicated token set over all caption texts.
pub fn caption_vocabulary(captions: &[Caption]) -> Vec<String> {
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for c in captions {
        vocab.extend(tokenize(&c.text));
    }
    vocab.into_iter().collect()
}

/// One recorded object: geometry, captions, features and appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub aabb: Aabb,
    pub centroid: Vec3,
    pub captions: Vec<Caption>,
    pub text_feature: FeatureVector,
    pub visual_feature: FeatureVector,
    pub appearance: Swatch,
    pub room_id: RoomId,
}

impl SceneObject {
    pub fn top_captions(&self) -> Vec<String> {
        top_captions(&self.captions)
    }

    pub fn caption_vocabulary(&self) -> Vec<String> {
        caption_vocabulary(&self.captions)
    }
}

/// Gates of graph construction. Thresholds compare as documented on
/// [`select_carrier_layer`] and [`is_carried_by`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructionParams {
    /// Query text whose embedding screens for carrier-like objects.
    pub carrier_query_text: String,
    /// Stage-one similarity threshold (strictly greater passes).
    pub carrier_similarity_threshold: f64,
    /// Smallest ground-plane footprint a carrier may have, square meters.
    pub min_footprint_area: f64,
    /// Highest base a carrier may have above the floor, meters.
    pub max_base_height: f64,
    /// Smallest fraction of an object footprint the carrier must cover.
    pub xy_overlap_min: f64,
    /// Vertical gap between object bottom and carrier top, meters.
    pub vertical_gap_range: (f64, f64),
    /// Centroid distance cap as a multiple of the carrier half-diagonal.
    pub max_center_distance_factor: f64,
}

impl Default for ConstructionParams {
    fn default() -> Self {
        Self {
            carrier_query_text: "furniture for holding objects".to_string(),
            carrier_similarity_threshold: 0.50,
            min_footprint_area: 0.15,
            max_base_height: 0.10,
            xy_overlap_min: 0.5,
            vertical_gap_range: (-0.05, 0.15),
            max_center_distance_factor: 1.0,
        }
    }
}

/// Embedder settings stored with a graph so later queries embed text the
/// same way the recorded features were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderInfo {
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbedderInfo {
    fn default() -> Self {
        Self {
            dim: crate::features::DEFAULT_EMBED_DIM,
            seed: crate::features::DEFAULT_EMBED_SEED,
        }
    }
}

/// Scene graph of one building.
///
/// The carrier, carried and other layers partition the object ids: every
/// object is a carrier, carried by exactly one carrier, or in `others`.
/// `version` counts applied updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierRelationshipSceneGraph {
    pub version: u64,
    pub building: String,
    pub rooms: Vec<RoomPolygon>,
    pub objects: BTreeMap<ObjectId, SceneObject>,
    pub carriers: BTreeSet<ObjectId>,
    pub carried: BTreeMap<ObjectId, BTreeSet<ObjectId>>,
    pub others: BTreeSet<ObjectId>,
    #[serde(default)]
    pub next_observed_id: u64,
    #[serde(default)]
    pub embedder: EmbedderInfo,
}

impl CarrierRelationshipSceneGraph {
    /// Carrier currently holding `object_id`, if any.
    pub fn carrier_of(&self, object_id: &ObjectId) -> Option<&ObjectId> {
        self.carried
            .iter()
            .find(|(_, set)| set.contains(object_id))
            .map(|(carrier, _)| carrier)
    }

    /// Ranking summaries for the given carriers, in id order.
    pub fn carrier_summaries<'a, I>(&self, ids: I) -> Vec<CarrierCandidateSummary>
    where
        I: IntoIterator<Item = &'a ObjectId>,
    {
        let mut ids: Vec<&ObjectId> = ids.into_iter().collect();
        ids.sort();
        ids.into_iter()
            .filter_map(|id| self.objects.get(id))
            .map(|o| CarrierCandidateSummary {
                id: o.id.clone(),
                top_captions: o.top_captions(),
                room_id: o.room_id.clone(),
            })
            .collect()
    }

    /// Mints the next `observed-` id.
    pub fn mint_observed_id(&mut self) -> ObjectId {
        let id = format!("observed-{}", self.next_observed_id);
        self.next_observed_id += 1;
        id
    }

    /// Verifies that carriers, carried sets and others partition the ids.
    pub fn check_partition(&self) -> Result<(), GraphError> {
        let mut seen: BTreeSet<&ObjectId> = BTreeSet::new();
        for id in &self.carriers {
            if !seen.insert(id) {
                return Err(GraphError::BrokenPartition(format!("{id} listed twice")));
            }
        }
        for (carrier, set) in &self.carried {
            if !self.carriers.contains(carrier) {
                return Err(GraphError::BrokenPartition(format!(
                    "carried set under non-carrier {carrier}"
                )));
            }
            for id in set {
                if !seen.insert(id) {
                    return Err(GraphError::BrokenPartition(format!("{id} listed twice")));
                }
            }
        }
        for id in &self.others {
            if !seen.insert(id) {
                return Err(GraphError::BrokenPartition(format!("{id} listed twice")));
            }
        }
        for id in self.objects.keys() {
            if !seen.contains(id) {
                return Err(GraphError::BrokenPartition(format!("{id} in no layer")));
            }
        }
        if seen.len() != self.objects.len() {
            return Err(GraphError::BrokenPartition(
                "layer entry without object record".to_string(),
            ));
        }
        Ok(())
    }
}

/// Room containing a ground-plane point. Rooms are tried in id order, so a
/// point on a shared wall goes to the lowest room id; points in no room get
/// the fallback room.
pub fn assign_room(rooms: &[RoomPolygon], point: crate::Vec2) -> RoomId {
    let mut sorted: Vec<&RoomPolygon> = rooms.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for room in sorted {
        if crate::geometry::point_in_polygon(point, room) {
            return room.id.clone();
        }
    }
    FALLBACK_ROOM_ID.to_string()
}

/// Writes each object's room id from its centroid. Errors when no rooms are
/// defined at all.
pub fn assign_rooms(
    objects: &mut BTreeMap<ObjectId, SceneObject>,
    rooms: &[RoomPolygon],
) -> Result<(), GraphError> {
    if rooms.is_empty() {
        return Err(GraphError::NoRooms);
    }
    for obj in objects.values_mut() {
        obj.room_id = assign_room(rooms, obj.centroid.xy());
    }
    Ok(())
}

/// Three-stage carrier selection: embedding similarity to the carrier query
/// strictly above the threshold, then the provider-side caption filter, then
/// the geometric gate (footprint at least `min_footprint_area` and base at
/// most `max_base_height`). An empty result is valid.
pub fn select_carrier_layer(
    objects: &BTreeMap<ObjectId, SceneObject>,
    params: &ConstructionParams,
    providers: &Providers,
) -> Result<BTreeSet<ObjectId>, GraphError> {
    let query = providers
        .embedder
        .embed_text(&params.carrier_query_text)
        .map_err(|source| GraphError::Construction { stage: "carrier query embedding", source })?;

    let mut stage1: Vec<&SceneObject> = Vec::new();
    for obj in objects.values() {
        let sim = cosine_similarity(&obj.text_feature, &query)?;
        if sim > params.carrier_similarity_threshold {
            stage1.push(obj);
        }
    }

    let summaries: Vec<CarrierCandidateSummary> = stage1
        .iter()
        .map(|o| CarrierCandidateSummary {
            id: o.id.clone(),
            top_captions: o.top_captions(),
            room_id: o.room_id.clone(),
        })
        .collect();
    let kept: BTreeSet<ObjectId> = providers
        .ranker
        .filter_carrier_captions(&summaries)
        .map_err(|source| GraphError::Construction { stage: "caption filter", source })?
        .into_iter()
        .collect();

    Ok(stage1
        .into_iter()
        .filter(|o| kept.contains(&o.id))
        .filter(|o| {
            o.aabb.footprint_area() >= params.min_footprint_area
                && o.aabb.min.z <= params.max_base_height
        })
        .map(|o| o.id.clone())
        .collect())
}

/// Whether `obj` rests on `carrier`: a strictly smaller footprint, enough
/// ground-plane overlap, a vertical gap inside the configured band, and a
/// centroid within the scaled carrier half-diagonal.
pub fn is_carried_by(carrier: &SceneObject, obj: &SceneObject, params: &ConstructionParams) -> bool {
    rests_on(&carrier.aabb, carrier.centroid, &obj.aabb, obj.centroid, params)
}

/// Geometry-only form of [`is_carried_by`] for things that are not graph
/// records yet, like fresh observations.
pub fn rests_on(
    carrier_aabb: &Aabb,
    carrier_centroid: Vec3,
    obj_aabb: &Aabb,
    obj_centroid: Vec3,
    params: &ConstructionParams,
) -> bool {
    if obj_aabb.footprint_area() >= carrier_aabb.footprint_area() {
        return false;
    }
    match aabb_overlap_ratio_xy(carrier_aabb, obj_aabb) {
        Ok(ratio) if ratio >= params.xy_overlap_min => {}
        _ => return false,
    }
    let gap = obj_aabb.min.z - carrier_aabb.max.z;
    if gap < params.vertical_gap_range.0 || gap > params.vertical_gap_range.1 {
        return false;
    }
    let dist = obj_centroid.xy().distance(carrier_centroid.xy());
    dist <= params.max_center_distance_factor * carrier_aabb.half_diagonal_xy()
}

/// Attaches every non-carrier object to the nearest carrier it rests on;
/// objects resting on none land in the remainder layer.
pub fn assign_carried(
    objects: &BTreeMap<ObjectId, SceneObject>,
    carriers: &BTreeSet<ObjectId>,
    params: &ConstructionParams,
) -> (BTreeMap<ObjectId, BTreeSet<ObjectId>>, BTreeSet<ObjectId>) {
    let mut carried: BTreeMap<ObjectId, BTreeSet<ObjectId>> =
        carriers.iter().map(|id| (id.clone(), BTreeSet::new())).collect();
    let mut others = BTreeSet::new();
    for obj in objects.values() {
        if carriers.contains(&obj.id) {
            continue;
        }
        let mut best: Option<(f64, &ObjectId)> = None;
        for carrier_id in carriers {
            let carrier = &objects[carrier_id];
            if !is_carried_by(carrier, obj, params) {
                continue;
            }
            let d = obj.centroid.xy().distance(carrier.centroid.xy());
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, carrier_id));
            }
        }
        match best {
            Some((_, carrier_id)) => {
                carried.get_mut(carrier_id).unwrap().insert(obj.id.clone());
            }
            None => {
                others.insert(obj.id.clone());
            }
        }
    }
    (carried, others)
}

/// Builds a graph from recorded objects: room assignment, carrier selection,
/// carried attachment. The result starts at version zero and satisfies the
/// layer partition invariant.
pub fn build_graph(
    building: String,
    mut objects: BTreeMap<ObjectId, SceneObject>,
    rooms: Vec<RoomPolygon>,
    params: &ConstructionParams,
    providers: &Providers,
    embedder: EmbedderInfo,
) -> Result<CarrierRelationshipSceneGraph, GraphError> {
    assign_rooms(&mut objects, &rooms)?;
    let carriers = select_carrier_layer(&objects, params, providers)?;
    let (carried, others) = assign_carried(&objects, &carriers, params);
    let graph = CarrierRelationshipSceneGraph {
        version: 0,
        building,
        rooms,
        objects,
        carriers,
        carried,
        others,
        next_observed_id: 0,
        embedder,
    };
    graph.check_partition()?;
    Ok(graph)
}

/// Resolves a command to the recorded object most similar to its text (or to
/// the image description when no text is given), ties toward the lowest id.
pub fn resolve_command(
    graph: &CarrierRelationshipSceneGraph,
    input: &CommandInput,
    providers: &Providers,
) -> Result<NavCommand, GraphError> {
    if graph.objects.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let effective_text = match (&input.text, &input.image) {
        (Some(text), _) => text.clone(),
        (None, Some(image)) => providers.imager.describe(image, input.image_hint.as_deref())?,
        (None, None) => return Err(GraphError::EmptyCommand),
    };
    let target_embedding = providers.embedder.embed_text(&effective_text)?;
    let mut best: Option<(f64, &SceneObject)> = None;
    for obj in graph.objects.values() {
        let sim = cosine_similarity(&target_embedding, &obj.text_feature)?;
        if best.map_or(true, |(bs, _)| sim > bs) {
            best = Some((sim, obj));
        }
    }
    let (_, target) = best.expect("nonempty graph has a best match");
    Ok(NavCommand {
        text: input.text.clone(),
        image: input.image.clone(),
        image_hint: input.image_hint.clone(),
        effective_text,
        target_embedding,
        resolved_target_id: target.id.clone(),
        target_room_id: target.room_id.clone(),
    })
}

/// Ranks recorded objects against a free-text query, most similar first.
///
/// A query of the shape `<X> on the <Y>` restricts the ranking to objects
/// carried by a carrier whose captions mention a token of `Y`, ranked by
/// similarity to `X`; when nothing matches `Y` the full ranking applies.
pub fn query(
    graph: &CarrierRelationshipSceneGraph,
    text: &str,
    top_k: usize,
    providers: &Providers,
) -> Result<Vec<(ObjectId, f64)>, GraphError> {
    let lowered = text.to_lowercase();
    if let Some(split_at) = lowered.find(" on the ") {
        let x = &text[..split_at];
        let y = &text[split_at + " on the ".len()..];
        let y_tokens = tokenize(y);
        if !x.trim().is_empty() && !y_tokens.is_empty() {
            let mut restricted: Vec<&ObjectId> = Vec::new();
            for (carrier_id, set) in &graph.carried {
                let carrier = match graph.objects.get(carrier_id) {
                    Some(c) => c,
                    None => continue,
                };
                let vocab = carrier.caption_vocabulary();
                if y_tokens.iter().any(|t| vocab.contains(t)) {
                    restricted.extend(set.iter());
                }
            }
            if !restricted.is_empty() {
                return rank_objects(graph, x, top_k, providers, Some(&restricted));
            }
        }
    }
    rank_objects(graph, text, top_k, providers, None)
}

fn rank_objects(
    graph: &CarrierRelationshipSceneGraph,
    text: &str,
    top_k: usize,
    providers: &Providers,
    restrict_to: Option<&[&ObjectId]>,
) -> Result<Vec<(ObjectId, f64)>, GraphError> {
    let target = providers.embedder.embed_text(text)?;
    let mut scored: Vec<(ObjectId, f64)> = Vec::new();
    match restrict_to {
        Some(ids) => {
            for id in ids {
                if let Some(obj) = graph.objects.get(*id) {
                    scored.push((obj.id.clone(), cosine_similarity(&target, &obj.text_feature)?));
                }
            }
        }
        None => {
            for obj in graph.objects.values() {
                scored.push((obj.id.clone(), cosine_similarity(&target, &obj.text_feature)?));
            }
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(top_k);
    Ok(scored)
}

/// Writes a graph as pretty-printed JSON.
pub fn save_graph(
    graph: &CarrierRelationshipSceneGraph,
    path: &FsPath,
) -> Result<(), GraphError> {
    let mut text = serde_json::to_string_pretty(graph)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a graph back and re-checks the layer partition.
pub fn load_graph(path: &FsPath) -> Result<CarrierRelationshipSceneGraph, GraphError> {
    let text = std::fs::read_to_string(path)?;
    let graph: CarrierRelationshipSceneGraph = serde_json::from_str(&text)?;
    graph.check_partition()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{HashEmbedder, ProviderConfig, TextEmbedder};
    use crate::Vec2;

    fn embedder() -> HashEmbedder {
        HashEmbedder { dim: 64, seed: 42 }
    }

    pub(crate) fn object(id: &str, captions: &[(&str, u32)], min: [f64; 3], max: [f64; 3]) -> SceneObject {
        let captions: Vec<Caption> = captions
            .iter()
            .map(|(t, c)| Caption { text: t.to_string(), count: *c })
            .collect();
        let vocab = caption_vocabulary(&captions);
        let text_feature = embedder().embed_tokens(&vocab).unwrap();
        let aabb = Aabb::new(
            Vec3::new(min[0], min[1], min[2]),
            Vec3::new(max[0], max[1], max[2]),
        )
        .unwrap();
        SceneObject {
            id: id.to_string(),
            centroid: aabb.center(),
            aabb,
            captions,
            visual_feature: text_feature.clone(),
            text_feature,
            appearance: Swatch::solid(2, 2, [120, 120, 120]),
            room_id: String::new(),
        }
    }

    fn rooms() -> Vec<RoomPolygon> {
        vec![
            RoomPolygon::new(
                "living".into(),
                "living room".into(),
                vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(6.0, 0.0),
                    Vec2::new(6.0, 6.0),
                    Vec2::new(0.0, 6.0),
                ],
            )
            .unwrap(),
        ]
    }

    fn carrier_params() -> ConstructionParams {
        ConstructionParams {
            carrier_query_text: "furniture".to_string(),
            ..ConstructionParams::default()
        }
    }

    #[test]
    fn carrier_selection_applies_all_three_gates() {
        let mut objects = BTreeMap::new();
        for obj in [
            object("table_1", &[("wooden table", 5), ("furniture", 2)], [1.0, 1.0, 0.02], [2.0, 1.8, 0.75]),
            object("cup_1", &[("black cup", 4)], [1.4, 1.3, 0.75], [1.5, 1.4, 0.85]),
            object("shelf_wall", &[("wall shelf", 3), ("furniture", 1)], [3.0, 0.1, 1.2], [3.8, 0.4, 1.45]),
            object("plant_1", &[("potted plant", 3), ("furniture", 1)], [5.0, 5.0, 0.0], [5.5, 5.5, 0.9]),
        ] {
            objects.insert(obj.id.clone(), obj);
        }
        let providers = Providers::local(&ProviderConfig::default());
        let params = carrier_params();
        assign_rooms(&mut objects, &rooms()).unwrap();
        let carriers = select_carrier_layer(&objects, &params, &providers).unwrap();
        // cup: below the similarity threshold; wall shelf: base too high;
        // plant: caption filter rejects it.
        assert_eq!(carriers, BTreeSet::from(["table_1".to_string()]));
    }

    #[test]
    fn carried_gate_examples() {
        let params = ConstructionParams::default();
        let table = object("table", &[("table", 1)], [0.0, 0.0, 0.0], [1.0, 1.0, 0.7]);
        let cup = object("cup", &[("cup", 1)], [0.4, 0.4, 0.72], [0.5, 0.5, 0.8]);
        assert!(is_carried_by(&table, &cup, &params));

        let hanging = object("cup2", &[("cup", 1)], [0.92, 0.92, 0.72], [1.12, 1.12, 0.8]);
        assert!(!is_carried_by(&table, &hanging, &params), "only 16% overlap");

        let floating = object("cup3", &[("cup", 1)], [0.4, 0.4, 1.2], [0.5, 0.5, 1.3]);
        assert!(!is_carried_by(&table, &floating, &params), "gap 0.5 m");

        let bigger = object("slab", &[("slab", 1)], [-1.0, -1.0, 0.72], [2.0, 2.0, 0.8]);
        assert!(!is_carried_by(&table, &bigger, &params), "footprint not smaller");
    }

    #[test]
    fn nearest_carrier_wins_on_double_match() {
        let params = ConstructionParams::default();
        let mut objects = BTreeMap::new();
        // Two overlapping tables both hold the cup geometrically.
        for obj in [
            object("table_a", &[("table", 1)], [0.0, 0.0, 0.0], [1.0, 1.0, 0.7]),
            object("table_b", &[("table", 1)], [0.5, 0.0, 0.0], [1.5, 1.0, 0.7]),
            object("cup", &[("cup", 1)], [0.55, 0.45, 0.72], [0.65, 0.55, 0.8]),
        ] {
            objects.insert(obj.id.clone(), obj);
        }
        let carriers: BTreeSet<ObjectId> = ["table_a", "table_b"].iter().map(|s| s.to_string()).collect();
        let (carried, others) = assign_carried(&objects, &carriers, &params);
        // Cup centroid (0.6, 0.5) is nearer table_a's center (0.5, 0.5).
        assert!(carried["table_a"].contains("cup"));
        assert!(carried["table_b"].is_empty());
        assert!(others.is_empty());
    }

    #[test]
    fn build_checks_rooms_and_partition() {
        let providers = Providers::local(&ProviderConfig::default());
        let mut objects = BTreeMap::new();
        let table = object("table_1", &[("wooden table", 5), ("furniture", 2)], [1.0, 1.0, 0.02], [2.0, 1.8, 0.75]);
        objects.insert(table.id.clone(), table);
        let err = build_graph(
            "b1".into(),
            objects.clone(),
            Vec::new(),
            &carrier_params(),
            &providers,
            EmbedderInfo::default(),
        );
        assert!(matches!(err, Err(GraphError::NoRooms)));

        let graph = build_graph(
            "b1".into(),
            objects,
            rooms(),
            &carrier_params(),
            &providers,
            EmbedderInfo::default(),
        )
        .unwrap();
        assert_eq!(graph.version, 0);
        assert_eq!(graph.objects["table_1"].room_id, "living");
        graph.check_partition().unwrap();
    }

    #[test]
    fn fallback_room_for_points_outside_all_polygons() {
        assert_eq!(assign_room(&rooms(), Vec2::new(100.0, 100.0)), FALLBACK_ROOM_ID);
        assert_eq!(assign_room(&rooms(), Vec2::new(3.0, 3.0)), "living");
    }

    #[test]
    fn top_captions_order_by_count_then_text() {
        let captions = vec![
            Caption { text: "mug".into(), count: 2 },
            Caption { text: "black cup".into(), count: 5 },
            Caption { text: "ceramic cup".into(), count: 2 },
            Caption { text: "vessel".into(), count: 1 },
        ];
        assert_eq!(
            top_captions(&captions),
            vec!["black cup".to_string(), "ceramic cup".into(), "mug".into()]
        );
    }
}
