//! Deterministic 2D world the navigator runs against: an occupancy grid with
//! rooms and boxed objects, a range/FOV sensor with perfect perception, and
//! scripted or seeded object displacements between tasks.
//!
//! Scene files are JSON. The grid is given as rows of `#` (blocked) and `.`
//! (free) with row 0 at the origin edge. Everything a run needs (tasks,
//! displacement plan, parameter overrides) rides along in the same file.

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adaptation::MatchParams;
use crate::features::{FeatureError, Swatch};
use crate::geometry::{in_frustum, GeometryError};
use crate::navigation::{CommandInput, VerifyParams};
use crate::providers::{AffinityTable, HashEmbedder, ProviderConfig, TextEmbedder};
use crate::scenegraph::{
    assign_room, caption_vocabulary, rests_on, Caption, ConstructionParams, EmbedderInfo,
    SceneObject,
};
use crate::{
    Aabb, ObjectId, OccupancyGrid, PolicyParams, Pose, RoomId, RoomPolygon, SensorSpec, Vec2, Vec3,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene file io failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene file malformed: {0}")]
    Format(#[from] serde_json::Error),
    #[error("scene geometry invalid: {0}")]
    Geometry(#[from] GeometryError),
    #[error("scene feature computation failed: {0}")]
    Feature(#[from] FeatureError),
    #[error("scene embedding failed: {0}")]
    Provider(#[from] crate::providers::ProviderError),
    #[error("grid row {row} has a different length than row 0")]
    RowLength { row: usize },
    #[error("grid row {row} holds {ch:?}; only '#' and '.' are allowed")]
    BadCell { row: usize, ch: char },
    #[error("duplicate object id {0}")]
    DuplicateObject(ObjectId),
    #[error("duplicate room id {0}")]
    DuplicateRoom(RoomId),
    #[error("object {0} needs a label or at least one caption")]
    NoCaptions(ObjectId),
    #[error("object {0} lies outside the grid")]
    OffGrid(ObjectId),
    #[error("room {0} extends beyond the grid")]
    RoomOffGrid(RoomId),
    #[error("object {object} names unknown carrier {carrier}")]
    UnknownCarrier { object: ObjectId, carrier: ObjectId },
    #[error("object {object} does not rest on its declared carrier {carrier}")]
    BadPlacement { object: ObjectId, carrier: ObjectId },
    #[error("start pose is blocked or off the grid")]
    StartBlocked,
    #[error("task {task} is invalid: {reason}")]
    BadTask { task: usize, reason: String },
    #[error("displacement of {object} is invalid: {reason}")]
    BadDisplacement { object: ObjectId, reason: String },
    #[error("no landing spot on {carrier} accepts {object}")]
    BadLanding { object: ObjectId, carrier: ObjectId },
}

/// One detection: ground-truth identity plus everything perception would
/// report. `source_id` exists for matching-free bookkeeping (metrics, trace
/// readability); decision logic must treat detections by content only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedObject {
    pub source_id: ObjectId,
    pub centroid: Vec3,
    pub aabb: Aabb,
    pub captions: Vec<Caption>,
    pub text_feature: crate::FeatureVector,
    pub appearance: Swatch,
    pub mean_depth: f64,
}

/// World-side object: its current record plus which carrier it sits on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub record: SceneObject,
    pub carrier: Option<ObjectId>,
}

/// Ground truth the episodes run against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub building: String,
    pub grid: OccupancyGrid,
    pub rooms: Vec<RoomPolygon>,
    pub objects: BTreeMap<ObjectId, WorldObject>,
    pub sensor: SensorSpec,
    pub detection_dropout: f64,
    pub start: Pose,
}

/// Obstacles shorter than this are driven over rather than avoided.
const ROBOT_CLEARANCE_M: f64 = 0.3;

/// Height of the sensor above the floor. Furniture below this is looked
/// over; only taller pieces occlude like walls do.
const SENSOR_HEIGHT_M: f64 = 1.2;

/// Landing offsets tried when placing an object on a carrier, as fractions
/// of the carrier half-extents.
const LANDING_SLOTS: [(f64, f64); 9] = [
    (0.0, 0.0),
    (-0.35, -0.35),
    (0.35, 0.35),
    (-0.35, 0.35),
    (0.35, -0.35),
    (0.0, -0.35),
    (0.0, 0.35),
    (-0.35, 0.0),
    (0.35, 0.0),
];

impl WorldModel {
    /// Whether any part of the record can be seen: its centroid, or, for
    /// furniture wide enough to shadow its own center, any footprint cell.
    fn object_visible(&self, pose: &Pose, record: &SceneObject) -> bool {
        if in_frustum(pose, &self.sensor, &self.grid, record.centroid.xy()) {
            return true;
        }
        crate::adaptation::footprint_cells(&self.grid, record)
            .into_iter()
            .any(|(cx, cy)| in_frustum(pose, &self.sensor, &self.grid, self.grid.center_of(cx, cy)))
    }

    /// Everything visible from `pose`, sorted by object id. Perception is
    /// perfect: geometry, captions, features and appearance come straight
    /// from the world record. Detection dropout is the caller's business.
    pub fn sense(&self, pose: &Pose) -> Vec<ObservedObject> {
        let mut out = Vec::new();
        for (id, wo) in &self.objects {
            if !self.object_visible(pose, &wo.record) {
                continue;
            }
            let centroid = wo.record.centroid;
            out.push(ObservedObject {
                source_id: id.clone(),
                centroid,
                aabb: wo.record.aabb,
                captions: wo.record.captions.clone(),
                text_feature: wo.record.text_feature.clone(),
                appearance: wo.record.appearance.clone(),
                mean_depth: pose.position.distance(centroid.xy()),
            });
        }
        out
    }

    /// Moves `object_id` onto `to_carrier`, picking the first deterministic
    /// landing slot that rests on the carrier and stays clear of the other
    /// occupants. The occupancy grid is untouched: placements never change
    /// furniture footprints.
    pub fn displace(
        &mut self,
        object_id: &ObjectId,
        to_carrier: &ObjectId,
        params: &ConstructionParams,
    ) -> Result<(), SceneError> {
        let carrier = self
            .objects
            .get(to_carrier)
            .ok_or_else(|| SceneError::BadDisplacement {
                object: object_id.clone(),
                reason: format!("unknown carrier {to_carrier}"),
            })?
            .record
            .clone();
        let moving = self
            .objects
            .get(object_id)
            .ok_or_else(|| SceneError::BadDisplacement {
                object: object_id.clone(),
                reason: "unknown object".into(),
            })?
            .record
            .clone();
        let occupants: Vec<Vec3> = self
            .objects
            .values()
            .filter(|wo| wo.carrier.as_ref() == Some(to_carrier) && wo.record.id != *object_id)
            .map(|wo| wo.record.centroid)
            .collect();

        let half = Vec3::new(
            (moving.aabb.max.x - moving.aabb.min.x) * 0.5,
            (moving.aabb.max.y - moving.aabb.min.y) * 0.5,
            (moving.aabb.max.z - moving.aabb.min.z) * 0.5,
        );
        let ccenter = carrier.aabb.center();
        let chalf_x = (carrier.aabb.max.x - carrier.aabb.min.x) * 0.5;
        let chalf_y = (carrier.aabb.max.y - carrier.aabb.min.y) * 0.5;
        let start_slot = occupants.len() % LANDING_SLOTS.len();
        for i in 0..LANDING_SLOTS.len() {
            let (fx, fy) = LANDING_SLOTS[(start_slot + i) % LANDING_SLOTS.len()];
            let cx = ccenter.x + fx * chalf_x;
            let cy = ccenter.y + fy * chalf_y;
            let min = Vec3::new(cx - half.x, cy - half.y, carrier.aabb.max.z);
            let max = Vec3::new(cx + half.x, cy + half.y, carrier.aabb.max.z + 2.0 * half.z);
            let aabb = match Aabb::new(min, max) {
                Ok(b) => b,
                Err(_) => continue,
            };
            let centroid = aabb.center();
            if !rests_on(&carrier.aabb, carrier.centroid, &aabb, centroid, params) {
                continue;
            }
            if occupants.iter().any(|c| c.xy().distance(centroid.xy()) < 0.1) {
                continue;
            }
            let room = assign_room(&self.rooms, centroid.xy());
            let wo = self.objects.get_mut(object_id).unwrap();
            wo.record.aabb = aabb;
            wo.record.centroid = centroid;
            wo.record.room_id = room;
            wo.carrier = Some(to_carrier.clone());
            return Ok(());
        }
        Err(SceneError::BadLanding { object: object_id.clone(), carrier: to_carrier.clone() })
    }

    /// Records of the initial world, keyed by id, for graph construction.
    pub fn records(&self) -> BTreeMap<ObjectId, SceneObject> {
        self.objects.iter().map(|(id, wo)| (id.clone(), wo.record.clone())).collect()
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn world_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("world serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One task of a sequence: the command content plus the ground-truth target
/// used for scoring only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub text: Option<String>,
    pub image_of: Option<ObjectId>,
    pub hint: Option<String>,
    pub target: ObjectId,
}

impl TaskDef {
    /// Builds the command the robot actually receives. The image, when
    /// requested, is the target's current appearance swatch.
    pub fn command_input(&self, world: &WorldModel) -> CommandInput {
        CommandInput {
            text: self.text.clone(),
            image: self
                .image_of
                .as_ref()
                .and_then(|id| world.objects.get(id))
                .map(|wo| wo.record.appearance.clone()),
            image_hint: self.hint.clone(),
        }
    }
}

/// A scripted move applied before the 1-based task index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementEvent {
    pub object: ObjectId,
    pub to: ObjectId,
    #[serde(default = "default_before_task")]
    pub before_task: usize,
}

fn default_before_task() -> usize {
    1
}

/// Seeded displacement: each movable object hops to a sampled target
/// carrier, weighted by the affinity table unless `weighted` is off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDisplacement {
    pub movable: Vec<ObjectId>,
    pub targets: Vec<ObjectId>,
    #[serde(default = "default_before_task")]
    pub before_task: usize,
    #[serde(default = "default_weighted")]
    pub weighted: bool,
}

fn default_weighted() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisplacementPlan {
    Events(Vec<DisplacementEvent>),
    Random(RandomDisplacement),
}

/// A loaded, validated scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub world: WorldModel,
    pub tasks: Vec<TaskDef>,
    pub displacements: Option<DisplacementPlan>,
    pub construction: ConstructionParams,
    pub policy: PolicyParams,
    pub verify: VerifyParams,
    pub matching: MatchParams,
    pub provider: ProviderConfig,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    resolution: f64,
    origin: [f64; 2],
    rows: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomSpec {
    id: String,
    name: Option<String>,
    vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AabbSpec {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SwatchSpec {
    Solid { solid: [u8; 3] },
    Pixels { pixels: Vec<Vec<[u8; 3]>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectSpec {
    id: String,
    label: Option<String>,
    captions: Option<Vec<(String, u32)>>,
    aabb: AabbSpec,
    carrier: Option<String>,
    swatch: Option<SwatchSpec>,
}

#[derive(Debug, Deserialize)]
struct SensorParams {
    range: f64,
    fov: f64,
    observe_radius: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { range: 3.0, fov: std::f64::consts::TAU, observe_radius: 2.0 }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ParamsSpec {
    construction: ConstructionParams,
    policy: PolicyParams,
    verify: VerifyParams,
    matching: MatchParams,
    provider: ProviderConfig,
    sensor: SensorParams,
    detection_dropout: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: Option<String>,
    grid: GridSpec,
    rooms: Vec<RoomSpec>,
    start: [f64; 3],
    objects: Vec<ObjectSpec>,
    affinity_table: Option<AffinityTable>,
    displacements: Option<DisplacementPlan>,
    #[serde(default)]
    tasks: Vec<TaskDef>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    params: ParamsSpec,
}

fn build_swatch(spec: Option<SwatchSpec>) -> Result<Swatch, FeatureError> {
    match spec {
        None => Ok(Swatch::solid(4, 4, [128, 128, 128])),
        Some(SwatchSpec::Solid { solid }) => Ok(Swatch::solid(4, 4, solid)),
        Some(SwatchSpec::Pixels { pixels }) => {
            let height = pixels.len();
            let width = pixels.first().map(|r| r.len()).unwrap_or(0);
            let mut data = Vec::with_capacity(width * height * 3);
            for row in &pixels {
                if row.len() != width {
                    return Err(FeatureError::BadSwatch);
                }
                for px in row {
                    data.extend_from_slice(px);
                }
            }
            Swatch::new(width as u32, height as u32, data)
        }
    }
}

fn within_grid(grid: &OccupancyGrid, p: Vec2) -> bool {
    let eps = 1e-9;
    p.x >= grid.origin.x - eps
        && p.y >= grid.origin.y - eps
        && p.x <= grid.origin.x + grid.resolution * grid.width as f64 + eps
        && p.y <= grid.origin.y + grid.resolution * grid.height as f64 + eps
}

/// Reads and validates a scene file. Fails with a field-level error on any
/// schema violation, off-grid geometry, impossible placement, or blocked
/// start; the returned world is ready to run.
pub fn load_scene(path: &FsPath) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path)?;
    let file: SceneFile = serde_json::from_str(&text)?;
    scene_from_file(file)
}

/// [`load_scene`] over an in-memory JSON value.
pub fn load_scene_from_value(value: serde_json::Value) -> Result<Scene, SceneError> {
    let file: SceneFile = serde_json::from_value(value)?;
    scene_from_file(file)
}

fn scene_from_file(file: SceneFile) -> Result<Scene, SceneError> {
    let name = file.name.unwrap_or_else(|| "building".to_string());
    let params = file.params;
    let mut provider = params.provider;
    if let Some(affinity) = file.affinity_table {
        provider.affinity = affinity;
    }

    // Grid rows: row index is the cell row, row 0 at the origin edge.
    let height = file.grid.rows.len();
    let width = file.grid.rows.first().map(|r| r.chars().count()).unwrap_or(0);
    let mut occupied = vec![false; width * height];
    for (cy, row) in file.grid.rows.iter().enumerate() {
        let cells: Vec<char> = row.chars().collect();
        if cells.len() != width {
            return Err(SceneError::RowLength { row: cy });
        }
        for (cx, ch) in cells.iter().enumerate() {
            occupied[cy * width + cx] = match ch {
                '#' => true,
                '.' => false,
                other => return Err(SceneError::BadCell { row: cy, ch: *other }),
            };
        }
    }
    let mut grid = OccupancyGrid::new(
        file.grid.resolution,
        Vec2::new(file.grid.origin[0], file.grid.origin[1]),
        width,
        height,
        occupied,
    )?;

    // Rooms.
    let mut rooms = Vec::new();
    let mut room_ids = std::collections::BTreeSet::new();
    for spec in file.rooms {
        if !room_ids.insert(spec.id.clone()) {
            return Err(SceneError::DuplicateRoom(spec.id));
        }
        let verts: Vec<Vec2> = spec.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
        for v in &verts {
            if !within_grid(&grid, *v) {
                return Err(SceneError::RoomOffGrid(spec.id.clone()));
            }
        }
        let name = spec.name.unwrap_or_else(|| spec.id.clone());
        rooms.push(RoomPolygon::new(spec.id, name, verts)?);
    }

    // Objects.
    let embedder = HashEmbedder { dim: provider.embed_dim, seed: provider.embed_seed };
    let visual_embedder =
        HashEmbedder { dim: provider.embed_dim, seed: provider.embed_seed.wrapping_add(1) };
    let mut objects: BTreeMap<ObjectId, WorldObject> = BTreeMap::new();
    let mut declared_carriers: Vec<(ObjectId, ObjectId)> = Vec::new();
    for spec in file.objects {
        if objects.contains_key(&spec.id) {
            return Err(SceneError::DuplicateObject(spec.id));
        }
        let captions: Vec<Caption> = match (&spec.captions, &spec.label) {
            (Some(list), _) if !list.is_empty() => list
                .iter()
                .map(|(text, count)| Caption { text: text.clone(), count: *count })
                .collect(),
            (_, Some(label)) => vec![Caption { text: label.clone(), count: 1 }],
            _ => return Err(SceneError::NoCaptions(spec.id)),
        };
        let aabb = Aabb::new(
            Vec3::new(spec.aabb.min[0], spec.aabb.min[1], spec.aabb.min[2]),
            Vec3::new(spec.aabb.max[0], spec.aabb.max[1], spec.aabb.max[2]),
        )?;
        if !within_grid(&grid, aabb.min.xy()) || !within_grid(&grid, aabb.max.xy()) {
            return Err(SceneError::OffGrid(spec.id));
        }
        let vocab = caption_vocabulary(&captions);
        let text_feature = embedder.embed_tokens(&vocab)?;
        let visual_feature = visual_embedder.embed_tokens(&vocab)?;
        let centroid = aabb.center();
        let record = SceneObject {
            id: spec.id.clone(),
            aabb,
            centroid,
            captions,
            text_feature,
            visual_feature,
            appearance: build_swatch(spec.swatch)?,
            room_id: assign_room(&rooms, centroid.xy()),
        };
        if let Some(carrier) = spec.carrier {
            declared_carriers.push((spec.id.clone(), carrier));
        }
        objects.insert(spec.id.clone(), WorldObject { record, carrier: None });
    }

    // Furniture-scale objects block the grid. Flat things (mats, rugs) stay
    // drivable, wall-mounted things are passed under, and only pieces rising
    // above the sensor also block sight.
    let footprints: Vec<Aabb> = objects
        .values()
        .filter(|wo| {
            wo.record.aabb.footprint_area() >= params.construction.min_footprint_area
                && wo.record.aabb.min.z <= params.construction.max_base_height
                && wo.record.aabb.max.z >= ROBOT_CLEARANCE_M
        })
        .map(|wo| wo.record.aabb)
        .collect();
    for aabb in footprints {
        grid.occupy_footprint(&aabb, aabb.max.z >= SENSOR_HEIGHT_M);
    }

    // Carrier declarations must be physically coherent.
    for (object, carrier) in declared_carriers {
        let carrier_record = objects
            .get(&carrier)
            .ok_or_else(|| SceneError::UnknownCarrier {
                object: object.clone(),
                carrier: carrier.clone(),
            })?
            .record
            .clone();
        let record = &objects[&object].record;
        if !rests_on(
            &carrier_record.aabb,
            carrier_record.centroid,
            &record.aabb,
            record.centroid,
            &params.construction,
        ) {
            return Err(SceneError::BadPlacement { object, carrier });
        }
        objects.get_mut(&object).unwrap().carrier = Some(carrier);
    }

    let sensor = SensorSpec::new(
        params.sensor.range,
        params.sensor.fov,
        params.sensor.observe_radius,
    )?;

    // Snap the start pose to its cell center; it must be free.
    let raw_start = Vec2::new(file.start[0], file.start[1]);
    let start_cell = grid.cell_of(raw_start).ok_or(SceneError::StartBlocked)?;
    if grid.is_occupied(start_cell.0, start_cell.1) {
        return Err(SceneError::StartBlocked);
    }
    let start = Pose::new(grid.center_of(start_cell.0, start_cell.1), file.start[2]);

    let world = WorldModel {
        building: name.clone(),
        grid,
        rooms,
        objects,
        sensor,
        detection_dropout: params.detection_dropout,
        start,
    };

    // Tasks.
    for (idx, task) in file.tasks.iter().enumerate() {
        if task.text.is_none() && task.image_of.is_none() {
            return Err(SceneError::BadTask { task: idx, reason: "needs text or image_of".into() });
        }
        if let Some(id) = &task.image_of {
            if !world.objects.contains_key(id) {
                return Err(SceneError::BadTask {
                    task: idx,
                    reason: format!("image_of names unknown object {id}"),
                });
            }
        }
        if !world.objects.contains_key(&task.target) {
            return Err(SceneError::BadTask {
                task: idx,
                reason: format!("target names unknown object {}", task.target),
            });
        }
    }

    // Displacement plans are validated up front; scripted events are also
    // dry-run so a bad landing fails at load time, not mid-episode.
    match &file.displacements {
        Some(DisplacementPlan::Events(events)) => {
            let mut probe = world.clone();
            let mut ordered: Vec<&DisplacementEvent> = events.iter().collect();
            ordered.sort_by(|a, b| {
                a.before_task.cmp(&b.before_task).then_with(|| a.object.cmp(&b.object))
            });
            for ev in ordered {
                if ev.before_task == 0 || ev.before_task > file.tasks.len().max(1) {
                    return Err(SceneError::BadDisplacement {
                        object: ev.object.clone(),
                        reason: format!("before_task {} out of range", ev.before_task),
                    });
                }
                probe.displace(&ev.object, &ev.to, &params.construction)?;
            }
        }
        Some(DisplacementPlan::Random(spec)) => {
            if spec.movable.is_empty() || spec.targets.is_empty() {
                return Err(SceneError::BadDisplacement {
                    object: "*".into(),
                    reason: "random plan needs movable and targets".into(),
                });
            }
            for id in spec.movable.iter().chain(spec.targets.iter()) {
                if !world.objects.contains_key(id) {
                    return Err(SceneError::BadDisplacement {
                        object: id.clone(),
                        reason: "unknown object".into(),
                    });
                }
            }
            if spec.before_task == 0 || spec.before_task > file.tasks.len().max(1) {
                return Err(SceneError::BadDisplacement {
                    object: "*".into(),
                    reason: format!("before_task {} out of range", spec.before_task),
                });
            }
        }
        None => {}
    }

    Ok(Scene {
        name,
        world,
        tasks: file.tasks,
        displacements: file.displacements,
        construction: params.construction,
        policy: params.policy,
        verify: params.verify,
        matching: params.matching,
        provider,
        seed: file.seed,
    })
}

/// Expands a displacement plan into concrete events for one run seed.
/// Scripted events pass through (sorted); random plans sample a target
/// carrier per movable object, weighted by the affinity table, skipping the
/// object's current carrier and any landing that fails the resting check.
pub fn materialize_displacements(
    plan: &Option<DisplacementPlan>,
    world: &WorldModel,
    affinity: &AffinityTable,
    construction: &ConstructionParams,
    seed: u64,
) -> Result<Vec<DisplacementEvent>, SceneError> {
    match plan {
        None => Ok(Vec::new()),
        Some(DisplacementPlan::Events(events)) => {
            let mut ordered = events.clone();
            ordered.sort_by(|a, b| {
                a.before_task.cmp(&b.before_task).then_with(|| a.object.cmp(&b.object))
            });
            Ok(ordered)
        }
        Some(DisplacementPlan::Random(spec)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15f_1ace);
            let mut probe = world.clone();
            let mut events = Vec::new();
            let mut movable = spec.movable.clone();
            movable.sort();
            for object in &movable {
                let object_vocab = probe.objects[object].record.caption_vocabulary();
                let current = probe.objects[object].carrier.clone();
                let mut weights: Vec<(ObjectId, f64)> = Vec::new();
                for target in &spec.targets {
                    if Some(target) == current.as_ref() || target == object {
                        continue;
                    }
                    let target_vocab = probe.objects[target].record.caption_vocabulary();
                    let w = if spec.weighted {
                        affinity.affinity(&object_vocab, &target_vocab)
                    } else {
                        1.0
                    };
                    if w > 0.0 {
                        weights.push((target.clone(), w));
                    }
                }
                while !weights.is_empty() {
                    let total: f64 = weights.iter().map(|(_, w)| w).sum();
                    let mut draw = rng.gen_range(0.0..total);
                    let mut pick = weights.len() - 1;
                    for (i, (_, w)) in weights.iter().enumerate() {
                        if draw < *w {
                            pick = i;
                            break;
                        }
                        draw -= w;
                    }
                    let (target, _) = weights[pick].clone();
                    match probe.displace(object, &target, construction) {
                        Ok(()) => {
                            events.push(DisplacementEvent {
                                object: object.clone(),
                                to: target,
                                before_task: spec.before_task,
                            });
                            break;
                        }
                        Err(SceneError::BadLanding { .. }) => {
                            weights.remove(pick);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(events)
        }
    }
}

/// Embedder identity a graph built from this scene should record.
pub fn embedder_info(provider: &ProviderConfig) -> EmbedderInfo {
    EmbedderInfo { dim: provider.embed_dim, seed: provider.embed_seed }
}
