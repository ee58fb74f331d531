//! Planar and box geometry, occupancy grids, grid path planning and the
//! sensor frustum test.
//!
//! Coordinates are metric. Grid cells are half-open squares of side
//! `resolution` anchored at `origin`; a world point maps to the cell whose
//! interval contains it. Planned paths run over cell centers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("{which} lies outside the occupancy grid")]
    OutsideGrid { which: &'static str },
    #[error("object footprint has zero area")]
    EmptyFootprint,
    #[error("axis-aligned box has min above max")]
    InvertedBox,
    #[error("polygon needs at least three vertices")]
    DegeneratePolygon,
    #[error("sensor spec rejected: {0}")]
    BadSensor(&'static str),
    #[error("grid dimensions do not match cell data")]
    GridShape,
}

/// 2D point or direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Self) -> T {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y)
    }
}

/// 3D point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn xy(self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }
}

/// Axis-aligned box with `min` componentwise at or below `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self, GeometryError> {
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(GeometryError::InvertedBox);
        }
        Ok(Self { min, max })
    }

    pub fn center(&self) -> Vec3<T> {
        let half = T::c(0.5);
        Vec3::new(
            (self.min.x + self.max.x) * half,
            (self.min.y + self.max.y) * half,
            (self.min.z + self.max.z) * half,
        )
    }

    /// Area of the box projected onto the ground plane.
    pub fn footprint_area(&self) -> T {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn volume(&self) -> T {
        self.footprint_area() * (self.max.z - self.min.z)
    }

    /// Half the diagonal of the ground-plane footprint.
    pub fn half_diagonal_xy(&self) -> T {
        let dx = self.max.x - self.min.x;
        let dy = self.max.y - self.min.y;
        (dx * dx + dy * dy).sqrt() * T::c(0.5)
    }

    /// Ground-plane area shared with `other`; zero when disjoint.
    pub fn intersection_area_xy(&self, other: &Self) -> T {
        let w = (self.max.x.min(other.max.x) - self.min.x.max(other.min.x)).max(T::zero());
        let h = (self.max.y.min(other.max.y) - self.min.y.max(other.min.y)).max(T::zero());
        w * h
    }

    /// Ground-plane distance from the box to a point; zero inside.
    pub fn distance_xy_to_point(&self, p: Vec2<T>) -> T {
        let dx = (self.min.x - p.x).max(p.x - self.max.x).max(T::zero());
        let dy = (self.min.y - p.y).max(p.y - self.max.y).max(T::zero());
        (dx * dx + dy * dy).sqrt()
    }

    pub fn translated(&self, offset: Vec3<T>) -> Self {
        Self {
            min: Vec3::new(self.min.x + offset.x, self.min.y + offset.y, self.min.z + offset.z),
            max: Vec3::new(self.max.x + offset.x, self.max.y + offset.y, self.max.z + offset.z),
        }
    }
}

/// Robot pose on the ground plane; yaw in radians, normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub position: Vec2<T>,
    pub yaw: T,
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vec2<T>, yaw: T) -> Self {
        Self { position, yaw: normalize_angle(yaw) }
    }

    /// Unit vector the pose is facing along.
    pub fn heading(&self) -> Vec2<T> {
        Vec2::new(self.yaw.cos(), self.yaw.sin())
    }
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle<T: Real>(a: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut w = a % two_pi;
    if w > pi {
        w -= two_pi;
    }
    if w <= -pi {
        w += two_pi;
    }
    w
}

/// Named room boundary as a simple polygon over ground-plane vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomPolygon<T> {
    pub id: String,
    pub name: String,
    pub vertices: Vec<Vec2<T>>,
}

impl<T: Real> RoomPolygon<T> {
    pub fn new(id: String, name: String, vertices: Vec<Vec2<T>>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::DegeneratePolygon);
        }
        Ok(Self { id, name, vertices })
    }
}

const BOUNDARY_EPS: f64 = 1e-9;

/// Point-in-polygon test by ray casting; points on the boundary count as
/// inside.
pub fn point_in_polygon<T: Real>(p: Vec2<T>, polygon: &RoomPolygon<T>) -> bool {
    let verts = &polygon.vertices;
    let n = verts.len();
    if n < 3 {
        return false;
    }
    let eps = T::c(BOUNDARY_EPS);
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross.abs() <= eps
            && p.x >= a.x.min(b.x) - eps
            && p.x <= a.x.max(b.x) + eps
            && p.y >= a.y.min(b.y) - eps
            && p.y <= a.y.max(b.y) + eps
        {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

/// Fraction of `obj`'s ground-plane footprint covered by `carrier`.
pub fn aabb_overlap_ratio_xy<T: Real>(carrier: &Aabb<T>, obj: &Aabb<T>) -> Result<T, GeometryError> {
    let denom = obj.footprint_area();
    if denom <= T::zero() {
        return Err(GeometryError::EmptyFootprint);
    }
    Ok(carrier.intersection_area_xy(obj) / denom)
}

/// Occupancy grid over a rectangle of `width` x `height` cells.
///
/// `occupied` blocks driving, `opaque` blocks sight. Walls do both; low
/// furniture only blocks driving because the sensor looks over it. Both are
/// row-major with index `cy * width + cx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid<T> {
    pub resolution: T,
    pub origin: Vec2<T>,
    pub width: usize,
    pub height: usize,
    pub occupied: Vec<bool>,
    pub opaque: Vec<bool>,
}

impl<T: Real> OccupancyGrid<T> {
    /// Builds a grid from drive-blocking cells; every such cell also blocks
    /// sight, which is the right reading when the cells describe walls.
    pub fn new(
        resolution: T,
        origin: Vec2<T>,
        width: usize,
        height: usize,
        occupied: Vec<bool>,
    ) -> Result<Self, GeometryError> {
        if occupied.len() != width * height || width == 0 || height == 0 {
            return Err(GeometryError::GridShape);
        }
        if resolution <= T::zero() {
            return Err(GeometryError::GridShape);
        }
        let opaque = occupied.clone();
        Ok(Self { resolution, origin, width, height, occupied, opaque })
    }

    pub fn empty(resolution: T, origin: Vec2<T>, width: usize, height: usize) -> Result<Self, GeometryError> {
        Self::new(resolution, origin, width, height, vec![false; width * height])
    }

    /// Cell containing a world point, or None when the point is off-grid.
    pub fn cell_of(&self, p: Vec2<T>) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < T::zero() || fy < T::zero() {
            return None;
        }
        let cx = fx.to_usize()?;
        let cy = fy.to_usize()?;
        if cx >= self.width || cy >= self.height {
            return None;
        }
        Some((cx, cy))
    }

    pub fn center_of(&self, cx: usize, cy: usize) -> Vec2<T> {
        let half = T::c(0.5);
        Vec2::new(
            self.origin.x + (T::from_usize(cx).unwrap() + half) * self.resolution,
            self.origin.y + (T::from_usize(cy).unwrap() + half) * self.resolution,
        )
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        self.occupied[cy * self.width + cx]
    }

    pub fn set_occupied(&mut self, cx: usize, cy: usize, value: bool) {
        self.occupied[cy * self.width + cx] = value;
    }

    pub fn is_opaque(&self, cx: usize, cy: usize) -> bool {
        self.opaque[cy * self.width + cx]
    }

    pub fn set_opaque(&mut self, cx: usize, cy: usize, value: bool) {
        self.opaque[cy * self.width + cx] = value;
    }

    /// Marks every cell whose square intersects the box footprint as occupied
    /// and, when `blocks_sight` is set, as opaque too.
    pub fn occupy_footprint(&mut self, aabb: &Aabb<T>, blocks_sight: bool) {
        for cy in 0..self.height {
            for cx in 0..self.width {
                let lo = Vec2::new(
                    self.origin.x + T::from_usize(cx).unwrap() * self.resolution,
                    self.origin.y + T::from_usize(cy).unwrap() * self.resolution,
                );
                let hi = Vec2::new(lo.x + self.resolution, lo.y + self.resolution);
                if aabb.min.x < hi.x && aabb.max.x > lo.x && aabb.min.y < hi.y && aabb.max.y > lo.y {
                    self.set_occupied(cx, cy, true);
                    if blocks_sight {
                        self.set_opaque(cx, cy, true);
                    }
                }
            }
        }
    }

    /// World point of the free cell whose center is nearest to `p`,
    /// breaking ties toward lower row then column.
    pub fn nearest_free_cell(&self, p: Vec2<T>) -> Option<Vec2<T>> {
        let mut best: Option<((usize, usize), T)> = None;
        for cy in 0..self.height {
            for cx in 0..self.width {
                if self.is_occupied(cx, cy) {
                    continue;
                }
                let d = self.center_of(cx, cy).distance(p);
                let better = match &best {
                    None => true,
                    Some((_, bd)) => d < *bd,
                };
                if better {
                    best = Some(((cx, cy), d));
                }
            }
        }
        best.map(|((cx, cy), _)| self.center_of(cx, cy))
    }
}

/// Planned route over grid cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path<T> {
    pub waypoints: Vec<Vec2<T>>,
}

impl<T: Real> Path<T> {
    pub fn length(&self) -> T {
        path_length(&self.waypoints)
    }
}

/// Sum of straight-line segment lengths along `waypoints`.
pub fn path_length<T: Real>(waypoints: &[Vec2<T>]) -> T {
    waypoints
        .windows(2)
        .fold(T::zero(), |acc, w| acc + w[0].distance(w[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome<T> {
    Path(Path<T>),
    Unreachable,
}

#[derive(Copy, Clone)]
struct HeapNode<T> {
    priority: T,
    index: usize,
}

impl<T: Real> PartialEq for HeapNode<T> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority && self.index == other.index
    }
}
impl<T: Real> Eq for HeapNode<T> {}

impl<T: Real> Ord for HeapNode<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap; invert so the lowest priority pops first, ties by index
        // so pop order never depends on insertion history.
        other
            .priority
            .partial_cmp(&self.priority)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.index.cmp(&self.index))
    }
}
impl<T: Real> PartialOrd for HeapNode<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// A* over the 8-connected grid.
///
/// Straight steps cost one resolution, diagonal steps `resolution * sqrt(2)`;
/// a diagonal step is allowed only when both flanking orthogonal cells are
/// free. The octile heuristic keeps the search optimal, so the returned
/// length matches the true grid-metric shortest path. Waypoints are cell
/// centers from the start cell to the goal cell inclusive.
pub fn plan_path<T: Real>(
    grid: &OccupancyGrid<T>,
    start: Vec2<T>,
    goal: Vec2<T>,
) -> Result<PlanOutcome<T>, GeometryError> {
    let (sx, sy) = grid
        .cell_of(start)
        .ok_or(GeometryError::OutsideGrid { which: "start" })?;
    let (gx, gy) = grid
        .cell_of(goal)
        .ok_or(GeometryError::OutsideGrid { which: "goal" })?;
    if grid.is_occupied(sx, sy) || grid.is_occupied(gx, gy) {
        return Ok(PlanOutcome::Unreachable);
    }
    if (sx, sy) == (gx, gy) {
        return Ok(PlanOutcome::Path(Path { waypoints: vec![grid.center_of(sx, sy)] }));
    }

    let res = grid.resolution;
    let diag = res * T::SQRT_2();
    let idx = |cx: usize, cy: usize| cy * grid.width + cx;
    let octile = |cx: usize, cy: usize| {
        let dx = T::from_usize(cx.abs_diff(gx)).unwrap();
        let dy = T::from_usize(cy.abs_diff(gy)).unwrap();
        let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
        res * (hi - lo) + diag * lo
    };

    let n = grid.width * grid.height;
    let mut g_cost = vec![T::infinity(); n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g_cost[idx(sx, sy)] = T::zero();
    heap.push(HeapNode { priority: octile(sx, sy), index: idx(sx, sy) });

    while let Some(HeapNode { index, .. }) = heap.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let cx = index % grid.width;
        let cy = index / grid.width;
        if (cx, cy) == (gx, gy) {
            let mut cells = vec![index];
            let mut cur = index;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(cur);
            }
            cells.reverse();
            let waypoints = cells
                .into_iter()
                .map(|i| grid.center_of(i % grid.width, i / grid.width))
                .collect();
            return Ok(PlanOutcome::Path(Path { waypoints }));
        }
        for (dx, dy) in NEIGHBORS {
            let nx = cx as isize + dx;
            let ny = cy as isize + dy;
            if nx < 0 || ny < 0 || nx as usize >= grid.width || ny as usize >= grid.height {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if grid.is_occupied(nx, ny) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal
                && (grid.is_occupied(nx, cy) || grid.is_occupied(cx, ny))
            {
                continue;
            }
            let step = if diagonal { diag } else { res };
            let cand = g_cost[index] + step;
            let ni = idx(nx, ny);
            if cand < g_cost[ni] {
                g_cost[ni] = cand;
                parent[ni] = index;
                heap.push(HeapNode { priority: cand + octile(nx, ny), index: ni });
            }
        }
    }
    Ok(PlanOutcome::Unreachable)
}

/// Forward sensor model: maximum range in meters, field of view in radians,
/// and the close-observation radius used when sweeping past furniture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec<T> {
    pub range: T,
    pub fov: T,
    pub observe_radius: T,
}

impl<T: Real> SensorSpec<T> {
    pub fn new(range: T, fov: T, observe_radius: T) -> Result<Self, GeometryError> {
        if !(range > T::zero()) || !(observe_radius > T::zero()) || observe_radius >= range {
            return Err(GeometryError::BadSensor("need range > observe_radius > 0"));
        }
        let two_pi = T::PI() + T::PI();
        if !(fov > T::zero()) || fov > two_pi + T::c(BOUNDARY_EPS) {
            return Err(GeometryError::BadSensor("field of view must lie in (0, 2*pi]"));
        }
        Ok(Self { range, fov, observe_radius })
    }
}

/// Cells strictly between two cells along the Bresenham line.
fn cells_between(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (mut x0, mut y0) = (a.0 as isize, a.1 as isize);
    let (x1, y1) = (b.0 as isize, b.1 as isize);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        if (x0, y0) == (x1, y1) {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
        if (x0, y0) != (x1, y1) {
            out.push((x0 as usize, y0 as usize));
        }
    }
    out
}

/// Whether `point` is visible from `pose`: within range, within half the
/// field of view of the heading, and with no opaque cell strictly between
/// the two cells on the grid. The endpoint cells themselves do not block,
/// so objects resting on occupied furniture cells stay visible.
pub fn in_frustum<T: Real>(
    pose: &Pose<T>,
    sensor: &SensorSpec<T>,
    grid: &OccupancyGrid<T>,
    point: Vec2<T>,
) -> bool {
    let d = pose.position.distance(point);
    if d > sensor.range {
        return false;
    }
    let eps = T::c(BOUNDARY_EPS);
    if d <= eps {
        return true;
    }
    let bearing = (point.y - pose.position.y).atan2(point.x - pose.position.x);
    let off = normalize_angle(bearing - pose.yaw).abs();
    if off > sensor.fov * T::c(0.5) + eps {
        return false;
    }
    let from = match grid.cell_of(pose.position) {
        Some(c) => c,
        None => return false,
    };
    let to = match grid.cell_of(point) {
        Some(c) => c,
        None => return false,
    };
    cells_between(from, to)
        .into_iter()
        .all(|(cx, cy)| !grid.is_opaque(cx, cy))
}
