//! 2D occupancy mapping with known sensor poses, waypoint projection,
//! collision-free goal search and 8-connected A* planning.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, UnitQuaternion, Vec3};
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NavError {
    #[error("no collision-free goal pose within the search radius")]
    NoFeasibleGoal,
    #[error("goal is unreachable from start")]
    NoPath,
    #[error("cell ({0}, {1}) is outside the grid")]
    OutOfBounds(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Grid cell index, column `x` and row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    resolution: f64,
    /// World position of the lower-left corner of cell (0, 0).
    origin: Vec3,
    width: usize,
    height: usize,
    cells: Vec<CellState>,
}

/// Vertical slice of returns, relative to local ground, that is projected into the 2D map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBand {
    pub min: f64,
    pub max: f64,
}

impl Default for ZBand {
    fn default() -> Self {
        ZBand { min: 0.05, max: 0.60 }
    }
}

/// One range scan. Points are in the sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub sensor_pose: Pose,
    pub points: Vec<Vec3>,
    pub timestamp: f64,
    /// Terrain height under the sensor; the z band is measured from here.
    #[serde(default)]
    pub ground_height: f64,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: Vec3, width: usize, height: usize) -> Result<Self, NavError> {
        if !(resolution > 0.0) {
            return Err(NavError::InvalidConfig("resolution must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(NavError::InvalidConfig("grid must have at least one cell"));
        }
        Ok(OccupancyGrid { resolution, origin, width, height, cells: vec![CellState::Unknown; width * height] })
    }

    /// Grid of `width × height` cells whose centre cell contains the world origin's corner.
    pub fn centered(resolution: f64, width: usize, height: usize) -> Result<Self, NavError> {
        let origin = Vec3::new(-((width / 2) as f64) * resolution, -((height / 2) as f64) * resolution, 0.0);
        Self::new(resolution, origin, width, height)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn origin(&self) -> Vec3 {
        self.origin
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn get(&self, c: Cell) -> CellState {
        if self.in_bounds(c) {
            self.cells[self.index(c)]
        } else {
            CellState::Unknown
        }
    }

    pub fn set(&mut self, c: Cell, s: CellState) {
        let i = self.index(c);
        self.cells[i] = s;
    }

    /// Signed cell coordinates of a world point (floor convention).
    pub fn signed_cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            math::floor((x - self.origin.x) / self.resolution) as i64,
            math::floor((y - self.origin.y) / self.resolution) as i64,
        )
    }

    pub fn cell_of(&self, p: Vec3) -> Option<Cell> {
        let (x, y) = self.signed_cell_of(p.x, p.y);
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            Some(Cell::new(x as usize, y as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, c: Cell) -> Vec3 {
        Vec3::new(
            self.origin.x + (c.x as f64 + 0.5) * self.resolution,
            self.origin.y + (c.y as f64 + 0.5) * self.resolution,
            self.origin.z,
        )
    }

    fn cell_rect_distance(&self, cx: i64, cy: i64, p: Vec3) -> f64 {
        let x0 = self.origin.x + cx as f64 * self.resolution;
        let y0 = self.origin.y + cy as f64 * self.resolution;
        let dx = (x0 - p.x).max(0.0).max(p.x - (x0 + self.resolution));
        let dy = (y0 - p.y).max(0.0).max(p.y - (y0 + self.resolution));
        math::sqrt(dx * dx + dy * dy)
    }

    /// True when a disk of `radius` at `center` overlaps no Occupied cell.
    /// Cells outside the grid count as Unknown.
    pub fn footprint_clear(&self, center: Vec3, radius: f64) -> bool {
        let (cx, cy) = self.signed_cell_of(center.x, center.y);
        let reach = math::ceil(radius / self.resolution) as i64 + 1;
        for y in (cy - reach).max(0)..=(cy + reach).min(self.height as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(self.width as i64 - 1) {
                if self.cells[y as usize * self.width + x as usize] == CellState::Occupied
                    && self.cell_rect_distance(x, y, center) < radius
                {
                    return false;
                }
            }
        }
        true
    }

    /// Doubles width and/or height (shifting the origin when growing toward
    /// negative coordinates) until the signed cell `(x, y)` is inside.
    /// Returns the cell's index after growth.
    pub fn grow_to_include(&mut self, x: f64, y: f64) -> Cell {
        loop {
            let (cx, cy) = self.signed_cell_of(x, y);
            let (mut shift_x, mut shift_y) = (0usize, 0usize);
            let (mut new_w, mut new_h) = (self.width, self.height);
            if cx < 0 {
                shift_x = self.width;
                new_w = self.width * 2;
            } else if cx as usize >= self.width {
                new_w = self.width * 2;
            }
            if cy < 0 {
                shift_y = self.height;
                new_h = self.height * 2;
            } else if cy as usize >= self.height {
                new_h = self.height * 2;
            }
            if new_w == self.width && new_h == self.height {
                return Cell::new(cx as usize, cy as usize);
            }
            let mut cells = vec![CellState::Unknown; new_w * new_h];
            for row in 0..self.height {
                let src = &self.cells[row * self.width..(row + 1) * self.width];
                let dst = (row + shift_y) * new_w + shift_x;
                cells[dst..dst + self.width].copy_from_slice(src);
            }
            self.origin.x -= shift_x as f64 * self.resolution;
            self.origin.y -= shift_y as f64 * self.resolution;
            self.width = new_w;
            self.height = new_h;
            self.cells = cells;
        }
    }

    /// Cells crossed by the segment `a → b` in traversal order, both ends included.
    pub fn traverse(&self, a: Vec3, b: Vec3) -> Vec<(i64, i64)> {
        let res = self.resolution;
        let (gx0, gy0) = ((a.x - self.origin.x) / res, (a.y - self.origin.y) / res);
        let (gx1, gy1) = ((b.x - self.origin.x) / res, (b.y - self.origin.y) / res);
        let (mut cx, mut cy) = (math::floor(gx0) as i64, math::floor(gy0) as i64);
        let (ex, ey) = (math::floor(gx1) as i64, math::floor(gy1) as i64);
        let (dx, dy) = (gx1 - gx0, gy1 - gy0);
        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
        let mut t_max_x = if dx > 0.0 {
            (cx as f64 + 1.0 - gx0) * t_delta_x
        } else if dx < 0.0 {
            (gx0 - cx as f64) * t_delta_x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            (cy as f64 + 1.0 - gy0) * t_delta_y
        } else if dy < 0.0 {
            (gy0 - cy as f64) * t_delta_y
        } else {
            f64::INFINITY
        };
        let max_steps = (ex - cx).unsigned_abs() + (ey - cy).unsigned_abs();
        let mut out = Vec::with_capacity(max_steps as usize + 1);
        out.push((cx, cy));
        for _ in 0..max_steps {
            if (cx, cy) == (ex, ey) {
                break;
            }
            if t_max_x < t_max_y {
                cx += step_x;
                t_max_x += t_delta_x;
            } else {
                cy += step_y;
                t_max_y += t_delta_y;
            }
            out.push((cx, cy));
        }
        out
    }
}

/// Marks in-band returns Occupied and clears the cells their rays cross.
/// Occupied cells never revert, so re-integrating a scan changes nothing.
pub fn integrate_scan(grid: &mut OccupancyGrid, scan: &Scan, z_band: ZBand) {
    let sensor = scan.sensor_pose.position;
    let hits: Vec<Vec3> = scan
        .points
        .iter()
        .map(|p| scan.sensor_pose.transform_point(*p))
        .filter(|w| {
            let h = w.z - scan.ground_height;
            h >= z_band.min && h <= z_band.max
        })
        .collect();
    if hits.is_empty() {
        return;
    }
    grid.grow_to_include(sensor.x, sensor.y);
    for h in &hits {
        grid.grow_to_include(h.x, h.y);
    }
    for h in &hits {
        let cells = grid.traverse(sensor, *h);
        let end = grid.signed_cell_of(h.x, h.y);
        for (x, y) in cells {
            if (x, y) == end {
                continue;
            }
            let c = Cell::new(x as usize, y as usize);
            if grid.get(c) != CellState::Occupied {
                grid.set(c, CellState::Free);
            }
        }
        grid.set(Cell::new(end.0 as usize, end.1 as usize), CellState::Occupied);
    }
}

/// Cell containing the target's (x, y), growing the grid if needed.
pub fn project_waypoint(grid: &mut OccupancyGrid, target: Vec3) -> Cell {
    grid.grow_to_include(target.x, target.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalSearchConfig {
    pub search_radius: f64,
    pub ring_step: f64,
    pub angular_step: f64,
    /// Radius of the robot footprint disk.
    pub robot_inflation: f64,
    /// Margin added around object boxes.
    pub bbox_inflation: f64,
}

impl Default for GoalSearchConfig {
    fn default() -> Self {
        GoalSearchConfig {
            search_radius: 2.0,
            ring_step: 0.05,
            angular_step: math::PI / 16.0,
            robot_inflation: 0.35,
            bbox_inflation: 0.10,
        }
    }
}

impl GoalSearchConfig {
    pub fn validate(&self) -> Result<(), NavError> {
        let all_pos = [self.search_radius, self.ring_step, self.angular_step, self.robot_inflation, self.bbox_inflation]
            .iter()
            .all(|v| *v > 0.0);
        if all_pos {
            Ok(())
        } else {
            Err(NavError::InvalidConfig("goal search parameters must be positive"))
        }
    }
}

/// Candidate positions in search order: rings of growing radius, each
/// scanned counter-clockwise from angle 0.
pub fn goal_candidates(waypoint: Vec3, cfg: &GoalSearchConfig) -> impl Iterator<Item = Vec3> + '_ {
    let rings = math::floor(cfg.search_radius / cfg.ring_step + 1e-9) as usize;
    let per_ring = math::ceil(math::TAU / cfg.angular_step - 1e-9) as usize;
    (0..=rings).flat_map(move |k| {
        let r = k as f64 * cfg.ring_step;
        let n = if k == 0 { 1 } else { per_ring };
        (0..n).map(move |j| {
            let a = j as f64 * cfg.angular_step;
            Vec3::new(waypoint.x + r * math::cos(a), waypoint.y + r * math::sin(a), waypoint.z)
        })
    })
}

/// True when the footprint at `p` keeps clear of every inflated box.
pub fn clear_of_boxes(p: Vec3, obstacles: &[Aabb], cfg: &GoalSearchConfig) -> bool {
    obstacles.iter().all(|b| b.inflate_xy(cfg.bbox_inflation).distance_xy(p) >= cfg.robot_inflation)
}

/// First collision-free pose around `waypoint`, facing `face_toward`.
pub fn find_goal_pose(
    grid: &OccupancyGrid,
    waypoint: Vec3,
    obstacles: &[Aabb],
    cfg: &GoalSearchConfig,
    face_toward: Vec3,
) -> Result<Pose, NavError> {
    cfg.validate()?;
    let spot = goal_candidates(waypoint, cfg)
        .find(|c| grid.footprint_clear(*c, cfg.robot_inflation) && clear_of_boxes(*c, obstacles, cfg))
        .ok_or(NavError::NoFeasibleGoal)?;
    let (dx, dy) = (face_toward.x - spot.x, face_toward.y - spot.y);
    let yaw = if dx.abs() < 1e-9 && dy.abs() < 1e-9 { 0.0 } else { math::atan2(dy, dx) };
    Ok(Pose::new(Vec3::new(spot.x, spot.y, grid.origin().z), UnitQuaternion::from_yaw(yaw)))
}

/// Path length as counts of straight and diagonal moves; the cost is
/// `straight + diagonal·√2`, so equal counts always give bit-equal costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl PathCost {
    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * math::SQRT_2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub cost: PathCost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse so the smallest (f, h, index) pops first
        o.f.total_cmp(&self.f).then(o.h.total_cmp(&self.h)).then(o.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Lazily evaluated footprint clearance per cell.
pub struct Traversability<'a> {
    grid: &'a OccupancyGrid,
    inflation: f64,
    cache: Vec<u8>,
}

impl<'a> Traversability<'a> {
    pub fn new(grid: &'a OccupancyGrid, inflation: f64) -> Self {
        Traversability { grid, inflation, cache: vec![0; grid.width * grid.height] }
    }

    pub fn is_traversable(&mut self, c: Cell) -> bool {
        let i = self.grid.index(c);
        if self.cache[i] == 0 {
            let ok = self.grid.cells[i] != CellState::Occupied
                && self.grid.footprint_clear(self.grid.cell_center(c), self.inflation);
            self.cache[i] = if ok { 1 } else { 2 };
        }
        self.cache[i] == 1
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Neighbours of `c` reachable in one move. Diagonal moves require both
/// adjacent orthogonal cells to be traversable (no corner cutting).
pub fn successors(trav: &mut Traversability<'_>, c: Cell) -> Vec<(Cell, bool)> {
    let (w, h) = (trav.grid.width as i64, trav.grid.height as i64);
    let mut out = Vec::with_capacity(8);
    for (dx, dy) in NEIGHBORS {
        let (nx, ny) = (c.x as i64 + dx, c.y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            continue;
        }
        let n = Cell::new(nx as usize, ny as usize);
        if !trav.is_traversable(n) {
            continue;
        }
        let diagonal = dx != 0 && dy != 0;
        if diagonal {
            let a = Cell::new(nx as usize, c.y);
            let b = Cell::new(c.x, ny as usize);
            if !trav.is_traversable(a) || !trav.is_traversable(b) {
                continue;
            }
        }
        out.push((n, diagonal));
    }
    out
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = (a.x as i64 - b.x as i64).unsigned_abs() as f64;
    let dy = (a.y as i64 - b.y as i64).unsigned_abs() as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) + lo * math::SQRT_2
}

/// Cost-optimal 8-connected path over cells whose footprint disk of radius
/// `inflation` avoids Occupied cells. Unknown cells are traversable.
pub fn plan_path(grid: &OccupancyGrid, start: Cell, goal: Cell, inflation: f64) -> Result<GridPath, NavError> {
    for c in [start, goal] {
        if !grid.in_bounds(c) {
            return Err(NavError::OutOfBounds(c.x, c.y));
        }
    }
    let mut trav = Traversability::new(grid, inflation);
    if !trav.is_traversable(start) || !trav.is_traversable(goal) {
        return Err(NavError::NoPath);
    }
    let n = grid.width * grid.height;
    let mut g: Vec<Option<PathCost>> = vec![None; n];
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = grid.index(start);
    g[si] = Some(PathCost::default());
    let h0 = octile(start, goal);
    open.push(Open { f: h0, h: h0, index: si });

    while let Some(Open { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let cell = Cell::new(index % grid.width, index / grid.width);
        let gc = g[index].unwrap_or_default();
        if cell == goal {
            let mut cells = vec![cell];
            let mut cur = index;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(Cell::new(cur % grid.width, cur / grid.width));
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: gc });
        }
        for (nb, diagonal) in successors(&mut trav, cell) {
            let ni = grid.index(nb);
            if closed[ni] {
                continue;
            }
            let mut cand = gc;
            if diagonal {
                cand.diagonal += 1;
            } else {
                cand.straight += 1;
            }
            if g[ni].is_none_or(|old| cand.value() < old.value()) {
                g[ni] = Some(cand);
                parent[ni] = index;
                let h = octile(nb, goal);
                open.push(Open { f: cand.value() + h, h, index: ni });
            }
        }
    }
    Err(NavError::NoPath)
}

/// Closest traversable cell to `from` by ring distance, searching up to `max_rings`.
pub fn nearest_traversable(grid: &OccupancyGrid, from: Cell, inflation: f64, max_rings: usize) -> Option<Cell> {
    let mut trav = Traversability::new(grid, inflation);
    let center = grid.cell_center(from);
    for r in 0..=max_rings as i64 {
        let mut best: Option<(f64, Cell)> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs() != r && dy.abs() != r {
                    continue;
                }
                let (x, y) = (from.x as i64 + dx, from.y as i64 + dy);
                if x < 0 || y < 0 || x >= grid.width as i64 || y >= grid.height as i64 {
                    continue;
                }
                let c = Cell::new(x as usize, y as usize);
                if trav.is_traversable(c) {
                    let d = grid.cell_center(c).distance_xy(center);
                    if best.is_none_or(|(bd, bc)| d < bd || (d == bd && grid.index(c) < grid.index(bc))) {
                        best = Some((d, c));
                    }
                }
            }
        }
        if let Some((_, c)) = best {
            return Some(c);
        }
    }
    None
}
