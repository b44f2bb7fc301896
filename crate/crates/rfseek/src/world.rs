//! Occupancy-grid world model: legality checks for a disc-shaped robot
//! footprint, 8-connected A* path planning with segment smoothing, and the
//! incremental line scan used to sidestep obstacles.
//!
//! Maps load from a plain-text format: a header line
//! `resolution <meters> origin <x> <y>` followed by rows of `.` (free) and
//! `#` (occupied), top row at the highest y.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in world coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at parameter `t` on the segment from `self` to `other`.
    pub fn lerp(&self, other: Position, t: f64) -> Position {
        Position::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    /// Point at `dist` meters from `self` toward `other`.
    pub fn toward(&self, other: Position, dist: f64) -> Position {
        let total = self.distance_to(other);
        if total == 0.0 {
            return *self;
        }
        self.lerp(other, dist / total)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Disc-shaped robot clearance used by all legality checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RobotFootprint {
    pub radius: f64,
}

impl RobotFootprint {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0, "footprint radius must be positive");
        Self { radius }
    }
}

impl Default for RobotFootprint {
    fn default() -> Self {
        // TurtleBot-class clearance.
        Self { radius: 0.35 }
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line 1: expected header `resolution <m> origin <x> <y>`, got {0:?}")]
    BadHeader(String),
    #[error("line {line}: unexpected character {ch:?} (expected '.' or '#')")]
    BadCell { line: usize, ch: char },
    #[error("line {line}: row has {got} cells, expected {expected}")]
    RaggedRow { line: usize, got: usize, expected: usize },
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("map has no free cell")]
    NoFreeCell,
    #[error("failed to read map: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    /// The free space containing the start does not contain the goal.
    #[error("no path between the given positions")]
    NoPath,
}

/// Free/occupied grid over a rectangular extent. Immutable after
/// construction; safe to share across episodes.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Position,
    occupied: Vec<bool>, // row-major, index = iy * width + ix
}

impl OccupancyGrid {
    pub fn new(
        resolution: f64,
        width: usize,
        height: usize,
        origin: Position,
        occupied: Vec<bool>,
    ) -> Result<Self, MapError> {
        if resolution <= 0.0 || !resolution.is_finite() {
            return Err(MapError::BadResolution(resolution));
        }
        if width == 0 || height == 0 {
            return Err(MapError::Empty);
        }
        assert_eq!(occupied.len(), width * height, "cell count mismatch");
        if occupied.iter().all(|&o| o) {
            return Err(MapError::NoFreeCell);
        }
        Ok(Self { resolution, width, height, origin, occupied })
    }

    /// Parse the plain-text map format.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(MapError::Empty)?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let parsed = match tokens.as_slice() {
            ["resolution", res, "origin", x, y] => {
                match (res.parse::<f64>(), x.parse::<f64>(), y.parse::<f64>()) {
                    (Ok(r), Ok(x), Ok(y)) => Some((r, x, y)),
                    _ => None,
                }
            }
            _ => None,
        };
        let (resolution, ox, oy) =
            parsed.ok_or_else(|| MapError::BadHeader(header.to_string()))?;

        let mut rows: Vec<Vec<bool>> = Vec::new();
        let mut width = None;
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for ch in line.chars() {
                match ch {
                    '.' => row.push(false),
                    '#' => row.push(true),
                    _ => return Err(MapError::BadCell { line: idx + 1, ch }),
                }
            }
            let expected = *width.get_or_insert(row.len());
            if row.len() != expected {
                return Err(MapError::RaggedRow { line: idx + 1, got: row.len(), expected });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let width = width.unwrap();
        let height = rows.len();
        // Top text row is the highest y, so flip into bottom-up storage.
        let mut occupied = Vec::with_capacity(width * height);
        for row in rows.iter().rev() {
            occupied.extend_from_slice(row);
        }
        Self::new(resolution, width, height, Position::new(ox, oy), occupied)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Position {
        self.origin
    }

    pub fn min_x(&self) -> f64 {
        self.origin.x
    }

    pub fn min_y(&self) -> f64 {
        self.origin.y
    }

    pub fn max_x(&self) -> f64 {
        self.origin.x + self.width as f64 * self.resolution
    }

    pub fn max_y(&self) -> f64 {
        self.origin.y + self.height as f64 * self.resolution
    }

    pub fn contains(&self, p: Position) -> bool {
        p.is_finite()
            && p.x >= self.min_x()
            && p.x <= self.max_x()
            && p.y >= self.min_y()
            && p.y <= self.max_y()
    }

    /// Cell indices for a position inside the grid.
    pub fn cell_index(&self, p: Position) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let ix = (((p.x - self.origin.x) / self.resolution) as usize).min(self.width - 1);
        let iy = (((p.y - self.origin.y) / self.resolution) as usize).min(self.height - 1);
        Some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Position {
        Position::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_occupied_cell(&self, ix: usize, iy: usize) -> bool {
        self.occupied[iy * self.width + ix]
    }

    /// True iff `p` lies inside the grid and every cell intersecting the
    /// footprint disc around `p` is free. The disc must fit inside the
    /// mapped extent: clearance past the map edge is unknown space.
    pub fn is_legal(&self, fp: &RobotFootprint, p: Position) -> bool {
        if !p.is_finite() {
            return false;
        }
        let r = fp.radius;
        if p.x - r < self.min_x()
            || p.x + r > self.max_x()
            || p.y - r < self.min_y()
            || p.y + r > self.max_y()
        {
            return false;
        }
        let ix0 = (((p.x - r - self.origin.x) / self.resolution).floor().max(0.0)) as usize;
        let iy0 = (((p.y - r - self.origin.y) / self.resolution).floor().max(0.0)) as usize;
        let ix1 = ((((p.x + r - self.origin.x) / self.resolution).floor()) as usize)
            .min(self.width - 1);
        let iy1 = ((((p.y + r - self.origin.y) / self.resolution).floor()) as usize)
            .min(self.height - 1);
        let r2 = r * r;
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                if !self.is_occupied_cell(ix, iy) {
                    continue;
                }
                // Closest point of the cell rectangle to p.
                let cx0 = self.origin.x + ix as f64 * self.resolution;
                let cy0 = self.origin.y + iy as f64 * self.resolution;
                let qx = p.x.clamp(cx0, cx0 + self.resolution);
                let qy = p.y.clamp(cy0, cy0 + self.resolution);
                let dx = p.x - qx;
                let dy = p.y - qy;
                if dx * dx + dy * dy <= r2 {
                    return false;
                }
            }
        }
        true
    }

    /// Legality of a straight segment, sampled at half the grid resolution
    /// (endpoints included).
    pub fn segment_is_legal(&self, fp: &RobotFootprint, a: Position, b: Position) -> bool {
        let len = a.distance_to(b);
        let steps = (len / (self.resolution * 0.5)).ceil() as usize;
        if steps == 0 {
            return self.is_legal(fp, a);
        }
        (0..=steps).all(|k| self.is_legal(fp, a.lerp(b, k as f64 / steps as f64)))
    }

    /// Scan the segment from `from` toward `toward` at distances
    /// `start_offset`, `start_offset + increment`, ... up to the segment
    /// length (clamped, endpoint included) and return the first legal point.
    pub fn first_valid_on_segment(
        &self,
        fp: &RobotFootprint,
        from: Position,
        toward: Position,
        start_offset: f64,
        increment: f64,
    ) -> Option<Position> {
        assert!(start_offset >= 0.0, "start_offset must be non-negative");
        assert!(increment > 0.0, "increment must be positive");
        let total = from.distance_to(toward);
        let mut d = start_offset.min(total);
        loop {
            let p = from.toward(toward, d);
            if self.is_legal(fp, p) {
                return Some(p);
            }
            if d >= total {
                return None;
            }
            d = (d + increment).min(total);
        }
    }

    /// Shortest path between two legal positions: 8-connected A* over cell
    /// centers with per-edge collision checks, then greedy smoothing that
    /// drops waypoints whose bridging segment is fully legal. Returns a
    /// polyline `from ..= to`; a single element when `from == to`.
    pub fn plan_path(
        &self,
        fp: &RobotFootprint,
        from: Position,
        to: Position,
    ) -> Result<Vec<Position>, PlanError> {
        assert!(self.is_legal(fp, from), "plan_path: start position is not legal");
        assert!(self.is_legal(fp, to), "plan_path: goal position is not legal");
        if from.x == to.x && from.y == to.y {
            return Ok(vec![from]);
        }
        if self.segment_is_legal(fp, from, to) {
            return Ok(vec![from, to]);
        }
        let raw = self.astar(fp, from, to)?;
        Ok(self.smooth(fp, &raw))
    }

    fn astar(
        &self,
        fp: &RobotFootprint,
        from: Position,
        to: Position,
    ) -> Result<Vec<Position>, PlanError> {
        let w = self.width;
        let h = self.height;
        let n = w * h;
        let goal_node = n; // virtual goal stitched to cells around `to`

        // 0 = unknown, 1 = legal, 2 = illegal. Node legality is footprint
        // legality of the cell center.
        let mut node_state = vec![0u8; n];
        let legal = |this: &Self, idx: usize, state: &mut Vec<u8>| -> bool {
            if state[idx] == 0 {
                let c = this.cell_center(idx % w, idx / w);
                state[idx] = if this.is_legal(fp, c) { 1 } else { 2 };
            }
            state[idx] == 1
        };

        let mut best_g = vec![f64::INFINITY; n + 1];
        let mut parent = vec![usize::MAX; n + 1];
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();

        let (sx, sy) = self.cell_index(from).expect("legal position is inside the grid");
        let (gx, gy) = self.cell_index(to).expect("legal position is inside the grid");

        // Seed with the cells around the start whose centers we can reach
        // directly; `from` itself is usually one of those centers.
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let ix = sx as i64 + dx;
                let iy = sy as i64 + dy;
                if ix < 0 || iy < 0 || ix >= w as i64 || iy >= h as i64 {
                    continue;
                }
                let idx = iy as usize * w + ix as usize;
                if !legal(self, idx, &mut node_state) {
                    continue;
                }
                let c = self.cell_center(ix as usize, iy as usize);
                if !self.segment_is_legal(fp, from, c) {
                    continue;
                }
                let g = from.distance_to(c);
                if g < best_g[idx] {
                    best_g[idx] = g;
                    heap.push(HeapEntry { f: g + c.distance_to(to), g, idx });
                }
            }
        }

        while let Some(HeapEntry { g, idx, .. }) = heap.pop() {
            if g > best_g[idx] {
                continue; // stale entry
            }
            if idx == goal_node {
                let mut cells = Vec::new();
                let mut cur = parent[goal_node];
                while cur != usize::MAX {
                    cells.push(self.cell_center(cur % w, cur / w));
                    cur = parent[cur];
                }
                cells.reverse();
                let mut path = Vec::with_capacity(cells.len() + 2);
                path.push(from);
                path.extend(cells);
                path.push(to);
                return Ok(path);
            }
            let ix = (idx % w) as i64;
            let iy = (idx / w) as i64;
            let here = self.cell_center(ix as usize, iy as usize);

            // Stitch to the goal position from the cells around its cell.
            if (ix - gx as i64).abs() <= 1
                && (iy - gy as i64).abs() <= 1
                && self.segment_is_legal(fp, here, to)
            {
                let ng = g + here.distance_to(to);
                if ng < best_g[goal_node] {
                    best_g[goal_node] = ng;
                    parent[goal_node] = idx;
                    heap.push(HeapEntry { f: ng, g: ng, idx: goal_node });
                }
            }

            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = ix + dx;
                    let ny = iy + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if !legal(self, nidx, &mut node_state) {
                        continue;
                    }
                    let npos = self.cell_center(nx as usize, ny as usize);
                    if !self.segment_is_legal(fp, here, npos) {
                        continue;
                    }
                    let ng = g + here.distance_to(npos);
                    if ng < best_g[nidx] {
                        best_g[nidx] = ng;
                        parent[nidx] = idx;
                        heap.push(HeapEntry { f: ng + npos.distance_to(to), g: ng, idx: nidx });
                    }
                }
            }
        }
        Err(PlanError::NoPath)
    }

    /// Greedy farthest-reach smoothing: from each kept waypoint, jump to the
    /// farthest later waypoint whose direct segment is fully legal.
    fn smooth(&self, fp: &RobotFootprint, pts: &[Position]) -> Vec<Position> {
        let mut out = vec![pts[0]];
        let mut i = 0;
        while i + 1 < pts.len() {
            let mut k = pts.len() - 1;
            while k > i + 1 && !self.segment_is_legal(fp, pts[i], pts[k]) {
                k -= 1;
            }
            out.push(pts[k]);
            i = k;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    f: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // BinaryHeap is a max-heap; invert so the smallest f pops first. The
    // (g, idx) tie-break keeps expansion order deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Footprint-legal lattice points at a fixed spacing over the map extent.
/// Built once per episode and shared by the greedy grid search, the novelty
/// sampler, and field exports.
#[derive(Debug, Clone)]
pub struct LegalLattice {
    spacing: f64,
    points: Vec<Position>,
}

impl LegalLattice {
    pub fn build(grid: &OccupancyGrid, fp: &RobotFootprint, spacing: f64) -> Self {
        assert!(spacing > 0.0, "lattice spacing must be positive");
        let nx = ((grid.max_x() - grid.min_x()) / spacing).round() as usize;
        let ny = ((grid.max_y() - grid.min_y()) / spacing).round() as usize;
        let mut points = Vec::new();
        for j in 0..ny.max(1) {
            for i in 0..nx.max(1) {
                let p = Position::new(
                    grid.min_x() + (i as f64 + 0.5) * spacing,
                    grid.min_y() + (j as f64 + 0.5) * spacing,
                );
                if grid.is_legal(fp, p) {
                    points.push(p);
                }
            }
        }
        Self { spacing, points }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[Position] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
