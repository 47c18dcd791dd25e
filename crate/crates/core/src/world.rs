//! Static world: procedural room layout, tile semantics, line-of-sight, and
//! the ASCII minimap legend.
//!
//! Coordinates are `(x, y)` with the origin at the top-left corner, `x`
//! growing to the right and `y` growing downwards. Rooms share single-cell
//! walls, so a layout of `cols x rows` rooms with stride `room_size` is
//! `cols * room_size + 1` cells wide.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Glyph used for cells outside the field of view.
pub const UNKNOWN_GLYPH: char = '?';

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid map config: {0}")]
    InvalidConfig(String),
    #[error("infeasible layout: {0}")]
    Infeasible(String),
    #[error("malformed map snapshot: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, (dx, dy): (i32, i32)) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn chebyshev(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    pub fn neighbors(self) -> [Cell; 4] {
        Direction::ALL.map(|d| self.offset(d.delta()))
    }
}

impl From<(i32, i32)> for Cell {
    fn from((x, y): (i32, i32)) -> Self {
        Self::new(x, y)
    }
}

impl From<Cell> for (i32, i32) {
    fn from(c: Cell) -> Self {
        (c.x, c.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Facing direction, encoded on the wire as 100..=103.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Direction {
    Right = 100,
    Down = 101,
    Left = 102,
    Up = 103,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Down, Direction::Left, Direction::Up];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Right => (1, 0),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Up => (0, -1),
        }
    }

    /// Clockwise on screen (y grows downwards).
    pub fn turn_right(self) -> Self {
        match self {
            Direction::Right => Direction::Down,
            Direction::Down => Direction::Left,
            Direction::Left => Direction::Up,
            Direction::Up => Direction::Right,
        }
    }

    pub fn turn_left(self) -> Self {
        self.turn_right().turn_right().turn_right()
    }

    pub fn reverse(self) -> Self {
        self.turn_right().turn_right()
    }

    pub fn from_delta(dx: i32, dy: i32) -> Option<Self> {
        Direction::ALL.into_iter().find(|d| d.delta() == (dx, dy))
    }
}

impl TryFrom<u16> for Direction {
    type Error = String;

    fn try_from(code: u16) -> Result<Self, Self::Error> {
        match code {
            100 => Ok(Direction::Right),
            101 => Ok(Direction::Down),
            102 => Ok(Direction::Left),
            103 => Ok(Direction::Up),
            other => Err(format!("invalid direction code {other}")),
        }
    }
}

impl From<Direction> for u16 {
    fn from(d: Direction) -> u16 {
        d.code()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub facing: Direction,
}

impl Pose {
    pub const fn new(cell: Cell, facing: Direction) -> Self {
        Self { cell, facing }
    }

    pub fn front(self) -> Cell {
        self.cell.offset(self.facing.delta())
    }
}

/// Tile kinds of the minimap legend. `Corpse` and `Player` are overlays and
/// never appear in the static layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileKind {
    Wall,
    Floor,
    Task,
    Door,
    Corpse,
    Button,
    Player,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Common,
    Short,
    Long,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Common, TaskKind::Short, TaskKind::Long];

    pub fn required_toggles(self) -> u32 {
        match self {
            TaskKind::Common => 3,
            TaskKind::Short => 8,
            TaskKind::Long => 13,
        }
    }

    /// Completion reward, also the default metric weight of the kind.
    pub fn completion_reward(self) -> f64 {
        match self {
            TaskKind::Common => 1.0,
            TaskKind::Short => 2.0,
            TaskKind::Long => 3.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Common => "common",
            TaskKind::Short => "short",
            TaskKind::Long => "long",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStation {
    pub id: String,
    pub position: Cell,
    pub kind: TaskKind,
    pub required_toggles: u32,
    pub progress: u32,
    pub complete: bool,
    pub weight: f64,
}

impl TaskStation {
    pub fn new(id: impl Into<String>, position: Cell, kind: TaskKind) -> Self {
        Self {
            id: id.into(),
            position,
            kind,
            required_toggles: kind.required_toggles(),
            progress: 0,
            complete: false,
            weight: kind.completion_reward(),
        }
    }

    /// Adds one toggle. Returns true when this toggle completed the station.
    pub fn toggle(&mut self) -> bool {
        if self.complete {
            return false;
        }
        self.progress += 1;
        self.complete = self.progress >= self.required_toggles;
        self.complete
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoorState {
    pub position: Cell,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpse {
    pub position: Cell,
    pub victim: String,
    /// Set once a meeting has been held after the kill.
    #[serde(default)]
    pub reported: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub room_rows: u32,
    pub room_cols: u32,
    pub room_size: u32,
    pub common_tasks: u32,
    pub short_tasks: u32,
    pub long_tasks: u32,
    pub doors_open: bool,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            room_rows: 2,
            room_cols: 2,
            room_size: 10,
            common_tasks: 5,
            short_tasks: 5,
            long_tasks: 5,
            doors_open: false,
        }
    }
}

impl MapConfig {
    pub fn station_count(&self) -> u32 {
        self.common_tasks + self.short_tasks + self.long_tasks
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.room_rows == 0 || self.room_cols == 0 {
            return Err(WorldError::InvalidConfig("room_rows and room_cols must be >= 1".into()));
        }
        if self.room_size < 5 {
            return Err(WorldError::InvalidConfig(format!(
                "room_size must be >= 5, got {}",
                self.room_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: i32,
    pub height: i32,
    pub room_rows: u32,
    pub room_cols: u32,
    pub room_size: u32,
    tiles: Vec<TileKind>,
    pub doors: Vec<DoorState>,
    pub task_stations: Vec<TaskStation>,
    pub corpses: Vec<Corpse>,
    pub button: Cell,
}

impl GridMap {
    /// Bare walled layout: outer border, shared room walls, and one closed
    /// door at the midpoint of every shared wall segment.
    pub fn layout(room_rows: u32, room_cols: u32, room_size: u32) -> Self {
        let stride = room_size as i32;
        let width = room_cols as i32 * stride + 1;
        let height = room_rows as i32 * stride + 1;
        let mut tiles = vec![TileKind::Floor; (width * height) as usize];
        for y in 0..height {
            for x in 0..width {
                if x % stride == 0 || y % stride == 0 {
                    tiles[(y * width + x) as usize] = TileKind::Wall;
                }
            }
        }
        let mut doors = Vec::new();
        let half = stride / 2;
        for r in 0..room_rows as i32 {
            for c in 0..room_cols as i32 {
                if c + 1 < room_cols as i32 {
                    doors.push(Cell::new((c + 1) * stride, r * stride + half));
                }
                if r + 1 < room_rows as i32 {
                    doors.push(Cell::new(c * stride + half, (r + 1) * stride));
                }
            }
        }
        let mut map = Self {
            width,
            height,
            room_rows,
            room_cols,
            room_size,
            tiles,
            doors: Vec::new(),
            task_stations: Vec::new(),
            corpses: Vec::new(),
            button: Cell::new(1, 1),
        };
        doors.sort_by_key(|c| (c.y, c.x));
        for pos in doors {
            map.set_tile(pos, TileKind::Door);
            map.doors.push(DoorState { position: pos, open: false });
        }
        map
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn index(&self, c: Cell) -> usize {
        (c.y * self.width + c.x) as usize
    }

    /// Static-layer tile; out-of-bounds reads as wall.
    pub fn tile(&self, c: Cell) -> TileKind {
        if self.in_bounds(c) {
            self.tiles[self.index(c)]
        } else {
            TileKind::Wall
        }
    }

    fn set_tile(&mut self, c: Cell, kind: TileKind) {
        let i = self.index(c);
        self.tiles[i] = kind;
    }

    pub fn door_index(&self, c: Cell) -> Option<usize> {
        self.doors.iter().position(|d| d.position == c)
    }

    pub fn station_index(&self, c: Cell) -> Option<usize> {
        self.task_stations.iter().position(|s| s.position == c)
    }

    pub fn station(&self, id: &str) -> Option<&TaskStation> {
        self.task_stations.iter().find(|s| s.id == id)
    }

    pub fn station_mut(&mut self, id: &str) -> Option<&mut TaskStation> {
        self.task_stations.iter_mut().find(|s| s.id == id)
    }

    pub fn corpse_at(&self, c: Cell) -> Option<&Corpse> {
        self.corpses.iter().find(|k| k.position == c)
    }

    pub fn is_door_open(&self, c: Cell) -> Option<bool> {
        self.door_index(c).map(|i| self.doors[i].open)
    }

    pub fn set_door(&mut self, c: Cell, open: bool) -> bool {
        match self.door_index(c) {
            Some(i) => {
                self.doors[i].open = open;
                true
            }
            None => false,
        }
    }

    /// Cells that stop line of sight: walls and closed doors.
    pub fn is_opaque(&self, c: Cell) -> bool {
        match self.tile(c) {
            TileKind::Wall => true,
            TileKind::Door => !self.is_door_open(c).unwrap_or(false),
            _ => false,
        }
    }

    /// Blocked for walking, ignoring players: `#`, `T`, `D`, `C`, `B`.
    pub fn is_blocked(&self, c: Cell) -> bool {
        match self.tile(c) {
            TileKind::Floor => self.corpse_at(c).is_some(),
            TileKind::Door => !self.is_door_open(c).unwrap_or(false) || self.corpse_at(c).is_some(),
            _ => true,
        }
    }

    /// Legend glyph of a cell without players.
    pub fn glyph(&self, c: Cell) -> char {
        if self.corpse_at(c).is_some() {
            return 'C';
        }
        match self.tile(c) {
            TileKind::Wall => '#',
            TileKind::Floor => '.',
            TileKind::Task => 'T',
            TileKind::Button => 'B',
            TileKind::Door => {
                if self.is_door_open(c).unwrap_or(false) {
                    'O'
                } else {
                    'D'
                }
            }
            TileKind::Corpse => 'C',
            TileKind::Player => 'P',
        }
    }

    /// Room `(row, col)` containing a cell; shared walls belong to the room
    /// below / to the right, the outer border to the nearest room.
    pub fn room_of(&self, c: Cell) -> (u32, u32) {
        let stride = self.room_size as i32;
        let row = (c.y.max(0) / stride).min(self.room_rows as i32 - 1);
        let col = (c.x.max(0) / stride).min(self.room_cols as i32 - 1);
        (row as u32, col as u32)
    }

    /// Every cell of the map in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }

    /// Walkable floor cells with every door treated as open and without
    /// corpses; used for connectivity checks.
    fn walkable_with_open_doors(&self, c: Cell) -> bool {
        matches!(self.tile(c), TileKind::Floor | TileKind::Door)
    }

    /// True when every walkable cell is reachable from every other with all
    /// doors open and every station/button has a walkable neighbour.
    pub fn is_connected(&self) -> bool {
        let walkable: Vec<Cell> = self.cells().filter(|&c| self.walkable_with_open_doors(c)).collect();
        let Some(&start) = walkable.first() else {
            return false;
        };
        let mut seen = vec![false; self.tiles.len()];
        seen[self.index(start)] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors() {
                if self.in_bounds(n) && !seen[self.index(n)] && self.walkable_with_open_doors(n) {
                    seen[self.index(n)] = true;
                    count += 1;
                    queue.push_back(n);
                }
            }
        }
        if count != walkable.len() {
            return false;
        }
        let objects = self.task_stations.iter().map(|s| s.position).chain(std::iter::once(self.button));
        for obj in objects {
            if !obj.neighbors().iter().any(|&n| self.in_bounds(n) && self.walkable_with_open_doors(n)) {
                return false;
            }
        }
        true
    }

    /// Serializable form of the static layer plus the mutable door, station,
    /// and corpse state.
    pub fn snapshot(&self) -> MapSnapshot {
        let rows = (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| {
                        let c = Cell::new(x, y);
                        match self.tile(c) {
                            TileKind::Wall => '#',
                            TileKind::Task => 'T',
                            TileKind::Button => 'B',
                            TileKind::Door => {
                                if self.is_door_open(c).unwrap_or(false) {
                                    'O'
                                } else {
                                    'D'
                                }
                            }
                            _ => '.',
                        }
                    })
                    .collect()
            })
            .collect();
        MapSnapshot {
            room_rows: self.room_rows,
            room_cols: self.room_cols,
            room_size: self.room_size,
            rows,
            stations: self.task_stations.clone(),
            corpses: self.corpses.clone(),
        }
    }

    /// Builds a map from legend rows. `T` cells must match `stations`
    /// positions one-to-one; exactly one `B` is required.
    pub fn from_rows(
        rows: &[&str],
        room_rows: u32,
        room_cols: u32,
        room_size: u32,
        stations: Vec<TaskStation>,
    ) -> Result<Self, WorldError> {
        let height = rows.len() as i32;
        let width = rows.first().map_or(0, |r| r.chars().count()) as i32;
        if height == 0 || width == 0 {
            return Err(WorldError::Malformed("empty map".into()));
        }
        let mut map = Self {
            width,
            height,
            room_rows,
            room_cols,
            room_size,
            tiles: vec![TileKind::Wall; (width * height) as usize],
            doors: Vec::new(),
            task_stations: Vec::new(),
            corpses: Vec::new(),
            button: Cell::new(0, 0),
        };
        let mut buttons = 0;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() as i32 != width {
                return Err(WorldError::Malformed(format!("row {y} has a different width")));
            }
            for (x, ch) in row.chars().enumerate() {
                let c = Cell::new(x as i32, y as i32);
                let kind = match ch {
                    '#' => TileKind::Wall,
                    '.' => TileKind::Floor,
                    'T' => TileKind::Task,
                    'B' => {
                        buttons += 1;
                        map.button = c;
                        TileKind::Button
                    }
                    'D' | 'O' => {
                        map.doors.push(DoorState { position: c, open: ch == 'O' });
                        TileKind::Door
                    }
                    other => return Err(WorldError::Malformed(format!("unknown glyph {other:?} at {c}"))),
                };
                map.set_tile(c, kind);
            }
        }
        if buttons != 1 {
            return Err(WorldError::Malformed(format!("expected exactly one button, found {buttons}")));
        }
        let task_cells = map.cells().filter(|&c| map.tile(c) == TileKind::Task).count();
        if task_cells != stations.len() {
            return Err(WorldError::Malformed(format!(
                "{task_cells} task glyphs but {} stations",
                stations.len()
            )));
        }
        for s in &stations {
            if map.tile(s.position) != TileKind::Task {
                return Err(WorldError::Malformed(format!("station {} not on a task glyph", s.id)));
            }
        }
        map.task_stations = stations;
        Ok(map)
    }
}

/// Map state as recorded in episode-log headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub room_rows: u32,
    pub room_cols: u32,
    pub room_size: u32,
    pub rows: Vec<String>,
    pub stations: Vec<TaskStation>,
    #[serde(default)]
    pub corpses: Vec<Corpse>,
}

impl MapSnapshot {
    pub fn to_map(&self) -> Result<GridMap, WorldError> {
        let rows: Vec<&str> = self.rows.iter().map(String::as_str).collect();
        let mut map = GridMap::from_rows(&rows, self.room_rows, self.room_cols, self.room_size, self.stations.clone())?;
        map.corpses = self.corpses.clone();
        Ok(map)
    }
}

/// Procedurally builds a map. Deterministic in `(config, seed)`.
pub fn generate_map(config: &MapConfig, seed: u64) -> Result<GridMap, WorldError> {
    config.validate()?;
    let base = GridMap::layout(config.room_rows, config.room_cols, config.room_size);

    // Interior cells that do not sit in front of a door.
    let candidates: Vec<Cell> = base
        .cells()
        .filter(|&c| base.tile(c) == TileKind::Floor)
        .filter(|&c| base.doors.iter().all(|d| d.position.manhattan(c) > 1))
        .collect();
    let objects = config.station_count() as usize + 1;
    // Pairwise Manhattan distance >= 2 caps density at one object per two cells.
    if objects * 2 > candidates.len() {
        return Err(WorldError::Infeasible(format!(
            "{objects} objects do not fit on {} candidate floor cells",
            candidates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ATTEMPTS: usize = 200;
    for _ in 0..ATTEMPTS {
        if let Some(map) = try_place(&base, config, &candidates, objects, &mut rng) {
            return Ok(map);
        }
    }
    Err(WorldError::Infeasible(format!(
        "could not place {objects} objects with a connected layout after {ATTEMPTS} attempts"
    )))
}

fn try_place(
    base: &GridMap,
    config: &MapConfig,
    candidates: &[Cell],
    objects: usize,
    rng: &mut ChaCha8Rng,
) -> Option<GridMap> {
    let mut pool = candidates.to_vec();
    pool.shuffle(rng);
    let mut placed: Vec<Cell> = Vec::with_capacity(objects);
    for &c in &pool {
        if placed.len() == objects {
            break;
        }
        if placed.iter().all(|p| p.manhattan(c) >= 2) {
            placed.push(c);
        }
    }
    if placed.len() < objects {
        return None;
    }
    let button = placed.pop().expect("objects >= 1");
    let mut map = base.clone();
    map.button = button;
    map.set_tile(button, TileKind::Button);
    let mut slots = placed.into_iter();
    for kind in TaskKind::ALL {
        let count = match kind {
            TaskKind::Common => config.common_tasks,
            TaskKind::Short => config.short_tasks,
            TaskKind::Long => config.long_tasks,
        };
        for i in 1..=count {
            let pos = slots.next()?;
            map.set_tile(pos, TileKind::Task);
            map.task_stations.push(TaskStation::new(format!("{}_task_{i}", kind.label()), pos, kind));
        }
    }
    if config.doors_open {
        for d in &mut map.doors {
            d.open = true;
        }
    }
    map.is_connected().then_some(map)
}

/// Cells visible from `pose` within Chebyshev `radius`, excluding cells
/// whose Bresenham line from the viewer passes through a wall or closed
/// door. Opaque cells themselves are visible. Always contains the viewer.
pub fn visible_cells(map: &GridMap, pose: Pose, radius: u32) -> BTreeSet<Cell> {
    let origin = pose.cell;
    let r = radius as i32;
    let mut out = BTreeSet::new();
    out.insert(origin);
    for dy in -r..=r {
        for dx in -r..=r {
            let target = origin.offset((dx, dy));
            if target == origin || !map.in_bounds(target) {
                continue;
            }
            let line = bresenham(origin, target);
            let blocked = line[1..line.len() - 1].iter().any(|&c| map.is_opaque(c));
            if !blocked {
                out.insert(target);
            }
        }
    }
    out
}

/// Integer Bresenham line including both endpoints.
pub fn bresenham(from: Cell, to: Cell) -> Vec<Cell> {
    let (mut x, mut y) = (from.x, from.y);
    let dx = (to.x - from.x).abs();
    let dy = -(to.y - from.y).abs();
    let sx = if from.x < to.x { 1 } else { -1 };
    let sy = if from.y < to.y { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push(Cell::new(x, y));
        if x == to.x && y == to.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// ASCII patch of side `2r+1` centred on `center`. Cells outside the field
/// of view render as [`UNKNOWN_GLYPH`]; visible `players` render as `P`.
pub fn render_patch(map: &GridMap, players: &[Cell], center: Cell, radius: u32) -> Vec<String> {
    let visible = visible_cells(map, Pose::new(center, Direction::Right), radius);
    let r = radius as i32;
    (-r..=r)
        .map(|dy| {
            (-r..=r)
                .map(|dx| {
                    let c = center.offset((dx, dy));
                    if !visible.contains(&c) {
                        UNKNOWN_GLYPH
                    } else if players.contains(&c) {
                        'P'
                    } else {
                        map.glyph(c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Room-relative position string, e.g. `R01(12,8)` for room row 0, col 1.
pub fn format_position(map: &GridMap, cell: Cell) -> String {
    let (row, col) = map.room_of(cell);
    format!("R{row}{col}({},{})", cell.x, cell.y)
}
