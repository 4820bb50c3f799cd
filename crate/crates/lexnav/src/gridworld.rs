//! Discrete apartment environment: ASCII map parsing, BFS distances, and the
//! distance-improvement reward with slack penalty and terminal bonus.
//!
//! Coordinates are `(x, y)` with `(0, 0)` at the top-left map corner; `North`
//! decreases `y`. An episode succeeds when the agent enters a passable
//! 4-neighbor of the goal object (its success region) and is cut off after
//! [`STEP_CAP`] steps.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Hard per-episode step limit.
pub const STEP_CAP: u32 = 500;

/// Per-step slack penalty forcing the agent to move.
pub const SLACK_PENALTY: f64 = 0.01;

/// Terminal bonus for reaching the goal's success region.
pub const SUCCESS_BONUS: f64 = 10.0;

/// Object legend for map files: glyph → object word.
pub const OBJECT_LEGEND: [(char, &str); 10] = [
    ('S', "shower"),
    ('B', "bathtub"),
    ('T', "toilet"),
    ('O', "stove"),
    ('A', "toaster"),
    ('L', "table"),
    ('M', "microwave"),
    ('D', "bed"),
    ('W', "wardrobe"),
    ('N', "nightstand"),
];

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map is empty")]
    EmptyMap,
    #[error("row {row} has width {got}, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("unknown glyph {glyph:?} at ({x}, {y})")]
    UnknownGlyph { glyph: char, x: usize, y: usize },
    #[error("object {word:?} appears more than once")]
    DuplicateObject { word: String },
    #[error("border cell ({x}, {y}) is not a wall")]
    OpenBorder { x: usize, y: usize },
    #[error("map has no spawn cell")]
    NoSpawnCell,
    #[error("object {word:?} has no passable neighbor")]
    NoSuccessRegion { word: String },
    #[error("object {word:?} is unreachable from spawn cell ({x}, {y})")]
    UnreachableObject { word: String, x: usize, y: usize },
    #[error("unknown goal word {0:?}")]
    UnknownGoal(String),
    #[error("cell ({x}, {y}) is not passable")]
    NotPassable { x: usize, y: usize },
    #[error("no path from ({x}, {y}) to {word:?}")]
    NoPath { word: String, x: usize, y: usize },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Grid coordinate, `x` column and `y` row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The four absolute moves. `North` is toward smaller `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    North,
    East,
    South,
    West,
}

pub const ACTIONS: [Action; 4] = [Action::North, Action::East, Action::South, Action::West];

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::North => 0,
            Action::East => 1,
            Action::South => 2,
            Action::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        ACTIONS.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (0, -1),
            Action::East => (1, 0),
            Action::South => (0, 1),
            Action::West => (-1, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::North => "north",
            Action::East => "east",
            Action::South => "south",
            Action::West => "west",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum CellKind {
    Wall,
    Floor { spawn: bool },
    Object(String),
}

/// Validated static layout: walls, floor, spawn cells, and named objects.
#[derive(Debug, Clone)]
pub struct ApartmentMap {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    spawn_cells: Vec<Pos>,
    objects: BTreeMap<String, Pos>,
    success: BTreeMap<String, Vec<Pos>>,
}

/// Dynamic episode state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    pub position: Pos,
    pub goal: String,
    pub steps_taken: u32,
}

/// Observation modes. `PositionOneHot` is one-hot(x) ⊕ one-hot(y).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationMode {
    PositionOneHot,
}

pub type FeatureVector = Vec<f64>;

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: FeatureVector,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    /// BFS distance to the goal before and after the move.
    pub source_distances: (u32, u32),
}

/// Per-goal shortest-path distances from every passable cell to the goal's
/// success region, computed once by multi-source BFS.
#[derive(Debug, Clone)]
pub struct DistanceField {
    goal: String,
    width: usize,
    distances: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn goal(&self) -> &str {
        &self.goal
    }

    pub fn at(&self, pos: Pos) -> Option<u32> {
        self.distances[pos.y * self.width + pos.x]
    }
}

impl ApartmentMap {
    /// Parses and validates an ASCII map.
    ///
    /// Legend: `#` wall, `.` floor, `>` corridor spawn floor, uppercase
    /// letters per [`OBJECT_LEGEND`]. The border must be wall, every object
    /// must occur once with a non-empty success region, and every spawn cell
    /// must reach every object's success region.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(MapError::EmptyMap);
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let legend: BTreeMap<char, &str> = OBJECT_LEGEND.iter().copied().collect();

        let mut cells = Vec::with_capacity(width * height);
        let mut spawn_cells = Vec::new();
        let mut objects = BTreeMap::new();
        for (y, row) in rows.iter().enumerate() {
            let glyphs: Vec<char> = row.chars().collect();
            if glyphs.len() != width {
                return Err(MapError::RaggedRow {
                    row: y,
                    got: glyphs.len(),
                    expected: width,
                });
            }
            for (x, glyph) in glyphs.into_iter().enumerate() {
                let cell = match glyph {
                    '#' => CellKind::Wall,
                    '.' => CellKind::Floor { spawn: false },
                    '>' => {
                        spawn_cells.push(Pos::new(x, y));
                        CellKind::Floor { spawn: true }
                    }
                    g => {
                        let word =
                            *legend
                                .get(&g)
                                .ok_or(MapError::UnknownGlyph { glyph: g, x, y })?;
                        if objects.insert(word.to_string(), Pos::new(x, y)).is_some() {
                            return Err(MapError::DuplicateObject { word: word.into() });
                        }
                        CellKind::Object(word.to_string())
                    }
                };
                cells.push(cell);
            }
        }

        let map = ApartmentMap {
            width,
            height,
            cells,
            spawn_cells,
            objects,
            success: BTreeMap::new(),
        };
        map.validate()
    }

    fn validate(mut self) -> Result<Self, MapError> {
        for y in 0..self.height {
            for x in 0..self.width {
                let border = x == 0 || y == 0 || x == self.width - 1 || y == self.height - 1;
                if border && self.cells[y * self.width + x] != CellKind::Wall {
                    return Err(MapError::OpenBorder { x, y });
                }
            }
        }
        if self.spawn_cells.is_empty() {
            return Err(MapError::NoSpawnCell);
        }

        let mut success = BTreeMap::new();
        for (word, &pos) in &self.objects {
            let cells = self.passable_neighbors(pos);
            if cells.is_empty() {
                return Err(MapError::NoSuccessRegion { word: word.clone() });
            }
            success.insert(word.clone(), cells);
        }
        self.success = success;

        // every spawn cell must reach every object's success region
        for word in self.objects.keys() {
            let field = self.distance_field_raw(word);
            for &spawn in &self.spawn_cells {
                if field[spawn.y * self.width + spawn.x].is_none() {
                    return Err(MapError::UnreachableObject {
                        word: word.clone(),
                        x: spawn.x,
                        y: spawn.y,
                    });
                }
            }
        }
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spawn_cells(&self) -> &[Pos] {
        &self.spawn_cells
    }

    /// Object words in sorted order; doubles as the one-hot goal vocabulary.
    pub fn object_words(&self) -> Vec<String> {
        self.objects.keys().cloned().collect()
    }

    pub fn object_position(&self, word: &str) -> Result<Pos, MapError> {
        self.objects
            .get(word)
            .copied()
            .ok_or_else(|| MapError::UnknownGoal(word.to_string()))
    }

    pub fn is_passable(&self, pos: Pos) -> bool {
        pos.x < self.width
            && pos.y < self.height
            && matches!(
                self.cells[pos.y * self.width + pos.x],
                CellKind::Floor { .. }
            )
    }

    fn passable_neighbors(&self, pos: Pos) -> Vec<Pos> {
        let mut out = Vec::new();
        for action in ACTIONS {
            let (dx, dy) = action.delta();
            let nx = pos.x as isize + dx;
            let ny = pos.y as isize + dy;
            if nx >= 0 && ny >= 0 {
                let n = Pos::new(nx as usize, ny as usize);
                if self.is_passable(n) {
                    out.push(n);
                }
            }
        }
        out.sort();
        out
    }

    /// The passable 4-neighbors of the goal object's cell.
    pub fn success_cells(&self, goal: &str) -> Result<&[Pos], MapError> {
        self.success
            .get(goal)
            .map(Vec::as_slice)
            .ok_or_else(|| MapError::UnknownGoal(goal.to_string()))
    }

    fn distance_field_raw(&self, goal: &str) -> Vec<Option<u32>> {
        let mut dist: Vec<Option<u32>> = vec![None; self.width * self.height];
        let mut queue = VecDeque::new();
        for &cell in self.success.get(goal).map(Vec::as_slice).unwrap_or(&[]) {
            dist[cell.y * self.width + cell.x] = Some(0);
            queue.push_back(cell);
        }
        while let Some(pos) = queue.pop_front() {
            let d = dist[pos.y * self.width + pos.x].expect("queued cells have distances");
            for n in self.passable_neighbors(pos) {
                let slot = &mut dist[n.y * self.width + n.x];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Multi-source BFS distance field for one goal.
    pub fn distance_field(&self, goal: &str) -> Result<DistanceField, MapError> {
        if !self.objects.contains_key(goal) {
            return Err(MapError::UnknownGoal(goal.to_string()));
        }
        Ok(DistanceField {
            goal: goal.to_string(),
            width: self.width,
            distances: self.distance_field_raw(goal),
        })
    }

    /// Shortest 4-connected path length from `from` to the nearest success
    /// cell of `goal`; 0 when `from` is itself a success cell.
    ///
    /// Single-source BFS, independent of [`ApartmentMap::distance_field`].
    pub fn bfs_distance(&self, from: Pos, goal: &str) -> Result<u32, MapError> {
        if !self.is_passable(from) {
            return Err(MapError::NotPassable {
                x: from.x,
                y: from.y,
            });
        }
        let success = self.success_cells(goal)?;
        if success.contains(&from) {
            return Ok(0);
        }
        let mut seen = vec![false; self.width * self.height];
        seen[from.y * self.width + from.x] = true;
        let mut queue = VecDeque::new();
        queue.push_back((from, 0u32));
        while let Some((pos, d)) = queue.pop_front() {
            for n in self.passable_neighbors(pos) {
                if seen[n.y * self.width + n.x] {
                    continue;
                }
                if success.contains(&n) {
                    return Ok(d + 1);
                }
                seen[n.y * self.width + n.x] = true;
                queue.push_back((n, d + 1));
            }
        }
        Err(MapError::NoPath {
            word: goal.to_string(),
            x: from.x,
            y: from.y,
        })
    }

    /// Observation vector for a position: one-hot(x, width) ⊕ one-hot(y, height).
    pub fn encode_observation(&self, pos: Pos, mode: ObservationMode) -> FeatureVector {
        match mode {
            ObservationMode::PositionOneHot => {
                let mut v = vec![0.0; self.width + self.height];
                v[pos.x] = 1.0;
                v[self.width + pos.y] = 1.0;
                v
            }
        }
    }

    /// Inverts [`ApartmentMap::encode_observation`] for `PositionOneHot`.
    pub fn decode_observation(&self, obs: &[f64]) -> Option<Pos> {
        if obs.len() != self.width + self.height {
            return None;
        }
        let x = obs[..self.width].iter().position(|&v| v == 1.0)?;
        let y = obs[self.width..].iter().position(|&v| v == 1.0)?;
        Some(Pos::new(x, y))
    }

    pub fn observation_len(&self, mode: ObservationMode) -> usize {
        match mode {
            ObservationMode::PositionOneHot => self.width + self.height,
        }
    }
}

/// One episode: agent position, cached goal distances, and termination flags.
pub struct Episode<'m> {
    map: &'m ApartmentMap,
    field: &'m DistanceField,
    state: GridState,
    done: bool,
    success: bool,
    distance_scale: f64,
}

impl<'m> Episode<'m> {
    /// Spawns uniformly over the map's spawn cells.
    pub fn reset(
        map: &'m ApartmentMap,
        field: &'m DistanceField,
        rng: &mut impl Rng,
        distance_scale: f64,
    ) -> (Self, FeatureVector) {
        let spawn = map.spawn_cells()[rng.random_range(0..map.spawn_cells().len())];
        let episode = Episode {
            map,
            field,
            state: GridState {
                position: spawn,
                goal: field.goal().to_string(),
                steps_taken: 0,
            },
            done: false,
            success: false,
            distance_scale,
        };
        let obs = map.encode_observation(spawn, ObservationMode::PositionOneHot);
        (episode, obs)
    }

    /// Starts an episode at a fixed cell (evaluation from chosen spawns).
    pub fn reset_at(
        map: &'m ApartmentMap,
        field: &'m DistanceField,
        position: Pos,
        distance_scale: f64,
    ) -> Result<(Self, FeatureVector), MapError> {
        if !map.is_passable(position) || field.at(position).is_none() {
            return Err(MapError::NotPassable {
                x: position.x,
                y: position.y,
            });
        }
        let episode = Episode {
            map,
            field,
            state: GridState {
                position,
                goal: field.goal().to_string(),
                steps_taken: 0,
            },
            done: false,
            success: false,
            distance_scale,
        };
        let obs = map.encode_observation(position, ObservationMode::PositionOneHot);
        Ok((episode, obs))
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn succeeded(&self) -> bool {
        self.success
    }

    /// Applies one move. Bumping a wall or object leaves the position
    /// unchanged. Reward is `(d_before - d_after) * scale - 0.01`, plus the
    /// +10 bonus when the new position lies in the goal's success region.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let before = self.state.position;
        let d_before = self
            .field
            .at(before)
            .expect("episode positions are reachable");
        let (dx, dy) = action.delta();
        let nx = before.x as isize + dx;
        let ny = before.y as isize + dy;
        let candidate = if nx >= 0 && ny >= 0 {
            Pos::new(nx as usize, ny as usize)
        } else {
            before
        };
        let after = if self.map.is_passable(candidate) {
            candidate
        } else {
            before
        };
        let d_after = self.field.at(after).expect("passable cells are reachable");

        self.state.position = after;
        self.state.steps_taken += 1;

        let mut reward = (d_before as f64 - d_after as f64) * self.distance_scale - SLACK_PENALTY;
        let success = d_after == 0;
        if success {
            reward += SUCCESS_BONUS;
        }
        self.success = success;
        self.done = success || self.state.steps_taken >= STEP_CAP;

        Ok(StepOutcome {
            observation: self
                .map
                .encode_observation(after, ObservationMode::PositionOneHot),
            reward,
            done: self.done,
            success,
            source_distances: (d_before, d_after),
        })
    }
}

/// Echo of a validated map plus its objects, coordinates, and success-cell
/// counts.
pub fn render_map_summary(map: &ApartmentMap) -> String {
    let mut out = String::new();
    for y in 0..map.height {
        for x in 0..map.width {
            let glyph = match &map.cells[y * map.width + x] {
                CellKind::Wall => '#',
                CellKind::Floor { spawn: true } => '>',
                CellKind::Floor { spawn: false } => '.',
                CellKind::Object(word) => OBJECT_LEGEND
                    .iter()
                    .find(|(_, w)| w == word)
                    .map(|(g, _)| *g)
                    .unwrap_or('?'),
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "map {}x{}: {} objects, {} spawn cells\n",
        map.width(),
        map.height(),
        map.objects.len(),
        map.spawn_cells().len()
    ));
    for (word, &pos) in &map.objects {
        let n = map.success[word].len();
        out.push_str(&format!("  {word:<11} at {pos}  success cells: {n}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn default_map() -> ApartmentMap {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/apartment.map");
        ApartmentMap::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn default_map_counts_match_independent_script() {
        // Frozen from a standalone pass over the ASCII text.
        let map = default_map();
        assert_eq!((map.width(), map.height()), (25, 11));
        assert_eq!(map.object_words().len(), 10);
        assert_eq!(map.spawn_cells().len(), 69);
    }

    #[test]
    fn all_wall_map_has_no_spawn() {
        let err = ApartmentMap::parse("###\n###\n###\n").unwrap_err();
        assert!(matches!(err, MapError::NoSpawnCell));
    }

    #[test]
    fn enclosed_object_is_unreachable() {
        // shower's success region exists but is walled off from the spawn row
        let text = "#######\n#>...##\n#######\n##..S##\n#######\n";
        let err = ApartmentMap::parse(text).unwrap_err();
        assert!(matches!(err, MapError::UnreachableObject { .. }));
    }

    #[test]
    fn fully_walled_object_has_no_success_region() {
        let text = "######\n#>..##\n##.###\n###S##\n######\n";
        let err = ApartmentMap::parse(text).unwrap_err();
        assert!(
            matches!(err, MapError::NoSuccessRegion { .. })
                || matches!(err, MapError::UnreachableObject { .. })
        );
    }

    #[test]
    fn ragged_and_unknown_glyph_errors() {
        assert!(matches!(
            ApartmentMap::parse("####\n#>#\n####\n"),
            Err(MapError::RaggedRow { row: 1, .. })
        ));
        assert!(matches!(
            ApartmentMap::parse("####\n#>q#\n####\n"),
            Err(MapError::UnknownGlyph { glyph: 'q', .. })
        ));
    }

    #[test]
    fn open_border_rejected() {
        assert!(matches!(
            ApartmentMap::parse("####\n#>>.\n####\n"),
            Err(MapError::OpenBorder { .. })
        ));
    }

    #[test]
    fn shower_success_cells_read_off_the_ascii() {
        let map = default_map();
        assert_eq!(
            map.success_cells("shower").unwrap(),
            &[Pos::new(1, 2), Pos::new(2, 1)]
        );
    }

    #[test]
    fn one_open_side_gives_singleton_region() {
        let text = "#####\n#>.S#\n#####\n";
        let map = ApartmentMap::parse(text).unwrap();
        assert_eq!(map.success_cells("shower").unwrap(), &[Pos::new(2, 1)]);
    }

    #[test]
    fn unknown_goal_is_an_error() {
        let map = default_map();
        assert!(matches!(
            map.success_cells("sofa"),
            Err(MapError::UnknownGoal(_))
        ));
        assert!(matches!(
            map.bfs_distance(Pos::new(3, 7), "sofa"),
            Err(MapError::UnknownGoal(_))
        ));
    }

    #[test]
    fn bfs_distance_base_cases() {
        let map = default_map();
        // success cell itself
        assert_eq!(map.bfs_distance(Pos::new(2, 1), "shower").unwrap(), 0);
        // adjacent to a success cell
        assert_eq!(map.bfs_distance(Pos::new(3, 1), "shower").unwrap(), 1);
    }

    #[test]
    fn bfs_distance_matches_frozen_oracle_value() {
        // dijkstra((12,8) -> shower) computed by the independent oracle script
        let map = default_map();
        assert_eq!(map.bfs_distance(Pos::new(12, 8), "shower").unwrap(), 17);
    }

    #[test]
    fn bfs_distance_rejects_impassable_start() {
        let map = default_map();
        assert!(matches!(
            map.bfs_distance(Pos::new(0, 0), "shower"),
            Err(MapError::NotPassable { .. })
        ));
    }

    #[test]
    fn distance_field_agrees_with_bfs_distance_everywhere() {
        let map = default_map();
        for goal in map.object_words() {
            let field = map.distance_field(&goal).unwrap();
            for y in 0..map.height() {
                for x in 0..map.width() {
                    let pos = Pos::new(x, y);
                    if map.is_passable(pos) {
                        assert_eq!(
                            field.at(pos),
                            Some(map.bfs_distance(pos, &goal).unwrap()),
                            "{goal} at {pos}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn reset_with_single_spawn_is_deterministic() {
        let text = "#####\n#>.S#\n#####\n";
        let map = ApartmentMap::parse(text).unwrap();
        let field = map.distance_field("shower").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ep, _) = Episode::reset(&map, &field, &mut rng, 1.0);
        assert_eq!(ep.state().position, Pos::new(1, 1));
        assert_eq!(ep.state().steps_taken, 0);
    }

    #[test]
    fn same_seed_gives_identical_spawn_sequence() {
        let map = default_map();
        let field = map.distance_field("toilet").unwrap();
        let draw = |seed: u64| -> Vec<Pos> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| {
                    Episode::reset(&map, &field, &mut rng, 1.0)
                        .0
                        .state()
                        .position
                })
                .collect()
        };
        assert_eq!(draw(123), draw(123));
        assert_ne!(draw(123), draw(124));
    }

    #[test]
    fn spawn_distribution_is_uniform_within_3_sigma() {
        let map = default_map();
        let field = map.distance_field("toilet").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000usize;
        let k = map.spawn_cells().len();
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let (ep, _) = Episode::reset(&map, &field, &mut rng, 1.0);
            *counts.entry(ep.state().position).or_insert(0usize) += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let expected = n as f64 * p;
        for &spawn in map.spawn_cells() {
            let c = *counts.get(&spawn).unwrap_or(&0) as f64;
            assert!(
                (c - expected).abs() <= 3.0 * sigma,
                "spawn {spawn}: count {c}, expected {expected} ± {:.1}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn step_reward_closer_bump_and_terminal() {
        let text = "#####\n#>.S#\n#####\n";
        let map = ApartmentMap::parse(text).unwrap();
        let field = map.distance_field("shower").unwrap();

        // one cell closer, non-terminal: 1 - 0.01
        let (mut ep, _) = Episode::reset_at(&map, &field, Pos::new(1, 1), 1.0).unwrap();
        assert_eq!(field.at(Pos::new(1, 1)), Some(1));
        let out = ep.step(Action::East).unwrap();
        assert!((out.reward - 10.99).abs() < 1e-9); // lands in the region: 1 - 0.01 + 10
        assert!(out.done && out.success);
        assert_eq!(out.source_distances, (1, 0));

        // bump into a wall: distance unchanged, slack only
        let (mut ep, _) = Episode::reset_at(&map, &field, Pos::new(1, 1), 1.0).unwrap();
        let out = ep.step(Action::North).unwrap();
        assert!((out.reward - (-0.01)).abs() < 1e-9);
        assert_eq!(out.source_distances, (1, 1));
        assert!(!out.done);
    }

    #[test]
    fn moving_closer_without_terminal_pays_99_hundredths() {
        let map = default_map();
        let field = map.distance_field("shower").unwrap();
        // (3,5) is in the bathroom above the door; moving north approaches the shower
        let (mut ep, _) = Episode::reset_at(&map, &field, Pos::new(3, 5), 1.0).unwrap();
        let d0 = field.at(Pos::new(3, 5)).unwrap();
        let out = ep.step(Action::North).unwrap();
        assert_eq!(out.source_distances, (d0, d0 - 1));
        assert!((out.reward - 0.99).abs() < 1e-9);
        assert!(!out.done);
    }

    #[test]
    fn step_after_done_is_a_usage_error() {
        let text = "#####\n#>.S#\n#####\n";
        let map = ApartmentMap::parse(text).unwrap();
        let field = map.distance_field("shower").unwrap();
        let (mut ep, _) = Episode::reset_at(&map, &field, Pos::new(1, 1), 1.0).unwrap();
        ep.step(Action::East).unwrap();
        assert!(matches!(ep.step(Action::East), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn episode_caps_at_500_steps() {
        let map = default_map();
        let field = map.distance_field("shower").unwrap();
        // far corner of the bedroom, stepping into the wall forever
        let (mut ep, _) = Episode::reset_at(&map, &field, Pos::new(22, 5), 1.0).unwrap();
        let mut steps = 0;
        loop {
            let out = ep.step(Action::East).unwrap();
            steps += 1;
            if out.done {
                break;
            }
        }
        assert_eq!(steps, STEP_CAP);
        assert!(!ep.succeeded());
    }

    #[test]
    fn observation_encoding_definition_and_injectivity() {
        let map = default_map();
        let obs = map.encode_observation(Pos::new(3, 7), ObservationMode::PositionOneHot);
        assert_eq!(obs.len(), 36);
        assert_eq!(obs.iter().sum::<f64>(), 2.0);
        assert_eq!(obs[3], 1.0);
        assert_eq!(obs[25 + 7], 1.0);

        let other = map.encode_observation(Pos::new(4, 7), ObservationMode::PositionOneHot);
        assert_ne!(obs, other);
        assert_eq!(map.decode_observation(&obs), Some(Pos::new(3, 7)));
    }

    #[test]
    fn distance_never_changes_by_more_than_one_per_step() {
        let map = default_map();
        let field = map.distance_field("bed").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (mut ep, _) = Episode::reset(&map, &field, &mut rng, 1.0);
            while !ep.done() {
                let a = ACTIONS[rng.random_range(0..4)];
                let out = ep.step(a).unwrap();
                let (b, a2) = out.source_distances;
                assert!((b as i64 - a2 as i64).abs() <= 1);
            }
        }
    }

    #[test]
    fn greedy_descent_reaches_goal_in_exactly_d_steps() {
        let map = default_map();
        let field = map.distance_field("microwave").unwrap();
        for &spawn in map.spawn_cells() {
            let d0 = field.at(spawn).unwrap();
            let (mut ep, _) = Episode::reset_at(&map, &field, spawn, 1.0).unwrap();
            let mut steps = 0;
            while !ep.done() {
                let pos = ep.state().position;
                let d = field.at(pos).unwrap();
                let action = ACTIONS
                    .into_iter()
                    .find(|a| {
                        let (dx, dy) = a.delta();
                        let nx = pos.x as isize + dx;
                        let ny = pos.y as isize + dy;
                        nx >= 0 && ny >= 0 && {
                            let n = Pos::new(nx as usize, ny as usize);
                            map.is_passable(n) && field.at(n) == Some(d - 1)
                        }
                    })
                    .expect("descent direction exists");
                ep.step(action).unwrap();
                steps += 1;
            }
            assert!(ep.succeeded());
            assert_eq!(steps, d0);
        }
    }

    #[test]
    fn reward_telescopes_over_random_trajectories() {
        let map = default_map();
        let field = map.distance_field("table").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (mut ep, _) = Episode::reset(&map, &field, &mut rng, 1.0);
            let d_start = field.at(ep.state().position).unwrap() as i64;
            let mut ret = 0.0;
            let mut steps = 0i64;
            let mut d_end = d_start;
            while !ep.done() {
                let out = ep.step(ACTIONS[rng.random_range(0..4)]).unwrap();
                ret += out.reward;
                steps += 1;
                d_end = out.source_distances.1 as i64;
            }
            let expected = (d_start - d_end) as f64 - SLACK_PENALTY * steps as f64
                + if ep.succeeded() { SUCCESS_BONUS } else { 0.0 };
            assert!(
                (ret - expected).abs() < 1e-9,
                "return {ret} vs telescoped {expected}"
            );
        }
    }

    #[test]
    fn render_summary_echoes_grid_objects_and_success_counts() {
        let map = default_map();
        let summary = render_map_summary(&map);
        assert!(summary.starts_with("#########################\n"));
        assert!(summary.contains("#S.....#O......#D......W#"));
        assert!(summary.contains("25x11"));
        assert!(summary.contains("shower"));
        assert!(summary.contains("success cells: 2"));
    }
}
