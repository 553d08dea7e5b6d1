//! Grid worlds: a robot visits target regions in order while avoiding walls,
//! bombs and an opponent that circles a fixed loop.
//!
//! Map text format, one character per cell:
//!
//! ```text
//! #  wall            .  free
//! B  bomb            R  robot start
//! O  opponent path   1-9  target regions, visited in increasing order
//! ```
//!
//! The opponent's loop is listed in a side file with one `x,y` cell per line
//! (`#` starts a comment). Without it the loop is traced through the `O`
//! cells, which must then form a simple cycle.

use std::path::Path;

use rand::RngCore;

use super::{EnvError, Environment, StepOutcome};
use crate::automata::{
    build_bounded_stay, build_collision, conjoin, ActionId, Alphabet, LabelId, ObstacleFlags, Role,
    SafetyAutomaton,
};

pub const NORTH: ActionId = ActionId(0);
pub const SOUTH: ActionId = ActionId(1);
pub const EAST: ActionId = ActionId(2);
pub const WEST: ActionId = ActionId(3);

const DIRS: [(i64, i64); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];
const BOMB_BIT: u32 = 16;

/// Default 9x9 map with two bomb pairs and three targets.
pub const MAP_9X9: &str = include_str!("../../maps/grid9x9.txt");
/// Default 15x9 map with a walled border and an opponent circling the
/// central block.
pub const MAP_15X9: &str = include_str!("../../maps/grid15x9.txt");
pub const CYCLE_15X9: &str = include_str!("../../maps/grid15x9.cycle");

pub fn grid_actions() -> Alphabet {
    Alphabet::new(["N", "S", "E", "W"]).expect("distinct action names")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    bombs: Vec<bool>,
    /// Cells of each target region, in visiting order.
    targets: Vec<Vec<usize>>,
    robot: usize,
    /// Opponent position per phase; empty without an opponent.
    cycle: Vec<usize>,
}

impl GridMap {
    pub fn parse(text: &str, cycle: Option<&str>) -> Result<Self, EnvError> {
        let err = |m: String| EnvError::Map(m);
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(err("empty map".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        if let Some(y) = rows.iter().position(|r| r.chars().count() != width) {
            return Err(err(format!("row {y} has a different width")));
        }
        let n = width * height;
        let mut walls = vec![false; n];
        let mut bombs = vec![false; n];
        let mut path = vec![false; n];
        let mut robot = None;
        let mut regions: Vec<Vec<usize>> = vec![Vec::new(); 9];
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let c = y * width + x;
                match ch {
                    '#' => walls[c] = true,
                    '.' => {}
                    'B' => bombs[c] = true,
                    'O' => path[c] = true,
                    'R' => {
                        if robot.replace(c).is_some() {
                            return Err(err("more than one robot start".into()));
                        }
                    }
                    '1'..='9' => regions[ch as usize - '1' as usize].push(c),
                    other => return Err(err(format!("unknown character {other:?} at {x},{y}"))),
                }
            }
        }
        let robot = robot.ok_or_else(|| err("no robot start".into()))?;
        let used = regions.iter().rposition(|r| !r.is_empty()).map_or(0, |i| i + 1);
        if let Some(i) = regions[..used].iter().position(Vec::is_empty) {
            return Err(err(format!("target {} is missing", i + 1)));
        }
        regions.truncate(used);
        let mut map = Self { width, height, walls, bombs, targets: regions, robot, cycle: Vec::new() };
        map.cycle = match cycle {
            Some(text) => map.parse_cycle(text)?,
            None => map.trace_cycle(&path)?,
        };
        if map.cycle.first() == Some(&robot) {
            return Err(err("robot starts on the opponent".into()));
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let side = path.with_extension("cycle");
        let cycle = if side.exists() { Some(std::fs::read_to_string(side)?) } else { None };
        Self::parse(&text, cycle.as_deref())
    }

    pub fn default_9x9() -> Self {
        Self::parse(MAP_9X9, None).expect("bundled map parses")
    }

    pub fn default_15x9() -> Self {
        Self::parse(MAP_15X9, Some(CYCLE_15X9)).expect("bundled map parses")
    }

    fn parse_cycle(&self, text: &str) -> Result<Vec<usize>, EnvError> {
        let mut cells = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || EnvError::Map(format!("cycle line {}: expected x,y", n + 1));
            let (x, y) = line.split_once(',').ok_or_else(bad)?;
            let x: usize = x.trim().parse().map_err(|_| bad())?;
            let y: usize = y.trim().parse().map_err(|_| bad())?;
            if x >= self.width || y >= self.height || self.walls[y * self.width + x] {
                return Err(EnvError::Map(format!("cycle cell {x},{y} is not a free cell")));
            }
            cells.push(y * self.width + x);
        }
        if cells.is_empty() {
            return Err(EnvError::Map("cycle file lists no cells".into()));
        }
        for i in 0..cells.len() {
            let (a, b) = (cells[i], cells[(i + 1) % cells.len()]);
            if a != b && !self.adjacent(a, b) {
                return Err(EnvError::Map(format!(
                    "cycle cells {} and {} are not adjacent",
                    self.show(a),
                    self.show(b)
                )));
            }
        }
        Ok(cells)
    }

    /// Follows the `O` cells from the first one in reading order, preferring
    /// east, south, west, north.
    fn trace_cycle(&self, path: &[bool]) -> Result<Vec<usize>, EnvError> {
        let Some(start) = path.iter().position(|&p| p) else {
            return Ok(Vec::new());
        };
        let total = path.iter().filter(|&&p| p).count();
        let neighbours = |c: usize| -> Vec<usize> {
            [EAST, SOUTH, WEST, NORTH]
                .iter()
                .filter_map(|&d| self.step_cell(c, d))
                .filter(|&t| path[t])
                .collect()
        };
        if let Some(c) = (0..path.len()).find(|&c| path[c] && neighbours(c).len() != 2) {
            return Err(EnvError::Map(format!(
                "opponent path is not a simple loop at {}; list the cycle in a side file",
                self.show(c)
            )));
        }
        let mut cycle = vec![start];
        let mut prev = start;
        let mut cur = neighbours(start)[0];
        while cur != start {
            cycle.push(cur);
            let next = neighbours(cur).into_iter().find(|&t| t != prev).expect("two neighbours");
            prev = cur;
            cur = next;
        }
        if cycle.len() != total {
            return Err(EnvError::Map("opponent path has more than one loop".into()));
        }
        Ok(cycle)
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        (0..4).any(|d| self.step_cell(a, ActionId(d)) == Some(b))
    }

    fn show(&self, c: usize) -> String {
        format!("{},{}", c % self.width, c / self.width)
    }

    /// Neighbouring cell in direction `d`, if in bounds and not a wall.
    pub fn step_cell(&self, c: usize, d: ActionId) -> Option<usize> {
        let (dx, dy) = DIRS[d.index()];
        let x = (c % self.width) as i64 + dx;
        let y = (c / self.width) as i64 + dy;
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let t = y as usize * self.width + x as usize;
        (!self.walls[t]).then_some(t)
    }

    pub fn robot_start(&self) -> usize {
        self.robot
    }

    pub fn is_bomb(&self, c: usize) -> bool {
        self.bombs[c]
    }

    pub fn has_bombs(&self) -> bool {
        self.bombs.iter().any(|&b| b)
    }

    pub fn targets(&self) -> &[Vec<usize>] {
        &self.targets
    }

    pub fn cycle(&self) -> &[usize] {
        &self.cycle
    }

    /// Number of opponent phases; 1 without an opponent.
    pub fn phases(&self) -> usize {
        self.cycle.len().max(1)
    }

    pub fn free_cells(&self) -> usize {
        self.walls.iter().filter(|&&w| !w).count()
    }

    fn opponent(&self, phase: usize) -> Option<usize> {
        self.cycle.get(phase % self.phases()).copied()
    }

    /// Whether moving in `d` from `c` at opponent phase `phase` crashes.
    pub fn blocked(&self, c: usize, phase: usize, d: ActionId) -> bool {
        let Some(t) = self.step_cell(c, d) else {
            return true;
        };
        match (self.opponent(phase), self.opponent(phase + 1)) {
            (Some(now), Some(next)) => t == next || (t == now && next == c),
            _ => false,
        }
    }

    /// Label of a robot position: one blocked bit per direction (N=1, S=2,
    /// E=4, W=8) and, on maps with bombs, 16 when standing on a bomb.
    pub fn label_at(&self, c: usize, phase: usize) -> LabelId {
        let mut bits = 0;
        for d in 0..4 {
            if self.blocked(c, phase, ActionId(d)) {
                bits |= 1 << d;
            }
        }
        if self.bombs[c] {
            bits |= BOMB_BIT;
        }
        LabelId(bits)
    }

    /// Robot cell after moving in `d`; blocked moves leave it in place.
    pub fn move_robot(&self, c: usize, phase: usize, d: ActionId) -> usize {
        if self.blocked(c, phase, d) {
            c
        } else {
            self.step_cell(c, d).expect("unblocked move stays on the map")
        }
    }

    pub fn labels(&self) -> Alphabet {
        let count = if self.has_bombs() { 32 } else { 16 };
        Alphabet::new((0..count).map(label_name)).expect("distinct label names")
    }

    fn bomb_labels(&self) -> Vec<LabelId> {
        (0..32).filter(|b| b & BOMB_BIT != 0).map(LabelId).collect()
    }
}

fn label_name(bits: u32) -> String {
    let mut s: String = ['N', 'S', 'E', 'W']
        .iter()
        .enumerate()
        .map(|(i, &ch)| if bits & (1 << i) != 0 { ch } else { '-' })
        .collect();
    if bits & BOMB_BIT != 0 {
        s.push('B');
    }
    s
}

/// Precise abstraction tracking (robot cell, opponent phase). A label that
/// does not match the tracked position leads to fail.
pub fn grid_abstraction(map: &GridMap) -> Result<SafetyAutomaton, EnvError> {
    let labels = map.labels();
    let actions = grid_actions();
    let phases = map.phases();
    let n = map.width * map.height * phases;
    let fail = n;
    let mut delta = Vec::with_capacity((n + 1) * labels.len() * 4);
    let mut safe = vec![false; n + 1];
    let mut names = Vec::with_capacity(n + 1);
    for c in 0..map.width * map.height {
        for phase in 0..phases {
            let id = c * phases + phase;
            let here = map.label_at(c, phase);
            safe[id] = !map.walls[c];
            names.push(format!("{}@{phase}", map.show(c)));
            for l in labels.labels() {
                for a in actions.actions() {
                    delta.push(if l != here || map.walls[c] {
                        fail
                    } else {
                        map.move_robot(c, phase, a) * phases + (phase + 1) % phases
                    });
                }
            }
        }
    }
    delta.extend(std::iter::repeat_n(fail, labels.len() * 4));
    names.push("fail".into());
    Ok(SafetyAutomaton::from_table(
        labels,
        actions,
        Role::Abstraction,
        map.robot * phases,
        safe,
        delta,
        Some(names),
    )?)
}

/// No crashes; on maps with bombs, never more than `bomb_limit` consecutive
/// observations on a bomb.
pub fn grid_spec(map: &GridMap, bomb_limit: u32) -> Result<SafetyAutomaton, EnvError> {
    let labels = map.labels();
    let actions = grid_actions();
    let flags = ObstacleFlags::from_fn(&labels, &actions, |l, a| l.0 & (1 << a.0) != 0);
    let collision = build_collision(&labels, &actions, &flags)?;
    if !map.has_bombs() {
        return Ok(collision);
    }
    let bombs = build_bounded_stay(&labels, &actions, &map.bomb_labels(), bomb_limit)?;
    Ok(conjoin(&collision, &bombs)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub target_bonus: f64,
    pub completion_bonus: f64,
    pub penalty: f64,
    pub step_cost: f64,
    pub max_steps: u32,
    pub bomb_limit: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            target_bonus: 1.0,
            completion_bonus: 10.0,
            penalty: -10.0,
            step_cost: 0.0,
            max_steps: 200,
            bomb_limit: 2,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub cell: usize,
    pub phase: usize,
    /// Index of the next target region.
    pub target: usize,
    /// Consecutive observations on a bomb so far.
    pub bomb_run: u32,
}

#[derive(Clone, Debug)]
pub struct GridWorld {
    map: GridMap,
    config: GridConfig,
    labels: Alphabet,
    actions: Alphabet,
    state: GridState,
    steps: u32,
}

impl GridWorld {
    pub fn new(map: GridMap, config: GridConfig) -> Self {
        let state = GridState { cell: map.robot, phase: 0, target: 0, bomb_run: 0 };
        Self { labels: map.labels(), actions: grid_actions(), map, config, state, steps: 0 }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn set_state(&mut self, state: GridState) {
        self.state = state;
    }

    pub fn abstraction(&self) -> Result<SafetyAutomaton, EnvError> {
        grid_abstraction(&self.map)
    }

    pub fn spec(&self) -> Result<SafetyAutomaton, EnvError> {
        grid_spec(&self.map, self.config.bomb_limit)
    }
}

impl Environment for GridWorld {
    fn labels(&self) -> &Alphabet {
        &self.labels
    }

    fn actions(&self) -> &Alphabet {
        &self.actions
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) {
        self.state = GridState { cell: self.map.robot, phase: 0, target: 0, bomb_run: 0 };
        self.steps = 0;
    }

    fn observation(&self) -> u64 {
        let s = &self.state;
        s.cell as u64 | ((s.phase as u64) << 16) | ((s.target as u64) << 32) | ((s.bomb_run as u64) << 40)
    }

    fn label(&self) -> LabelId {
        self.map.label_at(self.state.cell, self.state.phase)
    }

    fn step(&mut self, action: ActionId, _rng: &mut dyn RngCore) -> StepOutcome {
        self.steps += 1;
        let s = self.state;
        let run = if self.map.bombs[s.cell] { s.bomb_run + 1 } else { 0 };
        let crash = self.map.blocked(s.cell, s.phase, action);
        if crash || run > self.config.bomb_limit {
            self.state.bomb_run = run;
            return StepOutcome {
                reward: self.config.penalty,
                terminal: true,
                truncated: false,
                violation: true,
            };
        }
        let cell = self.map.move_robot(s.cell, s.phase, action);
        let mut reward = self.config.step_cost;
        let mut target = s.target;
        let mut terminal = false;
        if target < self.map.targets.len() && self.map.targets[target].contains(&cell) {
            reward += self.config.target_bonus;
            target += 1;
            if target == self.map.targets.len() {
                reward += self.config.completion_bonus;
                terminal = true;
            }
        }
        self.state = GridState { cell, phase: (s.phase + 1) % self.map.phases(), target, bomb_run: run };
        StepOutcome {
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.config.max_steps,
            violation: false,
        }
    }
}
