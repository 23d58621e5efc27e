//! Grid maze navigation.
//!
//! Layouts are perfect mazes carved with a seeded recursive backtracker. The
//! goal is placed at a BFS distance from the start drawn from a configurable
//! band, so every episode is solvable. Reward is binary.

use rand::seq::SliceRandom;
use rand::Rng;

use super::grid::{bfs_distances, Direction};
use super::{EnvError, EnvSpec, Game, Outcome};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observability {
    Full,
    /// Only the result of the previous action is reported.
    Partial,
}

#[derive(Debug, Clone)]
pub struct Maze {
    rows: usize,
    cols: usize,
    /// Open-passage bitmask per cell (see [`Direction::bit`]).
    open: Vec<u8>,
    start: (usize, usize),
    goal: (usize, usize),
    pos: (usize, usize),
    /// BFS distance to the goal for every cell.
    to_goal: Vec<usize>,
    observability: Observability,
    last_move: Option<(Direction, bool)>,
}

impl Maze {
    pub fn generate(spec: &EnvSpec, rng: &mut SeededRng) -> Result<Self, EnvError> {
        let rows: usize = spec.knob("rows", spec.knob("size", 10)?)?;
        let cols: usize = spec.knob("cols", spec.knob("size", 10)?)?;
        let min_dist: usize = spec.knob("min_dist", 8)?;
        let max_dist: usize = spec.knob("max_dist", 20)?;
        let observability = match spec.knob_str("observe", "full") {
            "full" => Observability::Full,
            "partial" => Observability::Partial,
            other => return Err(EnvError::Config(format!("unknown maze observability `{other}`"))),
        };
        if rows < 2 || cols < 2 {
            return Err(EnvError::Config("maze needs at least 2x2 cells".into()));
        }
        if min_dist < 1 || min_dist > max_dist {
            return Err(EnvError::Config("maze requires 1 <= min_dist <= max_dist".into()));
        }
        let open = carve(rows, cols, rng);
        let start = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        let mut maze = Self {
            rows,
            cols,
            open,
            start,
            goal: start,
            pos: start,
            to_goal: Vec::new(),
            observability,
            last_move: None,
        };
        let from_start = maze.distances_from(start);
        let mut band: Vec<usize> = (0..rows * cols)
            .filter(|&i| (min_dist..=max_dist).contains(&from_start[i]))
            .collect();
        let goal_idx = if band.is_empty() {
            // Small grids: take the farthest cell.
            (0..rows * cols).max_by_key(|&i| (from_start[i], usize::MAX - i)).unwrap_or(0)
        } else {
            band.sort_unstable();
            band[rng.gen_range(0..band.len())]
        };
        maze.goal = (goal_idx / cols, goal_idx % cols);
        maze.to_goal = maze.distances_from(maze.goal);
        Ok(maze)
    }

    /// Builds a maze from an explicit passage bitmask.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        open: Vec<u8>,
        start: (usize, usize),
        goal: (usize, usize),
    ) -> Self {
        let mut maze = Self {
            rows,
            cols,
            open,
            start,
            goal,
            pos: start,
            to_goal: Vec::new(),
            observability: Observability::Full,
            last_move: None,
        };
        maze.to_goal = maze.distances_from(goal);
        maze
    }

    fn distances_from(&self, source: (usize, usize)) -> Vec<usize> {
        bfs_distances(self.rows, self.cols, source, |cell, dir, _| self.is_open(cell, dir))
            .into_iter()
            .map(|d| d.unwrap_or(usize::MAX))
            .collect()
    }

    pub fn is_open(&self, (r, c): (usize, usize), dir: Direction) -> bool {
        self.open[r * self.cols + c] & dir.bit() != 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal
    }

    pub fn distance_to_goal(&self) -> usize {
        self.to_goal[self.pos.0 * self.cols + self.pos.1]
    }

    /// Directions along a shortest path from the current position.
    pub fn shortest_path(&self) -> Vec<Direction> {
        let mut path = Vec::new();
        let mut cell = self.pos;
        while cell != self.goal {
            let here = self.to_goal[cell.0 * self.cols + cell.1];
            let Some((dir, next)) = Direction::ALL.iter().find_map(|&d| {
                let next = d.step(cell, self.rows, self.cols)?;
                (self.is_open(cell, d) && self.to_goal[next.0 * self.cols + next.1] + 1 == here)
                    .then_some((d, next))
            }) else {
                break;
            };
            path.push(dir);
            cell = next;
        }
        path
    }
}

fn carve(rows: usize, cols: usize, rng: &mut SeededRng) -> Vec<u8> {
    let mut open = vec![0u8; rows * cols];
    let mut visited = vec![false; rows * cols];
    let first = (rng.gen_range(0..rows), rng.gen_range(0..cols));
    let mut stack = vec![first];
    visited[first.0 * cols + first.1] = true;
    while let Some(&cell) = stack.last() {
        let mut options: Vec<(Direction, (usize, usize))> = Direction::ALL
            .iter()
            .filter_map(|&d| d.step(cell, rows, cols).map(|n| (d, n)))
            .filter(|(_, n)| !visited[n.0 * cols + n.1])
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        options.shuffle(rng);
        let (dir, next) = options[0];
        open[cell.0 * cols + cell.1] |= dir.bit();
        open[next.0 * cols + next.1] |= dir.opposite().bit();
        visited[next.0 * cols + next.1] = true;
        stack.push(next);
    }
    open
}

impl Game for Maze {
    fn instructions(&self) -> String {
        "You are navigating a grid maze. Coordinates are (row, column) with row 0 at the top. \
         Each turn, move one cell with exactly one of: up, down, left, right. \
         Walls block movement. Reach the goal cell within the step budget. \
         Think briefly, then end your reply with the chosen direction."
            .to_string()
    }

    fn goal(&self) -> String {
        format!(
            "Goal: reach cell ({}, {}) in a {}x{} maze.",
            self.goal.0, self.goal.1, self.rows, self.cols
        )
    }

    fn render(&self) -> String {
        match self.observability {
            Observability::Full => {
                let (walls, open): (Vec<Direction>, Vec<Direction>) =
                    Direction::ALL.iter().partition(|&&d| !self.is_open(self.pos, d));
                let names = |v: &[Direction]| {
                    if v.is_empty() {
                        "none".to_string()
                    } else {
                        v.iter().map(|d| d.name()).collect::<Vec<_>>().join(", ")
                    }
                };
                format!(
                    "Position: ({}, {}). Goal: ({}, {}).\nWalls: {}. Open: {}.\nValid actions: up, down, left, right.",
                    self.pos.0,
                    self.pos.1,
                    self.goal.0,
                    self.goal.1,
                    names(&walls),
                    names(&open)
                )
            }
            Observability::Partial => {
                let last = match self.last_move {
                    None => "none".to_string(),
                    Some((d, true)) => format!("{} (moved)", d.name()),
                    Some((d, false)) => format!("{} (blocked)", d.name()),
                };
                format!(
                    "Goal: ({}, {}). Last action: {last}.\nValid actions: up, down, left, right.",
                    self.goal.0, self.goal.1
                )
            }
        }
    }

    fn apply(&mut self, action: &str) -> Outcome {
        let Some(dir) = Direction::parse_last(action) else {
            return Outcome::Invalid("reply with one of up, down, left, right.".into());
        };
        if !self.is_open(self.pos, dir) {
            self.last_move = Some((dir, false));
            return Outcome::Continue(format!("You hit a wall moving {}.", dir.name()));
        }
        if let Some(next) = dir.step(self.pos, self.rows, self.cols) {
            self.pos = next;
        }
        self.last_move = Some((dir, true));
        if self.pos == self.goal {
            Outcome::Goal("You reached the goal!".into())
        } else {
            Outcome::Continue(format!("You moved {}.", dir.name()))
        }
    }

    fn partial_reward(&self) -> f64 {
        0.0
    }

    fn optimal_hint(&self) -> Option<String> {
        self.shortest_path().first().map(|d| d.name().to_string())
    }

    fn action_space(&self) -> Vec<String> {
        Direction::ALL.iter().map(|d| d.name().to_string()).collect()
    }

    fn position(&self) -> Option<(usize, usize)> {
        Some(self.pos)
    }

    fn clone_box(&self) -> Box<dyn Game> {
        Box::new(self.clone())
    }
}
