//! Deterministic (non-slippery) FrozenLake.
//!
//! The player starts in a random corner and must reach the goal in the
//! opposite corner without stepping into a hole. Episodes that end early
//! score `clamp(1 - d_final / d_initial, 0, 1)`, where `d` is the BFS
//! distance to the goal over non-hole cells; a hole is scored from its own
//! position (the first move out of it may only enter safe cells).

use rand::Rng;

use super::grid::{bfs_distances, Direction};
use super::{EnvError, EnvSpec, Game, Outcome};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Frozen,
    Hole,
    Goal,
}

#[derive(Debug, Clone)]
pub struct FrozenLake {
    size: usize,
    tiles: Vec<Tile>,
    start: (usize, usize),
    pos: (usize, usize),
    goal: (usize, usize),
    /// Distance to the goal for non-hole cells.
    to_goal: Vec<Option<usize>>,
}

impl FrozenLake {
    pub fn generate(spec: &EnvSpec, rng: &mut SeededRng) -> Result<Self, EnvError> {
        let size: usize = spec.knob("size", 5)?;
        let holes: usize = spec.knob("holes", size)?;
        if size < 2 {
            return Err(EnvError::Config("frozenlake size must be >= 2".into()));
        }
        if holes + 2 > size * size {
            return Err(EnvError::Config("too many holes for the grid".into()));
        }
        let corners = [(0, 0), (0, size - 1), (size - 1, 0), (size - 1, size - 1)];
        let start = corners[rng.gen_range(0..4)];
        let goal = (size - 1 - start.0, size - 1 - start.1);
        for _ in 0..1000 {
            let mut tiles = vec![Tile::Frozen; size * size];
            tiles[goal.0 * size + goal.1] = Tile::Goal;
            let mut placed = 0;
            while placed < holes {
                let cell = (rng.gen_range(0..size), rng.gen_range(0..size));
                let idx = cell.0 * size + cell.1;
                if cell != start && cell != goal && tiles[idx] == Tile::Frozen {
                    tiles[idx] = Tile::Hole;
                    placed += 1;
                }
            }
            let lake = Self::from_tiles(size, tiles, start);
            if lake.distance(start).is_some() {
                return Ok(lake);
            }
        }
        Err(EnvError::Config("could not place holes leaving a path to the goal".into()))
    }

    /// Builds a lake from rows of `S`/`F`/`H`/`G` characters (`S` or `P` marks
    /// the start, `.` and space are frozen), placing the player at `pos`.
    pub fn from_layout(rows: &[&str], pos: (usize, usize)) -> Self {
        let size = rows.len();
        let mut start = (0, 0);
        let mut tiles = Vec::with_capacity(size * size);
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                tiles.push(match ch {
                    'H' => Tile::Hole,
                    'G' => Tile::Goal,
                    'S' | 'P' => {
                        start = (r, c);
                        Tile::Frozen
                    }
                    _ => Tile::Frozen,
                });
            }
        }
        let mut lake = Self::from_tiles(size, tiles, start);
        lake.pos = pos;
        lake
    }

    fn from_tiles(size: usize, tiles: Vec<Tile>, start: (usize, usize)) -> Self {
        let goal_idx = tiles.iter().position(|&t| t == Tile::Goal).unwrap_or(size * size - 1);
        let goal = (goal_idx / size, goal_idx % size);
        let to_goal = bfs_distances(size, size, goal, |_, _, next| {
            tiles[next.0 * size + next.1] != Tile::Hole
        });
        Self {
            size,
            tiles,
            start,
            pos: start,
            goal,
            to_goal,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn tile(&self, (r, c): (usize, usize)) -> Tile {
        self.tiles[r * self.size + c]
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal
    }

    /// BFS distance to the goal from `cell`; holes are scored one step
    /// further than their best safe neighbour.
    pub fn distance(&self, cell: (usize, usize)) -> Option<usize> {
        if self.tile(cell) != Tile::Hole {
            return self.to_goal[cell.0 * self.size + cell.1];
        }
        Direction::ALL
            .iter()
            .filter_map(|d| d.step(cell, self.size, self.size))
            .filter_map(|n| self.to_goal[n.0 * self.size + n.1])
            .min()
            .map(|d| d + 1)
    }

    pub fn progress_reward(&self, cell: (usize, usize)) -> f64 {
        match (self.distance(self.start), self.distance(cell)) {
            (Some(initial), Some(fin)) if initial > 0 => {
                (1.0 - fin as f64 / initial as f64).clamp(0.0, 1.0)
            }
            (Some(0), _) => 1.0,
            _ => 0.0,
        }
    }
}

impl Game for FrozenLake {
    fn instructions(&self) -> String {
        "You are playing FrozenLake on a square grid. P is you, G is the goal, H is a hole, \
         empty cells are frozen ice. Movement is deterministic. Each turn, reply with one of \
         [up], [down], [left], [right]. Falling into a hole ends the episode."
            .to_string()
    }

    fn goal(&self) -> String {
        format!(
            "Goal: reach G at ({}, {}) without falling into a hole.",
            self.goal.0, self.goal.1
        )
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for r in 0..self.size {
            s.push('|');
            for c in 0..self.size {
                let ch = if (r, c) == self.pos {
                    'P'
                } else {
                    match self.tile((r, c)) {
                        Tile::Frozen => ' ',
                        Tile::Hole => 'H',
                        Tile::Goal => 'G',
                    }
                };
                s.push(' ');
                s.push(ch);
                s.push_str(" |");
            }
            s.push('\n');
        }
        s.push_str("Valid actions: [up], [down], [left], [right].");
        s
    }

    fn apply(&mut self, action: &str) -> Outcome {
        let Some(dir) = Direction::parse_last(action) else {
            return Outcome::Invalid("reply with one of [up], [down], [left], [right].".into());
        };
        let Some(next) = dir.step(self.pos, self.size, self.size) else {
            return Outcome::Continue(format!("You cannot move {} off the grid.", dir.name()));
        };
        self.pos = next;
        match self.tile(next) {
            Tile::Hole => Outcome::Failure("You fell into a hole.".into()),
            Tile::Goal => Outcome::Goal("You reached the goal!".into()),
            Tile::Frozen => Outcome::Continue(format!("You moved {}.", dir.name())),
        }
    }

    fn partial_reward(&self) -> f64 {
        self.progress_reward(self.pos)
    }

    fn optimal_hint(&self) -> Option<String> {
        if self.pos == self.goal || self.tile(self.pos) == Tile::Hole {
            return None;
        }
        let here = self.distance(self.pos)?;
        Direction::ALL.iter().find_map(|&d| {
            let next = d.step(self.pos, self.size, self.size)?;
            (self.tile(next) != Tile::Hole && self.distance(next)? + 1 == here)
                .then(|| format!("[{}]", d.name()))
        })
    }

    fn action_space(&self) -> Vec<String> {
        Direction::ALL.iter().map(|d| format!("[{}]", d.name())).collect()
    }

    fn position(&self) -> Option<(usize, usize)> {
        Some(self.pos)
    }

    fn clone_box(&self) -> Box<dyn Game> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvId, Termination};

    const LAYOUT: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

    #[test]
    fn render_uses_p_g_h() {
        let (obs, _) = EnvSpec::new(EnvId::FrozenLake, 2).reset().unwrap();
        assert!(obs.contains('P'));
        assert!(obs.contains('G'));
        assert!(obs.contains('H'));
    }

    #[test]
    fn partial_reward_two_of_six() {
        let lake = FrozenLake::from_layout(&LAYOUT, (2, 2));
        assert_eq!(lake.distance((0, 0)), Some(6));
        assert_eq!(lake.distance((2, 2)), Some(2));
        assert!((lake.partial_reward() - (1.0 - 2.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn hole_is_scored_at_its_position() {
        let mut lake = FrozenLake::from_layout(&LAYOUT, (0, 1));
        assert!(matches!(lake.apply("[down]"), Outcome::Failure(_)));
        // (1,1) is a hole; best safe neighbour (2,1) or (1,2) is 3 away.
        assert_eq!(lake.distance((1, 1)), Some(4));
        assert!((lake.partial_reward() - (1.0 - 4.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn hint_is_move_onto_goal_when_adjacent() {
        let lake = FrozenLake::from_layout(&LAYOUT, (3, 2));
        assert_eq!(lake.optimal_hint().as_deref(), Some("[right]"));
    }

    #[test]
    fn generated_lakes_are_solvable_by_hints() {
        for seed in 0..30 {
            let mut env = EnvSpec::new(EnvId::FrozenLake, seed).build().unwrap();
            let mut last = None;
            while let Some(a) = env.optimal_hint() {
                last = Some(env.step(&a).unwrap());
            }
            assert_eq!(last.unwrap().termination, Some(Termination::Goal), "seed {seed}");
        }
    }

    #[test]
    fn off_grid_move_is_a_no_op() {
        let mut lake = FrozenLake::from_layout(&LAYOUT, (0, 0));
        assert!(matches!(lake.apply("[up]"), Outcome::Continue(_)));
        assert_eq!(lake.position(), Some((0, 0)));
    }
}
