//! 2048 on a 4x4 board.
//!
//! Moves that leave the board unchanged are rejected as invalid. After each
//! accepted move one tile spawns (2 with probability 0.9, otherwise 4).
//! Unfinished games score
//! `0.5 * min(score / score_target, 1) + 0.5 * log2(max_tile) / log2(target)`
//! with `score_target = (log2(target) - 1) * target`, the score earned when
//! the target tile is built purely from 2-tiles.

use rand::Rng;

use super::{last_keyword, EnvError, EnvSpec, Game, Outcome};
use crate::rng::SeededRng;

pub type Board = [[u32; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn name(self) -> &'static str {
        match self {
            Move::Up => "up",
            Move::Down => "down",
            Move::Left => "left",
            Move::Right => "right",
        }
    }

    /// Parses `[up]`-style commands (also `[w]`/`[a]`/`[s]`/`[d]`); the last one wins.
    pub fn parse(text: &str) -> Option<Move> {
        let lower = text.to_ascii_lowercase();
        let mut best: Option<(usize, Move)> = None;
        for (token, mv) in [
            ("[up]", Move::Up),
            ("[w]", Move::Up),
            ("[down]", Move::Down),
            ("[s]", Move::Down),
            ("[left]", Move::Left),
            ("[a]", Move::Left),
            ("[right]", Move::Right),
            ("[d]", Move::Right),
        ] {
            if let Some(pos) = lower.rfind(token) {
                if best.is_none_or(|(p, _)| pos > p) {
                    best = Some((pos, mv));
                }
            }
        }
        best.map(|(_, m)| m).or_else(|| {
            last_keyword(text, &["up", "down", "left", "right"]).map(|w| match w {
                "up" => Move::Up,
                "down" => Move::Down,
                "left" => Move::Left,
                _ => Move::Right,
            })
        })
    }
}

/// Slides one line towards index 0, merging equal neighbours once each.
/// Returns the new line and the score gained.
pub fn merge_line(line: [u32; 4]) -> ([u32; 4], u32) {
    let mut out = [0u32; 4];
    let mut len = 0;
    let mut gained = 0;
    let mut pending: Option<u32> = None;
    for v in line.into_iter().filter(|&v| v != 0) {
        match pending {
            Some(p) if p == v => {
                out[len] = 2 * v;
                gained += 2 * v;
                len += 1;
                pending = None;
            }
            Some(p) => {
                out[len] = p;
                len += 1;
                pending = Some(v);
            }
            None => pending = Some(v),
        }
    }
    if let Some(p) = pending {
        out[len] = p;
    }
    (out, gained)
}

/// Applies a move to a board without spawning. Returns the new board and
/// the score gained.
pub fn apply_move(board: &Board, mv: Move) -> (Board, u32) {
    let mut out = [[0u32; 4]; 4];
    let mut gained = 0;
    for i in 0..4 {
        let line: [u32; 4] = match mv {
            Move::Left => board[i],
            Move::Right => [board[i][3], board[i][2], board[i][1], board[i][0]],
            Move::Up => [board[0][i], board[1][i], board[2][i], board[3][i]],
            Move::Down => [board[3][i], board[2][i], board[1][i], board[0][i]],
        };
        let (merged, g) = merge_line(line);
        gained += g;
        for (k, v) in merged.into_iter().enumerate() {
            match mv {
                Move::Left => out[i][k] = v,
                Move::Right => out[i][3 - k] = v,
                Move::Up => out[k][i] = v,
                Move::Down => out[3 - k][i] = v,
            }
        }
    }
    (out, gained)
}

#[derive(Debug, Clone)]
pub struct Game2048 {
    board: Board,
    score: u32,
    target: u32,
    rng: SeededRng,
}

impl Game2048 {
    pub fn generate(spec: &EnvSpec, rng: SeededRng) -> Result<Self, EnvError> {
        let target: u32 = spec.knob("target", 2048)?;
        if target < 4 || !target.is_power_of_two() {
            return Err(EnvError::Config("2048 target must be a power of two >= 4".into()));
        }
        let mut game = Self {
            board: [[0; 4]; 4],
            score: 0,
            target,
            rng,
        };
        game.spawn();
        game.spawn();
        Ok(game)
    }

    pub fn with_board(board: Board, score: u32, target: u32, seed: u64) -> Self {
        Self {
            board,
            score,
            target,
            rng: rand::SeedableRng::seed_from_u64(seed),
        }
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn score(&self) -> u32 {
        self.score
    }

    pub fn max_tile(&self) -> u32 {
        self.board.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn score_target(&self) -> f64 {
        (self.target.trailing_zeros() as f64 - 1.0) * self.target as f64
    }

    fn spawn(&mut self) {
        let empty: Vec<(usize, usize)> = (0..16)
            .map(|i| (i / 4, i % 4))
            .filter(|&(r, c)| self.board[r][c] == 0)
            .collect();
        if empty.is_empty() {
            return;
        }
        let (r, c) = empty[self.rng.gen_range(0..empty.len())];
        self.board[r][c] = if self.rng.gen_bool(0.9) { 2 } else { 4 };
    }

    fn can_move(&self) -> bool {
        Move::ALL.iter().any(|&m| apply_move(&self.board, m).0 != self.board)
    }
}

impl Game for Game2048 {
    fn instructions(&self) -> String {
        "You are playing 2048 on a 4x4 board. Sliding the board merges equal adjacent tiles \
         into their sum. Each turn, reply with one of [up], [down], [left], [right]. \
         A move that does not change the board is invalid."
            .to_string()
    }

    fn goal(&self) -> String {
        format!("Goal: create a tile with value {}.", self.target)
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for row in &self.board {
            let cells: Vec<String> = row
                .iter()
                .map(|&v| if v == 0 { format!("{:>5}", ".") } else { format!("{v:>5}") })
                .collect();
            s.push_str(&cells.join(""));
            s.push('\n');
        }
        s.push_str(&format!(
            "Score: {}. Max tile: {}.\nValid actions: [up], [down], [left], [right].",
            self.score,
            self.max_tile()
        ));
        s
    }

    fn apply(&mut self, action: &str) -> Outcome {
        let Some(mv) = Move::parse(action) else {
            return Outcome::Invalid("reply with one of [up], [down], [left], [right].".into());
        };
        let (next, gained) = apply_move(&self.board, mv);
        if next == self.board {
            return Outcome::Invalid(format!("moving {} does not change the board.", mv.name()));
        }
        self.board = next;
        self.score += gained;
        if self.max_tile() >= self.target {
            return Outcome::Goal(format!("You created a {} tile!", self.target));
        }
        self.spawn();
        if !self.can_move() {
            return Outcome::Failure("No moves remain.".into());
        }
        Outcome::Continue(format!("You moved {}, gaining {gained} points.", mv.name()))
    }

    fn partial_reward(&self) -> f64 {
        let score_part = (self.score as f64 / self.score_target()).min(1.0);
        let tile_part = if self.max_tile() == 0 {
            0.0
        } else {
            (self.max_tile() as f64).log2() / (self.target as f64).log2()
        };
        (0.5 * score_part + 0.5 * tile_part).clamp(0.0, 1.0)
    }

    fn heuristic_action(&self) -> Option<String> {
        // Greedy: most merge score, then most empty cells; fixed tie order.
        Move::ALL
            .iter()
            .filter_map(|&m| {
                let (b, gained) = apply_move(&self.board, m);
                (b != self.board).then(|| {
                    let empty = b.iter().flatten().filter(|&&v| v == 0).count();
                    (m, gained, empty)
                })
            })
            .fold(None, |best: Option<(Move, u32, usize)>, cand| match best {
                Some(b) if (b.1, b.2) >= (cand.1, cand.2) => Some(b),
                _ => Some(cand),
            })
            .map(|(m, _, _)| format!("[{}]", m.name()))
    }

    fn action_space(&self) -> Vec<String> {
        Move::ALL.iter().map(|m| format!("[{}]", m.name())).collect()
    }

    fn clone_box(&self) -> Box<dyn Game> {
        Box::new(self.clone())
    }
}
