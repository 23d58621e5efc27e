//! Four-neighbour grid movement shared by the grid environments.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// Last direction word mentioned in `text`.
    pub fn parse_last(text: &str) -> Option<Direction> {
        super::last_keyword(text, &["up", "down", "left", "right"]).map(|w| match w {
            "up" => Direction::Up,
            "down" => Direction::Down,
            "left" => Direction::Left,
            _ => Direction::Right,
        })
    }

    /// Neighbour of `(row, col)` inside a `rows x cols` grid.
    pub fn step(self, (row, col): (usize, usize), rows: usize, cols: usize) -> Option<(usize, usize)> {
        match self {
            Direction::Up => row.checked_sub(1).map(|r| (r, col)),
            Direction::Down => (row + 1 < rows).then_some((row + 1, col)),
            Direction::Left => col.checked_sub(1).map(|c| (row, c)),
            Direction::Right => (col + 1 < cols).then_some((row, col + 1)),
        }
    }

    pub(crate) fn bit(self) -> u8 {
        match self {
            Direction::Up => 1,
            Direction::Down => 2,
            Direction::Left => 4,
            Direction::Right => 8,
        }
    }
}

/// Breadth-first distances from `source` over cells accepted by `passable`
/// (the source itself is always expanded). Unreached cells are `None`.
pub fn bfs_distances(
    rows: usize,
    cols: usize,
    source: (usize, usize),
    mut can_move: impl FnMut((usize, usize), Direction, (usize, usize)) -> bool,
) -> Vec<Option<usize>> {
    let mut dist = vec![None; rows * cols];
    let mut queue = std::collections::VecDeque::new();
    dist[source.0 * cols + source.1] = Some(0);
    queue.push_back(source);
    while let Some(cell) = queue.pop_front() {
        let d = dist[cell.0 * cols + cell.1].unwrap_or(0);
        for dir in Direction::ALL {
            if let Some(next) = dir.step(cell, rows, cols) {
                let slot = &mut dist[next.0 * cols + next.1];
                if slot.is_none() && can_move(cell, dir, next) {
                    *slot = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
    }
    dist
}
