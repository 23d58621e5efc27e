//! Rush Hour sliding-block puzzle on a 6x6 board.
//!
//! The target car `X` sits on row 2 and must reach the exit on the right
//! edge. Puzzles are generated backwards: vehicles are placed around a
//! solved board, the reachable state space is explored, and the start is
//! drawn among states whose shortest solution has the requested number of
//! unit moves (or the hardest reachable states when the layout cannot
//! reach that depth). The difficulty knob sets that depth. Unfinished games score
//! `1 - (5 - front) / 4`, where `front` is the column of X's leading cell.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::Rng;

use super::{EnvError, EnvSpec, Game, Outcome};
use crate::rng::SeededRng;

pub const SIZE: usize = 6;
pub const EXIT_ROW: usize = 2;
const LAYOUT_ATTEMPTS: usize = 16;
const STATE_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vehicle {
    pub id: char,
    pub horizontal: bool,
    pub len: usize,
    /// Fixed coordinate: the row of a horizontal vehicle, else the column.
    pub lane: usize,
}

/// A unit move: vehicle index and direction (+1 right/down, -1 left/up).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub vehicle: usize,
    pub forward: bool,
}

#[derive(Debug, Clone)]
pub struct RushHour {
    vehicles: Vec<Vehicle>,
    /// Variable coordinate per vehicle: column for horizontal, row for vertical.
    pos: Vec<usize>,
}

impl RushHour {
    pub fn generate(spec: &EnvSpec, rng: &mut SeededRng) -> Result<Self, EnvError> {
        let default_scramble = match spec.knob_str("difficulty", "medium") {
            "easy" => 6,
            "medium" => 12,
            "hard" => 20,
            other => return Err(EnvError::Config(format!("unknown rushhour difficulty `{other}`"))),
        };
        let scramble: usize = spec.knob("scramble", default_scramble)?;
        if scramble < 1 {
            return Err(EnvError::Config("rushhour scramble must be >= 1".into()));
        }
        let count: usize = spec.knob("vehicles", 10)?;
        if count > 12 {
            return Err(EnvError::Config("rushhour supports at most 12 extra vehicles".into()));
        }
        let mut best: Option<(u32, Self)> = None;
        for _ in 0..LAYOUT_ATTEMPTS {
            let layout = Self::solved_layout(count, rng);
            let (depth, start) = layout.pick_start(scramble as u32, rng);
            if best.as_ref().is_none_or(|(d, _)| depth > *d) {
                best = Some((depth, start));
            }
            if depth >= scramble as u32 {
                break;
            }
        }
        best.map(|(_, p)| p)
            .ok_or_else(|| EnvError::Config("could not generate a rushhour layout".into()))
    }

    /// Builds a board from six rows of `.` and vehicle letters; `X` must be
    /// a horizontal car on row 2.
    pub fn from_rows(rows: &[&str]) -> Result<Self, EnvError> {
        let bad = |m: &str| EnvError::Config(format!("bad rushhour layout: {m}"));
        if rows.len() != SIZE || rows.iter().any(|r| r.chars().count() != SIZE) {
            return Err(bad("expected 6x6"));
        }
        let grid: Vec<Vec<char>> = rows.iter().map(|r| r.chars().collect()).collect();
        let mut cells: HashMap<char, Vec<(usize, usize)>> = HashMap::new();
        for (r, row) in grid.iter().enumerate() {
            for (c, &ch) in row.iter().enumerate() {
                if ch != '.' {
                    cells.entry(ch).or_default().push((r, c));
                }
            }
        }
        let mut ids: Vec<char> = cells.keys().copied().collect();
        ids.sort_by_key(|&c| (c != 'X', c));
        let mut vehicles = Vec::new();
        let mut pos = Vec::new();
        for id in ids {
            let cs = &cells[&id];
            let horizontal = cs.iter().all(|&(r, _)| r == cs[0].0);
            let vertical = cs.iter().all(|&(_, c)| c == cs[0].1);
            if cs.len() < 2 || !(horizontal ^ vertical) {
                return Err(bad(&format!("vehicle {id} must be a straight line of length >= 2")));
            }
            let (lane, start) = if horizontal {
                (cs[0].0, cs.iter().map(|&(_, c)| c).min().unwrap_or(0))
            } else {
                (cs[0].1, cs.iter().map(|&(r, _)| r).min().unwrap_or(0))
            };
            vehicles.push(Vehicle {
                id,
                horizontal,
                len: cs.len(),
                lane,
            });
            pos.push(start);
        }
        match vehicles.first() {
            Some(v) if v.id == 'X' && v.horizontal && v.lane == EXIT_ROW => {}
            _ => return Err(bad("X must be horizontal on row 2")),
        }
        Ok(Self { vehicles, pos })
    }

    fn solved_layout(count: usize, rng: &mut SeededRng) -> Self {
        let mut puzzle = Self {
            vehicles: vec![Vehicle {
                id: 'X',
                horizontal: true,
                len: 2,
                lane: EXIT_ROW,
            }],
            pos: vec![SIZE - 2],
        };
        let ids = ('A'..='Z').filter(|&c| c != 'X');
        let mut ids = ids.take(count);
        let mut attempts = 0;
        while puzzle.vehicles.len() < count + 1 && attempts < 2000 {
            attempts += 1;
            let horizontal = rng.gen_bool(0.5);
            let len = if rng.gen_bool(0.75) { 2 } else { 3 };
            let lane = rng.gen_range(0..SIZE);
            let start = rng.gen_range(0..=SIZE - len);
            if horizontal && lane == EXIT_ROW {
                continue;
            }
            let occ = puzzle.occupancy();
            // The cell behind X stays free so X can leave the exit.
            let free = (start..start + len).all(|k| {
                let (r, c) = if horizontal { (lane, k) } else { (k, lane) };
                occ[r][c].is_none() && (r, c) != (EXIT_ROW, SIZE - 3)
            });
            if free {
                let Some(id) = ids.next() else { break };
                puzzle.vehicles.push(Vehicle {
                    id,
                    horizontal,
                    len,
                    lane,
                });
                puzzle.pos.push(start);
            }
        }
        puzzle
    }

    fn encode(pos: &[usize]) -> u64 {
        pos.iter().fold(0u64, |acc, &p| (acc << 3) | p as u64)
    }

    fn decode(&mut self, mut key: u64) {
        for p in self.pos.iter_mut().rev() {
            *p = (key & 7) as usize;
            key >>= 3;
        }
    }

    /// Shortest-solution length for every state reachable from this one.
    fn solution_depths(&self) -> HashMap<u64, u32> {
        let graph = Packed::new(self);
        let root = Self::encode(&self.pos);
        let mut seen = vec![root];
        let mut known: HashSet<u64> = HashSet::from([root]);
        let mut i = 0;
        while i < seen.len() && seen.len() < STATE_CAP {
            let key = seen[i];
            i += 1;
            graph.for_each_neighbour(key, |_, next| {
                if known.insert(next) {
                    seen.push(next);
                }
            });
        }
        let mut depth: HashMap<u64, u32> = HashMap::with_capacity(seen.len());
        let mut queue = VecDeque::new();
        for &key in &seen {
            if graph.is_solved(key) {
                depth.insert(key, 0);
                queue.push_back(key);
            }
        }
        while let Some(key) = queue.pop_front() {
            let d = depth[&key];
            graph.for_each_neighbour(key, |_, next| {
                if known.contains(&next) && !depth.contains_key(&next) {
                    depth.insert(next, d + 1);
                    queue.push_back(next);
                }
            });
        }
        depth
    }

    /// Draws a start state at the target depth, or among the deepest states.
    fn pick_start(&self, target: u32, rng: &mut SeededRng) -> (u32, Self) {
        let depths = self.solution_depths();
        let deepest = depths.values().copied().max().unwrap_or(0);
        let want = target.min(deepest);
        let mut keys: Vec<u64> = depths.iter().filter(|(_, &d)| d == want).map(|(&k, _)| k).collect();
        keys.sort_unstable();
        let mut start = self.clone();
        if !keys.is_empty() {
            start.decode(keys[rng.gen_range(0..keys.len())]);
        }
        (want, start)
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    /// Column of X's leading cell.
    pub fn front(&self) -> usize {
        self.pos[0] + self.vehicles[0].len - 1
    }

    pub fn is_solved(&self) -> bool {
        self.front() == SIZE - 1
    }

    fn cells(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let v = self.vehicles[i];
        let p = self.pos[i];
        (p..p + v.len).map(move |k| if v.horizontal { (v.lane, k) } else { (k, v.lane) })
    }

    fn occupancy(&self) -> [[Option<usize>; SIZE]; SIZE] {
        let mut occ = [[None; SIZE]; SIZE];
        for i in 0..self.vehicles.len() {
            for (r, c) in self.cells(i) {
                occ[r][c] = Some(i);
            }
        }
        occ
    }

    fn is_legal(&self, m: Move, occ: &[[Option<usize>; SIZE]; SIZE]) -> bool {
        let v = self.vehicles[m.vehicle];
        let p = self.pos[m.vehicle];
        let target = if m.forward {
            if p + v.len >= SIZE {
                return false;
            }
            p + v.len
        } else {
            match p.checked_sub(1) {
                Some(t) => t,
                None => return false,
            }
        };
        let (r, c) = if v.horizontal { (v.lane, target) } else { (target, v.lane) };
        occ[r][c].is_none()
    }

    pub fn legal_moves(&self) -> Vec<Move> {
        let occ = self.occupancy();
        (0..self.vehicles.len())
            .flat_map(|vehicle| {
                [true, false].map(|forward| Move { vehicle, forward })
            })
            .filter(|&m| self.is_legal(m, &occ))
            .collect()
    }

    fn apply_move(&mut self, m: Move) {
        if m.forward {
            self.pos[m.vehicle] += 1;
        } else {
            self.pos[m.vehicle] -= 1;
        }
    }

    pub fn move_name(&self, m: Move) -> String {
        format!("[{}{}]", self.vehicles[m.vehicle].id, if m.forward { '+' } else { '-' })
    }

    /// Shortest sequence of unit moves to the exit (BFS).
    pub fn solve(&self) -> Option<Vec<Move>> {
        let graph = Packed::new(self);
        let root = Self::encode(&self.pos);
        if graph.is_solved(root) {
            return Some(Vec::new());
        }
        let mut parent: HashMap<u64, (u64, Move)> = HashMap::new();
        let mut queue = VecDeque::from([root]);
        while let Some(key) = queue.pop_front() {
            let mut found = None;
            graph.for_each_neighbour(key, |m, next| {
                if found.is_some() || next == root || parent.contains_key(&next) {
                    return;
                }
                parent.insert(next, (key, m));
                if graph.is_solved(next) {
                    found = Some(next);
                }
                queue.push_back(next);
            });
            if let Some(mut cur) = found {
                let mut path = Vec::new();
                while cur != root {
                    let (prev, m) = parent[&cur];
                    path.push(m);
                    cur = prev;
                }
                path.reverse();
                return Some(path);
            }
        }
        None
    }

    fn parse(&self, text: &str) -> Option<Move> {
        let upper = text.to_ascii_uppercase();
        let bytes: Vec<char> = upper.chars().collect();
        let mut found = None;
        for i in 0..bytes.len().saturating_sub(3) {
            if bytes[i] == '[' && bytes[i + 3] == ']' && matches!(bytes[i + 2], '+' | '-') {
                found = Some((bytes[i + 1], bytes[i + 2] == '+'));
            }
        }
        let (id, forward) = found?;
        let vehicle = self.vehicles.iter().position(|v| v.id == id)?;
        Some(Move { vehicle, forward })
    }
}

/// Bit-packed view of a layout for state-space search. A state is the
/// vehicle offsets packed 3 bits each; occupancy is a 36-bit cell mask.
struct Packed {
    /// Cell mask for each vehicle at each offset.
    masks: Vec<[u64; SIZE]>,
    lens: Vec<usize>,
    n: usize,
}

impl Packed {
    fn new(p: &RushHour) -> Self {
        let masks = p
            .vehicles
            .iter()
            .map(|v| {
                let mut per = [0u64; SIZE];
                for (off, m) in per.iter_mut().enumerate().take(SIZE + 1 - v.len) {
                    for k in off..off + v.len {
                        let (r, c) = if v.horizontal { (v.lane, k) } else { (k, v.lane) };
                        *m |= 1 << (r * SIZE + c);
                    }
                }
                per
            })
            .collect();
        Self {
            masks,
            lens: p.vehicles.iter().map(|v| v.len).collect(),
            n: p.vehicles.len(),
        }
    }

    fn offset(&self, key: u64, i: usize) -> usize {
        ((key >> (3 * (self.n - 1 - i))) & 7) as usize
    }

    fn is_solved(&self, key: u64) -> bool {
        self.offset(key, 0) + self.lens[0] == SIZE
    }

    fn for_each_neighbour(&self, key: u64, mut f: impl FnMut(Move, u64)) {
        let occ = (0..self.n).fold(0u64, |acc, i| acc | self.masks[i][self.offset(key, i)]);
        for i in 0..self.n {
            let off = self.offset(key, i);
            let own = self.masks[i][off];
            let shift = 3 * (self.n - 1 - i);
            if off + self.lens[i] < SIZE && (self.masks[i][off + 1] & !own & occ) == 0 {
                f(Move { vehicle: i, forward: true }, key + (1 << shift));
            }
            if off > 0 && (self.masks[i][off - 1] & !own & occ) == 0 {
                f(Move { vehicle: i, forward: false }, key - (1 << shift));
            }
        }
    }
}

impl Game for RushHour {
    fn instructions(&self) -> String {
        "You are solving a Rush Hour puzzle on a 6x6 board. Each letter is a vehicle; `.` is \
         empty. Horizontal vehicles move left/right and vertical vehicles move up/down, one cell \
         per turn. Reply with [A+] to move vehicle A right or down, or [A-] to move it left or up."
            .to_string()
    }

    fn goal(&self) -> String {
        format!(
            "Goal: drive car X to the exit on the right edge of row {EXIT_ROW} (marked >)."
        )
    }

    fn render(&self) -> String {
        let occ = self.occupancy();
        let mut s = String::new();
        for (r, row) in occ.iter().enumerate() {
            for cell in row {
                s.push(cell.map_or('.', |i| self.vehicles[i].id));
            }
            if r == EXIT_ROW {
                s.push('>');
            }
            s.push('\n');
        }
        let moves: Vec<String> = self.legal_moves().into_iter().map(|m| self.move_name(m)).collect();
        s.push_str(&format!("Valid actions: {}.", moves.join(", ")));
        s
    }

    fn apply(&mut self, action: &str) -> Outcome {
        let Some(m) = self.parse(action) else {
            return Outcome::Invalid("reply with [A+] or [A-] for a vehicle on the board.".into());
        };
        let name = self.move_name(m);
        if !self.is_legal(m, &self.occupancy()) {
            return Outcome::Invalid(format!("{name} is blocked."));
        }
        self.apply_move(m);
        if self.is_solved() {
            Outcome::Goal("Car X reached the exit!".into())
        } else {
            Outcome::Continue(format!("Moved {name}."))
        }
    }

    fn partial_reward(&self) -> f64 {
        (1.0 - (SIZE - 1 - self.front()) as f64 / 4.0).clamp(0.0, 1.0)
    }

    fn optimal_hint(&self) -> Option<String> {
        self.solve()?.first().map(|&m| self.move_name(m))
    }

    fn action_space(&self) -> Vec<String> {
        self.vehicles
            .iter()
            .flat_map(|v| [format!("[{}+]", v.id), format!("[{}-]", v.id)])
            .collect()
    }

    fn clone_box(&self) -> Box<dyn Game> {
        Box::new(self.clone())
    }
}
