//! Test-side reference implementations. None of these call into the library
//! code they are compared against.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use inertia_core::attention::{AttentionRecord, Category, Span};
use inertia_core::policy::PolicyConfig;
use rand::Rng;

/// Visible-round sets for turns `1..=turns` under the clearing recurrence,
/// tracked as a plain list of retained rounds.
pub fn clip_visible_oracle(threshold: usize, retain: usize, turns: usize) -> Vec<BTreeSet<usize>> {
    let mut retained: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(turns);
    for t in 1..=turns {
        let next: Vec<usize> = if retained.len() + 1 == threshold {
            (1..=t).rev().take(retain).collect::<Vec<_>>().into_iter().rev().collect()
        } else {
            retained.iter().copied().chain(std::iter::once(t)).collect()
        };
        let mut visible: BTreeSet<usize> = next.iter().copied().collect();
        visible.insert(t);
        out.push(visible);
        retained = next;
    }
    out
}

/// Visible rounds of any non-summary policy, from the definitions.
pub fn visible_oracle(policy: PolicyConfig, turns: usize) -> Vec<BTreeSet<usize>> {
    match policy {
        PolicyConfig::Long => (1..=turns).map(|t| (1..=t).collect()).collect(),
        PolicyConfig::Window { size } => (1..=turns)
            .map(|t| (1..=t).filter(|&i| i + size > t).collect())
            .collect(),
        PolicyConfig::Clip { threshold, retain } | PolicyConfig::Summary { threshold, retain } => {
            clip_visible_oracle(threshold, retain, turns)
        }
    }
}

/// Reference 2048 row merge toward index 0: compact, then merge adjacent
/// equal pairs left to right, each tile at most once.
pub fn merge_oracle(row: [u32; 4]) -> ([u32; 4], u32) {
    let tiles: Vec<u32> = row.iter().copied().filter(|&v| v != 0).collect();
    let mut merged = Vec::new();
    let mut score = 0;
    let mut i = 0;
    while i < tiles.len() {
        if i + 1 < tiles.len() && tiles[i] == tiles[i + 1] {
            merged.push(tiles[i] * 2);
            score += tiles[i] * 2;
            i += 2;
        } else {
            merged.push(tiles[i]);
            i += 1;
        }
    }
    let mut out = [0; 4];
    out[..merged.len()].copy_from_slice(&merged);
    (out, score)
}

/// Fraction of letter positions in `word` whose letter was guessed.
pub fn hangman_oracle(word: &str, guessed: &[char]) -> f64 {
    let hits = word.chars().filter(|c| guessed.contains(c)).count();
    hits as f64 / word.chars().count() as f64
}

/// Parsed FrozenLake board: `cells[r][c]` is one of ' ', 'H', 'G'.
#[derive(Debug, Clone)]
pub struct LakeBoard {
    pub cells: Vec<Vec<char>>,
    pub player: (usize, usize),
}

/// Reads the `| x | y |` grid rendering; the player cell is recorded as frozen.
pub fn parse_lake(observation: &str) -> LakeBoard {
    let mut cells = Vec::new();
    let mut player = (0, 0);
    for line in observation.lines().filter(|l| l.starts_with('|')) {
        let row: Vec<char> = line
            .trim_matches('|')
            .split('|')
            .map(|cell| cell.chars().nth(1).unwrap_or(' '))
            .collect();
        if let Some(c) = row.iter().position(|&ch| ch == 'P') {
            player = (cells.len(), c);
        }
        cells.push(row.into_iter().map(|ch| if ch == 'P' { ' ' } else { ch }).collect());
    }
    LakeBoard { cells, player }
}

fn neighbours(n: usize, (r, c): (usize, usize)) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    if r > 0 {
        v.push((r - 1, c));
    }
    if r + 1 < n {
        v.push((r + 1, c));
    }
    if c > 0 {
        v.push((r, c - 1));
    }
    if c + 1 < n {
        v.push((r, c + 1));
    }
    v
}

/// Shortest safe-path length from every cell to the goal; a hole scores one
/// more than its best safe neighbour.
pub fn lake_distance(board: &LakeBoard, cell: (usize, usize)) -> Option<usize> {
    let n = board.cells.len();
    let goal = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .find(|&(r, c)| board.cells[r][c] == 'G')?;
    let mut dist: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    dist.insert(goal, 0);
    let mut queue = VecDeque::from([goal]);
    while let Some(cur) = queue.pop_front() {
        for next in neighbours(n, cur) {
            if board.cells[next.0][next.1] != 'H' && !dist.contains_key(&next) {
                dist.insert(next, dist[&cur] + 1);
                queue.push_back(next);
            }
        }
    }
    if board.cells[cell.0][cell.1] == 'H' {
        neighbours(n, cell).iter().filter_map(|c| dist.get(c)).min().map(|d| d + 1)
    } else {
        dist.get(&cell).copied()
    }
}

/// Progress reward `clamp(1 - d(cell) / d(start), 0, 1)`.
pub fn lake_reward_oracle(board: &LakeBoard, start: (usize, usize), cell: (usize, usize)) -> f64 {
    match (lake_distance(board, start), lake_distance(board, cell)) {
        (Some(0), _) => 1.0,
        (Some(d0), Some(d)) => (1.0 - d as f64 / d0 as f64).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

/// Random causal record of at most `max_tokens` tokens with a realistic
/// chat layout and previous responses of varying length. Some responses are
/// split across two spans.
pub fn random_record<R: Rng>(rng: &mut R, max_tokens: usize) -> AttentionRecord {
    loop {
        let mut spans = Vec::new();
        let mut cursor = 0;
        let mut push = |len: usize, category: Category, round: usize, cursor: &mut usize| {
            spans.push(Span {
                start: *cursor,
                end: *cursor + len,
                category,
                round_index: round,
            });
            *cursor += len;
        };
        push(3, Category::Sink, 0, &mut cursor);
        push(rng.gen_range(1..12), Category::System, 0, &mut cursor);
        push(rng.gen_range(1..8), Category::User, 0, &mut cursor);
        let rounds = rng.gen_range(0..6);
        for round in 1..=rounds {
            push(rng.gen_range(1..10), Category::User, round, &mut cursor);
            if rng.gen_bool(0.3) {
                push(rng.gen_range(1..5), Category::PrevAssistant, round, &mut cursor);
                push(rng.gen_range(1..5), Category::PrevAssistant, round, &mut cursor);
            } else {
                push(rng.gen_range(1..12), Category::PrevAssistant, round, &mut cursor);
            }
        }
        push(rng.gen_range(1..8), Category::User, rounds + 1, &mut cursor);
        push(rng.gen_range(1..14), Category::CurAssistant, rounds + 1, &mut cursor);
        let n = cursor;
        if n > max_tokens {
            continue;
        }
        let mut matrix = vec![0.0f32; n * n];
        for i in 0..n {
            let weights: Vec<f64> = (0..=i).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let z: f64 = weights.iter().sum();
            for (j, w) in weights.iter().enumerate() {
                matrix[i * n + j] = (w / z) as f32;
            }
        }
        return AttentionRecord::new(n, spans, matrix).expect("valid layout");
    }
}

fn category_of(rec: &AttentionRecord, j: usize) -> Category {
    rec.spans
        .iter()
        .find(|s| s.start <= j && j < s.end)
        .map(|s| s.category)
        .expect("spans cover every token")
}

fn output_range(rec: &AttentionRecord) -> (usize, usize) {
    let cur: Vec<&Span> = rec
        .spans
        .iter()
        .filter(|s| s.category == Category::CurAssistant)
        .collect();
    (
        cur.iter().map(|s| s.start).min().unwrap(),
        cur.iter().map(|s| s.end).max().unwrap(),
    )
}

/// Mean over output tokens of the attention mass per category.
pub fn category_oracle(rec: &AttentionRecord) -> BTreeMap<Category, f64> {
    let (lo, hi) = output_range(rec);
    let n = rec.n_tokens;
    let mut mass: BTreeMap<Category, f64> = Category::ALL.iter().map(|&c| (c, 0.0)).collect();
    for i in lo..hi {
        for j in 0..n {
            *mass.get_mut(&category_of(rec, j)).unwrap() += rec.matrix[i * n + j] as f64;
        }
    }
    for v in mass.values_mut() {
        *v /= (hi - lo) as f64;
    }
    mass
}

/// Mean over output tokens of attention within `r` positions of the
/// offset-matched token in each previous response.
pub fn diagonal_oracle(rec: &AttentionRecord, r: usize) -> f64 {
    let (lo, hi) = output_range(rec);
    let n = rec.n_tokens;
    let mut responses: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        let span = rec.spans.iter().find(|s| s.start <= j && j < s.end).unwrap();
        if span.category == Category::PrevAssistant {
            responses.entry(span.round_index).or_default().push(j);
        }
    }
    let mut total = 0.0;
    for i in lo..hi {
        let oi = (i - lo) as i64;
        for tokens in responses.values() {
            for (oj, &j) in tokens.iter().enumerate() {
                if (oj as i64 - oi).unsigned_abs() as usize <= r {
                    total += rec.matrix[i * n + j] as f64;
                }
            }
        }
    }
    total / (hi - lo) as f64
}

/// FNV-1a over message contents; drives deterministic mock agents.
pub fn fnv(parts: impl IntoIterator<Item = impl AsRef<[u8]>>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in p.as_ref() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
