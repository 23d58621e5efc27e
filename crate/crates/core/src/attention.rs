//! Attention-category ratios and the diagonal inertia metric.
//!
//! A record holds one generation step's attention matrix (final layer,
//! heads averaged) together with token-role spans. On disk a record is a
//! JSON metadata document plus a sibling flat file of row-major
//! little-endian `f32` values.
//!
//! The diagonal metric aligns offsets within responses: output token `i` of
//! the current response is compared with token `j` of each previous
//! response and counts when `|j - i| <= r`.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

pub const SINK_TOKENS: usize = 3;
pub const DEFAULT_BAND: usize = 5;
const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("invalid attention record: {0}")]
    Invalid(String),
    #[error("output span is empty")]
    EmptyOutput,
    #[error("turn indices must be strictly increasing (turn {0} follows {1})")]
    TurnOrder(usize, usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Sink,
    System,
    User,
    PrevAssistant,
    CurAssistant,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Sink,
        Category::System,
        Category::User,
        Category::PrevAssistant,
        Category::CurAssistant,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub category: Category,
    pub round_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub n_tokens: usize,
    pub spans: Vec<Span>,
    /// Row-major `n_tokens x n_tokens`; rows are queries.
    pub matrix: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordMeta {
    n_tokens: usize,
    spans: Vec<Span>,
    dtype: String,
    matrix_file: String,
}

/// Mean attention mass per category, averaged over output tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryMass {
    pub sink: f64,
    pub system: f64,
    pub user: f64,
    pub prev_assistant: f64,
    pub cur_assistant: f64,
}

impl CategoryMass {
    fn from_slots(s: [f64; 5]) -> Self {
        Self {
            sink: s[0],
            system: s[1],
            user: s[2],
            prev_assistant: s[3],
            cur_assistant: s[4],
        }
    }

    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Sink => self.sink,
            Category::System => self.system,
            Category::User => self.user,
            Category::PrevAssistant => self.prev_assistant,
            Category::CurAssistant => self.cur_assistant,
        }
    }

    pub fn total(&self) -> f64 {
        Category::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub mass: CategoryMass,
    pub diagonal_ratio: f64,
    pub n_output_tokens: usize,
}

impl AttentionRecord {
    /// Checks structure. Spans must partition `[0, n_tokens)` and the sink
    /// must be exactly the first three tokens.
    pub fn new(n_tokens: usize, spans: Vec<Span>, matrix: Vec<f32>) -> Result<Self, AttentionError> {
        let rec = Self {
            n_tokens,
            spans,
            matrix,
        };
        rec.check_structure()?;
        Ok(rec)
    }

    fn check_structure(&self) -> Result<(), AttentionError> {
        let bad = |m: String| Err(AttentionError::Invalid(m));
        if self.matrix.len() != self.n_tokens * self.n_tokens {
            return bad(format!(
                "matrix has {} entries, expected {}",
                self.matrix.len(),
                self.n_tokens * self.n_tokens
            ));
        }
        let mut sorted: Vec<&Span> = self.spans.iter().collect();
        sorted.sort_by_key(|s| s.start);
        let mut cursor = 0;
        for s in &sorted {
            if s.start != cursor || s.end <= s.start {
                return bad(format!("spans do not partition the sequence at token {cursor}"));
            }
            cursor = s.end;
        }
        if cursor != self.n_tokens {
            return bad(format!("spans cover {cursor} of {} tokens", self.n_tokens));
        }
        let sink: Vec<&&Span> = sorted.iter().filter(|s| s.category == Category::Sink).collect();
        let sink_ok = match sink.as_slice() {
            [s] => s.start == 0 && s.end == SINK_TOKENS.min(self.n_tokens),
            _ => false,
        };
        if !sink_ok {
            return bad("sink must be exactly tokens [0, 3)".into());
        }
        Ok(())
    }

    /// Soft checks: row sums near one and causal support.
    pub fn warnings(&self) -> Vec<String> {
        let n = self.n_tokens;
        let mut out = Vec::new();
        for i in 0..n {
            let row = &self.matrix[i * n..(i + 1) * n];
            let sum: f64 = row.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(format!("row {i} sums to {sum:.6}"));
            }
            if let Some(j) = (i + 1..n).find(|&j| row[j] != 0.0) {
                out.push(format!("row {i} attends to future token {j}"));
            }
        }
        out
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n_tokens + j] as f64
    }

    fn categories(&self) -> Vec<Category> {
        let mut cats = vec![Category::User; self.n_tokens];
        for s in &self.spans {
            cats[s.start..s.end].fill(s.category);
        }
        cats
    }

    /// The current response: the union of `cur_assistant` spans.
    pub fn output_span(&self) -> Option<Range<usize>> {
        let cur = self.spans.iter().filter(|s| s.category == Category::CurAssistant);
        let start = cur.clone().map(|s| s.start).min()?;
        let end = cur.map(|s| s.end).max()?;
        Some(start..end)
    }

    /// Within-response offset of every `prev_assistant` token; tokens of
    /// one round form one response.
    fn previous_offsets(&self) -> Vec<Option<usize>> {
        let mut by_round: BTreeMap<usize, Vec<&Span>> = BTreeMap::new();
        for s in self.spans.iter().filter(|s| s.category == Category::PrevAssistant) {
            by_round.entry(s.round_index).or_default().push(s);
        }
        let mut offsets = vec![None; self.n_tokens];
        for spans in by_round.values_mut() {
            spans.sort_by_key(|s| s.start);
            let mut k = 0;
            for s in spans.iter() {
                for slot in &mut offsets[s.start..s.end] {
                    *slot = Some(k);
                    k += 1;
                }
            }
        }
        offsets
    }

    fn check_output(&self, output: &Range<usize>) -> Result<(), AttentionError> {
        if output.is_empty() {
            return Err(AttentionError::EmptyOutput);
        }
        if output.end > self.n_tokens {
            return Err(AttentionError::Invalid("output span exceeds the sequence".into()));
        }
        Ok(())
    }

    /// Per output token, sums attention into each category; averages over
    /// output tokens.
    pub fn category_ratios(&self, output: Range<usize>) -> Result<CategoryMass, AttentionError> {
        self.check_output(&output)?;
        let cats = self.categories();
        let mut totals = [0.0f64; 5];
        for i in output.clone() {
            let mut row = [0.0f64; 5];
            for (j, c) in cats.iter().enumerate() {
                row[c.slot()] += self.at(i, j);
            }
            for k in 0..5 {
                totals[k] += row[k];
            }
        }
        let n = output.len() as f64;
        Ok(CategoryMass::from_slots(totals.map(|t| t / n)))
    }

    /// Mean over output tokens of the attention falling inside the band
    /// `|j - i| <= r` of each previous response. Zero without previous
    /// responses.
    pub fn diagonal_ratio(&self, output: Range<usize>, r: usize) -> Result<f64, AttentionError> {
        self.check_output(&output)?;
        let offsets = self.previous_offsets();
        let cats = self.categories();
        let base = self.output_span().map_or(output.start, |s| s.start);
        let mut total = 0.0f64;
        for i in output.clone() {
            let oi = i - base.min(i);
            let mut row = 0.0f64;
            for (j, c) in cats.iter().enumerate() {
                if *c != Category::PrevAssistant {
                    continue;
                }
                if let Some(oj) = offsets[j] {
                    if oj.abs_diff(oi) <= r {
                        row += self.at(i, j);
                    }
                }
            }
            total += row;
        }
        Ok(total / output.len() as f64)
    }

    /// Both metrics over the record's own output span.
    pub fn report(&self, r: usize) -> Result<RatioReport, AttentionError> {
        let output = self.output_span().ok_or(AttentionError::EmptyOutput)?;
        Ok(RatioReport {
            mass: self.category_ratios(output.clone())?,
            diagonal_ratio: self.diagonal_ratio(output.clone(), r)?,
            n_output_tokens: output.len(),
        })
    }

    /// Writes `<meta_path>` and a sibling `.f32` matrix file; returns the
    /// matrix file path.
    pub fn write(&self, meta_path: &Path) -> Result<PathBuf, AttentionError> {
        let matrix_path = meta_path.with_extension("f32");
        let file_name = matrix_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let meta = RecordMeta {
            n_tokens: self.n_tokens,
            spans: self.spans.clone(),
            dtype: "f32".into(),
            matrix_file: file_name,
        };
        let json = serde_json::to_vec_pretty(&meta).map_err(|source| AttentionError::Json {
            path: meta_path.to_path_buf(),
            source,
        })?;
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AttentionError::Io { path, source }
        };
        fs::write(meta_path, json).map_err(io(meta_path))?;
        let bytes: Vec<u8> = self.matrix.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&matrix_path, bytes).map_err(io(&matrix_path))?;
        Ok(matrix_path)
    }

    /// Reads a record and returns it with any soft-check warnings.
    pub fn read(meta_path: &Path) -> Result<(Self, Vec<String>), AttentionError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AttentionError::Io { path, source }
        };
        let text = fs::read(meta_path).map_err(io(meta_path))?;
        let meta: RecordMeta = serde_json::from_slice(&text).map_err(|source| AttentionError::Json {
            path: meta_path.to_path_buf(),
            source,
        })?;
        if meta.dtype != "f32" {
            return Err(AttentionError::Invalid(format!("unsupported dtype `{}`", meta.dtype)));
        }
        let matrix_path = meta_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&meta.matrix_file);
        let bytes = fs::read(&matrix_path).map_err(io(&matrix_path))?;
        if bytes.len() % 4 != 0 {
            return Err(AttentionError::Invalid("matrix file length is not a multiple of 4".into()));
        }
        let matrix = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let rec = Self::new(meta.n_tokens, meta.spans, matrix)?;
        let warnings = rec.warnings();
        Ok((rec, warnings))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub turn: usize,
    pub report: RatioReport,
}

/// Per-turn reports for one conversation; turns must strictly increase.
pub fn trend_curve(
    records: &[(usize, AttentionRecord)],
    r: usize,
) -> Result<Vec<TrendPoint>, AttentionError> {
    for pair in records.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(AttentionError::TurnOrder(pair[1].0, pair[0].0));
        }
    }
    records
        .iter()
        .map(|(turn, rec)| {
            Ok(TrendPoint {
                turn: *turn,
                report: rec.report(r)?,
            })
        })
        .collect()
}

/// Layout of a synthetic record.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticShape {
    pub system_tokens: usize,
    pub goal_tokens: usize,
    pub observation_tokens: usize,
    pub response_tokens: usize,
    /// Completed rounds before the current response.
    pub previous_rounds: usize,
}

impl Default for SyntheticShape {
    fn default() -> Self {
        Self {
            system_tokens: 12,
            goal_tokens: 6,
            observation_tokens: 8,
            response_tokens: 6,
            previous_rounds: 3,
        }
    }
}

/// Builds a causal record whose output tokens place `copy` of their mass on
/// the offset-matched tokens of previous responses and spread the rest
/// uniformly over the visible prefix. Other rows are uniform.
pub fn synthetic_record(shape: SyntheticShape, copy: f64, rng: &mut SeededRng) -> AttentionRecord {
    let mut spans = Vec::new();
    let mut cursor = 0;
    let mut push = |len: usize, category: Category, round_index: usize, cursor: &mut usize| {
        if len > 0 {
            spans.push(Span {
                start: *cursor,
                end: *cursor + len,
                category,
                round_index,
            });
            *cursor += len;
        }
    };
    push(SINK_TOKENS, Category::Sink, 0, &mut cursor);
    push(shape.system_tokens, Category::System, 0, &mut cursor);
    push(shape.goal_tokens, Category::User, 0, &mut cursor);
    for round in 1..=shape.previous_rounds {
        push(shape.observation_tokens, Category::User, round, &mut cursor);
        push(shape.response_tokens, Category::PrevAssistant, round, &mut cursor);
    }
    let current = shape.previous_rounds + 1;
    push(shape.observation_tokens, Category::User, current, &mut cursor);
    push(shape.response_tokens.max(1), Category::CurAssistant, current, &mut cursor);
    let n = cursor;
    let out_start = n - shape.response_tokens.max(1);
    let prev_starts: Vec<usize> = spans
        .iter()
        .filter(|s| s.category == Category::PrevAssistant)
        .map(|s| s.start)
        .collect();
    let mut matrix = vec![0.0f32; n * n];
    for i in 0..n {
        let mut row = vec![0.0f64; i + 1];
        // Small jitter keeps rows distinct without breaking normalization.
        for v in row.iter_mut() {
            *v = 1.0 + 0.1 * rng.gen::<f64>();
        }
        let z: f64 = row.iter().sum();
        let copy_here = if i >= out_start && !prev_starts.is_empty() { copy } else { 0.0 };
        for v in row.iter_mut() {
            *v *= (1.0 - copy_here) / z;
        }
        if copy_here > 0.0 {
            let k = i - out_start;
            let share = copy_here / prev_starts.len() as f64;
            for &s in &prev_starts {
                let target = (s + k).min(s + shape.response_tokens - 1);
                row[target] += share;
            }
        }
        for (j, v) in row.into_iter().enumerate() {
            matrix[i * n + j] = v as f32;
        }
    }
    AttentionRecord {
        n_tokens: n,
        spans,
        matrix,
    }
}
