//! Minimum-edit alignment between signature sequences, normalized structural
//! edit distance, and first-divergence localization.
//!
//! Alignment is unit-cost Wagner–Fischer. The DP table is filled over
//! *suffixes* and the alignment is read off front to back, preferring
//! Match, then Substitute, then Delete, then Insert whenever several moves are
//! optimal. Reading forward with diagonal preference keeps matches as early
//! as possible, so the first non-match is the earliest point at which every
//! optimal alignment must already disagree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signature::Signature;
use crate::trace::EventKind;

/// Default ceiling on `m * n` cells for a full alignment matrix.
pub const DEFAULT_CELL_BUDGET: u64 = 100_000_000;

/// One step of an alignment; `i` indexes the clean sequence, `j` the perturbed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlignOp {
    Match(usize, usize),
    Substitute(usize, usize),
    Delete(usize),
    Insert(usize),
}

impl AlignOp {
    fn clean_index(self) -> Option<usize> {
        match self {
            AlignOp::Match(i, _) | AlignOp::Substitute(i, _) | AlignOp::Delete(i) => Some(i),
            AlignOp::Insert(_) => None,
        }
    }

    fn perturbed_index(self) -> Option<usize> {
        match self {
            AlignOp::Match(_, j) | AlignOp::Substitute(_, j) | AlignOp::Insert(j) => Some(j),
            AlignOp::Delete(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
    pub cost: usize,
}

impl Alignment {
    /// Applies the edit script to `a`, taking inserted and substituted items from `b`.
    /// Returns `None` when an index is out of range for either sequence.
    pub fn replay<T: Clone>(&self, a: &[T], b: &[T]) -> Option<Vec<T>> {
        let mut out = Vec::with_capacity(b.len());
        for op in &self.ops {
            match *op {
                AlignOp::Match(i, _) => out.push(a.get(i)?.clone()),
                AlignOp::Substitute(_, j) | AlignOp::Insert(j) => out.push(b.get(j)?.clone()),
                AlignOp::Delete(i) => {
                    a.get(i)?;
                }
            }
        }
        Some(out)
    }

    /// Checks that this alignment is a well-formed edit script from `a` to `b`:
    /// every index consumed exactly once and in order, matches only on equal
    /// items, substitutions only on unequal ones, and `cost` equal to the
    /// number of non-match steps.
    pub fn is_consistent<T: PartialEq>(&self, a: &[T], b: &[T]) -> bool {
        let (mut next_i, mut next_j, mut edits) = (0usize, 0usize, 0usize);
        for op in &self.ops {
            if let Some(i) = op.clean_index() {
                if i != next_i || i >= a.len() {
                    return false;
                }
                next_i += 1;
            }
            if let Some(j) = op.perturbed_index() {
                if j != next_j || j >= b.len() {
                    return false;
                }
                next_j += 1;
            }
            match *op {
                AlignOp::Match(i, j) if a[i] != b[j] => return false,
                AlignOp::Substitute(i, j) if a[i] == b[j] => return false,
                AlignOp::Match(..) => {}
                _ => edits += 1,
            }
        }
        next_i == a.len() && next_j == b.len() && edits == self.cost
    }

    pub fn inserted(&self) -> impl Iterator<Item = usize> + '_ {
        self.ops.iter().filter_map(|op| match op {
            AlignOp::Insert(j) => Some(*j),
            _ => None,
        })
    }

    pub fn deleted(&self) -> impl Iterator<Item = usize> + '_ {
        self.ops.iter().filter_map(|op| match op {
            AlignOp::Delete(i) => Some(*i),
            _ => None,
        })
    }

    pub fn substituted(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ops.iter().filter_map(|op| match op {
            AlignOp::Substitute(i, j) => Some((*i, *j)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DivergenceError {
    #[error("alignment of {clean} x {perturbed} events exceeds the cell budget of {budget}")]
    SequenceTooLong { clean: usize, perturbed: usize, budget: u64 },
}

/// Minimum-edit alignment under the default cell budget.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> Result<Alignment, DivergenceError> {
    align(a, b, DEFAULT_CELL_BUDGET)
}

/// Minimum-edit alignment; fails when `|a| * |b|` exceeds `cell_budget`.
pub fn align<T: PartialEq>(a: &[T], b: &[T], cell_budget: u64) -> Result<Alignment, DivergenceError> {
    let (m, n) = (a.len(), b.len());
    if (m as u128) * (n as u128) > u128::from(cell_budget) {
        return Err(DivergenceError::SequenceTooLong { clean: m, perturbed: n, budget: cell_budget });
    }

    // dist[i * w + j] = edit distance between a[i..] and b[j..]
    let w = n + 1;
    let mut dist = vec![0u32; (m + 1) * w];
    for j in 0..=n {
        dist[m * w + j] = (n - j) as u32;
    }
    for i in (0..m).rev() {
        dist[i * w + n] = (m - i) as u32;
        for j in (0..n).rev() {
            dist[i * w + j] = if a[i] == b[j] {
                dist[(i + 1) * w + j + 1]
            } else {
                1 + dist[(i + 1) * w + j + 1].min(dist[(i + 1) * w + j]).min(dist[i * w + j + 1])
            };
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (0, 0);
    while i < m || j < n {
        let here = dist[i * w + j];
        if i < m && j < n && a[i] == b[j] {
            ops.push(AlignOp::Match(i, j));
            i += 1;
            j += 1;
        } else if i < m && j < n && here == 1 + dist[(i + 1) * w + j + 1] {
            ops.push(AlignOp::Substitute(i, j));
            i += 1;
            j += 1;
        } else if i < m && here == 1 + dist[(i + 1) * w + j] {
            ops.push(AlignOp::Delete(i));
            i += 1;
        } else {
            debug_assert!(j < n && here == 1 + dist[i * w + j + 1]);
            ops.push(AlignOp::Insert(j));
            j += 1;
        }
    }

    Ok(Alignment { ops, cost: dist[0] as usize })
}

/// Edit distance only, in two rows of memory.
pub fn edit_cost<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let n = b.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0usize; n + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] } else { 1 + prev[j].min(prev[j + 1]).min(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// `ED(a, b) / max(|a|, |b|)`, and 0 when both are empty.
pub fn normalized_divergence<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    edit_cost(a, b) as f64 / longest as f64
}

/// What kind of step the first divergence was.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstKind {
    Reroute,
    ToolMismatch,
    ActionMismatch,
    MemoryMismatch,
    OutcomePresenceMismatch,
    Insertion,
    Deletion,
    None,
}

impl FirstKind {
    fn of_substitution(clean: EventKind, perturbed: EventKind) -> Self {
        use EventKind::*;
        let either = |k: &[EventKind]| k.contains(&clean) || k.contains(&perturbed);
        if (clean == TaskOutcome) != (perturbed == TaskOutcome) {
            FirstKind::OutcomePresenceMismatch
        } else if either(&[RoutingDecision]) {
            FirstKind::Reroute
        } else if either(&[ToolInvocation, ToolFailure]) {
            FirstKind::ToolMismatch
        } else if either(&[MemoryWrite, MemoryRead, RetrievalShown]) {
            FirstKind::MemoryMismatch
        } else {
            // agent outputs and halts
            FirstKind::ActionMismatch
        }
    }
}

/// Denominator used to normalize `t*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBase {
    /// Length of the clean trace.
    #[default]
    Clean,
    /// Length of the perturbed trace.
    Perturbed,
    /// Number of alignment steps.
    Aligned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstDivergence {
    pub t_star_raw: Option<usize>,
    pub t_star_norm: Option<f64>,
    pub kind: FirstKind,
}

/// Locates the first non-match step of `alignment`, normalized by clean length.
pub fn first_divergence(alignment: &Alignment, a: &[Signature], b: &[Signature]) -> FirstDivergence {
    first_divergence_with(alignment, a, b, TimeBase::Clean)
}

/// `t*` is always expressed on the clean timeline: for an insertion it is the
/// clean index of the next consumed clean event, or `|a|` if none remains.
pub fn first_divergence_with(
    alignment: &Alignment,
    a: &[Signature],
    b: &[Signature],
    base: TimeBase,
) -> FirstDivergence {
    let Some(pos) = alignment.ops.iter().position(|op| !matches!(op, AlignOp::Match(..))) else {
        return FirstDivergence { t_star_raw: None, t_star_norm: None, kind: FirstKind::None };
    };
    let (t_star, kind) = match alignment.ops[pos] {
        AlignOp::Substitute(i, j) => (i, FirstKind::of_substitution(a[i].kind, b[j].kind)),
        AlignOp::Delete(i) => (i, FirstKind::Deletion),
        AlignOp::Insert(_) => {
            let next = alignment.ops[pos..].iter().find_map(|op| op.clean_index()).unwrap_or(a.len());
            (next, FirstKind::Insertion)
        }
        AlignOp::Match(..) => unreachable!(),
    };
    let denom = match base {
        TimeBase::Clean => a.len(),
        TimeBase::Perturbed => b.len(),
        TimeBase::Aligned => alignment.ops.len(),
    };
    let norm = if denom == 0 { 0.0 } else { (t_star as f64 / denom as f64).clamp(0.0, 1.0) };
    FirstDivergence { t_star_raw: Some(t_star), t_star_norm: Some(norm), kind }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub edit_distance: usize,
    pub d_norm: f64,
    pub t_star_raw: Option<usize>,
    pub t_star_norm: Option<f64>,
    pub first_kind: FirstKind,
}

impl DivergenceReport {
    pub fn from_alignment(alignment: &Alignment, a: &[Signature], b: &[Signature], base: TimeBase) -> Self {
        let longest = a.len().max(b.len());
        let d_norm = if longest == 0 { 0.0 } else { alignment.cost as f64 / longest as f64 };
        let first = first_divergence_with(alignment, a, b, base);
        DivergenceReport {
            edit_distance: alignment.cost,
            d_norm,
            t_star_raw: first.t_star_raw,
            t_star_norm: first.t_star_norm,
            first_kind: first.kind,
        }
    }
}
