//! Corpus-level aggregation of pair analyses.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlflow::Pattern;
use crate::stats::Spread;
use crate::taxonomy::{analyze_pair, AnalysisConfig, ManifestationLabel, PairAnalysis, TimingBucket};
use crate::trace::Trace;

/// Version of the serialized [`AggregateReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Group key for pairs without a perturbation record.
pub const UNKNOWN_GROUP: &str = "unknown";
pub const D_NORM_BINS: usize = 10;

/// A count over an explicit denominator. `fraction` is absent when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub denominator: usize,
    pub fraction: Option<f64>,
}

impl Share {
    pub fn new(count: usize, denominator: usize) -> Self {
        let fraction = (denominator > 0).then(|| count as f64 / denominator as f64);
        Share { count, denominator, fraction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternShare {
    pub count: usize,
    /// Over pairs labelled detour_recovery or combined.
    pub of_divergent: Share,
    pub of_all: Share,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStats {
    pub pairs: usize,
    pub d_norm: Option<Spread>,
    /// Over pairs with a defined overhead.
    pub overhead: Option<Spread>,
    pub recovered: usize,
    pub recovery_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityStats {
    pub pairs: usize,
    pub divergent: usize,
    pub patterns: BTreeMap<String, PatternShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub task: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub pairs: usize,
    pub divergent_pairs: usize,
    pub by_manifestation: BTreeMap<String, Share>,
    pub by_pattern: BTreeMap<String, PatternShare>,
    pub by_perturbation: BTreeMap<String, OperatorStats>,
    pub by_modality: BTreeMap<String, ModalityStats>,
    pub timing_histogram: BTreeMap<String, usize>,
    pub cost_by_manifestation: BTreeMap<String, Option<Spread>>,
    pub d_norm_histogram: Vec<HistogramBin>,
    pub config_echo: AnalysisConfig,
    pub errors: Vec<PairFailure>,
}

/// Analyzes pairs in parallel. Results come back in input order.
pub fn analyze_all(pairs: &[(Trace, Trace)], config: &AnalysisConfig) -> Vec<Result<PairAnalysis, PairFailure>> {
    pairs
        .par_iter()
        .map(|(c, p)| {
            analyze_pair(c, p, config)
                .map_err(|e| PairFailure { task: c.meta.task_id.clone(), message: e.to_string() })
        })
        .collect()
}

fn sort_key(p: &PairAnalysis) -> (&str, &str) {
    (p.task_id.as_str(), p.op_name.as_deref().unwrap_or(""))
}

/// Sorts analyses by (task id, perturbation op), the order used in pair files and reports.
pub fn sort_analyses(analyses: &mut [PairAnalysis]) {
    analyses.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
}

fn pattern_shares<'a>(group: impl Iterator<Item = &'a PairAnalysis> + Clone) -> BTreeMap<String, PatternShare> {
    let all = group.clone().count();
    let divergent = group.clone().filter(|p| p.label.is_divergent()).count();
    Pattern::ALL
        .iter()
        .map(|pat| {
            let count = group.clone().filter(|p| p.patterns.contains(pat)).count();
            let in_divergent = group.clone().filter(|p| p.label.is_divergent() && p.patterns.contains(pat)).count();
            let share =
                PatternShare { count, of_divergent: Share::new(in_divergent, divergent), of_all: Share::new(count, all) };
            (pat.token().to_string(), share)
        })
        .collect()
}

/// Single-threaded reduce; the input order does not matter.
pub fn aggregate(analyses: &[PairAnalysis], errors: Vec<PairFailure>, config: &AnalysisConfig) -> AggregateReport {
    let mut sorted: Vec<&PairAnalysis> = analyses.iter().collect();
    sorted.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    let n = sorted.len();
    let divergent = sorted.iter().filter(|p| p.label.is_divergent()).count();

    let by_manifestation = ManifestationLabel::ALL
        .iter()
        .map(|l| (l.token().to_string(), Share::new(sorted.iter().filter(|p| p.label == *l).count(), n)))
        .collect();

    let by_pattern = pattern_shares(sorted.iter().copied());

    let mut ops: BTreeMap<String, Vec<&PairAnalysis>> = BTreeMap::new();
    let mut modalities: BTreeMap<String, Vec<&PairAnalysis>> = BTreeMap::new();
    for p in &sorted {
        ops.entry(p.op_name.clone().unwrap_or_else(|| UNKNOWN_GROUP.into())).or_default().push(p);
        let m = p.modality.map(|m| m.token().to_string()).unwrap_or_else(|| UNKNOWN_GROUP.into());
        modalities.entry(m).or_default().push(p);
    }
    let by_perturbation = ops
        .into_iter()
        .map(|(op, group)| {
            let d: Vec<f64> = group.iter().map(|p| p.divergence.d_norm).collect();
            let o: Vec<f64> = group.iter().filter_map(|p| p.token_overhead).collect();
            let recovered = group.iter().filter(|p| p.recovered).count();
            let stats = OperatorStats {
                pairs: group.len(),
                d_norm: Spread::of(&d),
                overhead: Spread::of(&o),
                recovered,
                recovery_rate: Share::new(recovered, group.len()).fraction,
            };
            (op, stats)
        })
        .collect();
    let by_modality = modalities
        .into_iter()
        .map(|(m, group)| {
            let stats = ModalityStats {
                pairs: group.len(),
                divergent: group.iter().filter(|p| p.label.is_divergent()).count(),
                patterns: pattern_shares(group.iter().copied()),
            };
            (m, stats)
        })
        .collect();

    let timing_histogram = TimingBucket::ALL
        .iter()
        .map(|b| (b.token().to_string(), sorted.iter().filter(|p| p.timing_bucket == *b).count()))
        .collect();

    let cost_by_manifestation = ManifestationLabel::ALL
        .iter()
        .map(|l| {
            let o: Vec<f64> = sorted.iter().filter(|p| p.label == *l).filter_map(|p| p.token_overhead).collect();
            (l.token().to_string(), Spread::of(&o))
        })
        .collect();

    let mut d_norm_histogram: Vec<HistogramBin> = (0..D_NORM_BINS)
        .map(|i| HistogramBin {
            lo: i as f64 / D_NORM_BINS as f64,
            hi: (i + 1) as f64 / D_NORM_BINS as f64,
            count: 0,
        })
        .collect();
    for p in &sorted {
        // Bins are half-open [lo, hi) except the last, which includes 1.
        let i = ((p.divergence.d_norm * D_NORM_BINS as f64).floor() as usize).min(D_NORM_BINS - 1);
        d_norm_histogram[i].count += 1;
    }

    let mut errors = errors;
    errors.sort_by(|a, b| (&a.task, &a.message).cmp(&(&b.task, &b.message)));

    AggregateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        pairs: n,
        divergent_pairs: divergent,
        by_manifestation,
        by_pattern,
        by_perturbation,
        by_modality,
        timing_histogram,
        cost_by_manifestation,
        d_norm_histogram,
        config_echo: config.clone(),
        errors,
    }
}

fn pct(f: Option<f64>) -> String {
    f.map(|x| format!("{:.1}%", x * 100.0)).unwrap_or_else(|| "n/a".into())
}

fn times(s: Option<&Spread>) -> String {
    s.map(|s| format!("{:.2}x", s.median)).unwrap_or_else(|| "n/a".into())
}

fn iqr(s: Option<&Spread>) -> String {
    s.map(|s| format!("{:.2}-{:.2}", s.q1, s.q3)).unwrap_or_else(|| "n/a".into())
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

impl AggregateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned-text tables for terminals and diffs.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pairs: {}  divergent: {}  errors: {}", self.pairs, self.divergent_pairs, self.errors.len());
        let _ = writeln!(
            out,
            "epsilon: {}  comparator: {}  time base: {}",
            self.config_echo.epsilon,
            serde_json::to_string(&self.config_echo.comparator).unwrap_or_default(),
            serde_json::to_value(self.config_echo.time_base).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        );
        out.push('\n');

        let rows: Vec<Vec<String>> = ManifestationLabel::ALL
            .iter()
            .map(|l| {
                let s = &self.by_manifestation[l.token()];
                vec![l.token().into(), s.count.to_string(), pct(s.fraction), times(self.cost_by_manifestation[l.token()].as_ref())]
            })
            .collect();
        table(&mut out, &["manifestation", "count", "share", "median overhead"], &rows);
        out.push('\n');

        let rows: Vec<Vec<String>> = Pattern::ALL
            .iter()
            .map(|p| {
                let s = &self.by_pattern[p.token()];
                vec![p.token().into(), s.count.to_string(), pct(s.of_divergent.fraction), pct(s.of_all.fraction)]
            })
            .collect();
        table(&mut out, &["pattern", "count", "of divergent", "of all"], &rows);
        out.push('\n');

        let rows: Vec<Vec<String>> = self
            .by_perturbation
            .iter()
            .map(|(op, s)| {
                vec![
                    op.clone(),
                    s.pairs.to_string(),
                    times(s.overhead.as_ref()),
                    iqr(s.overhead.as_ref()),
                    pct(s.recovery_rate),
                    s.d_norm.map(|d| format!("{:.3}", d.median)).unwrap_or_else(|| "n/a".into()),
                ]
            })
            .collect();
        table(&mut out, &["perturbation", "pairs", "median overhead", "IQR", "recovery rate", "median d_norm"], &rows);
        out.push('\n');

        let rows: Vec<Vec<String>> =
            self.timing_histogram.iter().map(|(b, c)| vec![b.clone(), c.to_string()]).collect();
        table(&mut out, &["timing", "count"], &rows);

        if !self.errors.is_empty() {
            out.push('\n');
            let rows: Vec<Vec<String>> = self.errors.iter().map(|e| vec![e.task.clone(), e.message.clone()]).collect();
            table(&mut out, &["failed pair", "reason"], &rows);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_has_markers() {
        let r = aggregate(&[], Vec::new(), &AnalysisConfig::default());
        assert_eq!(r.pairs, 0);
        assert!(r.by_manifestation.values().all(|s| s.count == 0 && s.fraction.is_none()));
        assert!(r.by_pattern.values().all(|s| s.of_divergent.fraction.is_none()));
        assert!(r.by_perturbation.is_empty());
        assert_eq!(r.timing_histogram.len(), 4);
        assert!(r.render_text().contains("n/a"));
    }

    #[test]
    fn share_fraction() {
        assert_eq!(Share::new(1, 4).fraction, Some(0.25));
        assert_eq!(Share::new(0, 0).fraction, None);
    }
}
