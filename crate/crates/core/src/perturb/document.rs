use std::collections::BTreeSet;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};

use super::rng::SeededDraws;
use super::{ArtifactError, Params, PerturbError, Touched};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub id: String,
    pub page: u32,
    pub offset: u64,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Paragraph {
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentArtifact {
    pub sections: Vec<Section>,
}

impl DocumentArtifact {
    pub fn new(sections: Vec<Section>) -> Result<Self, ArtifactError> {
        let doc = DocumentArtifact { sections };
        doc.check_ids()?;
        Ok(doc)
    }

    fn check_ids(&self) -> Result<(), ArtifactError> {
        let mut seen = BTreeSet::new();
        for s in self.spans() {
            if !seen.insert(s.id.as_str()) {
                return Err(ArtifactError::DuplicateSpanId(s.id.clone()));
            }
        }
        Ok(())
    }

    /// Spans in document order.
    pub fn spans(&self) -> impl Iterator<Item = &Span> {
        self.sections.iter().flat_map(|s| s.paragraphs.iter()).flat_map(|p| p.spans.iter())
    }

    fn spans_mut(&mut self) -> impl Iterator<Item = &mut Span> {
        self.sections.iter_mut().flat_map(|s| s.paragraphs.iter_mut()).flat_map(|p| p.spans.iter_mut())
    }

    pub fn span_count(&self) -> usize {
        self.spans().count()
    }

    /// Span texts joined by newlines; section titles excluded.
    pub fn text(&self) -> String {
        self.spans().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    /// Parses the line format:
    ///
    /// ```text
    /// #section <title>
    /// #para
    /// <id>\t<page>\t<offset>\t<text>
    /// ```
    ///
    /// Titles and texts escape `\\`, `\t`, `\n` and `\r`. Blank lines are ignored.
    pub fn parse(input: &str) -> Result<Self, ArtifactError> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: &str| ArtifactError::Document { line: line_no, reason: reason.to_string() };
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                continue;
            }
            if line == "#section" || line.starts_with("#section ") {
                let title = line.strip_prefix("#section").unwrap_or("").strip_prefix(' ').unwrap_or("");
                sections.push(Section { title: unescape(title).map_err(&err)?, paragraphs: Vec::new() });
            } else if line == "#para" {
                let sec = sections.last_mut().ok_or_else(|| err("#para before any #section"))?;
                sec.paragraphs.push(Paragraph::default());
            } else if line.starts_with('#') {
                return Err(err("unknown directive"));
            } else {
                let para = sections
                    .last_mut()
                    .and_then(|s| s.paragraphs.last_mut())
                    .ok_or_else(|| err("span line outside a paragraph"))?;
                let mut parts = line.splitn(4, '\t');
                let id = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| err("missing span id"))?;
                let page = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad page"))?;
                let offset = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad offset"))?;
                let text = parts.next().ok_or_else(|| err("missing span text"))?;
                para.spans.push(Span { id: id.to_string(), page, offset, text: unescape(text).map_err(err)? });
            }
        }
        DocumentArtifact::new(sections)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            out.push_str("#section ");
            out.push_str(&escape(&s.title));
            out.push('\n');
            for p in &s.paragraphs {
                out.push_str("#para\n");
                for sp in &p.spans {
                    out.push_str(&format!("{}\t{}\t{}\t{}\n", sp.id, sp.page, sp.offset, escape(&sp.text)));
                }
            }
        }
        out
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, &'static str> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            _ => return Err("bad escape"),
        }
    }
    Ok(out)
}

/// OCR confusions. `rn` -> `m` is a two-character site; everything else is one character.
pub const OCR_CONFUSIONS: &[(&str, &str)] =
    &[("rn", "m"), ("m", "rn"), ("0", "O"), ("O", "0"), ("1", "l"), ("l", "1"), ("5", "S"), ("S", "5")];

pub const REDACTION_MARK: char = '\u{2588}';
pub const REPLACEMENT_CHAR: char = '\u{FFFD}';

const QUALIFIER_CUES: &[&str] = &[
    "excluding", "except", "only", "not ", "at least", "at most", "approximately", "unless", "including",
    "before", "after", "no more than", "up to", "minimum", "maximum",
];

const SNIPPET_BANK: &[&str] = &[
    "Figures exclude tax.",
    "All amounts are reported in thousands.",
    "Values were revised upward by 10% in the final audit.",
    "This total excludes the Northern division.",
    "The reporting period ends on 30 June.",
];

/// A confusable site: span index, char index, chars consumed, replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct OcrSite {
    pub span: usize,
    pub at: usize,
    pub len: usize,
    pub replacement: &'static str,
}

/// Scans left to right; a matched `rn` consumes both characters.
pub(crate) fn ocr_sites(doc: &DocumentArtifact) -> Vec<OcrSite> {
    let mut sites = Vec::new();
    for (si, span) in doc.spans().enumerate() {
        let chars: Vec<char> = span.text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if chars[i] == 'r' && chars.get(i + 1) == Some(&'n') {
                sites.push(OcrSite { span: si, at: i, len: 2, replacement: "m" });
                i += 2;
                continue;
            }
            let s = chars[i].to_string();
            if let Some((_, to)) = OCR_CONFUSIONS.iter().find(|(from, _)| *from == s) {
                sites.push(OcrSite { span: si, at: i, len: 1, replacement: to });
            }
            i += 1;
        }
    }
    sites
}

/// `max(1, round_half_away(rate * sites))`, capped at `sites`.
pub fn ocr_site_count(rate: Decimal, sites: usize) -> usize {
    let k = (rate * Decimal::from(sites)).round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero);
    k.to_usize().unwrap_or(0).clamp(1, sites)
}

/// `ceil(fraction * n)` in exact decimal arithmetic.
pub fn truncation_keep(fraction: Decimal, n: usize) -> usize {
    (fraction * Decimal::from(n)).ceil().to_usize().unwrap_or(n).min(n)
}

/// Numeric tokens: digit runs, optionally continued by `.digits`. Returns (span, start, end) in chars.
fn number_tokens(doc: &DocumentArtifact) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (si, span) in doc.spans().enumerate() {
        let chars: Vec<char> = span.text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_ascii_digit() {
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push((si, start, i));
        }
    }
    out
}

fn replace_chars(text: &str, start: usize, end: usize, with: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out: String = chars[..start].iter().collect();
    out.push_str(with);
    out.extend(&chars[end..]);
    out
}

fn digit_swap(token: &str, draws: &mut SeededDraws) -> String {
    let mut chars: Vec<char> = token.chars().collect();
    let swaps: Vec<usize> = (0..chars.len().saturating_sub(1))
        .filter(|&i| chars[i].is_ascii_digit() && chars[i + 1].is_ascii_digit() && chars[i] != chars[i + 1])
        .collect();
    if swaps.is_empty() {
        bump_last_digit(&mut chars);
    } else {
        let i = *draws.pick(&swaps);
        chars.swap(i, i + 1);
    }
    chars.into_iter().collect()
}

fn bump_last_digit(chars: &mut [char]) {
    if let Some(c) = chars.iter_mut().rev().find(|c| c.is_ascii_digit()) {
        let d = c.to_digit(10).expect("digit");
        *c = char::from_digit((d + 1) % 10, 10).expect("digit");
    }
}

fn span_at(doc: &mut DocumentArtifact, idx: usize) -> &mut Span {
    doc.spans_mut().nth(idx).expect("span index in range")
}

/// (section, paragraph, position) of the span with document-order index `idx`.
fn span_path(doc: &DocumentArtifact, idx: usize) -> (usize, usize, usize) {
    let mut n = 0;
    for (s, sec) in doc.sections.iter().enumerate() {
        for (p, para) in sec.paragraphs.iter().enumerate() {
            if idx < n + para.spans.len() {
                return (s, p, idx - n);
            }
            n += para.spans.len();
        }
    }
    unreachable!("span index {idx} out of range")
}

pub(crate) fn apply(
    op: &str,
    doc: &DocumentArtifact,
    p: &Params<'_>,
    seed: u64,
) -> Result<(DocumentArtifact, Touched), PerturbError> {
    let mut out = doc.clone();
    let mut touched = Touched::default();
    let mut draws = SeededDraws::new(seed);
    let ids: Vec<String> = doc.spans().map(|s| s.id.clone()).collect();
    match op {
        "ocr_noise" => {
            let sites = ocr_sites(doc);
            if sites.is_empty() {
                return Err(p.inapplicable("no confusable characters"));
            }
            let k = ocr_site_count(p.decimal("rate"), sites.len());
            let mut chosen = draws.sample(sites.len(), k);
            // Right to left so earlier char indices stay valid.
            chosen.sort_unstable_by(|a, b| b.cmp(a));
            for i in &chosen {
                let s = &sites[*i];
                let span = span_at(&mut out, s.span);
                span.text = replace_chars(&span.text, s.at, s.at + s.len, s.replacement);
            }
            let touched_spans: BTreeSet<usize> = chosen.iter().map(|&i| sites[i].span).collect();
            touched.locus = touched_spans.into_iter().map(|i| ids[i].clone()).collect();
            touched.detail.insert("substitutions".into(), k.to_string());
        }
        "number_corruption" => {
            let tokens = number_tokens(doc);
            if tokens.is_empty() {
                return Err(p.inapplicable("no numeric tokens"));
            }
            let mut chosen = draws.sample(tokens.len(), p.count("k"));
            chosen.sort_unstable_by(|a, b| b.cmp(a));
            let factor = p.decimal("factor");
            let mut locus = BTreeSet::new();
            for i in chosen {
                let (si, start, end) = tokens[i];
                let span = span_at(&mut out, si);
                let token: String = span.text.chars().skip(start).take(end - start).collect();
                let new = match p.text("mode") {
                    "factor" => match Decimal::from_str(&token).ok().and_then(|d| d.checked_mul(factor)) {
                        Some(v) if v.to_string() != token => v.to_string(),
                        _ => digit_swap(&token, &mut draws),
                    },
                    _ => digit_swap(&token, &mut draws),
                };
                span.text = replace_chars(&span.text, start, end, &new);
                locus.insert(si);
                touched.detail.insert(format!("{}@{start}", ids[si]), format!("{token} -> {new}"));
            }
            touched.locus = locus.into_iter().map(|i| ids[i].clone()).collect();
        }
        "text_redaction" => {
            let cands: Vec<usize> = doc
                .spans()
                .enumerate()
                .filter(|(_, s)| s.text.chars().any(|c| c != REDACTION_MARK))
                .map(|(i, _)| i)
                .collect();
            if cands.is_empty() {
                return Err(p.inapplicable("no redactable span"));
            }
            let i = *draws.pick(&cands);
            let span = span_at(&mut out, i);
            span.text = REDACTION_MARK.to_string().repeat(span.text.chars().count());
            touched.locus = vec![ids[i].clone()];
        }
        "paragraph_shuffle" => {
            let secs: Vec<usize> = (0..doc.sections.len())
                .filter(|&s| {
                    let ps = &doc.sections[s].paragraphs;
                    ps.windows(2).any(|w| w[0] != w[1])
                })
                .collect();
            if secs.is_empty() {
                return Err(p.inapplicable("no section with two distinct paragraphs"));
            }
            let s = *draws.pick(&secs);
            let paras = &doc.sections[s].paragraphs;
            let w = p.count("count").min(paras.len()).max(2);
            // Windows whose paragraphs are not all equal.
            let starts: Vec<usize> =
                (0..=paras.len() - w).filter(|&a| paras[a..a + w].windows(2).any(|x| x[0] != x[1])).collect();
            let start = *draws.pick(&starts);
            let mut perm = draws.permutation(w);
            let window = &paras[start..start + w];
            let permuted = |perm: &[usize]| perm.iter().map(|&i| window[i].clone()).collect::<Vec<_>>();
            if permuted(&perm) == window {
                perm = (0..w).map(|i| (i + 1) % w).collect();
            }
            if permuted(&perm) == window {
                perm = (0..w).collect();
                perm.swap(0, (1..w).find(|&j| window[j] != window[0]).expect("window has distinct paragraphs"));
            }
            out.sections[s].paragraphs.splice(start..start + w, permuted(&perm));
            touched.locus = (start..start + w).map(|i| format!("S{s}P{i}")).collect();
            touched.detail.insert(
                "permutation".into(),
                perm.iter().map(|i| (start + i).to_string()).collect::<Vec<_>>().join(","),
            );
        }
        "encoding_error" => {
            let cands: Vec<usize> = doc
                .spans()
                .enumerate()
                .filter(|(_, s)| s.text.chars().any(|c| c != REPLACEMENT_CHAR))
                .map(|(i, _)| i)
                .collect();
            if cands.is_empty() {
                return Err(p.inapplicable("no span with encodable text"));
            }
            let mut chosen: Vec<usize> = draws.sample(cands.len(), p.count("k")).into_iter().map(|i| cands[i]).collect();
            chosen.sort_unstable();
            for &i in &chosen {
                let span = span_at(&mut out, i);
                let chars: Vec<char> = span.text.chars().collect();
                let eligible: Vec<usize> = (0..chars.len()).filter(|&j| chars[j] != REPLACEMENT_CHAR).collect();
                let at = *draws.pick(&eligible);
                let len = (1 + draws.below(3)).min(chars.len() - at);
                let marks = REPLACEMENT_CHAR.to_string().repeat(len);
                span.text = replace_chars(&span.text, at, at + len, &marks);
                touched.detail.insert(ids[i].clone(), format!("{at}+{len}"));
            }
            touched.locus = chosen.into_iter().map(|i| ids[i].clone()).collect();
        }
        "section_removal" => {
            if doc.sections.is_empty() {
                return Err(p.inapplicable("document has no sections"));
            }
            let s = draws.below(doc.sections.len());
            let removed = out.sections.remove(s);
            touched.locus = vec![format!("S{s}")];
            touched.detail.insert("title".into(), removed.title);
        }
        "span_omission" => {
            if ids.is_empty() {
                return Err(p.inapplicable("document has no spans"));
            }
            let qualifiers: Vec<usize> = doc
                .spans()
                .enumerate()
                .filter(|(_, s)| {
                    let lower = s.text.to_lowercase();
                    QUALIFIER_CUES.iter().any(|q| lower.contains(q))
                })
                .map(|(i, _)| i)
                .collect();
            let qualified = !qualifiers.is_empty();
            let all: Vec<usize> = (0..ids.len()).collect();
            let i = *draws.pick(if qualified { &qualifiers } else { &all });
            let (s, pa, at) = span_path(doc, i);
            out.sections[s].paragraphs[pa].spans.remove(at);
            touched.locus = vec![ids[i].clone()];
            touched.detail.insert("qualifier".into(), qualified.to_string());
        }
        "snippet_insertion" => {
            if ids.is_empty() {
                return Err(p.inapplicable("document has no spans"));
            }
            let snippet = match p.text("snippet") {
                "" => draws.pick(SNIPPET_BANK).to_string(),
                s => s.to_string(),
            };
            let i = draws.below(ids.len());
            let (s, pa, at) = span_path(doc, i);
            let anchor = &doc.sections[s].paragraphs[pa].spans[at];
            let mut id = format!("{}_ins", anchor.id);
            let mut n = 2;
            while ids.contains(&id) {
                id = format!("{}_ins{n}", anchor.id);
                n += 1;
            }
            let span = Span {
                id: id.clone(),
                page: anchor.page,
                offset: anchor.offset + anchor.text.chars().count() as u64,
                text: snippet,
            };
            out.sections[s].paragraphs[pa].spans.insert(at + 1, span);
            touched.locus = vec![id];
            touched.detail.insert("anchor".into(), ids[i].clone());
        }
        "citation_pointer_shift" => {
            if ids.is_empty() {
                return Err(p.inapplicable("document has no spans"));
            }
            let page_field = p.text("field") == "page";
            let mut chosen = draws.sample(ids.len(), p.count("k"));
            chosen.sort_unstable();
            for &i in &chosen {
                let span = span_at(&mut out, i);
                let (before, after) = if page_field {
                    let old = span.page;
                    span.page = if old <= 1 || draws.coin() { old + 1 } else { old - 1 };
                    (old as u64, span.page as u64)
                } else {
                    let old = span.offset;
                    span.offset = if old == 0 || draws.coin() { old + 1 } else { old - 1 };
                    (old, span.offset)
                };
                touched.detail.insert(ids[i].clone(), format!("{before} -> {after}"));
            }
            touched.locus = chosen.into_iter().map(|i| ids[i].clone()).collect();
        }
        "tool_truncation" => {
            let n = ids.len();
            let keep = truncation_keep(p.decimal("fraction"), n);
            if keep >= n {
                return Err(p.inapplicable("truncation keeps every span"));
            }
            let (s, pa, at) = if keep == 0 { (0, 0, 0) } else { span_path(doc, keep - 1) };
            if keep == 0 {
                out.sections.clear();
            } else {
                out.sections.truncate(s + 1);
                let sec = &mut out.sections[s];
                sec.paragraphs.truncate(pa + 1);
                sec.paragraphs[pa].spans.truncate(at + 1);
            }
            touched.locus = vec![ids[keep].clone()];
            touched.detail.insert("kept".into(), format!("{keep}/{n}"));
        }
        other => unreachable!("{other} is not a document operator"),
    }
    Ok((out, touched))
}
