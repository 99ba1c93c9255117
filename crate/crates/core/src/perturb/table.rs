use std::collections::BTreeMap;
use std::str::FromStr;

use rust_decimal::Decimal;

use super::rng::SeededDraws;
use super::{ArtifactError, Params, PerturbError, Touched};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Number(Decimal),
    Text(String),
    Empty,
}

impl Cell {
    /// A field is a number only if it round-trips through the decimal type
    /// unchanged, so reading and re-writing a file never alters bytes.
    pub fn parse(field: &str) -> Cell {
        if field.is_empty() {
            return Cell::Empty;
        }
        match Decimal::from_str(field) {
            Ok(d) if d.to_string() == field => Cell::Number(d),
            _ => Cell::Text(field.to_string()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Number(d) => d.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            Cell::Number(d) => Some(*d),
            _ => None,
        }
    }
}

pub fn cell_id(row: usize, col: usize) -> String {
    format!("R{row}C{col}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableArtifact {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Provenance overrides: cell id -> the source cell id it claims to come from.
    /// Cells without an entry cite themselves.
    pub cell_refs: BTreeMap<String, String>,
}

impl TableArtifact {
    pub fn new(header: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, ArtifactError> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != header.len() {
                return Err(ArtifactError::RaggedRow { row: i, expected: header.len(), found: r.len() });
            }
        }
        Ok(TableArtifact { header, rows, cell_refs: BTreeMap::new() })
    }

    pub fn width(&self) -> usize {
        self.header.len()
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn source_ref(&self, row: usize, col: usize) -> String {
        let id = cell_id(row, col);
        self.cell_refs.get(&id).cloned().unwrap_or(id)
    }

    /// Parses CSV with a header row. Ragged rows are rejected.
    pub fn from_csv(text: &str) -> Result<Self, ArtifactError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
        let header: Vec<String> =
            rdr.headers().map_err(|e| ArtifactError::Csv(e.to_string()))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ArtifactError::Csv(e.to_string()))?;
            rows.push(rec.iter().map(Cell::parse).collect());
        }
        TableArtifact::new(header, rows)
    }

    /// Minimal quoting, LF line endings. Provenance overrides are not part of CSV;
    /// they travel in the perturbation record.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 in, utf-8 out")
    }

    fn numeric_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if matches!(cell, Cell::Number(_)) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

const CORRUPT_SYMBOLS: &[char] = &['#', '$', '%', '?', '*', '~', '@'];
const FILLER_LABELS: &[&str] = &["Ref Code", "Batch", "Internal ID", "Region Code", "Audit Flag", "Ledger No", "Notes"];
const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

pub(crate) fn apply(
    op: &str,
    t: &TableArtifact,
    p: &Params<'_>,
    seed: u64,
) -> Result<(TableArtifact, Touched), PerturbError> {
    let mut out = t.clone();
    let mut touched = Touched::default();
    let mut draws = SeededDraws::new(seed);
    match op {
        "column_swap" => {
            let w = t.width();
            let pairs: Vec<(usize, usize)> = (0..w)
                .flat_map(|a| (a + 1..w).map(move |b| (a, b)))
                .filter(|&(a, b)| t.rows.iter().any(|r| r[a] != r[b]))
                .collect();
            if pairs.is_empty() {
                return Err(p.inapplicable("no two columns with differing values"));
            }
            // Prefer columns whose cells have the same type row by row, so the swap stays plausible.
            let shape = |c: usize| t.rows.iter().map(|r| std::mem::discriminant(&r[c])).collect::<Vec<_>>();
            let alike: Vec<(usize, usize)> = pairs.iter().copied().filter(|&(a, b)| shape(a) == shape(b)).collect();
            let (a, b) = if alike.is_empty() { *draws.pick(&pairs) } else { *draws.pick(&alike) };
            for row in &mut out.rows {
                row.swap(a, b);
            }
            touched.locus = vec![format!("C{a}"), format!("C{b}")];
            touched.detail.insert("columns".into(), format!("{} <-> {}", t.header[a], t.header[b]));
        }
        "label_corrupt" => {
            let candidates: Vec<usize> = (0..t.width()).filter(|&c| !t.header[c].is_empty()).collect();
            if candidates.is_empty() {
                return Err(p.inapplicable("no non-empty header label"));
            }
            let c = *draws.pick(&candidates);
            let new = corrupt_label(&t.header[c], &mut draws);
            touched.locus = vec![format!("H{c}")];
            touched.detail.insert("label".into(), format!("{} -> {}", t.header[c], new));
            out.header[c] = new;
        }
        "data_type_corrupt" => {
            let cells = t.numeric_cells();
            if cells.is_empty() {
                return Err(p.inapplicable("no numeric cells"));
            }
            for i in draws.sample(cells.len(), p.count("k")) {
                let (r, c) = cells[i];
                let mut chars: Vec<char> = t.rows[r][c].render().chars().collect();
                let sym = *draws.pick(CORRUPT_SYMBOLS);
                let at = draws.below(chars.len() + 1);
                chars.insert(at, sym);
                out.rows[r][c] = Cell::Text(chars.into_iter().collect());
                touched.locus.push(cell_id(r, c));
            }
        }
        "row_duplicate" => {
            if t.height() == 0 {
                return Err(p.inapplicable("table has no rows"));
            }
            let r = draws.below(t.height());
            out.rows.insert(r + 1, t.rows[r].clone());
            touched.locus = vec![format!("R{r}")];
        }
        "irrelevant_columns" => {
            let n = p.count("count");
            for i in 0..n {
                let base = *draws.pick(FILLER_LABELS);
                let mut label = base.to_string();
                let mut suffix = 2;
                while out.header.contains(&label) {
                    label = format!("{base} {suffix}");
                    suffix += 1;
                }
                let numeric = draws.coin();
                for row in &mut out.rows {
                    let v = 1000 + draws.below(9000);
                    row.push(if numeric { Cell::Number(Decimal::from(v)) } else { Cell::Text(format!("X-{v}")) });
                }
                out.header.push(label);
                touched.locus.push(format!("C{}", t.width() + i));
            }
        }
        "unit_change" => {
            let factor = p.decimal("factor");
            let cols: Vec<usize> = (0..t.width())
                .filter(|&c| t.rows.iter().any(|r| r[c].as_number().is_some_and(|d| !d.is_zero())))
                .collect();
            if cols.is_empty() {
                return Err(p.inapplicable("no column with a nonzero numeric cell"));
            }
            let c = *draws.pick(&cols);
            for row in &mut out.rows {
                if let Cell::Number(d) = row[c] {
                    let scaled = d.checked_mul(factor).ok_or_else(|| p.inapplicable("scaled value overflows"))?;
                    row[c] = Cell::Number(scaled);
                }
            }
            touched.locus = vec![format!("C{c}")];
            touched.detail.insert("factor".into(), factor.to_string());
        }
        "misalignment" => misalign(t, &mut out, p, &mut draws, &mut touched)?,
        "header_drift" => match p.text("mode") {
            "swap" => {
                let w = t.width();
                let pairs: Vec<(usize, usize)> = (0..w)
                    .flat_map(|a| (a + 1..w).map(move |b| (a, b)))
                    .filter(|&(a, b)| t.header[a] != t.header[b])
                    .collect();
                if pairs.is_empty() {
                    return Err(p.inapplicable("no two distinct header labels"));
                }
                let (a, b) = *draws.pick(&pairs);
                out.header.swap(a, b);
                touched.locus = vec![format!("H{a}"), format!("H{b}")];
            }
            _ => {
                let Some(footer) = t.rows.last() else {
                    return Err(p.inapplicable("table has no footer row"));
                };
                let promoted: Vec<String> = footer.iter().map(Cell::render).collect();
                if promoted == t.header {
                    return Err(p.inapplicable("footer row equals the header"));
                }
                out.header = promoted;
                out.rows.pop();
                touched.locus = vec![format!("R{}", t.height() - 1)];
            }
        },
        "numeric_noise" => {
            let magnitude = p.decimal("magnitude");
            let cells: Vec<(usize, usize)> = t
                .numeric_cells()
                .into_iter()
                .filter(|&(r, c)| t.rows[r][c].as_number().is_some_and(|d| !d.is_zero()))
                .collect();
            if cells.is_empty() {
                return Err(p.inapplicable("no nonzero numeric cells"));
            }
            for i in draws.sample(cells.len(), p.count("k")) {
                let (r, c) = cells[i];
                let v = t.rows[r][c].as_number().expect("numeric cell");
                let u = noise_factor(magnitude, &mut draws);
                let mult = Decimal::ONE + u;
                let noisy = v.checked_mul(mult).ok_or_else(|| p.inapplicable("noisy value overflows"))?.normalize();
                out.rows[r][c] = Cell::Number(noisy);
                touched.locus.push(cell_id(r, c));
                touched.detail.insert(cell_id(r, c), format!("x{mult}"));
            }
        }
        "cell_reference_drift" => {
            if t.height() < 2 || t.width() == 0 {
                return Err(p.inapplicable("need at least two rows"));
            }
            let w = t.width();
            for i in draws.sample(t.height() * w, p.count("k")) {
                let (r, c) = (i / w, i % w);
                let down = if r == 0 {
                    true
                } else if r + 1 == t.height() {
                    false
                } else {
                    draws.coin()
                };
                let target = if down { r + 1 } else { r - 1 };
                let id = cell_id(r, c);
                out.cell_refs.insert(id.clone(), cell_id(target, c));
                touched.detail.insert(id.clone(), cell_id(target, c));
                touched.locus.push(id);
            }
        }
        other => unreachable!("{other} is not a tabular operator"),
    }
    Ok((out, touched))
}

/// `u = magnitude * r / 10^6` with `r` uniform over the nonzero integers in
/// `[-10^6, 10^6]`, so `|u| <= magnitude` and `u != 0`.
fn noise_factor(magnitude: Decimal, draws: &mut SeededDraws) -> Decimal {
    let r = draws.below(2_000_000) as i64 - 1_000_000;
    let r = if r >= 0 { r + 1 } else { r };
    magnitude * Decimal::new(r, 6)
}

fn corrupt_label(label: &str, draws: &mut SeededDraws) -> String {
    let mut chars: Vec<char> = label.chars().collect();
    let at = draws.below(chars.len());
    let mode = if chars.len() < 2 { 0 } else { draws.below(3) };
    match mode {
        0 => {
            let orig = chars[at];
            let mut ch = LETTERS[draws.below(LETTERS.len())] as char;
            if ch.eq_ignore_ascii_case(&orig) {
                ch = LETTERS[(ch as u8 - b'a' + 1) as usize % LETTERS.len()] as char;
            }
            chars[at] = if orig.is_uppercase() { ch.to_ascii_uppercase() } else { ch };
        }
        1 => {
            chars.remove(at);
        }
        _ => {
            let c = chars[at];
            chars.insert(at, c);
        }
    }
    chars.into_iter().collect()
}

fn misalign(
    t: &TableArtifact,
    out: &mut TableArtifact,
    p: &Params<'_>,
    draws: &mut SeededDraws,
    touched: &mut Touched,
) -> Result<(), PerturbError> {
    let (h, w) = (t.height(), t.width());
    if h == 0 || w == 0 {
        return Err(p.inapplicable("empty table"));
    }
    for _ in 0..32 {
        let along_rows = match p.text("axis") {
            "row" => true,
            "column" => false,
            _ => draws.coin(),
        };
        let forward = draws.coin();
        let mut cand = t.rows.clone();
        let (region, axis) = if along_rows {
            // Vertical shift of a column band starting at some row.
            if h < 2 {
                continue;
            }
            let c0 = draws.below(w);
            let c1 = c0 + draws.below(w - c0);
            let r0 = draws.below(h - 1);
            #[allow(clippy::needless_range_loop)]
            for c in c0..=c1 {
                if forward {
                    for r in (r0 + 1..h).rev() {
                        cand[r][c] = cand[r - 1][c].clone();
                    }
                    cand[r0][c] = Cell::Empty;
                } else {
                    for r in r0..h - 1 {
                        cand[r][c] = cand[r + 1][c].clone();
                    }
                    cand[h - 1][c] = Cell::Empty;
                }
            }
            (format!("{}:{}", cell_id(r0, c0), cell_id(h - 1, c1)), "row")
        } else {
            if w < 2 {
                continue;
            }
            let r0 = draws.below(h);
            let r1 = r0 + draws.below(h - r0);
            for row in &mut cand[r0..=r1] {
                if forward {
                    row.rotate_right(1);
                    row[0] = Cell::Empty;
                } else {
                    row.rotate_left(1);
                    row[w - 1] = Cell::Empty;
                }
            }
            (format!("{}:{}", cell_id(r0, 0), cell_id(r1, w - 1)), "column")
        };
        if cand != t.rows {
            out.rows = cand;
            touched.locus = vec![region];
            touched.detail.insert("axis".into(), axis.into());
            touched.detail.insert("direction".into(), if forward { "+1" } else { "-1" }.into());
            return Ok(());
        }
    }
    Err(p.inapplicable("no shift changes the table"))
}
