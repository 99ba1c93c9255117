use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use proptest::prelude::*;
use rust_decimal::Decimal;
use trace_contam_core::perturb::rng::SeededDraws;
use trace_contam_core::perturb::{
    apply_document, apply_tabular, catalog, replay_document, replay_tabular, Cell, DocumentArtifact, Modality,
    Paragraph, PerturbError, Section, Span, TableArtifact,
};

const TABLE: &str = include_str!("fixtures/revenue.csv");
const DOC: &str = include_str!("fixtures/report.doc");

fn table() -> TableArtifact {
    TableArtifact::from_csv(TABLE).unwrap()
}

fn doc() -> DocumentArtifact {
    DocumentArtifact::parse(DOC).unwrap()
}

fn no_params() -> BTreeMap<String, String> {
    BTreeMap::new()
}

fn params(kv: &[(&str, &str)]) -> BTreeMap<String, String> {
    kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn table_bytes(t: &TableArtifact) -> String {
    format!("{}{:?}", t.to_csv(), t.cell_refs)
}

#[test]
fn fixtures_round_trip() {
    assert_eq!(table().to_csv(), TABLE);
    assert_eq!(doc().render(), DOC);
}

#[test]
fn every_operator_is_deterministic_replayable_and_changes_something() {
    let (t, d) = (table(), doc());
    for spec in catalog() {
        for seed in 0..100u64 {
            match spec.modality {
                Modality::Tabular => {
                    let (a, ra) = apply_tabular(&t, spec.name, &no_params(), seed).unwrap();
                    let (b, rb) = apply_tabular(&t, spec.name, &no_params(), seed).unwrap();
                    assert_eq!(table_bytes(&a), table_bytes(&b), "{} seed {seed}", spec.name);
                    assert_eq!(ra.to_json(), rb.to_json());
                    assert_ne!(table_bytes(&a), table_bytes(&t), "{} seed {seed} is identity", spec.name);
                    assert_eq!(replay_tabular(&t, &ra).unwrap(), a);
                    assert!(!ra.locus.is_empty(), "{}", spec.name);
                    // Still a valid table after a CSV round trip.
                    let back = TableArtifact::from_csv(&a.to_csv()).unwrap();
                    assert_eq!(back.rows, a.rows, "{} seed {seed}", spec.name);
                    assert_eq!(back.header, a.header);
                }
                Modality::Document => {
                    let (a, ra) = apply_document(&d, spec.name, &no_params(), seed).unwrap();
                    let (b, rb) = apply_document(&d, spec.name, &no_params(), seed).unwrap();
                    assert_eq!(a.render(), b.render(), "{} seed {seed}", spec.name);
                    assert_eq!(ra.to_json(), rb.to_json());
                    assert_ne!(a, d, "{} seed {seed} is identity", spec.name);
                    assert_eq!(replay_document(&d, &ra).unwrap(), a);
                    assert!(!ra.locus.is_empty(), "{}", spec.name);
                    assert_eq!(DocumentArtifact::parse(&a.render()).unwrap(), a, "{} seed {seed}", spec.name);
                }
            }
        }
    }
}

fn multiset(t: &TableArtifact) -> Vec<Cell> {
    let mut v: Vec<Cell> = t.rows.iter().flatten().cloned().collect();
    v.sort();
    v
}

#[test]
fn tabular_conservation_laws() {
    let t = table();
    for seed in 0..100 {
        let (s, r) = apply_tabular(&t, "column_swap", &no_params(), seed).unwrap();
        assert_eq!(multiset(&s), multiset(&t));
        assert_eq!(r.locus.len(), 2);
        assert!(r.detail["columns"].contains(" <-> "));

        let (s, _) = apply_tabular(&t, "row_duplicate", &no_params(), seed).unwrap();
        assert_eq!(s.rows.len(), t.rows.len() + 1);
        assert!(s.rows.windows(2).any(|w| w[0] == w[1]));

        let (s, _) = apply_tabular(&t, "label_corrupt", &no_params(), seed).unwrap();
        assert_eq!(s.rows, t.rows);
        assert_eq!(s.header.iter().zip(&t.header).filter(|(a, b)| a != b).count(), 1);

        let (s, _) = apply_tabular(&t, "irrelevant_columns", &no_params(), seed).unwrap();
        assert_eq!(s.header.len(), t.header.len() + 2);
        for (new, old) in s.rows.iter().zip(&t.rows) {
            assert_eq!(&new[..old.len()], &old[..]);
        }

        let (s, r) = apply_tabular(&t, "unit_change", &no_params(), seed).unwrap();
        assert_eq!(s.header, t.header);
        let c: usize = r.locus[0][1..].parse().unwrap();
        for (new, old) in s.rows.iter().zip(&t.rows) {
            match (&new[c], &old[c]) {
                (Cell::Number(n), Cell::Number(o)) => assert_eq!(*n, *o * Decimal::from(1000)),
                (n, o) => assert_eq!(n, o),
            }
        }

        let (s, r) = apply_tabular(&t, "data_type_corrupt", &no_params(), seed).unwrap();
        assert_eq!(r.locus.len(), 3);
        let changed = s.rows.iter().flatten().zip(t.rows.iter().flatten()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 3);
        assert!(s.rows.iter().flatten().zip(t.rows.iter().flatten()).all(|(a, b)| a == b || matches!(a, Cell::Text(_))));

        let (s, _) = apply_tabular(&t, "cell_reference_drift", &no_params(), seed).unwrap();
        assert_eq!(s.rows, t.rows);
        assert_eq!(s.header, t.header);
        for (from, to) in &s.cell_refs {
            let row = |id: &str| id[1..id.find('C').unwrap()].parse::<i64>().unwrap();
            assert_eq!((row(from) - row(to)).abs(), 1);
        }

        let (s, _) = apply_tabular(&t, "misalignment", &no_params(), seed).unwrap();
        assert_eq!(s.rows.len(), t.rows.len());
        assert!(s.rows.iter().flatten().any(|c| *c == Cell::Empty));
    }
}

#[test]
fn numeric_noise_changes_exactly_k_cells_within_magnitude() {
    let header: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
    let rows: Vec<Vec<Cell>> = (0..2)
        .map(|r| (0..5).map(|c| Cell::Number(Decimal::from(10 * (r * 5 + c) + 7))).collect())
        .collect();
    let t = TableArtifact::new(header, rows).unwrap();
    let mag = Decimal::from_str("0.2").unwrap();
    for seed in 0..200 {
        let (s, _) = apply_tabular(&t, "numeric_noise", &no_params(), seed).unwrap();
        let mut changed = 0;
        for (a, b) in s.rows.iter().flatten().zip(t.rows.iter().flatten()) {
            let (Cell::Number(a), Cell::Number(b)) = (a, b) else { panic!("non-numeric output") };
            if a != b {
                changed += 1;
                assert!(((*a - *b) / *b).abs() <= mag, "{a} vs {b}");
            }
        }
        assert_eq!(changed, 3);
        assert_eq!(table_bytes(&s), table_bytes(&apply_tabular(&t, "numeric_noise", &no_params(), seed).unwrap().0));
    }
}

#[test]
fn numeric_ops_reject_text_tables() {
    let t = TableArtifact::from_csv("a,b\nx,y\nz,w\n").unwrap();
    for op in ["numeric_noise", "unit_change", "data_type_corrupt"] {
        assert!(matches!(apply_tabular(&t, op, &no_params(), 1), Err(PerturbError::InapplicableOperator { .. })));
    }
}

#[test]
fn document_conservation_laws() {
    let d = doc();
    let n = d.span_count();
    for seed in 0..100 {
        let (s, _) = apply_document(&d, "section_removal", &no_params(), seed).unwrap();
        assert_eq!(s.sections.len(), d.sections.len() - 1);
        let kept: Vec<&Section> = d.sections.iter().filter(|x| s.sections.contains(x)).collect();
        assert_eq!(kept.len(), s.sections.len());

        let (s, r) = apply_document(&d, "citation_pointer_shift", &no_params(), seed).unwrap();
        assert_eq!(s.text(), d.text());
        let moved: Vec<(&Span, &Span)> = s.spans().zip(d.spans()).filter(|(a, b)| a != b).collect();
        assert!(!moved.is_empty());
        for (a, b) in moved {
            assert_eq!(a.page, b.page);
            assert_eq!(a.offset.abs_diff(b.offset), 1);
        }
        assert_eq!(r.locus.len(), 1);

        for (frac, keep) in [("0.6", 6), ("0.3", 3), ("0.05", 1), ("0.95", 10)] {
            let res = apply_document(&d, "tool_truncation", &params(&[("fraction", frac)]), seed);
            if keep == n {
                assert!(res.is_err());
                continue;
            }
            let (s, _) = res.unwrap();
            assert_eq!(s.span_count(), keep, "fraction {frac}");
            assert!(s.spans().zip(d.spans()).all(|(a, b)| a == b));
        }

        let (s, r) = apply_document(&d, "text_redaction", &no_params(), seed).unwrap();
        let red = s.spans().find(|x| x.id == r.locus[0]).unwrap();
        let orig = d.spans().find(|x| x.id == r.locus[0]).unwrap();
        assert_eq!(red.text.chars().count(), orig.text.chars().count());
        assert!(red.text.chars().all(|c| c == '\u{2588}'));

        let (s, r) = apply_document(&d, "paragraph_shuffle", &no_params(), seed).unwrap();
        let flat = |x: &DocumentArtifact| {
            let mut v: Vec<Paragraph> = x.sections.iter().flat_map(|s| s.paragraphs.clone()).collect();
            v.sort_by(|a, b| a.spans[0].id.cmp(&b.spans[0].id));
            v
        };
        assert_eq!(flat(&s), flat(&d));
        assert!(r.locus.len() >= 2);

        let (s, r) = apply_document(&d, "span_omission", &no_params(), seed).unwrap();
        assert_eq!(s.span_count(), n - 1);
        assert_eq!(r.detail["qualifier"], "true");

        let (s, _) = apply_document(&d, "snippet_insertion", &params(&[("snippet", "Totals exclude Q3.")]), seed).unwrap();
        assert_eq!(s.span_count(), n + 1);
        assert!(s.spans().any(|x| x.text == "Totals exclude Q3."));

        let (s, _) = apply_document(&d, "encoding_error", &no_params(), seed).unwrap();
        assert!(s.text().contains('\u{FFFD}'));
        assert_eq!(s.text().chars().count(), d.text().chars().count());

        let (s, r) = apply_document(&d, "number_corruption", &no_params(), seed).unwrap();
        assert_ne!(s.text(), d.text());
        assert_eq!(r.locus.len(), 1);
    }
}

/// Independent re-derivation of the OCR operator from the documented
/// procedure: enumerate single-character sites, draw `k` of them with the
/// seeded sampler, substitute from the confusion map.
#[test]
fn ocr_noise_matches_recomputed_draw() {
    let confusions: BTreeMap<char, char> =
        [('0', 'O'), ('O', '0'), ('1', 'l'), ('l', '1'), ('5', 'S'), ('S', '5')].into_iter().collect();
    let alphabet: Vec<char> = confusions.keys().copied().collect();
    let mut g = SeededDraws::new(77);
    let text: String = (0..1000).map(|_| *g.pick(&alphabet)).collect();
    let d = DocumentArtifact::new(vec![Section {
        title: "t".into(),
        paragraphs: vec![Paragraph { spans: vec![Span { id: "s".into(), page: 1, offset: 0, text: text.clone() }] }],
    }])
    .unwrap();
    for seed in [0u64, 1, 42, 9999] {
        let (out, rec) = apply_document(&d, "ocr_noise", &no_params(), seed).unwrap();
        let k = 20; // round(0.02 * 1000)
        let picks: BTreeSet<usize> = SeededDraws::new(seed).sample(1000, k).into_iter().collect();
        let expected: String =
            text.chars().enumerate().map(|(i, c)| if picks.contains(&i) { confusions[&c] } else { c }).collect();
        assert_eq!(out.spans().next().unwrap().text, expected);
        assert_eq!(rec.detail["substitutions"], "20");
        let diffs = out.text().chars().zip(text.chars()).filter(|(a, b)| a != b).count();
        assert_eq!(diffs, k);
    }
}

fn arb_table() -> impl Strategy<Value = TableArtifact> {
    (1usize..6, 1usize..8).prop_flat_map(|(w, h)| {
        let cell = prop_oneof![
            (-100000i64..100000, 0u32..3).prop_map(|(m, s)| Cell::Number(Decimal::new(m, s))),
            "[a-z]{1,6}".prop_map(Cell::Text),
            Just(Cell::Empty),
        ];
        (
            prop::collection::vec("[A-Z][a-z]{0,5}", w),
            prop::collection::vec(prop::collection::vec(cell, w), h),
        )
            .prop_map(|(header, rows)| TableArtifact::new(header, rows).unwrap())
    })
}

proptest! {
    #[test]
    fn tabular_ops_on_random_tables(t in arb_table(), seed in any::<u64>(), op in 0usize..10) {
        let spec = &catalog()[op];
        match apply_tabular(&t, spec.name, &no_params(), seed) {
            Ok((s, rec)) => {
                prop_assert_ne!(table_bytes(&s), table_bytes(&t));
                prop_assert!(s.rows.iter().all(|r| r.len() == s.header.len()));
                prop_assert_eq!(&replay_tabular(&t, &rec).unwrap(), &s);
                if spec.name == "column_swap" {
                    prop_assert_eq!(multiset(&s), multiset(&t));
                }
            }
            Err(e) => prop_assert!(matches!(e, PerturbError::InapplicableOperator { .. }), "{e}"),
        }
    }
}
