use super::*;
use proptest::prelude::*;

fn item(id: &str, text: &str, label: u8) -> LabeledComment {
    LabeledComment {
        id: id.into(),
        text: text.into(),
        label,
    }
}

fn record(comment: &str, tagger: &str, tag: u8) -> RawTagRecord {
    RawTagRecord {
        comment_id: comment.into(),
        submission_id: "s1".into(),
        tagger_id: tagger.into(),
        text: format!("text of {comment}"),
        tag,
    }
}

fn balanced(neg: usize, pos: usize) -> Corpus {
    let items = (0..neg)
        .map(|i| item(&format!("n{i}"), &format!("neg {i}"), 0))
        .chain((0..pos).map(|i| item(&format!("p{i}"), &format!("pos {i}"), 1)))
        .collect();
    Corpus::new(items).unwrap()
}

/// Independent route: enumerate every ordered pair of ratings inside each unit.
fn alpha_oracle(units: &[Vec<u8>]) -> Option<f64> {
    let mut n = 0.0;
    let mut disagree = 0.0;
    let mut pool = Vec::new();
    for unit in units.iter().filter(|u| u.len() >= 2) {
        let weight = 1.0 / (unit.len() - 1) as f64;
        for i in 0..unit.len() {
            for j in 0..unit.len() {
                if i != j && unit[i] != unit[j] {
                    disagree += weight;
                }
            }
        }
        n += unit.len() as f64;
        pool.extend_from_slice(unit);
    }
    let mut expected = 0.0;
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i != j && pool[i] != pool[j] {
                expected += 1.0;
            }
        }
    }
    if n == 0.0 || expected == 0.0 {
        return None;
    }
    Some(1.0 - (disagree / n) / (expected / (n * (n - 1.0))))
}

fn table_of(units: &[Vec<u8>]) -> ReliabilityTable {
    let mut t = ReliabilityTable::default();
    for (u, ratings) in units.iter().enumerate() {
        for (r, &v) in ratings.iter().enumerate() {
            t.insert(&format!("u{u}"), &format!("r{r}"), v);
        }
    }
    t
}

#[test]
fn ingest_parses_valid_line() {
    let line = r#"{"comment_id":"c1","submission_id":"s1","tagger_id":"t1","text":"Missing tests","tag":1}"#;
    let records = ingest(line.as_bytes()).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].tag, 1);
    assert_eq!(records[0].text, "Missing tests");
}

#[test]
fn ingest_reports_line_numbers() {
    match ingest("{broken".as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected parse error, got {other:?}"),
    }
    let two = "{\"comment_id\":\"c1\",\"submission_id\":\"s\",\"tagger_id\":\"t\",\"text\":\"x\",\"tag\":2}";
    let input = format!("\n{two}\n");
    match ingest(input.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
    let missing = r#"{"comment_id":"c1","tagger_id":"t","text":"x","tag":1}"#;
    assert!(ingest(missing.as_bytes()).is_err());
}

#[test]
fn ingest_empty_stream() {
    assert!(ingest("".as_bytes()).unwrap().is_empty());
}

#[test]
fn consolidate_keeps_unanimous_and_drops_conflicts() {
    let records = vec![
        record("c1", "a", 1),
        record("c2", "a", 1),
        record("c2", "b", 1),
        record("c2", "c", 1),
        record("c3", "a", 1),
        record("c3", "b", 0),
    ];
    let (kept, dropped) = consolidate(&records);
    assert_eq!(dropped, 1);
    assert_eq!(kept.len(), 2);
    assert_eq!((kept[0].id.as_str(), kept[0].label), ("c1", 1));
    assert_eq!((kept[1].id.as_str(), kept[1].label), ("c2", 1));
}

#[test]
fn alpha_fixed_examples() {
    let r = krippendorff_alpha(&table_of(&[vec![1, 1], vec![0, 0], vec![1, 0], vec![1]])).unwrap();
    assert!((r.alpha - 4.0 / 9.0).abs() < 1e-12);
    assert_eq!(r.pairable_values, 6);

    let r = krippendorff_alpha(&table_of(&[vec![1, 1], vec![0, 0, 0]])).unwrap();
    assert_eq!(r.alpha, 1.0);

    let r = krippendorff_alpha(&table_of(&[vec![0, 1], vec![1, 0]])).unwrap();
    assert!((r.alpha + 0.5).abs() < 1e-12);
}

#[test]
fn alpha_errors() {
    assert!(matches!(
        krippendorff_alpha(&table_of(&[vec![1], vec![0]])),
        Err(Error::InsufficientPairs)
    ));
    assert!(matches!(
        krippendorff_alpha(&table_of(&[vec![1, 1], vec![1, 1, 1]])),
        Err(Error::DegenerateDistribution)
    ));
}

#[test]
fn alpha_reaches_one_after_dropping_conflicts() {
    let records = vec![
        record("c1", "a", 1),
        record("c1", "b", 1),
        record("c2", "a", 0),
        record("c2", "b", 0),
        record("c3", "a", 1),
        record("c3", "b", 0),
        record("c4", "c", 1),
    ];
    let before = krippendorff_alpha(&reliability_table(&records)).unwrap().alpha;
    assert!(before < 1.0);
    let (_, log) = curate(&records, 1).unwrap();
    assert_eq!(log.alpha_after, Some(1.0));
    assert_eq!(log.conflicts_dropped, 1);
}

fn units_strategy() -> impl Strategy<Value = Vec<Vec<Option<u8>>>> {
    prop::collection::vec(prop::collection::vec(prop::option::of(0u8..2), 4), 1..=10)
}

fn present(units: &[Vec<Option<u8>>]) -> Vec<Vec<u8>> {
    units.iter().map(|u| u.iter().flatten().copied().collect()).collect()
}

proptest! {
    #[test]
    fn alpha_matches_pair_enumeration(units in units_strategy()) {
        let dense = present(&units);
        let mut table = ReliabilityTable::default();
        for (u, ratings) in units.iter().enumerate() {
            for (r, v) in ratings.iter().enumerate() {
                if let Some(v) = v {
                    table.insert(&format!("u{u}"), &format!("r{r}"), *v);
                }
            }
        }
        match (krippendorff_alpha(&table), alpha_oracle(&dense)) {
            (Ok(r), Some(expected)) => prop_assert!((r.alpha - expected).abs() < 1e-12),
            (Err(_), None) => {}
            (got, expected) => prop_assert!(false, "{got:?} vs {expected:?}"),
        }
    }

    #[test]
    fn alpha_invariant_under_id_relabeling(units in units_strategy(), salt in 0u32..1000) {
        let mut a = ReliabilityTable::default();
        let mut b = ReliabilityTable::default();
        let n_units = units.len();
        for (u, ratings) in units.iter().enumerate() {
            for (r, v) in ratings.iter().enumerate() {
                if let Some(v) = v {
                    a.insert(&format!("u{u}"), &format!("r{r}"), *v);
                    b.insert(&format!("{}x{salt}", n_units - u), &format!("{}y", 3 - r), *v);
                }
            }
        }
        match (krippendorff_alpha(&a), krippendorff_alpha(&b)) {
            (Ok(x), Ok(y)) => prop_assert!((x.alpha - y.alpha).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }
}

#[test]
fn dedup_collapses_case_and_whitespace() {
    let c = Corpus::new(vec![item("a", "Good job.", 0), item("b", "good  job", 0)]).unwrap();
    let d = deduplicate(&c);
    assert_eq!(d.len(), 1);
    assert_eq!(d.items[0].id, "a");
    assert_eq!(d.provenance.duplicates_dropped, 1);
}

#[test]
fn dedup_drops_conflicting_keys_entirely() {
    let c = Corpus::new(vec![
        item("a", "Needs work", 0),
        item("b", "needs work", 1),
        item("c", "NEEDS   work", 0),
        item("d", "fine", 0),
    ])
    .unwrap();
    let d = deduplicate(&c);
    assert_eq!(d.items, vec![item("d", "fine", 0)]);
}

/// Exhaustive oracle over all labelings of four texts drawn from two keys.
#[test]
fn dedup_conflict_rule_exhaustive() {
    let texts = ["x y", "X  y", "z", "Z"];
    for mask in 0..16u8 {
        let items: Vec<_> = (0..4)
            .map(|i| item(&format!("i{i}"), texts[i], (mask >> i) & 1))
            .collect();
        let d = deduplicate(&Corpus::new(items.clone()).unwrap());
        let mut expected = Vec::new();
        for pair in [[0, 1], [2, 3]] {
            if items[pair[0]].label == items[pair[1]].label {
                expected.push(items[pair[0]].clone());
            }
        }
        assert_eq!(d.items, expected, "mask {mask}");
    }
}

proptest! {
    #[test]
    fn dedup_is_idempotent(texts in prop::collection::vec(("[ab ]{0,4}", 0u8..2), 1..20)) {
        let items: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, (t, l))| item(&format!("i{i}"), &format!("w {t}"), *l))
            .collect();
        let once = deduplicate(&Corpus::new(items).unwrap());
        let twice = deduplicate(&once);
        prop_assert_eq!(once.items, twice.items);
    }

    #[test]
    fn downsample_balances(neg in 1usize..40, pos in 1usize..40, seed in any::<u64>()) {
        let c = balanced(neg, pos);
        let d = downsample(&c, seed).unwrap();
        let (n0, n1) = d.class_counts();
        prop_assert_eq!(n0, n1);
        prop_assert_eq!(n0, neg.min(pos));
        let original: std::collections::HashSet<_> = c.items.iter().collect();
        prop_assert!(d.items.iter().all(|i| original.contains(i)));
    }

    #[test]
    fn split_parts_are_disjoint_and_stratified(neg in 2usize..60, pos in 2usize..60, seed in any::<u64>()) {
        let c = balanced(neg, pos);
        let s = split(&c, (0.8, 0.1, 0.1), seed).unwrap();
        let mut all: Vec<&String> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
        prop_assert_eq!(all.len(), c.len());
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), c.len());
        let p = pos as f64 / c.len() as f64;
        for part in [&s.train, &s.validation, &s.test] {
            let (_, part_pos) = class_counts_of(&c, part).unwrap();
            prop_assert!((part_pos as f64 - p * part.len() as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn folds_are_balanced(neg in 1usize..50, pos in 1usize..50, k in 2usize..8, seed in any::<u64>()) {
        let c = balanced(neg, pos);
        prop_assume!(k <= c.len());
        let plan = make_folds(&c, k, seed).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), c.len());
        let pos_counts: Vec<usize> = plan.folds.iter().map(|f| class_counts_of(&c, f).unwrap().1).collect();
        prop_assert!(pos_counts.iter().max().unwrap() - pos_counts.iter().min().unwrap() <= 1);
    }
}

#[test]
fn downsample_reproduces_reported_counts() {
    let c = balanced(9_490, 9_177);
    let d = downsample(&c, 11).unwrap();
    assert_eq!(d.class_counts(), (9_177, 9_177));
    assert_eq!(d.len(), 18_354);
    assert_eq!(d.provenance.downsampled_dropped, 313);
}

#[test]
fn downsample_small_case_is_seeded() {
    let c = balanced(3, 1);
    for seed in 0..20 {
        let a = downsample(&c, seed).unwrap();
        let b = downsample(&c, seed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), (1, 1));
        // survivors keep input order
        assert_eq!(a.items[1].id, "p0");
    }
    let survivors: std::collections::HashSet<String> =
        (0..40).map(|s| downsample(&c, s).unwrap().items[0].id.clone()).collect();
    assert_eq!(survivors.len(), 3, "every negative should survive for some seed");
}

#[test]
fn downsample_identity_and_errors() {
    let c = balanced(4, 4);
    assert_eq!(downsample(&c, 3).unwrap(), c);
    assert!(matches!(downsample(&balanced(3, 0), 1), Err(Error::SingleClass)));
}

#[test]
fn split_sizes_follow_floor_policy() {
    let c = balanced(9_177, 9_177);
    let s = split(&c, (0.8, 0.1, 0.1), 5).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (14_684, 1_835, 1_835));
    let c = balanced(5, 5);
    let s = split(&c, (0.8, 0.1, 0.1), 5).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    assert!(split(&c, (0.5, 0.5, 0.1), 5).is_err());
    assert!(split(&balanced(1, 1), (0.8, 0.1, 0.1), 5).is_err());
}

#[test]
fn fold_sizes_for_reported_corpus() {
    let c = balanced(9_177, 9_177);
    let plan = make_folds(&c, 20, 7).unwrap();
    let big = plan.folds.iter().filter(|f| f.len() == 918).count();
    let small = plan.folds.iter().filter(|f| f.len() == 917).count();
    assert_eq!((big, small), (14, 6));
    assert_eq!(plan, make_folds(&c, 20, 7).unwrap());
}

#[test]
fn two_folds_of_four() {
    let c = balanced(2, 2);
    let plan = make_folds(&c, 2, 0).unwrap();
    for fold in &plan.folds {
        assert_eq!(class_counts_of(&c, fold).unwrap(), (1, 1));
    }
    assert!(make_folds(&c, 5, 0).is_err());
    assert!(make_folds(&c, 1, 0).is_err());
}

#[test]
fn synthetic_counts_and_determinism() {
    let c = generate_synthetic(100, 0.0, 3).unwrap();
    assert_eq!(c.class_counts(), (50, 50));
    assert_eq!(c, generate_synthetic(100, 0.0, 3).unwrap());
    assert_ne!(c, generate_synthetic(100, 0.0, 4).unwrap());

    let clean = generate_synthetic(2000, 0.0, 42).unwrap();
    let noisy = generate_synthetic(2000, 0.05, 42).unwrap();
    let flipped = clean
        .items
        .iter()
        .zip(&noisy.items)
        .inspect(|(a, b)| assert_eq!(a.text, b.text))
        .filter(|(a, b)| a.label != b.label)
        .count();
    assert_eq!(flipped, 100);
    assert!(generate_synthetic(11, 0.0, 1).is_err());
}

#[test]
fn corpus_file_round_trip_and_digest() {
    let c = generate_synthetic(20, 0.1, 9).unwrap();
    let mut buf = Vec::new();
    write_corpus(&mut buf, &c).unwrap();
    let back = read_corpus(buf.as_slice()).unwrap();
    assert_eq!(back.items, c.items);
    assert_eq!(back.digest(), c.digest());
    assert_eq!(c.digest().len(), 64);
}

#[test]
fn curation_never_duplicates_ids() {
    let records = vec![
        record("c1", "a", 1),
        record("c1", "b", 1),
        record("c2", "a", 0),
        record("c2", "b", 0),
        record("c2", "c", 0),
        record("c3", "a", 1),
    ];
    let (corpus, log) = curate(&records, 2).unwrap();
    let mut ids: Vec<_> = corpus.items.iter().map(|c| &c.id).collect();
    ids.dedup();
    assert_eq!(ids.len(), corpus.len());
    assert_eq!(log.final_count, corpus.len());
    assert_eq!(log.input_records, 6);
}
