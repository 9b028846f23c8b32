use proptest::prelude::*;

use super::*;
use crate::corpus::{generate_synthetic, make_folds, Corpus, LabeledComment};
use crate::model::{ModelKind, PipelineSpec, Resources};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn metrics_from_hand_counts() {
    let mut predicted = vec![1u8; 50];
    predicted.extend(vec![0u8; 20]);
    let mut gold = vec![1u8; 40];
    gold.extend(vec![0u8; 10]);
    gold.extend(vec![1u8; 20]);
    let m = compute_metrics(&predicted, &gold).unwrap();
    assert_eq!(m.confusion, ConfusionMatrix { tp: 40, fp: 10, fn_: 20, tn: 0 });
    close(m.precision, 0.8, 1e-15);
    close(m.recall, 2.0 / 3.0, 1e-15);
    close(m.f1, 0.7273, 1e-4);
    assert_eq!(m.confusion.total(), 70);
}

#[test]
fn degenerate_metrics() {
    let gold = [1, 0, 1, 0];
    assert_eq!(compute_metrics(&gold, &gold).unwrap().f1, 1.0);
    let m = compute_metrics(&[0, 0, 0, 0], &gold).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    let m = compute_metrics(&[1, 1, 1, 1], &gold).unwrap();
    assert_eq!((m.accuracy, m.recall, m.precision), (0.5, 1.0, 0.5));
    close(m.f1, 2.0 / 3.0, 1e-15);
    assert!(compute_metrics(&[1], &[1, 0]).is_err());
    assert!(compute_metrics(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn metrics_match_pair_counting(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)) {
        let (p, g): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let m = compute_metrics(&p, &g).unwrap();
        let count = |a: u8, b: u8| pairs.iter().filter(|&&(x, y)| x == a && y == b).count();
        prop_assert_eq!(m.confusion, ConfusionMatrix { tp: count(1, 1), fp: count(1, 0), fn_: count(0, 1), tn: count(0, 0) });
        prop_assert_eq!(m.accuracy, (count(1, 1) + count(0, 0)) as f64 / pairs.len() as f64);
        for v in [m.precision, m.recall, m.f1, m.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn summary_is_permutation_invariant(
        scores in prop::collection::vec(0.0f64..1.0, 2..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut shuffled = scores.clone();
        shuffled.shuffle(&mut crate::rng::stream(seed, 0));
        let a = summarize_scores(&scores).unwrap();
        let b = summarize_scores(&shuffled).unwrap();
        prop_assert_eq!(a.median, b.median);
        prop_assert_eq!(a.q1, b.q1);
        prop_assert_eq!(a.q3, b.q3);
        prop_assert_eq!(&a.outliers, &b.outliers);
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.std - b.std).abs() < 1e-12);
        prop_assert!(a.min <= a.q1 && a.q1 <= a.median && a.median <= a.q3 && a.q3 <= a.max);
        prop_assert!(a.whisker_low >= a.min && a.whisker_high <= a.max);
        let iqr = a.q3 - a.q1;
        let expected = scores.iter().filter(|&&s| s < a.q1 - 1.5 * iqr || s > a.q3 + 1.5 * iqr).count();
        prop_assert_eq!(a.outliers.len(), expected);
    }
}

#[test]
fn summary_examples() {
    let s = summarize_scores(&[0.8, 0.9]).unwrap();
    close(s.median, 0.85, 1e-15);
    close(s.mean, 0.85, 1e-15);
    close(s.std, 0.0707, 1e-4);

    let s = summarize_scores(&[0.7; 5]).unwrap();
    assert_eq!((s.std, s.q1, s.q3), (0.0, 0.7, 0.7));
    assert!(s.outliers.is_empty());

    let s = summarize_scores(&[0.9, 0.1, 0.9, 0.9, 0.9]).unwrap();
    assert_eq!(s.outliers, vec![0.1]);
    assert_eq!((s.whisker_low, s.whisker_high), (0.9, 0.9));

    // Linear interpolation: position p·(n−1).
    let s = summarize_scores(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));

    assert!(summarize_scores(&[0.5]).is_err());
    assert!(summarize_scores(&[0.5, f64::NAN]).is_err());
}

fn summary_of(scores: &[f64]) -> ScoreSummary {
    summarize_scores(scores).unwrap()
}

fn count(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

#[test]
fn degenerate_boxplot_has_flat_box_and_no_whiskers() {
    let svg = render_boxplot(&[("flat".into(), summary_of(&[0.9; 4]))]);
    roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(count(&svg, r#"class="whisker""#), 0);
    assert!(svg.contains(r#"height="0.00" fill"#));
    assert_eq!(count(&svg, "<circle"), 0);
}

#[test]
fn boxplot_draws_one_circle_per_outlier() {
    let a = summary_of(&[0.1, 0.9, 0.9, 0.9, 0.9]);
    let b = summary_of(&[0.0, 0.5, 0.52, 0.53, 0.55, 0.56, 1.0]);
    assert_eq!(b.outliers.len(), 2);
    let svg = render_boxplot(&[("a".into(), a), ("b <&>".into(), b)]);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert_eq!(circles, 3);
    let boxes: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("box")).collect();
    assert_eq!(boxes.len(), 2);
    assert_ne!(boxes[0].attribute("x"), boxes[1].attribute("x"));
    assert!(doc.descendants().any(|n| n.text() == Some("b <&>")));
}

#[test]
fn boxplot_is_deterministic() {
    let input = vec![
        ("x".to_string(), summary_of(&[0.8, 0.85, 0.9, 0.95])),
        ("y".to_string(), summary_of(&[0.6, 0.7, 0.9, 0.91, 0.99])),
    ];
    let svg = render_boxplot(&input);
    assert_eq!(svg, render_boxplot(&input.clone()));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("whisker")).count(), 4);
}

fn tiny_corpus() -> Corpus {
    generate_synthetic(200, 0.05, 42).unwrap()
}

#[test]
fn cross_validation_scores_every_fold_in_order() {
    let corpus = tiny_corpus();
    let plan = make_folds(&corpus, 5, 1).unwrap();
    let spec = PipelineSpec::defaults(ModelKind::Logreg);
    let a = cross_validate(&spec, &corpus, &plan, 1, Resources::default()).unwrap();
    assert_eq!(a.len(), 5);
    for v in a.f1.iter().chain(&a.precision).chain(&a.recall).chain(&a.accuracy) {
        assert!((0.0..=1.0).contains(v));
    }
    let b = cross_validate(&spec, &corpus, &plan, 1, Resources::default()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| cross_validate(&spec, &corpus, &plan, 1, Resources::default()).unwrap());
    assert_eq!(a, serial);
    // Fold order: each entry equals a direct fit on that fold.
    let (train, test) = fold_partition(&corpus, &plan, 3).unwrap();
    let model = crate::model::fit_pipeline(&spec, &train, 1, Resources::default()).unwrap();
    assert_eq!(evaluate_model(&model, &test, Resources::default()).unwrap().f1, a.f1[3]);
}

#[test]
fn fold_portions_are_disjoint_and_cover_the_corpus() {
    let corpus = tiny_corpus();
    let plan = make_folds(&corpus, 7, 2).unwrap();
    for f in 0..plan.k {
        let (train, test) = fold_partition(&corpus, &plan, f).unwrap();
        let train_ids: std::collections::HashSet<&str> = train.items.iter().map(|c| c.id.as_str()).collect();
        assert!(test.items.iter().all(|c| !train_ids.contains(c.id.as_str())));
        assert_eq!(train.len() + test.len(), corpus.len());
    }
    assert!(fold_partition(&corpus, &plan, 7).is_err());
}

#[test]
fn vocabulary_is_refit_per_fold() {
    let mut corpus = tiny_corpus();
    let plan = make_folds(&corpus, 5, 3).unwrap();
    // One sentinel term per fold, present only in that fold's items.
    for (f, fold) in plan.folds.iter().enumerate() {
        let pos = corpus.positions_of(fold).unwrap();
        for p in pos {
            corpus.items[p].text.push_str(&format!(" sentinelterm{f}"));
        }
    }
    let spec = PipelineSpec::defaults(ModelKind::Mnb);
    let seen = cross_validate_map(&spec, &corpus, &plan, 0, Resources::default(), |fold, model, _| {
        let vocab = &model.vectorizer().unwrap().vocabulary;
        let own = vocab.index_of(&format!("sentinelterm{fold}")).is_some();
        let others = (0..plan.k).filter(|&g| g != fold).all(|g| vocab.index_of(&format!("sentinelterm{g}")).is_some());
        Ok((own, others))
    })
    .unwrap();
    assert_eq!(seen, vec![(false, true); 5]);
}

#[test]
fn single_class_training_portion_names_the_fold() {
    let items: Vec<LabeledComment> = (0..6)
        .map(|i| LabeledComment { id: format!("c{i}"), text: format!("text {i}"), label: u8::from(i == 0) })
        .collect();
    let corpus = Corpus::new(items).unwrap();
    let plan = crate::corpus::FoldPlan {
        k: 2,
        folds: vec![vec!["c0".into()], (1..6).map(|i| format!("c{i}")).collect()],
    };
    let err = cross_validate(&PipelineSpec::defaults(ModelKind::Mnb), &corpus, &plan, 0, Resources::default())
        .unwrap_err()
        .to_string();
    assert!(err.contains("fold 0"), "{err}");
}

fn sample_report() -> EvaluationReport {
    let corpus = tiny_corpus();
    let plan = make_folds(&corpus, 4, 9).unwrap();
    let spec = PipelineSpec::defaults(ModelKind::Sgd);
    let scores = cross_validate(&spec, &corpus, &plan, 9, Resources::default()).unwrap();
    EvaluationReport::new(spec, 9, corpus.digest(), scores).unwrap()
}

#[test]
fn report_round_trips_and_is_byte_stable() {
    let report = sample_report();
    let json = emit_report(&report, ReportFormat::Json).unwrap();
    assert_eq!(parse_report(&json).unwrap(), report);
    assert_eq!(json, emit_report(&sample_report(), ReportFormat::Json).unwrap());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["format_version", "pipeline", "k", "seed", "corpus_digest", "scores", "summary"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v.get("timing_seconds").is_none());
    assert_eq!(v["pipeline"]["features"]["tfidf"], serde_json::json!(true));
    assert_eq!(v["scores"]["f1"].as_array().unwrap().len(), 4);

    let mut timed = report;
    timed.timing_seconds = Some(vec![0.5; 4]);
    let json = emit_report(&timed, ReportFormat::Json).unwrap();
    assert_eq!(parse_report(&json).unwrap(), timed);
}

#[test]
fn csv_has_fold_and_summary_rows() {
    let report = sample_report();
    let csv = emit_report(&report, ReportFormat::Csv).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), csv_row_count(report.k));
    assert_eq!(rows.len(), 4 + 7);
    assert_eq!(&rows[0][0], "0");
    assert_eq!(&rows[4][0], "median");
    let f1_median: f64 = rows[4][1].parse().unwrap();
    assert_eq!(f1_median, report.summary.median);
}
