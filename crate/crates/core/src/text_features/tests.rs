use super::*;
use proptest::prelude::*;

fn toks(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[test]
fn tokenize_examples() {
    assert_eq!(
        tokenize("The titles and order need to change."),
        toks(&["the", "titles", "and", "order", "need", "to", "change"])
    );
    assert!(tokenize("a b c").is_empty());
    assert!(tokenize("").is_empty());
    assert_eq!(tokenize("Don't-stop R2D2!"), toks(&["don", "stop", "r2d2"]));
}

#[test]
fn ngram_examples() {
    assert_eq!(
        extract_ngrams(&toks(&["not", "good"]), NgramRange::BIGRAMS),
        toks(&["not", "good", "not good"])
    );
    assert_eq!(extract_ngrams(&toks(&["yes"]), NgramRange::BIGRAMS), toks(&["yes"]));
    assert_eq!(
        extract_ngrams(&toks(&["a1", "b2", "c3"]), NgramRange::new(2, 2).unwrap()),
        toks(&["a1 b2", "b2 c3"])
    );
    assert!(NgramRange::new(0, 1).is_err());
    assert!(NgramRange::new(3, 2).is_err());
}

#[test]
fn vocabulary_is_lexicographic_and_deterministic() {
    let docs = vec![toks(&["not"]), toks(&["good"])];
    let v = fit_vocabulary(&docs, NgramRange::UNIGRAMS).unwrap();
    assert_eq!(v.index_of("good"), Some(0));
    assert_eq!(v.index_of("not"), Some(1));
    assert_eq!(v, fit_vocabulary(&docs, NgramRange::UNIGRAMS).unwrap());
    let single = fit_vocabulary(&[toks(&["only"])], NgramRange::BIGRAMS).unwrap();
    assert_eq!(single.len(), 1);
    assert!(fit_vocabulary(&[vec![]], NgramRange::UNIGRAMS).is_err());
    assert!(fit_vocabulary(&[], NgramRange::UNIGRAMS).is_err());
}

#[test]
fn count_vectors() {
    let v = fit_vocabulary(&[toks(&["good", "not"])], NgramRange::UNIGRAMS).unwrap();
    let c = vectorize_counts(&toks(&["not", "not", "good"]), &v);
    assert_eq!(c.to_dense(), vec![1.0, 2.0]);
    assert!(vectorize_counts(&toks(&["other"]), &v).is_empty());
    assert!(vectorize_counts(&[], &v).is_empty());
}

#[test]
fn idf_formula() {
    let m = TfidfModel::from_df(&[2, 3, 0], 3);
    assert!((m.idf[0] - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
    assert!((m.idf[0] - 1.2877).abs() < 1e-4);
    assert_eq!(m.idf[1], 1.0);
    assert!((m.idf[2] - (4.0f64.ln() + 1.0)).abs() < 1e-15);
}

#[test]
fn tfidf_hand_example() {
    let texts = ["good work", "not good", "missing tests"];
    let vz = Vectorizer::fit(&texts, NgramRange::UNIGRAMS).unwrap();
    let d2 = vz.transform("not good");
    let not = d2.get(vz.vocabulary.index_of("not").unwrap());
    let good = d2.get(vz.vocabulary.index_of("good").unwrap());
    assert!((not - 0.7960).abs() < 1e-4, "{not}");
    assert!((good - 0.6053).abs() < 1e-4, "{good}");
    assert!((d2.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn tfidf_edge_cases() {
    let m = TfidfModel::from_df(&[1, 1, 1], 4);
    let one_hot = SparseVector::from_pairs(3, [(1, 3.0)]);
    assert_eq!(transform_tfidf(&one_hot, &m).unwrap().to_dense(), vec![0.0, 1.0, 0.0]);
    assert!(transform_tfidf(&SparseVector::zeros(3), &m).unwrap().is_empty());
    assert!(transform_tfidf(&SparseVector::zeros(2), &m).is_err());
}

#[test]
fn transform_never_changes_fitted_state() {
    let vz = Vectorizer::fit(&["alpha beta", "beta gamma"], NgramRange::BIGRAMS).unwrap();
    let before = serde_json::to_string(&vz).unwrap();
    let _ = vz.transform("held out delta epsilon beta");
    assert_eq!(before, serde_json::to_string(&vz).unwrap());
    assert!(vz.vocabulary.index_of("delta").is_none());
}

#[test]
fn vectorizer_json_round_trip() {
    let vz = Vectorizer::fit(&["good work here", "not good"], NgramRange::BIGRAMS).unwrap();
    let json = serde_json::to_value(&vz).unwrap();
    assert_eq!(json["ngram_range"], serde_json::json!([1, 2]));
    assert!(json["terms"].is_array());
    let back: Vectorizer = serde_json::from_value(json).unwrap();
    assert_eq!(back, vz);
}

fn word() -> impl Strategy<Value = String> {
    "[a-e]{2}"
}

proptest! {
    #[test]
    fn tfidf_outputs_are_unit_or_zero(docs in prop::collection::vec(prop::collection::vec(word(), 0..6), 1..8)) {
        let texts: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        prop_assume!(texts.iter().any(|t| !t.is_empty()));
        let vz = Vectorizer::fit(&texts, NgramRange::BIGRAMS).unwrap();
        for t in &texts {
            let v = vz.transform(t);
            prop_assert!(v.is_empty() || (v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unigram_counts_are_additive(a in prop::collection::vec(word(), 0..6), b in prop::collection::vec(word(), 0..6)) {
        let all: Vec<String> = a.iter().chain(&b).cloned().collect();
        prop_assume!(!all.is_empty());
        let v = fit_vocabulary(&[all.clone()], NgramRange::UNIGRAMS).unwrap();
        let joint = vectorize_counts(&all, &v).to_dense();
        let sum: Vec<f64> = vectorize_counts(&a, &v)
            .to_dense()
            .iter()
            .zip(vectorize_counts(&b, &v).to_dense())
            .map(|(x, y)| x + y)
            .collect();
        prop_assert_eq!(joint, sum);
    }

    #[test]
    fn idf_is_monotone_in_df(n in 1usize..100, d1 in 0usize..100, d2 in 0usize..100) {
        let (d1, d2) = (d1.min(n), d2.min(n));
        prop_assume!(d1 < d2);
        let m = TfidfModel::from_df(&[d1, d2], n);
        prop_assert!(m.idf[0] > m.idf[1]);
        prop_assert!(m.idf[1] >= 1.0);
    }
}
