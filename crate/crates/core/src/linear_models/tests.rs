use super::toy::separable;
use super::*;
use crate::corpus::{generate_synthetic, PRAISE_LEXICON, PROBLEM_LEXICON};
use crate::text_features::{NgramRange, Vectorizer};
use proptest::prelude::*;

fn counts(texts: &[&str]) -> (Vec<SparseVector>, Vectorizer) {
    let vz = Vectorizer::fit(texts, NgramRange::UNIGRAMS).unwrap();
    (texts.iter().map(|t| vz.counts(t)).collect(), vz)
}

fn training_accuracy(x: &[SparseVector], y: &[u8], predict: impl Fn(&SparseVector) -> u8) -> f64 {
    x.iter().zip(y).filter(|(r, &l)| predict(r) == l).count() as f64 / y.len() as f64
}

#[test]
fn mnb_hand_example() {
    let (x, vz) = counts(&["not good", "good work"]);
    let m = fit_mnb(&x, &[1, 0], 1.0).unwrap();
    let not = vz.vocabulary.index_of("not").unwrap();
    assert!((m.log_likelihood[1].0[not].exp() - 0.4).abs() < 1e-15);
    assert!((m.log_likelihood[0].0[not].exp() - 0.2).abs() < 1e-15);
    let doc = vz.counts("not");
    let (label, _) = m.predict(&doc).unwrap();
    assert_eq!(label, 1);
    let jll = m.joint_log_likelihood(&doc).unwrap();
    assert!((jll[1] - jll[0] - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn mnb_tie_and_errors() {
    let (x, vz) = counts(&["same", "same"]);
    let m = fit_mnb(&x, &[0, 1], 1.0).unwrap();
    assert_eq!(m.predict(&vz.counts("same")).unwrap().0, 0);
    assert!(fit_mnb(&x, &[0, 1], 0.0).is_err());
    assert!(matches!(fit_mnb(&x, &[1, 1], 1.0), Err(Error::SingleClass)));
}

#[test]
fn mnb_probabilities_are_normalized() {
    let (x, _) = counts(&["a1 b2 b2", "c3 a1", "d4"]);
    let m = fit_mnb(&x, &[1, 0, 1], 0.5).unwrap();
    for row in &m.log_likelihood {
        let total: f64 = row.0.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let priors: f64 = m.log_prior.iter().map(|v| v.exp()).sum();
    assert!((priors - 1.0).abs() < 1e-12);
}

#[test]
fn linear_tie_rule_and_probability() {
    let m = LinearModel {
        weights: vec![0.0; 3],
        bias: 0.0,
        loss: LossKind::Logistic,
        regularization: Regularization::Inverse { c: 1.0 },
    };
    let p = m.predict(&SparseVector::from_dense(&[1.0, 0.0, 2.0])).unwrap();
    assert_eq!((p.label, p.score, p.probability), (0, 0.0, Some(0.5)));
    assert!(m.predict(&SparseVector::zeros(2)).is_err());
}

#[test]
fn logreg_separable_and_converged() {
    let (x, y, _) = separable();
    let m = fit_logreg(&x, &y, 10.0).unwrap();
    assert_eq!(training_accuracy(&x, &y, |r| m.predict(r).unwrap().label), 1.0);
    let (gw, gb) = logistic_gradient(&x, &y, 10.0, &m.weights, m.bias);
    let inf = gw.iter().fold(gb.abs(), |a, v| a.max(v.abs()));
    assert!(inf <= LOGREG_TOLERANCE, "gradient norm {inf}");
}

#[test]
fn logreg_rejects_single_class() {
    let (x, _, _) = separable();
    assert!(matches!(fit_logreg(&x, &[1, 1, 1, 1], 1.0), Err(Error::SingleClass)));
    assert!(fit_logreg(&x, &[1, 0, 1, 0], 0.0).is_err());
}

fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<SparseVector>, Vec<u8>) {
    use rand::Rng;
    let mut rng = crate::rng::seeded(seed);
    let x: Vec<SparseVector> = (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..d)
                .map(|_| if rng.gen_bool(0.5) { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect();
            SparseVector::from_dense(&dense)
        })
        .collect();
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
    y[0] = 0;
    y[1] = 1;
    (x, y)
}

#[test]
fn logistic_gradient_matches_central_differences() {
    use rand::Rng;
    for seed in 0..3 {
        let (x, y) = random_problem(seed, 12, 5);
        let mut rng = crate::rng::seeded(100 + seed);
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let (gw, gb) = logistic_gradient(&x, &y, 3.0, &w, b);
        let h = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for i in 0..5 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let num = (logistic_objective(&x, &y, 3.0, &wp, b) - logistic_objective(&x, &y, 3.0, &wm, b)) / (2.0 * h);
            assert!(rel(gw[i], num) < 1e-6, "w[{i}]: {} vs {num}", gw[i]);
        }
        let num = (logistic_objective(&x, &y, 3.0, &w, b + h) - logistic_objective(&x, &y, 3.0, &w, b - h)) / (2.0 * h);
        assert!(rel(gb, num) < 1e-6);
    }
}

/// Plain gradient descent with backtracking, run long, as an independent optimizer.
#[test]
fn logreg_matches_independent_optimizer() {
    let (x, y) = random_problem(7, 30, 4);
    let c = 2.0;
    let m = fit_logreg(&x, &y, c).unwrap();
    let ours = logistic_objective(&x, &y, c, &m.weights, m.bias);
    let mut w = vec![0.0; 4];
    let mut b = 0.0;
    for _ in 0..20_000 {
        let (gw, gb) = logistic_gradient(&x, &y, c, &w, b);
        let f = logistic_objective(&x, &y, c, &w, b);
        let g2: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        let mut step = 1.0;
        loop {
            let tw: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            if logistic_objective(&x, &y, c, &tw, b - step * gb) <= f - 0.5 * step * g2 || step < 1e-12 {
                w = tw;
                b -= step * gb;
                break;
            }
            step *= 0.5;
        }
    }
    let reference = logistic_objective(&x, &y, c, &w, b);
    assert!(ours <= reference * (1.0 + 1e-6), "{ours} vs {reference}");
    assert!((ours - reference).abs() <= 1e-6 * reference);
}

#[test]
fn hinge_regions() {
    let x = vec![SparseVector::from_dense(&[1.0])];
    let cfg = SgdConfig { alpha: 1e-300, ..SgdConfig::default() };
    assert!(sgd_objective(&x, &[1], &cfg, &[1.3], 0.0).abs() < 1e-12);
    assert!((sgd_objective(&x, &[1], &cfg, &[0.3], 0.0) - 0.7).abs() < 1e-12);
}

#[test]
fn sgd_separable_and_improves_objective() {
    let (x, y, _) = separable();
    let cfg = SgdConfig::default();
    let m = fit_sgd_linear(&x, &y, &cfg).unwrap();
    assert_eq!(training_accuracy(&x, &y, |r| m.predict(r).unwrap().label), 1.0);
    let zero = sgd_objective(&x, &y, &cfg, &vec![0.0; m.weights.len()], 0.0);
    assert!(sgd_objective(&x, &y, &cfg, &m.weights, m.bias) < zero);
    assert_eq!(m, fit_sgd_linear(&x, &y, &cfg).unwrap());
    assert!(matches!(fit_sgd_linear(&x, &[0; 4], &cfg), Err(Error::SingleClass)));
}

#[test]
fn svm_separable_and_beats_zero() {
    let (x, y, _) = separable();
    let m = fit_svm(&x, &y, 1.0).unwrap();
    assert_eq!(training_accuracy(&x, &y, |r| m.predict(r).unwrap().label), 1.0);
    let zero = svm_objective(&x, &y, 1.0, &vec![0.0; m.weights.len()], 0.0);
    assert_eq!(zero, 4.0);
    assert!(svm_objective(&x, &y, 1.0, &m.weights, m.bias) <= zero);
}

/// Projected subgradient descent on the primal as a reference optimum.
#[test]
fn svm_near_primal_optimum() {
    let (x, y) = random_problem(3, 40, 4);
    let c = 1.0;
    let m = fit_svm(&x, &y, c).unwrap();
    let ours = svm_objective(&x, &y, c, &m.weights, m.bias);
    let mut w = vec![0.0; 4];
    let mut b = 0.0;
    let mut best = f64::INFINITY;
    for t in 1..200_000 {
        let mut gw = w.clone();
        let mut gb = 0.0;
        for (row, &l) in x.iter().zip(&y) {
            let s = if l == 1 { 1.0 } else { -1.0 };
            if s * (row.dot_dense(&w) + b) < 1.0 {
                for (i, v) in row.iter() {
                    gw[i] -= c * s * v;
                }
                gb -= c * s;
            }
        }
        let eta = 0.05 / (t as f64).sqrt();
        for i in 0..4 {
            w[i] -= eta * gw[i];
        }
        b -= eta * gb;
        best = best.min(svm_objective(&x, &y, c, &w, b));
    }
    assert!(ours <= best * (1.0 + 1e-3), "SMO {ours} vs subgradient {best}");
}

#[test]
fn separable_labels_survive_input_scaling() {
    let (x, y, _) = separable();
    let s = 3.0;
    let scaled: Vec<SparseVector> = x
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.scale(s);
            r
        })
        .collect();
    let a = fit_logreg(&x, &y, 10.0).unwrap();
    let b = fit_logreg(&scaled, &y, 10.0 / (s * s)).unwrap();
    for (r, rs) in x.iter().zip(&scaled) {
        assert_eq!(a.predict(r).unwrap().label, b.predict(rs).unwrap().label);
    }
    let a = fit_svm(&x, &y, 1.0).unwrap();
    let b = fit_svm(&scaled, &y, 1.0 / (s * s)).unwrap();
    for (r, rs) in x.iter().zip(&scaled) {
        assert_eq!(a.predict(r).unwrap().label, b.predict(rs).unwrap().label);
    }
}

#[test]
fn top_coefficients_zero_model_and_clamp() {
    let vz = Vectorizer::fit(&["beta alpha gamma"], NgramRange::UNIGRAMS).unwrap();
    let m = LinearModel {
        weights: vec![0.0; 3],
        bias: 0.0,
        loss: LossKind::Hinge,
        regularization: Regularization::Inverse { c: 1.0 },
    };
    let r = top_coefficients(&m, &vz.vocabulary, 10).unwrap();
    assert_eq!(r.positive.len(), 3);
    assert!(r.positive.iter().all(|(_, w)| *w == 0.0));
    let names: Vec<&str> = r.positive.iter().map(|(t, _)| t.as_str()).collect();
    assert_eq!(names, ["alpha", "beta", "gamma"]);
}

#[test]
fn planted_lexicon_dominates_coefficients() {
    let corpus = generate_synthetic(400, 0.0, 5).unwrap();
    let texts: Vec<&str> = corpus.items.iter().map(|c| c.text.as_str()).collect();
    let vz = Vectorizer::fit(&texts, NgramRange::BIGRAMS).unwrap();
    let x = vz.transform_all(&texts);
    let m = fit_logreg(&x, &corpus.labels(), 10.0).unwrap();
    let report = top_coefficients(&m, &vz.vocabulary, 15).unwrap();
    let pos: Vec<&str> = report.positive.iter().map(|(t, _)| t.as_str()).collect();
    let neg: Vec<&str> = report.negative.iter().map(|(t, _)| t.as_str()).collect();
    for w in PROBLEM_LEXICON {
        assert!(pos.contains(&w), "{w} missing from {pos:?}");
    }
    for w in PRAISE_LEXICON {
        assert!(neg.contains(&w), "{w} missing from {neg:?}");
    }
}

#[test]
fn model_json_keeps_full_precision() {
    let (x, y, _) = separable();
    let m = fit_logreg(&x, &y, 10.0).unwrap();
    let json = serde_json::to_value(&m).unwrap();
    assert!(json["weights"][0].is_string());
    let back: LinearModel = serde_json::from_value(json).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn every_model_predicts_binary_labels_on_training_data(seed in 0u64..1000) {
        let (x, y) = random_problem(seed, 10, 3);
        let nonneg: Vec<SparseVector> = x.iter().map(|r| r.map_values(|_, v| v.abs())).collect();
        let mnb = fit_mnb(&nonneg, &y, 1.0).unwrap();
        let lr = fit_logreg(&x, &y, 1.0).unwrap();
        let sgd = fit_sgd_linear(&x, &y, &SgdConfig { seed, ..SgdConfig::default() }).unwrap();
        let svm = fit_svm(&x, &y, 1.0).unwrap();
        for (r, rn) in x.iter().zip(&nonneg) {
            prop_assert!(mnb.predict(rn).unwrap().0 <= 1);
            prop_assert!(lr.predict(r).unwrap().label <= 1);
            prop_assert!(sgd.predict(r).unwrap().label <= 1);
            prop_assert!(svm.predict(r).unwrap().label <= 1);
        }
    }
}
