//! Seeded synthetic corpora with planted problem and praise vocabulary.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::{Corpus, LabeledComment};
use crate::rng::{self, purpose};
use crate::{Error, Result};

pub const PROBLEM_LEXICON: [&str; 8] =
    ["not", "but", "however", "missing", "should", "could", "more", "no"];
pub const PRAISE_LEXICON: [&str; 6] = ["yes", "good", "well", "great", "clearly", "passed"];

const FILLER: [&str; 36] = [
    "the", "code", "design", "team", "project", "section", "page", "readme", "test", "cases",
    "diagram", "class", "method", "user", "interface", "and", "to", "of", "in", "is", "it",
    "this", "work", "documentation", "implementation", "feature", "model", "controller", "view",
    "database", "are", "was", "for", "with", "on", "has",
];

fn sentence<R: rand::Rng>(rng: &mut R, lexicon: &[&str]) -> String {
    let filler_len = rng.gen_range(3..=7);
    let mut words: Vec<&str> = (0..filler_len)
        .map(|_| *FILLER.choose(rng).expect("filler is non-empty"))
        .collect();
    for _ in 0..rng.gen_range(1..=2) {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, lexicon.choose(rng).expect("lexicon is non-empty"));
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

/// `n / 2` problem comments and `n / 2` praise comments, one to three sentences
/// each, shuffled, then exactly `round(noise * n)` labels flipped. Items are
/// numbered `syn-00000`, `syn-00001`, ...
pub fn generate_synthetic(n: usize, noise: f64, seed: u64) -> Result<Corpus> {
    if n < 10 || n % 2 != 0 {
        return Err(Error::invalid(format!("synthetic corpus size must be even and ≥ 10, got {n}")));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::invalid(format!("noise must lie in [0, 1), got {noise}")));
    }
    let mut rng = rng::stream(seed, purpose::SYNTH);
    let mut drafts: Vec<(String, u8)> = (0..n)
        .map(|i| {
            let label = u8::from(i < n / 2);
            let lexicon: &[&str] = if label == 1 { &PROBLEM_LEXICON } else { &PRAISE_LEXICON };
            let sentences = rng.gen_range(1..=3);
            let text = (0..sentences)
                .map(|_| sentence(&mut rng, lexicon))
                .collect::<Vec<_>>()
                .join(" ");
            (text, label)
        })
        .collect();
    drafts.shuffle(&mut rng);
    // label noise draws from its own stream so texts and order do not depend on `noise`
    let mut noise_rng = rng::stream(seed, purpose::SYNTH_NOISE);
    let flips = (noise * n as f64).round() as usize;
    for i in index::sample(&mut noise_rng, n, flips) {
        drafts[i].1 ^= 1;
    }
    let items = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (text, label))| LabeledComment {
            id: format!("syn-{i:05}"),
            text,
            label,
        })
        .collect();
    Corpus::new(items)
}
