//! Corpus curation: raw multi-rater tags in, balanced and split corpora out.
//!
//! Curation runs `consolidate` → `deduplicate` → `downsample`; each stage records
//! how many items it removed in the corpus [`Provenance`].

mod reliability;
mod synthetic;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::{self, purpose};
use crate::{Error, Result};

pub use reliability::{krippendorff_alpha, ReliabilityResult, ReliabilityTable};
pub use synthetic::{generate_synthetic, PRAISE_LEXICON, PROBLEM_LEXICON};

/// One tag given by one student to one review comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTagRecord {
    pub comment_id: String,
    pub submission_id: String,
    pub tagger_id: String,
    pub text: String,
    pub tag: u8,
}

/// A curated comment; `label == 1` means the comment detects a problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledComment {
    pub id: String,
    pub text: String,
    pub label: u8,
}

/// Items removed at each curation stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_records: usize,
    pub conflicts_dropped: usize,
    pub duplicates_dropped: usize,
    pub downsampled_dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub items: Vec<LabeledComment>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Build a corpus, rejecting duplicate ids and empty texts.
    pub fn new(items: Vec<LabeledComment>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for item in &items {
            if item.label > 1 {
                return Err(Error::invalid(format!("item {}: label must be 0 or 1", item.id)));
            }
            if item.text.trim().is_empty() {
                return Err(Error::invalid(format!("item {}: empty text", item.id)));
            }
            if !seen.insert(item.id.as_str()) {
                return Err(Error::invalid(format!("duplicate id {}", item.id)));
            }
        }
        Ok(Corpus {
            items,
            provenance: Provenance::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.items.iter().filter(|c| c.label == 1).count();
        (self.items.len() - pos, pos)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|c| c.label).collect()
    }

    /// Sub-corpus made of the items at `positions`, in the given order.
    pub fn select(&self, positions: &[usize]) -> Corpus {
        Corpus {
            items: positions.iter().map(|&i| self.items[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Positions of the given ids; unknown ids are an error.
    pub fn positions_of(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("unknown id {id}")))
            })
            .collect()
    }

    /// SHA-256 over the canonical JSON Lines encoding, hex encoded.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        write_corpus(&mut buf, self).expect("writing to a Vec cannot fail");
        Sha256::digest(&buf)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parse raw tag records, one JSON object per non-empty line.
pub fn ingest<R: BufRead>(reader: R) -> Result<Vec<RawTagRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawTagRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e))?;
        if record.tag > 1 {
            return Err(Error::parse(line_no, format!("tag must be 0 or 1, got {}", record.tag)));
        }
        if record.comment_id.is_empty() {
            return Err(Error::parse(line_no, "empty comment_id"));
        }
        if record.tagger_id.is_empty() {
            return Err(Error::parse(line_no, "empty tagger_id"));
        }
        if record.text.trim().is_empty() {
            return Err(Error::parse(line_no, "empty text"));
        }
        records.push(record);
    }
    Ok(records)
}

/// Keep comments whose tags all agree; drop and count the rest.
///
/// Output order follows the first appearance of each comment id.
pub fn consolidate(records: &[RawTagRecord]) -> (Vec<LabeledComment>, usize) {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, (&RawTagRecord, bool)> = HashMap::new();
    for r in records {
        match groups.get_mut(r.comment_id.as_str()) {
            Some((first, agree)) => *agree &= first.tag == r.tag,
            None => {
                order.push(&r.comment_id);
                groups.insert(&r.comment_id, (r, true));
            }
        }
    }
    let mut kept = Vec::new();
    let mut conflicts = 0;
    for id in order {
        let (first, agree) = groups[id];
        if agree {
            kept.push(LabeledComment {
                id: first.comment_id.clone(),
                text: first.text.clone(),
                label: first.tag,
            });
        } else {
            conflicts += 1;
        }
    }
    (kept, conflicts)
}

/// Reliability table with comments as units and taggers as raters.
pub fn reliability_table(records: &[RawTagRecord]) -> ReliabilityTable {
    let mut table = ReliabilityTable::default();
    for r in records {
        table.insert(&r.comment_id, &r.tagger_id, r.tag);
    }
    table
}

/// Case-folded text with punctuation treated as whitespace and whitespace collapsed.
pub fn dedup_key(text: &str) -> String {
    let folded: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapse items sharing a dedup key; keys that carry both labels are dropped entirely.
pub fn deduplicate(corpus: &Corpus) -> Corpus {
    let keys: Vec<String> = corpus.items.iter().map(|c| dedup_key(&c.text)).collect();
    let mut labels_by_key: HashMap<&str, [bool; 2]> = HashMap::new();
    for (key, item) in keys.iter().zip(&corpus.items) {
        labels_by_key.entry(key).or_default()[item.label as usize] = true;
    }
    let mut seen = std::collections::HashSet::new();
    let mut items = Vec::new();
    for (key, item) in keys.iter().zip(&corpus.items) {
        let labels = labels_by_key[key.as_str()];
        if labels[0] && labels[1] {
            continue;
        }
        if seen.insert(key.as_str()) {
            items.push(item.clone());
        }
    }
    let mut provenance = corpus.provenance.clone();
    provenance.duplicates_dropped += corpus.items.len() - items.len();
    Corpus { items, provenance }
}

/// Randomly drop majority-class items until both classes have the minority count.
pub fn downsample(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let (neg, pos) = corpus.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::SingleClass);
    }
    if neg == pos {
        return Ok(corpus.clone());
    }
    let majority = u8::from(pos > neg);
    let target = neg.min(pos);
    let majority_positions: Vec<usize> = corpus
        .items
        .iter()
        .enumerate()
        .filter(|(_, c)| c.label == majority)
        .map(|(i, _)| i)
        .collect();
    let mut rng = rng::stream(seed, purpose::DOWNSAMPLE);
    let mut keep = vec![false; corpus.items.len()];
    for (i, c) in corpus.items.iter().enumerate() {
        keep[i] = c.label != majority;
    }
    for j in index::sample(&mut rng, majority_positions.len(), target) {
        keep[majority_positions[j]] = true;
    }
    let items: Vec<LabeledComment> = corpus
        .items
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.clone())
        .collect();
    let mut provenance = corpus.provenance.clone();
    provenance.downsampled_dropped += corpus.items.len() - items.len();
    Ok(Corpus { items, provenance })
}

/// Train / validation / test id sets, each in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Apportion `total` across classes of sizes `sizes` by largest remainder.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let mut rest = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder of total*s/n, larger first; ties go to the lower class
    order.sort_by_key(|&c| (std::cmp::Reverse(total * sizes[c] % n), c));
    for c in order {
        if rest == 0 {
            break;
        }
        if quotas[c] < sizes[c] {
            quotas[c] += 1;
            rest -= 1;
        }
    }
    quotas
}

fn floor_share(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

fn class_positions(corpus: &Corpus) -> [Vec<usize>; 2] {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, c) in corpus.items.iter().enumerate() {
        by_class[c.label as usize].push(i);
    }
    by_class
}

/// Stratified, seeded split. Test and validation sizes are `floor(ratio * N)`;
/// train takes the remainder.
pub fn split(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {}",
            tr + va + te
        )));
    }
    let n = corpus.len();
    if n < 3 {
        return Err(Error::invalid(format!("cannot split {n} items into three parts")));
    }
    let mut by_class = class_positions(corpus);
    let mut rng = rng::stream(seed, purpose::SPLIT);
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    let sizes = [by_class[0].len(), by_class[1].len()];
    let test_quota = apportion(floor_share(te, n), &sizes);
    let val_quota = apportion(floor_share(va, n), &sizes);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (c, positions) in by_class.iter().enumerate() {
        let (test, rest) = positions.split_at(test_quota[c]);
        let (val, train) = rest.split_at(val_quota[c].min(rest.len()));
        parts[0].extend_from_slice(train);
        parts[1].extend_from_slice(val);
        parts[2].extend_from_slice(test);
    }
    let ids = |part: &mut Vec<usize>| -> Vec<String> {
        part.sort_unstable();
        part.iter().map(|&i| corpus.items[i].id.clone()).collect()
    };
    let [mut train, mut validation, mut test] = parts;
    Ok(SplitAssignment {
        train: ids(&mut train),
        validation: ids(&mut validation),
        test: ids(&mut test),
    })
}

/// `k` stratified folds of ids, each in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<String>>,
}

/// Shuffle each class, lay the classes end to end and deal items round-robin,
/// so fold sizes and per-class counts each differ by at most one.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    if k > corpus.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds corpus size {}",
            corpus.len()
        )));
    }
    let mut by_class = class_positions(corpus);
    let mut rng = rng::stream(seed, purpose::FOLDS);
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &pos) in by_class.iter().flatten().enumerate() {
        folds[i % k].push(pos);
    }
    let folds = folds
        .into_iter()
        .map(|mut f| {
            f.sort_unstable();
            f.into_iter().map(|i| corpus.items[i].id.clone()).collect()
        })
        .collect();
    Ok(FoldPlan { k, folds })
}

/// Read a curated corpus (JSON Lines `{id, text, label}`).
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: LabeledComment =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e))?;
        items.push(item);
    }
    Corpus::new(items)
}

pub fn write_corpus<W: Write>(mut writer: W, corpus: &Corpus) -> Result<()> {
    for item in &corpus.items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Summary written next to a curated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationLog {
    pub input_records: usize,
    pub conflicts_dropped: usize,
    pub duplicates_dropped: usize,
    pub downsampled_dropped: usize,
    pub final_count: usize,
    pub alpha_before: Option<f64>,
    pub alpha_after: Option<f64>,
}

/// Full curation: consolidate, deduplicate, downsample.
///
/// `alpha_after` is computed over the records of comments that survived
/// consolidation; either alpha is `None` when it is undefined for the data.
pub fn curate(records: &[RawTagRecord], seed: u64) -> Result<(Corpus, CurationLog)> {
    let alpha_before = krippendorff_alpha(&reliability_table(records)).ok().map(|r| r.alpha);
    let (kept, conflicts) = consolidate(records);
    let kept_ids: std::collections::HashSet<&str> = kept.iter().map(|c| c.id.as_str()).collect();
    let surviving: Vec<RawTagRecord> = records
        .iter()
        .filter(|r| kept_ids.contains(r.comment_id.as_str()))
        .cloned()
        .collect();
    let alpha_after = krippendorff_alpha(&reliability_table(&surviving)).ok().map(|r| r.alpha);

    let mut corpus = Corpus::new(kept)?;
    corpus.provenance.input_records = records.len();
    corpus.provenance.conflicts_dropped = conflicts;
    let corpus = deduplicate(&corpus);
    let corpus = downsample(&corpus, seed)?;
    let p = &corpus.provenance;
    let log = CurationLog {
        input_records: p.input_records,
        conflicts_dropped: p.conflicts_dropped,
        duplicates_dropped: p.duplicates_dropped,
        downsampled_dropped: p.downsampled_dropped,
        final_count: corpus.len(),
        alpha_before,
        alpha_after,
    };
    Ok((corpus, log))
}

/// Per-class counts in each part; used by tests and the `prepare` command.
pub fn class_counts_of(corpus: &Corpus, ids: &[String]) -> Result<(usize, usize)> {
    let positions = corpus.positions_of(ids)?;
    let pos = positions.iter().filter(|&&i| corpus.items[i].label == 1).count();
    Ok((positions.len() - pos, pos))
}

#[cfg(test)]
mod tests;
