//! Greedy CART growth over sparse rows. Absent entries are exact zeros.

use rand::Rng as _;

use super::TreeNode;
use crate::rng::Rng;
use crate::text_features::SparseVector;

/// Per-feature `(value, row)` lists sorted by value then row, zeros omitted.
pub(crate) struct FeatureIndex<'a> {
    pub rows: &'a [SparseVector],
    pub dim: usize,
    columns: Vec<Vec<(f64, usize)>>,
}

impl<'a> FeatureIndex<'a> {
    pub fn new(rows: &'a [SparseVector], dim: usize) -> Self {
        let mut columns = vec![Vec::new(); dim];
        for (r, row) in rows.iter().enumerate() {
            for (f, v) in row.iter() {
                columns[f].push((v, r));
            }
        }
        for col in &mut columns {
            col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        FeatureIndex { rows, dim, columns }
    }
}

/// Split quality and leaf construction for one kind of target.
pub(crate) trait Criterion {
    type Stats: Copy + Default;

    fn add(&self, stats: &mut Self::Stats, row: usize);
    fn merge(a: Self::Stats, b: Self::Stats) -> Self::Stats;
    /// Stats of `a` without the rows behind `b`.
    fn sub(a: Self::Stats, b: Self::Stats) -> Self::Stats;
    /// Number of training samples (with multiplicity) behind the stats.
    fn count(stats: &Self::Stats) -> f64;
    fn is_pure(stats: &Self::Stats) -> bool;
    /// Larger is better; comparable across splits of the same node.
    fn gain(parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn leaf(&self, rows: &[usize], stats: &Self::Stats) -> TreeNode;
}

/// Weighted class counts with Gini impurity.
pub(crate) struct GiniCriterion<'a> {
    pub labels: &'a [u8],
    pub weights: &'a [f64],
    pub counts: &'a [f64],
}

#[derive(Clone, Copy, Default)]
pub(crate) struct ClassStats {
    pub weight: [f64; 2],
    pub count: f64,
}

pub(crate) fn gini_of(w: &[f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w[0] / total, w[1] / total);
    1.0 - (p0 * p0 + p1 * p1)
}

impl Criterion for GiniCriterion<'_> {
    type Stats = ClassStats;

    fn add(&self, s: &mut ClassStats, row: usize) {
        s.weight[self.labels[row] as usize] += self.weights[row];
        s.count += self.counts[row];
    }

    fn merge(a: ClassStats, b: ClassStats) -> ClassStats {
        ClassStats {
            weight: [a.weight[0] + b.weight[0], a.weight[1] + b.weight[1]],
            count: a.count + b.count,
        }
    }

    fn sub(a: ClassStats, b: ClassStats) -> ClassStats {
        ClassStats {
            weight: [a.weight[0] - b.weight[0], a.weight[1] - b.weight[1]],
            count: a.count - b.count,
        }
    }

    fn count(s: &ClassStats) -> f64 {
        s.count
    }

    fn is_pure(s: &ClassStats) -> bool {
        s.weight[0] <= 0.0 || s.weight[1] <= 0.0
    }

    fn gain(p: &ClassStats, l: &ClassStats, r: &ClassStats) -> f64 {
        let total = p.weight[0] + p.weight[1];
        let wl = l.weight[0] + l.weight[1];
        let wr = r.weight[0] + r.weight[1];
        gini_of(&p.weight) - (wl / total) * gini_of(&l.weight) - (wr / total) * gini_of(&r.weight)
    }

    fn leaf(&self, _rows: &[usize], s: &ClassStats) -> TreeNode {
        let total = s.weight[0] + s.weight[1];
        TreeNode::Leaf {
            value: if total > 0.0 { s.weight[1] / total } else { 0.0 },
            counts: s.weight.to_vec(),
        }
    }
}

/// Squared-error regression on residuals; leaf values come from a callback.
pub(crate) struct RegressionCriterion<'a, F: Fn(&[usize]) -> f64> {
    pub targets: &'a [f64],
    pub leaf_value: F,
}

#[derive(Clone, Copy, Default)]
pub(crate) struct SumStats {
    pub sum: f64,
    pub count: f64,
}

impl<F: Fn(&[usize]) -> f64> Criterion for RegressionCriterion<'_, F> {
    type Stats = SumStats;

    fn add(&self, s: &mut SumStats, row: usize) {
        s.sum += self.targets[row];
        s.count += 1.0;
    }

    fn merge(a: SumStats, b: SumStats) -> SumStats {
        SumStats {
            sum: a.sum + b.sum,
            count: a.count + b.count,
        }
    }

    fn sub(a: SumStats, b: SumStats) -> SumStats {
        SumStats {
            sum: a.sum - b.sum,
            count: a.count - b.count,
        }
    }

    fn count(s: &SumStats) -> f64 {
        s.count
    }

    fn is_pure(_: &SumStats) -> bool {
        false
    }

    /// Reduction of the sum of squared errors.
    fn gain(p: &SumStats, l: &SumStats, r: &SumStats) -> f64 {
        l.sum * l.sum / l.count + r.sum * r.sum / r.count - p.sum * p.sum / p.count
    }

    fn leaf(&self, rows: &[usize], s: &SumStats) -> TreeNode {
        TreeNode::Leaf {
            value: (self.leaf_value)(rows),
            counts: vec![s.count],
        }
    }
}

/// How many features to try at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FeatureSampling {
    All,
    /// Visit features in a seeded random order until this many features with
    /// a valid split have been evaluated.
    Random(usize),
}

pub(crate) struct Builder<'a, 'r, C: Criterion> {
    pub index: &'a FeatureIndex<'a>,
    pub criterion: C,
    pub max_depth: usize,
    pub sampling: FeatureSampling,
    pub rng: Option<&'r mut Rng>,
    stamp: Vec<u32>,
    epoch: u32,
    order: Vec<usize>,
}

#[derive(Clone, Copy)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

impl<'a, 'r, C: Criterion> Builder<'a, 'r, C> {
    pub fn new(
        index: &'a FeatureIndex<'a>,
        criterion: C,
        max_depth: usize,
        sampling: FeatureSampling,
        rng: Option<&'r mut Rng>,
    ) -> Self {
        Builder {
            index,
            criterion,
            max_depth,
            sampling,
            rng,
            stamp: vec![0; index.rows.len()],
            epoch: 0,
            order: (0..index.dim).collect(),
        }
    }

    pub fn grow(&mut self, rows: Vec<usize>) -> TreeNode {
        self.grow_node(rows, 0)
    }

    fn stats_of(&self, rows: &[usize]) -> C::Stats {
        let mut s = C::Stats::default();
        for &r in rows {
            self.criterion.add(&mut s, r);
        }
        s
    }

    fn grow_node(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let stats = self.stats_of(&rows);
        if depth >= self.max_depth || C::count(&stats) < 2.0 || C::is_pure(&stats) {
            return self.criterion.leaf(&rows, &stats);
        }
        let Some(choice) = self.best_split(&rows, &stats) else {
            return self.criterion.leaf(&rows, &stats);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.index.rows[r].get(choice.feature) <= choice.threshold);
        TreeNode::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left: Box::new(self.grow_node(left, depth + 1)),
            right: Box::new(self.grow_node(right, depth + 1)),
        }
    }

    /// Best split of the node over the sampled features.
    pub fn best_split(&mut self, rows: &[usize], stats: &C::Stats) -> Option<SplitChoice> {
        self.next_epoch();
        for &r in rows {
            self.stamp[r] = self.epoch;
        }
        let mut best: Option<SplitChoice> = None;
        let consider = |cand: SplitChoice, best: &mut Option<SplitChoice>| {
            let better = best.is_none_or(|b| {
                cand.gain > b.gain
                    || (cand.gain == b.gain
                        && (cand.feature < b.feature
                            || (cand.feature == b.feature && cand.threshold < b.threshold)))
            });
            if better {
                *best = Some(cand);
            }
        };
        match self.sampling {
            FeatureSampling::All => {
                for f in 0..self.index.dim {
                    if let Some(c) = self.best_for_feature(f, rows, stats) {
                        consider(c, &mut best);
                    }
                }
            }
            FeatureSampling::Random(wanted) => {
                let dim = self.index.dim;
                let mut found = 0;
                for k in 0..dim {
                    if found >= wanted {
                        break;
                    }
                    let rng = self.rng.as_mut().expect("random feature sampling needs an rng");
                    let pick = rng.gen_range(k..dim);
                    self.order.swap(k, pick);
                    let f = self.order[k];
                    if let Some(c) = self.best_for_feature(f, rows, stats) {
                        found += 1;
                        consider(c, &mut best);
                    }
                }
            }
        }
        best
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Nonzero `(value, row)` entries of feature `f` among `rows`, sorted.
    /// Rows of the node carry the current stamp.
    fn node_entries(&self, f: usize, rows: &[usize]) -> Vec<(f64, usize)> {
        let column = &self.index.columns[f];
        // scan the column when it is shorter than a per-row lookup pass
        if column.len() <= rows.len() * 4 {
            column
                .iter()
                .filter(|(_, r)| self.stamp[*r] == self.epoch)
                .copied()
                .collect()
        } else {
            let mut entries: Vec<(f64, usize)> = rows
                .iter()
                .filter_map(|&r| {
                    let v = self.index.rows[r].get(f);
                    (v != 0.0).then_some((v, r))
                })
                .collect();
            entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            entries
        }
    }

    fn best_for_feature(&mut self, f: usize, rows: &[usize], parent: &C::Stats) -> Option<SplitChoice> {
        let entries = self.node_entries(f, rows);
        if entries.is_empty() {
            return None;
        }
        // group equal values into bins; the zero bin sits between negatives and positives
        let zero_rows = rows.len() - entries.len();
        let zero = if zero_rows > 0 {
            let mut nonzero = C::Stats::default();
            for &(_, r) in &entries {
                self.criterion.add(&mut nonzero, r);
            }
            C::sub(*parent, nonzero)
        } else {
            C::Stats::default()
        };
        let mut bins: Vec<(f64, C::Stats)> = Vec::new();
        let mut zero_placed = zero_rows == 0;
        for &(v, r) in &entries {
            if !zero_placed && v > 0.0 {
                bins.push((0.0, zero));
                zero_placed = true;
            }
            match bins.last_mut() {
                Some((bv, s)) if *bv == v => self.criterion.add(s, r),
                _ => {
                    let mut s = C::Stats::default();
                    self.criterion.add(&mut s, r);
                    bins.push((v, s));
                }
            }
        }
        if !zero_placed {
            bins.push((0.0, zero));
        }
        if bins.len() < 2 {
            return None;
        }
        let mut suffix = vec![C::Stats::default(); bins.len() + 1];
        for i in (0..bins.len()).rev() {
            suffix[i] = C::merge(bins[i].1, suffix[i + 1]);
        }
        let mut prefix = C::Stats::default();
        let mut best: Option<SplitChoice> = None;
        for i in 0..bins.len() - 1 {
            prefix = C::merge(prefix, bins[i].1);
            let gain = C::gain(parent, &prefix, &suffix[i + 1]);
            if best.is_none_or(|b| gain > b.gain) {
                let (a, b) = (bins[i].0, bins[i + 1].0);
                let mut threshold = a / 2.0 + b / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}
