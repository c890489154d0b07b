//! Histogram-based, best-first gradient boosting for sparse inputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{sigmoid, GbdtModel, Node, Tree};
use super::{DetectorError, TrainConfig};
use crate::features::SparseVector;

const MIN_CHILD_HESSIAN: f64 = 1e-6;
const MAX_BACKTRACK: usize = 30;

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

impl Bin {
    #[inline]
    fn add(&mut self, o: &Bin) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }

    #[inline]
    fn sub(&mut self, o: &Bin) {
        self.g -= o.g;
        self.h -= o.h;
        self.n -= o.n;
    }
}

/// Row-major binned copy of the training matrix.
struct Binned {
    row_ptr: Vec<usize>,
    feat: Vec<u32>,
    /// Global histogram slot (`bin_offset[feat] + local bin`).
    slot: Vec<u32>,
    /// Split thresholds per feature; bin `b` holds values in
    /// `(cuts[b-1], cuts[b]]`.
    cuts: Vec<Vec<f64>>,
    bin_offset: Vec<u32>,
    total_bins: usize,
}

impl Binned {
    fn build(x: &[SparseVector], feature_count: usize, max_bins: usize) -> Self {
        // Column-wise gather of non-zero values to choose cut points.
        let mut counts = vec![0usize; feature_count + 1];
        for v in x {
            for &i in &v.indices {
                counts[i as usize + 1] += 1;
            }
        }
        for f in 0..feature_count {
            counts[f + 1] += counts[f];
        }
        let mut col = vec![0f64; counts[feature_count]];
        let mut fill = counts.clone();
        for v in x {
            for (i, val) in v.iter() {
                col[fill[i as usize]] = val;
                fill[i as usize] += 1;
            }
        }
        drop(fill);
        let mut cuts = Vec::with_capacity(feature_count);
        let mut bin_offset = Vec::with_capacity(feature_count);
        let mut total = 0usize;
        for f in 0..feature_count {
            let vals = &mut col[counts[f]..counts[f + 1]];
            vals.sort_unstable_by(f64::total_cmp);
            let c = cut_points(vals, max_bins);
            bin_offset.push(total as u32);
            total += if vals.is_empty() { 0 } else { c.len() + 1 };
            cuts.push(c);
        }
        drop(col);

        let nnz: usize = x.iter().map(|v| v.nnz()).sum();
        let mut row_ptr = Vec::with_capacity(x.len() + 1);
        let mut feat = Vec::with_capacity(nnz);
        let mut slot = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for v in x {
            for (i, val) in v.iter() {
                let c = &cuts[i as usize];
                let b = c.partition_point(|&t| t < val);
                feat.push(i);
                slot.push(bin_offset[i as usize] + b as u32);
            }
            row_ptr.push(feat.len());
        }
        Binned { row_ptr, feat, slot, cuts, bin_offset, total_bins: total }
    }

    /// Local bin of `feature` in `row`, or `None` when absent.
    #[inline]
    fn bin_of(&self, row: usize, feature: u32) -> Option<u32> {
        let s = self.row_ptr[row];
        let e = self.row_ptr[row + 1];
        self.feat[s..e]
            .binary_search(&feature)
            .ok()
            .map(|p| self.slot[s + p] - self.bin_offset[feature as usize])
    }

    fn bins(&self, f: usize) -> usize {
        if f + 1 < self.bin_offset.len() {
            (self.bin_offset[f + 1] - self.bin_offset[f]) as usize
        } else {
            self.total_bins - self.bin_offset[f] as usize
        }
    }
}

/// Cut thresholds over sorted non-zero values: midpoints between all
/// distinct values when there are few, otherwise quantile boundaries.
fn cut_points(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in sorted {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    let mid = |a: f64, b: f64| {
        let m = a + (b - a) / 2.0;
        // Keep the cut strictly below `b` so `b` lands right of it.
        if m < b { m } else { a }
    };
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| mid(w[0], w[1])).collect();
    }
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(max_bins - 1);
    for q in 1..max_bins {
        let rank = q * n / max_bins;
        let v = sorted[rank.saturating_sub(1)];
        // Next distinct value above v.
        let p = sorted.partition_point(|&s| s <= v);
        if p >= n {
            break;
        }
        let c = mid(v, sorted[p]);
        if cuts.last().is_none_or(|&l| c > l) {
            cuts.push(c);
        }
    }
    cuts
}

#[derive(Debug, Clone, Copy)]
struct SplitCand {
    gain: f64,
    feature: u32,
    /// Local bins `<= bin` go left.
    bin: u32,
    default_left: bool,
}

/// Node histogram plus per-feature counts of rows with a stored value.
struct Hist {
    bins: Vec<Bin>,
    present: Vec<u32>,
}

impl Hist {
    fn sub(&mut self, o: &Hist) {
        for (p, s) in self.bins.iter_mut().zip(&o.bins) {
            p.sub(s);
        }
        for (p, s) in self.present.iter_mut().zip(&o.present) {
            *p -= s;
        }
    }
}

struct LeafState {
    node: usize,
    rows: Vec<u32>,
    hist: Option<Hist>,
    best: Option<SplitCand>,
}

struct Grower<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a TrainConfig,
    allowed: Vec<bool>,
}

impl Grower<'_> {
    fn histogram(&self, rows: &[u32]) -> Hist {
        let d = self.data;
        let mut bins = vec![Bin::default(); d.total_bins];
        let mut present = vec![0u32; d.cuts.len()];
        for &r in rows {
            let r = r as usize;
            let (g, h) = (self.grad[r], self.hess[r]);
            let span = d.row_ptr[r]..d.row_ptr[r + 1];
            for (&s, &f) in d.slot[span.clone()].iter().zip(&d.feat[span]) {
                let b = &mut bins[s as usize];
                b.g += g;
                b.h += h;
                b.n += 1;
                present[f as usize] += 1;
            }
        }
        Hist { bins, present }
    }

    fn totals(&self, rows: &[u32]) -> Bin {
        let mut t = Bin::default();
        for &r in rows {
            t.g += self.grad[r as usize];
            t.h += self.hess[r as usize];
            t.n += 1;
        }
        t
    }

    fn score(&self, b: &Bin) -> f64 {
        b.g * b.g / (b.h + self.cfg.l2_regularization)
    }

    fn leaf_value(&self, b: &Bin) -> f64 {
        -b.g / (b.h + self.cfg.l2_regularization)
    }

    fn can_split(&self, total: &Bin) -> bool {
        total.n as usize >= 2 * self.cfg.min_samples_leaf.max(1)
    }

    fn best_split(&self, hist: &Hist, total: &Bin) -> Option<SplitCand> {
        let min_n = self.cfg.min_samples_leaf.max(1) as u32;
        let parent = self.score(total);
        let ok = |b: &Bin| b.n >= min_n && b.h >= MIN_CHILD_HESSIAN;
        let mut best: Option<SplitCand> = None;
        for f in 0..self.data.cuts.len() {
            let nb = self.data.bins(f);
            // Either side of a split must hold min_n rows with a value.
            if nb == 0 || !self.allowed[f] || hist.present[f] < min_n {
                continue;
            }
            let off = self.data.bin_offset[f] as usize;
            let bins = &hist.bins[off..off + nb];
            let mut present = Bin::default();
            for b in bins {
                present.add(b);
            }
            if present.n == 0 {
                continue;
            }
            let mut zero = *total;
            zero.sub(&present);
            let mut left = Bin::default();
            for (j, b) in bins.iter().enumerate() {
                left.add(b);
                let mut right = present;
                right.sub(&left);
                for default_left in [true, false] {
                    let (mut l, mut r) = (left, right);
                    if default_left {
                        l.add(&zero);
                    } else {
                        r.add(&zero);
                    }
                    if !ok(&l) || !ok(&r) {
                        continue;
                    }
                    let gain = self.score(&l) + self.score(&r) - parent;
                    if gain > best.map_or(1e-12, |b| b.gain) {
                        best = Some(SplitCand { gain, feature: f as u32, bin: j as u32, default_left });
                    }
                }
            }
        }
        best
    }

    /// Grows one tree; returns it with the row sets of its leaves.
    fn grow(&self, all_rows: Vec<u32>) -> (Vec<Node>, Vec<(usize, Vec<u32>)>) {
        let mut nodes: Vec<Node> = Vec::new();
        let total = self.totals(&all_rows);
        nodes.push(Node::Leaf { value: self.leaf_value(&total) });
        let mut root = LeafState { node: 0, rows: all_rows, hist: None, best: None };
        if self.can_split(&total) {
            let h = self.histogram(&root.rows);
            root.best = self.best_split(&h, &total);
            root.hist = Some(h);
        }
        let mut leaves = vec![root];
        while leaves.len() < self.cfg.max_leaves {
            // Highest gain; ties go to the earliest-created node.
            let pick = leaves
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.best.map(|b| (i, b.gain, l.node)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
            let Some((idx, _, _)) = pick else { break };
            let leaf = leaves.swap_remove(idx);
            let split = leaf.best.expect("picked leaf has a split");
            let (mut lrows, mut rrows) = (Vec::new(), Vec::new());
            for &r in &leaf.rows {
                let go_left = match self.data.bin_of(r as usize, split.feature) {
                    Some(b) => b <= split.bin,
                    None => split.default_left,
                };
                if go_left { lrows.push(r) } else { rrows.push(r) }
            }
            drop(leaf.rows);
            let lt = self.totals(&lrows);
            let rt = self.totals(&rrows);
            let li = nodes.len();
            nodes.push(Node::Leaf { value: self.leaf_value(&lt) });
            nodes.push(Node::Leaf { value: self.leaf_value(&rt) });
            nodes[leaf.node] = Node::Split {
                feature: split.feature,
                threshold: self.data.cuts[split.feature as usize]
                    .get(split.bin as usize)
                    .copied()
                    .unwrap_or(f64::INFINITY),
                default_left: split.default_left,
                left: li as u32,
                right: li as u32 + 1,
            };
            let want_l = self.can_split(&lt);
            let want_r = self.can_split(&rt);
            let (mut lh, mut rh) = (None, None);
            if want_l || want_r {
                // Build the smaller side; derive the other by subtraction.
                let mut parent = leaf.hist.expect("splittable leaf has a histogram");
                let left_small = lrows.len() <= rrows.len();
                let small = self.histogram(if left_small { &lrows } else { &rrows });
                parent.sub(&small);
                if left_small {
                    (lh, rh) = (Some(small), Some(parent));
                } else {
                    (lh, rh) = (Some(parent), Some(small));
                }
            }
            for (node, rows, total, hist, want) in [(li, lrows, lt, lh, want_l), (li + 1, rrows, rt, rh, want_r)] {
                let mut st = LeafState { node, rows, hist: None, best: None };
                if want {
                    let h = hist.expect("histogram present");
                    st.best = self.best_split(&h, &total);
                    if st.best.is_some() {
                        st.hist = Some(h);
                    }
                }
                leaves.push(st);
            }
        }
        let leaf_rows = leaves.into_iter().map(|l| (l.node, l.rows)).collect();
        (nodes, leaf_rows)
    }
}

fn weighted_loss(margin: &[f64], y: &[u8], w: &[f64], wsum: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..margin.len() {
        let f = margin[i];
        // log(1 + e^f) - y f, computed stably.
        let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
        s += w[i] * (softplus - y[i] as f64 * f);
    }
    s / wsum
}

/// Output of [`train_gbdt_traced`].
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub model: GbdtModel,
    /// Weighted mean training loss before the first tree and after each tree.
    pub loss: Vec<f64>,
}

/// Trains a boosted ensemble with weighted logistic loss.
pub fn train_gbdt(x: &[SparseVector], y: &[u8], config: &TrainConfig) -> Result<GbdtModel, DetectorError> {
    train_gbdt_traced(x, y, config).map(|t| t.model)
}

pub fn train_gbdt_traced(x: &[SparseVector], y: &[u8], config: &TrainConfig) -> Result<TrainTrace, DetectorError> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(DetectorError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(DetectorError::TooFewSamples(x.len()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(DetectorError::BadLabel(bad));
    }
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    let n = y.len();
    if n_pos == 0 || n_pos == n {
        return Err(DetectorError::SingleClass);
    }
    let feature_count = x[0].dim;
    for (i, v) in x.iter().enumerate() {
        if v.dim != feature_count {
            return Err(DetectorError::DimensionMismatch { row: i, expected: feature_count, got: v.dim });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(DetectorError::NonFiniteFeature { row: i });
        }
    }

    let (wp, wn) = if config.class_weighting {
        (n as f64 / (2.0 * n_pos as f64), n as f64 / (2.0 * (n - n_pos) as f64))
    } else {
        (1.0, 1.0)
    };
    let w: Vec<f64> = y.iter().map(|&l| if l == 1 { wp } else { wn }).collect();
    let wsum: f64 = w.iter().sum();
    let base_score = (wp * n_pos as f64 / (wn * (n - n_pos) as f64)).ln();

    let data = Binned::build(x, feature_count, config.max_bins);
    let mut margin = vec![base_score; n];
    let mut grad = vec![0f64; n];
    let mut hess = vec![0f64; n];
    let mut loss = vec![weighted_loss(&margin, y, &w, wsum)];
    let mut trees = Vec::with_capacity(config.num_trees);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut features: Vec<usize> = (0..feature_count).collect();
    let all_rows: Vec<u32> = (0..n as u32).collect();
    let mut scratch = vec![0f64; n];

    for _ in 0..config.num_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = w[i] * (p - y[i] as f64);
            hess[i] = w[i] * (p * (1.0 - p)).max(1e-16);
        }
        let mut allowed = vec![true; feature_count];
        if config.feature_subsample < 1.0 {
            let keep = ((feature_count as f64 * config.feature_subsample).ceil() as usize).max(1);
            features.shuffle(&mut rng);
            allowed.iter_mut().for_each(|a| *a = false);
            for &f in &features[..keep.min(feature_count)] {
                allowed[f] = true;
            }
        }
        let grower = Grower { data: &data, grad: &grad, hess: &hess, cfg: config, allowed };
        let (mut nodes, leaf_rows) = grower.grow(all_rows.clone());

        // Shrink the step until the training loss does not increase.
        let prev = *loss.last().expect("initial loss");
        let mut step = config.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            scratch.copy_from_slice(&margin);
            for (node, rows) in &leaf_rows {
                if let Node::Leaf { value } = nodes[*node] {
                    let d = step * value;
                    for &r in rows {
                        scratch[r as usize] += d;
                    }
                }
            }
            let l = weighted_loss(&scratch, y, &w, wsum);
            if l <= prev {
                accepted = Some(l);
                break;
            }
            step /= 2.0;
        }
        match accepted {
            Some(l) => {
                std::mem::swap(&mut margin, &mut scratch);
                for node in &mut nodes {
                    if let Node::Leaf { value } = node {
                        *value *= step;
                    }
                }
                loss.push(l);
                trees.push(Tree::into_preorder(&nodes, 0));
            }
            None => {
                // No descent direction left; a zero tree keeps the count.
                loss.push(prev);
                trees.push(Tree::leaf(0.0));
            }
        }
    }
    let model = GbdtModel::new(base_score, trees, feature_count, config.clone());
    Ok(TrainTrace { model, loss })
}
