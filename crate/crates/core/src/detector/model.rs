use std::fmt::Write as _;
use std::io::{self, BufRead};
use std::path::Path;

use super::{DetectorError, TrainConfig};
use crate::features::SparseVector;

pub const GBDT_HEADER: &str = "#pumpwatch-gbdt-v1";

/// Largest probability below 1; saturated margins are clamped to it.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.min(P_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Present values `<= threshold` go left; absent (zero) values follow
    /// `default_left`.
    Split {
        feature: u32,
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Regression tree stored in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    /// Additive log-odds contribution for `x`.
    #[inline]
    pub fn predict(&self, x: &SparseVector) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, default_left, left, right } => {
                    let go_left = match x.indices.binary_search(&feature) {
                        Ok(p) => x.values[p] <= threshold,
                        Err(_) => default_left,
                    };
                    i = if go_left { left } else { right } as usize;
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Re-lays the tree out in preorder starting from `root`.
    pub(crate) fn into_preorder(nodes: &[Node], root: usize) -> Tree {
        fn walk(src: &[Node], i: usize, out: &mut Vec<Node>) -> u32 {
            let at = out.len() as u32;
            match src[i] {
                leaf @ Node::Leaf { .. } => out.push(leaf),
                Node::Split { feature, threshold, default_left, left, right } => {
                    out.push(leaf_placeholder());
                    let l = walk(src, left as usize, out);
                    let r = walk(src, right as usize, out);
                    out[at as usize] = Node::Split { feature, threshold, default_left, left: l, right: r };
                }
            }
            at
        }
        let mut out = Vec::with_capacity(nodes.len());
        walk(nodes, root, &mut out);
        Tree { nodes: out }
    }
}

fn leaf_placeholder() -> Node {
    Node::Leaf { value: 0.0 }
}

/// Boosted ensemble of regression trees over log-odds.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub feature_count: usize,
    /// Configuration the model was trained with.
    pub config: TrainConfig,
    threshold: f64,
    threshold_tuned: bool,
}

impl GbdtModel {
    pub(crate) fn new(base_score: f64, trees: Vec<Tree>, feature_count: usize, config: TrainConfig) -> Self {
        GbdtModel { base_score, trees, feature_count, config, threshold: 0.5, threshold_tuned: false }
    }

    /// Tree-less model that always predicts `sigmoid(base_score)`.
    pub fn constant(base_score: f64, feature_count: usize) -> Self {
        Self::new(base_score, Vec::new(), feature_count, TrainConfig::default())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn threshold_tuned(&self) -> bool {
        self.threshold_tuned
    }

    /// Fixes the decision threshold; allowed once per model.
    pub fn set_threshold(&mut self, t: f64) -> Result<(), DetectorError> {
        if self.threshold_tuned {
            return Err(DetectorError::ThresholdAlreadySet);
        }
        if !(t > 0.0 && t < 1.0) {
            return Err(DetectorError::InvalidThreshold(t));
        }
        self.threshold = t;
        self.threshold_tuned = true;
        Ok(())
    }

    /// Raw log-odds.
    #[inline]
    pub fn margin(&self, x: &SparseVector) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Probability of the pump class.
    pub fn predict_score(&self, x: &SparseVector) -> Result<f64, DetectorError> {
        if let Some(&last) = x.indices.last() {
            if last as usize >= self.feature_count {
                return Err(DetectorError::FeatureOutOfRange { index: last as usize, feature_count: self.feature_count });
            }
        }
        Ok(sigmoid(self.margin(x)))
    }

    /// Like [`predict_score`](Self::predict_score) without the range check;
    /// indices beyond `feature_count` are simply never split on.
    #[inline]
    pub fn score_unchecked(&self, x: &SparseVector) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn classify(&self, x: &SparseVector) -> Result<bool, DetectorError> {
        Ok(self.predict_score(x)? >= self.threshold)
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{GBDT_HEADER}");
        let _ = writeln!(s, "num_trees={}", c.num_trees);
        let _ = writeln!(s, "max_leaves={}", c.max_leaves);
        let _ = writeln!(s, "learning_rate={:.16e}", c.learning_rate);
        let _ = writeln!(s, "min_samples_leaf={}", c.min_samples_leaf);
        let _ = writeln!(s, "feature_subsample={:.16e}", c.feature_subsample);
        let _ = writeln!(s, "seed={}", c.seed);
        let _ = writeln!(s, "class_weighting={}", c.class_weighting as u8);
        let _ = writeln!(s, "max_bins={}", c.max_bins);
        let _ = writeln!(s, "l2_regularization={:.16e}", c.l2_regularization);
        let _ = writeln!(s, "feature_count={}", self.feature_count);
        let _ = writeln!(s, "base_score={:.16e}", self.base_score);
        let _ = writeln!(s, "threshold={:.16e}", self.threshold);
        let _ = writeln!(s, "threshold_tuned={}", self.threshold_tuned as u8);
        let _ = writeln!(s, "trees={}", self.trees.len());
        for (i, t) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {i} nodes={}", t.nodes.len());
            // Preorder layout makes child indices implicit.
            for n in &t.nodes {
                match *n {
                    Node::Split { feature, threshold, default_left, .. } => {
                        let d = if default_left { 'L' } else { 'R' };
                        let _ = writeln!(s, "S {feature} {threshold:.16e} {d}");
                    }
                    Node::Leaf { value } => {
                        let _ = writeln!(s, "L {value:.16e}");
                    }
                }
            }
        }
        s
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, DetectorError> {
        let bad = |m: String| DetectorError::Format(m);
        let mut lines = reader.lines();
        let mut next = move || -> Result<String, DetectorError> {
            lines.next().transpose()?.ok_or_else(|| bad("unexpected end of file".into()))
        };
        if next()?.trim_end() != GBDT_HEADER {
            return Err(bad(format!("missing {GBDT_HEADER} header")));
        }
        fn kv<T: std::str::FromStr>(line: &str, key: &str) -> Result<T, DetectorError> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| DetectorError::Format(format!("expected `{key}=`, got `{line}`")))
        }
        let config = TrainConfig {
            num_trees: kv(&next()?, "num_trees")?,
            max_leaves: kv(&next()?, "max_leaves")?,
            learning_rate: kv(&next()?, "learning_rate")?,
            min_samples_leaf: kv(&next()?, "min_samples_leaf")?,
            feature_subsample: kv(&next()?, "feature_subsample")?,
            seed: kv(&next()?, "seed")?,
            class_weighting: kv::<u8>(&next()?, "class_weighting")? == 1,
            max_bins: kv(&next()?, "max_bins")?,
            l2_regularization: kv(&next()?, "l2_regularization")?,
        };
        let feature_count: usize = kv(&next()?, "feature_count")?;
        let base_score: f64 = kv(&next()?, "base_score")?;
        let threshold: f64 = kv(&next()?, "threshold")?;
        let threshold_tuned = kv::<u8>(&next()?, "threshold_tuned")? == 1;
        let n_trees: usize = kv(&next()?, "trees")?;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let line = next()?;
            let n_nodes: usize = line
                .strip_prefix(&format!("tree {t} "))
                .map(|r| kv(r, "nodes"))
                .ok_or_else(|| bad(format!("expected tree {t} header, got `{line}`")))??;
            let mut raw = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                raw.push(next()?);
            }
            trees.push(parse_preorder(&raw, feature_count)?);
        }
        Ok(GbdtModel { base_score, trees, feature_count, config, threshold, threshold_tuned })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectorError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(io::BufReader::new(f))
    }
}

fn parse_preorder(lines: &[String], feature_count: usize) -> Result<Tree, DetectorError> {
    let bad = |m: String| DetectorError::Format(m);
    let mut nodes = Vec::with_capacity(lines.len());
    for line in lines {
        let parts: Vec<&str> = line.split(' ').collect();
        let node = match parts.as_slice() {
            ["L", v] => Node::Leaf { value: v.parse().map_err(|_| bad(format!("bad leaf `{line}`")))? },
            ["S", f, t, d] => {
                let feature: u32 = f.parse().map_err(|_| bad(format!("bad split `{line}`")))?;
                if feature as usize >= feature_count {
                    return Err(bad(format!("split feature {feature} out of range")));
                }
                Node::Split {
                    feature,
                    threshold: t.parse().map_err(|_| bad(format!("bad split `{line}`")))?,
                    default_left: match *d {
                        "L" => true,
                        "R" => false,
                        _ => return Err(bad(format!("bad default direction `{line}`"))),
                    },
                    left: 0,
                    right: 0,
                }
            }
            _ => return Err(bad(format!("bad node line `{line}`"))),
        };
        nodes.push(node);
    }
    // Rebuild child links from the preorder sequence.
    fn link(nodes: &mut [Node], i: usize) -> Result<usize, DetectorError> {
        if i >= nodes.len() {
            return Err(DetectorError::Format("truncated tree".into()));
        }
        match nodes[i] {
            Node::Leaf { .. } => Ok(i + 1),
            Node::Split { feature, threshold, default_left, .. } => {
                let l = i + 1;
                let r = link(nodes, l)?;
                let end = link(nodes, r)?;
                nodes[i] = Node::Split { feature, threshold, default_left, left: l as u32, right: r as u32 };
                Ok(end)
            }
        }
    }
    let end = link(&mut nodes, 0)?;
    if end != nodes.len() {
        return Err(bad("trailing nodes after tree".into()));
    }
    Ok(Tree { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> GbdtModel {
        let nodes = vec![
            Node::Split { feature: 3, threshold: 0.2, default_left: true, left: 1, right: 2 },
            Node::Leaf { value: -2.0 },
            Node::Leaf { value: 2.0 },
        ];
        GbdtModel::new(0.0, vec![Tree { nodes }], 10, TrainConfig::default())
    }

    #[test]
    fn zero_tree_model_scores_half() {
        let m = GbdtModel::constant(0.0, 4);
        assert_eq!(m.predict_score(&SparseVector::from_pairs(4, &[(1, 0.3)])).unwrap(), 0.5);
    }

    #[test]
    fn single_split_hand_evaluated() {
        let m = stump();
        let x = SparseVector::from_pairs(10, &[(3, 0.5)]);
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        assert_eq!(m.predict_score(&x).unwrap(), expect);
        assert!((expect - 0.8808).abs() < 1e-4);
        let x = SparseVector::from_pairs(10, &[(3, 0.1)]);
        assert!((m.predict_score(&x).unwrap() - (1.0 - expect)).abs() < 1e-15);
    }

    #[test]
    fn empty_vector_follows_default_path() {
        let m = stump();
        let z = SparseVector::from_pairs(10, &[]);
        let a = m.predict_score(&z).unwrap();
        assert_eq!(a, sigmoid(-2.0));
        assert_eq!(a, m.predict_score(&z).unwrap());
    }

    #[test]
    fn out_of_range_feature_is_error() {
        let m = stump();
        let x = SparseVector::from_pairs(20, &[(15, 1.0)]);
        assert!(matches!(m.predict_score(&x), Err(DetectorError::FeatureOutOfRange { index: 15, .. })));
    }

    #[test]
    fn text_round_trip() {
        let mut m = stump();
        m.set_threshold(0.37).unwrap();
        let text = m.to_text();
        let back = GbdtModel::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn threshold_is_set_once() {
        let mut m = stump();
        assert_eq!(m.threshold(), 0.5);
        assert!(m.set_threshold(1.5).is_err());
        m.set_threshold(0.3).unwrap();
        assert!(matches!(m.set_threshold(0.4), Err(DetectorError::ThresholdAlreadySet)));
    }

    #[test]
    fn sigmoid_is_open_interval() {
        assert!(sigmoid(800.0) < 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn corrupt_tree_rejected() {
        let text = stump().to_text().replace("L -2", "X -2");
        assert!(GbdtModel::from_reader(text.as_bytes()).is_err());
    }
}
