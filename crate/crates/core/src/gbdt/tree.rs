//! Regression trees grown leaf-wise over binned data.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::bins::{BinMapper, BinnedMatrix};
use super::split::{build_histograms, find_best_split, BinStats, FeatureHistogram, SplitCandidate};
use super::GbdtConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `bin(feature) <= bin` go to `left`.
    Split {
        feature: usize,
        bin: u16,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A proper binary tree stored in pre-order; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Rebuilds a tree from a pre-order sequence of splits `(feature, bin)`
    /// and leaves, as written by the model serializer.
    pub fn from_preorder(items: &[PreorderItem]) -> Result<Tree> {
        fn walk(items: &[PreorderItem], pos: &mut usize, nodes: &mut Vec<Node>) -> Result<usize> {
            let item = *items
                .get(*pos)
                .ok_or_else(|| Error::Structural("truncated tree".into()))?;
            *pos += 1;
            let id = nodes.len();
            match item {
                PreorderItem::Leaf(value) => nodes.push(Node::Leaf { value }),
                PreorderItem::Split(feature, bin) => {
                    nodes.push(Node::Leaf { value: 0.0 });
                    let left = walk(items, pos, nodes)?;
                    let right = walk(items, pos, nodes)?;
                    nodes[id] = Node::Split {
                        feature,
                        bin,
                        left,
                        right,
                    };
                }
            }
            Ok(id)
        }
        let mut nodes = Vec::with_capacity(items.len());
        let mut pos = 0;
        walk(items, &mut pos, &mut nodes)?;
        if pos != items.len() {
            return Err(Error::Structural("trailing nodes after tree".into()));
        }
        Ok(Tree { nodes })
    }

    pub fn preorder(&self) -> Vec<PreorderItem> {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Split { feature, bin, .. } => PreorderItem::Split(feature, bin),
                Node::Leaf { value } => PreorderItem::Leaf(value),
            })
            .collect()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    #[inline]
    pub fn predict_binned(&self, data: &BinnedMatrix, row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                } => i = if data.get(row, feature) <= bin { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, mapper: &BinMapper, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                } => {
                    i = if mapper.bin(feature, row[feature]) <= bin {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreorderItem {
    Split(usize, u16),
    Leaf(f64),
}

struct OpenLeaf {
    start: usize,
    end: usize,
    depth: usize,
    stats: BinStats,
    histograms: Vec<FeatureHistogram>,
    best: Option<SplitCandidate>,
    node: usize,
}

enum Draft {
    Leaf(BinStats),
    Split {
        feature: usize,
        bin: u16,
        left: usize,
        right: usize,
    },
}

/// Picks `round(n * fraction)` features (at least one), sorted.
pub fn sample_features(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n.max(1));
    if k >= n {
        return (0..n).collect();
    }
    let mut picked = sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

fn leaf_value(stats: &BinStats, config: &GbdtConfig) -> f64 {
    let denom = stats.hess + config.lambda_l2;
    if denom > 0.0 {
        -stats.grad / denom * config.learning_rate
    } else {
        0.0
    }
}

/// Grows one tree best-gain-first over `rows`, stopping at `num_leaves`
/// leaves, at `max_depth`, or when no split has positive gain. Leaf values
/// are shrunken Newton steps `-G/(H+lambda) * learning_rate`.
pub fn grow_tree(
    data: &BinnedMatrix,
    grads: &[f64],
    hess: &[f64],
    rows: &[u32],
    config: &GbdtConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Tree> {
    if grads.len() != data.rows() || hess.len() != data.rows() {
        return Err(Error::Input(format!(
            "{} gradients / {} hessians for {} rows",
            grads.len(),
            hess.len(),
            data.rows()
        )));
    }
    let features = sample_features(data.cols(), config.feature_fraction, rng);
    let mut index: Vec<u32> = rows.to_vec();
    let mut scratch: Vec<u32> = Vec::with_capacity(index.len());

    let splittable = |depth: usize, count: u32| {
        depth < config.max_depth && count as usize >= 2 * config.min_samples_leaf
    };
    let evaluate = |leaf: &mut OpenLeaf| -> Result<()> {
        leaf.best = if splittable(leaf.depth, leaf.stats.count) {
            find_best_split(&leaf.histograms, &leaf.stats, config)?
        } else {
            None
        };
        Ok(())
    };

    let root_stats = BinStats::over_rows(&index, grads, hess);
    let mut drafts = vec![Draft::Leaf(root_stats)];
    let mut root = OpenLeaf {
        start: 0,
        end: index.len(),
        depth: 0,
        stats: root_stats,
        histograms: if splittable(0, root_stats.count) {
            build_histograms(data, grads, hess, &index, &features)
        } else {
            Vec::new()
        },
        best: None,
        node: 0,
    };
    evaluate(&mut root)?;
    let mut open = vec![root];
    let mut n_leaves = 1;

    while n_leaves < config.num_leaves {
        // largest gain first; earlier leaves win ties
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(c) = leaf.best {
                if pick.is_none_or(|(_, g)| c.gain > g) {
                    pick = Some((i, c.gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let parent = open.remove(i);
        let split = parent.best.expect("picked leaf has a split");

        // stable partition of the parent's rows
        let column = data.column(split.feature);
        let slice = &mut index[parent.start..parent.end];
        scratch.clear();
        let mut n_left = 0;
        for k in 0..slice.len() {
            let r = slice[k];
            if column[r as usize] <= split.bin {
                slice[n_left] = r;
                n_left += 1;
            } else {
                scratch.push(r);
            }
        }
        slice[n_left..].copy_from_slice(&scratch);
        let mid = parent.start + n_left;

        let depth = parent.depth + 1;
        let left_stats = BinStats::over_rows(&index[parent.start..mid], grads, hess);
        let right_stats = BinStats::over_rows(&index[mid..parent.end], grads, hess);
        let left_node = drafts.len();
        drafts.push(Draft::Leaf(left_stats));
        drafts.push(Draft::Leaf(right_stats));
        drafts[parent.node] = Draft::Split {
            feature: split.feature,
            bin: split.bin,
            left: left_node,
            right: left_node + 1,
        };
        n_leaves += 1;

        let need_left = splittable(depth, left_stats.count);
        let need_right = splittable(depth, right_stats.count);
        let (left_hist, right_hist) = if need_left || need_right {
            // histogram the smaller child, derive the larger by subtraction
            let left_smaller = n_left <= parent.end - mid;
            let (small_rows, _) = if left_smaller {
                (&index[parent.start..mid], ())
            } else {
                (&index[mid..parent.end], ())
            };
            let small = build_histograms(data, grads, hess, small_rows, &features);
            let large: Vec<FeatureHistogram> = parent
                .histograms
                .iter()
                .zip(&small)
                .map(|(p, s)| p.subtract(s))
                .collect();
            if left_smaller {
                (small, large)
            } else {
                (large, small)
            }
        } else {
            (Vec::new(), Vec::new())
        };

        let mut left = OpenLeaf {
            start: parent.start,
            end: mid,
            depth,
            stats: left_stats,
            histograms: if need_left { left_hist } else { Vec::new() },
            best: None,
            node: left_node,
        };
        let mut right = OpenLeaf {
            start: mid,
            end: parent.end,
            depth,
            stats: right_stats,
            histograms: if need_right { right_hist } else { Vec::new() },
            best: None,
            node: left_node + 1,
        };
        evaluate(&mut left)?;
        evaluate(&mut right)?;
        open.push(left);
        open.push(right);
    }

    // emit in pre-order
    fn emit(drafts: &[Draft], i: usize, config: &GbdtConfig, out: &mut Vec<Node>) -> usize {
        let id = out.len();
        match drafts[i] {
            Draft::Leaf(ref stats) => out.push(Node::Leaf {
                value: leaf_value(stats, config),
            }),
            Draft::Split {
                feature,
                bin,
                left,
                right,
            } => {
                out.push(Node::Leaf { value: 0.0 });
                let l = emit(drafts, left, config, out);
                let r = emit(drafts, right, config, out);
                out[id] = Node::Split {
                    feature,
                    bin,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }
    let mut nodes = Vec::with_capacity(drafts.len());
    emit(&drafts, 0, config, &mut nodes);
    Ok(Tree { nodes })
}
