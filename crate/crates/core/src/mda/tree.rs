//! Decision-tree classifier for encrypted/proprietary sessions, trained on
//! session features with greedy Gini splits.
//!
//! Training is deterministic: among equal-impurity splits the lowest feature
//! index wins, then the smallest threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{SessionFeatures, FEATURE_COUNT};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: usize,
        confidence: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub nodes: Vec<Node>,
    pub class_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            max_depth: 6,
            min_leaf: 5,
        }
    }
}

pub const MIN_SAMPLES_PER_CLASS: usize = 20;

impl DecisionTreeModel {
    /// Root-to-leaf traversal; feature value ≤ threshold goes left.
    pub fn classify(&self, f: &SessionFeatures) -> (&str, f64) {
        let values = f.as_array();
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { label, confidence } => {
                    return (&self.class_labels[*label], *confidence)
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if values[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth_of(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + depth_of(nodes, *left).max(depth_of(nodes, *right))
                }
            }
        }
        depth_of(&self.nodes, 0)
    }
}

/// Trains a binary tree on (features, label) pairs.
///
/// Requires at least two classes with `MIN_SAMPLES_PER_CLASS` samples each.
/// A corpus whose feature vectors are all identical yields a single-leaf
/// majority tree.
pub fn train(
    corpus: &[(SessionFeatures, String)],
    params: TrainParams,
) -> Result<DecisionTreeModel, TrainError> {
    let mut class_labels: Vec<String> = corpus.iter().map(|(_, l)| l.clone()).collect();
    class_labels.sort();
    class_labels.dedup();
    if class_labels.len() < 2 {
        return Err(TrainError::InsufficientData(format!(
            "need ≥2 classes, got {}",
            class_labels.len()
        )));
    }
    for label in &class_labels {
        let n = corpus.iter().filter(|(_, l)| l == label).count();
        if n < MIN_SAMPLES_PER_CLASS {
            return Err(TrainError::InsufficientData(format!(
                "class {label:?} has {n} samples, need ≥{MIN_SAMPLES_PER_CLASS}"
            )));
        }
    }
    let samples: Vec<([f64; FEATURE_COUNT], usize)> = corpus
        .iter()
        .map(|(f, l)| {
            (
                f.as_array(),
                class_labels.iter().position(|c| c == l).unwrap(),
            )
        })
        .collect();
    let mut nodes = Vec::new();
    let idxs: Vec<usize> = (0..samples.len()).collect();
    grow(&samples, &idxs, class_labels.len(), 0, params, &mut nodes);
    Ok(DecisionTreeModel {
        nodes,
        class_labels,
    })
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let sum_sq: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p
        })
        .sum();
    1.0 - sum_sq
}

fn class_counts(
    samples: &[([f64; FEATURE_COUNT], usize)],
    idxs: &[usize],
    n_classes: usize,
) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &i in idxs {
        counts[samples[i].1] += 1;
    }
    counts
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn find_best_split(
    samples: &[([f64; FEATURE_COUNT], usize)],
    idxs: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = idxs.len();
    let mut best: Option<BestSplit> = None;
    for feature in 0..FEATURE_COUNT {
        let mut order: Vec<usize> = idxs.to_vec();
        order.sort_by(|&a, &b| samples[a].0[feature].total_cmp(&samples[b].0[feature]));
        let mut left_counts = vec![0usize; n_classes];
        let mut right_counts = class_counts(samples, idxs, n_classes);
        for k in 0..n - 1 {
            let cls = samples[order[k]].1;
            left_counts[cls] += 1;
            right_counts[cls] -= 1;
            let v = samples[order[k]].0[feature];
            let next = samples[order[k + 1]].0[feature];
            if v == next {
                continue;
            }
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let threshold = v + (next - v) / 2.0;
            let impurity = (n_left as f64 * gini(&left_counts, n_left)
                + n_right as f64 * gini(&right_counts, n_right))
                / n as f64;
            let better = match &best {
                None => true,
                // Strictly-better impurity wins; ties keep the earlier
                // (lower feature index, smaller threshold) candidate.
                Some(b) => impurity < b.impurity - 1e-12,
            };
            if better {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

fn grow(
    samples: &[([f64; FEATURE_COUNT], usize)],
    idxs: &[usize],
    n_classes: usize,
    depth: usize,
    params: TrainParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let counts = class_counts(samples, idxs, n_classes);
    let node_impurity = gini(&counts, idxs.len());
    let make_leaf = |nodes: &mut Vec<Node>| -> usize {
        let (label, &count) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        nodes.push(Node::Leaf {
            label,
            confidence: count as f64 / idxs.len() as f64,
        });
        nodes.len() - 1
    };
    if depth >= params.max_depth || node_impurity == 0.0 || idxs.len() < 2 * params.min_leaf {
        return make_leaf(nodes);
    }
    let split = match find_best_split(samples, idxs, n_classes, params.min_leaf) {
        Some(s) if s.impurity < node_impurity - 1e-12 => s,
        _ => return make_leaf(nodes),
    };
    let (left_idxs, right_idxs): (Vec<usize>, Vec<usize>) = idxs
        .iter()
        .partition(|&&i| samples[i].0[split.feature] <= split.threshold);
    let me = nodes.len();
    nodes.push(Node::Leaf {
        label: 0,
        confidence: 0.0,
    }); // placeholder, replaced below
    let left = grow(samples, &left_idxs, n_classes, depth + 1, params, nodes);
    let right = grow(samples, &right_idxs, n_classes, depth + 1, params, nodes);
    nodes[me] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    me
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(mean_up: f64) -> SessionFeatures {
        SessionFeatures {
            duration: 1.0,
            total_pkts: 10.0,
            mean_pkt_len_up: mean_up,
            mean_pkt_len_down: 100.0,
            pkt_len_mode_up: mean_up,
            pkt_len_stddev_up: 0.0,
            mean_interarrival: 0.1,
            up_down_byte_ratio: 1.0,
        }
    }

    fn two_class_corpus() -> Vec<(SessionFeatures, String)> {
        let mut corpus = Vec::new();
        for _ in 0..30 {
            corpus.push((feat(96.0), "smoke_alarm".to_string()));
        }
        for i in 0..30 {
            corpus.push((feat(350.0 + (i % 10) as f64 * 10.0), "smart_plug".to_string()));
        }
        corpus
    }

    /// Independent oracle: enumerate every (feature, midpoint) split and
    /// return the minimum achievable weighted Gini impurity.
    fn exhaustive_best_impurity(corpus: &[(SessionFeatures, String)]) -> (f64, Vec<(usize, f64)>) {
        let labels: Vec<&str> = corpus.iter().map(|(_, l)| l.as_str()).collect();
        let classes: Vec<&str> = {
            let mut c = labels.clone();
            c.sort();
            c.dedup();
            c
        };
        let gini_of = |subset: &[usize]| -> f64 {
            if subset.is_empty() {
                return 0.0;
            }
            let mut acc = 0.0;
            for class in &classes {
                let c = subset.iter().filter(|&&i| labels[i] == *class).count();
                let p = c as f64 / subset.len() as f64;
                acc += p * p;
            }
            1.0 - acc
        };
        let n = corpus.len();
        let mut best = f64::INFINITY;
        let mut argbest = Vec::new();
        for f in 0..FEATURE_COUNT {
            let mut vals: Vec<f64> = corpus.iter().map(|(s, _)| s.as_array()[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = w[0] + (w[1] - w[0]) / 2.0;
                let left: Vec<usize> = (0..n)
                    .filter(|&i| corpus[i].0.as_array()[f] <= thr)
                    .collect();
                let right: Vec<usize> = (0..n)
                    .filter(|&i| corpus[i].0.as_array()[f] > thr)
                    .collect();
                let imp =
                    (left.len() as f64 * gini_of(&left) + right.len() as f64 * gini_of(&right))
                        / n as f64;
                if imp < best - 1e-12 {
                    best = imp;
                    argbest = vec![(f, thr)];
                } else if (imp - best).abs() <= 1e-12 {
                    argbest.push((f, thr));
                }
            }
        }
        (best, argbest)
    }

    #[test]
    fn separable_classes_yield_depth_one_tree_in_gap() {
        let corpus = two_class_corpus();
        let model = train(&corpus, TrainParams::default()).unwrap();
        assert_eq!(model.depth(), 1);
        let (feature, threshold) = match &model.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => (*feature, *threshold),
            other => panic!("expected split root, got {other:?}"),
        };
        // mean_pkt_len_up is feature 2; the split must land in the gap
        // between the class supports.
        assert_eq!(feature, 2);
        assert!(threshold > 96.0 && threshold < 350.0);
        let (best, candidates) = exhaustive_best_impurity(&corpus);
        assert!((best - 0.0).abs() < 1e-12);
        assert!(candidates
            .iter()
            .any(|&(f, t)| f == feature && (t - threshold).abs() < 1e-9));
    }

    #[test]
    fn single_class_is_insufficient() {
        let corpus: Vec<_> = (0..50).map(|_| (feat(96.0), "only".to_string())).collect();
        assert!(matches!(
            train(&corpus, TrainParams::default()),
            Err(TrainError::InsufficientData(_))
        ));
    }

    #[test]
    fn undersampled_class_is_insufficient() {
        let mut corpus: Vec<_> = (0..30).map(|_| (feat(96.0), "a".to_string())).collect();
        corpus.extend((0..5).map(|_| (feat(300.0), "b".to_string())));
        assert!(matches!(
            train(&corpus, TrainParams::default()),
            Err(TrainError::InsufficientData(_))
        ));
    }

    #[test]
    fn degenerate_features_give_single_leaf() {
        let mut corpus: Vec<_> = (0..25).map(|_| (feat(96.0), "a".to_string())).collect();
        corpus.extend((0..20).map(|_| (feat(96.0), "b".to_string())));
        let model = train(&corpus, TrainParams::default()).unwrap();
        assert_eq!(model.nodes.len(), 1);
        match &model.nodes[0] {
            Node::Leaf { label, confidence } => {
                assert_eq!(model.class_labels[*label], "a");
                assert!((confidence - 25.0 / 45.0).abs() < 1e-12);
            }
            other => panic!("expected leaf, got {other:?}"),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = two_class_corpus();
        let m1 = train(&corpus, TrainParams::default()).unwrap();
        let m2 = train(&corpus, TrainParams::default()).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn threshold_equality_goes_left() {
        let model = DecisionTreeModel {
            nodes: vec![
                Node::Split {
                    feature: 2,
                    threshold: 96.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf {
                    label: 0,
                    confidence: 1.0,
                },
                Node::Leaf {
                    label: 1,
                    confidence: 1.0,
                },
            ],
            class_labels: vec!["left".into(), "right".into()],
        };
        assert_eq!(model.classify(&feat(96.0)).0, "left");
        assert_eq!(model.classify(&feat(96.0001)).0, "right");
    }

    #[test]
    fn classification_matches_recursive_oracle() {
        // Independent recursive-descent traversal oracle.
        fn oracle(model: &DecisionTreeModel, idx: usize, v: &[f64; FEATURE_COUNT]) -> (usize, f64) {
            match &model.nodes[idx] {
                Node::Leaf { label, confidence } => (*label, *confidence),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if v[*feature] <= *threshold {
                        oracle(model, *left, v)
                    } else {
                        oracle(model, *right, v)
                    }
                }
            }
        }
        let mut corpus = Vec::new();
        // Multi-class, noisy corpus so the tree has real depth.
        for i in 0..200u32 {
            let label = match i % 3 {
                0 => "a",
                1 => "b",
                _ => "c",
            };
            let base = match i % 3 {
                0 => 90.0,
                1 => 300.0,
                _ => 700.0,
            };
            let mut f = feat(base + (i % 13) as f64 * 3.0);
            f.duration = (i % 7) as f64;
            f.total_pkts = (i % 29) as f64 + 2.0;
            corpus.push((f, label.to_string()));
        }
        let model = train(&corpus, TrainParams::default()).unwrap();
        // 500 pseudo-random probe vectors.
        let mut state = 0x2545f491u64;
        for _ in 0..500 {
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 1000) as f64
            };
            let f = SessionFeatures {
                duration: next(),
                total_pkts: next(),
                mean_pkt_len_up: next(),
                mean_pkt_len_down: next(),
                pkt_len_mode_up: next(),
                pkt_len_stddev_up: next(),
                mean_interarrival: next(),
                up_down_byte_ratio: next(),
            };
            let (label, conf) = model.classify(&f);
            let (olabel, oconf) = oracle(&model, 0, &f.as_array());
            assert_eq!(label, model.class_labels[olabel]);
            assert_eq!(conf, oconf);
        }
    }
}
