//! Isolation Forest with random axis-aligned splits.

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use super::robust::quantile_sorted;
use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsoNode {
    Split { dim: u32, value: f64, left: u32, right: u32 },
    Leaf { depth: u32, size: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<IsoNode>,
}

impl IsolationTree {
    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                IsoNode::Split { dim, value, left, right } => {
                    node = if x[dim as usize] < value { left as usize } else { right as usize };
                }
                IsoNode::Leaf { depth, size } => {
                    return f64::from(depth) + average_path_length(size as usize)
                }
            }
        }
    }

    pub fn nodes(&self) -> &[IsoNode] {
        &self.nodes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    pub subsample_size: usize,
    pub n_trees: usize,
    pub dim: usize,
    pub score_threshold: f64,
    pub contamination: f64,
    /// Scores of the training vectors, kept so the threshold can be moved
    /// to another contamination level without refitting.
    pub training_scores: Vec<f64>,
}

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

fn check_contamination(c: f64) -> Result<()> {
    if c > 0.0 && c < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(format!("contamination {c} outside (0, 0.5)")))
    }
}

fn build_tree(data: &[Vec<f64>], sample: Vec<usize>, max_depth: u32, rng: &mut SplitMix64) -> IsolationTree {
    let dim = data[0].len();
    let mut nodes = Vec::new();
    // (node slot, indices, depth)
    let mut stack = vec![(0usize, sample, 0u32)];
    nodes.push(IsoNode::Leaf { depth: 0, size: 0 });
    let mut splittable = Vec::with_capacity(dim);
    while let Some((slot, idx, depth)) = stack.pop() {
        let leaf = IsoNode::Leaf { depth, size: idx.len() as u32 };
        if depth >= max_depth || idx.len() <= 1 {
            nodes[slot] = leaf;
            continue;
        }
        splittable.clear();
        for d in 0..dim {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(data[i][d]), hi.max(data[i][d]))
            });
            if hi > lo {
                splittable.push((d, lo, hi));
            }
        }
        if splittable.is_empty() {
            nodes[slot] = leaf;
            continue;
        }
        let (d, lo, hi) = splittable[rng.below(splittable.len() as u64) as usize];
        let mut value = rng.uniform(lo, hi);
        if value <= lo {
            value = 0.5 * (lo + hi);
        }
        let (left, right): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| data[i][d] < value);
        let l = nodes.len();
        nodes.push(IsoNode::Leaf { depth: depth + 1, size: 0 });
        nodes.push(IsoNode::Leaf { depth: depth + 1, size: 0 });
        nodes[slot] = IsoNode::Split { dim: d as u32, value, left: l as u32, right: l as u32 + 1 };
        stack.push((l, left, depth + 1));
        stack.push((l + 1, right, depth + 1));
    }
    IsolationTree { nodes }
}

/// Fits a forest; the subsample size is clamped to the number of vectors.
/// The score threshold is the `(1 - contamination)` type-7 quantile of the
/// training scores.
pub fn isolation_forest_fit(
    vectors: &[Vec<f64>],
    n_trees: usize,
    subsample: usize,
    contamination: f64,
    seed: u64,
) -> Result<IsolationForestModel> {
    if vectors.len() < 2 {
        return Err(Error::invalid("isolation forest needs at least two vectors"));
    }
    if n_trees == 0 {
        return Err(Error::invalid("isolation forest needs at least one tree"));
    }
    check_contamination(contamination)?;
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("isolation forest vectors must share a positive dimension"));
    }
    let psi = subsample.clamp(2, vectors.len());
    let max_depth = (psi as f64).log2().ceil() as u32;
    let mut rng = SplitMix64::new(seed);
    let trees = (0..n_trees)
        .map(|_| {
            let sample = rng.sample_indices(vectors.len(), psi);
            build_tree(vectors, sample, max_depth, &mut rng)
        })
        .collect();
    let mut model = IsolationForestModel {
        trees,
        subsample_size: psi,
        n_trees,
        dim,
        score_threshold: 0.0,
        contamination,
        training_scores: Vec::new(),
    };
    let scores: Vec<f64> = vectors.iter().map(|v| model.score_unchecked(v)).collect();
    model.training_scores = scores;
    model.score_threshold = model.threshold_for(contamination);
    Ok(model)
}

impl IsolationForestModel {
    fn score_unchecked(&self, x: &[f64]) -> f64 {
        let mean_path = self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64;
        let norm = average_path_length(self.subsample_size);
        2f64.powf(-mean_path / norm)
    }

    fn threshold_for(&self, contamination: f64) -> f64 {
        let mut s = self.training_scores.clone();
        s.sort_by(f64::total_cmp);
        quantile_sorted(&s, 1.0 - contamination)
    }

    /// Same forest, threshold moved to another contamination level.
    pub fn with_contamination(&self, contamination: f64) -> Result<Self> {
        check_contamination(contamination)?;
        let mut m = self.clone();
        m.contamination = contamination;
        m.score_threshold = m.threshold_for(contamination);
        Ok(m)
    }
}

/// Anomaly score in (0, 1); higher is more anomalous.
pub fn isolation_forest_score(model: &IsolationForestModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim {
        return Err(Error::invalid(format!(
            "isolation forest expects dimension {}, got {}",
            model.dim,
            x.len()
        )));
    }
    Ok(model.score_unchecked(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, d: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.next_f64()).collect()).collect()
    }

    #[test]
    fn identical_vectors_score_identically() {
        let data = vec![vec![1.0, 2.0]; 100];
        let m = isolation_forest_fit(&data, 20, 256, 0.1, 1).unwrap();
        assert_eq!(m.subsample_size, 100);
        let first = m.training_scores[0];
        assert!(m.training_scores.iter().all(|&s| s == first));
        assert_eq!(m.score_threshold, first);
    }

    #[test]
    fn scores_are_deterministic_and_in_range() {
        let mut rng = SplitMix64::new(4);
        let data = cube(200, 3, &mut rng);
        let a = isolation_forest_fit(&data, 50, 128, 0.1, 9).unwrap();
        let b = isolation_forest_fit(&data, 50, 128, 0.1, 9).unwrap();
        assert_eq!(a, b);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let s = isolation_forest_score(&a, &x).unwrap();
            assert!(s > 0.0 && s < 1.0);
            assert_eq!(s, isolation_forest_score(&a, &x).unwrap());
        }
    }

    #[test]
    fn centroid_scores_below_outlier() {
        let mut rng = SplitMix64::new(8);
        let data = cube(300, 2, &mut rng);
        let m = isolation_forest_fit(&data, 100, 256, 0.1, 2).unwrap();
        let centre = isolation_forest_score(&m, &[0.5, 0.5]).unwrap();
        let far = isolation_forest_score(&m, &[10.0, 10.0]).unwrap();
        assert!(centre < far);
    }

    #[test]
    fn bad_inputs() {
        assert!(isolation_forest_fit(&[vec![1.0]], 10, 8, 0.1, 0).is_err());
        assert!(isolation_forest_fit(&[vec![1.0], vec![1.0, 2.0]], 10, 8, 0.1, 0).is_err());
        assert!(isolation_forest_fit(&[vec![1.0], vec![2.0]], 10, 8, 0.5, 0).is_err());
        let m = isolation_forest_fit(&[vec![1.0], vec![2.0]], 10, 8, 0.1, 0).unwrap();
        assert!(isolation_forest_score(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn path_length_normaliser() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let c256 = average_path_length(256);
        assert!((c256 - 10.244_7).abs() < 1e-3);
    }
}
