use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub subsample: usize,
    /// Expected fraction of outliers.
    pub contamination: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            subsample: 256,
            contamination: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

/// Average path length of an unsuccessful search in a binary search tree
/// of `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + 0.577_215_664_901_532_9) - 2.0 * (n - 1.0) / n
        }
    }
}

impl Tree {
    fn build(values: &mut [f64], height_limit: usize, rng: &mut ChaCha8Rng) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow(values, 0, height_limit, rng);
        tree
    }

    fn grow(&mut self, values: &mut [f64], depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if depth >= limit || values.len() <= 1 || max <= min {
            self.nodes.push(Node::Leaf { size: values.len() });
            return id;
        }
        let value = rng.random_range(min..max);
        self.nodes.push(Node::Leaf { size: 0 });
        let mut split = 0;
        for i in 0..values.len() {
            if values[i] < value {
                values.swap(i, split);
                split += 1;
            }
        }
        // min < value guarantees a non-empty left side.
        let (lo, hi) = values.split_at_mut(split);
        let left = self.grow(lo, depth + 1, limit, rng);
        let right = self.grow(hi, depth + 1, limit, rng);
        self.nodes[id] = Node::Split { value, left, right };
        id
    }

    fn path_length(&self, x: f64) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split { value, left, right } => {
                    node = if x < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// Isolation forest over scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    subsample: usize,
    pub contamination: f64,
}

impl IsolationForest {
    pub fn fit(values: &[f64], params: &ForestParams, seed: u64) -> Self {
        let psi = params.subsample.min(values.len()).max(1);
        let limit = (psi as f64).log2().ceil().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = if values.is_empty() {
            Vec::new()
        } else {
            (0..params.trees.max(1))
                .map(|_| {
                    let mut sub: Vec<f64> = if psi == values.len() {
                        values.to_vec()
                    } else {
                        sample(&mut rng, values.len(), psi).iter().map(|i| values[i]).collect()
                    };
                    Tree::build(&mut sub, limit, &mut rng)
                })
                .collect()
        };
        IsolationForest {
            trees,
            subsample: psi,
            contamination: params.contamination,
        }
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn subsample(&self) -> usize {
        self.subsample
    }

    pub fn expected_path_length(&self, x: f64) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score in (0, 1]; larger is more anomalous.
    pub fn score(&self, x: f64) -> f64 {
        let c = average_path_length(self.subsample);
        if c == 0.0 {
            return 0.5;
        }
        2f64.powf(-self.expected_path_length(x) / c)
    }

    /// Flags the `floor(contamination * n)` highest-scoring values. Values
    /// tied with the first unflagged score stay inliers, so a constant
    /// series has no outliers.
    pub fn outliers(&self, values: &[f64]) -> Vec<bool> {
        let scores: Vec<f64> = values.iter().map(|&v| self.score(v)).collect();
        flag_top(&scores, self.contamination)
    }
}

pub(crate) fn flag_top(scores: &[f64], contamination: f64) -> Vec<bool> {
    let k = (contamination.clamp(0.0, 1.0) * scores.len() as f64).floor() as usize;
    if k == 0 {
        return vec![false; scores.len()];
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    match sorted.get(k) {
        Some(&cut) => scores.iter().map(|&s| s > cut).collect(),
        None => vec![true; scores.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn planted_spikes_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(1.0, 0.05).unwrap();
        let mut values: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
        let spikes: Vec<usize> = (0..10).map(|i| 37 + 97 * i).collect();
        for (k, &i) in spikes.iter().enumerate() {
            values[i] = 8.0 + k as f64;
        }
        let forest = IsolationForest::fit(
            &values,
            &ForestParams {
                contamination: 0.02,
                ..ForestParams::default()
            },
            3,
        );
        let flags = forest.outliers(&values);
        assert!(spikes.iter().all(|&i| flags[i]));
        assert!(flags.iter().filter(|&&f| f).count() <= 20);
    }

    #[test]
    fn constant_series_has_no_outliers() {
        let values = vec![2.5; 300];
        let forest = IsolationForest::fit(&values, &ForestParams::default(), 1);
        assert!(forest.outliers(&values).iter().all(|&f| !f));
    }

    #[test]
    fn single_value_is_inlier() {
        let forest = IsolationForest::fit(&[4.0], &ForestParams::default(), 1);
        assert_eq!(forest.outliers(&[4.0]), vec![false]);
    }

    #[test]
    fn isolated_points_have_shorter_paths() {
        let mut values: Vec<f64> = (0..500).map(|i| (i % 50) as f64 * 0.01).collect();
        values.push(30.0);
        let forest = IsolationForest::fit(&values, &ForestParams::default(), 5);
        let inner = forest.expected_path_length(0.25);
        let near = forest.expected_path_length(2.0);
        let far = forest.expected_path_length(30.0);
        assert!(far <= near + 1e-12 && near < inner);
        assert!(forest.score(30.0) > forest.score(0.25));
    }

    #[test]
    fn average_path_length_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let c256 = average_path_length(256);
        assert!((c256 - 10.244_770_920_119_917).abs() < 1e-9, "{c256}");
    }
}
