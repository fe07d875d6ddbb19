//! Planted-partition graphs with class-correlated bag-of-words features, for
//! smoke tests and demos where no real dataset is at hand.

use super::{GraphBundle, GraphError, Splits};
use crate::graph::bundle::EdgeStats;
use crate::tensor::{CsrMatrix, DenseMatrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPartition {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub features: usize,
    /// Edge probability inside a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    /// Active feature columns per node.
    pub words_per_node: usize,
    /// Probability that an active column comes from the node's class block.
    pub word_affinity: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            classes: 3,
            nodes_per_class: 40,
            features: 30,
            p_in: 0.15,
            p_out: 0.01,
            words_per_node: 5,
            word_affinity: 0.6,
            train_per_class: 5,
            val: 30,
            test: 60,
        }
    }
}

/// Node `i` has class `i % classes`, so every prefix of the node order is
/// close to class-balanced: train, val and test are consecutive ranges.
pub fn planted_partition(spec: &PlantedPartition, seed: u64) -> Result<GraphBundle, GraphError> {
    let k = spec.classes;
    let n = k * spec.nodes_per_class;
    let train = spec.train_per_class * k;
    if k == 0 || spec.features < k || train + spec.val + spec.test > n {
        return Err(GraphError::File {
            file: "<synthetic>".into(),
            message: "planted partition: sizes do not fit".into(),
        });
    }
    let rng = Rng::new(seed);
    let mut edge_rng = rng.derive("edges");
    let mut word_rng = rng.derive("words");
    let class = |i: usize| i % k;

    let mut triplets = Vec::new();
    let mut undirected = 0;
    for i in 0..n {
        for j in i + 1..n {
            let p = if class(i) == class(j) { spec.p_in } else { spec.p_out };
            if edge_rng.uniform() < p {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
                undirected += 1;
            }
        }
    }
    let adjacency = CsrMatrix::from_triplets(n, n, triplets).expect("indices in range");

    let block = spec.features / k;
    let mut features = DenseMatrix::zeros((n, spec.features));
    for i in 0..n {
        for _ in 0..spec.words_per_node {
            let col = if word_rng.uniform() < spec.word_affinity {
                class(i) * block + (word_rng.uniform() * block as f64) as usize
            } else {
                (word_rng.uniform() * spec.features as f64) as usize
            };
            features[[i, col.min(spec.features - 1)]] = 1.0;
        }
    }

    let bundle = GraphBundle {
        name: format!("planted-{k}x{}", spec.nodes_per_class),
        num_classes: k,
        adjacency,
        features,
        labels: (0..n).map(|i| Some(class(i))).collect(),
        splits: Splits {
            train: (0..train).collect(),
            val: (train..train + spec.val).collect(),
            test: (train + spec.val..train + spec.val + spec.test).collect(),
        },
        edge_stats: EdgeStats {
            edge_lines: undirected,
            unique_undirected_edges: undirected,
            raw_edge_lines: None,
        },
    };
    bundle.validate()?;
    Ok(bundle)
}
