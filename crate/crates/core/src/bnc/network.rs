use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::BncError;

/// A discrete node and its conditional probability table.
///
/// `cpt[config * cardinality + value]` is `p(value | parents in config)`,
/// where `config` is the mixed-radix index of the parent values, first
/// parent most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub cardinality: usize,
    pub parents: Vec<usize>,
    pub cpt: Vec<f64>,
}

/// A Bayesian network over discrete nodes: the joint factorises as the
/// product of every node's probability given its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    nodes: Vec<Node>,
}

/// Topological order of the graph given by each node's parent list.
pub fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>, BncError> {
    let mut g = DiGraph::<(), ()>::new();
    let ids: Vec<_> = parents.iter().map(|_| g.add_node(())).collect();
    for (child, ps) in parents.iter().enumerate() {
        for &p in ps {
            let parent = *ids
                .get(p)
                .ok_or_else(|| BncError::InvalidModel(format!("node {child} has unknown parent {p}")))?;
            g.add_edge(parent, ids[child], ());
        }
    }
    toposort(&g, None)
        .map(|order| order.into_iter().map(|n| n.index()).collect())
        .map_err(|c| BncError::CyclicStructure(format!("cycle through node {}", c.node_id().index())))
}

impl Network {
    pub fn new(nodes: Vec<Node>) -> Result<Self, BncError> {
        let parents: Vec<Vec<usize>> = nodes.iter().map(|n| n.parents.clone()).collect();
        topological_order(&parents)?;
        let net = Network { nodes };
        for (i, n) in net.nodes.iter().enumerate() {
            if n.cardinality == 0 {
                return Err(BncError::InvalidModel(format!("node {} has no states", n.name)));
            }
            let mut seen = n.parents.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != n.parents.len() || n.parents.contains(&i) {
                return Err(BncError::InvalidModel(format!("node {} repeats a parent", n.name)));
            }
            let want = net.configs(i) * n.cardinality;
            if n.cpt.len() != want {
                return Err(BncError::InvalidModel(format!(
                    "node {} has {} CPT entries, expected {want}",
                    n.name,
                    n.cpt.len()
                )));
            }
            for row in n.cpt.chunks(n.cardinality) {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 || row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(BncError::InvalidModel(format!(
                        "a CPT row of {} does not sum to 1",
                        n.name
                    )));
                }
            }
        }
        Ok(net)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of parent configurations of node `i`.
    pub fn configs(&self, i: usize) -> usize {
        self.nodes[i]
            .parents
            .iter()
            .map(|&p| self.nodes[p].cardinality)
            .product()
    }

    pub fn parent_config(&self, i: usize, assignment: &[usize]) -> usize {
        self.nodes[i]
            .parents
            .iter()
            .fold(0, |acc, &p| acc * self.nodes[p].cardinality + assignment[p])
    }

    pub fn prob(&self, i: usize, assignment: &[usize]) -> f64 {
        let n = &self.nodes[i];
        n.cpt[self.parent_config(i, assignment) * n.cardinality + assignment[i]]
    }

    pub fn log_joint(&self, assignment: &[usize]) -> f64 {
        (0..self.nodes.len()).map(|i| self.prob(i, assignment).ln()).sum()
    }

    /// Distribution of node `query` given every other node's value in
    /// `evidence` (the query's own entry is ignored). Only the factors that
    /// mention the query depend on it, so the rest are skipped.
    pub fn posterior(&self, query: usize, evidence: &[usize]) -> Vec<f64> {
        assert_eq!(evidence.len(), self.nodes.len(), "evidence must cover every node");
        let involved: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| i == query || self.nodes[i].parents.contains(&query))
            .collect();
        let mut a = evidence.to_vec();
        let logs: Vec<f64> = (0..self.nodes[query].cardinality)
            .map(|v| {
                a[query] = v;
                involved.iter().map(|&i| self.prob(i, &a).ln()).sum()
            })
            .collect();
        normalize_log(&logs)
    }
}

/// Softmax of log weights; all-impossible inputs give a uniform vector.
pub fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return vec![1.0 / logs.len() as f64; logs.len()];
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}
