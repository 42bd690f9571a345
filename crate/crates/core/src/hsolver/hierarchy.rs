use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::DirectedGraph;
use crate::market::TraderId;

use super::HSolverError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
}

/// A rooted tree, a trader-to-node labeling and the width `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalLabeling {
    pub tree: Vec<TreeNode>,
    pub labels: BTreeMap<TraderId, String>,
    pub k: usize,
}

/// Index form of the labeling tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeShape {
    pub ids: Vec<String>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub depth: Vec<usize>,
    pub root: usize,
}

impl TreeShape {
    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.parent[a] == Some(b) || self.parent[b] == Some(a)
    }
}

impl HierarchicalLabeling {
    pub fn new(tree: Vec<TreeNode>, labels: BTreeMap<TraderId, String>, k: usize) -> Self {
        Self { tree, labels, k }
    }

    /// Checks the tree structure: unique ids, known parents, exactly one root,
    /// no cycles.
    pub fn shape(&self) -> Result<TreeShape, HSolverError> {
        let ids: Vec<String> = self.tree.iter().map(|n| n.id.clone()).collect();
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(HSolverError::MalformedTree(format!("duplicate node {id}")));
            }
        }
        let pos = |id: &str| ids.iter().position(|x| x == id);
        let mut parent = Vec::with_capacity(ids.len());
        for n in &self.tree {
            parent.push(match &n.parent {
                None => None,
                Some(p) => Some(pos(p).ok_or_else(|| {
                    HSolverError::MalformedTree(format!("node {} has unknown parent {p}", n.id))
                })?),
            });
        }
        let roots: Vec<usize> = (0..ids.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(HSolverError::MalformedTree(format!(
                "expected one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); ids.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let mut depth = vec![usize::MAX; ids.len()];
        depth[root] = 0;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        if let Some(i) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(HSolverError::MalformedTree(format!(
                "node {} is not reachable from the root",
                ids[i]
            )));
        }
        Ok(TreeShape {
            ids,
            parent,
            children,
            depth,
            root,
        })
    }

    /// Node index of every vertex, in vertex order.
    pub(crate) fn node_of_vertices(
        &self,
        shape: &TreeShape,
        vertices: &[String],
    ) -> Result<Vec<usize>, HSolverError> {
        for (trader, node) in &self.labels {
            if shape.index_of(node).is_none() {
                return Err(HSolverError::UnknownNode {
                    trader: trader.clone(),
                    node: node.clone(),
                });
            }
        }
        vertices
            .iter()
            .map(|v| {
                let node = self
                    .labels
                    .get(v)
                    .ok_or_else(|| HSolverError::Unlabeled(v.clone()))?;
                Ok(shape.index_of(node).expect("checked above"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyCheck {
    pub valid: bool,
    pub violation: Option<String>,
}

impl HierarchyCheck {
    fn ok() -> Self {
        Self {
            valid: true,
            violation: None,
        }
    }

    fn fail(msg: String) -> Self {
        Self {
            valid: false,
            violation: Some(msg),
        }
    }
}

/// Checks the k-hierarchical structure: every non-leaf node labels between 1
/// and k vertices; same-label vertices are mutually connected on non-leaf
/// nodes and unconnected on leaves; vertices on distinct nodes are connected
/// both ways exactly when their nodes are tree-adjacent.
pub fn validate_hierarchical(
    graph: &DirectedGraph,
    labeling: &HierarchicalLabeling,
) -> Result<HierarchyCheck, HSolverError> {
    let shape = labeling.shape()?;
    let node_of = labeling.node_of_vertices(&shape, graph.vertices())?;
    let mut count = vec![0usize; shape.ids.len()];
    for &n in &node_of {
        count[n] += 1;
    }
    for (n, &c) in count.iter().enumerate() {
        if !shape.is_leaf(n) && (c == 0 || c > labeling.k) {
            return Ok(HierarchyCheck::fail(format!(
                "non-leaf node {} labels {c} traders, expected between 1 and {}",
                shape.ids[n], labeling.k
            )));
        }
    }
    let names = graph.vertices();
    let nv = names.len();
    for a in 0..nv {
        for b in 0..nv {
            if a == b {
                continue;
            }
            let (na, nb) = (node_of[a], node_of[b]);
            let want = if na == nb {
                !shape.is_leaf(na)
            } else {
                shape.adjacent(na, nb)
            };
            let has = graph.has_edge(a, b);
            if has != want {
                let what = if has { "unexpected" } else { "missing" };
                return Ok(HierarchyCheck::fail(format!(
                    "{what} edge {} -> {} (labels {} and {})",
                    names[a], names[b], shape.ids[na], shape.ids[nb]
                )));
            }
        }
    }
    Ok(HierarchyCheck::ok())
}

/// Path tree `n0 - n1 - ... ` with one trader per node, `k = 1`.
pub fn path_labeling(traders: &[&str]) -> HierarchicalLabeling {
    let tree = (0..traders.len())
        .map(|i| TreeNode {
            id: format!("n{i}"),
            parent: if i == 0 { None } else { Some(format!("n{}", i - 1)) },
        })
        .collect();
    let labels = traders
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_string(), format!("n{i}")))
        .collect();
    HierarchicalLabeling::new(tree, labels, 1)
}

/// Single leaf node labeling every trader; valid only for edgeless graphs.
pub fn flat_labeling<'a>(traders: impl IntoIterator<Item = &'a str>) -> HierarchicalLabeling {
    let labels = traders
        .into_iter()
        .map(|t| (t.to_string(), "root".to_string()))
        .collect();
    HierarchicalLabeling::new(
        vec![TreeNode {
            id: "root".into(),
            parent: None,
        }],
        labels,
        1,
    )
}
