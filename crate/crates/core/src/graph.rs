use std::collections::BTreeSet;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;

/// Directed graph over trader identifiers.
///
/// Vertices keep the order they were given in (for markets, the market's
/// lexicographic trader order); edges are stored sorted so iteration is
/// deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    vertices: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn new(vertices: Vec<String>) -> Self {
        Self {
            vertices,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from identifier pairs; unknown endpoints are added as vertices.
    pub fn from_edges<S: AsRef<str>>(vertices: &[S], edges: &[(S, S)]) -> Self {
        let mut g = Self::new(vertices.iter().map(|v| v.as_ref().to_string()).collect());
        for (a, b) in edges {
            let a = g.ensure_vertex(a.as_ref());
            let b = g.ensure_vertex(b.as_ref());
            g.add_edge(a, b);
        }
        g
    }

    fn ensure_vertex(&mut self, id: &str) -> usize {
        match self.index_of(id) {
            Some(i) => i,
            None => {
                self.vertices.push(id.to_string());
                self.vertices.len() - 1
            }
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        self.edges.insert((from, to));
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Edges as identifier pairs.
    pub fn edge_ids(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.vertices[a].clone(), self.vertices[b].clone()))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn has_edge_ids(&self, from: &str, to: &str) -> bool {
        match (self.index_of(from), self.index_of(to)) {
            (Some(a), Some(b)) => self.has_edge(a, b),
            _ => false,
        }
    }

    /// Predecessors of `v`; for an influence graph these are the influencing neighbors.
    pub fn predecessors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, b)| b == v)
            .map(|&(a, _)| a)
            .collect()
    }

    pub fn successors(&self, v: usize) -> Vec<usize> {
        self.edges
            .range((v, 0)..(v + 1, 0))
            .map(|&(_, b)| b)
            .collect()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(_, b)| b == v).count()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.successors(v).len()
    }

    pub fn max_in_degree(&self) -> usize {
        (0..self.vertices.len())
            .map(|v| self.in_degree(v))
            .max()
            .unwrap_or(0)
    }

    /// Number of distinct neighbors of `v`, ignoring direction.
    pub fn undirected_degree(&self, v: usize) -> usize {
        let mut n: BTreeSet<usize> = self.successors(v).into_iter().collect();
        n.extend(self.predecessors(v));
        n.remove(&v);
        n.len()
    }

    pub fn has_self_loops(&self) -> bool {
        self.edges.iter().any(|&(a, b)| a == b)
    }

    /// True when every vertex reaches every other. The empty graph and a
    /// single vertex count as strongly connected.
    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_components().len() <= 1
    }

    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.vertices.len(), self.edges.len());
        let nodes: Vec<_> = (0..self.vertices.len()).map(|_| g.add_node(())).collect();
        for &(a, b) in &self.edges {
            g.add_edge(nodes[a], nodes[b], ());
        }
        let mut comps: Vec<Vec<usize>> = kosaraju_scc(&g)
            .into_iter()
            .map(|c| {
                let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                c.sort_unstable();
                c
            })
            .collect();
        comps.sort();
        comps
    }
}
