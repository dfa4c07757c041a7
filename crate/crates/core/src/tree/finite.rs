//! Small labelled trees with elementary folds, plus DOT output.

use std::collections::{BTreeSet, HashSet, VecDeque};

use super::TreeError;

/// A finite tree with parent→child edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteTree {
    pub labels: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub base: Option<usize>,
}

impl FiniteTree {
    pub fn new(labels: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self, TreeError> {
        let t = Self { labels, edges, base: None };
        if !t.is_tree() {
            return Err(TreeError::NotATree);
        }
        Ok(t)
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|(p, _)| *p == v).count()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|(p, c)| *p == v || *c == v).count()
    }

    pub fn is_tree(&self) -> bool {
        let n = self.labels.len();
        if n == 0 || self.edges.len() + 1 != n {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            if a >= n || b >= n || a == b {
                return false;
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Identify two edges sharing a vertex by merging their other endpoints.
    /// The merged vertex keeps the label and index slot of the first edge's
    /// endpoint; indices above the removed slot shift down by one.
    pub fn elementary_fold(&self, e1: (usize, usize), e2: (usize, usize)) -> Result<Self, TreeError> {
        for e in [e1, e2] {
            if !self.edges.contains(&e) {
                return Err(TreeError::NoSuchEdge(e));
            }
        }
        let shared = [e1.0, e1.1]
            .into_iter()
            .find(|v| *v == e2.0 || *v == e2.1)
            .filter(|_| e1 != e2)
            .ok_or(TreeError::NotIncident(e1, e2))?;
        let other = |e: (usize, usize)| if e.0 == shared { e.1 } else { e.0 };
        let (keep, drop) = (other(e1), other(e2));
        let relabel = |v: usize| {
            let v = if v == drop { keep } else { v };
            if v > drop {
                v - 1
            } else {
                v
            }
        };
        let mut seen: HashSet<BTreeSet<usize>> = HashSet::new();
        let mut edges = Vec::new();
        for &(p, c) in &self.edges {
            let e = (relabel(p), relabel(c));
            if e.0 != e.1 && seen.insert(BTreeSet::from([e.0, e.1])) {
                edges.push(e);
            }
        }
        let mut labels = self.labels.clone();
        labels.remove(drop);
        let folded = Self { labels, edges, base: self.base.map(relabel) };
        if !folded.is_tree() {
            return Err(TreeError::NotATree);
        }
        Ok(folded)
    }

    pub fn to_dot(&self) -> String {
        dot(&self.labels, &self.edges)
    }
}

/// The star with `leaves` edges out of a centre.
pub fn star(leaves: usize) -> FiniteTree {
    let mut labels = vec!["c".to_string()];
    labels.extend((0..leaves).map(|i| format!("l{i}")));
    let edges = (1..=leaves).map(|i| (0, i)).collect();
    FiniteTree { labels, edges, base: Some(0) }
}

/// Complete binary tree of the given depth rooted at index 0, in BFS order.
pub fn binary_slab(depth: u32) -> FiniteTree {
    let n = (1usize << (depth + 1)) - 1;
    let labels = (0..n).map(|i| format!("v{i}")).collect();
    let edges = (1..n).map(|i| ((i - 1) / 2, i)).collect();
    FiniteTree { labels, edges, base: Some(0) }
}

pub(crate) fn dot(labels: &[String], edges: &[(usize, usize)]) -> String {
    let mut s = String::from("digraph tree {\n");
    for (i, l) in labels.iter().enumerate() {
        s.push_str(&format!("  v{i} [label=\"{}\"];\n", l.replace('"', "\\\"")));
    }
    for (p, c) in edges {
        s.push_str(&format!("  v{p} -> v{c};\n"));
    }
    s.push_str("}\n");
    s
}
