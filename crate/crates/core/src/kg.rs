//! Candidate-entity subgraphs: directed labeled graphs around a central item,
//! with k-hop truncation, triplet enumeration, relation reification and
//! adjacency-matrix construction.
//!
//! Node and triplet orderings are breadth-first from the central node with
//! ties broken by edge insertion order, so every derived artifact is
//! deterministic for a given graph.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("cannot read graph store: {0}")]
    Io(#[from] std::io::Error),
}

/// One directed labeled edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub source: String,
    pub relation: String,
    pub target: String,
}

/// Deterministically ordered edge list.
pub type TripletList = Vec<Triplet>;

/// Directed labeled graph around a central item.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    central: String,
    /// (id, label) in insertion order.
    nodes: Vec<(String, String)>,
    index: HashMap<String, usize>,
    edges: Vec<Triplet>,
    edge_set: HashSet<(String, String, String)>,
}

/// Binary adjacency over a fixed node ordering; A[i][j] = 1 iff an edge
/// i -> j exists (outgoing direction only).
#[derive(Debug, Clone)]
pub struct AdjacencyMatrix {
    pub order: Vec<String>,
    matrix: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.matrix[i * self.order.len() + j]
    }

    pub fn ones(&self) -> usize {
        self.matrix.iter().map(|&v| v as usize).sum()
    }
}

impl KnowledgeGraph {
    pub fn new(central_id: impl Into<String>, central_label: impl Into<String>) -> Self {
        let id = central_id.into();
        let mut g = KnowledgeGraph {
            central: id.clone(),
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            edge_set: HashSet::new(),
        };
        g.add_node(id, central_label.into());
        g
    }

    pub fn central(&self) -> &str {
        &self.central
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn label(&self, id: &str) -> Option<&str> {
        self.index.get(id).map(|&i| self.nodes[i].1.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Insert a node if absent; an existing node keeps its first label.
    pub fn add_node(&mut self, id: impl Into<String>, label: impl Into<String>) {
        let id = id.into();
        if !self.index.contains_key(&id) {
            self.index.insert(id.clone(), self.nodes.len());
            self.nodes.push((id, label.into()));
        }
    }

    /// Insert an edge between existing nodes. Exact duplicates are dropped;
    /// parallel edges with distinct relations are kept.
    pub fn add_edge(
        &mut self,
        source: impl Into<String>,
        relation: impl Into<String>,
        target: impl Into<String>,
    ) -> Result<(), GraphError> {
        let (source, relation, target) = (source.into(), relation.into(), target.into());
        if !self.contains(&source) {
            return Err(GraphError::UnknownNode(source));
        }
        if !self.contains(&target) {
            return Err(GraphError::UnknownNode(target));
        }
        let key = (source.clone(), relation.clone(), target.clone());
        if self.edge_set.insert(key) {
            self.edges.push(Triplet {
                source,
                relation,
                target,
            });
        }
        Ok(())
    }

    /// Node ids in breadth-first order from the central node, following
    /// outgoing edges in insertion order; nodes unreachable along directed
    /// paths follow in insertion order.
    pub fn bfs_order(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(self.nodes.len());
        let mut seen: HashSet<&str> = HashSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        queue.push_back(&self.central);
        seen.insert(&self.central);
        while let Some(id) = queue.pop_front() {
            out.push(id.to_string());
            for e in &self.edges {
                if e.source == id && seen.insert(&e.target) {
                    queue.push_back(&e.target);
                }
            }
        }
        for (id, _) in &self.nodes {
            if seen.insert(id) {
                out.push(id.clone());
            }
        }
        out
    }

    /// Keep exactly the nodes within k directed hops of the central node,
    /// plus induced edges. The central node is always retained.
    pub fn truncate_khop(&self, k: usize) -> KnowledgeGraph {
        let mut depth: HashMap<&str, usize> = HashMap::new();
        depth.insert(&self.central, 0);
        let mut queue: VecDeque<&str> = VecDeque::new();
        queue.push_back(&self.central);
        while let Some(id) = queue.pop_front() {
            let d = depth[id];
            if d == k {
                continue;
            }
            for e in &self.edges {
                if e.source == id && !depth.contains_key(e.target.as_str()) {
                    depth.insert(&e.target, d + 1);
                    queue.push_back(&e.target);
                }
            }
        }
        let mut g = KnowledgeGraph::new(self.central.clone(), self.label(&self.central).unwrap());
        for (id, label) in &self.nodes {
            if depth.contains_key(id.as_str()) {
                g.add_node(id.clone(), label.clone());
            }
        }
        for e in &self.edges {
            if depth.contains_key(e.source.as_str()) && depth.contains_key(e.target.as_str()) {
                g.add_edge(e.source.clone(), e.relation.clone(), e.target.clone())
                    .unwrap();
            }
        }
        g
    }

    /// Every edge exactly once as (source, relation, target), in
    /// BFS-from-central, insertion-stable order.
    pub fn triplets(&self) -> TripletList {
        let order = self.bfs_order();
        let rank: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut out = self.edges.clone();
        // stable sort keeps insertion order among edges of the same source
        out.sort_by_key(|e| rank.get(e.source.as_str()).copied().unwrap_or(usize::MAX));
        out
    }

    /// Replace every labeled edge (u, r, v) with a fresh node labeled r and
    /// edges u -> r_node -> v. A graph of n nodes and m edges becomes one of
    /// n + m nodes and 2m edges.
    pub fn reify(&self) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new(self.central.clone(), self.label(&self.central).unwrap());
        for (id, label) in &self.nodes {
            g.add_node(id.clone(), label.clone());
        }
        for (i, e) in self.triplets().iter().enumerate() {
            let rel_id = format!("rel#{i}:{}", e.relation);
            g.add_node(rel_id.clone(), e.relation.clone());
            g.add_edge(e.source.clone(), e.relation.clone(), rel_id.clone())
                .unwrap();
            g.add_edge(rel_id, e.relation.clone(), e.target.clone())
                .unwrap();
        }
        g
    }

    /// Adjacency over the BFS node ordering.
    pub fn adjacency(&self) -> AdjacencyMatrix {
        let order = self.bfs_order();
        let rank: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let n = order.len();
        let mut matrix = vec![0u8; n * n];
        for e in &self.edges {
            let i = rank[e.source.as_str()];
            let j = rank[e.target.as_str()];
            matrix[i * n + j] = 1;
        }
        AdjacencyMatrix { order, matrix }
    }
}

/// One exported neighborhood record of the graph-store JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// [subject label, relation label, object label] rows; the first hop's
    /// subject is the item itself.
    pub triplets: Vec<[String; 3]>,
}

impl GraphRecord {
    /// Build the neighborhood graph. Nodes are keyed by label.
    pub fn to_graph(&self) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new(self.label.clone(), self.label.clone());
        for [s, r, o] in &self.triplets {
            g.add_node(s.clone(), s.clone());
            g.add_node(o.clone(), o.clone());
            g.add_edge(s.clone(), r.clone(), o.clone()).unwrap();
        }
        g
    }
}

/// Read-only collection of exported neighborhoods, keyed by item id.
pub struct GraphStore {
    records: HashMap<String, GraphRecord>,
    pub skipped_lines: usize,
}

impl GraphStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = HashMap::new();
        let mut skipped_lines = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<GraphRecord>(&line) {
                Ok(rec) => {
                    records.insert(rec.id.clone(), rec);
                }
                Err(_) => skipped_lines += 1,
            }
        }
        Ok(GraphStore {
            records,
            skipped_lines,
        })
    }

    pub fn from_records(records: impl IntoIterator<Item = GraphRecord>) -> Self {
        GraphStore {
            records: records.into_iter().map(|r| (r.id.clone(), r)).collect(),
            skipped_lines: 0,
        }
    }

    pub fn get(&self, id: &str) -> Option<&GraphRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GraphRecord> {
        self.records.values()
    }
}
