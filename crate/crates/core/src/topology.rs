//! Graphs, decoupled update blocks, and block schedules.
//!
//! Vertices carry convex sets, edges carry consensus constraints. A block is
//! a set of vertices/edges updated jointly; it is *decoupled* when its members
//! touch pairwise disjoint vertex coordinates, which makes the joint minimizer
//! separable and order independent.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one vertex")]
    Empty,
    #[error("edge ({0}, {1}) out of range for {2} vertices")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected: component {component_a:?} is separate from {component_b:?}")]
    Disconnected { component_a: Vec<usize>, component_b: Vec<usize> },
    #[error("edges are not in canonical sorted order (found ({0}, {1}) out of place)")]
    NotCanonical(usize, usize),
    #[error("unknown graph spec {0:?} (expected e.g. path:3, cycle:5, star:8, complete:4)")]
    BadSpec(String),
}

/// A connected undirected graph with canonically oriented (`i < j`), sorted,
/// deduplicated edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph, canonicalizing edge orientation and order, and
    /// verifying connectivity by breadth-first search.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::EdgeOutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        for pair in canon.windows(2) {
            if pair[0] == pair[1] {
                return Err(GraphError::DuplicateEdge(pair[0].0, pair[0].1));
            }
        }
        let g = Graph { n, edges: canon };
        g.check_connected()?;
        Ok(g)
    }

    /// Re-validates a deserialized graph: canonical edge form plus
    /// connectivity.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.n == 0 {
            return Err(GraphError::Empty);
        }
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j) in &self.edges {
            if i >= self.n || j >= self.n {
                return Err(GraphError::EdgeOutOfRange(i, j, self.n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if i > j {
                return Err(GraphError::NotCanonical(i, j));
            }
            if let Some(p) = prev {
                if p == (i, j) {
                    return Err(GraphError::DuplicateEdge(i, j));
                }
                if p > (i, j) {
                    return Err(GraphError::NotCanonical(i, j));
                }
            }
            prev = Some((i, j));
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            let component_a: Vec<usize> = (0..self.n).filter(|&v| seen[v]).collect();
            let component_b: Vec<usize> = (0..self.n).filter(|&v| !seen[v]).collect();
            Err(GraphError::Disconnected { component_a, component_b })
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok()
    }

    /// For each vertex, the incident edges as `(edge index, sign)`; the sign
    /// is `+1` at the smaller endpoint and `-1` at the larger one.
    pub fn incidence(&self) -> Vec<Vec<(usize, f64)>> {
        let mut inc = vec![Vec::new(); self.n];
        for (idx, &(i, j)) in self.edges.iter().enumerate() {
            inc[i].push((idx, 1.0));
            inc[j].push((idx, -1.0));
        }
        inc
    }

    /// Builds a standard topology: `path:N`, `cycle:N`, `star:N` (vertex 0 at
    /// the hub) or `complete:N`.
    pub fn from_spec(spec: &str) -> Result<Self, GraphError> {
        let (shape, count) = spec
            .split_once(':')
            .ok_or(GraphError::BadSpec(spec.to_string()))?;
        let n: usize = count.parse().map_err(|_| GraphError::BadSpec(spec.to_string()))?;
        let edges: Vec<(usize, usize)> = match shape {
            "path" => (1..n).map(|v| (v - 1, v)).collect(),
            "cycle" => {
                if n < 3 {
                    return Err(GraphError::BadSpec(spec.to_string()));
                }
                (1..n).map(|v| (v - 1, v)).chain([(0, n - 1)]).collect()
            }
            "star" => (1..n).map(|v| (0, v)).collect(),
            "complete" => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
            _ => return Err(GraphError::BadSpec(spec.to_string())),
        };
        if n >= 2 && edges.is_empty() {
            return Err(GraphError::BadSpec(spec.to_string()));
        }
        Graph::new(n, edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockMember {
    Vertex(usize),
    Edge(usize, usize),
}

impl BlockMember {
    /// Vertex coordinates this member reads and writes.
    pub fn touched(&self) -> Vec<usize> {
        match self {
            BlockMember::Vertex(i) => vec![*i],
            BlockMember::Edge(i, j) => vec![*i, *j],
        }
    }
}

impl fmt::Display for BlockMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockMember::Vertex(i) => write!(f, "v{i}"),
            BlockMember::Edge(i, j) => write!(f, "e({i},{j})"),
        }
    }
}

/// A set of members updated jointly within one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub members: Vec<BlockMember>,
}

impl Block {
    pub fn new(members: Vec<BlockMember>) -> Self {
        Block { members }
    }

    pub fn all_vertices(n: usize) -> Self {
        Block { members: (0..n).map(BlockMember::Vertex).collect() }
    }

    /// A block is decoupled when no vertex coordinate is touched twice.
    pub fn decoupled(&self) -> bool {
        let mut seen = BTreeSet::new();
        for member in &self.members {
            for c in member.touched() {
                if !seen.insert(c) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulePolicy {
    /// Every cycle: one block with all vertices, then each edge alone in
    /// canonical order.
    CyclicVFirst,
    /// Every cycle: each vertex alone, then each edge alone.
    SingletonCyclic,
    /// Every cycle: a seeded random permutation of all vertex and edge
    /// singletons.
    RandomCoverage,
    /// Every cycle: all vertices first, then greedily built vertex-disjoint
    /// edge blocks.
    EdgeColoringParallel,
}

impl SchedulePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulePolicy::CyclicVFirst => "cyclic_v_first",
            SchedulePolicy::SingletonCyclic => "singleton_cyclic",
            SchedulePolicy::RandomCoverage => "random_coverage",
            SchedulePolicy::EdgeColoringParallel => "edge_coloring_parallel",
        }
    }
}

impl FromStr for SchedulePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cyclic_v_first" => Ok(SchedulePolicy::CyclicVFirst),
            "singleton_cyclic" => Ok(SchedulePolicy::SingletonCyclic),
            "random_coverage" => Ok(SchedulePolicy::RandomCoverage),
            "edge_coloring_parallel" => Ok(SchedulePolicy::EdgeColoringParallel),
            other => Err(format!(
                "unknown schedule policy {other:?} (expected cyclic_v_first, singleton_cyclic, \
                 random_coverage or edge_coloring_parallel)"
            )),
        }
    }
}

impl fmt::Display for SchedulePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cycles of blocks; a solver walks the cycles in order (wrapping around when
/// it needs more cycles than the schedule stores).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub cycles: Vec<Vec<Block>>,
    /// When set, the first block of every cycle must contain exactly all
    /// vertices.
    pub starts_with_all_vertices: bool,
    /// Human-readable provenance recorded in traces.
    pub policy: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleViolation {
    #[error("schedule has no cycles")]
    NoCycles,
    #[error("cycle {cycle} has no blocks")]
    EmptyCycle { cycle: usize },
    #[error("cycle {cycle}, block {block} is empty")]
    EmptyBlock { cycle: usize, block: usize },
    #[error("cycle {cycle}, block {block} references unknown vertex {vertex}")]
    UnknownVertex { cycle: usize, block: usize, vertex: usize },
    #[error("cycle {cycle}, block {block} references unknown edge ({i}, {j})")]
    UnknownEdge { cycle: usize, block: usize, i: usize, j: usize },
    #[error("cycle {cycle}, block {block} is coupled: coordinate {coordinate} touched twice")]
    Coupled { cycle: usize, block: usize, coordinate: usize },
    #[error("cycle {cycle} does not cover {member}")]
    MissingCoverage { cycle: usize, member: BlockMember },
    #[error("cycle {cycle} must start with the all-vertices block")]
    BadFirstBlock { cycle: usize },
}

/// Builds `n_cycles` cycles under the given policy; `seed` only matters for
/// [`SchedulePolicy::RandomCoverage`].
pub fn make_schedule(graph: &Graph, policy: SchedulePolicy, n_cycles: usize, seed: u64) -> Schedule {
    let n = graph.n_vertices();
    let vertex_singletons = || (0..n).map(|v| Block::new(vec![BlockMember::Vertex(v)]));
    let edge_singletons = || {
        graph
            .edges()
            .iter()
            .map(|&(i, j)| Block::new(vec![BlockMember::Edge(i, j)]))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cycles = Vec::with_capacity(n_cycles);
    for _ in 0..n_cycles {
        let cycle: Vec<Block> = match policy {
            SchedulePolicy::CyclicVFirst => {
                let mut c = vec![Block::all_vertices(n)];
                c.extend(edge_singletons());
                c
            }
            SchedulePolicy::SingletonCyclic => vertex_singletons().chain(edge_singletons()).collect(),
            SchedulePolicy::RandomCoverage => {
                let mut singles: Vec<Block> = vertex_singletons().chain(edge_singletons()).collect();
                singles.shuffle(&mut rng);
                singles
            }
            SchedulePolicy::EdgeColoringParallel => {
                let mut colors: Vec<(HashSet<usize>, Vec<BlockMember>)> = Vec::new();
                for &(i, j) in graph.edges() {
                    let slot = colors
                        .iter_mut()
                        .find(|(used, _)| !used.contains(&i) && !used.contains(&j));
                    match slot {
                        Some((used, members)) => {
                            used.extend([i, j]);
                            members.push(BlockMember::Edge(i, j));
                        }
                        None => colors.push((HashSet::from([i, j]), vec![BlockMember::Edge(i, j)])),
                    }
                }
                let mut c = vec![Block::all_vertices(n)];
                c.extend(colors.into_iter().map(|(_, members)| Block::new(members)));
                c
            }
        };
        cycles.push(cycle);
    }

    let starts_with_all_vertices = matches!(
        policy,
        SchedulePolicy::CyclicVFirst | SchedulePolicy::EdgeColoringParallel
    );
    Schedule { cycles, starts_with_all_vertices, policy: policy.name().to_string() }
}

/// Checks structural validity: known members, decoupled blocks, full coverage
/// of every vertex and edge in every cycle, and the all-vertices opener when
/// the schedule claims one. Returns the first violation found.
pub fn validate_schedule(graph: &Graph, schedule: &Schedule) -> Result<(), ScheduleViolation> {
    if schedule.cycles.is_empty() {
        return Err(ScheduleViolation::NoCycles);
    }
    let n = graph.n_vertices();
    for (ci, cycle) in schedule.cycles.iter().enumerate() {
        if cycle.is_empty() {
            return Err(ScheduleViolation::EmptyCycle { cycle: ci });
        }
        let mut covered_vertices = vec![false; n];
        let mut covered_edges = vec![false; graph.edges().len()];
        for (bi, block) in cycle.iter().enumerate() {
            if block.members.is_empty() {
                return Err(ScheduleViolation::EmptyBlock { cycle: ci, block: bi });
            }
            let mut touched = BTreeSet::new();
            for member in &block.members {
                match *member {
                    BlockMember::Vertex(v) => {
                        if v >= n {
                            return Err(ScheduleViolation::UnknownVertex { cycle: ci, block: bi, vertex: v });
                        }
                        covered_vertices[v] = true;
                    }
                    BlockMember::Edge(i, j) => match graph.edge_index(i, j) {
                        Some(idx) if (i, j) == graph.edges()[idx] => covered_edges[idx] = true,
                        _ => return Err(ScheduleViolation::UnknownEdge { cycle: ci, block: bi, i, j }),
                    },
                }
                for c in member.touched() {
                    if !touched.insert(c) {
                        return Err(ScheduleViolation::Coupled { cycle: ci, block: bi, coordinate: c });
                    }
                }
            }
        }
        if schedule.starts_with_all_vertices {
            let first: BTreeSet<_> = cycle[0].members.iter().copied().collect();
            let want: BTreeSet<_> = (0..n).map(BlockMember::Vertex).collect();
            if first != want {
                return Err(ScheduleViolation::BadFirstBlock { cycle: ci });
            }
        }
        if let Some(v) = covered_vertices.iter().position(|&c| !c) {
            return Err(ScheduleViolation::MissingCoverage { cycle: ci, member: BlockMember::Vertex(v) });
        }
        if let Some(e) = covered_edges.iter().position(|&c| !c) {
            let (i, j) = graph.edges()[e];
            return Err(ScheduleViolation::MissingCoverage { cycle: ci, member: BlockMember::Edge(i, j) });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_canonicalizes_edges() {
        let g = Graph::new(3, [(0, 1), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.edge_index(2, 1), Some(1));
    }

    #[test]
    fn disconnected_graph_names_components() {
        let err = Graph::new(3, [(0, 1)]).unwrap_err();
        assert_eq!(
            err,
            GraphError::Disconnected { component_a: vec![0, 1], component_b: vec![2] }
        );
    }

    #[test]
    fn rejects_self_loop_and_duplicates() {
        assert_eq!(Graph::new(2, [(1, 1)]).unwrap_err(), GraphError::SelfLoop(1));
        assert_eq!(
            Graph::new(2, [(0, 1), (1, 0)]).unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
    }

    #[test]
    fn spec_shapes() {
        assert_eq!(Graph::from_spec("path:3").unwrap().edges(), &[(0, 1), (1, 2)]);
        assert_eq!(
            Graph::from_spec("cycle:4").unwrap().edges(),
            &[(0, 1), (0, 3), (1, 2), (2, 3)]
        );
        assert_eq!(Graph::from_spec("star:4").unwrap().edges(), &[(0, 1), (0, 2), (0, 3)]);
        assert!(Graph::from_spec("ring:4").is_err());
    }

    #[test]
    fn cyclic_v_first_layout() {
        let g = Graph::from_spec("path:3").unwrap();
        let s = make_schedule(&g, SchedulePolicy::CyclicVFirst, 2, 0);
        assert_eq!(s.cycles.len(), 2);
        let cycle = &s.cycles[0];
        assert_eq!(cycle.len(), 3);
        assert_eq!(cycle[0], Block::all_vertices(3));
        assert_eq!(cycle[1].members, vec![BlockMember::Edge(0, 1)]);
        assert_eq!(cycle[2].members, vec![BlockMember::Edge(1, 2)]);
        assert!(s.starts_with_all_vertices);
        validate_schedule(&g, &s).unwrap();
    }

    #[test]
    fn singleton_cyclic_layout() {
        let g = Graph::from_spec("path:3").unwrap();
        let s = make_schedule(&g, SchedulePolicy::SingletonCyclic, 1, 0);
        assert_eq!(s.cycles[0].len(), 5);
        assert!(!s.starts_with_all_vertices);
        assert!(s.cycles[0].iter().all(|b| b.members.len() == 1));
        validate_schedule(&g, &s).unwrap();
    }

    #[test]
    fn random_coverage_is_seeded_and_covering() {
        let g = Graph::from_spec("cycle:5").unwrap();
        let a = make_schedule(&g, SchedulePolicy::RandomCoverage, 4, 42);
        let b = make_schedule(&g, SchedulePolicy::RandomCoverage, 4, 42);
        let c = make_schedule(&g, SchedulePolicy::RandomCoverage, 4, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        validate_schedule(&g, &a).unwrap();
        validate_schedule(&g, &c).unwrap();
    }

    #[test]
    fn edge_coloring_groups_disjoint_edges() {
        let g = Graph::from_spec("path:4").unwrap();
        let s = make_schedule(&g, SchedulePolicy::EdgeColoringParallel, 1, 0);
        let cycle = &s.cycles[0];
        assert_eq!(cycle[0], Block::all_vertices(4));
        assert_eq!(
            cycle[1].members,
            vec![BlockMember::Edge(0, 1), BlockMember::Edge(2, 3)]
        );
        assert_eq!(cycle[2].members, vec![BlockMember::Edge(1, 2)]);
        validate_schedule(&g, &s).unwrap();

        // A star forces every edge into its own color.
        let star = Graph::from_spec("star:4").unwrap();
        let s = make_schedule(&star, SchedulePolicy::EdgeColoringParallel, 1, 0);
        assert_eq!(s.cycles[0].len(), 4);
        validate_schedule(&star, &s).unwrap();
    }

    #[test]
    fn validation_catches_violations() {
        let g = Graph::from_spec("path:3").unwrap();

        let mut s = make_schedule(&g, SchedulePolicy::CyclicVFirst, 1, 0);
        s.cycles[0].pop();
        assert_eq!(
            validate_schedule(&g, &s).unwrap_err(),
            ScheduleViolation::MissingCoverage { cycle: 0, member: BlockMember::Edge(1, 2) }
        );

        let coupled = Schedule {
            cycles: vec![vec![Block::new(vec![BlockMember::Vertex(1), BlockMember::Edge(1, 2)])]],
            starts_with_all_vertices: false,
            policy: "custom".into(),
        };
        assert_eq!(
            validate_schedule(&g, &coupled).unwrap_err(),
            ScheduleViolation::Coupled { cycle: 0, block: 0, coordinate: 1 }
        );

        let unknown = Schedule {
            cycles: vec![vec![Block::new(vec![BlockMember::Edge(0, 2)])]],
            starts_with_all_vertices: false,
            policy: "custom".into(),
        };
        assert_eq!(
            validate_schedule(&g, &unknown).unwrap_err(),
            ScheduleViolation::UnknownEdge { cycle: 0, block: 0, i: 0, j: 2 }
        );
    }

    #[test]
    fn decoupled_flag() {
        assert!(Block::new(vec![BlockMember::Vertex(0), BlockMember::Edge(1, 2)]).decoupled());
        assert!(!Block::new(vec![BlockMember::Vertex(1), BlockMember::Edge(1, 2)]).decoupled());
        assert!(!Block::new(vec![BlockMember::Edge(0, 1), BlockMember::Edge(1, 2)]).decoupled());
    }
}
