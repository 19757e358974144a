//! Mixed causal graphs over named nodes.
//!
//! A graph holds a directed edge set and an undirected edge set over an
//! ordered node list. Invariants enforced on every mutation: no self
//! loops, a node pair appears in at most one edge set, the directed
//! part stays acyclic. Fully directed graphs model DAGs; the undirected
//! part appears in equivalence-class output from constraint-based
//! discovery.
//!
//! Reachability queries (d-separation, backdoor paths) are only defined
//! on fully directed graphs; callers holding a partially directed graph
//! resolve it through `enumerate_dag_extensions` first.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap on `enumerate_dag_extensions` results used by the edge query
/// tools. Hitting it downgrades universally quantified answers to
/// "uncertain" rather than silently truncating.
pub const DEFAULT_EXTENSION_CAP: usize = 1024;

#[derive(Debug, Clone)]
pub struct CausalGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    /// (from, to) pairs by node index.
    directed: BTreeSet<(usize, usize)>,
    /// Normalized (min, max) pairs by node index.
    undirected: BTreeSet<(usize, usize)>,
}

/// Simple path witnessing an open backdoor connection; starts at the
/// treatment-side node and ends at the outcome-side node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackdoorPath(pub Vec<String>);

impl fmt::Display for BackdoorPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join(", "))
    }
}

/// Result of extension enumeration: all consistent fully directed
/// extensions found within the cap.
#[derive(Debug, Clone)]
pub struct Extensions {
    pub graphs: Vec<CausalGraph>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    kind: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<String>,
    edges: Vec<EdgeDoc>,
}

impl CausalGraph {
    /// Empty graph over the given nodes. Names must be unique and
    /// non-empty.
    pub fn new(nodes: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, name) in nodes.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::GraphParse {
                    detail: format!("empty node name at position {}", i + 1),
                });
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::DuplicateNode { name: name.clone() });
            }
        }
        Ok(CausalGraph {
            nodes,
            index,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
        })
    }

    /// Convenience constructor from name pairs.
    pub fn from_edges(
        nodes: &[&str],
        directed: &[(&str, &str)],
        undirected: &[(&str, &str)],
    ) -> Result<Self> {
        let mut g = CausalGraph::new(nodes.iter().map(|s| s.to_string()).collect())?;
        for (a, b) in directed {
            g.add_directed_edge(a, b)?;
        }
        for (a, b) in undirected {
            g.add_undirected_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable {
            name: name.to_string(),
        })
    }

    pub fn add_directed_edge(&mut self, from: &str, to: &str) -> Result<()> {
        let f = self.node_index(from)?;
        let t = self.node_index(to)?;
        self.insert_directed(f, t)
    }

    pub fn add_undirected_edge(&mut self, a: &str, b: &str) -> Result<()> {
        let i = self.node_index(a)?;
        let j = self.node_index(b)?;
        self.insert_undirected(i, j)
    }

    fn insert_directed(&mut self, f: usize, t: usize) -> Result<()> {
        if f == t {
            return Err(Error::SelfLoop {
                name: self.nodes[f].clone(),
            });
        }
        let key = (f.min(t), f.max(t));
        if self.undirected.contains(&key)
            || self.directed.contains(&(f, t))
            || self.directed.contains(&(t, f))
        {
            return Err(Error::EdgeConflict {
                a: self.nodes[f].clone(),
                b: self.nodes[t].clone(),
            });
        }
        if self.directed_reaches(t, f) {
            return Err(Error::DirectedCycle);
        }
        self.directed.insert((f, t));
        Ok(())
    }

    fn insert_undirected(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::SelfLoop {
                name: self.nodes[i].clone(),
            });
        }
        let key = (i.min(j), i.max(j));
        if self.undirected.contains(&key)
            || self.directed.contains(&(i, j))
            || self.directed.contains(&(j, i))
        {
            return Err(Error::EdgeConflict {
                a: self.nodes[i].clone(),
                b: self.nodes[j].clone(),
            });
        }
        self.undirected.insert(key);
        Ok(())
    }

    pub fn directed_edge_count(&self) -> usize {
        self.directed.len()
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.undirected.len()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.directed
            .iter()
            .map(|&(f, t)| (self.nodes[f].as_str(), self.nodes[t].as_str()))
    }

    pub fn undirected_edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.undirected
            .iter()
            .map(|&(i, j)| (self.nodes[i].as_str(), self.nodes[j].as_str()))
    }

    pub fn has_directed(&self, from: &str, to: &str) -> Result<bool> {
        let f = self.node_index(from)?;
        let t = self.node_index(to)?;
        Ok(self.directed.contains(&(f, t)))
    }

    pub fn has_undirected(&self, a: &str, b: &str) -> Result<bool> {
        let i = self.node_index(a)?;
        let j = self.node_index(b)?;
        Ok(self.undirected.contains(&(i.min(j), i.max(j))))
    }

    pub fn is_fully_directed(&self) -> bool {
        self.undirected.is_empty()
    }

    fn require_fully_directed(&self) -> Result<()> {
        match self.undirected.iter().next() {
            None => Ok(()),
            Some(&(i, j)) => Err(Error::NotFullyDirected {
                a: self.nodes[i].clone(),
                b: self.nodes[j].clone(),
            }),
        }
    }

    pub(crate) fn adjacent_idx(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
            || self.directed.contains(&(b, a))
            || self.undirected.contains(&(a.min(b), a.max(b)))
    }

    pub(crate) fn parents_idx(&self, v: usize) -> Vec<usize> {
        self.directed
            .iter()
            .filter(|&&(_, t)| t == v)
            .map(|&(f, _)| f)
            .collect()
    }

    pub(crate) fn children_idx(&self, v: usize) -> Vec<usize> {
        self.directed
            .iter()
            .filter(|&&(f, _)| f == v)
            .map(|&(_, t)| t)
            .collect()
    }

    pub(crate) fn undirected_neighbors_idx(&self, v: usize) -> Vec<usize> {
        self.undirected
            .iter()
            .filter(|&&(i, j)| i == v || j == v)
            .map(|&(i, j)| if i == v { j } else { i })
            .collect()
    }

    fn directed_reaches(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            for &(f, t) in &self.directed {
                if f == v && !seen[t] {
                    if t == to {
                        return true;
                    }
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        false
    }

    /// Ancestor closure of the seed set under directed edges, seeds
    /// included.
    fn ancestor_closure(&self, seeds: &[usize]) -> Vec<bool> {
        let n = self.nodes.len();
        let mut marked = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in seeds {
            if !marked[s] {
                marked[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &(f, t) in &self.directed {
                if t == v && !marked[f] {
                    marked[f] = true;
                    queue.push_back(f);
                }
            }
        }
        marked
    }

    /// Whether `z` d-separates `x` from `y`. Requires a fully directed
    /// graph; walks active trails with the standard two-direction
    /// reachability sweep.
    pub fn d_separated<S: AsRef<str>>(&self, x: &str, y: &str, z: &[S]) -> Result<bool> {
        self.require_fully_directed()?;
        let xi = self.node_index(x)?;
        let yi = self.node_index(y)?;
        if xi == yi {
            return Err(Error::SameVariable { name: x.to_string() });
        }
        let n = self.nodes.len();
        let mut in_z = vec![false; n];
        let mut z_idx = Vec::new();
        for s in z {
            let i = self.node_index(s.as_ref())?;
            if i == xi || i == yi {
                return Err(Error::SameVariable {
                    name: s.as_ref().to_string(),
                });
            }
            if !in_z[i] {
                in_z[i] = true;
                z_idx.push(i);
            }
        }
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(f, t) in &self.directed {
            parents[t].push(f);
            children[f].push(t);
        }
        let anc_z = self.ancestor_closure(&z_idx);

        // State (node, from_child): from_child means the trail reached
        // the node against an edge, so both parents and children are
        // open continuations when the node is unobserved.
        let mut seen = vec![[false; 2]; n];
        let mut queue = VecDeque::from([(xi, true)]);
        seen[xi][1] = true;
        while let Some((v, from_child)) = queue.pop_front() {
            if from_child {
                if !in_z[v] {
                    if v == yi {
                        return Ok(false);
                    }
                    for &p in &parents[v] {
                        if !seen[p][1] {
                            seen[p][1] = true;
                            queue.push_back((p, true));
                        }
                    }
                    for &c in &children[v] {
                        if !seen[c][0] {
                            seen[c][0] = true;
                            queue.push_back((c, false));
                        }
                    }
                }
            } else {
                if !in_z[v] {
                    if v == yi {
                        return Ok(false);
                    }
                    for &c in &children[v] {
                        if !seen[c][0] {
                            seen[c][0] = true;
                            queue.push_back((c, false));
                        }
                    }
                }
                // Collider: passable toward parents when the node or a
                // descendant is observed.
                if anc_z[v] {
                    for &p in &parents[v] {
                        if !seen[p][1] {
                            seen[p][1] = true;
                            queue.push_back((p, true));
                        }
                    }
                }
            }
        }
        Ok(true)
    }

    /// All collider-free simple paths from `x` to `y` whose first edge
    /// points into `x`, i.e. the paths a backdoor adjustment would have
    /// to block. Returned in lexicographic node-sequence order.
    pub fn find_backdoor_paths(&self, x: &str, y: &str) -> Result<Vec<BackdoorPath>> {
        self.require_fully_directed()?;
        let xi = self.node_index(x)?;
        let yi = self.node_index(y)?;
        if xi == yi {
            return Err(Error::SameVariable { name: x.to_string() });
        }
        let n = self.nodes.len();
        // neighbors[v]: (neighbor, edge points into neighbor), sorted
        // by neighbor name so the DFS emits paths lexicographically.
        let mut neighbors: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
        for &(f, t) in &self.directed {
            neighbors[f].push((t, true));
            neighbors[t].push((f, false));
        }
        for list in &mut neighbors {
            list.sort_by(|a, b| self.nodes[a.0].cmp(&self.nodes[b.0]));
        }

        let mut paths = Vec::new();
        let mut on_path = vec![false; n];
        on_path[xi] = true;
        let mut trail = vec![xi];
        // First hop must enter x against the arrow.
        for &(p, into_next) in &neighbors[xi] {
            if !into_next {
                self.backdoor_dfs(p, false, yi, &mut trail, &mut on_path, &neighbors, &mut paths);
            }
        }
        paths.sort();
        Ok(paths)
    }

    #[allow(clippy::too_many_arguments)]
    fn backdoor_dfs(
        &self,
        v: usize,
        arrived_into: bool,
        target: usize,
        trail: &mut Vec<usize>,
        on_path: &mut [bool],
        neighbors: &[Vec<(usize, bool)>],
        out: &mut Vec<BackdoorPath>,
    ) {
        trail.push(v);
        on_path[v] = true;
        if v == target {
            out.push(BackdoorPath(
                trail.iter().map(|&i| self.nodes[i].clone()).collect(),
            ));
        } else {
            for &(next, into_next) in &neighbors[v] {
                if on_path[next] {
                    continue;
                }
                // prev -> v <- next is a collider at v and blocks the
                // path under the empty conditioning set.
                let collider_at_v = arrived_into && !into_next;
                if collider_at_v {
                    continue;
                }
                self.backdoor_dfs(next, into_next, target, trail, on_path, neighbors, out);
            }
        }
        on_path[v] = false;
        trail.pop();
    }

    /// Nodes that both `x` and `y` point at through directed edges,
    /// sorted by name.
    pub fn v_structure_colliders(&self, x: &str, y: &str) -> Result<Vec<String>> {
        let xi = self.node_index(x)?;
        let yi = self.node_index(y)?;
        if xi == yi {
            return Err(Error::SameVariable { name: x.to_string() });
        }
        let mut out: Vec<String> = (0..self.nodes.len())
            .filter(|&k| self.directed.contains(&(xi, k)) && self.directed.contains(&(yi, k)))
            .map(|k| self.nodes[k].clone())
            .collect();
        out.sort();
        Ok(out)
    }

    /// Unshielded collider triples (parent, parent, child) with the
    /// parent pair normalized by index order.
    pub(crate) fn vstruct_set(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut set = BTreeSet::new();
        for k in 0..self.nodes.len() {
            let parents = self.parents_idx(k);
            for (ai, &a) in parents.iter().enumerate() {
                for &b in &parents[ai + 1..] {
                    if !self.adjacent_idx(a, b) {
                        set.insert((a.min(b), a.max(b), k));
                    }
                }
            }
        }
        set
    }

    /// Unshielded collider triples by name, parent pair sorted.
    pub fn v_structure_triples(&self) -> Vec<(String, String, String)> {
        let mut out: Vec<(String, String, String)> = self
            .vstruct_set()
            .into_iter()
            .map(|(a, b, k)| {
                let (p, q) = if self.nodes[a] <= self.nodes[b] {
                    (self.nodes[a].clone(), self.nodes[b].clone())
                } else {
                    (self.nodes[b].clone(), self.nodes[a].clone())
                };
                (p, q, self.nodes[k].clone())
            })
            .collect();
        out.sort();
        out
    }

    /// Skeleton as sorted name pairs.
    pub fn skeleton_edges(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .directed
            .iter()
            .map(|&(f, t)| (f, t))
            .chain(self.undirected.iter().copied())
            .map(|(i, j)| {
                let (a, b) = (&self.nodes[i], &self.nodes[j]);
                if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                }
            })
            .collect();
        out.sort();
        out
    }

    /// Every acyclic orientation of the undirected edges that keeps all
    /// existing directed edges and introduces no new unshielded
    /// collider. Search stops after `cap` results and reports
    /// truncation. Errors when no consistent extension exists.
    pub fn enumerate_dag_extensions(&self, cap: usize) -> Result<Extensions> {
        let cap = cap.max(1);
        if self.undirected.is_empty() {
            return Ok(Extensions {
                graphs: vec![self.clone()],
                truncated: false,
            });
        }
        let pending: Vec<(usize, usize)> = self.undirected.iter().copied().collect();
        let base_vstructs = self.vstruct_set();
        let mut chosen: BTreeSet<(usize, usize)> = self.directed.clone();
        let mut graphs = Vec::new();
        self.extend_orientations(
            &pending,
            0,
            &base_vstructs,
            &mut chosen,
            &mut graphs,
            cap + 1,
        );
        let truncated = graphs.len() > cap;
        graphs.truncate(cap);
        if graphs.is_empty() {
            return Err(Error::NoConsistentExtension);
        }
        Ok(Extensions { graphs, truncated })
    }

    fn extend_orientations(
        &self,
        pending: &[(usize, usize)],
        k: usize,
        base_vstructs: &BTreeSet<(usize, usize, usize)>,
        chosen: &mut BTreeSet<(usize, usize)>,
        out: &mut Vec<CausalGraph>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if k == pending.len() {
            out.push(CausalGraph {
                nodes: self.nodes.clone(),
                index: self.index.clone(),
                directed: chosen.clone(),
                undirected: BTreeSet::new(),
            });
            return;
        }
        let (u, v) = pending[k];
        for (f, t) in [(u, v), (v, u)] {
            if Self::set_reaches(chosen, t, f, self.nodes.len()) {
                continue;
            }
            // New unshielded collider at t would leave the declared
            // equivalence class.
            let mut bad = false;
            for &(c, t2) in chosen.iter() {
                if t2 == t && c != f && !self.adjacent_idx(c, f) {
                    let key = (c.min(f), c.max(f), t);
                    if !base_vstructs.contains(&key) {
                        bad = true;
                        break;
                    }
                }
            }
            if bad {
                continue;
            }
            chosen.insert((f, t));
            self.extend_orientations(pending, k + 1, base_vstructs, chosen, out, limit);
            chosen.remove(&(f, t));
        }
    }

    fn set_reaches(edges: &BTreeSet<(usize, usize)>, from: usize, to: usize, n: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            for &(f, t) in edges.iter() {
                if f == v && !seen[t] {
                    if t == to {
                        return true;
                    }
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        false
    }

    /// Equivalence-class pattern of a fully directed DAG: unshielded
    /// colliders stay directed, every orientation they force transits
    /// through the closure rules, the rest becomes undirected.
    pub fn cpdag_of_dag(&self) -> Result<CausalGraph> {
        self.require_fully_directed()?;
        let mut pattern = CausalGraph {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            directed: BTreeSet::new(),
            undirected: self
                .directed
                .iter()
                .map(|&(f, t)| (f.min(t), f.max(t)))
                .collect(),
        };
        for (a, b, k) in self.vstruct_set() {
            pattern.orient_checked(a, k);
            pattern.orient_checked(b, k);
        }
        pattern.meek_closure();
        Ok(pattern)
    }

    /// Turns the undirected edge (from, to) into from -> to unless that
    /// would close a directed cycle. Returns whether the edge ended up
    /// directed as requested.
    pub(crate) fn orient_checked(&mut self, from: usize, to: usize) -> bool {
        if self.directed.contains(&(from, to)) {
            return true;
        }
        let key = (from.min(to), from.max(to));
        if !self.undirected.contains(&key) {
            return false;
        }
        if self.directed_reaches(to, from) {
            log::warn!(
                "skipping orientation {} -> {}: would close a directed cycle",
                self.nodes[from],
                self.nodes[to]
            );
            return false;
        }
        self.undirected.remove(&key);
        self.directed.insert((from, to));
        true
    }

    /// Closure under the four orientation propagation rules. Runs to a
    /// fixpoint; every single orientation is cycle-checked so malformed
    /// inputs degrade to fewer orientations instead of invariant
    /// violations.
    pub(crate) fn meek_closure(&mut self) {
        loop {
            let mut changed = false;

            // R1: a -> b - c with a,c non-adjacent orients b -> c.
            let directed_snapshot: Vec<(usize, usize)> = self.directed.iter().copied().collect();
            for (a, b) in directed_snapshot {
                for c in self.undirected_neighbors_idx(b) {
                    if c != a && !self.adjacent_idx(a, c) {
                        changed |= self.orient_checked(b, c);
                    }
                }
            }

            // R2: a -> w -> b with a - b orients a -> b.
            let undirected_snapshot: Vec<(usize, usize)> =
                self.undirected.iter().copied().collect();
            for (u, v) in undirected_snapshot {
                for (a, b) in [(u, v), (v, u)] {
                    let chain = (0..self.nodes.len()).any(|w| {
                        self.directed.contains(&(a, w)) && self.directed.contains(&(w, b))
                    });
                    if chain {
                        changed |= self.orient_checked(a, b);
                    }
                }
            }

            // R3: a - b with two non-adjacent c,d where a - c -> b and
            // a - d -> b orients a -> b.
            let undirected_snapshot: Vec<(usize, usize)> =
                self.undirected.iter().copied().collect();
            for (u, v) in undirected_snapshot {
                for (a, b) in [(u, v), (v, u)] {
                    let into_b: Vec<usize> = self
                        .undirected_neighbors_idx(a)
                        .into_iter()
                        .filter(|&c| self.directed.contains(&(c, b)))
                        .collect();
                    let found = into_b.iter().enumerate().any(|(i, &c)| {
                        into_b[i + 1..].iter().any(|&d| !self.adjacent_idx(c, d))
                    });
                    if found {
                        changed |= self.orient_checked(a, b);
                    }
                }
            }

            // R4: a - b with a chain a - k -> l -> b and k,b
            // non-adjacent orients a -> b.
            let undirected_snapshot: Vec<(usize, usize)> =
                self.undirected.iter().copied().collect();
            for (u, v) in undirected_snapshot {
                for (a, b) in [(u, v), (v, u)] {
                    let found = self.undirected_neighbors_idx(a).into_iter().any(|k| {
                        !self.adjacent_idx(k, b)
                            && (0..self.nodes.len()).any(|l| {
                                self.directed.contains(&(k, l)) && self.directed.contains(&(l, b))
                            })
                    });
                    if found {
                        changed |= self.orient_checked(a, b);
                    }
                }
            }

            if !changed {
                break;
            }
        }
    }

    fn doc(&self) -> GraphDoc {
        GraphDoc {
            nodes: self.nodes.clone(),
            edges: self
                .directed
                .iter()
                .map(|&(f, t)| EdgeDoc {
                    from: self.nodes[f].clone(),
                    to: self.nodes[t].clone(),
                    kind: "directed".into(),
                })
                .chain(self.undirected.iter().map(|&(i, j)| EdgeDoc {
                    from: self.nodes[i].clone(),
                    to: self.nodes[j].clone(),
                    kind: "undirected".into(),
                }))
                .collect(),
        }
    }

    fn from_doc(doc: GraphDoc) -> Result<CausalGraph> {
        let mut g = CausalGraph::new(doc.nodes)?;
        for edge in doc.edges {
            match edge.kind.as_str() {
                "directed" => g.add_directed_edge(&edge.from, &edge.to)?,
                "undirected" => g.add_undirected_edge(&edge.from, &edge.to)?,
                other => {
                    return Err(Error::GraphParse {
                        detail: format!("unknown edge kind '{other}'"),
                    })
                }
            }
        }
        Ok(g)
    }

    /// Canonical JSON document: node list plus edge list with explicit
    /// kinds. Output is deterministic, so serialize/parse round-trips
    /// are byte-exact.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.doc()).expect("graph doc serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<CausalGraph> {
        let doc: GraphDoc = serde_json::from_str(text).map_err(|e| Error::GraphParse {
            detail: e.to_string(),
        })?;
        CausalGraph::from_doc(doc)
    }

    /// Copy with nodes renamed through `map`; names without an entry
    /// are kept. The renamed node set must still be collision-free.
    pub fn renamed(&self, map: &std::collections::BTreeMap<String, String>) -> Result<CausalGraph> {
        let rename = |n: &String| map.get(n).unwrap_or(n).clone();
        let mut g = CausalGraph::new(self.nodes.iter().map(rename).collect())?;
        for &(f, t) in &self.directed {
            g.add_directed_edge(&rename(&self.nodes[f]), &rename(&self.nodes[t]))?;
        }
        for &(i, j) in &self.undirected {
            g.add_undirected_edge(&rename(&self.nodes[i]), &rename(&self.nodes[j]))?;
        }
        Ok(g)
    }

    fn name_pair(&self, i: usize, j: usize) -> (String, String) {
        let (a, b) = (&self.nodes[i], &self.nodes[j]);
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    }

    fn directed_name_set(&self) -> BTreeSet<(String, String)> {
        self.directed
            .iter()
            .map(|&(f, t)| (self.nodes[f].clone(), self.nodes[t].clone()))
            .collect()
    }

    fn undirected_name_set(&self) -> BTreeSet<(String, String)> {
        self.undirected
            .iter()
            .map(|&(i, j)| self.name_pair(i, j))
            .collect()
    }
}

impl Serialize for CausalGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.doc().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CausalGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = GraphDoc::deserialize(deserializer)?;
        CausalGraph::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

/// Structural equality by name: same node set and same edge sets,
/// regardless of node storage order.
impl PartialEq for CausalGraph {
    fn eq(&self, other: &Self) -> bool {
        let a: BTreeSet<&str> = self.nodes.iter().map(String::as_str).collect();
        let b: BTreeSet<&str> = other.nodes.iter().map(String::as_str).collect();
        a == b
            && self.directed_name_set() == other.directed_name_set()
            && self.undirected_name_set() == other.undirected_name_set()
    }
}

impl Eq for CausalGraph {}

impl fmt::Display for CausalGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .directed
            .iter()
            .map(|&(a, b)| format!("{} -> {}", self.nodes[a], self.nodes[b]))
            .collect();
        parts.extend(
            self.undirected
                .iter()
                .map(|&(a, b)| format!("{} - {}", self.nodes[a], self.nodes[b])),
        );
        write!(f, "[{}] {}", self.nodes.join(", "), parts.join("; "))
    }
}

/// Structural Hamming distance: per node pair, one unit for any
/// disagreement in presence, orientation, or kind. Both graphs must
/// cover the same node set.
pub fn shd(a: &CausalGraph, b: &CausalGraph) -> Result<usize> {
    let names_a: BTreeSet<&str> = a.nodes.iter().map(String::as_str).collect();
    let names_b: BTreeSet<&str> = b.nodes.iter().map(String::as_str).collect();
    if names_a != names_b {
        let missing = names_a
            .symmetric_difference(&names_b)
            .next()
            .unwrap_or(&"?");
        return Err(Error::UnknownVariable {
            name: missing.to_string(),
        });
    }

    // 0 none, 1 undirected, 2 forward (p->q), 3 backward, relative to
    // the name-sorted pair (p, q).
    fn state(g: &CausalGraph, p: &str, q: &str) -> u8 {
        let i = g.node_index(p).expect("checked");
        let j = g.node_index(q).expect("checked");
        if g.undirected.contains(&(i.min(j), i.max(j))) {
            1
        } else if g.directed.contains(&(i, j)) {
            2
        } else if g.directed.contains(&(j, i)) {
            3
        } else {
            0
        }
    }

    let names: Vec<&str> = names_a.into_iter().collect();
    let mut dist = 0;
    for (i, p) in names.iter().enumerate() {
        for q in &names[i + 1..] {
            if state(a, p, q) != state(b, p, q) {
                dist += 1;
            }
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> CausalGraph {
        CausalGraph::from_edges(&["x", "m", "y"], &[("x", "m"), ("m", "y")], &[]).unwrap()
    }

    fn collider() -> CausalGraph {
        CausalGraph::from_edges(&["x", "k", "y"], &[("x", "k"), ("y", "k")], &[]).unwrap()
    }

    #[test]
    fn construction_rejects_invalid_edges() {
        assert!(matches!(
            CausalGraph::from_edges(&["a"], &[("a", "a")], &[]),
            Err(Error::SelfLoop { .. })
        ));
        assert!(matches!(
            CausalGraph::new(vec!["a".into(), "a".into()]),
            Err(Error::DuplicateNode { .. })
        ));
        assert!(matches!(
            CausalGraph::from_edges(&["a", "b"], &[("a", "b")], &[("a", "b")]),
            Err(Error::EdgeConflict { .. })
        ));
        assert!(matches!(
            CausalGraph::from_edges(&["a", "b", "c"], &[("a", "b"), ("b", "c"), ("c", "a")], &[]),
            Err(Error::DirectedCycle)
        ));
        assert!(matches!(
            CausalGraph::from_edges(&["a"], &[("a", "b")], &[]),
            Err(Error::UnknownVariable { .. })
        ));
    }

    #[test]
    fn d_separation_on_chain_and_collider() {
        let g = chain();
        assert!(g.d_separated("x", "y", &["m"]).unwrap());
        assert!(!g.d_separated("x", "y", &[] as &[&str]).unwrap());

        let g = collider();
        assert!(g.d_separated("x", "y", &[] as &[&str]).unwrap());
        assert!(!g.d_separated("x", "y", &["k"]).unwrap());
    }

    #[test]
    fn conditioning_on_collider_descendant_opens_path() {
        let g = CausalGraph::from_edges(
            &["x", "k", "y", "d"],
            &[("x", "k"), ("y", "k"), ("k", "d")],
            &[],
        )
        .unwrap();
        assert!(g.d_separated("x", "y", &[] as &[&str]).unwrap());
        assert!(!g.d_separated("x", "y", &["d"]).unwrap());
    }

    #[test]
    fn d_separation_requires_fully_directed() {
        let g = CausalGraph::from_edges(&["a", "b"], &[], &[("a", "b")]).unwrap();
        assert!(matches!(
            g.d_separated("a", "b", &[] as &[&str]),
            Err(Error::NotFullyDirected { .. })
        ));
    }

    #[test]
    fn backdoor_path_through_confounder() {
        let g = CausalGraph::from_edges(
            &["x", "z", "y"],
            &[("z", "x"), ("z", "y"), ("x", "y")],
            &[],
        )
        .unwrap();
        let paths = g.find_backdoor_paths("x", "y").unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].0, ["x", "z", "y"]);
    }

    #[test]
    fn direct_edge_is_not_a_backdoor_path() {
        let g = CausalGraph::from_edges(&["x", "y"], &[("x", "y")], &[]).unwrap();
        assert!(g.find_backdoor_paths("x", "y").unwrap().is_empty());
    }

    #[test]
    fn collider_blocks_backdoor_path() {
        // x <- a -> k <- b -> y : the only candidate path has a
        // collider at k, so nothing comes back.
        let g = CausalGraph::from_edges(
            &["x", "a", "k", "b", "y"],
            &[("a", "x"), ("a", "k"), ("b", "k"), ("b", "y")],
            &[],
        )
        .unwrap();
        assert!(g.find_backdoor_paths("x", "y").unwrap().is_empty());
    }

    #[test]
    fn v_structure_collider_lookup() {
        let g = collider();
        assert_eq!(g.v_structure_colliders("x", "y").unwrap(), ["k"]);
        let g = chain();
        assert!(g.v_structure_colliders("x", "y").unwrap().is_empty());
    }

    #[test]
    fn shared_children_are_sorted() {
        let g = CausalGraph::from_edges(
            &["x", "y", "q", "p"],
            &[("x", "q"), ("y", "q"), ("x", "p"), ("y", "p")],
            &[],
        )
        .unwrap();
        assert_eq!(g.v_structure_colliders("x", "y").unwrap(), ["p", "q"]);
    }

    #[test]
    fn extensions_of_dag_is_itself() {
        let g = chain();
        let ext = g.enumerate_dag_extensions(16).unwrap();
        assert_eq!(ext.graphs.len(), 1);
        assert!(!ext.truncated);
        assert_eq!(ext.graphs[0], g);
    }

    #[test]
    fn chain_pattern_has_three_extensions() {
        // a - b - c admits every orientation except the new collider
        // a -> b <- c.
        let g = CausalGraph::from_edges(&["a", "b", "c"], &[], &[("a", "b"), ("b", "c")]).unwrap();
        let ext = g.enumerate_dag_extensions(16).unwrap();
        assert_eq!(ext.graphs.len(), 3);
        for d in &ext.graphs {
            assert!(d.is_fully_directed());
            assert!(d.v_structure_triples().is_empty());
        }
    }

    #[test]
    fn partially_directed_respects_existing_collider() {
        // a -> c with b - c and a,b non-adjacent: only c -> b avoids a
        // new unshielded collider.
        let g = CausalGraph::from_edges(&["a", "b", "c"], &[("a", "c")], &[("b", "c")]).unwrap();
        let ext = g.enumerate_dag_extensions(16).unwrap();
        assert_eq!(ext.graphs.len(), 1);
        assert!(ext.graphs[0].has_directed("c", "b").unwrap());
    }

    #[test]
    fn complete_undirected_graph_truncates_at_cap() {
        let nodes = ["a", "b", "c", "d"];
        let mut und = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                und.push((nodes[i], nodes[j]));
            }
        }
        let g = CausalGraph::from_edges(&nodes, &[], &und).unwrap();
        // Acyclic orientations of K4 with everything shielded: 4! = 24.
        let full = g.enumerate_dag_extensions(50).unwrap();
        assert_eq!(full.graphs.len(), 24);
        assert!(!full.truncated);
        let capped = g.enumerate_dag_extensions(10).unwrap();
        assert_eq!(capped.graphs.len(), 10);
        assert!(capped.truncated);
        let exact = g.enumerate_dag_extensions(24).unwrap();
        assert_eq!(exact.graphs.len(), 24);
        assert!(!exact.truncated);
    }

    #[test]
    fn inconsistent_pattern_has_no_extension() {
        // c -> a, d -> b, a - b: either orientation of a - b creates a
        // new unshielded collider.
        let g = CausalGraph::from_edges(
            &["a", "b", "c", "d"],
            &[("c", "a"), ("d", "b")],
            &[("a", "b")],
        )
        .unwrap();
        assert!(matches!(
            g.enumerate_dag_extensions(16),
            Err(Error::NoConsistentExtension)
        ));
    }

    #[test]
    fn cpdag_of_chain_is_undirected() {
        let cp = chain().cpdag_of_dag().unwrap();
        assert_eq!(cp.directed_edge_count(), 0);
        assert_eq!(cp.undirected_edge_count(), 2);
    }

    #[test]
    fn cpdag_of_collider_keeps_orientation() {
        let cp = collider().cpdag_of_dag().unwrap();
        assert!(cp.has_directed("x", "k").unwrap());
        assert!(cp.has_directed("y", "k").unwrap());
        assert_eq!(cp.undirected_edge_count(), 0);
    }

    #[test]
    fn cpdag_propagates_compelled_edge() {
        // a -> b <- c plus b -> d: the collider forces b -> d through
        // rule 1, so the whole pattern is compelled.
        let g = CausalGraph::from_edges(
            &["a", "b", "c", "d"],
            &[("a", "b"), ("c", "b"), ("b", "d")],
            &[],
        )
        .unwrap();
        let cp = g.cpdag_of_dag().unwrap();
        assert!(cp.has_directed("b", "d").unwrap());
        assert_eq!(cp.undirected_edge_count(), 0);
    }

    #[test]
    fn dag_is_inside_its_own_cpdag_extension_set() {
        let g = CausalGraph::from_edges(
            &["a", "b", "c", "d"],
            &[("a", "b"), ("c", "b"), ("b", "d"), ("a", "d")],
            &[],
        )
        .unwrap();
        let cp = g.cpdag_of_dag().unwrap();
        let ext = cp.enumerate_dag_extensions(DEFAULT_EXTENSION_CAP).unwrap();
        assert!(ext.graphs.iter().any(|d| *d == g));
    }

    #[test]
    fn json_round_trip_is_byte_exact() {
        let g = CausalGraph::from_edges(
            &["alpha", "beta", "gamma"],
            &[("alpha", "beta")],
            &[("beta", "gamma")],
        )
        .unwrap();
        let text = g.to_json();
        let back = CausalGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn json_parse_rejects_malformed_documents() {
        assert!(matches!(
            CausalGraph::from_json("{"),
            Err(Error::GraphParse { .. })
        ));
        let bad_kind = r#"{"nodes":["a","b"],"edges":[{"from":"a","to":"b","kind":"wavy"}]}"#;
        assert!(matches!(
            CausalGraph::from_json(bad_kind),
            Err(Error::GraphParse { .. })
        ));
        let bad_node = r#"{"nodes":["a"],"edges":[{"from":"a","to":"b","kind":"directed"}]}"#;
        assert!(matches!(
            CausalGraph::from_json(bad_node),
            Err(Error::UnknownVariable { .. })
        ));
    }

    #[test]
    fn shd_counts_every_kind_of_disagreement() {
        let a = CausalGraph::from_edges(&["x", "y", "z"], &[("x", "y"), ("y", "z")], &[]).unwrap();
        assert_eq!(shd(&a, &a).unwrap(), 0);
        let reversed =
            CausalGraph::from_edges(&["x", "y", "z"], &[("y", "x"), ("y", "z")], &[]).unwrap();
        assert_eq!(shd(&a, &reversed).unwrap(), 1);
        let missing = CausalGraph::from_edges(&["x", "y", "z"], &[("x", "y")], &[]).unwrap();
        assert_eq!(shd(&a, &missing).unwrap(), 1);
        let undirected =
            CausalGraph::from_edges(&["x", "y", "z"], &[("x", "y")], &[("y", "z")]).unwrap();
        assert_eq!(shd(&a, &undirected).unwrap(), 1);
        let other_nodes = CausalGraph::from_edges(&["x", "y", "w"], &[], &[]).unwrap();
        assert!(shd(&a, &other_nodes).is_err());
    }

    #[test]
    fn equality_ignores_node_order() {
        let a = CausalGraph::from_edges(&["x", "y"], &[("x", "y")], &[]).unwrap();
        let b = CausalGraph::from_edges(&["y", "x"], &[("x", "y")], &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn d_separation_is_symmetric_on_a_dense_example() {
        let g = CausalGraph::from_edges(
            &["a", "b", "c", "d", "e"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"), ("d", "e")],
            &[],
        )
        .unwrap();
        let nodes = ["a", "b", "c", "d", "e"];
        for x in nodes {
            for y in nodes {
                if x >= y {
                    continue;
                }
                for z in nodes {
                    if z == x || z == y {
                        continue;
                    }
                    assert_eq!(
                        g.d_separated(x, y, &[z]).unwrap(),
                        g.d_separated(y, x, &[z]).unwrap()
                    );
                }
            }
        }
    }
}
