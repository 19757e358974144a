//! Constraint-based structure discovery (stable PC).
//!
//! Skeleton search starts from the complete graph and removes an edge
//! as soon as some conditioning set renders its endpoints independent,
//! growing the conditioning size level by level. Adjacency sets are
//! snapshotted per level, so removals within a level cannot influence
//! the candidate subsets of later pairs. Non-adjacent pairs keep their
//! separating set; unshielded triples whose middle node is absent from
//! it become colliders, and the orientation closure rules propagate
//! the rest. Conflicting collider demands leave the edge undirected
//! with a logged warning. An independence query that cannot be
//! evaluated counts as dependent, keeping the edge.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::tabular::{correlation_matrix, DataTable};

/// Separating sets recorded during skeleton search, keyed by the
/// name-sorted node pair.
#[derive(Debug, Clone, Default)]
pub struct SepSetMap {
    inner: HashMap<(String, String), Vec<String>>,
}

impl SepSetMap {
    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    fn insert(&mut self, a: &str, b: &str, set: Vec<String>) {
        self.inner.insert(Self::key(a, b), set);
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&[String]> {
        self.inner.get(&Self::key(a, b)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PcResult {
    pub graph: CausalGraph,
    pub sepsets: SepSetMap,
}

/// Lexicographic k-subsets of `pool` (which is already sorted).
fn subsets_of_size(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > pool.len() {
        return out;
    }
    let mut current = Vec::with_capacity(k);
    fn rec(pool: &[usize], k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        let remaining = k - current.len();
        for i in start..=pool.len().saturating_sub(remaining) {
            current.push(pool[i]);
            rec(pool, k, i + 1, current, out);
            current.pop();
        }
    }
    rec(pool, k, 0, &mut current, &mut out);
    out
}

/// PC driven by an arbitrary independence oracle over node names.
/// The oracle answers "is x independent of y given z". Data-backed
/// callers wrap their statistical test; ground-truth callers wrap
/// d-separation on a known DAG.
pub fn run_pc_with_oracle<F>(nodes: &[String], mut independent: F) -> Result<PcResult>
where
    F: FnMut(&str, &str, &[String]) -> Result<bool>,
{
    let n = nodes.len();
    if n < 2 {
        return Err(Error::OutOfRange {
            what: "node set",
            detail: format!("discovery needs at least 2 nodes, got {n}"),
        });
    }
    {
        let mut seen = BTreeSet::new();
        for name in nodes {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateNode { name: name.clone() });
            }
        }
    }

    // Skeleton phase over index adjacency sets.
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).collect())
        .collect();
    let mut sepsets = SepSetMap::default();

    let mut level = 0usize;
    loop {
        let snapshot = adj.clone();
        let any_candidate = (0..n).any(|i| {
            snapshot[i]
                .iter()
                .any(|&j| snapshot[i].len() > level || snapshot[j].len() > level)
        });
        if !any_candidate {
            break;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !adj[i].contains(&j) {
                    continue;
                }
                let mut removed = false;
                for (anchor, other) in [(i, j), (j, i)] {
                    if removed {
                        break;
                    }
                    let pool: Vec<usize> = snapshot[anchor]
                        .iter()
                        .copied()
                        .filter(|&k| k != other)
                        .collect();
                    for subset in subsets_of_size(&pool, level) {
                        let z: Vec<String> =
                            subset.iter().map(|&k| nodes[k].clone()).collect();
                        if independent(&nodes[i], &nodes[j], &z)? {
                            adj[i].remove(&j);
                            adj[j].remove(&i);
                            sepsets.insert(&nodes[i], &nodes[j], z);
                            removed = true;
                            break;
                        }
                    }
                }
            }
        }
        level += 1;
        if level > n.saturating_sub(2) {
            break;
        }
    }

    // Orientation phase: collider demands from separating sets.
    let mut graph = CausalGraph::new(nodes.to_vec())?;
    for i in 0..n {
        for &j in adj[i].iter().filter(|&&j| j > i) {
            graph.add_undirected_edge(&nodes[i], &nodes[j])?;
        }
    }
    let mut demands: BTreeSet<(usize, usize)> = BTreeSet::new();
    for k in 0..n {
        let neighbors: Vec<usize> = adj[k].iter().copied().collect();
        for (a_pos, &i) in neighbors.iter().enumerate() {
            for &j in &neighbors[a_pos + 1..] {
                if adj[i].contains(&j) {
                    continue;
                }
                if let Some(sep) = sepsets.get(&nodes[i], &nodes[j]) {
                    if !sep.contains(&nodes[k]) {
                        demands.insert((i, k));
                        demands.insert((j, k));
                    }
                }
            }
        }
    }
    for &(a, b) in &demands {
        if demands.contains(&(b, a)) {
            if a < b {
                log::warn!(
                    "conflicting collider orientations for {} and {}; leaving the edge undirected",
                    nodes[a],
                    nodes[b]
                );
            }
            continue;
        }
        graph.orient_checked(a, b);
    }
    graph.meek_closure();

    Ok(PcResult { graph, sepsets })
}

/// Runs PC on a table with the Fisher-Z test at significance `alpha`.
/// The correlation matrix is computed once up front. Tests that cannot
/// run (too few rows for the conditioning size, singular submatrix)
/// count as dependent.
pub fn run_pc(table: &DataTable, alpha: f64) -> Result<PcResult> {
    let corr = correlation_matrix(table)?;
    let n_samples = table.n_rows();
    let nodes = table.columns().to_vec();
    run_pc_with_oracle(&nodes, |x, y, z| {
        match crate::ci::fisher_z_from_corr(&corr, n_samples, x, y, z, alpha) {
            Ok(res) => Ok(res.independent),
            Err(Error::InsufficientRows { .. }) | Err(Error::SingularMatrix { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    })
}

/// Runs PC on a column subset, in the order given.
pub fn run_pc_partial(table: &DataTable, columns: &[String], alpha: f64) -> Result<PcResult> {
    if columns.len() < 2 {
        return Err(Error::OutOfRange {
            what: "variable subset",
            detail: format!(
                "partial discovery needs at least 2 variables, got {}",
                columns.len()
            ),
        });
    }
    run_pc(&table.select(columns)?, alpha)
}

/// Equivalence-class pattern entailed by d-separation on `dag`,
/// restricted to `subset`: PC under a perfect independence oracle.
/// With the full node set this reproduces `cpdag_of_dag`.
pub fn cpdag_from_dsep(dag: &CausalGraph, subset: &[String]) -> Result<CausalGraph> {
    for name in subset {
        dag.node_index(name)?;
    }
    Ok(run_pc_with_oracle(subset, |x, y, z| dag.d_separated(x, y, z))?.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn draw(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn linear_table(seed: u64, n: usize) -> (DataTable, DataTable) {
        // collider: x -> k <- y ; chain: x -> m -> y
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = draw(&mut rng, n);
        let y = draw(&mut rng, n);
        let nk = draw(&mut rng, n);
        let k: Vec<f64> = (0..n).map(|i| x[i] + y[i] + 0.5 * nk[i]).collect();
        let collider = DataTable::from_columns(
            "collider",
            vec!["x".into(), "k".into(), "y".into()],
            vec![x.clone(), k, y.clone()],
        )
        .unwrap();

        let nm = draw(&mut rng, n);
        let ny = draw(&mut rng, n);
        let m: Vec<f64> = (0..n).map(|i| x[i] + 0.6 * nm[i]).collect();
        let y2: Vec<f64> = (0..n).map(|i| m[i] + 0.6 * ny[i]).collect();
        let chain = DataTable::from_columns(
            "chain",
            vec!["x".into(), "m".into(), "y".into()],
            vec![x.clone(), m, y2],
        )
        .unwrap();
        (collider, chain)
    }

    #[test]
    fn recovers_collider_from_data() {
        let (collider, _) = linear_table(5, 3000);
        let result = run_pc(&collider, 0.05).unwrap();
        let expected =
            CausalGraph::from_edges(&["x", "k", "y"], &[("x", "k"), ("y", "k")], &[]).unwrap();
        assert_eq!(result.graph, expected, "got {}", result.graph);
        assert_eq!(result.sepsets.get("x", "y").unwrap(), &[] as &[String]);
    }

    #[test]
    fn recovers_chain_pattern_from_data() {
        let (_, chain) = linear_table(9, 3000);
        let result = run_pc(&chain, 0.05).unwrap();
        let expected =
            CausalGraph::from_edges(&["x", "m", "y"], &[], &[("x", "m"), ("m", "y")]).unwrap();
        assert_eq!(result.graph, expected, "got {}", result.graph);
        assert_eq!(result.sepsets.get("x", "y").unwrap(), ["m".to_string()]);
    }

    #[test]
    fn partial_projection_keeps_marginal_dependence() {
        let (_, chain) = linear_table(21, 3000);
        let result = run_pc_partial(&chain, &["x".into(), "y".into()], 0.05).unwrap();
        let expected = CausalGraph::from_edges(&["x", "y"], &[], &[("x", "y")]).unwrap();
        assert_eq!(result.graph, expected);
        assert!(matches!(
            run_pc_partial(&chain, &["x".into()], 0.05),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn oracle_pc_agrees_with_dag_pattern() {
        let dags = [
            CausalGraph::from_edges(&["a", "b", "c"], &[("a", "b"), ("b", "c")], &[]).unwrap(),
            CausalGraph::from_edges(&["a", "b", "c"], &[("a", "c"), ("b", "c")], &[]).unwrap(),
            CausalGraph::from_edges(
                &["a", "b", "c", "d"],
                &[("a", "b"), ("c", "b"), ("b", "d")],
                &[],
            )
            .unwrap(),
            CausalGraph::from_edges(
                &["a", "b", "c", "d", "e"],
                &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"), ("d", "e")],
                &[],
            )
            .unwrap(),
        ];
        for dag in &dags {
            let names: Vec<String> = dag.nodes().to_vec();
            let from_oracle = cpdag_from_dsep(dag, &names).unwrap();
            let direct = dag.cpdag_of_dag().unwrap();
            assert_eq!(from_oracle, direct, "disagreement on {dag}");
        }
    }

    #[test]
    fn untestable_queries_keep_edges() {
        // Four rows: every level-1 test lacks degrees of freedom and
        // must count as dependent instead of erroring out.
        let t = DataTable::from_columns(
            "tiny",
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![1.0, 2.0, 3.5, 4.0],
                vec![2.0, 1.5, 4.0, 3.0],
                vec![0.5, 2.5, 1.0, 3.0],
            ],
        )
        .unwrap();
        let result = run_pc(&t, 0.05);
        assert!(result.is_ok(), "{result:?}");
    }

    #[test]
    fn output_is_deterministic() {
        let (collider, _) = linear_table(33, 1500);
        let a = run_pc(&collider, 0.05).unwrap().graph.to_json();
        let b = run_pc(&collider, 0.05).unwrap().graph.to_json();
        assert_eq!(a, b);
    }
}
