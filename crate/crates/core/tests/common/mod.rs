//! Independent oracles for the acceptance suite.
//!
//! Every function here re-derives ground truth by a different route
//! than the library under test: d-separation by moralization, edge
//! relations by raw scans over edge lists, equivalence classes by
//! filtering orientations, partial correlation by explicit residual
//! regressions, and treatment effects by simulating hand-rolled
//! generative processes under intervention.

use causal_agent::graph::CausalGraph;
use causal_agent::tabular::DataTable;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Directed graph as raw index edges; nodes are 0..n.
pub type EdgeList = Vec<(usize, usize)>;

/// Library graph over v1..vn built from an index edge list.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> CausalGraph {
    let names: Vec<String> = (1..=n).map(|i| format!("v{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let named: Vec<(&str, &str)> = edges.iter().map(|&(f, t)| (refs[f], refs[t])).collect();
    CausalGraph::from_edges(&refs, &named, &[]).expect("oracle edge list is a simple digraph")
}

/// Every DAG on n labeled nodes: each unordered pair is absent,
/// forward, or backward, and cyclic assignments are discarded.
pub fn all_dags(n: usize) -> Vec<EdgeList> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut out = Vec::new();
    let mut assignment = vec![0u8; pairs.len()];
    loop {
        let edges: EdgeList = pairs
            .iter()
            .zip(&assignment)
            .filter_map(|(&(i, j), &state)| match state {
                1 => Some((i, j)),
                2 => Some((j, i)),
                _ => None,
            })
            .collect();
        if is_acyclic(n, &edges) {
            out.push(edges);
        }
        // Odometer over base-3 digits.
        let mut k = 0;
        loop {
            if k == assignment.len() {
                return out;
            }
            assignment[k] += 1;
            if assignment[k] < 3 {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
    }
}

pub fn is_acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
    // Kahn peeling; leftovers mean a cycle.
    let mut indegree = vec![0usize; n];
    for &(_, t) in edges {
        indegree[t] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &(f, t) in edges {
            if f == v {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push(t);
                }
            }
        }
    }
    seen == n
}

/// d-separation by moralization: restrict to the ancestral set of the
/// query, marry co-parents, drop the conditioning nodes, and test
/// undirected reachability.
pub fn moral_d_separated(n: usize, edges: &[(usize, usize)], x: usize, y: usize, z: &[usize]) -> bool {
    let mut in_query = vec![false; n];
    in_query[x] = true;
    in_query[y] = true;
    for &v in z {
        in_query[v] = true;
    }
    // Ancestral closure by repeated parent sweeps.
    let mut ancestral = in_query.clone();
    loop {
        let mut grew = false;
        for &(f, t) in edges {
            if ancestral[t] && !ancestral[f] {
                ancestral[f] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let mut adjacency = vec![vec![false; n]; n];
    let mut connect = |a: usize, b: usize| {
        adjacency[a][b] = true;
        adjacency[b][a] = true;
    };
    for &(f, t) in edges {
        if ancestral[f] && ancestral[t] {
            connect(f, t);
        }
    }
    for k in 0..n {
        if !ancestral[k] {
            continue;
        }
        let parents: Vec<usize> = edges
            .iter()
            .filter(|&&(_, t)| t == k)
            .map(|&(f, _)| f)
            .filter(|&f| ancestral[f])
            .collect();
        for (ai, &a) in parents.iter().enumerate() {
            for &b in &parents[ai + 1..] {
                connect(a, b);
            }
        }
    }
    let mut blocked = vec![false; n];
    for &v in z {
        blocked[v] = true;
    }
    let mut reach = vec![false; n];
    reach[x] = true;
    let mut stack = vec![x];
    while let Some(v) = stack.pop() {
        for w in 0..n {
            if adjacency[v][w] && !reach[w] && !blocked[w] {
                reach[w] = true;
                stack.push(w);
            }
        }
    }
    !reach[y]
}

/// Direct-cause oracle: edge membership.
pub fn direct_cause_oracle(edges: &[(usize, usize)], x: usize, y: usize) -> bool {
    edges.contains(&(x, y))
}

/// Collider oracle: common-child scan.
pub fn collider_oracle(n: usize, edges: &[(usize, usize)], x: usize, y: usize) -> bool {
    (0..n).any(|k| edges.contains(&(x, k)) && edges.contains(&(y, k)))
}

/// Confounder oracle: a collider-free simple path whose first edge
/// points into x.
pub fn backdoor_oracle(n: usize, edges: &[(usize, usize)], x: usize, y: usize) -> bool {
    let has = |a: usize, b: usize| edges.contains(&(a, b));
    // Depth-first walk carrying whether the last hop entered forward.
    fn walk(
        v: usize,
        arrived_into: bool,
        target: usize,
        n: usize,
        has: &dyn Fn(usize, usize) -> bool,
        on_path: &mut Vec<bool>,
    ) -> bool {
        if v == target {
            return true;
        }
        for w in 0..n {
            if on_path[w] || (!has(v, w) && !has(w, v)) {
                continue;
            }
            let into_next = has(v, w);
            // v is a collider when entered and exited against arrows.
            if arrived_into && !into_next {
                continue;
            }
            on_path[w] = true;
            if walk(w, into_next, target, n, has, on_path) {
                return true;
            }
            on_path[w] = false;
        }
        false
    }
    let mut on_path = vec![false; n];
    on_path[x] = true;
    for p in 0..n {
        if has(p, x) && !on_path[p] {
            on_path[p] = true;
            if walk(p, false, y, n, &has, &mut on_path) {
                return true;
            }
            on_path[p] = false;
        }
    }
    false
}

/// Skeleton as sorted index pairs.
pub fn skeleton_of(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = edges.iter().map(|&(f, t)| (f.min(t), f.max(t))).collect();
    out.sort_unstable();
    out
}

/// Unshielded colliders as (low parent, high parent, child) triples.
pub fn v_structures_of(n: usize, edges: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
    let adjacent = |a: usize, b: usize| edges.contains(&(a, b)) || edges.contains(&(b, a));
    let mut out = Vec::new();
    for k in 0..n {
        let parents: Vec<usize> = edges
            .iter()
            .filter(|&&(_, t)| t == k)
            .map(|&(f, _)| f)
            .collect();
        for (ai, &a) in parents.iter().enumerate() {
            for &b in &parents[ai + 1..] {
                if !adjacent(a, b) {
                    out.push((a.min(b), a.max(b), k));
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Partial correlation by explicit residual regressions: regress both
/// variables on an intercept plus the conditioning columns, then take
/// the Pearson correlation of the residuals.
pub fn residual_partial_corr(table: &DataTable, x: &str, y: &str, z: &[String]) -> f64 {
    let rows = table.n_rows();
    let residual = |name: &str| -> Vec<f64> {
        let col = table.column(name).expect("oracle column exists");
        let mut design = DMatrix::zeros(rows, z.len() + 1);
        for r in 0..rows {
            design[(r, 0)] = 1.0;
        }
        for (j, cond) in z.iter().enumerate() {
            let c = table.column(cond).expect("oracle column exists");
            for r in 0..rows {
                design[(r, j + 1)] = c[r];
            }
        }
        let rhs = DMatrix::from_column_slice(rows, 1, col);
        let beta = design
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .expect("least-squares solve");
        let fit = design * beta;
        (0..rows).map(|r| col[r] - fit[(r, 0)]).collect()
    };
    let rx = residual(x);
    let ry = residual(y);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for r in 0..rows {
        let (dx, dy) = (rx[r] - mx, ry[r] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

fn normals(rng: &mut ChaCha8Rng, rows: usize) -> Vec<f64> {
    (0..rows).map(|_| StandardNormal.sample(rng)).collect()
}

/// Constant-effect process: T = X + nu, Y = 2T + X + eps. The unit
/// effect is exactly 2 for every noise draw.
pub fn fixture_constant(rows: usize, seed: u64) -> DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normals(&mut rng, rows);
    let nu = normals(&mut rng, rows);
    let eps = normals(&mut rng, rows);
    let t: Vec<f64> = (0..rows).map(|r| x[r] + nu[r]).collect();
    let y: Vec<f64> = (0..rows).map(|r| 2.0 * t[r] + x[r] + eps[r]).collect();
    DataTable::from_columns(
        "fixture_constant",
        vec!["x".into(), "t".into(), "y".into()],
        vec![x, t, y],
    )
    .expect("fixture columns align")
}

/// Heterogeneous-effect process: T = 0.5X + nu, Y = (1 + X)T + eps.
/// The unit effect averages to 1 because X is centered.
pub fn fixture_heterogeneous(rows: usize, seed: u64) -> DataTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normals(&mut rng, rows);
    let nu = normals(&mut rng, rows);
    let eps = normals(&mut rng, rows);
    let t: Vec<f64> = (0..rows).map(|r| 0.5 * x[r] + nu[r]).collect();
    let y: Vec<f64> = (0..rows).map(|r| (1.0 + x[r]) * t[r] + eps[r]).collect();
    DataTable::from_columns(
        "fixture_heterogeneous",
        vec!["x".into(), "t".into(), "y".into()],
        vec![x, t, y],
    )
    .expect("fixture columns align")
}

/// Monte-Carlo interventional oracle for the fixtures: redraw the
/// exogenous noises, pin the treatment to each arm, and average the
/// outcome difference. Both arms share noise draws.
pub fn mc_interventional_ate(constant_effect: bool, t0: f64, t1: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let x: f64 = StandardNormal.sample(&mut rng);
        // The treatment equation is overridden by the intervention,
        // but its noise is still drawn to keep the stream aligned
        // with the observational fixtures.
        let _nu: f64 = StandardNormal.sample(&mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let outcome = |t: f64| {
            if constant_effect {
                2.0 * t + x + eps
            } else {
                (1.0 + x) * t + eps
            }
        };
        total += outcome(t1) - outcome(t0);
    }
    total / draws as f64
}
