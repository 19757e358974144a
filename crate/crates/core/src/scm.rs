//! Synthetic structural causal models.
//!
//! A model pairs a fully directed acyclic graph with one mechanism per
//! node; sampling evaluates mechanisms in topological order and adds
//! Gaussian noise. Two mechanism families are supported: a nonlinear
//! family of per-parent tanh responses plus a shared interaction term,
//! and a linear family whose interventional contrasts are exact, which
//! makes it the right source for effect-size ground truth. All
//! randomness flows from caller-supplied seeds, so graphs, models, and
//! sampled tables are bit-reproducible.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::tabular::DataTable;

/// Coefficient magnitudes are uniform in this range; small magnitudes
/// would make edges statistically invisible at benchmark sample sizes.
const COEFF_LOW: f64 = 0.5;
const COEFF_HIGH: f64 = 1.5;

/// Input gain and shift of a saturating response stay inside these
/// bounds so the response keeps operating around the active region of
/// tanh; larger values drive it flat, which erases the edge's signal
/// and leaks sibling correlation past linear partialling.
const GAIN_LOW: f64 = 0.5;
const GAIN_HIGH: f64 = 1.0;
const SHIFT_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismFamily {
    Tanh,
    Linear,
}

impl fmt::Display for MechanismFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MechanismFamily::Tanh => write!(f, "tanh"),
            MechanismFamily::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for MechanismFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(MechanismFamily::Tanh),
            "linear" => Ok(MechanismFamily::Linear),
            other => Err(Error::OutOfRange {
                what: "mechanism family",
                detail: format!("'{other}' is not one of: tanh, linear"),
            }),
        }
    }
}

/// One saturating response a * tanh(b * parent + c).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TanhTerm {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Mechanism {
    /// Sum of per-parent responses plus a saturating interaction over
    /// the parent sum.
    Tanh {
        terms: Vec<TanhTerm>,
        interaction: f64,
    },
    /// Weighted sum of the parents.
    Linear { weights: Vec<f64> },
}

impl Mechanism {
    /// Noise-free structural value given parent values in the same
    /// order the mechanism was built with.
    pub fn eval(&self, parents: &[f64]) -> f64 {
        match self {
            Mechanism::Tanh { terms, interaction } => {
                debug_assert_eq!(terms.len(), parents.len());
                let direct: f64 = terms
                    .iter()
                    .zip(parents)
                    .map(|(t, &p)| t.a * (t.b * p + t.c).tanh())
                    .sum();
                direct + interaction * parents.iter().sum::<f64>().tanh()
            }
            Mechanism::Linear { weights } => {
                debug_assert_eq!(weights.len(), parents.len());
                weights.iter().zip(parents).map(|(w, &p)| w * p).sum()
            }
        }
    }
}

/// Magnitude in [COEFF_LOW, COEFF_HIGH) with an independent sign.
fn signed_coeff(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude = rng.random_range(COEFF_LOW..COEFF_HIGH);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Input gain in [GAIN_LOW, GAIN_HIGH) with an independent sign.
fn signed_gain(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude = rng.random_range(GAIN_LOW..GAIN_HIGH);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Deterministic topological order, smallest node index first among
/// the ready set. The graph type already rejects directed cycles.
fn topo_order(graph: &CausalGraph) -> Vec<usize> {
    let n = graph.node_count();
    let mut indegree = vec![0usize; n];
    for v in 0..n {
        indegree[v] = graph.parents_idx(v).len();
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for c in graph.children_idx(v) {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

#[derive(Debug, Clone)]
pub struct Scm {
    graph: CausalGraph,
    /// One mechanism per node, indexed like the graph's nodes; parent
    /// values are passed in ascending node-index order.
    mechanisms: Vec<Mechanism>,
    topo: Vec<usize>,
    sigma: f64,
    family: MechanismFamily,
}

impl Scm {
    /// Draws mechanism coefficients for every node of `dag`. Nodes are
    /// visited in index order and parents in ascending index order, so
    /// one seed always yields one model.
    pub fn from_dag(
        dag: &CausalGraph,
        family: MechanismFamily,
        sigma: f64,
        seed: u64,
    ) -> Result<Scm> {
        if let Some((a, b)) = dag.undirected_edges().next() {
            return Err(Error::NotFullyDirected {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::OutOfRange {
                what: "noise scale",
                detail: format!("sigma = {sigma} must be finite and positive"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mechanisms = (0..dag.node_count())
            .map(|v| {
                let parent_count = dag.parents_idx(v).len();
                match family {
                    MechanismFamily::Tanh => Mechanism::Tanh {
                        terms: (0..parent_count)
                            .map(|_| TanhTerm {
                                a: signed_coeff(&mut rng),
                                b: signed_gain(&mut rng),
                                c: rng.random_range(-SHIFT_MAX..SHIFT_MAX),
                            })
                            .collect(),
                        interaction: signed_coeff(&mut rng),
                    },
                    MechanismFamily::Linear => Mechanism::Linear {
                        weights: (0..parent_count).map(|_| signed_coeff(&mut rng)).collect(),
                    },
                }
            })
            .collect();
        Ok(Scm {
            topo: topo_order(dag),
            graph: dag.clone(),
            mechanisms,
            sigma,
            family,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn family(&self) -> MechanismFamily {
        self.family
    }

    pub fn mechanism(&self, node: &str) -> Result<&Mechanism> {
        Ok(&self.mechanisms[self.graph.node_index(node)?])
    }

    /// One standard-normal draw per node and row; `intervene` pins a
    /// node to a constant instead of evaluating its mechanism.
    fn simulate(
        &self,
        n_rows: usize,
        noise: &[Vec<f64>],
        intervene: Option<(usize, f64)>,
    ) -> Vec<Vec<f64>> {
        let n = self.graph.node_count();
        let mut columns = vec![vec![0.0f64; n_rows]; n];
        for &v in &self.topo {
            if let Some((target, value)) = intervene {
                if v == target {
                    columns[v] = vec![value; n_rows];
                    continue;
                }
            }
            let parents = self.graph.parents_idx(v);
            let mech = &self.mechanisms[v];
            let mut parent_row = vec![0.0f64; parents.len()];
            for row in 0..n_rows {
                for (slot, &p) in parent_row.iter_mut().zip(&parents) {
                    *slot = columns[p][row];
                }
                columns[v][row] = mech.eval(&parent_row) + self.sigma * noise[v][row];
            }
        }
        columns
    }

    fn draw_noise(&self, n_rows: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.graph.node_count())
            .map(|_| (0..n_rows).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    /// Observational sample with columns in graph node order.
    pub fn sample_table(&self, name: &str, n_rows: usize, seed: u64) -> Result<DataTable> {
        if n_rows == 0 {
            return Err(Error::OutOfRange {
                what: "sample size",
                detail: "n_rows must be at least 1".into(),
            });
        }
        let noise = self.draw_noise(n_rows, seed);
        let columns = self.simulate(n_rows, &noise, None);
        DataTable::from_columns(name, self.graph.nodes().to_vec(), columns)
    }

    /// Monte-Carlo interventional contrast E[outcome | do(t1)] minus
    /// E[outcome | do(t0)]. Both arms share the same noise draws, so
    /// the estimator's variance comes only from effect heterogeneity;
    /// for linear mechanisms the contrast is exact.
    pub fn interventional_ate(
        &self,
        outcome: &str,
        treatment: &str,
        t0: f64,
        t1: f64,
        draws: usize,
        seed: u64,
    ) -> Result<f64> {
        let y = self.graph.node_index(outcome)?;
        let t = self.graph.node_index(treatment)?;
        if y == t {
            return Err(Error::SameVariable {
                name: outcome.to_string(),
            });
        }
        if draws == 0 {
            return Err(Error::OutOfRange {
                what: "draw count",
                detail: "draws must be at least 1".into(),
            });
        }
        if !t0.is_finite() || !t1.is_finite() {
            return Err(Error::OutOfRange {
                what: "treatment contrast",
                detail: format!("t0 = {t0}, t1 = {t1} must be finite"),
            });
        }
        let noise = self.draw_noise(draws, seed);
        let arm0 = self.simulate(draws, &noise, Some((t, t0)));
        let arm1 = self.simulate(draws, &noise, Some((t, t1)));
        let mean =
            |col: &[f64]| col.iter().sum::<f64>() / draws as f64;
        Ok(mean(&arm1[y]) - mean(&arm0[y]))
    }
}

/// Default node names v1..vn.
pub fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("v{i}")).collect()
}

/// Uniform random DAG: a shuffled causal order plus `edge_count`
/// unordered pairs sampled without replacement, each oriented along
/// the order.
pub fn random_dag(nodes: &[String], edge_count: usize, seed: u64) -> Result<CausalGraph> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::OutOfRange {
            what: "node count",
            detail: format!("{n} node(s); a graph needs at least 2"),
        });
    }
    let max_edges = n * (n - 1) / 2;
    if edge_count > max_edges {
        return Err(Error::OutOfRange {
            what: "edge count",
            detail: format!("{edge_count} exceeds the {max_edges} possible pairs"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(&mut rng);
    let mut graph = CausalGraph::new(nodes.to_vec())?;
    for &(i, j) in pairs.iter().take(edge_count) {
        let (from, to) = if rank[i] < rank[j] { (i, j) } else { (j, i) };
        graph.add_directed_edge(&nodes[from], &nodes[to])?;
    }
    Ok(graph)
}

/// Everything needed to rebuild one generated table bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolEntry {
    pub name: String,
    /// CSV location relative to the manifest's directory.
    pub csv: String,
    pub nodes: Vec<String>,
    /// Directed edges of the generating DAG, from -> to.
    pub edges: Vec<(String, String)>,
    pub family: MechanismFamily,
    pub sigma: f64,
    pub n_rows: usize,
    pub scm_seed: u64,
    pub sample_seed: u64,
}

impl PoolEntry {
    pub fn dag(&self) -> Result<CausalGraph> {
        let mut g = CausalGraph::new(self.nodes.clone())?;
        for (from, to) in &self.edges {
            g.add_directed_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn scm(&self) -> Result<Scm> {
        Scm::from_dag(&self.dag()?, self.family, self.sigma, self.scm_seed)
    }

    /// Rebuilds the sampled table from the recorded seeds.
    pub fn regenerate(&self) -> Result<DataTable> {
        self.scm()?.sample_table(&self.name, self.n_rows, self.sample_seed)
    }
}

/// Manifest over a directory of generated tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PoolManifest {
    pub tables: Vec<PoolEntry>,
}

impl PoolManifest {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<PoolManifest> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<PoolManifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        PoolManifest::from_json(&text)
    }

    pub fn entry(&self, name: &str) -> Option<&PoolEntry> {
        self.tables.iter().find(|e| e.name == name)
    }
}
