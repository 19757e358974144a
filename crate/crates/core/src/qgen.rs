//! Benchmark assembly: question templates, item generation with
//! ground truth, answer parsing, and scoring.
//!
//! Questions come in nine categories spanning four levels: variable
//! (marginal, single-condition, and multi-condition independence),
//! edge (direct cause, collider, confounder), graph (full and partial
//! structure recovery), and effect (average treatment effect). Items
//! pair a generated table with an instantiated template; variables are
//! renamed to domain keywords drawn at random, so the surface story
//! and the data-generating structure are deliberately unrelated and
//! only the data can answer the question.
//!
//! Ground truth is a pure function of the pool entry and the item's
//! recorded bindings: independence questions are read off the
//! generating DAG by d-separation, edge questions are verdicts over
//! the DAG's equivalence class, graph questions expect that class
//! itself (partial questions its projection onto the chosen subset),
//! and effect questions expect the toolkit's own deterministic
//! estimate. Rebuilding a benchmark from the same seed is
//! bit-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dml::{estimate_ate, format_sig, DmlConfig};
use crate::edge::{determine_collider, determine_confounder, determine_direct_cause, Verdict};
use crate::error::{Error, Result};
use crate::graph::{shd, CausalGraph};
use crate::pc::cpdag_from_dsep;
use crate::scm::{MechanismFamily, PoolEntry, PoolManifest};
use crate::tabular::DataTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "IT")]
    It,
    #[serde(rename = "CIT")]
    Cit,
    #[serde(rename = "MULTCIT")]
    MultCit,
    #[serde(rename = "CAUSE")]
    Cause,
    #[serde(rename = "COLLIDER")]
    Collider,
    #[serde(rename = "CONF")]
    Conf,
    #[serde(rename = "TOTAL")]
    Total,
    #[serde(rename = "PARTIAL")]
    Partial,
    #[serde(rename = "ATE")]
    Ate,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::It,
        Category::Cit,
        Category::MultCit,
        Category::Cause,
        Category::Collider,
        Category::Conf,
        Category::Total,
        Category::Partial,
        Category::Ate,
    ];

    /// Smallest node count on which the category's bindings can be
    /// drawn.
    pub fn min_nodes(self) -> usize {
        match self {
            Category::Cit => 3,
            Category::MultCit | Category::Partial => 4,
            _ => 2,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Category::It => "IT",
            Category::Cit => "CIT",
            Category::MultCit => "MULTCIT",
            Category::Cause => "CAUSE",
            Category::Collider => "COLLIDER",
            Category::Conf => "CONF",
            Category::Total => "TOTAL",
            Category::Partial => "PARTIAL",
            Category::Ate => "ATE",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IT" => Ok(Category::It),
            "CIT" => Ok(Category::Cit),
            "MULTCIT" => Ok(Category::MultCit),
            "CAUSE" => Ok(Category::Cause),
            "COLLIDER" => Ok(Category::Collider),
            "CONF" => Ok(Category::Conf),
            "TOTAL" => Ok(Category::Total),
            "PARTIAL" => Ok(Category::Partial),
            "ATE" => Ok(Category::Ate),
            other => Err(Error::OutOfRange {
                what: "question category",
                detail: format!("'{other}' is not a known category"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Medical,
    Market,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Medical => write!(f, "medical"),
            Domain::Market => write!(f, "market"),
        }
    }
}

/// Keyword vocabulary for a domain; 100 terms each, shipped with the
/// crate so item naming is reproducible.
pub fn keywords(domain: Domain) -> Vec<&'static str> {
    let raw = match domain {
        Domain::Medical => include_str!("../data/keywords_medical.txt"),
        Domain::Market => include_str!("../data/keywords_market.txt"),
    };
    raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct QuestionTemplate {
    pub category: Category,
    /// Question text with positional `{}` slots.
    pub pattern: &'static str,
    pub arity: usize,
}

const fn tpl(category: Category, pattern: &'static str, arity: usize) -> QuestionTemplate {
    QuestionTemplate { category, pattern, arity }
}

const IT_TEMPLATES: [QuestionTemplate; 10] = [
    tpl(Category::It, "whether {} and {} is independent.", 2),
    tpl(Category::It, "Is {} independent of {}?", 2),
    tpl(Category::It, "Are {} and {} statistically independent?", 2),
    tpl(Category::It, "Does the occurrence of {} independent on {}, or vice versa?", 2),
    tpl(Category::It, "Can we assert {} and {} are independent, or are they related?", 2),
    tpl(Category::It, "Can we consider {} and {} as independent events?", 2),
    tpl(Category::It, "Do {} and {} independent and don't have any influence on each other?", 2),
    tpl(Category::It, "Is there no statistically correlation between {} and {}?", 2),
    tpl(Category::It, "test whether Are {} and {} statistically unrelated or dependent?", 2),
    tpl(Category::It, "Test the independence of {} and {}.", 2),
];

const CIT_TEMPLATES: [QuestionTemplate; 10] = [
    tpl(Category::Cit, "whether {} and {} is independent under condition {}?", 3),
    tpl(Category::Cit, "Is {} independent of {} given condition {}?", 3),
    tpl(Category::Cit, "Are {} and {} statistically independent given the condition {}?", 3),
    tpl(Category::Cit, "Does the independence of {} and {} hold true under condition {}?", 3),
    tpl(Category::Cit, "Can we consider {} and {} as conditionally independent with respect to {}?", 3),
    tpl(Category::Cit, "Is the independence between {} and {} maintained given the condition {}?", 3),
    tpl(Category::Cit, "Are {} and {} conditionally independent with the presence of condition {}?", 3),
    tpl(Category::Cit, "Can we assume that {} and {} are independent given the condition {}?", 3),
    tpl(Category::Cit, "Is the independence of {} and {} upheld in the presence of condition {}?", 3),
    tpl(Category::Cit, "Does the independence between {} and {} persist under the condition {}?", 3),
];

const MULTCIT_TEMPLATES: [QuestionTemplate; 11] = [
    tpl(Category::MultCit, "whether {} and {} is independent under conditions : ", 2),
    tpl(Category::MultCit, "Determine the independence of {} and {} given the following conditions : ", 2),
    tpl(Category::MultCit, "Examine if {} and {} are independent under the specified conditions : ", 2),
    tpl(Category::MultCit, "Assess the independence between {} and {} with the provided conditions : ", 2),
    tpl(Category::MultCit, "Investigate whether {} and {} exhibit independence given the outlined conditions : ", 2),
    tpl(Category::MultCit, "Explore the independence of {} and {} under the given circumstances : ", 2),
    tpl(Category::MultCit, "Ascertain if there is independence between {} and {} given the stated conditions : ", 2),
    tpl(Category::MultCit, "Check for independence between {} and {} based on the conditions described : ", 2),
    tpl(Category::MultCit, "Verify the independence status of {} and {} under the listed conditions : ", 2),
    tpl(Category::MultCit, "Evaluate the independence of {} and {} under the mentioned conditions : ", 2),
    tpl(Category::MultCit, "Examine whether {} and {} are independent, considering the provided conditions : ", 2),
];

const CAUSE_TEMPLATES: [QuestionTemplate; 9] = [
    tpl(Category::Cause, "whether {} directly cause {}.", 2),
    tpl(Category::Cause, "Assess if {} has a direct causal impact on {}.", 2),
    tpl(Category::Cause, "Examine the direct causation relationship.if {} directly cause {}?", 2),
    tpl(Category::Cause, "Investigate whether {} directly influences {}.", 2),
    tpl(Category::Cause, "Evaluate if there exists the direct causal connection from {} to {}.", 2),
    tpl(Category::Cause, "Scrutinize if {} leads to a direct causation of {}.", 2),
    tpl(Category::Cause, "Determine whether {} is a direct cause of {}.", 2),
    tpl(Category::Cause, "Assess if there is the direct causal link of {} to {}.", 2),
    tpl(Category::Cause, "Verify if {} directly results in the causation of {}.", 2),
];

const COLLIDER_TEMPLATES: [QuestionTemplate; 9] = [
    tpl(Category::Collider, "Whether there exists at least one collider (i.e., common effect) of {} and {}", 2),
    tpl(Category::Collider, "Determine if there is at least one common effect (collider) of both {} and {}.", 2),
    tpl(Category::Collider, "Assess the presence of a shared outcome, serving as a collider, for variables {} and {}.", 2),
    tpl(Category::Collider, "Examine the potential existence of a shared consequence as a collider for {} and {}.", 2),
    tpl(Category::Collider, "Evaluate if {} and {} share a common effect (collider).", 2),
    tpl(Category::Collider, "Analyze the presence of a common outcome serving as a collider for {} and {}.", 2),
    tpl(Category::Collider, "Verify if there exists a shared effect, acting as a collider, for both {} and {}.", 2),
    tpl(Category::Collider, "Explore whether a common consequence is a collider for variables {} and {}.", 2),
    tpl(Category::Collider, "Assess the existence of at least one common effect (collider) between {} and {}.", 2),
];

const CONF_TEMPLATES: [QuestionTemplate; 11] = [
    tpl(Category::Conf, "There exists at least one confounder (i.e., common cause) of {} and {}.", 2),
    tpl(Category::Conf, "Confirm the presence of at least one common cause (confounder) influencing both {} and {}.", 2),
    tpl(Category::Conf, "Verify whether there exists a shared factor, acting as a confounder, for variables {} and {}.", 2),
    tpl(Category::Conf, "Examine the potential existence of a common cause (confounder) impacting both {} and {}.", 2),
    tpl(Category::Conf, "Assess if {} and {} share at least one confounding factor (common cause).", 2),
    tpl(Category::Conf, "Scrutinize the presence of a shared influencing factor, serving as a confounder, for {} and {}.", 2),
    tpl(Category::Conf, "Investigate whether there is at least one confounder affecting both {} and {}.", 2),
    tpl(Category::Conf, "Analyze the potential impact of a common cause (confounder) on variables {} and {}.", 2),
    tpl(Category::Conf, "Verify the presence of a shared influencing factor, acting as a confounder, for {} and {}.", 2),
    tpl(Category::Conf, "Explore whether a common factor is a confounder for variables {} and {}.", 2),
    tpl(Category::Conf, "Evaluate the existence of at least one confounder (common cause) between {} and {}.", 2),
];

const TOTAL_TEMPLATES: [QuestionTemplate; 11] = [
    tpl(Category::Total, "please generate causal graph of the input tabular data.", 0),
    tpl(Category::Total, "Produce a causal graph representing the relationships within the given tabular data.", 0),
    tpl(Category::Total, "Generate a directed graph that illustrates the causal connections inherent in the provided tabular dataset.", 0),
    tpl(Category::Total, "Create a graphical model depicting the causality among variables in the input tabular data.", 0),
    tpl(Category::Total, "Construct a causal diagram illustrating the interdependencies among the variables in the tabular dataset.", 0),
    tpl(Category::Total, "Formulate a graph that visually represents the cause-and-effect relationships present in the input tabular information.", 0),
    tpl(Category::Total, "Develop a graphical representation outlining the causal structure of the tabular data.", 0),
    tpl(Category::Total, "Build a directed acyclic graph (DAG) that reflects the causal influences within the input tabular dataset.", 0),
    tpl(Category::Total, "Establish a graphical model showcasing the causal links between variables derived from the tabular data.", 0),
    tpl(Category::Total, "Design a causal graph that visually captures the cause-and-effect relationships inherent in the tabular information.", 0),
    tpl(Category::Total, "Construct a directed graph that visually displays the causal pathways within the given tabular dataset.", 0),
];

const PARTIAL_TEMPLATES: [QuestionTemplate; 11] = [
    tpl(Category::Partial, "Please generate a partial causal diagram for some of the following variables that interest me : ", 0),
    tpl(Category::Partial, "Generate a subset of a causal diagram for the variables of interest : ", 0),
    tpl(Category::Partial, "Create a partial graphical model illustrating causal relationships among selected variables : ", 0),
    tpl(Category::Partial, "Develop a restricted causal graph focusing on specific variables from the given set : ", 0),
    tpl(Category::Partial, "Formulate a partial directed acyclic graph (DAG) depicting causal connections for chosen variables : ", 0),
    tpl(Category::Partial, "Construct a limited causal diagram featuring only the variables of interest : ", 0),
    tpl(Category::Partial, "Produce a subsection of a graphical model, emphasizing the causal links within the selected variables : ", 0),
    tpl(Category::Partial, "Build a causal graph subset, emphasizing relationships among the variables you find intriguing : ", 0),
    tpl(Category::Partial, "Develop a focused causal diagram, highlighting causal connections for the specified variables : ", 0),
    tpl(Category::Partial, "Form a segment of a directed graph that visually represents causal relationships among chosen variables : ", 0),
    tpl(Category::Partial, "Create a restricted causal network, showcasing the partial causal influences among the variables of interest : ", 0),
];

const ATE_TEMPLATES: [QuestionTemplate; 1] = [tpl(
    Category::Ate,
    "calculate the Average Treatment Effect (ATE) of a continuous treatment variable  {} on an outcome variable {}, given that the treatment {} changes from {} to {}.",
    5,
)];

/// Every template of a category; selection among them is a uniform
/// seeded draw.
pub fn templates(category: Category) -> &'static [QuestionTemplate] {
    match category {
        Category::It => &IT_TEMPLATES,
        Category::Cit => &CIT_TEMPLATES,
        Category::MultCit => &MULTCIT_TEMPLATES,
        Category::Cause => &CAUSE_TEMPLATES,
        Category::Collider => &COLLIDER_TEMPLATES,
        Category::Conf => &CONF_TEMPLATES,
        Category::Total => &TOTAL_TEMPLATES,
        Category::Partial => &PARTIAL_TEMPLATES,
        Category::Ate => &ATE_TEMPLATES,
    }
}

/// Fills the positional slots; `trailing` names are appended as a
/// comma-separated list for the categories whose patterns end in a
/// colon (multi-condition independence and partial-graph questions).
pub fn instantiate(template: &QuestionTemplate, slots: &[&str], trailing: &[String]) -> Result<String> {
    let holes = template.pattern.matches("{}").count();
    debug_assert_eq!(holes, template.arity);
    if slots.len() != holes {
        return Err(Error::ArityMismatch {
            expected: holes,
            found: slots.len(),
        });
    }
    let mut out = String::with_capacity(template.pattern.len() + 16 * slots.len());
    let mut parts = template.pattern.split("{}");
    out.push_str(parts.next().unwrap_or(""));
    for (slot, part) in slots.iter().zip(parts) {
        out.push_str(slot);
        out.push_str(part);
    }
    if !trailing.is_empty() {
        out.push_str(&trailing.join(", "));
    }
    Ok(out)
}

/// Expected answer, typed by category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroundTruth {
    Verdict { value: Verdict },
    Graph { value: CausalGraph },
    Number { value: f64 },
}

/// One benchmark unit; every field an agent run or a ground-truth
/// recomputation needs is recorded here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchItem {
    pub id: String,
    pub category: Category,
    pub domain: Domain,
    /// Pool entry the data comes from.
    pub table: String,
    /// File name the agent sees; the pool table is served under this
    /// name with columns renamed to the drawn keywords.
    pub csv_name: String,
    pub n_nodes: usize,
    /// Pool column name to keyword name, covering every column.
    pub rename: BTreeMap<String, String>,
    pub question: String,
    /// Keyword names bound to the template slots.
    pub variables: Vec<String>,
    /// Conditioning set or subset-of-interest, in keyword names.
    pub conditions: Vec<String>,
    /// Treatment contrast for effect questions.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contrast: Option<(f64, f64)>,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanCell {
    pub category: Category,
    pub n_nodes: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BenchPlan {
    pub cells: Vec<PlanCell>,
}

impl BenchPlan {
    /// Full grid of categories by node counts, skipping node counts a
    /// category cannot be drawn on.
    pub fn grid(categories: &[Category], node_counts: &[usize], per_cell: usize) -> BenchPlan {
        let mut cells = Vec::new();
        for &category in categories {
            for &n_nodes in node_counts {
                if n_nodes >= category.min_nodes() {
                    cells.push(PlanCell { category, n_nodes, count: per_cell });
                }
            }
        }
        BenchPlan { cells }
    }
}

/// Distinct indices drawn without replacement, in shuffled order.
fn draw_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx
}

/// Nearest-rank quantile of an unsorted slice.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("table values are finite"));
    let pos = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[pos]
}

/// DAG over the keyword names from the item's rename map.
fn renamed_dag(entry: &PoolEntry, item_rename: &BTreeMap<String, String>) -> Result<CausalGraph> {
    entry.dag()?.renamed(item_rename)
}

/// Pool table with keyword column names, served under the item's
/// file name.
pub fn renamed_table(entry: &PoolEntry, item: &BenchItem) -> Result<DataTable> {
    let table = entry.regenerate()?;
    let columns = entry
        .nodes
        .iter()
        .map(|n| {
            item.rename.get(n).cloned().ok_or_else(|| Error::UnknownVariable {
                name: n.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stem = item.csv_name.strip_suffix(".csv").unwrap_or(&item.csv_name);
    Ok(table.with_columns(columns)?.with_name(stem))
}

/// Effect-question estimator configuration: the toolkit's own
/// deterministic estimate is the expected answer, so the tool and the
/// ground truth must build the identical configuration. Covariates are
/// every other column in table order.
pub fn effect_config(table: &DataTable, outcome: &str, treatment: &str, t0: f64, t1: f64) -> DmlConfig {
    let covariates = table
        .columns()
        .iter()
        .filter(|c| c.as_str() != outcome && c.as_str() != treatment)
        .cloned()
        .collect();
    DmlConfig::new(outcome, treatment, covariates, t0, t1)
}

/// Recomputes the expected answer from the pool entry and the item's
/// recorded bindings alone.
pub fn ground_truth_for(entry: &PoolEntry, item: &BenchItem) -> Result<GroundTruth> {
    let dag = renamed_dag(entry, &item.rename)?;
    match item.category {
        Category::It => {
            let none: &[String] = &[];
            let sep = dag.d_separated(&item.variables[0], &item.variables[1], none)?;
            Ok(GroundTruth::Verdict { value: if sep { Verdict::Yes } else { Verdict::No } })
        }
        Category::Cit | Category::MultCit => {
            let sep = dag.d_separated(&item.variables[0], &item.variables[1], &item.conditions)?;
            Ok(GroundTruth::Verdict { value: if sep { Verdict::Yes } else { Verdict::No } })
        }
        Category::Cause => {
            let cpdag = dag.cpdag_of_dag()?;
            let v = determine_direct_cause(&cpdag, &item.variables[0], &item.variables[1])?;
            Ok(GroundTruth::Verdict { value: v.verdict })
        }
        Category::Collider => {
            let cpdag = dag.cpdag_of_dag()?;
            let v = determine_collider(&cpdag, &item.variables[0], &item.variables[1])?;
            Ok(GroundTruth::Verdict { value: v.verdict })
        }
        Category::Conf => {
            let cpdag = dag.cpdag_of_dag()?;
            let v = determine_confounder(&cpdag, &item.variables[0], &item.variables[1])?;
            Ok(GroundTruth::Verdict { value: v.verdict })
        }
        Category::Total => Ok(GroundTruth::Graph { value: dag.cpdag_of_dag()? }),
        Category::Partial => Ok(GroundTruth::Graph {
            value: cpdag_from_dsep(&dag, &item.conditions)?,
        }),
        Category::Ate => {
            let (t0, t1) = item.contrast.ok_or_else(|| Error::BadPlan {
                detail: format!("effect item {} has no treatment contrast", item.id),
            })?;
            let table = renamed_table(entry, item)?;
            let cfg = effect_config(&table, &item.variables[1], &item.variables[0], t0, t1);
            Ok(GroundTruth::Number { value: estimate_ate(&table, &cfg)?.ate })
        }
    }
}

fn draw_item(
    rng: &mut ChaCha8Rng,
    cell: &PlanCell,
    candidates: &[&PoolEntry],
    id: String,
) -> Result<BenchItem> {
    let entry = candidates[rng.random_range(0..candidates.len())];
    let domain = if rng.random_bool(0.5) { Domain::Medical } else { Domain::Market };
    let vocabulary = keywords(domain);
    let n = entry.nodes.len();
    let names: Vec<String> = draw_distinct(rng, vocabulary.len(), n)
        .into_iter()
        .map(|i| vocabulary[i].to_string())
        .collect();
    let rename: BTreeMap<String, String> = entry
        .nodes
        .iter()
        .cloned()
        .zip(names.iter().cloned())
        .collect();

    let ts = templates(cell.category);
    let template = &ts[rng.random_range(0..ts.len())];
    let pick = |rng: &mut ChaCha8Rng, k: usize| -> Vec<String> {
        draw_distinct(rng, n, k).into_iter().map(|i| names[i].clone()).collect()
    };

    let mut variables = Vec::new();
    let mut conditions = Vec::new();
    let mut contrast = None;
    let question_body = match cell.category {
        Category::It | Category::Cause | Category::Collider | Category::Conf => {
            variables = pick(rng, 2);
            instantiate(template, &[&variables[0], &variables[1]], &[])?
        }
        Category::Cit => {
            let drawn = pick(rng, 3);
            variables = drawn[..2].to_vec();
            conditions = drawn[2..].to_vec();
            instantiate(template, &[&variables[0], &variables[1], &conditions[0]], &[])?
        }
        Category::MultCit => {
            let k = rng.random_range(2..=(n - 2));
            let drawn = pick(rng, 2 + k);
            variables = drawn[..2].to_vec();
            conditions = drawn[2..].to_vec();
            instantiate(template, &[&variables[0], &variables[1]], &conditions)?
        }
        Category::Total => instantiate(template, &[], &[])?,
        Category::Partial => {
            let k = rng.random_range(3..=(n - 1));
            conditions = pick(rng, k);
            instantiate(template, &[], &conditions)?
        }
        Category::Ate => {
            let drawn = pick(rng, 2);
            variables = drawn;
            let table = entry.regenerate()?;
            let pool_name: Vec<&String> = entry
                .nodes
                .iter()
                .filter(|p| rename[*p] == variables[0])
                .collect();
            let treat_col = table.column(pool_name[0])?;
            let mut t0 = format_sig(quantile(treat_col, 0.25));
            let mut t1 = format_sig(quantile(treat_col, 0.75));
            if t0 == t1 {
                t0 = format_sig(quantile(treat_col, 0.0));
                t1 = format_sig(quantile(treat_col, 1.0));
            }
            let parsed = (t0.parse::<f64>().expect("rendered number"), t1.parse::<f64>().expect("rendered number"));
            contrast = Some(parsed);
            instantiate(
                template,
                &[&variables[0], &variables[1], &variables[0], &t0, &t1],
                &[],
            )?
        }
    };

    let csv_name = format!("{id}.csv");
    let question = format!("{question_body} csv data store in '{csv_name}'.");
    let mut item = BenchItem {
        id,
        category: cell.category,
        domain,
        table: entry.name.clone(),
        csv_name,
        n_nodes: n,
        rename,
        question,
        variables,
        conditions,
        contrast,
        ground_truth: GroundTruth::Verdict { value: Verdict::Uncertain },
    };
    item.ground_truth = ground_truth_for(entry, &item)?;
    Ok(item)
}

/// Builds the benchmark items for `plan` against `pool`. Effect
/// questions draw only from linear-mechanism tables so the expected
/// contrast is well-specified; every other category draws from the
/// nonlinear pool.
pub fn build_benchmark(pool: &PoolManifest, plan: &BenchPlan, seed: u64) -> Result<Vec<BenchItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters: BTreeMap<Category, usize> = BTreeMap::new();
    let mut items = Vec::new();
    for cell in &plan.cells {
        if cell.n_nodes < cell.category.min_nodes() {
            return Err(Error::BadPlan {
                detail: format!(
                    "{} questions need at least {} nodes, plan asks for {}",
                    cell.category,
                    cell.category.min_nodes(),
                    cell.n_nodes
                ),
            });
        }
        let family = match cell.category {
            Category::Ate => MechanismFamily::Linear,
            _ => MechanismFamily::Tanh,
        };
        let candidates: Vec<&PoolEntry> = pool
            .tables
            .iter()
            .filter(|e| e.nodes.len() == cell.n_nodes && e.family == family)
            .collect();
        if candidates.is_empty() {
            return Err(Error::BadPlan {
                detail: format!(
                    "pool has no {family} table with {} nodes for {} questions",
                    cell.n_nodes, cell.category
                ),
            });
        }
        for _ in 0..cell.count {
            let counter = counters.entry(cell.category).or_insert(0);
            *counter += 1;
            let id = format!("{}-{:04}", cell.category, counter);
            items.push(draw_item(&mut rng, cell, &candidates, id)?);
        }
    }
    Ok(items)
}

/// Item list plus the seed it was built from, as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchManifest {
    pub seed: u64,
    pub items: Vec<BenchItem>,
}

impl BenchManifest {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<BenchManifest> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<BenchManifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        BenchManifest::from_json(&text)
    }
}

/// Final answer after parsing; anything that fails the format contract
/// is a violation and scores as wrong, never as an error.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAnswer {
    Verdict(Verdict),
    /// Name of a graph in agent memory; the harness resolves it to a
    /// concrete graph before scoring.
    GraphName(String),
    Graph(CausalGraph),
    Number(f64),
    FormatViolation(String),
}

/// Strict format: a JSON object whose single key is "answer". Verdict
/// categories need yes/no/uncertain (case-insensitive); graph
/// categories a graph name or an inline graph document; the effect
/// category a number (numeric strings tolerated).
pub fn parse_final_answer(text: &str, category: Category) -> ParsedAnswer {
    let value: serde_json::Value = match serde_json::from_str(text.trim()) {
        Ok(v) => v,
        Err(e) => return ParsedAnswer::FormatViolation(format!("not a json object: {e}")),
    };
    let Some(object) = value.as_object() else {
        return ParsedAnswer::FormatViolation("not a json object".into());
    };
    if object.len() != 1 || !object.contains_key("answer") {
        return ParsedAnswer::FormatViolation("expected exactly one key 'answer'".into());
    }
    let answer = &object["answer"];
    match category {
        Category::It
        | Category::Cit
        | Category::MultCit
        | Category::Cause
        | Category::Collider
        | Category::Conf => match answer.as_str().and_then(Verdict::parse) {
            Some(v) => ParsedAnswer::Verdict(v),
            None => ParsedAnswer::FormatViolation("answer must be yes, no, or uncertain".into()),
        },
        Category::Total | Category::Partial => {
            if let Some(name) = answer.as_str() {
                if name.trim().is_empty() {
                    ParsedAnswer::FormatViolation("empty graph name".into())
                } else {
                    ParsedAnswer::GraphName(name.to_string())
                }
            } else if answer.is_object() {
                match serde_json::from_value::<CausalGraph>(answer.clone()) {
                    Ok(g) => ParsedAnswer::Graph(g),
                    Err(e) => ParsedAnswer::FormatViolation(format!("bad graph document: {e}")),
                }
            } else {
                ParsedAnswer::FormatViolation("answer must name or contain a graph".into())
            }
        }
        Category::Ate => {
            let parsed = answer
                .as_f64()
                .or_else(|| answer.as_str().and_then(|s| s.trim().parse::<f64>().ok()));
            match parsed {
                Some(x) if x.is_finite() => ParsedAnswer::Number(x),
                _ => ParsedAnswer::FormatViolation("answer must be a finite number".into()),
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreConfig {
    /// Relative tolerance for effect answers.
    pub ate_rel_tol: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { ate_rel_tol: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub category: Category,
    pub n_nodes: usize,
    pub correct: usize,
    pub total: usize,
    /// Mean structural hamming distance of graph answers, where
    /// comparable.
    pub mean_shd: Option<f64>,
}

impl ReportRow {
    pub fn accuracy(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.correct as f64 / self.total as f64)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRow {
    pub key: String,
    pub correct: usize,
    pub total: usize,
}

impl StratumRow {
    pub fn accuracy(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.correct as f64 / self.total as f64)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    /// Verdict questions grouped by their expected answer.
    pub answer_strata: Vec<StratumRow>,
    pub domain_strata: Vec<StratumRow>,
    pub failures: Vec<String>,
    pub total_correct: usize,
    pub total_items: usize,
}

impl BenchReport {
    pub fn accuracy(&self) -> Option<f64> {
        if self.total_items == 0 {
            None
        } else {
            Some(self.total_correct as f64 / self.total_items as f64)
        }
    }

    pub fn row(&self, category: Category, n_nodes: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.category == category && r.n_nodes == n_nodes)
    }

    /// Accuracy pooled over node counts for one category.
    pub fn category_accuracy(&self, category: Category) -> Option<f64> {
        let (c, t) = self
            .rows
            .iter()
            .filter(|r| r.category == category)
            .fold((0usize, 0usize), |(c, t), r| (c + r.correct, t + r.total));
        if t == 0 {
            None
        } else {
            Some(c as f64 / t as f64)
        }
    }

    fn fmt_acc(acc: Option<f64>) -> String {
        match acc {
            Some(a) => format!("{a:.3}"),
            None => "-".into(),
        }
    }

    /// Long-format rows, one per category and node count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,nodes,correct,total,accuracy,mean_shd\n");
        for r in &self.rows {
            let acc = r.accuracy().map(|a| format!("{a:.4}")).unwrap_or_default();
            let shd = r.mean_shd.map(|s| format!("{s:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.category, r.n_nodes, r.correct, r.total, acc, shd
            ));
        }
        out
    }

    /// Accuracy grid plus the answer and domain strata.
    pub fn to_markdown(&self) -> String {
        let mut node_counts: Vec<usize> = self.rows.iter().map(|r| r.n_nodes).collect();
        node_counts.sort_unstable();
        node_counts.dedup();
        let mut categories: Vec<Category> = self.rows.iter().map(|r| r.category).collect();
        categories.sort_unstable();
        categories.dedup();

        let mut out = String::from("## Accuracy by category and node count\n\n");
        out.push_str("| category |");
        for n in &node_counts {
            out.push_str(&format!(" {n} |"));
        }
        out.push_str(" overall |\n|---|");
        for _ in &node_counts {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for &cat in &categories {
            out.push_str(&format!("| {cat} |"));
            for &n in &node_counts {
                let acc = self.row(cat, n).and_then(ReportRow::accuracy);
                out.push_str(&format!(" {} |", Self::fmt_acc(acc)));
            }
            out.push_str(&format!(" {} |\n", Self::fmt_acc(self.category_accuracy(cat))));
        }
        out.push_str(&format!(
            "\nOverall: {} of {} correct ({}).\n",
            self.total_correct,
            self.total_items,
            Self::fmt_acc(self.accuracy())
        ));

        if !self.answer_strata.is_empty() {
            out.push_str("\n## Accuracy by expected answer\n\n| answer | correct | total | accuracy |\n|---|---|---|---|\n");
            for s in &self.answer_strata {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    s.key,
                    s.correct,
                    s.total,
                    Self::fmt_acc(s.accuracy())
                ));
            }
        }
        if !self.domain_strata.is_empty() {
            out.push_str("\n## Accuracy by domain\n\n| domain | correct | total | accuracy |\n|---|---|---|---|\n");
            for s in &self.domain_strata {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    s.key,
                    s.correct,
                    s.total,
                    Self::fmt_acc(s.accuracy())
                ));
            }
        }
        if !self.failures.is_empty() {
            out.push_str(&format!("\nIncorrect items: {}\n", self.failures.join(", ")));
        }
        out
    }
}

fn answer_is_correct(item: &BenchItem, answer: &ParsedAnswer, cfg: &ScoreConfig) -> (bool, Option<usize>) {
    match (&item.ground_truth, answer) {
        (GroundTruth::Verdict { value }, ParsedAnswer::Verdict(v)) => (v == value, None),
        (GroundTruth::Graph { value }, ParsedAnswer::Graph(g)) => {
            let distance = shd(value, g).ok();
            (g == value, distance)
        }
        (GroundTruth::Number { value }, ParsedAnswer::Number(x)) => {
            ((x - value).abs() <= cfg.ate_rel_tol * value.abs() + 1e-12, None)
        }
        _ => (false, None),
    }
}

/// Scores `answers` against `items` pairwise. Aggregation is
/// permutation-invariant; failure ids are sorted.
pub fn score(items: &[BenchItem], answers: &[ParsedAnswer], cfg: &ScoreConfig) -> Result<BenchReport> {
    if items.len() != answers.len() {
        return Err(Error::ArityMismatch {
            expected: items.len(),
            found: answers.len(),
        });
    }
    struct Cell {
        correct: usize,
        total: usize,
        shd_sum: usize,
        shd_n: usize,
    }
    let mut cells: BTreeMap<(Category, usize), Cell> = BTreeMap::new();
    let mut by_answer: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut by_domain: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut total_correct = 0;

    for (item, answer) in items.iter().zip(answers) {
        let (correct, distance) = answer_is_correct(item, answer, cfg);
        let cell = cells
            .entry((item.category, item.n_nodes))
            .or_insert(Cell { correct: 0, total: 0, shd_sum: 0, shd_n: 0 });
        cell.total += 1;
        if correct {
            cell.correct += 1;
            total_correct += 1;
        } else {
            failures.push(item.id.clone());
        }
        if let Some(d) = distance {
            cell.shd_sum += d;
            cell.shd_n += 1;
        }
        if let GroundTruth::Verdict { value } = &item.ground_truth {
            let s = by_answer.entry(value.to_string()).or_insert((0, 0));
            s.1 += 1;
            if correct {
                s.0 += 1;
            }
        }
        let d = by_domain.entry(item.domain.to_string()).or_insert((0, 0));
        d.1 += 1;
        if correct {
            d.0 += 1;
        }
    }

    failures.sort();
    Ok(BenchReport {
        rows: cells
            .into_iter()
            .map(|((category, n_nodes), c)| ReportRow {
                category,
                n_nodes,
                correct: c.correct,
                total: c.total,
                mean_shd: if c.shd_n == 0 {
                    None
                } else {
                    Some(c.shd_sum as f64 / c.shd_n as f64)
                },
            })
            .collect(),
        answer_strata: by_answer
            .into_iter()
            .map(|(key, (correct, total))| StratumRow { key, correct, total })
            .collect(),
        domain_strata: by_domain
            .into_iter()
            .map(|(key, (correct, total))| StratumRow { key, correct, total })
            .collect(),
        failures,
        total_correct,
        total_items: items.len(),
    })
}
