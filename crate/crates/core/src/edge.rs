//! Edge-relation verdicts on mixed graphs.
//!
//! A partially directed graph stands for its whole class of consistent
//! DAG extensions, so "is x a direct cause of y", "do x and y share a
//! collider", and "are x and y confounded" are answered by quantifying
//! over every extension: yes when the property holds in all of them,
//! no when it holds in none, uncertain otherwise. On a fully directed
//! graph the class is a singleton and the verdict is the plain
//! evaluation. Hitting the extension cap downgrades the verdict to
//! uncertain instead of trusting a truncated survey.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BackdoorPath, CausalGraph, DEFAULT_EXTENSION_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Uncertain,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "yes",
            Verdict::No => "no",
            Verdict::Uncertain => "uncertain",
        })
    }
}

impl Verdict {
    pub fn parse(text: &str) -> Option<Verdict> {
        match text.trim().to_lowercase().as_str() {
            "yes" => Some(Verdict::Yes),
            "no" => Some(Verdict::No),
            "uncertain" => Some(Verdict::Uncertain),
            _ => None,
        }
    }
}

/// Verdict plus the evidence behind it. A yes always carries at least
/// one witness; a no never does.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeVerdict {
    pub verdict: Verdict,
    pub witnesses: Vec<String>,
    pub narrative: String,
}

fn check_pair(g: &CausalGraph, x: &str, y: &str) -> Result<()> {
    let xi = g.node_index(x)?;
    let yi = g.node_index(y)?;
    if xi == yi {
        return Err(Error::SameVariable { name: x.to_string() });
    }
    Ok(())
}

fn uncertain(narrative: String) -> EdgeVerdict {
    EdgeVerdict {
        verdict: Verdict::Uncertain,
        witnesses: Vec::new(),
        narrative,
    }
}

/// Whether `x` directly causes `y`. An undirected link yields a
/// definite answer only when every consistent extension orients it the
/// same way.
pub fn determine_direct_cause(g: &CausalGraph, x: &str, y: &str) -> Result<EdgeVerdict> {
    check_pair(g, x, y)?;
    let (fwd, bwd) = if g.has_directed(x, y)? {
        (true, false)
    } else if g.has_directed(y, x)? {
        (false, true)
    } else if !g.has_undirected(x, y)? {
        return Ok(EdgeVerdict {
            verdict: Verdict::No,
            witnesses: Vec::new(),
            narrative: format!("There is no direct edge linking {x} and {y}"),
        });
    } else {
        let ext = g.enumerate_dag_extensions(DEFAULT_EXTENSION_CAP)?;
        if ext.truncated {
            return Ok(uncertain(format!(
                "The graph has too many consistent extensions to survey, so the direction of the edge between {x} and {y} is uncertain"
            )));
        }
        let mut fwd = true;
        let mut bwd = true;
        for d in &ext.graphs {
            if d.has_directed(x, y)? {
                bwd = false;
            } else {
                fwd = false;
            }
        }
        (fwd, bwd)
    };
    Ok(if fwd {
        EdgeVerdict {
            verdict: Verdict::Yes,
            witnesses: vec![format!("{x} -> {y}")],
            narrative: format!("There is a direct edge {x} -> {y}, so {x} is a direct cause of {y}"),
        }
    } else if bwd {
        EdgeVerdict {
            verdict: Verdict::No,
            witnesses: Vec::new(),
            narrative: format!("There is a direct edge {y} -> {x}, so {x} is an effect of {y}"),
        }
    } else {
        uncertain(format!(
            "The edge between {x} and {y} is undirected in the equivalence class, so its direction is uncertain"
        ))
    })
}

/// Whether `x` and `y` share a directed common child in every
/// consistent extension.
pub fn determine_collider(g: &CausalGraph, x: &str, y: &str) -> Result<EdgeVerdict> {
    check_pair(g, x, y)?;
    let ext = g.enumerate_dag_extensions(DEFAULT_EXTENSION_CAP)?;
    if ext.truncated {
        return Ok(uncertain(format!(
            "The graph has too many consistent extensions to survey, so it is uncertain whether there exists a collider of {x} and {y}"
        )));
    }
    let mut per_extension = Vec::with_capacity(ext.graphs.len());
    for d in &ext.graphs {
        per_extension.push(d.v_structure_colliders(x, y)?);
    }
    let all_have = per_extension.iter().all(|c| !c.is_empty());
    let none_have = per_extension.iter().all(|c| c.is_empty());
    if all_have {
        // Prefer children shared by every extension, then the ones
        // already compelled in the input, then the first extension's.
        let mut common: BTreeSet<String> = per_extension[0].iter().cloned().collect();
        for c in &per_extension[1..] {
            let here: BTreeSet<String> = c.iter().cloned().collect();
            common = common.intersection(&here).cloned().collect();
        }
        let witnesses: Vec<String> = if !common.is_empty() {
            common.into_iter().collect()
        } else {
            let compelled = g.v_structure_colliders(x, y)?;
            if compelled.is_empty() {
                per_extension[0].clone()
            } else {
                compelled
            }
        };
        let narrative = format!(
            "There exists at least one collider {} of {x} and {y}",
            witnesses[0]
        );
        Ok(EdgeVerdict {
            verdict: Verdict::Yes,
            witnesses,
            narrative,
        })
    } else if none_have {
        Ok(EdgeVerdict {
            verdict: Verdict::No,
            witnesses: Vec::new(),
            narrative: format!("There don't exists collider of {x} and {y}"),
        })
    } else {
        Ok(uncertain(format!(
            "It is uncertain whether there exists a collider of {x} and {y}: undetermined edge directions decide it"
        )))
    }
}

/// Whether an open backdoor path joins `x` and `y` in every consistent
/// extension, i.e. whether the pair is confounded.
pub fn determine_confounder(g: &CausalGraph, x: &str, y: &str) -> Result<EdgeVerdict> {
    check_pair(g, x, y)?;
    let ext = g.enumerate_dag_extensions(DEFAULT_EXTENSION_CAP)?;
    if ext.truncated {
        return Ok(uncertain(format!(
            "The graph has too many consistent extensions to survey, so it is uncertain whether a confounder of {x} and {y} exists"
        )));
    }
    let mut per_extension: Vec<Vec<BackdoorPath>> = Vec::with_capacity(ext.graphs.len());
    for d in &ext.graphs {
        per_extension.push(d.find_backdoor_paths(x, y)?);
    }
    let all_have = per_extension.iter().all(|p| !p.is_empty());
    let none_have = per_extension.iter().all(|p| p.is_empty());
    if all_have {
        let mut common: BTreeSet<&BackdoorPath> = per_extension[0].iter().collect();
        for paths in &per_extension[1..] {
            let here: BTreeSet<&BackdoorPath> = paths.iter().collect();
            common = common.intersection(&here).copied().collect();
        }
        let shortest = |paths: &mut dyn Iterator<Item = &BackdoorPath>| -> BackdoorPath {
            paths
                .min_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.cmp(b)))
                .expect("non-empty path set")
                .clone()
        };
        let witness = if !common.is_empty() {
            shortest(&mut common.into_iter())
        } else {
            shortest(&mut per_extension[0].iter())
        };
        Ok(EdgeVerdict {
            verdict: Verdict::Yes,
            narrative: format!(
                "yes, There is an unblocked backdoor path between {x} and {y} so confounder exists. Backdoor path: {witness}"
            ),
            witnesses: vec![witness.to_string()],
        })
    } else if none_have {
        Ok(EdgeVerdict {
            verdict: Verdict::No,
            witnesses: Vec::new(),
            narrative: format!(
                "no, There is no unblocked backdoor path between {x} and {y} so no confounder exists"
            ),
        })
    } else {
        Ok(uncertain(format!(
            "uncertain, whether an unblocked backdoor path joins {x} and {y} depends on undetermined edge directions"
        )))
    }
}
