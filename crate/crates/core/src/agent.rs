//! Tool-calling agent loop.
//!
//! A session renders a prompt holding six tool descriptions, a fixed
//! Thought/Action/Action Input/Observation format contract, an
//! optional one-shot demonstration, the question, and the transcript
//! so far; the prompt always ends mid-turn after "Thought: " so the
//! model's continuation is the next step. Model output is parsed into
//! either a tool invocation or a final answer; tool failures and
//! malformed steps are folded back into the transcript as
//! observations, so the loop only aborts when the backend itself
//! fails. Tool results are rendered as short English observations in
//! the same phrasing the demonstration uses, which is what the model
//! is conditioned to read.
//!
//! Backends are pluggable: an HTTP chat-completion client, a scripted
//! replay for regression tests, and an oracle policy that plays the
//! canonical tool sequence for a benchmark item and answers from the
//! observations alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ci::{fisher_z_test, render_observation};
use crate::dml::{estimate_ate, format_sig, DmlConfig};
use crate::edge::{determine_collider, determine_confounder, determine_direct_cause};
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::pc::{run_pc, run_pc_partial};
use crate::qgen::{effect_config, parse_final_answer, renamed_table, BenchItem, Category, ParsedAnswer};
use crate::scm::PoolEntry;
use crate::tabular::DataTable;

/// One-shot demonstration inserted between "Begin!" and the question
/// when in-context learning is on. Frozen text, quirks included: the
/// model sees exactly this.
pub const ICL_DEMO: &str = include_str!("../data/icl_demo.txt");

/// Scripted model outputs replaying the demonstration's tool sequence
/// against a real table. The conditioning variable is spelled
/// correctly here, unlike in the frozen demonstration text, so the
/// tool call resolves.
pub const DEMO_REPLAY_JSON: &str = include_str!("../data/replay_demo.json");

#[derive(Debug, Clone, Copy)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
}

/// The six tools, in the order the prompt lists them.
pub const TOOLS: [ToolSpec; 6] = [
    ToolSpec {
        name: "condition independent test",
        description: "Useful for when you need to test the *** independent or d-separate *** of variable A and variable B condition on variable C. input should be a json with format below {\"filename\":...,\"interesting var\":[...],\"condition\":[...]} interesting var is a list of variables user interested in. for example, if user want to test independent(d-separate) between X and Y condition on Z,W,Q , interesting var is [\"X\",\"Y\"] , condition is [\"Z\",\"W\",\"Q\"] . condition is []",
    },
    ToolSpec {
        name: "Generate Causal",
        description: "Useful for when you need to generate causal graph (or partial causal graph). input should be a json with format below {\"filename\":...,\"analyse relationship\":...,\"interesting var\":[...](Optional)} .if you want to analyse relationship between variables( such as cause effect, coufounder , Collider), analyse relationship = \"True\" and please generate complete causal graph and  interesting var is [](which means causal graph contain all variables) .if we only need to generate **partial causal graph** (for example, generate a partial causal graph for some variables), interesting var is used and it's values are list of variables appear in causal graph and analyse relationship is \"False\".Further more, if needed, you can analyse variables relationship in causal graph generated by this tool through these tools : Determine collider,Determine confounder,Determine edge direction",
    },
    ToolSpec {
        name: "Determine collider",
        description: "you should first generate causal graph and then use this tool.Useful When we are interested in whether there is a collider between two variables(ie common effect), we use this tool and the input is {\"cg name\":...,\"interesting var\":[...]}, where interesting var is what Variable we want to test, cg name is the name of causal generated by 'Generate Causal'.The output of the tool is yes or no or uncertainty and may be the variable name of the collider. Make sure the causal graph has been generated before using this tool",
    },
    ToolSpec {
        name: "Determine confounder",
        description: "you should first generate causal graph and then use this tool.Useful When we are interested in whether there is a cofounder (ie common cause) between two variables, we use this tool and the input is {\"cg name\":...,\"interesting var\":[...]}, where interesting var is what Variable we want to test, cg name is the name of causal generated by 'Generate Causal'.The output of the tool is yes or no or uncertainty and the backdoor path that may lead to the existence of the cofounder. Make sure the causal graph has been generated before using this tool",
    },
    ToolSpec {
        name: "Determine edge directions",
        description: "you should first generate causal graph and then use this tool.Useful when we are interested in whether there is a direct edge between two variables and the direction of the edge (such as determining whether A directly leads to B)., we use this tool and the input is {\"cg name\"=...,\"interesting var\"=[...]}, where interesting var is what Variable we want to test, cg name is the name of causal generated by 'Generate Causal'.The output of the tool is the relationship of two variables (ie A cause B). Make sure the causal graph has been generated before using this tool",
    },
    ToolSpec {
        name: "calculate CATE",
        description: "Useful for when you need to calculate (conditional) average treatment effect (ATE or CATE, etc. in math function is E(Y(T=T1)-Y(T=T0) | X=x) and means if we use treatment, what uplift we will get from treatment).This tool use double machine learn algorithm to calculate ate. input is  a json with format {\"filename\":...,config: {Y:[...],T:[...],X:[...],T0:...,T1:...} }. Y are names of outcome, T are names of treatment, X are names of covariate affect both T and Y (i.e. confounder). T1 and T0 are two different values of T that need to be calculated in ATE. you should extract each name from the description.",
    },
];

/// Action names as the format block advertises them; the effect tool
/// is introduced as "calculate CATE" but listed here as "calculate
/// ATE", and the dispatcher accepts both.
const ACTION_LIST: &str = "[Determine collider,Determine confounder,Determine edge directions,condition independent test,Generate Causal,calculate ATE]";

/// One completed loop iteration. A step without an action records a
/// malformed model reply and the corrective observation it was shown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action_input: Option<String>,
    pub observation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub question: String,
    pub steps: Vec<Step>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_thought: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_answer: Option<String>,
}

impl Transcript {
    pub fn new(question: impl Into<String>) -> Self {
        Transcript {
            question: question.into(),
            steps: Vec::new(),
            final_thought: None,
            final_answer: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("transcript serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Full prompt for the next model call. The text always ends with
/// "Thought: " so the model continues mid-step.
pub fn render_prompt(question: &str, icl: bool, steps: &[Step]) -> String {
    let mut p = String::with_capacity(8192);
    p.push_str("Answer the following questions as best you can. You have access to the following tools:\n\n");
    for tool in &TOOLS {
        p.push_str(tool.name);
        p.push_str(": ");
        p.push_str(tool.description);
        p.push_str("\n\n");
    }
    p.push_str("Use the following format:\n\n");
    p.push_str("Question: the input question you must answer\n");
    p.push_str("Thought: you should always think about what to do\n");
    p.push_str(&format!("Action: the action to take, should be one of {ACTION_LIST}\n"));
    p.push_str("Action Input: the input to the action\n");
    p.push_str("Observation: the result of the action\n");
    p.push_str("... (this Thought/Action/Action Input/Observation can repeat N times)\n");
    p.push_str("Thought: I now know the final answer\n");
    p.push_str("Final Answer: the final answer to the original input question\n\n");
    p.push_str("Begin!\n\n");
    if icl {
        p.push_str("##DEMO:\n");
        p.push_str(ICL_DEMO);
        p.push_str("##Requirement:\nAnswer the following questions with examples:\n\n");
    }
    p.push_str("Question: ");
    p.push_str(question);
    p.push_str("\nThought: ");
    for step in steps {
        p.push_str(&step.thought);
        p.push('\n');
        if let (Some(action), Some(input)) = (&step.action, &step.action_input) {
            p.push_str("Action: ");
            p.push_str(action);
            p.push_str("\nAction Input: ");
            p.push_str(input);
            p.push('\n');
        }
        p.push_str("Observation: ");
        p.push_str(&step.observation);
        p.push_str("\nThought: ");
    }
    p
}

/// Parsed model reply: either a tool call or the final answer.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelStep {
    Act { thought: String, action: String, input: String },
    Finish { thought: String, final_answer: String },
}

/// First balanced JSON object in `text`, tracking strings and escapes.
fn balanced_json(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_string => escaped = true,
            '"' => in_string = !in_string,
            '{' if !in_string => depth += 1,
            '}' if !in_string => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

fn strip_thought(text: &str) -> String {
    let t = text.trim();
    t.strip_prefix("Thought:").unwrap_or(t).trim().to_string()
}

/// Splits a model reply into thought, action, and input, or the final
/// answer. Colons may or may not be followed by a space; a "Final
/// Answer:" line wins over an "Action:" line only when it comes
/// first. The error string is the corrective observation's reason.
pub fn parse_model_step(text: &str) -> std::result::Result<ModelStep, String> {
    // Byte offsets of the first action line and the first final-answer
    // marker, scanning line by line.
    let mut action: Option<(usize, String)> = None;
    let mut final_at: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        if trimmed.strip_prefix("Final Answer:").is_some() {
            if final_at.is_none() {
                let content = offset + indent + "Final Answer:".len();
                final_at = Some((offset, content));
            }
        } else if trimmed.strip_prefix("Action Input:").is_some() {
            // Input lines are located relative to the action line later.
        } else if let Some(rest) = trimmed.strip_prefix("Action:") {
            if action.is_none() {
                action = Some((offset, rest.trim().to_string()));
            }
        }
        offset += line.len();
    }

    let finish = |line_start: usize, content_start: usize| {
        let final_answer = text[content_start..].trim().to_string();
        ModelStep::Finish {
            thought: strip_thought(&text[..line_start]),
            final_answer,
        }
    };

    match (action, final_at) {
        (Some((a_pos, _)), Some((f_pos, f_content))) if f_pos < a_pos => Ok(finish(f_pos, f_content)),
        (None, Some((f_pos, f_content))) => Ok(finish(f_pos, f_content)),
        (Some((a_pos, name)), _) => {
            if name.is_empty() {
                return Err("the Action line names no tool".into());
            }
            let tail = &text[a_pos..];
            let Some(marker) = tail.find("Action Input:") else {
                return Err("an Action line must be followed by an Action Input line".into());
            };
            let input_zone = &tail[marker + "Action Input:".len()..];
            let input = match balanced_json(input_zone) {
                Some(j) => j.to_string(),
                None => input_zone.lines().next().unwrap_or("").trim().to_string(),
            };
            if input.is_empty() {
                return Err("the Action Input is empty".into());
            }
            Ok(ModelStep::Act {
                thought: strip_thought(&text[..a_pos]),
                action: name,
                input,
            })
        }
        (None, None) => Err("no Action or Final Answer found".into()),
    }
}

/// Named causal graphs produced during a session. Names derive from
/// the source file's stem; a taken name gets a counter suffix, so
/// regenerating from 'data.csv' yields 'data', 'data 2', 'data 3'.
#[derive(Debug, Clone, Default)]
pub struct GraphMemory {
    graphs: BTreeMap<String, CausalGraph>,
}

impl GraphMemory {
    pub fn insert(&mut self, base: &str, graph: CausalGraph) -> String {
        let mut name = base.to_string();
        let mut counter = 2;
        while self.graphs.contains_key(&name) {
            name = format!("{base} {counter}");
            counter += 1;
        }
        self.graphs.insert(name.clone(), graph);
        name
    }

    pub fn get(&self, name: &str) -> Result<&CausalGraph> {
        self.graphs.get(name).ok_or_else(|| Error::UnknownGraph {
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.graphs.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

fn file_stem(filename: &str) -> &str {
    let base = filename.rsplit(['/', '\\']).next().unwrap_or(filename);
    base.strip_suffix(".csv").unwrap_or(base)
}

/// Tables a session may read, keyed by file stem. Registered tables
/// win; unknown names fall back to CSV files under the base
/// directory, if one is set.
#[derive(Debug, Default)]
pub struct TableStore {
    tables: BTreeMap<String, DataTable>,
    base_dir: Option<PathBuf>,
}

impl TableStore {
    pub fn new() -> Self {
        TableStore::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        TableStore {
            tables: BTreeMap::new(),
            base_dir: Some(dir.into()),
        }
    }

    /// Registers under the table's own name.
    pub fn insert(&mut self, table: DataTable) {
        self.tables.insert(table.name().to_string(), table);
    }

    pub fn resolve(&mut self, filename: &str) -> Result<&DataTable> {
        let stem = file_stem(filename).to_string();
        if !self.tables.contains_key(&stem) {
            let Some(dir) = &self.base_dir else {
                return Err(Error::io(
                    filename.to_string(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such table is registered"),
                ));
            };
            let path = dir.join(format!("{stem}.csv"));
            let table = DataTable::load_csv(&path)?;
            self.tables.insert(stem.clone(), table);
        }
        Ok(&self.tables[&stem])
    }
}

fn normalize_key(key: &str) -> String {
    key.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Key lookup tolerant of spacing and underscore variants, e.g.
/// "interesting var" matches "interesting_var".
fn get_field<'a>(object: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    for wanted in names {
        let norm = normalize_key(wanted);
        for (key, value) in object {
            if normalize_key(key) == norm {
                return Some(value);
            }
        }
    }
    None
}

fn as_object(input: &str) -> Result<serde_json::Map<String, Value>> {
    let value: Value = serde_json::from_str(input.trim()).map_err(|e| Error::BadToolInput {
        detail: format!("input is not valid json: {e}"),
    })?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(Error::BadToolInput {
            detail: "input must be a json object".into(),
        }),
    }
}

fn string_field(object: &serde_json::Map<String, Value>, names: &[&str]) -> Result<String> {
    match get_field(object, names) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::BadToolInput {
            detail: format!("'{}' must be a string", names[0]),
        }),
        None => Err(Error::BadToolInput {
            detail: format!("missing required key '{}'", names[0]),
        }),
    }
}

/// String list; a bare string is treated as a one-element list.
fn name_list(object: &serde_json::Map<String, Value>, names: &[&str], required: bool) -> Result<Vec<String>> {
    let value = match get_field(object, names) {
        Some(v) => v,
        None if required => {
            return Err(Error::BadToolInput {
                detail: format!("missing required key '{}'", names[0]),
            })
        }
        None => return Ok(Vec::new()),
    };
    match value {
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str().map(str::to_string).ok_or_else(|| Error::BadToolInput {
                    detail: format!("'{}' must list variable names", names[0]),
                })
            })
            .collect(),
        _ => Err(Error::BadToolInput {
            detail: format!("'{}' must be a list of variable names", names[0]),
        }),
    }
}

fn number_field(object: &serde_json::Map<String, Value>, names: &[&str]) -> Result<f64> {
    let value = get_field(object, names).ok_or_else(|| Error::BadToolInput {
        detail: format!("missing required key '{}'", names[0]),
    })?;
    let parsed = match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    parsed.filter(|v| v.is_finite()).ok_or_else(|| Error::BadToolInput {
        detail: format!("'{}' must be a finite number", names[0]),
    })
}

fn pair(list: Vec<String>, what: &str) -> Result<(String, String)> {
    if list.len() != 2 {
        return Err(Error::BadToolInput {
            detail: format!("'{what}' must contain exactly two variable names"),
        });
    }
    let mut it = list.into_iter();
    Ok((it.next().unwrap(), it.next().unwrap()))
}

/// Executes one tool call and renders its observation. Every failure
/// is an error the session loop will show to the model verbatim.
pub fn dispatch_tool(
    tool: &str,
    input: &str,
    tables: &mut TableStore,
    memory: &mut GraphMemory,
    alpha: f64,
) -> Result<String> {
    match tool.trim() {
        "condition independent test" => {
            let object = as_object(input)?;
            let filename = string_field(&object, &["filename", "file name", "file"])?;
            let vars = name_list(&object, &["interesting var", "interesting vars"], true)?;
            let (x, y) = pair(vars, "interesting var")?;
            let conditions = name_list(&object, &["condition", "conditions"], false)?;
            let table = tables.resolve(&filename)?;
            let result = fisher_z_test(table, &x, &y, &conditions, alpha)?;
            Ok(render_observation(&result))
        }
        "Generate Causal" => {
            let object = as_object(input)?;
            let filename = string_field(&object, &["filename", "file name", "file"])?;
            let interesting = name_list(&object, &["interesting var", "interesting vars"], false)?;
            let table = tables.resolve(&filename)?;
            let result = if interesting.is_empty() {
                run_pc(table, alpha)?
            } else {
                run_pc_partial(table, &interesting, alpha)?
            };
            let name = memory.insert(file_stem(&filename), result.graph);
            Ok(format!(
                "causal graph named '{name}' is generate succeed! and have written to the memory."
            ))
        }
        "Determine collider" | "Determine confounder" | "Determine edge directions" => {
            let object = as_object(input)?;
            let cg = string_field(&object, &["cg name", "graph name"])?;
            let vars = name_list(&object, &["interesting var", "interesting vars"], true)?;
            let (x, y) = pair(vars, "interesting var")?;
            let graph = memory.get(&cg)?;
            let verdict = match tool.trim() {
                "Determine collider" => determine_collider(graph, &x, &y)?,
                "Determine confounder" => determine_confounder(graph, &x, &y)?,
                _ => determine_direct_cause(graph, &x, &y)?,
            };
            Ok(verdict.narrative)
        }
        "calculate CATE" | "calculate ATE" => {
            let object = as_object(input)?;
            let filename = string_field(&object, &["filename", "file name", "file"])?;
            let config = match get_field(&object, &["config"]) {
                Some(Value::Object(map)) => map.clone(),
                Some(_) => {
                    return Err(Error::BadToolInput {
                        detail: "'config' must be a json object".into(),
                    })
                }
                // Tolerate flattened inputs that put Y/T/X at the top.
                None => object.clone(),
            };
            let outcomes = name_list(&config, &["Y", "outcome"], true)?;
            let treatments = name_list(&config, &["T", "treatment"], true)?;
            let covariates = name_list(&config, &["X", "covariates"], false)?;
            let (Some(outcome), Some(treatment)) = (outcomes.first(), treatments.first()) else {
                return Err(Error::BadToolInput {
                    detail: "'Y' and 'T' must each name at least one variable".into(),
                });
            };
            let t0 = number_field(&config, &["T0"])?;
            let t1 = number_field(&config, &["T1"])?;
            let table = tables.resolve(&filename)?;
            let cfg = if covariates.is_empty() {
                effect_config(table, outcome, treatment, t0, t1)
            } else {
                DmlConfig::new(outcome.clone(), treatment.clone(), covariates, t0, t1)
            };
            let estimate = estimate_ate(table, &cfg)?;
            Ok(format!(
                "ATE of {treatment} from {} to {} on {outcome} is {}",
                format_sig(t0),
                format_sig(t1),
                format_sig(estimate.ate)
            ))
        }
        other => Err(Error::UnknownTool {
            name: other.to_string(),
            valid: vec![
                "Determine collider".into(),
                "Determine confounder".into(),
                "Determine edge directions".into(),
                "condition independent test".into(),
                "Generate Causal".into(),
                "calculate ATE".into(),
            ],
        }),
    }
}

/// Produces the model's next reply for a rendered prompt.
pub trait ChatBackend {
    fn complete(&mut self, prompt: &str) -> Result<String>;
}

/// Replays a fixed list of model outputs; asking for more than were
/// scripted is an error.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    outputs: Vec<String>,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(outputs: Vec<String>) -> Self {
        ScriptedBackend { outputs, cursor: 0 }
    }

    /// Script as a JSON array of strings.
    pub fn from_json(text: &str) -> Result<Self> {
        let outputs: Vec<String> = serde_json::from_str(text)?;
        Ok(ScriptedBackend::new(outputs))
    }

    pub fn calls(&self) -> usize {
        self.cursor
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, _prompt: &str) -> Result<String> {
        if self.cursor >= self.outputs.len() {
            return Err(Error::ReplayExhausted { calls: self.cursor });
        }
        let out = self.outputs[self.cursor].clone();
        self.cursor += 1;
        Ok(out)
    }
}

/// Chat-completion HTTP client. The request body follows the common
/// messages API: model, temperature, a single user message, and a
/// stop sequence at the observation marker so the model never invents
/// tool results.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
    temperature: f64,
    max_retries: u32,
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
        temperature: f64,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Backend { detail: e.to_string() })?;
        Ok(HttpBackend {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            temperature,
            max_retries: 3,
        })
    }

    fn request(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "stop": ["\nObservation:"],
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response: Value = req
            .send()
            .and_then(reqwest::blocking::Response::error_for_status)
            .and_then(|r| r.json())
            .map_err(|e| Error::Backend { detail: e.to_string() })?;
        response["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Backend {
                detail: "response carries no message content".into(),
            })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, prompt: &str) -> Result<String> {
        let mut last = None;
        for attempt in 0..=self.max_retries {
            match self.request(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    last = Some(e);
                    if attempt < self.max_retries {
                        std::thread::sleep(std::time::Duration::from_secs(1 << attempt));
                    }
                }
            }
        }
        Err(last.expect("at least one attempt ran"))
    }
}

/// Last observation in a rendered prompt's scratchpad. The scan
/// starts at the final question line, past the format contract and
/// the demonstration, which both carry observation markers of their
/// own.
fn last_observation(prompt: &str) -> Option<String> {
    let question_at = prompt.rfind("\nQuestion: ")?;
    let scratchpad = &prompt[question_at..];
    let at = scratchpad.rfind("\nObservation: ")?;
    let rest = &scratchpad[at + "\nObservation: ".len()..];
    let end = rest.find("\nThought:").unwrap_or(rest.len());
    Some(rest[..end].trim().to_string())
}

/// Plays the canonical tool sequence for one benchmark item and turns
/// the final observation into the answer, exercising the full prompt
/// and parsing pipeline without a language model.
pub struct OracleBackend {
    item: BenchItem,
    calls: usize,
}

impl OracleBackend {
    pub fn new(item: BenchItem) -> Self {
        OracleBackend { item, calls: 0 }
    }

    fn act(tool: &str, input: Value) -> String {
        format!("I will use the tool.\nAction: {tool}\nAction Input: {input}")
    }

    fn finish(answer_json: String) -> String {
        format!("I now know the final answer.\nFinal Answer: {answer_json}")
    }

    fn verdict_from(&self, observation: &str) -> &'static str {
        match self.item.category {
            Category::It | Category::Cit | Category::MultCit => {
                if observation.contains("is not independent") {
                    "no"
                } else if observation.contains("is independent") {
                    "yes"
                } else {
                    "uncertain"
                }
            }
            Category::Cause => {
                if observation.contains("is a direct cause of") {
                    "yes"
                } else if observation.contains("uncertain") {
                    "uncertain"
                } else {
                    "no"
                }
            }
            Category::Collider => {
                if observation.contains("There exists at least one collider") {
                    "yes"
                } else if observation.contains("don't exists collider") {
                    "no"
                } else {
                    "uncertain"
                }
            }
            Category::Conf => {
                if observation.starts_with("yes,") {
                    "yes"
                } else if observation.starts_with("no,") {
                    "no"
                } else {
                    "uncertain"
                }
            }
            _ => "uncertain",
        }
    }
}

impl ChatBackend for OracleBackend {
    fn complete(&mut self, prompt: &str) -> Result<String> {
        let stage = self.calls;
        self.calls += 1;
        let item = &self.item;
        let csv = item.csv_name.clone();
        let stem = file_stem(&csv).to_string();
        let exhausted = || Error::Backend {
            detail: format!("oracle policy has no step {stage} for {}", item.category),
        };
        let observation = last_observation(prompt);

        match item.category {
            Category::It | Category::Cit | Category::MultCit => match stage {
                0 => Ok(Self::act(
                    "condition independent test",
                    json!({
                        "filename": csv,
                        "interesting var": [item.variables[0], item.variables[1]],
                        "condition": item.conditions,
                    }),
                )),
                1 => {
                    let obs = observation.ok_or_else(exhausted)?;
                    Ok(Self::finish(format!("{{\"answer\":\"{}\"}}", self.verdict_from(&obs))))
                }
                _ => Err(exhausted()),
            },
            Category::Cause | Category::Collider | Category::Conf => match stage {
                0 => Ok(Self::act(
                    "Generate Causal",
                    json!({"filename": csv, "analyse relationship": "True", "interesting var": []}),
                )),
                1 => {
                    let tool = match item.category {
                        Category::Cause => "Determine edge directions",
                        Category::Collider => "Determine collider",
                        _ => "Determine confounder",
                    };
                    Ok(Self::act(
                        tool,
                        json!({
                            "cg name": stem,
                            "interesting var": [item.variables[0], item.variables[1]],
                        }),
                    ))
                }
                2 => {
                    let obs = observation.ok_or_else(exhausted)?;
                    Ok(Self::finish(format!("{{\"answer\":\"{}\"}}", self.verdict_from(&obs))))
                }
                _ => Err(exhausted()),
            },
            Category::Total | Category::Partial => match stage {
                0 => {
                    let input = if item.category == Category::Total {
                        json!({"filename": csv, "analyse relationship": "True", "interesting var": []})
                    } else {
                        json!({
                            "filename": csv,
                            "analyse relationship": "False",
                            "interesting var": item.conditions,
                        })
                    };
                    Ok(Self::act("Generate Causal", input))
                }
                1 => Ok(Self::finish(format!("{{\"answer\":\"{stem}\"}}"))),
                _ => Err(exhausted()),
            },
            Category::Ate => match stage {
                0 => {
                    let (t0, t1) = item.contrast.ok_or_else(|| Error::Backend {
                        detail: format!("item {} has no treatment contrast", item.id),
                    })?;
                    Ok(Self::act(
                        "calculate CATE",
                        json!({
                            "filename": csv,
                            "config": {
                                "Y": [item.variables[1]],
                                "T": [item.variables[0]],
                                "X": [],
                                "T0": t0,
                                "T1": t1,
                            },
                        }),
                    ))
                }
                1 => {
                    let obs = observation.ok_or_else(exhausted)?;
                    let value = obs.rsplit(" is ").next().unwrap_or("").trim();
                    if value.parse::<f64>().is_err() {
                        return Err(Error::Backend {
                            detail: format!("effect observation did not end in a number: {obs}"),
                        });
                    }
                    Ok(Self::finish(format!("{{\"answer\":{value}}}")))
                }
                _ => Err(exhausted()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    /// Loop iterations before the session gives up without an answer.
    pub max_iterations: usize,
    /// Whether the one-shot demonstration is in the prompt.
    pub icl: bool,
    /// Significance level handed to the independence and discovery
    /// tools.
    pub alpha: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_iterations: 10,
            icl: true,
            alpha: 0.05,
        }
    }
}

#[derive(Debug)]
pub struct SessionResult {
    pub transcript: Transcript,
    /// Graphs generated during the session; graph-level answers are
    /// resolved against these names.
    pub memory: GraphMemory,
    /// Backend failure that ended the session early.
    pub failure: Option<String>,
}

/// Runs the loop to a final answer, the iteration cap, or a backend
/// failure. Tool errors and malformed replies never end the session;
/// they come back as observations.
pub fn run_session(
    question: &str,
    tables: &mut TableStore,
    backend: &mut dyn ChatBackend,
    cfg: &SessionConfig,
) -> SessionResult {
    let mut transcript = Transcript::new(question);
    let mut memory = GraphMemory::default();
    let mut failure = None;
    for _ in 0..cfg.max_iterations {
        let prompt = render_prompt(question, cfg.icl, &transcript.steps);
        let raw = match backend.complete(&prompt) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        match parse_model_step(&raw) {
            Ok(ModelStep::Finish { thought, final_answer }) => {
                transcript.final_thought = Some(thought);
                transcript.final_answer = Some(final_answer);
                break;
            }
            Ok(ModelStep::Act { thought, action, input }) => {
                let observation = dispatch_tool(&action, &input, tables, &mut memory, cfg.alpha)
                    .unwrap_or_else(|e| e.to_string());
                transcript.steps.push(Step {
                    thought,
                    action: Some(action),
                    action_input: Some(input),
                    observation,
                });
            }
            Err(reason) => {
                transcript.steps.push(Step {
                    thought: raw.trim().to_string(),
                    action: None,
                    action_input: None,
                    observation: format!(
                        "Invalid format: {reason}. Reply with 'Action: <tool name>' and 'Action Input: <json>' on separate lines, or with 'Final Answer: <json>'."
                    ),
                });
            }
        }
    }
    SessionResult {
        transcript,
        memory,
        failure,
    }
}

/// Runs one benchmark item end to end: regenerates the item's table
/// under its served name, runs a session, and resolves the final
/// answer for scoring. Graph names are looked up in the session's
/// memory; a missing name, a missing answer, or a backend failure all
/// become format violations so the item scores wrong instead of
/// aborting the suite.
pub fn run_bench_item(
    item: &BenchItem,
    entry: &PoolEntry,
    backend: &mut dyn ChatBackend,
    cfg: &SessionConfig,
) -> Result<(ParsedAnswer, SessionResult)> {
    let mut tables = TableStore::new();
    tables.insert(renamed_table(entry, item)?);
    let result = run_session(&item.question, &mut tables, backend, cfg);
    let answer = match (&result.failure, &result.transcript.final_answer) {
        (Some(reason), _) => ParsedAnswer::FormatViolation(format!("session failed: {reason}")),
        (None, None) => ParsedAnswer::FormatViolation("session ended without a final answer".into()),
        (None, Some(text)) => match parse_final_answer(text, item.category) {
            ParsedAnswer::GraphName(name) => match result.memory.get(&name) {
                Ok(graph) => ParsedAnswer::Graph(graph.clone()),
                Err(_) => ParsedAnswer::FormatViolation(format!(
                    "answer names graph '{name}' which the session never generated"
                )),
            },
            other => other,
        },
    };
    Ok((answer, result))
}
