//! Extraction of tool calls from raw model text and schema checks against
//! the candidate list.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{FunctionSpec, ToolCall};

/// Result of reading one model response. `Calls` is never empty; a literal
/// `[]` becomes `Empty`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseOutcome {
    Calls { calls: Vec<ToolCall> },
    Empty,
    ParseError { cause: String },
}

impl ParseOutcome {
    pub fn calls(&self) -> &[ToolCall] {
        match self {
            ParseOutcome::Calls { calls } => calls,
            _ => &[],
        }
    }

    pub fn is_parse_error(&self) -> bool {
        matches!(self, ParseOutcome::ParseError { .. })
    }

    pub fn from_calls(calls: Vec<ToolCall>) -> Self {
        if calls.is_empty() {
            ParseOutcome::Empty
        } else {
            ParseOutcome::Calls { calls }
        }
    }

    pub fn error(cause: impl Into<String>) -> Self {
        ParseOutcome::ParseError { cause: cause.into() }
    }
}

/// Contents of each ```` ``` ```` fenced block, language tag stripped.
/// An unterminated final fence runs to the end of the text.
pub fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // the language tag runs to the end of the opening line
        let body_start = match after.find('\n') {
            Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric() || "_-+.".contains(c)) => nl + 1,
            _ => 0,
        };
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// First complete JSON array or object in `text`, parsed strictly.
/// Returns the value or, if something JSON-like started but failed to
/// parse, the first parser error.
fn first_json_value(text: &str) -> Result<Value, Option<String>> {
    let mut first_err = None;
    for (i, c) in text.char_indices() {
        if c != '[' && c != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) => return Ok(v),
            Some(Err(e)) if first_err.is_none() && looks_like_json_start(&text[i..]) => {
                first_err = Some(e.to_string());
            }
            _ => {}
        }
    }
    Err(first_err)
}

fn looks_like_json_start(s: &str) -> bool {
    let rest = s[1..].trim_start();
    rest.starts_with(['{', '[', '"', ']', '}']) || rest.is_empty()
}

pub fn extract_calls(raw: &str) -> ParseOutcome {
    let blocks = fenced_blocks(raw);
    let mut fence_err = None;
    for block in &blocks {
        let trimmed = block.trim();
        if !trimmed.starts_with('[') && !trimmed.starts_with('{') {
            continue;
        }
        match serde_json::from_str::<Value>(trimmed) {
            Ok(v) => return outcome_from_value(v),
            Err(e) => {
                fence_err.get_or_insert_with(|| format!("invalid JSON in code fence: {e}"));
            }
        }
    }
    if let Some(cause) = fence_err {
        return ParseOutcome::error(cause);
    }
    match first_json_value(raw) {
        Ok(v) => outcome_from_value(v),
        Err(Some(e)) => ParseOutcome::error(format!("invalid JSON: {e}")),
        Err(None) => ParseOutcome::error("no JSON array found"),
    }
}

fn outcome_from_value(v: Value) -> ParseOutcome {
    let items = match v {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => unreachable!("scanner only yields arrays and objects"),
    };
    let mut calls = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let Value::Object(mut obj) = item else {
            return ParseOutcome::error(format!("element {i} is not an object"));
        };
        let name = match obj.remove("name") {
            Some(Value::String(s)) => s,
            Some(_) => return ParseOutcome::error(format!("element {i}: \"name\" is not a string")),
            None => return ParseOutcome::error(format!("element {i}: missing \"name\"")),
        };
        let arguments = match obj.remove("arguments") {
            None => serde_json::Map::new(),
            Some(Value::Object(m)) => m,
            Some(_) => return ParseOutcome::error(format!("element {i}: \"arguments\" is not an object")),
        };
        calls.push(ToolCall { name, arguments });
    }
    ParseOutcome::from_calls(calls)
}

/// Serializes calls the way a compliant model would answer: a fenced,
/// 4-space indented JSON array.
pub fn render_calls(calls: &[ToolCall]) -> String {
    format!("```\n{}\n```", crate::prompting::to_pretty(calls))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownFunction,
    UnknownArgument,
    MissingRequired,
    TypeMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub call_index: usize,
    pub detail: String,
}

/// Checks one call against the candidates. An unknown function short-
/// circuits the other checks.
pub fn validate_call(call: &ToolCall, call_index: usize, candidates: &[FunctionSpec]) -> Vec<Violation> {
    let v = |kind, detail: String| Violation {
        kind,
        call_index,
        detail,
    };
    let Some(func) = candidates.iter().find(|f| f.name == call.name) else {
        return vec![v(ViolationKind::UnknownFunction, format!("no candidate named {:?}", call.name))];
    };
    let mut out = Vec::new();
    for (key, value) in &call.arguments {
        match func.param(key) {
            None => out.push(v(ViolationKind::UnknownArgument, format!("{key:?} is not a parameter of {:?}", func.name))),
            Some(p) if !p.value_type.accepts(value) => out.push(v(
                ViolationKind::TypeMismatch,
                format!("{key:?} expects {}, got {value}", p.value_type),
            )),
            Some(_) => {}
        }
    }
    for p in func.parameters.iter().filter(|p| p.required) {
        if !call.arguments.contains_key(&p.name) {
            out.push(v(ViolationKind::MissingRequired, format!("required {:?} is missing", p.name)));
        }
    }
    out
}

pub fn validate_calls(calls: &[ToolCall], candidates: &[FunctionSpec]) -> Vec<Violation> {
    calls
        .iter()
        .enumerate()
        .flat_map(|(i, c)| validate_call(c, i, candidates))
        .collect()
}
