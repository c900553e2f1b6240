//! Deterministic probe models.
//!
//! `Oracle` replays the gold answer. `NameBias` and `DescMatch` pick the
//! candidate whose name (resp. description) shares the most word tokens with
//! the query, mimicking a model that leans on names versus one that reads
//! descriptions.

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::masking::MaskMapping;
use crate::model::{FunctionSpec, Instance, ToolCall, ValueType};
use crate::parsing::render_calls;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    Oracle,
    NameBias,
    DescMatch,
}

impl FromStr for BuiltinKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(BuiltinKind::Oracle),
            "name-bias" | "name_bias" => Ok(BuiltinKind::NameBias),
            "desc-match" | "desc_match" => Ok(BuiltinKind::DescMatch),
            other => Err(format!("unknown builtin model {other:?}")),
        }
    }
}

/// What a builtin sees: the rendered prompt and the (possibly masked)
/// instance it came from.
#[derive(Clone, Copy, Debug)]
pub struct ModelContext<'a> {
    pub prompt: &'a str,
    pub instance: &'a Instance,
    pub mapping: Option<&'a MaskMapping>,
}

/// Lowercased alphanumeric runs.
pub fn word_tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Index of the candidate with the largest token overlap; ties go to the
/// lowest index.
pub fn select_candidate(query: &str, candidates: &[FunctionSpec], key: impl Fn(&FunctionSpec) -> &str) -> Option<usize> {
    let q = word_tokens(query);
    let mut best: Option<(usize, usize)> = None;
    for (i, f) in candidates.iter().enumerate() {
        let score = word_tokens(key(f)).intersection(&q).count();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

fn zero_value(ty: ValueType) -> Value {
    match ty {
        ValueType::String | ValueType::Any => json!(""),
        ValueType::Integer => json!(0),
        ValueType::Number => json!(0.0),
        ValueType::Boolean => json!(false),
        ValueType::Array => json!([]),
        ValueType::Object => json!({}),
    }
}

/// Call that fills optional parameters with their defaults and required
/// ones with an empty / zero value.
pub fn placeholder_call(f: &FunctionSpec) -> ToolCall {
    let mut call = ToolCall::new(f.name.clone());
    for p in &f.parameters {
        if p.required {
            call.arguments.insert(p.name.clone(), zero_value(p.value_type));
        } else if let Some(d) = &p.default {
            call.arguments.insert(p.name.clone(), d.clone());
        }
    }
    call
}

pub fn builtin_model(kind: BuiltinKind, ctx: ModelContext<'_>) -> String {
    let inst = ctx.instance;
    let calls = match kind {
        BuiltinKind::Oracle => inst.gold_calls.clone(),
        BuiltinKind::NameBias => select_candidate(&inst.query, &inst.candidates, |f| &f.name)
            .map(|i| vec![placeholder_call(&inst.candidates[i])])
            .unwrap_or_default(),
        BuiltinKind::DescMatch => select_candidate(&inst.query, &inst.candidates, |f| &f.description)
            .map(|i| vec![placeholder_call(&inst.candidates[i])])
            .unwrap_or_default(),
    };
    render_calls(&calls)
}
