//! Canonical data model: candidate functions, tool calls, instances, and
//! the structural checks every transform relies on.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Declared type of a parameter value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
    Any,
}

impl ValueType {
    pub const ALL: [ValueType; 7] = [
        ValueType::String,
        ValueType::Integer,
        ValueType::Number,
        ValueType::Boolean,
        ValueType::Array,
        ValueType::Object,
        ValueType::Any,
    ];

    /// Name used in canonical dataset files.
    pub fn canonical_name(self) -> &'static str {
        match self {
            ValueType::String => "string",
            ValueType::Integer => "integer",
            ValueType::Number => "number",
            ValueType::Boolean => "boolean",
            ValueType::Array => "array",
            ValueType::Object => "object",
            ValueType::Any => "any",
        }
    }

    /// Python-flavoured name shown to models inside the tool block.
    pub fn prompt_name(self) -> &'static str {
        match self {
            ValueType::String => "str",
            ValueType::Integer => "int",
            ValueType::Number => "float",
            ValueType::Boolean => "bool",
            ValueType::Array => "list",
            ValueType::Object => "dict",
            ValueType::Any => "any",
        }
    }

    /// Parses a free-form type string such as `"str, optional"`,
    /// `"List[int]"` or `"integer"`.
    ///
    /// Returns the mapped type and whether the string carried an
    /// `optional` marker. Unknown spellings map to [`ValueType::Any`].
    pub fn parse_type_string(raw: &str) -> (ValueType, bool) {
        let lower = raw.trim().to_ascii_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .filter(|w| !w.is_empty())
            .collect();
        let optional = words.contains(&"optional");
        let head = words
            .iter()
            .copied()
            .find(|w| *w != "optional")
            .unwrap_or("");
        let ty = match head {
            "str" | "string" => ValueType::String,
            "int" | "integer" => ValueType::Integer,
            "float" | "number" | "double" => ValueType::Number,
            "bool" | "boolean" => ValueType::Boolean,
            "list" | "array" => ValueType::Array,
            "dict" | "object" => ValueType::Object,
            _ => ValueType::Any,
        };
        (ty, optional)
    }

    /// Strict JSON type check. `null` only passes for [`ValueType::Any`];
    /// integers are accepted where a number is declared.
    pub fn accepts(self, value: &Value) -> bool {
        match self {
            ValueType::Any => true,
            ValueType::String => value.is_string(),
            ValueType::Integer => value.is_i64() || value.is_u64(),
            ValueType::Number => value.is_number(),
            ValueType::Boolean => value.is_boolean(),
            ValueType::Array => value.is_array(),
            ValueType::Object => value.is_object(),
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
    pub value_type: ValueType,
    pub default: Option<Value>,
    pub required: bool,
}

impl ParamSpec {
    pub fn required(
        name: impl Into<String>,
        description: impl Into<String>,
        value_type: ValueType,
    ) -> Self {
        ParamSpec {
            name: name.into(),
            description: description.into(),
            value_type,
            default: None,
            required: true,
        }
    }

    pub fn optional(
        name: impl Into<String>,
        description: impl Into<String>,
        value_type: ValueType,
        default: Option<Value>,
    ) -> Self {
        ParamSpec {
            name: name.into(),
            description: description.into(),
            value_type,
            default,
            required: false,
        }
    }

    /// Whether the default (if any) type-checks against the declared type
    /// after [`crate::metrics::normalize_value`].
    ///
    /// Real-world tool cards routinely violate this (a `"35.779"` string
    /// default on an `int` parameter), so it is exposed as a lint rather
    /// than enforced by [`validate_instance`].
    pub fn default_conforms(&self) -> bool {
        match &self.default {
            None => true,
            Some(v) => self
                .value_type
                .accepts(&crate::metrics::normalize_value(v, self.value_type)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        FunctionSpec {
            name: name.into(),
            description: description.into(),
            parameters: Vec::new(),
        }
    }

    pub fn with_param(mut self, param: ParamSpec) -> Self {
        self.parameters.push(param);
        self
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// One function invocation as emitted by a model or stored as a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        ToolCall {
            name: name.into(),
            arguments: Map::new(),
        }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: Value) -> Self {
        self.arguments.insert(key.into(), value);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub query: String,
    pub candidates: Vec<FunctionSpec>,
    /// Empty means no candidate fits and the model should decline.
    pub gold_calls: Vec<ToolCall>,
}

impl Instance {
    pub fn candidate(&self, name: &str) -> Option<&FunctionSpec> {
        self.candidates.iter().find(|f| f.name == name)
    }

    pub fn is_irrelevance(&self) -> bool {
        self.gold_calls.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Simple,
    Multiple,
    Parallel,
    ParallelMultiple,
    Irrelevance,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Simple,
        TaskKind::Multiple,
        TaskKind::Parallel,
        TaskKind::ParallelMultiple,
        TaskKind::Irrelevance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Simple => "simple",
            TaskKind::Multiple => "multiple",
            TaskKind::Parallel => "parallel",
            TaskKind::ParallelMultiple => "parallel_multiple",
            TaskKind::Irrelevance => "irrelevance",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn derive_task_kind(inst: &Instance) -> TaskKind {
    let many_candidates = inst.candidates.len() > 1;
    match inst.gold_calls.len() {
        0 => TaskKind::Irrelevance,
        1 if many_candidates => TaskKind::Multiple,
        1 => TaskKind::Simple,
        _ if many_candidates => TaskKind::ParallelMultiple,
        _ => TaskKind::Parallel,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyCandidates,
    EmptyFunctionName,
    DuplicateCandidate,
    InvalidParameterName,
    DuplicateParameter,
    RequiredWithDefault,
    UnknownGoldFunction,
    UnknownGoldArgument,
    MissingRequiredArgument,
}

/// A broken instance invariant, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceViolation {
    pub field: String,
    pub rule: Rule,
    pub message: String,
}

impl InstanceViolation {
    fn new(field: impl Into<String>, rule: Rule, message: impl Into<String>) -> Self {
        InstanceViolation {
            field: field.into(),
            rule,
            message: message.into(),
        }
    }
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub fn validate_instance(inst: &Instance) -> Vec<InstanceViolation> {
    let mut out = Vec::new();
    if inst.candidates.is_empty() {
        out.push(InstanceViolation::new(
            "candidates",
            Rule::EmptyCandidates,
            "candidate list is empty",
        ));
    }

    let mut seen = HashSet::new();
    for (i, func) in inst.candidates.iter().enumerate() {
        let field = format!("candidates[{i}]");
        if func.name.is_empty() {
            out.push(InstanceViolation::new(
                format!("{field}.name"),
                Rule::EmptyFunctionName,
                "function name is empty",
            ));
        }
        if !seen.insert(func.name.as_str()) {
            out.push(InstanceViolation::new(
                format!("{field}.name"),
                Rule::DuplicateCandidate,
                format!("duplicate candidate name {:?}", func.name),
            ));
        }
        let mut pnames = HashSet::new();
        for (j, p) in func.parameters.iter().enumerate() {
            let pfield = format!("{field}.parameters[{j}]");
            if p.name.is_empty() || p.name.chars().any(char::is_whitespace) {
                out.push(InstanceViolation::new(
                    format!("{pfield}.name"),
                    Rule::InvalidParameterName,
                    format!("parameter name {:?} is empty or contains whitespace", p.name),
                ));
            }
            if !pnames.insert(p.name.as_str()) {
                out.push(InstanceViolation::new(
                    format!("{pfield}.name"),
                    Rule::DuplicateParameter,
                    format!("duplicate parameter name {:?}", p.name),
                ));
            }
            if p.required && p.default.is_some() {
                out.push(InstanceViolation::new(
                    format!("{pfield}.default"),
                    Rule::RequiredWithDefault,
                    "required parameter carries a default",
                ));
            }
        }
    }

    for (i, call) in inst.gold_calls.iter().enumerate() {
        let field = format!("gold_calls[{i}]");
        let Some(func) = inst.candidate(&call.name) else {
            out.push(InstanceViolation::new(
                format!("{field}.name"),
                Rule::UnknownGoldFunction,
                "gold call references unknown function",
            ));
            continue;
        };
        for key in call.arguments.keys() {
            if func.param(key).is_none() {
                out.push(InstanceViolation::new(
                    format!("{field}.arguments.{key}"),
                    Rule::UnknownGoldArgument,
                    format!("argument {key:?} is not a parameter of {:?}", func.name),
                ));
            }
        }
        for p in func.parameters.iter().filter(|p| p.required) {
            if !call.arguments.contains_key(&p.name) {
                out.push(InstanceViolation::new(
                    format!("{field}.arguments"),
                    Rule::MissingRequiredArgument,
                    format!("required argument {:?} is missing", p.name),
                ));
            }
        }
    }
    out
}
