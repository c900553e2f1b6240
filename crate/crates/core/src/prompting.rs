//! Prompt rendering: task instruction, tool block, format instruction and
//! query, each wrapped in literal section markers.
//!
//! Template files hold the full layout with `{{tools}}` and `{{query}}`
//! placeholders. Only the two instruction texts vary between templates;
//! the markers and separators are fixed.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{FunctionSpec, Instance};

pub const BEGIN_TASK: &str = "[BEGIN OF TASK INSTRUCTION]";
pub const END_TASK: &str = "[END OF TASK INSTRUCTION]";
pub const BEGIN_TOOLS: &str = "[BEGIN OF AVAILABLE TOOLS]";
pub const END_TOOLS: &str = "[END OF AVAILABLE TOOLS]";
pub const BEGIN_FORMAT: &str = "[BEGIN OF FORMAT INSTRUCTION]";
pub const END_FORMAT: &str = "[END OF FORMAT INSTRUCTION]";
pub const BEGIN_QUERY: &str = "[BEGIN OF QUERY]";
pub const END_QUERY: &str = "[END OF QUERY]";

pub const TOOLS_PLACEHOLDER: &str = "{{tools}}";
pub const QUERY_PLACEHOLDER: &str = "{{query}}";

/// The shipped default template file.
pub const DEFAULT_TEMPLATE_TEXT: &str = include_str!("../templates/default.txt");

/// SHA-256 of [`DEFAULT_TEMPLATE_TEXT`].
pub const DEFAULT_TEMPLATE_SHA256: &str = "febe189cdfa15619fa642d3eac57fc2d7d9e91e10aef3c1c0b3e4c8a8fc650ae";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task_instruction: String,
    pub format_instruction: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE_TEXT).expect("bundled template is well-formed")
    }
}

fn layout(task: &str, format: &str, tools: &str, query: &str) -> String {
    format!(
        "{BEGIN_TASK}\n{task}\n{END_TASK}\n\n\
         {BEGIN_TOOLS}\n{tools}\n\n{END_TOOLS}\n\n\
         {BEGIN_FORMAT}\n{format}\n{END_FORMAT}\n\n\
         {BEGIN_QUERY}\n{query}\n{END_QUERY}\n"
    )
}

impl PromptTemplate {
    /// Parses template-file text. The text must be exactly the fixed layout
    /// around the two instruction blocks.
    pub fn parse(text: &str) -> Result<Self> {
        let head = format!("{BEGIN_TASK}\n");
        let middle = format!(
            "\n{END_TASK}\n\n{BEGIN_TOOLS}\n{TOOLS_PLACEHOLDER}\n\n{END_TOOLS}\n\n{BEGIN_FORMAT}\n"
        );
        let tail = format!("\n{END_FORMAT}\n\n{BEGIN_QUERY}\n{QUERY_PLACEHOLDER}\n{END_QUERY}\n");
        let body = text
            .strip_prefix(head.as_str())
            .ok_or_else(|| Error::Template(format!("template must start with {BEGIN_TASK:?}")))?;
        let body = body
            .strip_suffix(tail.as_str())
            .ok_or_else(|| Error::Template("template must end with the query section".into()))?;
        let (task, format) = body
            .split_once(middle.as_str())
            .ok_or_else(|| Error::Template("tools section missing or malformed".into()))?;
        let tmpl = PromptTemplate {
            task_instruction: task.to_string(),
            format_instruction: format.to_string(),
        };
        if tmpl.to_file_text() != text {
            return Err(Error::Template("instruction text contains section markers".into()));
        }
        Ok(tmpl)
    }

    pub fn to_file_text(&self) -> String {
        layout(
            &self.task_instruction,
            &self.format_instruction,
            TOOLS_PLACEHOLDER,
            QUERY_PLACEHOLDER,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dataset::write_atomic(path, self.to_file_text().as_bytes())
    }

    /// Bytes contributed by markers and separators alone.
    pub fn fixed_len() -> usize {
        layout("", "", "", "").len()
    }
}

/// Serializes candidates as the tool block: a JSON array with 4-space
/// indentation, tool keys `name, description, parameters` and parameter
/// keys `description, type, default` (default omitted when absent).
pub fn render_tools_json(candidates: &[FunctionSpec]) -> String {
    let tools: Vec<Value> = candidates.iter().map(tool_value).collect();
    to_pretty(&Value::Array(tools))
}

fn tool_value(f: &FunctionSpec) -> Value {
    let mut params = Map::new();
    for p in &f.parameters {
        let mut po = Map::new();
        po.insert("description".into(), Value::String(p.description.clone()));
        po.insert("type".into(), Value::String(p.value_type.prompt_name().into()));
        if let Some(d) = &p.default {
            po.insert("default".into(), d.clone());
        }
        params.insert(p.name.clone(), Value::Object(po));
    }
    let mut tool = Map::new();
    tool.insert("name".into(), Value::String(f.name.clone()));
    tool.insert("description".into(), Value::String(f.description.clone()));
    tool.insert("parameters".into(), Value::Object(params));
    Value::Object(tool)
}

/// 4-space indented JSON, the house style for everything shown to a model.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).expect("JSON values always serialize");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Parses a tool block back into candidates. Requiredness is not part of the
/// block, so a parameter reads back as required exactly when it has no
/// default.
pub fn parse_tools_json(text: &str) -> Result<Vec<FunctionSpec>> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Array(items) = value else {
        return Err(Error::Template("tool block is not a JSON array".into()));
    };
    items
        .iter()
        .map(|v| crate::dataset::function_from_value(v).map_err(Error::Template))
        .collect()
}

pub fn render_prompt(inst: &Instance, tmpl: &PromptTemplate) -> String {
    layout(
        &tmpl.task_instruction,
        &tmpl.format_instruction,
        &render_tools_json(&inst.candidates),
        &inst.query,
    )
}

/// Extracts the tool block from a rendered prompt.
pub fn tools_section(prompt: &str) -> Option<&str> {
    let start = prompt.find(&format!("{BEGIN_TOOLS}\n"))? + BEGIN_TOOLS.len() + 1;
    let end = prompt[start..].find(&format!("\n\n{END_TOOLS}"))? + start;
    Some(&prompt[start..end])
}
