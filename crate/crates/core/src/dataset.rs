//! Dataset persistence.
//!
//! The canonical on-disk shape is JSONL, one record per line:
//!
//! ```text
//! {"id": .., "query": .., "tools": [{"name", "description",
//!   "parameters": {pname: {"description", "type", "default"?, "required"}}}],
//!  "answers": [{"name", "arguments"}]}
//! ```
//!
//! The xLAM ingestion format is a single JSON array whose `tools` and
//! `answers` fields may themselves be JSON-encoded strings.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{validate_instance, FunctionSpec, Instance, InstanceViolation, ParamSpec, ToolCall, ValueType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Canonical,
    Xlam,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    /// The record could not be decoded into an instance at all.
    Malformed { cause: String },
    /// The record decoded but breaks instance invariants.
    Invalid { violations: Vec<InstanceViolation> },
}

/// A record skipped during loading. `line` is the 1-based line number for
/// JSONL input and the 1-based array position for xLAM input.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordIssue {
    pub line: usize,
    pub id: Option<String>,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl RecordIssue {
    pub fn is_malformed(&self) -> bool {
        matches!(self.kind, IssueKind::Malformed { .. })
    }

    pub fn cause(&self) -> String {
        match &self.kind {
            IssueKind::Malformed { cause } => cause.clone(),
            IssueKind::Invalid { violations } => violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub instances: Vec<Instance>,
    pub issues: Vec<RecordIssue>,
}

/// Loads a dataset. Bad records are collected into
/// [`LoadReport::issues`]; with `strict` the first one aborts the load.
pub fn load_dataset(path: &Path, format: DatasetFormat, strict: bool) -> Result<LoadReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::Canonical => parse_canonical_jsonl(&text, strict),
        DatasetFormat::Xlam => parse_xlam(&text, strict),
    }
}

pub fn parse_canonical_jsonl(text: &str, strict: bool) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let decoded = serde_json::from_str::<Value>(line)
            .map_err(|e| e.to_string())
            .and_then(|v| instance_from_record(&v, None));
        accept(&mut report, idx + 1, decoded, strict)?;
    }
    Ok(report)
}

pub fn parse_xlam(text: &str, strict: bool) -> Result<LoadReport> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
        line: e.line(),
        cause: e.to_string(),
    })?;
    let Value::Array(records) = root else {
        return Err(Error::MalformedRecord {
            line: 1,
            cause: "xlam input must be a JSON array".into(),
        });
    };
    let mut report = LoadReport::default();
    for (idx, rec) in records.iter().enumerate() {
        let decoded = instance_from_record(rec, Some(idx));
        accept(&mut report, idx + 1, decoded, strict)?;
    }
    Ok(report)
}

fn accept(
    report: &mut LoadReport,
    line: usize,
    decoded: std::result::Result<Instance, String>,
    strict: bool,
) -> Result<()> {
    let issue = match decoded {
        Ok(inst) => {
            let violations = validate_instance(&inst);
            if violations.is_empty() {
                report.instances.push(inst);
                return Ok(());
            }
            RecordIssue {
                line,
                id: Some(inst.id),
                kind: IssueKind::Invalid { violations },
            }
        }
        Err(cause) => RecordIssue {
            line,
            id: None,
            kind: IssueKind::Malformed { cause },
        },
    };
    if strict {
        return Err(Error::MalformedRecord {
            line,
            cause: issue.cause(),
        });
    }
    report.issues.push(issue);
    Ok(())
}

/// Decodes one record. Accepts both the canonical layout and xLAM's
/// string-embedded `tools` / `answers` fields. `position` supplies an id
/// when the record has none.
pub fn instance_from_record(rec: &Value, position: Option<usize>) -> std::result::Result<Instance, String> {
    let obj = rec.as_object().ok_or("record is not a JSON object")?;
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        None => match position {
            Some(p) => p.to_string(),
            None => return Err("missing field \"id\"".into()),
        },
        Some(other) => return Err(format!("\"id\" must be a string or number, got {other}")),
    };
    let query = match obj.get("query") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("\"query\" must be a string".into()),
        None => return Err("missing field \"query\"".into()),
    };
    let tools = unembed(obj.get("tools"), "tools")?;
    let answers = unembed(obj.get("answers"), "answers")?;

    let candidates = tools
        .iter()
        .enumerate()
        .map(|(i, t)| function_from_value(t).map_err(|e| format!("tools[{i}]: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if candidates.is_empty() {
        return Err("record has zero candidate tools".into());
    }
    let gold_calls = answers
        .iter()
        .enumerate()
        .map(|(i, a)| call_from_value(a).map_err(|e| format!("answers[{i}]: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Instance {
        id,
        query,
        candidates,
        gold_calls,
    })
}

fn unembed(field: Option<&Value>, name: &str) -> std::result::Result<Vec<Value>, String> {
    match field {
        None => Err(format!("missing field {name:?}")),
        Some(Value::Array(items)) => Ok(items.clone()),
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Array(items)) => Ok(items),
            Ok(_) => Err(format!("embedded {name:?} is not a JSON array")),
            Err(e) => Err(format!("embedded {name:?} is not valid JSON: {e}")),
        },
        Some(_) => Err(format!("{name:?} must be an array or a JSON string")),
    }
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str, required: bool) -> std::result::Result<&'a str, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("{key:?} must be a string")),
        None if required => Err(format!("missing field {key:?}")),
        None => Ok(""),
    }
}

pub(crate) fn function_from_value(v: &Value) -> std::result::Result<FunctionSpec, String> {
    let obj = v.as_object().ok_or("tool is not an object")?;
    let name = str_field(obj, "name", true)?.to_string();
    let description = str_field(obj, "description", false)?.to_string();
    let parameters = match obj.get("parameters") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Object(params)) if is_json_schema(params) => schema_params(params)?,
        Some(Value::Object(params)) => params
            .iter()
            .map(|(pname, pv)| param_from_value(pname, pv, None))
            .collect::<std::result::Result<_, _>>()?,
        Some(_) => return Err("\"parameters\" must be an object".into()),
    };
    Ok(FunctionSpec {
        name,
        description,
        parameters,
    })
}

fn is_json_schema(params: &Map<String, Value>) -> bool {
    params.get("type") == Some(&Value::String("object".into())) && params.get("properties").is_some_and(Value::is_object)
}

fn schema_params(schema: &Map<String, Value>) -> std::result::Result<Vec<ParamSpec>, String> {
    let required: Vec<&str> = schema
        .get("required")
        .and_then(Value::as_array)
        .map(|r| r.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let props = schema["properties"].as_object().expect("checked by is_json_schema");
    props
        .iter()
        .map(|(pname, pv)| param_from_value(pname, pv, Some(required.contains(&pname.as_str()))))
        .collect()
}

fn param_from_value(name: &str, v: &Value, schema_required: Option<bool>) -> std::result::Result<ParamSpec, String> {
    let obj = v.as_object().ok_or_else(|| format!("parameter {name:?} is not an object"))?;
    let description = str_field(obj, "description", false)?.to_string();
    let (value_type, optional_marker) = match obj.get("type") {
        Some(Value::String(t)) => ValueType::parse_type_string(t),
        None => (ValueType::Any, false),
        Some(_) => return Err(format!("parameter {name:?}: \"type\" must be a string")),
    };
    let default = obj.get("default").cloned();
    let required = match obj.get("required") {
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(format!("parameter {name:?}: \"required\" must be a boolean")),
        None => schema_required.unwrap_or(default.is_none() && !optional_marker),
    };
    Ok(ParamSpec {
        name: name.to_string(),
        description,
        value_type,
        default,
        required,
    })
}

fn call_from_value(v: &Value) -> std::result::Result<ToolCall, String> {
    let obj = v.as_object().ok_or("answer is not an object")?;
    let name = str_field(obj, "name", true)?.to_string();
    let arguments = match obj.get("arguments") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(m)) => m,
            _ => return Err("\"arguments\" string is not a JSON object".into()),
        },
        Some(_) => return Err("\"arguments\" must be an object".into()),
    };
    Ok(ToolCall { name, arguments })
}

/// Canonical record for one instance, keys in the fixed on-disk order.
pub fn instance_to_record(inst: &Instance) -> Value {
    let tools: Vec<Value> = inst.candidates.iter().map(function_to_value).collect();
    let answers: Vec<Value> = inst
        .gold_calls
        .iter()
        .map(|c| json!({"name": c.name, "arguments": c.arguments}))
        .collect();
    json!({
        "id": inst.id,
        "query": inst.query,
        "tools": tools,
        "answers": answers,
    })
}

fn function_to_value(f: &FunctionSpec) -> Value {
    let mut params = Map::new();
    for p in &f.parameters {
        let mut po = Map::new();
        po.insert("description".into(), Value::String(p.description.clone()));
        po.insert("type".into(), Value::String(p.value_type.canonical_name().into()));
        if let Some(d) = &p.default {
            po.insert("default".into(), d.clone());
        }
        po.insert("required".into(), Value::Bool(p.required));
        params.insert(p.name.clone(), Value::Object(po));
    }
    json!({"name": f.name, "description": f.description, "parameters": params})
}

pub fn to_jsonl(insts: &[Instance]) -> String {
    let mut out = String::new();
    for inst in insts {
        out.push_str(&instance_to_record(inst).to_string());
        out.push('\n');
    }
    out
}

pub fn save_dataset(insts: &[Instance], path: &Path) -> Result<()> {
    write_atomic(path, to_jsonl(insts).as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes any serializable rows as JSONL.
pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                cause: e.to_string(),
            })
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> Value {
        json!({
            "id": 7,
            "query": "Where is the weather nice?",
            "answers": [{"name": "get_weather", "arguments": {"city": "Oslo"}}],
            "tools": [{
                "name": "get_weather",
                "description": "Weather for a city.",
                "parameters": {
                    "city": {"description": "City name.", "type": "str", "default": "London"},
                    "units": {"description": "Unit system.", "type": "str, optional"},
                    "days": {"description": "Days ahead.", "type": "int"}
                }
            }]
        })
    }

    #[test]
    fn xlam_requiredness_and_types() {
        let mut rec = record();
        rec["answers"][0]["arguments"]["days"] = json!(3);
        let inst = instance_from_record(&rec, None).unwrap();
        assert_eq!(inst.id, "7");
        let f = &inst.candidates[0];
        assert!(!f.param("city").unwrap().required);
        assert!(!f.param("units").unwrap().required);
        assert!(f.param("days").unwrap().required);
        assert_eq!(f.param("days").unwrap().value_type, ValueType::Integer);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn embedded_strings_decode_like_arrays() {
        let plain = record();
        let mut embedded = plain.clone();
        embedded["tools"] = Value::String(plain["tools"].to_string());
        embedded["answers"] = Value::String(plain["answers"].to_string());
        assert_eq!(
            instance_from_record(&plain, None).unwrap(),
            instance_from_record(&embedded, None).unwrap()
        );
    }

    #[test]
    fn json_schema_parameters_are_understood() {
        let rec = json!({
            "id": "s", "query": "q",
            "tools": [{"name": "f", "description": "d", "parameters": {
                "type": "object",
                "properties": {"a": {"type": "integer", "description": "A"}, "b": {"type": "string"}},
                "required": ["a"]
            }}],
            "answers": []
        });
        let inst = instance_from_record(&rec, None).unwrap();
        let f = &inst.candidates[0];
        assert_eq!(f.parameters.len(), 2);
        assert!(f.param("a").unwrap().required);
        assert!(!f.param("b").unwrap().required);
    }

    #[test]
    fn missing_query_is_malformed() {
        let mut rec = record();
        rec.as_object_mut().unwrap().remove("query");
        let text = format!("{rec}\n");
        let report = parse_canonical_jsonl(&text, false).unwrap();
        assert!(report.instances.is_empty());
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].line, 1);
        assert!(report.issues[0].cause().contains("query"));
        assert!(matches!(
            parse_canonical_jsonl(&text, true),
            Err(Error::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn zero_candidates_rejected() {
        let mut rec = record();
        rec["tools"] = json!([]);
        rec["answers"] = json!([]);
        let report = parse_canonical_jsonl(&format!("{rec}\n"), false).unwrap();
        assert!(report.issues[0].is_malformed());
    }

    #[test]
    fn invalid_records_reported_with_line() {
        let good = record();
        let mut bad = record();
        bad["answers"][0]["name"] = json!("other");
        let text = format!("{good}\n{bad}\n");
        let report = parse_canonical_jsonl(&text, false).unwrap();
        assert_eq!(report.instances.len(), 0, "good record lacks required 'days'");
        assert_eq!(report.issues.len(), 2);
        assert_eq!(report.issues[1].line, 2);
    }

    #[test]
    fn canonical_key_order() {
        let mut rec = record();
        rec["answers"][0]["arguments"]["days"] = json!(3);
        let inst = instance_from_record(&rec, None).unwrap();
        let line = instance_to_record(&inst).to_string();
        assert!(line.starts_with(r#"{"id":"7","query":"#));
        let tools = line.find("\"tools\"").unwrap();
        let answers = line.find("\"answers\"").unwrap();
        assert!(tools < answers);
        assert!(line.contains(
            r#""city":{"description":"City name.","type":"string","default":"London","required":false}"#
        ));
    }

    #[test]
    fn empty_dataset_saves_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        save_dataset(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"");
        let back = load_dataset(&path, DatasetFormat::Canonical, true).unwrap();
        assert!(back.instances.is_empty());
    }
}
