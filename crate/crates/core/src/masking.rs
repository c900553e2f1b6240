//! Function masking: invertible replacement of function names, parameter
//! names and default values with random tokens, plus naming-style
//! perturbations (snake_case / CamelCase).

use std::collections::HashSet;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::model::{Instance, ToolCall};
use crate::rng;

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
const INNER: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789.";

pub const MAX_TOKEN_RETRIES: usize = 1000;

/// Draws one token: alphanumerics with optional interior dots, first and
/// last characters alphanumeric, length uniform in `[len_min, len_max]`.
///
/// Panics unless `3 <= len_min <= len_max`.
pub fn gen_mask_token<R: Rng + ?Sized>(rng: &mut R, len_min: usize, len_max: usize) -> String {
    assert!(
        3 <= len_min && len_min <= len_max,
        "token bounds must satisfy 3 <= min <= max, got ({len_min}, {len_max})"
    );
    let len = rng.random_range(len_min..=len_max);
    let mut out = String::with_capacity(len);
    for i in 0..len {
        let alphabet = if i == 0 || i == len - 1 { ALNUM } else { INNER };
        out.push(alphabet[rng.random_range(0..alphabet.len())] as char);
    }
    out
}

pub fn is_mask_token(token: &str, len_min: usize, len_max: usize) -> bool {
    let bytes = token.as_bytes();
    let n = bytes.len();
    (len_min..=len_max).contains(&n)
        && bytes[0].is_ascii_alphanumeric()
        && bytes[n - 1].is_ascii_alphanumeric()
        && bytes.iter().all(|b| b.is_ascii_alphanumeric() || *b == b'.')
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub seed: u64,
    pub ratio: f64,
    pub mask_fn_names: bool,
    pub mask_param_names: bool,
    pub randomize_defaults: bool,
    pub token_len_min: usize,
    pub token_len_max: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            seed: 0,
            ratio: 1.0,
            mask_fn_names: true,
            mask_param_names: true,
            randomize_defaults: true,
            token_len_min: 4,
            token_len_max: 12,
        }
    }
}

impl MaskConfig {
    /// Names only, defaults untouched: the test-time probe setting.
    pub fn names_only(seed: u64) -> Self {
        MaskConfig {
            seed,
            randomize_defaults: false,
            ..MaskConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::InvalidConfig(format!("mask ratio {} outside [0, 1]", self.ratio)));
        }
        if self.token_len_min < 3 || self.token_len_min > self.token_len_max {
            return Err(Error::InvalidConfig(format!(
                "token length bounds ({}, {}) must satisfy 3 <= min <= max",
                self.token_len_min, self.token_len_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefaultOverride {
    pub original: Value,
    pub randomized: Value,
}

/// Per-instance name bijections produced by masking or restyling.
///
/// `fn_map` holds only functions whose names changed. `param_maps` has one
/// entry per candidate, keyed by the function's name *after* the
/// transform, holding only parameters whose names changed.
/// `default_overrides` is keyed by transformed function then parameter name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskMapping {
    pub fn_map: IndexMap<String, String>,
    pub param_maps: IndexMap<String, IndexMap<String, String>>,
    #[serde(default)]
    pub default_overrides: IndexMap<String, IndexMap<String, DefaultOverride>>,
}

impl MaskMapping {
    pub fn original_fn_name<'a>(&'a self, name: &'a str) -> Option<&'a str> {
        if let Some((orig, _)) = self.fn_map.iter().find(|(_, m)| m.as_str() == name) {
            return Some(orig);
        }
        // functions left unmasked keep their own name as key
        self.param_maps.contains_key(name).then_some(name)
    }

    /// All tokens introduced by the transform, function tokens first.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.fn_map
            .values()
            .chain(self.param_maps.values().flat_map(|m| m.values()))
            .map(String::as_str)
    }

    /// Rewrites a call from original names into transformed names.
    /// Names absent from the mapping pass through.
    pub fn apply_to_call(&self, call: &ToolCall) -> ToolCall {
        let name = self.fn_map.get(&call.name).cloned().unwrap_or_else(|| call.name.clone());
        let pmap = self.param_maps.get(&name);
        let arguments = call
            .arguments
            .iter()
            .map(|(k, v)| {
                let key = pmap.and_then(|m| m.get(k)).cloned().unwrap_or_else(|| k.clone());
                (key, v.clone())
            })
            .collect();
        ToolCall { name, arguments }
    }
}

/// Sidecar row written next to a masked dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub id: String,
    #[serde(flatten)]
    pub mapping: MaskMapping,
}

struct TokenSource<'a> {
    originals: HashSet<&'a str>,
    used: HashSet<String>,
    len_min: usize,
    len_max: usize,
}

impl TokenSource<'_> {
    fn fresh<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<String> {
        for _ in 0..MAX_TOKEN_RETRIES {
            let token = gen_mask_token(rng, self.len_min, self.len_max);
            if !self.originals.contains(token.as_str()) && !self.used.contains(&token) {
                self.used.insert(token.clone());
                return Ok(token);
            }
        }
        Err(Error::TokenExhaustion {
            retries: MAX_TOKEN_RETRIES,
        })
    }
}

fn random_default<R: Rng + ?Sized>(rng: &mut R, current: &Value, cfg: &MaskConfig) -> Option<Value> {
    match current {
        Value::Number(n) if n.is_i64() || n.is_u64() => Some(Value::from(rng.random_range(-1000i64..=1000))),
        Value::Number(_) => {
            let x: f64 = rng.random_range(-1000.0..=1000.0);
            Number::from_f64((x * 1e5).round() / 1e5).map(Value::Number)
        }
        Value::String(_) => Some(Value::String(gen_mask_token(rng, cfg.token_len_min, cfg.token_len_max))),
        Value::Bool(_) => Some(Value::Bool(rng.random_bool(0.5))),
        _ => None,
    }
}

fn describe_default(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Masks one instance. Descriptions are kept verbatim except for the
/// `" Default value: <v>."` sentence appended to each randomized default.
pub fn mask_instance<R: Rng + ?Sized>(inst: &Instance, rng: &mut R, cfg: &MaskConfig) -> Result<(Instance, MaskMapping)> {
    cfg.validate()?;
    let originals: HashSet<&str> = inst
        .candidates
        .iter()
        .flat_map(|f| std::iter::once(f.name.as_str()).chain(f.parameters.iter().map(|p| p.name.as_str())))
        .collect();
    let mut tokens = TokenSource {
        originals,
        used: HashSet::new(),
        len_min: cfg.token_len_min,
        len_max: cfg.token_len_max,
    };

    let mut mapping = MaskMapping::default();
    let mut candidates = Vec::with_capacity(inst.candidates.len());
    for func in &inst.candidates {
        let mut func = func.clone();
        if cfg.mask_fn_names {
            let token = tokens.fresh(rng)?;
            mapping.fn_map.insert(func.name.clone(), token.clone());
            func.name = token;
        }
        let mut pmap = IndexMap::new();
        let mut overrides = IndexMap::new();
        for param in &mut func.parameters {
            if cfg.mask_param_names {
                let token = tokens.fresh(rng)?;
                pmap.insert(param.name.clone(), token.clone());
                param.name = token;
            }
            if !cfg.randomize_defaults {
                continue;
            }
            let Some(original) = param.default.clone() else { continue };
            if let Some(randomized) = random_default(rng, &original, cfg) {
                param.description.push_str(&format!(" Default value: {}.", describe_default(&randomized)));
                param.default = Some(randomized.clone());
                overrides.insert(param.name.clone(), DefaultOverride { original, randomized });
            }
        }
        mapping.param_maps.insert(func.name.clone(), pmap);
        if !overrides.is_empty() {
            mapping.default_overrides.insert(func.name.clone(), overrides);
        }
        candidates.push(func);
    }

    let gold_calls = inst.gold_calls.iter().map(|c| mapping.apply_to_call(c)).collect();
    let masked = Instance {
        id: inst.id.clone(),
        query: inst.query.clone(),
        candidates,
        gold_calls,
    };
    Ok((masked, mapping))
}

/// Masks `round(ratio * N)` instances. Which instances are picked and the
/// randomness used for each derive from `cfg.seed` and the record index.
pub fn mask_dataset(insts: &[Instance], cfg: &MaskConfig) -> Result<Vec<(Instance, Option<MaskMapping>)>> {
    cfg.validate()?;
    let selected = select_for_masking(insts.len(), cfg);
    insts
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            if selected[i] {
                let mut rng = rng::record_stream(cfg.seed, i);
                let (masked, mapping) = mask_instance(inst, &mut rng, cfg)?;
                Ok((masked, Some(mapping)))
            } else {
                Ok((inst.clone(), None))
            }
        })
        .collect()
}

pub fn masked_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

fn select_for_masking(n: usize, cfg: &MaskConfig) -> Vec<bool> {
    let k = masked_count(n, cfg.ratio);
    let mut selected = vec![false; n];
    let mut rng = rng::salted_stream(cfg.seed, "mask-selection");
    for i in rand::seq::index::sample(&mut rng, n, k) {
        selected[i] = true;
    }
    selected
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmaskIssue {
    UnknownFunction,
    UnknownArgument,
}

/// A predicted name that the mapping could not resolve. The call was passed
/// through unmodified (for functions) or with that key unmodified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnmaskFlag {
    pub call_index: usize,
    pub name: String,
    pub issue: UnmaskIssue,
}

pub fn unmask_calls(calls: &[ToolCall], mapping: &MaskMapping) -> (Vec<ToolCall>, Vec<UnmaskFlag>) {
    let mut flags = Vec::new();
    let out = calls
        .iter()
        .enumerate()
        .map(|(i, call)| {
            let Some(orig_name) = mapping.original_fn_name(&call.name) else {
                flags.push(UnmaskFlag {
                    call_index: i,
                    name: call.name.clone(),
                    issue: UnmaskIssue::UnknownFunction,
                });
                return call.clone();
            };
            let pmap = &mapping.param_maps[call.name.as_str()];
            let mut arguments = serde_json::Map::new();
            for (key, value) in &call.arguments {
                let orig_key = match pmap.iter().find(|(_, m)| *m == key) {
                    Some((orig, _)) => orig.clone(),
                    None => {
                        // with parameter masking off every original key is legitimate
                        if !pmap.is_empty() {
                            flags.push(UnmaskFlag {
                                call_index: i,
                                name: key.clone(),
                                issue: UnmaskIssue::UnknownArgument,
                            });
                        }
                        key.clone()
                    }
                };
                arguments.insert(orig_key, value.clone());
            }
            ToolCall {
                name: orig_name.to_string(),
                arguments,
            }
        })
        .collect();
    (out, flags)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamingStyle {
    #[serde(rename = "snake_case")]
    SnakeCase,
    #[serde(rename = "CamelCase")]
    CamelCase,
}

/// Splits an identifier on underscores and case boundaries
/// (`fooBar`, `HTTPServer`, `v2Api`).
pub fn split_words(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut words = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if c.is_uppercase() && !cur.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                words.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

pub fn restyle_name(name: &str, style: NamingStyle) -> String {
    let words = split_words(name);
    match style {
        NamingStyle::SnakeCase => words.iter().map(|w| w.to_lowercase()).collect::<Vec<_>>().join("_"),
        NamingStyle::CamelCase => words
            .iter()
            .map(|w| {
                let mut cs = w.chars();
                match cs.next() {
                    Some(first) => first.to_uppercase().chain(cs.flat_map(char::to_lowercase)).collect(),
                    None => String::new(),
                }
            })
            .collect(),
    }
}

/// Converts every function and parameter name to `style`. Fails when two
/// names of the same scope collapse onto one string.
pub fn restyle_names(inst: &Instance, style: NamingStyle) -> Result<(Instance, MaskMapping)> {
    let collision = |detail: String| Error::RestyleCollision {
        id: inst.id.clone(),
        detail,
    };
    let mut mapping = MaskMapping::default();
    let mut seen_fns = HashSet::new();
    let mut candidates = Vec::with_capacity(inst.candidates.len());
    for func in &inst.candidates {
        let mut func = func.clone();
        let new_name = restyle_name(&func.name, style);
        if new_name.is_empty() || !seen_fns.insert(new_name.clone()) {
            return Err(collision(format!("function {:?} restyles to taken name {new_name:?}", func.name)));
        }
        if new_name != func.name {
            mapping.fn_map.insert(func.name.clone(), new_name.clone());
            func.name = new_name;
        }
        let mut seen_params = HashSet::new();
        let mut pmap = IndexMap::new();
        for p in &mut func.parameters {
            let np = restyle_name(&p.name, style);
            if np.is_empty() || !seen_params.insert(np.clone()) {
                return Err(collision(format!("parameter {:?} of {:?} restyles to taken name {np:?}", p.name, func.name)));
            }
            if np != p.name {
                pmap.insert(std::mem::replace(&mut p.name, np.clone()), np);
            }
        }
        mapping.param_maps.insert(func.name.clone(), pmap);
        candidates.push(func);
    }
    let gold_calls = inst.gold_calls.iter().map(|c| mapping.apply_to_call(c)).collect();
    Ok((
        Instance {
            id: inst.id.clone(),
            query: inst.query.clone(),
            candidates,
            gold_calls,
        },
        mapping,
    ))
}
