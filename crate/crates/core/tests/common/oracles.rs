//! Reference implementations written independently of the library, used
//! only to cross-check it.

use fc_forge_core::{FunctionSpec, ToolCall, ValueType};
use serde_json::Value;

fn num_eq(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// Value equality where the declared type decides whether `1` and `1.0`
/// are the same thing.
pub fn value_eq(a: &Value, b: &Value, ty: Option<ValueType>) -> bool {
    if ty == Some(ValueType::Number) && a.is_number() && b.is_number() {
        return num_eq(a, b);
    }
    a == b
}

fn declared(cands: &[FunctionSpec], func: &str, param: &str) -> Option<ValueType> {
    cands
        .iter()
        .find(|f| f.name == func)?
        .parameters
        .iter()
        .find(|p| p.name == param)
        .map(|p| p.value_type)
}

pub fn same_call(a: &ToolCall, b: &ToolCall, full: bool, cands: &[FunctionSpec]) -> bool {
    if a.name != b.name {
        return false;
    }
    if !full {
        return true;
    }
    let mut ka: Vec<&String> = a.arguments.keys().collect();
    let mut kb: Vec<&String> = b.arguments.keys().collect();
    ka.sort();
    kb.sort();
    ka == kb && ka.iter().all(|k| value_eq(&a.arguments[*k], &b.arguments[*k], declared(cands, &a.name, k)))
}

/// Largest number of disjoint (pred, gold) pairs, by trying every
/// assignment.
pub fn brute_force_matching(n_left: usize, n_right: usize, edge: &dyn Fn(usize, usize) -> bool) -> usize {
    fn go(l: usize, n_left: usize, n_right: usize, used: &mut Vec<bool>, edge: &dyn Fn(usize, usize) -> bool) -> usize {
        if l == n_left {
            return 0;
        }
        let mut best = go(l + 1, n_left, n_right, used, edge);
        for r in 0..n_right {
            if !used[r] && edge(l, r) {
                used[r] = true;
                best = best.max(1 + go(l + 1, n_left, n_right, used, edge));
                used[r] = false;
            }
        }
        best
    }
    go(0, n_left, n_right, &mut vec![false; n_right], edge)
}

/// AST check phrased as "fill in defaults, then compare every declared
/// parameter".
pub fn literal_ast_match(pred: &ToolCall, gold: &ToolCall, spec: &FunctionSpec) -> bool {
    if pred.name != spec.name || gold.name != spec.name {
        return false;
    }
    for k in pred.arguments.keys() {
        if !spec.parameters.iter().any(|p| &p.name == k) {
            return false;
        }
    }
    for p in &spec.parameters {
        let fill = |c: &ToolCall| c.arguments.get(&p.name).cloned().or_else(|| if p.required { None } else { p.default.clone() });
        let (a, b) = (fill(pred), fill(gold));
        let ok = match (&a, &b) {
            (Some(x), Some(y)) => value_eq(x, y, Some(p.value_type)),
            (None, None) => !p.required,
            _ => false,
        };
        if !ok {
            return false;
        }
    }
    true
}
