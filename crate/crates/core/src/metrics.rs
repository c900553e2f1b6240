//! Scoring: exact-match F1 over function names and full calls, AST
//! matching, irrelevance / relevance accuracy, and plain-vs-masked deltas.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::model::{derive_task_kind, FunctionSpec, Instance, TaskKind, ToolCall, ValueType};
use crate::parsing::{validate_calls, ParseOutcome, Violation};

/// Widens an integer to a float when the declared type is `number`.
/// Everything else passes through untouched.
pub fn normalize_value(v: &Value, declared: ValueType) -> Value {
    match (v, declared) {
        (Value::Number(n), ValueType::Number) if !n.is_f64() => n
            .as_f64()
            .and_then(Number::from_f64)
            .map(Value::Number)
            .unwrap_or_else(|| v.clone()),
        _ => v.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Name,
    Full,
}

fn declared_type(candidates: &[FunctionSpec], func: &str, param: &str) -> ValueType {
    candidates
        .iter()
        .find(|f| f.name == func)
        .and_then(|f| f.param(param))
        .map_or(ValueType::Any, |p| p.value_type)
}

fn values_equal(a: &Value, b: &Value, declared: ValueType) -> bool {
    normalize_value(a, declared) == normalize_value(b, declared)
}

pub fn calls_equal(a: &ToolCall, b: &ToolCall, mode: MatchMode, candidates: &[FunctionSpec]) -> bool {
    if a.name != b.name {
        return false;
    }
    if mode == MatchMode::Name {
        return true;
    }
    a.arguments.len() == b.arguments.len()
        && a.arguments.iter().all(|(k, va)| {
            b.arguments
                .get(k)
                .is_some_and(|vb| values_equal(va, vb, declared_type(candidates, &a.name, k)))
        })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// Size of a maximum bipartite matching between `left` and `right` items,
/// by augmenting paths (Kuhn's algorithm).
pub fn max_matching(left: usize, right: usize, edge: impl Fn(usize, usize) -> bool) -> usize {
    let adj: Vec<Vec<usize>> = (0..left).map(|l| (0..right).filter(|&r| edge(l, r)).collect()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; right];

    fn augment(l: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if owner[r].is_none_or(|other| augment(other, adj, owner, seen)) {
                owner[r] = Some(l);
                return true;
            }
        }
        false
    }

    let mut size = 0;
    for l in 0..left {
        let mut seen = vec![false; right];
        if augment(l, &adj, &mut owner, &mut seen) {
            size += 1;
        }
    }
    size
}

/// One-to-one maximum matching of predictions against gold calls.
pub fn match_calls(pred: &[ToolCall], gold: &[ToolCall], mode: MatchMode, candidates: &[FunctionSpec]) -> MatchCounts {
    let tp = max_matching(pred.len(), gold.len(), |p, g| calls_equal(&pred[p], &gold[g], mode, candidates));
    MatchCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

/// Structural match of one predicted call against one gold call.
///
/// Required parameters must be present and equal. An optional parameter
/// may be omitted on either side when the other side's value equals the
/// declared default. Arguments the spec does not declare never match.
pub fn ast_match(pred: &ToolCall, gold: &ToolCall, spec: &FunctionSpec) -> bool {
    if pred.name != gold.name || pred.name != spec.name {
        return false;
    }
    if pred.arguments.keys().any(|k| spec.param(k).is_none()) {
        return false;
    }
    spec.parameters.iter().all(|p| {
        let ty = p.value_type;
        match (pred.arguments.get(&p.name), gold.arguments.get(&p.name)) {
            (Some(a), Some(b)) => values_equal(a, b, ty),
            (None, None) => !p.required,
            (Some(v), None) | (None, Some(v)) => {
                !p.required && p.default.as_ref().is_some_and(|d| values_equal(v, d, ty))
            }
        }
    })
}

/// True when predictions and gold calls pair up one-to-one under
/// [`ast_match`].
pub fn ast_match_all(pred: &[ToolCall], gold: &[ToolCall], candidates: &[FunctionSpec]) -> bool {
    if pred.len() != gold.len() {
        return false;
    }
    let m = max_matching(pred.len(), gold.len(), |p, g| {
        candidates
            .iter()
            .find(|f| f.name == gold[g].name)
            .is_some_and(|spec| ast_match(&pred[p], &gold[g], spec))
    });
    m == gold.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub task_kind: TaskKind,
    pub outcome: ParseOutcome,
    pub name_counts: MatchCounts,
    pub full_counts: MatchCounts,
    /// AST verdict for relevant instances, detection verdict for
    /// irrelevance ones.
    pub correct: bool,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_instances: usize,
    pub n_relevant: usize,
    pub n_irrelevance: usize,
    pub n_parse_errors: usize,
    pub name_counts: MatchCounts,
    pub full_counts: MatchCounts,
    pub f1_name: f64,
    pub f1_full: f64,
    /// Mean of per-instance F1 over relevant instances.
    pub macro_f1_name: f64,
    pub macro_f1_full: f64,
    pub ast_accuracy: f64,
    pub irrelevance_accuracy: f64,
    pub relevance_accuracy: f64,
    /// Accuracy per task kind present in the data.
    pub category_accuracy: BTreeMap<TaskKind, f64>,
    /// Unweighted mean of `category_accuracy`; not a leaderboard overall.
    pub unweighted_category_mean: f64,
    pub per_instance: Vec<InstanceRecord>,
}

impl EvalReport {
    /// Flat `(metric, value)` pairs shared by CSV output and deltas.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("f1_name", self.f1_name),
            ("f1_full", self.f1_full),
            ("macro_f1_name", self.macro_f1_name),
            ("macro_f1_full", self.macro_f1_full),
            ("ast_accuracy", self.ast_accuracy),
            ("irrelevance_accuracy", self.irrelevance_accuracy),
            ("relevance_accuracy", self.relevance_accuracy),
            ("unweighted_category_mean", self.unweighted_category_mean),
        ]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        for (name, value) in self.metrics() {
            w.write_record([name, &value.to_string()])?;
        }
        for (name, value) in [
            ("n_instances", self.n_instances),
            ("n_relevant", self.n_relevant),
            ("n_irrelevance", self.n_irrelevance),
            ("n_parse_errors", self.n_parse_errors),
        ] {
            w.write_record([name, &value.to_string()])?;
        }
        csv_string(w)
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = format!("{}\n", crate::prompting::to_pretty(self));
        crate::dataset::write_atomic(&dir.join("report.json"), json.as_bytes())?;
        crate::dataset::write_atomic(&dir.join("report.csv"), self.to_csv()?.as_bytes())
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv writer was fed UTF-8"))
}

pub fn evaluate_dataset(preds: &HashMap<String, ParseOutcome>, insts: &[Instance]) -> Result<EvalReport> {
    let mut per_instance = Vec::with_capacity(insts.len());
    for inst in insts {
        let outcome = preds.get(&inst.id).ok_or_else(|| Error::MissingPrediction(inst.id.clone()))?;
        per_instance.push(score_instance(inst, outcome));
    }
    Ok(aggregate(per_instance))
}

fn score_instance(inst: &Instance, outcome: &ParseOutcome) -> InstanceRecord {
    let kind = derive_task_kind(inst);
    let pred = outcome.calls();
    let (name_counts, full_counts, correct) = if kind == TaskKind::Irrelevance {
        let declined = !matches!(outcome, ParseOutcome::Calls { .. });
        (MatchCounts::default(), MatchCounts::default(), declined)
    } else {
        (
            match_calls(pred, &inst.gold_calls, MatchMode::Name, &inst.candidates),
            match_calls(pred, &inst.gold_calls, MatchMode::Full, &inst.candidates),
            ast_match_all(pred, &inst.gold_calls, &inst.candidates),
        )
    };
    InstanceRecord {
        id: inst.id.clone(),
        task_kind: kind,
        outcome: outcome.clone(),
        name_counts,
        full_counts,
        correct,
        violations: validate_calls(pred, &inst.candidates),
    }
}

fn aggregate(per_instance: Vec<InstanceRecord>) -> EvalReport {
    let mut name_counts = MatchCounts::default();
    let mut full_counts = MatchCounts::default();
    let (mut n_rel, mut n_irr, mut n_err) = (0, 0, 0);
    let (mut ast_ok, mut irr_ok, mut rel_ok) = (0, 0, 0);
    let (mut macro_name, mut macro_full) = (0.0, 0.0);
    let mut by_kind: BTreeMap<TaskKind, (usize, usize)> = BTreeMap::new();

    for rec in &per_instance {
        if rec.outcome.is_parse_error() {
            n_err += 1;
        }
        let slot = by_kind.entry(rec.task_kind).or_default();
        slot.0 += 1;
        slot.1 += rec.correct as usize;
        if rec.task_kind == TaskKind::Irrelevance {
            n_irr += 1;
            irr_ok += rec.correct as usize;
            continue;
        }
        n_rel += 1;
        name_counts += rec.name_counts;
        full_counts += rec.full_counts;
        macro_name += rec.name_counts.f1();
        macro_full += rec.full_counts.f1();
        ast_ok += rec.correct as usize;
        rel_ok += matches!(rec.outcome, ParseOutcome::Calls { .. }) as usize;
    }

    let category_accuracy: BTreeMap<TaskKind, f64> =
        by_kind.iter().map(|(k, &(n, ok))| (*k, ratio(ok, n))).collect();
    let unweighted_category_mean = if category_accuracy.is_empty() {
        0.0
    } else {
        category_accuracy.values().sum::<f64>() / category_accuracy.len() as f64
    };
    let mean = |sum: f64| if n_rel == 0 { 0.0 } else { sum / n_rel as f64 };

    EvalReport {
        n_instances: per_instance.len(),
        n_relevant: n_rel,
        n_irrelevance: n_irr,
        n_parse_errors: n_err,
        name_counts,
        full_counts,
        f1_name: name_counts.f1(),
        f1_full: full_counts.f1(),
        macro_f1_name: mean(macro_name),
        macro_f1_full: mean(macro_full),
        ast_accuracy: ratio(ast_ok, n_rel),
        irrelevance_accuracy: ratio(irr_ok, n_irr),
        relevance_accuracy: ratio(rel_ok, n_rel),
        category_accuracy,
        unweighted_category_mean,
        per_instance,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub plain: f64,
    pub masked: f64,
    /// `masked - plain`.
    pub absolute: f64,
    /// `absolute / plain`; absent when `plain` is zero.
    pub relative: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub deltas: Vec<MetricDelta>,
}

impl DegradationReport {
    pub fn get(&self, metric: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "plain", "masked", "absolute", "relative"])?;
        for d in &self.deltas {
            w.write_record([
                d.metric.clone(),
                d.plain.to_string(),
                d.masked.to_string(),
                d.absolute.to_string(),
                d.relative.map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
        csv_string(w)
    }

    pub fn to_json(&self) -> String {
        format!("{}\n", crate::prompting::to_pretty(self))
    }
}

pub fn degradation_report(plain: &EvalReport, masked: &EvalReport) -> Result<DegradationReport> {
    let ids = |r: &EvalReport| r.per_instance.iter().map(|i| i.id.clone()).collect::<HashSet<_>>();
    let (a, b) = (ids(plain), ids(masked));
    if a != b {
        let mut diff: Vec<_> = a.symmetric_difference(&b).cloned().collect();
        diff.sort();
        diff.truncate(5);
        return Err(Error::IdMismatch(diff.join(", ")));
    }
    let deltas = plain
        .metrics()
        .into_iter()
        .zip(masked.metrics())
        .map(|((name, p), (_, m))| {
            let absolute = m - p;
            MetricDelta {
                metric: name.to_string(),
                plain: p,
                masked: m,
                absolute,
                relative: (p != 0.0).then(|| absolute / p),
            }
        })
        .collect();
    Ok(DegradationReport { deltas })
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::model::ParamSpec;

    fn a(x: Value) -> ToolCall {
        ToolCall::new("A").with_arg("x", x)
    }

    fn specs() -> Vec<FunctionSpec> {
        vec![
            FunctionSpec::new("A", "").with_param(ParamSpec::required("x", "", ValueType::Number)),
            FunctionSpec::new("B", "").with_param(ParamSpec::required("y", "", ValueType::Integer)),
        ]
    }

    #[test]
    fn normalize_rules() {
        assert_eq!(normalize_value(&json!(5), ValueType::Number), json!(5.0));
        assert_eq!(normalize_value(&json!("5"), ValueType::Integer), json!("5"));
        assert_eq!(normalize_value(&json!(5), ValueType::Integer), json!(5));
        let once = normalize_value(&json!(7), ValueType::Number);
        assert_eq!(normalize_value(&once, ValueType::Number), once);
    }

    #[test]
    fn equality_modes() {
        let s = specs();
        assert!(calls_equal(&a(json!(1)), &a(json!(1)), MatchMode::Name, &s));
        assert!(calls_equal(&a(json!(1)), &a(json!(1)), MatchMode::Full, &s));
        assert!(calls_equal(&a(json!(1)), &a(json!(2)), MatchMode::Name, &s));
        assert!(!calls_equal(&a(json!(1)), &a(json!(2)), MatchMode::Full, &s));
        assert!(calls_equal(&a(json!(5)), &a(json!(5.0)), MatchMode::Full, &s));
        // no widening where the declared type is integer
        let b1 = ToolCall::new("B").with_arg("y", json!(5));
        let b2 = ToolCall::new("B").with_arg("y", json!(5.0));
        assert!(!calls_equal(&b1, &b2, MatchMode::Full, &s));
    }

    #[test]
    fn f1_zero_denominators() {
        let c = MatchCounts::default();
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
        let c = MatchCounts { tp: 1, fp: 1, fn_: 1 };
        assert!((c.f1() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matching_examples() {
        let s = specs();
        let b2 = ToolCall::new("B").with_arg("y", json!(2));
        assert_eq!(
            match_calls(&[a(json!(1))], &[a(json!(1))], MatchMode::Full, &s),
            MatchCounts { tp: 1, fp: 0, fn_: 0 }
        );
        assert_eq!(
            match_calls(&[a(json!(1)), a(json!(1))], &[a(json!(1))], MatchMode::Name, &s),
            MatchCounts { tp: 1, fp: 1, fn_: 0 }
        );
        assert_eq!(
            match_calls(&[a(json!(1)), b2.clone()], &[b2, a(json!(9))], MatchMode::Full, &s),
            MatchCounts { tp: 1, fp: 1, fn_: 1 }
        );
    }

    #[test]
    fn kuhn_beats_greedy_ordering() {
        // greedy left-to-right would pair 0-0 and strand 1
        let edges = [[true, true], [true, false]];
        assert_eq!(max_matching(2, 2, |l, r| edges[l][r]), 2);
    }

    #[test]
    fn ast_default_rules() {
        let spec = FunctionSpec::new("f", "")
            .with_param(ParamSpec::required("q", "", ValueType::String))
            .with_param(ParamSpec::optional("n", "", ValueType::Number, Some(json!(10))));
        let gold = ToolCall::new("f").with_arg("q", json!("x")).with_arg("n", json!(10));
        let omit = ToolCall::new("f").with_arg("q", json!("x"));
        assert!(ast_match(&omit, &gold, &spec));
        assert!(ast_match(&gold, &omit, &spec));
        let wrong = ToolCall::new("f").with_arg("q", json!("x")).with_arg("n", json!(11));
        assert!(!ast_match(&wrong, &gold, &spec));
        let extra = omit.clone().with_arg("zzz", json!(1));
        assert!(!ast_match(&extra, &gold, &spec));
        let missing = ToolCall::new("f");
        assert!(!ast_match(&missing, &ToolCall::new("f"), &spec));
    }

    #[test]
    fn degradation_arithmetic() {
        let inst = Instance {
            id: "1".into(),
            query: "".into(),
            candidates: specs(),
            gold_calls: vec![a(json!(1))],
        };
        let mut plain = evaluate_dataset(&HashMap::from([("1".into(), ParseOutcome::from_calls(vec![a(json!(1))]))]), std::slice::from_ref(&inst)).unwrap();
        let same = degradation_report(&plain, &plain).unwrap();
        assert!(same.deltas.iter().all(|d| d.absolute == 0.0));
        let mut masked = plain.clone();
        plain.f1_full = 0.80;
        masked.f1_full = 0.20;
        let d = degradation_report(&plain, &masked).unwrap();
        let f = d.get("f1_full").unwrap();
        assert!((f.absolute + 0.60).abs() < 1e-12);
        assert!((f.relative.unwrap() + 0.75).abs() < 1e-12);
        let csv = d.to_csv().unwrap();
        assert!(csv.starts_with("metric,plain,masked,absolute,relative\n"));

        let mut other = masked.clone();
        other.per_instance[0].id = "2".into();
        assert!(matches!(degradation_report(&plain, &other), Err(Error::IdMismatch(_))));
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let inst = Instance {
            id: "1".into(),
            query: "".into(),
            candidates: specs(),
            gold_calls: vec![],
        };
        assert!(matches!(
            evaluate_dataset(&HashMap::new(), &[inst]),
            Err(Error::MissingPrediction(id)) if id == "1"
        ));
    }
}
