//! Seeded synthetic datasets for tests, fixtures and benchmarks.
//!
//! Words are pronounceable pseudo-words built from syllables so that
//! distinct candidates in one instance never share vocabulary by accident.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

use crate::inference::placeholder_call;
use crate::model::{FunctionSpec, Instance, ParamSpec, ToolCall, ValueType};
use crate::rng;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

fn pseudo_word<R: Rng + ?Sized>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

/// Hands out words never handed out before by this instance.
struct Vocab {
    used: HashSet<String>,
}

impl Vocab {
    fn new() -> Self {
        Vocab { used: HashSet::new() }
    }

    fn word<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        loop {
            let w = pseudo_word(rng);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words<R: Rng + ?Sized>(&mut self, rng: &mut R, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn random_value<R: Rng + ?Sized>(rng: &mut R, ty: ValueType, vocab: &mut Vocab) -> Value {
    match ty {
        ValueType::String => json!(vocab.word(rng)),
        ValueType::Integer => json!(rng.random_range(-50i64..=500)),
        ValueType::Number => json!((rng.random_range(-5000..=5000) as f64) / 8.0),
        ValueType::Boolean => json!(rng.random_bool(0.5)),
        ValueType::Array => json!([rng.random_range(0..10), rng.random_range(0..10)]),
        ValueType::Object => json!({"k": vocab.word(rng)}),
        ValueType::Any => json!(vocab.word(rng)),
    }
}

fn random_function<R: Rng + ?Sized>(rng: &mut R, vocab: &mut Vocab, max_params: usize) -> FunctionSpec {
    let name = vocab.words(rng, 2).join("_");
    let desc = vocab.words(rng, 4);
    let mut f = FunctionSpec::new(name, format!("Returns {} {} for {} {}.", desc[0], desc[1], desc[2], desc[3]));
    for _ in 0..rng.random_range(0..=max_params) {
        let pname = vocab.word(rng);
        let ty = ValueType::ALL[rng.random_range(0..ValueType::ALL.len())];
        let pdesc = format!("The {} of the {}.", vocab.word(rng), vocab.word(rng));
        let p = match rng.random_range(0..3) {
            0 => ParamSpec::required(pname, pdesc, ty),
            1 => {
                let d = random_value(rng, ty, vocab);
                ParamSpec::optional(pname, pdesc, ty, Some(d))
            }
            _ => ParamSpec::optional(pname, pdesc, ty, None),
        };
        f.parameters.push(p);
    }
    f
}

fn random_call<R: Rng + ?Sized>(rng: &mut R, f: &FunctionSpec, vocab: &mut Vocab) -> ToolCall {
    let mut call = ToolCall::new(f.name.clone());
    for p in &f.parameters {
        if p.required || rng.random_bool(0.5) {
            call.arguments.insert(p.name.clone(), random_value(rng, p.value_type, vocab));
        }
    }
    call
}

/// A valid instance with 1 to 5 candidates and 0 to 3 gold calls, covering
/// every task kind.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, id: impl Into<String>) -> Instance {
    let mut vocab = Vocab::new();
    let n_candidates = rng.random_range(1..=5);
    let candidates: Vec<FunctionSpec> = (0..n_candidates).map(|_| random_function(rng, &mut vocab, 4)).collect();
    let n_calls = match rng.random_range(0..10) {
        0 => 0,
        1..=6 => 1,
        _ => rng.random_range(2..=3),
    };
    let gold_calls = (0..n_calls)
        .map(|_| {
            let f = candidates.choose(rng).unwrap();
            random_call(rng, f, &mut vocab)
        })
        .collect();
    let query = format!("Could you {} please?", vocab.words(rng, 3).join(" "));
    Instance {
        id: id.into(),
        query,
        candidates,
        gold_calls,
    }
}

/// `n` random instances, record `i` drawn from the stream for `(seed, i)`.
pub fn dataset(n: usize, seed: u64) -> Vec<Instance> {
    (0..n)
        .map(|i| random_instance(&mut rng::record_stream(seed, i), format!("syn-{i}")))
        .collect()
}

/// Probe corpus: `k` candidates with disjoint vocabularies per instance,
/// one gold call on a uniformly placed candidate, and a query that contains
/// both the gold function's name tokens and its description words.
pub fn probe_corpus(n: usize, k: usize, seed: u64) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let rng = &mut rng::record_stream(seed, i);
            let mut vocab = Vocab::new();
            let candidates: Vec<FunctionSpec> = (0..k).map(|_| random_function(rng, &mut vocab, 3)).collect();
            let gold = rng.random_range(0..k);
            let g = &candidates[gold];
            let name_words = g.name.replace('_', " ");
            let desc_words: Vec<&str> = g
                .description
                .trim_end_matches('.')
                .split(' ')
                .filter(|w| *w != "Returns" && *w != "for")
                .collect();
            let query = format!("I need to {name_words} about {}.", desc_words.join(" "));
            let gold_calls = vec![placeholder_call(g)];
            Instance {
                id: format!("probe-{i}"),
                query,
                candidates,
                gold_calls,
            }
        })
        .collect()
}
