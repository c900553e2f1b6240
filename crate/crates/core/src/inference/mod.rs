//! Model execution: endpoint transport, builtin probes, and the runner that
//! optionally masks each test instance before prompting and unmasks the
//! answer afterwards.

mod builtin;
mod client;

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use builtin::{builtin_model, placeholder_call, select_candidate, word_tokens, BuiltinKind, ModelContext};
pub use client::{complete, request_body, Completion, EndpointClient, EndpointConfig, PromptRole, API_KEY_ENV};

use crate::error::{Error, Result};
use crate::masking::{mask_instance, unmask_calls, MaskConfig, MaskMapping, UnmaskFlag};
use crate::model::Instance;
use crate::parsing::{extract_calls, ParseOutcome};
use crate::prompting::{render_prompt, PromptTemplate};
use crate::rng;

#[derive(Clone, Debug)]
pub enum Model {
    Builtin(BuiltinKind),
    Endpoint(EndpointConfig),
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub mask_at_test: bool,
    pub seed: u64,
    pub template: PromptTemplate,
    /// Worker threads for builtin models; endpoints use `max_in_flight`.
    pub builtin_workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mask_at_test: false,
            seed: 0,
            template: PromptTemplate::default(),
            builtin_workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub raw_response: String,
    /// Parsed from `raw_response`, then unmasked when `mapping` is set.
    pub outcome: ParseOutcome,
    /// Transport latency; zero for builtin models.
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<MaskMapping>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmask_flags: Vec<UnmaskFlag>,
}

/// Recomputes the outcome from the stored raw response.
pub fn replay(record: &PredictionRecord) -> (ParseOutcome, Vec<UnmaskFlag>) {
    if let Some(e) = &record.transport_error {
        return (ParseOutcome::error(format!("transport: {e}")), Vec::new());
    }
    let parsed = extract_calls(&record.raw_response);
    match (&parsed, &record.mapping) {
        (ParseOutcome::Calls { calls }, Some(mapping)) => {
            let (calls, flags) = unmask_calls(calls, mapping);
            (ParseOutcome::from_calls(calls), flags)
        }
        _ => (parsed, Vec::new()),
    }
}

/// Append-only log of raw responses, written as they arrive and before
/// they are parsed. Line order follows completion order.
pub struct ResponseJournal {
    sink: Mutex<Box<dyn Write + Send>>,
}

#[derive(Serialize)]
struct JournalLine<'a> {
    id: &'a str,
    attempt_count: u32,
    raw_response: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    transport_error: Option<&'a str>,
}

impl ResponseJournal {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        ResponseJournal { sink: Mutex::new(sink) }
    }

    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(Box::new(file)))
    }

    fn append(&self, line: &JournalLine<'_>) -> Result<()> {
        let mut text = serde_json::to_string(line)?;
        text.push('\n');
        let mut sink = self.sink.lock().expect("journal lock poisoned");
        sink.write_all(text.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| Error::io("<response journal>", e))
    }
}

struct Prepared {
    instance: Instance,
    mapping: Option<MaskMapping>,
    prompt: String,
}

fn prepare(inst: &Instance, index: usize, opts: &RunOptions) -> Result<Prepared> {
    let (instance, mapping) = if opts.mask_at_test {
        let cfg = MaskConfig::names_only(opts.seed);
        let (masked, mapping) = mask_instance(inst, &mut rng::record_stream(opts.seed, index), &cfg)?;
        (masked, Some(mapping))
    } else {
        (inst.clone(), None)
    };
    let prompt = render_prompt(&instance, &opts.template);
    Ok(Prepared {
        instance,
        mapping,
        prompt,
    })
}

/// Runs `model` over every instance: optional test-time masking, prompt
/// rendering, completion, extraction, unmasking. Records come back in
/// input order whatever the concurrency level; transport failures become
/// per-instance parse errors.
pub fn run_inference(
    insts: &[Instance],
    model: &Model,
    opts: &RunOptions,
    journal: Option<&ResponseJournal>,
) -> Result<Vec<PredictionRecord>> {
    let prepared = insts
        .iter()
        .enumerate()
        .map(|(i, inst)| prepare(inst, i, opts))
        .collect::<Result<Vec<_>>>()?;

    let client = match model {
        Model::Endpoint(cfg) => Some(EndpointClient::new(cfg.clone())?),
        Model::Builtin(_) => None,
    };
    let workers = match model {
        Model::Endpoint(cfg) => cfg.max_in_flight,
        Model::Builtin(_) => opts.builtin_workers.max(1),
    }
    .min(prepared.len().max(1));

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PredictionRecord>>>> = Mutex::new((0..prepared.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = prepared.get(i) else { break };
                let rec = predict_one(p, model, client.as_ref(), journal);
                slots.lock().expect("slot lock poisoned")[i] = Some(rec);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock poisoned")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn predict_one(
    p: &Prepared,
    model: &Model,
    client: Option<&EndpointClient>,
    journal: Option<&ResponseJournal>,
) -> Result<PredictionRecord> {
    let (raw, attempts, latency_ms, transport_error) = match (model, client) {
        (Model::Builtin(kind), _) => {
            let ctx = ModelContext {
                prompt: &p.prompt,
                instance: &p.instance,
                mapping: p.mapping.as_ref(),
            };
            (builtin_model(*kind, ctx), 1, 0, None)
        }
        (Model::Endpoint(_), Some(client)) => {
            let start = Instant::now();
            let result = client.complete(&p.prompt);
            let latency = start.elapsed().as_millis() as u64;
            match result {
                Ok(c) => (c.text, c.attempts, latency, None),
                Err(Error::Transport { attempts, message }) => (String::new(), attempts, latency, Some(message)),
                Err(e @ Error::Auth { .. }) => (String::new(), 1, latency, Some(e.to_string())),
                Err(e) => return Err(e),
            }
        }
        (Model::Endpoint(_), None) => unreachable!("endpoint client is built up front"),
    };

    if let Some(journal) = journal {
        journal.append(&JournalLine {
            id: &p.instance.id,
            attempt_count: attempts,
            raw_response: &raw,
            transport_error: transport_error.as_deref(),
        })?;
    }

    let mut record = PredictionRecord {
        id: p.instance.id.clone(),
        raw_response: raw,
        outcome: ParseOutcome::Empty,
        latency_ms,
        attempt_count: attempts,
        transport_error,
        mapping: p.mapping.clone(),
        unmask_flags: Vec::new(),
    };
    let (outcome, flags) = replay(&record);
    record.outcome = outcome;
    record.unmask_flags = flags;
    Ok(record)
}
