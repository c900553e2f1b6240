//! `fc-forge`: dataset transforms, inference and evaluation for
//! function-calling models.
//!
//! Exit status: 0 success, 2 usage, 3 bad data, 4 transport. Failures print
//! one JSON object on stderr.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fc_forge_core::augmentation::{build_irrelevance_set, mix_datasets, MixConfig, MixManifest, DEFAULT_MIN_CANDIDATES};
use fc_forge_core::dataset::{file_digest, load_dataset, read_jsonl, save_dataset, sha256_hex, to_jsonl, write_jsonl, DatasetFormat};
use fc_forge_core::inference::{run_inference, BuiltinKind, EndpointConfig, Model, PromptRole, PredictionRecord, ResponseJournal, RunOptions};
use fc_forge_core::masking::{mask_dataset, restyle_names, MappingRecord, MaskConfig, NamingStyle};
use fc_forge_core::metrics::{degradation_report, evaluate_dataset, EvalReport};
use fc_forge_core::parsing::{extract_calls, validate_calls};
use fc_forge_core::prompting::{render_prompt, to_pretty, PromptTemplate};
use fc_forge_core::sweep::{save_masked, sidecar_path, sweep_datasets, SweepConfig, SweepVariable};
use fc_forge_core::{derive_task_kind, Error, Instance};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "fc-forge", version, about = "Function-calling dataset transforms and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every record and report per-line problems.
    Validate(InputArgs),
    /// Replace function/parameter names with random tokens.
    Mask(MaskArgs),
    /// Convert names to another naming style.
    Restyle(RestyleArgs),
    /// Build irrelevance-augmented instances.
    Augment(AugmentArgs),
    /// Blend base and irrelevance data at a fixed ratio.
    Mix(MixArgs),
    /// Render prompts as JSONL of {id, prompt}.
    Prompt(PromptArgs),
    /// Run a model and store raw responses.
    Infer(InferArgs),
    /// Extract calls from a raw model response.
    Parse(ParseArgs),
    /// Score predictions (or a model run) against gold calls.
    Eval(EvalArgs),
    /// Evaluate plain and test-time-masked runs and report the deltas.
    Robustness(RobustnessArgs),
    /// Emit one dataset per masking or irrelevance ratio.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Canonical)]
    format: Format,
    /// Abort on the first record that breaks an invariant.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    Xlam,
}

impl From<Format> for DatasetFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Canonical => DatasetFormat::Canonical,
            Format::Xlam => DatasetFormat::Xlam,
        }
    }
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of instances to mask.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    /// Keep parameter names.
    #[arg(long)]
    keep_param_names: bool,
    /// Keep default values.
    #[arg(long)]
    keep_defaults: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    #[value(name = "snake_case")]
    Snake,
    #[value(name = "CamelCase")]
    Camel,
}

#[derive(Args)]
struct RestyleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    style: Style,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of augmented instances; defaults to every eligible one.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MIN_CANDIDATES)]
    min_candidates: usize,
}

#[derive(Args)]
struct MixArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Irrelevance-augmented source.
    #[arg(long)]
    irr: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of irrelevance instances in the mixture.
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    total: usize,
}

#[derive(Args)]
struct PromptArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    template: Option<PathBuf>,
    /// Write the built-in template to this path and exit.
    #[arg(long, conflicts_with = "output")]
    dump_template: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModelArg {
    Oracle,
    NameBias,
    DescMatch,
    Endpoint,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 60.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Chat role that carries the prompt.
    #[arg(long, value_enum, default_value_t = RoleArg::User)]
    prompt_role: RoleArg,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    User,
    System,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for `responses.jsonl` and the live journal.
    #[arg(long)]
    output: PathBuf,
    /// Mask names before prompting and unmask the answer.
    #[arg(long)]
    mask_at_test: bool,
}

#[derive(Args)]
struct ParseArgs {
    /// Raw response file; stdin when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Dataset whose first instance (or `--id`) supplies candidates to check against.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Existing `responses.jsonl`; otherwise `--model` is run.
    #[arg(long, conflicts_with = "model")]
    predictions: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    mask_at_test: bool,
}

#[derive(Args)]
struct RobustnessArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariableArg {
    #[value(name = "mask_ratio")]
    MaskRatio,
    #[value(name = "irrelevance_ratio")]
    IrrelevanceRatio,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    variable: VariableArg,
    /// Comma-separated fractions, e.g. `0,0.33,0.67,1`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Irrelevance source for irrelevance sweeps; built from the input when absent.
    #[arg(long)]
    irr: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    total: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MIN_CANDIDATES)]
    min_candidates: usize,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CmdResult = Result<Value, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", 2, e.to_string().trim()),
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => fail("usage", 2, &msg),
        Err(Failure::Lib(e @ Error::InvalidConfig(_))) => fail("usage", 2, &e.to_string()),
        Err(Failure::Lib(e)) if e.is_transport_error() => fail("transport", 4, &e.to_string()),
        Err(Failure::Lib(e)) => fail("data", 3, &e.to_string()),
    }
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "exit_code": code, "message": message}));
    ExitCode::from(code)
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Validate(a) => validate(a),
        Command::Mask(a) => mask(a),
        Command::Restyle(a) => restyle(a),
        Command::Augment(a) => augment(a),
        Command::Mix(a) => mix(a),
        Command::Prompt(a) => prompt(a),
        Command::Infer(a) => infer(a),
        Command::Parse(a) => parse(a),
        Command::Eval(a) => eval(a),
        Command::Robustness(a) => robustness(a),
        Command::Sweep(a) => sweep(a),
    }
}

/// Loads input for a transform. Undecodable lines are always fatal; records
/// that decode but break invariants are skipped with a warning unless
/// `--strict`.
fn load(a: &InputArgs) -> Result<Vec<Instance>, Failure> {
    let report = load_dataset(&a.input, a.format.into(), a.strict)?;
    if let Some(bad) = report.issues.iter().find(|i| i.is_malformed()) {
        return Err(Error::MalformedRecord {
            line: bad.line,
            cause: bad.cause(),
        }
        .into());
    }
    for issue in &report.issues {
        log::warn!("skipping record at line {}: {}", issue.line, issue.cause());
    }
    Ok(report.instances)
}

fn validate(a: InputArgs) -> CmdResult {
    let report = load_dataset(&a.input, a.format.into(), a.strict)?;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for inst in &report.instances {
        *kinds.entry(serde_json::to_value(derive_task_kind(inst))?.as_str().unwrap_or("").to_string()).or_default() += 1;
    }
    let summary = json!({
        "valid": report.instances.len(),
        "invalid": report.issues.len(),
        "task_kinds": kinds,
        "issues": report.issues,
    });
    if report.issues.is_empty() {
        Ok(summary)
    } else {
        println!("{summary}");
        Err(Error::MalformedRecord {
            line: report.issues[0].line,
            cause: format!("{} of {} records rejected", report.issues.len(), report.issues.len() + report.instances.len()),
        }
        .into())
    }
}

fn mask(a: MaskArgs) -> CmdResult {
    let data = load(&a.input)?;
    let cfg = MaskConfig {
        seed: a.seed,
        ratio: a.ratio,
        mask_param_names: !a.keep_param_names,
        randomize_defaults: !a.keep_defaults,
        ..MaskConfig::default()
    };
    let masked = mask_dataset(&data, &cfg)?;
    save_masked(&masked, &a.output)?;
    Ok(json!({
        "instances": masked.len(),
        "masked": masked.iter().filter(|(_, m)| m.is_some()).count(),
        "output": a.output,
        "mappings": sidecar_path(&a.output),
        "sha256": file_digest(&a.output)?,
    }))
}

fn restyle(a: RestyleArgs) -> CmdResult {
    let data = load(&a.input)?;
    let style = match a.style {
        Style::Snake => NamingStyle::SnakeCase,
        Style::Camel => NamingStyle::CamelCase,
    };
    let mut out = Vec::with_capacity(data.len());
    let mut mappings = Vec::new();
    for inst in &data {
        let (restyled, mapping) = restyle_names(inst, style)?;
        mappings.push(MappingRecord {
            id: restyled.id.clone(),
            mapping,
        });
        out.push(restyled);
    }
    save_dataset(&out, &a.output)?;
    write_jsonl(&mappings, &sidecar_path(&a.output))?;
    Ok(json!({"instances": out.len(), "output": a.output, "sha256": file_digest(&a.output)?}))
}

fn augment(a: AugmentArgs) -> CmdResult {
    let data = load(&a.input)?;
    let count = a.count.unwrap_or_else(|| data.iter().filter(|i| !i.gold_calls.is_empty()).count());
    let out = build_irrelevance_set(&data, count, a.seed, a.min_candidates)?;
    save_dataset(&out, &a.output)?;
    Ok(json!({"instances": out.len(), "output": a.output, "sha256": file_digest(&a.output)?}))
}

fn mix(a: MixArgs) -> CmdResult {
    let base = load(&a.input)?;
    let irr = load(&InputArgs {
        input: a.irr.clone(),
        format: Format::Canonical,
        strict: a.input.strict,
    })?;
    let cfg = MixConfig::new(a.ratio, a.total, a.seed);
    let out = mix_datasets(&base, &irr, &cfg)?;
    save_dataset(&out, &a.output)?;
    let (irrelevance_count, base_count) = cfg.split();
    let manifest = MixManifest {
        seed: a.seed,
        irrelevance_ratio: a.ratio,
        total: a.total,
        irrelevance_count,
        base_count,
        base_digest: sha256_hex(to_jsonl(&base).as_bytes()),
        irrelevance_digest: sha256_hex(to_jsonl(&irr).as_bytes()),
        output_digest: file_digest(&a.output)?,
    };
    let manifest_path = a.output.with_extension("manifest.json");
    write_text(&manifest_path, &format!("{}\n", to_pretty(&manifest)))?;
    Ok(serde_json::to_value(&manifest)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn load_template(path: Option<&Path>) -> Result<PromptTemplate, Failure> {
    Ok(match path {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default(),
    })
}

fn prompt(a: PromptArgs) -> CmdResult {
    if let Some(path) = &a.dump_template {
        PromptTemplate::default().save(path)?;
        return Ok(json!({"template": path}));
    }
    let tmpl = load_template(a.template.as_deref())?;
    let data = load(&a.input)?;
    let rows: Vec<Value> = data.iter().map(|i| json!({"id": i.id, "prompt": render_prompt(i, &tmpl)})).collect();
    match &a.output {
        Some(path) => {
            write_jsonl(&rows, path)?;
            Ok(json!({"prompts": rows.len(), "output": path}))
        }
        None => {
            for r in &rows {
                println!("{r}");
            }
            Ok(json!({"prompts": rows.len()}))
        }
    }
}

fn build_model(m: &ModelArgs) -> Result<Model, Failure> {
    let kind = m.model.ok_or_else(|| Failure::Usage("--model is required".into()))?;
    Ok(match kind {
        ModelArg::Oracle => Model::Builtin(BuiltinKind::Oracle),
        ModelArg::NameBias => Model::Builtin(BuiltinKind::NameBias),
        ModelArg::DescMatch => Model::Builtin(BuiltinKind::DescMatch),
        ModelArg::Endpoint => {
            let url = m
                .endpoint_url
                .clone()
                .ok_or_else(|| Failure::Usage("--model endpoint needs --endpoint-url".into()))?;
            let name = m
                .model_name
                .clone()
                .ok_or_else(|| Failure::Usage("--model endpoint needs --model-name".into()))?;
            let cfg = EndpointConfig {
                max_in_flight: m.max_in_flight,
                timeout_secs: m.timeout_secs,
                max_retries: m.max_retries,
                role: match m.prompt_role {
                    RoleArg::User => PromptRole::User,
                    RoleArg::System => PromptRole::System,
                },
                ..EndpointConfig::new(url, name)
            };
            cfg.validate()?;
            Model::Endpoint(cfg)
        }
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}

/// Runs the model, writing `responses.jsonl` (input order) and
/// `responses.journal.jsonl` (arrival order) into `dir`.
fn run_model(data: &[Instance], m: &ModelArgs, mask_at_test: bool, dir: &Path) -> Result<Vec<PredictionRecord>, Failure> {
    let model = build_model(m)?;
    let opts = RunOptions {
        mask_at_test,
        seed: m.seed,
        template: load_template(m.template.as_deref())?,
        builtin_workers: 1,
    };
    create_dir(dir)?;
    let journal = ResponseJournal::create(&dir.join("responses.journal.jsonl"))?;
    let records = run_inference(data, &model, &opts, Some(&journal))?;
    write_jsonl(&records, &dir.join("responses.jsonl"))?;
    if !records.is_empty() && records.iter().all(|r| r.transport_error.is_some()) {
        return Err(Error::Transport {
            attempts: records[0].attempt_count,
            message: format!("every request failed; first: {}", records[0].transport_error.as_deref().unwrap_or("")),
        }
        .into());
    }
    Ok(records)
}

fn infer(a: InferArgs) -> CmdResult {
    let data = load(&a.input)?;
    let records = run_model(&data, &a.model, a.mask_at_test, &a.output)?;
    Ok(json!({
        "responses": records.len(),
        "transport_errors": records.iter().filter(|r| r.transport_error.is_some()).count(),
        "parse_errors": records.iter().filter(|r| r.outcome.is_parse_error()).count(),
        "output": a.output.join("responses.jsonl"),
    }))
}

fn parse(a: ParseArgs) -> CmdResult {
    let raw = match &a.input {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(|e| Error::Io {
                path: "<stdin>".into(),
                source: e,
            })?;
            s
        }
    };
    let outcome = extract_calls(&raw);
    let mut out = json!({"outcome": outcome});
    if let Some(path) = &a.candidates {
        let data = load_dataset(path, DatasetFormat::Canonical, true)?.instances;
        let inst = match &a.id {
            Some(id) => data.iter().find(|i| &i.id == id),
            None => data.first(),
        }
        .ok_or_else(|| Failure::Usage("no matching instance in --candidates".into()))?;
        out["violations"] = serde_json::to_value(validate_calls(outcome.calls(), &inst.candidates))?;
    }
    Ok(out)
}

fn report_summary(r: &EvalReport) -> Value {
    let metrics: serde_json::Map<String, Value> = r.metrics().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    json!({"n_instances": r.n_instances, "metrics": metrics})
}

fn evaluate(data: &[Instance], records: &[PredictionRecord]) -> Result<EvalReport, Failure> {
    let preds: HashMap<String, _> = records.iter().map(|r| (r.id.clone(), r.outcome.clone())).collect();
    Ok(evaluate_dataset(&preds, data)?)
}

fn eval(a: EvalArgs) -> CmdResult {
    let data = load(&a.input)?;
    create_dir(&a.output)?;
    let records = match &a.predictions {
        Some(p) => read_jsonl::<PredictionRecord>(p)?,
        None => run_model(&data, &a.model, a.mask_at_test, &a.output)?,
    };
    let report = evaluate(&data, &records)?;
    report.write(&a.output)?;
    Ok(report_summary(&report))
}

fn robustness(a: RobustnessArgs) -> CmdResult {
    let data = load(&a.input)?;
    let mut reports = Vec::new();
    for (sub, masked) in [("plain", false), ("masked", true)] {
        let dir = a.output.join(sub);
        let records = run_model(&data, &a.model, masked, &dir)?;
        let report = evaluate(&data, &records)?;
        report.write(&dir)?;
        reports.push(report);
    }
    let deg = degradation_report(&reports[0], &reports[1])?;
    write_text(&a.output.join("degradation.json"), &deg.to_json())?;
    write_text(&a.output.join("degradation.csv"), &deg.to_csv()?)?;
    Ok(json!({"plain": report_summary(&reports[0]), "masked": report_summary(&reports[1]), "degradation": deg}))
}

fn sweep(a: SweepArgs) -> CmdResult {
    let base = load(&a.input)?;
    let irr = match &a.irr {
        Some(p) => Some(load(&InputArgs {
            input: p.clone(),
            format: Format::Canonical,
            strict: a.input.strict,
        })?),
        None => None,
    };
    let variable = match a.variable {
        VariableArg::MaskRatio => SweepVariable::MaskRatio,
        VariableArg::IrrelevanceRatio => SweepVariable::IrrelevanceRatio,
    };
    create_dir(&a.output)?;
    let mut cfg = SweepConfig::new(variable, a.values, a.seed, &a.output);
    cfg.total = a.total;
    cfg.min_candidates = a.min_candidates;
    let manifest = sweep_datasets(&cfg, &base, irr.as_deref())?;
    Ok(serde_json::to_value(&manifest)?)
}
