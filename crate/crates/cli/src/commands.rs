use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use dto_core::evaluation::{auc_vs_horizon, fit_logistic, Labeler, LabelerMode, VisitIndex};
use dto_core::io::{read_events_csv, read_jsonl};
use dto_core::pipeline::{run_pipeline, Event, Observation, ObservationRecord, PipelineConfig};
use dto_core::policy::{moo_solve, ratio_rule, round_moo, threshold_rule, Candidate, MooConfig, Rule};
use dto_core::schema::{FeatureSchema, SlotInputs};
use dto_core::scoring::{score_delta_effect, ScoringContext};
use dto_core::simulator::{generate_event_log, ContextRecord, SimConfig};
use dto_core::trainers::{fit_aft, LogisticModel, ModelFile, WeibullAftModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, DecideConfig, EvaluateConfig, ModelSpec, ScoreConfig, TrainConfig};
use crate::output::{manifest, now_ms, Inputs, Staged};
use crate::{Common, UsageError};

fn need(p: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.ok_or_else(|| UsageError(format!("{flag} is required")).into())
}

fn out_dir(common: &Common) -> Result<&Path> {
    common.out.as_deref().ok_or_else(|| UsageError("--out is required".into()).into())
}

/// Prints the config and returns true when `--print-config` was given.
fn printed<T: Serialize>(common: &Common, cfg: &T) -> Result<bool> {
    if common.print_config {
        print!("{}", config::to_toml(cfg)?);
    }
    Ok(common.print_config)
}

fn parse_labeler(s: &str) -> Result<LabelerMode> {
    match s {
        "naive" => Ok(LabelerMode::Naive),
        "clean" => Ok(LabelerMode::Clean),
        _ => Err(UsageError(format!("labeler must be `naive` or `clean`, got {s:?}")).into()),
    }
}

fn read_events(inputs: &mut Inputs, path: &Path) -> Result<Vec<Event>> {
    let bytes = inputs.read(path)?;
    let events = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_events_csv(&bytes[..])
    } else {
        read_jsonl(&bytes[..])
    };
    events.with_context(|| format!("parsing events {}", path.display()))
}

fn read_schema(inputs: &mut Inputs, path: &Path) -> Result<FeatureSchema> {
    serde_json::from_slice(&inputs.read(path)?)
        .map_err(dto_core::Error::from)
        .with_context(|| format!("parsing schema {}", path.display()))
}

fn read_observations(inputs: &mut Inputs, path: &Path, schema: &FeatureSchema) -> Result<Vec<Observation>> {
    let records: Vec<ObservationRecord> =
        read_jsonl(&inputs.read(path)?[..]).with_context(|| format!("parsing observations {}", path.display()))?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_observation(schema).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn read_model(inputs: &mut Inputs, path: &Path) -> Result<ModelFile> {
    serde_json::from_slice(&inputs.read(path)?)
        .map_err(dto_core::Error::from)
        .with_context(|| format!("parsing model {}", path.display()))
}

fn read_aft(inputs: &mut Inputs, path: &Path) -> Result<WeibullAftModel> {
    match read_model(inputs, path)? {
        ModelFile::WeibullAft { model, .. } => Ok(model),
        ModelFile::Logistic { .. } => Err(UsageError(format!("{} is a logistic model, expected weibull_aft", path.display())).into()),
    }
}

pub fn simulate(common: &Common, seed: Option<u64>, n_users: Option<usize>, window_hours: Option<f64>) -> Result<()> {
    let started = now_ms();
    let mut cfg: SimConfig = config::load(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n_users {
        cfg.n_users = n;
    }
    if let Some(w) = window_hours {
        cfg.window_hours = w;
    }
    cfg.validate()?;
    if printed(common, &cfg)? {
        return Ok(());
    }
    let mut staged =
        Staged::new(out_dir(common)?, &["events.jsonl", "ground_truth.json", "schema.json", "contexts.jsonl"], common.force)?;
    let sim = generate_event_log(&cfg)?;
    staged.add_jsonl("events.jsonl", &sim.events)?;
    staged.add_json("ground_truth.json", &sim.truth)?;
    staged.add_json("schema.json", &sim.truth.schema)?;
    staged.add_jsonl("contexts.jsonl", &sim.contexts)?;
    let mut m = manifest("simulate", &cfg, Inputs::default(), started)?;
    m.seed = Some(cfg.seed);
    staged.commit(m)?;
    eprintln!(
        "simulated {} users, {} events, censoring fraction {:.3}",
        cfg.n_users,
        sim.events.len(),
        sim.truth.censoring_fraction
    );
    Ok(())
}

pub struct IngestOverrides {
    pub split_seed: Option<u64>,
    pub window_start: Option<f64>,
    pub window_end: Option<f64>,
    pub max_notifications: Option<u32>,
    pub max_visits: Option<u32>,
}

pub fn ingest(common: &Common, events: Option<PathBuf>, schema: Option<PathBuf>, o: IngestOverrides) -> Result<()> {
    let started = now_ms();
    let mut cfg: PipelineConfig = config::load(common.config.as_deref())?;
    if let Some(v) = o.split_seed {
        cfg.split_seed = v;
    }
    if o.window_start.is_some() {
        cfg.window_start = o.window_start;
    }
    if o.window_end.is_some() {
        cfg.window_end = o.window_end;
    }
    if let Some(v) = o.max_notifications {
        cfg.max_notifications = v;
    }
    if let Some(v) = o.max_visits {
        cfg.max_visits = v;
    }
    cfg.validate()?;
    if printed(common, &cfg)? {
        return Ok(());
    }
    let (events_path, schema_path) = (need(events, "--events")?, need(schema, "--schema")?);
    let mut staged = Staged::new(out_dir(common)?, &["train.jsonl", "test.jsonl", "schema.json", "report.json"], common.force)?;
    let mut inputs = Inputs::default();
    let events = read_events(&mut inputs, &events_path)?;
    let schema = read_schema(&mut inputs, &schema_path)?;
    if events.is_empty() {
        eprintln!("warning: {} contains no events; writing empty outputs", events_path.display());
    }
    let (ds, report) = run_pipeline(&events, &schema, &cfg)?;
    let train: Vec<ObservationRecord> = ds.train.iter().map(ObservationRecord::from).collect();
    let test: Vec<ObservationRecord> = ds.test.iter().map(ObservationRecord::from).collect();
    staged.add_jsonl("train.jsonl", &train)?;
    staged.add_jsonl("test.jsonl", &test)?;
    staged.add_json("schema.json", &schema)?;
    staged.add_json("report.json", &report)?;
    let mut m = manifest("ingest", &cfg, inputs, started)?;
    m.seed = Some(cfg.split_seed);
    staged.commit(m)?;
    eprintln!(
        "users kept {} dropped {}; observations train {} test {}; uncensored {:.3}",
        report.outliers.users_kept,
        report.outliers.users_in - report.outliers.users_kept,
        report.train_observations,
        report.test_observations,
        report.uncensored_fraction
    );
    Ok(())
}

pub struct TrainOverrides {
    pub model: Option<String>,
    pub labeler: Option<String>,
    pub observed_until: Option<f64>,
    pub ridge: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

pub fn train(
    common: &Common,
    observations: Option<PathBuf>,
    schema: Option<PathBuf>,
    events: Option<PathBuf>,
    o: TrainOverrides,
) -> Result<()> {
    let started = now_ms();
    let mut cfg: TrainConfig = config::load(common.config.as_deref())?;
    if let Some(m) = o.model {
        cfg.model = m;
    }
    if let Some(l) = o.labeler {
        cfg.labeler = parse_labeler(&l)?;
    }
    if o.observed_until.is_some() {
        cfg.observed_until = o.observed_until;
    }
    if let Some(v) = o.ridge {
        cfg.optimizer.ridge = v;
    }
    if let Some(v) = o.max_iters {
        cfg.optimizer.max_iters = v;
    }
    if let Some(v) = o.tol {
        cfg.optimizer.tol = v;
    }
    cfg.optimizer.validate()?;
    let spec: ModelSpec = cfg.model.parse()?;
    if printed(common, &cfg)? {
        return Ok(());
    }
    let (obs_path, schema_path) = (need(observations, "--observations")?, need(schema, "--schema")?);
    let naive = matches!(spec, ModelSpec::Logistic { .. }) && cfg.labeler == LabelerMode::Naive;
    if naive && events.is_none() {
        return Err(UsageError("naive labels need --events".into()).into());
    }
    let mut staged = Staged::new(out_dir(common)?, &["model.json"], common.force)?;
    let mut inputs = Inputs::default();
    let schema = read_schema(&mut inputs, &schema_path)?;
    let obs = read_observations(&mut inputs, &obs_path, &schema)?;
    let model: ModelFile = match spec {
        ModelSpec::Aft => fit_aft(&obs, &schema, &cfg.optimizer)?.into(),
        ModelSpec::Logistic { horizon_hours } => {
            let index = match &events {
                Some(p) if naive => {
                    let idx = VisitIndex::from_events(&read_events(&mut inputs, p)?);
                    Some(match cfg.observed_until {
                        Some(t) => idx.observed_until(t),
                        None => idx,
                    })
                }
                _ => None,
            };
            let labeler = index.as_ref().map_or(Labeler::Clean, Labeler::Naive);
            fit_logistic(&obs, horizon_hours, &labeler, &schema, &cfg.optimizer)?.into()
        }
    };
    let diag = match &model {
        ModelFile::WeibullAft { model, .. } => model.diagnostics().clone(),
        ModelFile::Logistic { model, .. } => model.diagnostics().clone(),
    };
    staged.add_json("model.json", &model)?;
    let mut m = manifest("train", &cfg, inputs, started)?;
    m.seed = Some(cfg.optimizer.seed);
    m.model_version = Some(model.version().to_owned());
    staged.commit(m)?;
    eprintln!(
        "{spec} {}: {} rows, {} iterations, objective {:.6}, gradient {:.2e}",
        model.version(),
        diag.n_observations,
        diag.iterations,
        diag.objective,
        diag.grad_norm
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    common: &Common,
    aft: Option<PathBuf>,
    logistic: Vec<PathBuf>,
    test: Option<PathBuf>,
    events: Option<PathBuf>,
    horizons: Option<Vec<f64>>,
    labelers: Option<Vec<String>>,
    observed_until: Option<f64>,
) -> Result<()> {
    let started = now_ms();
    let mut cfg: EvaluateConfig = config::load(common.config.as_deref())?;
    if let Some(h) = horizons {
        cfg.horizons = h;
    }
    if let Some(ls) = labelers {
        cfg.labelers = ls.iter().map(|l| parse_labeler(l)).collect::<Result<_>>()?;
    }
    if observed_until.is_some() {
        cfg.observed_until = observed_until;
    }
    if cfg.horizons.is_empty() || cfg.horizons.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(UsageError(format!("horizons must be a non-empty list of positive hours, got {:?}", cfg.horizons)).into());
    }
    if cfg.labelers.is_empty() {
        return Err(UsageError("at least one labeler is required".into()).into());
    }
    if printed(common, &cfg)? {
        return Ok(());
    }
    let (aft_path, test_path) = (need(aft, "--aft")?, need(test, "--test")?);
    let wants_naive = cfg.labelers.contains(&LabelerMode::Naive);
    if wants_naive && events.is_none() {
        return Err(UsageError("naive labels need --events (or pass --labelers clean)".into()).into());
    }
    let mut staged = Staged::new(out_dir(common)?, &["auc.csv", "auc_report.json"], common.force)?;
    let mut inputs = Inputs::default();
    let aft = read_aft(&mut inputs, &aft_path)?;
    let schema = aft.schema().clone();
    let mut lrs: Vec<LogisticModel> = Vec::new();
    for p in &logistic {
        match read_model(&mut inputs, p)? {
            ModelFile::Logistic { model, .. } => {
                if model.schema().id() != schema.id() {
                    return Err(dto_core::Error::Schema(format!(
                        "{} uses schema {}, the AFT model uses {}",
                        p.display(),
                        model.schema().id(),
                        schema.id()
                    ))
                    .into());
                }
                lrs.push(model);
            }
            ModelFile::WeibullAft { .. } => {
                return Err(UsageError(format!("{} is an AFT model, expected logistic", p.display())).into())
            }
        }
    }
    let test = read_observations(&mut inputs, &test_path, &schema)?;
    let index = match &events {
        Some(p) if wants_naive => {
            let idx = VisitIndex::from_events(&read_events(&mut inputs, p)?);
            Some(match cfg.observed_until {
                Some(t) => idx.observed_until(t),
                None => idx,
            })
        }
        _ => None,
    };
    let labelers: Vec<Labeler<'_>> = cfg
        .labelers
        .iter()
        .map(|l| match l {
            LabelerMode::Naive => Labeler::Naive(index.as_ref().expect("index built for naive labels")),
            LabelerMode::Clean => Labeler::Clean,
        })
        .collect();
    let report = auc_vs_horizon(&aft, &lrs, &test, &labelers, &cfg.horizons)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    staged.add("auc.csv", csv);
    staged.add_json("auc_report.json", &report)?;
    let mut m = manifest("evaluate", &cfg, inputs, started)?;
    m.model_version = Some(aft.version());
    staged.commit(m)?;
    print!("{}", report.render_table());
    Ok(())
}

/// One line of the delta-effect file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub user_id: String,
    pub delta: f64,
    pub p_send: f64,
    pub p_wait: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub alpha: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub w0_hours: f64,
    pub horizon_hours: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_click: Option<f64>,
    pub model_version: String,
}

pub fn score(common: &Common, model: Option<PathBuf>, contexts: Option<PathBuf>, horizon: Option<f64>) -> Result<()> {
    let started = now_ms();
    let mut cfg: ScoreConfig = config::load(common.config.as_deref())?;
    if let Some(h) = horizon {
        cfg.horizon_hours = h;
    }
    if !(cfg.horizon_hours.is_finite() && cfg.horizon_hours > 0.0) {
        return Err(UsageError(format!("horizon must be positive, got {}", cfg.horizon_hours)).into());
    }
    if printed(common, &cfg)? {
        return Ok(());
    }
    let (model_path, ctx_path) = (need(model, "--model")?, need(contexts, "--contexts")?);
    let mut staged = Staged::new(out_dir(common)?, &["scores.jsonl"], common.force)?;
    let mut inputs = Inputs::default();
    let model = read_aft(&mut inputs, &model_path)?;
    let contexts: Vec<ContextRecord> =
        read_jsonl(&inputs.read(&ctx_path)?[..]).with_context(|| format!("parsing contexts {}", ctx_path.display()))?;
    let version = model.version();
    let scores: Vec<ScoreRecord> = contexts
        .par_iter()
        .map(|c| {
            let x = model.schema().build(&SlotInputs {
                raw: &c.features,
                badge_count: c.badge_count,
                hours_since_state_start: c.w0_hours,
            })?;
            let r = score_delta_effect(&ScoringContext::new(x, c.w0_hours, cfg.horizon_hours)?, &model)?;
            Ok(ScoreRecord {
                user_id: c.user_id.clone(),
                delta: r.delta,
                p_send: r.p_send,
                p_wait: r.p_wait,
                lambda0: r.lambda0,
                lambda1: r.lambda1,
                alpha: r.alpha,
                mu0: r.mu0,
                mu1: r.mu1,
                w0_hours: c.w0_hours,
                horizon_hours: cfg.horizon_hours,
                p_click: c.p_click,
                model_version: version.clone(),
            })
        })
        .map(|r: dto_core::Result<ScoreRecord>| r)
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{} line {}", ctx_path.display(), i + 1)))
        .collect::<Result<_>>()?;
    staged.add_jsonl("scores.jsonl", &scores)?;
    let mut m = manifest("score", &cfg, inputs, started)?;
    m.model_version = Some(version);
    staged.commit(m)?;
    eprintln!("scored {} contexts at T = {} h", scores.len(), cfg.horizon_hours);
    Ok(())
}

fn parse_rule(s: &str) -> Result<Rule> {
    match s {
        "threshold" => Ok(Rule::Threshold),
        "ratio" => Ok(Rule::Ratio),
        "moo" => Ok(Rule::Moo),
        _ => Err(UsageError(format!("rule must be threshold, ratio or moo, got {s:?}")).into()),
    }
}

pub fn decide(
    common: &Common,
    scores: Option<PathBuf>,
    rule: Option<String>,
    kappa: Option<f64>,
    c_click: Option<f64>,
    c_send: Option<f64>,
) -> Result<()> {
    let started = now_ms();
    let mut cfg: DecideConfig = config::load(common.config.as_deref())?;
    if let Some(r) = rule {
        cfg.rule = parse_rule(&r)?;
    }
    if let Some(k) = kappa {
        cfg.kappa = k;
    }
    if let Some(v) = c_click {
        cfg.c_click = v;
    }
    if let Some(v) = c_send {
        cfg.c_send = v;
    }
    if !cfg.kappa.is_finite() {
        return Err(UsageError("kappa must be finite".into()).into());
    }
    let moo = MooConfig { c_click: cfg.c_click, c_send: cfg.c_send };
    moo.validate()?;
    if printed(common, &cfg)? {
        return Ok(());
    }
    let scores_path = need(scores, "--scores")?;
    let names: &[&str] = if cfg.rule == Rule::Moo { &["decisions.jsonl", "solution.json"] } else { &["decisions.jsonl"] };
    let mut staged = Staged::new(out_dir(common)?, names, common.force)?;
    let mut inputs = Inputs::default();
    let records: Vec<ScoreRecord> =
        read_jsonl(&inputs.read(&scores_path)?[..]).with_context(|| format!("parsing scores {}", scores_path.display()))?;
    let candidates: Vec<Candidate> = records
        .iter()
        .map(|r| {
            let p_click = r.p_click.ok_or_else(|| anyhow!(dto_core::Error::Data(format!("score for {} has no p_click", r.user_id))))?;
            Ok(Candidate::new(r.user_id.clone(), r.delta, r.p_wait, p_click)?)
        })
        .collect::<Result<_>>()?;
    let decisions = match cfg.rule {
        Rule::Threshold => threshold_rule(&candidates, cfg.kappa),
        Rule::Ratio => ratio_rule(&candidates, cfg.kappa),
        Rule::Moo if candidates.is_empty() => Vec::new(),
        Rule::Moo => {
            let sol = moo_solve(&candidates, &moo)?;
            staged.add_json("solution.json", &sol)?;
            round_moo(&candidates, &sol)
        }
    };
    if candidates.is_empty() {
        eprintln!("warning: no candidates in {}", scores_path.display());
    }
    staged.add_jsonl("decisions.jsonl", &decisions)?;
    let sends = decisions.iter().filter(|d| d.send).count();
    staged.commit(manifest("decide", &cfg, inputs, started)?)?;
    eprintln!("{sends} of {} candidates selected for sending", decisions.len());
    Ok(())
}
