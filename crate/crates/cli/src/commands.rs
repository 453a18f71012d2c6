use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use serde::Serialize;
use serde_json::json;

use permassist_core::analytics::{run_report, ReportName};
use permassist_core::cf::{score_curve, score_grid, CalibrationMode, CfHyperparameters, CfModel};
use permassist_core::config::{PredictorKind, RunConfig, SettingsFile};
use permassist_core::dataset::{filter_for_modeling, generate_synthetic, SyntheticSpec};
use permassist_core::eval::{
    breakdown, confidence_grid, cross_validate, repeat_cross_validation, sweep_csv, sweep_thresholds, Axis, CfFactory,
    CvConfig, HybridFactory, IclFactory, MetricReport, PredictorFactory,
};
use permassist_core::hybrid::HybridPredictor;
use permassist_core::icl::{HistoryRecord, IclPredictor, MockPolicy, TextModel};
use permassist_core::service::{AssistantState, ServiceConfig};
use permassist_core::{Dataset, DatasetError, Domain, ParticipantId, PermissionDecision, PermissionRequest, RequestKey};

use crate::cli::*;
use crate::error::CliError;
use crate::provider::build_provider;
use crate::server::{self, AppState};
use crate::store::Store;

pub struct Env {
    pub settings: SettingsFile,
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| CliError::from(e).with_context(path.display().to_string()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<(), CliError> {
    print_text(&serde_json::to_string_pretty(value)?)
}

fn print_text(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).map_err(|e| dataset_error(e).with_context(path.display().to_string()))
}

/// Integrity and range failures list every offending record in `context`.
fn dataset_error(e: DatasetError) -> CliError {
    match &e {
        DatasetError::Integrity { problems } | DatasetError::Range { problems } => {
            let message = e.to_string();
            CliError::Component { code: "dataset", message, context: Some(problems.join("\n")) }
        }
        _ => e.into(),
    }
}

fn modeling_set(d: Dataset, no_filter: bool) -> Result<Dataset, CliError> {
    if no_filter {
        Ok(d)
    } else {
        Ok(filter_for_modeling(&d)?)
    }
}

fn run_config(env: &Env, command: &str) -> RunConfig {
    RunConfig::new(command, env.settings.clone())
}

fn prepare_out(dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::from(e).with_context(dir.display().to_string()))?;
    config.write_to(dir)?;
    Ok(())
}

fn provider(env: &Env, mock: MockPolicy) -> Result<Arc<dyn TextModel>, CliError> {
    build_provider(&env.settings.provider, mock).map_err(|e| CliError::component("provider", e))
}

pub fn run(command: Command, env: &Env) -> Result<(), CliError> {
    match command {
        Command::Ingest(c) => ingest(c, env),
        Command::Analyze(a) => analyze(a, env),
        Command::Cf(c) => cf(c, env),
        Command::Icl(a) => icl(a, env),
        Command::Hybrid(a) => hybrid(a, env),
        Command::Eval(EvalCmd::Cv(a)) => eval_cv(a, env),
        Command::Serve(a) => serve(a, env),
    }
}

fn ingest(c: IngestCmd, env: &Env) -> Result<(), CliError> {
    match c {
        IngestCmd::Validate { path } => {
            let d = load_dataset(&path)?;
            print_json(&json!({ "valid": true, "stats": d.stats() }))
        }
        IngestCmd::Stats { path, filtered } => {
            let d = load_dataset(&path)?;
            let d = if filtered { filter_for_modeling(&d)? } else { d };
            print_json(&d.stats())
        }
        IngestCmd::Synth { out, users_per_group, allow_probability, domains, seed } => {
            let domains: Vec<Domain> =
                domains.iter().map(|s| s.parse::<Domain>().map_err(|e| CliError::Usage(e.to_string()))).collect::<Result<_, _>>()?;
            let spec = SyntheticSpec::two_groups(users_per_group, &domains, allow_probability);
            let s = generate_synthetic(&spec, seed)?;
            fs::write(&out, s.dataset.to_json())?;
            let mut config = run_config(env, "ingest synth");
            config.dataset = Some(out.clone());
            config.seed = seed;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                config.write_to(dir)?;
            }
            print_json(&json!({ "written": out, "stats": s.dataset.stats() }))
        }
    }
}

fn analyze(a: AnalyzeArgs, env: &Env) -> Result<(), CliError> {
    let name: ReportName = a.report.parse().map_err(CliError::Usage)?;
    let d = load_dataset(&a.dataset)?;
    let r = run_report(name, &d);
    if let Some(dir) = &a.out {
        let mut config = run_config(env, &format!("analyze {}", name.as_str()));
        config.dataset = Some(a.dataset.clone());
        config.out_dir = Some(dir.clone());
        prepare_out(dir, &config)?;
        write_json(&dir.join(format!("{}.json", name.as_str())), &r.document)?;
        if let Some(csv) = &r.csv {
            fs::write(dir.join(format!("{}.csv", name.as_str())), csv)?;
        }
    }
    print_json(&r.document)
}

fn hyper_with_seed(env: &Env, seed: u64) -> CfHyperparameters {
    CfHyperparameters { seed, ..env.settings.cf }
}

fn cf(c: CfCmd, env: &Env) -> Result<(), CliError> {
    match c {
        CfCmd::Train { dataset, out, seed, held_out, no_filter } => {
            let d = modeling_set(load_dataset(&dataset)?, no_filter)?;
            let calibration = match held_out {
                Some(fraction) => CalibrationMode::HeldOut { fraction },
                None => env.settings.calibration,
            };
            let model = CfModel::train(&d.decisions, hyper_with_seed(env, seed), calibration, env.settings.hybrid.caps())?;
            fs::write(&out, model.to_json()?)?;
            let mut config = run_config(env, "cf train");
            config.dataset = Some(dataset);
            config.seed = seed;
            config.cf = model.hyper;
            config.calibration = calibration;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                config.write_to(dir)?;
            }
            print_json(&json!({
                "written": out,
                "users": model.graph.users.len(),
                "requests": model.graph.requests.len(),
                "edges": model.graph.edges.len(),
                "calibration": model.calibration,
            }))
        }
        CfCmd::Predict { model, user, query, tool, data_type, threshold } => {
            let text = fs::read_to_string(&model).map_err(|e| CliError::from(e).with_context(model.display().to_string()))?;
            let m = CfModel::from_json(&text)?;
            let key = RequestKey {
                query_id: query.as_str().into(),
                tool_id: tool.as_str().into(),
                data_type_id: data_type.as_str().into(),
            };
            match m.predict(&ParticipantId::new(&user), &key) {
                Some(p) => print_json(&json!({ "cf": p, "prediction": p.to_prediction(threshold) })),
                None => Err(CliError::component("unseen", format!("user `{user}` or request `{key}` is not in the model"))),
            }
        }
        CfCmd::SweepThresholds { dataset, out, seed, folds, steps } => {
            let d = modeling_set(load_dataset(&dataset)?, false)?;
            let mut config = run_config(env, "cf sweep-thresholds");
            config.dataset = Some(dataset);
            config.out_dir = Some(out.clone());
            config.seed = seed;
            config.folds = folds;
            config.predictor = Some(PredictorKind::Cf);
            config.validate()?;
            prepare_out(&out, &config)?;

            let factory = cf_factory(env);
            let report = cross_validate(&d, &factory, &CvConfig { k: folds, history_ratio: 1.0, seed })?;
            let rows = sweep_thresholds(&report.records, &confidence_grid(&report.records, steps));
            fs::write(out.join("coverage_curve.csv"), sweep_csv(&rows))?;
            write_json(&out.join("coverage_curve.json"), &rows)?;

            // Metrics against the raw score threshold on a model fit to all data.
            let model = CfModel::train(&d.decisions, hyper_with_seed(env, seed), env.settings.calibration, env.settings.hybrid.caps())?;
            let scored = model.score_decisions(&d.decisions);
            let curve = score_curve(&scored, &score_grid(&scored, steps));
            write_json(&out.join("score_curve.json"), &curve)?;
            let mut csv = String::from("threshold,accuracy,fpr,fnr,allow_rate\n");
            for r in &curve {
                csv.push_str(&format!("{},{},{},{},{}\n", r.threshold, r.accuracy, r.fpr, r.fnr, r.allow_rate));
            }
            fs::write(out.join("score_curve.csv"), csv)?;
            print_json(&json!({ "out": out, "coverage_points": rows.len(), "score_points": curve.len(), "t_eq": model.calibration.t_eq }))
        }
    }
}

fn cf_factory(env: &Env) -> CfFactory {
    CfFactory {
        hyper: env.settings.cf,
        calibration: env.settings.calibration,
        caps: env.settings.hybrid.caps(),
        coverage_threshold: env.settings.hybrid.coverage_threshold,
    }
}

/// The recorded decision to predict, and the user's history without that query.
struct Target<'a> {
    decision: &'a PermissionDecision,
    request: PermissionRequest,
    history: Vec<HistoryRecord>,
    /// The user's other answers on the same query: the pending pool.
    pool: Vec<PermissionRequest>,
}

fn find_target<'a>(d: &'a Dataset, a: &PredictArgs) -> Result<Target<'a>, CliError> {
    let user = ParticipantId::new(&a.user);
    let matches: Vec<&PermissionDecision> = d
        .decisions
        .iter()
        .filter(|x| {
            x.participant_id == user
                && x.query_id.as_str() == a.query
                && x.data_type_id.as_str() == a.data_type
                && a.tool.as_deref().is_none_or(|t| x.tool_id.as_str() == t)
        })
        .collect();
    let decision = match matches.as_slice() {
        [one] => *one,
        [] => return Err(CliError::component("not_found", "no recorded decision matches the given user, query and data type")),
        _ => return Err(CliError::Usage("several tools match; pass --tool".into())),
    };
    let request = d.request_for(decision).ok_or_else(|| CliError::component("dataset", "query not in catalog"))?;
    let history = d
        .decisions
        .iter()
        .filter(|x| x.participant_id == user && x.query_id != decision.query_id)
        .map(|x| HistoryRecord::from_decision(&d.catalog, x))
        .collect();
    let pool = d
        .decisions
        .iter()
        .filter(|x| x.participant_id == user && x.query_id == decision.query_id && x.key() != decision.key())
        .filter_map(|x| d.request_for(x))
        .collect();
    Ok(Target { decision, request, history, pool })
}

fn icl(a: PredictArgs, env: &Env) -> Result<(), CliError> {
    let d = load_dataset(&a.dataset)?;
    let t = find_target(&d, &a)?;
    let profile = d.profile(&t.decision.participant_id).ok_or_else(|| CliError::component("dataset", "user has no profile"))?;
    let provider = provider(env, a.mock.policy())?;
    let p = IclPredictor {
        catalog: &d.catalog,
        provider: provider.as_ref(),
        config: env.settings.icl,
        coverage_threshold: env.settings.hybrid.coverage_threshold,
    };
    let spec = p.prompt(profile, &t.history, &t.request);
    if a.prompt_only {
        print_text(&spec.render())?;
        return Ok(());
    }
    let (prediction, response) = p.predict(profile, &t.history, &t.request)?;
    print_json(&json!({
        "request": t.request,
        "truth": t.decision.option.share_label(),
        "prediction": prediction,
        "response": response,
    }))
}

fn hybrid(a: HybridArgs, env: &Env) -> Result<(), CliError> {
    let d = load_dataset(&a.predict.dataset)?;
    let t = find_target(&d, &a.predict)?;
    let profile = d.profile(&t.decision.participant_id).ok_or_else(|| CliError::component("dataset", "user has no profile"))?;
    let model = match &a.model {
        Some(path) => CfModel::from_json(&fs::read_to_string(path)?)?,
        None => {
            // keep the target query of this user out of training
            let train: Vec<&PermissionDecision> = d
                .decisions
                .iter()
                .filter(|x| !(x.participant_id == t.decision.participant_id && x.query_id == t.decision.query_id))
                .collect();
            CfModel::train(train, hyper_with_seed(env, a.seed), env.settings.calibration, env.settings.hybrid.caps())?
        }
    };
    let provider = provider(env, a.predict.mock.policy())?;
    let p = HybridPredictor {
        catalog: &d.catalog,
        cf: &model,
        provider: provider.as_ref(),
        config: env.settings.hybrid,
        icl: env.settings.icl,
    };
    if a.predict.prompt_only {
        print_text(&p.prompt(profile, &t.history, &t.request, &t.pool).0.render())?;
        return Ok(());
    }
    let out = p.predict(profile, &t.history, &t.request, &t.pool)?;
    print_json(&json!({
        "request": t.request,
        "truth": t.decision.option.share_label(),
        "outcome": out,
    }))
}

fn factory(kind: PredictorKind, env: &Env, mock: MockPolicy) -> Result<Box<dyn PredictorFactory>, CliError> {
    Ok(match kind {
        PredictorKind::Cf => Box::new(cf_factory(env)),
        PredictorKind::Icl => Box::new(IclFactory {
            provider: provider(env, mock)?,
            config: env.settings.icl,
            coverage_threshold: env.settings.hybrid.coverage_threshold,
        }),
        PredictorKind::Hybrid => Box::new(HybridFactory {
            provider: provider(env, mock)?,
            hyper: env.settings.cf,
            calibration: env.settings.calibration,
            config: env.settings.hybrid,
            icl: env.settings.icl,
        }),
    })
}

fn write_report(dir: &Path, report: &MetricReport) -> Result<(), CliError> {
    let mut summary = report.clone();
    summary.records.clear();
    write_json(&dir.join("metric_report.json"), &summary)?;
    let mut lines = String::new();
    for r in &report.records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    fs::write(dir.join("predictions.jsonl"), lines)?;
    let rows = sweep_thresholds(&report.records, &confidence_grid(&report.records, 100));
    fs::write(dir.join("coverage_curve.csv"), sweep_csv(&rows))?;
    write_json(&dir.join("coverage_curve.json"), &rows)?;
    for axis in [Axis::User, Axis::Domain, Axis::Tool, Axis::DataType] {
        let name = format!("breakdown_{}.json", format!("{axis:?}").to_lowercase());
        write_json(&dir.join(name), &breakdown(&report.records, axis))?;
    }
    Ok(())
}

fn eval_cv(a: CvArgs, env: &Env) -> Result<(), CliError> {
    if a.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let mut config = run_config(env, "eval cv");
    config.dataset = Some(a.dataset.clone());
    config.out_dir = Some(a.out.clone());
    config.seed = a.seed;
    config.predictor = Some(a.predictor);
    config.history_ratio = a.history_ratio;
    config.folds = a.folds;
    config.workers = rayon::current_num_threads().into();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let d = modeling_set(load_dataset(&a.dataset)?, a.no_filter)?;
    let f = factory(a.predictor, env, a.mock.policy())?;
    prepare_out(&a.out, &config)?;
    let cv = CvConfig { k: a.folds, history_ratio: a.history_ratio, seed: a.seed };
    if a.repeat == 1 {
        let report = cross_validate(&d, f.as_ref(), &cv)?;
        write_report(&a.out, &report)?;
        print_json(&json!({
            "out": a.out,
            "predictor": report.predictor,
            "pooled": report.pooled,
            "pooled_coverage": report.pooled_coverage,
            "across_folds": report.across_folds,
        }))
    } else {
        let seeds: Vec<u64> = (0..a.repeat as u64).map(|i| a.seed + i).collect();
        let rep = repeat_cross_validation(&d, f.as_ref(), &cv, &seeds)?;
        for (seed, run) in seeds.iter().zip(&rep.runs) {
            let dir = a.out.join(format!("seed-{seed}"));
            fs::create_dir_all(&dir)?;
            write_report(&dir, run)?;
        }
        write_json(&a.out.join("repetitions.json"), &rep.across_seeds)?;
        print_json(&json!({ "out": a.out, "seeds": seeds, "across_seeds": rep.across_seeds }))
    }
}

fn serve(a: ServeArgs, env: &Env) -> Result<(), CliError> {
    let token = a
        .token
        .or_else(|| std::env::var("PERMASSIST_API_TOKEN").ok())
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CliError::Usage("an API token is required (--token or PERMASSIST_API_TOKEN)".into()))?;
    let store = Store::open(&a.db)?;
    let config = ServiceConfig {
        hybrid: env.settings.hybrid,
        icl: env.settings.icl,
        cf: env.settings.cf,
        calibration: env.settings.calibration,
    };
    let state = match store.load()? {
        Some(mut s) => {
            s.config = config;
            s
        }
        None => {
            let mut s = match &a.import {
                Some(path) => {
                    let d = load_dataset(path)?;
                    let mut s = AssistantState::new(d.catalog.clone(), config);
                    s.import(&d, Utc::now())?;
                    s
                }
                None => AssistantState::new(Default::default(), config),
            };
            let info = s.refresh_models(Utc::now())?;
            if info.changed {
                store.save_model(info.version, &s.model())?;
            }
            store.save(&s)?;
            s
        }
    };
    let mut run = run_config(env, "serve");
    run.dataset = a.import.clone();
    if let Some(dir) = a.db.parent().filter(|p| !p.as_os_str().is_empty()) {
        run.write_to(dir)?;
    }
    let provider = provider(env, a.mock.policy())?;
    let app = Arc::new(AppState::new(state, Some(store), provider, token));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(app, &a.bind))?;
    Ok(())
}

/// Resolves settings: file first, then provider variables from the environment.
pub fn load_settings(path: Option<&PathBuf>) -> Result<SettingsFile, CliError> {
    let mut s = match path {
        Some(p) => SettingsFile::load(p)?,
        None => SettingsFile::default(),
    };
    s.provider.apply_lookup(|k| std::env::var(k).ok())?;
    Ok(s)
}
