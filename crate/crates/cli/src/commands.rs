use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;
use xlcrf::container::{write_atomic, Container};
use xlcrf::corpus::{
    make_splits, parse_conll, parse_manifest, parse_tokens, repair_bio, serialize_conll, LabeledSentence, Role,
    Sentence, SplitSpec, Splits, TagSet,
};
use xlcrf::eval::{entity_f1, fmt2, EvalReport};
use xlcrf::loglinear::features::FeatureTemplateSet;
use xlcrf::loglinear::LogLinearModel;
use xlcrf::neural::gradcheck::{grad_check, GradCheckOptions};
use xlcrf::neural::NeuralModel;
use xlcrf::rng::SplitMix64;
use xlcrf::synth::{transfer_pair, Lexicon, SynthParams};
use xlcrf::training::{self, SourceCorpus, TransferTask};

use crate::config::{ExperimentConfig, ModelKind};
use crate::CliError;

pub struct Data {
    pub tagset: TagSet,
    pub target_language: String,
    pub splits: Splits,
    pub sources: Vec<SourceCorpus>,
}

fn read_corpus(path: &Path, language: &str, tagset: &TagSet) -> Result<Vec<LabeledSentence>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let parsed = parse_conll(&text, language, tagset).map_err(|e| CliError::from(e).context(path.display()))?;
    if parsed.repairs > 0 {
        log::warn!("{}: repaired {} invalid I- tags", path.display(), parsed.repairs);
    }
    Ok(parsed.sentences)
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data, CliError> {
    let manifest = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::usage("no manifest configured (set `manifest = PATH`)"))?;
    let text = fs::read_to_string(manifest)
        .map_err(|e| CliError::usage(format!("cannot read manifest {}: {e}", manifest.display())))?;
    let entries = parse_manifest(&text, manifest.parent().unwrap_or(Path::new(".")))
        .map_err(|e| CliError::usage(format!("manifest {}: {e}", manifest.display())))?;
    let tagset = TagSet::default();

    let targets: Vec<_> = entries.iter().filter(|e| e.role == Role::Target).collect();
    let [target] = targets.as_slice() else {
        return Err(CliError::usage(format!(
            "manifest {} must name exactly one target corpus, found {}",
            manifest.display(),
            targets.len()
        )));
    };
    let corpus = read_corpus(&target.path, &target.language, &tagset)?;
    let spec = SplitSpec {
        train_size: cfg.train_size,
        dev_size: cfg.dev_size,
        test_size: cfg.test_size,
        seed: cfg.seed,
    };
    let splits = make_splits(&corpus, &spec).map_err(|e| CliError::from(e).context(target.path.display()))?;

    let mut sources = Vec::new();
    for e in entries.iter().filter(|e| e.role == Role::Source) {
        let mut train = read_corpus(&e.path, &e.language, &tagset)?;
        SplitMix64::new(cfg.seed).shuffle(&mut train);
        if train.len() > cfg.source_size {
            train.truncate(cfg.source_size);
        }
        sources.push(SourceCorpus {
            language: e.language.clone(),
            train,
        });
    }
    Ok(Data {
        tagset,
        target_language: target.language.clone(),
        splits,
        sources,
    })
}

pub struct TrainSummary {
    pub dev: EvalReport,
    pub test: EvalReport,
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::from(e).context(path.display()))
}

fn report_json(r: &EvalReport) -> serde_json::Value {
    serde_json::to_value(r).expect("report serializes")
}

/// Trains per `cfg` and writes everything into `cfg.out`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainSummary, CliError> {
    let data = load_data(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.out.display())))?;
    write_text(&cfg.out.join("config.resolved"), &cfg.render())?;

    let mut task = TransferTask {
        target_language: data.target_language.clone(),
        target_train: data.splits.train.clone(),
        sources: data.sources,
        mu: cfg.mu,
        dev: data.splits.dev.clone(),
    };
    let test = &data.splits.test;

    let (dev, test_report, extra) = match cfg.model_kind {
        ModelKind::LogLinear => {
            let (model, report) = training::train_loglinear(
                &task,
                data.tagset.clone(),
                FeatureTemplateSet::default(),
                cfg.conjoin_language,
                &cfg.loglinear_config(),
            )?;
            model.save(&cfg.out.join("model.bin"))?;
            let history: String = report
                .objective_trace
                .iter()
                .enumerate()
                .map(|(i, v)| json!({"iteration": i, "objective": v}).to_string() + "\n")
                .collect();
            write_text(&cfg.out.join("history.jsonl"), &history)?;
            let dev = training::evaluate_loglinear(&model, &task.dev)?;
            let test_report = training::evaluate_loglinear(&model, test)?;
            let extra = json!({
                "iterations": report.iterations,
                "termination": format!("{:?}", report.termination),
                "features": model.index.len(),
            });
            (dev, test_report, extra)
        }
        ModelKind::NeuralMono | ModelKind::NeuralXling => {
            if cfg.model_kind == ModelKind::NeuralMono && !task.sources.is_empty() {
                log::warn!("neural-mono trains on the target corpus only; ignoring source corpora");
                task.sources.clear();
            }
            let model = training::build_model(&task, cfg.neural_config(), data.tagset.clone())?;
            let outcome = training::train(&task, &cfg.train_config(Some(cfg.out.clone())), model)?;
            outcome.best_model.save(&cfg.out.join("model.bin"))?;
            training::write_history(&cfg.out.join("history.jsonl"), &outcome.history)?;
            let dev = training::evaluate_neural(&outcome.best_model, &task.dev)?;
            let test_report = training::evaluate_neural(&outcome.best_model, test)?;
            let extra = json!({
                "best_epoch": outcome.best_epoch,
                "parameters": outcome.best_model.num_params(),
            });
            (dev, test_report, extra)
        }
    };

    let metrics = json!({
        "model_kind": cfg.model_kind.name(),
        "dev": report_json(&dev),
        "test": report_json(&test_report),
        "training": extra,
    });
    write_text(
        &cfg.out.join("metrics.json"),
        &(serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n"),
    )?;
    println!(
        "{}: dev F1 {}, test F1 {}",
        cfg.model_kind.name(),
        fmt2(dev.f1),
        fmt2(test_report.f1)
    );
    Ok(TrainSummary { dev, test: test_report })
}

enum LoadedModel {
    LogLinear(LogLinearModel),
    Neural(NeuralModel),
}

fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let c = Container::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let model = match c.kind.as_str() {
        "loglinear" => LoadedModel::LogLinear(LogLinearModel::from_container(&c)?),
        "neural" => LoadedModel::Neural(NeuralModel::from_container(&c)?),
        other => return Err(CliError::data(format!("{}: unknown model kind `{other}`", path.display()))),
    };
    Ok(model)
}

pub fn tag(model_path: &Path, input: &Path, output: &Path, language: Option<&str>) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let text = fs::read_to_string(input).map_err(|e| CliError::data(format!("cannot read {}: {e}", input.display())))?;
    let (tagset, default_lang) = match &model {
        LoadedModel::LogLinear(m) => (m.tagset.clone(), m.languages.first().cloned().unwrap_or_default()),
        LoadedModel::Neural(m) => (m.tagset.clone(), m.languages[0].clone()),
    };
    let lang = language.map(str::to_string).unwrap_or(default_lang);
    let sentences: Vec<Sentence> = parse_tokens(&text, &lang).map_err(|e| CliError::from(e).context(input.display()))?;
    let mut predictions = match &model {
        LoadedModel::LogLinear(m) => m.predict(&sentences)?,
        LoadedModel::Neural(m) => training::predict_neural(m, &sentences)?,
    };
    for p in &mut predictions {
        repair_bio(p, &tagset);
    }
    let labeled: Vec<LabeledSentence> = sentences
        .into_iter()
        .zip(predictions)
        .map(|(sentence, tags)| LabeledSentence { sentence, tags })
        .collect();
    write_text(output, &serialize_conll(&labeled, &tagset))
}

pub fn eval(gold: &Path, pred: &Path, json_out: Option<&Path>) -> Result<(), CliError> {
    let tagset = TagSet::default();
    let g = read_corpus(gold, "xx", &tagset)?;
    let p = read_corpus(pred, "xx", &tagset)?;
    for (i, (a, b)) in g.iter().zip(&p).enumerate() {
        if a.sentence.tokens != b.sentence.tokens {
            return Err(CliError::data(format!("sentence {}: gold and prediction tokens differ", i + 1)));
        }
    }
    let preds: Vec<Vec<usize>> = p.into_iter().map(|s| s.tags).collect();
    let report = entity_f1(&g, &preds, &tagset)?;
    print!("{}", report.render());
    if let Some(path) = json_out {
        write_text(path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    }
    Ok(())
}

/// A synthetic target/source pair, used when no manifest is configured.
fn synthetic_examples(seed: u64, tagset: &TagSet) -> Result<(Vec<LabeledSentence>, Vec<LabeledSentence>), CliError> {
    let (t, s) = transfer_pair(seed);
    let target = Lexicon::new(&t, SynthParams::default())?.corpus(20, tagset, seed);
    let source = Lexicon::new(&s, SynthParams::default())?.corpus(20, tagset, seed);
    Ok((target, source))
}

pub fn gradcheck(
    cfg: &ExperimentConfig,
    epsilon: f64,
    samples: usize,
    threshold: f64,
    inject_fault: Option<String>,
) -> Result<(), CliError> {
    if cfg.model_kind == ModelKind::LogLinear {
        return Err(CliError::usage("gradcheck needs a neural model kind"));
    }
    let tagset = TagSet::default();
    let task = if cfg.manifest.is_some() {
        let data = load_data(cfg)?;
        TransferTask {
            target_language: data.target_language,
            target_train: data.splits.train,
            sources: data.sources,
            mu: cfg.mu,
            dev: data.splits.dev,
        }
    } else {
        let (target, source) = synthetic_examples(cfg.seed, &tagset)?;
        TransferTask {
            target_language: "xt".into(),
            target_train: target,
            sources: vec![SourceCorpus {
                language: "xs".into(),
                train: source,
            }],
            mu: cfg.mu,
            dev: Vec::new(),
        }
    };
    let mut task = task;
    if cfg.model_kind == ModelKind::NeuralMono {
        task.sources.clear();
    }
    let model = training::build_model(&task, cfg.neural_config(), tagset)?;
    let opts = GradCheckOptions {
        epsilon,
        samples_per_group: samples,
        seed: cfg.seed,
        corrupt_group: inject_fault,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&model, &task.target_train[..1], &opts)?;
    print!("{}", report.render());
    if report.max_rel_err <= threshold {
        println!("PASS (threshold {threshold:e})");
        Ok(())
    } else {
        Err(CliError::check(format!(
            "max relative error {:.3e} exceeds {threshold:e} in group `{}`",
            report.max_rel_err, report.worst_coordinate.group
        )))
    }
}

pub fn sweep_mu(cfg: &ExperimentConfig, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::usage("sweep-mu needs at least one value (--values 0,1)"));
    }
    if cfg.model_kind != ModelKind::NeuralXling {
        return Err(CliError::usage("sweep-mu needs model_kind = neural-xling"));
    }
    let mut rows = Vec::new();
    for &mu in values {
        let mut run = cfg.clone();
        run.mu = mu;
        run.out = cfg.out.join(format!("mu_{mu}"));
        run.validate()?;
        let summary = train(&run)?;
        rows.push((mu, summary.dev.f1, summary.test.f1));
    }
    // Best dev F1 first; smaller mu first among equals.
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut table = String::from("mu\tdev_f1\ttest_f1\n");
    for (mu, dev, test) in &rows {
        let _ = writeln!(table, "{mu}\t{}\t{}", fmt2(*dev), fmt2(*test));
    }
    fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("sweep.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn generate(out: &Path, seed: u64, target_sentences: usize, source_sentences: usize) -> Result<(), CliError> {
    let tagset = TagSet::default();
    let (t, s) = transfer_pair(seed);
    let target = Lexicon::new(&t, SynthParams::default())?.corpus(target_sentences, &tagset, seed);
    let source = Lexicon::new(&s, SynthParams::default())?.corpus(source_sentences, &tagset, seed.wrapping_add(1));
    fs::create_dir_all(out)?;
    write_text(&out.join(format!("{}.conll", t.code)), &serialize_conll(&target, &tagset))?;
    write_text(&out.join(format!("{}.conll", s.code)), &serialize_conll(&source, &tagset))?;
    write_text(
        &out.join("manifest.tsv"),
        &format!("{0}.conll\t{0}\ttarget\n{1}.conll\t{1}\tsource\n", t.code, s.code),
    )?;
    println!(
        "wrote {target_sentences} {} and {source_sentences} {} sentences to {}",
        t.code,
        s.code,
        out.display()
    );
    Ok(())
}
