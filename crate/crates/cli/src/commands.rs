use std::collections::HashMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pumpwatch::corpus::{corpus_digest, corpus_stats, generate_synthetic, load_corpus, write_corpus, CorpusError, SynthConfig};
use pumpwatch::detector::{bench_inference, bench_scoring, Detector, TrainConfig};
use pumpwatch::evaluation::{
    ablation_tsv, best_f1_for_size, event_delay, extraction_accuracy, message_populations, phrase_stats, phrase_stats_tsv,
    run_ablation, run_crossval, window_populations, AblationConfig, CvConfig, DelayReport, DetectionReport,
    ExtractionReport, PhraseStat, DEFAULT_PHRASES,
};
use pumpwatch::extraction::{
    llm_extract_batch, rule_extract, AliasMap, ExtractionMethod, HttpChatClient, Lexicon, LexiconKind, PromptTemplate,
    RetryPolicy,
};
use pumpwatch::pipeline::{evaluate, train_on_corpus, DetectorSettings, PipelineError};
use pumpwatch::report::{write_new, Report};
use pumpwatch::windowing::{build_all_windows, temporal_split, WindowKey, DEFAULT_FRACTIONS};
use pumpwatch::{ExtractionResult, GroupCorpus, Partition, TfidfGbdtDetector, Window, WindowMode, WindowSpec};
use pumpwatch_service::{offline_mismatches, replay, Cascade, ConfigError, PipelineConfig};

use crate::args::*;
use crate::{CliError, CliResult, Ctx, Output};

/// Window and split parameters stored next to the model files.
const SETTINGS_FILE: &str = "settings.txt";

pub(crate) fn dispatch(ctx: &Ctx<'_>, command: Command) -> CliResult<Output> {
    match command {
        Command::Stats(a) => stats(ctx, &a),
        Command::Synth(a) => synth(ctx, &a),
        Command::Split(a) => split(ctx, &a),
        Command::Train(a) => train(ctx, &a),
        Command::Eval(a) => eval(ctx, &a),
        Command::ExtractEval(a) => extract_eval(ctx, &a),
        Command::Phrases(a) => phrases(ctx, &a),
        Command::Bench(a) => bench(ctx, &a),
        Command::Cv(a) => cv(ctx, &a),
        Command::Ablate(a) => ablate(ctx, &a),
        Command::Replay(a) => replay_cmd(ctx, &a),
        Command::Serve(a) => serve(ctx, &a),
        Command::ExportLabels(a) => export_labels(ctx, &a),
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn pipeline_err(e: PipelineError) -> CliError {
    CliError::Data(e.to_string())
}

fn config_err(e: ConfigError) -> CliError {
    match e {
        ConfigError::Syntax { .. } | ConfigError::UnknownKey(_) | ConfigError::BadValue { .. } | ConfigError::Io { .. } => {
            CliError::Usage(e.to_string())
        }
        _ => CliError::Data(e.to_string()),
    }
}

fn write_err(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == ErrorKind::AlreadyExists {
        CliError::Usage(e.to_string())
    } else {
        CliError::Runtime(format!("writing {}: {e}", path.display()))
    }
}

fn write_report(ctx: &Ctx<'_>, name: &str, report: &Report) -> CliResult<PathBuf> {
    let path = ctx.out_path(name)?;
    report.write(&path, ctx.global.force).map_err(|e| write_err(&path, e))?;
    Ok(path)
}

fn write_file(ctx: &Ctx<'_>, path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    write_new(path, contents, ctx.global.force).map_err(|e| write_err(path, e))
}

fn load(ctx: &Ctx<'_>, arg: &CorpusArg) -> CliResult<Vec<GroupCorpus>> {
    let path = ctx.input_path(&arg.corpus, "corpus")?;
    let loaded = load_corpus(&path).map_err(|e| match e {
        CorpusError::Io(_) => CliError::Data(format!("{}: {e}", path.display())),
        _ => data(e),
    })?;
    if !loaded.warnings.is_empty() {
        log::warn!("{}: {} label warnings", path.display(), loaded.warnings.len());
    }
    if loaded.groups.is_empty() {
        return Err(CliError::Data(format!("{} holds no messages", path.display())));
    }
    Ok(loaded.groups)
}

fn model_dir(ctx: &Ctx<'_>, flag: &Option<PathBuf>) -> CliResult<PathBuf> {
    ctx.input_path(flag, "model_dir")
}

fn load_detector(dir: &Path) -> CliResult<TfidfGbdtDetector> {
    TfidfGbdtDetector::load_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Window spec and fractions a model was trained with, if recorded.
fn model_settings(dir: &Path) -> CliResult<Option<(WindowSpec, (f64, f64, f64))>> {
    let path = dir.join(SETTINGS_FILE);
    let Ok(text) = std::fs::read_to_string(&path) else { return Ok(None) };
    let r = Report::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let field = |key: &str| r.get(key).ok_or_else(|| CliError::Data(format!("{}: missing `{key}`", path.display())));
    let bad = |key: &str, e: String| CliError::Data(format!("{}: bad `{key}`: {e}", path.display()));
    let k = field("window_k")?.parse().map_err(|e: std::num::ParseIntError| bad("window_k", e.to_string()))?;
    let mode = field("window_mode")?.parse().map_err(|e| bad("window_mode", e))?;
    let label_rule = field("label_rule")?.parse().map_err(|e| bad("label_rule", e))?;
    let fr = |key: &str| -> CliResult<f64> {
        field(key)?.parse().map_err(|e: std::num::ParseFloatError| bad(key, e.to_string()))
    };
    let fractions = (fr("train_fraction")?, fr("validation_fraction")?, fr("test_fraction")?);
    Ok(Some((WindowSpec { k, mode, label_rule }, fractions)))
}

/// Flags override `base`.
fn window_spec(args: &WindowArgs, base: WindowSpec, base_fractions: (f64, f64, f64)) -> (WindowSpec, (f64, f64, f64)) {
    let spec = WindowSpec {
        k: args.k.unwrap_or(base.k),
        mode: args.mode.unwrap_or(base.mode),
        label_rule: args.label_rule.unwrap_or(base.label_rule),
    };
    (spec, args.fractions.unwrap_or(base_fractions))
}

fn detector_settings(ctx: &Ctx<'_>, w: &WindowArgs, m: &ModelArgs) -> (DetectorSettings, (f64, f64, f64)) {
    let (window, fractions) = window_spec(w, WindowSpec::default(), DEFAULT_FRACTIONS);
    let d = TrainConfig::default();
    let train = TrainConfig {
        num_trees: m.trees.unwrap_or(d.num_trees),
        max_leaves: m.max_leaves.unwrap_or(d.max_leaves),
        learning_rate: m.learning_rate.unwrap_or(d.learning_rate),
        min_samples_leaf: m.min_samples_leaf.unwrap_or(d.min_samples_leaf),
        feature_subsample: m.feature_subsample.unwrap_or(d.feature_subsample),
        class_weighting: !m.no_class_weighting,
        seed: ctx.seed(),
        ..d
    };
    let defaults = DetectorSettings::default();
    let settings = DetectorSettings {
        window,
        max_features: m.max_features.unwrap_or(defaults.max_features),
        train,
        objective: m.objective.unwrap_or(defaults.objective),
    };
    (settings, fractions)
}

fn set_fractions(r: &mut Report, f: (f64, f64, f64)) {
    r.set("train_fraction", f.0).set("validation_fraction", f.1).set("test_fraction", f.2);
}

fn set_window(r: &mut Report, spec: &WindowSpec) {
    r.set("window_k", spec.k).set("window_mode", spec.mode.as_str()).set("label_rule", spec.label_rule.as_str());
}

fn partitions(p: PartitionArg) -> Vec<Partition> {
    match p {
        PartitionArg::Train => vec![Partition::Train],
        PartitionArg::Validation => vec![Partition::Validation],
        PartitionArg::Test => vec![Partition::Test],
        PartitionArg::All => Partition::ALL.to_vec(),
    }
}

fn partition_name(p: PartitionArg) -> &'static str {
    match p {
        PartitionArg::Train => "train",
        PartitionArg::Validation => "validation",
        PartitionArg::Test => "test",
        PartitionArg::All => "all",
    }
}

/// Windows of the chosen partition(s), in build order.
fn partition_windows(windows: &[Window], spec_fractions: (f64, f64, f64), which: PartitionArg) -> CliResult<Vec<&Window>> {
    let split = temporal_split(windows, spec_fractions).map_err(data)?;
    let keep = partitions(which);
    Ok(windows.iter().filter(|w| split.get(w).is_some_and(|p| keep.contains(&p))).collect())
}

fn detection_entries(r: &mut Report, m: &mut crate::Manifest, d: &DetectionReport) {
    for (k, v) in [("precision", d.precision), ("recall", d.recall), ("f1", d.f1), ("balanced_accuracy", d.balanced_accuracy)] {
        r.set_f64(k, v);
        m.set_f64(k, v);
    }
    match d.roc_auc {
        Some(a) => {
            r.set_f64("roc_auc", a);
            m.set_f64("roc_auc", a);
        }
        None => {
            r.set("roc_auc", "undefined");
            m.set("roc_auc", "undefined");
        }
    }
    if !d.undefined.is_empty() {
        r.set("undefined_metrics", d.undefined.join(","));
    }
    let c = &d.confusion;
    r.add_table("confusion", format!("tp\tfp\tfn\ttn\n{}\t{}\t{}\t{}\n", c.tp, c.fp, c.fn_, c.tn));
}

fn delay_entries(r: &mut Report, m: &mut crate::Manifest, d: &DelayReport) {
    r.set("events", d.events()).set("missed_events", d.missed);
    r.set_f64("frac_delay_0", d.frac_at_0).set_f64("frac_delay_within_5", d.frac_within_5);
    m.set("events", d.events());
    m.set_f64("frac_delay_0", d.frac_at_0);
    let mut t = String::from("delay\tevents\n");
    for (k, v) in &d.histogram {
        t += &format!("{k}\t{v}\n");
    }
    t += &format!("missed\t{}\n", d.missed);
    r.add_table("delay_histogram", t);
}

fn stats(ctx: &Ctx<'_>, a: &CorpusArg) -> CliResult<Output> {
    let corpora = load(ctx, a)?;
    let s = corpus_stats(&corpora);
    let mut r = Report::new("stats");
    r.set("corpus_digest", corpus_digest(&corpora));
    r.add_table("statistics", s.to_tsv());
    let mut per_group = String::from("group_id\tpump_count\n");
    for (g, n) in &s.per_group_pump_counts {
        per_group += &format!("{g}\t{n}\n");
    }
    r.add_table("per_group", per_group);
    let path = write_report(ctx, "stats.report", &r)?;
    let mut m = ctx.manifest();
    m.set("total_messages", s.total_messages);
    m.set("pump_count", s.pump_count);
    m.set("cancelled_count", s.cancelled_count);
    m.set("unique_coins", s.unique_coins);
    m.set("unique_exchanges", s.unique_exchanges);
    m.set("image_pump_count", s.image_pump_count);
    m.set("groups", s.per_group_pump_counts.len());
    m.set("stats_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn synth(ctx: &Ctx<'_>, a: &SynthArgs) -> CliResult<Output> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        groups: a.groups,
        messages_per_group: a.messages_per_group,
        prevalence: a.prevalence,
        noise: a.noise,
        cancel_rate: a.cancel_rate.unwrap_or(d.cancel_rate),
        image_rate: a.image_rate.unwrap_or(d.image_rate),
        marker_phrase: a.marker_phrase.clone(),
        ..d
    };
    let corpora = generate_synthetic(&cfg, ctx.seed()).map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus_path = ctx.out_path("corpus.jsonl")?;
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpora).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(ctx, &corpus_path, buf)?;

    let s = corpus_stats(&corpora);
    let mut r = Report::new("synth");
    r.set("seed", ctx.seed())
        .set("groups", cfg.groups)
        .set("messages_per_group", cfg.messages_per_group)
        .set("prevalence", cfg.prevalence)
        .set("noise", cfg.noise)
        .set("cancel_rate", cfg.cancel_rate)
        .set("image_rate", cfg.image_rate)
        .set("marker_phrase", cfg.marker_phrase.as_deref().unwrap_or(""))
        .set("corpus_digest", corpus_digest(&corpora))
        .set("total_messages", s.total_messages)
        .set("pump_count", s.pump_count);
    let path = write_report(ctx, "synth.report", &r)?;
    let mut m = ctx.manifest();
    m.set("corpus", corpus_path.display());
    m.set("seed", ctx.seed());
    m.set("total_messages", s.total_messages);
    m.set("pump_count", s.pump_count);
    Ok(Output { manifest: m, report: Some(path) })
}

fn split(ctx: &Ctx<'_>, a: &SplitArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let (spec, fractions) = window_spec(&a.window, WindowSpec::default(), DEFAULT_FRACTIONS);
    let windows = build_all_windows(&corpora, &spec);
    let split = temporal_split(&windows, fractions).map_err(data)?;
    let tsv_path = ctx.out_path("split.tsv")?;
    write_file(ctx, &tsv_path, split.to_tsv())?;

    let mut r = Report::new("split");
    r.set("corpus_digest", corpus_digest(&corpora));
    set_window(&mut r, &spec);
    set_fractions(&mut r, fractions);
    r.set("windows", windows.len()).set("purged", split.purged.len()).set("promoted", split.promoted);
    let mut t = String::from("partition\twindows\tpositives\n");
    let mut m = ctx.manifest();
    for p in Partition::ALL {
        let sel = split.select(&windows, p);
        let pos = sel.iter().filter(|w| w.label == 1).count();
        t += &format!("{}\t{}\t{pos}\n", p.as_str(), sel.len());
        m.set(&format!("{}_windows", p.as_str()), sel.len());
    }
    r.add_table("partitions", t);
    let path = write_report(ctx, "split.report", &r)?;
    m.set("split", tsv_path.display());
    m.set("purged", split.purged.len());
    Ok(Output { manifest: m, report: Some(path) })
}

fn train(ctx: &Ctx<'_>, a: &TrainArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let (settings, fractions) = detector_settings(ctx, &a.window, &a.model);
    let dir = ctx.out_path("model")?;
    let existing = [pumpwatch::detector::TFIDF_FILE, pumpwatch::detector::GBDT_FILE, SETTINGS_FILE]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.exists());
    if let (Some(p), false) = (existing, ctx.global.force) {
        return Err(CliError::Usage(format!("{} exists (use --force to overwrite)", p.display())));
    }
    let run = train_on_corpus(&corpora, &settings, fractions).map_err(pipeline_err)?;
    let det = &run.fitted.detector;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
    det.save_dir(&dir).map_err(|e| CliError::Runtime(format!("saving model to {}: {e}", dir.display())))?;

    let mut s = Report::new("settings");
    s.extend(settings.describe());
    set_fractions(&mut s, fractions);
    s.set("model_version", det.version());
    s.write(dir.join(SETTINGS_FILE), true).map_err(|e| write_err(&dir, e))?;

    let choice = &run.fitted.choice;
    let mut r = Report::new("train");
    r.set("corpus_digest", corpus_digest(&corpora));
    r.extend(settings.describe());
    set_fractions(&mut r, fractions);
    r.set("model_version", det.version())
        .set("features", det.tfidf().len())
        .set("windows", run.windows.len())
        .set("purged", run.split.purged.len());
    for p in Partition::ALL {
        r.set(&format!("{}_windows", p.as_str()), run.split.count(p));
    }
    r.set_f64("threshold", choice.threshold)
        .set_f64("validation_precision", choice.precision)
        .set_f64("validation_recall", choice.recall)
        .set_f64("validation_f1", choice.f1);
    let path = write_report(ctx, "train.report", &r)?;

    let mut m = ctx.manifest();
    m.set("corpus", ctx.input_path(&a.corpus.corpus, "corpus")?.display());
    m.set("model_dir", dir.display());
    m.set("model_version", det.version());
    m.set_f64("threshold", choice.threshold);
    m.set_f64("validation_f1", choice.f1);
    Ok(Output { manifest: m, report: Some(path) })
}

fn eval(ctx: &Ctx<'_>, a: &EvalArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let dir = model_dir(ctx, &a.model_dir)?;
    let det = load_detector(&dir)?;
    let (base, base_fr) = model_settings(&dir)?.unwrap_or((WindowSpec::default(), DEFAULT_FRACTIONS));
    let (spec, fractions) = window_spec(&a.window, base, base_fr);
    let windows = build_all_windows(&corpora, &spec);
    let selected = partition_windows(&windows, fractions, a.partition)?;
    let ev = evaluate(&det, &selected).map_err(pipeline_err)?;

    // Event delay over pump starts whose own window is in the partition.
    let predictions: HashMap<WindowKey, u8> = selected
        .iter()
        .zip(&ev.scores)
        .map(|(w, &s)| (w.key(), u8::from(s >= det.threshold())))
        .collect();
    let events: Vec<(String, usize)> = corpora
        .iter()
        .flat_map(|g| g.pump_indices().into_iter().map(move |i| (g.group_id.clone(), i)))
        .filter(|k| predictions.contains_key(k))
        .collect();
    let delay = event_delay(&predictions, &events);

    let mut r = Report::new("eval");
    let mut m = ctx.manifest();
    r.set("corpus_digest", corpus_digest(&corpora)).set("model_version", det.version());
    set_window(&mut r, &spec);
    set_fractions(&mut r, fractions);
    r.set("partition", partition_name(a.partition)).set("windows", selected.len());
    r.set_f64("threshold", det.threshold());
    detection_entries(&mut r, &mut m, &ev.report);
    delay_entries(&mut r, &mut m, &delay);
    let path = write_report(ctx, "eval.report", &r)?;
    m.set("eval_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn lexicons(ctx: &Ctx<'_>) -> CliResult<(Lexicon, Lexicon)> {
    let load = |kind, p: &Option<PathBuf>| match p {
        Some(p) => Lexicon::load(kind, p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => Ok(match kind {
            LexiconKind::Ticker => Lexicon::default_tickers(),
            LexiconKind::Exchange => Lexicon::default_exchanges(),
        }),
    };
    Ok((load(LexiconKind::Ticker, &ctx.global.tickers)?, load(LexiconKind::Exchange, &ctx.global.exchanges)?))
}

fn extraction_table(keys: &[WindowKey], gold: &[(Option<String>, Option<String>)], preds: &[ExtractionResult]) -> String {
    let show = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
    let mut t = String::from("group_id\tcenter_index\tgold_coin\tgold_exchange\tcoin\texchange\tparse_ok\n");
    for ((k, g), p) in keys.iter().zip(gold).zip(preds) {
        t += &format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            k.0,
            k.1,
            show(&g.0),
            show(&g.1),
            show(&p.coin),
            show(&p.exchange),
            p.parse_ok
        );
    }
    t
}

fn extraction_entries(r: &mut Report, m: &mut crate::Manifest, prefix: &str, e: &ExtractionReport) {
    for (k, v) in [("coin_accuracy", e.coin_accuracy), ("exchange_accuracy", e.exchange_accuracy), ("joint_accuracy", e.joint_accuracy)] {
        r.set_f64(&format!("{prefix}{k}"), v);
        m.set_f64(&format!("{prefix}{k}"), v);
    }
    // Timing goes to standard output only so report files stay reproducible.
    m.set(&format!("{prefix}seconds_per_sample"), format!("{:.3e}", e.seconds_per_sample));
}

fn extract_eval(ctx: &Ctx<'_>, a: &ExtractEvalArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let (spec, fractions) = window_spec(&a.window, WindowSpec::default(), DEFAULT_FRACTIONS);
    let windows = build_all_windows(&corpora, &spec);
    let selected = partition_windows(&windows, fractions, a.partition)?;
    let by_group: HashMap<&str, &GroupCorpus> = corpora.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let samples: Vec<(&Window, &pumpwatch::Message)> = selected
        .iter()
        .map(|w| (*w, &by_group[w.group_id.as_str()].messages[w.center_index]))
        .filter(|(_, msg)| msg.is_pump_start)
        .collect();
    if samples.is_empty() {
        return Err(CliError::Data(format!("no pump starts in the {} partition", partition_name(a.partition))));
    }
    let keys: Vec<WindowKey> = samples.iter().map(|(w, _)| w.key()).collect();
    let gold: Vec<(Option<String>, Option<String>)> = samples.iter().map(|(_, m)| (m.coin.clone(), m.exchange.clone())).collect();
    let aliases = AliasMap::default_map();

    let mut r = Report::new("extract-eval");
    let mut m = ctx.manifest();
    r.set("corpus_digest", corpus_digest(&corpora));
    set_window(&mut r, &spec);
    set_fractions(&mut r, fractions);
    r.set("partition", partition_name(a.partition)).set("samples", samples.len());
    m.set("samples", samples.len());

    if matches!(a.method, MethodArg::Rule | MethodArg::Both) {
        let (tickers, exchanges) = lexicons(ctx)?;
        let preds: Vec<ExtractionResult> = samples.iter().map(|(w, _)| rule_extract(&w.text, &tickers, &exchanges)).collect();
        let rep = extraction_accuracy(&preds, &gold, aliases).map_err(data)?;
        extraction_entries(&mut r, &mut m, "rule_", &rep);
        r.add_table("rule_samples", extraction_table(&keys, &gold, &preds));
    }
    if matches!(a.method, MethodArg::Llm | MethodArg::Both) {
        let cfg = PipelineConfig::load(ctx.global.config.as_deref()).map_err(config_err)?;
        let template = match &cfg.prompt_path {
            Some(p) => PromptTemplate::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
            None => PromptTemplate::default(),
        };
        let client = HttpChatClient::new(cfg.llm_config());
        let policy = RetryPolicy { max_retries: cfg.llm_max_retries, ..Default::default() };
        let batch: Vec<(usize, String)> = samples.iter().enumerate().map(|(i, (w, _))| (i, w.text.clone())).collect();
        let mut failures = 0usize;
        let preds: Vec<ExtractionResult> = llm_extract_batch(&batch, &client, &template, &policy, a.concurrency)
            .into_iter()
            .map(|(_, res)| {
                res.unwrap_or_else(|e| {
                    failures += 1;
                    log::warn!("llm extraction failed: {e}");
                    ExtractionResult {
                        coin: None,
                        exchange: None,
                        method: ExtractionMethod::Llm,
                        raw_response: None,
                        parse_ok: false,
                        retries: 0,
                        elapsed_secs: 0.0,
                    }
                })
            })
            .collect();
        if failures == preds.len() {
            return Err(CliError::Runtime(format!("all {failures} LLM requests to {} failed", cfg.llm_base_url)));
        }
        let rep = extraction_accuracy(&preds, &gold, aliases).map_err(data)?;
        r.set("llm_model", &cfg.llm_model).set("llm_failures", failures);
        m.set("llm_failures", failures);
        extraction_entries(&mut r, &mut m, "llm_", &rep);
        r.add_table("llm_samples", extraction_table(&keys, &gold, &preds));
    }
    let path = write_report(ctx, "extract.report", &r)?;
    m.set("extract_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn phrases(ctx: &Ctx<'_>, a: &PhrasesArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let (spec, _) = window_spec(&a.window, WindowSpec::default(), DEFAULT_FRACTIONS);
    let phrases: Vec<String> = if a.phrases.is_empty() {
        DEFAULT_PHRASES.iter().map(|s| s.to_string()).collect()
    } else {
        a.phrases.iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
    };
    let windows = build_all_windows(&corpora, &spec);
    let (wp, wb) = window_populations(&windows);
    let (mp, mb) = message_populations(&corpora);
    let by_window = phrase_stats(&wp, &wb, &phrases).map_err(data)?;
    let by_message = phrase_stats(&mp, &mb, &phrases).map_err(data)?;

    let mut r = Report::new("phrases");
    r.set("corpus_digest", corpus_digest(&corpora));
    set_window(&mut r, &spec);
    r.set("pump_windows", wp.len()).set("background_windows", wb.len());
    r.set("pump_messages", mp.len()).set("background_messages", mb.len());
    let (primary, tables): (&[PhraseStat], [(&str, &[PhraseStat]); 2]) = match a.population {
        PopulationArg::Window => (&by_window, [("window", &by_window), ("message", &by_message)]),
        PopulationArg::Message => (&by_message, [("message", &by_message), ("window", &by_window)]),
    };
    r.set("population", tables[0].0);
    for (name, stats) in tables {
        r.add_table(name, phrase_stats_tsv(stats));
    }
    let path = write_report(ctx, "phrases.report", &r)?;
    let mut m = ctx.manifest();
    m.set("population", tables[0].0);
    for p in primary {
        m.set(
            &format!("phrase.{}", p.phrase.replace(' ', "_")),
            format!("{:.2}/{:.2}/{:+.2}", p.pump_pct, p.background_pct, p.difference),
        );
    }
    m.set("phrases_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn bench(ctx: &Ctx<'_>, a: &BenchArgs) -> CliResult<Output> {
    if a.windows == 0 {
        return Err(CliError::Usage("--windows must be positive".into()));
    }
    let corpora = load(ctx, &a.corpus)?;
    let dir = model_dir(ctx, &a.model_dir)?;
    let det = load_detector(&dir)?;
    let (base, base_fr) = model_settings(&dir)?.unwrap_or((WindowSpec::default(), DEFAULT_FRACTIONS));
    let (spec, _) = window_spec(&a.window, base, base_fr);
    let windows = build_all_windows(&corpora, &spec);
    let texts: Vec<&str> = windows.iter().map(|w| w.text.as_str()).cycle().take(a.windows).collect();
    let total = bench_inference(&det, &texts).map_err(|e| CliError::Runtime(e.to_string()))?;
    let vectors: Vec<_> = texts.iter().map(|t| det.featurize(t)).collect();
    let scoring = bench_scoring(det.model(), &vectors).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut r = Report::new("bench");
    r.set("corpus_digest", corpus_digest(&corpora)).set("model_version", det.version());
    r.set("features", det.tfidf().len()).set("windows", texts.len()).set("distinct_windows", windows.len());
    r.set("median_inference_s", format!("{:.3e}", total.median));
    r.set("median_scoring_s", format!("{:.3e}", scoring.median));
    r.add_table("inference", total.to_tsv());
    r.add_table("scoring", scoring.to_tsv());
    let path = write_report(ctx, "bench.report", &r)?;
    let mut m = ctx.manifest();
    m.set("median_inference_s", format!("{:.3e}", total.median));
    m.set("p99_inference_s", format!("{:.3e}", total.p99));
    m.set("median_scoring_s", format!("{:.3e}", scoring.median));
    m.set("bench_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn cv(ctx: &Ctx<'_>, a: &CvArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let (settings, _) = detector_settings(ctx, &a.window, &a.model);
    let seeds = if a.seeds.is_empty() { (0..3).map(|i| ctx.seed() + i).collect() } else { a.seeds.clone() };
    let cfg = CvConfig { folds: a.folds, feature_counts: a.feature_counts.clone(), seeds, settings };
    let rep = run_crossval(&corpora, &cfg).map_err(pipeline_err)?;

    let mut r = Report::new("cv");
    r.set("corpus_digest", corpus_digest(&corpora));
    r.extend(cfg.settings.describe());
    r.set("folds", cfg.folds);
    r.set("seeds", cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
    r.set("runs", rep.runs.len());
    r.set_f64("mean_recall", rep.mean_recall).set_f64("std_recall", rep.std_recall);
    r.add_table("runs", rep.to_tsv());
    let path = write_report(ctx, "cv.report", &r)?;
    let mut m = ctx.manifest();
    m.set("runs", rep.runs.len());
    m.set_f64("mean_recall", rep.mean_recall);
    m.set_f64("std_recall", rep.std_recall);
    m.set("cv_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn ablate(ctx: &Ctx<'_>, a: &AblateArgs) -> CliResult<Output> {
    if let Some(s) = a.window_sizes.iter().find(|s| *s % 2 == 0 || **s == 0) {
        return Err(CliError::Usage(format!("window size {s} is not odd")));
    }
    let corpora = load(ctx, &a.corpus)?;
    let (settings, fractions) = detector_settings(ctx, &a.window, &a.model);
    let modes = if a.modes.is_empty() { vec![WindowMode::Symmetric, WindowMode::Trailing] } else { a.modes.clone() };
    let cfg = AblationConfig {
        window_sizes: a.window_sizes.clone(),
        modes,
        feature_counts: a.feature_counts.clone(),
        settings,
        fractions,
    };
    let cells = run_ablation(&corpora, &cfg);

    let mut r = Report::new("ablate");
    r.set("corpus_digest", corpus_digest(&corpora));
    r.extend(cfg.settings.describe());
    set_fractions(&mut r, fractions);
    let mut m = ctx.manifest();
    for &size in &cfg.window_sizes {
        let key = format!("best_f1_size_{size}");
        match best_f1_for_size(&cells, size) {
            Some(f) => {
                r.set_f64(&key, f);
                m.set_f64(&key, f);
            }
            None => {
                r.set(&key, "undefined");
                m.set(&key, "undefined");
            }
        }
    }
    let best = cells.iter().filter_map(|c| c.f1().map(|f| (f, c))).max_by(|x, y| x.0.total_cmp(&y.0));
    if let Some((f, c)) = best {
        let cell = format!("{}/{}/{}", c.mode.as_str(), c.window_size, c.max_features);
        r.set("best_cell", &cell).set_f64("best_f1", f);
        m.set("best_cell", cell);
        m.set_f64("best_f1", f);
    }
    r.add_table("cells", ablation_tsv(&cells));
    let path = write_report(ctx, "ablate.report", &r)?;
    m.set("ablate_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

/// Service config: file and environment, then the model from the flag or
/// the piped manifest, then flag overrides.
fn service_config(ctx: &Ctx<'_>, a: &ServiceArgs, use_manifest: bool) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(ctx.global.config.as_deref()).map_err(config_err)?;
    let dir = match &a.model_dir {
        Some(d) => Some(d.clone()),
        None if use_manifest => ctx.upstream()?.get("model_dir").map(PathBuf::from),
        None => None,
    };
    if let Some(d) = &dir {
        cfg.tfidf_path = d.join(pumpwatch::detector::TFIDF_FILE);
        cfg.gbdt_path = d.join(pumpwatch::detector::GBDT_FILE);
    }
    let model_k = cfg.tfidf_path.parent().map(model_settings).transpose()?.flatten().map(|(s, _)| s.k);
    cfg.window_k = a.k.or(model_k).unwrap_or(cfg.window_k);
    if let Some(e) = a.extraction {
        cfg.extraction_mode = e;
    }
    if let Some(c) = a.cooldown {
        cfg.alert_cooldown = c;
    }
    if let Some(s) = ctx.global.seed {
        cfg.seed = s;
    }
    if let Some(p) = &ctx.global.tickers {
        cfg.tickers_path = Some(p.clone());
    }
    if let Some(p) = &ctx.global.exchanges {
        cfg.exchanges_path = Some(p.clone());
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn replay_cmd(ctx: &Ctx<'_>, a: &ReplayArgs) -> CliResult<Output> {
    let corpora = load(ctx, &a.corpus)?;
    let use_manifest = ctx.global.config.is_none();
    let cfg = service_config(ctx, &a.service, use_manifest)?;
    let det: Arc<dyn Detector> = Arc::new(cfg.load_detector().map_err(config_err)?);
    let cascade = Cascade::from_config(&cfg, det).map_err(config_err)?;
    let rep = replay(&corpora, &cascade, a.speed).map_err(data)?;
    let mismatches = offline_mismatches(&corpora, &cascade, &rep);

    let mut lines = String::new();
    for alert in &rep.alerts {
        let line = serde_json::to_string(alert).map_err(|e| CliError::Runtime(e.to_string()))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    let alerts_path = ctx.out_path("alerts.jsonl")?;
    write_file(ctx, &alerts_path, lines)?;

    let frac = |n: u64| if rep.windows_scored == 0 { 0.0 } else { n as f64 / rep.windows_scored as f64 };
    let mut r = Report::new("replay");
    let mut m = ctx.manifest();
    r.set("corpus_digest", corpus_digest(&corpora)).set("model_version", cascade.detector().version());
    r.set("window_k", cfg.window_k).set("window_mode", "trailing");
    r.set("extraction_mode", cfg.extraction_mode).set("alert_cooldown", cfg.alert_cooldown);
    r.set_f64("threshold", cascade.detector().threshold());
    r.set("messages", rep.messages).set("windows_scored", rep.windows_scored).set("flagged", rep.flagged);
    r.set("alerts", rep.alerts.len()).set("extraction_calls", rep.extraction_calls);
    r.set_f64("extraction_fraction", frac(rep.extraction_calls));
    r.set("offline_mismatches", mismatches.len());
    delay_entries(&mut r, &mut m, &rep.delay);
    let path = write_report(ctx, "replay.report", &r)?;

    m.set("model_dir", cfg.tfidf_path.parent().unwrap_or(Path::new(".")).display());
    m.set("alerts", alerts_path.display());
    m.set("alert_count", rep.alerts.len());
    m.set("windows_scored", rep.windows_scored);
    m.set("extraction_calls", rep.extraction_calls);
    m.set_f64("extraction_fraction", frac(rep.extraction_calls));
    m.set("offline_mismatches", mismatches.len());
    m.set("replay_report", path.display());
    Ok(Output { manifest: m, report: Some(path) })
}

fn serve(ctx: &Ctx<'_>, a: &ServeArgs) -> CliResult<Output> {
    // A long-running server reads no piped input.
    let mut cfg = service_config(ctx, &a.service, false)?;
    if let Some(b) = &a.bind {
        cfg.bind = b.clone();
    }
    if let Some(d) = &a.state_dir {
        cfg.state_dir = d.clone();
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("starting runtime: {e}")))?;
    eprintln!("pumpwatch: serving on http://{} (state in {})", cfg.bind, cfg.state_dir.display());
    runtime.block_on(pumpwatch_service::serve(cfg.clone())).map_err(|e| match e {
        pumpwatch_service::ServeError::Config(c) => config_err(c),
        other => CliError::Runtime(other.to_string()),
    })?;
    let mut m = ctx.manifest();
    m.set("state_dir", cfg.state_dir.display());
    Ok(Output { manifest: m, report: None })
}

fn export_labels(ctx: &Ctx<'_>, a: &ExportArgs) -> CliResult<Output> {
    let dir = match &a.state_dir {
        Some(d) => d.clone(),
        None => PipelineConfig::load(ctx.global.config.as_deref()).map_err(config_err)?.state_dir,
    };
    if !dir.is_dir() {
        return Err(CliError::Data(format!("state directory {} does not exist", dir.display())));
    }
    let corpora = pumpwatch_service::store::export_labels(&dir).map_err(data)?;
    let out = match &a.output {
        Some(p) => p.clone(),
        None => ctx.out_path("labels.jsonl")?,
    };
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpora).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(ctx, &out, buf)?;
    let labels: usize = corpora.iter().map(GroupCorpus::len).sum();
    let pumps: usize = corpora.iter().map(|g| g.pump_indices().len()).sum();
    let mut m = ctx.manifest();
    m.set("corpus", out.display());
    m.set("labels", labels);
    m.set("pump_labels", pumps);
    Ok(Output { manifest: m, report: Some(out) })
}
