//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all criteria with `cargo test -p pumpwatch-suite --test acceptance`, or
//! a subset with `cargo test -p pumpwatch-suite --test acceptance -- 3 8`.
//!
//! Criteria that need the released message dataset or a real LLM endpoint
//! run their conditional part only when `PUMPWATCH_DATASET` (a corpus file)
//! or `PUMPWATCH_LLM_BASE_URL` is set; otherwise that part is reported as
//! skipped and the always-runnable part decides the verdict.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use pumpwatch::corpus::{generate_synthetic, load_corpus, SynthConfig};
use pumpwatch::detector::{bench_inference, bench_scoring, select_threshold, Detector, ThresholdObjective, TrainConfig};
use pumpwatch::evaluation::{
    best_f1_for_size, detection_metrics, extraction_accuracy, message_populations, phrase_stats, roc_auc, run_ablation,
    window_populations, AblationConfig, ConfusionMatrix, DEFAULT_PHRASES,
};
use pumpwatch::extraction::{
    normalize_optional, parse_llm_response, rule_extract, AliasMap, ExtractionMethod, Lexicon, LexiconKind, COIN_MARKER,
    EXCHANGE_MARKER,
};
use pumpwatch::features::{tokenize, TfidfModel};
use pumpwatch::pipeline::{train_on_corpus, DetectorSettings};
use pumpwatch::windowing::{
    build_all_windows, leakage_violations, temporal_split, LabelRule, DEFAULT_FRACTIONS,
};
use pumpwatch::{ExtractionResult, GroupCorpus, Partition, TfidfGbdtDetector, WindowMode, WindowSpec};
use pumpwatch_cli::{run_with_input, Manifest};
use pumpwatch_oracles as oracle;
use pumpwatch_service::{offline_mismatches, replay, Cascade, Extractor, ReplaySpeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict { pass: true, lines: Vec::new() }
    }

    /// Records one sub-check.
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.pass &= ok;
        self.lines.push(format!("{} {}", if ok { "ok  " } else { "FAIL" }, what.into()));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.lines.push(format!("     {}", what.into()));
    }
}

type Criterion = fn(&Path) -> Verdict;

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, Criterion); 11] = [
        (1, "metric arithmetic on reference confusion counts", c1_metric_arithmetic),
        (2, "extraction report arithmetic", c2_extraction_report),
        (3, "end-to-end synthetic benchmark", c3_end_to_end),
        (4, "detector latency", c4_latency),
        (5, "temporal split leakage", c5_leakage),
        (6, "oracle equivalence", c6_oracles),
        (7, "ablation ordering", c7_ablation),
        (8, "event delay and online/offline agreement", c8_event_delay),
        (9, "cascade economy", c9_cascade_economy),
        (10, "phrase statistics", c10_phrases),
        (11, "response parser robustness", c11_parser_fuzz),
    ];
    let work = tempfile::tempdir().expect("work dir");
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout();
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let dir = work.path().join(format!("c{n}"));
        std::fs::create_dir_all(&dir).unwrap();
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| f(&dir))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            let mut v = Verdict::new();
            v.check(false, format!("panicked: {}", msg.unwrap_or_default()));
            v
        });
        let status = if v.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(stdout, "criterion {n:>2} {status} {name} ({:.1}s)", t.elapsed().as_secs_f64());
        for line in &v.lines {
            let _ = writeln!(stdout, "    {line}");
        }
        let _ = stdout.flush();
        if !v.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        let _ = writeln!(stdout, "acceptance: all criteria passed");
    } else {
        let _ = writeln!(stdout, "acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

fn synth(groups: usize, per_group: usize, prevalence: f64, noise: f64, seed: u64) -> Vec<GroupCorpus> {
    let cfg = SynthConfig { groups, messages_per_group: per_group, prevalence, noise, ..Default::default() };
    generate_synthetic(&cfg, seed).unwrap()
}

fn dataset() -> Option<Vec<GroupCorpus>> {
    let path = std::env::var_os("PUMPWATCH_DATASET")?;
    Some(load_corpus(&path).unwrap_or_else(|e| panic!("PUMPWATCH_DATASET: {e}")).groups)
}

fn cli(args: &[&str], stdin: Option<&str>) -> Manifest {
    let r = run_with_input(std::iter::once("pumpwatch").chain(args.iter().copied()), stdin);
    assert_eq!(r.code, 0, "pumpwatch {args:?} failed: {}", r.stderr);
    Manifest::parse(&r.stdout).unwrap()
}

fn num(m: &Manifest, key: &str) -> f64 {
    m.get(key).unwrap_or_else(|| panic!("no `{key}` in\n{m}")).parse().unwrap_or(f64::NAN)
}

fn c1_metric_arithmetic(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let t = Instant::now();
    let cases = [("A", ConfusionMatrix::new(3334, 1394, 436, 51354), [0.71, 0.88, 0.79]), (
        "B",
        ConfusionMatrix::new(2942, 369, 828, 52379),
        [0.89, 0.78, 0.83],
    )];
    for (name, cm, want) in cases {
        let r = detection_metrics(&cm);
        for (metric, got, w) in [("precision", r.precision, want[0]), ("recall", r.recall, want[1]), ("f1", r.f1, want[2])] {
            v.check(within(got, w, 0.005), format!("counts {name}: {metric} {got:.5} vs {w:.2} +-0.005"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    v.check(secs < 1.0, format!("runtime {secs:.2e} s < 1 s"));
    v
}

fn result(coin: Option<&str>, exchange: Option<&str>) -> ExtractionResult {
    ExtractionResult {
        coin: coin.map(String::from),
        exchange: exchange.map(String::from),
        method: ExtractionMethod::RuleBased,
        raw_response: None,
        parse_ok: true,
        retries: 0,
        elapsed_secs: 0.0,
    }
}

fn c2_extraction_report(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let aliases = AliasMap::default_map();
    let s = |x: &str| Some(x.to_string());

    let preds = [result(Some("btc"), Some("binance")), result(Some("eth"), None), result(None, Some("kucoin")), result(None, None)];
    let gold = [(s("BTC"), s("Binance")), (s("eth"), s("kucoin")), (s("doge"), s("kucoin")), (None, None)];
    let r = extraction_accuracy(&preds, &gold, aliases).unwrap();
    v.check(
        (r.coin_accuracy, r.exchange_accuracy, r.joint_accuracy, r.n_samples) == (0.75, 0.75, 0.5, 4),
        format!("fixture: coin {} exchange {} joint {} (want 0.75/0.75/0.5)", r.coin_accuracy, r.exchange_accuracy, r.joint_accuracy),
    );
    v.check(extraction_accuracy(&preds[..1], &gold, aliases).is_err(), "length mismatch is rejected");
    v.check(extraction_accuracy(&[], &[], aliases).is_err(), "empty input is rejected");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pool = [None, s("btc"), s("eth"), s("gmt"), s("binance"), s("kucoin")];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..20);
        let mut preds = Vec::new();
        let mut gold = Vec::new();
        for _ in 0..n {
            let pick = |rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())].clone();
            let (c, e) = (pick(&mut rng), pick(&mut rng));
            preds.push(result(c.as_deref(), e.as_deref()));
            gold.push((pick(&mut rng), pick(&mut rng)));
        }
        let r = extraction_accuracy(&preds, &gold, aliases).unwrap();
        worst = worst.max(r.joint_accuracy - r.coin_accuracy.min(r.exchange_accuracy));
    }
    v.check(worst <= 0.0, "joint <= min(coin, exchange) on 1000 random reports");

    match dataset() {
        None => v.note("skipped: released-dataset accuracy (PUMPWATCH_DATASET unset)"),
        Some(corpora) => {
            let windows = build_all_windows(&corpora, &WindowSpec::default());
            let split = temporal_split(&windows, DEFAULT_FRACTIONS).unwrap();
            let by_group: HashMap<&str, &GroupCorpus> = corpora.iter().map(|g| (g.group_id.as_str(), g)).collect();
            let samples: Vec<_> = split
                .select(&windows, Partition::Test)
                .into_iter()
                .filter_map(|w| {
                    let m = &by_group[w.group_id.as_str()].messages[w.center_index];
                    m.is_pump_start.then(|| (w.text.clone(), (m.coin.clone(), m.exchange.clone())))
                })
                .collect();
            let (tickers, exchanges) = (Lexicon::default_tickers(), Lexicon::default_exchanges());
            let preds: Vec<_> = samples.iter().map(|(t, _)| rule_extract(t, &tickers, &exchanges)).collect();
            let gold: Vec<_> = samples.iter().map(|(_, g)| g.clone()).collect();
            let r = extraction_accuracy(&preds, &gold, aliases).unwrap();
            v.note(format!("dataset test pumps: {}", r.n_samples));
            v.check(within(r.coin_accuracy, 0.0, 0.005), format!("dataset rule coin accuracy {:.3} vs 0.00", r.coin_accuracy));
            v.check(
                within(r.exchange_accuracy, 0.61, 0.05),
                format!("dataset rule exchange accuracy {:.3} vs 0.61 +-0.05", r.exchange_accuracy),
            );
        }
    }
    match std::env::var("PUMPWATCH_LLM_BASE_URL") {
        Err(_) => v.note("skipped: LLM joint accuracy (PUMPWATCH_LLM_BASE_URL unset; reported, never gated)"),
        Ok(url) => {
            let Some(corpora) = dataset() else {
                v.note("skipped: LLM joint accuracy needs PUMPWATCH_DATASET");
                return v;
            };
            let dir = tempfile::tempdir().unwrap();
            let corpus = dir.path().join("corpus.jsonl");
            pumpwatch::corpus::save_corpus(&corpus, &corpora).unwrap();
            let conf = dir.path().join("llm.conf");
            std::fs::write(&conf, format!("llm_base_url={url}\n")).unwrap();
            let out = dir.path().to_str().unwrap();
            let m = cli(
                &["extract-eval", "--method", "llm", "--out-dir", out, "--config", conf.to_str().unwrap(), "--corpus", corpus.to_str().unwrap()],
                None,
            );
            v.note(format!("LLM joint accuracy {} (expected >= 0.80, not gated)", m.get("llm_joint_accuracy").unwrap_or("?")));
        }
    }
    v
}

/// Runs synth -> split -> train -> eval through the CLI; returns the out dir.
fn c3_end_to_end(dir: &Path) -> Verdict {
    let mut v = Verdict::new();
    let out = dir.to_str().unwrap();
    let t = Instant::now();
    let m = cli(
        &["synth", "--seed", "3", "--out-dir", out, "--groups", "10", "--messages-per-group", "10000", "--prevalence", "0.01", "--noise", "0.2"],
        None,
    );
    let messages = num(&m, "total_messages") as usize;
    let m = cli(&["split", "--out-dir", out], Some(&m.to_string()));
    let m = cli(&["train", "--out-dir", out, "--seed", "3"], Some(&m.to_string()));
    let m = cli(&["eval", "--out-dir", out], Some(&m.to_string()));
    let secs = t.elapsed().as_secs_f64();
    let (f1, auc) = (num(&m, "f1"), num(&m, "roc_auc"));
    v.check(messages >= 100_000, format!("{messages} messages >= 100000"));
    v.check(f1 >= 0.90, format!("test F1 {f1:.4} >= 0.90"));
    v.check(auc >= 0.97, format!("test ROC-AUC {auc:.4} >= 0.97"));
    v.check(secs <= 600.0, format!("synth+split+train+eval {secs:.1} s <= 600 s"));
    v.note(format!("precision {:.4} recall {:.4} frac_delay_0 {:.3}", num(&m, "precision"), num(&m, "recall"), num(&m, "frac_delay_0")));
    v
}

fn c4_latency(dir: &Path) -> Verdict {
    let mut v = Verdict::new();
    // Reuse the benchmark model when criterion 3 ran in this session.
    let c3 = dir.parent().unwrap().join("c3");
    let (det, corpora) = if c3.join("model").join("gbdt.txt").exists() {
        let corpora = load_corpus(c3.join("corpus.jsonl")).unwrap().groups;
        (TfidfGbdtDetector::load_dir(c3.join("model")).unwrap(), corpora)
    } else {
        let corpora = synth(10, 10_000, 0.01, 0.2, 3);
        let run = train_on_corpus(&corpora, &DetectorSettings::default(), DEFAULT_FRACTIONS).unwrap();
        (run.fitted.detector, corpora)
    };
    let features = det.tfidf().len();
    v.check(features == 20_000, format!("model has {features} features (20000)"));
    let windows = build_all_windows(&corpora, &WindowSpec::default());
    let texts: Vec<&str> = windows.iter().map(|w| w.text.as_str()).take(20_000).collect();
    let total = bench_inference(&det, &texts).unwrap();
    let vectors: Vec<_> = texts.iter().map(|t| det.featurize(t)).collect();
    let scoring = bench_scoring(det.model(), &vectors).unwrap();
    v.check(total.samples >= 10_000, format!("{} timed windows >= 10000", total.samples));
    v.check(total.median <= 1e-3, format!("median transform+score {:.2} us <= 1000 us", total.median * 1e6));
    v.check(scoring.median <= 1e-4, format!("median scoring {:.2} us <= 100 us", scoring.median * 1e6));
    v.note(format!("p99 transform+score {:.2} us, clock {}", total.p99 * 1e6, total.clock));
    v
}

fn c5_leakage(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let fractions = [(0.6, 0.2, 0.2), (0.5, 0.25, 0.25), (0.8, 0.1, 0.1), (0.34, 0.33, 0.33)];
    let mut violations = 0usize;
    let mut independent = 0usize;
    let mut corpora_checked = 0usize;
    for seed in 0..1000u64 {
        let cfg = SynthConfig {
            groups: 1 + (seed % 3) as usize,
            messages_per_group: 40 + (seed as usize * 37) % 260,
            prevalence: 0.05,
            noise: (seed % 4) as f64 * 0.2,
            ..Default::default()
        };
        let corpora = generate_synthetic(&cfg, seed).unwrap();
        let mut spec = WindowSpec::new(1 + (seed % 6) as usize, if seed % 2 == 0 { WindowMode::Symmetric } else { WindowMode::Trailing });
        spec.label_rule = if seed % 3 == 0 { LabelRule::Center } else { LabelRule::Contains };
        let windows = build_all_windows(&corpora, &spec);
        let Ok(split) = temporal_split(&windows, fractions[(seed % 4) as usize]) else { continue };
        corpora_checked += 1;
        violations += leakage_violations(&windows, &split);

        // Independent check: no message in train and in a later partition.
        let mut parts: HashMap<(&str, u64), HashSet<Partition>> = HashMap::new();
        for w in &windows {
            if let Some(p) = split.get(w) {
                for id in &w.member_msg_ids {
                    parts.entry((w.group_id.as_str(), *id)).or_default().insert(p);
                }
            }
        }
        independent += parts.values().filter(|s| s.contains(&Partition::Train) && s.len() > 1).count();
    }
    v.check(corpora_checked == 1000, format!("{corpora_checked} of 1000 corpora split"));
    v.check(violations == 0, format!("{violations} leakage violations"));
    v.check(independent == 0, format!("{independent} messages in train and a later partition"));
    v
}

const WORDS: &[&str] = &["pump", "coin", "will", "be", "left", "gmt", "buy", "now", "the", "x1", "minutes"];

fn random_doc(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..12);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.gen_range(2..60);
    (0..n).map(|_| (rng.gen_range(0..12) as f64 / 11.0, rng.gen_range(0..2u8))).unzip()
}

fn c6_oracles(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    const CASES: usize = 200;

    let mut tfidf_bad = 0;
    let mut tfidf_cases = 0;
    while tfidf_cases < CASES {
        let docs: Vec<String> = (0..rng.gen_range(1..8)).map(|_| random_doc(&mut rng)).collect();
        let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d).0).collect();
        if toks.iter().all(|t| t.is_empty()) {
            continue;
        }
        tfidf_cases += 1;
        let cap = rng.gen_range(1..40);
        let model = TfidfModel::fit(&docs, cap).unwrap();
        let (terms, idf) = oracle::tfidf_fit(&toks, cap);
        let query = random_doc(&mut rng);
        let dense = oracle::tfidf_vector(&terms, &idf, &tokenize(&query).0);
        let sparse = model.transform(&query);
        let ok = model.terms() == &terms[..]
            && terms.iter().zip(&idf).all(|(t, w)| (model.idf(t).unwrap() - w).abs() < TOL)
            && dense.iter().enumerate().all(|(i, w)| (sparse.get(i as u32) - w).abs() < TOL);
        tfidf_bad += usize::from(!ok);
    }
    v.check(tfidf_bad == 0, format!("TF-IDF vocabulary, idf and weights: {tfidf_bad} of {CASES} disagree"));

    let mut auc_bad = 0;
    for _ in 0..CASES {
        let (s, l) = random_scores(&mut rng);
        auc_bad += usize::from(match (roc_auc(&s, &l), oracle::pairwise_auc(&s, &l)) {
            (Ok(a), Some(b)) => (a - b).abs() >= TOL,
            (Err(_), None) => false,
            _ => true,
        });
    }
    v.check(auc_bad == 0, format!("ROC-AUC: {auc_bad} of {CASES} disagree"));

    let mut thr_bad = 0;
    let mut thr_cases = 0;
    while thr_cases < CASES {
        let (s, l) = random_scores(&mut rng);
        if !(l.contains(&0) && l.contains(&1)) {
            continue;
        }
        thr_cases += 1;
        let got = select_threshold(&s, &l, ThresholdObjective::MaxF1).unwrap();
        let want = oracle::best_f1_region(&s, &l);
        let r = rng.gen_range(0.0..=1.0);
        let got_r = select_threshold(&s, &l, ThresholdObjective::MinRecallAt(r)).unwrap();
        let want_r = oracle::min_recall_region(&s, &l, r).unwrap();
        let ok = want.lo < got.threshold
            && got.threshold <= want.hi
            && (got.f1 - want.counts.f1()).abs() < TOL
            && (got.precision - want.counts.precision()).abs() < TOL
            && (got.recall - want.counts.recall()).abs() < TOL
            && want_r.lo < got_r.threshold
            && got_r.threshold <= want_r.hi
            && (got_r.recall - want_r.counts.recall()).abs() < TOL;
        thr_bad += usize::from(!ok);
    }
    v.check(thr_bad == 0, format!("threshold tuning (max F1 and min recall): {thr_bad} of {CASES} disagree"));

    let mut metric_bad = 0;
    for _ in 0..CASES {
        let n = rng.gen_range(1..80);
        let pred: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let cm = ConfusionMatrix::from_predictions(&pred, &labels);
        let want = oracle::Counts::from_predictions(&pred, &labels);
        let r = detection_metrics(&cm);
        let ok = (cm.tp, cm.fp, cm.fn_, cm.tn) == (want.tp, want.fp, want.fn_, want.tn)
            && (r.precision - want.precision()).abs() < TOL
            && (r.recall - want.recall()).abs() < TOL
            && (r.f1 - want.f1()).abs() < TOL
            && (r.balanced_accuracy - want.balanced_accuracy()).abs() < TOL;
        metric_bad += usize::from(!ok);
    }
    v.check(metric_bad == 0, format!("detection metrics: {metric_bad} of {CASES} disagree"));
    v
}

fn c7_ablation(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let cfg = |settings| AblationConfig { settings, ..Default::default() };
    for seed in 0..3u64 {
        let corpora = synth(5, 3000, 0.02, 0.5, 700 + seed);
        let settings = DetectorSettings { train: TrainConfig { seed, ..Default::default() }, ..Default::default() };
        let grid = AblationConfig { window_sizes: vec![3, 11], feature_counts: vec![20_000], ..cfg(settings) };
        let cells = run_ablation(&corpora, &grid);
        let (f3, f11) = (best_f1_for_size(&cells, 3), best_f1_for_size(&cells, 11));
        let ok = matches!((f3, f11), (Some(a), Some(b)) if a < b);
        v.check(ok, format!("seed {seed}: best size-3 F1 {f3:?} < best size-11 F1 {f11:?} ({} cells)", cells.len()));
    }
    match dataset() {
        None => v.note("skipped: released-dataset best cell (PUMPWATCH_DATASET unset)"),
        Some(corpora) => {
            let cells = run_ablation(&corpora, &cfg(DetectorSettings::default()));
            let best = cells.iter().filter_map(|c| c.f1().map(|f| (f, c))).max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
            let (f, c) = best;
            let cell = format!("{}/{}/{}", c.mode.as_str(), c.window_size, c.max_features);
            v.check(cell == "symmetric/11/20000", format!("dataset best cell {cell} (symmetric/11/20000)"));
            v.check(within(f, 0.820, 0.02), format!("dataset best F1 {f:.4} vs 0.820 +-0.02"));
        }
    }
    v
}

/// Trailing-window detector for the online cascade, trained on easy data.
fn online_detector() -> Arc<TfidfGbdtDetector> {
    let corpora = synth(5, 4000, 0.01, 0.0, 80);
    let settings = DetectorSettings {
        window: WindowSpec { label_rule: LabelRule::Center, ..WindowSpec::new(5, WindowMode::Trailing) },
        ..Default::default()
    };
    Arc::new(train_on_corpus(&corpora, &settings, DEFAULT_FRACTIONS).unwrap().fitted.detector)
}

fn c8_event_delay(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let det = online_detector();
    let corpora = synth(5, 4000, 0.01, 0.0, 81);
    let cascade = Cascade::new(det.clone(), Extractor::rule_default(), 5);
    let r = replay(&corpora, &cascade, ReplaySpeed::Max).unwrap();
    v.check(r.delay.events() > 0, format!("{} pump events replayed", r.delay.events()));
    v.check(r.delay.frac_at_0 >= 0.85, format!("fraction at delay 0: {:.4} >= 0.85", r.delay.frac_at_0));

    let mismatches = offline_mismatches(&corpora, &cascade, &r);
    v.check(mismatches.is_empty(), format!("{} online/offline score mismatches", mismatches.len()));
    let mut offline: Vec<(String, usize)> = build_all_windows(&corpora, &WindowSpec::new(5, WindowMode::Trailing))
        .into_iter()
        .filter(|w| det.score(&w.text) >= det.threshold())
        .map(|w| w.key())
        .collect();
    let mut online: Vec<(String, usize)> = r.alerts.iter().map(|a| (a.group_id.clone(), a.center_index)).collect();
    offline.sort();
    online.sort();
    v.check(online == offline, format!("{} online alerts equal {} offline trailing predictions", online.len(), offline.len()));
    v
}

fn c9_cascade_economy(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let corpora = synth(5, 4000, 0.01, 0.0, 90);
    let cascade = Cascade::new(online_detector(), Extractor::rule_default(), 5);
    let r = replay(&corpora, &cascade, ReplaySpeed::Max).unwrap();
    let frac = r.extraction_calls as f64 / r.windows_scored as f64;
    v.check(r.windows_scored as usize == 20_000, format!("{} windows scored", r.windows_scored));
    v.check(frac <= 0.05, format!("extraction on {} of {} windows = {:.4} <= 0.05", r.extraction_calls, r.windows_scored, frac));
    v.check(r.extraction_calls <= r.flagged, "extraction calls <= flagged windows");
    v
}

fn pct(texts: &[&str], phrase: &str) -> f64 {
    100.0 * texts.iter().filter(|t| t.to_lowercase().contains(phrase)).count() as f64 / texts.len() as f64
}

fn c10_phrases(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let marker = "moon mission go";
    let cfg = SynthConfig {
        groups: 4,
        messages_per_group: 3000,
        prevalence: 0.02,
        noise: 0.3,
        marker_phrase: Some(marker.into()),
        ..Default::default()
    };
    let corpora = generate_synthetic(&cfg, 10).unwrap();
    let mut phrases: Vec<&str> = vec![marker];
    phrases.extend_from_slice(DEFAULT_PHRASES);

    let (mp, mb) = message_populations(&corpora);
    let windows = build_all_windows(&corpora, &WindowSpec::default());
    let (wp, wb) = window_populations(&windows);
    for (population, pump, bg) in [("message", &mp, &mb), ("window", &wp, &wb)] {
        let stats = phrase_stats(pump, bg, &phrases).unwrap();
        let m = stats.iter().find(|s| s.phrase == marker).unwrap();
        v.check(
            (m.pump_pct, m.background_pct, m.difference) == (100.0, 0.0, 100.0),
            format!("{population}: injected phrase {:.2}/{:.2}/{:+.2} (want 100/0/+100)", m.pump_pct, m.background_pct, m.difference),
        );
        let exact = stats.iter().all(|s| {
            let (p, b) = (pct(pump, &s.phrase), pct(bg, &s.phrase));
            s.pump_pct == p && s.background_pct == b && s.difference == p - b
        });
        v.check(exact, format!("{population}: all {} phrase rates equal direct counts", stats.len()));
    }

    match dataset() {
        None => v.note("skipped: released-dataset phrase table (PUMPWATCH_DATASET unset)"),
        Some(corpora) => {
            let want = [
                ("will be", 82.06, 14.84),
                ("exchange", 69.81, 12.74),
                ("left", 59.90, 9.40),
                ("coin", 97.23, 52.17),
                ("pump", 88.72, 46.19),
                ("minutes left", 40.53, 1.97),
            ];
            let windows = build_all_windows(&corpora, &WindowSpec::default());
            let (wp, wb) = window_populations(&windows);
            let stats = phrase_stats(&wp, &wb, DEFAULT_PHRASES).unwrap();
            for (phrase, p, b) in want {
                let s = stats.iter().find(|s| s.phrase == phrase).unwrap();
                v.check(
                    within(s.pump_pct, p, 0.5) && within(s.background_pct, b, 0.5),
                    format!("dataset `{phrase}` {:.2}/{:.2} vs {p}/{b} +-0.5", s.pump_pct, s.background_pct),
                );
            }
        }
    }
    v
}

fn c11_parser_fuzz(_: &Path) -> Verdict {
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut crashes = 0usize;
    let pieces: [&[u8]; 4] = [COIN_MARKER.as_bytes(), EXCHANGE_MARKER.as_bytes(), b"\n", "\u{00e9}\u{1f680}".as_bytes()];
    for _ in 0..100_000 {
        let n = rng.gen_range(0..300);
        let mut bytes: Vec<u8> = Vec::with_capacity(n + 32);
        while bytes.len() < n {
            // Mix raw bytes with marker fragments so both branches are exercised.
            if rng.gen_ratio(1, 16) {
                bytes.extend_from_slice(pieces[rng.gen_range(0..pieces.len())]);
            } else {
                bytes.push(rng.gen());
            }
        }
        let text = String::from_utf8_lossy(&bytes).into_owned();
        crashes += usize::from(catch_unwind(|| parse_llm_response(&text)).is_err());
    }
    v.check(crashes == 0, format!("{crashes} crashes on 100000 random byte strings"));

    let aliases = AliasMap::default_map();
    let alnum: Vec<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').collect();
    let word = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> String {
        (0..rng.gen_range(lo..=hi)).map(|_| alnum[rng.gen_range(0..alnum.len())]).collect()
    };
    let mut bad = 0usize;
    for _ in 0..10_000 {
        let prefix = ["", "$", "#"][rng.gen_range(0..3)];
        let coin = format!("{prefix}{}", word(&mut rng, 1, 8));
        let exch = if rng.gen() { word(&mut rng, 2, 10) } else { format!("{} {}", word(&mut rng, 2, 8), word(&mut rng, 2, 8)) };
        let reply = format!("Sure.\n{COIN_MARKER} {coin}\n{EXCHANGE_MARKER} {exch}\n");
        let r = parse_llm_response(&reply);
        let expect_coin = normalize_optional(Some(&coin), LexiconKind::Ticker, aliases);
        let expect_exch = normalize_optional(Some(&exch), LexiconKind::Exchange, aliases);
        let again = parse_llm_response(&format!(
            "{COIN_MARKER} {}\n{EXCHANGE_MARKER} {}",
            r.coin.clone().unwrap_or_default(),
            r.exchange.clone().unwrap_or_default()
        ));
        let ok = r.parse_ok && r.coin == expect_coin && r.exchange == expect_exch && (again.coin, again.exchange) == (r.coin, r.exchange);
        bad += usize::from(!ok);
    }
    v.check(bad == 0, format!("{bad} of 10000 well-formed replies fail to round-trip idempotently"));
    v
}
