use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use pumpwatch::report::Report;
use pumpwatch_cli::{run_with_input, CommandResult, Manifest};
use pumpwatch_service::alert::Decision;
use pumpwatch_service::mock_llm::{lexicon_responder, MockLlm};
use pumpwatch_service::{AlertStore, Review};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pumpwatch"))
}

/// Runs the binary with `stdin` piped in and returns (code, stdout, stderr).
fn exec(args: &[&str], stdin: &str) -> (i32, String, String) {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn cli(args: &[&str], stdin: Option<&str>) -> CommandResult {
    let r = run_with_input(std::iter::once("pumpwatch").chain(args.iter().copied()), stdin);
    assert_eq!(r.code != 0, !r.stderr.is_empty(), "{r:?}");
    r
}

fn ok(args: &[&str], stdin: Option<&str>) -> Manifest {
    let r = cli(args, stdin);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    Manifest::parse(&r.stdout).unwrap()
}

fn num(m: &Manifest, key: &str) -> f64 {
    m.get(key).unwrap_or_else(|| panic!("no `{key}` in\n{m}")).parse().unwrap()
}

fn small_corpus(out: &Path, seed: &str) -> Manifest {
    let out = out.to_str().unwrap();
    ok(
        &["synth", "--seed", seed, "--out-dir", out, "--groups", "3", "--messages-per-group", "1200", "--prevalence", "0.02"],
        None,
    )
}

const FAST_TRAIN: &[&str] = &["--max-features", "3000", "--trees", "40"];

#[test]
fn piped_synth_train_eval_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, synth, err) = exec(&["synth", "--seed", "7", "--out-dir", out], "");
    assert_eq!(code, 0, "{err}");
    let (code, train, err) = exec(&["train", "--out-dir", out], &synth);
    assert_eq!(code, 0, "{err}");
    let (code, eval, err) = exec(&["eval", "--out-dir", out], &train);
    assert_eq!(code, 0, "{err}");
    let m = Manifest::parse(&eval).unwrap();
    assert!(num(&m, "f1") >= 0.90, "{m}");
    let report = Report::parse(&std::fs::read_to_string(dir.path().join("eval.report")).unwrap()).unwrap();
    assert_eq!(report.get("partition"), Some("test"));
    assert_eq!(report.get("f1"), m.get("f1"));
    assert!(report.table("confusion").is_some());
}

#[test]
fn help_and_usage_errors() {
    let (code, out, _) = exec(&["eval", "--help"], "");
    assert_eq!(code, 0);
    assert!(out.contains("Usage:") && out.contains("--model-dir"), "{out}");

    let (code, out, err) = exec(&["eval", "--no-such-flag"], "");
    assert_eq!(code, 1);
    assert!(out.is_empty() && err.contains("Usage:"), "{err}");
    assert_eq!(exec(&["frobnicate"], "").0, 1);
    assert_eq!(exec(&[], "").0, 1);
    assert_eq!(cli(&["split", "--fractions", "0.5,0.5,0.5"], None).code, 1);
}

#[test]
fn missing_and_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // No flag and nothing piped.
    let r = cli(&["stats", "--out-dir", out], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("--corpus"), "{}", r.stderr);
    assert_eq!(cli(&["stats", "--out-dir", out], Some("not a manifest")).code, 1);

    let r = cli(&["stats", "--out-dir", out, "--corpus", "/nonexistent/corpus.jsonl"], None);
    assert_eq!(r.code, 2);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "#pumpwatch-corpus-v1\n{\"group_id\": 1}\n").unwrap();
    assert_eq!(cli(&["stats", "--out-dir", out, "--corpus", bad.to_str().unwrap()], None).code, 2);
    let r = cli(&["eval", "--out-dir", out, "--corpus", bad.to_str().unwrap(), "--model-dir", out], None);
    assert_eq!(r.code, 2);
}

#[test]
fn out_dir_is_never_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    small_corpus(dir.path(), "1");
    let corpus = std::fs::read(dir.path().join("corpus.jsonl")).unwrap();
    let r = cli(&["synth", "--seed", "2", "--out-dir", out, "--groups", "2"], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("--force"), "{}", r.stderr);
    assert_eq!(std::fs::read(dir.path().join("corpus.jsonl")).unwrap(), corpus);

    let m = Manifest::default().to_string();
    let piped = small_corpus(&dir.path().join("other"), "1").to_string();
    let train = |extra: &[&str]| {
        let mut args = vec!["train", "--out-dir", out];
        args.extend_from_slice(FAST_TRAIN);
        args.extend_from_slice(extra);
        cli(&args, Some(&piped))
    };
    assert_eq!(train(&[]).code, 0);
    assert_eq!(train(&[]).code, 1);
    assert_eq!(train(&["--force"]).code, 0);
    assert_eq!(cli(&["synth", "--seed", "2", "--out-dir", out, "--groups", "2", "--force"], Some(&m)).code, 0);
    assert_ne!(std::fs::read(dir.path().join("corpus.jsonl")).unwrap(), corpus);
}

fn all_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push((e.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    std::fs::read_dir(dir)
        .unwrap()
        .flat_map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() { walk(&p) } else { vec![p] }
        })
        .collect()
}

#[test]
fn identical_inputs_and_seed_give_identical_reports() {
    let run = |dir: &Path| {
        let out = dir.to_str().unwrap();
        let m = small_corpus(dir, "9").to_string();
        let m = ok(&["split", "--out-dir", out], Some(&m)).to_string();
        let mut args = vec!["train", "--out-dir", out, "--seed", "4"];
        args.extend_from_slice(FAST_TRAIN);
        let m = ok(&args, Some(&m)).to_string();
        let m = ok(&["eval", "--out-dir", out], Some(&m)).to_string();
        ok(&["stats", "--out-dir", out], Some(&m));
        ok(&["phrases", "--out-dir", out], Some(&m));
        ok(&["extract-eval", "--out-dir", out], Some(&m));
        ok(&["replay", "--out-dir", out], Some(&m));
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    let (fa, fb) = (all_files(a.path()), all_files(b.path()));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["eval.report", "split.tsv", "train.report", "model/gbdt.txt", "alerts.jsonl", "replay.report"] {
        assert!(names.contains(&expected), "{names:?}");
    }
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between runs");
    }
}

#[test]
fn split_assignment_file_covers_every_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = small_corpus(dir.path(), "3").to_string();
    let s = ok(&["split", "--out-dir", out, "--k", "2", "--mode", "trailing"], Some(&m));
    let tsv = std::fs::read_to_string(s.get("split").unwrap()).unwrap();
    assert_eq!(tsv.lines().count() - 1, 3 * 1200);
    let parts: usize = ["train", "validation", "test"].iter().map(|p| num(&s, &format!("{p}_windows")) as usize).sum();
    assert_eq!(parts + num(&s, "purged") as usize, 3 * 1200);
    let report = Report::parse(&std::fs::read_to_string(dir.path().join("split.report")).unwrap()).unwrap();
    assert_eq!(report.get("window_mode"), Some("trailing"));
}

#[test]
fn experiment_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = small_corpus(dir.path(), "5").to_string();

    let s = ok(&["stats", "--out-dir", out], Some(&m));
    assert_eq!(num(&s, "total_messages") as usize, 3600);
    assert_eq!(num(&s, "groups") as usize, 3);

    let p = ok(&["phrases", "--out-dir", out, "--phrases", "will be,minutes left", "--population", "message"], Some(&m));
    assert!(p.get("phrase.will_be").is_some(), "{p}");
    let report = Report::parse(&std::fs::read_to_string(dir.path().join("phrases.report")).unwrap()).unwrap();
    assert!(report.table("window").is_some() && report.table("message").is_some());

    let c = ok(&["cv", "--out-dir", out, "--folds", "2", "--feature-counts", "2000", "--seeds", "1", "--trees", "20"], Some(&m));
    assert_eq!(num(&c, "runs") as usize, 2);

    let a = ok(
        &["ablate", "--out-dir", out, "--window-sizes", "3,7", "--modes", "symmetric", "--feature-counts", "2000", "--trees", "20"],
        Some(&m),
    );
    assert!(num(&a, "best_f1_size_3") > 0.0);
    assert!(a.get("best_cell").unwrap().starts_with("symmetric/"));
    assert_eq!(cli(&["ablate", "--out-dir", out, "--window-sizes", "4", "--force"], Some(&m)).code, 1);

    let mut args = vec!["train", "--out-dir", out];
    args.extend_from_slice(FAST_TRAIN);
    let t = ok(&args, Some(&m)).to_string();
    let b = ok(&["bench", "--out-dir", out, "--windows", "500"], Some(&t));
    let median: f64 = num(&b, "median_inference_s");
    assert!(median > 0.0 && median < 0.01);
}

#[test]
fn extraction_evaluation_rule_and_llm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = small_corpus(dir.path(), "6").to_string();
    let mock = MockLlm::start(lexicon_responder()).unwrap();
    let config = dir.path().join("service.conf");
    std::fs::write(&config, format!("llm_base_url={}\nllm_max_retries=0\n", mock.base_url())).unwrap();

    let r = ok(&["extract-eval", "--out-dir", out, "--method", "both", "--config", config.to_str().unwrap()], Some(&m));
    let n = num(&r, "samples") as usize;
    assert!(n > 0);
    assert_eq!(mock.calls(), n);
    // The mock runs the same lexicon extractor on the same windows.
    for k in ["coin_accuracy", "exchange_accuracy", "joint_accuracy"] {
        assert_eq!(r.get(&format!("rule_{k}")), r.get(&format!("llm_{k}")), "{k}");
        assert!(num(&r, &format!("llm_{k}")) <= 1.0);
    }
    assert!(num(&r, "rule_joint_accuracy") <= num(&r, "rule_coin_accuracy").min(num(&r, "rule_exchange_accuracy")));

    let down = dir.path().join("down.conf");
    std::fs::write(&down, "llm_base_url=http://127.0.0.1:9/v1\nllm_max_retries=0\nllm_timeout_secs=2\n").unwrap();
    let r = cli(&["extract-eval", "--out-dir", out, "--method", "llm", "--force", "--config", down.to_str().unwrap()], Some(&m));
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn replay_then_export_reviewed_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = small_corpus(dir.path(), "8").to_string();
    let mut args = vec!["train", "--out-dir", out, "--mode", "trailing", "--label-rule", "center"];
    args.extend_from_slice(FAST_TRAIN);
    let t = ok(&args, Some(&m)).to_string();
    let r = ok(&["replay", "--out-dir", out, "--cooldown", "0"], Some(&t));
    assert_eq!(num(&r, "offline_mismatches") as usize, 0);
    assert_eq!(num(&r, "windows_scored") as usize, 3600);
    let alerts = std::fs::read_to_string(r.get("alerts").unwrap()).unwrap();
    assert_eq!(alerts.lines().count(), num(&r, "alert_count") as usize);
    assert!(num(&r, "alert_count") > 0.0);

    // Feed the replayed alerts through a store and review two of them.
    let state = dir.path().join("state");
    {
        let mut store = AlertStore::open(&state).unwrap();
        for line in alerts.lines() {
            store.insert(serde_json::from_str(line).unwrap()).unwrap();
        }
        let ids: Vec<String> = store.list(None, 0).iter().take(2).map(|a| a.alert_id.clone()).collect();
        store.review(&ids[0], Review { decision: Decision::Confirmed, coin: None, exchange: None, reviewed_at: 1 }).unwrap();
        let fix = Review { decision: Decision::Corrected, coin: Some("gmt".into()), exchange: None, reviewed_at: 2 };
        store.review(&ids[1], fix).unwrap();
    }
    let labels = dir.path().join("labels.jsonl");
    let e = ok(&["export-labels", "--out-dir", out, "--state-dir", state.to_str().unwrap(), "--output", labels.to_str().unwrap()], None);
    assert_eq!(num(&e, "labels") as usize, 2);
    let text = std::fs::read_to_string(&labels).unwrap();
    assert!(text.starts_with("#pumpwatch-corpus-v1"));
    assert!(text.contains("\"gmt\""));
    let s = ok(&["stats", "--out-dir", out, "--force"], Some(&e.to_string()));
    assert_eq!(num(&s, "total_messages") as usize, 2);

    let r = cli(&["export-labels", "--out-dir", out, "--state-dir", dir.path().join("missing").to_str().unwrap()], None);
    assert_eq!(r.code, 2);
}
