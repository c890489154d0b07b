use std::collections::HashMap;

use proptest::prelude::*;
use pumpwatch::corpus::{generate_synthetic, SynthConfig};
use pumpwatch::detector::TrainConfig;
use pumpwatch::evaluation::{
    detection_metrics, event_delay, extraction_accuracy, roc_auc, run_crossval, ConfusionMatrix, CvConfig,
};
use pumpwatch::extraction::{
    llm_extract, normalize_entity, normalize_optional, parse_llm_response, rule_extract, AliasMap, FixedClient, Lexicon,
    LexiconKind, PromptTemplate, RetryPolicy, COIN_MARKER, EXCHANGE_MARKER,
};
use pumpwatch::pipeline::DetectorSettings;
use pumpwatch::{ExtractionMethod, ExtractionResult};

fn entity() -> impl Strategy<Value = Option<String>> {
    prop::option::of(prop::sample::select(vec!["gmt", "GMT", "$gmt", "for", "binance", "Gate.io", "gateio", "none", "n/a", " poloniex "]))
        .prop_map(|o| o.map(String::from))
}

fn result(coin: Option<String>, exchange: Option<String>) -> ExtractionResult {
    ExtractionResult {
        coin,
        exchange,
        method: ExtractionMethod::Llm,
        raw_response: None,
        parse_ok: true,
        retries: 0,
        elapsed_secs: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metrics_are_scale_invariant(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..1000, k in 1u64..1000) {
        let a = detection_metrics(&ConfusionMatrix::new(tp, fp, fn_, tn));
        let b = detection_metrics(&ConfusionMatrix::new(k * tp, k * fp, k * fn_, k * tn));
        for (x, y) in [(a.precision, b.precision), (a.recall, b.recall), (a.f1, b.f1), (a.balanced_accuracy, b.balanced_accuracy)] {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(a.undefined, b.undefined);
    }

    #[test]
    fn auc_ignores_monotone_transforms(v in prop::collection::vec((0u32..50, 0u8..2), 2..80)) {
        let (scores, labels): (Vec<f64>, Vec<u8>) = v.into_iter().map(|(s, l)| (s as f64 / 49.0, l)).unzip();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let base = roc_auc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).powi(3)).collect();
        let logit: Vec<f64> = scores.iter().map(|s| 2.0 * s.exp() + 7.0).collect();
        prop_assert_eq!(roc_auc(&cubed, &labels).unwrap(), base);
        prop_assert_eq!(roc_auc(&logit, &labels).unwrap(), base);
    }

    #[test]
    fn joint_accuracy_bounded_by_fields(rows in prop::collection::vec((entity(), entity(), entity(), entity()), 1..30)) {
        let preds: Vec<_> = rows.iter().map(|r| result(r.0.clone(), r.1.clone())).collect();
        let gold: Vec<_> = rows.iter().map(|r| (r.2.clone(), r.3.clone())).collect();
        let rep = extraction_accuracy(&preds, &gold, AliasMap::default_map()).unwrap();
        prop_assert!(rep.joint_accuracy <= rep.coin_accuracy.min(rep.exchange_accuracy));
    }

    #[test]
    fn delay_fractions_are_ordered(preds in prop::collection::vec(any::<bool>(), 1..80), events in prop::collection::vec(0usize..80, 0..10)) {
        let map: HashMap<_, _> = preds.iter().enumerate().map(|(i, &p)| (("g".to_string(), i), p as u8)).collect();
        let events: Vec<_> = events.into_iter().map(|e| ("g".to_string(), e)).collect();
        let r = event_delay(&map, &events);
        prop_assert!(r.frac_at_0 <= r.frac_within_5);
        prop_assert!(r.missed <= r.events());
    }

    #[test]
    fn normalization_is_idempotent(raw in ".{0,40}") {
        let aliases = AliasMap::default_map();
        for kind in [LexiconKind::Ticker, LexiconKind::Exchange] {
            let once = normalize_entity(&raw, kind, aliases);
            prop_assert_eq!(normalize_entity(&once, kind, aliases), once.clone());
            let opt = normalize_optional(Some(&raw), kind, aliases);
            prop_assert_eq!(normalize_optional(opt.as_deref(), kind, aliases), opt.clone());
        }
    }

    #[test]
    fn rule_extract_ignores_order_after_matches(
        prefix in prop::collection::vec("[q-z]{4,6}", 0..5),
        tail in prop::collection::vec(prop::sample::select(vec!["gmt", "for", "binance", "poloniex", "hello", "now", "futures"]), 0..10),
        rot in any::<prop::sample::Index>(),
    ) {
        let tickers = Lexicon::default_tickers();
        let exchanges = Lexicon::default_exchanges();
        let head = format!("{} $GMT binance now", prefix.join(" "));
        let base = rule_extract(&format!("{head} {}", tail.join(" ")), &tickers, &exchanges);
        let mut t = tail.clone();
        let n = t.len();
        if n > 0 {
            t.rotate_left(rot.index(n));
        }
        let permuted = rule_extract(&format!("{head} {}", t.join(" ")), &tickers, &exchanges);
        prop_assert_eq!(base.coin.as_deref(), Some("gmt"));
        prop_assert_eq!(base.exchange.as_deref(), Some("binance"));
        prop_assert_eq!(base, permuted);
    }

    #[test]
    fn parser_accepts_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let text = String::from_utf8_lossy(&bytes);
        let r = parse_llm_response(&text);
        prop_assert_eq!(r.method, ExtractionMethod::Llm);
    }

    #[test]
    fn well_formed_replies_round_trip(coin in "[$#]?[A-Za-z0-9]{1,8}[.!]?", exch in "[A-Za-z]{2,10}( [A-Za-z]{2,8})?", pre in "[a-z ]{0,20}") {
        let reply = format!("{pre}\n{COIN_MARKER} {coin}\n{EXCHANGE_MARKER} {exch}\n");
        let r = parse_llm_response(&reply);
        let aliases = AliasMap::default_map();
        prop_assert!(r.parse_ok);
        prop_assert_eq!(r.coin.clone(), normalize_optional(Some(&coin), LexiconKind::Ticker, aliases));
        prop_assert_eq!(r.exchange.clone(), normalize_optional(Some(&exch), LexiconKind::Exchange, aliases));
        for v in [&r.coin, &r.exchange].into_iter().flatten() {
            prop_assert_eq!(&normalize_entity(v, LexiconKind::Ticker, aliases), v);
        }
        // The network layer adds nothing beyond parsing.
        let client = FixedClient(reply.clone());
        let via = llm_extract("window", &client, &PromptTemplate::default(), &RetryPolicy::default()).unwrap();
        prop_assert_eq!((via.coin, via.exchange, via.parse_ok), (r.coin, r.exchange, r.parse_ok));
    }
}

#[test]
fn crossval_tests_only_on_newer_data() {
    let corpora = generate_synthetic(&SynthConfig { groups: 3, messages_per_group: 800, prevalence: 0.03, ..Default::default() }, 5).unwrap();
    let cfg = CvConfig {
        folds: 2,
        feature_counts: vec![500],
        seeds: vec![0],
        settings: DetectorSettings { train: TrainConfig { num_trees: 5, ..Default::default() }, ..Default::default() },
    };
    let rep = run_crossval(&corpora, &cfg).unwrap();
    assert_eq!(rep.runs.len(), 2);
    for r in &rep.runs {
        assert!(r.train_max_ts <= r.test_min_ts, "{r:?}");
        assert!(r.train_windows > 0 && r.test_windows > 0);
    }
    assert!(rep.runs[1].train_windows > rep.runs[0].train_windows);
}
