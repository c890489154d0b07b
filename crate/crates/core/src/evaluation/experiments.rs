use crate::corpus::GroupCorpus;
use crate::pipeline::{evaluate, fit_detector, DetectorSettings, PipelineError};
use crate::windowing::{build_all_windows, temporal_split, time_blocks, Partition, Window, WindowMode, WindowSpec};

use super::{DetectionReport, EvalError};

/// Forward-chaining cross-validation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub feature_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Window, tree and threshold settings; `max_features` and the tree
    /// seed are overridden per run.
    pub settings: DetectorSettings,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            feature_counts: vec![10_000, 15_000, 20_000],
            seeds: vec![0, 1, 2],
            settings: DetectorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRun {
    pub max_features: usize,
    pub seed: u64,
    pub fold: usize,
    pub recall: f64,
    pub f1: f64,
    pub train_windows: usize,
    pub test_windows: usize,
    /// Newest training window timestamp.
    pub train_max_ts: i64,
    /// Oldest test window timestamp.
    pub test_min_ts: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub runs: Vec<CvRun>,
    pub mean_recall: f64,
    /// Sample standard deviation of recall across runs.
    pub std_recall: f64,
}

impl CvReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("max_features\tseed\tfold\trecall\tf1\ttrain_windows\ttest_windows\n");
        for r in &self.runs {
            s += &format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}\n",
                r.max_features, r.seed, r.fold, r.recall, r.f1, r.train_windows, r.test_windows
            );
        }
        s
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Time-ordered cross-validation. Windows are cut into `folds + 2`
/// contiguous time blocks; run `r` trains on blocks `0..=r`, tunes the
/// threshold on block `r + 1` and tests on block `r + 2`.
pub fn run_crossval(corpora: &[GroupCorpus], config: &CvConfig) -> Result<CvReport, PipelineError> {
    if config.folds == 0 || config.feature_counts.is_empty() || config.seeds.is_empty() {
        return Err(PipelineError::Data("crossval needs folds, feature counts and seeds".into()));
    }
    let windows = build_all_windows(corpora, &config.settings.window);
    let nb = config.folds + 2;
    let split = time_blocks(&windows, &vec![1.0 / nb as f64; nb])?;
    let mut blocks: Vec<Vec<&Window>> = vec![Vec::new(); nb];
    for (w, b) in windows.iter().zip(&split.blocks) {
        if let Some(b) = b {
            blocks[*b].push(w);
        }
    }
    for (i, b) in blocks.iter().enumerate().skip(1) {
        if !b.iter().any(|w| w.label == 1) {
            return Err(EvalError::TooFewPositives { block: i }.into());
        }
    }
    let mut runs = Vec::new();
    for &max_features in &config.feature_counts {
        for &seed in &config.seeds {
            let mut settings = config.settings.clone();
            settings.max_features = max_features;
            settings.train.seed = seed;
            for fold in 0..config.folds {
                let train: Vec<&Window> = blocks[..=fold].iter().flatten().copied().collect();
                let val = &blocks[fold + 1];
                let test = &blocks[fold + 2];
                let fitted = fit_detector(&train, val, &settings)?;
                let ev = evaluate(&fitted.detector, test)?;
                runs.push(CvRun {
                    max_features,
                    seed,
                    fold,
                    recall: ev.report.recall,
                    f1: ev.report.f1,
                    train_windows: train.len(),
                    test_windows: test.len(),
                    train_max_ts: train.iter().map(|w| w.latest_ts).max().unwrap_or(i64::MIN),
                    test_min_ts: test.iter().map(|w| w.latest_ts).min().unwrap_or(i64::MAX),
                });
            }
        }
    }
    let recalls: Vec<f64> = runs.iter().map(|r| r.recall).collect();
    let (mean_recall, std_recall) = mean_std(&recalls);
    Ok(CvReport { runs, mean_recall, std_recall })
}

/// Window-size / mode / vocabulary-size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    /// Odd window sizes (`2k + 1`).
    pub window_sizes: Vec<usize>,
    pub modes: Vec<WindowMode>,
    pub feature_counts: Vec<usize>,
    /// Tree and threshold settings shared by every cell.
    pub settings: DetectorSettings,
    pub fractions: (f64, f64, f64),
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            window_sizes: vec![3, 7, 11],
            modes: vec![WindowMode::Symmetric, WindowMode::Trailing],
            feature_counts: vec![10_000, 15_000, 20_000],
            settings: DetectorSettings::default(),
            fractions: crate::windowing::DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub window_size: usize,
    pub mode: WindowMode,
    pub max_features: usize,
    pub outcome: Result<DetectionReport, String>,
}

impl AblationCell {
    pub fn f1(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.f1)
    }
}

fn run_cell(corpora: &[GroupCorpus], size: usize, mode: WindowMode, features: usize, cfg: &AblationConfig) -> Result<DetectionReport, String> {
    if size % 2 == 0 || size == 0 {
        return Err(format!("window size {size} is not odd"));
    }
    let mut settings = cfg.settings.clone();
    settings.window = WindowSpec { k: (size - 1) / 2, mode, label_rule: settings.window.label_rule };
    settings.max_features = features;
    let windows = build_all_windows(corpora, &settings.window);
    let split = temporal_split(&windows, cfg.fractions).map_err(|e| e.to_string())?;
    let train = split.select(&windows, Partition::Train);
    let val = split.select(&windows, Partition::Validation);
    let test = split.select(&windows, Partition::Test);
    let fitted = fit_detector(&train, &val, &settings).map_err(|e| e.to_string())?;
    evaluate(&fitted.detector, &test).map(|e| e.report).map_err(|e| e.to_string())
}

/// Trains every grid cell from scratch. A failing cell records its error
/// and the grid continues. Cells are sorted by test F1, best first, with
/// failures last.
pub fn run_ablation(corpora: &[GroupCorpus], config: &AblationConfig) -> Vec<AblationCell> {
    let mut cells = Vec::new();
    for &window_size in &config.window_sizes {
        for &mode in &config.modes {
            for &max_features in &config.feature_counts {
                let outcome = run_cell(corpora, window_size, mode, max_features, config);
                cells.push(AblationCell { window_size, mode, max_features, outcome });
            }
        }
    }
    cells.sort_by(|a, b| match (a.f1(), b.f1()) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    cells
}

/// Best F1 among successful cells of one window size.
pub fn best_f1_for_size(cells: &[AblationCell], size: usize) -> Option<f64> {
    cells.iter().filter(|c| c.window_size == size).filter_map(|c| c.f1()).max_by(f64::total_cmp)
}

pub fn ablation_tsv(cells: &[AblationCell]) -> String {
    let mut s = String::from("window_size\tmode\tmax_features\tf1\tprecision\trecall\troc_auc\terror\n");
    for c in cells {
        match &c.outcome {
            Ok(r) => {
                s += &format!(
                    "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t\n",
                    c.window_size,
                    c.mode.as_str(),
                    c.max_features,
                    r.f1,
                    r.precision,
                    r.recall,
                    r.roc_auc.map_or("NA".to_string(), |a| format!("{a:.6}"))
                )
            }
            Err(e) => s += &format!("{}\t{}\t{}\tNA\tNA\tNA\tNA\t{e}\n", c.window_size, c.mode.as_str(), c.max_features),
        }
    }
    s
}
