use std::time::Instant;

use super::{Detector, DetectorError, GbdtModel};
use crate::features::SparseVector;

/// Clock used for timing.
pub const CLOCK_SOURCE: &str = "std::time::Instant (monotonic)";

/// Per-sample latency summary in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub samples: usize,
    pub warmup: usize,
    pub median: f64,
    pub p99: f64,
    pub mean: f64,
    pub clock: &'static str,
}

impl LatencyReport {
    fn from_durations(mut d: Vec<f64>, warmup: usize) -> Self {
        let samples = d.len();
        let mean = d.iter().sum::<f64>() / samples as f64;
        d.sort_unstable_by(f64::total_cmp);
        let median = if samples % 2 == 1 { d[samples / 2] } else { (d[samples / 2 - 1] + d[samples / 2]) / 2.0 };
        let p99 = d[((samples as f64 * 0.99).ceil() as usize).clamp(1, samples) - 1];
        LatencyReport { samples, warmup, median, p99, mean, clock: CLOCK_SOURCE }
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "samples\t{}\nwarmup\t{}\nmedian_s\t{:.3e}\np99_s\t{:.3e}\nmean_s\t{:.3e}\nclock\t{}\n",
            self.samples, self.warmup, self.median, self.p99, self.mean, self.clock
        )
    }
}

fn default_warmup(n: usize) -> usize {
    (n / 10).clamp(1, 1000)
}

/// Times transform + score for each window text; warm-up runs are excluded.
pub fn bench_inference<S: AsRef<str>>(detector: &dyn Detector, windows: &[S]) -> Result<LatencyReport, DetectorError> {
    if windows.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    let warmup = default_warmup(windows.len());
    let mut sink = 0.0;
    for w in windows.iter().take(warmup) {
        sink += detector.score(w.as_ref());
    }
    let mut d = Vec::with_capacity(windows.len());
    for w in windows {
        let t = Instant::now();
        let s = detector.score(w.as_ref());
        d.push(t.elapsed().as_secs_f64());
        sink += s;
    }
    std::hint::black_box(sink);
    Ok(LatencyReport::from_durations(d, warmup))
}

/// Times the scoring step alone on pre-computed vectors.
pub fn bench_scoring(model: &GbdtModel, vectors: &[SparseVector]) -> Result<LatencyReport, DetectorError> {
    if vectors.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    let warmup = default_warmup(vectors.len());
    let mut sink = 0.0;
    for v in vectors.iter().take(warmup) {
        sink += model.score_unchecked(v);
    }
    let mut d = Vec::with_capacity(vectors.len());
    for v in vectors {
        let t = Instant::now();
        let s = model.score_unchecked(std::hint::black_box(v));
        d.push(t.elapsed().as_secs_f64());
        sink += s;
    }
    std::hint::black_box(sink);
    Ok(LatencyReport::from_durations(d, warmup))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let r = LatencyReport::from_durations((1..=100).map(|i| i as f64).collect(), 0);
        assert_eq!(r.median, 50.5);
        assert_eq!(r.p99, 99.0);
        assert_eq!(r.mean, 50.5);
    }

    #[test]
    fn empty_input_is_error() {
        let m = GbdtModel::constant(0.0, 2);
        assert!(matches!(bench_scoring(&m, &[]), Err(DetectorError::EmptyInput)));
    }
}
