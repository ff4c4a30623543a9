use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::consistency::CurriculumSchedule;
use crate::distill::{distill, sample, DistillConfig, DistillOutcome};
use crate::error::{Error, Result};
use crate::eval::metrics::{sliced_wasserstein, DEFAULT_PROJECTIONS};
use crate::rng::derive_seed;
use crate::synthdata::{sample_data, DistributionSpec};

/// How each distilled student is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationEval {
    /// Generated and reference points per score.
    pub samples: usize,
    pub projections: usize,
}

impl Default for AblationEval {
    fn default() -> Self {
        Self {
            samples: 10_000,
            projections: DEFAULT_PROJECTIONS,
        }
    }
}

/// One (strategy, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub strategy: String,
    pub l: Option<f64>,
    pub n: Option<usize>,
    pub s: Option<f64>,
    pub seed: u64,
    /// Sliced Wasserstein distance of one-step samples to data; `None` when
    /// the run failed.
    pub metric: Option<f64>,
    pub runtime_ms: f64,
    /// Failure description, empty on success.
    pub note: String,
}

const SAMPLE_STREAM: u64 = 11;
const REFERENCE_STREAM: u64 = 12;
const PROJECTION_STREAM: u64 = 13;

/// Scores one-step samples of a distilled checkpoint against fresh data.
pub fn score_student(
    ckpt: &Checkpoint,
    data: &DistributionSpec,
    eval: &AblationEval,
    seed: u64,
) -> Result<f64> {
    let gen = sample(ckpt, eval.samples, 1, derive_seed(seed, SAMPLE_STREAM, 0))?;
    let reference = sample_data(data, eval.samples, derive_seed(seed, REFERENCE_STREAM, 0))?;
    sliced_wasserstein(
        gen.data.view(),
        reference.data.view(),
        eval.projections,
        derive_seed(seed, PROJECTION_STREAM, 0),
    )
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Distills, samples and scores every strategy for every seed. Failed runs
/// become rows with an error note. `observe` sees each successful run.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation_observed<F>(
    strategies: &[CurriculumSchedule],
    base: &DistillConfig,
    data: &DistributionSpec,
    teacher: &Checkpoint,
    seeds: &[u64],
    eval: &AblationEval,
    mut observe: F,
) -> Result<Vec<AblationRow>>
where
    F: FnMut(&CurriculumSchedule, u64, &DistillOutcome),
{
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::config("ablate", "needs at least one strategy and one seed"));
    }
    let mut rows = Vec::with_capacity(strategies.len() * seeds.len());
    for strategy in strategies {
        let (l, n, s) = strategy.lns();
        for &seed in seeds {
            let start = Instant::now();
            let cfg = DistillConfig {
                schedule: *strategy,
                seed,
                ..*base
            };
            let result = distill(&cfg, data, teacher).and_then(|out| {
                let m = score_student(&out.checkpoint, data, eval, seed)?;
                observe(strategy, seed, &out);
                Ok(m)
            });
            let (metric, note) = match result {
                Ok(m) => (Some(m), String::new()),
                Err(e) => (None, e.to_string()),
            };
            rows.push(AblationRow {
                strategy: strategy.to_string(),
                l,
                n,
                s,
                seed,
                metric,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                note,
            });
        }
    }
    Ok(sort_rows(rows))
}

pub fn run_ablation(
    strategies: &[CurriculumSchedule],
    base: &DistillConfig,
    data: &DistributionSpec,
    teacher: &Checkpoint,
    seeds: &[u64],
    eval: &AblationEval,
) -> Result<Vec<AblationRow>> {
    run_ablation_observed(strategies, base, data, teacher, seeds, eval, |_, _, _| {})
}

/// Median metric of a strategy over its successful rows.
pub fn strategy_median(rows: &[AblationRow], strategy: &str) -> Option<f64> {
    median(
        rows.iter()
            .filter(|r| r.strategy == strategy)
            .filter_map(|r| r.metric)
            .collect(),
    )
}

/// Groups rows by strategy, ordered by median metric (strategies without a
/// successful run last), then by seed.
pub fn sort_rows(mut rows: Vec<AblationRow>) -> Vec<AblationRow> {
    let key = |rows: &[AblationRow], s: &str| strategy_median(rows, s).unwrap_or(f64::INFINITY);
    let snapshot = rows.clone();
    rows.sort_by(|a, b| {
        key(&snapshot, &a.strategy)
            .total_cmp(&key(&snapshot, &b.strategy))
            .then_with(|| a.strategy.cmp(&b.strategy))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    rows
}

fn opt_text<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["strategy", "l", "n", "s", "seed", "metric", "runtime_ms", "note"])?;
    for r in rows {
        wr.write_record([
            r.strategy.clone(),
            opt_text(r.l),
            opt_text(r.n),
            opt_text(r.s),
            r.seed.to_string(),
            opt_text(r.metric),
            format!("{:.3}", r.runtime_ms),
            r.note.clone(),
        ])?;
    }
    wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn save_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ablation_csv(rows, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, seed: u64, metric: Option<f64>) -> AblationRow {
        AblationRow {
            strategy: strategy.into(),
            l: None,
            n: Some(1),
            s: None,
            seed,
            metric,
            runtime_ms: 1.0,
            note: String::new(),
        }
    }

    #[test]
    fn rows_sort_by_strategy_median() {
        let rows = vec![
            row("a", 0, Some(3.0)),
            row("b", 0, Some(1.0)),
            row("failed", 0, None),
            row("a", 1, Some(0.5)),
            row("b", 1, Some(2.0)),
            row("a", 2, Some(2.5)),
        ];
        let sorted = sort_rows(rows);
        let order: Vec<_> = sorted.iter().map(|r| (r.strategy.as_str(), r.seed)).collect();
        assert_eq!(
            order,
            vec![("b", 0), ("b", 1), ("a", 0), ("a", 1), ("a", 2), ("failed", 0)]
        );
        assert_eq!(strategy_median(&sorted, "a"), Some(2.5));
        assert_eq!(strategy_median(&sorted, "failed"), None);
    }

    #[test]
    fn csv_leaves_missing_values_blank() {
        let mut r = row("ground-truth", 4, None);
        r.note = "boom".into();
        let mut buf = Vec::new();
        write_ablation_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "strategy,l,n,s,seed,metric,runtime_ms,note");
        assert_eq!(text.lines().nth(1).unwrap(), "ground-truth,,1,,4,,1.000,boom");
    }
}
