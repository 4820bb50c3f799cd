//! Run metrics: per-window CSV rows, the per-episode log, criterion
//! re-scanning, and cross-seed aggregation.

use super::HarnessError;

/// Bit-exact CSV header for run metrics.
pub const CSV_HEADER: &str =
    "env_step,episodes,success_rate,mean_return,mean_ep_len,epsilon,frac_greedy,frac_prior,frac_random";

/// One logging-window row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub env_step: u64,
    pub episodes: u64,
    /// Trailing success rate over the criterion window at row time.
    pub success_rate: f64,
    /// Mean return over episodes completed inside this logging window.
    pub mean_return: f64,
    pub mean_ep_len: f64,
    pub epsilon: f64,
    pub frac_greedy: f64,
    pub frac_prior: f64,
    pub frac_random: f64,
}

/// One completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub end_step: u64,
    pub success: bool,
    pub ret: f64,
    pub len: u32,
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeRecord>,
    /// First env step at which the trailing success criterion held, or
    /// `None` when the budget ran out first.
    pub steps_to_criterion: Option<u64>,
    pub total_env_steps: u64,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.env_step,
                r.episodes,
                r.success_rate,
                r.mean_return,
                r.mean_ep_len,
                r.epsilon,
                r.frac_greedy,
                r.frac_prior,
                r.frac_random
            ));
        }
        out
    }
}

/// Parses a metrics CSV produced by [`RunMetrics::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(HarnessError::csv(format!(
                "bad header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(HarnessError::csv(format!(
                "line {}: expected 9 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, HarnessError> {
            fields[i].parse().map_err(|_| {
                HarnessError::csv(format!("line {}: bad number {:?}", idx + 2, fields[i]))
            })
        };
        rows.push(MetricsRow {
            env_step: num(0)? as u64,
            episodes: num(1)? as u64,
            success_rate: num(2)?,
            mean_return: num(3)?,
            mean_ep_len: num(4)?,
            epsilon: num(5)?,
            frac_greedy: num(6)?,
            frac_prior: num(7)?,
            frac_random: num(8)?,
        });
    }
    Ok(rows)
}

/// First env step at which the trailing success rate over the last `window`
/// episodes reaches `rate`. Pure re-scan over an episode log, so a finished
/// run can be re-evaluated at any criterion.
pub fn steps_to_criterion(records: &[EpisodeRecord], rate: f64, window: usize) -> Option<u64> {
    if window == 0 || records.len() < window {
        return None;
    }
    let mut successes = records[..window].iter().filter(|r| r.success).count();
    let hits = |s: usize| s as f64 / window as f64 >= rate;
    if hits(successes) {
        return Some(records[window - 1].end_step);
    }
    for i in window..records.len() {
        if records[i].success {
            successes += 1;
        }
        if records[i - window].success {
            successes -= 1;
        }
        if hits(successes) {
            return Some(records[i].end_step);
        }
    }
    None
}

/// Mean and min/max band of the success-rate curves across seeds, keyed by
/// env step. Steps are aggregated over whichever runs reached them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub env_step: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate_success(curves: &[Vec<MetricsRow>]) -> Result<Vec<AggregatePoint>, HarnessError> {
    if curves.is_empty() || curves.iter().all(Vec::is_empty) {
        return Err(HarnessError::config("nothing to aggregate"));
    }
    let mut by_step: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for curve in curves {
        for row in curve {
            by_step
                .entry(row.env_step)
                .or_default()
                .push(row.success_rate);
        }
    }
    Ok(by_step
        .into_iter()
        .map(|(env_step, vals)| AggregatePoint {
            env_step,
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect())
}
