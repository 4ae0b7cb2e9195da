//! Per-episode metrics and comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::EpisodeLog;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub controller: String,
    pub episodes: usize,
    pub steps: usize,
    pub mean_d: f64,
    pub std_d: f64,
    pub mean_alpha_deg: f64,
    pub std_alpha_deg: f64,
    /// Accumulated reward, averaged over episodes.
    pub reward: f64,
    pub discounted_reward: f64,
    /// How the episodes ended, e.g. `horizon` or `horizon=4/too_close=1`.
    pub termination: String,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn termination_summary(ends: &[&str]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in ends {
        *counts.entry(e).or_default() += 1;
    }
    if counts.len() == 1 && ends.len() == 1 {
        return ends[0].to_string();
    }
    counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("/")
}

/// Means and population standard deviations over every step of every log.
/// Rewards are summed per episode, optionally discounted by `gamma` from the
/// first step, then averaged over episodes.
pub fn compute_metrics(scenario: &str, controller: &str, logs: &[EpisodeLog], gamma: f64) -> Result<MetricsRow> {
    if logs.is_empty() || logs.iter().any(|l| l.is_empty()) {
        return Err(Error::Empty("episode log"));
    }
    let records = || logs.iter().flat_map(|l| l.records.iter());
    let (mean_d, std_d) = mean_std(records().map(|r| r.distance));
    let (mean_alpha_deg, std_alpha_deg) = mean_std(records().map(|r| r.alpha_deg));
    let n = logs.len() as f64;
    let reward = logs.iter().map(|l| l.records.iter().map(|r| r.reward).sum::<f64>()).sum::<f64>() / n;
    let discounted_reward = logs
        .iter()
        .map(|l| {
            l.records
                .iter()
                .enumerate()
                .map(|(k, r)| gamma.powi(k as i32) * r.reward)
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    let ends: Vec<&str> = logs.iter().map(|l| l.end().map_or("-", |e| e.as_str())).collect();
    Ok(MetricsRow {
        scenario: scenario.to_string(),
        controller: controller.to_string(),
        episodes: logs.len(),
        steps: records().count(),
        mean_d,
        std_d,
        mean_alpha_deg,
        std_alpha_deg,
        reward,
        discounted_reward,
        termination: termination_summary(&ends),
    })
}

pub const TABLE_HEADER: &str =
    "scenario,controller,episodes,steps,mean_d,std_d,mean_alpha_deg,std_alpha_deg,reward,discounted_reward,termination";

/// Comma-separated table sorted by scenario, then controller.
pub fn emit_table(rows: &[MetricsRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Empty("metrics table"));
    }
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.scenario, &a.controller).cmp(&(&b.scenario, &b.controller)));
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.scenario,
            r.controller,
            r.episodes,
            r.steps,
            r.mean_d,
            r.std_d,
            r.mean_alpha_deg,
            r.std_alpha_deg,
            r.reward,
            r.discounted_reward,
            r.termination
        )
        .expect("writing to a string");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::sim::{EpisodeEnd, LogRecord};

    fn constant_log(n: usize, d: f64, alpha: f64, reward: f64) -> EpisodeLog {
        let mut log = EpisodeLog::default();
        for k in 0..n {
            log.push(LogRecord {
                step: k + 1,
                human: Pose::new(0.0, 0.0, 0.0),
                robot: Pose::new(d, 0.0, 0.0),
                distance: d,
                alpha_deg: alpha,
                reward,
                end: (k + 1 == n).then_some(EpisodeEnd::Horizon),
            });
        }
        log
    }

    #[test]
    fn constant_log_metrics() {
        let row = compute_metrics("s", "c", &[constant_log(50, 1.5, 0.0, 0.75)], 1.0).unwrap();
        assert_eq!((row.mean_d, row.std_d, row.mean_alpha_deg, row.std_alpha_deg), (1.5, 0.0, 0.0, 0.0));
        assert!((row.reward - 37.5).abs() < 1e-12);
        assert!((row.discounted_reward - 37.5).abs() < 1e-12);
        assert_eq!(row.termination, "horizon");
    }

    #[test]
    fn single_step_has_zero_spread() {
        let row = compute_metrics("s", "c", &[constant_log(1, 2.0, 10.0, 0.1)], 0.99).unwrap();
        assert_eq!((row.std_d, row.std_alpha_deg), (0.0, 0.0));
    }

    #[test]
    fn discounting_and_episode_averaging() {
        let logs = [constant_log(3, 1.0, 0.0, 1.0), constant_log(1, 3.0, 0.0, -1.0)];
        let row = compute_metrics("s", "c", &logs, 0.5).unwrap();
        assert_eq!(row.episodes, 2);
        assert_eq!(row.steps, 4);
        assert!((row.reward - (3.0 - 1.0) / 2.0).abs() < 1e-15);
        assert!((row.discounted_reward - (1.75 - 1.0) / 2.0).abs() < 1e-15);
        assert!((row.mean_d - 1.5).abs() < 1e-15);
        assert_eq!(row.termination, "horizon=2");
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(compute_metrics("s", "c", &[], 0.9).is_err());
        assert!(compute_metrics("s", "c", &[EpisodeLog::default()], 0.9).is_err());
        assert!(emit_table(&[]).is_err());
    }

    #[test]
    fn table_is_sorted_and_stable() {
        let a = compute_metrics("b_scn", "HC", &[constant_log(5, 1.5, 0.0, 0.75)], 1.0).unwrap();
        let b = compute_metrics("a_scn", "LBGP", &[constant_log(5, 1.5, 0.0, 0.75)], 1.0).unwrap();
        let c = compute_metrics("a_scn", "E2E", &[constant_log(5, 1.5, 0.0, 0.75)], 1.0).unwrap();
        let t1 = emit_table(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let t2 = emit_table(&[c, a, b]).unwrap();
        assert_eq!(t1, t2);
        let lines: Vec<_> = t1.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("a_scn,E2E,1,5,1.5000,0.0000,0.0000,0.0000,3.7500,3.7500,horizon"));
        assert!(lines[3].starts_with("b_scn,HC"));
    }
}
