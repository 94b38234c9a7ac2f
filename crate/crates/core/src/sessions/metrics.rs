use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, sd: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupBy {
    pub env: bool,
    pub paradigm: bool,
}

impl GroupBy {
    pub const ENV_AND_PARADIGM: GroupBy = GroupBy { env: true, paradigm: true };
}

/// Aggregates over one group. Trajectory features are computed over the
/// successful trials only and are `None` when the group has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env: Option<String>,
    pub paradigm: Option<String>,
    pub trials: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub path_length: Option<MeanSd>,
    pub trial_time: Option<MeanSd>,
    pub final_speed: Option<MeanSd>,
    pub final_heading_deg: Option<MeanSd>,
}

pub fn compute_metrics(trajectories: &[Trajectory], group_by: GroupBy) -> Vec<MetricsRow> {
    let mut groups: BTreeMap<(Option<String>, Option<String>), Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        let key = (
            group_by.env.then(|| t.header.env_id.as_str().to_string()),
            group_by.paradigm.then(|| t.header.paradigm.as_str().to_string()),
        );
        groups.entry(key).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((env, paradigm), members)| {
            let wins: Vec<_> = members.iter().filter(|t| t.outcome.is_success()).collect();
            let stat = |f: fn(&Trajectory) -> f64| MeanSd::of(&wins.iter().map(|t| f(t)).collect::<Vec<_>>());
            MetricsRow {
                env,
                paradigm,
                trials: members.len(),
                successes: wins.len(),
                success_fraction: wins.len() as f64 / members.len() as f64,
                path_length: stat(|t| t.metrics.path_length),
                trial_time: stat(|t| t.metrics.duration),
                final_speed: stat(|t| t.metrics.final_speed),
                final_heading_deg: stat(|t| t.metrics.final_heading_deg),
            }
        })
        .collect()
}

fn cell(v: &Option<MeanSd>) -> String {
    match v {
        Some(m) => format!("{:.1} ± {:.1}", m.mean, m.sd),
        None => "-".to_string(),
    }
}

/// Fixed-width text table of metrics rows.
pub fn render_table(rows: &[MetricsRow]) -> String {
    let header = ["env", "paradigm", "trials", "success", "path (m)", "time (s)", "final speed (m/s)", "final heading (deg)"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.env.clone().unwrap_or_else(|| "*".into()),
                r.paradigm.clone().unwrap_or_else(|| "*".into()),
                r.trials.to_string(),
                format!("{:.1}%", 100.0 * r.success_fraction),
                cell(&r.path_length),
                cell(&r.trial_time),
                cell(&r.final_speed),
                cell(&r.final_heading_deg),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..8)
        .map(|i| body.iter().map(|r| r[i].chars().count()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect(), &mut out);
    for r in &body {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}
