//! Per-stage wall-clock accounting for summary generation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Generic,
    Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Timing of one artifact generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub key: String,
    pub pipeline: PipelineKind,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub stages: Vec<StageTiming>,
    pub total_s: f64,
}

impl LatencyRecord {
    pub fn stage(&self, name: &str) -> Option<f64> {
        self.stages.iter().find(|s| s.stage == name).map(|s| s.seconds)
    }
}

/// Collects named stage timings.
#[derive(Debug, Default, Clone)]
pub struct StageClock {
    stages: Vec<StageTiming>,
}

impl StageClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.record(stage, t0.elapsed().as_secs_f64());
        out
    }

    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.stages.push(StageTiming { stage: stage.to_string(), seconds });
    }

    pub fn stages(&self) -> &[StageTiming] {
        &self.stages
    }

    /// Stages whose names start with `prefix`, or that are in `shared`.
    pub fn select(&self, prefix: &str, shared: &[&str]) -> Vec<StageTiming> {
        self.stages
            .iter()
            .filter(|s| s.stage.starts_with(prefix) || shared.contains(&s.stage.as_str()))
            .cloned()
            .collect()
    }

    pub fn finish(
        stages: Vec<StageTiming>,
        key: String,
        pipeline: PipelineKind,
        modality: Modality,
        query: Option<String>,
    ) -> LatencyRecord {
        let total_s = stages.iter().map(|s| s.seconds).sum();
        LatencyRecord { key, pipeline, modality, query, stages, total_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean_s: f64,
    /// Sample standard deviation; 0 for a single observation.
    pub std_s: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { n, mean_s: 0.0, std_s: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { n, mean_s: mean, std_s: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityLatency {
    pub total: Stats,
    /// Stages in first-seen order.
    pub stages: Vec<(String, Stats)>,
}

impl ModalityLatency {
    pub fn stage(&self, name: &str) -> Option<&Stats> {
        self.stages.iter().find(|(s, _)| s == name).map(|(_, st)| st)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Live query generations by modality. Empty when no query ran.
    pub query: BTreeMap<Modality, ModalityLatency>,
    /// Pre-generated generic summaries, for reference.
    pub generic: BTreeMap<Modality, ModalityLatency>,
}

fn summarize<'a>(records: impl Iterator<Item = &'a LatencyRecord>) -> BTreeMap<Modality, ModalityLatency> {
    let mut grouped: BTreeMap<Modality, Vec<&LatencyRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.modality).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(m, rs)| {
            let mut order: Vec<String> = Vec::new();
            let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &rs {
                for s in &r.stages {
                    if !values.contains_key(&s.stage) {
                        order.push(s.stage.clone());
                    }
                    values.entry(s.stage.clone()).or_default().push(s.seconds);
                }
            }
            let totals: Vec<f64> = rs.iter().map(|r| r.total_s).collect();
            let stages = order.into_iter().map(|s| { let st = Stats::of(&values[&s]); (s, st) }).collect();
            (m, ModalityLatency { total: Stats::of(&totals), stages })
        })
        .collect()
}

pub fn latency_report(records: &[LatencyRecord]) -> LatencyReport {
    LatencyReport {
        query: summarize(records.iter().filter(|r| r.pipeline == PipelineKind::Query)),
        generic: summarize(records.iter().filter(|r| r.pipeline == PipelineKind::Generic)),
    }
}

impl std::fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (label, part) in [("query", &self.query), ("generic", &self.generic)] {
            if part.is_empty() {
                continue;
            }
            writeln!(f, "{label} summaries")?;
            for (m, l) in part {
                writeln!(f, "  {m:<10} n={:<3} total {:>8.3}s ± {:.3}s", l.total.n, l.total.mean_s, l.total.std_s)?;
                for (s, st) in &l.stages {
                    writeln!(f, "    {s:<22} {:>8.3}s ± {:.3}s", st.mean_s, st.std_s)?;
                }
            }
        }
        if self.query.is_empty() {
            writeln!(f, "no query summaries generated yet")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(m: Modality, stages: &[(&str, f64)]) -> LatencyRecord {
        let stages = stages.iter().map(|(s, t)| StageTiming { stage: s.to_string(), seconds: *t }).collect();
        StageClock::finish(stages, "k".into(), PipelineKind::Query, m, Some("q".into()))
    }

    #[test]
    fn empty_report() {
        let r = latency_report(&[]);
        assert!(r.query.is_empty() && r.generic.is_empty());
    }

    #[test]
    fn stats_per_modality() {
        let rs = vec![
            rec(Modality::Storyboard, &[("embed_text", 0.2), ("storyboard.select", 0.01)]),
            rec(Modality::Storyboard, &[("embed_text", 0.4), ("storyboard.select", 0.03)]),
        ];
        let r = latency_report(&rs);
        assert!(!r.query.contains_key(&Modality::Skim));
        let sb = &r.query[&Modality::Storyboard];
        assert_eq!(sb.total.n, 2);
        assert!((sb.stage("embed_text").unwrap().mean_s - 0.3).abs() < 1e-12);
        assert!((sb.stage("embed_text").unwrap().std_s - 0.02f64.sqrt()).abs() < 1e-12);
        assert!((sb.total.mean_s - 0.32).abs() < 1e-12);
        let json = serde_json::to_string(&r).unwrap();
        let back: LatencyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sample_std() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.mean_s - 2.5).abs() < 1e-12);
        assert!((s.std_s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stats::of(&[7.0]).std_s, 0.0);
    }
}
