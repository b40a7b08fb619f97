//! Grid of curriculum arrangement × reward weight: train, then evaluate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::evaluate_agent;
use crate::config::Resolved;
use crate::env::ForwarderEnv;
use crate::parallel::Parallelism;
use crate::ppo::{train_forwarder, TrainEvent};
use crate::rewards::{Arrangement, CurriculumConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub arrangements: Vec<Arrangement>,
    pub weights: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Training epochs per run, split over stages by each arrangement's fractions.
    pub total_epochs: u32,
    pub eval_trials: u32,
    pub eval_base_seed: u64,
}

impl SweepSpec {
    /// All four arrangements at w ∈ {1, 5, 10}.
    pub fn default_grid(total_epochs: u32, eval_trials: u32, eval_base_seed: u64) -> Self {
        SweepSpec {
            arrangements: Arrangement::ALL.to_vec(),
            weights: vec![1.0, 5.0, 10.0],
            seeds: vec![1],
            total_epochs,
            eval_trials,
            eval_base_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub arrangement: Arrangement,
    pub label: String,
    pub weight: f64,
    pub seed: u64,
    pub success_rate: f64,
    /// Mean episode return of the last training epoch.
    pub final_mean_return: f64,
    /// Set when training this cell failed; the metric fields are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapMetric {
    FinalReturn,
    SuccessRate,
}

/// Orderings read off the seed-mean return grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOrdering {
    pub best_arrangement: Option<Arrangement>,
    pub best_weight: Option<f64>,
    pub best_mean_return: Option<f64>,
    /// Per arrangement: does the seed-mean return rise with every weight step?
    pub return_increases_with_weight: Vec<(Arrangement, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub cells: Vec<SweepCell>,
    /// True when some cells failed and their entries are placeholders.
    pub partial: bool,
    pub ordering: SweepOrdering,
}

fn seed_mean(cells: &[SweepCell], a: Arrangement, w: f64, metric: HeatmapMetric) -> Option<f64> {
    let xs: Vec<f64> = cells
        .iter()
        .filter(|c| c.arrangement == a && c.weight == w && c.error.is_none())
        .map(|c| match metric {
            HeatmapMetric::FinalReturn => c.final_mean_return,
            HeatmapMetric::SuccessRate => c.success_rate,
        })
        .collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn ordering(spec: &SweepSpec, cells: &[SweepCell]) -> SweepOrdering {
    let mut best: Option<(Arrangement, f64, f64)> = None;
    let mut rising = Vec::new();
    for &a in &spec.arrangements {
        let means: Vec<Option<f64>> = spec
            .weights
            .iter()
            .map(|&w| seed_mean(cells, a, w, HeatmapMetric::FinalReturn))
            .collect();
        for (&w, m) in spec.weights.iter().zip(&means) {
            if let Some(m) = *m {
                if best.is_none_or(|(_, _, b)| m > b) {
                    best = Some((a, w, m));
                }
            }
        }
        let ok = means.iter().all(Option::is_some)
            && means.windows(2).all(|p| p[1].unwrap() > p[0].unwrap());
        rising.push((a, ok));
    }
    SweepOrdering {
        best_arrangement: best.map(|b| b.0),
        best_weight: best.map(|b| b.1),
        best_mean_return: best.map(|b| b.2),
        return_increases_with_weight: rising,
    }
}

impl SweepResult {
    pub fn new(spec: SweepSpec, cells: Vec<SweepCell>) -> Self {
        let partial = cells.iter().any(|c| c.error.is_some());
        let ordering = ordering(&spec, &cells);
        SweepResult {
            spec,
            cells,
            partial,
            ordering,
        }
    }

    /// Seed mean of `metric` at one grid point, ignoring failed cells.
    pub fn mean(&self, arrangement: Arrangement, weight: f64, metric: HeatmapMetric) -> Option<f64> {
        seed_mean(&self.cells, arrangement, weight, metric)
    }

    /// Rows are arrangements, columns reward weights; cells are seed means of
    /// `metric`, empty where every seed failed.
    pub fn write_heatmap_csv(&self, w: impl Write, metric: HeatmapMetric) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["arrangement".to_string()];
        header.extend(self.spec.weights.iter().map(|w| format!("w={w}")));
        out.write_record(&header)?;
        for &a in &self.spec.arrangements {
            let mut row = vec![a.name().to_string()];
            for &w in &self.spec.weights {
                row.push(self.mean(a, w, metric).map(|v| v.to_string()).unwrap_or_default());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Run every (arrangement, weight, seed) combination from `base`,
/// reporting each finished cell.
pub fn run_sweep(
    base: &Resolved,
    spec: &SweepSpec,
    mode: Parallelism,
    mut on_cell: impl FnMut(&SweepCell),
    mut on_event: impl FnMut(&SweepCell, &TrainEvent),
) -> SweepResult {
    let mut cells = Vec::new();
    for &arrangement in &spec.arrangements {
        for &weight in &spec.weights {
            for &seed in &spec.seeds {
                let mut r = base.clone();
                r.reward.weight = weight;
                r.curriculum = CurriculumConfig::with_total(arrangement, spec.total_epochs);
                r.ppo.seed = seed;
                r.env.seed = seed;
                let mut cell = SweepCell {
                    arrangement,
                    label: arrangement.label().to_string(),
                    weight,
                    seed,
                    success_rate: f64::NAN,
                    final_mean_return: f64::NAN,
                    error: None,
                };
                match train_forwarder(&r, mode, |ev| on_event(&cell, ev)) {
                    Ok(summary) => {
                        let env = ForwarderEnv::new(r.chain.clone(), r.env.clone(), r.reward.clone());
                        let report =
                            evaluate_agent(&env, &summary.agent, spec.eval_trials, spec.eval_base_seed, mode);
                        cell.success_rate = report.success_rate;
                        cell.final_mean_return = summary.history.last().map_or(f64::NAN, |m| m.mean_return);
                    }
                    Err(e) => cell.error = Some(e.to_string()),
                }
                on_cell(&cell);
                cells.push(cell);
            }
        }
    }
    SweepResult::new(spec.clone(), cells)
}
