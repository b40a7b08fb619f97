//! Out-of-distribution evaluation: perturbed log size and ground shape.

use serde::{Deserialize, Serialize};

use super::{evaluate_success_rate, Controller, EvalReport};
use crate::env::{EnvConfig, ForwarderEnv, Terrain};
use crate::parallel::Parallelism;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Unchanged environment.
    Nominal,
    /// Log radius multiplied by `factor`.
    LogRadius { factor: f64 },
    /// Flat ground raised by `height` meters.
    GroundElevation { height: f64 },
    /// Piecewise-constant rough ground with the given height spread.
    RoughTerrain { amplitude: f64, seed: u64 },
}

impl Perturbation {
    pub fn name(&self) -> String {
        match self {
            Perturbation::Nominal => "nominal".into(),
            Perturbation::LogRadius { factor } => format!("log_radius_x{factor}"),
            Perturbation::GroundElevation { height } => format!("ground_plus_{height}m"),
            Perturbation::RoughTerrain { amplitude, .. } => format!("rough_terrain_{amplitude}m"),
        }
    }

    pub fn apply(&self, base: &EnvConfig) -> EnvConfig {
        let mut c = base.clone();
        match *self {
            Perturbation::Nominal => {}
            Perturbation::LogRadius { factor } => c.log.radius *= factor,
            Perturbation::GroundElevation { height } => {
                let h0 = match c.terrain {
                    Terrain::Flat { height } | Terrain::Rough { height, .. } => height,
                };
                c.terrain = Terrain::Flat { height: h0 + height };
            }
            Perturbation::RoughTerrain { amplitude, seed } => {
                let h0 = match c.terrain {
                    Terrain::Flat { height } | Terrain::Rough { height, .. } => height,
                };
                c.terrain = Terrain::Rough {
                    height: h0,
                    amplitude,
                    cell_size: 0.5,
                    seed,
                };
            }
        }
        c
    }
}

/// Nominal, log radius ±10/25/50 %, ground raised 0.2–1.0 m, rough ground.
pub fn default_suite() -> Vec<Perturbation> {
    let mut s = vec![Perturbation::Nominal];
    for f in [0.5, 0.75, 0.9, 1.1, 1.25, 1.5] {
        s.push(Perturbation::LogRadius { factor: f });
    }
    for h in [0.2, 0.4, 0.6, 0.8, 1.0] {
        s.push(Perturbation::GroundElevation { height: h });
    }
    s.push(Perturbation::RoughTerrain {
        amplitude: 0.2,
        seed: 7,
    });
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub perturbation: Perturbation,
    pub report: EvalReport,
}

pub fn run_suite<F, C>(
    env: &ForwarderEnv,
    cases: &[Perturbation],
    make_controller: F,
    trials: u32,
    base_seed: u64,
    mode: Parallelism,
) -> Vec<CaseResult>
where
    F: Fn() -> C + Sync + Send,
    C: Controller,
{
    cases
        .iter()
        .map(|p| {
            let e = env.with_config(p.apply(&env.config));
            CaseResult {
                name: p.name(),
                perturbation: *p,
                report: evaluate_success_rate(&e, &make_controller, trials, base_seed, mode),
            }
        })
        .collect()
}
