//! Pinned scenarios.

use super::agent::AgentConfig;
use super::app::{AppSpec, TaskGenSpec};
use super::drift::DriftOp;
use super::evolve::EvolutionConfig;
use super::suite::{BankSource, Scenario, ScheduledDrift};

/// Appearance noise levels swept by the ablation.
pub const ABLATION_SIGMAS: [f64; 3] = [0.1, 0.3, 0.5];
/// App versions in the ablation, the first one undrifted.
pub const ABLATION_VERSIONS: usize = 5;
/// Iterations in the continual-adaptation run.
pub const CONTINUAL_ITERATIONS: usize = 3;

/// The four memory configurations: none, stationary only, procedural only, both.
pub fn ablation_agents() -> Vec<AgentConfig> {
    vec![
        AgentConfig::named("none", false, false),
        AgentConfig::named("stationary", false, true),
        AgentConfig::named("procedural", true, false),
        AgentConfig::named("both", true, true),
    ]
}

fn evolution() -> EvolutionConfig {
    EvolutionConfig { tau: 0.4, ..EvolutionConfig::default() }
}

/// 30 tasks over 10 categories on a seeded app, five versions, each new
/// version drifting appearance by `sigma` and moving two workflow edges.
pub fn ablation_scenario(sigma: f64) -> Scenario {
    Scenario {
        name: format!("ablation-sigma-{sigma}"),
        seed: 2024,
        app: AppSpec { screens: 10, elements_per_screen: 6, feature_dim: 16 },
        app_seed: 7,
        tasks: TaskGenSpec { categories: 10, per_category: 3, seed: 1, ..TaskGenSpec::default() },
        bank: BankSource::EvaluationTasks,
        drift: (1..ABLATION_VERSIONS)
            .map(|i| ScheduledDrift {
                before_iteration: i,
                ops: vec![DriftOp::Appearance { sigma }, DriftOp::Workflow { moves: 2 }],
            })
            .collect(),
        agents: ablation_agents(),
        budget: 12,
        evolution: evolution(),
    }
}

/// A bank built on the original app for one task set, deployed on a redesigned
/// app with a partly different task set. The app keeps receiving small visual
/// updates between iterations.
pub fn continual_scenario() -> Scenario {
    Scenario {
        name: "continual".into(),
        seed: 900,
        app: AppSpec { screens: 10, elements_per_screen: 6, feature_dim: 16 },
        app_seed: 100,
        tasks: TaskGenSpec { categories: 10, per_category: 3, seed: 5, ..TaskGenSpec::default() },
        bank: BankSource::Tasks {
            spec: TaskGenSpec { categories: 10, per_category: 3, seed: 1, ..TaskGenSpec::default() },
        },
        drift: (0..CONTINUAL_ITERATIONS)
            .map(|i| ScheduledDrift {
                before_iteration: i,
                ops: if i == 0 {
                    vec![DriftOp::Appearance { sigma: 0.3 }, DriftOp::Workflow { moves: 2 }]
                } else {
                    vec![DriftOp::Appearance { sigma: 0.2 }]
                },
            })
            .collect(),
        agents: vec![AgentConfig::named("both", true, true)],
        budget: 12,
        evolution: evolution(),
    }
}
