//! Multi-iteration evaluation of agents under a drift schedule.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::agent::{run_episode, AgentConfig, EpisodeMemory, OriginBoundary, Provenance, TranscriptStep};
use super::app::{generate_app, generate_tasks, AppSpec, AppVersion, TaskGenSpec, TaskSpec};
use super::drift::{apply_drift, DriftOp};
use super::evolve::{build_initial_bank, evolve_after_episode, ClusterBuffer, EvolutionConfig, MemoryBank};
use super::SimError;

/// Drift applied right before iteration `before_iteration` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledDrift {
    pub before_iteration: usize,
    pub ops: Vec<DriftOp>,
}

/// Where the initial bank's demonstrations come from. Demonstrations always
/// run on the undrifted app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BankSource {
    Empty,
    EvaluationTasks,
    Tasks { spec: TaskGenSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub app: AppSpec,
    pub app_seed: u64,
    pub tasks: TaskGenSpec,
    pub bank: BankSource,
    pub drift: Vec<ScheduledDrift>,
    pub agents: Vec<AgentConfig>,
    pub budget: usize,
    pub evolution: EvolutionConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.budget == 0 {
            return Err(SimError::InvalidBudget);
        }
        if self.agents.is_empty() {
            return Err(SimError::InvalidConfig("scenario lists no agents".into()));
        }
        let names: BTreeSet<&str> = self.agents.iter().map(|a| a.name.as_str()).collect();
        if names.len() != self.agents.len() {
            return Err(SimError::InvalidConfig("agent names must be unique".into()));
        }
        for a in &self.agents {
            a.validate()?;
        }
        for d in &self.drift {
            for op in &d.ops {
                op.validate()?;
            }
        }
        Ok(())
    }

    fn drift_seed(&self, iteration: usize) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (iteration as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
    }
}

/// One CSV row: one agent in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub version: u32,
    pub agent: String,
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Percentage of retrieved workflows from the initial bank.
    pub proc_old_pct: Option<f64>,
    /// Percentage of retrieved patch variants from the initial bank.
    pub stat_old_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub iteration: usize,
    pub agent: String,
    pub task_index: usize,
    pub success: bool,
    pub steps_used: usize,
    pub plan: Vec<String>,
    pub transcript: Vec<TranscriptStep>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteOutput {
    /// Ordered by iteration, then by the scenario's agent order.
    pub rows: Vec<MetricsRow>,
    /// Ordered by agent, iteration, task.
    pub episodes: Vec<EpisodeRecord>,
}

impl SuiteOutput {
    /// Overall success rate of `agent` across all iterations.
    pub fn success_rate(&self, agent: &str) -> Option<f64> {
        let rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| r.agent == agent).collect();
        let tasks: usize = rows.iter().map(|r| r.tasks).sum();
        let wins: usize = rows.iter().map(|r| r.successes).sum();
        (tasks > 0).then(|| wins as f64 / tasks as f64)
    }

    pub fn agent_rows(&self, agent: &str) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| r.agent == agent).collect()
    }
}

fn pct(initial: u64, learned: u64) -> Option<f64> {
    let total = initial + learned;
    (total > 0).then(|| 100.0 * initial as f64 / total as f64)
}

type Timeline = (AppVersion, Vec<(AppVersion, Vec<TaskSpec>)>);

/// App versions and refreshed tasks per iteration.
fn timeline(scenario: &Scenario, iterations: usize) -> Result<Timeline, SimError> {
    let base = generate_app(&scenario.app, scenario.app_seed)?;
    let tasks = generate_tasks(&base, &scenario.tasks)?;
    let mut app = base.clone();
    let mut out = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let ops: Vec<DriftOp> =
            scenario.drift.iter().filter(|d| d.before_iteration == it).flat_map(|d| d.ops.iter().copied()).collect();
        if !ops.is_empty() {
            app = apply_drift(&app, &ops, scenario.drift_seed(it))?;
        }
        let mut current = tasks.clone();
        for t in &mut current {
            t.refresh(&app)?;
        }
        out.push((app.clone(), current));
    }
    Ok((base, out))
}

fn initial_bank(scenario: &Scenario, base: &AppVersion) -> Result<MemoryBank, SimError> {
    match &scenario.bank {
        BankSource::Empty => Ok(MemoryBank::default()),
        BankSource::EvaluationTasks => {
            build_initial_bank(base, &generate_tasks(base, &scenario.tasks)?, &scenario.evolution)
        }
        BankSource::Tasks { spec } => build_initial_bank(base, &generate_tasks(base, spec)?, &scenario.evolution),
    }
}

type AgentRun = (Vec<MetricsRow>, Vec<EpisodeRecord>);

fn run_agent(
    scenario: &Scenario,
    agent: &AgentConfig,
    bank: &MemoryBank,
    timeline: &[(AppVersion, Vec<TaskSpec>)],
) -> Result<AgentRun, SimError> {
    let mut bank = bank.clone();
    let boundary = OriginBoundary { procedural: bank.procedural.next_seq(), stationary: bank.stationary.next_seq() };
    let mut buffer = ClusterBuffer::new(scenario.evolution.buffer_capacity);
    let mut rows = Vec::new();
    let mut episodes = Vec::new();
    for (iteration, (app, tasks)) in timeline.iter().enumerate() {
        let mut results = Vec::with_capacity(tasks.len());
        let mut prov = Provenance::default();
        for (task_index, task) in tasks.iter().enumerate() {
            let memory = EpisodeMemory {
                procedural: agent.procedural.then_some(&mut bank.procedural),
                stationary: agent.stationary.then_some(&mut bank.stationary),
                boundary,
            };
            let r = run_episode(app, task, agent, memory, scenario.budget)?;
            prov.add(&r.provenance);
            episodes.push(EpisodeRecord {
                iteration,
                agent: agent.name.clone(),
                task_index,
                success: r.success,
                steps_used: r.steps_used,
                plan: r.plan.clone(),
                transcript: r.transcript.clone(),
                provenance: r.provenance,
            });
            results.push(r);
        }
        // Content updates land after the iteration, so every episode in an
        // iteration sees the same memory contents.
        if agent.evolve {
            for r in &results {
                evolve_after_episode(
                    r,
                    agent.procedural.then_some(&mut bank.procedural),
                    agent.stationary.then_some(&mut bank.stationary),
                    &mut buffer,
                    &scenario.evolution,
                )?;
            }
        }
        let successes = results.iter().filter(|r| r.success).count();
        rows.push(MetricsRow {
            iteration,
            version: app.version,
            agent: agent.name.clone(),
            tasks: tasks.len(),
            successes,
            success_rate: if tasks.is_empty() { 0.0 } else { successes as f64 / tasks.len() as f64 },
            proc_old_pct: if agent.procedural { pct(prov.proc_initial, prov.proc_learned) } else { None },
            stat_old_pct: if agent.stationary { pct(prov.stat_initial, prov.stat_learned) } else { None },
        });
    }
    Ok((rows, episodes))
}

/// Runs every agent through `iterations` iterations. Agents run on
/// independent copies of the initial bank, one thread each.
pub fn evaluate_suite(scenario: &Scenario, iterations: usize) -> Result<SuiteOutput, SimError> {
    scenario.validate()?;
    if iterations == 0 {
        return Err(SimError::InvalidConfig("iterations must be at least 1".into()));
    }
    let (base, timeline) = timeline(scenario, iterations)?;
    let bank = initial_bank(scenario, &base)?;
    let runs: Vec<Result<AgentRun, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenario
            .agents
            .iter()
            .map(|agent| {
                let (bank, timeline) = (&bank, &timeline);
                s.spawn(move || run_agent(scenario, agent, bank, timeline))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("agent thread panicked")).collect()
    });
    let mut per_agent = Vec::with_capacity(runs.len());
    for r in runs {
        per_agent.push(r?);
    }
    let mut out = SuiteOutput::default();
    for it in 0..iterations {
        for (rows, _) in &per_agent {
            out.rows.push(rows[it].clone());
        }
    }
    for (_, episodes) in per_agent {
        out.episodes.extend(episodes);
    }
    Ok(out)
}

/// Renders rows as CSV with a header line. Absent percentages are empty cells.
pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driftsim::presets;

    #[test]
    fn memoryless_agents_report_no_percentages() {
        let mut sc = presets::ablation_scenario(0.3);
        sc.agents.retain(|a| !a.procedural && !a.stationary);
        let out = evaluate_suite(&sc, 2).unwrap();
        assert!(out.rows.iter().all(|r| r.proc_old_pct.is_none() && r.stat_old_pct.is_none()));
    }

    #[test]
    fn first_iteration_draws_only_on_the_initial_bank() {
        let sc = presets::ablation_scenario(0.3);
        let out = evaluate_suite(&sc, 1).unwrap();
        let both = &out.agent_rows("both")[0];
        assert_eq!(both.proc_old_pct, Some(100.0));
        assert_eq!(both.stat_old_pct, Some(100.0));
    }

    #[test]
    fn csv_has_header_and_blank_cells() {
        let rows = vec![MetricsRow {
            iteration: 0,
            version: 0,
            agent: "none".into(),
            tasks: 2,
            successes: 1,
            success_rate: 0.5,
            proc_old_pct: None,
            stat_old_pct: Some(100.0),
        }];
        let csv = metrics_csv(&rows).unwrap();
        assert_eq!(
            csv,
            "iteration,version,agent,tasks,successes,success_rate,proc_old_pct,stat_old_pct\n0,0,none,2,1,0.5,,100.0\n"
        );
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut sc = presets::ablation_scenario(0.3);
        sc.budget = 0;
        assert_eq!(evaluate_suite(&sc, 1), Err(SimError::InvalidBudget));
        let mut sc = presets::ablation_scenario(0.3);
        sc.agents.clear();
        assert!(evaluate_suite(&sc, 1).is_err());
        assert!(evaluate_suite(&presets::ablation_scenario(0.3), 0).is_err());
    }
}
