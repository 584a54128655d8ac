//! Memory evolution from successful episodes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::agent::{EpisodeResult, Provenance, TranscriptStep};
use super::app::{AppVersion, TaskSpec};
use super::SimError;
use crate::cluster::{cluster_instructions, DEFAULT_TAU};
use crate::embed::{HashedBagOfWords, SharedProvider, DEFAULT_DIM};
use crate::memstore::MemoryStore;
use crate::procedural::{abstract_workflows, record_workflow, Action, Trajectory, Workflow};
use crate::stationary::{
    upsert_element, PatchDescriptor, StationaryStore, Thresholds, UpsertOutcome, DEFAULT_THETA_DUP, DEFAULT_THETA_MATCH,
};

pub const DEFAULT_BUFFER_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Instruction similarity threshold for clustering buffered trajectories.
    pub tau: f64,
    pub theta_match: f64,
    pub theta_dup: f64,
    pub buffer_capacity: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            theta_match: DEFAULT_THETA_MATCH,
            theta_dup: DEFAULT_THETA_DUP,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
        }
    }
}

impl EvolutionConfig {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds { theta_match: self.theta_match, theta_dup: self.theta_dup }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvolutionReport {
    pub workflows_recorded: usize,
    pub upserts: Vec<UpsertOutcome>,
}

/// Recent successful trajectories waiting to form a cluster.
#[derive(Debug, Clone)]
pub struct ClusterBuffer {
    items: VecDeque<(u64, Trajectory)>,
    next_id: u64,
    capacity: usize,
}

impl ClusterBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { items: VecDeque::new(), next_id: 0, capacity: capacity.max(2) }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Buffers `trajectory`, then looks for a maximal clique (at `tau`) that
    /// contains it and has at least two members sharing its action signature.
    /// Those members are abstracted and leave the buffer.
    pub fn push(&mut self, trajectory: Trajectory, tau: f64) -> Result<Vec<Workflow>, SimError> {
        let new_id = self.next_id;
        self.next_id += 1;
        self.items.push_back((new_id, trajectory));
        if self.items.len() > self.capacity {
            self.items.pop_front();
        }
        let key = |id: u64| format!("{id:020}");
        let texts: Vec<(String, String)> = self.items.iter().map(|(id, t)| (key(*id), t.instruction.clone())).collect();
        let new_key = key(new_id);
        let cliques = cluster_instructions(&texts, &HashedBagOfWords::default(), tau)?;
        let newest = &self.items.back().expect("just pushed").1;
        for clique in cliques.iter().filter(|c| c.len() >= 2 && c.member_ids.contains(&new_key)) {
            let members: Vec<u64> = self
                .items
                .iter()
                .filter(|(id, t)| clique.member_ids.contains(&key(*id)) && t.signature() == newest.signature())
                .map(|(id, _)| *id)
                .collect();
            if members.len() < 2 {
                continue;
            }
            let group: Vec<Trajectory> =
                self.items.iter().filter(|(id, _)| members.contains(id)).map(|(_, t)| t.clone()).collect();
            let workflows = abstract_workflows(&group)?;
            if !workflows.is_empty() {
                self.items.retain(|(id, _)| !members.contains(id));
                return Ok(workflows);
            }
        }
        Ok(Vec::new())
    }
}

/// Feeds a successful episode into memory. Failed episodes change nothing.
pub fn evolve_after_episode(
    result: &EpisodeResult,
    procedural: Option<&mut MemoryStore<Workflow>>,
    stationary: Option<&mut StationaryStore>,
    buffer: &mut ClusterBuffer,
    cfg: &EvolutionConfig,
) -> Result<EvolutionReport, SimError> {
    let mut report = EvolutionReport::default();
    if !result.success {
        return Ok(report);
    }
    if let Some(store) = procedural {
        for wf in buffer.push(result.trajectory.clone(), cfg.tau)? {
            record_workflow(store, wf)?;
            report.workflows_recorded += 1;
        }
    }
    if let Some(store) = stationary {
        for (description, patch) in &result.observations {
            report.upserts.push(upsert_element(store, description, patch, cfg.thresholds())?.0);
        }
    }
    Ok(report)
}

/// A shortest-path demonstration of `task` on `app`.
pub fn oracle_trajectory(app: &AppVersion, task: &TaskSpec) -> Result<EpisodeResult, SimError> {
    let path = app.shortest_path(task.goal_screen).ok_or(SimError::Unreachable(task.goal_screen))?;
    let goal = &app.screens[&task.goal_screen];
    let leaf = goal
        .elements
        .iter()
        .position(|e| e.function_label == task.target_label)
        .ok_or_else(|| SimError::UnknownTarget(task.target_label.clone()))?;
    let mut transcript = Vec::new();
    let mut actions = Vec::new();
    let mut observations = Vec::new();
    for (sid, idx) in path.into_iter().chain([(task.goal_screen, leaf)]) {
        let el = &app.screens[&sid].elements[idx];
        transcript.push(TranscriptStep { screen: sid, element_id: el.id.clone(), score: 1.0 });
        actions.push(Action::click(el.description()));
        observations.push((el.description(), PatchDescriptor::new(el.features.clone())?));
    }
    for (role, value) in &task.arg_bindings {
        actions.push(Action::type_text("", value.clone(), role.clone()));
    }
    Ok(EpisodeResult {
        success: true,
        steps_used: transcript.len(),
        transcript,
        provenance: Provenance::default(),
        plan: Vec::new(),
        trajectory: Trajectory { instruction: task.intent.clone(), actions, success: true },
        observations,
    })
}

/// Both memories, each with its own counters.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    pub procedural: MemoryStore<Workflow>,
    pub stationary: StationaryStore,
}

impl MemoryBank {
    pub fn new(provider: SharedProvider) -> Self {
        Self { procedural: MemoryStore::new(provider.clone()), stationary: MemoryStore::new(provider) }
    }
}

impl Default for MemoryBank {
    fn default() -> Self {
        Self::new(HashedBagOfWords::shared(DEFAULT_DIM))
    }
}

/// Builds a bank from oracle demonstrations of `tasks` on `app`, through the
/// same evolution path agents use.
pub fn build_initial_bank(app: &AppVersion, tasks: &[TaskSpec], cfg: &EvolutionConfig) -> Result<MemoryBank, SimError> {
    let mut bank = MemoryBank::default();
    let mut buffer = ClusterBuffer::new(cfg.buffer_capacity);
    for task in tasks {
        let demo = oracle_trajectory(app, task)?;
        evolve_after_episode(&demo, Some(&mut bank.procedural), Some(&mut bank.stationary), &mut buffer, cfg)?;
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driftsim::app::{generate_app, generate_tasks, AppSpec, TaskGenSpec};

    fn fixture() -> (AppVersion, Vec<TaskSpec>) {
        let app = generate_app(&AppSpec::default(), 5).unwrap();
        let tasks =
            generate_tasks(&app, &TaskGenSpec { categories: 3, per_category: 2, ..Default::default() }).unwrap();
        (app, tasks)
    }

    fn cfg() -> EvolutionConfig {
        EvolutionConfig { tau: 0.4, ..Default::default() }
    }

    #[test]
    fn failed_episode_is_a_no_op() {
        let (app, tasks) = fixture();
        let mut demo = oracle_trajectory(&app, &tasks[0]).unwrap();
        demo.success = false;
        let mut bank = MemoryBank::default();
        let mut buffer = ClusterBuffer::new(8);
        let r =
            evolve_after_episode(&demo, Some(&mut bank.procedural), Some(&mut bank.stationary), &mut buffer, &cfg())
                .unwrap();
        assert_eq!(r, EvolutionReport::default());
        assert!(bank.procedural.is_empty() && bank.stationary.is_empty() && buffer.is_empty());
    }

    #[test]
    fn two_aligned_successes_record_one_workflow() {
        let (app, tasks) = fixture();
        let mut bank = MemoryBank::default();
        let mut buffer = ClusterBuffer::new(8);
        let first = oracle_trajectory(&app, &tasks[0]).unwrap();
        let second = oracle_trajectory(&app, &tasks[1]).unwrap();
        let clicks = first.observations.len();
        let r1 =
            evolve_after_episode(&first, Some(&mut bank.procedural), Some(&mut bank.stationary), &mut buffer, &cfg())
                .unwrap();
        assert_eq!(r1.workflows_recorded, 0);
        assert_eq!(r1.upserts.len(), clicks);
        let r2 =
            evolve_after_episode(&second, Some(&mut bank.procedural), Some(&mut bank.stationary), &mut buffer, &cfg())
                .unwrap();
        assert_eq!(r2.workflows_recorded, 1);
        assert!(buffer.is_empty());
        // Same elements, identical features: every second upsert is a duplicate.
        assert!(r2.upserts.iter().all(|o| *o == UpsertOutcome::Discarded));
        let wf = &bank.procedural.entries()[0].payload;
        assert!(wf.placeholders().contains("Query"));
        assert!(wf.name().ends_with("[Query]"));
    }

    #[test]
    fn upserts_never_exceed_clicks() {
        let (app, tasks) = fixture();
        let mut bank = build_initial_bank(&app, &tasks, &cfg()).unwrap();
        let demo = oracle_trajectory(&app, &tasks[2]).unwrap();
        let before = bank.stationary.len();
        let mut buffer = ClusterBuffer::new(8);
        let r = evolve_after_episode(&demo, None, Some(&mut bank.stationary), &mut buffer, &cfg()).unwrap();
        assert!(r.upserts.len() <= demo.observations.len());
        assert_eq!(bank.stationary.len(), before);
        assert_eq!(bank.procedural.len(), 3);
    }
}
