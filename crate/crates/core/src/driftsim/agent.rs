//! Scripted planner and actor.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::app::{AppVersion, Screen, ScreenId, TaskSpec};
use super::SimError;
use crate::embed::{cosine, embed_text, fnv1a64, EmbeddingVector};
use crate::memstore::{MemoryEntry, MemoryStore, RetrievalConfig};
use crate::procedural::{instantiate, Action, Trajectory, Workflow, CLICK_PREFIX};
use crate::stationary::{
    grounding_hint, retrieve_elements, ElementHit, PatchDescriptor, ScreenElement, StationaryError, StationaryStore,
    DEFAULT_K_ICONS,
};

/// Agent policy knobs. Which memories an agent uses is decided by the
/// caller; `procedural` and `stationary` tell a suite what to hand over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub name: String,
    pub procedural: bool,
    pub stationary: bool,
    /// Weight of the stationary grounding bonus.
    pub lambda: f64,
    pub k_icons: usize,
    /// Feature cosine below which a retrieved patch grounds nothing.
    pub grounding_floor: f64,
    /// Score a plan step's best element needs to be clicked directly.
    pub step_threshold: f64,
    /// Discount on scores seen one screen ahead.
    pub lookahead_gamma: f64,
    pub proc_n: usize,
    pub proc_k: usize,
    pub proc_min_similarity: Option<f64>,
    pub stat_n: usize,
    pub stat_k: usize,
    pub stat_min_similarity: Option<f64>,
    pub variants_per_record: usize,
    /// Whether successful episodes feed back into memory.
    pub evolve: bool,
    /// Below this score an intent-driven choice is a seeded guess among the
    /// unused elements rather than the first best one.
    pub guess_below: f64,
    /// Mixed with each task's intent to seed its guesses.
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            name: "agent".into(),
            procedural: false,
            stationary: false,
            lambda: 1.0,
            k_icons: DEFAULT_K_ICONS,
            grounding_floor: 0.6,
            step_threshold: 0.6,
            lookahead_gamma: 0.9,
            proc_n: 5,
            proc_k: 3,
            proc_min_similarity: Some(0.4),
            stat_n: 4,
            stat_k: 2,
            stat_min_similarity: Some(0.6),
            variants_per_record: 8,
            evolve: true,
            guess_below: 0.3,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn named(name: &str, procedural: bool, stationary: bool) -> Self {
        Self { name: name.into(), procedural, stationary, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(format!("agent {}: {m}", self.name)));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if self.k_icons == 0 {
            return bad("k_icons must be >= 1");
        }
        if !(self.lookahead_gamma.is_finite() && (0.0..=1.0).contains(&self.lookahead_gamma)) {
            return bad("lookahead_gamma must lie in [0, 1]");
        }
        if !self.step_threshold.is_finite() || !self.grounding_floor.is_finite() {
            return bad("thresholds must be finite");
        }
        if self.variants_per_record == 0 {
            return bad("variants_per_record must be >= 1");
        }
        self.proc_retrieval()?;
        self.stat_retrieval()?;
        Ok(())
    }

    pub fn proc_retrieval(&self) -> Result<RetrievalConfig, SimError> {
        with_floor(RetrievalConfig::new(self.proc_n, self.proc_k)?, self.proc_min_similarity)
    }

    pub fn stat_retrieval(&self) -> Result<RetrievalConfig, SimError> {
        with_floor(RetrievalConfig::new(self.stat_n, self.stat_k)?, self.stat_min_similarity)
    }
}

fn with_floor(cfg: RetrievalConfig, floor: Option<f64>) -> Result<RetrievalConfig, SimError> {
    let cfg = match floor {
        Some(f) => cfg.with_min_similarity(f),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Entries created before these sequence numbers count as initial bank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginBoundary {
    pub procedural: u64,
    pub stationary: u64,
}

pub struct EpisodeMemory<'a> {
    pub procedural: Option<&'a mut MemoryStore<Workflow>>,
    pub stationary: Option<&'a mut StationaryStore>,
    pub boundary: OriginBoundary,
}

impl EpisodeMemory<'_> {
    pub fn none() -> Self {
        EpisodeMemory { procedural: None, stationary: None, boundary: OriginBoundary::default() }
    }
}

/// Retrieved entries by origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub proc_initial: u64,
    pub proc_learned: u64,
    pub stat_initial: u64,
    pub stat_learned: u64,
}

impl Provenance {
    pub fn add(&mut self, other: &Provenance) {
        self.proc_initial += other.proc_initial;
        self.proc_learned += other.proc_learned;
        self.stat_initial += other.stat_initial;
        self.stat_learned += other.stat_learned;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptStep {
    pub screen: ScreenId,
    pub element_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps_used: usize,
    pub transcript: Vec<TranscriptStep>,
    pub provenance: Provenance,
    /// Instantiated plan steps, empty without procedural memory.
    pub plan: Vec<String>,
    /// Clicks by element description, plus the typed arguments on success.
    pub trajectory: Trajectory,
    /// Description and descriptor of every clicked element, in click order.
    pub observations: Vec<(String, PatchDescriptor)>,
}

struct Scorer<'a> {
    agent: &'a AgentConfig,
    query: Option<EmbeddingVector>,
    hits: Vec<ElementHit>,
}

impl Scorer<'_> {
    fn score(&self, screen: &Screen) -> Result<Vec<f64>, SimError> {
        let mut scores: Vec<f64> = screen
            .elements
            .iter()
            .map(|e| match (&self.query, embed_text(&e.display_text)) {
                (Some(q), Ok(d)) => cosine(q, &d).unwrap_or(0.0),
                _ => 0.0,
            })
            .collect();
        if self.hits.is_empty() || screen.elements.is_empty() {
            return Ok(scores);
        }
        let view: Vec<ScreenElement> = screen.elements.iter().map(|e| e.as_screen_element()).collect();
        let mut bonus = vec![0.0f64; view.len()];
        for hit in &self.hits {
            match grounding_hint(&view, &hit.descriptor, self.agent.k_icons, self.agent.grounding_floor) {
                Ok(h) => {
                    let i = view.iter().position(|v| v.id == h.anchor_id).expect("anchor on screen");
                    bonus[i] = bonus[i].max(self.agent.lambda * h.anchor_score);
                }
                Err(StationaryError::NoMatch { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        scores.iter_mut().zip(bonus).for_each(|(s, b)| *s += b);
        Ok(scores)
    }

    /// Nav elements take the discounted best score of the screen they open.
    fn lookahead(&self, app: &AppVersion, screen: &Screen) -> Result<Vec<f64>, SimError> {
        let mut scores = self.score(screen)?;
        for (s, e) in scores.iter_mut().zip(&screen.elements) {
            if let Some(t) = e.nav_target.filter(|t| *t != screen.id) {
                let ahead = self.score(&app.screens[&t])?;
                let best = ahead.into_iter().fold(0.0f64, f64::max);
                *s = s.max(self.agent.lookahead_gamma * best);
            }
        }
        Ok(scores)
    }
}

fn argmax(scores: &[f64], allowed: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
    scores.iter().enumerate().filter(|(i, _)| allowed(*i)).fold(None, |best, (i, &s)| match best {
        Some((_, b)) if b >= s => best,
        _ => Some((i, s)),
    })
}

/// The retrieved workflow whose name best matches the intent; earlier
/// retrieval rank wins ties.
fn pick_workflow<'w>(intent: &str, entries: &'w [MemoryEntry<Workflow>]) -> Option<&'w Workflow> {
    let q = embed_text(intent).ok();
    let sims: Vec<f64> = entries
        .iter()
        .map(|e| match &q {
            Some(q) => cosine(q, &e.key_embedding).unwrap_or(0.0),
            None => 0.0,
        })
        .collect();
    argmax(&sims, |_| true).map(|(i, _)| &entries[i].payload)
}

fn is_subsequence(needle: &[String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Runs one task attempt.
///
/// The planner instantiates the retrieved workflow whose name best matches
/// the intent; its click steps are
/// followed in order. A step is clicked when some element scores at least
/// `step_threshold`, otherwise the agent looks one screen ahead for it, and
/// a step found nowhere is skipped. Without a plan, or once it runs out, the
/// agent looks ahead for the intent itself, guessing when nothing scores. Clicking an element without a nav
/// target ends the episode.
pub fn run_episode(
    app: &AppVersion,
    task: &TaskSpec,
    agent: &AgentConfig,
    mut memory: EpisodeMemory<'_>,
    budget: usize,
) -> Result<EpisodeResult, SimError> {
    if budget == 0 {
        return Err(SimError::InvalidBudget);
    }
    agent.validate()?;
    let mut provenance = Provenance::default();
    let bindings: HashMap<String, String> = task.arg_bindings.iter().map(|(k, v)| (k.clone(), v.clone())).collect();

    let mut plan = Vec::new();
    if let Some(store) = memory.procedural.as_deref_mut() {
        let entries = store.retrieve(&task.intent, &agent.proc_retrieval()?)?;
        for e in &entries {
            if e.created_seq < memory.boundary.procedural {
                provenance.proc_initial += 1;
            } else {
                provenance.proc_learned += 1;
            }
        }
        if let Some(top) = pick_workflow(&task.intent, &entries) {
            plan = instantiate(top, &bindings).unwrap_or_default();
        }
    }
    let targets: Vec<String> = plan.iter().filter_map(|s| s.strip_prefix(CLICK_PREFIX)).map(str::to_string).collect();

    let stat_cfg = agent.stat_retrieval()?;
    let mut guesses = ChaCha8Rng::seed_from_u64(agent.seed ^ fnv1a64(task.intent.as_bytes()));
    let mut screen_id = app.entry_screen;
    let mut step = 0;
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut clicked_labels = Vec::new();
    let mut transcript = Vec::new();
    let mut actions = Vec::new();
    let mut observations = Vec::new();
    let mut success = false;

    while transcript.len() < budget {
        let screen = &app.screens[&screen_id];
        let from_plan = step < targets.len();
        let query = if from_plan { targets[step].as_str() } else { task.intent.as_str() };
        let hits = match memory.stationary.as_deref_mut() {
            Some(store) => {
                let hits = retrieve_elements(store, query, &stat_cfg, agent.variants_per_record)?;
                for h in &hits {
                    if h.variant_seq < memory.boundary.stationary {
                        provenance.stat_initial += 1;
                    } else {
                        provenance.stat_learned += 1;
                    }
                }
                hits
            }
            None => Vec::new(),
        };
        let scorer = Scorer { agent, query: embed_text(query).ok(), hits };
        let free = |i: usize| !used.contains(&screen.elements[i].id);

        let mut choice = None;
        if from_plan {
            let direct = scorer.score(screen)?;
            match argmax(&direct, free) {
                Some((i, s)) if s >= agent.step_threshold => choice = Some((i, s, true)),
                _ => {
                    let ahead = scorer.lookahead(app, screen)?;
                    match argmax(&ahead, free) {
                        Some((i, s)) if s >= agent.lookahead_gamma * agent.step_threshold => {
                            choice = Some((i, s, false))
                        }
                        _ => {
                            step += 1;
                            continue;
                        }
                    }
                }
            }
        } else if let Some((i, s)) = argmax(&scorer.lookahead(app, screen)?, free) {
            choice = Some((i, s, false));
            if s < agent.guess_below {
                let mut open: Vec<usize> = (0..screen.elements.len())
                    .filter(|&j| free(j) && screen.elements[j].nav_target.is_some())
                    .collect();
                if open.is_empty() {
                    open = (0..screen.elements.len()).filter(|&j| free(j)).collect();
                }
                let j = open[guesses.random_range(0..open.len())];
                choice = Some((j, s, false));
            }
        }
        let Some((idx, score, advance)) = choice else { break };

        let el = &screen.elements[idx];
        used.insert(el.id.clone());
        transcript.push(TranscriptStep { screen: screen_id, element_id: el.id.clone(), score });
        clicked_labels.push(el.function_label.clone());
        actions.push(Action::click(el.description()));
        observations.push((el.description(), PatchDescriptor::new(el.features.clone())?));
        if advance {
            step += 1;
        }
        match el.nav_target {
            Some(t) => screen_id = t,
            None => {
                success = screen_id == task.goal_screen
                    && el.function_label == task.target_label
                    && is_subsequence(&task.required_clicks, &clicked_labels);
                break;
            }
        }
    }

    if success {
        for (role, value) in &task.arg_bindings {
            actions.push(Action::type_text("", value.clone(), role.clone()));
        }
    }
    Ok(EpisodeResult {
        success,
        steps_used: transcript.len(),
        transcript,
        provenance,
        plan,
        trajectory: Trajectory { instruction: task.intent.clone(), actions, success },
        observations,
    })
}
