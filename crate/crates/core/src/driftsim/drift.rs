//! Appearance and workflow drift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::app::{AppVersion, ScreenId};
use super::vocab::{self, normalize, synonym_table};
use super::SimError;

/// Workflow drift retries a whole batch of moves this many times before
/// giving up.
pub const MAX_DRIFT_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftOp {
    /// Feature noise of scale `sigma`; each display text is renamed with
    /// probability `min(1, sigma)`.
    Appearance { sigma: f64 },
    /// Relocates nav elements or interposes pass-through screens.
    Workflow { moves: usize },
}

impl DriftOp {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            DriftOp::Appearance { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(SimError::InvalidConfig(format!("appearance sigma {sigma} must be finite and >= 0")))
            }
            DriftOp::Workflow { moves: 0 } => Err(SimError::InvalidConfig("workflow drift needs moves >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// Applies `ops` in order and bumps the version once.
pub fn apply_drift(app: &AppVersion, ops: &[DriftOp], seed: u64) -> Result<AppVersion, SimError> {
    for op in ops {
        op.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = app.clone();
    for op in ops {
        match *op {
            DriftOp::Appearance { sigma } => appearance(&mut next, sigma, &mut rng),
            DriftOp::Workflow { moves } => next = workflow(&next, moves, &mut rng)?,
        }
    }
    next.version += 1;
    Ok(next)
}

fn appearance(app: &mut AppVersion, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let dim = app.feature_dim;
    let rename_p = sigma.min(1.0);
    for screen in app.screens.values_mut() {
        for e in &mut screen.elements {
            let n = vocab::noise(rng, dim);
            e.features = normalize(e.features.iter().zip(&n).map(|(f, z)| f + sigma * z).collect());
            if rng.random_bool(rename_p) {
                let options: Vec<String> = synonym_table(&e.function_label, &e.canonical_text)
                    .into_iter()
                    .filter(|t| *t != e.display_text)
                    .collect();
                e.display_text = options[rng.random_range(0..options.len())].clone();
            }
        }
    }
}

fn workflow(app: &AppVersion, moves: usize, rng: &mut ChaCha8Rng) -> Result<AppVersion, SimError> {
    if app.tree_edges().is_empty() {
        return Err(SimError::DegenerateSpec("app has no navigation edges to rewire".into()));
    }
    for _ in 0..MAX_DRIFT_ATTEMPTS {
        let mut next = app.clone();
        let mut ok = true;
        for _ in 0..moves {
            let done = if rng.random_bool(0.5) {
                relocate(&mut next, rng) || interpose(&mut next, rng)
            } else {
                interpose(&mut next, rng)
            };
            ok &= done;
        }
        if ok && next.is_navigable() {
            return Ok(next);
        }
    }
    Err(SimError::ReachabilityLost { attempts: MAX_DRIFT_ATTEMPTS })
}

/// Moves one nav element to a screen outside the subtree it leads to.
fn relocate(app: &mut AppVersion, rng: &mut ChaCha8Rng) -> bool {
    let mut options = Vec::new();
    for (parent, idx, child) in app.tree_edges() {
        if app.screens[&parent].elements.len() < 2 {
            continue;
        }
        let sub = app.subtree(child);
        for &dest in app.screens.keys() {
            if dest != parent && !sub.contains(&dest) {
                options.push((parent, idx, dest));
            }
        }
    }
    if options.is_empty() {
        return false;
    }
    let (parent, idx, dest) = options[rng.random_range(0..options.len())];
    let el = app.screens.get_mut(&parent).expect("edge source").elements.remove(idx);
    let target = app.screens.get_mut(&dest).expect("existing screen");
    let at = rng.random_range(0..=target.elements.len());
    target.elements.insert(at, el);
    app.screens.get_mut(&parent).expect("edge source").relayout();
    app.screens.get_mut(&dest).expect("existing screen").relayout();
    true
}

/// Inserts a pass-through screen in front of a tree edge's destination.
fn interpose(app: &mut AppVersion, rng: &mut ChaCha8Rng) -> bool {
    let edges = app.tree_edges();
    if edges.is_empty() {
        return false;
    }
    let (parent, idx, child) = edges[rng.random_range(0..edges.len())];
    let title = app.screens[&child].title.clone();
    let id: ScreenId = app.fresh_screen_id();
    let mut elements = vec![
        app.make_element(&format!("continue to {title}"), "Continue", Some(child), rng),
        app.make_element(vocab::HOME_LABEL, vocab::HOME_TEXT, Some(app.entry_screen), rng),
    ];
    if rng.random_bool(0.5) {
        elements.swap(0, 1);
    }
    let mut screen = super::app::Screen { id, title: format!("{title} intro"), elements };
    screen.relayout();
    app.screens.insert(id, screen);
    app.screens.get_mut(&parent).expect("edge source").elements[idx].nav_target = Some(id);
    true
}
