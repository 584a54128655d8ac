//! Synthetic app model: screens, elements, navigation and tasks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{self, capitalize, feature_anchor, normalize, HOME_LABEL, HOME_TEXT};
use super::SimError;
use crate::stationary::{Rect, ScreenElement};

/// Amplitude of per-element noise around a label's feature anchor.
const ELEMENT_JITTER: f64 = 0.15;

const CELL_W: f64 = 540.0;
const CELL_H: f64 = 220.0;
const TOP_MARGIN: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScreenId(pub u32);

impl fmt::Display for ScreenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UiElement {
    pub id: String,
    /// Stable function; agents never observe it.
    pub function_label: String,
    /// Text the label showed before any redesign.
    pub canonical_text: String,
    pub display_text: String,
    pub features: Vec<f64>,
    pub bbox: Rect,
    pub nav_target: Option<ScreenId>,
}

impl UiElement {
    pub fn as_screen_element(&self) -> ScreenElement {
        ScreenElement { id: self.id.clone(), bbox: self.bbox, features: self.features.clone() }
    }

    /// What an annotator reports the element does. Trajectories and element
    /// memory both refer to clicked elements by this text.
    pub fn description(&self) -> String {
        self.function_label.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screen {
    pub id: ScreenId,
    pub title: String,
    pub elements: Vec<UiElement>,
}

impl Screen {
    pub(crate) fn relayout(&mut self) {
        for (i, e) in self.elements.iter_mut().enumerate() {
            let col = (i % 2) as f64;
            let row = (i / 2) as f64;
            e.bbox = Rect::new(col * CELL_W + 20.0, TOP_MARGIN + row * CELL_H, CELL_W - 40.0, CELL_H - 20.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub screens: usize,
    pub elements_per_screen: usize,
    pub feature_dim: usize,
}

impl Default for AppSpec {
    fn default() -> Self {
        Self { screens: 8, elements_per_screen: 6, feature_dim: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppVersion {
    pub version: u32,
    pub screens: BTreeMap<ScreenId, Screen>,
    pub entry_screen: ScreenId,
    pub rng_seed: u64,
    pub feature_dim: usize,
    pub(crate) next_screen: u32,
    pub(crate) next_element: u32,
}

impl AppVersion {
    pub fn screen(&self, id: ScreenId) -> Option<&Screen> {
        self.screens.get(&id)
    }

    pub fn elements(&self) -> impl Iterator<Item = (&Screen, &UiElement)> {
        self.screens.values().flat_map(|s| s.elements.iter().map(move |e| (s, e)))
    }

    /// Shortest click path from the entry to `goal`, as element indices per
    /// screen visited. BFS explores elements in screen order, so ties resolve
    /// deterministically.
    pub fn shortest_path(&self, goal: ScreenId) -> Option<Vec<(ScreenId, usize)>> {
        let mut prev: BTreeMap<ScreenId, (ScreenId, usize)> = BTreeMap::new();
        let mut seen = BTreeSet::from([self.entry_screen]);
        let mut queue = VecDeque::from([self.entry_screen]);
        while let Some(s) = queue.pop_front() {
            if s == goal {
                let mut path = Vec::new();
                let mut cur = goal;
                while let Some(&(p, idx)) = prev.get(&cur) {
                    path.push((p, idx));
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for (idx, e) in self.screens[&s].elements.iter().enumerate() {
                if let Some(t) = e.nav_target {
                    if seen.insert(t) {
                        prev.insert(t, (s, idx));
                        queue.push_back(t);
                    }
                }
            }
        }
        None
    }

    pub fn reachable(&self) -> BTreeSet<ScreenId> {
        let mut seen = BTreeSet::from([self.entry_screen]);
        let mut queue = VecDeque::from([self.entry_screen]);
        while let Some(s) = queue.pop_front() {
            for e in &self.screens[&s].elements {
                if let Some(t) = e.nav_target {
                    if self.screens.contains_key(&t) && seen.insert(t) {
                        queue.push_back(t);
                    }
                }
            }
        }
        seen
    }

    /// Every nav edge points at an existing screen and every screen is
    /// reachable from the entry.
    pub fn is_navigable(&self) -> bool {
        let edges_ok = self.elements().all(|(_, e)| e.nav_target.is_none_or(|t| self.screens.contains_key(&t)));
        edges_ok && self.reachable().len() == self.screens.len()
    }

    /// Sorted multiset of function labels.
    pub fn label_multiset(&self) -> Vec<String> {
        let mut v: Vec<String> = self.elements().map(|(_, e)| e.function_label.clone()).collect();
        v.sort();
        v
    }

    pub(crate) fn fresh_element_id(&mut self) -> String {
        let id = format!("e{}", self.next_element);
        self.next_element += 1;
        id
    }

    pub(crate) fn fresh_screen_id(&mut self) -> ScreenId {
        let id = ScreenId(self.next_screen);
        self.next_screen += 1;
        id
    }

    pub(crate) fn make_element(
        &mut self,
        label: &str,
        canonical: &str,
        nav_target: Option<ScreenId>,
        rng: &mut ChaCha8Rng,
    ) -> UiElement {
        let anchor = feature_anchor(label, self.feature_dim);
        let jitter = vocab::noise(rng, self.feature_dim);
        let features = normalize(anchor.iter().zip(&jitter).map(|(a, j)| a + ELEMENT_JITTER * j).collect());
        UiElement {
            id: self.fresh_element_id(),
            function_label: label.to_string(),
            canonical_text: canonical.to_string(),
            display_text: canonical.to_string(),
            features,
            bbox: Rect::new(0.0, 0.0, 1.0, 1.0),
            nav_target,
        }
    }

    /// The tree edges (nav elements not pointing back at the entry):
    /// `(parent screen, element index, child screen)`.
    pub(crate) fn tree_edges(&self) -> Vec<(ScreenId, usize, ScreenId)> {
        self.screens
            .values()
            .flat_map(|s| {
                s.elements.iter().enumerate().filter_map(move |(i, e)| match e.nav_target {
                    Some(t) if t != self.entry_screen => Some((s.id, i, t)),
                    _ => None,
                })
            })
            .collect()
    }

    /// Screens in the subtree rooted at `root` (tree edges only).
    pub(crate) fn subtree(&self, root: ScreenId) -> BTreeSet<ScreenId> {
        let mut out = BTreeSet::from([root]);
        let mut stack = vec![root];
        while let Some(s) = stack.pop() {
            for e in &self.screens[&s].elements {
                if let Some(t) = e.nav_target {
                    if t != self.entry_screen && out.insert(t) {
                        stack.push(t);
                    }
                }
            }
        }
        out
    }
}

/// Builds a deterministic app: a random navigation tree over `screens`
/// screens, home links back to the entry, and leaf action elements filling
/// the remaining slots.
pub fn generate_app(spec: &AppSpec, seed: u64) -> Result<AppVersion, SimError> {
    if spec.screens == 0 || spec.elements_per_screen == 0 || spec.feature_dim == 0 {
        return Err(SimError::DegenerateSpec("need at least one screen, element and feature".into()));
    }
    if spec.screens > 1 && spec.elements_per_screen < 2 {
        return Err(SimError::DegenerateSpec("multi-screen apps need two elements per screen".into()));
    }
    if spec.screens > vocab::SCREEN_NOUNS.len() {
        return Err(SimError::DegenerateSpec(format!("at most {} screens supported", vocab::SCREEN_NOUNS.len())));
    }
    let leaf_pairs = vocab::VERBS.len() * vocab::ITEM_NOUNS.len();
    if spec.screens * spec.elements_per_screen > leaf_pairs {
        return Err(SimError::DegenerateSpec("not enough distinct leaf labels".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nouns: Vec<&str> = vocab::SCREEN_NOUNS.to_vec();
    nouns.shuffle(&mut rng);
    let mut leaf_labels: Vec<(&str, &str)> =
        vocab::VERBS.iter().flat_map(|v| vocab::ITEM_NOUNS.iter().map(move |n| (*v, *n))).collect();
    leaf_labels.shuffle(&mut rng);
    let mut leaf_iter = leaf_labels.into_iter();

    let mut app = AppVersion {
        version: 0,
        screens: BTreeMap::new(),
        entry_screen: ScreenId(0),
        rng_seed: seed,
        feature_dim: spec.feature_dim,
        next_screen: 0,
        next_element: 0,
    };
    let ids: Vec<ScreenId> = (0..spec.screens).map(|_| app.fresh_screen_id()).collect();

    // Slots left for children: the entry keeps all, others reserve one for home.
    let mut free: Vec<usize> = (0..spec.screens)
        .map(|i| if i == 0 { spec.elements_per_screen } else { spec.elements_per_screen - 1 })
        .collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); spec.screens];
    for child in 1..spec.screens {
        let open: Vec<usize> = (0..child).filter(|&p| free[p] > 0).collect();
        if open.is_empty() {
            return Err(SimError::DegenerateSpec("not enough slots for a navigation tree".into()));
        }
        let parent = open[rng.random_range(0..open.len())];
        free[parent] -= 1;
        children[parent].push(child);
    }

    for (i, &sid) in ids.iter().enumerate() {
        let mut elements = Vec::with_capacity(spec.elements_per_screen);
        for &c in &children[i] {
            let noun = nouns[c];
            elements.push(app.make_element(&format!("open {noun}"), &capitalize(noun), Some(ids[c]), &mut rng));
        }
        if i > 0 {
            elements.push(app.make_element(HOME_LABEL, HOME_TEXT, Some(ids[0]), &mut rng));
        }
        while elements.len() < spec.elements_per_screen {
            let (verb, item) = leaf_iter.next().expect("checked above");
            let label = format!("{verb} {item}");
            let text = capitalize(&label);
            elements.push(app.make_element(&label, &text, None, &mut rng));
        }
        elements.shuffle(&mut rng);
        let title = if i == 0 { "launcher".to_string() } else { nouns[i].to_string() };
        let mut screen = Screen { id: sid, title, elements };
        screen.relayout();
        app.screens.insert(sid, screen);
    }
    Ok(app)
}

/// A task: reach `goal_screen` and click the element labelled
/// `target_label`, then type the bound arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub intent: String,
    pub goal_screen: ScreenId,
    pub target_label: String,
    /// Labels along the current shortest path, ending with `target_label`.
    pub required_clicks: Vec<String>,
    pub arg_bindings: BTreeMap<String, String>,
}

impl TaskSpec {
    /// Recomputes `required_clicks` against `app`.
    pub fn refresh(&mut self, app: &AppVersion) -> Result<(), SimError> {
        self.required_clicks = required_clicks(app, self.goal_screen, &self.target_label)?;
        Ok(())
    }

    pub fn category(&self) -> &str {
        &self.target_label
    }
}

pub(crate) fn required_clicks(app: &AppVersion, goal: ScreenId, target: &str) -> Result<Vec<String>, SimError> {
    let path = app.shortest_path(goal).ok_or(SimError::Unreachable(goal))?;
    let mut labels: Vec<String> =
        path.iter().map(|&(s, i)| app.screens[&s].elements[i].function_label.clone()).collect();
    if !app.screens[&goal].elements.iter().any(|e| e.function_label == target) {
        return Err(SimError::UnknownTarget(target.to_string()));
    }
    labels.push(target.to_string());
    Ok(labels)
}

/// How to draw tasks from an app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGenSpec {
    pub categories: usize,
    pub per_category: usize,
    pub seed: u64,
    /// Intent template with `{label}` and `{arg}` slots.
    pub template: String,
    /// Placeholder name the typed argument is bound to.
    pub arg_role: String,
}

impl Default for TaskGenSpec {
    fn default() -> Self {
        Self { categories: 10, per_category: 3, seed: 0, template: "{label} {arg}".into(), arg_role: "Query".into() }
    }
}

/// Picks `categories` distinct leaf elements off the entry screen (the entry
/// itself when it is the only screen) and binds `per_category` distinct
/// two-word arguments to each.
pub fn generate_tasks(app: &AppVersion, spec: &TaskGenSpec) -> Result<Vec<TaskSpec>, SimError> {
    let single = app.screens.len() == 1;
    let mut leaves: Vec<(ScreenId, String)> = app
        .elements()
        .filter(|(s, e)| e.nav_target.is_none() && (single || s.id != app.entry_screen))
        .map(|(s, e)| (s.id, e.function_label.clone()))
        .collect();
    if leaves.len() < spec.categories {
        return Err(SimError::DegenerateSpec(format!(
            "{} categories requested, {} leaf elements available",
            spec.categories,
            leaves.len()
        )));
    }
    let n_args = vocab::ARG_WORDS.len();
    if spec.categories * spec.per_category > n_args * (n_args - 1) {
        return Err(SimError::DegenerateSpec("too many tasks for the argument vocabulary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ app.rng_seed.rotate_left(17));
    leaves.shuffle(&mut rng);
    let mut used = BTreeSet::new();
    let mut tasks = Vec::with_capacity(spec.categories * spec.per_category);
    for (goal, label) in leaves.into_iter().take(spec.categories) {
        for _ in 0..spec.per_category {
            let arg = loop {
                let a = vocab::ARG_WORDS[rng.random_range(0..n_args)];
                let b = vocab::ARG_WORDS[rng.random_range(0..n_args)];
                if a != b && used.insert((a, b)) {
                    break format!("{a} {b}");
                }
            };
            let intent = spec.template.replace("{label}", &label).replace("{arg}", &arg);
            tasks.push(TaskSpec {
                intent,
                goal_screen: goal,
                target_label: label.clone(),
                required_clicks: required_clicks(app, goal, &label)?,
                arg_bindings: BTreeMap::from([(spec.arg_role.clone(), arg)]),
            });
        }
    }
    Ok(tasks)
}
