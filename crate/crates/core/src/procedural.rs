//! Workflow memory.
//!
//! A workflow is a named list of step templates, where variable parts are
//! written as `[UpperCamel]` placeholders. Workflows are abstracted from
//! clusters of successful trajectories by strict positional alignment and
//! stored in a [`MemoryStore`] keyed by their name.
//!
//! Steps render from actions with fixed templates:
//!
//! | kind          | step text                              |
//! |---------------|----------------------------------------|
//! | `click`       | `Tap <target>`                         |
//! | `type`        | `Type <arg> into <target>` (`Type <arg>` without target) |
//! | `scroll`      | `Scroll <arg>` (`Scroll` without argument) |
//! | `press_home`  | `Press home`                           |
//! | `press_back`  | `Press back`                           |
//! | `press_enter` | `Press enter`                          |
//! | `stop`        | `Stop <arg>` (`Stop` without argument) |

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memstore::{EntryId, MemoryStore, RetrievalConfig, StoreError};

/// Workflows need at least this many steps.
pub const MIN_WORKFLOW_STEPS: usize = 3;

/// Prefix of rendered click steps.
pub const CLICK_PREFIX: &str = "Tap ";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProceduralError {
    #[error("cannot abstract an empty cluster")]
    EmptyCluster,
    #[error("trajectory {0} was not successful")]
    UnsuccessfulTrajectory(usize),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid step template {0:?}")]
    InvalidTemplate(String),
    #[error("workflow needs at least {MIN_WORKFLOW_STEPS} steps, got {0}")]
    TooFewSteps(usize),
    #[error("workflow name is empty")]
    EmptyName,
    #[error("unbound placeholders: {}", .0.join(", "))]
    UnboundPlaceholder(Vec<String>),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Type,
    Scroll,
    PressHome,
    PressBack,
    PressEnter,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub kind: ActionKind,
    pub target_label: String,
    pub argument: String,
    pub arg_role: String,
}

impl Action {
    pub fn click(target_label: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Click,
            target_label: target_label.into(),
            argument: String::new(),
            arg_role: String::new(),
        }
    }

    pub fn type_text(
        target_label: impl Into<String>,
        argument: impl Into<String>,
        arg_role: impl Into<String>,
    ) -> Self {
        Self {
            kind: ActionKind::Type,
            target_label: target_label.into(),
            argument: argument.into(),
            arg_role: arg_role.into(),
        }
    }

    pub fn simple(kind: ActionKind) -> Self {
        Self { kind, target_label: String::new(), argument: String::new(), arg_role: String::new() }
    }

    pub fn validate(&self) -> Result<(), ProceduralError> {
        match self.kind {
            ActionKind::Click if self.target_label.is_empty() => {
                Err(ProceduralError::InvalidAction("click without target".into()))
            }
            ActionKind::Type if self.argument.is_empty() => {
                Err(ProceduralError::InvalidAction("type without text".into()))
            }
            _ => Ok(()),
        }
    }

    /// Renders the step text, using `argument` in place of the action's own.
    fn render_with(&self, argument: &str) -> String {
        match self.kind {
            ActionKind::Click => format!("{CLICK_PREFIX}{}", self.target_label),
            ActionKind::Type if self.target_label.is_empty() => format!("Type {argument}"),
            ActionKind::Type => format!("Type {argument} into {}", self.target_label),
            ActionKind::Scroll | ActionKind::Stop => {
                let verb = if self.kind == ActionKind::Scroll { "Scroll" } else { "Stop" };
                if argument.is_empty() {
                    verb.to_string()
                } else {
                    format!("{verb} {argument}")
                }
            }
            ActionKind::PressHome => "Press home".into(),
            ActionKind::PressBack => "Press back".into(),
            ActionKind::PressEnter => "Press enter".into(),
        }
    }

    pub fn render(&self) -> String {
        self.render_with(&self.argument)
    }

    fn signature(&self) -> (ActionKind, &str) {
        (self.kind, &self.target_label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub instruction: String,
    pub actions: Vec<Action>,
    pub success: bool,
}

impl Trajectory {
    /// The `(kind, target)` sequence that alignment compares.
    pub fn signature(&self) -> Vec<(ActionKind, &str)> {
        self.actions.iter().map(Action::signature).collect()
    }

    pub fn rendered_steps(&self) -> Vec<String> {
        self.actions.iter().map(Action::render).collect()
    }
}

/// A step string whose brackets all form `[UpperCamel]` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StepTemplate(String);

impl StepTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, ProceduralError> {
        let text = text.into();
        scan_placeholders(&text).ok_or_else(|| ProceduralError::InvalidTemplate(text.clone()))?;
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Placeholder names in order of appearance, without brackets.
    pub fn placeholders(&self) -> Vec<&str> {
        scan_placeholders(&self.0).unwrap_or_default().into_iter().map(|(s, e)| &self.0[s + 1..e - 1]).collect()
    }
}

impl TryFrom<String> for StepTemplate {
    type Error = ProceduralError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<StepTemplate> for String {
    fn from(t: StepTemplate) -> Self {
        t.0
    }
}

/// Is `token` a valid placeholder name (`UpperCamel`, ASCII alphanumeric)?
pub fn is_placeholder_name(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(|c| c.is_ascii_uppercase()) && chars.all(|c| c.is_ascii_alphanumeric())
}

/// Byte spans `[start, end)` of each `[Name]` in `text`, or `None` when a
/// bracket is unbalanced, nested, or encloses an invalid name.
fn scan_placeholders(text: &str) -> Option<Vec<(usize, usize)>> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '[' if open.is_some() => return None,
            '[' => open = Some(i),
            ']' => {
                let start = open.take()?;
                if !is_placeholder_name(&text[start + 1..i]) {
                    return None;
                }
                spans.push((start, i + 1));
            }
            _ => {}
        }
    }
    open.is_none().then_some(spans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workflow {
    name: String,
    steps: Vec<StepTemplate>,
}

impl Workflow {
    pub fn new(name: impl Into<String>, steps: Vec<StepTemplate>) -> Result<Self, ProceduralError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(ProceduralError::EmptyName);
        }
        if steps.len() < MIN_WORKFLOW_STEPS {
            return Err(ProceduralError::TooFewSteps(steps.len()));
        }
        Ok(Self { name, steps })
    }

    pub fn from_strs(name: &str, steps: &[&str]) -> Result<Self, ProceduralError> {
        let steps = steps.iter().map(|s| StepTemplate::new(*s)).collect::<Result<Vec<_>, _>>()?;
        Self::new(name, steps)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn steps(&self) -> &[StepTemplate] {
        &self.steps
    }

    /// Distinct placeholder names across all steps, sorted.
    pub fn placeholders(&self) -> BTreeSet<String> {
        self.steps.iter().flat_map(|s| s.placeholders().into_iter().map(str::to_string)).collect()
    }
}

/// Aligns a cluster of trajectories position by position.
///
/// Emits one workflow when every member has the same length `L >= 3` and the
/// same `(kind, target)` at each position. Positions whose arguments differ
/// across members become `[<arg_role>]` placeholders; a role reused at a
/// position with a different member-to-literal pattern gets a numeric suffix
/// so any member's literals bind back consistently. The name is the
/// lexicographically smallest member instruction with its differing literals
/// replaced by the same placeholders.
pub fn abstract_workflows(cluster: &[Trajectory]) -> Result<Vec<Workflow>, ProceduralError> {
    let first = cluster.first().ok_or(ProceduralError::EmptyCluster)?;
    for (i, t) in cluster.iter().enumerate() {
        if !t.success {
            return Err(ProceduralError::UnsuccessfulTrajectory(i));
        }
        for a in &t.actions {
            a.validate()?;
        }
    }
    let len = first.actions.len();
    if len < MIN_WORKFLOW_STEPS {
        return Ok(Vec::new());
    }
    let sig = first.signature();
    if cluster.iter().any(|t| t.signature() != sig) {
        return Ok(Vec::new());
    }

    // Name source: smallest instruction, earliest index on ties.
    let name_src = (0..cluster.len())
        .min_by(|&a, &b| cluster[a].instruction.cmp(&cluster[b].instruction).then(a.cmp(&b)))
        .expect("nonempty");

    // Placeholder name -> the per-member literal column it stands for.
    let mut assigned: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut steps = Vec::with_capacity(len);
    let mut name_replacements: Vec<(&str, String)> = Vec::new();
    for pos in 0..len {
        let column: Vec<&str> = cluster.iter().map(|t| t.actions[pos].argument.as_str()).collect();
        let action = &cluster[name_src].actions[pos];
        if column.iter().all(|a| *a == column[0]) {
            steps.push(StepTemplate::new(action.render())?);
            continue;
        }
        let base = placeholder_base(cluster, pos);
        let mut name = base.clone();
        let mut suffix = 1;
        loop {
            match assigned.get(&name) {
                None => {
                    assigned.insert(name.clone(), column.clone());
                    break;
                }
                Some(existing) if *existing == column => break,
                Some(_) => {
                    suffix += 1;
                    name = format!("{base}{suffix}");
                }
            }
        }
        let placeholder = format!("[{name}]");
        steps.push(StepTemplate::new(action.render_with(&placeholder))?);
        name_replacements.push((column[name_src], placeholder));
    }

    let workflow_name = derive_name(&cluster[name_src].instruction, name_replacements);
    Ok(vec![Workflow::new(workflow_name, steps)?])
}

/// The first valid role declared at `pos`, or `Arg<pos+1>`.
fn placeholder_base(cluster: &[Trajectory], pos: usize) -> String {
    cluster
        .iter()
        .map(|t| t.actions[pos].arg_role.as_str())
        .find(|r| is_placeholder_name(r))
        .map(str::to_string)
        .unwrap_or_else(|| format!("Arg{}", pos + 1))
}

/// Replaces literal spans in `instruction`, longest literals first.
fn derive_name(instruction: &str, mut replacements: Vec<(&str, String)>) -> String {
    replacements.retain(|(lit, _)| !lit.is_empty());
    replacements.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
    replacements.dedup_by(|a, b| a.0 == b.0);
    // Work on segments so a placeholder inserted earlier is never rewritten.
    let mut segments: Vec<(String, bool)> = vec![(instruction.to_string(), false)];
    for (lit, ph) in replacements {
        let mut next = Vec::new();
        for (seg, fixed) in segments {
            if fixed || !seg.contains(lit) {
                next.push((seg, fixed));
                continue;
            }
            let mut parts = seg.split(lit).peekable();
            while let Some(p) = parts.next() {
                if !p.is_empty() {
                    next.push((p.to_string(), false));
                }
                if parts.peek().is_some() {
                    next.push((ph.clone(), true));
                }
            }
        }
        segments = next;
    }
    segments.into_iter().map(|(s, _)| s).collect()
}

/// Stores a workflow keyed by its name. Same-named workflows coexist.
pub fn record_workflow(store: &mut MemoryStore<Workflow>, workflow: Workflow) -> Result<EntryId, ProceduralError> {
    let key = workflow.name().to_string();
    Ok(store.insert(&key, workflow)?)
}

/// Retrieves workflows for an instruction, in rank order.
pub fn retrieve_workflows(
    store: &mut MemoryStore<Workflow>,
    instruction: &str,
    cfg: &RetrievalConfig,
) -> Result<Vec<Workflow>, ProceduralError> {
    Ok(store.retrieve(instruction, cfg)?.into_iter().map(|e| e.payload).collect())
}

/// Substitutes every placeholder in a single left-to-right pass, so bound
/// values are never themselves rescanned.
pub fn instantiate(workflow: &Workflow, bindings: &HashMap<String, String>) -> Result<Vec<String>, ProceduralError> {
    let missing: Vec<String> = workflow.placeholders().into_iter().filter(|p| !bindings.contains_key(p)).collect();
    if !missing.is_empty() {
        return Err(ProceduralError::UnboundPlaceholder(missing));
    }
    Ok(workflow
        .steps()
        .iter()
        .map(|step| {
            let text = step.as_str();
            let mut out = String::with_capacity(text.len());
            let mut last = 0;
            for (s, e) in scan_placeholders(text).unwrap_or_default() {
                out.push_str(&text[last..s]);
                out.push_str(&bindings[&text[s + 1..e - 1]]);
                last = e;
            }
            out.push_str(&text[last..]);
            out
        })
        .collect())
}

/// Bindings that reproduce `member`'s literals from `workflow`'s placeholders,
/// found by matching each templated step against the member's rendering.
pub fn bindings_for_member(workflow: &Workflow, member: &Trajectory) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for (step, action) in workflow.steps().iter().zip(&member.actions) {
        for name in step.placeholders() {
            out.entry(name.to_string()).or_insert_with(|| action.argument.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedBagOfWords;

    fn install(app: &str) -> Trajectory {
        Trajectory {
            instruction: format!("install {app} from the store"),
            actions: vec![
                Action::click("open play store"),
                Action::click("search field"),
                Action::type_text("the search field", app, "AppName"),
                Action::click("install button"),
            ],
            success: true,
        }
    }

    #[test]
    fn identical_members_give_literal_workflow() {
        let t = install("Gmail");
        let wf = abstract_workflows(&[t.clone(), t.clone()]).unwrap();
        assert_eq!(wf.len(), 1);
        assert_eq!(wf[0].steps().len(), 4);
        assert!(wf[0].placeholders().is_empty());
        assert_eq!(wf, abstract_workflows(&[t]).unwrap());
    }

    #[test]
    fn differing_arguments_become_placeholders() {
        let wf = abstract_workflows(&[install("Gmail"), install("Spotify")]).unwrap();
        let w = &wf[0];
        let steps: Vec<&str> = w.steps().iter().map(|s| s.as_str()).collect();
        assert_eq!(
            steps,
            ["Tap open play store", "Tap search field", "Type [AppName] into the search field", "Tap install button"]
        );
        assert_eq!(w.name(), "install [AppName] from the store");
    }

    #[test]
    fn misaligned_lengths_give_nothing() {
        let short = Trajectory {
            instruction: "a".into(),
            actions: vec![Action::click("x"), Action::click("y"), Action::click("z")],
            success: true,
        };
        let mut long = short.clone();
        long.actions.push(Action::click("w"));
        long.actions.push(Action::click("v"));
        assert!(abstract_workflows(&[short, long]).unwrap().is_empty());
    }

    #[test]
    fn short_or_failed_clusters() {
        let t = Trajectory {
            instruction: "a".into(),
            actions: vec![Action::click("x"), Action::click("y")],
            success: true,
        };
        assert!(abstract_workflows(std::slice::from_ref(&t)).unwrap().is_empty());
        let mut failed = install("X");
        failed.success = false;
        assert_eq!(
            abstract_workflows(&[install("Y"), failed]).unwrap_err(),
            ProceduralError::UnsuccessfulTrajectory(1)
        );
        assert_eq!(abstract_workflows(&[]).unwrap_err(), ProceduralError::EmptyCluster);
    }

    #[test]
    fn reused_role_with_different_pattern_gets_suffix() {
        let mk = |a: &str, b: &str| Trajectory {
            instruction: format!("message {a} then {b}"),
            actions: vec![
                Action::click("open chat"),
                Action::type_text("to", a, "Contact"),
                Action::type_text("cc", b, "Contact"),
            ],
            success: true,
        };
        let members = [mk("ann", "bob"), mk("cat", "dan")];
        let w = &abstract_workflows(&members).unwrap()[0];
        assert_eq!(w.steps()[1].as_str(), "Type [Contact] into to");
        assert_eq!(w.steps()[2].as_str(), "Type [Contact2] into cc");
        for m in &members {
            let steps = instantiate(w, &bindings_for_member(w, m)).unwrap();
            assert_eq!(steps, m.rendered_steps());
        }
    }

    #[test]
    fn templates_reject_bad_brackets() {
        assert!(StepTemplate::new("Type [AppName] now").is_ok());
        for bad in ["Type [appName]", "Type [[A]]", "Type [A", "Type A]", "Type []", "x [A b]"] {
            assert!(StepTemplate::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn workflow_needs_three_steps() {
        assert_eq!(Workflow::from_strs("w", &["a", "b"]).unwrap_err(), ProceduralError::TooFewSteps(2));
        assert_eq!(Workflow::from_strs(" ", &["a", "b", "c"]).unwrap_err(), ProceduralError::EmptyName);
    }

    #[test]
    fn instantiate_substitutes_and_reports_missing() {
        let w = Workflow::from_strs("w", &["Open [AppName]", "Search [SearchQuery]", "Close [AppName]"]).unwrap();
        let mut b = HashMap::new();
        b.insert("AppName".to_string(), "X".to_string());
        assert_eq!(instantiate(&w, &b).unwrap_err(), ProceduralError::UnboundPlaceholder(vec!["SearchQuery".into()]));
        b.insert("SearchQuery".into(), "[AppName]".into());
        assert_eq!(instantiate(&w, &b).unwrap(), ["Open X", "Search [AppName]", "Close X"]);
        let plain = Workflow::from_strs("p", &["a", "b", "c"]).unwrap();
        assert_eq!(instantiate(&plain, &HashMap::new()).unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn store_round_trip_and_ranking() {
        let mut store = MemoryStore::new(HashedBagOfWords::shared(64));
        let w = Workflow::from_strs("send a message", &["a", "b", "c"]).unwrap();
        let a = record_workflow(&mut store, w.clone()).unwrap();
        let b = record_workflow(&mut store, w.clone()).unwrap();
        assert_ne!(a, b);
        let e = store.get(a).unwrap();
        assert_eq!((e.created_seq, e.last_access, e.count), (0, 0, 1));
        let got = retrieve_workflows(&mut store, "message", &RetrievalConfig::default()).unwrap();
        assert_eq!(got.len(), 2);
        let mut empty: MemoryStore<Workflow> = MemoryStore::new(HashedBagOfWords::shared(64));
        assert!(retrieve_workflows(&mut empty, "x", &RetrievalConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn frequent_workflow_ranks_first() {
        let mut store = MemoryStore::new(HashedBagOfWords::shared(64));
        let old = Workflow::from_strs("share a photo", &["old", "b", "c"]).unwrap();
        let new = Workflow::from_strs("share a photo", &["new", "b", "c"]).unwrap();
        record_workflow(&mut store, old).unwrap();
        let one = RetrievalConfig::new(1, 1).unwrap();
        for _ in 0..10 {
            retrieve_workflows(&mut store, "share a photo", &one).unwrap();
        }
        record_workflow(&mut store, new).unwrap();
        // One more unrelated event so the new entry's gap is nonzero.
        store.retrieve("share a photo", &one).unwrap();
        // old: g=0, n=12 -> 1.0 ; new: g=1, n=1 -> exp(-1).
        let got = retrieve_workflows(&mut store, "share a photo", &RetrievalConfig::default()).unwrap();
        assert_eq!(got[0].steps()[0].as_str(), "old");
    }
}
