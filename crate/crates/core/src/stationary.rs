//! Element-function memory.
//!
//! Each record pairs a function description with a list of visual patch
//! variants. New observations either create a record, append a variant to the
//! best-matching record, or are discarded as visual duplicates. Every variant
//! keeps its own `(created_seq, last_access, count)` and is ranked by
//! retention within its record at retrieval time.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_slices, EmbedError};
use crate::memstore::{retention, EntryId, MemoryStore, RetrievalConfig, StoreError};
use crate::procedural::{Action, ActionKind};

/// Default feature dimension of patch descriptors.
pub const DEFAULT_FEATURE_DIM: usize = 16;
pub const DEFAULT_THETA_MATCH: f64 = 0.90;
pub const DEFAULT_THETA_DUP: f64 = 0.95;
pub const DEFAULT_K_ICONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationaryError {
    #[error("invalid patch descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("screen has no elements")]
    EmptyScreen,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("best match {best:.4} is below floor {floor:.4}")]
    NoMatch { best: f64, floor: f64 },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Visual features of an element patch plus the optional raw image bytes,
/// which are carried but never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDescriptor {
    pub features: Vec<f64>,
    pub blob: Option<Vec<u8>>,
}

impl PatchDescriptor {
    pub fn new(features: Vec<f64>) -> Result<Self, StationaryError> {
        let d = Self { features, blob: None };
        d.validate()?;
        Ok(d)
    }

    pub fn with_blob(mut self, blob: Vec<u8>) -> Self {
        self.blob = Some(blob);
        self
    }

    pub fn validate(&self) -> Result<(), StationaryError> {
        if self.features.is_empty() {
            return Err(StationaryError::InvalidDescriptor("no features".into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(StationaryError::InvalidDescriptor("non-finite feature".into()));
        }
        if self.features.iter().all(|v| *v == 0.0) {
            return Err(StationaryError::InvalidDescriptor("zero feature vector".into()));
        }
        Ok(())
    }

    pub fn similarity(&self, other: &[f64]) -> Result<f64, StationaryError> {
        Ok(cosine_slices(&self.features, other)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchVariant {
    pub descriptor: PatchDescriptor,
    pub created_seq: u64,
    pub last_access: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementRecord {
    pub description: String,
    pub variants: Vec<PatchVariant>,
}

pub type StationaryStore = MemoryStore<ElementRecord>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Minimum description cosine for an observation to join a record.
    pub theta_match: f64,
    /// Feature cosine at or above which a patch counts as a duplicate.
    pub theta_dup: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { theta_match: DEFAULT_THETA_MATCH, theta_dup: DEFAULT_THETA_DUP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsertOutcome {
    Created,
    Appended,
    Discarded,
}

/// Routes one observation into the store:
/// no record with description cosine >= `theta_match` creates a new record;
/// otherwise a variant with feature cosine >= `theta_dup` discards it, and
/// anything else is appended as a fresh variant.
pub fn upsert_element(
    store: &mut StationaryStore,
    description: &str,
    patch: &PatchDescriptor,
    thresholds: Thresholds,
) -> Result<(UpsertOutcome, EntryId), StationaryError> {
    patch.validate()?;
    if let Some((id, sim)) = store.most_similar(description)? {
        if sim >= thresholds.theta_match {
            let record = &store.get(id).expect("id from scan").payload;
            for v in &record.variants {
                if v.descriptor.similarity(&patch.features)? >= thresholds.theta_dup {
                    return Ok((UpsertOutcome::Discarded, id));
                }
            }
            let created_seq = store.allocate_seq();
            let last_access = store.global_counter();
            store.payload_mut(id).expect("id from scan").variants.push(PatchVariant {
                descriptor: patch.clone(),
                created_seq,
                last_access,
                count: 1,
            });
            return Ok((UpsertOutcome::Appended, id));
        }
    }
    let variant = PatchVariant {
        descriptor: patch.clone(),
        created_seq: store.next_seq(),
        last_access: store.global_counter(),
        count: 1,
    };
    let id =
        store.insert(description, ElementRecord { description: description.to_string(), variants: vec![variant] })?;
    Ok((UpsertOutcome::Created, id))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn contains_point(&self, (px, py): (f64, f64)) -> bool {
        px >= self.x && px <= self.x + self.w && py >= self.y && py <= self.y + self.h
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }

    pub fn union(&self, other: &Rect) -> Rect {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = (self.x + self.w).max(other.x + other.w);
        let y1 = (self.y + self.h).max(other.y + other.h);
        Rect::new(x0, y0, span(x0, x1), span(y0, y1))
    }
}

/// Smallest `w` with `lo + w >= hi`, so a union contains both inputs exactly.
fn span(lo: f64, hi: f64) -> f64 {
    let mut w = hi - lo;
    while lo + w < hi {
        w = w.next_up();
    }
    w
}

/// A pre-annotated screen-action-screen observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub pre_screen: String,
    pub action: Action,
    pub click_point: (f64, f64),
    pub element_box: Rect,
    pub descriptor: PatchDescriptor,
    pub description: String,
    pub post_screen: String,
}

impl Triplet {
    pub fn validate(&self) -> Result<(), String> {
        if self.action.kind != ActionKind::Click {
            return Err(format!("action kind {:?} is not a click", self.action.kind));
        }
        if !self.element_box.contains_point(self.click_point) {
            return Err("click point lies outside the element box".into());
        }
        if self.description.trim().is_empty() {
            return Err("empty description".into());
        }
        self.descriptor.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub created: usize,
    pub appended: usize,
    pub discarded: usize,
    /// `(index into the input, reason)` for each rejected triplet.
    pub errors: Vec<(usize, String)>,
}

/// Upserts each triplet in order; malformed ones are reported and skipped.
pub fn ingest_triplets(store: &mut StationaryStore, triplets: &[Triplet], thresholds: Thresholds) -> IngestReport {
    let mut report = IngestReport::default();
    for (i, t) in triplets.iter().enumerate() {
        if let Err(e) = t.validate() {
            report.errors.push((i, e));
            continue;
        }
        match upsert_element(store, &t.description, &t.descriptor, thresholds) {
            Ok((UpsertOutcome::Created, _)) => report.created += 1,
            Ok((UpsertOutcome::Appended, _)) => report.appended += 1,
            Ok((UpsertOutcome::Discarded, _)) => report.discarded += 1,
            Err(e) => report.errors.push((i, e.to_string())),
        }
    }
    report
}

/// One emitted variant of a retrieved record.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementHit {
    pub entry_id: EntryId,
    pub description: String,
    pub variant_index: usize,
    pub variant_seq: u64,
    pub descriptor: PatchDescriptor,
}

/// Record selection runs through the store's two-stage retrieval. Within each
/// returned record the variants are ranked by `(retention desc, created_seq
/// desc, index asc)` at the pre-retrieval counter, and the top
/// `variants_per_record` are emitted and touched under the same counter
/// increment as their record.
pub fn retrieve_elements(
    store: &mut StationaryStore,
    subtask: &str,
    cfg: &RetrievalConfig,
    variants_per_record: usize,
) -> Result<Vec<ElementHit>, StationaryError> {
    let before = store.global_counter();
    let ids = store.retrieve_ids(subtask, cfg)?;
    let now = store.global_counter();
    let mut hits = Vec::new();
    for id in ids {
        let record = store.payload_mut(id).expect("retrieved id exists");
        let order = rank_variants(&record.variants, before)?;
        for &idx in order.iter().take(variants_per_record.max(1)) {
            let v = &mut record.variants[idx];
            v.last_access = now;
            v.count += 1;
            hits.push(ElementHit {
                entry_id: id,
                description: record.description.clone(),
                variant_index: idx,
                variant_seq: v.created_seq,
                descriptor: v.descriptor.clone(),
            });
        }
    }
    Ok(hits)
}

/// Variant indices in retrieval order at counter `c_global`.
pub fn rank_variants(variants: &[PatchVariant], c_global: u64) -> Result<Vec<usize>, StoreError> {
    let scores = variants.iter().map(|v| retention(v.last_access, v.count, c_global)).collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..variants.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].total_cmp(&scores[a]).then(variants[b].created_seq.cmp(&variants[a].created_seq)).then(a.cmp(&b))
    });
    Ok(order)
}

/// An element on the current screen as seen by the grounding step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenElement {
    pub id: String,
    pub bbox: Rect,
    pub features: Vec<f64>,
}

impl ScreenElement {
    pub fn center(&self) -> (f64, f64) {
        self.bbox.center()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingHint {
    pub anchor_id: String,
    pub anchor_score: f64,
    pub hint_box: Rect,
    /// Ids of the elements the box covers, nearest first.
    pub covered: Vec<String>,
}

/// Matches `patch` against the screen, then boxes the `k` elements nearest
/// to the best match (itself included; distance ties broken by id).
pub fn grounding_hint(
    screen: &[ScreenElement],
    patch: &PatchDescriptor,
    k: usize,
    floor: f64,
) -> Result<GroundingHint, StationaryError> {
    if k == 0 {
        return Err(StationaryError::InvalidK);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, el) in screen.iter().enumerate() {
        let s = patch.similarity(&el.features)?;
        let better = match best {
            None => true,
            Some((j, b)) => s > b || (s == b && el.id < screen[j].id),
        };
        if better {
            best = Some((i, s));
        }
    }
    let (anchor, score) = best.ok_or(StationaryError::EmptyScreen)?;
    if score < floor {
        return Err(StationaryError::NoMatch { best: score, floor });
    }
    let (ax, ay) = screen[anchor].center();
    let mut by_distance: Vec<(f64, &ScreenElement)> = screen
        .iter()
        .map(|el| {
            let (x, y) = el.center();
            ((x - ax).hypot(y - ay), el)
        })
        .collect();
    by_distance.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.id.cmp(&b.1.id),
        o => o,
    });
    // The anchor is at distance zero; keep it first even against zero-distance ties.
    let anchor_el = &screen[anchor];
    let mut chosen: Vec<&ScreenElement> = vec![anchor_el];
    chosen.extend(by_distance.into_iter().map(|(_, el)| el).filter(|el| !std::ptr::eq(*el, anchor_el)).take(k - 1));
    let hint_box = chosen.iter().skip(1).fold(anchor_el.bbox, |acc, el| acc.union(&el.bbox));
    Ok(GroundingHint {
        anchor_id: anchor_el.id.clone(),
        anchor_score: score,
        hint_box,
        covered: chosen.iter().map(|el| el.id.clone()).collect(),
    })
}
