//! Evolving memory store with retention-ranked two-stage retrieval.
//!
//! Every entry carries a creation sequence `created_seq`, the value of the
//! store's global retrieval counter at its last access, and a retrieval
//! count. Retention decays with the number of retrieval events since the last
//! access, more slowly for frequently used entries:
//!
//! ```text
//! gap       = global_counter - last_access
//! retention = exp(-gap / count)
//! ```
//!
//! A retrieval first keeps the `N` keys most similar to the query, then orders
//! those by `(retention desc, created_seq desc, id asc)` and returns the top
//! `K`. The global counter advances by exactly one per retrieval that returns
//! anything, and only the returned entries are touched.

use std::cmp::Ordering;

use thiserror::Error;

use crate::embed::{cosine, EmbedError, EmbeddingVector, SharedProvider};

pub type EntryId = u64;

/// Number of equal-width buckets in [`StoreStats::retention_histogram`].
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("global counter {c_global} is behind last access {last_access}")]
    CounterRegression { c_global: u64, last_access: u64 },
    #[error("retrieval count must be at least 1")]
    ZeroCount,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("inconsistent store state: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry<P> {
    pub id: EntryId,
    pub key: String,
    pub key_embedding: EmbeddingVector,
    pub payload: P,
    pub created_seq: u64,
    pub last_access: u64,
    pub count: u64,
}

impl<P> MemoryEntry<P> {
    pub fn retention(&self, c_global: u64) -> Result<f64, StoreError> {
        retention(self.last_access, self.count, c_global)
    }
}

/// `exp(-(c_global - last_access) / count)`.
pub fn retention(last_access: u64, count: u64, c_global: u64) -> Result<f64, StoreError> {
    if count == 0 {
        return Err(StoreError::ZeroCount);
    }
    if c_global < last_access {
        return Err(StoreError::CounterRegression { c_global, last_access });
    }
    let gap = (c_global - last_access) as f64;
    Ok((-gap / count as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalConfig {
    pub n_candidates: usize,
    pub k_results: usize,
    pub min_similarity: Option<f64>,
}

impl RetrievalConfig {
    pub fn new(n_candidates: usize, k_results: usize) -> Result<Self, StoreError> {
        let cfg = Self { n_candidates, k_results, min_similarity: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_min_similarity(mut self, floor: f64) -> Self {
        self.min_similarity = Some(floor);
        self
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.n_candidates == 0 || self.k_results == 0 {
            return Err(StoreError::InvalidConfig("N and K must be at least 1".into()));
        }
        if self.k_results > self.n_candidates {
            return Err(StoreError::InvalidConfig(format!("K={} exceeds N={}", self.k_results, self.n_candidates)));
        }
        if let Some(f) = self.min_similarity {
            if !f.is_finite() {
                return Err(StoreError::InvalidConfig("similarity floor must be finite".into()));
            }
        }
        Ok(())
    }
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { n_candidates: 20, k_results: 3, min_similarity: None }
    }
}

/// Per-candidate view of a retrieval, as printed by a dry run.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub id: EntryId,
    pub similarity: f64,
    pub retention: f64,
    pub created_seq: u64,
    /// Zero-based rank after stage 2, or `None` if cut by `K`.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreStats {
    pub entries: usize,
    pub global_counter: u64,
    pub next_seq: u64,
    /// Bucket `i` counts retentions in `[i/10, (i+1)/10)`; retention 1 lands
    /// in the last bucket.
    pub retention_histogram: [usize; HISTOGRAM_BINS],
}

/// Stage-2 order: retention desc, then newer creation first, then lower id.
pub fn stage_two_order(a: (f64, u64, EntryId), b: (f64, u64, EntryId)) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
}

#[derive(Clone)]
pub struct MemoryStore<P> {
    entries: Vec<MemoryEntry<P>>,
    global_counter: u64,
    next_seq: u64,
    provider: SharedProvider,
}

impl<P: std::fmt::Debug> std::fmt::Debug for MemoryStore<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryStore")
            .field("provider", &self.provider.name())
            .field("global_counter", &self.global_counter)
            .field("next_seq", &self.next_seq)
            .field("entries", &self.entries)
            .finish()
    }
}

/// Persisted form of an entry; the key embedding is recomputed on load.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryParts<P> {
    pub id: EntryId,
    pub key: String,
    pub payload: P,
    pub created_seq: u64,
    pub last_access: u64,
    pub count: u64,
}

impl<P: Clone> MemoryStore<P> {
    pub fn new(provider: SharedProvider) -> Self {
        Self { entries: Vec::new(), global_counter: 0, next_seq: 0, provider }
    }

    /// Rebuilds a store from persisted parts, checking every invariant.
    /// Ids must equal their position; creation sequences must increase.
    pub fn from_parts(
        provider: SharedProvider,
        global_counter: u64,
        next_seq: u64,
        parts: Vec<EntryParts<P>>,
    ) -> Result<Self, StoreError> {
        let mut entries = Vec::with_capacity(parts.len());
        let mut prev_seq: Option<u64> = None;
        for (pos, p) in parts.into_iter().enumerate() {
            if p.id != pos as u64 {
                return Err(StoreError::Inconsistent(format!("entry at position {pos} has id {}", p.id)));
            }
            if prev_seq.is_some_and(|s| p.created_seq <= s) || p.created_seq >= next_seq {
                return Err(StoreError::Inconsistent(format!(
                    "entry {} has out-of-order created_seq {}",
                    p.id, p.created_seq
                )));
            }
            if p.count == 0 {
                return Err(StoreError::ZeroCount);
            }
            if p.last_access > global_counter {
                return Err(StoreError::CounterRegression { c_global: global_counter, last_access: p.last_access });
            }
            prev_seq = Some(p.created_seq);
            let key_embedding = provider.embed(&p.key)?;
            entries.push(MemoryEntry {
                id: p.id,
                key: p.key,
                key_embedding,
                payload: p.payload,
                created_seq: p.created_seq,
                last_access: p.last_access,
                count: p.count,
            });
        }
        Ok(Self { entries, global_counter, next_seq, provider })
    }

    pub fn provider(&self) -> &SharedProvider {
        &self.provider
    }

    pub fn global_counter(&self) -> u64 {
        self.global_counter
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry<P>] {
        &self.entries
    }

    pub fn get(&self, id: EntryId) -> Option<&MemoryEntry<P>> {
        self.entries.get(id as usize)
    }

    /// Mutable access to a payload. Metadata stays under the store's control.
    pub fn payload_mut(&mut self, id: EntryId) -> Option<&mut P> {
        self.entries.get_mut(id as usize).map(|e| &mut e.payload)
    }

    /// Hands out the next creation sequence number without inserting an
    /// entry. Payloads that track their own sub-items (patch variants) use
    /// this so every sequence number in a store stays unique.
    pub fn allocate_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Adds an entry with `last_access` at the current counter and count 1.
    /// Insertion is not a retrieval event.
    pub fn insert(&mut self, key: &str, payload: P) -> Result<EntryId, StoreError> {
        let key_embedding = self.provider.embed(key)?;
        let id = self.entries.len() as EntryId;
        let created_seq = self.allocate_seq();
        self.entries.push(MemoryEntry {
            id,
            key: key.to_string(),
            key_embedding,
            payload,
            created_seq,
            last_access: self.global_counter,
            count: 1,
        });
        Ok(id)
    }

    /// Read-only scan for the entry whose key is most similar to `text`
    /// (lowest id on ties). Not a retrieval event.
    pub fn most_similar(&self, text: &str) -> Result<Option<(EntryId, f64)>, StoreError> {
        let q = self.provider.embed(text)?;
        let mut best: Option<(EntryId, f64)> = None;
        for e in &self.entries {
            let s = cosine(&q, &e.key_embedding)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((e.id, s));
            }
        }
        Ok(best)
    }

    /// Stage 1: ids and similarities of the top-N keys, most similar first.
    fn stage_one(&self, query: &EmbeddingVector, cfg: &RetrievalConfig) -> Result<Vec<(EntryId, f64)>, StoreError> {
        let mut scored = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let s = cosine(query, &e.key_embedding)?;
            if cfg.min_similarity.is_none_or(|f| s >= f) {
                scored.push((e.id, s));
            }
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(cfg.n_candidates);
        Ok(scored)
    }

    /// Stages 1 and 2 without side effects.
    pub fn dry_run(&self, query: &str, cfg: &RetrievalConfig) -> Result<Vec<CandidateScore>, StoreError> {
        cfg.validate()?;
        let q = self.provider.embed(query)?;
        let mut cands = self
            .stage_one(&q, cfg)?
            .into_iter()
            .map(|(id, similarity)| {
                let e = &self.entries[id as usize];
                Ok(CandidateScore {
                    id,
                    similarity,
                    retention: e.retention(self.global_counter)?,
                    created_seq: e.created_seq,
                    rank: None,
                })
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        cands.sort_by(|a, b| stage_two_order((a.retention, a.created_seq, a.id), (b.retention, b.created_seq, b.id)));
        for (i, c) in cands.iter_mut().enumerate().take(cfg.k_results) {
            c.rank = Some(i);
        }
        Ok(cands)
    }

    /// Full retrieval; returns the ranked ids and applies the stage-3 update.
    pub fn retrieve_ids(&mut self, query: &str, cfg: &RetrievalConfig) -> Result<Vec<EntryId>, StoreError> {
        let ranked: Vec<EntryId> =
            self.dry_run(query, cfg)?.into_iter().filter(|c| c.rank.is_some()).map(|c| c.id).collect();
        if ranked.is_empty() {
            return Ok(ranked);
        }
        self.global_counter += 1;
        for &id in &ranked {
            let e = &mut self.entries[id as usize];
            e.last_access = self.global_counter;
            e.count += 1;
        }
        Ok(ranked)
    }

    /// Full retrieval returning snapshots with post-update metadata.
    pub fn retrieve(&mut self, query: &str, cfg: &RetrievalConfig) -> Result<Vec<MemoryEntry<P>>, StoreError> {
        let ids = self.retrieve_ids(query, cfg)?;
        Ok(ids.into_iter().map(|id| self.entries[id as usize].clone()).collect())
    }

    pub fn stats(&self) -> StoreStats {
        let mut hist = [0usize; HISTOGRAM_BINS];
        for e in &self.entries {
            // Invariants guarantee a valid retention here.
            let r = e.retention(self.global_counter).unwrap_or(0.0);
            let bin = ((r * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            hist[bin] += 1;
        }
        StoreStats {
            entries: self.entries.len(),
            global_counter: self.global_counter,
            next_seq: self.next_seq,
            retention_histogram: hist,
        }
    }

    /// Persistable view of every entry, in creation order.
    pub fn to_parts(&self) -> Vec<EntryParts<P>> {
        self.entries
            .iter()
            .map(|e| EntryParts {
                id: e.id,
                key: e.key.clone(),
                payload: e.payload.clone(),
                created_seq: e.created_seq,
                last_access: e.last_access,
                count: e.count,
            })
            .collect()
    }

    /// Swaps every payload through `f`, keeping keys and metadata.
    pub fn map_payloads<Q: Clone>(&self, mut f: impl FnMut(&P) -> Q) -> MemoryStore<Q> {
        MemoryStore {
            entries: self
                .entries
                .iter()
                .map(|e| MemoryEntry {
                    id: e.id,
                    key: e.key.clone(),
                    key_embedding: e.key_embedding.clone(),
                    payload: f(&e.payload),
                    created_seq: e.created_seq,
                    last_access: e.last_access,
                    count: e.count,
                })
                .collect(),
            global_counter: self.global_counter,
            next_seq: self.next_seq,
            provider: self.provider.clone(),
        }
    }
}
