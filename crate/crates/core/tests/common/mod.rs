//! Oracles and randomized scripts shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use driftmem::cluster::{maximal_cliques, SimilarityGraph};
use driftmem::embed::{cosine, EmbeddingProvider, EmbeddingVector, HashedBagOfWords};
use driftmem::memstore::{EntryId, MemoryStore, RetrievalConfig};
use driftmem::persist::{parse_bank, render_bank, Bank, ProviderRegistry};
use driftmem::procedural::{
    abstract_workflows, bindings_for_member, instantiate, record_workflow, retrieve_workflows, Action, ActionKind,
    Trajectory, Workflow,
};
use driftmem::stationary::{retrieve_elements, upsert_element, PatchDescriptor, StationaryStore, Thresholds};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of one randomized check.
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

const WORDS: [&str; 10] = ["open", "send", "photo", "alarm", "wifi", "note", "share", "delete", "the", "music"];

pub fn phrase(rng: &mut TestRng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_config(rng: &mut TestRng) -> RetrievalConfig {
    let n = rng.random_range(1..=6);
    let k = rng.random_range(1..=n);
    let cfg = RetrievalConfig::new(n, k).unwrap();
    if rng.random_bool(0.3) {
        cfg.with_min_similarity(rng.random_range(0.2..0.9))
    } else {
        cfg
    }
}

/// Straight-line model of the store: linear scans, selection instead of
/// sorting, metadata held in plain fields.
pub struct RefStore {
    provider: HashedBagOfWords,
    keys: Vec<EmbeddingVector>,
    seqs: Vec<u64>,
    pub t: Vec<u64>,
    pub n: Vec<u64>,
    pub c_global: u64,
    next_seq: u64,
}

impl RefStore {
    pub fn new() -> Self {
        Self {
            provider: HashedBagOfWords::default(),
            keys: Vec::new(),
            seqs: Vec::new(),
            t: Vec::new(),
            n: Vec::new(),
            c_global: 0,
            next_seq: 0,
        }
    }

    pub fn insert(&mut self, key: &str) -> EntryId {
        self.keys.push(self.provider.embed(key).unwrap());
        self.seqs.push(self.next_seq);
        self.next_seq += 1;
        self.t.push(self.c_global);
        self.n.push(1);
        (self.keys.len() - 1) as EntryId
    }

    fn retention(&self, i: usize) -> f64 {
        (-((self.c_global - self.t[i]) as f64) / self.n[i] as f64).exp()
    }

    pub fn retrieve(&mut self, query: &str, cfg: &RetrievalConfig) -> Vec<EntryId> {
        let q = self.provider.embed(query).unwrap();
        let mut pool: Vec<(usize, f64)> = Vec::new();
        for (i, k) in self.keys.iter().enumerate() {
            let s = cosine(&q, k).unwrap();
            if cfg.min_similarity.is_none_or(|f| s >= f) {
                pool.push((i, s));
            }
        }
        // Stage 1: take the most similar N, one at a time; lower index wins ties.
        let mut candidates = Vec::new();
        while candidates.len() < cfg.n_candidates && !pool.is_empty() {
            let mut best = 0;
            for j in 1..pool.len() {
                if pool[j].1 > pool[best].1 {
                    best = j;
                }
            }
            candidates.push(pool.remove(best).0);
        }
        // Stage 2: take the K best by retention, then newer, then lower index.
        let mut ranked = Vec::new();
        while ranked.len() < cfg.k_results && !candidates.is_empty() {
            let mut best = 0;
            for j in 1..candidates.len() {
                let (a, b) = (candidates[j], candidates[best]);
                let (ra, rb) = (self.retention(a), self.retention(b));
                if ra > rb || (ra == rb && (self.seqs[a] > self.seqs[b] || (self.seqs[a] == self.seqs[b] && a < b))) {
                    best = j;
                }
            }
            ranked.push(candidates.remove(best));
        }
        // Stage 3.
        if !ranked.is_empty() {
            self.c_global += 1;
            for &i in &ranked {
                self.t[i] = self.c_global;
                self.n[i] += 1;
            }
        }
        ranked.into_iter().map(|i| i as EntryId).collect()
    }
}

/// Runs one randomized insert/retrieve script against the store and the
/// reference, comparing results and every entry's metadata after each call.
pub fn store_script(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let mut store: MemoryStore<u32> = MemoryStore::new(HashedBagOfWords::shared(64));
    let mut oracle = RefStore::new();
    let ops = r.random_range(10..60);
    for op in 0..ops {
        if store.is_empty() || r.random_bool(0.35) {
            let key = phrase(&mut r, 3);
            let a = store.insert(&key, op).unwrap();
            let b = oracle.insert(&key);
            if a != b {
                return Err(format!("seed {seed} op {op}: insert id {a} vs {b}"));
            }
        } else {
            let q = phrase(&mut r, 3);
            let cfg = random_config(&mut r);
            let got = store.retrieve_ids(&q, &cfg).unwrap();
            let want = oracle.retrieve(&q, &cfg);
            if got != want {
                return Err(format!("seed {seed} op {op}: query {q:?} returned {got:?}, oracle {want:?}"));
            }
        }
        if store.global_counter() != oracle.c_global {
            return Err(format!("seed {seed} op {op}: C_global {} vs {}", store.global_counter(), oracle.c_global));
        }
        for e in store.entries() {
            let i = e.id as usize;
            if (e.last_access, e.count) != (oracle.t[i], oracle.n[i]) {
                return Err(format!(
                    "seed {seed} op {op}: entry {i} has (t, n) = ({}, {}), oracle ({}, {})",
                    e.last_access, e.count, oracle.t[i], oracle.n[i]
                ));
            }
        }
    }
    Ok(())
}

/// Random undirected graph as an edge list.
pub fn random_graph(rng: &mut TestRng, nodes: usize, density: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..nodes {
        for b in a + 1..nodes {
            if rng.random_bool(density) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Maximal cliques by checking every vertex subset.
pub fn brute_force_cliques(nodes: usize, edges: &[(usize, usize)]) -> BTreeSet<BTreeSet<usize>> {
    let mut adj = vec![0u32; nodes];
    for &(a, b) in edges {
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
    }
    let is_clique = |mask: u32| (0..nodes).filter(|v| mask & (1 << v) != 0).all(|v| mask & !(1 << v) & !adj[v] == 0);
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << nodes) {
        if !is_clique(mask) {
            continue;
        }
        let maximal = (0..nodes).filter(|v| mask & (1 << v) == 0).all(|v| !is_clique(mask | (1 << v)));
        if maximal {
            out.insert((0..nodes).filter(|v| mask & (1 << v) != 0).collect());
        }
    }
    out
}

pub fn clique_case(seed: u64, nodes: usize, density: f64) -> Result<(), String> {
    let mut r = rng(seed);
    let edges = random_graph(&mut r, nodes, density);
    let ids: Vec<String> = (0..nodes).map(|i| format!("n{i:02}")).collect();
    let graph = SimilarityGraph::from_edges(ids.clone(), edges.clone(), 0.5).map_err(|e| e.to_string())?;
    let got: BTreeSet<BTreeSet<usize>> = maximal_cliques(&graph)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|c| c.member_ids.iter().map(|m| ids.iter().position(|i| i == m).unwrap()).collect())
        .collect();
    let want = brute_force_cliques(nodes, &edges);
    if got == want {
        Ok(())
    } else {
        Err(format!("seed {seed}, {nodes} nodes, density {density}: {got:?} vs {want:?}"))
    }
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

const DESCRIPTIONS: [&str; 6] =
    ["open settings", "Open Settings", "open the settings", "share photo", "delete note", "share the photo"];

/// Feature vectors clustered around a few prototypes, at several noise
/// scales, so creates, appends and duplicates all occur.
pub fn random_patch(rng: &mut TestRng, dim: usize) -> PatchDescriptor {
    let proto = rng.random_range(0..4usize);
    let scale = *[0.0, 0.02, 0.1, 0.4, 1.5].choose(rng).unwrap();
    let features: Vec<f64> =
        (0..dim).map(|i| if i % 4 == proto { 1.0 } else { 0.0 } + scale * rng.random_range(-1.0..1.0)).collect();
    if features.iter().all(|v| *v == 0.0) {
        return PatchDescriptor::new(vec![1.0; dim]).unwrap();
    }
    PatchDescriptor::new(features).unwrap()
}

#[derive(Default, Debug, Clone, Copy)]
pub struct Routing {
    pub created: usize,
    pub appended: usize,
    pub discarded: usize,
}

/// One randomized ingest sequence; checks dedup soundness afterwards.
pub fn dedup_sequence(seed: u64, routing: &mut Routing) -> Result<(), String> {
    use driftmem::stationary::UpsertOutcome::*;
    let mut r = rng(seed);
    let thresholds = if r.random_bool(0.5) {
        Thresholds::default()
    } else {
        Thresholds { theta_match: r.random_range(0.5..1.0), theta_dup: r.random_range(0.5..1.0) }
    };
    let mut store: StationaryStore = MemoryStore::new(HashedBagOfWords::shared(64));
    for _ in 0..r.random_range(5..40) {
        let desc = *DESCRIPTIONS.choose(&mut r).unwrap();
        let patch = random_patch(&mut r, 8);
        match upsert_element(&mut store, desc, &patch, thresholds).map_err(|e| e.to_string())?.0 {
            Created => routing.created += 1,
            Appended => routing.appended += 1,
            Discarded => routing.discarded += 1,
        }
        if r.random_bool(0.2) {
            let cfg = random_config(&mut r);
            retrieve_elements(&mut store, desc, &cfg, 2).map_err(|e| e.to_string())?;
        }
    }
    for e in store.entries() {
        let vs = &e.payload.variants;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                let c = cos(&vs[i].descriptor.features, &vs[j].descriptor.features);
                if c >= thresholds.theta_dup {
                    return Err(format!("seed {seed}: record {} variants {i},{j} have cosine {c}", e.id));
                }
            }
        }
    }
    Ok(())
}

const ARGS: [&str; 5] = ["alice", "bob", "jazz", "red", "noon"];

/// A cluster of successful trajectories sharing one action signature, with
/// arguments drawn from a small pool so coincidences happen.
pub fn aligned_cluster(rng: &mut TestRng) -> Vec<Trajectory> {
    let len = rng.random_range(3..=6);
    let members = rng.random_range(2..=5);
    let shape: Vec<(ActionKind, String, String, bool)> = (0..len)
        .map(|i| {
            let kind = *[ActionKind::Click, ActionKind::Type, ActionKind::Scroll].choose(rng).unwrap();
            let target = if kind == ActionKind::Scroll { String::new() } else { format!("Field{i}") };
            let role = *["Query", "Contact", "Text", ""].choose(rng).unwrap();
            let varies = kind != ActionKind::Click && rng.random_bool(0.7);
            (kind, target, role.to_string(), varies)
        })
        .collect();
    let fixed: Vec<&str> = (0..len).map(|_| *ARGS.choose(rng).unwrap()).collect();
    (0..members)
        .map(|_| {
            let mut words = vec!["do".to_string()];
            let actions = shape
                .iter()
                .zip(&fixed)
                .map(|((kind, target, role, varies), fixed)| {
                    let arg = if *varies { *ARGS.choose(rng).unwrap() } else { fixed };
                    match kind {
                        ActionKind::Click => Action::click(target.clone()),
                        ActionKind::Type => {
                            words.push(arg.to_string());
                            Action::type_text(target.clone(), arg, role.clone())
                        }
                        _ => Action {
                            kind: *kind,
                            target_label: String::new(),
                            argument: arg.into(),
                            arg_role: role.clone(),
                        },
                    }
                })
                .collect();
            Trajectory { instruction: words.join(" "), actions, success: true }
        })
        .collect()
}

/// Round trip, placeholder soundness and idempotence on one cluster.
pub fn procedural_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let cluster = aligned_cluster(&mut r);
    let wfs = abstract_workflows(&cluster).map_err(|e| e.to_string())?;
    let [wf] = wfs.as_slice() else {
        return Err(format!("seed {seed}: expected one workflow, got {}", wfs.len()));
    };
    for (m, member) in cluster.iter().enumerate() {
        let steps = instantiate(wf, &bindings_for_member(wf, member)).map_err(|e| e.to_string())?;
        if steps != member.rendered_steps() {
            return Err(format!("seed {seed} member {m}: {steps:?} vs {:?}", member.rendered_steps()));
        }
    }
    for (pos, step) in wf.steps().iter().enumerate() {
        let literals: BTreeSet<&str> = cluster.iter().map(|t| t.actions[pos].argument.as_str()).collect();
        let abstracted = !step.placeholders().is_empty();
        if abstracted != (literals.len() >= 2) {
            return Err(format!("seed {seed} step {pos} {:?}: {} distinct literals", step.as_str(), literals.len()));
        }
    }
    let single = abstract_workflows(&cluster[..1]).map_err(|e| e.to_string())?;
    let copies = abstract_workflows(&vec![cluster[0].clone(); 3]).map_err(|e| e.to_string())?;
    if single != copies {
        return Err(format!("seed {seed}: abstraction of copies differs from a single member"));
    }
    Ok(())
}

pub fn proc_store(bank: &mut Bank) -> &mut MemoryStore<Workflow> {
    bank.procedural.as_mut().unwrap()
}

pub fn stat_store(bank: &mut Bank) -> &mut StationaryStore {
    bank.stationary.as_mut().unwrap()
}

/// One step of a replay script, producing a comparable transcript line.
pub fn replay_op(r: &mut TestRng, bank: &mut Bank) -> String {
    match r.random_range(0..4) {
        0 => {
            let name = phrase(r, 3);
            let steps = ["Tap open", "Tap send", "Type [Query]"];
            let wf = Workflow::from_strs(&name, &steps).unwrap();
            format!("wf {}", record_workflow(proc_store(bank), wf).unwrap())
        }
        1 => {
            let q = phrase(r, 3);
            let cfg = random_config(r);
            let got: Vec<String> =
                retrieve_workflows(proc_store(bank), &q, &cfg).unwrap().iter().map(|w| w.name().to_string()).collect();
            format!("rw {got:?}")
        }
        2 => {
            let desc = *DESCRIPTIONS.choose(r).unwrap();
            let mut patch = random_patch(r, 8);
            if r.random_bool(0.3) {
                patch = patch.with_blob((0..r.random_range(0..12)).map(|_| r.random()).collect());
            }
            format!("up {:?}", upsert_element(stat_store(bank), desc, &patch, Thresholds::default()).unwrap())
        }
        _ => {
            let q = phrase(r, 2);
            let cfg = random_config(r);
            let hits = retrieve_elements(stat_store(bank), &q, &cfg, 2).unwrap();
            let ids: Vec<(u64, u64)> = hits.iter().map(|h| (h.entry_id, h.variant_seq)).collect();
            format!("re {ids:?}")
        }
    }
}

/// Runs a script, saving and reloading at a random cut; the reloaded bank
/// must replay the rest identically and every save must be byte-stable.
pub fn replay_script(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let provider = HashedBagOfWords::shared(64);
    let mut bank =
        Bank { procedural: Some(MemoryStore::new(provider.clone())), stationary: Some(MemoryStore::new(provider)) };
    let ops = r.random_range(10..50);
    let cut = r.random_range(0..ops);
    for _ in 0..cut {
        replay_op(&mut r, &mut bank);
    }
    let text = render_bank(&bank);
    let mut loaded = parse_bank(&text, &ProviderRegistry::default()).map_err(|e| e.to_string())?;
    if render_bank(&loaded) != text {
        return Err(format!("seed {seed}: save-load-save changed bytes"));
    }
    let mut r2 = r.clone();
    for op in cut..ops {
        let a = replay_op(&mut r, &mut bank);
        let b = replay_op(&mut r2, &mut loaded);
        if a != b {
            return Err(format!("seed {seed} op {op}: {a} vs {b} after reload"));
        }
    }
    if render_bank(&bank) != render_bank(&loaded) {
        return Err(format!("seed {seed}: final states differ"));
    }
    Ok(())
}
