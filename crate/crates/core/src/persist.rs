//! Line-delimited file formats for banks, trajectories, triplets and scenarios.
//!
//! Every file is UTF-8 with one JSON object per line, each terminated by
//! `\n`. Every object carries a `kind` field and the first line is a
//! `header` with `format_version`. Objects are written in canonical form:
//! keys in byte order, integers in plain decimal, floats in the shortest
//! decimal that round-trips to the same `f64`, no insignificant whitespace.
//! Loading then saving a file therefore reproduces it byte for byte.
//!
//! A bank file holds one or two store sections. Each section opens with a
//! header naming its store (`procedural` or `stationary`), the embedding
//! provider and dimension, the global counter and the next sequence number.
//! Procedural sections list `proc_entry` lines; stationary sections list
//! `stat_record` lines, each followed by its `stat_variant` lines. Entries
//! appear in creation order. Patch blobs are standard base-64.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::driftsim::{EpisodeRecord, MemoryBank, Scenario};
use crate::embed::{HashedBagOfWords, SharedProvider, DEFAULT_DIM};
use crate::memstore::{EntryId, EntryParts, MemoryStore};
use crate::procedural::{Action, Trajectory, Workflow};
use crate::stationary::{ElementRecord, PatchDescriptor, PatchVariant, Rect, StationaryStore, Triplet};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("line {line}: unknown format version {found}")]
    UnknownFormatVersion { line: usize, found: u64 },
    #[error("provider mismatch: {0}")]
    ProviderMismatch(String),
    #[error("line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
}

impl PersistError {
    fn corrupt(line: usize, reason: impl Into<String>) -> Self {
        Self::CorruptRecord { line, reason: reason.into() }
    }

    /// True for errors caused by file contents rather than the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Self::IoFailure(_))
    }
}

/// Providers a bank may name in its headers.
#[derive(Clone)]
pub struct ProviderRegistry {
    providers: Vec<SharedProvider>,
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        Self { providers: vec![HashedBagOfWords::shared(DEFAULT_DIM)] }
    }
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        Self { providers: Vec::new() }
    }

    /// Registers `provider`, replacing any provider of the same name.
    pub fn with(mut self, provider: SharedProvider) -> Self {
        self.providers.retain(|p| p.name() != provider.name());
        self.providers.push(provider);
        self
    }

    pub fn resolve(&self, name: &str, dim: usize) -> Result<SharedProvider, PersistError> {
        let p = self
            .providers
            .iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| PersistError::ProviderMismatch(format!("unknown provider {name:?}")))?;
        if p.dim() != dim {
            return Err(PersistError::ProviderMismatch(format!(
                "file uses {name} with dim {dim}, registered provider has dim {}",
                p.dim()
            )));
        }
        Ok(p.clone())
    }
}

/// Either or both memories, as stored in one bank file.
#[derive(Debug, Clone, Default)]
pub struct Bank {
    pub procedural: Option<MemoryStore<Workflow>>,
    pub stationary: Option<StationaryStore>,
}

impl From<MemoryBank> for Bank {
    fn from(b: MemoryBank) -> Self {
        Self { procedural: Some(b.procedural), stationary: Some(b.stationary) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StoreKind {
    Procedural,
    Stationary,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankHeader {
    format_version: u64,
    store: StoreKind,
    provider_name: String,
    dim: usize,
    c_global: u64,
    next_seq: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcEntryLine {
    id: EntryId,
    key: String,
    created_seq: u64,
    last_access: u64,
    count: u64,
    name: String,
    steps: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatRecordLine {
    id: EntryId,
    key: String,
    created_seq: u64,
    last_access: u64,
    count: u64,
    description: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatVariantLine {
    record: EntryId,
    created_seq: u64,
    last_access: u64,
    count: u64,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blob: Option<String>,
}

fn encode<T: Serialize>(kind: &str, value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("record types serialize");
    let obj = v.as_object_mut().expect("records are objects");
    obj.insert("kind".into(), Value::String(kind.into()));
    let mut line = serde_json::to_string(&v).expect("values serialize");
    line.push('\n');
    line
}

/// A parsed line with its `kind` removed.
struct Line {
    number: usize,
    kind: String,
    body: Map<String, Value>,
}

impl Line {
    fn decode<T: DeserializeOwned>(self) -> Result<T, PersistError> {
        serde_json::from_value(Value::Object(self.body)).map_err(|e| PersistError::corrupt(self.number, e.to_string()))
    }

    /// Applies the version gate before the strict header schema.
    fn header<T: DeserializeOwned>(self) -> Result<T, PersistError> {
        if self.kind != "header" {
            return Err(PersistError::corrupt(self.number, format!("expected a header, found {:?}", self.kind)));
        }
        let found = self
            .body
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| PersistError::corrupt(self.number, "header lacks an integer format_version"))?;
        if found != FORMAT_VERSION {
            return Err(PersistError::UnknownFormatVersion { line: self.number, found });
        }
        self.decode()
    }
}

fn lines(text: &str) -> Result<Vec<Line>, PersistError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let v: Value = serde_json::from_str(raw).map_err(|e| PersistError::corrupt(number, e.to_string()))?;
        let Value::Object(mut body) = v else {
            return Err(PersistError::corrupt(number, "line is not an object"));
        };
        let kind = match body.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(PersistError::corrupt(number, "missing string field `kind`")),
        };
        out.push(Line { number, kind, body });
    }
    if out.is_empty() {
        return Err(PersistError::corrupt(1, "file is empty"));
    }
    Ok(out)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<usize, PersistError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(contents.len())
}

fn header_line(store: StoreKind, provider: &SharedProvider, c_global: u64, next_seq: u64) -> String {
    encode(
        "header",
        &BankHeader {
            format_version: FORMAT_VERSION,
            store,
            provider_name: provider.name().to_string(),
            dim: provider.dim(),
            c_global,
            next_seq,
        },
    )
}

/// Canonical text of a bank. The procedural section, if any, comes first.
pub fn render_bank(bank: &Bank) -> String {
    let mut out = String::new();
    if let Some(s) = &bank.procedural {
        out += &header_line(StoreKind::Procedural, s.provider(), s.global_counter(), s.next_seq());
        for p in s.to_parts() {
            out += &encode(
                "proc_entry",
                &ProcEntryLine {
                    id: p.id,
                    key: p.key,
                    created_seq: p.created_seq,
                    last_access: p.last_access,
                    count: p.count,
                    name: p.payload.name().to_string(),
                    steps: p.payload.steps().iter().map(|s| s.as_str().to_string()).collect(),
                },
            );
        }
    }
    if let Some(s) = &bank.stationary {
        out += &header_line(StoreKind::Stationary, s.provider(), s.global_counter(), s.next_seq());
        for p in s.to_parts() {
            out += &encode(
                "stat_record",
                &StatRecordLine {
                    id: p.id,
                    key: p.key,
                    created_seq: p.created_seq,
                    last_access: p.last_access,
                    count: p.count,
                    description: p.payload.description.clone(),
                },
            );
            for v in &p.payload.variants {
                out += &encode(
                    "stat_variant",
                    &StatVariantLine {
                        record: p.id,
                        created_seq: v.created_seq,
                        last_access: v.last_access,
                        count: v.count,
                        features: v.descriptor.features.clone(),
                        blob: v.descriptor.blob.as_ref().map(|b| BASE64.encode(b)),
                    },
                );
            }
        }
    }
    out
}

pub fn save_bank(path: &Path, bank: &Bank) -> Result<usize, PersistError> {
    write_atomic(path, &render_bank(bank))
}

pub fn load_bank(path: &Path, registry: &ProviderRegistry) -> Result<Bank, PersistError> {
    parse_bank(&std::fs::read_to_string(path)?, registry)
}

pub fn parse_bank(text: &str, registry: &ProviderRegistry) -> Result<Bank, PersistError> {
    let mut bank = Bank::default();
    let mut iter = lines(text)?.into_iter().peekable();
    while let Some(first) = iter.next() {
        let at = first.number;
        let h: BankHeader = first.header()?;
        let provider = registry.resolve(&h.provider_name, h.dim)?;
        let store_err = |e: crate::memstore::StoreError| PersistError::corrupt(at, e.to_string());
        match h.store {
            StoreKind::Procedural => {
                if bank.procedural.is_some() {
                    return Err(PersistError::corrupt(at, "second procedural section"));
                }
                let mut parts = Vec::new();
                while let Some(line) = iter.next_if(|l| l.kind != "header") {
                    let n = line.number;
                    if line.kind != "proc_entry" {
                        return Err(PersistError::corrupt(
                            n,
                            format!("unexpected {:?} in a procedural section", line.kind),
                        ));
                    }
                    let e: ProcEntryLine = line.decode()?;
                    let steps: Vec<&str> = e.steps.iter().map(String::as_str).collect();
                    let payload = Workflow::from_strs(&e.name, &steps)
                        .map_err(|err| PersistError::corrupt(n, err.to_string()))?;
                    parts.push(EntryParts {
                        id: e.id,
                        key: e.key,
                        payload,
                        created_seq: e.created_seq,
                        last_access: e.last_access,
                        count: e.count,
                    });
                }
                bank.procedural =
                    Some(MemoryStore::from_parts(provider, h.c_global, h.next_seq, parts).map_err(store_err)?);
            }
            StoreKind::Stationary => {
                if bank.stationary.is_some() {
                    return Err(PersistError::corrupt(at, "second stationary section"));
                }
                let mut parts: Vec<EntryParts<ElementRecord>> = Vec::new();
                while let Some(line) = iter.next_if(|l| l.kind != "header") {
                    let n = line.number;
                    match line.kind.as_str() {
                        "stat_record" => {
                            if parts.last().is_some_and(|p| p.payload.variants.is_empty()) {
                                return Err(PersistError::corrupt(n, "previous record has no variants"));
                            }
                            let r: StatRecordLine = line.decode()?;
                            parts.push(EntryParts {
                                id: r.id,
                                key: r.key,
                                payload: ElementRecord { description: r.description, variants: Vec::new() },
                                created_seq: r.created_seq,
                                last_access: r.last_access,
                                count: r.count,
                            });
                        }
                        "stat_variant" => {
                            let v: StatVariantLine = line.decode()?;
                            let owner = parts.last_mut().filter(|p| p.id == v.record).ok_or_else(|| {
                                PersistError::corrupt(n, format!("variant of record {} is out of place", v.record))
                            })?;
                            if v.count == 0 || v.last_access > h.c_global || v.created_seq >= h.next_seq {
                                return Err(PersistError::corrupt(n, "variant metadata out of range"));
                            }
                            let blob = v
                                .blob
                                .map(|b| BASE64.decode(b))
                                .transpose()
                                .map_err(|e| PersistError::corrupt(n, format!("blob: {e}")))?;
                            let descriptor = PatchDescriptor { features: v.features, blob };
                            descriptor.validate().map_err(|e| PersistError::corrupt(n, e.to_string()))?;
                            owner.payload.variants.push(PatchVariant {
                                descriptor,
                                created_seq: v.created_seq,
                                last_access: v.last_access,
                                count: v.count,
                            });
                        }
                        other => {
                            return Err(PersistError::corrupt(
                                n,
                                format!("unexpected {other:?} in a stationary section"),
                            ))
                        }
                    }
                }
                if parts.last().is_some_and(|p| p.payload.variants.is_empty()) {
                    return Err(PersistError::corrupt(at, "last record has no variants"));
                }
                bank.stationary =
                    Some(MemoryStore::from_parts(provider, h.c_global, h.next_seq, parts).map_err(store_err)?);
            }
        }
    }
    Ok(bank)
}

/// A record type with its own file kind.
pub trait Record: Serialize + DeserializeOwned {
    /// Value of the header's `content` field.
    const CONTENT: &'static str;
    /// Value of each record's `kind` field.
    const KIND: &'static str;
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHeader {
    format_version: u64,
    content: String,
}

pub fn render_records<T: Record>(records: &[T]) -> String {
    let mut out = encode("header", &FileHeader { format_version: FORMAT_VERSION, content: T::CONTENT.into() });
    for r in records {
        out += &encode(T::KIND, r);
    }
    out
}

pub fn parse_records<T: Record>(text: &str) -> Result<Vec<T>, PersistError> {
    let mut iter = lines(text)?.into_iter();
    let first = iter.next().expect("lines() rejects empty files");
    let at = first.number;
    let h: FileHeader = first.header()?;
    if h.content != T::CONTENT {
        return Err(PersistError::corrupt(at, format!("expected a {} file, found {}", T::CONTENT, h.content)));
    }
    iter.map(|line| {
        if line.kind != T::KIND {
            return Err(PersistError::corrupt(line.number, format!("expected {:?}, found {:?}", T::KIND, line.kind)));
        }
        line.decode()
    })
    .collect()
}

pub fn write_records<T: Record>(path: &Path, records: &[T]) -> Result<usize, PersistError> {
    write_atomic(path, &render_records(records))
}

pub fn read_records<T: Record>(path: &Path) -> Result<Vec<T>, PersistError> {
    parse_records(&std::fs::read_to_string(path)?)
}

/// An instruction to be clustered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub id: String,
    pub text: String,
}

impl Record for InstructionRecord {
    const CONTENT: &'static str = "instructions";
    const KIND: &'static str = "instruction";
}

/// Member ids of one maximal clique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRecord {
    pub members: Vec<String>,
}

impl Record for ClusterRecord {
    const CONTENT: &'static str = "clusters";
    const KIND: &'static str = "cluster";
}

/// A trajectory with the id clusters refer to it by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub id: String,
    pub instruction: String,
    pub actions: Vec<Action>,
    pub success: bool,
}

impl Record for TrajectoryRecord {
    const CONTENT: &'static str = "trajectories";
    const KIND: &'static str = "trajectory";
}

impl TrajectoryRecord {
    pub fn new(id: impl Into<String>, t: Trajectory) -> Self {
        Self { id: id.into(), instruction: t.instruction, actions: t.actions, success: t.success }
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory { instruction: self.instruction.clone(), actions: self.actions.clone(), success: self.success }
    }
}

/// File form of a [`Triplet`]; the blob is base-64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletRecord {
    pub pre_screen: String,
    pub action: Action,
    pub click_point: [f64; 2],
    pub element_box: Rect,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob: Option<String>,
    pub description: String,
    pub post_screen: String,
}

impl Record for TripletRecord {
    const CONTENT: &'static str = "triplets";
    const KIND: &'static str = "triplet";
}

impl From<&Triplet> for TripletRecord {
    fn from(t: &Triplet) -> Self {
        Self {
            pre_screen: t.pre_screen.clone(),
            action: t.action.clone(),
            click_point: [t.click_point.0, t.click_point.1],
            element_box: t.element_box,
            features: t.descriptor.features.clone(),
            blob: t.descriptor.blob.as_ref().map(|b| BASE64.encode(b)),
            description: t.description.clone(),
            post_screen: t.post_screen.clone(),
        }
    }
}

impl TripletRecord {
    pub fn triplet(&self) -> Result<Triplet, base64::DecodeError> {
        Ok(Triplet {
            pre_screen: self.pre_screen.clone(),
            action: self.action.clone(),
            click_point: (self.click_point[0], self.click_point[1]),
            element_box: self.element_box,
            descriptor: PatchDescriptor {
                features: self.features.clone(),
                blob: self.blob.as_ref().map(|b| BASE64.decode(b)).transpose()?,
            },
            description: self.description.clone(),
            post_screen: self.post_screen.clone(),
        })
    }
}

impl Record for Scenario {
    const CONTENT: &'static str = "scenario";
    const KIND: &'static str = "scenario";
}

impl Record for EpisodeRecord {
    const CONTENT: &'static str = "transcripts";
    const KIND: &'static str = "episode";
}

/// Reads a scenario file, which holds exactly one scenario record.
pub fn read_scenario(path: &Path) -> Result<Scenario, PersistError> {
    let mut records: Vec<Scenario> = read_records(path)?;
    if records.len() != 1 {
        return Err(PersistError::corrupt(1, format!("expected one scenario, found {}", records.len())));
    }
    Ok(records.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memstore::RetrievalConfig;
    use crate::procedural::record_workflow;
    use crate::stationary::{upsert_element, Thresholds};

    fn sample() -> Bank {
        let provider = HashedBagOfWords::shared(DEFAULT_DIM);
        let mut proc = MemoryStore::new(provider.clone());
        record_workflow(
            &mut proc,
            Workflow::from_strs("send [Query]", &["Tap open", "Tap send", "Type [Query]"]).unwrap(),
        )
        .unwrap();
        proc.retrieve("send hello", &RetrievalConfig::default()).unwrap();
        let mut stat = MemoryStore::new(provider);
        let patch =
            PatchDescriptor::new(vec![0.1, -0.10165942496730619, 1.0 / 3.0]).unwrap().with_blob(vec![0, 255, 7, 128]);
        upsert_element(&mut stat, "open settings", &patch, Thresholds::default()).unwrap();
        let other = PatchDescriptor::new(vec![1.0, 0.0, 0.0]).unwrap();
        upsert_element(&mut stat, "open settings", &other, Thresholds::default()).unwrap();
        Bank { procedural: Some(proc), stationary: Some(stat) }
    }

    #[test]
    fn empty_store_is_header_only() {
        let bank = Bank { procedural: Some(MemoryStore::new(HashedBagOfWords::shared(64))), stationary: None };
        let text = render_bank(&bank);
        assert_eq!(
            text,
            "{\"c_global\":0,\"dim\":64,\"format_version\":1,\"kind\":\"header\",\"next_seq\":0,\"provider_name\":\"hashed-bow\",\"store\":\"procedural\"}\n"
        );
        let loaded = parse_bank(&text, &ProviderRegistry::default()).unwrap();
        assert!(loaded.procedural.unwrap().is_empty() && loaded.stationary.is_none());
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let text = render_bank(&sample());
        let again = render_bank(&parse_bank(&text, &ProviderRegistry::default()).unwrap());
        assert_eq!(text, again);
    }

    #[test]
    fn blob_survives() {
        let text = render_bank(&sample());
        let loaded = parse_bank(&text, &ProviderRegistry::default()).unwrap();
        let stat = loaded.stationary.unwrap();
        let rec = &stat.entries()[0].payload;
        assert_eq!(rec.variants[0].descriptor.blob.as_deref(), Some(&[0u8, 255, 7, 128][..]));
        assert_eq!(rec.variants[0].descriptor.features[2], 1.0 / 3.0);
        assert_eq!(rec.variants[1].descriptor.blob, None);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let text = render_bank(&sample());
        let reg = ProviderRegistry::empty().with(HashedBagOfWords::shared(32));
        assert!(matches!(parse_bank(&text, &reg), Err(PersistError::ProviderMismatch(_))));
        assert!(matches!(parse_bank(&text, &ProviderRegistry::empty()), Err(PersistError::ProviderMismatch(_))));
    }

    #[test]
    fn truncated_line_reports_its_number() {
        let text = render_bank(&sample());
        let cut = &text[..text.len() - 10];
        let n = cut.lines().count();
        match parse_bank(cut, &ProviderRegistry::default()) {
            Err(PersistError::CorruptRecord { line, .. }) => assert_eq!(line, n),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_gate_and_strict_schema() {
        let text = render_bank(&sample()).replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            parse_bank(&text, &ProviderRegistry::default()),
            Err(PersistError::UnknownFormatVersion { line: 1, found: 2 })
        ));
        let text = render_bank(&sample()).replacen("\"count\":", "\"extra\":0,\"count\":", 1);
        assert!(matches!(
            parse_bank(&text, &ProviderRegistry::default()),
            Err(PersistError::CorruptRecord { line: 2, .. })
        ));
        let text = render_bank(&sample()).replacen("proc_entry", "mystery", 1);
        assert!(matches!(
            parse_bank(&text, &ProviderRegistry::default()),
            Err(PersistError::CorruptRecord { line: 2, .. })
        ));
        let text = render_bank(&sample()).replacen(",\"key\":\"send [Query]\"", "", 1);
        assert!(matches!(
            parse_bank(&text, &ProviderRegistry::default()),
            Err(PersistError::CorruptRecord { line: 2, .. })
        ));
    }

    #[test]
    fn record_files_round_trip() {
        let recs = vec![
            InstructionRecord { id: "a".into(), text: "send hello".into() },
            InstructionRecord { id: "b".into(), text: "send bye".into() },
        ];
        let text = render_records(&recs);
        assert!(text.starts_with("{\"content\":\"instructions\",\"format_version\":1,\"kind\":\"header\"}\n"));
        assert_eq!(parse_records::<InstructionRecord>(&text).unwrap(), recs);
        assert!(parse_records::<ClusterRecord>(&text).is_err());
        let bad = text.replace("\"text\"", "\"txt\"");
        assert!(matches!(parse_records::<InstructionRecord>(&bad), Err(PersistError::CorruptRecord { line: 2, .. })));
    }

    #[test]
    fn triplet_blob_round_trips() {
        let t = Triplet {
            pre_screen: "s0".into(),
            action: Action::click("open settings"),
            click_point: (5.0, 5.0),
            element_box: Rect::new(0.0, 0.0, 10.0, 10.0),
            descriptor: PatchDescriptor::new(vec![0.5, 0.5]).unwrap().with_blob(b"png".to_vec()),
            description: "open settings".into(),
            post_screen: "s1".into(),
        };
        let text = render_records(&[TripletRecord::from(&t)]);
        let back = parse_records::<TripletRecord>(&text).unwrap()[0].triplet().unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        save_bank(&path, &sample()).unwrap();
        let n = save_bank(&path, &Bank::default()).unwrap();
        assert_eq!(n, 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
