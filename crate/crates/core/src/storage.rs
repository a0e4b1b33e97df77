//! Cloud record store and semi-trusted re-encryption proxy.
//!
//! The proxy holds encrypted sensor records, answers inclusive time-range
//! queries, applies re-encryption keys record by record, and publishes the
//! results under short-lived share tokens. Its whole interface accepts only
//! public material: serialized ciphertexts, re-encryption keys, identities.
//! No private key type appears anywhere in this module, which is the point.
//!
//! Persistence is an append-only JSON-lines file per sensor under one
//! directory, mirrored by an in-memory index; reopening the directory
//! reconstructs the store. Shares additionally write a manifest file each,
//! removed when the share is garbage collected. An in-memory mode backs
//! simulations that do not need durability.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{DecodeError, GroupParams};
use crate::pre::{reencrypt, Ciphertext, Identity, Metadata, ReEncKey};

pub const DEFAULT_SHARE_TTL_S: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("ciphertext does not parse: {0}")]
    MalformedCiphertext(DecodeError),
    #[error("ciphertext metadata does not match the sensor id")]
    IdMismatch,
    #[error("no records selected")]
    EmptySelection,
    #[error("selection spans more than one sensor")]
    MixedSelection,
    #[error("unknown record id {0}")]
    UnknownRecord(u64),
    #[error("no re-encryption key for record metadata {0:?}")]
    RekeyMissing(Metadata),
    #[error("unknown share id")]
    UnknownShare,
    #[error("share has expired")]
    Expired,
    #[error("store file corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    pub record_id: u64,
    pub sensor_id: Identity,
    /// Serialized [`Ciphertext`]; guaranteed to parse for the store's group.
    pub ciphertext: Vec<u8>,
    /// Bulk payload under the content-key keystream, when the record carries
    /// more than the 32-byte block.
    pub payload_ct: Option<Vec<u8>>,
    pub stored_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareItem {
    /// Serialized re-encrypted ciphertext for the requester.
    pub reenc: Vec<u8>,
    pub payload_ct: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TempShare {
    pub share_id: String,
    pub items: Vec<ShareItem>,
    pub created_at: f64,
    pub ttl_s: f64,
}

impl TempShare {
    pub fn expired_at(&self, now: f64) -> bool {
        self.created_at + self.ttl_s <= now
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    record_id: u64,
    sensor_id: Identity,
    ct: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload_ct: Option<String>,
    stored_at: f64,
}

#[derive(Serialize)]
struct ShareManifest<'a> {
    share_id: &'a str,
    items: Vec<String>,
    created_at: f64,
    ttl_s: f64,
}

pub struct ProxyStore {
    group: GroupParams,
    dir: Option<PathBuf>,
    records: BTreeMap<u64, DataRecord>,
    // sensor -> (record_id, T0) in insertion order, which is record_id order.
    by_sensor: BTreeMap<Identity, Vec<(u64, u32)>>,
    next_record_id: u64,
    shares: BTreeMap<String, TempShare>,
    share_ttl_s: f64,
    rng: ChaCha20Rng,
}

impl ProxyStore {
    /// Volatile store for simulations.
    pub fn in_memory(group: GroupParams, share_ttl_s: f64, seed: u64) -> Self {
        ProxyStore {
            group,
            dir: None,
            records: BTreeMap::new(),
            by_sensor: BTreeMap::new(),
            next_record_id: 1,
            shares: BTreeMap::new(),
            share_ttl_s,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// File-backed store rooted at `dir`; loads any records already present.
    pub fn open(
        dir: impl AsRef<Path>,
        group: GroupParams,
        share_ttl_s: f64,
        seed: u64,
    ) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("shares"))?;
        let mut store = ProxyStore::in_memory(group, share_ttl_s, seed);
        store.dir = Some(dir.clone());

        let mut record_files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("records-") && n.ends_with(".jsonl"))
                    .unwrap_or(false)
            })
            .collect();
        record_files.sort();
        let mut loaded: Vec<DataRecord> = Vec::new();
        for path in record_files {
            let file = fs::File::open(&path)?;
            for line in BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: RecordLine = serde_json::from_str(&line)
                    .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
                let ciphertext = hex::decode(&parsed.ct)
                    .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
                let payload_ct = parsed
                    .payload_ct
                    .map(|p| hex::decode(&p))
                    .transpose()
                    .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
                loaded.push(DataRecord {
                    record_id: parsed.record_id,
                    sensor_id: parsed.sensor_id,
                    ciphertext,
                    payload_ct,
                    stored_at: parsed.stored_at,
                });
            }
        }
        loaded.sort_by_key(|r| r.record_id);
        for rec in loaded {
            let ct = Ciphertext::from_bytes(&group, &rec.ciphertext)
                .map_err(|e| StoreError::Corrupt(format!("record {}: {e}", rec.record_id)))?;
            if ct.meta.id != rec.sensor_id {
                return Err(StoreError::Corrupt(format!(
                    "record {}: sensor id mismatch",
                    rec.record_id
                )));
            }
            store
                .by_sensor
                .entry(rec.sensor_id)
                .or_default()
                .push((rec.record_id, ct.meta.t0));
            store.next_record_id = store.next_record_id.max(rec.record_id + 1);
            store.records.insert(rec.record_id, rec);
        }
        Ok(store)
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn record(&self, record_id: u64) -> Option<&DataRecord> {
        self.records.get(&record_id)
    }

    /// Fault injection for mismatch-detection tests: flip one bit inside the
    /// stored scheme ciphertext (past the version byte, so it still parses).
    /// Affects the served copy only; the on-disk log keeps the original.
    pub fn corrupt_record_for_testing(&mut self, record_id: u64) -> bool {
        match self.records.get_mut(&record_id) {
            Some(rec) if rec.ciphertext.len() > 1 => {
                rec.ciphertext[1] ^= 0x01;
                true
            }
            _ => false,
        }
    }

    /// Validate and append one encrypted record.
    pub fn put_record(
        &mut self,
        sensor_id: Identity,
        ciphertext: &[u8],
        payload_ct: Option<&[u8]>,
        now: f64,
    ) -> Result<u64, StoreError> {
        let ct = Ciphertext::from_bytes(&self.group, ciphertext)
            .map_err(StoreError::MalformedCiphertext)?;
        if ct.meta.id != sensor_id {
            return Err(StoreError::IdMismatch);
        }
        let record_id = self.next_record_id;
        let record = DataRecord {
            record_id,
            sensor_id,
            ciphertext: ciphertext.to_vec(),
            payload_ct: payload_ct.map(|p| p.to_vec()),
            stored_at: now,
        };
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("records-{}.jsonl", sensor_id.hex()));
            let line = serde_json::to_string(&RecordLine {
                record_id,
                sensor_id,
                ct: hex::encode(&record.ciphertext),
                payload_ct: record.payload_ct.as_ref().map(hex::encode),
                stored_at: now,
            })
            .expect("record line serializes");
            let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(file, "{line}")?;
        }
        self.next_record_id += 1;
        self.by_sensor.entry(sensor_id).or_default().push((record_id, ct.meta.t0));
        self.records.insert(record_id, record);
        Ok(record_id)
    }

    /// Records for `sensor_id` with `T0` in the inclusive range, in record_id
    /// order.
    pub fn query_records(&self, sensor_id: Identity, t_from: u32, t_to: u32) -> Vec<&DataRecord> {
        assert!(t_from <= t_to, "query_records: inverted time range");
        match self.by_sensor.get(&sensor_id) {
            None => Vec::new(),
            Some(entries) => entries
                .iter()
                .filter(|(_, t0)| (t_from..=t_to).contains(t0))
                .map(|(rid, _)| &self.records[rid])
                .collect(),
        }
    }

    /// Re-encrypt the selected records for `id_b`, matching each record to
    /// its per-metadata key, and publish the result under a fresh share id.
    pub fn apply_rekey(
        &mut self,
        record_ids: &[u64],
        rekeys: &[(Metadata, ReEncKey)],
        id_b: Identity,
        now: f64,
    ) -> Result<TempShare, StoreError> {
        if record_ids.is_empty() {
            return Err(StoreError::EmptySelection);
        }
        let mut items = Vec::with_capacity(record_ids.len());
        let mut sensor: Option<Identity> = None;
        for &rid in record_ids {
            let rec = self.records.get(&rid).ok_or(StoreError::UnknownRecord(rid))?;
            match sensor {
                None => sensor = Some(rec.sensor_id),
                Some(s) if s != rec.sensor_id => return Err(StoreError::MixedSelection),
                _ => {}
            }
            let ct = Ciphertext::from_bytes(&self.group, &rec.ciphertext)
                .expect("stored ciphertexts always parse");
            let rk = rekeys
                .iter()
                .find(|(meta, _)| *meta == ct.meta)
                .map(|(_, rk)| rk)
                .ok_or(StoreError::RekeyMissing(ct.meta))?;
            let re = reencrypt(&ct, rk, id_b);
            items.push(ShareItem {
                reenc: re.to_bytes(&self.group),
                payload_ct: rec.payload_ct.clone(),
            });
        }
        let share_id = self.fresh_share_id();
        let share = TempShare { share_id: share_id.clone(), items, created_at: now, ttl_s: self.share_ttl_s };
        if let Some(dir) = &self.dir {
            let manifest = ShareManifest {
                share_id: &share.share_id,
                items: share.items.iter().map(|i| hex::encode(&i.reenc)).collect(),
                created_at: share.created_at,
                ttl_s: share.ttl_s,
            };
            let path = dir.join("shares").join(format!("{share_id}.json"));
            fs::write(path, serde_json::to_string(&manifest).expect("manifest serializes"))?;
        }
        self.shares.insert(share_id, share.clone());
        Ok(share)
    }

    fn fresh_share_id(&mut self) -> String {
        loop {
            let mut token = [0u8; 16];
            self.rng.fill_bytes(&mut token);
            let id = hex::encode(token);
            if !self.shares.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn fetch_share(&self, share_id: &str, now: f64) -> Result<&TempShare, StoreError> {
        let share = self.shares.get(share_id).ok_or(StoreError::UnknownShare)?;
        if share.expired_at(now) {
            return Err(StoreError::Expired);
        }
        Ok(share)
    }

    /// Drop every share past its ttl; returns how many were removed.
    pub fn gc_expired(&mut self, now: f64) -> usize {
        let dead: Vec<String> = self
            .shares
            .values()
            .filter(|s| s.expired_at(now))
            .map(|s| s.share_id.clone())
            .collect();
        for id in &dead {
            self.shares.remove(id);
            if let Some(dir) = &self.dir {
                let _ = fs::remove_file(dir.join("shares").join(format!("{id}.json")));
            }
        }
        dead.len()
    }
}
