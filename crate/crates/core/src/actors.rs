//! Discrete-event simulation of the end-to-end sharing flow.
//!
//! One scenario wires a certificate authority, a data owner with its sensors,
//! a set of requesters, the storage proxy, and the ledger into the nine-step
//! protocol:
//!
//! 1. owner registers sensors on the ledger
//! 2. sensors receive key material and publish encrypted readings
//! 3. a requester submits an escrowed data request
//! 4. the mined request puts the requester's certificate on the contract
//! 5. the proxy is notified and filters matching records
//! 6. the owner posts per-record re-encryption keys (or grants directly in
//!    baseline mode, with no mined transaction)
//! 7. the proxy re-encrypts the selection into a temporary share
//! 8. the share address is mined onto the contract
//! 9. the requester fetches, decrypts, verifies, and confirms
//!
//! Every action is an event on a deterministic scheduler keyed by simulated
//! time; all randomness flows from the scenario seed, so a seed fixes the
//! entire trace byte for byte. Latency is dominated by block-inclusion waits
//! exactly as on a real chain: the request, re-key, and share-address hops
//! each cost one wait on the re-encryption path, and the re-key hop vanishes
//! in baseline mode.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupError, GroupParams};
use crate::ledger::{Address, Ledger, LedgerConfig, LedgerEvent, TxPayload};
use crate::pre::{
    decrypt1, decrypt2, dem_apply, derive_public_key, encrypt, issue_keypair, rekey, Certificate,
    Ciphertext, Identity, KeyPair, MasterSecret, MessageBlock, Metadata, PublicParams,
    ReEncCiphertext, ReEncKey, SchemeError,
};
use crate::storage::{ProxyStore, StoreError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("scenario stalled at simulated t={at:.1}s with {pending} request(s) incomplete")]
    Stalled { at: f64, pending: usize },
    #[error("wiring failure: {0}")]
    Internal(String),
}

#[derive(Debug, Error)]
pub enum ActorError {
    #[error("timestamp already used by this sensor")]
    DuplicateTimestamp,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Which group backs a scenario. Serializes as `"production256"` or
/// `{"mock": q}` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupChoice {
    Production256,
    Mock(u32),
}

impl GroupChoice {
    pub fn to_group(self) -> Result<GroupParams, GroupError> {
        match self {
            GroupChoice::Production256 => Ok(GroupParams::production()),
            GroupChoice::Mock(q) => GroupParams::insecure_mock(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_sensors: usize,
    pub n_requesters: usize,
    pub readings_per_sensor: usize,
    pub reading_interval_s: f64,
    pub block_interval_s: f64,
    pub block_capacity: usize,
    pub price: u64,
    pub seed: u64,
    /// `false` models the no-re-encryption comparison system: the owner
    /// grants the share off-chain (no mined re-key transaction) and serves
    /// the decryption itself when the requester fetches.
    pub pre_enabled: bool,
    pub group: GroupChoice,
    pub initial_balance: u64,
    pub tx_fee: u64,
    pub share_ttl_s: f64,
    /// Owner compute time between seeing a request and posting the re-keys.
    pub owner_rekey_delay_s: f64,
    /// Owner decision time for a baseline grant.
    pub grant_delay_s: f64,
    /// Proxy compute time to filter and re-encrypt a selection.
    pub proxy_delay_s: f64,
    /// Requester time to fetch the share and run decryption.
    pub fetch_decrypt_delay_s: f64,
    /// Time to hand key material to a sensor after its registration mines.
    pub provision_delay_s: f64,
    /// Fault injection: flip one stored ciphertext byte for this record id
    /// before the proxy serves it, to prove mismatch detection fires.
    pub tamper_record: Option<u64>,
    /// Wall-clock seconds to sleep per simulated second (demos only).
    pub realtime_scale: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_sensors: 1,
            n_requesters: 1,
            readings_per_sensor: 3,
            reading_interval_s: 10.0,
            block_interval_s: 13.0,
            block_capacity: 10,
            price: 40,
            seed: 7,
            pre_enabled: true,
            group: GroupChoice::Production256,
            initial_balance: 1000,
            tx_fee: 0,
            share_ttl_s: 3600.0,
            owner_rekey_delay_s: 4.0,
            grant_delay_s: 0.5,
            proxy_delay_s: 3.0,
            fetch_decrypt_delay_s: 2.0,
            provision_delay_s: 1.0,
            tamper_record: None,
            realtime_scale: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidConfig(m.into()));
        if self.n_sensors < 1 || self.n_requesters < 1 || self.readings_per_sensor < 1 {
            return bad("n_sensors, n_requesters, readings_per_sensor must all be >= 1");
        }
        if self.reading_interval_s < 1.0 {
            return bad("reading_interval_s must be >= 1 so per-sensor timestamps stay unique");
        }
        if !(self.block_interval_s > 0.0) {
            return bad("block_interval_s must be positive");
        }
        if self.initial_balance < self.price + self.tx_fee {
            return bad("initial_balance cannot cover one request");
        }
        self.group.to_group().map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Simulated time after which an unfinished request counts as stalled.
    pub fn timeout_s(&self) -> f64 {
        100.0 * self.block_interval_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub sim_time: f64,
    pub actor: String,
    /// Protocol step 1..=9.
    pub step: u8,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyRecord {
    /// Contract id of the request.
    pub request_id: u64,
    pub t_request: f64,
    pub t_request_mined: f64,
    /// Baseline mode: time of the off-chain grant.
    pub t_rekey_mined: f64,
    pub t_share_ready: f64,
    pub t_data_ready: f64,
    pub t_decrypted: f64,
    pub verified: bool,
}

impl LatencyRecord {
    pub fn latency(&self) -> f64 {
        self.t_decrypted - self.t_request
    }
}

/// Which actors hold which private keys, assembled from live actor state at
/// the end of a run. The proxy never appears with a key because its type has
/// no way to hold one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapabilityReport {
    pub holders: Vec<(String, Vec<Identity>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioTrace {
    pub events: Vec<TraceEvent>,
    pub latencies: Vec<LatencyRecord>,
    pub notes: Vec<String>,
    pub mismatches: usize,
    pub blocks_mined: u64,
    /// Timestamp of every mined block, for load analysis.
    pub block_times: Vec<f64>,
    pub final_time: f64,
    pub audit: CapabilityReport,
}

impl ScenarioTrace {
    pub fn all_verified(&self) -> bool {
        self.mismatches == 0 && self.latencies.iter().all(|l| l.verified)
    }

    pub fn mean_latency(&self) -> f64 {
        if self.latencies.is_empty() {
            return 0.0;
        }
        self.latencies.iter().map(|l| l.latency()).sum::<f64>() / self.latencies.len() as f64
    }

    /// One JSON object per line: step events, then latency records, then notes.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let mut v = serde_json::to_value(e).expect("trace event serializes");
            v["type"] = "step".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for l in &self.latencies {
            let mut v = serde_json::to_value(l).expect("latency record serializes");
            v["type"] = "latency".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for n in &self.notes {
            out.push_str(
                &serde_json::json!({"type": "note", "detail": n}).to_string(),
            );
            out.push('\n');
        }
        out
    }
}

/// A sensor holding its own certified key. Readings are encrypted
/// KEM/DEM-style: the scheme encrypts a fresh content key, the payload rides
/// under the derived keystream.
pub struct SensorActor {
    pub keypair: KeyPair,
    last_t0: Option<u32>,
}

impl SensorActor {
    pub fn new(keypair: KeyPair) -> Self {
        SensorActor { keypair, last_t0: None }
    }

    pub fn id(&self) -> Identity {
        self.keypair.id
    }

    /// Encrypt and store one reading at `T0 = floor(now)`. Each `T0` must be
    /// fresh for this sensor: the encryption nonce is derived from
    /// `(key, meta)`, so reuse would reuse a pad.
    pub fn publish_reading(
        &mut self,
        pp: &PublicParams,
        store: &mut ProxyStore,
        payload: &[u8],
        now: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<(u64, u32), ActorError> {
        let t0 = now as u32;
        if self.last_t0 == Some(t0) || self.last_t0.map_or(false, |last| t0 <= last) {
            return Err(ActorError::DuplicateTimestamp);
        }
        let content_key = MessageBlock::random(rng);
        let ct = encrypt(pp, &self.keypair, &content_key, t0);
        let payload_ct = dem_apply(&content_key, &ct.meta, payload);
        let record_id =
            store.put_record(self.keypair.id, &ct.to_bytes(&pp.group), Some(&payload_ct), now)?;
        self.last_t0 = Some(t0);
        Ok((record_id, t0))
    }
}

/// The data owner: registers sensors, keeps their keys (it must, to compute
/// re-encryption keys), and answers requests.
pub struct OwnerActor {
    pub address: Address,
    pub sensor_keys: BTreeMap<Identity, KeyPair>,
    published: BTreeMap<Identity, Vec<u32>>,
}

impl OwnerActor {
    pub fn new(address: Address) -> Self {
        OwnerActor { address, sensor_keys: BTreeMap::new(), published: BTreeMap::new() }
    }

    pub fn adopt_sensor(&mut self, keypair: KeyPair) {
        self.sensor_keys.insert(keypair.id, keypair);
    }

    pub fn note_published(&mut self, sensor: Identity, t0: u32) {
        self.published.entry(sensor).or_default().push(t0);
    }

    /// One re-encryption key per published record in the requested range.
    pub fn build_rekeys(
        &self,
        pp: &PublicParams,
        sensor: Identity,
        requester_id: Identity,
        requester_cert: &Certificate,
        t_from: u32,
        t_to: u32,
    ) -> Vec<(Metadata, ReEncKey)> {
        let kp = &self.sensor_keys[&sensor];
        self.published
            .get(&sensor)
            .map(|t0s| {
                t0s.iter()
                    .filter(|t0| (t_from..=t_to).contains(t0))
                    .map(|&t0| {
                        let meta = Metadata::new(sensor, t0);
                        (meta, rekey(pp, kp, requester_id, requester_cert, &meta))
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

const REQUESTER_ID_BASE: u32 = 0x8000_0000;

struct RequesterActor {
    address: Address,
    keypair: Option<KeyPair>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    MineBlock,
    ProvisionSensor { sensor: usize },
    PublishReading { sensor: usize, k: usize },
    SubmitRequests,
    OwnerServeRequest { contract_id: u64 },
    ProxyPrepare { contract_id: u64 },
    RequesterFetch { contract_id: u64 },
}

struct Entry {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct PendingLatency {
    record: LatencyRecord,
    requester: usize,
}

struct Simulation {
    cfg: ScenarioConfig,
    pp: PublicParams,
    msk: MasterSecret,
    ledger: Ledger,
    store: ProxyStore,
    owner: OwnerActor,
    sensors: Vec<SensorActor>,
    requesters: Vec<RequesterActor>,
    proxy_addr: Address,
    crypto_rng: ChaCha20Rng,
    heap: BinaryHeap<Entry>,
    next_seq: u64,
    now: f64,
    cursor: usize,
    // Original plaintexts by (sensor, T0) for end verification.
    originals: BTreeMap<(Identity, u32), Vec<u8>>,
    records_stored: usize,
    latencies: BTreeMap<u64, PendingLatency>,
    // Requesters that submitted but whose contract has not mined yet, with
    // submission times; RequestCreated events claim them by address.
    awaiting_contract: BTreeMap<Address, (usize, f64)>,
    completed: usize,
    mismatches: usize,
    tampered: bool,
    trace: Vec<TraceEvent>,
    notes: Vec<String>,
    blocks_mined: u64,
    block_times: Vec<f64>,
}

impl Simulation {
    fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let group = cfg.group.to_group().expect("validated above");
        let mut crypto_rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let (pp, msk) = crate::pre::setup(group, &mut crypto_rng);
        let ledger_cfg = LedgerConfig {
            block_interval_s: cfg.block_interval_s,
            block_capacity: cfg.block_capacity,
            tx_fee: cfg.tx_fee,
            request_ttl_s: cfg.timeout_s(),
            seed: cfg.seed,
        };
        let mut ledger = Ledger::new(group, ledger_cfg);
        let store = ProxyStore::in_memory(group, cfg.share_ttl_s, cfg.seed.wrapping_add(1));

        let owner_addr = Address::from_label("owner-0");
        let proxy_addr = Address::from_label("proxy-0");
        ledger.fund(owner_addr, cfg.initial_balance);
        ledger.fund(proxy_addr, cfg.initial_balance);
        let requesters: Vec<RequesterActor> = (0..cfg.n_requesters)
            .map(|i| {
                let address = Address::from_label(&format!("requester-{i}"));
                ledger.fund(address, cfg.initial_balance);
                RequesterActor { address, keypair: None }
            })
            .collect();

        Ok(Simulation {
            pp,
            msk,
            ledger,
            store,
            owner: OwnerActor::new(owner_addr),
            sensors: Vec::new(),
            requesters,
            proxy_addr,
            crypto_rng,
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0.0,
            cursor: 0,
            originals: BTreeMap::new(),
            records_stored: 0,
            latencies: BTreeMap::new(),
            awaiting_contract: BTreeMap::new(),
            completed: 0,
            mismatches: 0,
            tampered: false,
            trace: Vec::new(),
            notes: Vec::new(),
            blocks_mined: 0,
            block_times: Vec::new(),
            cfg,
        })
    }

    fn schedule(&mut self, time: f64, ev: Ev) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { time, seq, ev });
    }

    fn step_event(&mut self, actor: String, step: u8, detail: String) {
        self.trace.push(TraceEvent { sim_time: self.now, actor, step, detail });
    }

    fn total_requests(&self) -> usize {
        self.cfg.n_requesters
    }

    fn run(mut self) -> Result<ScenarioTrace, ScenarioError> {
        // Step 1 submissions: keys are created up front (ids are assigned
        // sequentially, so the owner knows them), the registration carries
        // each sensor's certificate.
        for i in 0..self.cfg.n_sensors {
            let id = Identity(i as u32 + 1);
            let kp = issue_keypair(&self.pp, &self.msk, id, &mut self.crypto_rng)
                .map_err(|e| ScenarioError::Internal(format!("sensor keygen: {e}")))?;
            let payload = TxPayload::RegisterSensor {
                cert: kp.cert,
                price: self.cfg.price,
                description: format!("sensor-{i}"),
                mac: mac_for(i),
            };
            self.owner.adopt_sensor(kp);
            let nonce = self.ledger.next_nonce(&self.owner.address);
            self.ledger
                .submit_tx(self.owner.address, nonce, payload, 0.0)
                .map_err(|e| ScenarioError::Internal(format!("register submit: {e}")))?;
        }

        self.schedule(self.ledger.next_block_at(), Ev::MineBlock);
        let horizon = self.cfg.timeout_s();

        while let Some(entry) = self.heap.pop() {
            if self.cfg.realtime_scale > 0.0 {
                let dt = (entry.time - self.now).max(0.0) * self.cfg.realtime_scale;
                std::thread::sleep(std::time::Duration::from_secs_f64(dt.min(10.0)));
            }
            self.now = entry.time;
            if self.now > horizon {
                return Err(ScenarioError::Stalled {
                    at: self.now,
                    pending: self.total_requests() - self.completed,
                });
            }
            self.handle(entry.ev)?;
            self.drain_ledger_events()?;
            if self.completed == self.total_requests() {
                return Ok(self.finish());
            }
        }
        Err(ScenarioError::Stalled {
            at: self.now,
            pending: self.total_requests() - self.completed,
        })
    }

    fn finish(self) -> ScenarioTrace {
        let mut holders = vec![(
            "owner".to_string(),
            self.owner.sensor_keys.keys().copied().collect::<Vec<_>>(),
        )];
        for (i, s) in self.sensors.iter().enumerate() {
            holders.push((format!("sensor-{i}"), vec![s.keypair.id]));
        }
        for (i, r) in self.requesters.iter().enumerate() {
            holders.push((
                format!("requester-{i}"),
                r.keypair.as_ref().map(|k| vec![k.id]).unwrap_or_default(),
            ));
        }
        // The proxy's type holds ciphertext and re-encryption keys only; it
        // has no private-key state to report.
        holders.push(("proxy".to_string(), Vec::new()));
        ScenarioTrace {
            events: self.trace,
            latencies: self.latencies.values().map(|p| p.record).collect(),
            notes: self.notes,
            mismatches: self.mismatches,
            blocks_mined: self.blocks_mined,
            block_times: self.block_times,
            final_time: self.now,
            audit: CapabilityReport { holders },
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), ScenarioError> {
        match ev {
            Ev::MineBlock => {
                self.ledger.mine_next_block();
                self.blocks_mined += 1;
                self.block_times.push(self.now);
                self.store.gc_expired(self.now);
                self.schedule(self.ledger.next_block_at(), Ev::MineBlock);
            }
            Ev::ProvisionSensor { sensor } => {
                let id = Identity(sensor as u32 + 1);
                let kp = self.owner.sensor_keys[&id].clone();
                debug_assert!(crate::pre::validate_keypair(&self.pp, &kp));
                if self.sensors.len() != sensor {
                    return Err(ScenarioError::Internal("provision order".into()));
                }
                self.sensors.push(SensorActor::new(kp));
                self.step_event(
                    format!("sensor-{sensor}"),
                    2,
                    format!("key material provisioned for id {id}"),
                );
                for k in 0..self.cfg.readings_per_sensor {
                    self.schedule(
                        self.now + (k as f64 + 1.0) * self.cfg.reading_interval_s,
                        Ev::PublishReading { sensor, k },
                    );
                }
            }
            Ev::PublishReading { sensor, k } => {
                let payload =
                    format!("sensor {} reading {} value={:.2}", sensor, k, 17.5 + k as f64 * 0.25);
                let sensor_actor = &mut self.sensors[sensor];
                let sid = sensor_actor.id();
                let (record_id, t0) = sensor_actor
                    .publish_reading(
                        &self.pp,
                        &mut self.store,
                        payload.as_bytes(),
                        self.now,
                        &mut self.crypto_rng,
                    )
                    .map_err(|e| ScenarioError::Internal(format!("publish: {e}")))?;
                self.owner.note_published(sid, t0);
                self.originals.insert((sid, t0), payload.into_bytes());
                self.step_event(
                    format!("sensor-{sensor}"),
                    2,
                    format!("encrypted reading stored as record {record_id} at T0={t0}"),
                );
                self.records_stored += 1;
                if self.records_stored == self.cfg.n_sensors * self.cfg.readings_per_sensor {
                    self.schedule(self.now + 1.0, Ev::SubmitRequests);
                }
            }
            Ev::SubmitRequests => {
                let t_to = self.now as u32;
                for i in 0..self.requesters.len() {
                    let rid = Identity(REQUESTER_ID_BASE + i as u32);
                    // Lazy identity: the CA vouches for any funded account.
                    if self.requesters[i].keypair.is_none() {
                        let has_funds = self.ledger.balance(&self.requesters[i].address) > 0;
                        if !has_funds {
                            return Err(ScenarioError::Internal("requester unfunded".into()));
                        }
                        let kp = issue_keypair(&self.pp, &self.msk, rid, &mut self.crypto_rng)
                            .map_err(|e| ScenarioError::Internal(format!("requester keygen: {e}")))?;
                        self.requesters[i].keypair = Some(kp);
                    }
                    let sensor_id = Identity((i % self.cfg.n_sensors) as u32 + 1);
                    let requester = &self.requesters[i];
                    let kp = requester.keypair.as_ref().unwrap();
                    let payload = TxPayload::RequestData {
                        requester_id: kp.id,
                        requester_cert: kp.cert,
                        sensor_id,
                        t_from: 0,
                        t_to,
                        deposit: self.cfg.price,
                    };
                    let nonce = self.ledger.next_nonce(&requester.address);
                    self.ledger
                        .submit_tx(requester.address, nonce, payload, self.now)
                        .map_err(|e| ScenarioError::Internal(format!("request submit: {e}")))?;
                    self.awaiting_contract.insert(requester.address, (i, self.now));
                    self.step_event(
                        format!("requester-{i}"),
                        3,
                        format!("escrowed request for sensor {sensor_id} range [0,{t_to}]"),
                    );
                }
            }
            Ev::OwnerServeRequest { contract_id } => {
                let contract = self
                    .ledger
                    .contract(contract_id)
                    .ok_or_else(|| ScenarioError::Internal("serve: unknown contract".into()))?
                    .clone();
                if self.cfg.pre_enabled {
                    let rekeys = self.owner.build_rekeys(
                        &self.pp,
                        contract.sensor_id,
                        contract.requester_id,
                        &contract.requester_cert,
                        contract.time_range.0,
                        contract.time_range.1,
                    );
                    let nonce = self.ledger.next_nonce(&self.owner.address);
                    self.ledger
                        .submit_tx(
                            self.owner.address,
                            nonce,
                            TxPayload::PostReKey { contract_id, rekeys },
                            self.now,
                        )
                        .map_err(|e| ScenarioError::Internal(format!("rekey submit: {e}")))?;
                } else {
                    self.ledger
                        .grant_without_rekey(self.owner.address, contract_id)
                        .map_err(|e| ScenarioError::Internal(format!("grant: {e}")))?;
                }
            }
            Ev::ProxyPrepare { contract_id } => {
                self.proxy_prepare(contract_id)?;
            }
            Ev::RequesterFetch { contract_id } => {
                self.requester_fetch(contract_id)?;
            }
        }
        Ok(())
    }

    fn proxy_prepare(&mut self, contract_id: u64) -> Result<(), ScenarioError> {
        let contract = self
            .ledger
            .contract(contract_id)
            .ok_or_else(|| ScenarioError::Internal("prepare: unknown contract".into()))?
            .clone();
        let records =
            self.store.query_records(contract.sensor_id, contract.time_range.0, contract.time_range.1);
        let record_ids: Vec<u64> = records.iter().map(|r| r.record_id).collect();
        if let Some(target) = self.cfg.tamper_record {
            if !self.tampered && record_ids.contains(&target) {
                self.store.corrupt_record_for_testing(target);
                self.tampered = true;
                self.notes.push(format!("fault injection: record {target} corrupted at proxy"));
            }
        }
        let rekeys: Vec<(Metadata, ReEncKey)> = if self.cfg.pre_enabled {
            contract.rekeys.clone().unwrap_or_default()
        } else {
            // Baseline: the share carries the owner-pad blocks unchanged.
            record_ids
                .iter()
                .map(|rid| {
                    let rec = self.store.record(*rid).expect("selected record exists");
                    let ct = Ciphertext::from_bytes(&self.pp.group, &rec.ciphertext)
                        .expect("stored ciphertext parses");
                    (ct.meta, ReEncKey([0u8; 32]))
                })
                .collect()
        };
        let share = self
            .store
            .apply_rekey(&record_ids, &rekeys, contract.requester_id, self.now)
            .map_err(|e| ScenarioError::Internal(format!("apply_rekey: {e}")))?;
        if let Some(p) = self.latencies.get_mut(&contract_id) {
            p.record.t_share_ready = self.now;
        }
        self.step_event(
            "proxy".into(),
            7,
            format!(
                "re-encrypted {} record(s) into share {} for contract {contract_id}",
                share.items.len(),
                share.share_id
            ),
        );
        let nonce = self.ledger.next_nonce(&self.proxy_addr);
        self.ledger
            .submit_tx(
                self.proxy_addr,
                nonce,
                TxPayload::PostDataAddr { contract_id, share_id: share.share_id },
                self.now,
            )
            .map_err(|e| ScenarioError::Internal(format!("dataaddr submit: {e}")))?;
        Ok(())
    }

    fn requester_fetch(&mut self, contract_id: u64) -> Result<(), ScenarioError> {
        let contract = self
            .ledger
            .contract(contract_id)
            .ok_or_else(|| ScenarioError::Internal("fetch: unknown contract".into()))?
            .clone();
        let requester_idx = self
            .latencies
            .get(&contract_id)
            .map(|p| p.requester)
            .ok_or_else(|| ScenarioError::Internal("fetch: unknown latency slot".into()))?;
        let share_id = contract
            .data_addr
            .clone()
            .ok_or_else(|| ScenarioError::Internal("fetch: no data address".into()))?;
        let sensor_cert = self
            .ledger
            .sensor(contract.sensor_id)
            .ok_or_else(|| ScenarioError::Internal("fetch: sensor vanished".into()))?
            .cert;
        let p_a = derive_public_key(&self.pp, &sensor_cert, contract.sensor_id);
        let kp_b = self.requesters[requester_idx].keypair.clone().unwrap();

        let expected =
            self.count_expected(contract.sensor_id, contract.time_range.0, contract.time_range.1);
        let mut ok = 0usize;
        let mut failures = 0usize;
        {
            let share = self
                .store
                .fetch_share(&share_id, self.now)
                .map_err(|e| ScenarioError::Internal(format!("fetch_share: {e}")))?;
            for item in &share.items {
                match self.open_item(&kp_b, &p_a, &item.reenc, item.payload_ct.as_deref()) {
                    Ok((meta, plaintext)) => {
                        if self.originals.get(&(meta.id, meta.t0)) == Some(&plaintext) {
                            ok += 1;
                        } else {
                            failures += 1;
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
        }
        let verified = failures == 0 && ok == expected;
        if !verified {
            self.mismatches += 1;
        }
        if let Some(p) = self.latencies.get_mut(&contract_id) {
            p.record.t_decrypted = self.now;
            p.record.verified = verified;
        }
        self.step_event(
            format!("requester-{requester_idx}"),
            9,
            format!(
                "fetched share for contract {contract_id}: {ok}/{expected} records verified{}",
                if verified { "" } else { " (MISMATCH)" }
            ),
        );
        let requester_addr = self.requesters[requester_idx].address;
        let nonce = self.ledger.next_nonce(&requester_addr);
        self.ledger
            .submit_tx(requester_addr, nonce, TxPayload::Confirm { contract_id }, self.now)
            .map_err(|e| ScenarioError::Internal(format!("confirm submit: {e}")))?;
        Ok(())
    }

    fn count_expected(&self, sensor: Identity, t_from: u32, t_to: u32) -> usize {
        self.originals
            .keys()
            .filter(|(sid, t0)| *sid == sensor && (t_from..=t_to).contains(t0))
            .count()
    }

    /// Decrypt one share item to the payload plaintext. On the re-encryption
    /// path this is the requester's own key; in baseline mode the owner
    /// assists off-chain with the original-key decryption.
    fn open_item(
        &self,
        kp_b: &KeyPair,
        p_a: &crate::group::GroupPoint,
        reenc: &[u8],
        payload_ct: Option<&[u8]>,
    ) -> Result<(Metadata, Vec<u8>), SchemeError> {
        let re = ReEncCiphertext::from_bytes(&self.pp.group, reenc)
            .map_err(|_| SchemeError::AuthError)?;
        let content_key = if self.cfg.pre_enabled {
            decrypt2(&self.pp, kp_b, p_a, &re)?
        } else {
            let ct = Ciphertext { c_a: re.c_a, meta: re.meta, h_a: re.h_a, s_a: re.s_a };
            let owner_kp = self
                .owner
                .sensor_keys
                .get(&re.meta.id)
                .ok_or(SchemeError::AuthError)?;
            decrypt1(&self.pp, owner_kp, &ct)?
        };
        let payload = payload_ct.map(|p| dem_apply(&content_key, &re.meta, p)).unwrap_or_default();
        Ok((re.meta, payload))
    }

    fn drain_ledger_events(&mut self) -> Result<(), ScenarioError> {
        while self.cursor < self.ledger.events_len() {
            let ev = self.ledger.events_since(self.cursor)[0].clone();
            self.cursor += 1;
            match ev.event {
                LedgerEvent::SensorRegistered { sensor_id, .. } => {
                    let idx = (sensor_id.0 - 1) as usize;
                    self.step_event(
                        "owner".into(),
                        1,
                        format!("sensor registered with id {sensor_id}"),
                    );
                    self.schedule(self.now + self.cfg.provision_delay_s, Ev::ProvisionSensor {
                        sensor: idx,
                    });
                }
                LedgerEvent::RequestCreated { contract_id, requester, sensor_id, .. } => {
                    let (requester_idx, t_request) =
                        self.awaiting_contract.remove(&requester).ok_or_else(|| {
                            ScenarioError::Internal("request event without submitter".into())
                        })?;
                    self.latencies.insert(contract_id, PendingLatency {
                        requester: requester_idx,
                        record: LatencyRecord {
                            request_id: contract_id,
                            t_request,
                            t_request_mined: self.now,
                            t_rekey_mined: 0.0,
                            t_share_ready: 0.0,
                            t_data_ready: 0.0,
                            t_decrypted: 0.0,
                            verified: false,
                        },
                    });
                    self.step_event(
                        "ledger".into(),
                        4,
                        format!(
                            "contract {contract_id} mined: requester certificate on chain for sensor {sensor_id}"
                        ),
                    );
                    self.step_event(
                        "proxy".into(),
                        5,
                        format!("notified of contract {contract_id}, filtering records"),
                    );
                    let delay = if self.cfg.pre_enabled {
                        self.cfg.owner_rekey_delay_s
                    } else {
                        self.cfg.grant_delay_s
                    };
                    self.schedule(self.now + delay, Ev::OwnerServeRequest { contract_id });
                }
                LedgerEvent::ReKeyPosted { contract_id, n_keys } => {
                    if let Some(p) = self.latencies.get_mut(&contract_id) {
                        p.record.t_rekey_mined = self.now;
                    }
                    let detail = if n_keys > 0 {
                        format!("{n_keys} re-encryption key(s) on contract {contract_id}")
                    } else {
                        format!("off-chain grant recorded for contract {contract_id}")
                    };
                    self.step_event("owner".into(), 6, detail);
                    self.schedule(self.now + self.cfg.proxy_delay_s, Ev::ProxyPrepare {
                        contract_id,
                    });
                }
                LedgerEvent::DataReady { contract_id, share_id } => {
                    if let Some(p) = self.latencies.get_mut(&contract_id) {
                        p.record.t_data_ready = self.now;
                    }
                    self.step_event(
                        "ledger".into(),
                        8,
                        format!("share address {share_id} mined for contract {contract_id}"),
                    );
                    self.schedule(self.now + self.cfg.fetch_decrypt_delay_s, Ev::RequesterFetch {
                        contract_id,
                    });
                }
                LedgerEvent::Completed { contract_id, .. } => {
                    self.completed += 1;
                    self.step_event(
                        "ledger".into(),
                        9,
                        format!("contract {contract_id} settled"),
                    );
                }
                LedgerEvent::Cancelled { contract_id, .. } => {
                    self.notes.push(format!("contract {contract_id} cancelled by expiry"));
                }
                LedgerEvent::TxFailed { tx_id, reason } => {
                    self.notes.push(format!("tx {tx_id} failed: {reason}"));
                }
            }
        }
        Ok(())
    }
}

fn mac_for(i: usize) -> [u8; 6] {
    let b = (i as u32).to_be_bytes();
    [0x02, 0x00, b[0], b[1], b[2], b[3]]
}

/// Run one full scenario to completion.
pub fn run_scenario(cfg: ScenarioConfig) -> Result<ScenarioTrace, ScenarioError> {
    Simulation::new(cfg)?.run()
}
