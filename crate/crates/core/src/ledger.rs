//! Deterministic single-writer blockchain simulation.
//!
//! One miner, no forks, no gas market: blocks arrive at exponentially
//! distributed simulated intervals (seeded), include up to `block_capacity`
//! pending transactions in `(submitted_at, sender, nonce)` order, and apply
//! two contracts: a static sensor registry and per-request escrow contracts
//! walking `Requested -> ReKeyPosted -> DataReady -> Completed`, with
//! `Cancelled` reachable from any non-terminal state via an expiry sweep.
//!
//! Everything the protocol needs from a real chain is kept: inclusion waits
//! dominate latency, state is only visible after mining, currency is
//! conserved (balances plus escrows plus fees form a closed system), and the
//! whole run is a pure function of the seed and the submitted transactions.
//!
//! Contract calls are exposed both as transaction payloads (the normal path)
//! and as direct methods (`register_sensor`, `request_data`, ...) so tests
//! can exercise transition rules without mining; the mining loop dispatches
//! to the same methods.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{DecodeError, GroupParams};
use crate::pre::{Certificate, Identity, Metadata, ReEncKey, BLOCK_BYTES, META_BYTES};

pub const DEFAULT_BLOCK_INTERVAL_S: f64 = 13.0;
pub const DEFAULT_BLOCK_CAPACITY: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("nonce does not match the sender's next expected nonce")]
    BadNonce,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("unknown account")]
    UnknownAccount,
    #[error("unknown sensor")]
    UnknownSensor,
    #[error("unknown contract")]
    UnknownContract,
    #[error("deposit is below the sensor's price")]
    InsufficientDeposit,
    #[error("mac address already registered")]
    DuplicateMac,
    #[error("caller does not own the sensor")]
    NotOwner,
    #[error("caller is not the contract's requester")]
    NotRequester,
    #[error("contract is not in the required state")]
    BadState,
    #[error("malformed payload: {0}")]
    BadPayload(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerConfig {
    pub block_interval_s: f64,
    pub block_capacity: usize,
    pub tx_fee: u64,
    /// Requests left unfinished this long after creation are cancelled with a
    /// full refund during the next block's expiry sweep.
    pub request_ttl_s: f64,
    pub seed: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            block_interval_s: DEFAULT_BLOCK_INTERVAL_S,
            block_capacity: DEFAULT_BLOCK_CAPACITY,
            tx_fee: 0,
            request_ttl_s: 100.0 * DEFAULT_BLOCK_INTERVAL_S,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Deterministic address from a human label; good enough for a simulator
    /// that has no signatures.
    pub fn from_label(label: &str) -> Self {
        let d: [u8; 32] = Sha256::digest(label.as_bytes()).as_slice().try_into().unwrap();
        Address(d[..20].try_into().unwrap())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.hex())
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    RegisterSensor = 1,
    RequestData = 2,
    PostReKey = 3,
    PostDataAddr = 4,
    Confirm = 5,
    Transfer = 6,
}

/// Typed transaction bodies. `encode`/`decode` give the canonical byte form
/// (certificates are group-width, so decoding needs the group).
#[derive(Debug, Clone, PartialEq)]
pub enum TxPayload {
    RegisterSensor { cert: Certificate, price: u64, description: String, mac: [u8; 6] },
    RequestData {
        requester_id: Identity,
        requester_cert: Certificate,
        sensor_id: Identity,
        t_from: u32,
        t_to: u32,
        deposit: u64,
    },
    /// One re-encryption key per record metadata, batched into one tx.
    PostReKey { contract_id: u64, rekeys: Vec<(Metadata, ReEncKey)> },
    PostDataAddr { contract_id: u64, share_id: String },
    Confirm { contract_id: u64 },
    Transfer { to: Address, amount: u64 },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::RegisterSensor { .. } => TxKind::RegisterSensor,
            TxPayload::RequestData { .. } => TxKind::RequestData,
            TxPayload::PostReKey { .. } => TxKind::PostReKey,
            TxPayload::PostDataAddr { .. } => TxKind::PostDataAddr,
            TxPayload::Confirm { .. } => TxKind::Confirm,
            TxPayload::Transfer { .. } => TxKind::Transfer,
        }
    }

    pub fn encode(&self, group: &GroupParams) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            TxPayload::RegisterSensor { cert, price, description, mac } => {
                out.extend_from_slice(&cert.to_bytes(group));
                out.extend_from_slice(&price.to_be_bytes());
                out.extend_from_slice(&(description.len() as u16).to_be_bytes());
                out.extend_from_slice(description.as_bytes());
                out.extend_from_slice(mac);
            }
            TxPayload::RequestData { requester_id, requester_cert, sensor_id, t_from, t_to, deposit } => {
                out.extend_from_slice(&requester_id.to_bytes());
                out.extend_from_slice(&requester_cert.to_bytes(group));
                out.extend_from_slice(&sensor_id.to_bytes());
                out.extend_from_slice(&t_from.to_be_bytes());
                out.extend_from_slice(&t_to.to_be_bytes());
                out.extend_from_slice(&deposit.to_be_bytes());
            }
            TxPayload::PostReKey { contract_id, rekeys } => {
                out.extend_from_slice(&contract_id.to_be_bytes());
                out.extend_from_slice(&(rekeys.len() as u32).to_be_bytes());
                for (meta, rk) in rekeys {
                    out.extend_from_slice(&meta.to_bytes());
                    out.extend_from_slice(&rk.to_bytes());
                }
            }
            TxPayload::PostDataAddr { contract_id, share_id } => {
                out.extend_from_slice(&contract_id.to_be_bytes());
                out.extend_from_slice(&(share_id.len() as u16).to_be_bytes());
                out.extend_from_slice(share_id.as_bytes());
            }
            TxPayload::Confirm { contract_id } => {
                out.extend_from_slice(&contract_id.to_be_bytes());
            }
            TxPayload::Transfer { to, amount } => {
                out.extend_from_slice(&to.0);
                out.extend_from_slice(&amount.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(group: &GroupParams, kind: TxKind, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader { bytes, at: 0 };
        let payload = match kind {
            TxKind::RegisterSensor => {
                let cert = Certificate::from_bytes(group, r.take(group.point_bytes())?)?;
                let price = r.u64()?;
                let dlen = r.u16()? as usize;
                let description = String::from_utf8(r.take(dlen)?.to_vec())
                    .map_err(|_| DecodeError::InvalidPoint)?;
                let mac: [u8; 6] = r.take(6)?.try_into().unwrap();
                TxPayload::RegisterSensor { cert, price, description, mac }
            }
            TxKind::RequestData => {
                let requester_id = Identity::from_bytes(r.take(4)?.try_into().unwrap());
                let requester_cert = Certificate::from_bytes(group, r.take(group.point_bytes())?)?;
                let sensor_id = Identity::from_bytes(r.take(4)?.try_into().unwrap());
                let t_from = r.u32()?;
                let t_to = r.u32()?;
                let deposit = r.u64()?;
                TxPayload::RequestData { requester_id, requester_cert, sensor_id, t_from, t_to, deposit }
            }
            TxKind::PostReKey => {
                let contract_id = r.u64()?;
                let n = r.u32()? as usize;
                let mut rekeys = Vec::with_capacity(n);
                for _ in 0..n {
                    let meta =
                        Metadata::from_bytes(r.take(META_BYTES)?.try_into().unwrap());
                    let rk: [u8; BLOCK_BYTES] = r.take(BLOCK_BYTES)?.try_into().unwrap();
                    rekeys.push((meta, ReEncKey::from_bytes(rk)));
                }
                TxPayload::PostReKey { contract_id, rekeys }
            }
            TxKind::PostDataAddr => {
                let contract_id = r.u64()?;
                let slen = r.u16()? as usize;
                let share_id = String::from_utf8(r.take(slen)?.to_vec())
                    .map_err(|_| DecodeError::InvalidPoint)?;
                TxPayload::PostDataAddr { contract_id, share_id }
            }
            TxKind::Confirm => TxPayload::Confirm { contract_id: r.u64()? },
            TxKind::Transfer => {
                let to = Address(r.take(20)?.try_into().unwrap());
                let amount = r.u64()?;
                TxPayload::Transfer { to, amount }
            }
        };
        if r.at != bytes.len() {
            return Err(DecodeError::Length { expected: r.at, got: bytes.len() });
        }
        Ok(payload)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.at + n > self.bytes.len() {
            return Err(DecodeError::Truncated);
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tx {
    pub tx_id: u64,
    pub sender: Address,
    pub nonce: u64,
    pub payload: TxPayload,
    pub submitted_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub timestamp: f64,
    pub txs: Vec<Tx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub owner: Address,
    pub cert: Certificate,
    pub price: u64,
    pub description: String,
    pub mac: [u8; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestState {
    Requested,
    ReKeyPosted,
    DataReady,
    Completed,
    Cancelled,
}

impl RequestState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RequestState::Completed | RequestState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestContract {
    pub contract_id: u64,
    pub requester: Address,
    pub requester_id: Identity,
    pub requester_cert: Certificate,
    pub sensor_id: Identity,
    pub time_range: (u32, u32),
    pub escrow: u64,
    /// One key per record metadata; empty when the owner granted the share
    /// off-chain (baseline mode without re-encryption).
    pub rekeys: Option<Vec<(Metadata, ReEncKey)>>,
    pub data_addr: Option<String>,
    pub state: RequestState,
    pub created_at: f64,
    pub expires_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "fields")]
pub enum LedgerEvent {
    SensorRegistered { sensor_id: Identity, owner: Address, price: u64, mac: String },
    RequestCreated {
        contract_id: u64,
        sensor_id: Identity,
        requester: Address,
        requester_id: Identity,
        t_from: u32,
        t_to: u32,
        escrow: u64,
    },
    ReKeyPosted { contract_id: u64, n_keys: u32 },
    DataReady { contract_id: u64, share_id: String },
    Completed { contract_id: u64, price_paid: u64, refund: u64 },
    Cancelled { contract_id: u64, refund: u64 },
    TxFailed { tx_id: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub block: u64,
    pub tx_index: u32,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

pub struct Ledger {
    group: GroupParams,
    cfg: LedgerConfig,
    rng: ChaCha20Rng,
    time: f64,
    next_block_at: f64,
    miner: Address,
    accounts: BTreeMap<Address, u64>,
    next_nonce: BTreeMap<Address, u64>,
    pending: Vec<Tx>,
    blocks: Vec<Block>,
    next_tx_id: u64,
    sensors: BTreeMap<Identity, SensorRecord>,
    mac_index: BTreeMap<[u8; 6], Identity>,
    next_sensor_id: u32,
    contracts: BTreeMap<u64, RequestContract>,
    next_contract_id: u64,
    events: Vec<EventRecord>,
    // (height, tx_index) while applying a mined tx, so events carry their
    // position; direct contract calls are stamped with the upcoming height.
    applying: Option<(u64, u32)>,
}

impl Ledger {
    pub fn new(group: GroupParams, cfg: LedgerConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let first_at = sample_interval(&mut rng, cfg.block_interval_s);
        let miner = Address::from_label("miner");
        let mut accounts = BTreeMap::new();
        accounts.insert(miner, 0);
        Ledger {
            group,
            cfg,
            rng,
            time: 0.0,
            next_block_at: first_at,
            miner,
            accounts,
            next_nonce: BTreeMap::new(),
            pending: Vec::new(),
            blocks: Vec::new(),
            next_tx_id: 1,
            sensors: BTreeMap::new(),
            mac_index: BTreeMap::new(),
            next_sensor_id: 1,
            contracts: BTreeMap::new(),
            next_contract_id: 1,
            events: Vec::new(),
            applying: None,
        }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.cfg
    }

    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn now(&self) -> f64 {
        self.time
    }

    /// Timestamp the next block will carry; pre-sampled so schedulers can
    /// align their clocks with mining without consuming randomness.
    pub fn next_block_at(&self) -> f64 {
        self.next_block_at
    }

    pub fn miner(&self) -> Address {
        self.miner
    }

    /// Mint `amount` to an account, creating it if needed. This is the only
    /// way supply enters the system; scenarios call it once at genesis.
    pub fn fund(&mut self, addr: Address, amount: u64) {
        *self.accounts.entry(addr).or_insert(0) += amount;
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.accounts.get(addr).copied().unwrap_or(0)
    }

    pub fn next_nonce(&self, addr: &Address) -> u64 {
        self.next_nonce.get(addr).copied().unwrap_or(0)
    }

    pub fn sensor(&self, id: Identity) -> Option<&SensorRecord> {
        self.sensors.get(&id)
    }

    pub fn contract(&self, contract_id: u64) -> Option<&RequestContract> {
        self.contracts.get(&contract_id)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &RequestContract> {
        self.contracts.values()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Balances plus live escrow; constant across every operation except
    /// `fund`.
    pub fn total_in_system(&self) -> u64 {
        let balances: u64 = self.accounts.values().sum();
        let escrows: u64 = self
            .contracts
            .values()
            .filter(|c| !c.state.is_terminal())
            .map(|c| c.escrow)
            .sum();
        balances + escrows
    }

    /// Queue a transaction at `submitted_at` (simulated seconds). Nonce must
    /// be exactly the sender's next; funds for the value-bearing kinds plus
    /// the flat fee must be available at submission time.
    pub fn submit_tx(
        &mut self,
        sender: Address,
        nonce: u64,
        payload: TxPayload,
        submitted_at: f64,
    ) -> Result<u64, LedgerError> {
        if !self.accounts.contains_key(&sender) {
            return Err(LedgerError::UnknownAccount);
        }
        if nonce != self.next_nonce(&sender) {
            return Err(LedgerError::BadNonce);
        }
        let value = match &payload {
            TxPayload::RequestData { deposit, .. } => *deposit,
            TxPayload::Transfer { amount, .. } => *amount,
            _ => 0,
        };
        if self.balance(&sender) < value + self.cfg.tx_fee {
            return Err(LedgerError::InsufficientFunds);
        }
        let tx_id = self.next_tx_id;
        self.next_tx_id += 1;
        self.next_nonce.insert(sender, nonce + 1);
        self.pending.push(Tx { tx_id, sender, nonce, payload, submitted_at });
        Ok(tx_id)
    }

    /// Advance the clock to the pre-sampled block time, include up to
    /// `block_capacity` pending txs in `(submitted_at, sender, nonce)` order,
    /// apply them, run the expiry sweep, and append the block.
    pub fn mine_next_block(&mut self) -> Block {
        self.time = self.next_block_at;
        self.next_block_at = self.time + sample_interval(&mut self.rng, self.cfg.block_interval_s);

        self.pending.sort_by(|a, b| {
            a.submitted_at
                .total_cmp(&b.submitted_at)
                .then(a.sender.cmp(&b.sender))
                .then(a.nonce.cmp(&b.nonce))
        });
        let take = self.pending.len().min(self.cfg.block_capacity);
        let txs: Vec<Tx> = self.pending.drain(..take).collect();

        let height = self.blocks.len() as u64 + 1;
        for (i, tx) in txs.iter().enumerate() {
            self.applying = Some((height, i as u32));
            if let Err(e) = self.apply_tx(tx) {
                let tx_id = tx.tx_id;
                self.emit(LedgerEvent::TxFailed { tx_id, reason: e.to_string() });
            }
            self.applying = None;
        }
        self.expire_requests();

        let block = Block { height, timestamp: self.time, txs };
        self.blocks.push(block.clone());
        block
    }

    fn apply_tx(&mut self, tx: &Tx) -> Result<(), LedgerError> {
        // The flat fee is charged on inclusion, success or failure.
        let fee = self.cfg.tx_fee;
        if fee > 0 {
            let miner = self.miner;
            let bal = self.accounts.get_mut(&tx.sender).ok_or(LedgerError::UnknownAccount)?;
            if *bal < fee {
                return Err(LedgerError::InsufficientFunds);
            }
            *bal -= fee;
            *self.accounts.get_mut(&miner).unwrap() += fee;
        }
        match tx.payload.clone() {
            TxPayload::RegisterSensor { cert, price, description, mac } => {
                self.register_sensor(tx.sender, cert, price, description, mac).map(|_| ())
            }
            TxPayload::RequestData { requester_id, requester_cert, sensor_id, t_from, t_to, deposit } => self
                .request_data(tx.sender, requester_id, requester_cert, sensor_id, (t_from, t_to), deposit)
                .map(|_| ()),
            TxPayload::PostReKey { contract_id, rekeys } => {
                self.post_rekey(tx.sender, contract_id, rekeys)
            }
            TxPayload::PostDataAddr { contract_id, share_id } => {
                self.post_data_address(contract_id, share_id)
            }
            TxPayload::Confirm { contract_id } => {
                let c = self.contracts.get(&contract_id).ok_or(LedgerError::UnknownContract)?;
                if c.requester != tx.sender {
                    return Err(LedgerError::NotRequester);
                }
                self.settle(contract_id)
            }
            TxPayload::Transfer { to, amount } => {
                let bal = self.accounts.get_mut(&tx.sender).ok_or(LedgerError::UnknownAccount)?;
                if *bal < amount {
                    return Err(LedgerError::InsufficientFunds);
                }
                *bal -= amount;
                *self.accounts.entry(to).or_insert(0) += amount;
                Ok(())
            }
        }
    }

    /// Sequential id assignment starting at 0x00000001, one id per MAC.
    pub fn register_sensor(
        &mut self,
        owner: Address,
        cert: Certificate,
        price: u64,
        description: String,
        mac: [u8; 6],
    ) -> Result<Identity, LedgerError> {
        if !self.accounts.contains_key(&owner) {
            return Err(LedgerError::UnknownAccount);
        }
        if self.mac_index.contains_key(&mac) {
            return Err(LedgerError::DuplicateMac);
        }
        let id = Identity(self.next_sensor_id);
        self.next_sensor_id += 1;
        self.mac_index.insert(mac, id);
        self.sensors.insert(id, SensorRecord { owner, cert, price, description, mac });
        self.emit(LedgerEvent::SensorRegistered {
            sensor_id: id,
            owner,
            price,
            mac: hex::encode(mac),
        });
        Ok(id)
    }

    /// Move `deposit` into escrow and open a request contract.
    pub fn request_data(
        &mut self,
        requester: Address,
        requester_id: Identity,
        requester_cert: Certificate,
        sensor_id: Identity,
        time_range: (u32, u32),
        deposit: u64,
    ) -> Result<u64, LedgerError> {
        let sensor = self.sensors.get(&sensor_id).ok_or(LedgerError::UnknownSensor)?;
        if deposit < sensor.price {
            return Err(LedgerError::InsufficientDeposit);
        }
        let bal = self.accounts.get_mut(&requester).ok_or(LedgerError::UnknownAccount)?;
        if *bal < deposit {
            return Err(LedgerError::InsufficientFunds);
        }
        *bal -= deposit;
        let contract_id = self.next_contract_id;
        self.next_contract_id += 1;
        let created_at = self.time;
        self.contracts.insert(
            contract_id,
            RequestContract {
                contract_id,
                requester,
                requester_id,
                requester_cert,
                sensor_id,
                time_range,
                escrow: deposit,
                rekeys: None,
                data_addr: None,
                state: RequestState::Requested,
                created_at,
                expires_at: created_at + self.cfg.request_ttl_s,
            },
        );
        self.emit(LedgerEvent::RequestCreated {
            contract_id,
            sensor_id,
            requester,
            requester_id,
            t_from: time_range.0,
            t_to: time_range.1,
            escrow: deposit,
        });
        Ok(contract_id)
    }

    /// Owner posts the per-record re-encryption keys for a request.
    pub fn post_rekey(
        &mut self,
        caller: Address,
        contract_id: u64,
        rekeys: Vec<(Metadata, ReEncKey)>,
    ) -> Result<(), LedgerError> {
        let contract = self.contracts.get(&contract_id).ok_or(LedgerError::UnknownContract)?;
        let sensor = self.sensors.get(&contract.sensor_id).ok_or(LedgerError::UnknownSensor)?;
        if sensor.owner != caller {
            return Err(LedgerError::NotOwner);
        }
        if contract.state != RequestState::Requested {
            return Err(LedgerError::BadState);
        }
        let n_keys = rekeys.len() as u32;
        let contract = self.contracts.get_mut(&contract_id).unwrap();
        contract.rekeys = Some(rekeys);
        contract.state = RequestState::ReKeyPosted;
        self.emit(LedgerEvent::ReKeyPosted { contract_id, n_keys });
        Ok(())
    }

    /// Baseline-mode grant: the owner authorizes the share without putting
    /// key material on chain, so no mined transaction is involved. The state
    /// machine still walks its normal edge, just with zero keys.
    pub fn grant_without_rekey(&mut self, caller: Address, contract_id: u64) -> Result<(), LedgerError> {
        let contract = self.contracts.get(&contract_id).ok_or(LedgerError::UnknownContract)?;
        let sensor = self.sensors.get(&contract.sensor_id).ok_or(LedgerError::UnknownSensor)?;
        if sensor.owner != caller {
            return Err(LedgerError::NotOwner);
        }
        if contract.state != RequestState::Requested {
            return Err(LedgerError::BadState);
        }
        let contract = self.contracts.get_mut(&contract_id).unwrap();
        contract.rekeys = Some(Vec::new());
        contract.state = RequestState::ReKeyPosted;
        self.emit(LedgerEvent::ReKeyPosted { contract_id, n_keys: 0 });
        Ok(())
    }

    pub fn post_data_address(&mut self, contract_id: u64, share_id: String) -> Result<(), LedgerError> {
        let contract = self.contracts.get_mut(&contract_id).ok_or(LedgerError::UnknownContract)?;
        if contract.state != RequestState::ReKeyPosted {
            return Err(LedgerError::BadState);
        }
        contract.data_addr = Some(share_id.clone());
        contract.state = RequestState::DataReady;
        self.emit(LedgerEvent::DataReady { contract_id, share_id });
        Ok(())
    }

    /// Release escrow exactly once: price to the sensor owner, remainder back
    /// to the requester.
    pub fn settle(&mut self, contract_id: u64) -> Result<(), LedgerError> {
        let contract = self.contracts.get(&contract_id).ok_or(LedgerError::UnknownContract)?;
        if contract.state != RequestState::DataReady {
            return Err(LedgerError::BadState);
        }
        let sensor = self.sensors.get(&contract.sensor_id).ok_or(LedgerError::UnknownSensor)?;
        let owner = sensor.owner;
        let price = sensor.price.min(contract.escrow);
        let refund = contract.escrow - price;
        let requester = contract.requester;
        *self.accounts.entry(owner).or_insert(0) += price;
        *self.accounts.entry(requester).or_insert(0) += refund;
        let contract = self.contracts.get_mut(&contract_id).unwrap();
        contract.escrow = 0;
        contract.state = RequestState::Completed;
        self.emit(LedgerEvent::Completed { contract_id, price_paid: price, refund });
        Ok(())
    }

    /// Cancel a non-terminal request with a full refund.
    pub fn cancel(&mut self, contract_id: u64) -> Result<(), LedgerError> {
        let contract = self.contracts.get_mut(&contract_id).ok_or(LedgerError::UnknownContract)?;
        if contract.state.is_terminal() {
            return Err(LedgerError::BadState);
        }
        let refund = contract.escrow;
        let requester = contract.requester;
        contract.escrow = 0;
        contract.state = RequestState::Cancelled;
        *self.accounts.entry(requester).or_insert(0) += refund;
        self.emit(LedgerEvent::Cancelled { contract_id, refund });
        Ok(())
    }

    fn expire_requests(&mut self) {
        let due: Vec<u64> = self
            .contracts
            .values()
            .filter(|c| !c.state.is_terminal() && c.expires_at <= self.time)
            .map(|c| c.contract_id)
            .collect();
        for id in due {
            self.cancel(id).expect("expiry sweep only selects live contracts");
        }
    }

    fn emit(&mut self, event: LedgerEvent) {
        let (block, tx_index) = self.applying.unwrap_or((self.blocks.len() as u64 + 1, 0));
        self.events.push(EventRecord { block, tx_index, event });
    }

    /// Events appended since `cursor`; each event is delivered exactly once
    /// to a caller that advances its cursor by the returned length.
    pub fn events_since(&self, cursor: usize) -> &[EventRecord] {
        assert!(cursor <= self.events.len(), "event cursor out of range");
        &self.events[cursor..]
    }

    pub fn events_len(&self) -> usize {
        self.events.len()
    }

    /// One JSON object per event: {"block":..,"tx_index":..,"kind":..,"fields":{..}}.
    pub fn export_events_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            out.push_str(&serde_json::to_string(ev).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Digest over blocks, transactions, and events; byte-identical runs of
    /// the same seed and workload produce the same digest.
    pub fn chain_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for b in &self.blocks {
            h.update(b.height.to_be_bytes());
            h.update(b.timestamp.to_bits().to_be_bytes());
            for tx in &b.txs {
                h.update(tx.tx_id.to_be_bytes());
                h.update(tx.sender.0);
                h.update(tx.nonce.to_be_bytes());
                h.update([tx.payload.kind() as u8]);
                h.update(tx.payload.encode(&self.group));
                h.update(tx.submitted_at.to_bits().to_be_bytes());
            }
        }
        h.update(self.export_events_jsonl().as_bytes());
        h.finalize().as_slice().try_into().unwrap()
    }
}

/// Exponential inter-arrival with the given mean, by inversion.
fn sample_interval(rng: &mut ChaCha20Rng, mean_s: f64) -> f64 {
    let u: f64 = rng.gen();
    -mean_s * (1.0 - u).ln()
}
