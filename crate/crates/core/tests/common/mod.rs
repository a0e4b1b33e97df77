//! Shared test oracles.
//!
//! `toy` reimplements the whole scheme straight-line on integers mod a small
//! prime with direct SHA-256 calls, touching none of the library's group or
//! scheme code, so agreement between the two is evidence rather than
//! tautology. `predict` recomputes scenario latency milestones from the block
//! schedule alone. `fuzz` drives the ledger with random traffic while
//! checking conservation and state-machine legality at every step.

#![allow(dead_code)] // each integration test binary uses its own subset

use sensorshare::actors::ScenarioConfig;

/// Straight-line scheme oracle on the additive group of integers mod q with
/// generator 1. Scalars and points are plain `u64` residues; every hash is a
/// direct SHA-256 call over the same tag and operand encodings the wire
/// format fixes (4-byte big-endian residues, 8-byte metadata).
pub mod toy {
    use sha2::{Digest, Sha256};

    const T_H1: u8 = 0x01;
    const T_H2: u8 = 0x02;
    const T_H3: u8 = 0x03;
    const T_H4: u8 = 0x04;
    const T_DEM: u8 = 0x05;

    pub fn enc4(v: u64) -> [u8; 4] {
        (v as u32).to_be_bytes()
    }

    pub fn meta_bytes(id: u32, t0: u32) -> [u8; 8] {
        let mut m = [0u8; 8];
        m[..4].copy_from_slice(&id.to_be_bytes());
        m[4..].copy_from_slice(&t0.to_be_bytes());
        m
    }

    fn digest(tag: u8, parts: &[&[u8]]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([tag]);
        for p in parts {
            h.update(p);
        }
        h.finalize().into()
    }

    fn fold(d: &[u8; 32], q: u64) -> u64 {
        let mut acc = 0u64;
        for &b in d {
            acc = (acc * 256 + b as u64) % q;
        }
        acc
    }

    fn fold_nonzero(d: &[u8; 32], q: u64) -> u64 {
        match fold(d, q) {
            0 => 1,
            v => v,
        }
    }

    pub fn h1(q: u64, point: u64, id: u32) -> u64 {
        fold_nonzero(&digest(T_H1, &[&enc4(point), &id.to_be_bytes()]), q)
    }

    pub fn h2(q: u64, scalar: u64, id: u32, t0: u32) -> u64 {
        fold_nonzero(&digest(T_H2, &[&enc4(scalar), &meta_bytes(id, t0)]), q)
    }

    pub fn h3(q: u64, id: u32, t0: u32, point: u64) -> [u8; 32] {
        let _ = q;
        digest(T_H3, &[&meta_bytes(id, t0), &enc4(point)])
    }

    pub fn h4(q: u64, block: &[u8; 32], id: u32, t0: u32) -> u64 {
        fold_nonzero(&digest(T_H4, &[block, &meta_bytes(id, t0)]), q)
    }

    pub fn dem_block(key: &[u8; 32], id: u32, t0: u32, counter: u32) -> [u8; 32] {
        digest(T_DEM, &[key, &meta_bytes(id, t0), &counter.to_be_bytes()])
    }

    pub fn xor(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
        let mut out = [0u8; 32];
        for i in 0..32 {
            out[i] = a[i] ^ b[i];
        }
        out
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Keys {
        pub id: u32,
        pub cert: u64,
        /// Authority key share `r_a = H1(cert||id)*r_t + alpha`.
        pub r_a: u64,
        pub d: u64,
        pub p_u: u64,
    }

    /// Anyone's view of a public key: `H1(cert||id)*cert + P_alpha`.
    pub fn derive_pub(q: u64, p_alpha: u64, cert: u64, id: u32) -> u64 {
        (h1(q, cert, id) * cert + p_alpha) % q
    }

    /// The certified keygen flow with all randomness pinned. Returns `None`
    /// exactly when the certificate point degenerates to the identity.
    pub fn keygen(q: u64, alpha: u64, r_u: u64, r_t: u64, id: u32) -> Option<Keys> {
        let r_u_cap = r_u % q; // R_U = r_U * P with P = 1
        if r_u_cap == 0 {
            return None;
        }
        let cert = (r_u_cap + r_t) % q;
        if cert == 0 {
            return None;
        }
        let h = h1(q, cert, id);
        let r_a = (h * r_t + alpha) % q;
        let d = (h * r_u + r_a) % q;
        let p_u = d % q; // d * P with P = 1
        // The acceptance equation the user checks before keeping the key.
        assert_eq!(p_u, derive_pub(q, alpha % q, cert, id), "oracle keygen self-check");
        Some(Keys { id, cert, r_a, d, p_u })
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Ct {
        pub c_a: [u8; 32],
        pub id: u32,
        pub t0: u32,
        pub h_a: u64,
        pub s_a: u64,
    }

    pub fn encrypt(q: u64, keys: &Keys, m: &[u8; 32], t0: u32) -> Ct {
        let r = h2(q, keys.d, keys.id, t0);
        let pad = h3(q, keys.id, t0, (r * keys.p_u) % q);
        let c_a = xor(m, &pad);
        let h_a = h4(q, &c_a, keys.id, t0);
        // s_A = r - h_A * d mod q
        let s_a = (r + q * q - (h_a * keys.d) % q) % q;
        Ct { c_a, id: keys.id, t0, h_a, s_a }
    }

    /// Owner decrypt. The signature check runs point-side:
    /// `s_A*P + h_A*P_A == r*P`.
    pub fn decrypt1(q: u64, keys: &Keys, ct: &Ct) -> Option<[u8; 32]> {
        if ct.id != keys.id {
            return None;
        }
        if h4(q, &ct.c_a, ct.id, ct.t0) != ct.h_a {
            return None;
        }
        let r = h2(q, keys.d, ct.id, ct.t0);
        if (ct.s_a + ct.h_a * keys.p_u) % q != r % q {
            return None;
        }
        let pad = h3(q, ct.id, ct.t0, (r * keys.p_u) % q);
        Some(xor(&ct.c_a, &pad))
    }

    pub fn rekey(q: u64, keys_a: &Keys, p_b: u64, t0: u32) -> [u8; 32] {
        let r = h2(q, keys_a.d, keys_a.id, t0);
        let pad_a = h3(q, keys_a.id, t0, (r * keys_a.p_u) % q);
        let pad_b = h3(q, keys_a.id, t0, (r * p_b) % q);
        xor(&pad_a, &pad_b)
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct ReCt {
        pub c_b: [u8; 32],
        pub c_a: [u8; 32],
        pub id: u32,
        pub t0: u32,
        pub id_b: u32,
        pub h_a: u64,
        pub s_a: u64,
    }

    pub fn reencrypt(ct: &Ct, rk: &[u8; 32], id_b: u32) -> ReCt {
        ReCt {
            c_b: xor(&ct.c_a, rk),
            c_a: ct.c_a,
            id: ct.id,
            t0: ct.t0,
            id_b,
            h_a: ct.h_a,
            s_a: ct.s_a,
        }
    }

    /// Delegatee decrypt: recover `r*P` from the tag, pair it with `d_B`.
    pub fn decrypt2(q: u64, d_b: u64, id_b: u32, p_a: u64, ct: &ReCt) -> Option<[u8; 32]> {
        if ct.id_b != id_b {
            return None;
        }
        if h4(q, &ct.c_a, ct.id, ct.t0) != ct.h_a {
            return None;
        }
        let r_point = (ct.s_a + ct.h_a * p_a) % q; // s_A*P + h_A*P_A
        let pad = h3(q, ct.id, ct.t0, (d_b * r_point) % q);
        Some(xor(&ct.c_b, &pad))
    }

    pub fn dem(key: &[u8; 32], id: u32, t0: u32, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        for (i, chunk) in data.chunks(32).enumerate() {
            let block = dem_block(key, id, t0, i as u32);
            for (j, &b) in chunk.iter().enumerate() {
                out.push(b ^ block[j]);
            }
        }
        out
    }
}

/// Closed-form latency milestones for a scenario with a single request and
/// no block-capacity pressure, recomputed from the block schedule alone.
pub mod predict {
    use super::ScenarioConfig;

    pub fn next_block_after(block_times: &[f64], t: f64) -> f64 {
        *block_times
            .iter()
            .find(|&&bt| bt > t)
            .expect("block schedule should cover the scenario horizon")
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Milestones {
        pub t_request_mined: f64,
        pub t_rekey_mined: f64,
        pub t_share_ready: f64,
        pub t_data_ready: f64,
        pub t_decrypted: f64,
    }

    pub fn single_request(block_times: &[f64], t_request: f64, cfg: &ScenarioConfig) -> Milestones {
        let t_request_mined = next_block_after(block_times, t_request);
        let t_rekey_mined = if cfg.pre_enabled {
            next_block_after(block_times, t_request_mined + cfg.owner_rekey_delay_s)
        } else {
            t_request_mined + cfg.grant_delay_s
        };
        let t_share_ready = t_rekey_mined + cfg.proxy_delay_s;
        let t_data_ready = next_block_after(block_times, t_share_ready);
        let t_decrypted = t_data_ready + cfg.fetch_decrypt_delay_s;
        Milestones { t_request_mined, t_rekey_mined, t_share_ready, t_data_ready, t_decrypted }
    }

    /// Lower bound on extra block-inclusion events systemwide when `n`
    /// requests, `txs_per_request` mined hops each, squeeze through blocks of
    /// `capacity`: everything past the first full block must queue.
    pub fn extra_inclusions_lower_bound(n: usize, txs_per_request: usize, capacity: usize) -> usize {
        let total = n * txs_per_request;
        total.saturating_sub(capacity).div_ceil(capacity)
    }
}

/// Randomized ledger traffic with inline invariant checking.
pub mod fuzz {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use sensorshare::group::GroupParams;
    use sensorshare::ledger::{Address, Ledger, LedgerConfig, RequestState, TxPayload};
    use sensorshare::pre::{Certificate, Identity, Metadata, ReEncKey};

    pub struct RunSummary {
        pub digest: [u8; 32],
        pub events_jsonl: String,
        pub accepted: usize,
        pub rejected: usize,
        pub blocks: usize,
        pub terminal_contracts: usize,
    }

    fn legal(from: RequestState, to: RequestState) -> bool {
        use RequestState::*;
        matches!(
            (from, to),
            (Requested, ReKeyPosted)
                | (ReKeyPosted, DataReady)
                | (DataReady, Completed)
                | (Requested, Cancelled)
                | (ReKeyPosted, Cancelled)
                | (DataReady, Cancelled)
        )
    }

    /// Drive `steps` random operations, checking after every one that money
    /// is conserved and that no contract ever moves along an edge outside
    /// the declared state machine.
    pub fn drive_ledger(seed: u64, steps: usize) -> RunSummary {
        let group = GroupParams::insecure_mock(101).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cfg = LedgerConfig {
            block_interval_s: 13.0,
            block_capacity: 4,
            tx_fee: 1,
            request_ttl_s: 200.0,
            seed,
        };
        let mut ledger = Ledger::new(group, cfg);
        let actors: Vec<Address> =
            (0..6).map(|i| Address::from_label(&format!("fuzz-{i}"))).collect();
        for a in &actors {
            ledger.fund(*a, 10_000);
        }
        let total0 = ledger.total_in_system();

        let cert = |v: u32| {
            Certificate::from_bytes(&group, &(v % 100 + 1).to_be_bytes()).expect("nonzero residue")
        };
        let mut states: BTreeMap<u64, RequestState> = BTreeMap::new();
        let mut accepted = 0usize;
        let mut rejected = 0usize;
        let mut blocks = 0usize;

        let check = |ledger: &Ledger, states: &mut BTreeMap<u64, RequestState>| {
            assert_eq!(ledger.total_in_system(), total0, "conservation broke");
            for c in ledger.contracts() {
                match states.get(&c.contract_id) {
                    None => {
                        assert_eq!(c.state, RequestState::Requested, "contracts start Requested");
                        states.insert(c.contract_id, c.state);
                    }
                    Some(&old) if old != c.state => {
                        assert!(legal(old, c.state), "illegal transition {old:?} -> {to:?}", to = c.state);
                        states.insert(c.contract_id, c.state);
                    }
                    _ => {}
                }
            }
        };

        for _ in 0..steps {
            let sender = actors[rng.gen_range(0..actors.len())];
            let op = rng.gen_range(0..100u32);
            let submitted_at = ledger.now() + rng.gen_range(0.0..5.0);
            let payload = match op {
                0..=19 => TxPayload::RegisterSensor {
                    cert: cert(rng.gen()),
                    price: rng.gen_range(1..60),
                    description: format!("s{}", rng.gen_range(0..1000)),
                    // Small mac pool so duplicate registrations actually occur.
                    mac: [0, 0, 0, 0, 0, rng.gen_range(0..32)],
                },
                20..=39 => TxPayload::RequestData {
                    requester_id: Identity(0x8000_0000 | rng.gen_range(0..8)),
                    requester_cert: cert(rng.gen()),
                    sensor_id: Identity(rng.gen_range(1..12)),
                    t_from: 0,
                    t_to: rng.gen_range(0..500),
                    deposit: rng.gen_range(0..120),
                },
                40..=54 => TxPayload::PostReKey {
                    contract_id: rng.gen_range(1..10),
                    rekeys: (0..rng.gen_range(0..3))
                        .map(|k| {
                            (Metadata::new(Identity(rng.gen_range(1..12)), k), ReEncKey([k as u8; 32]))
                        })
                        .collect(),
                },
                55..=69 => TxPayload::PostDataAddr {
                    contract_id: rng.gen_range(1..10),
                    share_id: format!("{:032x}", rng.gen::<u128>()),
                },
                70..=84 => TxPayload::Confirm { contract_id: rng.gen_range(1..10) },
                _ => TxPayload::Transfer {
                    to: actors[rng.gen_range(0..actors.len())],
                    amount: rng.gen_range(0..20_000),
                },
            };
            // Mostly correct nonces, occasionally garbage to hit rejection.
            let nonce = if rng.gen_bool(0.95) {
                ledger.next_nonce(&sender)
            } else {
                rng.gen_range(0..50)
            };
            match ledger.submit_tx(sender, nonce, payload, submitted_at) {
                Ok(_) => accepted += 1,
                Err(_) => rejected += 1,
            }
            check(&ledger, &mut states);
            if rng.gen_bool(0.25) {
                ledger.mine_next_block();
                blocks += 1;
                check(&ledger, &mut states);
            }
        }
        // Drain the mempool so every accepted tx gets adjudicated.
        while ledger.pending_len() > 0 {
            ledger.mine_next_block();
            blocks += 1;
            check(&ledger, &mut states);
        }
        let terminal_contracts =
            states.values().filter(|s| s.is_terminal()).count();
        RunSummary {
            digest: ledger.chain_digest(),
            events_jsonl: ledger.export_events_jsonl(),
            accepted,
            rejected,
            blocks,
            terminal_contracts,
        }
    }
}

/// Field-by-field comparison of every scheme operation against the `toy`
/// oracle on a mock group. Shared between the dedicated equivalence suite
/// and the acceptance gate.
pub mod equivalence {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use sensorshare::group::{GroupParams, GroupPoint, Scalar};
    use sensorshare::pre::{
        ca_issue_with_secret, cert_request_with_secret, decrypt1, decrypt2, dem_apply,
        derive_public_key, encrypt, finalize_key, rekey, reencrypt, setup_with_alpha, Identity,
        KeyPair, MasterSecret, MessageBlock, Metadata, PublicParams, SchemeError,
    };

    use super::toy;

    pub fn scalar_u64(g: &GroupParams, s: &Scalar) -> u64 {
        u32::from_be_bytes(g.encode_scalar(s).try_into().expect("mock scalars are 4 bytes")) as u64
    }

    pub fn point_u64(g: &GroupParams, p: &GroupPoint) -> u64 {
        u32::from_be_bytes(g.encode_point(p).try_into().expect("mock points are 4 bytes")) as u64
    }

    /// Library-side keygen with pinned randomness; `None` mirrors the
    /// oracle's degenerate-certificate case, and the two sides must agree on
    /// when that is.
    fn lib_keygen(
        pp: &PublicParams,
        msk: &MasterSecret,
        id: Identity,
        r_u: u64,
        r_t: u64,
    ) -> Option<(KeyPair, u64)> {
        let g = &pp.group;
        let req = cert_request_with_secret(pp, id, &g.scalar_from_u64(r_u));
        match ca_issue_with_secret(pp, msk, &req, &g.scalar_from_u64(r_t)) {
            Ok(resp) => {
                let kp = finalize_key(pp, id, &g.scalar_from_u64(r_u), &resp)
                    .expect("honest keygen must validate");
                let r_a = scalar_u64(g, &resp.key_share);
                Some((kp, r_a))
            }
            Err(SchemeError::InvalidRequest) => None,
            Err(e) => panic!("unexpected keygen error: {e}"),
        }
    }

    /// Run `instances` random full-protocol instances mod `q`, panicking on
    /// the first disagreement. Returns (instances checked, degenerate draws
    /// where both sides refused the certificate).
    pub fn run(q: u64, instances: usize, seed: u64) -> (usize, usize) {
        let group = GroupParams::insecure_mock(q as u32).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut degenerate = 0usize;
        let mut checked = 0usize;

        while checked < instances {
            let alpha = rng.gen_range(1..q);
            let (pp, msk) = setup_with_alpha(group, group.scalar_from_u64(alpha));
            assert_eq!(point_u64(&group, &pp.p_alpha), alpha % q, "P_alpha = alpha*P");

            let id_a = Identity(rng.gen());
            let id_b = Identity(rng.gen());
            let (r_u_a, r_t_a) = (rng.gen_range(1..q), rng.gen_range(1..q));
            let (r_u_b, r_t_b) = (rng.gen_range(1..q), rng.gen_range(1..q));

            let oracle_a = toy::keygen(q, alpha, r_u_a, r_t_a, id_a.0);
            let lib_a = lib_keygen(&pp, &msk, id_a, r_u_a, r_t_a);
            assert_eq!(oracle_a.is_none(), lib_a.is_none(), "degenerate-cert agreement");
            let oracle_b = toy::keygen(q, alpha, r_u_b, r_t_b, id_b.0);
            let lib_b = lib_keygen(&pp, &msk, id_b, r_u_b, r_t_b);
            assert_eq!(oracle_b.is_none(), lib_b.is_none(), "degenerate-cert agreement");
            let (Some(oa), Some((ka, r_a_a)), Some(ob), Some((kb, _))) =
                (oracle_a, lib_a, oracle_b, lib_b)
            else {
                degenerate += 1;
                continue;
            };

            // Keygen: certificate, authority share, private key, public key.
            assert_eq!(point_u64(&group, ka.cert.point()), oa.cert);
            assert_eq!(r_a_a, oa.r_a);
            assert_eq!(scalar_u64(&group, &ka.private_key), oa.d);
            assert_eq!(point_u64(&group, &ka.public_key), oa.p_u);
            assert_eq!(
                point_u64(&group, &derive_public_key(&pp, &ka.cert, id_a)),
                toy::derive_pub(q, alpha, oa.cert, id_a.0)
            );

            // Encrypt: all four ciphertext fields.
            let m = MessageBlock(rng.gen());
            let t0: u32 = rng.gen();
            let ct = encrypt(&pp, &ka, &m, t0);
            let oct = toy::encrypt(q, &oa, &m.0, t0);
            assert_eq!(ct.c_a, oct.c_a);
            assert_eq!(ct.meta, Metadata::new(id_a, t0));
            assert_eq!(scalar_u64(&group, &ct.h_a), oct.h_a);
            assert_eq!(scalar_u64(&group, &ct.s_a), oct.s_a);

            // Owner decrypt.
            assert_eq!(decrypt1(&pp, &ka, &ct).unwrap().0, toy::decrypt1(q, &oa, &oct).unwrap());
            assert_eq!(toy::decrypt1(q, &oa, &oct).unwrap(), m.0);

            // Re-encryption key, proxy hop, delegatee decrypt.
            let rk = rekey(&pp, &ka, id_b, &kb.cert, &ct.meta);
            let ork = toy::rekey(q, &oa, ob.p_u, t0);
            assert_eq!(rk.0, ork);

            let re = reencrypt(&ct, &rk, id_b);
            let ore = toy::reencrypt(&oct, &ork, id_b.0);
            assert_eq!(re.c_b, ore.c_b);

            let p_a = derive_public_key(&pp, &ka.cert, id_a);
            let got = decrypt2(&pp, &kb, &p_a, &re).unwrap();
            let oracle_got = toy::decrypt2(q, ob.d, id_b.0, oa.p_u, &ore).unwrap();
            assert_eq!(got.0, oracle_got);
            assert_eq!(oracle_got, m.0);

            // Bulk keystream.
            let payload: Vec<u8> = (0..rng.gen_range(0..100)).map(|_| rng.gen()).collect();
            assert_eq!(
                dem_apply(&m, &ct.meta, &payload),
                toy::dem(&m.0, id_a.0, t0, &payload)
            );

            checked += 1;
        }
        (checked, degenerate)
    }
}

/// Pearson chi-square statistic against a uniform expectation.
pub fn chi_square(counts: &[u64], expected: f64) -> f64 {
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
