//! Python bindings for the re-encryption scheme and the scenario runner.
//!
//! The module mirrors the Rust API shape: a `Context` owns the authority
//! (public parameters plus issuing secret) and hands out key pairs; all
//! scheme operations hang off it. Wire values cross the boundary as `bytes`
//! or hex strings, never as live group elements, so Python can only feed
//! back what it could also have read off the network.
//!
//! Build with `cargo build -p sensorshare-py`; the resulting
//! `libsensorshare_py.so` imports as `sensorshare_py` once renamed (see
//! `python/smoke_test.py`).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sensorshare::actors::{run_scenario as run_scenario_rs, ScenarioConfig, ScenarioError};
use sensorshare::bench::bench_impact as bench_impact_rs;
use sensorshare::group::GroupParams;
use sensorshare::pre::{
    decrypt1 as decrypt1_rs, decrypt2 as decrypt2_rs, dem_apply as dem_apply_rs,
    derive_public_key, encrypt as encrypt_rs, issue_keypair, reencrypt as reencrypt_rs,
    rekey as rekey_rs, setup, validate_keypair, Certificate, Ciphertext, Identity, KeyPair,
    MasterSecret, MessageBlock, Metadata, PublicParams, ReEncCiphertext, ReEncKey,
};

fn value_err(msg: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(msg.to_string())
}

fn block_from_bytes(bytes: &[u8]) -> PyResult<MessageBlock> {
    let arr: [u8; 32] =
        bytes.try_into().map_err(|_| value_err("key block must be exactly 32 bytes"))?;
    Ok(MessageBlock(arr))
}

fn rekey_from_bytes(bytes: &[u8]) -> PyResult<ReEncKey> {
    let arr: [u8; 32] =
        bytes.try_into().map_err(|_| value_err("re-encryption key must be exactly 32 bytes"))?;
    Ok(ReEncKey(arr))
}

fn cert_from_hex(group: &GroupParams, s: &str) -> PyResult<Certificate> {
    let bytes = hex::decode(s).map_err(|e| value_err(format!("certificate hex: {e}")))?;
    Certificate::from_bytes(group, &bytes).map_err(value_err)
}

/// A certified key pair. The hex fields are wire encodings; `id` is the
/// 32-bit identity the certificate binds.
#[pyclass(name = "KeyPair", from_py_object)]
#[derive(Clone)]
pub struct PyKeyPair {
    inner: KeyPair,
    group: GroupParams,
}

#[pymethods]
impl PyKeyPair {
    #[getter]
    pub fn id(&self) -> u32 {
        self.inner.id.0
    }

    #[getter]
    pub fn cert_hex(&self) -> String {
        hex::encode(self.inner.cert.to_bytes(&self.group))
    }

    #[getter]
    pub fn public_key_hex(&self) -> String {
        hex::encode(self.group.encode_point(&self.inner.public_key))
    }

    #[getter]
    pub fn private_key_hex(&self) -> String {
        hex::encode(self.group.encode_scalar(&self.inner.private_key))
    }

    pub fn __repr__(&self) -> String {
        format!("KeyPair(id={:#010x}, cert={})", self.inner.id.0, self.cert_hex())
    }
}

/// A ciphertext under the owner's key, carrying its binding metadata.
#[pyclass(name = "Ciphertext", from_py_object)]
#[derive(Clone)]
pub struct PyCiphertext {
    inner: Ciphertext,
    group: GroupParams,
}

#[pymethods]
impl PyCiphertext {
    #[getter]
    pub fn sender_id(&self) -> u32 {
        self.inner.meta.id.0
    }

    #[getter]
    pub fn t0(&self) -> u32 {
        self.inner.meta.t0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes(&self.group)
    }

    pub fn __repr__(&self) -> String {
        format!("Ciphertext(sender={:#010x}, t0={})", self.sender_id(), self.t0())
    }
}

/// A re-encrypted ciphertext addressed to one delegate.
#[pyclass(name = "ReEncCiphertext", from_py_object)]
#[derive(Clone)]
pub struct PyReEncCiphertext {
    inner: ReEncCiphertext,
    group: GroupParams,
}

#[pymethods]
impl PyReEncCiphertext {
    #[getter]
    pub fn sender_id(&self) -> u32 {
        self.inner.meta.id.0
    }

    #[getter]
    pub fn recipient_id(&self) -> u32 {
        self.inner.id_b.0
    }

    #[getter]
    pub fn t0(&self) -> u32 {
        self.inner.meta.t0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes(&self.group)
    }

    pub fn __repr__(&self) -> String {
        format!(
            "ReEncCiphertext(sender={:#010x}, recipient={:#010x}, t0={})",
            self.sender_id(),
            self.recipient_id(),
            self.t0()
        )
    }
}

/// Authority context: public parameters plus the issuing secret, with a
/// seeded deterministic RNG for reproducible key issuance.
#[pyclass(name = "Context")]
pub struct PyContext {
    pp: PublicParams,
    msk: MasterSecret,
    rng: ChaCha20Rng,
}

#[pymethods]
impl PyContext {
    /// `Context(seed=7)` uses secp256k1; `Context(seed=7, mock=q)` uses the
    /// insecure integers-mod-q group (testing only).
    #[new]
    #[pyo3(signature = (seed = 7, mock = None))]
    pub fn new(seed: u64, mock: Option<u32>) -> PyResult<Self> {
        let group = match mock {
            Some(q) => GroupParams::insecure_mock(q).map_err(value_err)?,
            None => GroupParams::production(),
        };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pp, msk) = setup(group, &mut rng);
        Ok(PyContext { pp, msk, rng })
    }

    #[getter]
    pub fn group(&self) -> String {
        match self.pp.group.mock_order() {
            Some(q) => format!("mock({q})"),
            None => "secp256k1".to_string(),
        }
    }

    #[getter]
    pub fn p_alpha_hex(&self) -> String {
        hex::encode(self.pp.group.encode_point(&self.pp.p_alpha))
    }

    /// Issue a certified key pair for `id`.
    pub fn issue(&mut self, id: u32) -> PyResult<PyKeyPair> {
        let kp = issue_keypair(&self.pp, &self.msk, Identity(id), &mut self.rng)
            .map_err(value_err)?;
        Ok(PyKeyPair { inner: kp, group: self.pp.group })
    }

    /// Check the certificate equation for a key pair.
    pub fn validate(&self, kp: &PyKeyPair) -> bool {
        validate_keypair(&self.pp, &kp.inner)
    }

    /// Recompute a public key from certificate and identity alone.
    pub fn public_key_of(&self, cert_hex: &str, id: u32) -> PyResult<String> {
        let cert = cert_from_hex(&self.pp.group, cert_hex)?;
        let p = derive_public_key(&self.pp, &cert, Identity(id));
        Ok(hex::encode(self.pp.group.encode_point(&p)))
    }

    /// Encrypt a 32-byte content key under the owner's key, bound to `t0`.
    pub fn encrypt(&self, kp: &PyKeyPair, key_block: Vec<u8>, t0: u32) -> PyResult<PyCiphertext> {
        let m = block_from_bytes(&key_block)?;
        let ct = encrypt_rs(&self.pp, &kp.inner, &m, t0);
        Ok(PyCiphertext { inner: ct, group: self.pp.group })
    }

    /// Owner-side decryption; raises ValueError on authentication failure.
    pub fn decrypt1(&self, kp: &PyKeyPair, ct: &PyCiphertext) -> PyResult<Vec<u8>> {
        let m = decrypt1_rs(&self.pp, &kp.inner, &ct.inner).map_err(value_err)?;
        Ok(m.0.to_vec())
    }

    /// Re-encryption key from the owner toward `(id_b, cert_b)`, scoped to
    /// records with timestamp `t0`.
    pub fn rekey(&self, kp_a: &PyKeyPair, id_b: u32, cert_b_hex: &str, t0: u32) -> PyResult<Vec<u8>> {
        let cert_b = cert_from_hex(&self.pp.group, cert_b_hex)?;
        let meta = Metadata::new(kp_a.inner.id, t0);
        let rk = rekey_rs(&self.pp, &kp_a.inner, Identity(id_b), &cert_b, &meta);
        Ok(rk.0.to_vec())
    }

    /// Proxy-side transform (uses no secrets).
    pub fn reencrypt(&self, ct: &PyCiphertext, rk: Vec<u8>, id_b: u32) -> PyResult<PyReEncCiphertext> {
        let rk = rekey_from_bytes(&rk)?;
        let re = reencrypt_rs(&ct.inner, &rk, Identity(id_b));
        Ok(PyReEncCiphertext { inner: re, group: self.pp.group })
    }

    /// Delegate-side decryption given the owner's certificate and identity;
    /// raises ValueError on authentication failure.
    pub fn decrypt2(
        &self,
        kp_b: &PyKeyPair,
        cert_a_hex: &str,
        id_a: u32,
        re: &PyReEncCiphertext,
    ) -> PyResult<Vec<u8>> {
        let cert_a = cert_from_hex(&self.pp.group, cert_a_hex)?;
        let p_a = derive_public_key(&self.pp, &cert_a, Identity(id_a));
        let m = decrypt2_rs(&self.pp, &kp_b.inner, &p_a, &re.inner).map_err(value_err)?;
        Ok(m.0.to_vec())
    }

    /// Decode ciphertext bytes produced by `Ciphertext.to_bytes`.
    pub fn ciphertext_from_bytes(&self, bytes: Vec<u8>) -> PyResult<PyCiphertext> {
        let ct = Ciphertext::from_bytes(&self.pp.group, &bytes).map_err(value_err)?;
        Ok(PyCiphertext { inner: ct, group: self.pp.group })
    }

    /// Decode re-encrypted ciphertext bytes produced by
    /// `ReEncCiphertext.to_bytes`.
    pub fn reenc_from_bytes(&self, bytes: Vec<u8>) -> PyResult<PyReEncCiphertext> {
        let re = ReEncCiphertext::from_bytes(&self.pp.group, &bytes).map_err(value_err)?;
        Ok(PyReEncCiphertext { inner: re, group: self.pp.group })
    }
}

/// Symmetric keystream over the bulk payload, bound to `(sender_id, t0)`.
/// Applying it twice with the same key returns the input.
#[pyfunction]
fn dem_apply(key_block: Vec<u8>, sender_id: u32, t0: u32, data: Vec<u8>) -> PyResult<Vec<u8>> {
    let key = block_from_bytes(&key_block)?;
    Ok(dem_apply_rs(&key, &Metadata::new(Identity(sender_id), t0), &data))
}

/// Outcome of one simulated sharing scenario.
#[pyclass(name = "ScenarioResult")]
pub struct PyScenarioResult {
    #[pyo3(get)]
    all_verified: bool,
    #[pyo3(get)]
    mismatches: usize,
    #[pyo3(get)]
    mean_latency_s: f64,
    #[pyo3(get)]
    blocks_mined: u64,
    #[pyo3(get)]
    final_time_s: f64,
    #[pyo3(get)]
    trace_jsonl: String,
}

#[pymethods]
impl PyScenarioResult {
    pub fn __repr__(&self) -> String {
        format!(
            "ScenarioResult(all_verified={}, mean_latency_s={:.3}, blocks_mined={})",
            if self.all_verified { "True" } else { "False" },
            self.mean_latency_s,
            self.blocks_mined
        )
    }
}

/// Run one scenario from a JSON config (same schema as the CLI's --config;
/// omitted keys take defaults; pass "{}" for the default scenario).
#[pyfunction]
fn run_scenario(config_json: &str) -> PyResult<PyScenarioResult> {
    let cfg: ScenarioConfig = serde_json::from_str(config_json).map_err(value_err)?;
    match run_scenario_rs(cfg) {
        Ok(trace) => Ok(PyScenarioResult {
            all_verified: trace.all_verified(),
            mismatches: trace.mismatches,
            mean_latency_s: trace.mean_latency(),
            blocks_mined: trace.blocks_mined,
            final_time_s: trace.final_time,
            trace_jsonl: trace.to_jsonl(),
        }),
        Err(ScenarioError::InvalidConfig(m)) => Err(value_err(m)),
        Err(e) => Err(PyRuntimeError::new_err(e.to_string())),
    }
}

/// Matched-seed latency comparison with and without re-encryption. Returns
/// `(mean_pre_s, mean_baseline_s, overhead_ratio)`.
#[pyfunction]
#[pyo3(signature = (config_json = "{}", reps = 10))]
fn bench_impact(config_json: &str, reps: usize) -> PyResult<(f64, f64, f64)> {
    if reps < 1 {
        return Err(value_err("reps must be at least 1"));
    }
    let cfg: ScenarioConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let result = bench_impact_rs(&cfg, reps).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let s = result.summary;
    Ok((s.mean_pre_s, s.mean_baseline_s, s.overhead_ratio))
}

#[pymodule]
fn sensorshare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyContext>()?;
    m.add_class::<PyKeyPair>()?;
    m.add_class::<PyCiphertext>()?;
    m.add_class::<PyReEncCiphertext>()?;
    m.add_class::<PyScenarioResult>()?;
    m.add_function(wrap_pyfunction!(dem_apply, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(bench_impact, m)?)?;
    Ok(())
}
