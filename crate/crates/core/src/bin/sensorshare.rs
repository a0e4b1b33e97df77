//! Command-line front end: certified key utilities, the scenario runner,
//! and the two latency benchmarks.
//!
//! Every command is deterministic under `--seed`, and the CSV files it
//! writes are byte-stable. Exit codes: 0 success, 2 key validation or bad
//! input, 3 scenario stalled, 4 plaintext mismatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sensorshare::actors::ScenarioConfig;
use sensorshare::bench::{self, BenchError, RunOutcome, SCALE_REPS, SCALE_STEPS};
use sensorshare::group::GroupParams;
use sensorshare::pre::{
    issue_keypair, setup, validate_keypair, Certificate, Identity, KeyPair, MasterSecret,
    PublicParams,
};

const EXIT_KEY: u8 = 2;
const EXIT_STALLED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sensorshare",
    version,
    about = "Certificate-based proxy re-encryption over a simulated sensor-data market"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Issue a certified key pair for an identity, or re-validate existing
    /// key files.
    Keygen(KeygenArgs),
    /// Run one sharing scenario and write trace.jsonl + metrics.csv.
    Run(RunArgs),
    /// Compare sharing latency with and without proxy re-encryption.
    BenchImpact(ImpactArgs),
    /// Sweep concurrent request counts and report mean completion times.
    BenchScale(ScaleArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Identity to certify (32-bit).
    #[arg(long)]
    id: u32,
    /// Directory for authority.json and key-<id>.json files.
    #[arg(long, default_value = "keys")]
    out: PathBuf,
    /// Seed for the authority and per-identity key randomness.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Use the insecure mock group of integers mod this prime instead of
    /// secp256k1 (testing only).
    #[arg(long)]
    mock: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config as JSON; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for trace.jsonl and metrics.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Wall-clock seconds to sleep per simulated second (demo pacing).
    #[arg(long)]
    realtime: Option<f64>,
}

#[derive(Args)]
struct ImpactArgs {
    /// Scenario config as JSON; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matched repetitions per mode.
    #[arg(long, default_value_t = 30)]
    reps: usize,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for impact.csv and impact_summary.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScaleArgs {
    /// Scenario config as JSON; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repetitions per load level.
    #[arg(long, default_value_t = SCALE_REPS)]
    reps: usize,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for scale.csv and scale_raw.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Keygen(a) => cmd_keygen(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::BenchImpact(a) => cmd_bench_impact(a),
        Cmd::BenchScale(a) => cmd_bench_scale(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_KEY)
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig, String> {
    let mut cfg = match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| format!("read {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("parse {}: {e}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode, String> {
    let mut cfg = load_config(a.config.as_deref(), a.seed)?;
    if let Some(scale) = a.realtime {
        cfg.realtime_scale = scale;
    }
    match bench::run_to_dir(&cfg, &a.out) {
        Ok(RunOutcome::Clean) => {
            println!(
                "ok: {} request(s) completed and verified; wrote {}/trace.jsonl and {}/metrics.csv",
                cfg.n_requesters,
                a.out.display(),
                a.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Ok(RunOutcome::Mismatch(n)) => {
            eprintln!("mismatch: {n} delivered payload(s) differ from the sensor originals");
            Ok(ExitCode::from(EXIT_MISMATCH))
        }
        Ok(RunOutcome::Stalled { at, pending }) => {
            eprintln!("stalled: {pending} transaction(s) still pending at t={at:.1}s");
            Ok(ExitCode::from(EXIT_STALLED))
        }
        Err(BenchError::Config(m)) => Err(m),
        Err(e) => Err(e.to_string()),
    }
}

fn cmd_bench_impact(a: ImpactArgs) -> Result<ExitCode, String> {
    if a.reps < 1 {
        return Err("--reps must be at least 1".into());
    }
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let summary = bench::impact_to_dir(&cfg, a.reps, &a.out).map_err(|e| e.to_string())?;
    println!(
        "{} matched repetition(s): re-encryption mean {:.3} s, direct-grant mean {:.3} s, overhead {:+.1}%",
        summary.reps,
        summary.mean_pre_s,
        summary.mean_baseline_s,
        summary.overhead_ratio * 100.0
    );
    println!("wrote {}/impact.csv and {}/impact_summary.csv", a.out.display(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench_scale(a: ScaleArgs) -> Result<ExitCode, String> {
    if a.reps < 1 {
        return Err("--reps must be at least 1".into());
    }
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let points =
        bench::scale_to_dir(&cfg, &SCALE_STEPS, a.reps, &a.out).map_err(|e| e.to_string())?;
    for p in &points {
        println!(
            "n={:<2} mean completion {:.3} s over {} repetition(s)",
            p.n_requests, p.mean_latency_s, p.reps
        );
    }
    println!("wrote {}/scale.csv and {}/scale_raw.csv", a.out.display(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

// Key files are plain JSON with hex-encoded wire bytes, so they diff cleanly
// and corruption is visible. authority.json also holds the issuing secret:
// these are simulation fixtures, not protected key storage.

fn cmd_keygen(a: KeygenArgs) -> Result<ExitCode, String> {
    fs::create_dir_all(&a.out).map_err(|e| format!("create {}: {e}", a.out.display()))?;
    let authority_path = a.out.join("authority.json");
    let (pp, msk) = if authority_path.exists() {
        load_authority(&authority_path)?
    } else {
        let group = match a.mock {
            Some(q) => GroupParams::insecure_mock(q).map_err(|e| e.to_string())?,
            None => GroupParams::production(),
        };
        let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
        let (pp, msk) = setup(group, &mut rng);
        write_authority(&authority_path, &pp, &msk)?;
        println!("authority initialized in {}", authority_path.display());
        (pp, msk)
    };

    let id = Identity(a.id);
    let key_path = a.out.join(format!("key-{}.json", id.hex()));
    if key_path.exists() {
        let kp = load_keypair(&pp, &key_path)?;
        if kp.id != id || !validate_keypair(&pp, &kp) {
            eprintln!("key file {} fails certificate validation", key_path.display());
            return Ok(ExitCode::from(EXIT_KEY));
        }
        println!(
            "id {id} re-validated: public key {}",
            hex::encode(pp.group.encode_point(&kp.public_key))
        );
        return Ok(ExitCode::SUCCESS);
    }

    // Same seed, different ids must give independent draws: put each id on
    // its own ChaCha stream.
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    rng.set_stream(u64::from(a.id).wrapping_add(1));
    let kp = issue_keypair(&pp, &msk, id, &mut rng).map_err(|e| e.to_string())?;
    if !validate_keypair(&pp, &kp) {
        eprintln!("freshly issued key for {id} fails certificate validation");
        return Ok(ExitCode::from(EXIT_KEY));
    }
    write_keypair(&key_path, &pp, &kp)?;
    println!(
        "id {id} issued: public key {} (validation OK), written to {}",
        hex::encode(pp.group.encode_point(&kp.public_key)),
        key_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_authority(path: &Path, pp: &PublicParams, msk: &MasterSecret) -> Result<(), String> {
    let doc = serde_json::json!({
        "params": hex::encode(pp.to_bytes()),
        "master_secret": hex::encode(pp.group.encode_scalar(&msk.alpha)),
    });
    fs::write(path, format!("{:#}\n", doc)).map_err(|e| format!("write {}: {e}", path.display()))
}

fn load_authority(path: &Path) -> Result<(PublicParams, MasterSecret), String> {
    let bad = |m: String| format!("{}: {m}", path.display());
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let field = |name: &str| -> Result<Vec<u8>, String> {
        let s = doc[name].as_str().ok_or_else(|| bad(format!("missing field {name}")))?;
        hex::decode(s).map_err(|e| bad(format!("field {name}: {e}")))
    };
    let pp = PublicParams::from_bytes(&field("params")?).map_err(|e| bad(e.to_string()))?;
    let alpha =
        pp.group.decode_scalar(&field("master_secret")?).map_err(|e| bad(e.to_string()))?;
    Ok((pp, MasterSecret { alpha }))
}

fn write_keypair(path: &Path, pp: &PublicParams, kp: &KeyPair) -> Result<(), String> {
    let g = &pp.group;
    let doc = serde_json::json!({
        "id": kp.id.hex(),
        "cert": hex::encode(kp.cert.to_bytes(g)),
        "private_key": hex::encode(g.encode_scalar(&kp.private_key)),
        "public_key": hex::encode(g.encode_point(&kp.public_key)),
    });
    fs::write(path, format!("{:#}\n", doc)).map_err(|e| format!("write {}: {e}", path.display()))
}

fn load_keypair(pp: &PublicParams, path: &Path) -> Result<KeyPair, String> {
    let bad = |m: String| format!("{}: {m}", path.display());
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let field = |name: &str| -> Result<Vec<u8>, String> {
        let s = doc[name].as_str().ok_or_else(|| bad(format!("missing field {name}")))?;
        hex::decode(s).map_err(|e| bad(format!("field {name}: {e}")))
    };
    let g = &pp.group;
    let id_bytes: [u8; 4] =
        field("id")?.try_into().map_err(|_| bad("field id: wrong length".into()))?;
    Ok(KeyPair {
        id: Identity::from_bytes(id_bytes),
        cert: Certificate::from_bytes(g, &field("cert")?).map_err(|e| bad(e.to_string()))?,
        private_key: g.decode_scalar(&field("private_key")?).map_err(|e| bad(e.to_string()))?,
        public_key: g.decode_point(&field("public_key")?).map_err(|e| bad(e.to_string()))?,
    })
}
