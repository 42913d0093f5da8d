//! Command-line interface.
//!
//! Exit codes: 0 accept/success, 1 cryptographic reject (the category is
//! printed), 2 usage or config error, 3 i/o error past argument handling,
//! 4 internal error. A missing input file is a usage error; failures while
//! streaming an opened file are i/o errors.

use crate::bundle;
use crate::dataset::{self, DataError, Dataset};
use crate::orchestrator::{self, AuxTamper, ProofBundle, Reject};
use crate::quant::QuantError;
use crate::schema::{Layout, RunConfig};
use crate::trainer::{Corruption, CorruptSite};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_ACCEPT: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Parser)]
#[command(name = "zkdl", about = "Verifiable quantized training", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train, prove every step, and write the proof bundle.
    TrainProve(TrainArgs),
    /// Verify a proof bundle against its embedded public inputs.
    Verify(VerifyArgs),
    /// Sweep window sizes and report cost columns as CSV.
    Bench(BenchArgs),
    /// Produce and check a deliberately broken proof.
    Tamper(TamperArgs),
}

#[derive(Args, Clone)]
struct HyperArgs {
    /// Layer widths, comma separated (e.g. 32,16,4).
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
    /// Total SGD steps.
    #[arg(long, default_value_t = 16)]
    steps: usize,
    /// Steps per proof window (power of two dividing --steps).
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Batch size.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Integer bits.
    #[arg(long, default_value_t = 16)]
    q_bits: u32,
    /// Fractional bits.
    #[arg(long, default_value_t = 16)]
    r_bits: u32,
    /// Learning rate 2^-shift.
    #[arg(long, default_value_t = 8)]
    lr_shift: u32,
    /// Run seed: weights, data order, blinding.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl HyperArgs {
    fn config(&self, input_dim: usize) -> Result<RunConfig, String> {
        let cfg = RunConfig {
            input_dim,
            widths: self.layers.clone(),
            batch: self.batch,
            steps: self.steps,
            window: self.window,
            q_bits: self.q_bits,
            r_bits: self.r_bits,
            lr_shift: self.lr_shift,
            seed: self.seed,
            key_seed: key_seed_for(self.seed),
        };
        cfg.validate().map_err(|e| format!("{e}"))?;
        Ok(cfg)
    }
}

/// Commitment key seed, fixed per run seed so verification needs no extra
/// input beyond the bundle.
fn key_seed_for(seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"zkdl/v1/key-seed");
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset path; omitted means seeded synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset file format.
    #[arg(long, value_parser = ["csv", "f32bin"], default_value = "csv")]
    format: String,
    /// Feature count for synthetic data (ignored with --data).
    #[arg(long, default_value_t = 8)]
    input_dim: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Output path for the proof bundle.
    #[arg(long, default_value = "proof.bin")]
    out: PathBuf,
    /// Optional output path for the public commitment manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Proof bundle to verify.
    #[arg(long)]
    proof: PathBuf,
    /// Manifest the bundle must match.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Expected hyperparameters; any that disagree with the bundle reject it.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    q_bits: Option<u32>,
    #[arg(long)]
    r_bits: Option<u32>,
    #[arg(long)]
    lr_shift: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Window sizes to sweep, comma separated, overriding --window.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    /// Optional CSV output path (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TamperArgs {
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Flip this byte of an existing bundle (--proof) before verifying.
    #[arg(long)]
    flip_byte: Option<usize>,
    /// Bundle to byte-flip.
    #[arg(long)]
    proof: Option<PathBuf>,
    /// Re-prove with a lying trace; key=value pairs, e.g.
    /// family=GW step=3 layer=1 index=0 delta=1.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    corrupt_tensor: Option<Vec<String>>,
    /// Where to write the broken bundle.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entry point behind `main`; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // Help and version are successful outputs, not usage errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match cli.cmd {
        Cmd::TrainProve(a) => train_prove(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Tamper(a) => tamper(a),
    }
}

fn init_threads() {
    if let Ok(v) = std::env::var("ZKDL_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn usage(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn io_fail(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_IO
}

fn load_dataset(d: &DataArgs, hyper: &HyperArgs) -> Result<(Dataset, usize), i32> {
    let out_dim = match hyper.layers.last() {
        Some(&w) => w,
        None => return Err(usage("--layers must name at least one layer")),
    };
    let params = match crate::quant::QuantParams::new(hyper.q_bits, hyper.r_bits) {
        Ok(p) => p,
        Err(e) => return Err(usage(&format!("{e}"))),
    };
    match &d.data {
        None => {
            let rows = hyper.batch * 8;
            let ds = dataset::synthetic(hyper.seed, rows, d.input_dim, out_dim, &params);
            Ok((ds, d.input_dim))
        }
        Some(path) => {
            if !path.exists() {
                return Err(usage(&format!("dataset not found: {}", path.display())));
            }
            let res = match d.format.as_str() {
                "csv" => dataset::load_csv(path, out_dim, &params),
                _ => dataset::load_f32_binary(path, out_dim, &params),
            };
            match res {
                Ok(ds) => {
                    let dim = ds.input_dim;
                    Ok((ds, dim))
                }
                Err(DataError::Io(e)) => Err(io_fail(&format!("{}: {e}", path.display()))),
                Err(e) => Err(io_fail(&format!("{}: {e}", path.display()))),
            }
        }
    }
}

fn manifest_text(bundle: &ProofBundle) -> String {
    let lay = Layout::new(&bundle.config);
    let masters = lay.masters();
    let mut s = String::new();
    let _ = writeln!(s, "config {}", hex::encode(bundle.config.hash()));
    for (w, sec) in bundle.windows.iter().enumerate() {
        for (id, c) in masters.iter().zip(&sec.commitments) {
            let mut h = Sha256::new();
            h.update(c.to_bytes());
            let _ = writeln!(s, "window {w} {id:?} {}", hex::encode(h.finalize()));
        }
    }
    s
}

fn prove_with(
    cfg: &RunConfig,
    ds: &Dataset,
    corruptions: &[Corruption],
    tampers: &[AuxTamper],
) -> Result<orchestrator::ProveOutput, i32> {
    match orchestrator::prove_training(cfg, ds, corruptions, tampers) {
        Ok(o) => Ok(o),
        Err(orchestrator::ProveError::Quant(e @ QuantError::RangeOverflow { .. })) => {
            Err(usage(&format!("{e}")))
        }
        Err(orchestrator::ProveError::Quant(e)) => Err(usage(&format!("{e}"))),
        Err(orchestrator::ProveError::Config(e)) => Err(usage(&format!("{e}"))),
        Err(orchestrator::ProveError::Key(e)) => {
            eprintln!("error: {e}");
            Err(EXIT_INTERNAL)
        }
    }
}

fn train_prove(a: TrainArgs) -> i32 {
    let (ds, input_dim) = match load_dataset(&a.data, &a.hyper) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let cfg = match a.hyper.config(input_dim) {
        Ok(c) => c,
        Err(e) => return usage(&e),
    };
    let out = match prove_with(&cfg, &ds, &[], &[]) {
        Ok(o) => o,
        Err(code) => return code,
    };
    let bytes = bundle::encode(&out.bundle);
    if let Err(e) = std::fs::write(&a.out, &bytes) {
        return io_fail(&format!("{}: {e}", a.out.display()));
    }
    if let Some(mpath) = &a.manifest {
        if let Err(e) = std::fs::write(mpath, manifest_text(&out.bundle)) {
            return io_fail(&format!("{}: {e}", mpath.display()));
        }
    }
    let sizes = bundle::window_byte_sizes(&out.bundle);
    for (w, ((cs, ps), pt)) in sizes.iter().zip(&out.pt_ms).enumerate() {
        println!("metrics window={w} pt_ms={pt:.3} cs_bytes={cs} ps_bytes={ps}");
    }
    println!("wrote {} ({} bytes)", a.out.display(), bytes.len());
    EXIT_ACCEPT
}

fn read_file_arg(path: &Path) -> Result<Vec<u8>, i32> {
    if !path.exists() {
        return Err(usage(&format!("file not found: {}", path.display())));
    }
    std::fs::read(path).map_err(|e| io_fail(&format!("{}: {e}", path.display())))
}

fn reject(r: &Reject) -> i32 {
    println!("reject {r}");
    EXIT_REJECT
}

fn verify_decoded(bundle: &ProofBundle) -> i32 {
    match orchestrator::verify_bundle(bundle) {
        Ok(vt) => {
            for (w, ms) in vt.iter().enumerate() {
                println!("metrics window={w} vt_ms={ms:.3}");
            }
            println!("accept");
            EXIT_ACCEPT
        }
        Err(r) => reject(&r),
    }
}

fn verify_bytes(bytes: &[u8]) -> i32 {
    match bundle::decode(bytes) {
        Ok(b) => verify_decoded(&b),
        Err(e) => reject(&Reject::Malformed(format!("{e}"))),
    }
}

fn verify(a: VerifyArgs) -> i32 {
    let bytes = match read_file_arg(&a.proof) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let b = match bundle::decode(&bytes) {
        Ok(b) => b,
        Err(e) => return reject(&Reject::Malformed(format!("{e}"))),
    };
    let cfg = &b.config;
    let mismatch = |what: &str| {
        reject(&Reject::TranscriptMismatch(format!("{what} disagrees with the bundle")))
    };
    if let Some(v) = &a.layers {
        if *v != cfg.widths {
            return mismatch("--layers");
        }
    }
    if let Some(v) = a.steps {
        if v != cfg.steps {
            return mismatch("--steps");
        }
    }
    if let Some(v) = a.window {
        if v != cfg.window {
            return mismatch("--window");
        }
    }
    if let Some(v) = a.batch {
        if v != cfg.batch {
            return mismatch("--batch");
        }
    }
    if let Some(v) = a.q_bits {
        if v != cfg.q_bits {
            return mismatch("--q-bits");
        }
    }
    if let Some(v) = a.r_bits {
        if v != cfg.r_bits {
            return mismatch("--r-bits");
        }
    }
    if let Some(v) = a.lr_shift {
        if v != cfg.lr_shift {
            return mismatch("--lr-shift");
        }
    }
    if let Some(v) = a.seed {
        if v != cfg.seed {
            return mismatch("--seed");
        }
    }
    if let Some(mpath) = &a.manifest {
        let text = match read_file_arg(mpath) {
            Ok(t) => t,
            Err(code) => return code,
        };
        if text != manifest_text(&b).as_bytes() {
            return mismatch("manifest");
        }
    }
    verify_decoded(&b)
}

fn bench(a: BenchArgs) -> i32 {
    let windows = a.windows.clone().unwrap_or_else(|| vec![a.hyper.window]);
    if windows.is_empty() {
        return usage("--windows needs at least one value");
    }
    let mut csv = String::from("window,pt_ms,cs_bytes,ps_bytes,vt_ms\n");
    for w in windows {
        let mut hyper = a.hyper.clone();
        hyper.window = w;
        let (ds, input_dim) = match load_dataset(&a.data, &hyper) {
            Ok(v) => v,
            Err(code) => return code,
        };
        let cfg = match hyper.config(input_dim) {
            Ok(c) => c,
            Err(e) => return usage(&e),
        };
        let out = match prove_with(&cfg, &ds, &[], &[]) {
            Ok(o) => o,
            Err(code) => return code,
        };
        let t0 = Instant::now();
        if let Err(r) = orchestrator::verify_bundle(&out.bundle) {
            return reject(&r);
        }
        let vt_total = t0.elapsed().as_secs_f64() * 1e3;
        let pt_total: f64 = out.pt_ms.iter().sum();
        let sizes = bundle::window_byte_sizes(&out.bundle);
        let cs: usize = sizes.iter().map(|(c, _)| c).sum();
        let ps: usize = sizes.iter().map(|(_, p)| p).sum();
        let _ = writeln!(csv, "{w},{pt_total:.3},{cs},{ps},{vt_total:.3}");
    }
    match &a.out {
        None => {
            print!("{csv}");
            EXIT_ACCEPT
        }
        Some(path) => match std::fs::write(path, csv) {
            Ok(()) => EXIT_ACCEPT,
            Err(e) => io_fail(&format!("{}: {e}", path.display())),
        },
    }
}

fn parse_corrupt_spec(
    pairs: &[String],
    cfg: &RunConfig,
) -> Result<(Vec<Corruption>, Vec<AuxTamper>), String> {
    let mut family = None;
    let mut step = 0usize;
    let mut layer = 1usize;
    let mut index = 0usize;
    let mut delta = 1i128;
    let mut window = 0usize;
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {pair}"))?;
        match k {
            "family" => family = Some(v.to_ascii_uppercase()),
            "step" => step = v.parse().map_err(|_| format!("bad step {v}"))?,
            "layer" => layer = v.parse().map_err(|_| format!("bad layer {v}"))?,
            "index" => index = v.parse().map_err(|_| format!("bad index {v}"))?,
            "delta" => delta = v.parse().map_err(|_| format!("bad delta {v}"))?,
            "window" => window = v.parse().map_err(|_| format!("bad window {v}"))?,
            other => return Err(format!("unknown key {other}")),
        }
    }
    let family = family.ok_or("family= is required")?;
    let site = match family.as_str() {
        "Z" | "PREACT" => Some(CorruptSite::PreAct),
        "A" | "ACT" => Some(CorruptSite::Act),
        "GZ" => Some(CorruptSite::GradZ),
        "GA" => Some(CorruptSite::GradA),
        "GW" => Some(CorruptSite::GradW),
        "W" | "WEIGHTS" => Some(CorruptSite::Weights),
        _ => None,
    };
    if let Some(site) = site {
        if step >= cfg.steps {
            return Err(format!("step {step} outside 0..{}", cfg.steps));
        }
        return Ok((vec![Corruption { site, step, layer, index, delta }], vec![]));
    }
    let master = match family.as_str() {
        "AUX-RELU" => crate::schema::MasterId::AuxRelu(layer),
        "AUX-LOSS" => crate::schema::MasterId::AuxLoss,
        "AUX-UPDATE" => crate::schema::MasterId::AuxUpdate(layer),
        other => return Err(format!("unknown family {other}")),
    };
    Ok((vec![], vec![AuxTamper { window, master, index, flip: true, delta }]))
}

fn tamper(a: TamperArgs) -> i32 {
    match (&a.flip_byte, &a.corrupt_tensor) {
        (Some(n), None) => {
            let Some(proof) = &a.proof else {
                return usage("--flip-byte needs --proof");
            };
            let mut bytes = match read_file_arg(proof) {
                Ok(b) => b,
                Err(code) => return code,
            };
            if bytes.is_empty() {
                return usage("empty proof file");
            }
            let pos = n % bytes.len();
            bytes[pos] ^= 0x01;
            if let Some(out) = &a.out {
                if let Err(e) = std::fs::write(out, &bytes) {
                    return io_fail(&format!("{}: {e}", out.display()));
                }
            }
            println!("flipped byte {pos}");
            verify_bytes(&bytes)
        }
        (None, Some(pairs)) => {
            let (ds, input_dim) = match load_dataset(&a.data, &a.hyper) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let cfg = match a.hyper.config(input_dim) {
                Ok(c) => c,
                Err(e) => return usage(&e),
            };
            let (corr, tam) = match parse_corrupt_spec(pairs, &cfg) {
                Ok(v) => v,
                Err(e) => return usage(&e),
            };
            let out = match prove_with(&cfg, &ds, &corr, &tam) {
                Ok(o) => o,
                Err(code) => return code,
            };
            let bytes = bundle::encode(&out.bundle);
            if let Some(path) = &a.out {
                if let Err(e) = std::fs::write(path, &bytes) {
                    return io_fail(&format!("{}: {e}", path.display()));
                }
            }
            verify_bytes(&bytes)
        }
        _ => usage("tamper needs exactly one of --flip-byte or --corrupt-tensor"),
    }
}
