//! Run configuration and the per-window proof layout.
//!
//! A training run is split into windows of `window` steps. Each window
//! commits one master tensor per logical role (data, labels, per-layer
//! weights chain, activations, gradients, auxiliary bits) and proves every
//! step relation inside the window against those masters. The inventories
//! and orderings here are the single source of truth shared by the prover,
//! the verifier, and the bundle codec: commitments, op proofs, and pool
//! closures all follow them positionally.

use crate::quant::{QuantError, QuantParams};
use crate::tensor::{log2, pad_pow2};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Domain-separated deterministic RNG for one purpose (weight init, dataset
/// synthesis, shuffling). Streams for different domains are independent.
pub fn domain_rng(domain: &str, seed: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"zkdl/v1/rng/");
    h.update(domain.as_bytes());
    h.update(seed.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Uniform draw in [0, n) by rejection; depends only on the ChaCha stream,
/// not on any external sampler's implementation details.
pub fn uniform_below(rng: &mut ChaCha20Rng, n: u64) -> u64 {
    assert!(n > 0);
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

/// Uniform draw in [lo, hi] inclusive.
pub fn uniform_range(rng: &mut ChaCha20Rng, lo: i128, hi: i128) -> i128 {
    assert!(lo <= hi && hi - lo < u64::MAX as i128);
    lo + uniform_below(rng, (hi - lo + 1) as u64) as i128
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("network needs at least one layer")]
    NoLayers,
    #[error("dimensions must be nonzero")]
    ZeroDim,
    #[error("window must be a power of two")]
    WindowNotPow2,
    #[error("steps must be a nonzero multiple of the window")]
    StepsNotMultiple,
    #[error("quantization: {0}")]
    Quant(#[from] QuantError),
    #[error("update shift must satisfy 1 <= r_bits + lr_shift < q_bits + r_bits")]
    BadShift,
    #[error("a dimension exceeds its supported bound")]
    TooLarge,
}

/// Complete description of a deterministic training run. Two runs with equal
/// configs produce byte-identical traces, commitments, and proofs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub input_dim: usize,
    /// Layer output widths, first hidden to output.
    pub widths: Vec<usize>,
    pub batch: usize,
    pub steps: usize,
    pub window: usize,
    pub q_bits: u32,
    pub r_bits: u32,
    /// Learning rate is 2^-lr_shift.
    pub lr_shift: u32,
    /// Seeds weight init and the synthetic dataset stream.
    pub seed: u64,
    /// Seeds the commitment key generators.
    pub key_seed: [u8; 32],
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.widths.is_empty() {
            return Err(ConfigError::NoLayers);
        }
        if self.input_dim == 0 || self.batch == 0 || self.widths.contains(&0) {
            return Err(ConfigError::ZeroDim);
        }
        if self.window == 0 || !self.window.is_power_of_two() {
            return Err(ConfigError::WindowNotPow2);
        }
        if self.steps == 0 || !self.steps.is_multiple_of(self.window) {
            return Err(ConfigError::StepsNotMultiple);
        }
        // Caps keep a verifier that trusts only the decoded config from
        // allocating unbounded tables for a hostile bundle.
        if self.widths.len() > 64
            || self.widths.iter().any(|&w| w > 1024)
            || self.input_dim > 65536
            || self.batch > 65536
            || self.steps > 1 << 20
            || self.window > 1 << 12
        {
            return Err(ConfigError::TooLarge);
        }
        let params = QuantParams::new(self.q_bits, self.r_bits)?;
        let shift = self.r_bits + self.lr_shift;
        if shift < 1 || shift >= params.total_bits() {
            return Err(ConfigError::BadShift);
        }
        Ok(())
    }

    pub fn quant(&self) -> QuantParams {
        QuantParams::new(self.q_bits, self.r_bits).expect("validated config")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn n_windows(&self) -> usize {
        self.steps / self.window
    }

    /// Canonical byte encoding; the config hash and the bundle header both
    /// use it.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.input_dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.widths.len() as u64).to_le_bytes());
        for w in &self.widths {
            out.extend_from_slice(&(*w as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.batch as u64).to_le_bytes());
        out.extend_from_slice(&(self.steps as u64).to_le_bytes());
        out.extend_from_slice(&(self.window as u64).to_le_bytes());
        out.extend_from_slice(&self.q_bits.to_le_bytes());
        out.extend_from_slice(&self.r_bits.to_le_bytes());
        out.extend_from_slice(&self.lr_shift.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.key_seed);
    }

    pub fn hash(&self) -> [u8; 32] {
        let mut bytes = Vec::new();
        self.encode(&mut bytes);
        let mut h = Sha256::new();
        h.update(b"zkdl/v1/config");
        h.update(&bytes);
        h.finalize().into()
    }
}

/// Master tensors committed per window. Layer indices are 1-based; Act,
/// GradA, and AuxRelu exist for hidden layers only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MasterId {
    /// Inputs, (step, batch, feature).
    Data,
    /// Labels, (step, batch, out).
    Labels,
    /// Weight chain, (chain slot, in, out); slots 0..=window live.
    Weights(usize),
    /// Pre-activations, (step, batch, out).
    PreAct(usize),
    /// Post-ReLU activations, (step, batch, out).
    Act(usize),
    /// Pre-activation gradients, (step, batch, out).
    GradZ(usize),
    /// Activation gradients, (step, batch, out).
    GradA(usize),
    /// Weight gradients, (step, in, out).
    GradW(usize),
    /// ReLU bit slices, (slice, step, batch, out, bit).
    AuxRelu(usize),
    /// Loss-gradient bits, (step, batch, out, bit).
    AuxLoss,
    /// Update bits, (step, in, out, bit).
    AuxUpdate(usize),
}

impl MasterId {
    pub fn is_weights(&self) -> bool {
        matches!(self, MasterId::Weights(_))
    }
}

/// Per-step op proofs inside a window, in canonical transcript order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpId {
    /// Z_l = In_l * W_l over every step.
    Forward(usize),
    /// Top-layer gradient from predictions and labels.
    Loss,
    /// G_W_l = In_l^T * G_Z_l.
    BackwardW(usize),
    /// G_A_{l-1} = G_Z_l * W_l^T.
    BackwardA(usize),
    /// Forward and backward ReLU gating at hidden layer l.
    Relu(usize),
    /// W chain step: next = old - round(G_W / 2^(r+k)).
    Update(usize),
}

/// Variable counts for every master of a window, derived from the config.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n_layers: usize,
    pub window: usize,
    pub batch: usize,
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub bits: usize,
    pub bit_vars: usize,
    pub lt: usize,
    pub chain_lt: usize,
    pub lb: usize,
    pub lf: usize,
    pub lc: Vec<usize>,
    pub lk: Vec<usize>,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        let n_layers = cfg.n_layers();
        let bits = cfg.quant().total_bits() as usize;
        let lc: Vec<usize> = cfg.widths.iter().map(|w| log2(pad_pow2(*w))).collect();
        let lk: Vec<usize> = (1..=n_layers).map(|l| {
            let w_in = if l == 1 { cfg.input_dim } else { cfg.widths[l - 2] };
            log2(pad_pow2(w_in))
        }).collect();
        Layout {
            n_layers,
            window: cfg.window,
            batch: cfg.batch,
            input_dim: cfg.input_dim,
            widths: cfg.widths.clone(),
            bits,
            bit_vars: log2(pad_pow2(bits)),
            lt: log2(cfg.window),
            chain_lt: log2(pad_pow2(cfg.window + 1)),
            lb: log2(pad_pow2(cfg.batch)),
            lf: log2(pad_pow2(cfg.input_dim)),
            lc,
            lk,
        }
    }

    /// Input width of layer l (1-based).
    pub fn width_in(&self, layer: usize) -> usize {
        if layer == 1 {
            self.input_dim
        } else {
            self.widths[layer - 2]
        }
    }

    pub fn width_out(&self, layer: usize) -> usize {
        self.widths[layer - 1]
    }

    /// Step-element vars of per-step (step, batch, out) masters at layer l.
    pub fn act_vars(&self, layer: usize) -> usize {
        self.lt + self.lb + self.lc[layer - 1]
    }

    /// Step-element vars of weight-shaped masters at layer l.
    pub fn grad_w_vars(&self, layer: usize) -> usize {
        self.lt + self.lk[layer - 1] + self.lc[layer - 1]
    }

    /// Vars of one weight-chain slice at layer l.
    pub fn weights_inner_vars(&self, layer: usize) -> usize {
        self.lk[layer - 1] + self.lc[layer - 1]
    }

    pub fn master_vars(&self, id: MasterId) -> usize {
        match id {
            MasterId::Data => self.lt + self.lb + self.lf,
            MasterId::Labels => self.lt + self.lb + self.lc[self.n_layers - 1],
            MasterId::Weights(l) => self.chain_lt + self.weights_inner_vars(l),
            MasterId::PreAct(l) | MasterId::GradZ(l) => self.act_vars(l),
            MasterId::Act(l) | MasterId::GradA(l) => self.act_vars(l),
            MasterId::GradW(l) => self.grad_w_vars(l),
            MasterId::AuxRelu(l) => 1 + self.act_vars(l) + self.bit_vars,
            MasterId::AuxLoss => self.act_vars(self.n_layers) + self.bit_vars,
            MasterId::AuxUpdate(l) => self.grad_w_vars(l) + self.bit_vars,
        }
    }

    /// Canonical commitment and pool-closure order of a window's masters.
    pub fn masters(&self) -> Vec<MasterId> {
        let ll = self.n_layers;
        let mut out = vec![MasterId::Data, MasterId::Labels];
        out.extend((1..=ll).map(MasterId::Weights));
        out.extend((1..=ll).map(MasterId::PreAct));
        out.extend((1..ll).map(MasterId::Act));
        out.extend((1..=ll).map(MasterId::GradZ));
        out.extend((1..ll).map(MasterId::GradA));
        out.extend((1..=ll).map(MasterId::GradW));
        out.extend((1..ll).map(MasterId::AuxRelu));
        out.push(MasterId::AuxLoss);
        out.extend((1..=ll).map(MasterId::AuxUpdate));
        out
    }

    /// Canonical op order of a window: all forwards, the loss gradient, the
    /// backward sweep, then all updates.
    pub fn ops(&self) -> Vec<OpId> {
        let ll = self.n_layers;
        let mut out: Vec<OpId> = (1..=ll).map(OpId::Forward).collect();
        out.push(OpId::Loss);
        for l in (2..=ll).rev() {
            out.push(OpId::BackwardW(l));
            out.push(OpId::BackwardA(l));
            out.push(OpId::Relu(l - 1));
        }
        out.push(OpId::BackwardW(1));
        out.extend((1..=ll).map(OpId::Update));
        out
    }

    /// The input master of layer l's matmuls.
    pub fn input_master(&self, layer: usize) -> MasterId {
        if layer == 1 {
            MasterId::Data
        } else {
            MasterId::Act(layer - 1)
        }
    }
}
