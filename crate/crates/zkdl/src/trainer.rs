//! Deterministic fixed-point SGD on a fully connected ReLU network.
//!
//! All arithmetic is exact i128 integer work on scale-tagged tensors:
//! inputs, labels, activations, weights, and rescaled gradients carry scale
//! 2^R; matmul outputs carry 2^(2R) until a half-up rescale brings them
//! back. Every produced tensor is range-checked against the (Q+R)-bit
//! budget and the trainer aborts with a located diagnostic on overflow, so
//! the trace the prover commits to is decomposable by construction.
//!
//! The trace records every per-step tensor plus rounding remainders; the
//! whole run is a pure function of (config, dataset bytes).

use crate::dataset::BatchStream;
use crate::quant::{round_rescale, QuantError, QuantParams};
use crate::schema::{domain_rng, uniform_range, RunConfig};

/// Row-major 2-D integer tensor tagged with its power-of-two scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor {
    pub rows: usize,
    pub cols: usize,
    /// log2 of the fixed-point scale.
    pub scale: u32,
    pub data: Vec<i128>,
}

impl IntTensor {
    pub fn zeros(rows: usize, cols: usize, scale: u32) -> Self {
        IntTensor { rows, cols, scale, data: vec![0; rows * cols] }
    }

    pub fn from_data(rows: usize, cols: usize, scale: u32, data: Vec<i128>) -> Self {
        assert_eq!(data.len(), rows * cols);
        IntTensor { rows, cols, scale, data }
    }

    pub fn get(&self, r: usize, c: usize) -> i128 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i128) {
        self.data[r * self.cols + c] = v;
    }

    /// self * other, scales add.
    pub fn matmul(&self, other: &IntTensor) -> IntTensor {
        assert_eq!(self.cols, other.rows);
        let mut out = IntTensor::zeros(self.rows, other.cols, self.scale + other.scale);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// self^T * other, scales add.
    pub fn matmul_t_self(&self, other: &IntTensor) -> IntTensor {
        assert_eq!(self.rows, other.rows);
        let mut out = IntTensor::zeros(self.cols, other.cols, self.scale + other.scale);
        for b in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(b, i);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(b, j);
                }
            }
        }
        out
    }

    /// self * other^T, scales add.
    pub fn matmul_t_other(&self, other: &IntTensor) -> IntTensor {
        assert_eq!(self.cols, other.cols);
        let mut out = IntTensor::zeros(self.rows, other.rows, self.scale + other.scale);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut acc = 0i128;
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(j, k);
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }
}

/// Tensors a corruption can be injected into, right after they are computed;
/// everything downstream is then derived honestly from the corrupted value,
/// so exactly one proved relation becomes false.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptSite {
    PreAct,
    Act,
    GradZ,
    GradA,
    GradW,
    Weights,
}

#[derive(Debug, Clone, Copy)]
pub struct Corruption {
    pub site: CorruptSite,
    pub step: usize,
    /// 1-based layer; ignored for sites that exist once per step.
    pub layer: usize,
    pub index: usize,
    pub delta: i128,
}

/// One training step's tensors. Layer vectors are indexed by layer-1;
/// activation gradients exist for hidden layers only.
#[derive(Debug, Clone)]
pub struct StepTrace {
    /// Batch inputs, scale R.
    pub x: IntTensor,
    /// Batch labels, scale R.
    pub y: IntTensor,
    /// Pre-activations, scale 2R.
    pub z: Vec<IntTensor>,
    /// Post-ReLU activations (hidden layers), scale R.
    pub a: Vec<IntTensor>,
    /// Pre-activation gradients, scale R.
    pub g_z: Vec<IntTensor>,
    /// Activation gradients (hidden layers), scale 2R.
    pub g_a: Vec<IntTensor>,
    /// Weight gradients, scale 2R.
    pub g_w: Vec<IntTensor>,
    /// Update rounding remainders, scale 2R.
    pub update_rem: Vec<IntTensor>,
    /// Top-layer rescale remainder from the loss gradient, scale 2R.
    pub loss_rem: IntTensor,
}

/// Full training trace: per-step tensors plus the weight snapshots
/// chain[layer-1][t] = weights entering step t, length steps+1.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub steps: Vec<StepTrace>,
    pub chain: Vec<Vec<IntTensor>>,
}

/// Seeded initial weights: uniform integers in [-2^(R-2), 2^(R-2)] at scale
/// R, drawn layer by layer in order from one domain-separated stream.
pub fn init_weights(cfg: &RunConfig) -> Vec<IntTensor> {
    let mut rng = domain_rng("winit", cfg.seed);
    let bound = if cfg.r_bits >= 2 { 1i128 << (cfg.r_bits - 2) } else { 0 };
    let mut out = Vec::with_capacity(cfg.n_layers());
    let mut in_dim = cfg.input_dim;
    for &w in &cfg.widths {
        let data = (0..in_dim * w).map(|_| uniform_range(&mut rng, -bound, bound)).collect();
        out.push(IntTensor::from_data(in_dim, w, cfg.r_bits, data));
        in_dim = w;
    }
    out
}

fn check_range(
    t: &IntTensor,
    params: &QuantParams,
    name: &str,
    step: usize,
) -> Result<(), QuantError> {
    let bound = params.bound();
    for (i, v) in t.data.iter().enumerate() {
        if *v < -bound || *v >= bound {
            return Err(QuantError::RangeOverflow {
                tensor: name.to_string(),
                step,
                index: i,
                value: *v,
                bits: params.total_bits(),
            });
        }
    }
    Ok(())
}

fn apply_corruptions(
    t: &mut IntTensor,
    corruptions: &[Corruption],
    site: CorruptSite,
    step: usize,
    layer: usize,
) -> usize {
    let mut n = 0;
    for c in corruptions {
        if c.site == site && c.step == step && c.layer == layer {
            t.data[c.index] += c.delta;
            n += 1;
        }
    }
    n
}

/// ReLU forward: gate on the sign of z, rescale the kept values to scale R.
fn relu_forward(z: &IntTensor, r_bits: u32) -> IntTensor {
    let data = z
        .data
        .iter()
        .map(|&v| if v >= 0 { round_rescale(v, r_bits).0 } else { 0 })
        .collect();
    IntTensor::from_data(z.rows, z.cols, z.scale - r_bits, data)
}

/// ReLU backward: the same sign gate applied to the rescaled incoming
/// activation gradient.
fn relu_backward(z: &IntTensor, g_a: &IntTensor, r_bits: u32) -> IntTensor {
    let data = z
        .data
        .iter()
        .zip(&g_a.data)
        .map(|(&zv, &gv)| if zv >= 0 { round_rescale(gv, r_bits).0 } else { 0 })
        .collect();
    IntTensor::from_data(z.rows, z.cols, g_a.scale - r_bits, data)
}

/// Runs `cfg.steps` SGD steps. `corruptions` is empty for honest runs; the
/// soundness harness injects single-entry edits through it.
pub fn train(
    cfg: &RunConfig,
    stream: &mut BatchStream,
    corruptions: &[Corruption],
) -> Result<TrainRun, QuantError> {
    let params = cfg.quant();
    let ll = cfg.n_layers();
    let r = cfg.r_bits;
    let update_shift = r + cfg.lr_shift;

    let mut weights = init_weights(cfg);
    let mut chain: Vec<Vec<IntTensor>> = weights.iter().map(|w| vec![w.clone()]).collect();
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut hits = 0usize;

    for t in 0..cfg.steps {
        let (x_raw, y_raw) = stream.next_batch(cfg.batch);
        let x = IntTensor::from_data(cfg.batch, cfg.input_dim, r, x_raw);
        let y = IntTensor::from_data(cfg.batch, cfg.widths[ll - 1], r, y_raw);
        check_range(&x, &params, "X", t)?;
        check_range(&y, &params, "Y", t)?;

        // Forward.
        let mut z = Vec::with_capacity(ll);
        let mut a = Vec::with_capacity(ll - 1);
        for l in 1..=ll {
            let input = if l == 1 { &x } else { &a[l - 2] };
            let mut z_l = input.matmul(&weights[l - 1]);
            hits += apply_corruptions(&mut z_l, corruptions, CorruptSite::PreAct, t, l);
            check_range(&z_l, &params, "Z", t)?;
            if l < ll {
                let mut a_l = relu_forward(&z_l, r);
                hits += apply_corruptions(&mut a_l, corruptions, CorruptSite::Act, t, l);
                check_range(&a_l, &params, "A", t)?;
                a.push(a_l);
            }
            z.push(z_l);
        }

        // Loss gradient: prediction is the once-rescaled top pre-activation.
        let top = &z[ll - 1];
        let mut g_z_top = IntTensor::zeros(top.rows, top.cols, r);
        let mut loss_rem = IntTensor::zeros(top.rows, top.cols, top.scale);
        for i in 0..top.data.len() {
            let (pred, rem) = round_rescale(top.data[i], r);
            g_z_top.data[i] = pred - y.data[i];
            loss_rem.data[i] = rem;
        }
        hits += apply_corruptions(&mut g_z_top, corruptions, CorruptSite::GradZ, t, ll);
        check_range(&g_z_top, &params, "G_Z", t)?;

        // Backward sweep.
        let mut g_z = vec![g_z_top];
        let mut g_a: Vec<Option<IntTensor>> = vec![None; ll.saturating_sub(1)];
        let mut g_w: Vec<Option<IntTensor>> = vec![None; ll];
        for l in (2..=ll).rev() {
            let g_z_l = &g_z[0];
            let input = &a[l - 2];
            let mut g_w_l = input.matmul_t_self(g_z_l);
            hits += apply_corruptions(&mut g_w_l, corruptions, CorruptSite::GradW, t, l);
            check_range(&g_w_l, &params, "G_W", t)?;
            g_w[l - 1] = Some(g_w_l);

            let mut g_a_l = g_z_l.matmul_t_other(&weights[l - 1]);
            hits += apply_corruptions(&mut g_a_l, corruptions, CorruptSite::GradA, t, l - 1);
            check_range(&g_a_l, &params, "G_A", t)?;

            let mut g_z_prev = relu_backward(&z[l - 2], &g_a_l, r);
            hits += apply_corruptions(&mut g_z_prev, corruptions, CorruptSite::GradZ, t, l - 1);
            check_range(&g_z_prev, &params, "G_Z", t)?;
            g_a[l - 2] = Some(g_a_l);
            g_z.insert(0, g_z_prev);
        }
        let mut g_w_1 = x.matmul_t_self(&g_z[0]);
        hits += apply_corruptions(&mut g_w_1, corruptions, CorruptSite::GradW, t, 1);
        check_range(&g_w_1, &params, "G_W", t)?;
        g_w[0] = Some(g_w_1);

        // Updates.
        let mut update_rem = Vec::with_capacity(ll);
        for l in 1..=ll {
            let g = g_w[l - 1].as_ref().unwrap();
            let mut rem = IntTensor::zeros(g.rows, g.cols, g.scale);
            let mut w_new = weights[l - 1].clone();
            for i in 0..g.data.len() {
                let (delta, rm) = round_rescale(g.data[i], update_shift);
                w_new.data[i] -= delta;
                rem.data[i] = rm;
            }
            hits += apply_corruptions(&mut w_new, corruptions, CorruptSite::Weights, t, l);
            check_range(&w_new, &params, "W", t)?;
            weights[l - 1] = w_new.clone();
            chain[l - 1].push(w_new);
            update_rem.push(rem);
        }

        steps.push(StepTrace {
            x,
            y,
            z,
            a,
            g_z,
            g_a: g_a.into_iter().map(Option::unwrap).collect(),
            g_w: g_w.into_iter().map(Option::unwrap).collect(),
            update_rem,
            loss_rem,
        });
    }

    // A corruption that names a site outside the run would silently produce
    // an honest trace, voiding the soundness harness.
    assert_eq!(hits, corruptions.len(), "corruption never matched a site");
    Ok(TrainRun { steps, chain })
}
