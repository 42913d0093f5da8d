//! End-to-end proving and verification of a training run.
//!
//! Per window: build the master tensors from the trace, commit them in
//! canonical order, run the op proofs in canonical order (each leaving
//! evaluation claims in per-master pools), then close every non-weights
//! pool with a reduction (when needed) and one commitment opening. Weight
//! pools stay open across the whole run: after the window loop, the initial
//! weights are pinned against the seeded init, window seams are tied
//! together by shared-point claims, and only then are the weight pools
//! closed. The verifier mirrors the exact same schedule, so the Fiat-Shamir
//! transcript binds structure and content alike.

use crate::bitops::{self, BitFamilyProof, FamilyError, FamilyKind};
use crate::commit::{
    commit, matrix_shape, prove_eval, verify_eval, CommitError, CommitKey, EvalProof, Opening,
    TensorCommitment,
};
use crate::dataset::{BatchStream, Dataset};
use crate::field::{embed, Scalar};
use crate::matmul::{self, FoldSide, MatmulError, MatmulProof, Operand, OperandShape};
use crate::pool::{needs_reduction, prove_reduction, verify_reduction, PoolClaim, PoolError, ReductionProof};
use crate::quant::QuantError;
use crate::schema::{domain_rng, Layout, MasterId, OpId, RunConfig};
use crate::sumcheck::SumcheckError;
use crate::tensor::{beta_table, mle_eval_slice};
use crate::trainer::{self, Corruption, IntTensor, TrainRun};
use crate::transcript::Transcript;
use ff::Field;
use std::collections::HashMap;
use std::time::Instant;
use thiserror::Error;

pub const SESSION_DOMAIN: &str = "zkdl/v1/train";

#[derive(Debug, Error)]
pub enum ProveError {
    #[error("{0}")]
    Quant(#[from] QuantError),
    #[error("config: {0}")]
    Config(#[from] crate::schema::ConfigError),
    #[error("commitment key: {0}")]
    Key(CommitError),
}

/// Verification rejection categories; the bundle codec's own failures map to
/// `Malformed` at the call site.
#[derive(Debug, Error)]
pub enum Reject {
    #[error("malformed-proof: {0}")]
    Malformed(String),
    #[error("transcript-mismatch: {0}")]
    TranscriptMismatch(String),
    #[error("sumcheck-reject: {0}")]
    Sumcheck(String),
    #[error("evaluation-reject: {0}")]
    Eval(String),
}

impl From<SumcheckError> for Reject {
    fn from(e: SumcheckError) -> Self {
        Reject::Malformed(format!("{e}"))
    }
}

impl From<MatmulError> for Reject {
    fn from(e: MatmulError) -> Self {
        match e {
            MatmulError::Shape(inner) => Reject::Malformed(format!("{inner}")),
            MatmulError::Terminal => Reject::Sumcheck("matmul terminal".into()),
        }
    }
}

impl From<FamilyError> for Reject {
    fn from(e: FamilyError) -> Self {
        match e {
            FamilyError::Shape(inner) => Reject::Malformed(format!("{inner}")),
            FamilyError::Structure => Reject::Malformed("family structure".into()),
            FamilyError::Terminal => Reject::Sumcheck("family terminal".into()),
            FamilyError::Merge => Reject::Sumcheck("family merge".into()),
        }
    }
}

impl From<PoolError> for Reject {
    fn from(e: PoolError) -> Self {
        match e {
            PoolError::Shape(inner) => Reject::Malformed(format!("{inner}")),
            PoolError::ClaimShape => Reject::Malformed("pool claim shape".into()),
            PoolError::KernelZero => Reject::Sumcheck("pool kernel vanished".into()),
            PoolError::Terminal => Reject::Sumcheck("pool terminal".into()),
        }
    }
}

impl From<CommitError> for Reject {
    fn from(e: CommitError) -> Self {
        match e {
            CommitError::EvalReject => Reject::Eval("opening identity".into()),
            other => Reject::Malformed(format!("{other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpProof {
    Matmul(MatmulProof),
    Family(BitFamilyProof),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterClosure {
    pub reduction: Option<ReductionProof>,
    pub eval: EvalProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSection {
    /// One commitment per master, canonical order.
    pub commitments: Vec<TensorCommitment>,
    /// One proof per op, canonical order.
    pub ops: Vec<OpProof>,
    /// Closures of non-weights masters, canonical order.
    pub closures: Vec<MasterClosure>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofBundle {
    pub config: RunConfig,
    pub windows: Vec<WindowSection>,
    /// Stated seam evaluations, [gap][layer-1].
    pub seams: Vec<Vec<Scalar>>,
    /// Weight-pool closures, [window][layer-1].
    pub weights_closures: Vec<Vec<MasterClosure>>,
}

/// Post-trace tampering of one committed aux entry, for the soundness
/// harness: `flip` toggles a bit in place, otherwise `delta` is added.
#[derive(Debug, Clone, Copy)]
pub struct AuxTamper {
    pub window: usize,
    pub master: MasterId,
    pub index: usize,
    pub flip: bool,
    pub delta: i128,
}

fn embed_padded(t: &IntTensor, lr: usize, lc: usize) -> Vec<Scalar> {
    let (pr, pc) = (1usize << lr, 1usize << lc);
    assert!(t.rows <= pr && t.cols <= pc);
    let mut out = vec![Scalar::ZERO; pr * pc];
    for r in 0..t.rows {
        for c in 0..t.cols {
            out[r * pc + c] = embed(t.get(r, c));
        }
    }
    out
}

fn stack_steps(ts: &[&IntTensor], lr: usize, lc: usize) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(ts.len() << (lr + lc));
    for t in ts {
        out.extend(embed_padded(t, lr, lc));
    }
    out
}

/// All master tables of one window, canonical order.
struct WindowData {
    ids: Vec<MasterId>,
    tables: Vec<Vec<Scalar>>,
    index: HashMap<MasterId, usize>,
}

impl WindowData {
    fn table(&self, id: MasterId) -> &[Scalar] {
        &self.tables[self.index[&id]]
    }

    /// Live step slots (0..window) of the weight chain: the `old` view.
    fn chain_old(&self, lay: &Layout, layer: usize) -> &[Scalar] {
        let t = self.table(MasterId::Weights(layer));
        &t[..(1 << lay.lt) * (1 << lay.weights_inner_vars(layer))]
    }

    /// Step slots 1..=window of the weight chain: the `new` view.
    fn chain_new(&self, lay: &Layout, layer: usize) -> &[Scalar] {
        let t = self.table(MasterId::Weights(layer));
        let iv = 1 << lay.weights_inner_vars(layer);
        &t[iv..iv + (1 << lay.lt) * iv]
    }
}

fn build_window(lay: &Layout, run: &TrainRun, w: usize, bits: usize) -> WindowData {
    let lt_n = lay.window;
    let steps = &run.steps[w * lt_n..(w + 1) * lt_n];
    let ll = lay.n_layers;
    let padded_bits = 1usize << lay.bit_vars;
    let mut ids = Vec::new();
    let mut tables: Vec<Vec<Scalar>> = Vec::new();
    let mut index: HashMap<MasterId, usize> = HashMap::new();

    for id in lay.masters() {
        let table = match id {
            MasterId::Data => stack_steps(
                &steps.iter().map(|s| &s.x).collect::<Vec<_>>(),
                lay.lb,
                lay.lf,
            ),
            MasterId::Labels => stack_steps(
                &steps.iter().map(|s| &s.y).collect::<Vec<_>>(),
                lay.lb,
                lay.lc[ll - 1],
            ),
            MasterId::Weights(l) => {
                let iv = 1usize << lay.weights_inner_vars(l);
                let mut t = vec![Scalar::ZERO; (1 << lay.chain_lt) * iv];
                for s in 0..=lt_n {
                    let slice = embed_padded(
                        &run.chain[l - 1][w * lt_n + s],
                        lay.lk[l - 1],
                        lay.lc[l - 1],
                    );
                    t[s * iv..(s + 1) * iv].copy_from_slice(&slice);
                }
                t
            }
            MasterId::PreAct(l) => stack_steps(
                &steps.iter().map(|s| &s.z[l - 1]).collect::<Vec<_>>(),
                lay.lb,
                lay.lc[l - 1],
            ),
            MasterId::Act(l) => stack_steps(
                &steps.iter().map(|s| &s.a[l - 1]).collect::<Vec<_>>(),
                lay.lb,
                lay.lc[l - 1],
            ),
            MasterId::GradZ(l) => stack_steps(
                &steps.iter().map(|s| &s.g_z[l - 1]).collect::<Vec<_>>(),
                lay.lb,
                lay.lc[l - 1],
            ),
            MasterId::GradA(l) => stack_steps(
                &steps.iter().map(|s| &s.g_a[l - 1]).collect::<Vec<_>>(),
                lay.lb,
                lay.lc[l - 1],
            ),
            MasterId::GradW(l) => stack_steps(
                &steps.iter().map(|s| &s.g_w[l - 1]).collect::<Vec<_>>(),
                lay.lk[l - 1],
                lay.lc[l - 1],
            ),
            MasterId::AuxRelu(l) => {
                let mut t = bitops::bit_rows(tables[index[&MasterId::PreAct(l)]].as_slice(), bits, padded_bits);
                t.extend(bitops::bit_rows(
                    tables[index[&MasterId::GradA(l)]].as_slice(),
                    bits,
                    padded_bits,
                ));
                t
            }
            MasterId::AuxLoss => bitops::bit_rows(
                tables[index[&MasterId::PreAct(ll)]].as_slice(),
                bits,
                padded_bits,
            ),
            MasterId::AuxUpdate(l) => bitops::bit_rows(
                tables[index[&MasterId::GradW(l)]].as_slice(),
                bits,
                padded_bits,
            ),
        };
        index.insert(id, tables.len());
        ids.push(id);
        tables.push(table);
    }
    WindowData { ids, tables, index }
}

/// Claim pools, one per master of one window.
#[derive(Default)]
struct Pools {
    map: HashMap<MasterId, Vec<PoolClaim>>,
}

impl Pools {
    fn push_full(&mut self, id: MasterId, point: Vec<Scalar>, value: Scalar) {
        self.map.entry(id).or_default().push(PoolClaim::Full { point, value });
    }
    fn push(&mut self, id: MasterId, c: PoolClaim) {
        self.map.entry(id).or_default().push(c);
    }
    fn take(&mut self, id: MasterId) -> Vec<PoolClaim> {
        self.map.remove(&id).unwrap_or_default()
    }
}

/// Weighted claim selecting chain step slots shifted by `slot_shift`:
/// slot t+shift carries beta(v_t, bin(t)).
fn chain_claim(
    lay: &Layout,
    v_t: &[Scalar],
    inner: &[Scalar],
    value: Scalar,
    slot_shift: usize,
) -> PoolClaim {
    let bt = beta_table(v_t);
    let mut w = vec![Scalar::ZERO; 1 << lay.chain_lt];
    for (t, b) in bt.iter().enumerate() {
        w[t + slot_shift] = *b;
    }
    PoolClaim::Weighted { slice_weights: w, inner_point: inner.to_vec(), value }
}

/// Single-slot chain claim (seam and init pins).
fn slot_claim(lay: &Layout, layer: usize, slot: usize, inner: &[Scalar], value: Scalar) -> PoolClaim {
    let _ = layer;
    let mut w = vec![Scalar::ZERO; 1 << lay.chain_lt];
    w[slot] = Scalar::ONE;
    PoolClaim::Weighted { slice_weights: w, inner_point: inner.to_vec(), value }
}

struct MatmulDesc {
    out: MasterId,
    in0: MasterId,
    in1: MasterId,
    out_x: usize,
    out_y: usize,
    in0_shape: OperandShape,
    in1_shape: OperandShape,
    /// in1 reads live chain slots and its claim re-targets the chain master.
    in1_chain: bool,
}

fn matmul_desc(lay: &Layout, op: OpId) -> MatmulDesc {
    match op {
        OpId::Forward(l) => MatmulDesc {
            out: MasterId::PreAct(l),
            in0: lay.input_master(l),
            in1: MasterId::Weights(l),
            out_x: lay.lb,
            out_y: lay.lc[l - 1],
            in0_shape: OperandShape { a_vars: lay.lb, b_vars: lay.lk[l - 1], fold: FoldSide::A },
            in1_shape: OperandShape {
                a_vars: lay.lk[l - 1],
                b_vars: lay.lc[l - 1],
                fold: FoldSide::B,
            },
            in1_chain: true,
        },
        OpId::BackwardW(l) => MatmulDesc {
            out: MasterId::GradW(l),
            in0: lay.input_master(l),
            in1: MasterId::GradZ(l),
            out_x: lay.lk[l - 1],
            out_y: lay.lc[l - 1],
            in0_shape: OperandShape { a_vars: lay.lb, b_vars: lay.lk[l - 1], fold: FoldSide::B },
            in1_shape: OperandShape { a_vars: lay.lb, b_vars: lay.lc[l - 1], fold: FoldSide::B },
            in1_chain: false,
        },
        OpId::BackwardA(l) => MatmulDesc {
            out: MasterId::GradA(l - 1),
            in0: MasterId::GradZ(l),
            in1: MasterId::Weights(l),
            out_x: lay.lb,
            out_y: lay.lk[l - 1],
            in0_shape: OperandShape { a_vars: lay.lb, b_vars: lay.lc[l - 1], fold: FoldSide::A },
            in1_shape: OperandShape {
                a_vars: lay.lk[l - 1],
                b_vars: lay.lc[l - 1],
                fold: FoldSide::A,
            },
            in1_chain: true,
        },
        _ => unreachable!("not a matmul op"),
    }
}

enum TableRef {
    Master(MasterId),
    ChainOld(usize),
    ChainNew(usize),
}

struct FamilyDesc {
    kind: FamilyKind,
    elem_vars: usize,
    tables: Vec<TableRef>,
    aux: MasterId,
}

fn family_desc(cfg: &RunConfig, lay: &Layout, op: OpId) -> FamilyDesc {
    let ll = lay.n_layers;
    match op {
        OpId::Loss => FamilyDesc {
            kind: FamilyKind::LossGrad,
            elem_vars: lay.act_vars(ll),
            tables: vec![
                TableRef::Master(MasterId::PreAct(ll)),
                TableRef::Master(MasterId::GradZ(ll)),
                TableRef::Master(MasterId::Labels),
            ],
            aux: MasterId::AuxLoss,
        },
        OpId::Relu(l) => FamilyDesc {
            kind: FamilyKind::Relu,
            elem_vars: lay.act_vars(l),
            tables: vec![
                TableRef::Master(MasterId::PreAct(l)),
                TableRef::Master(MasterId::Act(l)),
                TableRef::Master(MasterId::GradA(l)),
                TableRef::Master(MasterId::GradZ(l)),
            ],
            aux: MasterId::AuxRelu(l),
        },
        OpId::Update(l) => FamilyDesc {
            kind: FamilyKind::Update { shift: (cfg.r_bits + cfg.lr_shift) as usize },
            elem_vars: lay.grad_w_vars(l),
            tables: vec![
                TableRef::Master(MasterId::GradW(l)),
                TableRef::ChainOld(l),
                TableRef::ChainNew(l),
            ],
            aux: MasterId::AuxUpdate(l),
        },
        _ => unreachable!("not a family op"),
    }
}

fn route_matmul(pools: &mut Pools, lay: &Layout, d: &MatmulDesc, c: matmul::MatmulClaims) {
    pools.push_full(d.out, c.out_point, c.out_value);
    pools.push_full(d.in0, c.in0_point, c.in0_value);
    if d.in1_chain {
        let (v_t, inner) = c.in1_point.split_at(lay.lt);
        pools.push(d.in1, chain_claim(lay, v_t, inner, c.in1_value, 0));
    } else {
        pools.push_full(d.in1, c.in1_point, c.in1_value);
    }
}

fn route_family(pools: &mut Pools, lay: &Layout, d: &FamilyDesc, c: bitops::FamilyClaims) {
    for (tref, alpha) in d.tables.iter().zip(&c.alphas) {
        match tref {
            TableRef::Master(id) => pools.push_full(*id, c.point_u.clone(), *alpha),
            TableRef::ChainOld(l) => {
                let (u_t, inner) = c.point_u.split_at(lay.lt);
                pools.push(MasterId::Weights(*l), chain_claim(lay, u_t, inner, *alpha, 0));
            }
            TableRef::ChainNew(l) => {
                let (u_t, inner) = c.point_u.split_at(lay.lt);
                pools.push(MasterId::Weights(*l), chain_claim(lay, u_t, inner, *alpha, 1));
            }
        }
    }
    pools.push_full(d.aux, c.aux_point, c.aux_value);
}

/// Largest column count any master needs from the commitment key.
pub fn key_cols(lay: &Layout) -> usize {
    lay.masters()
        .into_iter()
        .map(|id| matrix_shape(lay.master_vars(id)).1)
        .max()
        .unwrap()
}

pub struct ProveOutput {
    pub bundle: ProofBundle,
    /// Per-window proving time, weight-closure time included.
    pub pt_ms: Vec<f64>,
}

/// Trains and proves in one pass. `corruptions` and `tampers` are empty for
/// honest runs; the soundness harness uses them to produce lying bundles.
pub fn prove_training(
    cfg: &RunConfig,
    ds: &Dataset,
    corruptions: &[Corruption],
    tampers: &[AuxTamper],
) -> Result<ProveOutput, ProveError> {
    cfg.validate()?;
    let lay = Layout::new(cfg);
    let key = CommitKey::setup(cfg.key_seed, key_cols(&lay)).map_err(ProveError::Key)?;
    let mut stream = BatchStream::new(ds, cfg.seed);
    let run = trainer::train(cfg, &mut stream, corruptions)?;

    let mut blind = domain_rng("blind", cfg.seed);
    let mut tr = Transcript::new(SESSION_DOMAIN);
    let n_windows = cfg.n_windows();
    let mut windows = Vec::with_capacity(n_windows);
    let mut window_pools: Vec<Pools> = Vec::with_capacity(n_windows);
    let mut weights_data: Vec<HashMap<usize, (Vec<Scalar>, Opening)>> = Vec::new();
    let mut pt_ms = vec![0f64; n_windows];

    for w in 0..n_windows {
        let t0 = Instant::now();
        let mut wd = build_window(&lay, &run, w, lay.bits);
        for tam in tampers.iter().filter(|t| t.window == w) {
            let idx = wd.index[&tam.master];
            let slot = &mut wd.tables[idx][tam.index];
            if tam.flip {
                *slot = Scalar::ONE - *slot;
            } else {
                *slot += embed(tam.delta);
            }
        }

        tr.absorb_bytes("win/config", &cfg.hash());
        tr.absorb_u64("win/index", w as u64);
        let mut commitments = Vec::with_capacity(wd.ids.len());
        let mut openings = Vec::with_capacity(wd.ids.len());
        for t in &wd.tables {
            let (c, o) = commit(&key, t, Some(&mut blind)).map_err(ProveError::Key)?;
            tr.absorb_bytes("win/commit", &c.to_bytes());
            commitments.push(c);
            openings.push(o);
        }

        let mut pools = Pools::default();
        let mut ops = Vec::new();
        for op in lay.ops() {
            match op {
                OpId::Forward(_) | OpId::BackwardW(_) | OpId::BackwardA(_) => {
                    let d = matmul_desc(&lay, op);
                    let in0_table = wd.table(d.in0);
                    let in1_table: &[Scalar] = if d.in1_chain {
                        let MasterId::Weights(l) = d.in1 else { unreachable!() };
                        wd.chain_old(&lay, l)
                    } else {
                        wd.table(d.in1)
                    };
                    let (proof, claims) = matmul::prove(
                        &mut tr,
                        lay.lt,
                        wd.table(d.out),
                        d.out_x,
                        d.out_y,
                        Operand {
                            table: in0_table,
                            a_vars: d.in0_shape.a_vars,
                            b_vars: d.in0_shape.b_vars,
                            fold: d.in0_shape.fold,
                        },
                        Operand {
                            table: in1_table,
                            a_vars: d.in1_shape.a_vars,
                            b_vars: d.in1_shape.b_vars,
                            fold: d.in1_shape.fold,
                        },
                    );
                    route_matmul(&mut pools, &lay, &d, claims);
                    ops.push(OpProof::Matmul(proof));
                }
                OpId::Loss | OpId::Relu(_) | OpId::Update(_) => {
                    let d = family_desc(cfg, &lay, op);
                    let aux_table = wd.table(d.aux);
                    let aux_slices: Vec<Vec<Scalar>> = if d.kind.n_slices() == 2 {
                        let half = aux_table.len() / 2;
                        vec![aux_table[..half].to_vec(), aux_table[half..].to_vec()]
                    } else {
                        vec![aux_table.to_vec()]
                    };
                    let value_tables: Vec<&[Scalar]> = d
                        .tables
                        .iter()
                        .map(|tref| match tref {
                            TableRef::Master(id) => wd.table(*id),
                            TableRef::ChainOld(l) => wd.chain_old(&lay, *l),
                            TableRef::ChainNew(l) => wd.chain_new(&lay, *l),
                        })
                        .collect();
                    let (proof, claims) = bitops::prove_family(
                        &mut tr,
                        d.kind,
                        &cfg.quant(),
                        d.elem_vars,
                        aux_slices,
                        &value_tables,
                    );
                    route_family(&mut pools, &lay, &d, claims);
                    ops.push(OpProof::Family(proof));
                }
            }
        }

        // Close every non-weights pool; weight pools stay open.
        let mut closures = Vec::new();
        let mut kept: HashMap<usize, (Vec<Scalar>, Opening)> = HashMap::new();
        for (i, id) in wd.ids.iter().enumerate() {
            if id.is_weights() {
                let MasterId::Weights(l) = id else { unreachable!() };
                kept.insert(*l, (wd.tables[i].clone(), openings[i].clone()));
                continue;
            }
            let claims = pools.take(*id);
            assert!(!claims.is_empty(), "unreferenced master {id:?}");
            let (reduction, point, value) = if needs_reduction(&claims) {
                let (p, xi, v) = prove_reduction(&mut tr, &claims, &wd.tables[i]);
                (Some(p), xi, v)
            } else {
                let PoolClaim::Full { point, value } = &claims[0] else { unreachable!() };
                (None, point.clone(), *value)
            };
            let eval =
                prove_eval(&key, &wd.tables[i], &openings[i], &point, value, Some(&mut blind), &mut tr);
            closures.push(MasterClosure { reduction, eval });
        }

        windows.push(WindowSection { commitments, ops, closures });
        window_pools.push(pools);
        weights_data.push(kept);
        pt_ms[w] += t0.elapsed().as_secs_f64() * 1e3;
    }

    // Pin the initial weights to the seeded init: both sides compute the
    // claim value themselves, so nothing is stated.
    let t0 = Instant::now();
    let init = trainer::init_weights(cfg);
    for l in 1..=lay.n_layers {
        let q = tr.challenge_point("pin/init", lay.weights_inner_vars(l));
        let table = embed_padded(&init[l - 1], lay.lk[l - 1], lay.lc[l - 1]);
        let v = mle_eval_slice(&table, &q);
        window_pools[0].push(MasterId::Weights(l), slot_claim(&lay, l, 0, &q, v));
    }

    // Seams: last chain slot of window g equals slot 0 of window g+1.
    let mut seams = Vec::new();
    for g in 0..n_windows.saturating_sub(1) {
        let mut row = Vec::new();
        for l in 1..=lay.n_layers {
            let q = tr.challenge_point("pin/seam", lay.weights_inner_vars(l));
            let iv = 1usize << lay.weights_inner_vars(l);
            let table = &weights_data[g][&l].0;
            let slice = &table[lay.window * iv..(lay.window + 1) * iv];
            let s = mle_eval_slice(slice, &q);
            tr.absorb_scalar("pin/seam-value", &s);
            window_pools[g].push(MasterId::Weights(l), slot_claim(&lay, l, lay.window, &q, s));
            window_pools[g + 1].push(MasterId::Weights(l), slot_claim(&lay, l, 0, &q, s));
            row.push(s);
        }
        seams.push(row);
    }
    let pin_ms = t0.elapsed().as_secs_f64() * 1e3 / n_windows as f64;

    let mut weights_closures = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let t0 = Instant::now();
        let mut row = Vec::new();
        for l in 1..=lay.n_layers {
            let claims = window_pools[w].take(MasterId::Weights(l));
            let (table, opening) = &weights_data[w][&l];
            let (p, xi, v) = prove_reduction(&mut tr, &claims, table);
            let eval = prove_eval(&key, table, opening, &xi, v, Some(&mut blind), &mut tr);
            row.push(MasterClosure { reduction: Some(p), eval });
        }
        weights_closures.push(row);
        pt_ms[w] += t0.elapsed().as_secs_f64() * 1e3 + pin_ms;
    }

    Ok(ProveOutput {
        bundle: ProofBundle { config: cfg.clone(), windows, seams, weights_closures },
        pt_ms,
    })
}

fn reject_malformed(msg: &str) -> Reject {
    Reject::Malformed(msg.to_string())
}

/// Verifies a bundle from scratch: only the embedded config (and through it
/// the key seed) is trusted as public input. Returns per-window times.
pub fn verify_bundle(bundle: &ProofBundle) -> Result<Vec<f64>, Reject> {
    let cfg = &bundle.config;
    cfg.validate().map_err(|e| reject_malformed(&format!("config: {e}")))?;
    let lay = Layout::new(cfg);
    let n_windows = cfg.n_windows();
    if bundle.windows.len() != n_windows
        || bundle.weights_closures.len() != n_windows
        || bundle.seams.len() != n_windows.saturating_sub(1)
        || bundle.seams.iter().any(|r| r.len() != lay.n_layers)
        || bundle.weights_closures.iter().any(|r| r.len() != lay.n_layers)
    {
        return Err(reject_malformed("bundle section counts"));
    }
    let key = CommitKey::setup(cfg.key_seed, key_cols(&lay)).map_err(Reject::from)?;
    let masters = lay.masters();
    let ops_order = lay.ops();

    let mut tr = Transcript::new(SESSION_DOMAIN);
    let mut vt_ms = vec![0f64; n_windows];
    let mut window_pools: Vec<Pools> = Vec::with_capacity(n_windows);

    for (w, sec) in bundle.windows.iter().enumerate() {
        let t0 = Instant::now();
        if sec.commitments.len() != masters.len() || sec.ops.len() != ops_order.len() {
            return Err(reject_malformed("window section counts"));
        }
        tr.absorb_bytes("win/config", &cfg.hash());
        tr.absorb_u64("win/index", w as u64);
        for (id, c) in masters.iter().zip(&sec.commitments) {
            let (rows, cols) = matrix_shape(lay.master_vars(*id));
            if c.rows != rows || c.cols != cols || c.row_commits.len() != rows {
                return Err(reject_malformed("commitment shape"));
            }
            tr.absorb_bytes("win/commit", &c.to_bytes());
        }

        let mut pools = Pools::default();
        for (op, proof) in ops_order.iter().zip(&sec.ops) {
            match op {
                OpId::Forward(_) | OpId::BackwardW(_) | OpId::BackwardA(_) => {
                    let OpProof::Matmul(p) = proof else {
                        return Err(reject_malformed("op kind"));
                    };
                    let d = matmul_desc(&lay, *op);
                    let claims = matmul::verify(&mut tr, lay.lt, p, d.in0_shape, d.in1_shape)?;
                    route_matmul(&mut pools, &lay, &d, claims);
                }
                OpId::Loss | OpId::Relu(_) | OpId::Update(_) => {
                    let OpProof::Family(p) = proof else {
                        return Err(reject_malformed("op kind"));
                    };
                    let d = family_desc(cfg, &lay, *op);
                    let claims =
                        bitops::verify_family(&mut tr, d.kind, &cfg.quant(), d.elem_vars, p)?;
                    route_family(&mut pools, &lay, &d, claims);
                }
            }
        }

        let non_weights: Vec<MasterId> =
            masters.iter().copied().filter(|m| !m.is_weights()).collect();
        if sec.closures.len() != non_weights.len() {
            return Err(reject_malformed("closure count"));
        }
        for (id, closure) in non_weights.iter().zip(&sec.closures) {
            let claims = pools.take(*id);
            if claims.is_empty() {
                return Err(reject_malformed("pool without claims"));
            }
            let vars = lay.master_vars(*id);
            let (point, value) = match (&closure.reduction, needs_reduction(&claims)) {
                (Some(r), true) => verify_reduction(&mut tr, &claims, vars, r)?,
                (None, false) => {
                    let PoolClaim::Full { point, value } = &claims[0] else { unreachable!() };
                    (point.clone(), *value)
                }
                _ => return Err(reject_malformed("reduction presence")),
            };
            let com = &sec.commitments[masters.iter().position(|m| m == id).unwrap()];
            verify_eval(&key, com, &point, value, &closure.eval, &mut tr)?;
        }
        window_pools.push(pools);
        vt_ms[w] += t0.elapsed().as_secs_f64() * 1e3;
    }

    // Init pin: the verifier recomputes the seeded init evaluation itself.
    let t0 = Instant::now();
    let init = trainer::init_weights(cfg);
    for l in 1..=lay.n_layers {
        let q = tr.challenge_point("pin/init", lay.weights_inner_vars(l));
        let table = embed_padded(&init[l - 1], lay.lk[l - 1], lay.lc[l - 1]);
        let v = mle_eval_slice(&table, &q);
        window_pools[0].push(MasterId::Weights(l), slot_claim(&lay, l, 0, &q, v));
    }
    for (g, row) in bundle.seams.iter().enumerate() {
        for (l, s) in (1..=lay.n_layers).zip(row) {
            let q = tr.challenge_point("pin/seam", lay.weights_inner_vars(l));
            tr.absorb_scalar("pin/seam-value", s);
            window_pools[g].push(MasterId::Weights(l), slot_claim(&lay, l, lay.window, &q, *s));
            window_pools[g + 1].push(MasterId::Weights(l), slot_claim(&lay, l, 0, &q, *s));
        }
    }
    let pin_ms = t0.elapsed().as_secs_f64() * 1e3 / n_windows as f64;

    for w in 0..n_windows {
        let t0 = Instant::now();
        for (l, closure) in (1..=lay.n_layers).zip(&bundle.weights_closures[w]) {
            let claims = window_pools[w].take(MasterId::Weights(l));
            let vars = lay.master_vars(MasterId::Weights(l));
            let Some(red) = &closure.reduction else {
                return Err(reject_malformed("weights closure reduction"));
            };
            let (point, value) = verify_reduction(&mut tr, &claims, vars, red)?;
            let idx = masters.iter().position(|m| *m == MasterId::Weights(l)).unwrap();
            let com = &bundle.windows[w].commitments[idx];
            verify_eval(&key, com, &point, value, &closure.eval, &mut tr)?;
        }
        vt_ms[w] += t0.elapsed().as_secs_f64() * 1e3 + pin_ms;
    }

    Ok(vt_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic;
    use crate::trainer::CorruptSite;

    fn cfg(widths: Vec<usize>, steps: usize, window: usize, seed: u64) -> RunConfig {
        RunConfig {
            input_dim: 3,
            widths,
            batch: 2,
            steps,
            window,
            q_bits: 8,
            r_bits: 8,
            lr_shift: 4,
            seed,
            key_seed: [5u8; 32],
        }
    }

    fn ds_for(c: &RunConfig) -> Dataset {
        synthetic(c.seed, 8, c.input_dim, *c.widths.last().unwrap(), &c.quant())
    }

    #[test]
    fn honest_runs_verify_across_shapes() {
        for (widths, steps, window) in [
            (vec![2], 2, 1),
            (vec![4, 2], 2, 2),
            (vec![4, 4, 2], 2, 1),
        ] {
            let c = cfg(widths.clone(), steps, window, 9);
            let ds = ds_for(&c);
            let out = prove_training(&c, &ds, &[], &[]).unwrap();
            verify_bundle(&out.bundle)
                .unwrap_or_else(|e| panic!("{widths:?} T'={window}: {e}"));
        }
    }

    #[test]
    fn deterministic_bundles() {
        let c = cfg(vec![4, 2], 2, 2, 10);
        let ds = ds_for(&c);
        let b1 = prove_training(&c, &ds, &[], &[]).unwrap().bundle;
        let b2 = prove_training(&c, &ds, &[], &[]).unwrap().bundle;
        assert_eq!(b1, b2);
    }

    #[test]
    fn trace_corruptions_are_rejected() {
        let base = cfg(vec![4, 2], 2, 2, 11);
        let ds = ds_for(&base);
        let sites = [
            (CorruptSite::PreAct, 1, 1),
            (CorruptSite::Act, 1, 1),
            (CorruptSite::GradZ, 2, 1),
            (CorruptSite::GradZ, 1, 1),
            (CorruptSite::GradA, 1, 1),
            (CorruptSite::GradW, 2, 0),
            (CorruptSite::Weights, 1, 1),
        ];
        for (site, layer, step) in sites {
            let corr = Corruption { site, step, layer, index: 0, delta: 1 };
            let out = prove_training(&base, &ds, &[corr], &[]).unwrap();
            assert!(
                verify_bundle(&out.bundle).is_err(),
                "corruption at {site:?} layer {layer} step {step} accepted"
            );
        }
    }

    #[test]
    fn aux_tampers_are_rejected() {
        let c = cfg(vec![4, 2], 2, 2, 12);
        let ds = ds_for(&c);
        for (master, flip) in [
            (MasterId::AuxRelu(1), true),
            (MasterId::AuxLoss, true),
            (MasterId::AuxUpdate(2), false),
        ] {
            let tam = AuxTamper { window: 0, master, index: 1, flip, delta: 1 };
            let out = prove_training(&c, &ds, &[], &[tam]).unwrap();
            assert!(verify_bundle(&out.bundle).is_err(), "{master:?} tamper accepted");
        }
    }

    #[test]
    fn seam_and_config_tampers_are_rejected() {
        let c = cfg(vec![4, 2], 4, 2, 13);
        let ds = ds_for(&c);
        let honest = prove_training(&c, &ds, &[], &[]).unwrap().bundle;

        let mut bad = honest.clone();
        bad.seams[0][0] += Scalar::ONE;
        assert!(verify_bundle(&bad).is_err(), "seam tamper accepted");

        let mut bad = honest.clone();
        bad.config.seed += 1;
        assert!(verify_bundle(&bad).is_err(), "config tamper accepted");

        let mut bad = honest;
        bad.windows.swap(0, 1);
        assert!(verify_bundle(&bad).is_err(), "window reorder accepted");
    }
}
