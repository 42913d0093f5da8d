//! Binary codec for proof bundles.
//!
//! Strict format: fixed magic and version, the run config up front, then
//! sections whose counts are derived from the config wherever the protocol
//! fixes them. Every length that is read from the wire is capped before
//! allocation, scalars and points must be canonical, and the decoder must
//! consume the input exactly. Any violation is a structured error; callers
//! treat all of them as a malformed proof.

use crate::commit::{EvalProof, TensorCommitment};
use crate::field::Scalar;
use crate::matmul::MatmulProof;
use crate::bitops::{BitFamilyProof, MergeProof};
use crate::orchestrator::{MasterClosure, OpProof, ProofBundle, WindowSection};
use crate::pool::ReductionProof;
use crate::schema::{Layout, OpId, RunConfig};
use crate::sumcheck::SumcheckProof;
use ff::PrimeField;
use group::GroupEncoding;
use pasta_curves::pallas::Point;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"ZKDL";
pub const VERSION: u16 = 1;

const MAX_ROUNDS: usize = 256;
const MAX_ROUND_COEFFS: usize = 16;
const MAX_VEC: usize = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("truncated input")]
    Truncated,
    #[error("trailing bytes")]
    Trailing,
    #[error("non-canonical scalar")]
    BadScalar,
    #[error("invalid point encoding")]
    BadPoint,
    #[error("implausible length")]
    BadLength,
    #[error("config rejected: {0}")]
    Config(String),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize_capped(&mut self, cap: usize) -> Result<usize, CodecError> {
        let v = self.u32()? as usize;
        if v > cap {
            return Err(CodecError::BadLength);
        }
        Ok(v)
    }
    fn scalar(&mut self) -> Result<Scalar, CodecError> {
        let bytes: [u8; 32] = self.take(32)?.try_into().unwrap();
        Option::<Scalar>::from(Scalar::from_repr(bytes)).ok_or(CodecError::BadScalar)
    }
    fn scalars(&mut self, n: usize) -> Result<Vec<Scalar>, CodecError> {
        (0..n).map(|_| self.scalar()).collect()
    }
    fn point(&mut self) -> Result<Point, CodecError> {
        let bytes: [u8; 32] = self.take(32)?.try_into().unwrap();
        Option::<Point>::from(Point::from_bytes(&bytes)).ok_or(CodecError::BadPoint)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_scalar(out: &mut Vec<u8>, s: &Scalar) {
    out.extend_from_slice(&s.to_repr());
}

fn put_point(out: &mut Vec<u8>, p: &Point) {
    out.extend_from_slice(p.to_bytes().as_ref());
}

fn put_sumcheck(out: &mut Vec<u8>, sc: &SumcheckProof) {
    put_u32(out, sc.rounds.len());
    for r in &sc.rounds {
        put_u32(out, r.len());
        for c in r {
            put_scalar(out, c);
        }
    }
}

fn get_sumcheck(r: &mut Reader) -> Result<SumcheckProof, CodecError> {
    let n = r.usize_capped(MAX_ROUNDS)?;
    let mut rounds = Vec::with_capacity(n);
    for _ in 0..n {
        let k = r.usize_capped(MAX_ROUND_COEFFS)?;
        rounds.push(r.scalars(k)?);
    }
    Ok(SumcheckProof { rounds })
}

fn put_eval(out: &mut Vec<u8>, e: &EvalProof) {
    put_u32(out, e.l_vec.len());
    for p in &e.l_vec {
        put_point(out, p);
    }
    for p in &e.r_vec {
        put_point(out, p);
    }
    put_scalar(out, &e.a_final);
    put_scalar(out, &e.rho_final);
}

fn get_eval(r: &mut Reader) -> Result<EvalProof, CodecError> {
    let n = r.usize_capped(64)?;
    let l_vec = (0..n).map(|_| r.point()).collect::<Result<Vec<_>, _>>()?;
    let r_vec = (0..n).map(|_| r.point()).collect::<Result<Vec<_>, _>>()?;
    Ok(EvalProof { l_vec, r_vec, a_final: r.scalar()?, rho_final: r.scalar()? })
}

fn put_closure(out: &mut Vec<u8>, c: &MasterClosure) {
    match &c.reduction {
        Some(red) => {
            out.push(1);
            put_sumcheck(out, &red.sc);
            put_scalar(out, &red.terminal);
        }
        None => out.push(0),
    }
    put_eval(out, &c.eval);
}

fn get_closure(r: &mut Reader) -> Result<MasterClosure, CodecError> {
    let reduction = match r.take(1)?[0] {
        0 => None,
        1 => Some(ReductionProof { sc: get_sumcheck(r)?, terminal: r.scalar()? }),
        _ => return Err(CodecError::BadLength),
    };
    Ok(MasterClosure { reduction, eval: get_eval(r)? })
}

fn put_op(out: &mut Vec<u8>, op: &OpProof) {
    match op {
        OpProof::Matmul(p) => {
            put_scalar(out, &p.stated);
            put_sumcheck(out, &p.sc);
            put_scalar(out, &p.t0_final);
            put_scalar(out, &p.t1_final);
        }
        OpProof::Family(p) => {
            put_u32(out, p.alphas.len());
            for a in &p.alphas {
                put_scalar(out, a);
            }
            put_sumcheck(out, &p.sc);
            put_u32(out, p.terminals.len());
            for t in &p.terminals {
                put_scalar(out, t);
            }
            match &p.merge {
                Some(m) => {
                    out.push(1);
                    put_sumcheck(out, &m.sc);
                    put_scalar(out, &m.terminal);
                }
                None => out.push(0),
            }
        }
    }
}

fn get_op(r: &mut Reader, id: OpId) -> Result<OpProof, CodecError> {
    match id {
        OpId::Forward(_) | OpId::BackwardW(_) | OpId::BackwardA(_) => Ok(OpProof::Matmul(
            MatmulProof {
                stated: r.scalar()?,
                sc: get_sumcheck(r)?,
                t0_final: r.scalar()?,
                t1_final: r.scalar()?,
            },
        )),
        OpId::Loss | OpId::Relu(_) | OpId::Update(_) => {
            let n = r.usize_capped(8)?;
            let alphas = r.scalars(n)?;
            let sc = get_sumcheck(r)?;
            let k = r.usize_capped(8)?;
            let terminals = r.scalars(k)?;
            let merge = match r.take(1)?[0] {
                0 => None,
                1 => Some(MergeProof { sc: get_sumcheck(r)?, terminal: r.scalar()? }),
                _ => return Err(CodecError::BadLength),
            };
            Ok(OpProof::Family(BitFamilyProof { alphas, sc, terminals, merge }))
        }
    }
}

fn put_commitment(out: &mut Vec<u8>, c: &TensorCommitment) {
    put_u32(out, c.rows);
    put_u32(out, c.cols);
    for p in &c.row_commits {
        put_point(out, p);
    }
}

fn get_commitment(r: &mut Reader, rows: usize, cols: usize) -> Result<TensorCommitment, CodecError> {
    let got_rows = r.u32()? as usize;
    let got_cols = r.u32()? as usize;
    if got_rows != rows || got_cols != cols {
        return Err(CodecError::BadLength);
    }
    let row_commits = (0..rows).map(|_| r.point()).collect::<Result<Vec<_>, _>>()?;
    Ok(TensorCommitment { rows, cols, row_commits })
}

fn get_config(r: &mut Reader) -> Result<RunConfig, CodecError> {
    let as_usize = |v: u64| -> Result<usize, CodecError> {
        usize::try_from(v).map_err(|_| CodecError::BadLength)
    };
    let input_dim = as_usize(r.u64()?)?;
    let n = as_usize(r.u64()?)?;
    if n > 64 {
        return Err(CodecError::BadLength);
    }
    let mut widths = Vec::with_capacity(n);
    for _ in 0..n {
        widths.push(as_usize(r.u64()?)?);
    }
    let batch = as_usize(r.u64()?)?;
    let steps = as_usize(r.u64()?)?;
    let window = as_usize(r.u64()?)?;
    let q_bits = r.u32()?;
    let r_bits = r.u32()?;
    let lr_shift = r.u32()?;
    let seed = r.u64()?;
    let key_seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let cfg = RunConfig {
        input_dim,
        widths,
        batch,
        steps,
        window,
        q_bits,
        r_bits,
        lr_shift,
        seed,
        key_seed,
    };
    cfg.validate().map_err(|e| CodecError::Config(format!("{e}")))?;
    Ok(cfg)
}

pub fn encode(bundle: &ProofBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    bundle.config.encode(&mut out);
    for sec in &bundle.windows {
        for c in &sec.commitments {
            put_commitment(&mut out, c);
        }
        for op in &sec.ops {
            put_op(&mut out, op);
        }
        for c in &sec.closures {
            put_closure(&mut out, c);
        }
    }
    for row in &bundle.seams {
        for s in row {
            put_scalar(&mut out, s);
        }
    }
    for row in &bundle.weights_closures {
        for c in row {
            put_closure(&mut out, c);
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ProofBundle, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CodecError::Magic);
    }
    let v = r.u16()?;
    if v != VERSION {
        return Err(CodecError::Version(v));
    }
    let config = get_config(&mut r)?;
    let lay = Layout::new(&config);
    let n_windows = config.n_windows();
    let masters = lay.masters();
    let ops = lay.ops();
    let n_closures = masters.iter().filter(|m| !m.is_weights()).count();

    let mut windows = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let mut commitments = Vec::with_capacity(masters.len());
        for id in &masters {
            let (rows, cols) = crate::commit::matrix_shape(lay.master_vars(*id));
            commitments.push(get_commitment(&mut r, rows, cols)?);
        }
        let mut ops_vec = Vec::with_capacity(ops.len());
        for id in &ops {
            ops_vec.push(get_op(&mut r, *id)?);
        }
        let mut closures = Vec::with_capacity(n_closures);
        for _ in 0..n_closures {
            closures.push(get_closure(&mut r)?);
        }
        windows.push(WindowSection { commitments, ops: ops_vec, closures });
    }
    let mut seams = Vec::new();
    for _ in 0..n_windows.saturating_sub(1) {
        seams.push(r.scalars(lay.n_layers)?);
    }
    let mut weights_closures = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let mut row = Vec::with_capacity(lay.n_layers);
        for _ in 0..lay.n_layers {
            row.push(get_closure(&mut r)?);
        }
        weights_closures.push(row);
    }
    if r.pos != bytes.len() {
        return Err(CodecError::Trailing);
    }
    let _ = MAX_VEC;
    Ok(ProofBundle { config, windows, seams, weights_closures })
}

/// Per-window byte split of an encoded bundle: commitment bytes and proof
/// bytes. Weight closures count toward their window; seam scalars are split
/// evenly across windows.
pub fn window_byte_sizes(bundle: &ProofBundle) -> Vec<(usize, usize)> {
    let n = bundle.windows.len();
    let seam_total: usize = bundle.seams.iter().map(|r| r.len() * 32).sum();
    let seam_share = seam_total.checked_div(n).unwrap_or(0);
    bundle
        .windows
        .iter()
        .zip(&bundle.weights_closures)
        .map(|(sec, wrow)| {
            let mut cs = 0usize;
            for c in &sec.commitments {
                let mut buf = Vec::new();
                put_commitment(&mut buf, c);
                cs += buf.len();
            }
            let mut ps = Vec::new();
            for op in &sec.ops {
                put_op(&mut ps, op);
            }
            for c in &sec.closures {
                put_closure(&mut ps, c);
            }
            for c in wrow {
                put_closure(&mut ps, c);
            }
            (cs, ps.len() + seam_share)
        })
        .collect()
}
