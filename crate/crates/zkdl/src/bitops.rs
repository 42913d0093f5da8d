//! Bit-decomposition op families: ReLU, loss gradient, and weight update.
//!
//! Each family proves statements about an auxiliary bit tensor through one
//! compressed gadget sumcheck (see `gadget`):
//!
//! * ReLU: two slices (bits of the pre-activation Z and of the incoming
//!   gradient G_A), sign-gated rounding recovery in both directions, and a
//!   follow-up merge sumcheck that folds the three aux terminal claims into
//!   a single evaluation claim. Proof size in field elements is exactly
//!   3*ld + 5*lb + 6 for 2^ld elements and 2^lb bit positions, counting
//!   round tails, terminals, and the merge but not the four stated claims.
//! * Loss gradient: one slice (bits of the top-layer Z); the rounded
//!   recovery equals prediction = gradient + label.
//! * Update: one slice (bits of the weight gradient); the recovery at shift
//!   R + k equals old weights minus new weights.

use crate::field::Scalar;
use crate::gadget::{
    terminal_expression, GadgetOracle, GadgetSpec, GadgetTerm, IWeight, JWeight, TermKind,
};
use crate::quant::QuantParams;
use crate::sumcheck::{self, ProductOracle, RoundSpec, SumcheckError, SumcheckProof};
use crate::tensor::{beta_at_index, beta_eval, beta1, beta_table, log2, mle_eval_slice, pad_pow2};
use crate::transcript::Transcript;
use ff::Field;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FamilyError {
    #[error("malformed proof: {0}")]
    Shape(#[from] SumcheckError),
    #[error("proof structure does not match the family")]
    Structure,
    #[error("terminal check failed")]
    Terminal,
    #[error("merge check failed")]
    Merge,
}

/// Recombination weights for a two's-complement value on `bits` bits,
/// embedded in a table of `padded` slots: (1, 2, ..., 2^{B-2}, -2^{B-1}).
pub fn signed_weight_table(bits: usize, padded: usize) -> Vec<Scalar> {
    assert!(bits >= 2 && padded >= bits);
    let mut w = vec![Scalar::ZERO; padded];
    for (j, slot) in w.iter_mut().enumerate().take(bits - 1) {
        *slot = crate::field::embed(1i128 << j);
    }
    w[bits - 1] = -crate::field::embed(1i128 << (bits - 1));
    w
}

/// Weights recovering the half-up rounded shift of a value from its bits:
/// round(v / 2^shift) = bits[shift..] recombined on bits-shift positions
/// plus the carry bit at shift-1.
pub fn rounding_weight_table(bits: usize, shift: usize, padded: usize) -> Vec<Scalar> {
    assert!(shift >= 1 && shift < bits && padded >= bits);
    let mut w = vec![Scalar::ZERO; padded];
    w[shift - 1] = Scalar::ONE;
    for t in 0..bits - shift - 1 {
        w[shift + t] = crate::field::embed(1i128 << t);
    }
    w[bits - 1] = -crate::field::embed(1i128 << (bits - shift - 1));
    w
}

/// Flat (element, bit) table of two's-complement decompositions. Values must
/// fit in `bits` bits; the bit axis is padded with zeros to `padded` slots.
pub fn bit_rows(values: &[Scalar], bits: usize, padded: usize) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(values.len() * padded);
    for v in values {
        let x = crate::field::lift(v).expect("value exceeds the lift range");
        let bound = 1i128 << (bits - 1);
        assert!((-bound..bound).contains(&x), "value {x} exceeds {bits} bits");
        let u = (x as u128) & ((1u128 << bits) - 1);
        for j in 0..padded {
            out.push(if j < bits && (u >> j) & 1 == 1 { Scalar::ONE } else { Scalar::ZERO });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Relu,
    LossGrad,
    /// `shift` is the full rounding shift (R + learning-rate shift).
    Update { shift: usize },
}

impl FamilyKind {
    pub fn n_slices(&self) -> usize {
        match self {
            FamilyKind::Relu => 2,
            _ => 1,
        }
    }
    pub fn n_alphas(&self) -> usize {
        match self {
            FamilyKind::Relu => 4,
            _ => 3,
        }
    }
    fn has_merge(&self) -> bool {
        matches!(self, FamilyKind::Relu)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeProof {
    pub sc: SumcheckProof,
    pub terminal: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFamilyProof {
    pub alphas: Vec<Scalar>,
    pub sc: SumcheckProof,
    pub terminals: Vec<Scalar>,
    pub merge: Option<MergeProof>,
}

impl BitFamilyProof {
    /// Field elements excluding the stated claims: round tails, terminals,
    /// and the merge section.
    pub fn core_elements(&self) -> usize {
        self.sc.num_scalars()
            + self.terminals.len()
            + self.merge.as_ref().map_or(0, |m| m.sc.num_scalars() + 1)
    }
}

/// Claims produced by a family, for the caller to route into pools. Alphas
/// are evaluations at `point_u` of the family's value tensors in family
/// order; the aux claim targets the family's aux master.
#[derive(Debug, Clone)]
pub struct FamilyClaims {
    pub point_u: Vec<Scalar>,
    pub alphas: Vec<Scalar>,
    pub aux_point: Vec<Scalar>,
    pub aux_value: Scalar,
}

fn family_tables(kind: FamilyKind, params: &QuantParams, padded: usize) -> Vec<Vec<Scalar>> {
    let bits = params.total_bits() as usize;
    let shift = match kind {
        FamilyKind::Update { shift } => shift,
        _ => params.r_bits as usize,
    };
    vec![signed_weight_table(bits, padded), rounding_weight_table(bits, shift, padded)]
}

/// Combination coefficients over the stated alphas: the sumcheck input claim
/// is dot(combo, alphas).
fn family_combo(kind: FamilyKind, r: Scalar, rp: Scalar) -> Vec<Scalar> {
    match kind {
        // alphas = [Z, A, G_A, G_Z]
        FamilyKind::Relu => vec![r.square(), r, rp * r.square(), rp * r],
        // alphas = [Z_top, G_Z_top, Y]: recovery binds prediction = G_Z + Y.
        FamilyKind::LossGrad => vec![r.square(), r, r],
        // alphas = [G_W, W_old, W_new]: recovery binds W_old - W_new.
        FamilyKind::Update { .. } => vec![r.square(), r, -r],
    }
}

fn family_spec(
    kind: FamilyKind,
    elem_vars: usize,
    bit_vars: usize,
    bits: usize,
    r: Scalar,
    rp: Scalar,
) -> GadgetSpec {
    let mut terms = Vec::new();
    let gated = matches!(kind, FamilyKind::Relu);
    for slice in 0..kind.n_slices() {
        let dw = if slice == 0 { Scalar::ONE } else { rp };
        terms.push(GadgetTerm {
            coeff: dw * r.square(),
            slice,
            i_weight: IWeight::Point,
            j_weight: JWeight::Table(0),
            kind: TermKind::Value,
        });
        terms.push(GadgetTerm {
            coeff: dw * r,
            slice,
            i_weight: IWeight::Point,
            j_weight: JWeight::Table(1),
            kind: if gated { TermKind::Gated } else { TermKind::Value },
        });
        terms.push(GadgetTerm {
            coeff: dw,
            slice,
            i_weight: IWeight::BetaBin,
            j_weight: JWeight::BetaBin,
            kind: TermKind::Booleanity,
        });
    }
    GadgetSpec {
        n_slices: kind.n_slices(),
        elem_vars,
        bit_vars,
        gate_bit: if gated { Some(bits - 1) } else { None },
        terms,
    }
}

/// Proves one bit family over 2^elem_vars elements. `value_tables` hold the
/// tensors whose evaluations at u become the stated alphas, in family order;
/// each has 2^elem_vars entries.
pub fn prove_family(
    tr: &mut Transcript,
    kind: FamilyKind,
    params: &QuantParams,
    elem_vars: usize,
    aux_slices: Vec<Vec<Scalar>>,
    value_tables: &[&[Scalar]],
) -> (BitFamilyProof, FamilyClaims) {
    let bits = params.total_bits() as usize;
    let padded = pad_pow2(bits);
    let bit_vars = log2(padded);
    assert_eq!(value_tables.len(), kind.n_alphas());
    assert_eq!(aux_slices.len(), kind.n_slices());

    let u = tr.challenge_point("op/u", elem_vars);
    let u_bin = tr.challenge_point("op/ubin", elem_vars + bit_vars);
    let alphas: Vec<Scalar> = value_tables.iter().map(|t| mle_eval_slice(t, &u)).collect();
    tr.absorb_scalars("op/alpha", &alphas);
    let r = tr.challenge_scalar("op/r");
    let rp = match kind {
        FamilyKind::Relu => tr.challenge_scalar("op/rp"),
        _ => Scalar::ZERO,
    };

    let spec = family_spec(kind, elem_vars, bit_vars, bits, r, rp);
    let jw = family_tables(kind, params, padded);
    let combo = family_combo(kind, r, rp);
    let claim: Scalar = combo.iter().zip(&alphas).map(|(c, a)| *c * *a).sum();
    let mut oracle = GadgetOracle::new(spec, aux_slices.clone(), jw, &u, &u_bin);

    let (sc, point, _final) = sumcheck::prove(&mut oracle, claim, tr);
    let terminals = oracle.terminal_values();
    tr.absorb_scalars("op/terminal", &terminals);

    let (v, w) = point.split_at(elem_vars);
    let (merge, aux_point, aux_value) = if kind.has_merge() {
        let (mp, pt, val) = prove_merge(tr, &aux_slices, v, w, bits - 1, &terminals);
        (Some(mp), pt, val)
    } else {
        (None, point.clone(), terminals[0])
    };

    (
        BitFamilyProof { alphas: alphas.clone(), sc, terminals, merge },
        FamilyClaims { point_u: u, alphas, aux_point, aux_value },
    )
}

/// Verifier mirror of `prove_family`.
pub fn verify_family(
    tr: &mut Transcript,
    kind: FamilyKind,
    params: &QuantParams,
    elem_vars: usize,
    proof: &BitFamilyProof,
) -> Result<FamilyClaims, FamilyError> {
    let bits = params.total_bits() as usize;
    let padded = pad_pow2(bits);
    let bit_vars = log2(padded);
    if proof.alphas.len() != kind.n_alphas()
        || proof.merge.is_some() != kind.has_merge()
        || proof.terminals.len() != kind.n_slices() + usize::from(kind.has_merge())
    {
        return Err(FamilyError::Structure);
    }

    let u = tr.challenge_point("op/u", elem_vars);
    let u_bin = tr.challenge_point("op/ubin", elem_vars + bit_vars);
    tr.absorb_scalars("op/alpha", &proof.alphas);
    let r = tr.challenge_scalar("op/r");
    let rp = match kind {
        FamilyKind::Relu => tr.challenge_scalar("op/rp"),
        _ => Scalar::ZERO,
    };

    let spec = family_spec(kind, elem_vars, bit_vars, bits, r, rp);
    let jw = family_tables(kind, params, padded);
    let combo = family_combo(kind, r, rp);
    let claim: Scalar = combo.iter().zip(&proof.alphas).map(|(c, a)| *c * *a).sum();
    let (point, final_claim) = sumcheck::verify(&proof.sc, &spec.round_specs(), claim, tr)?;
    tr.absorb_scalars("op/terminal", &proof.terminals);

    let (v, w) = point.split_at(elem_vars);
    let n_slices = kind.n_slices();
    let gate_val = kind.has_merge().then(|| proof.terminals[n_slices]);
    let expr = terminal_expression(
        &spec,
        &jw,
        &u,
        &u_bin,
        v,
        w,
        &proof.terminals[..n_slices],
        gate_val,
    );
    if expr != final_claim {
        return Err(FamilyError::Terminal);
    }

    let (aux_point, aux_value) = if let Some(merge) = &proof.merge {
        verify_merge(tr, merge, v, w, bits - 1, &proof.terminals, bit_vars)?
    } else {
        (point.clone(), proof.terminals[0])
    };

    Ok(FamilyClaims { point_u: u, alphas: proof.alphas.clone(), aux_point, aux_value })
}

/// Folds the three ReLU aux terminal claims (slice 0 and slice 1 at (v, w),
/// gate column at (v, sign)) into one claim on the full (slice, elem, bit)
/// aux tensor, via a degree-2 sumcheck over the slice and bit axes with the
/// element block pre-bound at v.
fn prove_merge(
    tr: &mut Transcript,
    aux_slices: &[Vec<Scalar>],
    v: &[Scalar],
    w: &[Scalar],
    sign_bit: usize,
    terminals: &[Scalar],
) -> (MergeProof, Vec<Scalar>, Scalar) {
    let rho = tr.challenge_scalar("op/rho");
    let jn = 1usize << w.len();
    let beta_v = beta_table(v);
    let mut restricted = vec![Scalar::ZERO; 2 * jn];
    for (s, slice) in aux_slices.iter().enumerate() {
        for (i, bv) in beta_v.iter().enumerate() {
            if *bv == Scalar::ZERO {
                continue;
            }
            let row = &slice[i * jn..(i + 1) * jn];
            for (j, a) in row.iter().enumerate() {
                restricted[s * jn + j] += *bv * *a;
            }
        }
    }
    let beta_w = beta_table(w);
    let mut kernel = vec![Scalar::ZERO; 2 * jn];
    for j in 0..jn {
        kernel[j] = beta_w[j];
        kernel[jn + j] = rho * beta_w[j];
    }
    kernel[sign_bit] += rho.square();

    let claim = terminals[0] + rho * terminals[1] + rho.square() * terminals[2];
    let mut oracle = ProductOracle::new(kernel, restricted, vec![], 1 + w.len());

    let (sc, xi, _final) = sumcheck::prove(&mut oracle, claim, tr);
    let terminal = oracle.final_evals().1;
    tr.absorb_scalar("op/merge-terminal", &terminal);

    let mut aux_point = vec![xi[0]];
    aux_point.extend_from_slice(v);
    aux_point.extend_from_slice(&xi[1..]);
    (MergeProof { sc, terminal }, aux_point, terminal)
}

fn verify_merge(
    tr: &mut Transcript,
    proof: &MergeProof,
    v: &[Scalar],
    w: &[Scalar],
    sign_bit: usize,
    terminals: &[Scalar],
    bit_vars: usize,
) -> Result<(Vec<Scalar>, Scalar), FamilyError> {
    let rho = tr.challenge_scalar("op/rho");
    let claim = terminals[0] + rho * terminals[1] + rho.square() * terminals[2];
    let specs = vec![RoundSpec::plain(2); 1 + bit_vars];
    let (xi, final_claim) = sumcheck::verify(&proof.sc, &specs, claim, tr)?;
    tr.absorb_scalar("op/merge-terminal", &proof.terminal);

    let (xi_s, xi_j) = (xi[0], &xi[1..]);
    let bw = beta_eval(w, xi_j);
    let kernel = beta1(xi_s, Scalar::ZERO) * (bw + rho.square() * beta_at_index(xi_j, sign_bit))
        + rho * beta1(xi_s, Scalar::ONE) * bw;
    if kernel == Scalar::ZERO || kernel * proof.terminal != final_claim {
        return Err(FamilyError::Merge);
    }
    let mut aux_point = vec![xi_s];
    aux_point.extend_from_slice(v);
    aux_point.extend_from_slice(xi_j);
    Ok((aux_point, proof.terminal))
}
