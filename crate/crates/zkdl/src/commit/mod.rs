//! Hyrax-style tensor commitments over Pallas.
//!
//! A tensor of 2^v entries is laid out as a 2^ceil(v/2) x 2^floor(v/2) matrix
//! (ties toward more rows) and each row gets a blinded Pedersen commitment
//! com(row; r) = r*H + sum_j row[j]*G_j. The scheme is additively
//! homomorphic, which the evaluation proof exploits: the verifier folds the
//! row commitments by the row half of the evaluation point and the prover
//! then runs a logarithmic inner-product argument against the column half.
//! Generators are derived from a public 32-byte seed by hash-to-group.

pub mod msm;

use crate::field::{inv, Scalar};
use crate::tensor::{beta_table, log2};
use crate::transcript::Transcript;
use ff::Field;
use group::{Group, GroupEncoding};
use pasta_curves::arithmetic::CurveExt;
use pasta_curves::pallas::Point;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::collections::HashSet;
use thiserror::Error;

pub use msm::msm;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommitError {
    #[error("commitment key too small: need {need} generators, have {have}")]
    KeyTooSmall { need: usize, have: usize },
    #[error("generator derivation produced a collision or identity")]
    BadGenerators,
    #[error("point encoding is not a valid group element")]
    InvalidEncoding,
    #[error("commitment shape {rows}x{cols} does not match the expected layout")]
    ShapeMismatch { rows: usize, cols: usize },
    #[error("evaluation proof rejected")]
    EvalReject,
}

/// Public commitment key: column generators, a blinding base, and the base
/// that pins the claimed inner product inside the argument.
#[derive(Debug, Clone)]
pub struct CommitKey {
    pub g: Vec<Point>,
    pub h: Point,
    pub u: Point,
    pub seed: [u8; 32],
}

impl CommitKey {
    /// Derives a key with `max_cols` column generators from a public seed.
    /// Distinctness (and non-identity) of all derived points is checked.
    pub fn setup(seed: [u8; 32], max_cols: usize) -> Result<Self, CommitError> {
        let hasher = Point::hash_to_curve("zkdl/v1/gen");
        let derive = |role: &[u8], i: u64| -> Point {
            let mut input = Vec::with_capacity(32 + role.len() + 8);
            input.extend_from_slice(&seed);
            input.extend_from_slice(role);
            input.extend_from_slice(&i.to_le_bytes());
            hasher(&input)
        };
        let g: Vec<Point> = (0..max_cols as u64).map(|i| derive(b"g", i)).collect();
        let h = derive(b"h", 0);
        let u = derive(b"u", 0);
        let mut seen = HashSet::new();
        for p in g.iter().chain([&h, &u]) {
            if bool::from(p.is_identity()) || !seen.insert(p.to_bytes()) {
                return Err(CommitError::BadGenerators);
            }
        }
        Ok(CommitKey { g, h, u, seed })
    }
}

/// Row/column split for a table of 2^vars entries: ties toward more rows.
pub fn matrix_shape(vars: usize) -> (usize, usize) {
    let row_vars = vars.div_ceil(2);
    (1usize << row_vars, 1usize << (vars - row_vars))
}

/// Per-row Pedersen commitments to a matrix-shaped tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorCommitment {
    pub rows: usize,
    pub cols: usize,
    pub row_commits: Vec<Point>,
}

impl TensorCommitment {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 * self.row_commits.len());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for p in &self.row_commits {
            out.extend_from_slice(p.to_bytes().as_ref());
        }
        out
    }
}

/// Prover-retained blinders, one per row.
#[derive(Debug, Clone)]
pub struct Opening {
    pub blinders: Vec<Scalar>,
}

/// Commits to a flat table of 2^vars field elements. Blinders come from the
/// provided rng; `None` commits unblinded (debugging / deterministic mode).
pub fn commit(
    key: &CommitKey,
    data: &[Scalar],
    mut rng: Option<&mut ChaCha20Rng>,
) -> Result<(TensorCommitment, Opening), CommitError> {
    assert!(data.len().is_power_of_two());
    let (rows, cols) = matrix_shape(log2(data.len()));
    if key.g.len() < cols {
        return Err(CommitError::KeyTooSmall { need: cols, have: key.g.len() });
    }
    let blinders: Vec<Scalar> = (0..rows)
        .map(|_| match rng.as_deref_mut() {
            Some(r) => Scalar::random(r),
            None => Scalar::ZERO,
        })
        .collect();
    let row_commits: Vec<Point> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let row = &data[i * cols..(i + 1) * cols];
            msm(&key.g[..cols], row) + key.h * blinders[i]
        })
        .collect();
    Ok((TensorCommitment { rows, cols, row_commits }, Opening { blinders }))
}

/// Homomorphic combination of commitments (used in tests and by the verifier
/// when folding rows): com(a) + com(b) commits a+b under blinder sum.
pub fn combine(c1: &TensorCommitment, c2: &TensorCommitment) -> TensorCommitment {
    assert_eq!((c1.rows, c1.cols), (c2.rows, c2.cols));
    TensorCommitment {
        rows: c1.rows,
        cols: c1.cols,
        row_commits: c1
            .row_commits
            .iter()
            .zip(&c2.row_commits)
            .map(|(a, b)| a + b)
            .collect(),
    }
}

/// Logarithmic proof that the committed tensor's multilinear extension takes
/// a claimed value at a point: 2*log2(cols) group elements plus two scalars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalProof {
    pub l_vec: Vec<Point>,
    pub r_vec: Vec<Point>,
    pub a_final: Scalar,
    pub rho_final: Scalar,
}

/// Proves mle(data)(point) == value against the row commitments.
pub fn prove_eval(
    key: &CommitKey,
    data: &[Scalar],
    opening: &Opening,
    point: &[Scalar],
    value: Scalar,
    mut rng: Option<&mut ChaCha20Rng>,
    tr: &mut Transcript,
) -> EvalProof {
    let (rows, cols) = matrix_shape(point.len());
    assert_eq!(data.len(), rows * cols);
    let row_vars = log2(rows);
    let (p_row, p_col) = point.split_at(row_vars);

    let l_weights = beta_table(p_row);
    let mut a = vec![Scalar::ZERO; cols];
    for i in 0..rows {
        let w = l_weights[i];
        if w == Scalar::ZERO {
            continue;
        }
        for (acc, v) in a.iter_mut().zip(&data[i * cols..(i + 1) * cols]) {
            *acc += w * *v;
        }
    }
    let mut rho: Scalar = l_weights
        .iter()
        .zip(&opening.blinders)
        .map(|(w, b)| *w * *b)
        .sum();
    debug_assert_eq!(
        a.iter().zip(beta_table(p_col)).map(|(x, y)| *x * y).sum::<Scalar>(),
        value
    );

    tr.absorb_scalars("eval/point", point);
    tr.absorb_scalar("eval/value", &value);
    let x_ip = tr.challenge_scalar("eval/xip");
    let u_prime = key.u * x_ip;

    let mut b = beta_table(p_col);
    let mut g = key.g[..cols].to_vec();
    let mut l_vec = Vec::new();
    let mut r_vec = Vec::new();
    while a.len() > 1 {
        let n = a.len() / 2;
        let (a_l, a_r) = a.split_at(n);
        let (b_l, b_r) = b.split_at(n);
        let (g_l, g_r) = g.split_at(n);
        let c_l: Scalar = a_l.iter().zip(b_r).map(|(x, y)| *x * *y).sum();
        let c_r: Scalar = a_r.iter().zip(b_l).map(|(x, y)| *x * *y).sum();
        let (rho_l, rho_r) = match rng.as_deref_mut() {
            Some(r) => (Scalar::random(&mut *r), Scalar::random(r)),
            None => (Scalar::ZERO, Scalar::ZERO),
        };
        let l_pt = msm(g_r, a_l) + key.h * rho_l + u_prime * c_l;
        let r_pt = msm(g_l, a_r) + key.h * rho_r + u_prime * c_r;
        tr.absorb_bytes("eval/L", l_pt.to_bytes().as_ref());
        tr.absorb_bytes("eval/R", r_pt.to_bytes().as_ref());
        let x = tr.challenge_scalar("eval/x");
        let xinv = inv(&x).expect("challenge is nonzero");
        let a_next: Vec<Scalar> =
            (0..n).map(|i| a_l[i] * x + a_r[i] * xinv).collect();
        let b_next: Vec<Scalar> =
            (0..n).map(|i| b_l[i] * xinv + b_r[i] * x).collect();
        let g_next: Vec<Point> =
            (0..n).map(|i| g_l[i] * xinv + g_r[i] * x).collect();
        rho += x.square() * rho_l + xinv.square() * rho_r;
        a = a_next;
        b = b_next;
        g = g_next;
        l_vec.push(l_pt);
        r_vec.push(r_pt);
    }
    let proof = EvalProof { l_vec, r_vec, a_final: a[0], rho_final: rho };
    tr.absorb_scalar("eval/a", &proof.a_final);
    tr.absorb_scalar("eval/rho", &proof.rho_final);
    proof
}

/// Verifies an evaluation proof. Cost: one MSM over the rows plus one MSM
/// over the columns.
pub fn verify_eval(
    key: &CommitKey,
    commitment: &TensorCommitment,
    point: &[Scalar],
    value: Scalar,
    proof: &EvalProof,
    tr: &mut Transcript,
) -> Result<(), CommitError> {
    let (rows, cols) = matrix_shape(point.len());
    if commitment.rows != rows || commitment.cols != cols {
        return Err(CommitError::ShapeMismatch { rows: commitment.rows, cols: commitment.cols });
    }
    if key.g.len() < cols {
        return Err(CommitError::KeyTooSmall { need: cols, have: key.g.len() });
    }
    let n_rounds = log2(cols);
    if proof.l_vec.len() != n_rounds || proof.r_vec.len() != n_rounds {
        return Err(CommitError::EvalReject);
    }
    let row_vars = log2(rows);
    let (p_row, p_col) = point.split_at(row_vars);

    tr.absorb_scalars("eval/point", point);
    tr.absorb_scalar("eval/value", &value);
    let x_ip = tr.challenge_scalar("eval/xip");

    let mut xs = Vec::with_capacity(n_rounds);
    for (l_pt, r_pt) in proof.l_vec.iter().zip(&proof.r_vec) {
        tr.absorb_bytes("eval/L", l_pt.to_bytes().as_ref());
        tr.absorb_bytes("eval/R", r_pt.to_bytes().as_ref());
        xs.push(tr.challenge_scalar("eval/x"));
    }
    tr.absorb_scalar("eval/a", &proof.a_final);
    tr.absorb_scalar("eval/rho", &proof.rho_final);

    // Generator coefficients after all folds: s[i] = prod_j x_j^{+-1} with the
    // sign given by bit j of i (MSB-first over rounds).
    let mut s = vec![Scalar::ONE];
    for x in &xs {
        let xinv = inv(x).ok_or(CommitError::EvalReject)?;
        let mut next = Vec::with_capacity(s.len() * 2);
        for v in &s {
            next.push(*v * xinv);
            next.push(*v * *x);
        }
        s = next;
    }
    let b = beta_table(p_col);
    let b_final: Scalar = s.iter().zip(&b).map(|(x, y)| *x * *y).sum();
    let l_weights = beta_table(p_row);

    // Single combined check:
    //   rho*H + a*sum(s_i G_i) + a*b_final*xip*U
    //     - C_y - xip*value*U - sum x^2 L - sum x^-2 R == identity
    let mut bases: Vec<Point> = Vec::with_capacity(cols + 2 * n_rounds + rows + 2);
    let mut coeffs: Vec<Scalar> = Vec::with_capacity(bases.capacity());
    bases.push(key.h);
    coeffs.push(proof.rho_final);
    bases.push(key.u);
    coeffs.push(x_ip * (proof.a_final * b_final - value));
    for (gi, si) in key.g[..cols].iter().zip(&s) {
        bases.push(*gi);
        coeffs.push(proof.a_final * *si);
    }
    for (c, w) in commitment.row_commits.iter().zip(&l_weights) {
        bases.push(*c);
        coeffs.push(-*w);
    }
    for (x, (l_pt, r_pt)) in xs.iter().zip(proof.l_vec.iter().zip(&proof.r_vec)) {
        let xinv = inv(x).ok_or(CommitError::EvalReject)?;
        bases.push(*l_pt);
        coeffs.push(-x.square());
        bases.push(*r_pt);
        coeffs.push(-xinv.square());
    }
    if bool::from(msm(&bases, &coeffs).is_identity()) {
        Ok(())
    } else {
        Err(CommitError::EvalReject)
    }
}

/// Decodes a compressed point, rejecting invalid encodings.
pub fn point_from_bytes(b: &[u8; 32]) -> Result<Point, CommitError> {
    let p = Point::from_bytes(b);
    if bool::from(p.is_some()) {
        Ok(p.unwrap())
    } else {
        Err(CommitError::InvalidEncoding)
    }
}
