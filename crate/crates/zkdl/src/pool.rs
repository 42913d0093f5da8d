//! Claim pools and the kernel reduction.
//!
//! Ops leave evaluation claims against committed master tensors. Per master,
//! the claims are batched with powers of a transcript challenge and reduced
//! by one degree-2 sumcheck to a single evaluation claim, which is then
//! settled by one commitment opening. Claim kinds:
//!
//! * Full: <M>(point) = value, kernel beta(point, x);
//! * Weighted: sum_s w_s <M_s>(inner) = value over the leading slice axis,
//!   kernel (sum_s w_s beta(bin(s), x_head)) * beta(inner, x_tail). This
//!   covers sliced views (a step range of the weights chain) and any other
//!   re-indexed access.
//!
//! The verifier evaluates the combined kernel at the bound point itself and
//! rejects if it vanishes.

use crate::field::Scalar;
use crate::sumcheck::{self, ProductOracle, RoundSpec, SumcheckError, SumcheckProof};
use crate::tensor::{beta_at_index, beta_eval, beta_table, log2};
use crate::transcript::Transcript;
use ff::Field;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("malformed proof: {0}")]
    Shape(#[from] SumcheckError),
    #[error("claim shape does not match the master")]
    ClaimShape,
    #[error("combined kernel vanished at the bound point")]
    KernelZero,
    #[error("reduction terminal check failed")]
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolClaim {
    Full {
        point: Vec<Scalar>,
        value: Scalar,
    },
    /// Slice-weighted claim: slice_weights spans the full padded slice axis
    /// (zeros where a view does not reach), inner_point the remaining vars.
    Weighted {
        slice_weights: Vec<Scalar>,
        inner_point: Vec<Scalar>,
        value: Scalar,
    },
}

impl PoolClaim {
    pub fn value(&self) -> Scalar {
        match self {
            PoolClaim::Full { value, .. } | PoolClaim::Weighted { value, .. } => *value,
        }
    }

    fn check_vars(&self, total_vars: usize) -> Result<(), PoolError> {
        let ok = match self {
            PoolClaim::Full { point, .. } => point.len() == total_vars,
            PoolClaim::Weighted { slice_weights, inner_point, .. } => {
                slice_weights.len().is_power_of_two()
                    && log2(slice_weights.len()) + inner_point.len() == total_vars
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PoolError::ClaimShape)
        }
    }

    /// Kernel evaluation at a point, K_m(xi).
    fn kernel_eval(&self, xi: &[Scalar]) -> Scalar {
        match self {
            PoolClaim::Full { point, .. } => beta_eval(point, xi),
            PoolClaim::Weighted { slice_weights, inner_point, .. } => {
                let sv = log2(slice_weights.len());
                let (head, tail) = xi.split_at(sv);
                let slice_part: Scalar = slice_weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != Scalar::ZERO)
                    .map(|(s, w)| *w * beta_at_index(head, s))
                    .sum();
                slice_part * beta_eval(inner_point, tail)
            }
        }
    }

    /// Adds rho_pow * K_m to the kernel table.
    fn accumulate(&self, kernel: &mut [Scalar], rho_pow: Scalar) {
        match self {
            PoolClaim::Full { point, .. } => {
                for (k, b) in kernel.iter_mut().zip(beta_table(point)) {
                    *k += rho_pow * b;
                }
            }
            PoolClaim::Weighted { slice_weights, inner_point, .. } => {
                let inner = beta_table(inner_point);
                let iv = inner.len();
                for (s, w) in slice_weights.iter().enumerate() {
                    if *w == Scalar::ZERO {
                        continue;
                    }
                    let scale = rho_pow * *w;
                    for (k, b) in kernel[s * iv..(s + 1) * iv].iter_mut().zip(&inner) {
                        *k += scale * *b;
                    }
                }
            }
        }
    }
}

/// True when a pool needs the reduction sumcheck; a single Full claim can be
/// opened directly.
pub fn needs_reduction(claims: &[PoolClaim]) -> bool {
    claims.len() > 1 || matches!(claims.first(), Some(PoolClaim::Weighted { .. }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionProof {
    pub sc: SumcheckProof,
    pub terminal: Scalar,
}

/// Reduces a pool to one claim (xi, terminal) on the master.
pub fn prove_reduction(
    tr: &mut Transcript,
    claims: &[PoolClaim],
    master: &[Scalar],
) -> (ReductionProof, Vec<Scalar>, Scalar) {
    assert!(!claims.is_empty());
    let total_vars = log2(master.len());
    let rho = tr.challenge_scalar("pool/rho");
    let mut kernel = vec![Scalar::ZERO; master.len()];
    let mut combined = Scalar::ZERO;
    let mut rho_pow = Scalar::ONE;
    for c in claims {
        c.check_vars(total_vars).expect("prover claim shape");
        c.accumulate(&mut kernel, rho_pow);
        combined += rho_pow * c.value();
        rho_pow *= rho;
    }
    let mut oracle = ProductOracle::new(kernel, master.to_vec(), vec![], total_vars);

    let (sc, xi, _final) = sumcheck::prove(&mut oracle, combined, tr);
    let terminal = oracle.final_evals().1;
    tr.absorb_scalar("pool/terminal", &terminal);
    (ReductionProof { sc, terminal }, xi, terminal)
}

/// Verifier mirror: returns the reduced claim for the commitment opening.
pub fn verify_reduction(
    tr: &mut Transcript,
    claims: &[PoolClaim],
    total_vars: usize,
    proof: &ReductionProof,
) -> Result<(Vec<Scalar>, Scalar), PoolError> {
    assert!(!claims.is_empty());
    let rho = tr.challenge_scalar("pool/rho");
    let mut combined = Scalar::ZERO;
    let mut rho_pow = Scalar::ONE;
    for c in claims {
        c.check_vars(total_vars)?;
        combined += rho_pow * c.value();
        rho_pow *= rho;
    }
    let specs = vec![RoundSpec::plain(2); total_vars];
    let (xi, final_claim) = sumcheck::verify(&proof.sc, &specs, combined, tr)?;
    tr.absorb_scalar("pool/terminal", &proof.terminal);

    let mut kernel = Scalar::ZERO;
    let mut rho_pow = Scalar::ONE;
    for c in claims {
        kernel += rho_pow * c.kernel_eval(&xi);
        rho_pow *= rho;
    }
    if kernel == Scalar::ZERO {
        return Err(PoolError::KernelZero);
    }
    if kernel * proof.terminal != final_claim {
        return Err(PoolError::Terminal);
    }
    Ok((xi, proof.terminal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::mle_eval_slice;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rand_scalars(rng: &mut ChaCha20Rng, n: usize) -> Vec<Scalar> {
        (0..n).map(|_| Scalar::random(&mut *rng)).collect()
    }

    fn full_claim(rng: &mut ChaCha20Rng, master: &[Scalar], vars: usize) -> PoolClaim {
        let point = rand_scalars(rng, vars);
        let value = mle_eval_slice(master, &point);
        PoolClaim::Full { point, value }
    }

    fn weighted_claim(
        rng: &mut ChaCha20Rng,
        master: &[Scalar],
        slice_count: usize,
        inner_vars: usize,
        zero_tail: usize,
    ) -> PoolClaim {
        let inner_point = rand_scalars(rng, inner_vars);
        let iv = 1usize << inner_vars;
        let mut slice_weights = rand_scalars(rng, slice_count);
        for w in slice_weights.iter_mut().rev().take(zero_tail) {
            *w = Scalar::ZERO;
        }
        let value = slice_weights
            .iter()
            .enumerate()
            .map(|(s, w)| *w * mle_eval_slice(&master[s * iv..(s + 1) * iv], &inner_point))
            .sum();
        PoolClaim::Weighted { slice_weights, inner_point, value }
    }

    #[test]
    fn mixed_pool_reduces_to_a_true_evaluation() {
        let mut rng = ChaCha20Rng::seed_from_u64(67);
        let (sv, iv) = (2usize, 4usize);
        let vars = sv + iv;
        let master = rand_scalars(&mut rng, 1 << vars);
        let claims = vec![
            full_claim(&mut rng, &master, vars),
            weighted_claim(&mut rng, &master, 1 << sv, iv, 1),
            full_claim(&mut rng, &master, vars),
            weighted_claim(&mut rng, &master, 1 << sv, iv, 0),
        ];
        let mut tp = Transcript::new("test/pool");
        let (proof, p_xi, p_val) = prove_reduction(&mut tp, &claims, &master);
        let mut tv = Transcript::new("test/pool");
        let (xi, val) = verify_reduction(&mut tv, &claims, vars, &proof).unwrap();
        assert_eq!((p_xi, p_val), (xi.clone(), val));
        assert_eq!(val, mle_eval_slice(&master, &xi));
    }

    #[test]
    fn aggregated_matches_individual_claims_exhaustively() {
        // Small exhaustive sweep: every claim count and var count; the
        // reduced claim must equal the master's evaluation at the bound
        // point whenever all input claims are individually true.
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        for vars in 1..=4usize {
            for n_claims in 1..=4usize {
                let master = rand_scalars(&mut rng, 1 << vars);
                let claims: Vec<PoolClaim> = (0..n_claims)
                    .map(|i| {
                        if i % 2 == 0 || vars < 2 {
                            full_claim(&mut rng, &master, vars)
                        } else {
                            weighted_claim(&mut rng, &master, 2, vars - 1, i % 3)
                        }
                    })
                    .collect();
                let mut tp = Transcript::new("test/pool-ex");
                let (proof, _, _) = prove_reduction(&mut tp, &claims, &master);
                let mut tv = Transcript::new("test/pool-ex");
                let (xi, val) = verify_reduction(&mut tv, &claims, vars, &proof).unwrap();
                assert_eq!(val, mle_eval_slice(&master, &xi), "vars {vars} claims {n_claims}");
            }
        }
    }

    #[test]
    fn wrong_claim_value_breaks_the_reduction() {
        let mut rng = ChaCha20Rng::seed_from_u64(73);
        let vars = 5usize;
        let master = rand_scalars(&mut rng, 1 << vars);
        let honest = vec![full_claim(&mut rng, &master, vars), full_claim(&mut rng, &master, vars)];
        let mut tampered = honest.clone();
        if let PoolClaim::Full { value, .. } = &mut tampered[1] {
            *value += Scalar::ONE;
        }
        // The prover's rounds follow the true table; the verifier combines
        // the tampered claim values.
        let mut tp = Transcript::new("test/pool-bad");
        let (proof, _, _) = prove_reduction(&mut tp, &honest, &master);
        let mut tv = Transcript::new("test/pool-bad");
        match verify_reduction(&mut tv, &tampered, vars, &proof) {
            Err(PoolError::Terminal) => {}
            Err(e) => panic!("unexpected {e:?}"),
            Ok((xi, val)) => {
                assert_ne!(val, mle_eval_slice(&master, &xi), "tamper slipped through");
            }
        }
    }

    #[test]
    fn all_zero_kernel_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(79);
        let vars = 3usize;
        let master = rand_scalars(&mut rng, 1 << vars);
        let claims = vec![PoolClaim::Weighted {
            slice_weights: vec![Scalar::ZERO; 2],
            inner_point: rand_scalars(&mut rng, 2),
            value: Scalar::ZERO,
        }];
        let mut tp = Transcript::new("test/pool-zero");
        let (proof, _, _) = prove_reduction(&mut tp, &claims, &master);
        let mut tv = Transcript::new("test/pool-zero");
        assert_eq!(
            verify_reduction(&mut tv, &claims, vars, &proof).unwrap_err(),
            PoolError::KernelZero
        );
    }

    #[test]
    fn claim_shape_mismatches_are_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(83);
        let vars = 4usize;
        let master = rand_scalars(&mut rng, 1 << vars);
        let good = full_claim(&mut rng, &master, vars);
        let mut tp = Transcript::new("test/pool-shape");
        let (proof, _, _) = prove_reduction(&mut tp, &[good], &master);
        let bad = PoolClaim::Full { point: rand_scalars(&mut rng, 3), value: Scalar::ONE };
        let mut tv = Transcript::new("test/pool-shape");
        assert_eq!(
            verify_reduction(&mut tv, &[bad], vars, &proof).unwrap_err(),
            PoolError::ClaimShape
        );
    }
}
