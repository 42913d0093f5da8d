//! Interactive sumcheck engine with truncated round messages.
//!
//! Round messages carry only the tail coefficients c_1..c_d of the round
//! polynomial; the verifier reconstructs c_0 from the running claim, so a
//! degree-d round costs d field elements. Rounds may carry a twist w: the
//! underlying round polynomial is beta(w, X) * f(X) but only f is sent, the
//! claim check becomes (1-w)*f(0) + w*f(1) = claim, and the next claim is
//! f(r). The twist factor is absorbed entirely by the checks and never
//! multiplies the terminal claim.

use crate::field::{inv, Scalar};
use crate::tensor::beta1;
use crate::transcript::Transcript;
use ff::Field;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SumcheckError {
    #[error("round {round} carries {got} coefficients, expected {want}")]
    BadRoundShape { round: usize, got: usize, want: usize },
    #[error("proof has {got} rounds, expected {want}")]
    BadRoundCount { got: usize, want: usize },
}

/// Shape of one round: degree of the sent polynomial and an optional twist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundSpec {
    pub degree: usize,
    pub twist: Option<Scalar>,
}

impl RoundSpec {
    pub fn plain(degree: usize) -> Self {
        RoundSpec { degree, twist: None }
    }
    pub fn twisted(degree: usize, w: Scalar) -> Self {
        RoundSpec { degree, twist: Some(w) }
    }
}

/// Tail coefficients (c_1..c_d) for each round, low degree first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SumcheckProof {
    pub rounds: Vec<Vec<Scalar>>,
}

impl SumcheckProof {
    pub fn num_scalars(&self) -> usize {
        self.rounds.iter().map(|r| r.len()).sum()
    }
}

/// Prover-side view of one sumcheck instance.
pub trait SumcheckOracle {
    fn num_rounds(&self) -> usize;
    /// Spec for the round about to be played.
    fn spec(&self, round: usize) -> RoundSpec;
    /// Evaluations of the sent polynomial f at 0, 1, ..., degree.
    fn evals(&self) -> Vec<Scalar>;
    /// Binds the current round's variable to r.
    fn bind(&mut self, r: Scalar);
}

/// Converts evaluations of f at 0..=d into monomial coefficients c_0..c_d
/// via Newton forward differences.
pub fn interpolate(evals: &[Scalar]) -> Vec<Scalar> {
    let d = evals.len() - 1;
    // Forward differences delta_k at 0.
    let mut diffs = evals.to_vec();
    let mut deltas = Vec::with_capacity(d + 1);
    deltas.push(diffs[0]);
    for _ in 1..=d {
        for i in 0..diffs.len() - 1 {
            diffs[i] = diffs[i + 1] - diffs[i];
        }
        diffs.pop();
        deltas.push(diffs[0]);
    }
    // f(X) = sum_k deltas[k]/k! * X(X-1)...(X-k+1)
    let mut coeffs = vec![Scalar::ZERO; d + 1];
    let mut basis = vec![Scalar::ONE]; // falling factorial, built incrementally
    let mut k_fact = Scalar::ONE;
    for (k, delta) in deltas.iter().enumerate() {
        if k > 0 {
            k_fact *= Scalar::from(k as u64);
            // basis *= (X - (k-1))
            let shift = Scalar::from((k - 1) as u64);
            let mut next = vec![Scalar::ZERO; basis.len() + 1];
            for (i, b) in basis.iter().enumerate() {
                next[i + 1] += *b;
                next[i] -= shift * *b;
            }
            basis = next;
        }
        let scale = *delta * inv(&k_fact).expect("factorial is nonzero");
        for (c, b) in coeffs.iter_mut().zip(&basis) {
            *c += scale * *b;
        }
    }
    coeffs
}

/// Horner evaluation of a coefficient vector at r.
pub fn poly_eval(coeffs: &[Scalar], r: Scalar) -> Scalar {
    let mut acc = Scalar::ZERO;
    for c in coeffs.iter().rev() {
        acc = acc * r + *c;
    }
    acc
}

fn reconstruct_c0(spec: &RoundSpec, tail: &[Scalar], claim: Scalar) -> Scalar {
    let tail_sum: Scalar = tail.iter().sum();
    match spec.twist {
        // claim = c0 + w * sum(tail)
        Some(w) => claim - w * tail_sum,
        // claim = f(0) + f(1) = 2*c0 + sum(tail)
        None => (claim - tail_sum) * crate::field::inv2(),
    }
}

/// Runs the prover side. The caller must have absorbed the claim (or the
/// data that determines it) before calling. Returns the proof, the bound
/// point, and the final claim f(r_last) that the caller ties to terminal
/// evaluations.
pub fn prove(
    oracle: &mut dyn SumcheckOracle,
    claim: Scalar,
    tr: &mut Transcript,
) -> (SumcheckProof, Vec<Scalar>, Scalar) {
    let n = oracle.num_rounds();
    let mut rounds = Vec::with_capacity(n);
    let mut point = Vec::with_capacity(n);
    let mut claim = claim;
    for t in 0..n {
        let spec = oracle.spec(t);
        let evals = oracle.evals();
        debug_assert_eq!(evals.len(), spec.degree + 1);
        let coeffs = interpolate(&evals);
        // No consistency check against `claim` here: a lying caller still
        // gets well-formed rounds, and the verifier's c0 reconstruction is
        // what exposes the lie. The tamper harness depends on this.
        let tail = coeffs[1..].to_vec();
        tr.absorb_scalars("sc/round", &tail);
        let r = tr.challenge_scalar("sc/r");
        claim = poly_eval(&coeffs, r);
        oracle.bind(r);
        point.push(r);
        rounds.push(tail);
    }
    (SumcheckProof { rounds }, point, claim)
}

/// Runs the verifier side against declared round specs. Returns the bound
/// point and the final claim; the caller must tie the final claim to
/// terminal evaluations of committed tensors.
pub fn verify(
    proof: &SumcheckProof,
    specs: &[RoundSpec],
    claim: Scalar,
    tr: &mut Transcript,
) -> Result<(Vec<Scalar>, Scalar), SumcheckError> {
    if proof.rounds.len() != specs.len() {
        return Err(SumcheckError::BadRoundCount { got: proof.rounds.len(), want: specs.len() });
    }
    let mut point = Vec::with_capacity(specs.len());
    let mut claim = claim;
    for (t, (tail, spec)) in proof.rounds.iter().zip(specs).enumerate() {
        if tail.len() != spec.degree {
            return Err(SumcheckError::BadRoundShape { round: t, got: tail.len(), want: spec.degree });
        }
        let c0 = reconstruct_c0(spec, tail, claim);
        tr.absorb_scalars("sc/round", tail);
        let r = tr.challenge_scalar("sc/r");
        let mut coeffs = Vec::with_capacity(tail.len() + 1);
        coeffs.push(c0);
        coeffs.extend_from_slice(tail);
        claim = poly_eval(&coeffs, r);
        point.push(r);
    }
    Ok((point, claim))
}

/// Suffix beta tables for a twist block: tables[t] covers variables t+1..n
/// (length 2^(n-1-t)), used to weight the tail during round t.
pub fn suffix_beta_tables(w: &[Scalar]) -> Vec<Vec<Scalar>> {
    let n = w.len();
    let mut tables = vec![Vec::new(); n];
    if n == 0 {
        return tables;
    }
    tables[n - 1] = vec![Scalar::ONE];
    for t in (0..n - 1).rev() {
        let prev = &tables[t + 1];
        let wv = w[t + 1];
        let mut cur = Vec::with_capacity(prev.len() * 2);
        for b in [Scalar::ZERO, Scalar::ONE] {
            let weight = beta1(wv, b);
            cur.extend(prev.iter().map(|p| weight * *p));
        }
        tables[t] = cur;
    }
    tables
}

/// Sumcheck oracle for sum_x beta(w, x_head) * T0(x) * T1(x), where x splits
/// into a twisted head block (|w| variables) and an untwisted tail block.
/// Sent polynomials have degree 2 in every round.
pub struct ProductOracle {
    t0: Vec<Scalar>,
    t1: Vec<Scalar>,
    suffix: Vec<Vec<Scalar>>,
    twist: Vec<Scalar>,
    tail_vars: usize,
    round: usize,
}

impl ProductOracle {
    pub fn new(t0: Vec<Scalar>, t1: Vec<Scalar>, twist: Vec<Scalar>, tail_vars: usize) -> Self {
        assert_eq!(t0.len(), t1.len());
        assert_eq!(t0.len(), 1usize << (twist.len() + tail_vars));
        let suffix = suffix_beta_tables(&twist);
        ProductOracle { t0, t1, suffix, twist, tail_vars, round: 0 }
    }

    /// Terminal evaluations (T0(r), T1(r)) once all rounds are bound.
    pub fn final_evals(&self) -> (Scalar, Scalar) {
        assert_eq!(self.t0.len(), 1);
        (self.t0[0], self.t1[0])
    }

    /// The true sum this oracle proves; used to form the stated claim.
    pub fn claimed_sum(&self) -> Scalar {
        assert_eq!(self.round, 0);
        let head = crate::tensor::beta_table(&self.twist);
        let tail_len = 1usize << self.tail_vars;
        let mut acc = Scalar::ZERO;
        for (i, w) in head.iter().enumerate() {
            let mut inner = Scalar::ZERO;
            for j in 0..tail_len {
                let idx = i * tail_len + j;
                inner += self.t0[idx] * self.t1[idx];
            }
            acc += *w * inner;
        }
        acc
    }
}

impl SumcheckOracle for ProductOracle {
    fn num_rounds(&self) -> usize {
        self.twist.len() + self.tail_vars
    }

    fn spec(&self, round: usize) -> RoundSpec {
        if round < self.twist.len() {
            RoundSpec::twisted(2, self.twist[round])
        } else {
            RoundSpec::plain(2)
        }
    }

    fn evals(&self) -> Vec<Scalar> {
        let half = self.t0.len() / 2;
        let in_twist = self.round < self.twist.len();
        let mut e = [Scalar::ZERO; 3];
        for j in 0..half {
            let w = if in_twist {
                self.suffix[self.round][j >> self.tail_vars]
            } else {
                Scalar::ONE
            };
            let (lo0, hi0) = (self.t0[j], self.t0[half + j]);
            let (lo1, hi1) = (self.t1[j], self.t1[half + j]);
            e[0] += w * lo0 * lo1;
            e[1] += w * hi0 * hi1;
            e[2] += w * (hi0.double() - lo0) * (hi1.double() - lo1);
        }
        e.to_vec()
    }

    fn bind(&mut self, r: Scalar) {
        let half = self.t0.len() / 2;
        for j in 0..half {
            self.t0[j] = self.t0[j] + r * (self.t0[half + j] - self.t0[j]);
            self.t1[j] = self.t1[j] + r * (self.t1[half + j] - self.t1[j]);
        }
        self.t0.truncate(half);
        self.t1.truncate(half);
        self.round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{beta_at_index, mle_eval_slice};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rand_scalars(rng: &mut ChaCha20Rng, n: usize) -> Vec<Scalar> {
        (0..n).map(|_| Scalar::random(&mut *rng)).collect()
    }

    #[test]
    fn interpolation_recovers_coefficients() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for d in 0..=4usize {
            let coeffs = rand_scalars(&mut rng, d + 1);
            let evals: Vec<Scalar> = (0..=d)
                .map(|x| poly_eval(&coeffs, Scalar::from(x as u64)))
                .collect();
            assert_eq!(interpolate(&evals), coeffs, "degree {d}");
        }
    }

    #[test]
    fn plain_product_sumcheck_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for vars in 1..=6usize {
            let t0 = rand_scalars(&mut rng, 1 << vars);
            let t1 = rand_scalars(&mut rng, 1 << vars);
            let mut oracle = ProductOracle::new(t0.clone(), t1.clone(), vec![], vars);
            let claim = oracle.claimed_sum();
            let mut tp = Transcript::new("test/sc");
            let (proof, p_point, p_final) = prove(&mut oracle, claim, &mut tp);
            assert_eq!(proof.num_scalars(), 2 * vars);

            let specs: Vec<RoundSpec> = (0..vars).map(|_| RoundSpec::plain(2)).collect();
            let mut tv = Transcript::new("test/sc");
            let (v_point, v_final) = verify(&proof, &specs, claim, &mut tv).unwrap();
            assert_eq!(p_point, v_point);
            assert_eq!(p_final, v_final);
            assert_eq!(v_final, mle_eval_slice(&t0, &v_point) * mle_eval_slice(&t1, &v_point));
            assert_eq!(oracle.final_evals().0, mle_eval_slice(&t0, &v_point));
        }
    }

    #[test]
    fn twisted_product_absorbs_beta_into_checks() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for (head, tail) in [(1usize, 0usize), (2, 2), (3, 1), (0, 3)] {
            let vars = head + tail;
            let t0 = rand_scalars(&mut rng, 1 << vars);
            let t1 = rand_scalars(&mut rng, 1 << vars);
            let w = rand_scalars(&mut rng, head);
            // Direct claim: sum over x of beta(w, x_head) * T0(x) * T1(x).
            let tail_len = 1usize << tail;
            let mut claim = Scalar::ZERO;
            for i in 0..(1usize << head) {
                for j in 0..tail_len {
                    let idx = i * tail_len + j;
                    claim += beta_at_index(&w, i) * t0[idx] * t1[idx];
                }
            }
            let mut oracle = ProductOracle::new(t0.clone(), t1.clone(), w.clone(), tail);
            assert_eq!(oracle.claimed_sum(), claim);
            let mut tp = Transcript::new("test/sc");
            let (proof, _, p_final) = prove(&mut oracle, claim, &mut tp);

            let mut specs: Vec<RoundSpec> =
                w.iter().map(|wi| RoundSpec::twisted(2, *wi)).collect();
            specs.extend((0..tail).map(|_| RoundSpec::plain(2)));
            let mut tv = Transcript::new("test/sc");
            let (point, v_final) = verify(&proof, &specs, claim, &mut tv).unwrap();
            assert_eq!(p_final, v_final);
            // The twist never multiplies the terminal claim.
            assert_eq!(v_final, mle_eval_slice(&t0, &point) * mle_eval_slice(&t1, &point));
        }
    }

    #[test]
    fn tampered_rounds_shift_the_final_claim() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let vars = 5;
        let t0 = rand_scalars(&mut rng, 1 << vars);
        let t1 = rand_scalars(&mut rng, 1 << vars);
        let mut oracle = ProductOracle::new(t0.clone(), t1.clone(), vec![], vars);
        let claim = oracle.claimed_sum();
        let mut tp = Transcript::new("test/sc");
        let (proof, _, _) = prove(&mut oracle, claim, &mut tp);
        let specs: Vec<RoundSpec> = (0..vars).map(|_| RoundSpec::plain(2)).collect();

        for round in 0..vars {
            for c in 0..2 {
                let mut bad = proof.clone();
                bad.rounds[round][c] += Scalar::ONE;
                let mut tv = Transcript::new("test/sc");
                let (point, final_claim) = verify(&bad, &specs, claim, &mut tv).unwrap();
                let honest = mle_eval_slice(&t0, &point) * mle_eval_slice(&t1, &point);
                assert_ne!(final_claim, honest, "round {round} coeff {c}");
            }
        }

        // A wrong claim shifts the final claim off the honest evaluation.
        let mut tv = Transcript::new("test/sc");
        let (point, final_claim) =
            verify(&proof, &specs, claim + Scalar::ONE, &mut tv).unwrap();
        assert_ne!(final_claim, mle_eval_slice(&t0, &point) * mle_eval_slice(&t1, &point));
    }

    #[test]
    fn shape_violations_are_rejected() {
        let specs = vec![RoundSpec::plain(2); 3];
        let proof = SumcheckProof { rounds: vec![vec![Scalar::ONE; 2]; 2] };
        let mut tv = Transcript::new("test/sc");
        assert!(matches!(
            verify(&proof, &specs, Scalar::ONE, &mut tv),
            Err(SumcheckError::BadRoundCount { .. })
        ));
        let proof = SumcheckProof {
            rounds: vec![vec![Scalar::ONE; 2], vec![Scalar::ONE; 3], vec![Scalar::ONE; 2]],
        };
        let mut tv = Transcript::new("test/sc");
        assert!(matches!(
            verify(&proof, &specs, Scalar::ONE, &mut tv),
            Err(SumcheckError::BadRoundShape { round: 1, .. })
        ));
    }

    #[test]
    fn suffix_tables_match_direct_products() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let w = rand_scalars(&mut rng, 4);
        let tables = suffix_beta_tables(&w);
        for t in 0..4 {
            let tail = &w[t + 1..];
            let expect = crate::tensor::beta_table(tail);
            assert_eq!(tables[t], expect, "round {t}");
        }
    }
}
