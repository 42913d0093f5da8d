//! Batched matrix-multiplication sumcheck.
//!
//! Proves out[t, x, y] = sum_k in0[t, x, k] * in1[t, k, y] for a whole
//! window of steps in one claim: the verifier draws a point (p_t, p_x, p_y)
//! over the output's variable blocks, the prover states <out>(p) and both
//! inputs are pre-folded down to tables over (t, k). The sumcheck then runs
//! over the step block (twisted by beta(p_t, .)) and the shared inner block,
//! with degree-2 rounds throughout. Transposed operand layouts are handled
//! by choosing which block of a (t, A, B) master gets folded; the terminal
//! claims are reassembled in master variable order.

use crate::field::Scalar;
use crate::sumcheck::{self, ProductOracle, RoundSpec, SumcheckError, SumcheckProof};
use crate::tensor::mle_eval_slice;
use crate::transcript::Transcript;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatmulError {
    #[error("malformed proof: {0}")]
    Shape(#[from] SumcheckError),
    #[error("terminal product check failed")]
    Terminal,
}

/// Which block of a (t, A, B) operand is folded at the drawn point. The
/// other block is the shared inner block the sumcheck sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSide {
    /// Fold A at the drawn point; B is the inner block.
    A,
    /// Fold B at the drawn point; A is the inner block.
    B,
}

/// One matmul operand: a flat table over (t, A, B) with its block split.
#[derive(Debug, Clone, Copy)]
pub struct Operand<'a> {
    pub table: &'a [Scalar],
    pub a_vars: usize,
    pub b_vars: usize,
    pub fold: FoldSide,
}

impl Operand<'_> {
    fn kept_vars(&self) -> usize {
        match self.fold {
            FoldSide::A => self.b_vars,
            FoldSide::B => self.a_vars,
        }
    }

    fn folded_vars(&self) -> usize {
        match self.fold {
            FoldSide::A => self.a_vars,
            FoldSide::B => self.b_vars,
        }
    }

    /// Folds the chosen block at `point`, leaving a table over (t, inner).
    fn fold_at(&self, t_vars: usize, point: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(self.table.len(), 1usize << (t_vars + self.a_vars + self.b_vars));
        let mut out = self.table.to_vec();
        match self.fold {
            FoldSide::A => {
                // Middle block: fold each leading A variable with the t
                // block as prefix and (rest of A, B) as suffix.
                let mut a_left = self.a_vars;
                for r in point {
                    crate::tensor::fold_middle_var(
                        &mut out,
                        1usize << t_vars,
                        1usize << (a_left - 1 + self.b_vars),
                        *r,
                    );
                    a_left -= 1;
                }
            }
            FoldSide::B => {
                // Trailing block: fold each leading B variable with
                // (t, A) as prefix.
                let mut b_left = self.b_vars;
                for r in point {
                    crate::tensor::fold_middle_var(
                        &mut out,
                        1usize << (t_vars + self.a_vars),
                        1usize << (b_left - 1),
                        *r,
                    );
                    b_left -= 1;
                }
            }
        }
        out
    }

    /// Master-order point for the terminal claim, given the bound step
    /// point, the drawn fold point, and the bound inner point.
    fn claim_point(&self, v_t: &[Scalar], p_fold: &[Scalar], v_inner: &[Scalar]) -> Vec<Scalar> {
        let mut pt = v_t.to_vec();
        match self.fold {
            FoldSide::A => {
                pt.extend_from_slice(p_fold);
                pt.extend_from_slice(v_inner);
            }
            FoldSide::B => {
                pt.extend_from_slice(v_inner);
                pt.extend_from_slice(p_fold);
            }
        }
        pt
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatmulProof {
    pub stated: Scalar,
    pub sc: SumcheckProof,
    pub t0_final: Scalar,
    pub t1_final: Scalar,
}

/// Claims emitted by one matmul op, in master variable order.
#[derive(Debug, Clone)]
pub struct MatmulClaims {
    pub out_point: Vec<Scalar>,
    pub out_value: Scalar,
    pub in0_point: Vec<Scalar>,
    pub in0_value: Scalar,
    pub in1_point: Vec<Scalar>,
    pub in1_value: Scalar,
}

fn round_specs(t_vars: usize, inner_vars: usize, p_t: &[Scalar]) -> Vec<RoundSpec> {
    let mut specs: Vec<RoundSpec> =
        p_t.iter().map(|w| RoundSpec::twisted(2, *w)).collect();
    assert_eq!(specs.len(), t_vars);
    specs.extend((0..inner_vars).map(|_| RoundSpec::plain(2)));
    specs
}

/// Proves one batched matmul. `out` is the flat output table over
/// (t, x, y); the operands' kept blocks must agree in size.
pub fn prove(
    tr: &mut Transcript,
    t_vars: usize,
    out: &[Scalar],
    out_x_vars: usize,
    out_y_vars: usize,
    in0: Operand,
    in1: Operand,
) -> (MatmulProof, MatmulClaims) {
    let inner = in0.kept_vars();
    assert_eq!(inner, in1.kept_vars());
    assert_eq!(in0.folded_vars(), out_x_vars);
    assert_eq!(in1.folded_vars(), out_y_vars);
    assert_eq!(out.len(), 1usize << (t_vars + out_x_vars + out_y_vars));

    let p_t = tr.challenge_point("mm/pt", t_vars);
    let p_x = tr.challenge_point("mm/px", out_x_vars);
    let p_y = tr.challenge_point("mm/py", out_y_vars);
    let mut out_point = p_t.clone();
    out_point.extend_from_slice(&p_x);
    out_point.extend_from_slice(&p_y);
    let stated = mle_eval_slice(out, &out_point);
    tr.absorb_scalar("mm/stated", &stated);

    let t0 = in0.fold_at(t_vars, &p_x);
    let t1 = in1.fold_at(t_vars, &p_y);
    let mut oracle = ProductOracle::new(t0, t1, p_t, inner);

    let (sc, point, _final) = sumcheck::prove(&mut oracle, stated, tr);
    let (f0, f1) = oracle.final_evals();
    tr.absorb_scalar("mm/t0", &f0);
    tr.absorb_scalar("mm/t1", &f1);

    let (v_t, v_inner) = point.split_at(t_vars);
    (
        MatmulProof { stated, sc, t0_final: f0, t1_final: f1 },
        MatmulClaims {
            out_point,
            out_value: stated,
            in0_point: in0.claim_point(v_t, &p_x, v_inner),
            in0_value: f0,
            in1_point: in1.claim_point(v_t, &p_y, v_inner),
            in1_value: f1,
        },
    )
}

/// Shape of an operand as the verifier knows it (no data).
#[derive(Debug, Clone, Copy)]
pub struct OperandShape {
    pub a_vars: usize,
    pub b_vars: usize,
    pub fold: FoldSide,
}

impl OperandShape {
    fn kept_vars(&self) -> usize {
        match self.fold {
            FoldSide::A => self.b_vars,
            FoldSide::B => self.a_vars,
        }
    }
    fn folded_vars(&self) -> usize {
        match self.fold {
            FoldSide::A => self.a_vars,
            FoldSide::B => self.b_vars,
        }
    }
    fn claim_point(&self, v_t: &[Scalar], p_fold: &[Scalar], v_inner: &[Scalar]) -> Vec<Scalar> {
        let mut pt = v_t.to_vec();
        match self.fold {
            FoldSide::A => {
                pt.extend_from_slice(p_fold);
                pt.extend_from_slice(v_inner);
            }
            FoldSide::B => {
                pt.extend_from_slice(v_inner);
                pt.extend_from_slice(p_fold);
            }
        }
        pt
    }
}

/// Verifier mirror of `prove`.
pub fn verify(
    tr: &mut Transcript,
    t_vars: usize,
    proof: &MatmulProof,
    in0: OperandShape,
    in1: OperandShape,
) -> Result<MatmulClaims, MatmulError> {
    let inner = in0.kept_vars();
    if inner != in1.kept_vars() {
        return Err(MatmulError::Terminal);
    }
    let p_t = tr.challenge_point("mm/pt", t_vars);
    let p_x = tr.challenge_point("mm/px", in0.folded_vars());
    let p_y = tr.challenge_point("mm/py", in1.folded_vars());
    tr.absorb_scalar("mm/stated", &proof.stated);

    let specs = round_specs(t_vars, inner, &p_t);
    let (point, final_claim) = sumcheck::verify(&proof.sc, &specs, proof.stated, tr)?;
    tr.absorb_scalar("mm/t0", &proof.t0_final);
    tr.absorb_scalar("mm/t1", &proof.t1_final);
    if proof.t0_final * proof.t1_final != final_claim {
        return Err(MatmulError::Terminal);
    }

    let (v_t, v_inner) = point.split_at(t_vars);
    let mut out_point = p_t.clone();
    out_point.extend_from_slice(&p_x);
    out_point.extend_from_slice(&p_y);
    Ok(MatmulClaims {
        out_point,
        out_value: proof.stated,
        in0_point: in0.claim_point(v_t, &p_x, v_inner),
        in0_value: proof.t0_final,
        in1_point: in1.claim_point(v_t, &p_y, v_inner),
        in1_value: proof.t1_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::embed;
    use ff::Field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    // Integer reference tensors: steps of X (b x n), W (n x m), plus the
    // gradient orientations, all embedded into field tables.
    struct Batch {
        t: usize,
        b: usize,
        n: usize,
        m: usize,
        x: Vec<i128>,  // (t, b, n)
        w: Vec<i128>,  // (t, n, m)
        z: Vec<i128>,  // (t, b, m) = X W
        ga: Vec<i128>, // (t, b, n) = Z W^T
        gw: Vec<i128>, // (t, n, m) = X^T Z
    }

    fn build(rng: &mut ChaCha20Rng, t: usize, b: usize, n: usize, m: usize) -> Batch {
        let rnd = |rng: &mut ChaCha20Rng, len: usize| -> Vec<i128> {
            (0..len).map(|_| rng.gen_range(-5i128..6)).collect()
        };
        let x = rnd(rng, t * b * n);
        let w = rnd(rng, t * n * m);
        let mut z = vec![0i128; t * b * m];
        for s in 0..t {
            for i in 0..b {
                for j in 0..m {
                    z[s * b * m + i * m + j] = (0..n)
                        .map(|k| x[s * b * n + i * n + k] * w[s * n * m + k * m + j])
                        .sum();
                }
            }
        }
        let mut ga = vec![0i128; t * b * n];
        for s in 0..t {
            for i in 0..b {
                for k in 0..n {
                    ga[s * b * n + i * n + k] = (0..m)
                        .map(|j| z[s * b * m + i * m + j] * w[s * n * m + k * m + j])
                        .sum();
                }
            }
        }
        let mut gw = vec![0i128; t * n * m];
        for s in 0..t {
            for k in 0..n {
                for j in 0..m {
                    gw[s * n * m + k * m + j] = (0..b)
                        .map(|i| x[s * b * n + i * n + k] * z[s * b * m + i * m + j])
                        .sum();
                }
            }
        }
        Batch { t, b, n, m, x, w, z, ga, gw }
    }

    fn table(v: &[i128]) -> Vec<Scalar> {
        v.iter().map(|x| embed(*x)).collect()
    }

    fn lg(n: usize) -> usize {
        crate::tensor::log2(n)
    }

    #[test]
    fn forward_orientation_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let bt = build(&mut rng, 4, 2, 8, 4);
        let (xt, wt, zt) = (table(&bt.x), table(&bt.w), table(&bt.z));
        let (lt, lb, ln, lm) = (lg(bt.t), lg(bt.b), lg(bt.n), lg(bt.m));

        // Z = X W: fold X's row block, fold W's column block.
        let in0 = Operand { table: &xt, a_vars: lb, b_vars: ln, fold: FoldSide::A };
        let in1 = Operand { table: &wt, a_vars: ln, b_vars: lm, fold: FoldSide::B };
        let mut tp = Transcript::new("test/mm");
        let (proof, pc) = prove(&mut tp, lt, &zt, lb, lm, in0, in1);

        let s0 = OperandShape { a_vars: lb, b_vars: ln, fold: FoldSide::A };
        let s1 = OperandShape { a_vars: ln, b_vars: lm, fold: FoldSide::B };
        let mut tv = Transcript::new("test/mm");
        let vc = verify(&mut tv, lt, &proof, s0, s1).unwrap();
        assert_eq!(pc.out_point, vc.out_point);
        assert_eq!(vc.out_value, mle_eval_slice(&zt, &vc.out_point));
        assert_eq!(vc.in0_value, mle_eval_slice(&xt, &vc.in0_point));
        assert_eq!(vc.in1_value, mle_eval_slice(&wt, &vc.in1_point));
    }

    #[test]
    fn transposed_orientations_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let bt = build(&mut rng, 2, 4, 4, 8);
        let (xt, wt, zt) = (table(&bt.x), table(&bt.w), table(&bt.z));
        let (gat, gwt) = (table(&bt.ga), table(&bt.gw));
        let (lt, lb, ln, lm) = (lg(bt.t), lg(bt.b), lg(bt.n), lg(bt.m));

        // G_A = Z W^T: both operands keep their trailing m block.
        let in0 = Operand { table: &zt, a_vars: lb, b_vars: lm, fold: FoldSide::A };
        let in1 = Operand { table: &wt, a_vars: ln, b_vars: lm, fold: FoldSide::A };
        let mut tp = Transcript::new("test/mm-ga");
        let (proof, _) = prove(&mut tp, lt, &gat, lb, ln, in0, in1);
        let mut tv = Transcript::new("test/mm-ga");
        let vc = verify(
            &mut tv,
            lt,
            &proof,
            OperandShape { a_vars: lb, b_vars: lm, fold: FoldSide::A },
            OperandShape { a_vars: ln, b_vars: lm, fold: FoldSide::A },
        )
        .unwrap();
        assert_eq!(vc.out_value, mle_eval_slice(&gat, &vc.out_point));
        assert_eq!(vc.in0_value, mle_eval_slice(&zt, &vc.in0_point));
        assert_eq!(vc.in1_value, mle_eval_slice(&wt, &vc.in1_point));

        // G_W = X^T Z: both operands keep their leading b block.
        let in0 = Operand { table: &xt, a_vars: lb, b_vars: ln, fold: FoldSide::B };
        let in1 = Operand { table: &zt, a_vars: lb, b_vars: lm, fold: FoldSide::B };
        let mut tp = Transcript::new("test/mm-gw");
        let (proof, _) = prove(&mut tp, lt, &gwt, ln, lm, in0, in1);
        let mut tv = Transcript::new("test/mm-gw");
        let vc = verify(
            &mut tv,
            lt,
            &proof,
            OperandShape { a_vars: lb, b_vars: ln, fold: FoldSide::B },
            OperandShape { a_vars: lb, b_vars: lm, fold: FoldSide::B },
        )
        .unwrap();
        assert_eq!(vc.out_value, mle_eval_slice(&gwt, &vc.out_point));
        assert_eq!(vc.in0_value, mle_eval_slice(&xt, &vc.in0_point));
        assert_eq!(vc.in1_value, mle_eval_slice(&zt, &vc.in1_point));
    }

    #[test]
    fn single_step_window_has_no_twist_rounds() {
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        let bt = build(&mut rng, 1, 2, 4, 2);
        let (xt, wt, zt) = (table(&bt.x), table(&bt.w), table(&bt.z));
        let (lb, ln, lm) = (lg(bt.b), lg(bt.n), lg(bt.m));
        let in0 = Operand { table: &xt, a_vars: lb, b_vars: ln, fold: FoldSide::A };
        let in1 = Operand { table: &wt, a_vars: ln, b_vars: lm, fold: FoldSide::B };
        let mut tp = Transcript::new("test/mm1");
        let (proof, _) = prove(&mut tp, 0, &zt, lb, lm, in0, in1);
        assert_eq!(proof.sc.rounds.len(), ln);
        let mut tv = Transcript::new("test/mm1");
        verify(
            &mut tv,
            0,
            &proof,
            OperandShape { a_vars: lb, b_vars: ln, fold: FoldSide::A },
            OperandShape { a_vars: ln, b_vars: lm, fold: FoldSide::B },
        )
        .unwrap();
    }

    #[test]
    fn corrupted_output_entry_is_caught() {
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        let bt = build(&mut rng, 2, 2, 4, 4);
        let (xt, wt) = (table(&bt.x), table(&bt.w));
        let mut zt = table(&bt.z);
        zt[5] += Scalar::ONE;
        let (lt, lb, ln, lm) = (lg(bt.t), lg(bt.b), lg(bt.n), lg(bt.m));
        let in0 = Operand { table: &xt, a_vars: lb, b_vars: ln, fold: FoldSide::A };
        let in1 = Operand { table: &wt, a_vars: ln, b_vars: lm, fold: FoldSide::B };
        // A cheating prover states the corrupted output's evaluation but can
        // only produce rounds for the honest product; the terminal check or
        // the input-claim evaluations must break. Simulate by proving with
        // the honest tables against the corrupted stated claim.
        let p_t: Vec<Scalar>;
        let stated;
        {
            let mut tp = Transcript::new("test/mm-bad");
            p_t = tp.challenge_point("mm/pt", lt);
            let p_x = tp.challenge_point("mm/px", lb);
            let p_y = tp.challenge_point("mm/py", lm);
            let mut out_point = p_t.clone();
            out_point.extend_from_slice(&p_x);
            out_point.extend_from_slice(&p_y);
            stated = mle_eval_slice(&zt, &out_point);
            tp.absorb_scalar("mm/stated", &stated);
            let t0 = in0.fold_at(lt, &p_x);
            let t1 = in1.fold_at(lt, &p_y);
            let mut oracle = ProductOracle::new(t0, t1, p_t.clone(), ln);
            let honest = oracle.claimed_sum();
            assert_ne!(honest, stated);
            // Rounds are honest for the product; the verifier reconstructs
            // c0 from the corrupted stated value.
            let (sc, point, _) = sumcheck::prove(&mut oracle, honest, &mut tp);
            let (f0, f1) = oracle.final_evals();
            let proof = MatmulProof { stated, sc, t0_final: f0, t1_final: f1 };
            let mut tv = Transcript::new("test/mm-bad");
            let res = verify(
                &mut tv,
                lt,
                &proof,
                OperandShape { a_vars: lb, b_vars: ln, fold: FoldSide::A },
                OperandShape { a_vars: ln, b_vars: lm, fold: FoldSide::B },
            );
            // Either the terminal product check fails outright, or the
            // claims disagree with the true input evaluations.
            match res {
                Err(MatmulError::Terminal) => {}
                Err(e) => panic!("unexpected error {e:?}"),
                Ok(vc) => {
                    let ok0 = vc.in0_value == mle_eval_slice(&xt, &vc.in0_point);
                    let ok1 = vc.in1_value == mle_eval_slice(&wt, &vc.in1_point);
                    assert!(!(ok0 && ok1), "corruption slipped through");
                }
            }
            let _ = point;
        }
    }
}
