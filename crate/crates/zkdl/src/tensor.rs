//! Dense tensors over the field and their multilinear extensions.
//!
//! A tensor with power-of-two dims is identified with the evaluation table of
//! a multilinear polynomial over the boolean hypercube. The flat index is read
//! MSB-first: the first variable selects the top half of the table, so a
//! stacked tensor's leading variables select the instance. All sumcheck code
//! folds variables in this order.

use crate::field::{embed_i64, Scalar};
use ff::Field;

/// Rounds up to the next power of two (minimum 1).
pub fn pad_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// log2 of a power of two.
pub fn log2(n: usize) -> usize {
    debug_assert!(n.is_power_of_two());
    n.trailing_zeros() as usize
}

/// Dense row-major tensor; every dim is a power of two and the data length is
/// the product of the dims.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseTensor {
    pub dims: Vec<usize>,
    pub data: Vec<Scalar>,
}

impl DenseTensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        assert!(dims.iter().all(|d| d.is_power_of_two()));
        let len = dims.iter().product();
        DenseTensor { dims, data: vec![Scalar::ZERO; len] }
    }

    pub fn from_scalars(dims: Vec<usize>, data: Vec<Scalar>) -> Self {
        assert!(dims.iter().all(|d| d.is_power_of_two()));
        assert_eq!(dims.iter().product::<usize>(), data.len());
        DenseTensor { dims, data }
    }

    /// Embeds an integer tensor of shape `src_dims`, zero-padding each axis to
    /// the given power-of-two dims.
    pub fn from_ints_padded(src: &[i64], src_dims: &[usize], dims: Vec<usize>) -> Self {
        assert_eq!(src_dims.len(), dims.len());
        assert!(src_dims.iter().zip(&dims).all(|(s, d)| s <= d));
        let mut t = DenseTensor::zeros(dims);
        let mut idx = vec![0usize; src_dims.len()];
        for &v in src {
            let mut flat = 0usize;
            for (i, &d) in t.dims.iter().enumerate() {
                flat = flat * d + idx[i];
            }
            t.data[flat] = embed_i64(v);
            // advance the multi-index over src_dims
            for i in (0..idx.len()).rev() {
                idx[i] += 1;
                if idx[i] < src_dims[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        t
    }

    pub fn num_vars(&self) -> usize {
        log2(self.data.len())
    }

    /// Evaluates the multilinear extension at an arbitrary field point
    /// (length must equal `num_vars`). O(len) time.
    pub fn mle_eval(&self, point: &[Scalar]) -> Scalar {
        mle_eval_slice(&self.data, point)
    }
}

/// Multilinear evaluation of a flat table at a point, folding MSB-first.
pub fn mle_eval_slice(table: &[Scalar], point: &[Scalar]) -> Scalar {
    assert_eq!(table.len(), 1usize << point.len());
    let mut buf = table.to_vec();
    for r in point {
        fold_first_var(&mut buf, *r);
    }
    buf[0]
}

/// Binds the first (most significant) variable to `r`, halving the table:
/// out[j] = (1-r)*t[j] + r*t[j + n/2].
pub fn fold_first_var(table: &mut Vec<Scalar>, r: Scalar) {
    let n = table.len();
    assert!(n.is_power_of_two() && n >= 2);
    let half = n / 2;
    for j in 0..half {
        let lo = table[j];
        let hi = table[j + half];
        table[j] = lo + r * (hi - lo);
    }
    table.truncate(half);
}

/// Binds a middle variable: the table is viewed as (pre, 2, post) and the
/// middle axis is folded at `r`.
pub fn fold_middle_var(table: &mut Vec<Scalar>, pre: usize, post: usize, r: Scalar) {
    assert_eq!(table.len(), pre * 2 * post);
    let mut out = Vec::with_capacity(pre * post);
    for a in 0..pre {
        let base = a * 2 * post;
        for b in 0..post {
            let lo = table[base + b];
            let hi = table[base + post + b];
            out.push(lo + r * (hi - lo));
        }
    }
    *table = out;
}

/// Equality kernel on one coordinate: beta(u, b) = u*b + (1-u)*(1-b).
pub fn beta1(u: Scalar, b: Scalar) -> Scalar {
    u * b + (Scalar::ONE - u) * (Scalar::ONE - b)
}

/// Equality kernel between two field points of equal length.
pub fn beta_eval(u: &[Scalar], v: &[Scalar]) -> Scalar {
    assert_eq!(u.len(), v.len());
    u.iter().zip(v).fold(Scalar::ONE, |acc, (a, b)| acc * beta1(*a, *b))
}

/// Equality kernel between a field point and a boolean index (MSB-first).
pub fn beta_at_index(u: &[Scalar], index: usize) -> Scalar {
    let n = u.len();
    debug_assert!(index < (1usize << n));
    let mut acc = Scalar::ONE;
    for (i, ui) in u.iter().enumerate() {
        let bit = (index >> (n - 1 - i)) & 1;
        acc *= if bit == 1 { *ui } else { Scalar::ONE - *ui };
    }
    acc
}

/// Full table [beta(u, b)]_{b in {0,1}^n}, indexed MSB-first. O(2^n).
pub fn beta_table(u: &[Scalar]) -> Vec<Scalar> {
    let mut table = vec![Scalar::ONE];
    for ui in u {
        let mut next = Vec::with_capacity(table.len() * 2);
        let om = Scalar::ONE - *ui;
        for t in &table {
            next.push(*t * om);
            next.push(*t * *ui);
        }
        table = next;
    }
    table
}

/// Stacks same-shape tensors on a new leading axis padded to a power of two;
/// missing trailing instances are zero.
pub fn stack(tensors: &[&DenseTensor]) -> DenseTensor {
    assert!(!tensors.is_empty());
    let inst_dims = tensors[0].dims.clone();
    assert!(tensors.iter().all(|t| t.dims == inst_dims));
    let n = pad_pow2(tensors.len());
    let inst_len: usize = inst_dims.iter().product();
    let mut data = vec![Scalar::ZERO; n * inst_len];
    for (i, t) in tensors.iter().enumerate() {
        data[i * inst_len..(i + 1) * inst_len].copy_from_slice(&t.data);
    }
    let mut dims = vec![n];
    dims.extend(inst_dims);
    DenseTensor { dims, data }
}

/// An evaluation claim: the named target's multilinear extension equals
/// `value` at `point`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalClaim {
    pub point: Vec<Scalar>,
    pub value: Scalar,
}

/// Restricts a table over (head, tail) vars to a fixed head point, producing
/// the table over tail vars: out[j] = sum_i beta(point, i) * t[i][j].
pub fn restrict_head(table: &[Scalar], head_vars: usize, point: &[Scalar]) -> Vec<Scalar> {
    assert_eq!(point.len(), head_vars);
    let head = 1usize << head_vars;
    let tail = table.len() / head;
    let bt = beta_table(point);
    let mut out = vec![Scalar::ZERO; tail];
    for i in 0..head {
        let w = bt[i];
        if w == Scalar::ZERO {
            continue;
        }
        let row = &table[i * tail..(i + 1) * tail];
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * *v;
        }
    }
    out
}
