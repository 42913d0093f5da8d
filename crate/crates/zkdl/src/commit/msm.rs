//! Multi-scalar multiplication with a fast path for small scalars.
//!
//! Committed tensors are embedded small integers (at most Q+R bits plus
//! sign) or bits, so most scalars here are tiny. Scalars are classified by
//! magnitude: zeros are skipped, units become a single add, short scalars run
//! a windowed loop over their actual bit length, and full-width scalars go
//! through Pippenger buckets.

use crate::field::{lift, Scalar};
use group::Group;
use pasta_curves::pallas::Point;

/// Computes sum_i scalars[i] * bases[i].
pub fn msm(bases: &[Point], scalars: &[Scalar]) -> Point {
    assert_eq!(bases.len(), scalars.len());
    let mut unit_acc = Point::identity();
    let mut small: Vec<(Point, u64)> = Vec::new();
    let mut full: Vec<(Point, Scalar)> = Vec::new();
    for (b, s) in bases.iter().zip(scalars) {
        match lift(s) {
            Some(0) => {}
            Some(1) => unit_acc += b,
            Some(-1) => unit_acc -= b,
            Some(v) if v.unsigned_abs() <= u64::MAX as u128 => {
                let base = if v < 0 { -*b } else { *b };
                small.push((base, v.unsigned_abs() as u64));
            }
            _ => full.push((*b, *s)),
        }
    }
    unit_acc + small_msm(&small) + pippenger(&full)
}

/// Windowed bucket MSM over 64-bit magnitudes.
fn small_msm(pairs: &[(Point, u64)]) -> Point {
    if pairs.is_empty() {
        return Point::identity();
    }
    let max_bits = 64 - pairs.iter().map(|(_, m)| m.leading_zeros()).min().unwrap() as usize;
    let window = window_size(pairs.len());
    let mut acc = Point::identity();
    let mut start = max_bits.div_ceil(window) * window;
    while start > 0 {
        start -= window;
        for _ in 0..window {
            acc = acc.double();
        }
        let mut buckets = vec![Point::identity(); (1 << window) - 1];
        for (p, m) in pairs {
            let digit = ((m >> start) & ((1 << window) - 1)) as usize;
            if digit > 0 {
                buckets[digit - 1] += p;
            }
        }
        acc += bucket_sum(&buckets);
    }
    acc
}

/// Pippenger over full-width scalars via their canonical byte encoding.
fn pippenger(pairs: &[(Point, Scalar)]) -> Point {
    if pairs.is_empty() {
        return Point::identity();
    }
    let window = window_size(pairs.len());
    let encoded: Vec<(Point, [u8; 32])> =
        pairs.iter().map(|(p, s)| (*p, crate::field::to_bytes(s))).collect();
    let total_bits: usize = 255;
    let mut acc = Point::identity();
    let mut start = total_bits.div_ceil(window) * window;
    while start > 0 {
        start -= window;
        for _ in 0..window {
            acc = acc.double();
        }
        let mut buckets = vec![Point::identity(); (1 << window) - 1];
        for (p, bytes) in &encoded {
            let digit = get_bits(bytes, start, window);
            if digit > 0 {
                buckets[digit - 1] += p;
            }
        }
        acc += bucket_sum(&buckets);
    }
    acc
}

/// sum_i (i+1) * buckets[i] via a running suffix sum.
fn bucket_sum(buckets: &[Point]) -> Point {
    let mut running = Point::identity();
    let mut total = Point::identity();
    for b in buckets.iter().rev() {
        running += b;
        total += running;
    }
    total
}

fn window_size(n: usize) -> usize {
    match n {
        0..=15 => 3,
        16..=127 => 4,
        128..=1023 => 6,
        1024..=16383 => 8,
        _ => 10,
    }
}

/// Reads `width` bits (little-endian bit order) starting at `offset`.
fn get_bits(bytes: &[u8; 32], offset: usize, width: usize) -> usize {
    let mut v = 0usize;
    for i in 0..width {
        let bit = offset + i;
        if bit >= 256 {
            break;
        }
        if (bytes[bit / 8] >> (bit % 8)) & 1 == 1 {
            v |= 1 << i;
        }
    }
    v
}
