//! Scalar field arithmetic and the signed-integer embedding.
//!
//! All committed data and all sumcheck messages live in the scalar field of
//! the Pallas curve (modulus ~2^254.5). Trainer-side integers are embedded
//! two's-complement style: a negative value maps to its additive inverse, so
//! integer arithmetic commutes with field arithmetic as long as magnitudes
//! stay below the lift bound.

use ff::{Field, FromUniformBytes, PrimeField};
use pasta_curves::pallas;

/// Field element carrying all proof-side arithmetic (Pallas scalar field).
pub type Scalar = pallas::Scalar;

/// Largest magnitude that `lift` will recover. Signed values strictly inside
/// (-2^127, 2^127) round-trip through `embed`/`lift`; quantized tensors stay
/// far below this (entries are range-checked to Q+R <= 62 bits).
pub const LIFT_BITS: u32 = 127;

/// Embeds a signed integer into the field; negatives map to p - |v|.
pub fn embed(v: i128) -> Scalar {
    if v >= 0 {
        Scalar::from_u128(v as u128)
    } else {
        -Scalar::from_u128(v.unsigned_abs())
    }
}

/// Embeds a signed 64-bit integer (common case for tensor entries).
pub fn embed_i64(v: i64) -> Scalar {
    embed(v as i128)
}

/// Recovers the signed integer a field element embeds, if its magnitude is
/// below 2^127. Returns `None` for anything outside that window.
pub fn lift(s: &Scalar) -> Option<i128> {
    if let Some(v) = lift_nonneg(s) {
        return Some(v);
    }
    lift_nonneg(&(-*s)).map(|v| -v)
}

fn lift_nonneg(s: &Scalar) -> Option<i128> {
    let bytes = s.to_repr();
    let b = bytes.as_ref();
    if b[16..].iter().any(|&x| x != 0) {
        return None;
    }
    let mut lo = [0u8; 16];
    lo.copy_from_slice(&b[..16]);
    let v = u128::from_le_bytes(lo);
    if v < (1u128 << LIFT_BITS) {
        Some(v as i128)
    } else {
        None
    }
}

/// Multiplicative inverse; `None` for zero.
pub fn inv(s: &Scalar) -> Option<Scalar> {
    let r = s.invert();
    if bool::from(r.is_some()) {
        Some(r.unwrap())
    } else {
        None
    }
}

/// Canonical 32-byte little-endian encoding.
pub fn to_bytes(s: &Scalar) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(s.to_repr().as_ref());
    out
}

/// Decodes a canonical 32-byte encoding; rejects values >= the modulus.
pub fn from_bytes(b: &[u8; 32]) -> Option<Scalar> {
    let r = Scalar::from_repr(*b);
    if bool::from(r.is_some()) {
        Some(r.unwrap())
    } else {
        None
    }
}

/// Reduces 64 uniform bytes into the field (used for transcript challenges:
/// the bias relative to uniform is ~2^-256).
pub fn from_uniform(bytes: &[u8; 64]) -> Scalar {
    Scalar::from_uniform_bytes(bytes)
}

/// Inverse of two, used when reconstructing the constant coefficient of an
/// untwisted sumcheck round from the running claim.
pub fn inv2() -> Scalar {
    inv(&Scalar::from(2u64)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn embed_respects_addition_and_multiplication() {
        let cases: &[(i128, i128)] = &[
            (0, 0),
            (1, -1),
            (12345, -9876),
            (-(1 << 62), (1 << 62) - 1),
            (987654321, 123456789),
        ];
        for &(a, b) in cases {
            assert_eq!(embed(a) + embed(b), embed(a + b));
            assert_eq!(embed(a) * embed(b), embed(a * b));
            assert_eq!(-embed(a), embed(-a));
        }
    }

    #[test]
    fn lift_inverts_embed_within_bound() {
        for v in [0i128, 1, -1, 42, -42, (1 << 62) - 1, -(1 << 62), (1 << 126), -(1 << 126)] {
            assert_eq!(lift(&embed(v)), Some(v));
        }
    }

    #[test]
    fn lift_rejects_large_values() {
        // Half the modulus is far outside the signed window.
        let big = Scalar::from_u128(u128::MAX) * Scalar::from_u128(u128::MAX);
        assert_eq!(lift(&big), None);
    }

    #[test]
    fn serialization_round_trips_and_rejects_non_canonical() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..32 {
            let s = Scalar::random(&mut rng);
            let b = to_bytes(&s);
            assert_eq!(from_bytes(&b), Some(s));
        }
        // The modulus itself, modulus + 1, and all-ones are all non-canonical.
        let p_bytes: [u8; 32] = {
            // p = -1 + 1: encode p-1 then add one manually.
            let mut b = to_bytes(&(-Scalar::ONE));
            let mut carry = 1u16;
            for x in b.iter_mut() {
                let v = *x as u16 + carry;
                *x = v as u8;
                carry = v >> 8;
            }
            b
        };
        assert_eq!(from_bytes(&p_bytes), None);
        let mut p_plus = p_bytes;
        p_plus[0] = p_plus[0].wrapping_add(1);
        assert_eq!(from_bytes(&p_plus), None);
        assert_eq!(from_bytes(&[0xffu8; 32]), None);
    }

    #[test]
    fn inverse_of_zero_is_error() {
        assert_eq!(inv(&Scalar::ZERO), None);
        let s = Scalar::from(17u64);
        assert_eq!(s * inv(&s).unwrap(), Scalar::ONE);
    }

    proptest! {
        #[test]
        fn field_axioms_hold(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let (x, y, z) = (Scalar::from(a), Scalar::from(b), Scalar::from(c));
            prop_assert_eq!((x * y) * z, x * (y * z));
            prop_assert_eq!(x * y, y * x);
            prop_assert_eq!(x * (y + z), x * y + x * z);
        }

        #[test]
        fn embed_lift_round_trip(v in any::<i64>()) {
            prop_assert_eq!(lift(&embed_i64(v)), Some(v as i128));
        }
    }
}
