//! Fiat-Shamir transcript: SHA-256 chaining with length-prefixed framing.
//!
//! Every absorbed message is framed as (op tag, 8-byte big-endian label
//! length, label, 8-byte big-endian data length, data) and folded into a
//! 32-byte running state. Challenges hash the state under a distinct op tag
//! and reduce 64 bytes into the field, then advance the state so repeated
//! draws differ. Both sides must issue identical absorb/challenge sequences;
//! any divergence (reordering, relabeling, reframing) changes every later
//! challenge.

use crate::field::{from_uniform, Scalar};
use sha2::{Digest, Sha256};

const OP_ABSORB: u8 = 1;
const OP_CHALLENGE: u8 = 2;

#[derive(Debug, Clone)]
pub struct Transcript {
    state: [u8; 32],
}

impl Transcript {
    /// Starts a session under a domain tag (e.g. "zkdl/v1/session").
    pub fn new(domain: &str) -> Self {
        let mut h = Sha256::new();
        h.update((domain.len() as u64).to_be_bytes());
        h.update(domain.as_bytes());
        Transcript { state: h.finalize().into() }
    }

    fn fold(&mut self, op: u8, label: &str, data: &[u8]) {
        let mut h = Sha256::new();
        h.update(self.state);
        h.update([op]);
        h.update((label.len() as u64).to_be_bytes());
        h.update(label.as_bytes());
        h.update((data.len() as u64).to_be_bytes());
        h.update(data);
        self.state = h.finalize().into();
    }

    pub fn absorb_bytes(&mut self, label: &str, data: &[u8]) {
        self.fold(OP_ABSORB, label, data);
    }

    pub fn absorb_scalar(&mut self, label: &str, s: &Scalar) {
        self.absorb_bytes(label, &crate::field::to_bytes(s));
    }

    pub fn absorb_scalars(&mut self, label: &str, ss: &[Scalar]) {
        let mut buf = Vec::with_capacity(ss.len() * 32);
        for s in ss {
            buf.extend_from_slice(&crate::field::to_bytes(s));
        }
        self.absorb_bytes(label, &buf);
    }

    pub fn absorb_u64(&mut self, label: &str, v: u64) {
        self.absorb_bytes(label, &v.to_be_bytes());
    }

    /// Draws one field challenge; reduces 64 bytes so the bias is negligible.
    pub fn challenge_scalar(&mut self, label: &str) -> Scalar {
        self.fold(OP_CHALLENGE, label, &[]);
        let mut wide = [0u8; 64];
        let mut h0 = Sha256::new();
        h0.update(self.state);
        h0.update([0u8]);
        wide[..32].copy_from_slice(&h0.finalize());
        let mut h1 = Sha256::new();
        h1.update(self.state);
        h1.update([1u8]);
        wide[32..].copy_from_slice(&h1.finalize());
        from_uniform(&wide)
    }

    /// Draws a vector of challenges under indexed labels.
    pub fn challenge_point(&mut self, label: &str, n: usize) -> Vec<Scalar> {
        (0..n).map(|i| self.challenge_scalar(&format!("{label}/{i}"))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_schedule_same_challenges() {
        let run = || {
            let mut t = Transcript::new("zkdl/v1/test");
            t.absorb_bytes("a", b"hello");
            t.absorb_u64("b", 42);
            (t.challenge_scalar("c"), t.challenge_scalar("d"))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn framing_separates_label_and_data() {
        let mut t1 = Transcript::new("zkdl/v1/test");
        t1.absorb_bytes("ab", b"c");
        let mut t2 = Transcript::new("zkdl/v1/test");
        t2.absorb_bytes("a", b"bc");
        assert_ne!(t1.challenge_scalar("x"), t2.challenge_scalar("x"));
    }

    #[test]
    fn order_matters() {
        let mut t1 = Transcript::new("zkdl/v1/test");
        t1.absorb_bytes("a", b"1");
        t1.absorb_bytes("b", b"2");
        let mut t2 = Transcript::new("zkdl/v1/test");
        t2.absorb_bytes("b", b"2");
        t2.absorb_bytes("a", b"1");
        assert_ne!(t1.challenge_scalar("x"), t2.challenge_scalar("x"));
    }

    #[test]
    fn repeated_challenges_differ() {
        let mut t = Transcript::new("zkdl/v1/test");
        t.absorb_bytes("a", b"1");
        let c1 = t.challenge_scalar("c");
        let c2 = t.challenge_scalar("c");
        assert_ne!(c1, c2);
    }

    #[test]
    fn domain_separates_sessions() {
        let mut t1 = Transcript::new("zkdl/v1/one");
        let mut t2 = Transcript::new("zkdl/v1/two");
        assert_ne!(t1.challenge_scalar("x"), t2.challenge_scalar("x"));
    }

    #[test]
    fn challenge_point_draws_indexed() {
        let mut t = Transcript::new("zkdl/v1/test");
        let p = t.challenge_point("u", 4);
        assert_eq!(p.len(), 4);
        assert!(p.windows(2).all(|w| w[0] != w[1]));
    }
}
