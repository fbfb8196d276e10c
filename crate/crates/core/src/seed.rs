//! Deterministic seed derivation. Every randomised operation takes a master
//! seed plus a stable tag; sub-tasks derive their own seeds so parallel
//! evaluation cannot perturb results.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rat::{rat_int, Rat};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, tag, index)`. Stable across platforms
/// and releases; reports produced from the same inputs are byte-identical.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(master ^ 0x736565642d746167);
    for &b in tag.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// RNG for a derived seed.
pub fn rng_for(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}

/// Random nonzero rational with numerator and denominator bounded by `bound`
/// in absolute value. `bound` escalates at call sites that hit degeneracies.
pub fn random_rat(rng: &mut ChaCha8Rng, bound: i64) -> Rat {
    let bound = bound.max(1);
    let numer = loop {
        let n = rng.gen_range(-bound..=bound);
        if n != 0 {
            break n;
        }
    };
    let denom = rng.gen_range(1..=bound);
    Rat::new(numer.into(), denom.into())
}

/// Random rational that may be zero.
pub fn random_rat_or_zero(rng: &mut ChaCha8Rng, bound: i64) -> Rat {
    let bound = bound.max(1);
    let numer = rng.gen_range(-bound..=bound);
    if numer == 0 {
        return rat_int(0);
    }
    let denom = rng.gen_range(1..=bound);
    Rat::new(numer.into(), denom.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, "audit", 0);
        assert_eq!(a, derive_seed(42, "audit", 0));
        assert_ne!(a, derive_seed(42, "audit", 1));
        assert_ne!(a, derive_seed(42, "amalgam", 0));
        assert_ne!(a, derive_seed(43, "audit", 0));
    }

    #[test]
    fn random_rat_respects_bound() {
        let mut rng = rng_for(7, "t", 0);
        for _ in 0..200 {
            let r = random_rat(&mut rng, 10);
            assert!(!num_traits::Zero::is_zero(&r));
            assert!(r.numer().magnitude() <= &10u32.into());
            assert!(r.denom().magnitude() <= &10u32.into());
        }
    }
}
