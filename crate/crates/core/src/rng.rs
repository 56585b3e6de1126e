//! Seeded counter-based random streams.
//!
//! Every random draw in the crate goes through [`stream`], so a run is fixed by its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids keep unrelated consumers of one seed independent.
pub mod streams {
    pub const SAMPLING: u64 = 1;
    pub const SOBOL_SCRAMBLE: u64 = 2;
    pub const DISK_RESTARTS: u64 = 3;
    pub const PROBES: u64 = 4;
    pub const BOUNDARY: u64 = 5;
}

/// ChaCha8 keyed by `seed`, positioned on stream `id`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Sub-stream for chunk `chunk` of a parallel loop on stream `id`.
pub fn chunk_stream(seed: u64, id: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = stream(seed, id);
    rng.set_word_pos(u128::from(chunk) << 32);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 1), |r, _: u64| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 1), |r, _: u64| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 2), |r, _: u64| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let d: u64 = chunk_stream(7, 1, 3).random();
        let e: u64 = chunk_stream(7, 1, 3).random();
        assert_eq!(d, e);
    }
}
