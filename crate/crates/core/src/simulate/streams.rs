use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// An independent generator for the task identified by `keys` under `master`.
///
/// The keys are folded into a 256-bit ChaCha key with SplitMix64, so the stream depends
/// only on `(master, keys)` and never on scheduling or thread count.
pub fn stream_rng(master: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(master);
    for &k in keys {
        state = splitmix64(state ^ splitmix64(k.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(state.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(1, &[2, 3]), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(1, &[2, 3]), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        let mut c = stream_rng(1, &[3, 2]);
        let mut d = stream_rng(2, &[2, 3]);
        assert_ne!(a[0], c.random::<u64>());
        assert_ne!(a[0], d.random::<u64>());
    }
}
