use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SplashRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`; streams never overlap.
pub fn seeded(seed: u64, stream: u64) -> SplashRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a purpose tag into a seed so that different consumers of the same
/// user seed draw from unrelated sequences.
pub fn derive(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Global seed override from `SPLASH_SEED`.
pub fn seed_override() -> Option<u64> {
    std::env::var("SPLASH_SEED").ok()?.parse().ok()
}
