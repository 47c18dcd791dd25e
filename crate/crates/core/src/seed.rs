//! Sub-seed derivation so that independent random streams (map layout,
//! engine, each agent, each league episode) never share state.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for a named stream.
pub fn derive(seed: u64, stream: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(stream)))
}

/// Seed for the `index`-th member of a named stream.
pub fn derive_indexed(seed: u64, stream: &str, index: u64) -> u64 {
    splitmix64(derive(seed, stream) ^ splitmix64(index.wrapping_add(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(derive(1, "map"), derive(1, "engine"));
        assert_ne!(derive(1, "map"), derive(2, "map"));
        assert_ne!(derive_indexed(1, "agent", 0), derive_indexed(1, "agent", 1));
        assert_eq!(derive(5, "x"), derive(5, "x"));
    }
}
