/// Per-stream seed: the base seed XOR a golden-ratio multiple of the stream
/// index, so streams `(s, i)` and `(s', i')` collide only when intended.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
