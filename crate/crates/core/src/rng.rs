//! Per-image random streams.
//!
//! Every image gets its own ChaCha8 stream keyed by the run seed and the image's
//! stable identifier, so results do not depend on which worker processes an image
//! or in what order. The 256-bit key is
//!
//! ```text
//! SHA-256("bboxcut/image-rng/v1" || 0x00 || seed as u64 little-endian || identifier bytes)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type ImageRng = ChaCha8Rng;

const IMAGE_DOMAIN: &[u8] = b"bboxcut/image-rng/v1";
const PREVIEW_DOMAIN: &[u8] = b"bboxcut/preview-rng/v1";

fn keyed(domain: &[u8], seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(domain);
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

pub fn derive_key(seed: u64, image_id: &str) -> [u8; 32] {
    keyed(IMAGE_DOMAIN, seed, image_id)
}

pub fn image_rng(seed: u64, image_id: &str) -> ImageRng {
    ChaCha8Rng::from_seed(derive_key(seed, image_id))
}

/// Stream used to pick preview samples; independent of every image stream.
pub fn preview_rng(seed: u64) -> ImageRng {
    ChaCha8Rng::from_seed(keyed(PREVIEW_DOMAIN, seed, ""))
}

/// Draws `u` from `(0, 1]`, so `u <= p` holds with probability exactly `p` and never
/// for `p = 0`.
pub(crate) fn unit_open_closed<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}
