//! Deterministic synthetic feature encoders.
//!
//! `PatchEncoder` is a seeded random projection of flattened pixel patches,
//! which preserves distinguishability well enough for retrieval experiments
//! without any training. `SentenceEncoder` is a signed-hash bag-of-words
//! embedding: each token hashes to one coordinate and a sign, the sum is
//! L2-normalized. Both are bit-reproducible for a fixed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::roi::ImageTensor;

/// Seeded random-projection encoder for image patches.
#[derive(Debug, Clone)]
pub struct PatchEncoder {
    projection: Matrix,
    patch_size: usize,
    channels: usize,
    pub seed: u64,
}

impl PatchEncoder {
    /// Projection entries are drawn from N(0, 1/in_dim) where
    /// `in_dim = patch_size^2 * channels`, so projected norms stay near the
    /// input norms.
    pub fn new(out_dim: usize, patch_size: usize, channels: usize, seed: u64) -> Result<Self> {
        if out_dim == 0 || patch_size == 0 || channels == 0 {
            return Err(Error::InvalidInput("encoder dimensions must be positive".into()));
        }
        let in_dim = patch_size * patch_size * channels;
        let sigma = 1.0 / (in_dim as f64).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, sigma).expect("valid normal");
        let data: Vec<f64> = (0..out_dim * in_dim).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self {
            projection: Matrix::new(out_dim, in_dim, data)?,
            patch_size,
            channels,
            seed,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.projection.rows()
    }

    /// Encodes every patch of the image, one feature row per patch in
    /// row-major patch order.
    pub fn encode_patches(&self, image: &ImageTensor) -> Result<Matrix> {
        if image.channels() != self.channels {
            return Err(Error::Dimension(format!(
                "image has {} channels, encoder expects {}",
                image.channels(),
                self.channels
            )));
        }
        let ps = self.patch_size;
        if !image.height().is_multiple_of(ps) || !image.width().is_multiple_of(ps) {
            return Err(Error::Dimension(format!(
                "image {}x{} not divisible into {ps}x{ps} patches",
                image.height(),
                image.width()
            )));
        }
        let grid_rows = image.height() / ps;
        let grid_cols = image.width() / ps;
        let in_dim = ps * ps * self.channels;
        let mut rows = Vec::with_capacity(grid_rows * grid_cols);
        let mut flat = vec![0.0; in_dim];
        for pr in 0..grid_rows {
            for pc in 0..grid_cols {
                let mut i = 0;
                for py in 0..ps {
                    for px in 0..ps {
                        for c in 0..self.channels {
                            flat[i] = image.get(pr * ps + py, pc * ps + px, c);
                            i += 1;
                        }
                    }
                }
                rows.push(self.projection.matvec(&Vector::new(flat.clone())?)?);
            }
        }
        Matrix::from_rows(&rows)
    }

    /// Mean of the patch feature rows, the pooled representation used for
    /// classification.
    pub fn pool(features: &Matrix) -> Vector {
        let mut out = vec![0.0; features.cols()];
        for r in 0..features.rows() {
            for (o, v) in out.iter_mut().zip(features.row(r)) {
                *o += v;
            }
        }
        let n = features.rows() as f64;
        Vector::new(out.into_iter().map(|v| v / n).collect()).expect("finite pooled feature")
    }
}

/// Signed-hash bag-of-words sentence encoder.
#[derive(Debug, Clone)]
pub struct SentenceEncoder {
    pub dim: usize,
    pub hash_seed: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_token(token: &str, seed: u64) -> u64 {
    // FNV-1a over the bytes, then a splitmix finalizer for good high bits.
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(h)
}

impl SentenceEncoder {
    pub fn new(dim: usize, hash_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("sentence encoder dimension must be positive".into()));
        }
        Ok(Self { dim, hash_seed })
    }

    /// Case-folded, whitespace-tokenized signed-hash embedding, L2-normalized.
    /// Token order does not matter.
    pub fn encode(&self, text: &str) -> Result<Vector> {
        let mut acc = vec![0.0f64; self.dim];
        let mut tokens = 0usize;
        for token in text.to_lowercase().split_whitespace() {
            tokens += 1;
            let h = hash_token(token, self.hash_seed);
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            acc[idx] += sign;
        }
        if tokens == 0 {
            return Err(Error::InvalidInput("cannot encode an empty sentence".into()));
        }
        let norm: f64 = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(
                "sentence tokens cancelled to the zero vector".into(),
            ));
        }
        Vector::new(acc.into_iter().map(|v| v / norm).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cosine, norm};

    #[test]
    fn patch_encoding_is_linear_and_deterministic() {
        let enc = PatchEncoder::new(8, 4, 1, 99).unwrap();
        let pixels: Vec<f64> = (0..8 * 8).map(|i| (i % 7) as f64 / 10.0).collect();
        let img = ImageTensor::new(8, 8, 1, pixels.clone()).unwrap();
        let feats = enc.encode_patches(&img).unwrap();
        assert_eq!(feats.rows(), 4);
        assert_eq!(feats.cols(), 8);

        // Zero image encodes to zero.
        let zero = ImageTensor::zeros(8, 8, 1);
        let zf = enc.encode_patches(&zero).unwrap();
        assert!(zf.as_slice().iter().all(|v| *v == 0.0));

        // Scaling the image scales the features.
        let half = ImageTensor::new(8, 8, 1, pixels.iter().map(|p| p * 0.5).collect()).unwrap();
        let hf = enc.encode_patches(&half).unwrap();
        for (a, b) in hf.as_slice().iter().zip(feats.as_slice()) {
            assert!((a - 0.5 * b).abs() < 1e-12);
        }

        // Same seed, same image, identical bits.
        let enc2 = PatchEncoder::new(8, 4, 1, 99).unwrap();
        assert_eq!(enc2.encode_patches(&img).unwrap(), feats);
    }

    #[test]
    fn sentence_encoding_is_a_normalized_bag_of_words() {
        let enc = SentenceEncoder::new(256, 7).unwrap();
        let a = enc.encode("Opacity in the left lung").unwrap();
        let b = enc.encode("opacity in the left lung").unwrap();
        assert_eq!(a, b);
        let shuffled = enc.encode("lung left the in Opacity").unwrap();
        assert_eq!(a, shuffled);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        assert!(enc.encode("   ").is_err());
    }

    #[test]
    fn distinct_disease_terms_are_dissimilar() {
        let enc = SentenceEncoder::new(768, 0).unwrap();
        let a = enc.encode("cardiomegaly").unwrap();
        let b = enc.encode("pneumothorax").unwrap();
        let c = cosine(&a, &b).unwrap();
        assert!(c.abs() < 0.5, "cosine={c}");
    }
}
