use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenseVector, EmbeddingProvider, EncoderError, EncoderProfile};
use crate::lexical::tokenize;

/// Deterministic offline encoder.
///
/// Each token seeds a ChaCha stream (via FNV-1a of its bytes) that yields a
/// fixed pseudo-random unit direction; a text embeds to the normalized sum of
/// its token directions. Shared tokens therefore raise cosine similarity.
pub struct HashedEncoder {
    profile: EncoderProfile,
}

impl HashedEncoder {
    pub fn new(profile: EncoderProfile) -> Self {
        Self { profile }
    }
}

impl EmbeddingProvider for HashedEncoder {
    fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncoderError> {
        Ok(texts
            .iter()
            .map(|t| test_encoder(self.profile.dim, t).into_inner())
            .collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

fn token_direction(dim: usize, token: &str) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Embeds `text` with the hashed-token construction; empty text maps to zero.
pub fn test_encoder(dim: usize, text: &str) -> DenseVector {
    let mut sum = vec![0.0; dim];
    for token in tokenize(text) {
        for (acc, x) in sum.iter_mut().zip(token_direction(dim, &token)) {
            *acc += x;
        }
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        sum.iter_mut().for_each(|x| *x /= norm);
    } else {
        sum.iter_mut().for_each(|x| *x = 0.0);
    }
    DenseVector::new(sum)
}
