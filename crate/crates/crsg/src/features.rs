//! Text and appearance features: hashed text embeddings, RGB color
//! histograms and the cosine similarity both are compared with.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::num::Real;

/// Default dimension of hashed text embeddings.
pub const DEFAULT_EMBED_DIM: usize = 64;
/// Default seed of the hashed text embedder.
pub const DEFAULT_EMBED_SEED: u64 = 42;
/// Default number of histogram bins per color channel.
pub const DEFAULT_HISTOGRAM_BINS: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("embedding needs a positive dimension and at least one token")]
    EmptyEmbedding,
    #[error("bins per channel must be at least 2 and divide 256, got {0}")]
    BadBinCount(usize),
    #[error("histograms use different bin counts ({0} vs {1})")]
    BinCountMismatch(usize, usize),
    #[error("swatch pixel data does not match width * height")]
    BadSwatch,
}

/// Fixed-dimension real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc + *v * *v)
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }
}

/// Cosine similarity, clamped into [-1, 1] against rounding drift.
pub fn cosine_similarity<T: Real>(
    a: &FeatureVector<T>,
    b: &FeatureVector<T>,
) -> Result<T, FeatureError> {
    if a.dim() != b.dim() {
        return Err(FeatureError::DimensionMismatch(a.dim(), b.dim()));
    }
    let na = a.norm();
    let nb = b.norm();
    if na == T::zero() || nb == T::zero() {
        return Err(FeatureError::ZeroVector);
    }
    Ok((a.dot(b) / (na * nb)).min(T::one()).max(-T::one()))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn token_unit_vector<T: Real>(token: &str, dim: usize, seed: u64) -> Vec<T> {
    let mixed = fnv1a(token.as_bytes()) ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        for x in &mut v {
            *x /= norm;
        }
    }
    v.into_iter().map(T::c).collect()
}

/// Deterministic stand-in for a sentence embedder: every token hashes to a
/// unit vector and the output is the renormalized mean. Tokens are summed in
/// sorted order, so any reordering of the same multiset produces the exact
/// same vector.
pub fn embed_text<T: Real>(
    tokens: &[String],
    dim: usize,
    seed: u64,
) -> Result<FeatureVector<T>, FeatureError> {
    if tokens.is_empty() || dim == 0 {
        return Err(FeatureError::EmptyEmbedding);
    }
    let mut sorted: Vec<&String> = tokens.iter().collect();
    sorted.sort();
    let mut acc = vec![T::zero(); dim];
    for token in sorted {
        for (slot, v) in acc.iter_mut().zip(token_unit_vector::<T>(token, dim, seed)) {
            *slot += v;
        }
    }
    let count = T::from_usize(tokens.len()).unwrap();
    for slot in &mut acc {
        *slot /= count;
    }
    let out = FeatureVector::new(acc);
    let norm = out.norm();
    if norm == T::zero() {
        return Err(FeatureError::ZeroVector);
    }
    Ok(FeatureVector::new(
        out.values.into_iter().map(|v| v / norm).collect(),
    ))
}

/// Lowercased alphanumeric tokens with leading articles dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && *t != "a" && *t != "an" && *t != "the")
        .map(str::to_string)
        .collect()
}

/// Small RGB image patch; pixels are row-major 8-bit RGB triplets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Swatch {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Swatch {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, FeatureError> {
        if width == 0 || height == 0 || pixels.len() != (width * height * 3) as usize {
            return Err(FeatureError::BadSwatch);
        }
        Ok(Self { width, height, pixels })
    }

    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self { width, height, pixels }
    }

    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    /// Mean color over all pixels.
    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut sums = [0.0f64; 3];
        for px in self.pixels.chunks_exact(3) {
            for c in 0..3 {
                sums[c] += f64::from(px[c]);
            }
        }
        let n = self.pixel_count() as f64;
        [sums[0] / n, sums[1] / n, sums[2] / n]
    }
}

#[derive(Serialize, Deserialize)]
struct SwatchWire {
    width: u32,
    height: u32,
    rgb_base64: String,
}

impl Serialize for Swatch {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SwatchWire {
            width: self.width,
            height: self.height,
            rgb_base64: BASE64.encode(&self.pixels),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Swatch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = SwatchWire::deserialize(deserializer)?;
        let pixels = BASE64
            .decode(wire.rgb_base64.as_bytes())
            .map_err(D::Error::custom)?;
        Swatch::new(wire.width, wire.height, pixels).map_err(D::Error::custom)
    }
}

/// Concatenated per-channel color histogram (R then G then B), normalized so
/// all entries sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbHistogram<T> {
    pub bins_per_channel: usize,
    pub bins: Vec<T>,
}

/// Histogram over `bins_per_channel` equal intensity intervals per channel;
/// a value v lands in bin `v / (256 / bins_per_channel)`.
pub fn rgb_histogram<T: Real>(
    swatch: &Swatch,
    bins_per_channel: usize,
) -> Result<RgbHistogram<T>, FeatureError> {
    if bins_per_channel < 2 || 256 % bins_per_channel != 0 {
        return Err(FeatureError::BadBinCount(bins_per_channel));
    }
    let bin_width = 256 / bins_per_channel;
    let mut counts = vec![0u64; 3 * bins_per_channel];
    for px in swatch.pixels.chunks_exact(3) {
        for c in 0..3 {
            let bin = px[c] as usize / bin_width;
            counts[c * bins_per_channel + bin] += 1;
        }
    }
    let total = T::from_usize(3 * swatch.pixel_count()).unwrap();
    Ok(RgbHistogram {
        bins_per_channel,
        bins: counts
            .into_iter()
            .map(|c| T::from_u64(c).unwrap() / total)
            .collect(),
    })
}

/// Cosine similarity between two histograms with equal bin counts.
pub fn histogram_similarity<T: Real>(
    a: &RgbHistogram<T>,
    b: &RgbHistogram<T>,
) -> Result<T, FeatureError> {
    if a.bins_per_channel != b.bins_per_channel {
        return Err(FeatureError::BinCountMismatch(
            a.bins_per_channel,
            b.bins_per_channel,
        ));
    }
    cosine_similarity(
        &FeatureVector::new(a.bins.clone()),
        &FeatureVector::new(b.bins.clone()),
    )
}
