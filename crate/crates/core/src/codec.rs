//! Berrut-style rational encoding with random masks, and approximate decoding
//! from any nonempty subset of returned results.
//!
//! Encoding evaluates, at each worker's evaluation point `α_i`,
//!
//! ```text
//! u(z) = Σ_j  ((-1)^j / (z - β_j)) / Γ(z) · B_j,   Γ(z) = Σ_j (-1)^j / (z - β_j)
//! ```
//!
//! over the `K` data blocks followed by the `T` masks (`j = 0..K+T`), so
//! `u(β_j) = B_j`. Decoding applies the same alternating-sign barycentric
//! interpolant to the returned `(α_i, f(u(α_i)))` pairs and evaluates it at the
//! data anchors `β_0..β_{K-1}`. There is no recovery threshold: one returned
//! result already yields an (approximate) answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::realmat::RealMatrix;

/// Distance below which an evaluation point is treated as sitting on a node.
pub const NODE_GUARD: f64 = 1e-9;

/// Minimum distance required between any evaluation point and any anchor.
pub const MIN_SEPARATION: f64 = 1e-6;

/// How the decoder assigns the alternating sign to each returned point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SignConvention {
    /// Sign `(-1)^r` where `r` is the rank of `α_i` among the returned points
    /// in increasing order. This keeps the interpolant free of real poles for
    /// every returned subset.
    #[default]
    SortedRank,
    /// Sign `(-1)^i` keyed to the worker's global index. Poles appear between
    /// same-sign neighbours once an interior worker is missing.
    GlobalIndex,
}

/// Public description of a code: worker count, data blocks, mask count and the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecConfig {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub signs: SignConvention,
}

fn distinct(values: &[f64]) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[0] != w[1])
}

fn min_cross_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x - y).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// `n` Chebyshev points of the first kind on `[-1, 1]`, with the angular
/// parameter shifted by `shift` grid cells. Written with `sin` so the middle
/// node of an odd count is exactly zero.
fn chebyshev(n: usize, shift: f64) -> Vec<f64> {
    let n_f = n as f64;
    (0..n)
        .map(|i| {
            let t = (n_f - 1.0 - 2.0 * (i as f64 + shift)) / (2.0 * n_f);
            (std::f64::consts::PI * t).sin()
        })
        .collect()
}

impl CodecConfig {
    pub fn new(n: usize, k: usize, t: usize, beta: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        let cfg = Self { n, k, t, beta, alpha, signs: SignConvention::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_signs(mut self, signs: SignConvention) -> Self {
        self.signs = signs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(format!("need N ≥ 1 and K ≥ 1, got N={} K={}", self.n, self.k)));
        }
        if self.beta.len() != self.k + self.t {
            return Err(Error::InvalidConfig(format!(
                "expected {} anchors, got {}",
                self.k + self.t,
                self.beta.len()
            )));
        }
        if self.alpha.len() != self.n {
            return Err(Error::InvalidConfig(format!(
                "expected {} evaluation points, got {}",
                self.n,
                self.alpha.len()
            )));
        }
        if self.beta.iter().chain(&self.alpha).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite node".into()));
        }
        if !distinct(&self.beta) || !distinct(&self.alpha) {
            return Err(Error::InvalidConfig("anchors and evaluation points must be pairwise distinct".into()));
        }
        let gap = min_cross_distance(&self.alpha, &self.beta);
        if gap <= NODE_GUARD {
            return Err(Error::InvalidConfig(format!(
                "an evaluation point touches an anchor (distance {gap:e})"
            )));
        }
        Ok(())
    }

    /// Chebyshev anchors for `K+T` points and Chebyshev evaluation points for
    /// `N`, the latter shifted along the angle grid until every `α` is more
    /// than [`MIN_SEPARATION`] from every `β`.
    pub fn default_anchors(n: usize, k: usize, t: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidConfig(format!("need N ≥ 1 and K ≥ 1, got N={n} K={k}")));
        }
        let beta = chebyshev(k + t, 0.0);
        const SHIFTS: [f64; 9] = [0.0, 0.25, -0.25, 0.125, -0.125, 0.375, -0.375, 0.0625, -0.0625];
        for shift in SHIFTS {
            let alpha = chebyshev(n, shift);
            if min_cross_distance(&alpha, &beta) > MIN_SEPARATION && distinct(&alpha) {
                return Self::new(n, k, t, beta, alpha);
            }
        }
        Err(Error::InvalidConfig(format!(
            "no separated evaluation grid for N={n}, K+T={}",
            k + t
        )))
    }

    pub fn data_anchors(&self) -> &[f64] {
        &self.beta[..self.k]
    }
}

/// Weights `((-1)^j/(z-β_j)) / Γ(z)` of the encoder at `z`. When `z` lies
/// within [`NODE_GUARD`] of an anchor the weight vector is the unit vector of
/// that anchor.
pub fn encoder_weights(beta: &[f64], z: f64) -> Result<Vec<f64>> {
    if let Some(j) = beta.iter().position(|b| (z - b).abs() < NODE_GUARD) {
        let mut w = vec![0.0; beta.len()];
        w[j] = 1.0;
        return Ok(w);
    }
    let terms: Vec<f64> = beta
        .iter()
        .enumerate()
        .map(|(j, b)| alternating(j) / (z - b))
        .collect();
    normalize(terms, z)
}

fn alternating(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Compensated (Neumaier) sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn normalize(terms: Vec<f64>, z: f64) -> Result<Vec<f64>> {
    let denom = compensated_sum(terms.iter().copied());
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Numerical(format!("interpolant denominator vanishes at z = {z}")));
    }
    Ok(terms.into_iter().map(|t| t / denom).collect())
}

fn combine(weights: &[f64], mats: &[&RealMatrix]) -> Result<RealMatrix> {
    let (rows, cols) = mats[0].shape();
    let mut acc = RealMatrix::zeros(rows, cols);
    for (w, m) in weights.iter().zip(mats) {
        if *w != 0.0 {
            acc.axpy(*w, m);
        }
    }
    if !acc.is_finite() {
        return Err(Error::Numerical("combination produced a non-finite entry".into()));
    }
    Ok(acc)
}

/// Evaluates the encoding polynomial `u(z)` over `blocks ++ masks`.
pub fn evaluate_encoder(blocks: &[RealMatrix], masks: &[RealMatrix], beta: &[f64], z: f64) -> Result<RealMatrix> {
    let all: Vec<&RealMatrix> = blocks.iter().chain(masks).collect();
    if all.len() != beta.len() || all.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} matrices for {} anchors",
            all.len(),
            beta.len()
        )));
    }
    let shape = all[0].shape();
    if let Some(bad) = all.iter().find(|m| m.shape() != shape) {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            bad.rows(),
            bad.cols(),
            shape.0,
            shape.1
        )));
    }
    combine(&encoder_weights(beta, z)?, &all)
}

/// One worker's encoded input `u(α_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedShare {
    pub worker_index: usize,
    pub payload: RealMatrix,
}

/// A worker's result `f(u(α_i))` as received by the master.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnedResult {
    pub worker_index: usize,
    pub payload: RealMatrix,
}

/// Encodes `K` blocks and `T` masks into one share per worker.
pub fn encode(blocks: &[RealMatrix], masks: &[RealMatrix], cfg: &CodecConfig) -> Result<Vec<EncodedShare>> {
    cfg.validate()?;
    if blocks.len() != cfg.k || masks.len() != cfg.t {
        return Err(Error::InvalidArgument(format!(
            "expected {} blocks and {} masks, got {} and {}",
            cfg.k,
            cfg.t,
            blocks.len(),
            masks.len()
        )));
    }
    cfg.alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            Ok(EncodedShare { worker_index: i, payload: evaluate_encoder(blocks, masks, &cfg.beta, a)? })
        })
        .collect()
}

/// `T` masks with entries i.i.d. uniform on `[-mask_scale, mask_scale]`.
pub fn gen_masks(t: usize, rows: usize, cols: usize, mask_scale: f64, seed: u64) -> Vec<RealMatrix> {
    gen_masks_with(t, rows, cols, mask_scale, &mut ChaCha20Rng::seed_from_u64(seed))
}

pub fn gen_masks_with<R: Rng + ?Sized>(
    t: usize,
    rows: usize,
    cols: usize,
    mask_scale: f64,
    rng: &mut R,
) -> Vec<RealMatrix> {
    (0..t)
        .map(|_| {
            RealMatrix::from_fn(rows, cols, |_, _| {
                if mask_scale > 0.0 {
                    rng.gen_range(-mask_scale..=mask_scale)
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Decoder weights over the given worker indices at target `z`. Indices must
/// be distinct and below `N`; order of the returned weights follows `indices`.
pub fn decode_weights(indices: &[usize], cfg: &CodecConfig, z: f64) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::InsufficientData("no results to decode from".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= cfg.n) {
        return Err(Error::InvalidArgument(format!("worker index {bad} out of range for N={}", cfg.n)));
    }
    let mut seen = vec![false; cfg.n];
    for &i in indices {
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!("worker index {i} returned twice")));
        }
    }
    if let Some(pos) = indices.iter().position(|&i| (z - cfg.alpha[i]).abs() < NODE_GUARD) {
        let mut w = vec![0.0; indices.len()];
        w[pos] = 1.0;
        return Ok(w);
    }
    let signs: Vec<f64> = match cfg.signs {
        SignConvention::GlobalIndex => indices.iter().map(|&i| alternating(i)).collect(),
        SignConvention::SortedRank => {
            let mut order: Vec<usize> = (0..indices.len()).collect();
            order.sort_by(|&a, &b| cfg.alpha[indices[a]].total_cmp(&cfg.alpha[indices[b]]));
            let mut s = vec![0.0; indices.len()];
            for (rank, &pos) in order.iter().enumerate() {
                s[pos] = alternating(rank);
            }
            s
        }
    };
    let terms = indices
        .iter()
        .zip(&signs)
        .map(|(&i, s)| s / (z - cfg.alpha[i]))
        .collect();
    normalize(terms, z)
}

/// Evaluates the decoding interpolant at each target. Results are combined
/// in worker-index order, so arrival order does not affect the output.
pub fn decode(results: &[ReturnedResult], cfg: &CodecConfig, targets: &[f64]) -> Result<Vec<RealMatrix>> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no results to decode from".into()));
    }
    let mut sorted: Vec<&ReturnedResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.worker_index);
    let shape = sorted[0].payload.shape();
    if let Some(bad) = sorted.iter().find(|r| r.payload.shape() != shape) {
        return Err(Error::InvalidArgument(format!(
            "result from worker {} has shape {}x{}, expected {}x{}",
            bad.worker_index,
            bad.payload.rows(),
            bad.payload.cols(),
            shape.0,
            shape.1
        )));
    }
    let indices: Vec<usize> = sorted.iter().map(|r| r.worker_index).collect();
    let mats: Vec<&RealMatrix> = sorted.iter().map(|r| &r.payload).collect();
    targets
        .iter()
        .map(|&z| combine(&decode_weights(&indices, cfg, z)?, &mats))
        .collect()
}

/// Approximations of `f(X_j)` for the `K` data blocks: decoding at `β_0..β_{K-1}`.
pub fn recover(results: &[ReturnedResult], cfg: &CodecConfig) -> Result<Vec<RealMatrix>> {
    decode(results, cfg, cfg.data_anchors())
}
