//! Gaussian rate-distortion, reverse water-filling and the optimal
//! rate-limited channel.
//!
//! For a Gaussian component of variance `s2`, `R(D) = 0.5 log2(s2 / D)` and
//! `D(R) = s2 * 2^(-2R)`. Bits are handed out one at a time to the component
//! with the largest residual variance, each bit quartering it. The channel
//! then maps an encoder value `z_e` to
//!
//! ```text
//! z_d ~ Normal(mu_d, s2_d)
//! mu_d = z_e + 2^(-2R) (mu_e - z_e)
//! s2_d = 2^(-4R) (2^(2R) - 1) s2_e
//! ```
//!
//! so zero-rate components collapse to the prior mean and high-rate
//! components pass through unchanged.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::vae::LatentFrame;
use crate::{seed, Error, Result};

/// Rate in bits needed to reach distortion `d` on a source of variance `var`.
pub fn gaussian_rate(d: f64, var: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distortion must be > 0, got {d}"
        )));
    }
    if !(var >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance must be >= 0, got {var}"
        )));
    }
    Ok(if d <= var {
        0.5 * (var / d).log2()
    } else {
        0.0
    })
}

/// Minimal distortion at `rate` bits: `var * 2^(-2 rate)`.
pub fn distortion_at_rate(var: f64, rate: f64) -> f64 {
    debug_assert!(rate >= 0.0);
    var * (-2.0 * rate).exp2()
}

/// Integer bit allocation across latent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    pub pool: u64,
    pub bits: Vec<u32>,
    /// `variance[i] * 4^(-bits[i])`.
    pub residual_variances: Vec<f64>,
}

impl BitAllocation {
    pub fn total_bits(&self) -> u64 {
        self.bits.iter().map(|&b| b as u64).sum()
    }

    /// Sum of residual variances, the distortion the allocation achieves.
    pub fn distortion(&self) -> f64 {
        self.residual_variances.iter().sum()
    }
}

/// Residual variance in exact binary scientific form, `mant * 2^exp` with
/// `mant` in `[1, 2)`. Quartering only shifts `exp`, so ordering stays exact
/// no matter how many bits a component receives.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Energy {
    exp: i64,
    mant: f64,
    index: usize,
}

impl Energy {
    fn new(var: f64, index: usize) -> Self {
        debug_assert!(var > 0.0 && var.is_finite());
        let (mant, exp) = frexp(var);
        Energy { exp, mant, index }
    }
}

impl Eq for Energy {}

impl Ord for Energy {
    /// Larger energy first; equal energies favour the lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.exp
            .cmp(&other.exp)
            .then(self.mant.total_cmp(&other.mant))
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Energy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Split a positive finite float into `(mantissa in [1, 2), exponent)`.
fn frexp(x: f64) -> (f64, i64) {
    let mut bits = x.to_bits();
    let mut bias = 0;
    if (bits >> 52) & 0x7FF == 0 {
        // subnormal: renormalize first
        bits = (x * 2f64.powi(64)).to_bits();
        bias = 64;
    }
    let exp = ((bits >> 52) & 0x7FF) as i64 - 1023 - bias;
    let mant = f64::from_bits((bits & !(0x7FF << 52)) | (1023 << 52));
    (mant, exp)
}

/// Greedy reverse water-filling: each of `pool` bits goes to the component
/// with the largest residual variance (lowest index on ties), quartering it.
/// Zero-variance components never receive bits.
pub fn reverse_water_fill(variances: &[f64], pool: u64) -> Result<BitAllocation> {
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "variances must be finite and >= 0, got {v}"
        )));
    }
    let mut heap: BinaryHeap<Energy> = variances
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| Energy::new(v, i))
        .collect();
    if pool > 0 && heap.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "cannot place {pool} bits: every component has zero variance"
        )));
    }
    let mut bits = vec![0u32; variances.len()];
    for _ in 0..pool {
        let mut top = heap.pop().expect("heap is never emptied");
        bits[top.index] += 1;
        top.exp -= 2;
        heap.push(top);
    }
    let residual_variances = variances
        .iter()
        .zip(&bits)
        .map(|(&v, &b)| v * 0.25f64.powi(b as i32))
        .collect();
    Ok(BitAllocation {
        pool,
        bits,
        residual_variances,
    })
}

/// Mean and variance of the decoder-side Gaussian for one component.
///
/// Written as a convex combination so that rate 0 yields exactly `mu_e` and
/// very high rates exactly `z_e`.
pub fn channel_moments(z_e: f64, mu_e: f64, var_e: f64, rate: f64) -> (f64, f64) {
    let w = (-2.0 * rate).exp2();
    let mu_d = w * mu_e + (1.0 - w) * z_e;
    // 2^(-4R)(2^(2R) - 1) = w - w^2
    let var_d = (w - w * w) * var_e;
    (mu_d, var_d.max(0.0))
}

/// Pass one value through the rate-`rate` channel.
pub fn channel_transmit<R: Rng + ?Sized>(
    z_e: f64,
    mu_e: f64,
    var_e: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(rate >= 0.0 && var_e > 0.0);
    let (mu_d, var_d) = channel_moments(z_e, mu_e, var_e, rate);
    let e: f64 = rng.sample(StandardNormal);
    mu_d + var_d.sqrt() * e
}

/// Per-component prior of the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPrior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ChannelPrior {
    /// The VAE's unit prior.
    pub fn unit(dim: usize) -> Self {
        ChannelPrior {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    /// Empirical mean and variance of the frame means.
    pub fn empirical(frames: &[LatentFrame]) -> Result<Self> {
        let (mean, var) = crate::vae::latent_moments(frames)?;
        Ok(ChannelPrior { mean, var })
    }
}

/// Full channel description: prior and per-component rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub prior_mean: Vec<f64>,
    pub prior_var: Vec<f64>,
    pub rates: Vec<f64>,
}

impl ChannelSpec {
    pub fn new(prior: &ChannelPrior, alloc: &BitAllocation) -> Result<Self> {
        let n = alloc.bits.len();
        for (what, len) in [
            ("prior mean", prior.mean.len()),
            ("prior variance", prior.var.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(ChannelSpec {
            prior_mean: prior.mean.clone(),
            prior_var: prior.var.clone(),
            rates: alloc.bits.iter().map(|&b| b as f64).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    /// Transmit one vector. Zero-rate and zero-variance components emit the
    /// prior mean without consuming randomness.
    pub fn transmit<R: Rng + ?Sized>(&self, z_e: &[f64], rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut out = Vec::with_capacity(z_e.len());
        let mut var = Vec::with_capacity(z_e.len());
        for (i, &z) in z_e.iter().enumerate() {
            let (mu, s2, r) = (self.prior_mean[i], self.prior_var[i], self.rates[i]);
            if r == 0.0 || s2 <= 0.0 {
                out.push(mu);
                var.push(0.0);
            } else {
                out.push(channel_transmit(z, mu, s2, r, rng));
                var.push(channel_moments(z, mu, s2, r).1);
            }
        }
        (out, var)
    }
}

/// Which encoder output is fed into the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelInput {
    #[default]
    Mean,
    Sample,
}

/// Transmit every frame through the channel described by `alloc` and `prior`.
///
/// Frame `t` draws from its own ChaCha stream (`stream = bar_index`), so the
/// output does not depend on processing order. Output frames carry the
/// transmitted vector as both `mean` and `sample`, and the channel variance
/// as `var`.
pub fn transmit_sequence(
    frames: &[LatentFrame],
    alloc: &BitAllocation,
    prior: &ChannelPrior,
    input: ChannelInput,
    seed: u64,
) -> Result<Vec<LatentFrame>> {
    let spec = ChannelSpec::new(prior, alloc)?;
    for f in frames {
        if f.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                context: "transmitted frame",
                expected: spec.dim(),
                actual: f.dim(),
            });
        }
    }
    frames
        .par_iter()
        .map(|f| {
            let z_e = match (input, &f.sample) {
                (ChannelInput::Mean, _) => &f.mean,
                (ChannelInput::Sample, Some(s)) => s,
                (ChannelInput::Sample, None) => {
                    return Err(Error::InvalidArgument(format!(
                        "sample-path channel input but frame {} has no sample",
                        f.bar_index
                    )))
                }
            };
            let mut rng = seed::stream_rng(seed, f.bar_index as u64);
            let (z_d, var) = spec.transmit(z_e, &mut rng);
            Ok(LatentFrame {
                mean: z_d.clone(),
                var,
                sample: Some(z_d),
                bar_index: f.bar_index,
            })
        })
        .collect()
}
