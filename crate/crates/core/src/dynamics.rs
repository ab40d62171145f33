//! Per-rate information dynamics of a single piece.
//!
//! For each bit budget the full-rate latent sequence is degraded through the
//! rate-limited channel, the degraded sequence is analysed with a threshold
//! sweep over Variable Markov Oracles, and the degraded past is scored
//! against the full-rate present with the MI critic. The surprisal profile is
//! the per-bar information rate minus that constant predictive term.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::midi::BarVector;
use crate::mine::{self, MIEstimate, MineConfig};
use crate::rate::{self, BitAllocation, ChannelInput, ChannelPrior};
use crate::vae::{self, LatentFrame, VaeParams};
use crate::vmo;
use crate::{seed, Error, Result};

pub const SCHEMA_VERSION: &str = "1.0.0";

pub const UNITS_NOTE: &str =
    "IR is a compression gain and MI a Donsker-Varadhan lower bound; both are in bits \
but the units are not compatible, so surprisal values are comparative only";

pub const COST_MODEL: &str = "literal: log2|S| bits; repeat of length L: log2(T) + log2(L) bits spread evenly \
over the block; single-level pointers; IR(t) = max(0, log2|S| - c(t)) with |S| the final alphabet size";

/// `I(Z,T|Y) = I(Z,T) - I(Z,Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualInformation {
    pub bits: f64,
    /// Set when the difference is negative, which a true conditional MI
    /// cannot be; the value is kept as computed.
    pub estimator_noise: bool,
}

pub fn residual_information(i_zt: f64, i_zy: f64) -> ResidualInformation {
    let bits = i_zt - i_zy;
    ResidualInformation {
        bits,
        estimator_noise: bits < 0.0,
    }
}

/// `ir.per_bar[t] - mi.bits`, unclipped.
pub fn surprisal_profile(ir: &vmo::IRProfile, mi: &MIEstimate) -> Vec<f64> {
    ir.per_bar.iter().map(|v| v - mi.bits).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Mean and variance of the piece's own latent frames.
    #[default]
    Empirical,
    /// The VAE prior, zero mean and unit variance.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Bit pools, strictly increasing, each at least 1.
    pub rates: Vec<u64>,
    pub lag: usize,
    pub seed: u64,
    pub theta_candidates: usize,
    pub channel_input: ChannelInput,
    pub prior: PriorKind,
    /// The seed field is replaced per rate.
    pub mine: MineConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rates: vec![10, 50, 10_000],
            lag: 1,
            seed: 0,
            theta_candidates: vmo::DEFAULT_CANDIDATES,
            channel_input: ChannelInput::Mean,
            prior: PriorKind::Empirical,
            mine: MineConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one rate is required".into(),
            ));
        }
        if self.rates[0] == 0 {
            return Err(Error::InvalidArgument("rates must be >= 1 bit".into()));
        }
        if self.rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "rates must be strictly increasing, got {:?}",
                self.rates
            )));
        }
        if self.theta_candidates == 0 {
            return Err(Error::InvalidArgument(
                "need at least one threshold candidate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateAnalysis {
    pub rate: u64,
    pub allocation: BitAllocation,
    pub theta_star: f64,
    /// `(theta, total IR)` per candidate.
    pub theta_curve: Vec<(f64, f64)>,
    pub ir: vmo::IRProfile,
    pub mi: MIEstimate,
    pub mean_ir_bits: f64,
    /// Mean IR per bar minus the MI estimate.
    pub residual: ResidualInformation,
    pub surprisal: Vec<f64>,
}

impl RateAnalysis {
    /// CSV with columns `bar_index,ir_bits,surprisal_bits`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bar_index,ir_bits,surprisal_bits")?;
        for (t, (ir, s)) in self.ir.per_bar.iter().zip(&self.surprisal).enumerate() {
            writeln!(w, "{t},{ir},{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceInfo {
    pub name: String,
    pub n_bars: usize,
    pub input_dim: usize,
    pub latent_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub piece: PieceInfo,
    pub config: AnalysisConfig,
    pub units_note: String,
    pub surprisal_comparative_only: bool,
    pub cost_model: String,
    pub latent_variance: Vec<f64>,
    pub rates: Vec<RateAnalysis>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Everything one rate needs besides the config.
struct Shared<'a> {
    full: &'a [LatentFrame],
    prior: &'a ChannelPrior,
    variance: &'a [f64],
    cfg: &'a AnalysisConfig,
}

fn analyze_rate(rate: u64, s: &Shared) -> Result<(RateAnalysis, Vec<LatentFrame>)> {
    let cfg = s.cfg;
    let allocation = rate::reverse_water_fill(s.variance, rate)?;
    let channel_seed = seed::derive(cfg.seed, &[seed::tag("channel"), rate]);
    let limited = rate::transmit_sequence(
        s.full,
        &allocation,
        s.prior,
        cfg.channel_input,
        channel_seed,
    )?;

    let frames: Vec<&[f64]> = limited.iter().map(|f| f.mean.as_slice()).collect();
    let theta_seed = seed::derive(cfg.seed, &[seed::tag("theta"), rate]);
    let candidates = vmo::default_candidates(&frames, cfg.theta_candidates, theta_seed)?;
    let sweep = vmo::threshold_sweep(&frames, &candidates)?;

    let mine_cfg = MineConfig {
        seed: seed::derive(cfg.seed, &[seed::tag("mine"), rate]),
        ..cfg.mine
    };
    let mi = mine::predictive_quality(&limited, s.full, cfg.lag, &mine_cfg)?;
    let surprisal = surprisal_profile(&sweep.profile, &mi);
    let mean_ir_bits = sweep.profile.total / sweep.profile.len() as f64;
    Ok((
        RateAnalysis {
            rate,
            allocation,
            theta_star: sweep.theta,
            theta_curve: sweep.curve,
            residual: residual_information(mean_ir_bits, mi.bits),
            mean_ir_bits,
            ir: sweep.profile,
            mi,
            surprisal,
        },
        limited,
    ))
}

/// Full analysis, also returning the full-rate frames and each rate's
/// transmitted frames.
pub fn analyze_detailed(
    bars: &[BarVector],
    params: &VaeParams,
    name: &str,
    cfg: &AnalysisConfig,
) -> Result<(AnalysisReport, Vec<LatentFrame>, Vec<Vec<LatentFrame>>)> {
    cfg.validate()?;
    let needed = cfg.lag + mine::MIN_SAMPLES;
    if bars.len() < needed {
        return Err(Error::InsufficientData(format!(
            "analysis with lag {} needs at least {needed} bars ({}-pair minimum for MI estimation), got {}",
            cfg.lag,
            mine::MIN_SAMPLES,
            bars.len()
        )));
    }
    let full = params.encode_all(bars)?;
    let prior = match cfg.prior {
        PriorKind::Empirical => ChannelPrior::empirical(&full)?,
        PriorKind::Unit => ChannelPrior::unit(params.latent_dim),
    };
    let variance = vae::latent_variance_profile(&full)?;
    let shared = Shared {
        full: &full,
        prior: &prior,
        variance: &variance,
        cfg,
    };
    let per_rate: Vec<(RateAnalysis, Vec<LatentFrame>)> = cfg
        .rates
        .par_iter()
        .map(|&r| analyze_rate(r, &shared).map_err(Error::at_rate(r)))
        .collect::<Result<_>>()?;
    let (rates, limited): (Vec<_>, Vec<_>) = per_rate.into_iter().unzip();
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION.into(),
        piece: PieceInfo {
            name: name.into(),
            n_bars: bars.len(),
            input_dim: params.input_dim,
            latent_dim: params.latent_dim,
        },
        config: cfg.clone(),
        units_note: UNITS_NOTE.into(),
        surprisal_comparative_only: true,
        cost_model: COST_MODEL.into(),
        latent_variance: variance,
        rates,
    };
    Ok((report, full, limited))
}

pub fn analyze(
    bars: &[BarVector],
    params: &VaeParams,
    name: &str,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport> {
    analyze_detailed(bars, params, name, cfg).map(|(r, _, _)| r)
}
