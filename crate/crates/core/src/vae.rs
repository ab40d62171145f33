//! Bar-level variational auto-encoder.
//!
//! The encoder maps a bar vector to a diagonal Gaussian through two affine
//! heads (mean and log-variance). An optional `tanh` layer can sit in front of
//! the heads; it is off by default. The decoder is a single affine map
//! followed by a sigmoid, giving per-bit Bernoulli probabilities.
//!
//! Training minimizes `BCE + beta * KL` with Adam, using the reparameterized
//! sample `z = mean + sqrt(var) * eps`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::midi::BarVector;
use crate::nn::{sigmoid, softplus, Adam, AdamConfig, Dense, DenseGrad};
use crate::{seed, Error, Result};

pub const DEFAULT_LATENT_DIM: usize = 500;
pub const LOGVAR_CLAMP: f64 = 18.0;
pub const VAR_MIN: f64 = 1e-8;
pub const VAR_MAX: f64 = 1e8;
/// Decoder outputs are kept strictly inside (0, 1).
const PROB_EPS: f64 = 1e-15;

const MAGIC: &[u8; 8] = b"IDVAEPRM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Optional `tanh` layer in front of the latent heads.
    pub hidden: Option<Dense>,
    pub mean_head: Dense,
    pub logvar_head: Dense,
    pub decoder: Dense,
}

/// Encoder output for one bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFrame {
    pub mean: Vec<f64>,
    /// Strictly positive.
    pub var: Vec<f64>,
    pub sample: Option<Vec<f64>>,
    pub bar_index: usize,
}

impl LatentFrame {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The sample when present, otherwise the mean.
    pub fn sample_or_mean(&self) -> &[f64] {
        self.sample.as_deref().unwrap_or(&self.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// KL weight; trades latent rate against reconstruction distortion.
    pub kl_weight: f64,
    pub rng_seed: u64,
    pub latent_dim: usize,
    /// Width of the optional pre-latent `tanh` layer.
    pub hidden_dim: Option<usize>,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            kl_weight: 1.0,
            rng_seed: 0,
            latent_dim: DEFAULT_LATENT_DIM,
            hidden_dim: None,
        }
    }
}

/// ELBO terms in nats, summed over bits and latent components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
}

/// Gradients matching the layout of [`VaeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub hidden: Option<DenseGrad>,
    pub mean_head: DenseGrad,
    pub logvar_head: DenseGrad,
    pub decoder: DenseGrad,
}

impl VaeGrads {
    pub fn for_params(p: &VaeParams) -> Self {
        VaeGrads {
            hidden: p.hidden.as_ref().map(DenseGrad::for_layer),
            mean_head: DenseGrad::for_layer(&p.mean_head),
            logvar_head: DenseGrad::for_layer(&p.logvar_head),
            decoder: DenseGrad::for_layer(&p.decoder),
        }
    }

    fn zero(&mut self) {
        if let Some(h) = &mut self.hidden {
            h.zero();
        }
        self.mean_head.zero();
        self.logvar_head.zero();
        self.decoder.zero();
    }

    fn list(&self) -> Vec<&DenseGrad> {
        let mut v: Vec<&DenseGrad> = self.hidden.iter().collect();
        v.extend([&self.mean_head, &self.logvar_head, &self.decoder]);
        v
    }

    /// All gradient entries in the same order as [`VaeParams::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        self.list()
            .into_iter()
            .flat_map(|g| {
                g.weight
                    .iter()
                    .chain(g.bias.iter())
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Intermediate values of a batch forward pass.
struct Pass {
    hidden: Option<Array2<f64>>,
    mean: Array2<f64>,
    logvar_raw: Array2<f64>,
    logvar: Array2<f64>,
    var: Array2<f64>,
    z: Array2<f64>,
    logits: Array2<f64>,
}

impl VaeParams {
    /// All-zero parameters: the encoder returns mean 0, var 1 for any input.
    pub fn zeros(input_dim: usize, latent_dim: usize, hidden_dim: Option<usize>) -> Self {
        let head_in = hidden_dim.unwrap_or(input_dim);
        VaeParams {
            input_dim,
            latent_dim,
            hidden: hidden_dim.map(|h| Dense::zeros(input_dim, h)),
            mean_head: Dense::zeros(head_in, latent_dim),
            logvar_head: Dense::zeros(head_in, latent_dim),
            decoder: Dense::zeros(latent_dim, input_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        latent_dim: usize,
        hidden_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let head_in = hidden_dim.unwrap_or(input_dim);
        let hidden = hidden_dim.map(|h| Dense::glorot(input_dim, h, rng));
        VaeParams {
            input_dim,
            latent_dim,
            hidden,
            mean_head: Dense::glorot(head_in, latent_dim, rng),
            logvar_head: Dense::glorot(head_in, latent_dim, rng),
            decoder: Dense::glorot(latent_dim, input_dim, rng),
        }
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        self.hidden.as_ref().map(Dense::out_dim)
    }

    fn layers(&self) -> Vec<&Dense> {
        let mut v: Vec<&Dense> = self.hidden.iter().collect();
        v.extend([&self.mean_head, &self.logvar_head, &self.decoder]);
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut v: Vec<&mut Dense> = self.hidden.iter_mut().collect();
        v.extend([
            &mut self.mean_head,
            &mut self.logvar_head,
            &mut self.decoder,
        ]);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }

    /// Every parameter, layer by layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers()
            .into_iter()
            .flat_map(|l| {
                l.weight
                    .iter()
                    .chain(l.bias.iter())
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Mutable access to parameter `index` in [`Self::flat_params`] order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in self.layers_mut() {
            let nw = layer.weight.len();
            if index < nw {
                let cols = layer.weight.ncols();
                return &mut layer.weight[[index / cols, index % cols]];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "VAE input",
                expected: self.input_dim,
                actual: len,
            });
        }
        Ok(())
    }

    fn head_input(&self, x: ArrayView2<f64>) -> Option<Array2<f64>> {
        self.hidden.as_ref().map(|h| h.forward(x).mapv(f64::tanh))
    }

    fn encode_rows(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = self.head_input(x);
        let hin = h.as_ref().map_or(x, |h| h.view());
        let mean = self.mean_head.forward(hin);
        let var = self.logvar_head.forward(hin).mapv(|lv| {
            lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
                .exp()
                .clamp(VAR_MIN, VAR_MAX)
        });
        (mean, var)
    }

    /// Encode one bar into the mean and variance of its latent Gaussian.
    pub fn encode(&self, bar: &BarVector) -> Result<LatentFrame> {
        self.check_input(bar.len())?;
        let x = Array2::from_shape_vec((1, bar.len()), bar.to_f64()).expect("shape");
        let (mean, var) = self.encode_rows(x.view());
        Ok(LatentFrame {
            mean: mean.row(0).to_vec(),
            var: var.row(0).to_vec(),
            sample: None,
            bar_index: bar.bar_index,
        })
    }

    /// Encode a sequence of bars in one batched pass.
    pub fn encode_all(&self, bars: &[BarVector]) -> Result<Vec<LatentFrame>> {
        for b in bars {
            self.check_input(b.len())?;
        }
        let x = bars_matrix(bars.iter(), self.input_dim);
        let (mean, var) = self.encode_rows(x.view());
        Ok(bars
            .iter()
            .zip(mean.rows().into_iter().zip(var.rows()))
            .map(|(b, (m, v))| LatentFrame {
                mean: m.to_vec(),
                var: v.to_vec(),
                sample: None,
                bar_index: b.bar_index,
            })
            .collect())
    }

    /// Bernoulli probabilities for each input bit, strictly inside (0, 1).
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                context: "VAE latent",
                expected: self.latent_dim,
                actual: z.len(),
            });
        }
        let zr = ndarray::ArrayView2::from_shape((1, z.len()), z).expect("shape");
        Ok(self
            .decoder
            .forward(zr)
            .iter()
            .map(|&l| sigmoid(l).clamp(PROB_EPS, 1.0 - PROB_EPS))
            .collect())
    }

    fn forward(&self, x: ArrayView2<f64>, eps: ArrayView2<f64>) -> Pass {
        let hidden = self.head_input(x);
        let hin = hidden.as_ref().map_or(x, |h| h.view());
        let mean = self.mean_head.forward(hin);
        let logvar_raw = self.logvar_head.forward(hin);
        let logvar = logvar_raw.mapv(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        let var = logvar.mapv(f64::exp);
        let mut z = mean.clone();
        Zip::from(&mut z)
            .and(&logvar)
            .and(eps)
            .for_each(|z, &lv, &e| *z += (0.5 * lv).exp() * e);
        let logits = self.decoder.forward(z.view());
        Pass {
            hidden,
            mean,
            logvar_raw,
            logvar,
            var,
            z,
            logits,
        }
    }

    /// ELBO terms summed over the batch, and gradients of the batch-mean
    /// total loss, for fixed reparameterization noise `eps`.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        eps: ArrayView2<f64>,
        beta: f64,
        grads: &mut VaeGrads,
    ) -> ElboTerms {
        let b = x.nrows();
        let scale = 1.0 / b as f64;
        let p = self.forward(x, eps);

        let mut bce = 0.0;
        Zip::from(&p.logits)
            .and(x)
            .for_each(|&l, &xi| bce += softplus(l) - xi * l);
        let mut kl = 0.0;
        Zip::from(&p.mean)
            .and(&p.var)
            .and(&p.logvar)
            .for_each(|&m, &v, &lv| kl += 0.5 * (m * m + v - lv - 1.0));

        grads.zero();
        let mut dlogits = p.logits.mapv(sigmoid);
        Zip::from(&mut dlogits)
            .and(x)
            .for_each(|d, &xi| *d = (*d - xi) * scale);
        self.decoder
            .accumulate(p.z.view(), dlogits.view(), &mut grads.decoder);
        let dz = self.decoder.backprop_input(dlogits.view());

        let mut dmean = dz.clone();
        Zip::from(&mut dmean)
            .and(&p.mean)
            .for_each(|d, &m| *d += beta * m * scale);
        let mut dlogvar = dz;
        Zip::from(&mut dlogvar)
            .and(eps)
            .and(&p.var)
            .and(&p.logvar_raw)
            .for_each(|d, &e, &v, &raw| {
                *d = if raw.abs() > LOGVAR_CLAMP {
                    0.0
                } else {
                    *d * e * 0.5 * v.sqrt() + beta * 0.5 * (v - 1.0) * scale
                };
            });

        let hin = p.hidden.as_ref().map_or(x, |h| h.view());
        self.mean_head
            .accumulate(hin, dmean.view(), &mut grads.mean_head);
        self.logvar_head
            .accumulate(hin, dlogvar.view(), &mut grads.logvar_head);
        if let (Some(layer), Some(h), Some(g)) = (&self.hidden, &p.hidden, &mut grads.hidden) {
            let mut dh = self.mean_head.backprop_input(dmean.view());
            dh += &self.logvar_head.backprop_input(dlogvar.view());
            Zip::from(&mut dh)
                .and(h)
                .for_each(|d, &hv| *d *= 1.0 - hv * hv);
            layer.accumulate(x, dh.view(), g);
        }

        ElboTerms {
            bce,
            kl,
            total: bce + beta * kl,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(24 + 8 * self.layers().iter().map(|l| l.n_params()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.latent_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim().unwrap_or(0) as u32).to_le_bytes());
        for layer in self.layers() {
            for v in layer.weight.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a VAE parameter file (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(8);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let input_dim = word(12) as usize;
        let latent_dim = word(16) as usize;
        let hidden_dim = match word(20) {
            0 => None,
            h => Some(h as usize),
        };
        let mut params = VaeParams::zeros(input_dim, latent_dim, hidden_dim);
        let n: usize = params.layers().iter().map(|l| l.n_params()).sum();
        if bytes.len() != 24 + 8 * n {
            return Err(Error::Format(format!(
                "expected {} bytes for input_dim {input_dim}, latent_dim {latent_dim}, got {}",
                24 + 8 * n,
                bytes.len()
            )));
        }
        let mut vals = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for layer in params.layers_mut() {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = vals.next().expect("length checked");
            }
        }
        if !params.is_finite() {
            return Err(Error::Format(
                "parameter file contains non-finite values".into(),
            ));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn bars_matrix<'a>(bars: impl ExactSizeIterator<Item = &'a BarVector>, dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((bars.len(), dim));
    for (mut row, b) in x.axis_iter_mut(Axis(0)).zip(bars) {
        for (dst, &src) in row.iter_mut().zip(&b.values) {
            *dst = src as f64;
        }
    }
    x
}

/// Draw `mean + sqrt(var) * eps` with standard normal `eps`.
pub fn reparameterize<R: Rng + ?Sized>(frame: &LatentFrame, rng: &mut R) -> LatentFrame {
    let sample = frame
        .mean
        .iter()
        .zip(&frame.var)
        .map(|(&m, &v)| {
            let e: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * e
        })
        .collect();
    LatentFrame {
        sample: Some(sample),
        ..frame.clone()
    }
}

/// Reconstruction cross-entropy, KL to the unit prior, and their weighted sum.
pub fn elbo_loss(
    x: &[f64],
    x_hat: &[f64],
    mean: &[f64],
    var: &[f64],
    beta: f64,
) -> Result<ElboTerms> {
    if x.len() != x_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "ELBO reconstruction",
            expected: x.len(),
            actual: x_hat.len(),
        });
    }
    if mean.len() != var.len() {
        return Err(Error::DimensionMismatch {
            context: "ELBO latent",
            expected: mean.len(),
            actual: var.len(),
        });
    }
    if let Some(p) = x_hat.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "reconstruction probability {p} outside (0, 1)"
        )));
    }
    if let Some(v) = var.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "latent variance {v} must be > 0"
        )));
    }
    let bce = -x
        .iter()
        .zip(x_hat)
        .map(|(&xi, &p)| xi * p.ln() + (1.0 - xi) * (1.0 - p).ln())
        .sum::<f64>();
    let kl = 0.5
        * mean
            .iter()
            .zip(var)
            .map(|(&m, &v)| m * m + v - v.ln() - 1.0)
            .sum::<f64>();
    Ok(ElboTerms {
        bce,
        kl,
        total: bce + beta * kl,
    })
}

/// Per-epoch mean of the ELBO terms over training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: VaeParams,
    pub loss_curve: Vec<EpochLoss>,
}

/// Train a VAE on bar vectors. Deterministic for a given seed.
pub fn train(dataset: &[BarVector], config: &VaeTrainConfig) -> Result<TrainOutput> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InsufficientData("training set is empty".into()))?;
    let input_dim = first.len();
    if let Some(b) = dataset.iter().find(|b| b.len() != input_dim) {
        return Err(Error::DimensionMismatch {
            context: "training bar",
            expected: input_dim,
            actual: b.len(),
        });
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
    }
    if !(config.kl_weight >= 0.0) {
        return Err(Error::InvalidArgument("kl_weight must be >= 0".into()));
    }
    if config.batch_size == 0 || config.latent_dim == 0 {
        return Err(Error::InvalidArgument(
            "batch_size and latent_dim must be >= 1".into(),
        ));
    }

    let mut rng = seed::rng(config.rng_seed);
    let mut params = VaeParams::init(input_dim, config.latent_dim, config.hidden_dim, &mut rng);
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..Default::default()
        },
        &params.layers(),
    );
    let mut grads = VaeGrads::for_params(&params);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = ElboTerms {
            bce: 0.0,
            kl: 0.0,
            total: 0.0,
        };
        for batch in order.chunks(config.batch_size) {
            let x = bars_matrix(batch.iter().map(|&i| &dataset[i]), input_dim);
            let eps = Array2::from_shape_simple_fn((batch.len(), config.latent_dim), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            let terms = params.loss_and_grad(x.view(), eps.view(), config.kl_weight, &mut grads);
            if !terms.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite VAE loss at epoch {epoch} (learning rate {})",
                    config.learning_rate
                )));
            }
            sum.bce += terms.bce;
            sum.kl += terms.kl;
            sum.total += terms.total;
            adam.update(&mut params.layers_mut(), &grads.list());
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite VAE parameters after epoch {epoch} (learning rate {})",
                config.learning_rate
            )));
        }
        let n = dataset.len() as f64;
        let e = EpochLoss {
            epoch,
            bce: sum.bce / n,
            kl: sum.kl / n,
            total: sum.total / n,
        };
        log::debug!(
            "vae epoch {epoch}: total {:.4} bce {:.4} kl {:.4}",
            e.total,
            e.bce,
            e.kl
        );
        curve.push(e);
    }
    Ok(TrainOutput {
        params,
        loss_curve: curve,
    })
}

/// Component-wise mean and unbiased variance of the frame means.
pub fn latent_moments(frames: &[LatentFrame]) -> Result<(Vec<f64>, Vec<f64>)> {
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "latent statistics need at least 2 frames, got {}",
            frames.len()
        )));
    }
    let dim = frames[0].dim();
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for (k, f) in frames.iter().enumerate() {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "latent frame",
                expected: dim,
                actual: f.dim(),
            });
        }
        let n = (k + 1) as f64;
        for ((mu, s), &x) in mean.iter_mut().zip(&mut m2).zip(&f.mean) {
            let delta = x - *mu;
            *mu += delta / n;
            *s += delta * (x - *mu);
        }
    }
    let denom = (frames.len() - 1) as f64;
    Ok((mean, m2.into_iter().map(|s| (s / denom).max(0.0)).collect()))
}

/// Unbiased per-component variance of the frame means.
pub fn latent_variance_profile(frames: &[LatentFrame]) -> Result<Vec<f64>> {
    latent_moments(frames).map(|(_, v)| v)
}
