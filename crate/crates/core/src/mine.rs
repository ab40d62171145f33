//! Mutual information estimation with a Donsker–Varadhan critic.
//!
//! A small network `T(z, y)` is trained to maximize
//! `E_joint[T] - ln E_marginal[exp T]`, a lower bound on `I(Z; Y)` in nats.
//! Joint samples are the aligned pairs, marginal samples pair each `z` with
//! a `y` drawn by permuting the batch.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, AdamConfig, Dense, DenseGrad};
use crate::vae::LatentFrame;
use crate::{seed, Error, Result};

pub const MIN_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: usize,
    pub dropout: f64,
    /// Replace the marginal normalizer in the gradient by a moving average.
    pub bias_correction: bool,
    pub ema_rate: f64,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            epochs: 300,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            hidden: 30,
            dropout: 0.3,
            bias_correction: false,
            ema_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MIEstimate {
    /// `max(0, raw_bits)`.
    pub bits: f64,
    /// Mean of the last tenth of the curve.
    pub raw_bits: f64,
    /// Full-data bound after each epoch, in bits.
    pub curve: Vec<f64>,
    pub n_samples: usize,
    pub config: MineConfig,
    /// False when the estimate exceeds `log2(n) + 2`, which no finite sample
    /// bound can legitimately reach.
    pub reliable: bool,
}

/// `mean(t_joint) - ln mean(exp t_marg)` in nats.
pub fn dv_objective(t_joint: &[f64], t_marg: &[f64]) -> Result<f64> {
    if t_joint.is_empty() || t_marg.is_empty() {
        return Err(Error::InsufficientData(
            "critic output vectors must be non-empty".into(),
        ));
    }
    if t_joint.iter().chain(t_marg).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite critic output".into()));
    }
    let joint = t_joint.iter().sum::<f64>() / t_joint.len() as f64;
    Ok(joint - log_mean_exp(t_marg))
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Critic: two ReLU layers with dropout, then a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct MineNet {
    pub l1: Dense,
    pub l2: Dense,
    pub out: Dense,
}

struct Cache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    /// Dropout scale per unit (0 or 1/(1-p)); all ones at evaluation.
    m1: Array2<f64>,
    m2: Array2<f64>,
}

pub struct MineGrads {
    pub l1: DenseGrad,
    pub l2: DenseGrad,
    pub out: DenseGrad,
}

impl MineGrads {
    pub fn for_net(net: &MineNet) -> Self {
        MineGrads {
            l1: DenseGrad::for_layer(&net.l1),
            l2: DenseGrad::for_layer(&net.l2),
            out: DenseGrad::for_layer(&net.out),
        }
    }

    fn zero(&mut self) {
        self.l1.zero();
        self.l2.zero();
        self.out.zero();
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.l1, &self.l2, &self.out]
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()).copied())
            .collect()
    }
}

impl MineNet {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        MineNet {
            l1: Dense::glorot(in_dim, hidden, rng),
            l2: Dense::glorot(hidden, hidden, rng),
            out: Dense::glorot(hidden, 1, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.in_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.l2.is_finite() && self.out.is_finite()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        [&mut self.l1, &mut self.l2, &mut self.out]
            .into_iter()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Critic outputs with dropout disabled.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let h1 = self.l1.forward(x).mapv(relu);
        let h2 = self.l2.forward(h1.view()).mapv(relu);
        self.out.forward(h2.view()).column(0).to_owned()
    }

    fn forward_cached<R: Rng + ?Sized>(
        &self,
        x: Array2<f64>,
        dropout: Option<(f64, &mut R)>,
    ) -> (Array1<f64>, Cache) {
        let n = x.nrows();
        let hidden = self.l1.out_dim();
        let (m1, m2) = match dropout {
            Some((p, rng)) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mut draw = || {
                    Array2::from_shape_simple_fn((n, hidden), || {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            keep
                        }
                    })
                };
                (draw(), draw())
            }
            _ => (Array2::ones((n, hidden)), Array2::ones((n, hidden))),
        };
        let h1 = self.l1.forward(x.view()).mapv(relu) * &m1;
        let h2 = self.l2.forward(h1.view()).mapv(relu) * &m2;
        let t = self.out.forward(h2.view()).column(0).to_owned();
        (t, Cache { x, h1, h2, m1, m2 })
    }

    /// Accumulate `sum_i g_i * dT(x_i)/dparams`.
    fn backward(&self, c: &Cache, g: &Array1<f64>, grads: &mut MineGrads) {
        let g = g.view().insert_axis(Axis(1));
        self.out.accumulate(c.h2.view(), g, &mut grads.out);
        // h2 > 0 exactly where the unit was active and kept
        let d2 = self.out.backprop_input(g) * &c.m2 * c.h2.mapv(step);
        self.l2.accumulate(c.h1.view(), d2.view(), &mut grads.l2);
        let d1 = self.l2.backprop_input(d2.view()) * &c.m1 * c.h1.mapv(step);
        self.l1.accumulate(c.x.view(), d1.view(), &mut grads.l1);
    }

    /// Bound on one batch and its gradient with respect to the critic
    /// parameters (ascent direction). With `log_norm`, the marginal term's
    /// gradient is normalized by `exp(log_norm)` instead of the batch mean.
    pub fn dv_and_grad<R: Rng + ?Sized>(
        &self,
        joint: Array2<f64>,
        marg: Array2<f64>,
        mut dropout: Option<(f64, &mut R)>,
        log_norm: Option<f64>,
        grads: &mut MineGrads,
    ) -> Result<(f64, f64)> {
        grads.zero();
        let (tj, cj) = self.forward_cached(joint, dropout.as_mut().map(|(p, r)| (*p, &mut **r)));
        let (tm, cm) = self.forward_cached(marg, dropout.as_mut().map(|(p, r)| (*p, &mut **r)));
        let tj_s = tj.as_slice().expect("owned column");
        let tm_s = tm.as_slice().expect("owned column");
        let dv = dv_objective(tj_s, tm_s)?;
        let lme = log_mean_exp(tm_s);
        let nj = tj.len() as f64;
        let nm = tm.len() as f64;
        let gj = Array1::from_elem(tj.len(), 1.0 / nj);
        let norm = log_norm.unwrap_or(lme);
        let gm = tm.mapv(|t| -(t - norm).exp() / nm);
        self.backward(&cj, &gj, grads);
        self.backward(&cm, &gm, grads);
        Ok((dv, lme))
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Per-column z-score; constant columns become 0.
fn standardize<F: AsRef<[f64]>>(rows: &[F], dim: usize) -> Array2<f64> {
    let n = rows.len();
    let mut a = Array2::zeros((n, dim));
    for (i, r) in rows.iter().enumerate() {
        a.row_mut(i).assign(&ndarray::ArrayView1::from(r.as_ref()));
    }
    for mut col in a.columns_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            col.mapv_inplace(|v| (v - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
    a
}

fn check_dims<F: AsRef<[f64]>>(rows: &[F], what: &'static str) -> Result<usize> {
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    for r in rows {
        if r.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: dim,
                actual: r.as_ref().len(),
            });
        }
        if r.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value in {what}")));
        }
    }
    Ok(dim)
}

/// Paired rows `[z_i, y_j]` for the given `y` index per row.
fn pairs(z: &Array2<f64>, y: &Array2<f64>, zi: &[usize], yi: &[usize]) -> Array2<f64> {
    let (dz, dy) = (z.ncols(), y.ncols());
    let mut x = Array2::zeros((zi.len(), dz + dy));
    for (r, (&a, &b)) in zi.iter().zip(yi).enumerate() {
        x.slice_mut(s![r, ..dz]).assign(&z.row(a));
        x.slice_mut(s![r, dz..]).assign(&y.row(b));
    }
    x
}

/// Train a critic on `(z_i, y_i)` and report the converged bound in bits.
pub fn estimate_mi<F: AsRef<[f64]>, G: AsRef<[f64]>>(
    z: &[F],
    y: &[G],
    cfg: &MineConfig,
) -> Result<MIEstimate> {
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "paired sample count",
            expected: z.len(),
            actual: y.len(),
        });
    }
    let n = z.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "MI estimation needs at least {MIN_SAMPLES} paired samples, got {n}"
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidArgument(
            "epochs, batch size and hidden width must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::InvalidArgument(format!(
            "dropout must be in [0, 1), got {}",
            cfg.dropout
        )));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be > 0, got {}",
            cfg.learning_rate
        )));
    }
    let dz = check_dims(z, "z samples")?;
    let dy = check_dims(y, "y samples")?;
    let zs = standardize(z, dz);
    let ys = standardize(y, dy);

    let mut rng = seed::rng(cfg.seed);
    let mut net = MineNet::new(dz + dy, cfg.hidden, &mut rng);
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..Default::default()
        },
        &[&net.l1, &net.l2, &net.out],
    );
    let mut grads = MineGrads::for_net(&net);

    let all: Vec<usize> = (0..n).collect();
    let mut eval_perm = all.clone();
    eval_perm.shuffle(&mut rng);
    let eval_joint = pairs(&zs, &ys, &all, &all);
    let eval_marg = pairs(&zs, &ys, &all, &eval_perm);

    let batch = cfg.batch_size.min(n);
    let mut order = all.clone();
    let mut log_ema: Option<f64> = None;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(batch) {
            let mut shuffled = idx.to_vec();
            shuffled.shuffle(&mut rng);
            let joint = pairs(&zs, &ys, idx, idx);
            let marg = pairs(&zs, &ys, idx, &shuffled);
            let norm = if cfg.bias_correction { log_ema } else { None };
            let (_, lme) =
                net.dv_and_grad(joint, marg, Some((cfg.dropout, &mut rng)), norm, &mut grads)?;
            if cfg.bias_correction {
                let a = cfg.ema_rate;
                log_ema = Some(match log_ema {
                    None => lme,
                    Some(prev) => log_add((1.0 - a).ln() + prev, a.ln() + lme),
                });
            }
            // ascent: step along the negated gradient of -dv
            for g in [&mut grads.l1, &mut grads.l2, &mut grads.out] {
                g.weight.mapv_inplace(|v| -v);
                g.bias.mapv_inplace(|v| -v);
            }
            adam.update(
                &mut [&mut net.l1, &mut net.l2, &mut net.out],
                &[&grads.l1, &grads.l2, &grads.out],
            );
        }
        if !net.is_finite() {
            return Err(Error::Numeric(format!(
                "critic diverged at epoch {epoch} (learning rate {})",
                cfg.learning_rate
            )));
        }
        let tj = net.forward(eval_joint.view());
        let tm = net.forward(eval_marg.view());
        let dv = dv_objective(tj.as_slice().expect("owned"), tm.as_slice().expect("owned"))?;
        curve.push(dv / std::f64::consts::LN_2);
    }

    let tail = (cfg.epochs as f64 * 0.1).ceil().max(1.0) as usize;
    let raw_bits = curve[curve.len() - tail..].iter().sum::<f64>() / tail as f64;
    let reliable = raw_bits <= (n as f64).log2() + 2.0;
    if !reliable {
        log::warn!(
            "MI estimate {raw_bits:.3} bits exceeds log2(n) + 2 for n = {n}; flagged unreliable"
        );
    }
    Ok(MIEstimate {
        bits: raw_bits.max(0.0),
        raw_bits,
        curve,
        n_samples: n,
        config: *cfg,
        reliable,
    })
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// MI between rate-limited frame `t` and full-rate frame `t + lag`.
pub fn predictive_quality(
    limited: &[LatentFrame],
    full: &[LatentFrame],
    lag: usize,
    cfg: &MineConfig,
) -> Result<MIEstimate> {
    if limited.len() != full.len() {
        return Err(Error::DimensionMismatch {
            context: "limited vs full sequence length",
            expected: full.len(),
            actual: limited.len(),
        });
    }
    if let Some((a, b)) = limited
        .iter()
        .zip(full)
        .find(|(a, b)| a.bar_index != b.bar_index)
    {
        return Err(Error::InvalidArgument(format!(
            "sequences are not aligned: bar {} vs bar {}",
            a.bar_index, b.bar_index
        )));
    }
    if limited.len() < lag + MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "predictive quality needs at least {} bars for lag {lag} ({MIN_SAMPLES}-pair minimum), got {}",
            lag + MIN_SAMPLES,
            limited.len()
        )));
    }
    let n = limited.len() - lag;
    let z: Vec<&[f64]> = limited[..n].iter().map(|f| f.sample_or_mean()).collect();
    let y: Vec<&[f64]> = full[lag..].iter().map(|f| f.mean.as_slice()).collect();
    estimate_mi(&z, &y, cfg)
}
