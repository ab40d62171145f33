use infodyn::midi::{self, BarVector, NoteEvent, RollConfig};
use infodyn::vae::{self, VaeGrads, VaeParams, VaeTrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Max relative error between analytic and central-difference gradients of
/// the batch-mean ELBO.
fn gradient_check(params: &VaeParams, x: &Array2<f64>, eps: &Array2<f64>, beta: f64) -> f64 {
    let mut grads = VaeGrads::for_params(params);
    params.loss_and_grad(x.view(), eps.view(), beta, &mut grads);
    let analytic = grads.flat();
    let n = x.nrows() as f64;
    let h = 1e-4;
    let mut scratch = VaeGrads::for_params(params);
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *plus.param_mut(i) += h;
        let mut minus = params.clone();
        *minus.param_mut(i) -= h;
        let fp = plus
            .loss_and_grad(x.view(), eps.view(), beta, &mut scratch)
            .total
            / n;
        let fm = minus
            .loss_and_grad(x.view(), eps.view(), beta, &mut scratch)
            .total
            / n;
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

fn toy(hidden: Option<usize>, seed: u64) -> (VaeParams, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = VaeParams::init(5, 3, hidden, &mut rng);
    for v in p
        .mean_head
        .bias
        .iter_mut()
        .chain(p.logvar_head.bias.iter_mut())
    {
        *v = rng.random_range(-0.5..0.5);
    }
    let x = Array2::from_shape_fn((4, 5), |_| rng.random_bool(0.4) as u8 as f64);
    let eps = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.5..1.5));
    (p, x, eps)
}

#[test]
fn elbo_gradients_match_finite_differences() {
    for seed in 0..3 {
        let (p, x, eps) = toy(None, seed);
        let err = gradient_check(&p, &x, &eps, 1.0);
        assert!(err < 1e-3, "seed {seed}: relative error {err}");
    }
}

#[test]
fn elbo_gradients_match_with_hidden_layer_and_beta() {
    let (p, x, eps) = toy(Some(4), 7);
    let err = gradient_check(&p, &x, &eps, 0.3);
    assert!(err < 1e-3, "relative error {err}");
}

/// One bar of a two-voice texture at the default resolution.
fn sample_bar() -> BarVector {
    let mut notes = Vec::new();
    for beat in 0..4u64 {
        notes.push(NoteEvent {
            onset_tick: beat * 480,
            duration_ticks: 480,
            pitch: [48, 55, 52, 55][beat as usize],
            velocity: 80,
            channel: 0,
        });
        for half in 0..2u64 {
            notes.push(NoteEvent {
                onset_tick: beat * 480 + half * 240,
                duration_ticks: 240,
                pitch: 72 + (beat * 2 + half) as u8,
                velocity: 80,
                channel: 0,
            });
        }
    }
    let bytes = midi::testing::write_format0(480, &notes, false);
    let bars = midi::bars_from_bytes(&bytes, &RollConfig::default(), 16).unwrap();
    assert_eq!(bars.len(), 1);
    bars.into_iter().next().unwrap()
}

#[test]
fn single_bar_overfits_within_200_epochs() {
    let bar = sample_bar();
    let data = vec![bar.clone()];
    let cfg = VaeTrainConfig {
        epochs: 200,
        batch_size: 1,
        rng_seed: 1,
        ..Default::default()
    };
    let out = vae::train(&data, &cfg).unwrap();
    let first10: Vec<f64> = out.loss_curve[..10].iter().map(|e| e.total).collect();
    assert!(
        first10[9] < first10[0],
        "loss did not decrease: {first10:?}"
    );

    let frame = out.params.encode(&bar).unwrap();
    let probs = out.params.decode(&frame.mean).unwrap();
    let terms = vae::elbo_loss(&bar.to_f64(), &probs, &frame.mean, &frame.var, 1.0).unwrap();
    let per_bit = terms.bce / bar.len() as f64;
    assert!(per_bit < 0.1, "per-bit BCE {per_bit}");
}
