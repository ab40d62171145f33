use std::path::PathBuf;

use clap::Args;
use infodyn::vae;

use super::{existing, load_bars, out_dir, write};
use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Directory of .mid/.midi training files.
    #[arg(long, value_name = "DIR")]
    pub train_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Weight on the KL term of the loss.
    #[arg(long)]
    pub kl_weight: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Width of an optional tanh layer before the latent heads.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Where to write the parameters [default: <out-dir>/vae.params].
    #[arg(long, value_name = "FILE")]
    pub params_out: Option<PathBuf>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut FileConfig) {
        let v = &mut cfg.vae;
        if self.train_dir.is_some() {
            cfg.paths.train_dir = self.train_dir.clone();
        }
        if self.params_out.is_some() {
            cfg.paths.params = self.params_out.clone();
        }
        v.epochs = self.epochs.or(v.epochs);
        v.batch_size = self.batch_size.or(v.batch_size);
        v.learning_rate = self.learning_rate.or(v.learning_rate);
        v.kl_weight = self.kl_weight.or(v.kl_weight);
        v.latent_dim = self.latent_dim.or(v.latent_dim);
        v.hidden_dim = self.hidden_dim.or(v.hidden_dim);
    }
}

pub fn run(cfg: &FileConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let dir = existing(
        cfg.paths.train_dir.as_ref(),
        "training directory",
        "--train-dir",
    )?;
    let entries =
        std::fs::read_dir(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && super::is_midi(p))
        .collect();
    files.sort();

    let mut dataset = Vec::new();
    let mut failures = Vec::new();
    for f in &files {
        match load_bars(f, cfg) {
            Ok(bars) if bars.is_empty() => {
                failures.push(format!("{}: no complete bars", f.display()))
            }
            Ok(bars) => {
                log::info!("{}: {} bars", f.display(), bars.len());
                dataset.extend(bars);
            }
            Err(e) => {
                log::warn!("skipping {e}");
                failures.push(e.to_string());
            }
        }
    }
    if dataset.is_empty() {
        let mut msg = format!("no parsable MIDI files in {}", dir.display());
        for f in &failures {
            msg.push_str("\n  ");
            msg.push_str(f);
        }
        return Err(CliError::Data(msg));
    }

    let vcfg = cfg.vae(seed);
    log::info!(
        "training on {} bars from {} files, latent dim {}, {} epochs",
        dataset.len(),
        files.len() - failures.len(),
        vcfg.latent_dim,
        vcfg.epochs
    );
    let out = vae::train(&dataset, &vcfg)?;

    let dir = out_dir(cfg)?;
    let params_path = cfg
        .paths
        .params
        .clone()
        .unwrap_or_else(|| dir.join("vae.params"));
    if let Some(parent) = params_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    write(&params_path, out.params.to_bytes())?;

    let loss_path = dir.join("loss.csv");
    let mut csv = String::from("epoch,bce,kl,total\n");
    for l in &out.loss_curve {
        csv.push_str(&format!("{},{},{},{}\n", l.epoch, l.bce, l.kl, l.total));
    }
    write(&loss_path, csv)?;

    match out.loss_curve.last() {
        Some(l) => println!(
            "trained {} epochs on {} bars: final loss {:.4} (bce {:.4}, kl {:.4}); params written to {}",
            out.loss_curve.len(),
            dataset.len(),
            l.total,
            l.bce,
            l.kl,
            params_path.display()
        ),
        None => println!(
            "0 epochs on {} bars; initial params written to {}",
            dataset.len(),
            params_path.display()
        ),
    }
    Ok(())
}
