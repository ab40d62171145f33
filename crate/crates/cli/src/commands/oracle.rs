use std::path::{Path, PathBuf};

use clap::Args;
use infodyn::vae::VaeParams;
use infodyn::vmo::{self, FactorOracle, IRProfile};

use super::{existing, load_bars, read, write};
use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// A symbol string, or the path of a .mid/.midi file.
    pub input: String,
    /// Match threshold; omitted, the threshold maximizing total IR is searched for.
    #[arg(long)]
    pub theta: Option<f64>,
    /// VAE parameters, needed for MIDI input.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Also write the oracle as JSON.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

impl OracleArgs {
    pub fn apply(&self, cfg: &mut FileConfig) {
        if self.params.is_some() {
            cfg.paths.params = self.params.clone();
        }
    }
}

fn frames(input: &str, cfg: &FileConfig) -> Result<Vec<Vec<f64>>, CliError> {
    if input.is_empty() {
        return Err(CliError::Data(
            "empty input: nothing to build an oracle over".into(),
        ));
    }
    let path = Path::new(input);
    if !(super::is_midi(path) && path.is_file()) {
        return Ok(vmo::symbol_frames(input));
    }
    let params_path = existing(cfg.paths.params.as_ref(), "parameter file", "--params")?;
    let params = VaeParams::from_bytes(&read(&params_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", params_path.display())))?;
    let bars = load_bars(path, cfg)?;
    if bars.is_empty() {
        return Err(CliError::Data(format!("{input}: no complete bars")));
    }
    Ok(params
        .encode_all(&bars)?
        .into_iter()
        .map(|f| f.mean)
        .collect())
}

pub fn run(cfg: &FileConfig, args: &OracleArgs) -> Result<(), CliError> {
    let frames = frames(&args.input, cfg)?;
    let (oracle, profile): (FactorOracle, IRProfile) = match args.theta {
        Some(theta) => {
            if !(theta >= 0.0) {
                return Err(CliError::Usage(format!(
                    "--theta must be non-negative, got {theta}"
                )));
            }
            let oracle = vmo::build_vmo(&frames, theta)?;
            let code = vmo::compror_encode(&oracle);
            let profile = vmo::ir_profile(&oracle, &code)?;
            (oracle, profile)
        }
        None => {
            let seed = cfg.seed()?;
            let n = cfg
                .analysis
                .theta_candidates
                .unwrap_or(vmo::DEFAULT_CANDIDATES);
            let candidates = vmo::default_candidates(&frames, n, seed)?;
            let sweep = vmo::threshold_sweep(&frames, &candidates)?;
            (sweep.oracle, sweep.profile)
        }
    };

    println!("alphabet_size: {}", oracle.alphabet_size);
    println!("states: {}", oracle.n_states());
    println!("theta: {}", oracle.theta);
    println!("total_ir_bits: {}", profile.total);
    println!("position,label,ir_bits");
    for (t, (label, ir)) in oracle.labels.iter().zip(&profile.per_bar).enumerate() {
        println!("{t},{label},{ir}");
    }
    if let Some(path) = &args.json {
        write(path, oracle.to_json()?)?;
    }
    Ok(())
}
