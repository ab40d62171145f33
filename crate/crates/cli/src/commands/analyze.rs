use std::path::{Path, PathBuf};

use clap::Args;
use infodyn::dynamics::{self, AnalysisReport, PriorKind, RateAnalysis};
use infodyn::midi;
use infodyn::rate::ChannelInput;
use infodyn::vae::{self, VaeParams};

use super::{existing, load_bars, out_dir, read, write};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::plot::{self, Series};
use crate::schema;

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// Trained VAE parameters.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// The piece to analyze.
    #[arg(long, value_name = "FILE")]
    pub midi: Option<PathBuf>,
    /// Comma-separated bit budgets, e.g. 10,50,10000.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<u64>>,
    /// Bars between the degraded past and the full-rate present.
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub theta_candidates: Option<usize>,
    #[arg(long)]
    pub mine_epochs: Option<usize>,
    #[arg(long)]
    pub mine_bias_correction: bool,
    /// Expected latent size; checked against the parameter file.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// What enters the channel: the encoder mean or a drawn sample.
    #[arg(long, value_enum)]
    pub channel_input: Option<InputArg>,
    /// Channel prior: the piece's own latent statistics or the unit Gaussian.
    #[arg(long, value_enum)]
    pub prior: Option<PriorArg>,
    /// Report path [default: <out-dir>/report.json].
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Skip SVG output.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum InputArg {
    Mean,
    Sample,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum PriorArg {
    Empirical,
    Unit,
}

impl AnalyzeArgs {
    pub fn apply(&self, cfg: &mut FileConfig) {
        if self.params.is_some() {
            cfg.paths.params = self.params.clone();
        }
        if self.midi.is_some() {
            cfg.paths.midi = self.midi.clone();
        }
        if self.report.is_some() {
            cfg.paths.report = self.report.clone();
        }
        let a = &mut cfg.analysis;
        a.rates = self.rates.clone().or(a.rates.take());
        a.lag = self.lag.or(a.lag);
        a.theta_candidates = self.theta_candidates.or(a.theta_candidates);
        if let Some(c) = self.channel_input {
            a.channel_input = Some(match c {
                InputArg::Mean => ChannelInput::Mean,
                InputArg::Sample => ChannelInput::Sample,
            });
        }
        if let Some(p) = self.prior {
            a.prior = Some(match p {
                PriorArg::Empirical => PriorKind::Empirical,
                PriorArg::Unit => PriorKind::Unit,
            });
        }
        if self.no_plot {
            a.plots = Some(false);
        }
        cfg.mine.epochs = self.mine_epochs.or(cfg.mine.epochs);
        if self.mine_bias_correction {
            cfg.mine.bias_correction = Some(true);
        }
        cfg.vae.latent_dim = self.latent_dim.or(cfg.vae.latent_dim);
    }
}

fn load_params(path: &Path, cfg: &FileConfig) -> Result<VaeParams, CliError> {
    let params = VaeParams::from_bytes(&read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(expected) = cfg.vae.latent_dim {
        if expected != params.latent_dim {
            return Err(CliError::Data(format!(
                "{} is a format version {} parameter file with latent_dim {}, but the configuration asks for latent_dim {expected}",
                path.display(),
                vae::FORMAT_VERSION,
                params.latent_dim
            )));
        }
    }
    let (roll, steps_per_bar) = cfg.roll()?;
    let expected = midi::bar_len(&roll, steps_per_bar);
    if params.input_dim != expected {
        return Err(CliError::Data(format!(
            "{} expects bars of {} values, but the [roll] settings produce {expected}",
            path.display(),
            params.input_dim
        )));
    }
    Ok(params)
}

pub fn run(cfg: &FileConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let params_path = existing(cfg.paths.params.as_ref(), "parameter file", "--params")?;
    let midi_path = existing(cfg.paths.midi.as_ref(), "MIDI file", "--midi")?;
    let params = load_params(&params_path, cfg)?;
    let bars = load_bars(&midi_path, cfg)?;
    let name = midi_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let acfg = cfg.analysis(seed);
    acfg.validate()?;
    log::info!("{name}: {} bars, rates {:?}", bars.len(), acfg.rates);

    let report = dynamics::analyze(&bars, &params, &name, &acfg)?;
    let json = report.to_json()?;
    let value: serde_json::Value = serde_json::from_str(&json)
        .map_err(|e| CliError::Numeric(format!("report is not valid JSON: {e}")))?;
    let violations = schema::report_violations(&value);
    if !violations.is_empty() {
        return Err(CliError::Numeric(format!(
            "report fails schema validation:\n  {}",
            violations.join("\n  ")
        )));
    }

    let dir = out_dir(cfg)?;
    let report_path = cfg
        .paths
        .report
        .clone()
        .unwrap_or_else(|| dir.join("report.json"));
    write(&report_path, &json)?;
    for r in &report.rates {
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        write(&dir.join(format!("rate_{}.csv", r.rate)), buf)?;
    }
    if cfg.analysis.plots.unwrap_or(true) {
        write_plots(&report, &dir)?;
    }
    summarize(&report, &report_path);
    Ok(())
}

fn write_plots(report: &AnalysisReport, dir: &Path) -> Result<(), CliError> {
    for r in &report.rates {
        write(
            &dir.join(format!("ir_rate_{}.svg", r.rate)),
            ir_plot(r, &report.piece.name),
        )?;
        let bits: Vec<f64> = r.allocation.bits.iter().map(|&b| b as f64).collect();
        write(
            &dir.join(format!("bits_rate_{}.svg", r.rate)),
            plot::bar_chart(
                &format!("bit allocation, rate {}", r.rate),
                "latent component",
                "bits",
                &bits,
            ),
        )?;
        let curve = Series {
            label: "MI",
            points: r
                .mi
                .curve
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64, v))
                .collect(),
        };
        write(
            &dir.join(format!("mine_rate_{}.svg", r.rate)),
            plot::line_chart(
                &format!("MI estimate, rate {} ({:.3} bits)", r.rate, r.mi.bits),
                "epoch",
                "bits",
                &[curve],
            ),
        )?;
    }
    Ok(())
}

fn ir_plot(r: &RateAnalysis, name: &str) -> String {
    let ir = Series {
        label: "IR",
        points: r
            .ir
            .per_bar
            .iter()
            .enumerate()
            .map(|(t, &v)| (t as f64, v))
            .collect(),
    };
    plot::line_chart(
        &format!("{name}: information rate per bar, rate {}", r.rate),
        "bar",
        "bits",
        &[ir],
    )
}

fn summarize(report: &AnalysisReport, path: &Path) {
    println!("{}: {} bars", report.piece.name, report.piece.n_bars);
    println!("rate,theta,alphabet_size,mean_ir_bits,mi_bits,reliable");
    for r in &report.rates {
        println!(
            "{},{},{},{:.4},{:.4},{}",
            r.rate, r.theta_star, r.ir.alphabet_size, r.mean_ir_bits, r.mi.bits, r.mi.reliable
        );
    }
    println!("report written to {}", path.display());
}
