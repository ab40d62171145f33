use std::path::{Path, PathBuf};

use clap::Args;
use infodyn::mine;

use super::{out_dir, read, write};
use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Args, Debug, Clone)]
pub struct MineArgs {
    /// First sample file: CSV rows, or a JSON array of rows.
    pub z: PathBuf,
    /// Second sample file, with the same number of rows.
    pub y: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub bias_correction: bool,
}

impl MineArgs {
    pub fn apply(&self, cfg: &mut FileConfig) {
        let m = &mut cfg.mine;
        m.epochs = self.epochs.or(m.epochs);
        m.batch_size = self.batch_size.or(m.batch_size);
        m.learning_rate = self.learning_rate.or(m.learning_rate);
        if self.bias_correction {
            m.bias_correction = Some(true);
        }
    }
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

/// Rows of a sample file. A CSV header row is skipped when its first field
/// is not a number.
pub fn load_samples(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let bytes = read(path)?;
    let rows = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| data_err(path, e))?;
        let arr = v
            .as_array()
            .ok_or_else(|| data_err(path, "expected a JSON array"))?;
        arr.iter()
            .enumerate()
            .map(|(i, row)| match row {
                serde_json::Value::Number(n) => n
                    .as_f64()
                    .map(|x| vec![x])
                    .ok_or_else(|| data_err(path, "bad number")),
                serde_json::Value::Array(xs) => xs
                    .iter()
                    .map(|x| {
                        x.as_f64().ok_or_else(|| {
                            data_err(path, format!("row {i}: non-numeric value {x}"))
                        })
                    })
                    .collect(),
                other => Err(data_err(
                    path,
                    format!("row {i}: expected a number or array, got {other}"),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(bytes.as_slice());
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| data_err(path, e))?;
            let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if i == 0 => continue,
                Err(e) => return Err(data_err(path, format!("line {}: {e}", i + 1))),
            }
        }
        rows
    };
    if rows.is_empty() {
        return Err(data_err(path, "no samples"));
    }
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(data_err(
            path,
            format!("row {i} has {} columns, expected {width}", rows[i].len()),
        ));
    }
    Ok(rows)
}

pub fn run(cfg: &FileConfig, args: &MineArgs) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let z = load_samples(&args.z)?;
    let y = load_samples(&args.y)?;
    if z.len() != y.len() {
        return Err(CliError::Data(format!(
            "row count mismatch: {} has {} rows, {} has {}",
            args.z.display(),
            z.len(),
            args.y.display(),
            y.len()
        )));
    }
    let est = mine::estimate_mi(&z, &y, &cfg.mine(seed))?;
    let dir = out_dir(cfg)?;
    let mut csv = String::from("epoch,bits\n");
    for (i, b) in est.curve.iter().enumerate() {
        csv.push_str(&format!("{i},{b}\n"));
    }
    write(&dir.join("mine_curve.csv"), csv)?;
    let json = serde_json::to_string_pretty(&est).map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("{json}");
    if !est.reliable {
        log::warn!(
            "estimate of {:.3} bits exceeds what {} samples can support; treat it as a saturated lower bound",
            est.raw_bits,
            est.n_samples
        );
    }
    Ok(())
}
