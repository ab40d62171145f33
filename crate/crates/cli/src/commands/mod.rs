pub mod analyze;
pub mod mine;
pub mod oracle;
pub mod train;

use std::path::{Path, PathBuf};

use infodyn::midi::{self, BarVector};

use crate::config::FileConfig;
use crate::error::CliError;

/// The path configured for `what`, which must exist.
pub fn existing(path: Option<&PathBuf>, what: &str, flag: &str) -> Result<PathBuf, CliError> {
    let path = path.ok_or_else(|| {
        CliError::Usage(format!(
            "no {what} given: pass {flag} or set it in the config file"
        ))
    })?;
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(path.clone())
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn out_dir(cfg: &FileConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub fn load_bars(path: &Path, cfg: &FileConfig) -> Result<Vec<BarVector>, CliError> {
    let (roll, steps_per_bar) = cfg.roll()?;
    let bytes = read(path)?;
    midi::bars_from_bytes(&bytes, &roll, steps_per_bar)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}
