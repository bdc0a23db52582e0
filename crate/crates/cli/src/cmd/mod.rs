pub mod ablate;
pub mod eval;
pub mod generate;
pub mod gradcheck;
pub mod train;
pub mod visualize;

use std::io::Write;
use std::path::Path;

use ssan::charset::Charset;

pub fn parse_charset(name: &str) -> Result<Charset, String> {
    Charset::parse(name).map_err(|e| e.to_string())
}

/// `lo,hi` as a pair of fractions.
pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = lo.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = hi.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

/// Writes `text` to `path`, or to standard output when there is no path.
pub fn emit(text: &str, path: Option<&Path>) -> ssan::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| ssan::Error::Io { path: p.to_path_buf(), source }),
        None => {
            std::io::stdout().write_all(text.as_bytes()).ok();
            Ok(())
        }
    }
}

pub fn create_dir(path: &Path) -> ssan::Result<()> {
    std::fs::create_dir_all(path).map_err(|source| ssan::Error::Io { path: path.to_path_buf(), source })
}
