//! Artifact writers. Every artifact carries the run configuration and a
//! hash of its inputs.

mod csv;
mod svg;

pub use self::csv::{aggregate_csv, eval_csv, matrix_csv, parse_matrix_csv};
pub use self::svg::{heatmap_svg, line_plot_svg};

use lerg_core::Result;

use crate::config::{input_hash, RunConfig};

/// Reproducibility stamp shared by all artifacts of one run.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub config_json: String,
    pub input_sha256: String,
}

impl Stamp {
    pub fn new(config: &RunConfig) -> Result<Self> {
        Ok(Self {
            config_json: config.to_compact_json()?,
            input_sha256: input_hash(config)?,
        })
    }

    /// `# `-prefixed preamble lines for CSV files.
    pub fn csv_preamble(&self) -> String {
        format!("# config: {}\n# input_sha256: {}\n", self.config_json, self.input_sha256)
    }
}

/// Shortest round-trip text for a float, switching to exponent form for
/// very small or very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
