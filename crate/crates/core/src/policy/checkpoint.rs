//! Plain-text checkpoints: one JSON header line, then every weight and
//! both Adam moment vectors, one value per line in scientific notation
//! with 17 significant digits so that reloading is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, PolicyParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT: &str = "hybridopt-policy-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub library_size: usize,
    pub hidden_units: usize,
    pub step: u64,
    pub n_params: usize,
    pub sigma: f64,
    pub shift: f64,
}

fn write_value(out: &mut String, v: f64) {
    out.push_str(&format!("{v:.16e}\n"));
}

impl<F: Scalar> PolicyParams<F> {
    pub fn to_checkpoint_string(&self) -> String {
        let header = CheckpointHeader {
            format: FORMAT.to_string(),
            library_size: self.library_size(),
            hidden_units: self.hidden_units(),
            step: self.step,
            n_params: self.num_params(),
            sigma: self.sigma().as_f64(),
            shift: self.shift().as_f64(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for v in self.weights.iter().chain(&self.first_moment).chain(&self.second_moment) {
            write_value(&mut out, v.as_f64());
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: CheckpointHeader = serde_json::from_str(
            lines.next().ok_or_else(|| Error::InvalidArgument("empty checkpoint".into()))?,
        )?;
        if header.format != FORMAT {
            return Err(Error::InvalidArgument(format!("unknown checkpoint format `{}`", header.format)));
        }
        let layout = Layout::new(header.library_size, header.hidden_units);
        if layout.len != header.n_params {
            return Err(Error::InvalidArgument(format!(
                "header declares {} parameters, shape implies {}",
                header.n_params, layout.len
            )));
        }
        let mut values = Vec::with_capacity(3 * layout.len);
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value `{line}` at entry {i}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
            values.push(F::lit(v));
        }
        if values.len() != 3 * layout.len {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, found {}",
                3 * layout.len,
                values.len()
            )));
        }
        let second_moment = values.split_off(2 * layout.len);
        let first_moment = values.split_off(layout.len);
        let policy = PolicyParams::new(header.library_size, header.hidden_units, 0)?
            .with_continuous_head(F::lit(header.sigma), F::lit(header.shift))?;
        Ok(PolicyParams { weights: values, first_moment, second_moment, step: header.step, ..policy })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&fs::read_to_string(path)?)
    }
}
