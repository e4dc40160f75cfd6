//! Integrated-gradients baselines, including the maximum-entropy inputs.

mod build;
mod entropy;
mod search;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub use build::{gaussian_blur, BaselineFactory, BaselineKind, BaselineParams, BaselineSpec};
pub use entropy::{entropy, entropy_curve, entropy_gradient, logits_entropy, EntropyCurve};
pub(crate) use entropy::softmax_entropy;
pub use search::{ensure_conservation, max_entropy_full, max_entropy_uniform, AscentResult, UniformSearch};

#[derive(Serialize)]
struct Sidecar<'a> {
    kind: &'a str,
    shape: &'a [usize],
    seed: u64,
    entropy: f64,
    params: &'a BaselineParams,
}

/// Writes `<stem>.f64` (raw little-endian values), `<stem>.csv` and a
/// `<stem>.json` sidecar describing the baseline.
pub fn export_baseline(spec: &BaselineSpec, params: &BaselineParams, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let raw: Vec<u8> = spec
        .values
        .data()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(dir.join(format!("{stem}.f64")), raw)?;
    crate::io::write_tensor_csv(&spec.values, &dir.join(format!("{stem}.csv")))?;
    let sidecar = Sidecar {
        kind: spec.kind.tag(),
        shape: spec.values.shape(),
        seed: spec.seed,
        entropy: spec.entropy,
        params,
    };
    crate::io::write_json(&sidecar, &dir.join(format!("{stem}.json")))
}
