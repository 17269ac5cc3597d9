//! Bundled reproduction configs.

use std::path::Path;

use crate::config::Config;
use crate::error::{io_err, LabError, LabResult};

pub struct Bundled {
    pub id: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($($id:literal),* $(,)?) => {
        &[$(Bundled { id: $id, text: include_str!(concat!("../configs/", $id, ".json")) }),*]
    };
}

pub const BUNDLED: &[Bundled] = bundled![
    "bm_qv",
    "convolution_qv",
    "poisson_qv",
    "chainrule_c01",
    "char_htransform",
    "pdmp_generator",
    "distdrift_sigma",
    "wrong_drift",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub id: String,
    pub description: String,
    pub expected_runtime: String,
}

/// Catalog in bundle order.
pub fn list() -> LabResult<Vec<Entry>> {
    BUNDLED
        .iter()
        .map(|b| {
            let c = Config::from_json(b.text)?;
            Ok(Entry { id: c.id, description: c.description, expected_runtime: c.expected_runtime })
        })
        .collect()
}

pub fn bundled(id: &str) -> Option<&'static str> {
    let id = id.strip_suffix(".json").unwrap_or(id);
    BUNDLED.iter().find(|b| b.id == id).map(|b| b.text)
}

/// Reads a config from a file, falling back to a bundled id.
pub fn resolve(arg: &str) -> LabResult<String> {
    let p = Path::new(arg);
    if p.is_file() {
        return std::fs::read_to_string(p).map_err(io_err(p));
    }
    bundled(arg).map(str::to_string).ok_or_else(|| LabError::UnknownExperiment(arg.to_string()))
}
