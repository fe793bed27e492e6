use std::fmt::Display;

use serde::{Deserialize, Deserializer};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unphysical state: {0}")]
    UnphysicalState(String),

    #[error("degenerate projection: photon rate {rate:e} is too small to condition on")]
    DegenerateProjection { rate: f64 },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("data not identifiable: {0}")]
    Identifiability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// Deserializes `T`, naming the path of the offending field on failure.
pub(crate) fn deserialize_named<'de, T, D>(de: D) -> Result<T>
where
    T: Deserialize<'de>,
    D: Deserializer<'de>,
    D::Error: Display,
{
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::invalid(format!("at `{path}`: {}", e.into_inner()))
    })
}

pub(crate) fn parse_json<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = deserialize_named(&mut de)?;
    de.end()?;
    Ok(value)
}
