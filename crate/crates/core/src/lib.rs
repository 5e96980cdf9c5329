//! Exact computation of local subgroup and normal-subgroup counts of
//! torsion-free nilpotent groups and their finite extensions, through
//! p-adic cone integrals, with brute-force oracles for cross-checking.

pub mod arith;
pub mod cli;
pub mod conegen;
pub mod error;
pub mod evaluator;
pub mod extension;
pub mod malcev;
pub mod oracle;
pub mod polyring;
pub mod zeta;

pub use error::{Error, Result};

use std::fmt;
use std::str::FromStr;

/// Which family of finite-index subgroups is being counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// all subgroups
    Subgroup,
    /// normal subgroups only
    Normal,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Subgroup => "subgroup",
            Variant::Normal => "normal",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "subgroup" | "le" | "<=" | "≤" | "all" => Ok(Variant::Subgroup),
            "normal" | "lhd" | "⊲" | "triangleleft" => Ok(Variant::Normal),
            other => Err(Error::Usage(format!("unknown variant {other:?}; use subgroup or normal"))),
        }
    }
}
