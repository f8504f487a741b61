//! Baseline controllers producing intended commands.

pub mod dmpc;
pub mod lp;
pub mod orca;
pub mod vo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dmpc::{dmpc_br_step, DmpcConfig};
pub use orca::{orca_step, OrcaConfig, OrcaNeighbor};
pub use vo::vo_projection_intent;

/// Coordination method under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vo,
    Orca,
    Dmpc,
    Prollect,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vo, Method::Orca, Method::Dmpc, Method::Prollect];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vo => "vo",
            Method::Orca => "orca",
            Method::Dmpc => "dmpc",
            Method::Prollect => "prollect",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected vo, orca, dmpc or prollect)"))
    }
}
