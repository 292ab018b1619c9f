use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which input modality an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Sketch,
    View,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Sketch => "sketch",
            Domain::View => "view",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sketch" => Ok(Domain::Sketch),
            "view" => Ok(Domain::View),
            other => Err(format!(
                "unknown domain {other:?} (expected \"sketch\" or \"view\")"
            )),
        }
    }
}
