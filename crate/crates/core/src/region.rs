//! Two-letter region codes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// ISO 3166-1 alpha-2 country code, exactly two uppercase ASCII letters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionCode([u8; 2]);

/// The 21 Spanish-official regions plus the five additional regions with
/// large Spanish-speaking populations.
pub const KNOWN_REGIONS: [&str; 26] = [
    "AR", "BO", "CL", "CO", "CR", "CU", "DO", "EC", "SV", "GQ", "GT", "HN", "MX", "NI", "PA", "PY",
    "PE", "PR", "ES", "UY", "VE", "BR", "CA", "FR", "GB", "US",
];

impl RegionCode {
    pub fn new(code: &str) -> Result<Self> {
        match code.as_bytes() {
            &[a, b] if a.is_ascii_uppercase() && b.is_ascii_uppercase() => Ok(RegionCode([a, b])),
            _ => Err(Error::InvalidRegion(code.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        // both bytes are ASCII uppercase by construction
        std::str::from_utf8(&self.0).expect("ascii region code")
    }

    pub fn is_known(&self) -> bool {
        KNOWN_REGIONS.contains(&self.as_str())
    }
}

impl FromStr for RegionCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegionCode::new(s)
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RegionCode({})", self.as_str())
    }
}

impl Serialize for RegionCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RegionCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        RegionCode::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Regions accepted by the reader: the known set plus configured extensions.
#[derive(Debug, Clone, Default)]
pub struct RegionSet {
    extra: BTreeSet<RegionCode>,
}

impl RegionSet {
    pub fn with_extensions(extra: impl IntoIterator<Item = RegionCode>) -> Self {
        RegionSet {
            extra: extra.into_iter().collect(),
        }
    }

    pub fn contains(&self, region: &RegionCode) -> bool {
        region.is_known() || self.extra.contains(region)
    }
}
