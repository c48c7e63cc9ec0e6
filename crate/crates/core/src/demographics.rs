//! Patient metadata encoding.
//!
//! Vector layout: `[gender, age, ethnicity one-hot...]` where gender is 0 for
//! female and 1 for male, and age is clipped to the configured bounds then
//! min-max scaled into `[0, 1]`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_AGE_MIN: u32 = 19;
pub const DEFAULT_AGE_MAX: u32 = 91;
pub const DEFAULT_ETHNICITY_COUNT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn code(self) -> f32 {
        match self {
            Self::Female => 0.0,
            Self::Male => 1.0,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Female => "female",
            Self::Male => "male",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Self::Female),
            "m" | "male" => Ok(Self::Male),
            other => Err(Error::Data(format!("unknown gender {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemographicRecord {
    pub gender: Gender,
    pub age: u32,
    pub ethnicity: String,
}

/// Which fields feed the model. An empty selection is the features-only
/// baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemographicFields {
    pub gender: bool,
    pub age: bool,
    pub ethnicity: bool,
}

impl DemographicFields {
    pub const NONE: Self = Self {
        gender: false,
        age: false,
        ethnicity: false,
    };
    pub const ALL: Self = Self {
        gender: true,
        age: true,
        ethnicity: true,
    };

    pub fn is_baseline(self) -> bool {
        self == Self::NONE
    }

    /// Width of the selected slice of the full vector.
    pub fn dim(self, ethnicity_count: usize) -> usize {
        usize::from(self.gender) + usize::from(self.age) + if self.ethnicity { ethnicity_count } else { 0 }
    }

    /// Picks the selected slots out of a full-layout vector.
    pub fn select(self, full: &[f32]) -> Vec<f32> {
        let mut out = Vec::with_capacity(full.len());
        if self.gender {
            out.push(full[0]);
        }
        if self.age {
            out.push(full[1]);
        }
        if self.ethnicity {
            out.extend_from_slice(&full[2..]);
        }
        out
    }

    /// Comma-separated field names; an empty string or `none` is the baseline.
    pub fn parse(s: &str) -> Result<Self> {
        let mut fields = Self::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "gender" => fields.gender = true,
                "age" => fields.age = true,
                "ethnicity" => fields.ethnicity = true,
                "none" => {}
                "all" => fields = Self::ALL,
                other => {
                    return Err(Error::Config(format!(
                        "unknown demographic field {other:?} (expected gender, age, ethnicity)"
                    )))
                }
            }
        }
        Ok(fields)
    }
}

impl fmt::Display for DemographicFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.gender, "gender"),
            (self.age, "age"),
            (self.ethnicity, "ethnicity"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemographicEncoder {
    pub categories: Vec<String>,
    pub age_min: u32,
    pub age_max: u32,
    /// Unknown ethnicity yields an all-zero slice instead of an error.
    #[serde(default)]
    pub lenient: bool,
}

impl DemographicEncoder {
    pub fn new(categories: Vec<String>, age_min: u32, age_max: u32) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Config("ethnicity category list is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = categories.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Config(format!("duplicate ethnicity category {dup:?}")));
        }
        if age_min >= age_max {
            return Err(Error::Config(format!("age bounds [{age_min}, {age_max}] are empty")));
        }
        Ok(Self {
            categories,
            age_min,
            age_max,
            lenient: false,
        })
    }

    pub fn with_default_bounds(categories: Vec<String>) -> Result<Self> {
        Self::new(categories, DEFAULT_AGE_MIN, DEFAULT_AGE_MAX)
    }

    pub fn lenient(mut self, lenient: bool) -> Self {
        self.lenient = lenient;
        self
    }

    pub fn dim(&self) -> usize {
        2 + self.categories.len()
    }

    pub fn normalize_age(&self, age: u32) -> f32 {
        let clipped = age.clamp(self.age_min, self.age_max);
        ((clipped - self.age_min) as f64 / (self.age_max - self.age_min) as f64) as f32
    }

    pub fn encode(&self, rec: &DemographicRecord) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.dim()];
        out[0] = rec.gender.code();
        out[1] = self.normalize_age(rec.age);
        match self.categories.iter().position(|c| *c == rec.ethnicity) {
            Some(i) => out[2 + i] = 1.0,
            None if self.lenient => {}
            None => {
                return Err(Error::Data(format!(
                    "ethnicity {:?} is not among the encoded categories",
                    rec.ethnicity
                )))
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper over [`DemographicEncoder::encode`] in strict mode.
pub fn encode_demographics(
    rec: &DemographicRecord,
    categories: &[String],
    age_min: u32,
    age_max: u32,
) -> Result<Vec<f32>> {
    DemographicEncoder::new(categories.to_vec(), age_min, age_max)?.encode(rec)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopCategories {
    pub categories: Vec<String>,
    /// Fewer than `k` distinct values were present.
    pub under_k: bool,
}

/// Most frequent ethnicity values, ties broken lexicographically.
pub fn select_top_categories(records: &[DemographicRecord], k: usize) -> Result<TopCategories> {
    if records.is_empty() {
        return Err(Error::Config("no records to rank categories from".into()));
    }
    if k == 0 {
        return Err(Error::Config("category count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.ethnicity.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let under_k = ranked.len() < k;
    Ok(TopCategories {
        categories: ranked.into_iter().take(k).map(|(c, _)| c.to_string()).collect(),
        under_k,
    })
}
