//! Synthetic corpus standing in for credentialed source data.
//!
//! Every stratum is a unique (gender, ethnicity, age range) combination with
//! its own report sentence. Each example draws a finding independently of
//! its stratum; the report concatenates the finding sentence, the stratum
//! sentence and a shared closing sentence. Features come from the stub
//! extractor applied to a noisy descriptor centred on the finding (plus an
//! optional stratum offset), so with the default zero stratum signal the
//! stratum sentence is predictable from demographics alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DataPoint;
use crate::demographics::{DemographicRecord, Gender};
use crate::text::{clean_report, CleaningConfig, RawReport};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub name: String,
    pub gender: Gender,
    pub age_min: u32,
    pub age_max: u32,
    pub ethnicity: String,
    pub sentence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub name: String,
    pub sentence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub strata: Vec<Stratum>,
    pub findings: Vec<Finding>,
    pub closing: String,
    pub examples_per_stratum: usize,
    pub feature_dim: usize,
    pub descriptor_dim: usize,
    /// Standard deviation of descriptor noise around its cluster centre.
    pub noise: f64,
    /// Weight of the stratum centre in the descriptor.
    pub stratum_feature_signal: f64,
}

fn stratum(name: &str, gender: Gender, ages: (u32, u32), ethnicity: &str, sentence: &str) -> Stratum {
    Stratum {
        name: name.into(),
        gender,
        age_min: ages.0,
        age_max: ages.1,
        ethnicity: ethnicity.into(),
        sentence: sentence.into(),
    }
}

fn finding(name: &str, sentence: &str) -> Finding {
    Finding {
        name: name.into(),
        sentence: sentence.into(),
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            strata: vec![
                stratum(
                    "s0",
                    Gender::Female,
                    (19, 35),
                    "white",
                    "Breast tissue shadows overlie both lung bases.",
                ),
                stratum(
                    "s1",
                    Gender::Male,
                    (70, 91),
                    "black",
                    "Degenerative osteophytes along thoracic spine.",
                ),
                stratum(
                    "s2",
                    Gender::Female,
                    (60, 85),
                    "asian",
                    "Osteopenic bones with calcified aortic knob.",
                ),
                stratum(
                    "s3",
                    Gender::Male,
                    (19, 40),
                    "hispanic",
                    "Prominent muscular chest wall soft tissues.",
                ),
                stratum(
                    "s4",
                    Gender::Female,
                    (40, 60),
                    "other",
                    "Surgical clips project over right axilla.",
                ),
            ],
            findings: vec![
                finding("normal", "Heart size normal and lungs clear."),
                finding("cardiomegaly", "Heart enlarged with pulmonary vascular congestion."),
                finding("effusion", "Small left pleural effusion with basilar atelectasis."),
                finding("pneumonia", "Focal consolidation within right lower lobe."),
                finding("edema", "Diffuse interstitial edema with cephalization."),
                finding("nodule", "Solitary nodule within left upper lobe."),
            ],
            closing: "No pneumothorax identified.".into(),
            examples_per_stratum: 400,
            feature_dim: 1280,
            descriptor_dim: 16,
            noise: 0.3,
            stratum_feature_signal: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strata.len() < 2 {
            return Err(Error::Config(format!(
                "synthetic spec needs at least 2 strata, has {}",
                self.strata.len()
            )));
        }
        if self.findings.is_empty() {
            return Err(Error::Config("synthetic spec has no findings".into()));
        }
        for (i, a) in self.strata.iter().enumerate() {
            if a.age_min > a.age_max {
                return Err(Error::Config(format!("stratum {} has an empty age range", a.name)));
            }
            for b in &self.strata[i + 1..] {
                if a.gender == b.gender
                    && a.ethnicity == b.ethnicity
                    && a.age_min <= b.age_max
                    && b.age_min <= a.age_max
                {
                    return Err(Error::Config(format!(
                        "strata {} and {} overlap in demographics",
                        a.name, b.name
                    )));
                }
            }
        }
        if self.feature_dim == 0 || self.descriptor_dim == 0 {
            return Err(Error::Config("feature and descriptor dims must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.stratum_feature_signal >= 0.0) {
            return Err(Error::Config("noise and stratum signal must be non-negative".into()));
        }
        Ok(())
    }

    pub fn ethnicities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.strata {
            if !out.contains(&s.ethnicity) {
                out.push(s.ethnicity.clone());
            }
        }
        out
    }

    pub fn report_text(&self, finding: usize, stratum: usize) -> String {
        format!(
            "{} {} {}",
            self.findings[finding].sentence, self.strata[stratum].sentence, self.closing
        )
    }
}

/// Fixed seeded linear map from descriptors to feature vectors, standing in
/// for a pretrained image backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct StubExtractor {
    descriptor_dim: usize,
    feature_dim: usize,
    projection: Vec<f32>,
}

impl StubExtractor {
    pub fn new(descriptor_dim: usize, feature_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (descriptor_dim as f64).sqrt();
        let projection = (0..descriptor_dim * feature_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        Self {
            descriptor_dim,
            feature_dim,
            projection,
        }
    }

    pub fn extract(&self, descriptor: &[f64]) -> Result<Vec<f32>> {
        if descriptor.len() != self.descriptor_dim {
            return Err(Error::Data(format!(
                "descriptor has {} values, extractor expects {}",
                descriptor.len(),
                self.descriptor_dim
            )));
        }
        let mut out = vec![0.0f64; self.feature_dim];
        for (i, &x) in descriptor.iter().enumerate() {
            let row = &self.projection[i * self.feature_dim..(i + 1) * self.feature_dim];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += x * w as f64;
            }
        }
        Ok(out.into_iter().map(|v| v as f32).collect())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Stratum index of every generated point, in output order.
pub fn stratum_of(spec: &SynthSpec, index: usize) -> usize {
    index / spec.examples_per_stratum
}

/// Generates `strata × examples_per_stratum` data points, stratum by
/// stratum, fully determined by `seed`. Cluster centres and the extractor
/// come from stream 0 of the seeded generator; stratum `s` draws from
/// stream `s + 1`, so strata are generated in parallel and merged in order.
pub fn synthesize_corpus(spec: &SynthSpec, seed: u64) -> Result<Vec<DataPoint>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extractor = StubExtractor::new(spec.descriptor_dim, spec.feature_dim, rng.random());
    let finding_centres: Vec<Vec<f64>> = spec
        .findings
        .iter()
        .map(|_| gaussian_vec(&mut rng, spec.descriptor_dim))
        .collect();
    let stratum_centres: Vec<Vec<f64>> = spec
        .strata
        .iter()
        .map(|_| gaussian_vec(&mut rng, spec.descriptor_dim))
        .collect();
    let cleaning = CleaningConfig::default();
    let per_stratum: Vec<Result<Vec<DataPoint>>> = spec
        .strata
        .par_iter()
        .enumerate()
        .map(|(s, st)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            (0..spec.examples_per_stratum)
                .map(|i| {
                    let f = rng.random_range(0..spec.findings.len());
                    let age = rng.random_range(st.age_min..=st.age_max);
                    let noise = gaussian_vec(&mut rng, spec.descriptor_dim);
                    let descriptor: Vec<f64> = (0..spec.descriptor_dim)
                        .map(|d| {
                            finding_centres[f][d]
                                + spec.stratum_feature_signal * stratum_centres[s][d]
                                + spec.noise * noise[d]
                        })
                        .collect();
                    let id = format!("syn-{s}-{i:05}");
                    let raw = RawReport {
                        id: id.clone(),
                        text: spec.report_text(f, s),
                    };
                    let report = clean_report(&raw, &cleaning).into_report().ok_or_else(|| {
                        Error::Config(format!(
                            "template for finding {f} and stratum {s} does not survive cleaning"
                        ))
                    })?;
                    Ok(DataPoint {
                        id,
                        features: extractor.extract(&descriptor)?,
                        report,
                        demographics: DemographicRecord {
                            gender: st.gender,
                            age,
                            ethnicity: st.ethnicity.clone(),
                        },
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(spec.strata.len() * spec.examples_per_stratum);
    for points in per_stratum {
        out.extend(points?);
    }
    Ok(out)
}
