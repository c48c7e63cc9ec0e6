//! Dataset assembly: data points, balanced subsets, splits, file formats and
//! a synthetic corpus generator.

mod io;
mod sampling;
mod synth;

pub use io::{
    load_clean_dataset, read_records, write_clean_dataset, write_records, FeatureRef, FeatureStore, Record,
    FEATURE_BLOB, FEATURE_MANIFEST, RECORDS_FILE,
};
pub use sampling::{sample_keyed_subsets, sample_subsets, split, split_sizes, SplitManifest, SPLIT_RATIOS};
pub use synth::{stratum_of, synthesize_corpus, Finding, Stratum, StubExtractor, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::demographics::{DemographicEncoder, DemographicFields, DemographicRecord};
use crate::text::{encode_tokens, CleanReport, Vocabulary};
use crate::trainer::Example;
use crate::{Error, Result};

/// One study: image features, cleaned report and patient metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: String,
    pub features: Vec<f32>,
    pub report: CleanReport,
    pub demographics: DemographicRecord,
}

impl DataPoint {
    pub fn check(&self, feature_dim: usize) -> Result<()> {
        if self.features.len() != feature_dim {
            return Err(Error::Data(format!(
                "{}: {} features, expected {feature_dim}",
                self.id,
                self.features.len()
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{}: non-finite feature", self.id)));
        }
        Ok(())
    }

    /// Model-ready form with the selected demographic slots.
    pub fn to_example(
        &self,
        vocab: &Vocabulary,
        encoder: &DemographicEncoder,
        fields: DemographicFields,
        max_len: usize,
    ) -> Result<Example> {
        let full = encoder.encode(&self.demographics)?;
        Ok(Example {
            id: self.id.clone(),
            features: self.features.clone(),
            demographics: fields.select(&full),
            ids: encode_tokens(&self.report, vocab, max_len)?,
        })
    }
}

/// Converts many data points; see [`DataPoint::to_example`].
pub fn to_examples(
    points: &[&DataPoint],
    vocab: &Vocabulary,
    encoder: &DemographicEncoder,
    fields: DemographicFields,
    max_len: usize,
) -> Result<Vec<Example>> {
    points
        .iter()
        .map(|p| p.to_example(vocab, encoder, fields, max_len))
        .collect()
}
