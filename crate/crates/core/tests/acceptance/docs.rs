use crate::Outcome;

/// The README must say that published figures are not reproduced here and
/// that this property suite takes their place.
pub fn substitution_is_documented() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md");
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{path}: {e}"))?
        .to_lowercase();
    let required = ["not reproduced", "property suite", "acceptance"];
    let missing: Vec<&str> = required.iter().copied().filter(|w| !text.contains(w)).collect();
    if missing.is_empty() {
        Ok("README states the property-suite substitution".into())
    } else {
        Err(format!("README lacks {missing:?}"))
    }
}
