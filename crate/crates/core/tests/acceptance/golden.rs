use radgen_core::text::{clean_report, CleanOutcome, CleaningConfig, RawReport, RejectReason};

use crate::Outcome;

enum Expect {
    Tokens(&'static str),
    Rejected(RejectReason),
}
use Expect::{Rejected, Tokens};

/// Crafted raw reports and their hand-derived cleaned interiors under the
/// shipped stop-word, standardization and prior-study lists.
const GOLDEN: [(&str, Expect); 25] = [
    (
        "The cardiac silhouette is normal in size. No pleural effusions or pneumothoraces.",
        Tokens("heart normal size pleural effusion pneumothorax"),
    ),
    (
        "Lungs are clear bilaterally. Heart size is normal. Osseous structures are intact.",
        Tokens("lungs clear bilaterally heart size normal bones intact"),
    ),
    (
        "Heart normal. Lungs clear. No effusion.",
        Rejected(RejectReason::TooShort),
    ),
    (
        "Compared to the prior study, there is no significant change in the lungs.",
        Rejected(RejectReason::PriorStudy),
    ),
    (
        "There is a 2 cm nodule in the right upper lobe, seen on image 3 of 5.",
        Tokens("cm nodule right upper lobe seen image"),
    ),
    (
        "Mild cardiomegaly. Left-sided PICC line terminates in the mid SVC.",
        Tokens("mild cardiomegaly left sided picc line terminates mid svc"),
    ),
    (
        "Patchy airspace disease at the right base may represent pneumonia in the appropriate setting.",
        Tokens("patchy consolidation right base may represent pneumonia appropriate setting"),
    ),
    (
        "There is air space disease in both lower lobes, concerning for aspiration.",
        Tokens("consolidation lower lobes concerning aspiration"),
    ),
    (
        "Heart size normal and lungs are clear without effusion.",
        Tokens("heart size normal lungs clear without effusion"),
    ),
    (
        "Heart size normal - lungs clear - no effusion seen here .",
        Tokens("heart size normal lungs clear effusion seen"),
    ),
    (
        "FINDINGS: PA AND LATERAL VIEWS OF THE CHEST.\nTHE LUNGS ARE WELL EXPANDED AND CLEAR.",
        Tokens("findings pa lateral views chest lungs well expanded clear"),
    ),
    (
        "The patient's heart doesn't appear enlarged; lungs are grossly clear.",
        Tokens("patient heart appear enlarged lungs grossly clear"),
    ),
    (
        "Endotracheal tube tip is 4.5cm above the carina. Lungs otherwise clear.",
        Tokens("endotracheal tube tip carina lungs otherwise clear"),
    ),
    (
        "No prior fractures are seen. The heart and mediastinum are within normal limits.",
        Tokens("prior fractures seen heart mediastinum within normal limits"),
    ),
    (
        "Bony structures demonstrate degenerative changes of the thoracic spine without acute fracture.",
        Tokens("bones demonstrate degenerative changes thoracic spine without acute fracture"),
    ),
    (
        "Cardiac size is upper normal. Small bilateral pleural effusions are present.",
        Tokens("heart size upper normal small bilateral pleural effusion present"),
    ),
    (
        "There is no air-space disease or pneumothorax identified in either lung.",
        Tokens("consolidation pneumothorax identified either lung"),
    ),
    (
        "Cardiac and silhouette contours are normal without focal consolidation seen today.",
        Tokens("heart contours normal without focal consolidation seen today"),
    ),
    (
        "Mediastinal   contours\tare within normal limits.  No acute osseous abnormality.",
        Tokens("mediastinal contours within normal limits acute osseous abnormality"),
    ),
    (
        "___ year old male. Heart size is normal and the lungs are clear.",
        Tokens("year old male heart size normal lungs clear"),
    ),
    (
        "Heart size normal. Lungs clear. No pleural effusion or pneumothorax (\u{2265} 1 cm).",
        Tokens("heart size normal lungs clear pleural effusion pneumothorax cm"),
    ),
    (
        "Trace left pleural effusion. Otherwise the heart, mediastinum and hila are unremarkable.",
        Tokens("trace left pleural effusion otherwise heart mediastinum hila unremarkable"),
    ),
    (
        "Bilateral chest tubes in place. No pneumothoraces. Effusions have decreased in size.",
        Tokens("bilateral chest tubes place pneumothorax effusions decreased size"),
    ),
    (
        "No previous history provided. Lungs are hyperinflated with flattened diaphragms consistent with COPD.",
        Tokens("previous history provided lungs hyperinflated flattened diaphragms consistent copd"),
    ),
    (
        "Interval placement of a right internal jugular line with tip in the SVC.",
        Tokens("interval placement right internal jugular line tip svc"),
    ),
];

pub fn golden_corpus_matches() -> Outcome {
    let cfg = CleaningConfig::default();
    let mut mismatches = Vec::new();
    let (mut kept, mut too_short, mut prior) = (0, 0, 0);
    for (i, (text, expect)) in GOLDEN.iter().enumerate() {
        let raw = RawReport {
            id: format!("golden-{i:02}"),
            text: text.to_string(),
        };
        let outcome = clean_report(&raw, &cfg);
        let ok = match (expect, &outcome) {
            (Tokens(want), CleanOutcome::Clean(r)) => {
                kept += 1;
                let want: Vec<&str> = want.split(' ').collect();
                let mut full = vec!["<start>"];
                full.extend(&want);
                full.push("<end>");
                r.interior() == want.as_slice() && r.tokens() == full.as_slice()
            }
            (Rejected(want), CleanOutcome::Rejected { reason, .. }) => {
                match reason {
                    RejectReason::TooShort => too_short += 1,
                    RejectReason::PriorStudy => prior += 1,
                    RejectReason::Empty => {}
                }
                want == reason
            }
            _ => false,
        };
        if !ok {
            mismatches.push(format!("#{i} got {outcome:?}"));
        }
    }
    if !mismatches.is_empty() {
        return Err(mismatches.join("; "));
    }
    Ok(format!(
        "{kept} cleaned exactly, {too_short} too short, {prior} prior study"
    ))
}
