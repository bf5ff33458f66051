//! Interference pairing and reference selection under attribute constraints.

use rand::Rng;

use super::types::{AttributeKind, UtteranceRecord};
use super::DatasetError;

/// Pick an interference utterance that differs from the target in at least
/// one style attribute. Same-speaker pairs are allowed when another
/// attribute differs; a candidate identical in all six attributes is never
/// returned.
pub fn pair_interference<'a>(
    target: &UtteranceRecord,
    pool: &'a [UtteranceRecord],
    rng: &mut impl Rng,
) -> Result<&'a UtteranceRecord, DatasetError> {
    let candidates: Vec<&UtteranceRecord> = pool
        .iter()
        .filter(|c| c.id != target.id && !target.attributes.differing(&c.attributes).is_empty())
        .collect();
    if candidates.is_empty() {
        return Err(DatasetError::PairingExhausted {
            what: "interference",
            target: target.id.clone(),
        });
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

/// Pick a reference utterance whose `attribute` matches the target's value
/// and differs from the interference's. The reference must be a different
/// utterance than the target, but may come from the target speaker.
pub fn select_reference<'a>(
    target: &UtteranceRecord,
    interference: &UtteranceRecord,
    pool: &'a [UtteranceRecord],
    attribute: AttributeKind,
    rng: &mut impl Rng,
) -> Result<&'a UtteranceRecord, DatasetError> {
    let t_val = target.attributes.get(attribute);
    let i_val = interference.attributes.get(attribute);
    let candidates: Vec<&UtteranceRecord> = pool
        .iter()
        .filter(|c| c.id != target.id && c.attributes.get(attribute) == t_val && c.attributes.get(attribute) != i_val)
        .collect();
    if candidates.is_empty() {
        return Err(DatasetError::PairingExhausted {
            what: "reference",
            target: target.id.clone(),
        });
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}
