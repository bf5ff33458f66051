//! Corpus and mixture-recipe data model.

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const LUFS_MIN: f64 = -33.0;
pub const LUFS_MAX: f64 = -25.0;
pub const MIN_DURATION_S: f64 = 3.0;
pub const MAX_DURATION_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pitch {
    High,
    Neutral,
    Low,
}

impl Pitch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pitch::High => "high",
            Pitch::Neutral => "neutral",
            Pitch::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tempo {
    Fast,
    Neutral,
    Slow,
}

impl Tempo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tempo::Fast => "fast",
            Tempo::Neutral => "neutral",
            Tempo::Slow => "slow",
        }
    }
}

/// The six style attributes every utterance carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleAttributes {
    pub speaker_id: String,
    pub emotion: String,
    pub pitch: Pitch,
    pub gender: String,
    pub accent: String,
    pub tempo: Tempo,
}

/// Names of the six attributes, used for clue highlighting and stratified
/// reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    SpeakerId,
    Emotion,
    Pitch,
    Gender,
    Accent,
    Tempo,
}

pub const ALL_ATTRIBUTES: [AttributeKind; 6] = [
    AttributeKind::SpeakerId,
    AttributeKind::Emotion,
    AttributeKind::Pitch,
    AttributeKind::Gender,
    AttributeKind::Accent,
    AttributeKind::Tempo,
];

impl AttributeKind {
    /// Word used when a clue names the attribute itself.
    pub fn display_word(&self) -> &'static str {
        match self {
            AttributeKind::SpeakerId => "speaker",
            AttributeKind::Emotion => "emotion",
            AttributeKind::Pitch => "pitch",
            AttributeKind::Gender => "gender",
            AttributeKind::Accent => "accent",
            AttributeKind::Tempo => "tempo",
        }
    }
}

impl StyleAttributes {
    pub fn get(&self, kind: AttributeKind) -> &str {
        match kind {
            AttributeKind::SpeakerId => &self.speaker_id,
            AttributeKind::Emotion => &self.emotion,
            AttributeKind::Pitch => self.pitch.as_str(),
            AttributeKind::Gender => &self.gender,
            AttributeKind::Accent => &self.accent,
            AttributeKind::Tempo => self.tempo.as_str(),
        }
    }

    /// Attributes on which `self` and `other` disagree.
    pub fn differing(&self, other: &StyleAttributes) -> Vec<AttributeKind> {
        ALL_ATTRIBUTES
            .iter()
            .copied()
            .filter(|&k| self.get(k) != other.get(k))
            .collect()
    }
}

/// One labeled utterance: the manifest JSONL row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub path: String,
    pub duration_s: f64,
    #[serde(flatten)]
    pub attributes: StyleAttributes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClueKind {
    TypeIText,
    TypeIiReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthClass {
    Long,
    Mid,
    Short,
}

impl LengthClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            LengthClass::Long => "long",
            LengthClass::Mid => "mid",
            LengthClass::Short => "short",
        }
    }
}

/// Either a standalone style description (type I) or a reference-audio
/// prompt naming the shared attribute (type II).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClueSpec {
    pub kind: ClueKind,
    pub text: String,
    pub length_class: LengthClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highlighted_attribute: Option<AttributeKind>,
}

impl ClueSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        match self.kind {
            ClueKind::TypeIText => {
                if self.reference_id.is_some() || self.highlighted_attribute.is_some() {
                    return Err(DatasetError::Validation(
                        "type I clue must not carry a reference or highlighted attribute".to_string(),
                    ));
                }
            }
            ClueKind::TypeIiReference => {
                if self.reference_id.is_none() || self.highlighted_attribute.is_none() {
                    return Err(DatasetError::Validation(
                        "type II clue requires reference_id and highlighted_attribute".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// A reproducible recipe for one mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub mixture_id: String,
    pub target_id: String,
    pub interference_id: String,
    pub target_lufs: f64,
    pub interference_lufs: f64,
    /// Interference start offset in samples.
    pub onset: usize,
    pub clue: ClueSpec,
    pub split: Split,
    /// Gain applied by the clipping guard at synthesis time; 1.0 until then.
    pub clipping_gain: f64,
}
