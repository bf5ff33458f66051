//! Clue text rendering from the template table.
//!
//! The table ships as a JSON data file with one list per description length
//! plus the reference-audio prompts. Placeholders name attributes;
//! capitalized placeholders render capitalized.

use rand::Rng;
use serde::Deserialize;

use super::types::{AttributeKind, LengthClass, StyleAttributes};
use super::DatasetError;

const DEFAULT_TABLE: &str = include_str!("../../data/clue_templates.json");

#[derive(Debug, Clone, Deserialize)]
pub struct TemplateTable {
    pub long: Vec<String>,
    pub mid: Vec<String>,
    pub short: Vec<String>,
    pub type_ii: Vec<String>,
}

impl TemplateTable {
    /// The built-in table.
    pub fn builtin() -> TemplateTable {
        serde_json::from_str(DEFAULT_TABLE).expect("builtin template table parses")
    }

    pub fn from_json(json: &str) -> Result<TemplateTable, DatasetError> {
        serde_json::from_str(json).map_err(|e| DatasetError::Validation(format!("template table: {}", e)))
    }

    fn for_length(&self, length: LengthClass) -> &[String] {
        match length {
            LengthClass::Long => &self.long,
            LengthClass::Mid => &self.mid,
            LengthClass::Short => &self.short,
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn gender_word(gender: &str) -> &str {
    match gender {
        "female" => "lady",
        "male" => "gentleman",
        _ => "speaker",
    }
}

fn fill(template: &str, attrs: &StyleAttributes) -> String {
    let pairs: [(&str, String); 13] = [
        ("{gender}", attrs.gender.clone()),
        ("{Gender}", capitalize(&attrs.gender)),
        ("{gender_word}", gender_word(&attrs.gender).to_string()),
        ("{emotion}", attrs.emotion.clone()),
        ("{Emotion}", capitalize(&attrs.emotion)),
        ("{pitch}", attrs.pitch.as_str().to_string()),
        ("{Pitch}", capitalize(attrs.pitch.as_str())),
        ("{tempo}", attrs.tempo.as_str().to_string()),
        ("{Tempo}", capitalize(attrs.tempo.as_str())),
        ("{accent}", attrs.accent.clone()),
        ("{Accent}", capitalize(&attrs.accent)),
        ("{speaker}", attrs.speaker_id.clone()),
        ("{attribute}", String::new()), // only valid in type II prompts
    ];
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(k, &v);
    }
    out
}

/// Render a standalone (type I) style description of the given length,
/// choosing a template at random.
pub fn render_text_clue(attrs: &StyleAttributes, length: LengthClass, rng: &mut impl Rng) -> String {
    let table = TemplateTable::builtin();
    render_text_clue_with(&table, attrs, length, rng)
}

pub fn render_text_clue_with(
    table: &TemplateTable,
    attrs: &StyleAttributes,
    length: LengthClass,
    rng: &mut impl Rng,
) -> String {
    let set = table.for_length(length);
    let idx = rng.gen_range(0..set.len());
    fill(&set[idx], attrs)
}

/// Render with a fixed template index (deterministic path for tests and
/// golden strings).
pub fn render_text_clue_indexed(
    table: &TemplateTable,
    attrs: &StyleAttributes,
    length: LengthClass,
    idx: usize,
) -> String {
    let set = table.for_length(length);
    fill(&set[idx % set.len()], attrs)
}

/// Render the type II prompt naming the attribute shared with the
/// reference audio.
pub fn render_type_ii_prompt(table: &TemplateTable, attribute: AttributeKind, rng: &mut impl Rng) -> String {
    let idx = rng.gen_range(0..table.type_ii.len());
    table.type_ii[idx].replace("{attribute}", attribute.display_word())
}

pub fn render_type_ii_prompt_indexed(table: &TemplateTable, attribute: AttributeKind, idx: usize) -> String {
    table.type_ii[idx % table.type_ii.len()].replace("{attribute}", attribute.display_word())
}

/// Short description that names exactly one attribute, for diagnostics
/// where the clue must disambiguate on a single axis.
pub fn render_attribute_text(table: &TemplateTable, attrs: &StyleAttributes, attribute: AttributeKind) -> String {
    let idx = match attribute {
        AttributeKind::Pitch => 0,
        AttributeKind::Emotion => 1,
        AttributeKind::Tempo => 2,
        AttributeKind::SpeakerId => 3,
        AttributeKind::Gender => 4,
        AttributeKind::Accent => 5,
    };
    fill(&table.short[idx % table.short.len()], attrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::types::{Pitch, Tempo};

    fn attrs(gender: &str, emotion: &str, tempo: Tempo, pitch: Pitch) -> StyleAttributes {
        StyleAttributes {
            speaker_id: "spk3".to_string(),
            emotion: emotion.to_string(),
            pitch,
            gender: gender.to_string(),
            accent: "us".to_string(),
            tempo,
        }
    }

    #[test]
    fn long_template_exemplar() {
        let t = TemplateTable::builtin();
        let a = attrs("male", "shocked", Tempo::Slow, Pitch::High);
        let s = render_text_clue_indexed(&t, &a, LengthClass::Long, 0);
        assert_eq!(s, "Extract the male speaker with a shocked pitch and slow speaking rate.");
    }

    #[test]
    fn mid_template_exemplar() {
        let t = TemplateTable::builtin();
        let a = attrs("female", "happy", Tempo::Fast, Pitch::High);
        let s = render_text_clue_indexed(&t, &a, LengthClass::Mid, 0);
        assert_eq!(s, "The lady sounds happy");
    }

    #[test]
    fn short_template_exemplar() {
        let t = TemplateTable::builtin();
        let a = attrs("female", "happy", Tempo::Fast, Pitch::High);
        let s = render_text_clue_indexed(&t, &a, LengthClass::Short, 0);
        assert_eq!(s, "High-pitched speaker.");
    }

    #[test]
    fn type_ii_prompt_exemplar() {
        let t = TemplateTable::builtin();
        let s = render_type_ii_prompt_indexed(&t, AttributeKind::Emotion, 0);
        assert_eq!(s, "Isolate the speech with the same emotion as the reference.");
    }

    #[test]
    fn random_rendering_is_seed_deterministic() {
        use rand::SeedableRng;
        let a = attrs("male", "sad", Tempo::Slow, Pitch::Low);
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            render_text_clue(&a, LengthClass::Long, &mut r1),
            render_text_clue(&a, LengthClass::Long, &mut r2)
        );
    }
}
