//! Referring-expression templates.
//!
//! Phrase: `The/A ⟨size⟩ ⟨color⟩ category ⟨in the location⟩.` — "The" iff
//! the instance is the only one of its class in the image, size and color
//! in RNG-chosen order, normal size and absent color rendered as nothing.
//!
//! Sentence: `A ⟨size_i⟩ ⟨color_i⟩ category_i relation-phrase the
//! category_j ⟨in the location_j⟩.` — the relation must be one of the
//! subject's extracted relations.
//!
//! Every rendered expression matches the grammar regex built by
//! [`phrase_grammar`]; that regex is itself exercised by property tests.

use rand::Rng;
use regex::Regex;

use crate::attributes::{AttributeSet, SizeLabel};
use crate::error::{ForgeError, Result};

/// What a rendered expression is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprKind {
    Phrase,
    Sentence,
}

/// A rendered expression and the instances it denotes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expression {
    pub text: String,
    pub subject_ids: Vec<String>,
    pub kind: ExprKind,
}

/// Which optional phrase slots to render. The benchmark's referring
/// expressions mask down to a single attribute; training phrases use all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseSlots {
    pub color: bool,
    pub size: bool,
    pub location: bool,
}

impl PhraseSlots {
    pub const ALL: PhraseSlots = PhraseSlots { color: true, size: true, location: true };

    /// Exactly one slot enabled, index in 0..3 (color, size, location).
    pub fn only(index: usize) -> PhraseSlots {
        PhraseSlots { color: index == 0, size: index == 1, location: index == 2 }
    }
}

/// Class name as rendered in text: hyphens become spaces.
pub fn display_class(class: &str) -> String {
    class.replace('-', " ")
}

/// Naive plural of a rendered class name.
pub fn pluralize_class(class: &str) -> String {
    format!("{}s", display_class(class))
}

/// Assembles "<article>[ size][ color] noun[ in the location]." with the
/// size/color pair swapped when `color_first` is set. `None` slots render
/// as nothing; word joining never produces double spaces.
fn render_noun_phrase(
    article: &str,
    size: Option<&str>,
    color: Option<&str>,
    noun: &str,
    location: Option<&str>,
    color_first: bool,
) -> String {
    let mut words: Vec<&str> = vec![article];
    let (first, second) = if color_first { (color, size) } else { (size, color) };
    words.extend(first);
    words.extend(second);
    words.push(noun);
    let mut text = words.join(" ");
    if let Some(cell) = location {
        text.push_str(" in the ");
        text.push_str(cell);
    }
    text.push('.');
    text
}

/// Renders the referring phrase for one instance with a subset of the
/// optional slots. `unique_in_class` selects "The" over "A".
pub fn phrase_with_slots(
    attrs: &AttributeSet,
    unique_in_class: bool,
    slots: PhraseSlots,
    rng: &mut impl Rng,
) -> Expression {
    let noun = display_class(&attrs.category);
    let text = render_noun_phrase(
        if unique_in_class { "The" } else { "A" },
        if slots.size { attrs.relative_size.render_word() } else { None },
        if slots.color { attrs.color.as_deref() } else { None },
        &noun,
        if slots.location { Some(attrs.relative_location.label()) } else { None },
        rng.random_bool(0.5),
    );
    Expression {
        text,
        subject_ids: vec![attrs.instance_id.clone()],
        kind: ExprKind::Phrase,
    }
}

/// Full-slot referring phrase.
pub fn phrase(attrs: &AttributeSet, unique_in_class: bool, rng: &mut impl Rng) -> Expression {
    phrase_with_slots(attrs, unique_in_class, PhraseSlots::ALL, rng)
}

/// Renders a relation sentence for subject `attrs_i` and object `attrs_j`.
/// `(relation_phrase, attrs_j.instance_id)` must be one of the subject's
/// extracted relations.
pub fn sentence(
    attrs_i: &AttributeSet,
    attrs_j: &AttributeSet,
    relation_phrase: &str,
    rng: &mut impl Rng,
) -> Result<Expression> {
    let present = attrs_i
        .relations
        .iter()
        .any(|r| r.phrase == relation_phrase && r.target == attrs_j.instance_id);
    if !present {
        return Err(ForgeError::invalid(
            "relation",
            format!(
                "instance '{}' has no '{relation_phrase}' relation targeting '{}'",
                attrs_i.instance_id, attrs_j.instance_id
            ),
        ));
    }
    let noun_i = display_class(&attrs_i.category);
    let subject = render_noun_phrase(
        "A",
        attrs_i.relative_size.render_word(),
        attrs_i.color.as_deref(),
        &noun_i,
        None,
        rng.random_bool(0.5),
    );
    let subject = subject.trim_end_matches('.');
    let noun_j = display_class(&attrs_j.category);
    let text = format!(
        "{subject} {relation_phrase} the {noun_j} in the {}.",
        attrs_j.relative_location.label()
    );
    Ok(Expression {
        text,
        subject_ids: vec![attrs_i.instance_id.clone()],
        kind: ExprKind::Sentence,
    })
}

/// True iff `candidate` is denoted by the phrase rendered for `subject`
/// with `slots`: equal category and equal values on every slot the phrase
/// actually rendered (absent color and normal size render nothing, so they
/// constrain nothing).
pub fn matches_rendered_phrase(
    candidate: &AttributeSet,
    subject: &AttributeSet,
    slots: PhraseSlots,
) -> bool {
    if candidate.category != subject.category {
        return false;
    }
    if slots.color {
        if let Some(color) = &subject.color {
            if candidate.color.as_ref() != Some(color) {
                return false;
            }
        }
    }
    if slots.size && subject.relative_size != SizeLabel::Normal {
        if candidate.relative_size != subject.relative_size {
            return false;
        }
    }
    if slots.location && candidate.relative_location != subject.relative_location {
        return false;
    }
    true
}

fn alternation(words: &[String]) -> String {
    let escaped: Vec<String> = words.iter().map(|w| regex::escape(w)).collect();
    escaped.join("|")
}

const CELL_PATTERN: &str =
    "top left|top right|bottom left|bottom right|top|bottom|left|center|right";

/// The phrase grammar as a regex over a known category and color
/// vocabulary: `^(The|A)( size)?( color)? category( in the cell)?\.$`
/// with the size/color pair allowed in either order.
pub fn phrase_grammar(categories: &[String], colors: &[String]) -> Regex {
    let nouns: Vec<String> = categories.iter().map(|c| display_class(c)).collect();
    let size = "(?: (?:small|large))";
    let color = if colors.is_empty() {
        String::new()
    } else {
        format!("(?: (?:{}))", alternation(colors))
    };
    let mid = if color.is_empty() {
        format!("{size}?")
    } else {
        format!("(?:{size}?{color}?|{color}?{size}?)")
    };
    let pattern = format!(
        "^(?:The|A){mid} (?:{})(?: in the (?:{CELL_PATTERN}))?\\.$",
        alternation(&nouns),
    );
    Regex::new(&pattern).unwrap()
}

/// The sentence grammar over known categories, colors, and relation
/// phrases.
pub fn sentence_grammar(categories: &[String], colors: &[String], phrases: &[String]) -> Regex {
    let nouns = alternation(&categories.iter().map(|c| display_class(c)).collect::<Vec<_>>());
    let size = "(?: (?:small|large))";
    let color = if colors.is_empty() {
        String::new()
    } else {
        format!("(?: (?:{}))", alternation(colors))
    };
    let mid = if color.is_empty() {
        format!("{size}?")
    } else {
        format!("(?:{size}?{color}?|{color}?{size}?)")
    };
    let pattern = format!(
        "^A{mid} (?:{nouns}) (?:{}) the (?:{nouns})(?: in the (?:{CELL_PATTERN}))?\\.$",
        alternation(phrases),
    );
    Regex::new(&pattern).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::RelationRef;
    use crate::geometry::GridPosition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn attrs(
        id: &str,
        category: &str,
        color: Option<&str>,
        size: SizeLabel,
        location: GridPosition,
    ) -> AttributeSet {
        AttributeSet {
            instance_id: id.into(),
            category: category.into(),
            color: color.map(String::from),
            relative_size: size,
            relative_location: location,
            relations: vec![],
        }
    }

    #[test]
    fn full_phrase_renders_both_orders_deterministically() {
        let a = attrs("p0", "plane", Some("white"), SizeLabel::Large, GridPosition::TopLeft);
        let mut seen = std::collections::HashSet::new();
        for seed in 0..32 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = phrase(&a, true, &mut rng);
            assert!(
                e.text == "The large white plane in the top left."
                    || e.text == "The white large plane in the top left.",
                "unexpected rendering: {}",
                e.text
            );
            seen.insert(e.text.clone());
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(phrase(&a, true, &mut rng2), e);
        }
        assert_eq!(seen.len(), 2, "both attribute orders should occur across seeds");
    }

    #[test]
    fn bare_phrase_when_all_optionals_absent() {
        let a = attrs("s0", "ship", None, SizeLabel::Normal, GridPosition::Center);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = phrase_with_slots(&a, false, PhraseSlots { color: true, size: true, location: false }, &mut rng);
        assert_eq!(e.text, "A ship.");
    }

    #[test]
    fn normal_size_is_unmarked() {
        let a = attrs("s0", "ship", Some("gray"), SizeLabel::Normal, GridPosition::Bottom);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = phrase(&a, false, &mut rng);
        assert_eq!(e.text, "A gray ship in the bottom.");
    }

    #[test]
    fn hyphenated_classes_render_with_spaces() {
        let a = attrs("t0", "storage-tank", None, SizeLabel::Small, GridPosition::Right);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = phrase(&a, true, &mut rng);
        assert_eq!(e.text, "The small storage tank in the right.");
    }

    #[test]
    fn sentence_requires_a_real_relation() {
        let mut vehicle =
            attrs("v0", "small-vehicle", None, SizeLabel::Normal, GridPosition::Center);
        let building = attrs("b0", "building", None, SizeLabel::Normal, GridPosition::Bottom);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sentence(&vehicle, &building, "parked at", &mut rng).is_err());

        vehicle.relations.push(RelationRef { phrase: "parked at".into(), target: "b0".into() });
        let e = sentence(&vehicle, &building, "parked at", &mut rng).unwrap();
        assert_eq!(e.text, "A small vehicle parked at the building in the bottom.");
        assert_eq!(e.subject_ids, vec!["v0".to_string()]);
        assert_eq!(e.kind, ExprKind::Sentence);
    }

    #[test]
    fn sentence_carries_subject_attributes() {
        let mut plane = attrs("p0", "plane", Some("white"), SizeLabel::Large, GridPosition::Top);
        let airport = attrs("a0", "airport", None, SizeLabel::Large, GridPosition::Center);
        plane.relations.push(RelationRef { phrase: "parked at".into(), target: "a0".into() });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = sentence(&plane, &airport, "parked at", &mut rng).unwrap();
        assert!(
            e.text == "A large white plane parked at the airport in the center."
                || e.text == "A white large plane parked at the airport in the center.",
            "{}",
            e.text
        );
    }

    #[test]
    fn rendered_phrases_match_the_grammar() {
        let categories = vec!["plane".to_string(), "storage-tank".to_string(), "ship".to_string()];
        let colors = vec!["white".to_string(), "gray".to_string()];
        let grammar = phrase_grammar(&categories, &colors);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sizes = [SizeLabel::Small, SizeLabel::Normal, SizeLabel::Large];
        for (ci, category) in categories.iter().enumerate() {
            for color in [None, Some("white"), Some("gray")] {
                for size in sizes {
                    for cell in GridPosition::all() {
                        let a = attrs("x", category, color, size, cell);
                        for slot_mask in 0..8u8 {
                            let slots = PhraseSlots {
                                color: slot_mask & 1 != 0,
                                size: slot_mask & 2 != 0,
                                location: slot_mask & 4 != 0,
                            };
                            let e = phrase_with_slots(&a, ci % 2 == 0, slots, &mut rng);
                            assert!(grammar.is_match(&e.text), "{} rejected", e.text);
                            assert!(!e.text.contains("  "), "double space in {}", e.text);
                            assert!(!e.text.ends_with(" ."), "dangling space in {}", e.text);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn grammar_rejects_malformed_strings() {
        let categories = vec!["plane".to_string()];
        let colors = vec!["white".to_string()];
        let g = phrase_grammar(&categories, &colors);
        for bad in [
            "The plane",                          // no period
            "The  white plane.",                  // double space
            "A small small plane.",               // doubled size
            "The white plane in the.",            // dangling preposition
            "The plane in the middle.",           // unknown cell
            "An plane.",                          // unknown article
            "The large white ship in the top left.", // unknown category
        ] {
            assert!(!g.is_match(bad), "grammar accepted {bad:?}");
        }
    }

    #[test]
    fn location_clause_omitted_when_absent() {
        assert_eq!(
            render_noun_phrase("A", None, None, "vehicle", None, false),
            "A vehicle."
        );
        assert_eq!(
            render_noun_phrase("A", Some("small"), None, "vehicle", Some("bottom"), true),
            "A small vehicle in the bottom."
        );
    }

    #[test]
    fn matcher_uses_rendered_constraints_only() {
        let subject = attrs("a", "plane", Some("white"), SizeLabel::Normal, GridPosition::Top);
        let other_cell = attrs("b", "plane", Some("white"), SizeLabel::Large, GridPosition::Bottom);
        // Normal size renders nothing, so size never constrains here.
        assert!(matches_rendered_phrase(&other_cell, &subject, PhraseSlots { color: true, size: true, location: false }));
        assert!(!matches_rendered_phrase(&other_cell, &subject, PhraseSlots::ALL)); // location differs
        let gray = attrs("c", "plane", Some("gray"), SizeLabel::Normal, GridPosition::Top);
        assert!(!matches_rendered_phrase(&gray, &subject, PhraseSlots { color: true, size: false, location: false }));
        assert!(matches_rendered_phrase(&gray, &subject, PhraseSlots { color: false, size: false, location: true }));
        let ship = attrs("d", "ship", Some("white"), SizeLabel::Normal, GridPosition::Top);
        assert!(!matches_rendered_phrase(&ship, &subject, PhraseSlots::ALL));
    }
}
