//! Inter-object relations: a proximity graph over box centers and a
//! verb-phrase table keyed by class pairs.
//!
//! Two instances are linked when their center distance is below a fraction
//! of the image diagonal; each graph edge whose class pair appears in the
//! table emits one (subject, phrase, object) triple. Phrases marked
//! `requires_containment` fire only when one box fully contains the other,
//! with the contained instance as subject; for the rest, the instance whose
//! class is listed first in the rule is the subject.
//!
//! The default table ships as `assets/relations.json` and is embedded in
//! the binary; deployments may point the config at an edited copy.

use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::annotation::{ImageMeta, ObbInstance};
use crate::error::{ForgeError, Result};
use crate::geometry;

/// One candidate verb phrase of a relation rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationPhrase {
    pub text: String,
    #[serde(default)]
    pub requires_containment: bool,
}

/// Verb phrases for one unordered class pair. `classes[0]` names the
/// subject side for phrases without a containment gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRule {
    pub classes: [String; 2],
    pub phrases: Vec<RelationPhrase>,
}

#[derive(Deserialize)]
struct RelationFile {
    rules: Vec<RelationRule>,
}

/// The full phrase table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTable {
    pub rules: Vec<RelationRule>,
}

static EMBEDDED: LazyLock<RelationTable> = LazyLock::new(|| {
    RelationTable::from_json_str(include_str!("../../../assets/relations.json"))
        .expect("embedded relation table is valid")
});

impl RelationTable {
    /// Parses and validates a relation table from JSON.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: RelationFile = serde_json::from_str(json)
            .map_err(|e| ForgeError::invalid("relation table", e.to_string()))?;
        for rule in &file.rules {
            if rule.phrases.is_empty() {
                return Err(ForgeError::invalid(
                    "relation table",
                    format!("rule {:?} has no phrases", rule.classes),
                ));
            }
            if rule.phrases.iter().any(|p| p.text.trim().is_empty()) {
                return Err(ForgeError::invalid(
                    "relation table",
                    format!("rule {:?} has an empty phrase", rule.classes),
                ));
            }
        }
        Ok(RelationTable { rules: file.rules })
    }

    /// Loads a table from a JSON file on disk.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ForgeError::io(format!("reading relation table {}", path.display()), e))?;
        Self::from_json_str(&text)
    }

    /// The table compiled into the binary from `assets/relations.json`.
    pub fn embedded() -> &'static RelationTable {
        &EMBEDDED
    }

    /// Finds the rule covering an unordered class pair.
    pub fn lookup(&self, a: &str, b: &str) -> Option<&RelationRule> {
        self.rules.iter().find(|rule| {
            let [x, y] = &rule.classes;
            (x == a && y == b) || (x == b && y == a)
        })
    }

    /// Every phrase text in the table (deduplicated, table order).
    pub fn phrase_texts(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for rule in &self.rules {
            for phrase in &rule.phrases {
                if !seen.contains(&phrase.text.as_str()) {
                    seen.push(phrase.text.as_str());
                }
            }
        }
        seen
    }
}

/// One emitted relation: `subject` and `object` are instance ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationTriple {
    pub subject: String,
    pub phrase: String,
    pub object: String,
}

/// Index pairs (i < j) of instances whose center distance is strictly below
/// `threshold` pixels.
pub fn proximity_edges(instances: &[ObbInstance], threshold: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..instances.len() {
        for j in i + 1..instances.len() {
            if instances[i].bbox.center_distance(&instances[j].bbox) < threshold {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Connected components of the proximity graph (union-find), each sorted,
/// components ordered by smallest member. Singletons included.
pub fn proximity_components(instances: &[ObbInstance], threshold: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..instances.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for (i, j) in proximity_edges(instances, threshold) {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..instances.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Emits relation triples for one image: for each proximity edge whose class
/// pair has a rule, the first phrase whose gate passes yields one triple.
pub fn build_relations(
    instances: &[ObbInstance],
    image: &ImageMeta,
    table: &RelationTable,
    distance_fraction: f64,
) -> Vec<RelationTriple> {
    let threshold = distance_fraction * image.diagonal();
    let mut triples = Vec::new();
    for (i, j) in proximity_edges(instances, threshold) {
        let (a, b) = (&instances[i], &instances[j]);
        let Some(rule) = table.lookup(&a.class_name, &b.class_name) else {
            continue;
        };
        for phrase in &rule.phrases {
            let pair = if phrase.requires_containment {
                if geometry::contains(&a.bbox, &b.bbox) {
                    Some((b, a)) // b sits inside a
                } else if geometry::contains(&b.bbox, &a.bbox) {
                    Some((a, b))
                } else {
                    None
                }
            } else if a.class_name == rule.classes[0] {
                Some((a, b))
            } else {
                Some((b, a))
            };
            if let Some((subject, object)) = pair {
                triples.push(RelationTriple {
                    subject: subject.instance_id.clone(),
                    phrase: phrase.text.clone(),
                    object: object.instance_id.clone(),
                });
                break;
            }
        }
    }
    triples
}
