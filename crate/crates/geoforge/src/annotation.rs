//! Canonical data model for annotated images: manifest ingestion, corpus
//! validation, and pseudo-label merging.
//!
//! The input manifest is UTF-8 JSON Lines, one image record per line (see
//! `docs/formats.md`). Boxes arrive either as 5-parameter oriented boxes or
//! as 4-corner polygons; polygons are reduced to minimum-area oriented
//! rectangles at load time, and every box is clamped to the image bounds.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::geometry::{self, OrientedBox};

/// Origin dataset of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SourceDataset {
    Dota,
    Dior,
    Fair1m,
    #[default]
    Other,
}

/// Whether an instance came from ground truth or a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    #[default]
    GroundTruth,
    PseudoLabel,
}

/// Image identity and geometry; `path` is resolved against the raster root
/// when pixels are needed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMeta {
    pub id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub source: SourceDataset,
}

impl ImageMeta {
    /// Length of the image diagonal in pixels.
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// One annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObbInstance {
    pub instance_id: String,
    pub class_name: String,
    pub bbox: OrientedBox,
    pub provenance: Provenance,
}

/// A question/answer pair attached to an image (VQA sources).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    /// Protocol category, e.g. "presence", "comparison", "rural_urban".
    pub category: String,
}

/// One image with its instances and any text-side annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub meta: ImageMeta,
    pub instances: Vec<ObbInstance>,
    pub qa: Vec<QaPair>,
    pub scene_label: Option<String>,
}

/// A validated collection of images with a class registry covering every
/// instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub images: Vec<ImageEntry>,
    /// Sorted, duplicate-free class names.
    pub class_registry: Vec<String>,
}

impl Corpus {
    /// Looks an image up by id.
    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|e| e.meta.id == id)
    }

    /// Total number of instances across all images.
    pub fn instance_count(&self) -> usize {
        self.images.iter().map(|e| e.instances.len()).sum()
    }
}

#[derive(Deserialize)]
struct RawBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    theta: f64,
}

#[derive(Deserialize)]
struct RawInstance {
    #[serde(default)]
    id: Option<String>,
    class: String,
    #[serde(rename = "box")]
    bbox: Option<RawBox>,
    polygon: Option<Vec<f64>>,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Deserialize)]
struct RawImage {
    id: String,
    path: PathBuf,
    width: u32,
    height: u32,
    #[serde(default)]
    source: SourceDataset,
    #[serde(default)]
    instances: Vec<RawInstance>,
    #[serde(default)]
    qa: Vec<QaPair>,
    #[serde(default)]
    scene_label: Option<String>,
}

/// Loads and validates a JSONL manifest. See [`load_corpus_with_registry`]
/// for closed-registry loading.
pub fn load_corpus(manifest: &Path) -> Result<Corpus> {
    load_corpus_with_registry(manifest, None)
}

/// Loads a manifest; when `registry` is given, any instance class outside it
/// is a validation error, and the returned corpus keeps the registry order.
pub fn load_corpus_with_registry(manifest: &Path, registry: Option<&[String]>) -> Result<Corpus> {
    let file = File::open(manifest)
        .map_err(|e| ForgeError::io(format!("opening manifest {}", manifest.display()), e))?;
    let reader = BufReader::new(file);

    let validation = |line: usize, field: &str, message: String| ForgeError::Validation {
        path: manifest.to_path_buf(),
        line,
        field: field.to_string(),
        message,
    };

    let mut images: Vec<ImageEntry> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut classes: BTreeSet<String> = BTreeSet::new();
    for (index, line) in reader.lines().enumerate() {
        let lineno = index + 1;
        let line = line.map_err(|e| ForgeError::io(format!("reading manifest line {lineno}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawImage = serde_json::from_str(&line).map_err(|e| ForgeError::Parse {
            path: manifest.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if raw.width == 0 || raw.height == 0 {
            return Err(validation(
                lineno,
                "width/height",
                format!("nonpositive image dimensions {}x{}", raw.width, raw.height),
            ));
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(validation(lineno, "id", format!("duplicate image id '{}'", raw.id)));
        }

        let mut instances = Vec::with_capacity(raw.instances.len());
        let mut instance_ids: HashSet<String> = HashSet::new();
        for (i, inst) in raw.instances.into_iter().enumerate() {
            if let Some(allowed) = registry {
                if !allowed.iter().any(|c| c == &inst.class) {
                    return Err(validation(
                        lineno,
                        "class",
                        format!("unknown class '{}' (closed registry)", inst.class),
                    ));
                }
            }
            let bbox = match (&inst.bbox, &inst.polygon) {
                (Some(b), None) => OrientedBox::new(b.cx, b.cy, b.w, b.h, b.theta),
                (None, Some(poly)) => {
                    if poly.len() != 8 {
                        return Err(validation(
                            lineno,
                            "polygon",
                            format!("expected 8 coordinates, got {}", poly.len()),
                        ));
                    }
                    let pts: Vec<[f64; 2]> =
                        poly.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                    geometry::min_area_rect(&pts)
                }
                (Some(_), Some(_)) => {
                    return Err(validation(lineno, "box", "both box and polygon given".into()))
                }
                (None, None) => {
                    return Err(validation(lineno, "box", "neither box nor polygon given".into()))
                }
            }
            .and_then(|b| geometry::clamp_to_image(&b, raw.width, raw.height))
            .map_err(|e| validation(lineno, "box", e.to_string()))?;

            let instance_id = inst.id.unwrap_or_else(|| format!("{}_{}", raw.id, i));
            if !instance_ids.insert(instance_id.clone()) {
                return Err(validation(
                    lineno,
                    "instances",
                    format!("duplicate instance id '{instance_id}'"),
                ));
            }
            classes.insert(inst.class.clone());
            instances.push(ObbInstance {
                instance_id,
                class_name: inst.class,
                bbox,
                provenance: inst.provenance,
            });
        }

        images.push(ImageEntry {
            meta: ImageMeta {
                id: raw.id,
                path: raw.path,
                width: raw.width,
                height: raw.height,
                source: raw.source,
            },
            instances,
            qa: raw.qa,
            scene_label: raw.scene_label,
        });
    }

    let class_registry = match registry {
        Some(allowed) => allowed.to_vec(),
        None => classes.into_iter().collect(),
    };
    Ok(Corpus { images, class_registry })
}

/// Merges detector outputs into a ground-truth corpus: pseudo instances
/// whose rotated IoU with ANY ground-truth instance of the same image
/// exceeds `iou_threshold` are dropped (class-agnostic spatial dedup);
/// survivors are appended with provenance [`Provenance::PseudoLabel`].
///
/// Ground-truth instances are never removed or mutated. Errors if the
/// pseudo corpus references image ids absent from the base corpus.
pub fn merge_pseudo_labels(corpus: &Corpus, pseudo: &Corpus, iou_threshold: f64) -> Result<Corpus> {
    if !(0.0 < iou_threshold && iou_threshold <= 1.0) {
        return Err(ForgeError::invalid(
            "iou_threshold",
            format!("{iou_threshold} outside (0, 1]"),
        ));
    }
    let mut orphans: Vec<String> = pseudo
        .images
        .iter()
        .filter(|p| corpus.image(&p.meta.id).is_none())
        .map(|p| p.meta.id.clone())
        .collect();
    if !orphans.is_empty() {
        orphans.sort();
        return Err(ForgeError::OrphanImages { ids: orphans });
    }

    let mut merged = corpus.clone();
    let mut classes: BTreeSet<String> = merged.class_registry.iter().cloned().collect();
    for pseudo_entry in &pseudo.images {
        let entry = merged
            .images
            .iter_mut()
            .find(|e| e.meta.id == pseudo_entry.meta.id)
            .expect("orphans checked above");
        let existing: Vec<OrientedBox> = entry
            .instances
            .iter()
            .filter(|i| i.provenance == Provenance::GroundTruth)
            .map(|i| i.bbox)
            .collect();
        for cand in &pseudo_entry.instances {
            let duplicate = existing
                .iter()
                .any(|gt| geometry::rotated_iou(gt, &cand.bbox) > iou_threshold);
            if duplicate {
                continue;
            }
            if entry.instances.iter().any(|i| i.instance_id == cand.instance_id) {
                return Err(ForgeError::invalid(
                    "pseudo label",
                    format!(
                        "instance id '{}' already exists in image '{}'",
                        cand.instance_id, entry.meta.id
                    ),
                ));
            }
            classes.insert(cand.class_name.clone());
            entry.instances.push(ObbInstance {
                provenance: Provenance::PseudoLabel,
                ..cand.clone()
            });
        }
    }
    merged.class_registry = classes.into_iter().collect();
    Ok(merged)
}
