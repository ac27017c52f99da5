//! Per-instance attribute assembly: category, dominant color, relative size
//! (corpus-wide 20th/80th area percentiles per class), 3×3-grid location,
//! and inter-object relations.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::annotation::Corpus;
use crate::color;
use crate::error::{ForgeError, Result};
use crate::geometry::{self, GridPosition};
use crate::raster::RasterSource;
use crate::relations::{build_relations, RelationTable};

/// Relative size of an instance within its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SizeLabel {
    Small,
    Normal,
    Large,
}

impl SizeLabel {
    /// The word rendered in expressions; normal size is unmarked.
    pub fn render_word(&self) -> Option<&'static str> {
        match self {
            SizeLabel::Small => Some("small"),
            SizeLabel::Large => Some("large"),
            SizeLabel::Normal => None,
        }
    }
}

/// Value at 1-based index ⌈p·n/100⌉ of an ascending sample.
pub fn nearest_rank(sorted: &[f64], percent: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let n = sorted.len();
    let rank = ((percent * n as f64 / 100.0).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Per-class (20th, 80th) area percentiles in square pixels.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SizeThresholds {
    map: BTreeMap<String, (f64, f64)>,
}

impl SizeThresholds {
    /// Nearest-rank percentiles of instance areas (w·h) per class across
    /// the whole corpus. Classes with zero instances are omitted.
    pub fn compute(corpus: &Corpus) -> SizeThresholds {
        let mut areas: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for entry in &corpus.images {
            for inst in &entry.instances {
                areas.entry(inst.class_name.clone()).or_default().push(inst.bbox.area());
            }
        }
        let map = areas
            .into_iter()
            .map(|(class, mut v)| {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (class, (nearest_rank(&v, 20.0), nearest_rank(&v, 80.0)))
            })
            .collect();
        SizeThresholds { map }
    }

    /// The (p20, p80) pair for a class, if the corpus had any instances.
    pub fn get(&self, class: &str) -> Option<(f64, f64)> {
        self.map.get(class).copied()
    }

    /// Labels an area: strictly below p20 → small, strictly above p80 →
    /// large, otherwise normal.
    pub fn label(&self, class: &str, area: f64) -> Result<SizeLabel> {
        let (p20, p80) = self
            .get(class)
            .ok_or_else(|| ForgeError::UnknownClass { class: class.to_string() })?;
        Ok(if area < p20 {
            SizeLabel::Small
        } else if area > p80 {
            SizeLabel::Large
        } else {
            SizeLabel::Normal
        })
    }
}

/// One relation attached to a subject instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationRef {
    pub phrase: String,
    /// Instance id of the relation's object, always in the same image.
    pub target: String,
}

/// The five attribute slots of one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeSet {
    pub instance_id: String,
    /// a1 — the instance's class name.
    pub category: String,
    /// a2 — palette color name; absent when no rasters were supplied.
    pub color: Option<String>,
    /// a3 — relative size within the class.
    pub relative_size: SizeLabel,
    /// a4 — 3×3 grid cell of the box center.
    pub relative_location: GridPosition,
    /// a5 — relations where this instance is the subject.
    pub relations: Vec<RelationRef>,
}

/// Attributes of every instance of one image, in instance order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageAttributes {
    pub image_id: String,
    pub sets: Vec<AttributeSet>,
}

/// An image whose raster could not be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageFailure {
    pub image_id: String,
    pub error: String,
}

/// Extraction output: per-image attribute sets (corpus order) plus failures.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AttributeReport {
    pub images: Vec<ImageAttributes>,
    pub failed_images: Vec<ImageFailure>,
}

impl AttributeReport {
    pub fn for_image(&self, image_id: &str) -> Option<&ImageAttributes> {
        self.images.iter().find(|a| a.image_id == image_id)
    }

    /// Total attribute sets across all images.
    pub fn instance_count(&self) -> usize {
        self.images.iter().map(|a| a.sets.len()).sum()
    }
}

/// Extraction knobs; defaults match the shipped pipeline configuration.
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Number of k-means clusters for dominant-color naming.
    pub kmeans_k: usize,
    /// Base RNG seed; each instance derives a stable sub-seed from it.
    pub seed: u64,
    /// Proximity threshold as a fraction of the image diagonal.
    pub distance_fraction: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { kmeans_k: 3, seed: 0, distance_fraction: 0.1 }
    }
}

/// Stable per-instance seed: first 8 bytes of
/// SHA-256(base ‖ image_id ‖ index), independent of platform and process.
pub fn instance_seed(base: u64, image_id: &str, index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(image_id.as_bytes());
    hasher.update((index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Computes the a1..a5 attributes for every instance. Raster decode
/// failures mark the image failed and skip it without aborting the run;
/// without a raster source every `color` is `None`.
pub fn extract_attributes(
    corpus: &Corpus,
    rasters: Option<&dyn RasterSource>,
    table: &RelationTable,
    opts: &ExtractOptions,
) -> Result<AttributeReport> {
    let thresholds = SizeThresholds::compute(corpus);

    let per_image: Vec<std::result::Result<ImageAttributes, ImageFailure>> = corpus
        .images
        .par_iter()
        .map(|entry| {
            let raster = match rasters {
                Some(source) => match source.load(&entry.meta) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        return Err(ImageFailure {
                            image_id: entry.meta.id.clone(),
                            error: e.to_string(),
                        })
                    }
                },
                None => None,
            };

            let triples =
                build_relations(&entry.instances, &entry.meta, table, opts.distance_fraction);
            let mut relations_by_subject: HashMap<&str, Vec<RelationRef>> = HashMap::new();
            for t in &triples {
                relations_by_subject
                    .entry(t.subject.as_str())
                    .or_default()
                    .push(RelationRef { phrase: t.phrase.clone(), target: t.object.clone() });
            }

            let mut sets = Vec::with_capacity(entry.instances.len());
            for (index, inst) in entry.instances.iter().enumerate() {
                let attrs = (|| -> Result<AttributeSet> {
                    let relative_size = thresholds.label(&inst.class_name, inst.bbox.area())?;
                    let relative_location = geometry::grid_position(
                        inst.bbox.cx,
                        inst.bbox.cy,
                        entry.meta.width,
                        entry.meta.height,
                    )?;
                    let color = match &raster {
                        Some(r) => {
                            let seed = instance_seed(opts.seed, &entry.meta.id, index);
                            match color::dominant_color(r, &inst.bbox, opts.kmeans_k, seed) {
                                Ok(name) => Some(name.to_string()),
                                // A box too thin to cover a pixel center
                                // simply loses its color attribute.
                                Err(ForgeError::EmptyRegion { .. }) => None,
                                Err(e) => return Err(e),
                            }
                        }
                        None => None,
                    };
                    Ok(AttributeSet {
                        instance_id: inst.instance_id.clone(),
                        category: inst.class_name.clone(),
                        color,
                        relative_size,
                        relative_location,
                        relations: relations_by_subject
                            .remove(inst.instance_id.as_str())
                            .unwrap_or_default(),
                    })
                })();
                match attrs {
                    Ok(a) => sets.push(a),
                    Err(e) => {
                        return Err(ImageFailure {
                            image_id: entry.meta.id.clone(),
                            error: e.to_string(),
                        })
                    }
                }
            }
            Ok(ImageAttributes { image_id: entry.meta.id.clone(), sets })
        })
        .collect();

    let mut report = AttributeReport::default();
    for item in per_image {
        match item {
            Ok(attrs) => report.images.push(attrs),
            Err(failure) => report.failed_images.push(failure),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{ImageEntry, ImageMeta, ObbInstance, Provenance, SourceDataset};
    use crate::geometry::OrientedBox;
    use crate::raster::RgbRaster;

    fn entry(id: &str, width: u32, height: u32, instances: Vec<ObbInstance>) -> ImageEntry {
        ImageEntry {
            meta: ImageMeta {
                id: id.into(),
                path: format!("{id}.png").into(),
                width,
                height,
                source: SourceDataset::Other,
            },
            instances,
            qa: vec![],
            scene_label: None,
        }
    }

    fn inst(id: &str, class: &str, cx: f64, cy: f64, w: f64, h: f64) -> ObbInstance {
        ObbInstance {
            instance_id: id.into(),
            class_name: class.into(),
            bbox: OrientedBox::new(cx, cy, w, h, 0.0).unwrap(),
            provenance: Provenance::GroundTruth,
        }
    }

    struct MapSource(HashMap<String, RgbRaster>);

    impl RasterSource for MapSource {
        fn load(&self, meta: &ImageMeta) -> Result<RgbRaster> {
            self.0
                .get(&meta.id)
                .cloned()
                .ok_or_else(|| ForgeError::invalid("raster", format!("no raster for {}", meta.id)))
        }
    }

    #[test]
    fn nearest_rank_on_one_through_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 20.0), 2.0);
        assert_eq!(nearest_rank(&v, 80.0), 8.0);
        assert_eq!(nearest_rank(&[42.0], 20.0), 42.0);
        assert_eq!(nearest_rank(&[42.0], 80.0), 42.0);
    }

    #[test]
    fn size_labels_use_strict_inequalities() {
        let corpus = Corpus {
            images: vec![entry(
                "i",
                1000,
                1000,
                (1..=10).map(|k| inst(&format!("x{k}"), "plane", 500.0, 500.0, k as f64, 1.0)).collect(),
            )],
            class_registry: vec!["plane".into()],
        };
        let t = SizeThresholds::compute(&corpus);
        assert_eq!(t.get("plane"), Some((2.0, 8.0)));
        assert_eq!(t.label("plane", 1.0).unwrap(), SizeLabel::Small);
        assert_eq!(t.label("plane", 2.0).unwrap(), SizeLabel::Normal); // == p20
        assert_eq!(t.label("plane", 5.0).unwrap(), SizeLabel::Normal);
        assert_eq!(t.label("plane", 8.0).unwrap(), SizeLabel::Normal); // == p80
        assert_eq!(t.label("plane", 8.5).unwrap(), SizeLabel::Large);
        assert!(t.label("ship", 1.0).is_err());
    }

    #[test]
    fn all_equal_areas_label_normal() {
        let corpus = Corpus {
            images: vec![entry(
                "i",
                1000,
                1000,
                (0..5).map(|k| inst(&format!("x{k}"), "ship", 500.0, 500.0, 6.0, 4.0)).collect(),
            )],
            class_registry: vec!["ship".into()],
        };
        let t = SizeThresholds::compute(&corpus);
        for e in &corpus.images[0].instances {
            assert_eq!(t.label("ship", e.bbox.area()).unwrap(), SizeLabel::Normal);
        }
    }

    #[test]
    fn extreme_label_fractions_are_bounded() {
        // With n distinct areas, at most ⌈n/5⌉ can sit strictly below p20.
        let n = 37;
        let corpus = Corpus {
            images: vec![entry(
                "i",
                10_000,
                10_000,
                (1..=n).map(|k| inst(&format!("x{k}"), "c", 5000.0, 5000.0, k as f64, 1.0)).collect(),
            )],
            class_registry: vec!["c".into()],
        };
        let t = SizeThresholds::compute(&corpus);
        let labels: Vec<SizeLabel> = corpus.images[0]
            .instances
            .iter()
            .map(|i| t.label("c", i.bbox.area()).unwrap())
            .collect();
        let bound = 0.2 + 1.0 / n as f64;
        let frac = |want: SizeLabel| {
            labels.iter().filter(|&&l| l == want).count() as f64 / n as f64
        };
        assert!(frac(SizeLabel::Small) <= bound);
        assert!(frac(SizeLabel::Large) <= bound);
    }

    #[test]
    fn extracts_all_five_slots_on_a_painted_fixture() {
        // 100×100 image: a large white plane in the top left, a small gray
        // plane bottom right, four mid-sized planes (so the 20/80 percentile
        // bands have room on both sides), and a ship anchored at a harbor.
        let plane_big = inst("p0", "plane", 16.0, 16.0, 24.0, 20.0); // area 480
        let plane_small = inst("p1", "plane", 90.0, 90.0, 6.0, 4.0); // area 24
        let mids: Vec<ObbInstance> = [(70.0, 20.0), (20.0, 70.0), (70.0, 45.0), (45.0, 88.0)]
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| inst(&format!("m{k}"), "plane", x, y, 10.0, 10.0)) // area 100
            .collect();
        let ship = inst("s0", "ship", 40.0, 60.0, 10.0, 4.0);
        let harbor = inst("h0", "harbor", 52.0, 60.0, 12.0, 8.0);

        let mut raster = RgbRaster::filled(100, 100, [0, 128, 0]);
        raster.paint_box(&plane_big.bbox, [255, 255, 255]);
        raster.paint_box(&plane_small.bbox, [128, 128, 128]);
        raster.paint_box(&ship.bbox, [255, 0, 0]);
        raster.paint_box(&harbor.bbox, [210, 180, 140]);

        let mut instances = vec![plane_big, plane_small];
        instances.extend(mids);
        instances.push(ship);
        instances.push(harbor);
        let corpus = Corpus {
            images: vec![entry("img", 100, 100, instances)],
            class_registry: vec!["harbor".into(), "plane".into(), "ship".into()],
        };
        let source = MapSource(HashMap::from([("img".to_string(), raster)]));
        let report = extract_attributes(
            &corpus,
            Some(&source),
            RelationTable::embedded(),
            &ExtractOptions::default(),
        )
        .unwrap();

        assert!(report.failed_images.is_empty());
        let sets = &report.for_image("img").unwrap().sets;
        assert_eq!(sets.len(), 8);

        // Plane areas sorted: [24, 100, 100, 100, 100, 480] → p20 = p80 = 100.
        let p0 = &sets[0];
        assert_eq!(p0.category, "plane");
        assert_eq!(p0.color.as_deref(), Some("white"));
        assert_eq!(p0.relative_size, SizeLabel::Large);
        assert_eq!(p0.relative_location, GridPosition::TopLeft);
        assert!(p0.relations.is_empty());

        let p1 = &sets[1];
        assert_eq!(p1.relative_size, SizeLabel::Small);
        assert_eq!(p1.relative_location, GridPosition::BottomRight);
        assert_eq!(p1.color.as_deref(), Some("gray"));

        for mid in &sets[2..6] {
            assert_eq!(mid.relative_size, SizeLabel::Normal);
        }

        // Ship→harbor distance 12 < 0.1·√(2·100²) ≈ 14.1.
        let s0 = &sets[6];
        assert_eq!(s0.color.as_deref(), Some("red"));
        assert_eq!(s0.relations, vec![RelationRef { phrase: "anchored at".into(), target: "h0".into() }]);
        assert!(sets[7].relations.is_empty());
    }

    #[test]
    fn missing_rasters_leave_color_absent() {
        let corpus = Corpus {
            images: vec![entry("img", 100, 100, vec![inst("a", "plane", 50.0, 50.0, 10.0, 10.0)])],
            class_registry: vec!["plane".into()],
        };
        let report = extract_attributes(
            &corpus,
            None,
            RelationTable::embedded(),
            &ExtractOptions::default(),
        )
        .unwrap();
        assert_eq!(report.images[0].sets[0].color, None);
    }

    #[test]
    fn raster_failure_marks_image_without_aborting() {
        let corpus = Corpus {
            images: vec![
                entry("ok", 10, 10, vec![inst("a", "plane", 5.0, 5.0, 4.0, 4.0)]),
                entry("broken", 10, 10, vec![inst("b", "plane", 5.0, 5.0, 4.0, 4.0)]),
            ],
            class_registry: vec!["plane".into()],
        };
        let source = MapSource(HashMap::from([(
            "ok".to_string(),
            RgbRaster::filled(10, 10, [0, 0, 255]),
        )]));
        let report = extract_attributes(
            &corpus,
            Some(&source),
            RelationTable::embedded(),
            &ExtractOptions::default(),
        )
        .unwrap();
        assert_eq!(report.images.len(), 1);
        assert_eq!(report.images[0].image_id, "ok");
        assert_eq!(report.failed_images.len(), 1);
        assert_eq!(report.failed_images[0].image_id, "broken");
    }

    #[test]
    fn extraction_is_deterministic() {
        let corpus = Corpus {
            images: vec![entry(
                "img",
                100,
                100,
                vec![
                    inst("a", "plane", 20.0, 20.0, 12.0, 8.0),
                    inst("b", "plane", 70.0, 70.0, 9.0, 6.0),
                ],
            )],
            class_registry: vec!["plane".into()],
        };
        let mut raster = RgbRaster::filled(100, 100, [50, 90, 160]);
        raster.paint_box(&corpus.images[0].instances[0].bbox, [230, 230, 230]);
        raster.paint_box(&corpus.images[0].instances[1].bbox, [20, 20, 20]);
        let source = MapSource(HashMap::from([("img".to_string(), raster)]));
        let opts = ExtractOptions::default();
        let a = extract_attributes(&corpus, Some(&source), RelationTable::embedded(), &opts).unwrap();
        let b = extract_attributes(&corpus, Some(&source), RelationTable::embedded(), &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            instance_seed(0, "img", 0),
            instance_seed(0, "img", 1),
        );
        assert_ne!(instance_seed(0, "img", 0), instance_seed(1, "img", 0));
    }
}
