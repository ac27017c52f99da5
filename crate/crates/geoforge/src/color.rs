//! Dominant-color naming: seeded k-means over the RGB pixels inside a box,
//! then nearest-neighbor lookup of the largest cluster's centroid in a fixed
//! 12-name palette.
//!
//! Everything is deterministic for a fixed seed: k-means++ seeding and
//! Lloyd's iterations draw from a counter-based RNG, ties in palette lookup
//! go to the first entry, and ties in cluster population go to the lowest
//! cluster index.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ForgeError, Result};
use crate::geometry::OrientedBox;
use crate::raster::RgbRaster;

/// The closed color vocabulary used in expressions, with sRGB anchors.
pub const PALETTE: [(&str, [u8; 3]); 12] = [
    ("white", [255, 255, 255]),
    ("gray", [128, 128, 128]),
    ("black", [0, 0, 0]),
    ("red", [255, 0, 0]),
    ("green", [0, 128, 0]),
    ("blue", [0, 0, 255]),
    ("yellow", [255, 255, 0]),
    ("brown", [165, 42, 42]),
    ("orange", [255, 165, 0]),
    ("purple", [128, 0, 128]),
    ("cyan", [0, 255, 255]),
    ("tan", [210, 180, 140]),
];

/// All palette names, in palette order.
pub fn palette_names() -> Vec<&'static str> {
    PALETTE.map(|(name, _)| name).to_vec()
}

/// Nearest palette entry by squared RGB distance; ties go to the first.
pub fn nearest_palette_name(rgb: [f64; 3]) -> &'static str {
    PALETTE
        .iter()
        .map(|(name, anchor)| {
            let d: f64 = (0..3).map(|i| (rgb[i] - anchor[i] as f64).powi(2)).sum();
            (d, *name)
        })
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap()
        .1
}

/// Output of one k-means run.
pub struct KmeansResult {
    pub centroids: Vec<[f64; 3]>,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    /// Total within-cluster squared distance after each Lloyd iteration;
    /// non-increasing.
    pub inertia_trace: Vec<f64>,
}

impl KmeansResult {
    /// Points assigned to each cluster.
    pub fn population(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.centroids.len()];
        for &a in &self.assignments {
            counts[a] += 1;
        }
        counts
    }

    /// Centroid of the most populous cluster (lowest index wins ties).
    pub fn dominant_centroid(&self) -> [f64; 3] {
        let pop = self.population();
        let best = (0..pop.len()).max_by_key(|&i| (pop[i], usize::MAX - i)).unwrap();
        self.centroids[best]
    }
}

fn sq_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Lloyd's k-means with k-means++ seeding, at most 50 iterations, fully
/// deterministic for a fixed seed. `k` is reduced to the point count when
/// there are fewer than `k` points; `points` must be nonempty.
pub fn kmeans(points: &[[f64; 3]], k: usize, seed: u64) -> Result<KmeansResult> {
    if points.is_empty() {
        return Err(ForgeError::invalid("kmeans", "no points"));
    }
    if k == 0 {
        return Err(ForgeError::invalid("kmeans", "k must be positive"));
    }
    let k = k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: first centroid uniform, the rest proportional to
    // squared distance from the nearest chosen centroid.
    let mut centroids: Vec<[f64; 3]> = vec![points[rng.random_range(0..points.len())]];
    let mut best_dist: Vec<f64> = points.iter().map(|&p| sq_dist(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = best_dist.iter().sum();
        let next = if total <= 0.0 {
            // All remaining mass sits on the chosen centroids (duplicate
            // points); any choice yields the same clustering.
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in best_dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        let c = points[next];
        centroids.push(c);
        for (i, &p) in points.iter().enumerate() {
            best_dist[i] = best_dist[i].min(sq_dist(p, c));
        }
    }

    let mut assignments = vec![0usize; points.len()];
    let mut inertia_trace = Vec::new();
    for _ in 0..50 {
        // Assignment step (ties to the lowest cluster index).
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(j, &c)| (j, sq_dist(p, c)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
                .unwrap();
            inertia += d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        let first_pass = inertia_trace.is_empty();
        inertia_trace.push(inertia);
        if !changed && !first_pass {
            break;
        }

        // Update step: empty clusters keep their previous centroid.
        let mut sums = vec![[0.0f64; 3]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (i, &p) in points.iter().enumerate() {
            let a = assignments[i];
            counts[a] += 1;
            for c in 0..3 {
                sums[a][c] += p[c];
            }
        }
        for j in 0..centroids.len() {
            if counts[j] > 0 {
                centroids[j] = sums[j].map(|s| s / counts[j] as f64);
            }
        }
    }

    Ok(KmeansResult { centroids, assignments, inertia_trace })
}

/// Names the dominant color of the box region: k-means over the pixels
/// whose centers fall inside the box, then the palette name nearest to the
/// largest cluster's centroid. Errors when the box covers zero pixels.
pub fn dominant_color(
    raster: &RgbRaster,
    bbox: &OrientedBox,
    k: usize,
    seed: u64,
) -> Result<&'static str> {
    let pixels = raster.pixels_in_box(bbox);
    if pixels.is_empty() {
        return Err(ForgeError::EmptyRegion {
            image: format!("{}x{} raster", raster.width, raster.height),
        });
    }
    let points: Vec<[f64; 3]> = pixels
        .iter()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    let result = kmeans(&points, k, seed)?;
    Ok(nearest_palette_name(result.dominant_centroid()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_lookup_exact_and_nearest() {
        for (name, rgb) in PALETTE {
            assert_eq!(nearest_palette_name(rgb.map(f64::from)), name);
        }
        assert_eq!(nearest_palette_name([250.0, 250.0, 250.0]), "white");
        assert_eq!(nearest_palette_name([120.0, 130.0, 125.0]), "gray");
        assert_eq!(nearest_palette_name([200.0, 30.0, 30.0]), "red");
    }

    #[test]
    fn uniform_region_names_its_color() {
        let raster = RgbRaster::filled(20, 20, [255, 255, 255]);
        let b = OrientedBox::new(10.0, 10.0, 8.0, 8.0, 0.0).unwrap();
        assert_eq!(dominant_color(&raster, &b, 3, 7).unwrap(), "white");
    }

    #[test]
    fn majority_cluster_wins() {
        // 70% gray / 30% reddish inside the box; with k=2 the gray mass is
        // the larger cluster regardless of seeding.
        let mut raster = RgbRaster::filled(10, 10, [128, 128, 128]);
        let b = OrientedBox::new(5.0, 5.0, 10.0, 10.0, 0.0).unwrap();
        for i in 0..30 {
            raster.set(i % 10, i / 10, [200, 30, 30]);
        }
        for seed in 0..10 {
            assert_eq!(dominant_color(&raster, &b, 2, seed).unwrap(), "gray");
        }
    }

    #[test]
    fn empty_region_errors() {
        let raster = RgbRaster::filled(10, 10, [0, 0, 0]);
        // Box entirely off-raster: no pixel centers inside.
        let b = OrientedBox::new(50.0, 50.0, 4.0, 4.0, 0.0).unwrap();
        assert!(matches!(
            dominant_color(&raster, &b, 3, 0),
            Err(ForgeError::EmptyRegion { .. })
        ));
    }

    #[test]
    fn fewer_points_than_k_falls_back() {
        let points = vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let r = kmeans(&points, 5, 0).unwrap();
        assert_eq!(r.centroids.len(), 2);
        assert_eq!(r.assignments.len(), 2);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let points: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let v = (i * 37 % 251) as f64;
                [v, (v * 1.7) % 255.0, (v * 0.3) % 255.0]
            })
            .collect();
        let a = kmeans(&points, 3, 42).unwrap();
        let b = kmeans(&points, 3, 42).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
        let c = kmeans(&points, 3, 43).unwrap();
        // A different seed may legitimately converge to the same optimum,
        // but the run must still be internally deterministic.
        assert_eq!(c.assignments, kmeans(&points, 3, 43).unwrap().assignments);
    }

    #[test]
    fn inertia_is_non_increasing_and_centroids_are_means() {
        let points: Vec<[f64; 3]> = (0..150)
            .map(|i| {
                let base = if i % 3 == 0 { 0.0 } else if i % 3 == 1 { 100.0 } else { 220.0 };
                [base + (i % 7) as f64, base, base + (i % 5) as f64]
            })
            .collect();
        let r = kmeans(&points, 3, 11).unwrap();
        for w in r.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "inertia increased: {:?}", r.inertia_trace);
        }
        // At convergence each centroid equals the mean of its members.
        let pop = r.population();
        for j in 0..r.centroids.len() {
            if pop[j] == 0 {
                continue;
            }
            let mut mean = [0.0f64; 3];
            for (i, &p) in points.iter().enumerate() {
                if r.assignments[i] == j {
                    for c in 0..3 {
                        mean[c] += p[c];
                    }
                }
            }
            for c in 0..3 {
                mean[c] /= pop[j] as f64;
                assert!((mean[c] - r.centroids[j][c]).abs() < 1e-6);
            }
        }
    }
}
