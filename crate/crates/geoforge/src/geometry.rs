//! Oriented-bounding-box geometry: construction, rotated IoU via convex
//! polygon clipping, containment, 3×3 grid localization, and normalization
//! to the [0,100] coordinate scale used by spatial tokens.
//!
//! Conventions: boxes live in pixel coordinates with the y axis pointing
//! down (image convention). `theta` is measured in degrees and rotates the
//! +x axis toward +y; the canonical domain is `[0, 90)` — rectangle symmetry
//! makes 90° the fundamental domain once width/height relabeling is allowed.
//! Numeric tolerances: area identities hold to 1e-9 relative, containment
//! accepts corners within 1e-9 (edge-length-relative) outside an edge, and
//! intersections below 1e-12 px² are treated as empty.

use crate::codec::SpatialToken;
use crate::error::{ForgeError, Result};

use serde::{Deserialize, Serialize};

/// A 2-D point in pixel coordinates.
pub type Point = [f64; 2];

/// Rectangle with center, extents, and in-plane rotation.
///
/// Construction canonicalizes `theta` into `[0, 90)` by folding modulo 180°
/// and swapping `w`/`h` when the fold lands in `[90, 180)`; the represented
/// point set is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Degrees in `[0, 90)` after canonicalization.
    pub theta: f64,
}

impl OrientedBox {
    /// Builds a box, validating extents and canonicalizing the angle.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h), ("theta", theta)] {
            if !v.is_finite() {
                return Err(ForgeError::invalid("box", format!("{name} is not finite")));
            }
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(ForgeError::invalid(
                "box",
                format!("extents must be positive, got w={w}, h={h}"),
            ));
        }
        let mut t = theta.rem_euclid(180.0);
        let (mut w, mut h) = (w, h);
        if t >= 90.0 {
            t -= 90.0;
            std::mem::swap(&mut w, &mut h);
        }
        Ok(OrientedBox { cx, cy, w, h, theta: t })
    }

    /// Area in square pixels.
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// The four vertices in counterclockwise order (positive shoelace sum):
    /// the axis-aligned rectangle `(cx ± w/2, cy ± h/2)` rotated by `theta`
    /// about the center.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.theta.to_radians().sin_cos();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        [[hw, -hh], [hw, hh], [-hw, hh], [-hw, -hh]]
            .map(|[dx, dy]| [self.cx + dx * c - dy * s, self.cy + dx * s + dy * c])
    }

    /// Euclidean distance between box centers.
    pub fn center_distance(&self, other: &OrientedBox) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// Signed area of a polygon (shoelace formula); positive for
/// counterclockwise vertex order.
pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..poly.len() {
        let [x1, y1] = poly[i];
        let [x2, y2] = poly[(i + 1) % poly.len()];
        sum += x1 * y2 - x2 * y1;
    }
    sum / 2.0
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Intersection of segment `a`→`b` with the infinite line through `p`→`q`.
/// Callers guarantee the segment straddles the line, so the denominator is
/// nonzero.
fn line_intersection(a: Point, b: Point, p: Point, q: Point) -> Point {
    let d1 = cross(p, q, a);
    let d2 = cross(p, q, b);
    let t = d1 / (d1 - d2);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Clips `subject` against convex `clip` (both counterclockwise) with the
/// Sutherland–Hodgman algorithm. Returns the intersection polygon, possibly
/// empty.
pub fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let p = clip[i];
        let q = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur = input[j];
            let prev_in = cross(p, q, prev) >= 0.0;
            let cur_in = cross(p, q, cur) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, p, q));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, p, q));
            }
        }
    }
    output
}

/// Intersection-over-union of two oriented boxes, computed exactly by
/// polygon clipping and the shoelace formula.
///
/// Identical boxes return exactly 1.0; intersections below 1e-12 px² are
/// treated as empty and return 0.0.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = polygon_area(&clip_polygon(&a.corners(), &b.corners())).abs();
    if inter <= 1e-12 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 1.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// True iff `point` lies inside or on the boundary of a counterclockwise
/// convex polygon, with an edge-length-relative tolerance.
pub fn point_in_convex(poly: &[Point], point: Point, tolerance: f64) -> bool {
    (0..poly.len()).all(|i| {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let edge_len = (q[0] - p[0]).hypot(q[1] - p[1]);
        cross(p, q, point) >= -tolerance * edge_len
    })
}

/// True iff every corner of `inner` lies inside or on the boundary of
/// `outer` (closed containment, with a 1e-9 edge-relative tolerance).
pub fn contains(outer: &OrientedBox, inner: &OrientedBox) -> bool {
    let hull = outer.corners();
    inner
        .corners()
        .iter()
        .all(|&corner| point_in_convex(&hull, corner, 1e-9))
}

/// One cell of the 3×3 image grid, row 0 at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridPosition {
    TopLeft,
    Top,
    TopRight,
    Left,
    Center,
    Right,
    BottomLeft,
    Bottom,
    BottomRight,
}

impl GridPosition {
    const LABELS: [(GridPosition, &'static str); 9] = [
        (GridPosition::TopLeft, "top left"),
        (GridPosition::Top, "top"),
        (GridPosition::TopRight, "top right"),
        (GridPosition::Left, "left"),
        (GridPosition::Center, "center"),
        (GridPosition::Right, "right"),
        (GridPosition::BottomLeft, "bottom left"),
        (GridPosition::Bottom, "bottom"),
        (GridPosition::BottomRight, "bottom right"),
    ];

    /// Natural-language surface form, lowercase with spaces ("top left").
    pub fn label(&self) -> &'static str {
        Self::LABELS.iter().find(|(g, _)| g == self).unwrap().1
    }

    /// All nine cells, row-major from the top-left.
    pub fn all() -> [GridPosition; 9] {
        Self::LABELS.map(|(g, _)| g)
    }
}

/// Maps a pixel to its 3×3 grid cell: `(⌊3x/width⌋, ⌊3y/height⌋)` with each
/// index clamped to 2, row 0 at the top.
///
/// Errors if the point lies outside `[0,width) × [0,height)`.
pub fn grid_position(x: f64, y: f64, width: u32, height: u32) -> Result<GridPosition> {
    if width == 0 || height == 0 {
        return Err(ForgeError::invalid("image", "zero dimension"));
    }
    if !(x >= 0.0 && x < width as f64 && y >= 0.0 && y < height as f64) {
        return Err(ForgeError::invalid(
            "point",
            format!("({x}, {y}) outside {width}x{height} image"),
        ));
    }
    let col = ((3.0 * x / width as f64).floor() as usize).min(2);
    let row = ((3.0 * y / height as f64).floor() as usize).min(2);
    Ok(GridPosition::all()[row * 3 + col])
}

fn scale_round_clamp(value: f64, extent: f64) -> u8 {
    (100.0 * value / extent).round().clamp(0.0, 100.0) as u8
}

/// Normalizes a pixel-space box to spatial-token fields: corner pair of the
/// axis-aligned (pre-rotation) rectangle scaled to [0,100] and rounded
/// half-away-from-zero, angle rounded to integer degrees.
///
/// An angle that rounds to 90 is folded to 0 with the corner pair swapped,
/// keeping the token domain at `[0, 90)`.
pub fn normalize(b: &OrientedBox, width: u32, height: u32) -> SpatialToken {
    let theta = b.theta.round() as u8;
    let (hw, hh) = if theta == 90 { (b.h / 2.0, b.w / 2.0) } else { (b.w / 2.0, b.h / 2.0) };
    SpatialToken {
        x_left: scale_round_clamp(b.cx - hw, width as f64),
        y_top: scale_round_clamp(b.cy - hh, height as f64),
        x_right: scale_round_clamp(b.cx + hw, width as f64),
        y_bottom: scale_round_clamp(b.cy + hh, height as f64),
        theta: if theta == 90 { 0 } else { theta },
    }
}

/// Clamps the box's pre-rotation extents to the image rectangle, keeping the
/// angle. Errors if nothing remains inside.
pub fn clamp_to_image(b: &OrientedBox, width: u32, height: u32) -> Result<OrientedBox> {
    let left = (b.cx - b.w / 2.0).max(0.0);
    let right = (b.cx + b.w / 2.0).min(width as f64);
    let top = (b.cy - b.h / 2.0).max(0.0);
    let bottom = (b.cy + b.h / 2.0).min(height as f64);
    if left >= right || top >= bottom {
        return Err(ForgeError::invalid(
            "box",
            format!("lies outside the {width}x{height} image"),
        ));
    }
    OrientedBox::new(
        (left + right) / 2.0,
        (top + bottom) / 2.0,
        right - left,
        bottom - top,
        b.theta,
    )
}

/// Minimum-area oriented rectangle enclosing a point set (rotating calipers
/// over the convex hull). Used to reduce 4-corner polygon annotations to the
/// canonical 5-parameter box.
pub fn min_area_rect(points: &[Point]) -> Result<OrientedBox> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(ForgeError::invalid(
            "polygon",
            "degenerate: fewer than 3 distinct non-collinear points",
        ));
    }
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..hull.len() {
        let p = hull[i];
        let q = hull[(i + 1) % hull.len()];
        let angle = (q[1] - p[1]).atan2(q[0] - p[0]);
        let (s, c) = angle.sin_cos();
        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &[x, y] in &hull {
            let u = x * c + y * s;
            let v = -x * s + y * c;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let (w, h) = (umax - umin, vmax - vmin);
        if w <= 0.0 || h <= 0.0 {
            continue;
        }
        let area = w * h;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let (uc, vc) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
            let rect = OrientedBox::new(
                uc * c - vc * s,
                uc * s + vc * c,
                w,
                h,
                angle.to_degrees(),
            )?;
            best = Some((area, rect));
        }
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| ForgeError::invalid("polygon", "degenerate: zero-area hull"))
}

/// Convex hull by monotone chain, counterclockwise, no duplicate endpoint.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for phase in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if phase == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    // The y-down image convention flips visual orientation, but the shoelace
    // sign convention used throughout only needs hull order consistent with
    // `corners()`: both yield positive polygon_area.
    hull
}
