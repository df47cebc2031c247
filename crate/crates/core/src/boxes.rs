//! Anchor-based oriented-box regression and rotated-box overlap.
//!
//! The detection head divides the BEV grid into `S x S` cells and predicts
//! `B` boxes per cell, one per anchor. Raw network outputs are unconstrained
//! reals; [`decode`] turns them into world-space boxes:
//!
//! * center: sigmoid offsets within the cell, plus the cell corner,
//! * dimensions: anchor priors scaled by `exp` of the raw value,
//! * yaw: `pi * clamp(t_phi, -1, 1)`,
//! * confidence / class scores: sigmoid and softmax.
//!
//! [`encode`] is the inverse used to build regression targets.

use std::f64::consts::PI;

use crate::bev::GridConfig;
use crate::error::{Error, Result};
use crate::types::{wrap_angle, ClassId, Obb3D};

/// Per-class box size prior, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub class: ClassId,
    pub p_w: f64,
    pub p_l: f64,
    pub p_h: f64,
}

/// Computes one anchor per class as the mean dimensions of that class's
/// labels. Classes with no labels are an error: an anchor of zeros would
/// make `exp`-scaled decoding meaningless.
pub fn compute_anchors(labels: &[Obb3D], classes: &[ClassId]) -> Result<Vec<Anchor>> {
    let mut anchors = Vec::with_capacity(classes.len());
    for &class in classes {
        let mut n = 0usize;
        let (mut sw, mut sl, mut sh) = (0.0, 0.0, 0.0);
        for b in labels.iter().filter(|b| b.class == class) {
            n += 1;
            sw += b.w;
            sl += b.l;
            sh += b.h;
        }
        if n == 0 {
            return Err(Error::Config(format!("no labels for class {class}, cannot form anchor")));
        }
        let n = n as f64;
        anchors.push(Anchor { class, p_w: sw / n, p_l: sl / n, p_h: sh / n });
    }
    Ok(anchors)
}

/// Head geometry tying the BEV grid to the prediction tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    /// Cells per side (`S`).
    pub grid_side: usize,
    /// Anchors per cell (`B`).
    pub anchors_per_cell: usize,
    /// Number of object classes.
    pub classes: usize,
    /// BEV pixels per head cell.
    pub downsample: usize,
    /// Meters per head cell.
    pub cell_size: f64,
}

impl HeadConfig {
    /// Derives the head geometry from a grid. The grid must be square and
    /// its side divisible by `downsample`.
    pub fn for_grid(grid: &GridConfig, downsample: usize, anchors_per_cell: usize) -> Result<Self> {
        grid.validate()?;
        let (rows, cols) = (grid.rows(), grid.cols());
        if rows != cols {
            return Err(Error::Config(format!("head needs a square grid, got {rows}x{cols}")));
        }
        if downsample == 0 || rows % downsample != 0 {
            return Err(Error::Config(format!(
                "grid side {rows} is not divisible by downsample {downsample}"
            )));
        }
        if anchors_per_cell == 0 {
            return Err(Error::Config("need at least one anchor per cell".into()));
        }
        Ok(HeadConfig {
            grid_side: rows / downsample,
            anchors_per_cell,
            classes: ClassId::COUNT,
            downsample,
            cell_size: grid.resolution * downsample as f64,
        })
    }

    /// The standard configuration: 608x608 grid, downsample 16, three
    /// anchors -> 38x38 cells of 1.6 m.
    pub fn standard() -> Self {
        HeadConfig::for_grid(&GridConfig::default(), 16, 3).expect("default grid is valid")
    }

    /// Raw values per anchor slot: 7 box parameters, confidence, class scores.
    pub fn values_per_anchor(&self) -> usize {
        8 + self.classes
    }

    /// Output channels of the head convolution: `B * (8 + classes)`.
    pub fn channels(&self) -> usize {
        self.anchors_per_cell * self.values_per_anchor()
    }

    /// Total anchor slots in the tensor.
    pub fn slots(&self) -> usize {
        self.grid_side * self.grid_side * self.anchors_per_cell
    }
}

/// A head cell. `row` counts down from the far edge, `col` left to right,
/// mirroring the BEV grid layout at coarser stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

/// Raw (pre-activation) regression values for one anchor slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub t_x: f64,
    pub t_y: f64,
    pub t_z: f64,
    pub t_w: f64,
    pub t_l: f64,
    pub t_h: f64,
    pub t_phi: f64,
    pub t_conf: f64,
    pub class_logits: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Yaw in radians to the network's normalized scale (`[-1, 1]` over a full
/// half turn each way).
pub fn normalize_yaw(yaw: f64) -> f64 {
    yaw / PI
}

pub fn denormalize_yaw(v: f64) -> f64 {
    v * PI
}

/// Offsets within a cell are clamped this far away from the boundary before
/// the logit, so targets stay finite.
const FRAC_CLAMP: f64 = 1e-6;

/// Decodes one anchor slot into a world-space box.
///
/// With all-zero raw values the box sits at the cell center, mid-height,
/// with exactly the anchor's dimensions and zero yaw.
pub fn decode(
    raw: &RawPrediction,
    cell: CellIndex,
    anchor: &Anchor,
    head: &HeadConfig,
    grid: &GridConfig,
) -> Obb3D {
    debug_assert_eq!(raw.class_logits.len(), head.classes);
    // Cell-local offsets: sigmoid keeps the center inside the cell.
    let bx = sigmoid(raw.t_x) + cell.col as f64;
    let by = sigmoid(raw.t_y) + cell.row as f64;
    let bz = sigmoid(raw.t_z);
    let cy = bx * head.cell_size - grid.y_half_range;
    let cx = grid.x_range - by * head.cell_size;
    let cz = grid.z_min + bz * (grid.z_max - grid.z_min);

    let probs = softmax(&raw.class_logits);
    let (best, _) = probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });

    Obb3D {
        cx,
        cy,
        cz,
        w: anchor.p_w * raw.t_w.exp(),
        l: anchor.p_l * raw.t_l.exp(),
        h: anchor.p_h * raw.t_h.exp(),
        yaw: denormalize_yaw(raw.t_phi.clamp(-1.0, 1.0)),
        class: ClassId::from_index(best).expect("classes match ClassId"),
        confidence: sigmoid(raw.t_conf),
    }
}

/// Locates the head cell containing a world point, plus the fractional
/// offsets within that cell, on the same row/col convention as the grid.
pub fn cell_of(
    cx: f64,
    cy: f64,
    head: &HeadConfig,
    grid: &GridConfig,
) -> Result<(CellIndex, f64, f64)> {
    if !(cx >= 0.0 && cx < grid.x_range) || !(cy >= -grid.y_half_range && cy < grid.y_half_range) {
        return Err(Error::Config(format!("box center ({cx:.2}, {cy:.2}) outside the grid")));
    }
    let s = head.grid_side;
    let col_f = (cy + grid.y_half_range) / head.cell_size;
    let row_f = (grid.x_range - cx) / head.cell_size;
    let col = (col_f.floor() as usize).min(s - 1);
    let row = (row_f.floor() as usize).min(s - 1);
    let fx = (col_f - col as f64).clamp(FRAC_CLAMP, 1.0 - FRAC_CLAMP);
    let fy = (row_f - row as f64).clamp(FRAC_CLAMP, 1.0 - FRAC_CLAMP);
    Ok((CellIndex { row, col }, fx, fy))
}

/// Encodes a box against an anchor: the inverse of [`decode`], up to the
/// boundary clamps. Errors if the center is outside the grid or any
/// dimension is non-positive.
pub fn encode(
    obb: &Obb3D,
    anchor: &Anchor,
    head: &HeadConfig,
    grid: &GridConfig,
) -> Result<(CellIndex, RawPrediction)> {
    if !(obb.w > 0.0 && obb.l > 0.0 && obb.h > 0.0) {
        return Err(Error::Config(format!(
            "box dimensions must be positive, got w={} l={} h={}",
            obb.w, obb.l, obb.h
        )));
    }
    let (cell, fx, fy) = cell_of(obb.cx, obb.cy, head, grid)?;
    let fz = ((obb.cz - grid.z_min) / (grid.z_max - grid.z_min))
        .clamp(FRAC_CLAMP, 1.0 - FRAC_CLAMP);
    let conf = obb.confidence.clamp(FRAC_CLAMP, 1.0 - FRAC_CLAMP);
    let mut class_logits = vec![0.0; head.classes];
    class_logits[obb.class.index()] = 1.0;
    let raw = RawPrediction {
        t_x: logit(fx),
        t_y: logit(fy),
        t_z: logit(fz),
        t_w: (obb.w / anchor.p_w).ln(),
        t_l: (obb.l / anchor.p_l).ln(),
        t_h: (obb.h / anchor.p_h).ln(),
        t_phi: normalize_yaw(wrap_angle(obb.yaw)),
        t_conf: logit(conf),
        class_logits,
    };
    Ok((cell, raw))
}

/// Intersection areas smaller than this count as no overlap; it absorbs the
/// degenerate slivers clipping produces for boxes that share an edge.
const AREA_EPS: f64 = 1e-12;

fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % pts.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Clips `subject` (convex, counter-clockwise) against the half-plane to the
/// left of the directed edge `a -> b`. Standard Sutherland-Hodgman step; the
/// intersection parameter only divides when the endpoints straddle the edge,
/// so the denominator is never zero.
fn clip_against_edge(subject: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let cur = subject[i];
        let next = subject[(i + 1) % subject.len()];
        let (d0, d1) = (side(cur), side(next));
        if d0 >= 0.0 {
            out.push(cur);
        }
        if (d0 >= 0.0) != (d1 >= 0.0) {
            let t = d0 / (d0 - d1);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

/// Area of the intersection of two convex counter-clockwise polygons.
pub fn convex_intersection_area(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let mut poly: Vec<[f64; 2]> = a.to_vec();
    for i in 0..b.len() {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_against_edge(&poly, b[i], b[(i + 1) % b.len()]);
    }
    polygon_area(&poly).max(0.0)
}

/// Bird's-eye-view IoU of two oriented boxes: exact rotated-rectangle
/// intersection over union of the footprints. Degenerate boxes (near-zero
/// area) yield 0.
pub fn bev_iou(a: &Obb3D, b: &Obb3D) -> f64 {
    let (area_a, area_b) = (a.bev_area(), b.bev_area());
    if area_a <= AREA_EPS || area_b <= AREA_EPS {
        return 0.0;
    }
    let mut inter = convex_intersection_area(&a.bev_corners(), &b.bev_corners());
    if inter < AREA_EPS {
        inter = 0.0;
    }
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

/// 3D IoU: BEV intersection extruded over the boxes' vertical overlap.
pub fn iou_3d(a: &Obb3D, b: &Obb3D) -> f64 {
    let (va, vb) = (a.volume(), b.volume());
    if va <= AREA_EPS || vb <= AREA_EPS {
        return 0.0;
    }
    let mut inter_area = convex_intersection_area(&a.bev_corners(), &b.bev_corners());
    if inter_area < AREA_EPS {
        inter_area = 0.0;
    }
    let (abot, atop) = a.z_interval();
    let (bbot, btop) = b.z_interval();
    let dz = (atop.min(btop) - abot.max(bbot)).max(0.0);
    let inter = inter_area * dz;
    (inter / (va + vb - inter)).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression. Detections are taken in order of
/// descending confidence (ties broken by input position); each kept box
/// suppresses later boxes of the same class whose BEV IoU exceeds
/// `iou_threshold`. Returns kept boxes in confidence order.
pub fn nms(detections: &[Obb3D], iou_threshold: f64) -> Vec<Obb3D> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        detections[j]
            .confidence
            .total_cmp(&detections[i].confidence)
            .then(i.cmp(&j))
    });
    let mut kept: Vec<Obb3D> = Vec::new();
    let mut suppressed = vec![false; detections.len()];
    for &i in &order {
        if suppressed[i] {
            continue;
        }
        let cand = &detections[i];
        kept.push(cand.clone());
        for &j in &order {
            if j != i && !suppressed[j] && detections[j].class == cand.class {
                if bev_iou(cand, &detections[j]) > iou_threshold {
                    suppressed[j] = true;
                }
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(cx: f64, cy: f64, w: f64, l: f64, yaw: f64) -> Obb3D {
        Obb3D { cx, cy, cz: 0.0, w, l, h: 1.5, yaw, class: ClassId::Car, confidence: 1.0 }
    }

    #[test]
    fn standard_head_geometry() {
        let head = HeadConfig::standard();
        assert_eq!(head.grid_side, 38);
        assert_eq!(head.anchors_per_cell, 3);
        assert_eq!(head.classes, 3);
        assert_eq!(head.channels(), 33);
        assert!((head.cell_size - 1.6).abs() < 1e-12);
    }

    #[test]
    fn head_rejects_incompatible_grids() {
        let grid = GridConfig { x_range: 60.8, y_half_range: 20.0, ..GridConfig::default() };
        assert!(HeadConfig::for_grid(&grid, 16, 3).is_err()); // not square
        let grid = GridConfig::default();
        assert!(HeadConfig::for_grid(&grid, 13, 3).is_err()); // 608 % 13 != 0
        assert!(HeadConfig::for_grid(&grid, 16, 0).is_err());
    }

    #[test]
    fn anchors_are_per_class_means() {
        let labels = vec![
            car(10.0, 0.0, 1.6, 3.8, 0.0),
            car(20.0, 0.0, 1.8, 4.2, 0.0),
            Obb3D {
                cx: 5.0,
                cy: 1.0,
                cz: 0.0,
                w: 0.6,
                l: 0.8,
                h: 1.7,
                yaw: 0.0,
                class: ClassId::Pedestrian,
                confidence: 1.0,
            },
        ];
        let anchors =
            compute_anchors(&labels, &[ClassId::Car, ClassId::Pedestrian]).unwrap();
        assert_eq!(anchors[0].class, ClassId::Car);
        assert!((anchors[0].p_w - 1.7).abs() < 1e-12);
        assert!((anchors[0].p_l - 4.0).abs() < 1e-12);
        assert_eq!(anchors[1].p_h, 1.7);
        // Missing class: error, not a silent zero anchor.
        assert!(compute_anchors(&labels, &ClassId::ALL).is_err());
    }

    #[test]
    fn decode_zero_raw_sits_at_cell_center() {
        let grid = GridConfig::default();
        let head = HeadConfig::standard();
        let anchor = Anchor { class: ClassId::Car, p_w: 1.6, p_l: 3.9, p_h: 1.5 };
        let raw = RawPrediction {
            t_x: 0.0,
            t_y: 0.0,
            t_z: 0.0,
            t_w: 0.0,
            t_l: 0.0,
            t_h: 0.0,
            t_phi: 0.0,
            t_conf: 0.0,
            class_logits: vec![0.0; 3],
        };
        let cell = CellIndex { row: 10, col: 20 };
        let b = decode(&raw, cell, &anchor, &head, &grid);
        // Cell (10, 20): col 20 spans y in [32.0 - 30.4 .. ], center +0.5 cell.
        assert!((b.cy - (20.5 * 1.6 - 30.4)).abs() < 1e-12);
        assert!((b.cx - (60.8 - 10.5 * 1.6)).abs() < 1e-12);
        assert!((b.cz - 0.0).abs() < 1e-12); // middle of [-2, 2]
        assert_eq!((b.w, b.l, b.h), (1.6, 3.9, 1.5));
        assert_eq!(b.yaw, 0.0);
        assert!((b.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decode_clamps_yaw_to_half_turn() {
        let grid = GridConfig::default();
        let head = HeadConfig::standard();
        let anchor = Anchor { class: ClassId::Car, p_w: 1.6, p_l: 3.9, p_h: 1.5 };
        let mut raw = RawPrediction {
            t_x: 0.0,
            t_y: 0.0,
            t_z: 0.0,
            t_w: 0.0,
            t_l: 0.0,
            t_h: 0.0,
            t_phi: 3.7,
            t_conf: 0.0,
            class_logits: vec![0.0; 3],
        };
        let cell = CellIndex { row: 0, col: 0 };
        assert_eq!(decode(&raw, cell, &anchor, &head, &grid).yaw, PI);
        raw.t_phi = -42.0;
        assert_eq!(decode(&raw, cell, &anchor, &head, &grid).yaw, -PI);
    }

    #[test]
    fn encode_decode_round_trip() {
        let grid = GridConfig::default();
        let head = HeadConfig::standard();
        let anchor = Anchor { class: ClassId::Car, p_w: 1.6, p_l: 3.9, p_h: 1.56 };
        // Center chosen off any head-cell boundary: an exact-boundary center
        // has fractional offset 0, which the encoder clamps away from the
        // logit pole.
        let original = Obb3D {
            cx: 23.7,
            cy: -11.3,
            cz: 0.4,
            w: 1.75,
            l: 4.1,
            h: 1.49,
            yaw: 0.83,
            class: ClassId::Car,
            confidence: 0.9,
        };
        let (cell, raw) = encode(&original, &anchor, &head, &grid).unwrap();
        let back = decode(&raw, cell, &anchor, &head, &grid);
        assert!((back.cx - original.cx).abs() < 1e-9);
        assert!((back.cy - original.cy).abs() < 1e-9);
        assert!((back.cz - original.cz).abs() < 1e-9);
        assert!((back.w - original.w).abs() < 1e-9);
        assert!((back.l - original.l).abs() < 1e-9);
        assert!((back.h - original.h).abs() < 1e-9);
        assert!((back.yaw - original.yaw).abs() < 1e-9);
        assert!((back.confidence - original.confidence).abs() < 1e-9);
        assert_eq!(back.class, original.class);
    }

    #[test]
    fn encode_rejects_out_of_grid_and_bad_dims() {
        let grid = GridConfig::default();
        let head = HeadConfig::standard();
        let anchor = Anchor { class: ClassId::Car, p_w: 1.6, p_l: 3.9, p_h: 1.5 };
        let mut b = car(70.0, 0.0, 1.6, 3.9, 0.0);
        assert!(encode(&b, &anchor, &head, &grid).is_err());
        b.cx = 10.0;
        b.w = 0.0;
        assert!(encode(&b, &anchor, &head, &grid).is_err());
    }

    /// Axis-aligned IoU has a closed form; the clipping path must agree.
    fn aligned_iou(a: &Obb3D, b: &Obb3D) -> f64 {
        let ix = ((a.cx + a.l / 2.0).min(b.cx + b.l / 2.0)
            - (a.cx - a.l / 2.0).max(b.cx - b.l / 2.0))
        .max(0.0);
        let iy = ((a.cy + a.w / 2.0).min(b.cy + b.w / 2.0)
            - (a.cy - a.w / 2.0).max(b.cy - b.w / 2.0))
        .max(0.0);
        let inter = ix * iy;
        inter / (a.bev_area() + b.bev_area() - inter)
    }

    #[test]
    fn bev_iou_matches_axis_aligned_closed_form() {
        let cases = [
            (car(10.0, 0.0, 2.0, 4.0, 0.0), car(10.0, 0.0, 2.0, 4.0, 0.0), 1.0),
            (car(10.0, 0.0, 2.0, 4.0, 0.0), car(12.0, 0.0, 2.0, 4.0, 0.0), 1.0 / 3.0),
            (car(10.0, 0.0, 2.0, 4.0, 0.0), car(10.0, 2.0, 2.0, 4.0, 0.0), 0.0),
            (car(10.0, 0.0, 2.0, 4.0, 0.0), car(30.0, 9.0, 2.0, 4.0, 0.0), 0.0),
        ];
        for (a, b, expected) in &cases {
            assert!((bev_iou(a, b) - expected).abs() < 1e-12);
            assert!((bev_iou(a, b) - aligned_iou(a, b)).abs() < 1e-12);
        }
        // Partial overlaps, still axis-aligned.
        for dx in [0.5, 1.0, 1.7, 3.3] {
            for dy in [0.0, 0.4, 1.2] {
                let a = car(10.0, 0.0, 2.0, 4.0, 0.0);
                let b = car(10.0 + dx, dy, 2.0, 4.0, 0.0);
                assert!(
                    (bev_iou(&a, &b) - aligned_iou(&a, &b)).abs() < 1e-12,
                    "dx={dx} dy={dy}"
                );
            }
        }
    }

    #[test]
    fn bev_iou_rotated_squares_closed_form() {
        // Unit square vs the same square rotated 45 degrees: intersection is
        // a regular octagon with area 2*(sqrt(2)-1); union = 2 - that.
        let a = car(10.0, 0.0, 1.0, 1.0, 0.0);
        let b = car(10.0, 0.0, 1.0, 1.0, PI / 4.0);
        let inter = 2.0 * (2.0f64.sqrt() - 1.0);
        let expected = inter / (2.0 - inter);
        assert!((bev_iou(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    fn bev_iou_full_containment() {
        let a = car(10.0, 0.0, 4.0, 4.0, 0.0);
        let b = car(10.0, 0.0, 2.0, 2.0, 1.1); // rotated, still inside
        assert!((bev_iou(&a, &b) - 4.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn bev_iou_degenerate_is_zero() {
        let a = car(10.0, 0.0, 0.0, 4.0, 0.3);
        let b = car(10.0, 0.0, 2.0, 4.0, 0.0);
        assert_eq!(bev_iou(&a, &b), 0.0);
        // Shared edge only: sliver intersection counts as zero.
        let c = car(10.0, 1.0, 2.0, 4.0, 0.0);
        let d = car(10.0, -1.0, 2.0, 4.0, 0.0);
        assert_eq!(bev_iou(&c, &d), 0.0);
    }

    #[test]
    fn iou_3d_reduces_to_bev_times_vertical_overlap() {
        let mut a = car(10.0, 0.0, 2.0, 4.0, 0.0);
        let mut b = car(10.0, 0.0, 2.0, 4.0, 0.0);
        a.h = 2.0;
        b.h = 2.0;
        b.cz = 1.0; // half-height offset: vertical overlap 1 of 2
        let v_inter = 8.0 * 1.0;
        let expected = v_inter / (16.0 + 16.0 - v_inter);
        assert!((iou_3d(&a, &b) - expected).abs() < 1e-12);
        // Disjoint vertical intervals: zero even with identical footprints.
        b.cz = 5.0;
        assert_eq!(iou_3d(&a, &b), 0.0);
    }

    #[test]
    fn nms_chain_keeps_first_and_third() {
        // A (0.9) overlaps B (0.8); B overlaps C (0.7); A and C are disjoint.
        // Greedy keeps A, suppresses B, keeps C.
        let mut a = car(10.0, 0.0, 2.0, 4.0, 0.0);
        let mut b = car(11.5, 0.0, 2.0, 4.0, 0.0);
        let mut c = car(12.8, 0.0, 2.0, 4.0, 0.0);
        a.confidence = 0.9;
        b.confidence = 0.8;
        c.confidence = 0.7;
        assert!(bev_iou(&a, &b) > 0.45);
        assert!(bev_iou(&b, &c) > 0.45);
        assert!(bev_iou(&a, &c) < 0.45);
        let kept = nms(&[a.clone(), b, c.clone()], 0.45);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0], a);
        assert_eq!(kept[1], c);
    }

    #[test]
    fn nms_is_class_aware() {
        let mut a = car(10.0, 0.0, 2.0, 4.0, 0.0);
        let mut b = car(10.0, 0.0, 2.0, 4.0, 0.0);
        a.confidence = 0.9;
        b.confidence = 0.8;
        b.class = ClassId::Cyclist;
        // Perfect overlap but different classes: both survive.
        let kept = nms(&[a, b], 0.45);
        assert_eq!(kept.len(), 2);
        assert!(kept[0].confidence >= kept[1].confidence);
    }

    #[test]
    fn nms_tie_breaks_by_input_order() {
        let mut a = car(10.0, 0.0, 2.0, 4.0, 0.0);
        let mut b = car(10.1, 0.0, 2.0, 4.0, 0.0);
        a.confidence = 0.8;
        b.confidence = 0.8;
        let kept = nms(&[a.clone(), b], 0.45);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0], a);
    }
}
