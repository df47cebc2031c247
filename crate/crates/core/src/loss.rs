//! The combined detection loss and its analytic gradient.
//!
//! Everything is squared error over the head tensor, split into six terms:
//! center offsets (on the sigmoid scale), dimensions (on square roots of
//! decoded meters, so large boxes don't drown small ones), yaw (on the raw
//! normalized angle), object / no-object confidence, and class scores
//! (squared error over the softmax). Term weights follow the usual one-shot
//! detector recipe: coordinates up-weighted, empty-cell confidence
//! down-weighted.
//!
//! Confidence targets for object slots are the current BEV IoU between the
//! decoded prediction and its ground-truth box, refreshed once per step and
//! treated as a constant by the gradient (use [`update_conf_targets`]);
//! `--conf-target one` style training pins them to 1 instead.

use crate::bev::GridConfig;
use crate::boxes::{
    bev_iou, cell_of, decode, sigmoid, softmax, Anchor, CellIndex, HeadConfig, RawPrediction,
};
use crate::error::{Error, Result};
use crate::types::{wrap_angle, Obb3D};

/// Term weights for the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Applied to the center *and* dimension terms.
    pub coord: f64,
    pub yaw: f64,
    pub conf_obj: f64,
    pub conf_noobj: f64,
    pub classes: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { coord: 5.0, yaw: 1.0, conf_obj: 1.0, conf_noobj: 0.5, classes: 1.0 }
    }
}

/// What an object slot's confidence should regress to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfTarget {
    /// BEV IoU of the decoded prediction against its ground truth,
    /// recomputed each step.
    #[default]
    Iou,
    /// Constant 1.
    One,
}

impl std::str::FromStr for ConfTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<ConfTarget> {
        match s {
            "iou" => Ok(ConfTarget::Iou),
            "one" => Ok(ConfTarget::One),
            _ => Err(Error::Config(format!("conf target must be `iou` or `one`, got `{s}`"))),
        }
    }
}

/// Unweighted per-term sums plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub coord: f64,
    pub dim: f64,
    pub yaw: f64,
    pub conf_obj: f64,
    pub conf_noobj: f64,
    pub class: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "step,total,coord,dim,yaw,conf_obj,conf_noobj,class";

    pub fn csv_line(&self, step: usize) -> String {
        format!(
            "{step},{},{},{},{},{},{},{}",
            self.total, self.coord, self.dim, self.yaw, self.conf_obj, self.conf_noobj, self.class
        )
    }

    fn scaled(mut self, k: f64) -> LossBreakdown {
        self.total *= k;
        self.coord *= k;
        self.dim *= k;
        self.yaw *= k;
        self.conf_obj *= k;
        self.conf_noobj *= k;
        self.class *= k;
        self
    }

    fn add(&mut self, o: &LossBreakdown) {
        self.total += o.total;
        self.coord += o.coord;
        self.dim += o.dim;
        self.yaw += o.yaw;
        self.conf_obj += o.conf_obj;
        self.conf_noobj += o.conf_noobj;
        self.class += o.class;
    }

    /// Mean of several breakdowns, e.g. over a batch.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let mut acc = LossBreakdown::default();
        for b in items {
            acc.add(b);
        }
        acc.scaled(1.0 / items.len().max(1) as f64)
    }
}

/// The head output (or its gradient) in slot-major order: slot
/// `(row * S + col) * B + a`, then the `8 + classes` values
/// `[t_x, t_y, t_z, t_w, t_l, t_h, t_phi, t_conf, logits...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTensor {
    pub head: HeadConfig,
    pub data: Vec<f64>,
}

impl HeadTensor {
    pub fn zeros(head: HeadConfig) -> HeadTensor {
        HeadTensor { head, data: vec![0.0; head.slots() * head.values_per_anchor()] }
    }

    pub fn slot_index(&self, cell: CellIndex, anchor: usize) -> usize {
        (cell.row * self.head.grid_side + cell.col) * self.head.anchors_per_cell + anchor
    }

    fn slot_values(&self, slot: usize) -> &[f64] {
        let v = self.head.values_per_anchor();
        &self.data[slot * v..(slot + 1) * v]
    }

    pub fn raw_at(&self, slot: usize) -> RawPrediction {
        let s = self.slot_values(slot);
        RawPrediction {
            t_x: s[0],
            t_y: s[1],
            t_z: s[2],
            t_w: s[3],
            t_l: s[4],
            t_h: s[5],
            t_phi: s[6],
            t_conf: s[7],
            class_logits: s[8..].to_vec(),
        }
    }

    pub fn set_raw(&mut self, cell: CellIndex, anchor: usize, raw: &RawPrediction) {
        let slot = self.slot_index(cell, anchor);
        let v = self.head.values_per_anchor();
        let s = &mut self.data[slot * v..(slot + 1) * v];
        s[0] = raw.t_x;
        s[1] = raw.t_y;
        s[2] = raw.t_z;
        s[3] = raw.t_w;
        s[4] = raw.t_l;
        s[5] = raw.t_h;
        s[6] = raw.t_phi;
        s[7] = raw.t_conf;
        s[8..].copy_from_slice(&raw.class_logits);
    }

    /// Reinterprets a channel-major network output `(B*(8+C), S, S)` into
    /// slot-major order. Channel `a * (8+C) + v` holds value `v` of anchor `a`.
    pub fn from_chw(head: HeadConfig, chw: &[f64]) -> Result<HeadTensor> {
        let (s, b, v) = (head.grid_side, head.anchors_per_cell, head.values_per_anchor());
        if chw.len() != b * v * s * s {
            return Err(Error::Shape(format!(
                "head tensor needs {} values ({}x{}x{}), got {}",
                b * v * s * s,
                b * v,
                s,
                s,
                chw.len()
            )));
        }
        let mut out = HeadTensor::zeros(head);
        for row in 0..s {
            for col in 0..s {
                for a in 0..b {
                    for val in 0..v {
                        let chw_idx = (a * v + val) * s * s + row * s + col;
                        let slot = (row * s + col) * b + a;
                        out.data[slot * v + val] = chw[chw_idx];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`HeadTensor::from_chw`]; used to push gradients back into
    /// the network.
    pub fn to_chw(&self) -> Vec<f64> {
        let (s, b, v) =
            (self.head.grid_side, self.head.anchors_per_cell, self.head.values_per_anchor());
        let mut chw = vec![0.0; b * v * s * s];
        for row in 0..s {
            for col in 0..s {
                for a in 0..b {
                    for val in 0..v {
                        let slot = (row * s + col) * b + a;
                        chw[(a * v + val) * s * s + row * s + col] = self.data[slot * v + val];
                    }
                }
            }
        }
        chw
    }
}

/// Regression target for one anchor slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTarget {
    pub obj: bool,
    /// Sigmoid-scale center targets within the cell / height window.
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    /// Target dimensions in meters.
    pub w: f64,
    pub l: f64,
    pub h: f64,
    /// Yaw on the normalized `[-1, 1]` scale.
    pub yaw_norm: f64,
    /// Confidence target: IoU with ground truth (or 1), 0 for empty slots.
    pub conf: f64,
    pub class: usize,
    /// The assigned ground-truth box, kept so confidence targets can be
    /// refreshed as predictions move.
    pub gt: Option<Obb3D>,
}

impl SlotTarget {
    fn empty() -> SlotTarget {
        SlotTarget {
            obj: false,
            fx: 0.0,
            fy: 0.0,
            fz: 0.0,
            w: 0.0,
            l: 0.0,
            h: 0.0,
            yaw_norm: 0.0,
            conf: 0.0,
            class: 0,
            gt: None,
        }
    }
}

/// Targets for a whole frame, aligned slot-for-slot with a [`HeadTensor`].
#[derive(Debug, Clone)]
pub struct TargetTensor {
    pub head: HeadConfig,
    pub grid: GridConfig,
    pub anchors: Vec<Anchor>,
    pub slots: Vec<SlotTarget>,
    /// Labels whose center fell outside the grid.
    pub skipped_outside: usize,
    /// Labels dropped because every anchor slot in their cell was taken.
    pub dropped_conflict: usize,
}

impl TargetTensor {
    fn slot_anchor(&self, slot: usize) -> &Anchor {
        &self.anchors[slot % self.head.anchors_per_cell]
    }

    fn slot_cell(&self, slot: usize) -> CellIndex {
        let cell = slot / self.head.anchors_per_cell;
        CellIndex { row: cell / self.head.grid_side, col: cell % self.head.grid_side }
    }
}

/// Builds regression targets for one frame's labels.
///
/// Each label lands in the head cell containing its center. Among that
/// cell's anchors it takes the free slot whose prior box (anchor dimensions,
/// zero yaw, centered on the cell) best overlaps the label footprint; if the
/// best is taken the label falls through to the next best, and a label that
/// finds every slot occupied is dropped and counted.
pub fn build_targets(
    labels: &[Obb3D],
    anchors: &[Anchor],
    head: &HeadConfig,
    grid: &GridConfig,
) -> Result<TargetTensor> {
    if anchors.len() != head.anchors_per_cell {
        return Err(Error::Config(format!(
            "{} anchors for {} slots per cell",
            anchors.len(),
            head.anchors_per_cell
        )));
    }
    if anchors.iter().any(|a| a.p_w <= 0.0 || a.p_l <= 0.0 || a.p_h <= 0.0) {
        return Err(Error::Config("anchor dimensions must be positive".into()));
    }
    let mut targets = TargetTensor {
        head: *head,
        grid: *grid,
        anchors: anchors.to_vec(),
        slots: vec![SlotTarget::empty(); head.slots()],
        skipped_outside: 0,
        dropped_conflict: 0,
    };

    for label in labels {
        let Ok((cell, fx, fy)) = cell_of(label.cx, label.cy, head, grid) else {
            targets.skipped_outside += 1;
            continue;
        };
        let (ccx, ccy) = head_cell_center(cell, head, grid);
        // Rank anchors by how well their prior overlaps this label.
        let mut ranked: Vec<(usize, f64)> = anchors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let prior = Obb3D {
                    cx: ccx,
                    cy: ccy,
                    cz: (grid.z_min + grid.z_max) / 2.0,
                    w: a.p_w,
                    l: a.p_l,
                    h: a.p_h,
                    yaw: 0.0,
                    class: label.class,
                    confidence: 1.0,
                };
                (i, bev_iou(label, &prior))
            })
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let base = (cell.row * head.grid_side + cell.col) * head.anchors_per_cell;
        let Some(&(a, _)) = ranked.iter().find(|&&(i, _)| !targets.slots[base + i].obj) else {
            targets.dropped_conflict += 1;
            continue;
        };
        let fz = ((label.cz - grid.z_min) / (grid.z_max - grid.z_min)).clamp(1e-6, 1.0 - 1e-6);
        targets.slots[base + a] = SlotTarget {
            obj: true,
            fx,
            fy,
            fz,
            w: label.w,
            l: label.l,
            h: label.h,
            yaw_norm: wrap_angle(label.yaw) / std::f64::consts::PI,
            conf: 1.0,
            class: label.class.index(),
            gt: Some(label.clone()),
        };
    }
    Ok(targets)
}

fn head_cell_center(cell: CellIndex, head: &HeadConfig, grid: &GridConfig) -> (f64, f64) {
    let x = grid.x_range - (cell.row as f64 + 0.5) * head.cell_size;
    let y = (cell.col as f64 + 0.5) * head.cell_size - grid.y_half_range;
    (x, y)
}

/// Refreshes the confidence targets of object slots from the current
/// predictions: the BEV IoU between each slot's decoded box and its ground
/// truth (constant 1 in [`ConfTarget::One`] mode). The result is data, not a
/// function of the prediction as far as the gradient is concerned.
pub fn update_conf_targets(targets: &mut TargetTensor, raw: &HeadTensor, mode: ConfTarget) {
    debug_assert_eq!(raw.head, targets.head);
    for slot in 0..targets.slots.len() {
        if !targets.slots[slot].obj {
            continue;
        }
        targets.slots[slot].conf = match mode {
            ConfTarget::One => 1.0,
            ConfTarget::Iou => {
                let gt = targets.slots[slot].gt.as_ref().expect("obj slot has ground truth");
                let decoded = decode(
                    &raw.raw_at(slot),
                    targets.slot_cell(slot),
                    targets.slot_anchor(slot),
                    &targets.head,
                    &targets.grid,
                );
                bev_iou(&decoded, gt)
            }
        };
    }
}

/// Decodes every anchor slot of a head tensor into world-space detections,
/// keeping those whose score (objectness times best class probability)
/// reaches `score_threshold`. The kept box's `confidence` carries that
/// combined score.
pub fn decode_detections(
    raw: &HeadTensor,
    anchors: &[Anchor],
    grid: &GridConfig,
    score_threshold: f64,
) -> Result<Vec<Obb3D>> {
    if anchors.len() != raw.head.anchors_per_cell {
        return Err(Error::Config(format!(
            "{} anchors for {} slots per cell",
            anchors.len(),
            raw.head.anchors_per_cell
        )));
    }
    let mut out = Vec::new();
    for slot in 0..raw.head.slots() {
        let pred = raw.raw_at(slot);
        let conf = sigmoid(pred.t_conf);
        let p_best = softmax(&pred.class_logits).into_iter().fold(0.0, f64::max);
        let score = conf * p_best;
        if score < score_threshold {
            continue;
        }
        let cell_flat = slot / raw.head.anchors_per_cell;
        let cell = CellIndex {
            row: cell_flat / raw.head.grid_side,
            col: cell_flat % raw.head.grid_side,
        };
        let mut obb = decode(
            &pred,
            cell,
            &anchors[slot % raw.head.anchors_per_cell],
            &raw.head,
            grid,
        );
        obb.confidence = score;
        out.push(obb);
    }
    Ok(out)
}

fn check_shapes(raw: &HeadTensor, targets: &TargetTensor) -> Result<()> {
    if raw.head != targets.head || raw.data.len() != targets.slots.len() * raw.head.values_per_anchor() {
        return Err(Error::Shape(format!(
            "prediction tensor ({} slots) does not match targets ({} slots)",
            raw.data.len() / raw.head.values_per_anchor().max(1),
            targets.slots.len()
        )));
    }
    Ok(())
}

/// Evaluates the combined loss. Terms in the returned breakdown are
/// unweighted sums over slots; only `total` applies the weights.
pub fn combined_loss(
    raw: &HeadTensor,
    targets: &TargetTensor,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    check_shapes(raw, targets)?;
    let mut out = LossBreakdown::default();
    let v = raw.head.values_per_anchor();
    for (slot, tgt) in targets.slots.iter().enumerate() {
        let s = &raw.data[slot * v..(slot + 1) * v];
        if !tgt.obj {
            let c = sigmoid(s[7]);
            out.conf_noobj += c * c;
            continue;
        }
        let anchor = targets.slot_anchor(slot);
        for (raw_t, f) in [(s[0], tgt.fx), (s[1], tgt.fy), (s[2], tgt.fz)] {
            let d = sigmoid(raw_t) - f;
            out.coord += d * d;
        }
        for (raw_t, prior, meters) in
            [(s[3], anchor.p_w, tgt.w), (s[4], anchor.p_l, tgt.l), (s[5], anchor.p_h, tgt.h)]
        {
            let d = (prior * raw_t.exp()).sqrt() - meters.sqrt();
            out.dim += d * d;
        }
        let dyaw = s[6] - tgt.yaw_norm;
        out.yaw += dyaw * dyaw;
        let dconf = sigmoid(s[7]) - tgt.conf;
        out.conf_obj += dconf * dconf;
        let probs = softmax(&s[8..]);
        for (c, &p) in probs.iter().enumerate() {
            let g = if c == tgt.class { 1.0 } else { 0.0 };
            out.class += (p - g) * (p - g);
        }
    }
    out.total = weights.coord * (out.coord + out.dim)
        + weights.yaw * out.yaw
        + weights.conf_obj * out.conf_obj
        + weights.conf_noobj * out.conf_noobj
        + weights.classes * out.class;
    Ok(out)
}

/// Analytic gradient of the weighted total with respect to every raw head
/// value. Also returns the breakdown, which falls out of the same pass.
pub fn loss_gradient(
    raw: &HeadTensor,
    targets: &TargetTensor,
    weights: &LossWeights,
) -> Result<(LossBreakdown, HeadTensor)> {
    check_shapes(raw, targets)?;
    let mut grad = HeadTensor::zeros(raw.head);
    let mut out = LossBreakdown::default();
    let v = raw.head.values_per_anchor();
    for (slot, tgt) in targets.slots.iter().enumerate() {
        let s = &raw.data[slot * v..(slot + 1) * v];
        let g = &mut grad.data[slot * v..(slot + 1) * v];
        if !tgt.obj {
            let c = sigmoid(s[7]);
            out.conf_noobj += c * c;
            g[7] = weights.conf_noobj * 2.0 * c * c * (1.0 - c);
            continue;
        }
        let anchor = targets.slot_anchor(slot);
        for (i, f) in [(0, tgt.fx), (1, tgt.fy), (2, tgt.fz)] {
            let sig = sigmoid(s[i]);
            let d = sig - f;
            out.coord += d * d;
            g[i] = weights.coord * 2.0 * d * sig * (1.0 - sig);
        }
        for (i, prior, meters) in
            [(3, anchor.p_w, tgt.w), (4, anchor.p_l, tgt.l), (5, anchor.p_h, tgt.h)]
        {
            let root = (prior * s[i].exp()).sqrt();
            let d = root - meters.sqrt();
            out.dim += d * d;
            // d(root)/dt = root / 2.
            g[i] = weights.coord * d * root;
        }
        let dyaw = s[6] - tgt.yaw_norm;
        out.yaw += dyaw * dyaw;
        g[6] = weights.yaw * 2.0 * dyaw;
        let conf = sigmoid(s[7]);
        let dconf = conf - tgt.conf;
        out.conf_obj += dconf * dconf;
        g[7] = weights.conf_obj * 2.0 * dconf * conf * (1.0 - conf);
        let probs = softmax(&s[8..]);
        let err: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(c, &p)| p - if c == tgt.class { 1.0 } else { 0.0 })
            .collect();
        out.class += err.iter().map(|e| e * e).sum::<f64>();
        let inner: f64 = err.iter().zip(&probs).map(|(e, p)| e * p).sum();
        for k in 0..probs.len() {
            g[8 + k] = weights.classes * 2.0 * probs[k] * (err[k] - inner);
        }
    }
    out.total = weights.coord * (out.coord + out.dim)
        + weights.yaw * out.yaw
        + weights.conf_obj * out.conf_obj
        + weights.conf_noobj * out.conf_noobj
        + weights.classes * out.class;
    Ok((out, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::encode;
    use crate::types::ClassId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_setup() -> (GridConfig, HeadConfig, Vec<Anchor>) {
        // 3.2 m x 3.2 m at 0.1 m -> 32x32 grid, downsample 16 -> 2x2 head.
        let grid = GridConfig {
            x_range: 3.2,
            y_half_range: 1.6,
            resolution: 0.1,
            z_min: -2.0,
            z_max: 2.0,
        };
        let head = HeadConfig::for_grid(&grid, 16, 3).unwrap();
        let anchors = vec![
            Anchor { class: ClassId::Car, p_w: 1.6, p_l: 3.9, p_h: 1.56 },
            Anchor { class: ClassId::Pedestrian, p_w: 0.66, p_l: 0.88, p_h: 1.73 },
            Anchor { class: ClassId::Cyclist, p_w: 0.6, p_l: 1.76, p_h: 1.73 },
        ];
        (grid, head, anchors)
    }

    fn sample_label(grid: &GridConfig) -> Obb3D {
        Obb3D {
            cx: grid.x_range * 0.6,
            cy: -0.4,
            cz: 0.2,
            w: 0.7,
            l: 0.9,
            h: 1.7,
            yaw: 0.5,
            class: ClassId::Pedestrian,
            confidence: 1.0,
        }
    }

    fn random_head(head: HeadConfig, seed: u64, scale: f64) -> HeadTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = HeadTensor::zeros(head);
        for v in &mut t.data {
            *v = rng.random_range(-scale..scale);
        }
        t
    }

    #[test]
    fn zero_weights_zero_total() {
        let (grid, head, anchors) = small_setup();
        let targets = build_targets(&[sample_label(&grid)], &anchors, &head, &grid).unwrap();
        let raw = random_head(head, 7, 2.0);
        let w = LossWeights { coord: 0.0, yaw: 0.0, conf_obj: 0.0, conf_noobj: 0.0, classes: 0.0 };
        let b = combined_loss(&raw, &targets, &w).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(b.coord > 0.0); // terms themselves are unweighted
    }

    #[test]
    fn perfect_prediction_has_vanishing_object_terms() {
        let (grid, head, anchors) = small_setup();
        let label = sample_label(&grid);
        let mut targets = build_targets(&[label.clone()], &anchors, &head, &grid).unwrap();
        // Write the encoded label into the slot it was assigned.
        let slot = targets.slots.iter().position(|s| s.obj).unwrap();
        let a = slot % head.anchors_per_cell;
        let (cell, mut raw_slot) = encode(&label, &anchors[a], &head, &grid).unwrap();
        raw_slot.t_conf = 20.0; // saturate confidence toward 1
        let mut raw = HeadTensor::zeros(head);
        raw.set_raw(cell, a, &raw_slot);
        update_conf_targets(&mut targets, &raw, ConfTarget::Iou);
        assert!((targets.slots[slot].conf - 1.0).abs() < 1e-9, "self-IoU should be 1");
        let b = combined_loss(&raw, &targets, &LossWeights::default()).unwrap();
        assert!(b.coord < 1e-10, "coord = {}", b.coord);
        assert!(b.dim < 1e-18);
        assert!(b.yaw < 1e-18);
        assert!(b.conf_obj < 1e-10);
        // Class term: softmax of a one-hot logit is not one-hot, so this
        // term stays positive even for a perfect box.
        assert!(b.class > 0.0);
        assert!(b.conf_noobj > 0.0); // empty slots at sigmoid(0) = 0.5
    }

    #[test]
    fn best_overlap_anchor_is_assigned_first() {
        let (grid, head, anchors) = small_setup();
        // A label that *is* the pedestrian prior, centered on its cell.
        let label = Obb3D {
            cx: 2.4,
            cy: -0.8,
            cz: 0.0,
            w: anchors[1].p_w,
            l: anchors[1].p_l,
            h: anchors[1].p_h,
            yaw: 0.0,
            class: ClassId::Pedestrian,
            confidence: 1.0,
        };
        let targets = build_targets(&[label], &anchors, &head, &grid).unwrap();
        let slot = targets.slots.iter().position(|s| s.obj).unwrap();
        assert_eq!(slot % head.anchors_per_cell, 1);
    }

    #[test]
    fn colliding_labels_fall_through_anchors_then_drop() {
        let (grid, head, anchors) = small_setup();
        let labels = vec![sample_label(&grid); 4]; // same cell every time
        let targets = build_targets(&labels, &anchors, &head, &grid).unwrap();
        let assigned = targets.slots.iter().filter(|s| s.obj).count();
        assert_eq!(assigned, 3); // one per anchor slot
        assert_eq!(targets.dropped_conflict, 1);
    }

    #[test]
    fn out_of_grid_labels_are_counted() {
        let (grid, head, anchors) = small_setup();
        let mut label = sample_label(&grid);
        label.cx = 50.0;
        let targets = build_targets(&[label], &anchors, &head, &grid).unwrap();
        assert_eq!(targets.skipped_outside, 1);
        assert!(targets.slots.iter().all(|s| !s.obj));
    }

    #[test]
    fn conf_targets_track_prediction_quality() {
        let (grid, head, anchors) = small_setup();
        let label = sample_label(&grid);
        let mut targets = build_targets(&[label.clone()], &anchors, &head, &grid).unwrap();
        let slot = targets.slots.iter().position(|s| s.obj).unwrap();
        let raw = HeadTensor::zeros(head); // anchor box at cell center
        update_conf_targets(&mut targets, &raw, ConfTarget::Iou);
        let partial = targets.slots[slot].conf;
        assert!(partial > 0.0 && partial < 1.0, "partial overlap expected, got {partial}");
        update_conf_targets(&mut targets, &raw, ConfTarget::One);
        assert_eq!(targets.slots[slot].conf, 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (grid, head, anchors) = small_setup();
        let labels = vec![sample_label(&grid), {
            let mut l = sample_label(&grid);
            l.cx = 0.9;
            l.cy = 0.8;
            l.class = ClassId::Car;
            l.w = 1.5;
            l.l = 3.6;
            l.yaw = -1.2;
            l
        }];
        let mut targets = build_targets(&labels, &anchors, &head, &grid).unwrap();
        let raw = random_head(head, 42, 1.5);
        update_conf_targets(&mut targets, &raw, ConfTarget::Iou);

        for weights in [
            LossWeights::default(),
            LossWeights { coord: 2.0, yaw: 3.0, conf_obj: 0.7, conf_noobj: 1.3, classes: 2.2 },
        ] {
            let (_, grad) = loss_gradient(&raw, &targets, &weights).unwrap();
            let h = 1e-5;
            for i in 0..raw.data.len() {
                let mut plus = raw.clone();
                plus.data[i] += h;
                let mut minus = raw.clone();
                minus.data[i] -= h;
                // Confidence targets are data: hold them fixed across the probe.
                let fplus = combined_loss(&plus, &targets, &weights).unwrap().total;
                let fminus = combined_loss(&minus, &targets, &weights).unwrap().total;
                let fd = (fplus - fminus) / (2.0 * h);
                let denom = fd.abs().max(grad.data[i].abs()).max(1e-8);
                assert!(
                    (fd - grad.data[i]).abs() / denom < 1e-4,
                    "value {i}: analytic {} vs fd {fd}",
                    grad.data[i]
                );
            }
        }
    }

    #[test]
    fn chw_round_trip() {
        let (_, head, _) = small_setup();
        let t = random_head(head, 3, 1.0);
        let chw = t.to_chw();
        let back = HeadTensor::from_chw(head, &chw).unwrap();
        assert_eq!(back, t);
        assert!(HeadTensor::from_chw(head, &chw[1..]).is_err());
    }

    #[test]
    fn csv_line_layout() {
        let b = LossBreakdown {
            total: 1.5,
            coord: 0.25,
            dim: 0.125,
            yaw: 0.5,
            conf_obj: 0.0625,
            conf_noobj: 0.03125,
            class: 0.015625,
        };
        assert_eq!(LossBreakdown::CSV_HEADER, "step,total,coord,dim,yaw,conf_obj,conf_noobj,class");
        assert_eq!(b.csv_line(7), "7,1.5,0.25,0.125,0.5,0.0625,0.03125,0.015625");
    }
}
