//! Detection evaluation (matching, precision/recall, average precision,
//! AP-vs-IoU-threshold sweeps) and the resolution-vs-latency benchmark.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::bev::{rasterize, GridConfig};
use crate::boxes::{bev_iou, iou_3d};
use crate::error::{Error, Result};
use crate::net::{grid_to_tensor, Network};
use crate::types::{ClassId, Obb3D, PointCloud};

/// Which overlap measure drives matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouKind {
    #[default]
    Bev,
    ThreeD,
}

impl IouKind {
    pub fn overlap(self, a: &Obb3D, b: &Obb3D) -> f64 {
        match self {
            IouKind::Bev => bev_iou(a, b),
            IouKind::ThreeD => iou_3d(a, b),
        }
    }
}

impl std::str::FromStr for IouKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<IouKind> {
        match s {
            "bev" => Ok(IouKind::Bev),
            "3d" => Ok(IouKind::ThreeD),
            _ => Err(Error::Config(format!("iou must be `bev` or `3d`, got `{s}`"))),
        }
    }
}

/// All boxes belonging to one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub frame: String,
    pub boxes: Vec<Obb3D>,
}

/// Reads a detections (or ground-truth) file: one box per line,
/// `frame class conf cx cy cz w l h yaw`, whitespace-separated, `#` comments
/// allowed. Frames keep their first-appearance order.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sets: Vec<DetectionSet> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let fail = |msg: String| {
            Error::Format(format!("{}:{}: {msg}", path.display(), lineno + 1))
        };
        if fields.len() != 10 {
            return Err(fail(format!("expected 10 fields, got {}", fields.len())));
        }
        let class = ClassId::parse(fields[1])
            .ok_or_else(|| fail(format!("unknown class `{}`", fields[1])))?;
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|e| fail(format!("field {i}: {e}")))
        };
        let confidence = num(2)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(fail(format!("confidence {confidence} outside [0, 1]")));
        }
        let obb = Obb3D {
            cx: num(3)?,
            cy: num(4)?,
            cz: num(5)?,
            w: num(6)?,
            l: num(7)?,
            h: num(8)?,
            yaw: num(9)?,
            class,
            confidence,
        };
        match sets.iter_mut().find(|s| s.frame == fields[0]) {
            Some(set) => set.boxes.push(obb),
            None => sets.push(DetectionSet { frame: fields[0].to_string(), boxes: vec![obb] }),
        }
    }
    Ok(sets)
}

pub fn write_detections(sets: &[DetectionSet], path: &Path) -> Result<()> {
    let mut out = String::new();
    for set in sets {
        for b in &set.boxes {
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {} {} {}\n",
                set.frame, b.class, b.confidence, b.cx, b.cy, b.cz, b.w, b.l, b.h, b.yaw
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Outcome of matching one frame's detections of one class.
#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    /// `(confidence, is_true_positive)` per detection, in descending
    /// confidence order (ties keep input order).
    pub flags: Vec<(f64, bool)>,
    /// Ground truths of the class left unmatched (false negatives).
    pub missed: usize,
}

/// Greedy confidence-ordered matching within one frame. Each detection of
/// `class` claims the unmatched same-class ground truth with the highest
/// overlap, provided it reaches `iou_threshold`; otherwise it is a false
/// positive. Permuting the input changes nothing but tie order, and ties
/// break by input index.
pub fn match_detections(
    dets: &[Obb3D],
    gts: &[Obb3D],
    iou_threshold: f64,
    class: ClassId,
    kind: IouKind,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == class).collect();
    order.sort_by(|&i, &j| dets[j].confidence.total_cmp(&dets[i].confidence).then(i.cmp(&j)));
    let gt_idx: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].class == class).collect();
    let mut taken = vec![false; gt_idx.len()];
    let mut flags = Vec::with_capacity(order.len());
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (k, &g) in gt_idx.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let o = kind.overlap(&dets[d], &gts[g]);
            if o >= iou_threshold && best.map_or(true, |(_, b)| o > b) {
                best = Some((k, o));
            }
        }
        match best {
            Some((k, _)) => {
                taken[k] = true;
                flags.push((dets[d].confidence, true));
            }
            None => flags.push((dets[d].confidence, false)),
        }
    }
    MatchResult { missed: taken.iter().filter(|&&t| !t).count(), flags }
}

/// Aggregated match counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
}

impl EvalCounts {
    pub fn from_flags(flags: &[(f64, bool)], missed: usize) -> EvalCounts {
        let tp = flags.iter().filter(|f| f.1).count();
        EvalCounts { tp, fp: flags.len() - tp, missed }
    }
}

/// `precision = TP/(TP+FP)`, `recall = TP/(TP+FN)`; zero denominators give
/// zero, so empty inputs stay in range.
pub fn precision_recall(counts: &EvalCounts) -> (f64, f64) {
    let precision = if counts.tp + counts.fp == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    };
    let recall = if counts.tp + counts.missed == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.missed) as f64
    };
    (precision, recall)
}

/// One point of a precision-recall curve, at some confidence rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Builds the rank-swept PR curve from per-detection flags pooled over
/// frames. Flags are re-sorted by descending confidence (stable, so equal
/// confidences keep their pooled order); point `k` describes the top `k+1`
/// detections.
pub fn pr_curve(flags: &[(f64, bool)], n_gt: usize) -> Vec<PRPoint> {
    let mut sorted = flags.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut out = Vec::with_capacity(sorted.len());
    for (k, &(conf, is_tp)) in sorted.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        out.push(PRPoint {
            confidence: conf,
            precision: tp as f64 / (k + 1) as f64,
            recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
        });
    }
    out
}

/// Interpolation grid for average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    /// Classic 11-point: recall levels 0.0, 0.1, ..., 1.0.
    #[default]
    Eleven,
    /// 40-point: recall levels 1/40, 2/40, ..., 1.0.
    Forty,
}

impl std::str::FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Interp> {
        match s {
            "11" => Ok(Interp::Eleven),
            "40" => Ok(Interp::Forty),
            _ => Err(Error::Config(format!("interp must be `11` or `40`, got `{s}`"))),
        }
    }
}

/// Interpolated average precision over a rank-swept PR curve: the mean over
/// the recall grid of the best precision achieved at or beyond each recall
/// level (0 when the curve never reaches it). Empty curves give 0.
pub fn average_precision(curve: &[PRPoint], interp: Interp) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    let levels: Vec<f64> = match interp {
        Interp::Eleven => (0..=10).map(|i| i as f64 / 10.0).collect(),
        Interp::Forty => (1..=40).map(|i| i as f64 / 40.0).collect(),
    };
    let mut acc = 0.0;
    for &r in &levels {
        let best = curve
            .iter()
            .filter(|p| p.recall >= r - 1e-12)
            .map(|p| p.precision)
            .fold(0.0, f64::max);
        acc += best;
    }
    acc / levels.len() as f64
}

/// Joins detection and ground-truth frames by id (union, in first-appearance
/// order of gts then dets), returning per-class pooled flags and ground-truth
/// counts at one IoU threshold.
pub fn match_frames(
    dets: &[DetectionSet],
    gts: &[DetectionSet],
    iou_threshold: f64,
    class: ClassId,
    kind: IouKind,
) -> (Vec<(f64, bool)>, usize) {
    let mut frames: Vec<&str> = Vec::new();
    for s in gts.iter().chain(dets) {
        if !frames.contains(&s.frame.as_str()) {
            frames.push(&s.frame);
        }
    }
    let empty: Vec<Obb3D> = Vec::new();
    let per_frame: Vec<MatchResult> = frames
        .par_iter()
        .map(|&frame| {
            let d = dets.iter().find(|s| s.frame == frame).map_or(&empty, |s| &s.boxes);
            let g = gts.iter().find(|s| s.frame == frame).map_or(&empty, |s| &s.boxes);
            match_detections(d, g, iou_threshold, class, kind)
        })
        .collect();
    let mut flags = Vec::new();
    let mut n_gt = 0;
    for m in per_frame {
        n_gt += m.flags.iter().filter(|f| f.1).count() + m.missed;
        flags.extend(m.flags);
    }
    (flags, n_gt)
}

/// Per-class AP at each IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ApCurve {
    pub class: ClassId,
    /// `(iou_threshold, ap)` pairs, in input threshold order.
    pub points: Vec<(f64, f64)>,
}

/// Sweeps IoU thresholds and reports AP per class per threshold.
pub fn map_over_thresholds(
    dets: &[DetectionSet],
    gts: &[DetectionSet],
    thresholds: &[f64],
    interp: Interp,
    kind: IouKind,
) -> Result<Vec<ApCurve>> {
    if thresholds.iter().any(|&t| !(0.0 < t && t < 1.0)) {
        return Err(Error::Config(format!("IoU thresholds must lie in (0, 1): {thresholds:?}")));
    }
    Ok(ClassId::ALL
        .iter()
        .map(|&class| {
            let points = thresholds
                .iter()
                .map(|&t| {
                    let (flags, n_gt) = match_frames(dets, gts, t, class, kind);
                    (t, average_precision(&pr_curve(&flags, n_gt), interp))
                })
                .collect();
            ApCurve { class, points }
        })
        .collect())
}

/// Mean AP over classes at each threshold index.
pub fn mean_ap(curves: &[ApCurve]) -> Vec<(f64, f64)> {
    if curves.is_empty() {
        return Vec::new();
    }
    (0..curves[0].points.len())
        .map(|i| {
            let t = curves[0].points[i].0;
            let sum: f64 = curves.iter().map(|c| c.points[i].1).sum();
            (t, sum / curves.len() as f64)
        })
        .collect()
}

/// `class,threshold,ap` rows.
pub fn ap_csv(curves: &[ApCurve]) -> String {
    let mut out = String::from("class,threshold,ap\n");
    for c in curves {
        for &(t, ap) in &c.points {
            out.push_str(&format!("{},{},{}\n", c.class, t, ap));
        }
    }
    out
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub resolution: f64,
    pub grid_side: usize,
    pub median_ms: f64,
}

/// Least-squares fit of `t = a * (1/r)^2 + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub a: f64,
    pub c: f64,
    pub r2: f64,
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Times the pipeline (rasterization, plus network forward when given) at
/// each resolution: median of `runs` (at least 20) warm single-threaded
/// repetitions, then fits wall time against inverse squared resolution —
/// i.e. against cell count, which grows quadratically as cells shrink.
pub fn bench_resolution_sweep(
    cloud: &PointCloud,
    base: &GridConfig,
    resolutions: &[f64],
    net: Option<&Network>,
    runs: usize,
) -> Result<(Vec<BenchRecord>, QuadraticFit)> {
    if resolutions.is_empty() {
        return Err(Error::Config("need at least one resolution".into()));
    }
    let runs = runs.max(20);
    let mut records = Vec::with_capacity(resolutions.len());
    for &res in resolutions {
        let cfg = GridConfig { resolution: res, ..*base };
        cfg.validate()?;
        let run_once = || -> Result<f64> {
            let start = Instant::now();
            let map = rasterize(cloud, &cfg)?;
            if let Some(net) = net {
                let out = net.forward(&grid_to_tensor(&map))?;
                std::hint::black_box(&out.data);
            }
            std::hint::black_box(&map.density);
            Ok(start.elapsed().as_secs_f64() * 1e3)
        };
        for _ in 0..3 {
            run_once()?; // warmup
        }
        let mut samples = Vec::with_capacity(runs);
        for _ in 0..runs {
            samples.push(run_once()?);
        }
        records.push(BenchRecord {
            resolution: res,
            grid_side: cfg.rows(),
            median_ms: median(&mut samples),
        });
    }
    let xs: Vec<f64> = records.iter().map(|r| (1.0 / r.resolution).powi(2)).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.median_ms).collect();
    Ok((records, fit_line(&xs, &ys)))
}

/// Ordinary least squares of `y = a*x + c` with the coefficient of
/// determination. A single point (or zero x-variance) fits a flat line.
fn fit_line(xs: &[f64], ys: &[f64]) -> QuadraticFit {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let a = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let c = ym - a * xm;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (a * x + c)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    QuadraticFit { a, c, r2 }
}

/// `resolution,grid_side,median_ms,fit_a,fit_c,r2` rows (fit columns repeat
/// on every row).
pub fn bench_csv(records: &[BenchRecord], fit: &QuadraticFit) -> String {
    let mut out = String::from("resolution,grid_side,median_ms,fit_a,fit_c,r2\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.resolution, r.grid_side, r.median_ms, fit.a, fit.c, fit.r2
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(cx: f64, cy: f64, class: ClassId, conf: f64) -> Obb3D {
        Obb3D { cx, cy, cz: 0.0, w: 2.0, l: 4.0, h: 1.5, yaw: 0.0, class, confidence: conf }
    }

    #[test]
    fn perfect_detections_match_exactly() {
        let gts = vec![boxed(10.0, 0.0, ClassId::Car, 1.0), boxed(20.0, 5.0, ClassId::Car, 1.0)];
        let m = match_detections(&gts, &gts, 0.5, ClassId::Car, IouKind::Bev);
        assert_eq!(m.flags.iter().filter(|f| f.1).count(), 2);
        assert_eq!(m.missed, 0);
    }

    #[test]
    fn no_detections_all_missed() {
        let gts = vec![
            boxed(10.0, 0.0, ClassId::Car, 1.0),
            boxed(20.0, 5.0, ClassId::Car, 1.0),
            boxed(30.0, -5.0, ClassId::Car, 1.0),
        ];
        let m = match_detections(&[], &gts, 0.5, ClassId::Car, IouKind::Bev);
        assert!(m.flags.is_empty());
        assert_eq!(m.missed, 3);
    }

    #[test]
    fn duplicate_detection_is_fp() {
        let gts = vec![boxed(10.0, 0.0, ClassId::Car, 1.0)];
        let dets =
            vec![boxed(10.0, 0.0, ClassId::Car, 0.6), boxed(10.0, 0.1, ClassId::Car, 0.9)];
        let m = match_detections(&dets, &gts, 0.5, ClassId::Car, IouKind::Bev);
        // Higher confidence (index 1) wins the ground truth.
        assert_eq!(m.flags, vec![(0.9, true), (0.6, false)]);
        assert_eq!(m.missed, 0);
    }

    #[test]
    fn matching_is_class_scoped() {
        let gts = vec![boxed(10.0, 0.0, ClassId::Cyclist, 1.0)];
        let dets = vec![boxed(10.0, 0.0, ClassId::Car, 0.9)];
        let m = match_detections(&dets, &gts, 0.5, ClassId::Car, IouKind::Bev);
        assert_eq!(m.flags, vec![(0.9, false)]); // wrong-class gt is invisible
        assert_eq!(m.missed, 0); // ...and not counted as missed for Car
        let m = match_detections(&dets, &gts, 0.5, ClassId::Cyclist, IouKind::Bev);
        assert!(m.flags.is_empty());
        assert_eq!(m.missed, 1);
    }

    #[test]
    fn precision_recall_arithmetic() {
        let (p, r) = precision_recall(&EvalCounts { tp: 94, fp: 6, missed: 19 });
        assert!((p - 0.94).abs() < 1e-12);
        assert!((r - 94.0 / 113.0).abs() < 1e-12);
        let (p, r) = precision_recall(&EvalCounts { tp: 0, fp: 7, missed: 0 });
        assert_eq!((p, r), (0.0, 0.0));
        let (_, r) = precision_recall(&EvalCounts { tp: 5, fp: 0, missed: 5 });
        assert_eq!(r, 0.5);
        let (p, r) = precision_recall(&EvalCounts::default());
        assert_eq!((p, r), (0.0, 0.0));
    }

    #[test]
    fn ap_bounds() {
        // Perfect detector: precision 1 at every rank, full recall.
        let flags = vec![(0.9, true), (0.8, true)];
        let curve = pr_curve(&flags, 2);
        assert_eq!(average_precision(&curve, Interp::Eleven), 1.0);
        assert_eq!(average_precision(&curve, Interp::Forty), 1.0);
        // No true positives at all.
        let flags = vec![(0.9, false), (0.8, false)];
        let curve = pr_curve(&flags, 2);
        assert_eq!(average_precision(&curve, Interp::Eleven), 0.0);
        assert_eq!(average_precision(&[], Interp::Eleven), 0.0);
    }

    #[test]
    fn ap_three_point_hand_value() {
        // Ranks: TP (p=1, r=.5), FP (p=.5, r=.5), TP (p=2/3, r=1).
        let flags = vec![(0.9, true), (0.8, false), (0.7, true)];
        let curve = pr_curve(&flags, 2);
        // Recall levels 0..0.5 see max precision 1; levels 0.6..1.0 see 2/3.
        let expected = (6.0 * 1.0 + 5.0 * (2.0 / 3.0)) / 11.0;
        assert!((average_precision(&curve, Interp::Eleven) - expected).abs() < 1e-12);
    }

    #[test]
    fn threshold_sweep_monotone_for_jittered_boxes() {
        let gts = vec![DetectionSet {
            frame: "0".into(),
            boxes: vec![
                boxed(10.0, 0.0, ClassId::Car, 1.0),
                boxed(20.0, 4.0, ClassId::Car, 1.0),
                boxed(30.0, -6.0, ClassId::Car, 1.0),
            ],
        }];
        // Jittered copies: overlaps high but below 1, so AP must fall as the
        // threshold rises.
        let dets = vec![DetectionSet {
            frame: "0".into(),
            boxes: vec![
                boxed(10.4, 0.2, ClassId::Car, 0.9),
                boxed(20.6, 4.1, ClassId::Car, 0.8),
                boxed(30.9, -6.4, ClassId::Car, 0.7),
            ],
        }];
        let thresholds: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let curves =
            map_over_thresholds(&dets, &gts, &thresholds, Interp::Eleven, IouKind::Bev).unwrap();
        let car = &curves[ClassId::Car.index()];
        for pair in car.points.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-12, "AP rose with threshold: {pair:?}");
        }
        assert!(car.points[0].1 > 0.9); // generous threshold: everything matches
        assert_eq!(car.points[8].1, 0.0); // 0.9 IoU: nothing survives jitter
        // Classes with no boxes at all have zero AP everywhere.
        assert!(curves[ClassId::Pedestrian.index()].points.iter().all(|&(_, ap)| ap == 0.0));
    }

    #[test]
    fn frames_are_joined_by_id() {
        let gts = vec![
            DetectionSet { frame: "a".into(), boxes: vec![boxed(10.0, 0.0, ClassId::Car, 1.0)] },
            DetectionSet { frame: "b".into(), boxes: vec![boxed(20.0, 0.0, ClassId::Car, 1.0)] },
        ];
        // One frame detected perfectly, one frame entirely absent, one
        // spurious frame.
        let dets = vec![
            DetectionSet { frame: "b".into(), boxes: vec![boxed(20.0, 0.0, ClassId::Car, 0.9)] },
            DetectionSet { frame: "c".into(), boxes: vec![boxed(5.0, 0.0, ClassId::Car, 0.8)] },
        ];
        let (flags, n_gt) = match_frames(&dets, &gts, 0.5, ClassId::Car, IouKind::Bev);
        assert_eq!(n_gt, 2);
        let counts = EvalCounts::from_flags(&flags, n_gt - flags.iter().filter(|f| f.1).count());
        assert_eq!(counts, EvalCounts { tp: 1, fp: 1, missed: 1 });
    }

    #[test]
    fn detections_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.txt");
        let sets = vec![
            DetectionSet {
                frame: "000123".into(),
                boxes: vec![boxed(10.5, -3.25, ClassId::Car, 0.875)],
            },
            DetectionSet {
                frame: "000124".into(),
                boxes: vec![
                    boxed(7.0, 1.0, ClassId::Pedestrian, 0.5),
                    boxed(30.0, 8.0, ClassId::Cyclist, 0.25),
                ],
            },
        ];
        write_detections(&sets, &path).unwrap();
        let back = read_detections(&path).unwrap();
        assert_eq!(back, sets);
        // Malformed lines are errors, not silent drops.
        fs::write(&path, "0 Car 0.5 1 2 3 4 5 6\n").unwrap(); // 9 fields
        assert!(read_detections(&path).is_err());
        fs::write(&path, "0 Car 1.5 1 2 3 4 5 6 0\n").unwrap(); // conf > 1
        assert!(read_detections(&path).is_err());
    }

    #[test]
    fn bench_grid_sides_and_quadratic_cells() {
        let base = GridConfig::default();
        for (res, side) in [(0.2, 304), (0.15, 405), (0.1, 608)] {
            let cfg = GridConfig { resolution: res, ..base };
            assert_eq!(cfg.rows(), side);
        }
        // Halving the resolution quadruples the cell count.
        let a = GridConfig { resolution: 0.2, ..base };
        let b = GridConfig { resolution: 0.1, ..base };
        assert_eq!(4 * a.rows() * a.cols(), b.rows() * b.cols());
    }

    #[test]
    fn fit_recovers_exact_quadratic() {
        // y = 3x + 2 with x = (1/r)^2 sampled like the sweep.
        let xs: Vec<f64> = [0.25f64, 0.2, 0.15, 0.1].iter().map(|r| (1.0 / r).powi(2)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 2.0).collect();
        let fit = fit_line(&xs, &ys);
        assert!((fit.a - 3.0).abs() < 1e-9);
        assert!((fit.c - 2.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
