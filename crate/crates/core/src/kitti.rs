//! KITTI dataset I/O: velodyne scans, calibration files, and object labels.
//!
//! Labels live in the rectified camera frame (x right, y down, z forward,
//! origin at the camera); everything downstream of this module works in the
//! velodyne frame (x forward, y left, z up). The conversion happens here,
//! once, at parse time.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};

use crate::error::{Error, Result};
use crate::types::{wrap_angle, ClassId, Obb3D, Point, PointCloud};

/// Bytes per velodyne record: four little-endian `f32` (x, y, z, reflectance).
const RECORD_BYTES: usize = 16;

/// Reads a `.bin` velodyne scan. Returns the cloud and the number of records
/// skipped because they contained non-finite values. Reflectance is clamped
/// into `[0, 1]`. Errors if the file length is not a multiple of 16 bytes.
pub fn read_velodyne_scan(path: &Path) -> Result<(PointCloud, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "{}: scan length {} is not a multiple of {RECORD_BYTES} bytes",
            path.display(),
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    let mut skipped = 0usize;
    for rec in bytes.chunks_exact(RECORD_BYTES) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            skipped += 1;
            continue;
        }
        points.push(Point { x, y, z, r: r.clamp(0.0, 1.0) });
    }
    Ok((PointCloud { points }, skipped))
}

/// Writes a cloud in the same binary layout `read_velodyne_scan` consumes.
/// A clean scan survives a write/read cycle byte-identically.
pub fn write_velodyne_scan(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.r] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// KITTI's default image dimensions, used when the source of a calibration
/// file cannot tell us better (the calib files themselves carry no size).
pub const DEFAULT_IMAGE_SIZE: (u32, u32) = (1242, 375);

/// Camera calibration: left color camera projection, rectification rotation,
/// and the velodyne-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub p2: Matrix3x4<f64>,
    pub r0_rect: Matrix3<f64>,
    pub tr_velo_to_cam: Matrix3x4<f64>,
    /// `(width, height)` of the camera image, for field-of-view tests.
    pub image_size: (u32, u32),
}

fn parse_floats(line: &str, expected: usize, key: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("{key}: {e}")))?;
    if vals.len() != expected {
        return Err(Error::Format(format!(
            "{key}: expected {expected} values, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Parses a KITTI object calibration file. Requires the `P2`, `R0_rect` and
/// `Tr_velo_to_cam` entries; other keys are ignored. `R0_rect` must be
/// orthonormal to within 1e-3. The image size defaults to the usual KITTI
/// dimensions; override it with [`Calibration::with_image_size`].
pub fn parse_calibration(path: &Path) -> Result<Calibration> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else { continue };
        match key.trim() {
            "P2" => p2 = Some(Matrix3x4::from_row_slice(&parse_floats(rest, 12, "P2")?)),
            "R0_rect" => r0 = Some(Matrix3::from_row_slice(&parse_floats(rest, 9, "R0_rect")?)),
            "Tr_velo_to_cam" => {
                tr = Some(Matrix3x4::from_row_slice(&parse_floats(rest, 12, "Tr_velo_to_cam")?))
            }
            _ => {}
        }
    }
    let missing = |k: &str| Error::Format(format!("{}: missing {k}", path.display()));
    let calib = Calibration {
        p2: p2.ok_or_else(|| missing("P2"))?,
        r0_rect: r0.ok_or_else(|| missing("R0_rect"))?,
        tr_velo_to_cam: tr.ok_or_else(|| missing("Tr_velo_to_cam"))?,
        image_size: DEFAULT_IMAGE_SIZE,
    };
    let dev = (calib.r0_rect.transpose() * calib.r0_rect - Matrix3::identity()).abs().max();
    if dev > 1e-3 {
        return Err(Error::Format(format!(
            "{}: R0_rect is not orthonormal (deviation {dev:.2e})",
            path.display()
        )));
    }
    Ok(calib)
}

impl Calibration {
    pub fn with_image_size(mut self, width: u32, height: u32) -> Self {
        self.image_size = (width, height);
        self
    }

    fn rotation(&self) -> Matrix3<f64> {
        self.tr_velo_to_cam.fixed_view::<3, 3>(0, 0).into_owned()
    }

    fn translation(&self) -> Vector3<f64> {
        self.tr_velo_to_cam.column(3).into_owned()
    }

    /// Velodyne point to the rectified camera frame.
    pub fn velo_to_rect(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.r0_rect * (self.rotation() * p + self.translation())
    }

    /// Rectified camera point back to the velodyne frame. Errors if the
    /// combined rotation is singular (a broken calibration file).
    pub fn rect_to_velo(&self, p: Vector3<f64>) -> Result<Vector3<f64>> {
        let a = self.r0_rect * self.rotation();
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::Format("velodyne-to-camera rotation is singular".into()))?;
        Ok(inv * (p - self.r0_rect * self.translation()))
    }

    /// Projects a velodyne point into the image. Returns `(u, v, depth)`;
    /// `depth` is the rectified z coordinate, negative behind the camera.
    pub fn project(&self, p: Vector3<f64>) -> Option<(f64, f64, f64)> {
        let rect = self.velo_to_rect(p);
        let uvw = self.p2 * rect.push(1.0);
        if uvw.z.abs() < 1e-12 {
            return None;
        }
        Some((uvw.x / uvw.z, uvw.y / uvw.z, rect.z))
    }

    /// True when the point projects inside the image with positive depth.
    pub fn in_image_fov(&self, p: Vector3<f64>) -> bool {
        match self.project(p) {
            Some((u, v, depth)) => {
                depth > 0.0
                    && u >= 0.0
                    && u < f64::from(self.image_size.0)
                    && v >= 0.0
                    && v < f64::from(self.image_size.1)
            }
            None => false,
        }
    }
}

/// Keeps only the points visible to the camera. Idempotent: filtering an
/// already-filtered cloud changes nothing.
pub fn filter_to_image_fov(cloud: &PointCloud, calib: &Calibration) -> PointCloud {
    let points = cloud
        .points
        .iter()
        .filter(|p| {
            calib.in_image_fov(Vector3::new(f64::from(p.x), f64::from(p.y), f64::from(p.z)))
        })
        .copied()
        .collect();
    PointCloud { points }
}

/// One parsed KITTI object label, already in the velodyne frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabel {
    pub obb: Obb3D,
    pub truncation: f64,
    pub occlusion: i32,
}

/// Result of parsing a label file: the labels we detect, plus how many lines
/// were dropped as malformed.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    pub labels: Vec<KittiLabel>,
    /// Lines that could not be parsed (wrong field count, bad numbers).
    pub skipped_malformed: usize,
    /// Well-formed lines whose type is not a detected class (DontCare, Van, ...).
    pub skipped_other_class: usize,
}

impl LabelSet {
    pub fn boxes(&self) -> Vec<Obb3D> {
        self.labels.iter().map(|l| l.obb.clone()).collect()
    }
}

/// Parses a KITTI label file into velodyne-frame boxes.
///
/// KITTI stores `(h, w, l)` with the location at the *bottom face* center in
/// the rectified camera frame, and `rotation_y` about the camera's down axis.
/// Here the location becomes the volumetric center and the heading becomes
/// `yaw = -rotation_y - pi/2` about +z, wrapped to `[-pi, pi]`.
///
/// Malformed lines are skipped and counted, not fatal: real files mix in
/// entries we cannot use, and one bad line should not sink a frame.
pub fn parse_kitti_labels(path: &Path, calib: &Calibration) -> Result<LabelSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut set = LabelSet::default();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_label_line(line, calib) {
            Ok(Some(label)) => set.labels.push(label),
            Ok(None) => set.skipped_other_class += 1,
            Err(_) => set.skipped_malformed += 1,
        }
    }
    Ok(set)
}

fn parse_label_line(line: &str, calib: &Calibration) -> Result<Option<KittiLabel>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    // type trunc occl alpha | bbox2d x4 | h w l | x y z | rotation_y [score]
    if fields.len() < 15 {
        return Err(Error::Format(format!("label line has {} fields", fields.len())));
    }
    let class = ClassId::parse(fields[0]);
    let num = |i: usize| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("label field {i}: {e}")))
    };
    let truncation = num(1)?;
    let occlusion = num(2)? as i32;
    let (h, w, l) = (num(8)?, num(9)?, num(10)?);
    let loc_cam = Vector3::new(num(11)?, num(12)?, num(13)?);
    let rotation_y = num(14)?;
    let Some(class) = class else { return Ok(None) };

    let bottom = calib.rect_to_velo(loc_cam)?;
    let obb = Obb3D {
        cx: bottom.x,
        cy: bottom.y,
        cz: bottom.z + h / 2.0,
        w,
        l,
        h,
        yaw: wrap_angle(-rotation_y - std::f64::consts::FRAC_PI_2),
        class,
        confidence: 1.0,
    };
    Ok(Some(KittiLabel { obb, truncation, occlusion }))
}

/// Inverse of the label conversion: velodyne-frame box back to the KITTI
/// camera-frame tuple `(location, rotation_y)` with the location at the
/// bottom-face center. Useful for round-trips and for writing predictions in
/// KITTI's own format.
pub fn box_to_camera_frame(obb: &Obb3D, calib: &Calibration) -> (Vector3<f64>, f64) {
    let bottom = Vector3::new(obb.cx, obb.cy, obb.cz - obb.h / 2.0);
    let loc = calib.velo_to_rect(bottom);
    let rotation_y = wrap_angle(-obb.yaw - std::f64::consts::FRAC_PI_2);
    (loc, rotation_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// A calibration whose extrinsics are the pure axis permutation between
    /// the velodyne frame (x fwd, y left, z up) and the camera frame
    /// (x right, y down, z fwd): cam_x = -velo_y, cam_y = -velo_z,
    /// cam_z = velo_x. R0 is the identity; P2 projects with unit focal length.
    fn axis_permutation_calib() -> Calibration {
        #[rustfmt::skip]
        let tr = Matrix3x4::from_row_slice(&[
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
        ]);
        #[rustfmt::skip]
        let p2 = Matrix3x4::from_row_slice(&[
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        Calibration {
            p2,
            r0_rect: Matrix3::identity(),
            tr_velo_to_cam: tr,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), contents).unwrap();
        f
    }

    #[test]
    fn scan_round_trip_is_byte_identical() {
        let cloud = PointCloud {
            points: vec![
                Point { x: 1.5, y: -2.25, z: 0.125, r: 0.5 },
                Point { x: -0.1, y: 30.0, z: -1.75, r: 1.0 },
                Point { x: 0.0, y: 0.0, z: 0.0, r: 0.0 },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.bin");
        write_velodyne_scan(&cloud, &path).unwrap();
        let first = fs::read(&path).unwrap();
        let (loaded, skipped) = read_velodyne_scan(&path).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(loaded, cloud);
        write_velodyne_scan(&loaded, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn scan_skips_non_finite_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.bin");
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in [f32::NAN, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in [4.0f32, 5.0, 6.0, 2.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let (cloud, skipped) = read_velodyne_scan(&path).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(cloud.len(), 2);
        // Out-of-range reflectance comes back clamped.
        assert_eq!(cloud.points[1].r, 1.0);
    }

    #[test]
    fn scan_rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.bin");
        fs::write(&path, [0u8; 15]).unwrap();
        assert!(matches!(read_velodyne_scan(&path), Err(Error::Format(_))));
    }

    #[test]
    fn calibration_parses_real_style_file() {
        // Values in the shape of a genuine KITTI object calib entry.
        let text = "\
P0: 7.215377e+02 0.0 6.095593e+02 0.0 0.0 7.215377e+02 1.728540e+02 0.0 0.0 0.0 1.0 0.0
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01
Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01
";
        let f = write_temp(text);
        let calib = parse_calibration(f.path()).unwrap();
        assert!((calib.p2[(0, 0)] - 721.5377).abs() < 1e-3);
        assert_eq!(calib.image_size, DEFAULT_IMAGE_SIZE);
        // A point straight ahead of the sensor should land mid-image.
        let (u, v, depth) = calib.project(Vector3::new(20.0, 0.0, 0.0)).unwrap();
        assert!(depth > 19.0 && depth < 21.0);
        assert!(u > 0.0 && u < 1242.0);
        assert!(v > 0.0 && v < 375.0);
    }

    #[test]
    fn calibration_missing_key_errors() {
        let f = write_temp("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n");
        assert!(matches!(parse_calibration(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn calibration_rejects_non_orthonormal_r0() {
        let text = "\
P2: 1 0 0 0 0 1 0 0 0 0 1 0
R0_rect: 1 0 0 0 1 0 0 0 2
Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0
";
        let f = write_temp(text);
        assert!(matches!(parse_calibration(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn rect_to_velo_inverts_velo_to_rect() {
        let text = "\
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01
Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01
";
        let f = write_temp(text);
        let calib = parse_calibration(f.path()).unwrap();
        let p = Vector3::new(12.3, -4.5, 0.67);
        let back = calib.rect_to_velo(calib.velo_to_rect(p)).unwrap();
        assert!((back - p).norm() < 1e-9);
    }

    #[test]
    fn label_parse_camera_ahead_maps_to_lidar_forward() {
        let calib = axis_permutation_calib();
        // Camera location (0, 0, 10): ten meters straight ahead, bottom face
        // on the ground plane of the camera. rotation_y = -pi/2 means the
        // object faces along camera +z, i.e. away from the sensor.
        let text = "Car 0.0 0 0.0 0 0 50 50 1.5 1.6 3.9 0.0 0.0 10.0 -1.5707963267948966\n";
        let f = write_temp(text);
        let set = parse_kitti_labels(f.path(), &calib).unwrap();
        assert_eq!(set.labels.len(), 1);
        let obb = &set.labels[0].obb;
        assert!((obb.cx - 10.0).abs() < 1e-12);
        assert!((obb.cy - 0.0).abs() < 1e-12);
        // Bottom-face center becomes volumetric center: z = 0 + h/2.
        assert!((obb.cz - 0.75).abs() < 1e-12);
        assert_eq!((obb.w, obb.l, obb.h), (1.6, 3.9, 1.5));
        // yaw = -(-pi/2) - pi/2 = 0: heading along +x, forward.
        assert!(obb.yaw.abs() < 1e-12);
        assert_eq!(obb.class, ClassId::Car);
    }

    #[test]
    fn label_yaw_convention_quarter_turns() {
        let calib = axis_permutation_calib();
        for (ry, expected_yaw) in [
            (0.0, -FRAC_PI_2),
            (-FRAC_PI_2, 0.0),
            (FRAC_PI_2, -PI),
            (PI, FRAC_PI_2),
        ] {
            let line =
                format!("Pedestrian 0.0 0 0.0 0 0 10 10 1.7 0.6 0.8 1.0 0.0 5.0 {ry}\n");
            let f = write_temp(&line);
            let set = parse_kitti_labels(f.path(), &calib).unwrap();
            let got = set.labels[0].obb.yaw;
            let diff = wrap_angle(got - expected_yaw).abs();
            assert!(diff < 1e-12, "ry={ry}: yaw={got}, expected {expected_yaw}");
        }
    }

    #[test]
    fn label_skips_dontcare_and_malformed() {
        let calib = axis_permutation_calib();
        let text = "\
Car 0.0 0 0.0 0 0 50 50 1.5 1.6 3.9 0.0 0.0 10.0 0.0
DontCare -1 -1 -10 0 0 10 10 -1 -1 -1 -1000 -1000 -1000 -10
Van 0.0 0 0.0 0 0 50 50 2.0 1.9 5.0 1.0 0.0 12.0 0.0
Car 0.0 0 0.0 0 0 50 50
Car 0.0 0 0.0 0 0 50 50 1.5 oops 3.9 0.0 0.0 10.0 0.0
";
        let f = write_temp(text);
        let set = parse_kitti_labels(f.path(), &calib).unwrap();
        assert_eq!(set.labels.len(), 1);
        assert_eq!(set.skipped_other_class, 2);
        assert_eq!(set.skipped_malformed, 2);
    }

    #[test]
    fn label_round_trips_through_camera_frame() {
        let calib = axis_permutation_calib();
        let text = "Cyclist 0.1 1 0.2 0 0 30 40 1.7 0.6 1.8 -3.0 1.2 22.0 0.7\n";
        let f = write_temp(text);
        let set = parse_kitti_labels(f.path(), &calib).unwrap();
        let obb = &set.labels[0].obb;
        let (loc, ry) = box_to_camera_frame(obb, &calib);
        assert!((loc - Vector3::new(-3.0, 1.2, 22.0)).norm() < 1e-9);
        assert!(wrap_angle(ry - 0.7).abs() < 1e-12);
    }

    #[test]
    fn fov_filter_is_idempotent() {
        let calib = axis_permutation_calib().with_image_size(100, 100);
        let mut points = Vec::new();
        for i in 0..50 {
            let a = i as f32 * 0.13;
            points.push(Point { x: a.cos() * 20.0, y: a.sin() * 20.0, z: -1.0, r: 0.5 });
        }
        let cloud = PointCloud { points };
        let once = filter_to_image_fov(&cloud, &calib);
        let twice = filter_to_image_fov(&once, &calib);
        assert!(once.len() < cloud.len()); // something behind the camera got cut
        assert_eq!(once, twice);
    }
}
