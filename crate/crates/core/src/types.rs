//! Core domain types: point clouds and oriented 3D boxes.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Object categories the detector knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassId {
    Car,
    Pedestrian,
    Cyclist,
}

impl ClassId {
    pub const ALL: [ClassId; 3] = [ClassId::Car, ClassId::Pedestrian, ClassId::Cyclist];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            ClassId::Car => 0,
            ClassId::Pedestrian => 1,
            ClassId::Cyclist => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<ClassId> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassId::Car => "Car",
            ClassId::Pedestrian => "Pedestrian",
            ClassId::Cyclist => "Cyclist",
        }
    }

    /// Parses a KITTI label type string. Unknown types (Van, DontCare, ...)
    /// return `None`; they are valid labels, just not categories we detect.
    pub fn parse(s: &str) -> Option<ClassId> {
        match s {
            "Car" => Some(ClassId::Car),
            "Pedestrian" => Some(ClassId::Pedestrian),
            "Cyclist" => Some(ClassId::Cyclist),
            _ => None,
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<ClassId> {
        ClassId::parse(s).ok_or_else(|| Error::Format(format!("unknown class `{s}`")))
    }
}

/// One LiDAR return. Stored as `f32` so a scan loads and re-serializes
/// byte-identically; all math upstream is done in `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Reflectance in `[0, 1]`.
    pub r: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Wraps an angle to `[-pi, pi]`. Both endpoints are representable; the
/// function is idempotent on its own output.
pub fn wrap_angle(phi: f64) -> f64 {
    let mut a = phi % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// An oriented 3D box in the velodyne frame. `(cx, cy, cz)` is the volumetric
/// center; `l` extends along the heading given by `yaw`, `w` across it, `h`
/// vertically.
#[derive(Debug, Clone, PartialEq)]
pub struct Obb3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
    /// Heading about +z, radians in `[-pi, pi]`.
    pub yaw: f64,
    pub class: ClassId,
    /// Detection confidence in `[0, 1]`; ground truth uses 1.
    pub confidence: f64,
}

impl Obb3D {
    /// Footprint corners in the ground plane, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.l / 2.0;
        let hw = self.w / 2.0;
        // Counter-clockwise in the x-forward / y-left plane.
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| [self.cx + x * c - y * s, self.cy + x * s + y * c])
    }

    pub fn bev_area(&self) -> f64 {
        self.w * self.l
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    /// Vertical extent as `(bottom, top)`.
    pub fn z_interval(&self) -> (f64, f64) {
        (self.cz - self.h / 2.0, self.cz + self.h / 2.0)
    }
}
