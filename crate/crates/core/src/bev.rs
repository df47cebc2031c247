//! Bird's-eye-view rasterization: projecting a point cloud onto a 2-channel
//! top-down grid (max height and log point density).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::PointCloud;

/// Geometry of the BEV grid. The grid covers `x in [0, x_range)` meters ahead
/// of the sensor and `y in [-y_half_range, y_half_range)` to the sides, at
/// `resolution` meters per cell. Heights are clipped to `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub x_range: f64,
    pub y_half_range: f64,
    pub resolution: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for GridConfig {
    /// 60.8 m forward, +/-30.4 m lateral, 0.1 m cells (608x608), heights
    /// clipped to +/-2 m around the sensor.
    fn default() -> Self {
        GridConfig {
            x_range: 60.8,
            y_half_range: 30.4,
            resolution: 0.1,
            z_min: -2.0,
            z_max: 2.0,
        }
    }
}

impl GridConfig {
    pub fn new(
        x_range: f64,
        y_half_range: f64,
        resolution: f64,
        z_min: f64,
        z_max: f64,
    ) -> Result<Self> {
        let cfg = GridConfig { x_range, y_half_range, resolution, z_min, z_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!("resolution must be positive, got {}", self.resolution)));
        }
        if !(self.x_range > 0.0 && self.y_half_range > 0.0) {
            return Err(Error::Config(format!(
                "ranges must be positive, got x_range={} y_half_range={}",
                self.x_range, self.y_half_range
            )));
        }
        if !(self.z_max > self.z_min) {
            return Err(Error::Config(format!(
                "need z_max > z_min, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    /// Number of grid rows (forward extent). Rounded to the nearest integer
    /// so the usual metric ranges survive binary floating point (60.8 / 0.1
    /// is not exactly 608 in f64).
    pub fn rows(&self) -> usize {
        (self.x_range / self.resolution).round() as usize
    }

    /// Number of grid columns (lateral extent).
    pub fn cols(&self) -> usize {
        (2.0 * self.y_half_range / self.resolution).round() as usize
    }

    /// Maps a world point to its grid cell, or `None` when it lies outside
    /// the covered area. Row 0 is the far edge (largest x) so the rendered
    /// image reads with forward = up; columns run left to right with
    /// increasing y... i.e. col 0 is y = -y_half_range.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= 0.0 && x < self.x_range) || !(y >= -self.y_half_range && y < self.y_half_range) {
            return None;
        }
        let row = ((self.x_range - x) / self.resolution).floor() as usize;
        let col = ((y + self.y_half_range) / self.resolution).floor() as usize;
        // x = 0 lands exactly on the near boundary and would index one past
        // the last row; membership above already accepted it, so clamp.
        Some((row.min(self.rows() - 1), col.min(self.cols() - 1)))
    }

    /// World coordinates of a cell's center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.x_range - (row as f64 + 0.5) * self.resolution;
        let y = (col as f64 + 0.5) * self.resolution - self.y_half_range;
        (x, y)
    }
}

/// Density encoding for a cell with `n` points: `min(1, log(n+1) / log 64)`.
/// Computed through `log2` so that power-of-two counts come out exact
/// (e.g. n = 7 gives exactly 0.5).
pub fn density_value(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ((n as f64 + 1.0).log2() / 6.0).min(1.0)
}

/// Maps a height to the `[0, 255]` pixel scale after clipping to the
/// config's vertical window.
pub fn height_to_pixel(z: f64, cfg: &GridConfig) -> f64 {
    let zc = z.clamp(cfg.z_min, cfg.z_max);
    255.0 * (zc - cfg.z_min) / (cfg.z_max - cfg.z_min)
}

/// A rasterized BEV grid: two channels in row-major order, `rows * cols`
/// each. Heights are real-valued on the `[0, 255]` pixel scale (quantization
/// happens only at PNG export); densities are in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GridMap {
    pub config: GridConfig,
    pub height: Vec<f32>,
    pub density: Vec<f32>,
}

impl GridMap {
    pub fn rows(&self) -> usize {
        self.config.rows()
    }

    pub fn cols(&self) -> usize {
        self.config.cols()
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.cols() + col
    }

    pub fn height_at(&self, row: usize, col: usize) -> f32 {
        self.height[self.idx(row, col)]
    }

    pub fn density_at(&self, row: usize, col: usize) -> f32 {
        self.density[self.idx(row, col)]
    }

    /// Serializes the grid as little-endian `f32`, row-major, channel-last:
    /// for each cell, height then density.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.height.len() * 8);
        for i in 0..self.height.len() {
            out.extend_from_slice(&self.height[i].to_le_bytes());
            out.extend_from_slice(&self.density[i].to_le_bytes());
        }
        out
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_raw_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Writes one 8-bit grayscale PNG per channel: `<stem>_height.png` and
    /// `<stem>_density.png` in `dir`.
    pub fn write_pngs(&self, dir: &Path, stem: &str) -> Result<()> {
        let (rows, cols) = (self.rows() as u32, self.cols() as u32);
        let quantize = |v: f32| -> u8 { (f64::from(v)).round().clamp(0.0, 255.0) as u8 };
        let height_px: Vec<u8> = self.height.iter().map(|&v| quantize(v)).collect();
        let density_px: Vec<u8> = self.density.iter().map(|&v| quantize(v * 255.0)).collect();
        for (name, px) in [("height", height_px), ("density", density_px)] {
            let path = dir.join(format!("{stem}_{name}.png"));
            let img = image::GrayImage::from_raw(cols, rows, px)
                .expect("buffer sized rows*cols");
            img.save(&path)
                .map_err(|e| Error::Format(format!("{}: png encode failed: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Rasterizes a point cloud onto the BEV grid. Points outside the grid's
/// footprint are ignored; heights are clipped, not dropped. The result is a
/// pure function of the *set* of points: reordering the input changes
/// nothing, since each cell keeps a max and a count.
pub fn rasterize(cloud: &PointCloud, cfg: &GridConfig) -> Result<GridMap> {
    cfg.validate()?;
    let (rows, cols) = (cfg.rows(), cfg.cols());
    let n = rows * cols;
    let mut max_z = vec![f64::NEG_INFINITY; n];
    let mut count = vec![0usize; n];

    for p in &cloud.points {
        let (x, y, z) = (f64::from(p.x), f64::from(p.y), f64::from(p.z));
        if let Some((row, col)) = cfg.world_to_cell(x, y) {
            let i = row * cols + col;
            count[i] += 1;
            if z > max_z[i] {
                max_z[i] = z;
            }
        }
    }

    let mut height = vec![0.0f32; n];
    let mut density = vec![0.0f32; n];
    for i in 0..n {
        if count[i] > 0 {
            height[i] = height_to_pixel(max_z[i], cfg) as f32;
            density[i] = density_value(count[i]) as f32;
        }
    }
    Ok(GridMap { config: *cfg, height, density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point;

    fn pt(x: f32, y: f32, z: f32) -> Point {
        Point { x, y, z, r: 0.0 }
    }

    #[test]
    fn default_grid_is_608_square() {
        let cfg = GridConfig::default();
        assert_eq!(cfg.rows(), 608);
        assert_eq!(cfg.cols(), 608);
    }

    #[test]
    fn coarser_resolutions_round_to_expected_sides() {
        for (res, side) in [(0.25, 243), (0.2, 304), (0.15, 405), (0.1, 608)] {
            let cfg = GridConfig { resolution: res, ..GridConfig::default() };
            assert_eq!(cfg.rows(), side, "res {res}");
            assert_eq!(cfg.cols(), side, "res {res}");
        }
    }

    #[test]
    fn world_to_cell_membership_and_edges() {
        let cfg = GridConfig::default();
        // Forward edge: just inside the far boundary lands in row 0. Probe
        // y at a cell midpoint; interior boundaries like y = 0.0 are
        // float-sensitive (30.4 is not exactly representable).
        assert_eq!(cfg.world_to_cell(60.79, 0.05), Some((0, 304)));
        assert_eq!(cfg.world_to_cell(60.8, 0.05), None);
        // Near boundary x = 0 is inside and clamps into the last row.
        assert_eq!(cfg.world_to_cell(0.0, 0.05), Some((607, 304)));
        assert_eq!(cfg.world_to_cell(0.05, 30.35), Some((607, 607)));
        // Lateral edges: -30.4 inclusive, +30.4 exclusive.
        assert_eq!(cfg.world_to_cell(30.45, -30.4), Some((303, 0)));
        assert_eq!(cfg.world_to_cell(30.45, 30.4), None);
        assert_eq!(cfg.world_to_cell(-0.01, 0.0), None);
    }

    #[test]
    fn cell_center_round_trips() {
        let cfg = GridConfig::default();
        for (row, col) in [(0, 0), (607, 607), (303, 41), (17, 600)] {
            let (x, y) = cfg.cell_center(row, col);
            assert_eq!(cfg.world_to_cell(x, y), Some((row, col)));
        }
    }

    #[test]
    fn density_reference_points() {
        assert_eq!(density_value(0), 0.0);
        // log(8)/log(64) = 3/6, exact through log2.
        assert_eq!(density_value(7), 0.5);
        assert_eq!(density_value(63), 1.0);
        assert_eq!(density_value(64), 1.0);
        assert_eq!(density_value(10_000), 1.0);
        // Monotone below saturation.
        for n in 0..63 {
            assert!(density_value(n) < density_value(n + 1));
        }
    }

    #[test]
    fn height_scale_endpoints() {
        let cfg = GridConfig::default();
        assert_eq!(height_to_pixel(-2.0, &cfg), 0.0);
        assert_eq!(height_to_pixel(2.0, &cfg), 255.0);
        assert_eq!(height_to_pixel(0.0, &cfg), 127.5);
        // Clipped, not rejected.
        assert_eq!(height_to_pixel(-7.0, &cfg), 0.0);
        assert_eq!(height_to_pixel(11.0, &cfg), 255.0);
    }

    #[test]
    fn rasterize_counts_and_max_height() {
        let cfg = GridConfig::default();
        // Seven points in one cell, max z = 0.
        let mut points = Vec::new();
        for i in 0..7 {
            points.push(pt(10.05, 0.05, -1.0 + 0.1 * i as f32));
        }
        points[3].z = 0.0;
        let grid = rasterize(&PointCloud { points }, &cfg).unwrap();
        let (row, col) = cfg.world_to_cell(10.05, 0.05).unwrap();
        assert_eq!(grid.density_at(row, col), 0.5);
        assert_eq!(grid.height_at(row, col), 127.5);
        // Everything else stayed empty.
        let occupied = grid.density.iter().filter(|&&d| d > 0.0).count();
        assert_eq!(occupied, 1);
    }

    #[test]
    fn rasterize_ignores_out_of_range_points() {
        let cfg = GridConfig::default();
        let cloud = PointCloud {
            points: vec![pt(-5.0, 0.0, 0.0), pt(100.0, 0.0, 0.0), pt(10.0, 40.0, 0.0)],
        };
        let grid = rasterize(&cloud, &cfg).unwrap();
        assert!(grid.density.iter().all(|&d| d == 0.0));
        assert!(grid.height.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn raw_export_layout() {
        let cfg = GridConfig { x_range: 0.2, y_half_range: 0.1, ..GridConfig::default() };
        assert_eq!((cfg.rows(), cfg.cols()), (2, 2));
        let grid = rasterize(
            &PointCloud { points: vec![pt(0.05, -0.05, 2.0)] }, // row 1, col 0
            &cfg,
        )
        .unwrap();
        let bytes = grid.to_raw_bytes();
        assert_eq!(bytes.len(), 2 * 2 * 2 * 4);
        let cell = |i: usize| {
            let h = f32::from_le_bytes(bytes[8 * i..8 * i + 4].try_into().unwrap());
            let d = f32::from_le_bytes(bytes[8 * i + 4..8 * i + 8].try_into().unwrap());
            (h, d)
        };
        assert_eq!(cell(0), (0.0, 0.0));
        assert_eq!(cell(1), (0.0, 0.0));
        let (h, d) = cell(2); // row-major: row 1, col 0 is the third cell
        assert_eq!(h, 255.0);
        assert_eq!(d, density_value(1) as f32);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(GridConfig::new(60.8, 30.4, 0.0, -2.0, 2.0).is_err());
        assert!(GridConfig::new(60.8, 30.4, -0.1, -2.0, 2.0).is_err());
        assert!(GridConfig::new(0.0, 30.4, 0.1, -2.0, 2.0).is_err());
        assert!(GridConfig::new(60.8, 30.4, 0.1, 2.0, -2.0).is_err());
        assert!(GridConfig::new(60.8, 30.4, 0.1, 2.0, 2.0).is_err());
    }
}
