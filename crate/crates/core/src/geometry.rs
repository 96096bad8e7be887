//! Where ghosts land in the image and how many projector pixels they carry.
//!
//! Distances are meters at the API boundary. The ghost-resolution formula
//! works in centimeters internally because the ghost area `S_f` is in cm².

use crate::error::{Error, Result};
use crate::numkit::{symmetric_eigen, Matrix};
use serde::{Deserialize, Serialize};

/// `|w|` at or below this is treated as a point on the camera plane.
pub const MIN_HOMOGENEOUS_W: f64 = 1e-12;

/// Camera intrinsics relevant to ghost placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraGeometryRepr")]
pub struct CameraGeometry {
    pub camera_matrix: Matrix,
    pub image_center: [f64; 2],
    pub ghost_ratios: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct CameraGeometryRepr {
    camera_matrix: Matrix,
    image_center: Option<[f64; 2]>,
    ghost_ratios: Vec<f64>,
    width: usize,
    height: usize,
}

impl TryFrom<CameraGeometryRepr> for CameraGeometry {
    type Error = Error;
    fn try_from(r: CameraGeometryRepr) -> Result<Self> {
        let geom = CameraGeometry {
            image_center: r
                .image_center
                .unwrap_or([r.width as f64 / 2.0, r.height as f64 / 2.0]),
            camera_matrix: r.camera_matrix,
            ghost_ratios: r.ghost_ratios,
            width: r.width,
            height: r.height,
        };
        geom.validate()?;
        Ok(geom)
    }
}

/// Camera matrix measured for the reference camera.
pub fn reference_camera_matrix() -> Matrix {
    Matrix::from_rows(&[
        [-0.1406, 0.0537, -0.0200, 0.8452],
        [0.0321, 0.0547, -0.1385, 0.4893],
        [-0.0000, -0.0000, -0.0000, 0.0009],
    ])
    .expect("constant matrix is well formed")
}

impl CameraGeometry {
    /// Geometry with the image center fixed at `(width/2, height/2)`.
    pub fn new(
        camera_matrix: Matrix,
        width: usize,
        height: usize,
        ghost_ratios: Vec<f64>,
    ) -> Result<Self> {
        let geom = Self {
            camera_matrix,
            image_center: [width as f64 / 2.0, height as f64 / 2.0],
            ghost_ratios,
            width,
            height,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.camera_matrix.rows() != 3 || self.camera_matrix.cols() != 4 {
            return Err(Error::DimMismatch(format!(
                "camera matrix must be 3x4, got {}x{}",
                self.camera_matrix.rows(),
                self.camera_matrix.cols()
            )));
        }
        let [cx, cy] = self.image_center;
        if !(0.0..=self.width as f64).contains(&cx) || !(0.0..=self.height as f64).contains(&cy) {
            return Err(Error::Config(format!(
                "image center ({cx}, {cy}) outside {}x{} image",
                self.width, self.height
            )));
        }
        if let Some(&r) = self.ghost_ratios.iter().find(|r| **r == 0.0 || !r.is_finite()) {
            return Err(Error::InvalidRatio(r));
        }
        Ok(())
    }

    /// Pixel of ghost `ghost_index` for a light source imaged at `source`.
    pub fn ghost_of(&self, ghost_index: usize, source: [f64; 2]) -> Result<[f64; 2]> {
        let r = *self.ghost_ratios.get(ghost_index).ok_or_else(|| {
            Error::Config(format!(
                "ghost index {ghost_index} out of range ({} ratios)",
                self.ghost_ratios.len()
            ))
        })?;
        ghost_position(self, r, source)
    }
}

impl Default for CameraGeometry {
    fn default() -> Self {
        Self::new(reference_camera_matrix(), 1280, 960, vec![1.0])
            .expect("default geometry is valid")
    }
}

/// Projector optics that set the ghost pattern resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorOptics {
    pub throw_ratio: f64,
    /// Projector resolution as `[width, height]` pixels.
    pub resolution: [usize; 2],
    /// Physical size of the ghost area, cm².
    pub ghost_area_cm2: f64,
    /// Height over width of the projected screen.
    pub aspect: f64,
}

impl Default for ProjectorOptics {
    fn default() -> Self {
        Self {
            throw_ratio: 20.0,
            resolution: [1024, 768],
            ghost_area_cm2: 0.0156,
            aspect: 768.0 / 1024.0,
        }
    }
}

impl ProjectorOptics {
    pub fn validate(&self) -> Result<()> {
        if !(self.throw_ratio > 0.0 && self.ghost_area_cm2 > 0.0 && self.aspect > 0.0) {
            return Err(Error::Config(
                "throw ratio, ghost area and aspect must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> f64 {
        (self.resolution[0] * self.resolution[1]) as f64
    }
}

/// Applies the 3×4 camera matrix to a world point and dehomogenizes.
pub fn project_point(m: &Matrix, world: [f64; 3]) -> Result<[f64; 2]> {
    if m.rows() != 3 || m.cols() != 4 {
        return Err(Error::DimMismatch(format!(
            "camera matrix must be 3x4, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let h = m.mul_vec(&[world[0], world[1], world[2], 1.0]);
    if h[2].abs() <= MIN_HOMOGENEOUS_W {
        return Err(Error::DegenerateProjection(h[2]));
    }
    Ok([h[0] / h[2], h[1] / h[2]])
}

/// Ghost pixel for a light source at `source`: a reflection through the
/// image center scaled by `1/r`.
pub fn ghost_position(geom: &CameraGeometry, r: f64, source: [f64; 2]) -> Result<[f64; 2]> {
    ghost_about(geom.image_center, r, source)
}

/// [`ghost_position`] about an explicit center.
pub fn ghost_about(center: [f64; 2], r: f64, source: [f64; 2]) -> Result<[f64; 2]> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::InvalidRatio(r));
    }
    let [xo, yo] = center;
    Ok([xo - (source[0] - xo) / r, yo - (source[1] - yo) / r])
}

/// Number of projector pixels that fall inside the ghost at distance `d`
/// meters.
pub fn ghost_resolution(optics: &ProjectorOptics, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    let screen_width_cm = d * 100.0 / optics.throw_ratio;
    Ok(optics.pixel_count() * optics.ghost_area_cm2 / (optics.aspect * screen_width_cm.powi(2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Published ladder: 32, 16, 8, 4, 2 blocks per side for 1..5 m.
    #[default]
    Table,
    /// `floor(sqrt(ghost_resolution(d)))`.
    Formula,
}

/// Pattern side length (in blocks) usable at distance `d`.
pub fn resolution_schedule(d: f64, mode: ScheduleMode, optics: &ProjectorOptics) -> Result<usize> {
    match mode {
        ScheduleMode::Table => {
            let rounded = d.round();
            if (d - rounded).abs() > 1e-9 || !(1.0..=5.0).contains(&rounded) {
                return Err(Error::OutOfTable(d));
            }
            Ok(64 >> rounded as u32)
        }
        ScheduleMode::Formula => {
            let pf = ghost_resolution(optics, d)?;
            Ok((pf.sqrt().floor() as usize).max(1))
        }
    }
}

/// A world point and the pixel it images to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub world: [f64; 3],
    pub pixel: [f64; 2],
}

/// Similarity transform (as a homogeneous matrix) that centers `points` and
/// scales their mean distance from the centroid to `sqrt(dim)`.
fn normalizing_transform<const D: usize>(points: &[[f64; D]]) -> Result<Matrix> {
    let n = points.len() as f64;
    let mut centroid = [0.0; D];
    for p in points {
        for k in 0..D {
            centroid[k] += p[k] / n;
        }
    }
    let mean_dist = points
        .iter()
        .map(|p| (0..D).map(|k| (p[k] - centroid[k]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n;
    if mean_dist <= f64::EPSILON {
        return Err(Error::RankDeficient("all points coincide".into()));
    }
    let s = (D as f64).sqrt() / mean_dist;
    let mut t = Matrix::identity(D + 1);
    for k in 0..D {
        t[(k, k)] = s;
        t[(k, D)] = -s * centroid[k];
    }
    Ok(t)
}

fn apply_h<const D: usize>(t: &Matrix, p: &[f64; D]) -> [f64; D] {
    let mut v = p.to_vec();
    v.push(1.0);
    let h = t.mul_vec(&v);
    let mut out = [0.0; D];
    for k in 0..D {
        out[k] = h[k] / h[D];
    }
    out
}

/// Direct linear transform estimate of a 3×4 camera matrix.
///
/// Coordinates are Hartley-normalized, the homogeneous system is solved as the
/// smallest eigenvector of `AᵀA`, and the result is scaled to unit Frobenius
/// norm with the sign that puts the training points at positive depth.
pub fn fit_camera_matrix(correspondences: &[Correspondence]) -> Result<Matrix> {
    if correspondences.len() < 6 {
        return Err(Error::RankDeficient(format!(
            "DLT needs at least 6 correspondences, got {}",
            correspondences.len()
        )));
    }
    let worlds: Vec<[f64; 3]> = correspondences.iter().map(|c| c.world).collect();
    let pixels: Vec<[f64; 2]> = correspondences.iter().map(|c| c.pixel).collect();
    let tw = normalizing_transform(&worlds)?;
    let tp = normalizing_transform(&pixels)?;

    let mut ata = Matrix::zeros(12, 12);
    for (w, p) in worlds.iter().zip(&pixels) {
        let [x, y, z] = apply_h(&tw, w);
        let [u, v] = apply_h(&tp, p);
        let rows = [
            [x, y, z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u * z, -u],
            [0.0, 0.0, 0.0, 0.0, x, y, z, 1.0, -v * x, -v * y, -v * z, -v],
        ];
        for r in &rows {
            for i in 0..12 {
                for j in 0..12 {
                    ata[(i, j)] += r[i] * r[j];
                }
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&ata)?;
    let largest = values[11].max(f64::MIN_POSITIVE);
    if values[1] <= 1e-10 * largest {
        return Err(Error::RankDeficient(format!(
            "null space has dimension > 1 (second eigenvalue {:e} of {:e})",
            values[1], largest
        )));
    }
    let normalized = Matrix::new(3, 4, (0..12).map(|i| vectors[(i, 0)]).collect())?;

    // Undo the normalization: M = Tp⁻¹ · M̃ · Tw.
    let tp_inv = {
        let s = tp[(0, 0)];
        Matrix::from_rows(&[
            [1.0 / s, 0.0, -tp[(0, 2)] / s],
            [0.0, 1.0 / s, -tp[(1, 2)] / s],
            [0.0, 0.0, 1.0],
        ])?
    };
    let m = tp_inv.matmul(&normalized)?.matmul(&tw)?;
    let norm = m.frobenius_norm();
    let mut m = m.scale(1.0 / norm);
    let depth: f64 = worlds
        .iter()
        .map(|w| m.mul_vec(&[w[0], w[1], w[2], 1.0])[2])
        .sum();
    if depth < 0.0 {
        m = m.scale(-1.0);
    }
    Ok(m)
}

/// Least-squares ghost ratio from observed source/ghost pixel pairs.
///
/// Solved in `s = 1/r`, where the model `G − O = −s (A − O)` is linear.
pub fn fit_ghost_ratio(pairs: &[([f64; 2], [f64; 2])], center: [f64; 2]) -> Result<f64> {
    let [xo, yo] = center;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, g) in pairs {
        let (ax, ay) = (a[0] - xo, a[1] - yo);
        let (gx, gy) = (g[0] - xo, g[1] - yo);
        num -= ax * gx + ay * gy;
        den += ax * ax + ay * ay;
    }
    if den == 0.0 || num == 0.0 {
        return Err(Error::DegeneratePairs);
    }
    Ok(den / num)
}
