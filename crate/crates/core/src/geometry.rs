//! Ego poses, multi-frame alignment, and motion-aware channel concatenation.
//!
//! Rotation convention: intrinsic yaw-pitch-roll, i.e. `R = Rz(yaw) * Ry(pitch)
//! * Rx(roll)`. A pose maps its own frame's coordinates into the reference
//! frame: `p_ref = R p + t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// 6-DoF ego pose: translation in meters, rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6DoF {
    pub translation: [f64; 3],
    /// (roll, pitch, yaw)
    pub rotation: [f64; 3],
}

impl Pose6DoF {
    pub fn identity() -> Pose6DoF {
        Pose6DoF {
            translation: [0.0; 3],
            rotation: [0.0; 3],
        }
    }

    pub fn new(translation: [f64; 3], rotation: [f64; 3]) -> Pose6DoF {
        Pose6DoF {
            translation,
            rotation,
        }
    }

    /// 3x3 rotation matrix, row-major.
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [roll, pitch, yaw] = self.rotation;
        let (sa, ca) = roll.sin_cos();
        let (sb, cb) = pitch.sin_cos();
        let (sc, cc) = yaw.sin_cos();
        [
            [cb * cc, cc * sa * sb - ca * sc, sa * sc + ca * cc * sb],
            [cb * sc, ca * cc + sa * sb * sc, ca * sb * sc - cc * sa],
            [-sb, cb * sa, ca * cb],
        ]
    }

    /// Euler extraction from a rotation matrix (gimbal-guarded).
    fn euler_from_matrix(r: &[[f64; 3]; 3]) -> [f64; 3] {
        let s = -r[2][0];
        if s.abs() >= 1.0 - 1e-12 {
            let pitch = if s > 0.0 {
                std::f64::consts::FRAC_PI_2
            } else {
                -std::f64::consts::FRAC_PI_2
            };
            let yaw = (-r[0][1]).atan2(r[1][1]);
            [0.0, pitch, yaw]
        } else {
            let pitch = s.asin();
            let roll = r[2][1].atan2(r[2][2]);
            let yaw = r[1][0].atan2(r[0][0]);
            [roll, pitch, yaw]
        }
    }

    /// Applies the pose as a point map: `R p + t`.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation_matrix();
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    /// Inverse point map: `R^T (p - t)`.
    pub fn inverse_transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation_matrix();
        let d = [
            p[0] - self.translation[0],
            p[1] - self.translation[1],
            p[2] - self.translation[2],
        ];
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }

    pub fn inverse(&self) -> Pose6DoF {
        let r = self.rotation_matrix();
        // R^T and -R^T t
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.translation;
        let nt = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Pose6DoF {
            translation: nt,
            rotation: Pose6DoF::euler_from_matrix(&rt),
        }
    }

    /// `self` followed by `other`: the point map `p -> self(other(p))`.
    pub fn compose(&self, other: &Pose6DoF) -> Pose6DoF {
        let a = self.rotation_matrix();
        let b = other.rotation_matrix();
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Pose6DoF {
            translation: self.transform_point(other.translation),
            rotation: Pose6DoF::euler_from_matrix(&m),
        }
    }
}

/// Relative pose of the `dst` frame expressed in the `src` frame
/// (`src^-1 compose dst`). As a point map it takes dst-frame coordinates to
/// src-frame coordinates; as a frame relation, `dst = src compose result`.
pub fn relative_pose(src: &Pose6DoF, dst: &Pose6DoF) -> Pose6DoF {
    src.inverse().compose(dst)
}

/// Metric voxel grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    /// Voxel edge length in meters.
    pub resolution: f64,
    /// (X, Y, Z) voxel counts.
    pub extents: (usize, usize, usize),
}

impl GridSpec {
    /// Centered grid covering `extents` voxels at the given resolution.
    pub fn centered(extents: (usize, usize, usize), resolution: f64) -> GridSpec {
        let half = |n: usize| n as f64 * resolution / 2.0;
        GridSpec {
            x_range: (-half(extents.0), half(extents.0)),
            y_range: (-half(extents.1), half(extents.1)),
            z_range: (-half(extents.2), half(extents.2)),
            resolution,
            extents,
        }
    }

    /// Desk-scale default: (32, 32, 8) voxels at 0.2 m.
    pub fn toy_default() -> GridSpec {
        GridSpec::centered((32, 32, 8), 0.2)
    }

    /// Full-scale geometry: x,y in [-51.2, 51.2] m, z in [-5, 3] m, 0.2 m
    /// resolution, extents (512, 512, 40).
    pub fn paper_scale() -> GridSpec {
        GridSpec {
            x_range: (-51.2, 51.2),
            y_range: (-51.2, 51.2),
            z_range: (-5.0, 3.0),
            resolution: 0.2,
            extents: (512, 512, 40),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution <= 0.0 {
            return Err(Error::config("grid resolution must be positive"));
        }
        let check = |range: (f64, f64), extent: usize, axis: &str| -> Result<()> {
            let implied = (range.1 - range.0) / self.resolution;
            if (implied - extent as f64).abs() > 1e-6 {
                return Err(Error::config(format!(
                    "grid {axis} range {:?} / resolution {} implies {implied} voxels, extents say {extent}",
                    range, self.resolution
                )));
            }
            Ok(())
        };
        check(self.x_range, self.extents.0, "x")?;
        check(self.y_range, self.extents.1, "y")?;
        check(self.z_range, self.extents.2, "z")
    }

    pub fn voxel_count(&self) -> usize {
        self.extents.0 * self.extents.1 * self.extents.2
    }

    /// Voxel center in metric coordinates.
    pub fn center(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        [
            self.x_range.0 + (i as f64 + 0.5) * self.resolution,
            self.y_range.0 + (j as f64 + 0.5) * self.resolution,
            self.z_range.0 + (l as f64 + 0.5) * self.resolution,
        ]
    }

    /// Voxel containing a metric point, or None when out of range.
    pub fn voxel_of(&self, p: [f64; 3]) -> Option<(usize, usize, usize)> {
        let idx = |v: f64, lo: f64, n: usize| -> Option<usize> {
            let q = (v - lo) / self.resolution;
            if q < 0.0 {
                return None;
            }
            let i = q.floor() as usize;
            if i >= n {
                None
            } else {
                Some(i)
            }
        };
        Some((
            idx(p[0], self.x_range.0, self.extents.0)?,
            idx(p[1], self.y_range.0, self.extents.1)?,
            idx(p[2], self.z_range.0, self.extents.2)?,
        ))
    }

    pub fn flat_index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.extents.1 + j) * self.extents.2 + l
    }
}

/// For each output voxel, the flattened source voxel index sampled under
/// `rel` (nearest neighbor), or `usize::MAX` when the pre-image is out of
/// range. `rel` maps source-frame coordinates to output (current) frame
/// coordinates.
pub fn alignment_index_map(rel: &Pose6DoF, spec: &GridSpec) -> Vec<usize> {
    let (nx, ny, nz) = spec.extents;
    let mut map = Vec::with_capacity(spec.voxel_count());
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                let c = spec.center(i, j, l);
                let src = rel.inverse_transform_point(c);
                match spec.voxel_of(src) {
                    Some((si, sj, sl)) => map.push(spec.flat_index(si, sj, sl)),
                    None => map.push(usize::MAX),
                }
            }
        }
    }
    map
}

/// Resamples one frame of features `(c, x, y, z)` into the current frame
/// (nearest neighbor, zero fill outside).
pub fn align_to_current<T: Element>(
    grid: &Tensor<T>,
    rel: &Pose6DoF,
    spec: &GridSpec,
) -> Result<Tensor<T>> {
    let shape = grid.shape();
    if shape.len() != 4
        || (shape[1], shape[2], shape[3]) != (spec.extents.0, spec.extents.1, spec.extents.2)
    {
        return Err(Error::shape(format!(
            "align_to_current: grid {:?} vs spec extents {:?}",
            shape, spec.extents
        )));
    }
    let channels = shape[0];
    let vox = spec.voxel_count();
    let map = alignment_index_map(rel, spec);
    let src = grid.data();
    let mut out = vec![T::zero(); channels * vox];
    for c in 0..channels {
        let splane = &src[c * vox..(c + 1) * vox];
        let oplane = &mut out[c * vox..(c + 1) * vox];
        for (slot, &m) in oplane.iter_mut().zip(map.iter()) {
            if m != usize::MAX {
                *slot = splane[m];
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// Same resampling for a binary `u8` grid.
pub fn align_grid_u8(grid: &[u8], rel: &Pose6DoF, spec: &GridSpec) -> Vec<u8> {
    let map = alignment_index_map(rel, spec);
    map.iter()
        .map(|&m| if m == usize::MAX { 0 } else { grid[m] })
        .collect()
}

/// Appends 6 pose channels (tx, ty, tz, roll, pitch, yaw), one constant value
/// per channel per frame, to a `(t, c, x, y, z)` feature grid. Poses must be
/// expressed relative to the current frame, one per frame.
pub fn concat_pose_channels<T: Element>(
    features: &Tensor<T>,
    poses: &[Pose6DoF],
) -> Result<Tensor<T>> {
    let shape = features.shape();
    if shape.len() != 5 {
        return Err(Error::shape(format!(
            "concat_pose_channels: want rank 5, got {:?}",
            shape
        )));
    }
    let (t, c) = (shape[0], shape[1]);
    if poses.len() != t {
        return Err(Error::shape(format!(
            "concat_pose_channels: {} poses for {} frames",
            poses.len(),
            t
        )));
    }
    let vox = shape[2] * shape[3] * shape[4];
    let mut out_shape = shape.to_vec();
    out_shape[1] = c + 6;
    let src = features.data();
    let mut out = Vec::with_capacity(t * (c + 6) * vox);
    for (f, pose) in poses.iter().enumerate() {
        out.extend_from_slice(&src[f * c * vox..(f + 1) * c * vox]);
        let vals = [
            pose.translation[0],
            pose.translation[1],
            pose.translation[2],
            pose.rotation[0],
            pose.rotation[1],
            pose.rotation[2],
        ];
        for v in vals {
            let tv = T::from_f64(v);
            out.extend(std::iter::repeat_n(tv, vox));
        }
    }
    Tensor::new(out_shape, out)
}
