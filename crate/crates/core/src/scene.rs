//! Deterministic synthetic 4D worlds: moving boxes over static slabs, seen
//! from a moving ego frame.
//!
//! The world frame is pinned to the ego pose at the present frame. Moving
//! boxes translate with constant velocity (plus optional seeded jitter);
//! observation frames are rendered in their own ego frame, labels in the
//! present frame's coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{align_to_current, concat_pose_channels, GridSpec, Pose6DoF};
use crate::tensor::{Element, Tensor};

/// Dense binary occupancy grid (one byte per voxel, 0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    pub extents: (usize, usize, usize),
    pub data: Vec<u8>,
}

impl BitGrid {
    pub fn zeros(extents: (usize, usize, usize)) -> BitGrid {
        BitGrid {
            extents,
            data: vec![0; extents.0 * extents.1 * extents.2],
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_superset_of(&self, other: &BitGrid) -> bool {
        self.extents == other.extents
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(&a, &b)| b == 0 || a != 0)
    }

    pub fn union(&self, other: &BitGrid) -> BitGrid {
        debug_assert_eq!(self.extents, other.extents);
        BitGrid {
            extents: self.extents,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| (a != 0 || b != 0) as u8)
                .collect(),
        }
    }
}

/// Axis-aligned voxel-index box, half-open ranges, already clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

/// Fills every voxel inside any box; with the generator's precondition
/// (each fine voxel lies inside a box) the output is a superset of `fine`.
pub fn inflate_labels(extents: (usize, usize, usize), boxes: &[VoxelBox]) -> BitGrid {
    let mut out = BitGrid::zeros(extents);
    for b in boxes {
        for i in b.lo[0]..b.hi[0].min(extents.0) {
            for j in b.lo[1]..b.hi[1].min(extents.1) {
                for l in b.lo[2]..b.hi[2].min(extents.2) {
                    out.data[(i * extents.1 + j) * extents.2 + l] = 1;
                }
            }
        }
    }
    out
}

/// A rigid axis-aligned body in world coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BodyGeom {
    pub center: [f64; 3],
    pub half: [f64; 3],
}

impl BodyGeom {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.center[a] - self.half[a] && p[a] < self.center[a] + self.half[a])
    }
}

/// Writes each body's forward displacement onto its occupied voxels
/// (meters, grid axes); zero elsewhere. Later bodies overwrite earlier ones.
pub fn flow_labels(bodies: &[(BodyGeom, [f64; 3])], spec: &GridSpec) -> Tensor<f32> {
    let (nx, ny, nz) = spec.extents;
    let vox = spec.voxel_count();
    let mut flow = vec![0f32; 3 * vox];
    for (body, disp) in bodies {
        let (lo, hi) = voxel_bounds(body, spec, 0);
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                for l in lo[2]..hi[2] {
                    if body.contains(spec.center(i, j, l)) {
                        let off = (i * ny + j) * nz + l;
                        flow[off] = disp[0] as f32;
                        flow[vox + off] = disp[1] as f32;
                        flow[2 * vox + off] = disp[2] as f32;
                    }
                }
            }
        }
    }
    Tensor::new(vec![3, nx, ny, nz], flow).expect("flow grid")
}

/// Clipped voxel index bounds of a body's AABB, dilated by `margin` voxels.
fn voxel_bounds(body: &BodyGeom, spec: &GridSpec, margin: usize) -> ([usize; 3], [usize; 3]) {
    let lows = [spec.x_range.0, spec.y_range.0, spec.z_range.0];
    let exts = [spec.extents.0, spec.extents.1, spec.extents.2];
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let min = body.center[a] - body.half[a];
        let max = body.center[a] + body.half[a];
        let fl = ((min - lows[a]) / spec.resolution).floor();
        let fh = ((max - lows[a]) / spec.resolution).ceil();
        lo[a] = (fl.max(0.0) as usize).saturating_sub(margin);
        hi[a] = ((fh.max(0.0) as usize) + margin).min(exts[a]);
    }
    (lo, hi)
}

/// World generation parameters. Ranges are inclusive; sizes and speeds are
/// meters and meters-per-frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub grid: GridSpec,
    /// Observation frames (past + present).
    pub t_obs: usize,
    /// Forecast frames.
    pub t_future: usize,
    pub gmo_count: (usize, usize),
    /// Horizontal box edge (full extent).
    pub gmo_size_m: (f64, f64),
    pub gmo_height_m: (f64, f64),
    /// Per-axis speed magnitude, m/frame.
    pub speed_m: (f64, f64),
    pub gso_count: (usize, usize),
    pub gso_size_m: (f64, f64),
    pub ego_forward_m: f64,
    pub ego_yaw_rate: f64,
    /// Std of an independent per-frame position jitter, meters.
    pub jitter_m: f64,
    /// Feature channels produced by the observation encoder.
    pub c_in: usize,
    pub noise_level: f64,
    /// Extra dilation of inflated boxes, voxels.
    pub inflate_margin_vox: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> WorldConfig {
        WorldConfig {
            grid: GridSpec::toy_default(),
            t_obs: 3,
            t_future: 4,
            gmo_count: (2, 4),
            gmo_size_m: (0.5, 1.1),
            gmo_height_m: (0.4, 0.8),
            speed_m: (0.05, 0.25),
            gso_count: (1, 3),
            gso_size_m: (0.8, 2.0),
            ego_forward_m: 0.1,
            ego_yaw_rate: 0.02,
            jitter_m: 0.0,
            c_in: 8,
            noise_level: 0.1,
            inflate_margin_vox: 1,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.t_obs < 1 || self.t_future < 1 {
            return Err(Error::config("t_obs and t_future must be >= 1"));
        }
        if self.c_in < 1 {
            return Err(Error::config("c_in must be >= 1"));
        }
        let span = self.grid.x_range.1 - self.grid.x_range.0;
        if self.gmo_size_m.1 >= span || self.gso_size_m.1 >= span {
            return Err(Error::config("object sizes must fit the grid"));
        }
        Ok(())
    }

    /// Total sequence length (observations plus futures).
    pub fn total_frames(&self) -> usize {
        self.t_obs + self.t_future
    }
}

/// Labels of one frame, all in present-frame coordinates.
#[derive(Debug, Clone)]
pub struct FrameLabels {
    pub gmo_fine: BitGrid,
    pub gmo_inflated: BitGrid,
    pub gso_fine: BitGrid,
    /// `(3, x, y, z)` forward displacement in meters per frame.
    pub flow: Tensor<f32>,
}

/// One generated sequence.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub id: u64,
    pub seed: u64,
    /// Scene occupancy (movable and static together), each frame rendered in
    /// its own ego frame.
    pub obs_occ: Vec<BitGrid>,
    /// Per observation frame: its ego pose relative to the present frame.
    pub poses: Vec<Pose6DoF>,
    pub current: FrameLabels,
    pub future: Vec<FrameLabels>,
    /// Present-frame geometry and velocity (m/frame) of each moving body.
    pub gmo_tracks: Vec<(BodyGeom, [f64; 3])>,
}

struct MovingBody {
    geom: BodyGeom,
    vel: [f64; 3],
    /// Per-frame position jitter for rel frames `-(t_obs-1) ..= t_future+1`.
    jitter: Vec<[f64; 3]>,
    jitter_offset: isize,
}

impl MovingBody {
    fn at(&self, rel_frame: isize) -> BodyGeom {
        let idx = (rel_frame + self.jitter_offset).clamp(0, self.jitter.len() as isize - 1);
        let j = self.jitter[idx as usize];
        BodyGeom {
            center: [
                self.geom.center[0] + rel_frame as f64 * self.vel[0] + j[0],
                self.geom.center[1] + rel_frame as f64 * self.vel[1] + j[1],
                self.geom.center[2] + rel_frame as f64 * self.vel[2] + j[2],
            ],
            half: self.geom.half,
        }
    }

    fn displacement(&self, rel_frame: isize) -> [f64; 3] {
        let a = self.at(rel_frame);
        let b = self.at(rel_frame + 1);
        [
            b.center[0] - a.center[0],
            b.center[1] - a.center[1],
            b.center[2] - a.center[2],
        ]
    }
}

/// Rasterizes axis-aligned world bodies into an ego-frame grid: a voxel is
/// set when its center (mapped to world coordinates) lies inside a body.
pub fn render_bodies(bodies: &[BodyGeom], ego: &Pose6DoF, spec: &GridSpec) -> BitGrid {
    let (nx, ny, nz) = spec.extents;
    let mut out = BitGrid::zeros(spec.extents);
    for body in bodies {
        // candidate region: AABB of the body pulled back into the ego frame
        let r = body.half[0].hypot(body.half[1]).hypot(body.half[2]);
        let c_ego = ego.inverse_transform_point(body.center);
        let probe = BodyGeom {
            center: c_ego,
            half: [r, r, r],
        };
        let (lo, hi) = voxel_bounds(&probe, spec, 1);
        for i in lo[0]..hi[0].min(nx) {
            for j in lo[1]..hi[1].min(ny) {
                for l in lo[2]..hi[2].min(nz) {
                    let world = ego.transform_point(spec.center(i, j, l));
                    if body.contains(world) {
                        out.data[(i * ny + j) * nz + l] = 1;
                    }
                }
            }
        }
    }
    out
}

/// Generates one deterministic sample for `(cfg, seed)`.
pub fn generate_scene(cfg: &WorldConfig, seed: u64) -> Result<SceneSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_obs = cfg.t_obs;
    let t_fut = cfg.t_future;
    let current = t_obs as isize - 1;

    // Ego trajectory; world frame = ego frame at the present frame.
    let mut ego_poses = vec![Pose6DoF::identity(); t_obs];
    {
        let mut pos = [0.0f64; 3];
        let mut yaw = 0.0f64;
        for back in 1..t_obs {
            // integrate backwards: undo one forward step per frame
            yaw -= cfg.ego_yaw_rate;
            let (s, c) = yaw.sin_cos();
            pos[0] -= c * cfg.ego_forward_m;
            pos[1] -= s * cfg.ego_forward_m;
            ego_poses[t_obs - 1 - back] = Pose6DoF::new(pos, [0.0, 0.0, yaw]);
        }
    }

    let jitter_len = t_obs + t_fut + 1;
    let draw_jitter = |rng: &mut ChaCha8Rng| -> Vec<[f64; 3]> {
        (0..jitter_len)
            .map(|_| {
                if cfg.jitter_m == 0.0 {
                    [0.0; 3]
                } else {
                    [
                        gaussian(rng) * cfg.jitter_m,
                        gaussian(rng) * cfg.jitter_m,
                        0.0,
                    ]
                }
            })
            .collect()
    };

    // Moving boxes, anchored at the present frame in the central region.
    let n_gmo = rng.random_range(cfg.gmo_count.0..=cfg.gmo_count.1);
    let place = 0.65;
    let x_half = (cfg.grid.x_range.1 - cfg.grid.x_range.0) / 2.0 * place;
    let y_half = (cfg.grid.y_range.1 - cfg.grid.y_range.0) / 2.0 * place;
    let mut movers = Vec::with_capacity(n_gmo);
    for _ in 0..n_gmo {
        let sx = rng.random_range(cfg.gmo_size_m.0..=cfg.gmo_size_m.1) / 2.0;
        let sy = rng.random_range(cfg.gmo_size_m.0..=cfg.gmo_size_m.1) / 2.0;
        let sz = rng.random_range(cfg.gmo_height_m.0..=cfg.gmo_height_m.1) / 2.0;
        let cx = rng.random_range(-x_half..x_half);
        let cy = rng.random_range(-y_half..y_half);
        let z_lo = cfg.grid.z_range.0 + sz;
        let cz = rng.random_range(z_lo..(z_lo + 0.3).min(cfg.grid.z_range.1 - sz));
        let speed = |rng: &mut ChaCha8Rng| {
            let mag = rng.random_range(cfg.speed_m.0..=cfg.speed_m.1);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let vel = [speed(&mut rng), speed(&mut rng), 0.0];
        let jitter = draw_jitter(&mut rng);
        movers.push(MovingBody {
            geom: BodyGeom {
                center: [cx, cy, cz],
                half: [sx, sy, sz],
            },
            vel,
            jitter,
            jitter_offset: current,
        });
    }

    // Static slabs.
    let n_gso = rng.random_range(cfg.gso_count.0..=cfg.gso_count.1);
    let mut statics = Vec::with_capacity(n_gso);
    for _ in 0..n_gso {
        let sx = rng.random_range(cfg.gso_size_m.0..=cfg.gso_size_m.1) / 2.0;
        let sy = rng.random_range(cfg.gso_size_m.0..=cfg.gso_size_m.1) / 2.0;
        let sz = rng.random_range(0.2..=0.5);
        let cx = rng.random_range(-x_half..x_half);
        let cy = rng.random_range(-y_half..y_half);
        let cz = cfg.grid.z_range.0 + sz;
        statics.push(BodyGeom {
            center: [cx, cy, cz],
            half: [sx, sy, sz],
        });
    }

    let frame_labels = |rel: isize| -> FrameLabels {
        let gmo_bodies: Vec<BodyGeom> = movers.iter().map(|m| m.at(rel)).collect();
        let gmo_fine = render_bodies(&gmo_bodies, &Pose6DoF::identity(), &cfg.grid);
        let gso_fine = render_bodies(&statics, &Pose6DoF::identity(), &cfg.grid);
        let boxes: Vec<VoxelBox> = gmo_bodies
            .iter()
            .map(|b| {
                let (lo, hi) = voxel_bounds(b, &cfg.grid, cfg.inflate_margin_vox);
                VoxelBox { lo, hi }
            })
            .collect();
        let gmo_inflated = inflate_labels(cfg.grid.extents, &boxes);
        let flow_bodies: Vec<(BodyGeom, [f64; 3])> = movers
            .iter()
            .map(|m| (m.at(rel), m.displacement(rel)))
            .collect();
        let flow = flow_labels(&flow_bodies, &cfg.grid);
        FrameLabels {
            gmo_fine,
            gmo_inflated,
            gso_fine,
            flow,
        }
    };

    let mut obs_occ = Vec::with_capacity(t_obs);
    for t in 0..t_obs {
        let rel = t as isize - current;
        let mut bodies: Vec<BodyGeom> = movers.iter().map(|m| m.at(rel)).collect();
        bodies.extend_from_slice(&statics);
        obs_occ.push(render_bodies(&bodies, &ego_poses[t], &cfg.grid));
    }

    let current_labels = frame_labels(0);
    let future: Vec<FrameLabels> = (1..=t_fut as isize).map(frame_labels).collect();
    let gmo_tracks: Vec<(BodyGeom, [f64; 3])> =
        movers.iter().map(|m| (m.at(0), m.vel)).collect();

    Ok(SceneSample {
        id: seed,
        seed,
        obs_occ,
        poses: ego_poses,
        current: current_labels,
        future,
        gmo_tracks,
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1]
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Per-frame feature stub replacing a camera pipeline: channel 0 is the
/// occupancy bit, the last channel (when `c_in >= 2`) is a constant
/// embedding hook, channels in between are seeded Gaussian noise.
pub fn encode_observation(frames: &[BitGrid], cfg: &WorldConfig, seed: u64) -> Tensor<f32> {
    let t = frames.len();
    let c = cfg.c_in;
    let (nx, ny, nz) = cfg.grid.extents;
    let vox = nx * ny * nz;
    let mut data = Vec::with_capacity(t * c * vox);
    for (f, frame) in frames.iter().enumerate() {
        for ch in 0..c {
            if ch == 0 {
                data.extend(frame.data.iter().map(|&b| b as f32));
            } else if ch == c - 1 && c >= 2 {
                data.extend(std::iter::repeat_n(1.0f32, vox));
            } else {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (f as u64) << 20 ^ (ch as u64) << 8 ^ 0x9a7e);
                data.extend((0..vox).map(|_| (gaussian(&mut rng) * cfg.noise_level) as f32));
            }
        }
    }
    Tensor::new(vec![t, c, nx, ny, nz], data).expect("observation features")
}

/// Full observation pipeline for one sample: encode each frame in its own
/// ego frame, align past frames to the present frame, and append the six
/// relative pose channels. Output: `(t, c_in + 6, x, y, z)`.
pub fn assemble_motion_input<T: Element>(
    sample: &SceneSample,
    cfg: &WorldConfig,
) -> Result<Tensor<T>> {
    let encoded = encode_observation(&sample.obs_occ, cfg, sample.seed);
    let (nx, ny, nz) = cfg.grid.extents;
    let vox = nx * ny * nz;
    let c = cfg.c_in;
    let mut frames = Vec::with_capacity(sample.obs_occ.len() * c * vox);
    for (t, pose) in sample.poses.iter().enumerate() {
        let frame = Tensor::new(
            vec![c, nx, ny, nz],
            encoded.data()[t * c * vox..(t + 1) * c * vox].to_vec(),
        )?;
        let aligned = align_to_current(&frame.cast::<T>(), pose, &cfg.grid)?;
        frames.extend_from_slice(aligned.data());
    }
    let stacked = Tensor::new(vec![sample.poses.len(), c, nx, ny, nz], frames)?;
    concat_pose_channels(&stacked, &sample.poses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_config_default_validates() {
        WorldConfig::default().validate().unwrap();
    }

    #[test]
    fn inflate_empty_box_list_is_all_zero() {
        let out = inflate_labels((4, 4, 4), &[]);
        assert_eq!(out.count_ones(), 0);
    }

    #[test]
    fn inflate_single_voxel_box_of_3_cubed() {
        let boxes = [VoxelBox {
            lo: [1, 1, 1],
            hi: [4, 4, 4],
        }];
        let out = inflate_labels((6, 6, 6), &boxes);
        assert_eq!(out.count_ones(), 27);
    }

    #[test]
    fn inflate_clips_boxes_outside_grid() {
        let boxes = [VoxelBox {
            lo: [2, 2, 2],
            hi: [10, 10, 10],
        }];
        let out = inflate_labels((4, 4, 4), &boxes);
        assert_eq!(out.count_ones(), 8);
    }
}
