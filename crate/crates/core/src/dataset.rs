//! Dataset generation, persistence (one container file per sample plus a
//! JSON manifest), and preparation of model-ready inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::{read_records, write_records, Record, RecordData};
use crate::error::{Error, Result};
use crate::geometry::Pose6DoF;
use crate::predictor::{supervision, Supervision, TaskKind};
use crate::scene::{
    assemble_motion_input, generate_scene, BitGrid, BodyGeom, FrameLabels, SceneSample,
    WorldConfig,
};
use crate::tensor::params::derive_seed;
use crate::tensor::{Element, Tensor};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleRef {
    pub id: u64,
    pub seed: u64,
    pub split: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config_hash: String,
    pub world: WorldConfig,
    pub n_train: usize,
    pub n_eval: usize,
    pub samples: Vec<SampleRef>,
}

fn grid_records(prefix: &str, labels: &FrameLabels) -> Vec<Record> {
    let e = labels.gmo_fine.extents;
    let shape = vec![e.0, e.1, e.2];
    vec![
        Record::u8(
            &format!("{prefix}/gmo_fine"),
            shape.clone(),
            labels.gmo_fine.data.clone(),
        ),
        Record::u8(
            &format!("{prefix}/gmo_inflated"),
            shape.clone(),
            labels.gmo_inflated.data.clone(),
        ),
        Record::u8(
            &format!("{prefix}/gso_fine"),
            shape,
            labels.gso_fine.data.clone(),
        ),
        Record::tensor(&format!("{prefix}/flow"), &labels.flow),
    ]
}

pub fn sample_to_records(s: &SceneSample) -> Vec<Record> {
    let mut out = vec![
        Record::scalar_u64("meta/id", s.id),
        Record::scalar_u64("meta/seed", s.seed),
    ];
    for (t, g) in s.obs_occ.iter().enumerate() {
        out.push(Record::u8(
            &format!("obs_occ/{t}"),
            vec![g.extents.0, g.extents.1, g.extents.2],
            g.data.clone(),
        ));
    }
    for (t, p) in s.poses.iter().enumerate() {
        let vals = [
            p.translation[0],
            p.translation[1],
            p.translation[2],
            p.rotation[0],
            p.rotation[1],
            p.rotation[2],
        ];
        out.push(Record {
            name: format!("pose/{t}"),
            shape: vec![6],
            data: RecordData::F64(vals.to_vec()),
        });
    }
    out.extend(grid_records("current", &s.current));
    for (j, f) in s.future.iter().enumerate() {
        out.extend(grid_records(&format!("future/{j}"), f));
    }
    for (i, (geom, vel)) in s.gmo_tracks.iter().enumerate() {
        out.push(Record {
            name: format!("track/{i}"),
            shape: vec![9],
            data: RecordData::F64(vec![
                geom.center[0],
                geom.center[1],
                geom.center[2],
                geom.half[0],
                geom.half[1],
                geom.half[2],
                vel[0],
                vel[1],
                vel[2],
            ]),
        });
    }
    out
}

fn bitgrid_from(r: &Record, extents: (usize, usize, usize)) -> Result<BitGrid> {
    match &r.data {
        RecordData::U8(v) if v.len() == extents.0 * extents.1 * extents.2 => Ok(BitGrid {
            extents,
            data: v.clone(),
        }),
        _ => Err(Error::Format(format!("record `{}` is not a grid", r.name))),
    }
}

pub fn sample_from_records(records: &[Record], world: &WorldConfig) -> Result<SceneSample> {
    let find = |name: &str| -> Result<&Record> {
        records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Format(format!("missing record `{name}`")))
    };
    let extents = world.grid.extents;
    let id = find("meta/id")?.as_u64()?;
    let seed = find("meta/seed")?.as_u64()?;

    let mut obs_occ = Vec::with_capacity(world.t_obs);
    let mut poses = Vec::with_capacity(world.t_obs);
    for t in 0..world.t_obs {
        obs_occ.push(bitgrid_from(find(&format!("obs_occ/{t}"))?, extents)?);
        let p = find(&format!("pose/{t}"))?;
        let v = match &p.data {
            RecordData::F64(v) if v.len() == 6 => v.clone(),
            _ => return Err(Error::Format(format!("bad pose record {t}"))),
        };
        poses.push(Pose6DoF::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]));
    }
    let labels = |prefix: &str| -> Result<FrameLabels> {
        Ok(FrameLabels {
            gmo_fine: bitgrid_from(find(&format!("{prefix}/gmo_fine"))?, extents)?,
            gmo_inflated: bitgrid_from(find(&format!("{prefix}/gmo_inflated"))?, extents)?,
            gso_fine: bitgrid_from(find(&format!("{prefix}/gso_fine"))?, extents)?,
            flow: find(&format!("{prefix}/flow"))?.to_tensor::<f32>()?,
        })
    };
    let current = labels("current")?;
    let mut future = Vec::with_capacity(world.t_future);
    for j in 0..world.t_future {
        future.push(labels(&format!("future/{j}"))?);
    }
    let mut gmo_tracks = Vec::new();
    let mut i = 0;
    while let Ok(r) = find(&format!("track/{i}")) {
        if let RecordData::F64(v) = &r.data {
            gmo_tracks.push((
                BodyGeom {
                    center: [v[0], v[1], v[2]],
                    half: [v[3], v[4], v[5]],
                },
                [v[6], v[7], v[8]],
            ));
        }
        i += 1;
    }
    Ok(SceneSample {
        id,
        seed,
        obs_occ,
        poses,
        current,
        future,
        gmo_tracks,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Generates and writes `n_train + n_eval` samples plus the manifest.
/// Sample seeds derive from the world seed and the split/index, so the same
/// config always produces bit-identical files.
pub fn save_dataset(
    dir: &Path,
    world: &WorldConfig,
    n_train: usize,
    n_eval: usize,
    config_hash: &str,
) -> Result<Manifest> {
    world.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut samples = Vec::with_capacity(n_train + n_eval);
    for (split, count) in [("train", n_train), ("eval", n_eval)] {
        for i in 0..count {
            let seed = derive_seed(world.seed, &format!("{split}/{i}"));
            let sample = generate_scene(world, seed)?;
            let file = format!("{split}_{i:05}.vxc");
            let path = dir.join(&file);
            write_records(&path, &sample_to_records(&sample))?;
            samples.push(SampleRef {
                id: sample.id,
                seed,
                split: split.to_string(),
                file,
                sha256: file_digest(&path)?,
            });
        }
    }
    let manifest = Manifest {
        version: 1,
        config_hash: config_hash.to_string(),
        world: world.clone(),
        n_train,
        n_eval,
        samples,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
    std::fs::write(dir.join(MANIFEST_NAME), json)
        .map_err(|e| Error::io(dir.join(MANIFEST_NAME).display().to_string(), e))?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let json = std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&json).map_err(|e| Error::Format(format!("manifest decode: {e}")))
}

pub fn load_split(dir: &Path, manifest: &Manifest, split: &str) -> Result<Vec<SceneSample>> {
    let mut out = Vec::new();
    for sref in manifest.samples.iter().filter(|s| s.split == split) {
        let path: PathBuf = dir.join(&sref.file);
        let records = read_records(&path)?;
        out.push(sample_from_records(&records, &manifest.world)?);
    }
    Ok(out)
}

/// A sample with its model input and supervision precomputed.
pub struct Prepared<T> {
    pub id: u64,
    pub input: Tensor<T>,
    pub sup: Supervision<T>,
}

pub fn prepare_samples<T: Element>(
    samples: &[SceneSample],
    world: &WorldConfig,
    task: TaskKind,
) -> Result<Vec<Prepared<T>>> {
    samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                id: s.id,
                input: assemble_motion_input::<T>(s, world)?,
                sup: supervision::<T>(s, task),
            })
        })
        .collect()
}
