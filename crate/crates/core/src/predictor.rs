//! Decoding heads, task label sets, and the training loss.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Conv;
use crate::scene::{FrameLabels, SceneSample};
use crate::tensor::params::ParamStore;
use crate::tensor::tape::{Session, Var};
use crate::tensor::{Element, Tensor};

/// The three evaluation tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Movable objects with box-inflated labels (2 classes).
    #[default]
    InflatedGmo,
    /// Movable objects with voxel-accurate labels (2 classes).
    FineGmo,
    /// Movable and static objects, voxel-accurate (3 classes).
    FineGmoGso,
}

impl TaskKind {
    pub fn classes(&self) -> usize {
        match self {
            TaskKind::InflatedGmo | TaskKind::FineGmo => 2,
            TaskKind::FineGmoGso => 3,
        }
    }

    /// Class names in id order (id 0 is free space).
    pub fn class_names(&self) -> &'static [&'static str] {
        match self {
            TaskKind::InflatedGmo | TaskKind::FineGmo => &["free", "gmo"],
            TaskKind::FineGmoGso => &["free", "gmo", "gso"],
        }
    }

    pub fn parse(s: &str) -> Result<TaskKind> {
        match s {
            "inflated_gmo" => Ok(TaskKind::InflatedGmo),
            "fine_gmo" => Ok(TaskKind::FineGmo),
            "fine_gmo_gso" => Ok(TaskKind::FineGmoGso),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }

    /// Per-voxel class ids for one frame. For the 3-class task a voxel both
    /// movable and static counts as movable.
    pub fn frame_labels(&self, f: &FrameLabels) -> Vec<u8> {
        match self {
            TaskKind::InflatedGmo => f.gmo_inflated.data.to_vec(),
            TaskKind::FineGmo => f.gmo_fine.data.to_vec(),
            TaskKind::FineGmoGso => f
                .gmo_fine
                .data
                .iter()
                .zip(f.gso_fine.data.iter())
                .map(|(&m, &s)| if m != 0 { 1 } else if s != 0 { 2 } else { 0 })
                .collect(),
        }
    }
}

/// Per-frame 3-D convolution head: 3x3x3 conv, rectifier, 1x1x1 projection.
#[derive(Debug, Clone)]
pub struct Head {
    conv1: Conv,
    conv2: Conv,
}

impl Head {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        out: usize,
        root: u64,
    ) -> Result<Head> {
        let conv1 = Conv::register(
            store,
            &format!("{prefix}.conv1"),
            3,
            channels,
            channels,
            3,
            1,
            1,
            1.0,
            root,
        )?;
        let conv2 = Conv::register(
            store,
            &format!("{prefix}.conv2"),
            3,
            channels,
            out,
            1,
            1,
            0,
            1.0,
            root,
        )?;
        Ok(Head { conv1, conv2 })
    }

    /// `(frames, c, x, y, z)` -> `(frames, out, x, y, z)`.
    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.apply(s, x)?;
        let h = s.relu(h);
        self.conv2.apply(s, h)
    }
}

/// Ground truth of one sample arranged for the loss kernels.
pub struct Supervision<T> {
    /// Class ids for the present frame followed by the future frames,
    /// `(1 + t_fut) * voxels` entries.
    pub occ_labels: Arc<Vec<u8>>,
    /// `(t_fut, 3, voxels)` metric displacements.
    pub flow_target: Tensor<T>,
    /// Moving-occupied mask per future frame, `(t_fut, voxels)`.
    pub flow_mask: Arc<Vec<u8>>,
    /// Ground-truth voxel count per class over the supervised frames.
    pub class_voxels: Vec<u64>,
}

pub fn supervision<T: Element>(sample: &SceneSample, task: TaskKind) -> Supervision<T> {
    let k = task.classes();
    let mut occ_labels = task.frame_labels(&sample.current);
    for f in &sample.future {
        occ_labels.extend(task.frame_labels(f));
    }
    let mut class_voxels = vec![0u64; k];
    for &y in &occ_labels {
        class_voxels[y as usize] += 1;
    }

    let vox = sample.current.gmo_fine.data.len();
    let t_fut = sample.future.len();
    let mut flow_data = Vec::with_capacity(t_fut * 3 * vox);
    let mut mask = Vec::with_capacity(t_fut * vox);
    for f in &sample.future {
        flow_data.extend(f.flow.data().iter().map(|&v| T::from_f64(v as f64)));
        mask.extend_from_slice(&f.gmo_fine.data);
    }
    Supervision {
        occ_labels: Arc::new(occ_labels),
        flow_target: Tensor::new(vec![t_fut, 3, vox], flow_data).expect("flow target"),
        flow_mask: Arc::new(mask),
        class_voxels,
    }
}

/// Scalar loss nodes of one sample.
pub struct LossVars {
    pub total: Var,
    pub occupancy: Var,
    pub flow: Option<Var>,
}

/// Loss values extracted from a forward pass.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub occupancy: f64,
    pub flow: f64,
    pub flow_weight: f64,
    pub class_voxels: Vec<u64>,
}

/// Class-weighted cross-entropy over the present and future frames plus
/// (optionally) smooth-L1 flow error over moving-occupied voxels.
pub fn assemble_loss<T: Element>(
    s: &mut Session<'_, T>,
    current_logits: Var,
    future_logits: Var,
    flow_logits: Option<Var>,
    sup: &Supervision<T>,
    class_weights: &[f64],
    flow_weight: f64,
) -> Result<LossVars> {
    let cs = s.shape(current_logits).to_vec();
    let fs = s.shape(future_logits).to_vec();
    if cs.len() != 5 || fs.len() != 5 || cs[1] != fs[1] {
        return Err(Error::shape(format!(
            "assemble_loss: logits {:?} / {:?}",
            cs, fs
        )));
    }
    let k = cs[1];
    let vox = cs[2] * cs[3] * cs[4];
    let cur = s.reshape(current_logits, &[cs[0], k, vox])?;
    let fut = s.reshape(future_logits, &[fs[0], k, vox])?;
    let all = s.concat(&[cur, fut], 0)?;
    let occupancy = s.ce_loss(all, sup.occ_labels.clone(), class_weights)?;

    let flow = match flow_logits {
        Some(fl) => {
            let flsh = s.shape(fl).to_vec();
            let flat = s.reshape(fl, &[flsh[0], 3, vox])?;
            Some(s.smooth_l1_masked(flat, &sup.flow_target, sup.flow_mask.clone())?)
        }
        None => None,
    };
    let total = match flow {
        Some(f) => {
            let wf = s.scale(f, flow_weight);
            s.add(occupancy, wf)?
        }
        None => occupancy,
    };
    Ok(LossVars {
        total,
        occupancy,
        flow,
    })
}

/// Argmax class id per voxel for `(frames, k, voxels...)` logits.
pub fn decode_classes<T: Element>(logits: &Tensor<T>) -> Vec<u8> {
    let shape = logits.shape();
    let frames = shape[0];
    let k = shape[1];
    let vox: usize = shape[2..].iter().product();
    let data = logits.data();
    let mut out = Vec::with_capacity(frames * vox);
    for f in 0..frames {
        let base = f * k * vox;
        for v in 0..vox {
            let mut best = 0usize;
            let mut best_v = data[base + v];
            for c in 1..k {
                let x = data[base + c * vox + v];
                if x > best_v {
                    best_v = x;
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    out
}
