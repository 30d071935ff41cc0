//! Occupancy forecasting evaluation: per-class IoU at the present frame, at
//! each future horizon, and aggregated over the whole future span.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::predictor::{decode_classes, TaskKind};
use crate::scene::{assemble_motion_input, SceneSample, WorldConfig};
use crate::tensor::params::ParamStore;
use crate::tensor::tape::Session;
use crate::tensor::{Element, Tensor};

/// Intersection-over-union of two binary voxel sets, in percent. Both sets
/// empty counts as perfect agreement (100) by convention; a `skip` variant
/// for that case is available through [`IouCounts`].
pub fn iou(pred: &[u8], gt: &[u8]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "iou on mismatched grids");
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let (p, g) = (p != 0, g != 0);
        inter += (p && g) as u64;
        union += (p || g) as u64;
    }
    IouCounts { inter, union }.percent()
}

/// Count-based IoU accumulator (micro averaging = summing these).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IouCounts {
    pub inter: u64,
    pub union: u64,
}

impl IouCounts {
    pub fn add_classified(&mut self, pred: &[u8], gt: &[u8], class: u8) {
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            let (p, g) = (p == class, g == class);
            self.inter += (p && g) as u64;
            self.union += (p || g) as u64;
        }
    }

    pub fn merge(&mut self, other: IouCounts) {
        self.inter += other.inter;
        self.union += other.union;
    }

    /// Percent IoU; both-empty resolves to 100.
    pub fn percent(&self) -> f64 {
        if self.union == 0 {
            100.0
        } else {
            100.0 * self.inter as f64 / self.union as f64
        }
    }
}

/// How the whole-span aggregate is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanAverage {
    /// Sum intersections and unions over all frames and samples first.
    #[default]
    Micro,
    /// Mean of per-(sample, frame) IoU values.
    Macro,
}

/// Grids produced by a forecasting source for one sample: class ids per
/// voxel for the present frame and each future horizon.
pub struct ForecastGrids {
    pub current: Vec<u8>,
    pub future: Vec<Vec<u8>>,
    /// Optional metric flow prediction `(t_fut, 3, voxels)`.
    pub flow: Option<Tensor<f32>>,
}

/// Anything that can produce occupancy forecasts for evaluation.
pub trait Forecasts {
    fn forecast_sample(&self, sample: &SceneSample) -> Result<ForecastGrids>;
}

/// Trained network.
pub struct NetworkForecaster<'a, T: Element> {
    pub model: &'a Model,
    pub store: &'a ParamStore<T>,
    pub world: &'a WorldConfig,
}

impl<T: Element> Forecasts for NetworkForecaster<'_, T> {
    fn forecast_sample(&self, sample: &SceneSample) -> Result<ForecastGrids> {
        let input = assemble_motion_input::<T>(sample, self.world)?;
        let mut s = Session::new(self.store);
        let xv = s.input(input);
        let out = self.model.forward(&mut s, xv)?;
        let current = decode_classes(s.value(out.current_logits));
        let fut_classes = decode_classes(s.value(out.occ_logits));
        let vox = self.world.grid.voxel_count();
        let future: Vec<Vec<u8>> = (0..self.world.t_future)
            .map(|j| fut_classes[j * vox..(j + 1) * vox].to_vec())
            .collect();
        let flow = out.flow.map(|f| s.value(f).cast::<f32>());
        Ok(ForecastGrids {
            current,
            future,
            flow,
        })
    }
}

/// Baseline: every future frame predicted as the present frame's labels,
/// zero flow.
pub struct CopyLastBaseline {
    pub task: TaskKind,
}

impl Forecasts for CopyLastBaseline {
    fn forecast_sample(&self, sample: &SceneSample) -> Result<ForecastGrids> {
        let current = self.task.frame_labels(&sample.current);
        let future = vec![current.clone(); sample.future.len()];
        Ok(ForecastGrids {
            current,
            future,
            flow: None,
        })
    }
}

/// Upper bound: emits the ground truth itself.
pub struct OracleForecaster {
    pub task: TaskKind,
}

impl Forecasts for OracleForecaster {
    fn forecast_sample(&self, sample: &SceneSample) -> Result<ForecastGrids> {
        Ok(ForecastGrids {
            current: self.task.frame_labels(&sample.current),
            future: sample
                .future
                .iter()
                .map(|f| self.task.frame_labels(f))
                .collect(),
            flow: None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub iou_current: f64,
    /// Per-horizon values, index 0 = first future frame.
    pub iou_future: Vec<f64>,
    /// Whole-span aggregate (micro).
    pub iou_future_span: f64,
    /// Whole-span aggregate (macro), reported for sensitivity analysis.
    pub iou_future_span_macro: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IoUReport {
    pub task: TaskKind,
    pub samples: usize,
    pub classes: Vec<ClassReport>,
    /// Mean over non-free classes of the whole-span IoU (micro).
    pub mean_span: f64,
    /// Mean absolute flow error over ground-truth moving voxels (meters),
    /// when the source predicts flow.
    pub flow_mae: Option<f64>,
}

impl IoUReport {
    /// Headline number: whole-span IoU of the movable class.
    pub fn gmo_span(&self) -> f64 {
        self.classes[0].iou_future_span
    }

    pub fn text_table(&self) -> String {
        let horizons = self.classes[0].iou_future.len();
        let mut s = String::new();
        s.push_str(&format!("task: {:?}  samples: {}\n", self.task, self.samples));
        s.push_str("class   iou_c  ");
        for j in 1..=horizons {
            s.push_str(&format!("iou_f({j})  "));
        }
        s.push_str("iou_f(span)\n");
        for c in &self.classes {
            s.push_str(&format!("{:<7} {:>6.2} ", c.class, c.iou_current));
            for v in &c.iou_future {
                s.push_str(&format!("{v:>8.2} "));
            }
            s.push_str(&format!("{:>11.2}\n", c.iou_future_span));
        }
        if let Some(mae) = self.flow_mae {
            s.push_str(&format!("flow mae: {mae:.4} m\n"));
        }
        s
    }
}

/// Evaluates a forecast source over a dataset. Per-horizon and span values
/// are micro-averages (counts summed over samples before dividing); the
/// macro alternative is reported alongside.
pub fn evaluate<F: Forecasts>(
    source: &F,
    samples: &[SceneSample],
    task: TaskKind,
) -> Result<IoUReport> {
    if samples.is_empty() {
        return Err(Error::config("evaluation dataset is empty"));
    }
    let t_fut = samples[0].future.len();
    let k = task.classes();
    let class_ids: Vec<u8> = (1..k as u8).collect();

    let mut current = vec![IouCounts::default(); class_ids.len()];
    let mut per_h = vec![vec![IouCounts::default(); t_fut]; class_ids.len()];
    let mut macro_sum = vec![0.0f64; class_ids.len()];
    let mut macro_n = 0usize;
    let mut flow_err = 0.0f64;
    let mut flow_cnt = 0u64;
    let mut any_flow = false;

    for sample in samples {
        let fc = source.forecast_sample(sample)?;
        let gt_current = task.frame_labels(&sample.current);
        for (ci, &cls) in class_ids.iter().enumerate() {
            current[ci].add_classified(&fc.current, &gt_current, cls);
        }
        for (j, f) in sample.future.iter().enumerate() {
            let gt = task.frame_labels(f);
            for (ci, &cls) in class_ids.iter().enumerate() {
                let mut counts = IouCounts::default();
                counts.add_classified(&fc.future[j], &gt, cls);
                per_h[ci][j].merge(counts);
                macro_sum[ci] += counts.percent();
            }
            macro_n += 1;
        }
        if let Some(flow) = &fc.flow {
            any_flow = true;
            let vox = sample.current.gmo_fine.data.len();
            for (j, f) in sample.future.iter().enumerate() {
                for v in 0..vox {
                    if f.gmo_fine.data[v] == 0 {
                        continue;
                    }
                    for c in 0..3 {
                        let p = flow.data()[(j * 3 + c) * vox + v] as f64;
                        let g = f.flow.data()[c * vox + v] as f64;
                        flow_err += (p - g).abs();
                        flow_cnt += 1;
                    }
                }
            }
        }
    }

    let names = task.class_names();
    let mut classes = Vec::new();
    for (ci, &cls) in class_ids.iter().enumerate() {
        let span: IouCounts = per_h[ci]
            .iter()
            .fold(IouCounts::default(), |mut acc, c| {
                acc.merge(*c);
                acc
            });
        classes.push(ClassReport {
            class: names[cls as usize].to_string(),
            iou_current: current[ci].percent(),
            iou_future: per_h[ci].iter().map(|c| c.percent()).collect(),
            iou_future_span: span.percent(),
            iou_future_span_macro: macro_sum[ci] / macro_n as f64,
        });
    }
    let mean_span = classes.iter().map(|c| c.iou_future_span).sum::<f64>() / classes.len() as f64;
    Ok(IoUReport {
        task,
        samples: samples.len(),
        classes,
        mean_span,
        flow_mae: if any_flow && flow_cnt > 0 {
            Some(flow_err / flow_cnt as f64)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_basic_cases() {
        assert_eq!(iou(&[1, 1, 0], &[1, 1, 0]), 100.0);
        assert_eq!(iou(&[1, 0, 0], &[0, 1, 0]), 0.0);
        // sets {a,b,c} vs {b,c,d}: intersection 2, union 4
        assert_eq!(iou(&[1, 1, 1, 0], &[0, 1, 1, 1]), 50.0);
        // both empty
        assert_eq!(iou(&[0, 0], &[0, 0]), 100.0);
    }

    #[test]
    fn iou_is_symmetric_and_permutation_invariant() {
        let a = [1u8, 0, 1, 1, 0, 0, 1, 0];
        let b = [0u8, 0, 1, 1, 1, 0, 0, 0];
        assert_eq!(iou(&a, &b), iou(&b, &a));
        let perm = [3usize, 1, 4, 0, 7, 2, 6, 5];
        let ap: Vec<u8> = perm.iter().map(|&i| a[i]).collect();
        let bp: Vec<u8> = perm.iter().map(|&i| b[i]).collect();
        assert_eq!(iou(&a, &b), iou(&ap, &bp));
    }
}
