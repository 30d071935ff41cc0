//! Deterministic training loop with line-delimited loss logging and
//! resumable checkpoints.
//!
//! Batch composition is a stateless function of `(seed, step)`, so resuming
//! from a checkpoint at step k replays exactly the batches an uninterrupted
//! run would have seen.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{read_records, write_records, Record};
use crate::dataset::Prepared;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::{AdamW, AdamWConfig};
use crate::predictor::{assemble_loss, LossReport};
use crate::tensor::params::ParamStore;
use crate::tensor::tape::{Gradients, Session};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub steps: u64,
    pub batch_size: usize,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainSettings {
    fn default() -> TrainSettings {
        TrainSettings {
            steps: 2000,
            batch_size: 2,
            checkpoint_every: 500,
            seed: 0,
            optimizer: AdamWConfig::default(),
        }
    }
}

/// One line of the training log. `wall_ms` is informational; the
/// reproducibility contract covers the step and loss fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub total: f64,
    pub occupancy: f64,
    pub flow: f64,
    pub wall_ms: u64,
}

impl LogRecord {
    /// The deterministic part of the record.
    pub fn loss_key(&self) -> (u64, f64, f64, f64) {
        (self.step, self.total, self.occupancy, self.flow)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Batch sample indices for a step (with replacement, stateless).
pub fn batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    (0..batch)
        .map(|i| (splitmix64(seed ^ splitmix64(step * batch as u64 + i as u64 + 1)) % n as u64) as usize)
        .collect()
}

struct SamplePass<T> {
    total: f64,
    occupancy: f64,
    flow: f64,
    grads: Gradients<T>,
}

fn sample_pass<T: Element>(
    model: &Model,
    store: &ParamStore<T>,
    p: &Prepared<T>,
) -> Result<SamplePass<T>> {
    let mut s = Session::new(store);
    let input = s.input(p.input.clone());
    let out = model.forward(&mut s, input)?;
    let weights = model.cfg.task_class_weights(model.task);
    let lv = assemble_loss(
        &mut s,
        out.current_logits,
        out.occ_logits,
        out.flow,
        &p.sup,
        &weights,
        model.cfg.flow_weight,
    )?;
    let grads = s.backward(lv.total)?;
    Ok(SamplePass {
        total: s.value(lv.total).data()[0].as_f64(),
        occupancy: s.value(lv.occupancy).data()[0].as_f64(),
        flow: lv
            .flow
            .map(|f| s.value(f).data()[0].as_f64())
            .unwrap_or(0.0),
        grads,
    })
}

/// One optimization step over a batch. Per-sample gradients are computed in
/// parallel but reduced in batch order, so results are independent of thread
/// scheduling.
pub fn train_step<T: Element>(
    model: &Model,
    store: &mut ParamStore<T>,
    opt: &mut AdamW<T>,
    batch: &[&Prepared<T>],
    step: u64,
) -> Result<LossReport> {
    let passes: Vec<Result<SamplePass<T>>> = batch
        .par_iter()
        .map(|p| sample_pass(model, store, p))
        .collect();

    let mut total = 0.0;
    let mut occupancy = 0.0;
    let mut flow = 0.0;
    let scale = T::from_f64(1.0 / batch.len() as f64);
    store.zero_grads();
    for (i, pass) in passes.into_iter().enumerate() {
        let pass = pass?;
        for (term, value) in [
            ("occupancy", pass.occupancy),
            ("flow", pass.flow),
            ("total", pass.total),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    term: term.to_string(),
                    sample_id: batch[i].id,
                    step,
                });
            }
        }
        total += pass.total;
        occupancy += pass.occupancy;
        flow += pass.flow;
        for (name, g) in pass.grads.params() {
            let mut scaled = g.clone();
            scaled.scale_assign(scale);
            store.accumulate_grad(name, &scaled)?;
        }
    }
    opt.step(store)?;
    let n = batch.len() as f64;
    let class_voxels = batch
        .iter()
        .fold(vec![0u64; model.task.classes()], |mut acc, p| {
            for (a, b) in acc.iter_mut().zip(p.sup.class_voxels.iter()) {
                *a += b;
            }
            acc
        });
    Ok(LossReport {
        total: total / n,
        occupancy: occupancy / n,
        flow: flow / n,
        flow_weight: model.cfg.flow_weight,
        class_voxels,
    })
}

/// Runs training from `start_step` to `settings.steps`, invoking the sinks
/// for every log record and periodic checkpoint.
pub fn run_training<T: Element>(
    model: &Model,
    store: &mut ParamStore<T>,
    opt: &mut AdamW<T>,
    data: &[Prepared<T>],
    settings: &TrainSettings,
    start_step: u64,
    mut on_record: impl FnMut(&LogRecord) -> Result<()>,
    mut on_checkpoint: impl FnMut(u64, &ParamStore<T>, &AdamW<T>) -> Result<()>,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    for step in start_step..settings.steps {
        let t0 = Instant::now();
        let idx = batch_indices(settings.seed, step, data.len(), settings.batch_size);
        let batch: Vec<&Prepared<T>> = idx.iter().map(|&i| &data[i]).collect();
        let report = train_step(model, store, opt, &batch, step)?;
        let record = LogRecord {
            step: step + 1,
            total: report.total,
            occupancy: report.occupancy,
            flow: report.flow,
            wall_ms: t0.elapsed().as_millis() as u64,
        };
        on_record(&record)?;
        let done = step + 1;
        if done == settings.steps
            || (settings.checkpoint_every > 0 && done % settings.checkpoint_every == 0)
        {
            on_checkpoint(done, store, opt)?;
        }
    }
    // steps == start_step: still emit the initial state as a checkpoint
    if settings.steps == start_step {
        on_checkpoint(start_step, store, opt)?;
    }
    Ok(())
}

pub fn save_checkpoint<T: Element>(
    path: &Path,
    store: &ParamStore<T>,
    opt: &AdamW<T>,
    step: u64,
) -> Result<()> {
    let mut records = vec![Record::scalar_u64("meta/step", step)];
    for (name, p) in store.iter() {
        records.push(Record::tensor(&format!("param/{name}"), &p.value));
    }
    for (name, m) in &opt.m {
        records.push(Record::tensor(&format!("adam_m/{name}"), m));
    }
    for (name, v) in &opt.v {
        records.push(Record::tensor(&format!("adam_v/{name}"), v));
    }
    write_records(path, &records)
}

/// Restores parameters (and, when given, optimizer state) from a checkpoint.
/// The checkpoint's parameter set must match the model exactly; mismatches
/// report the missing and unexpected names.
pub fn load_checkpoint<T: Element>(
    path: &Path,
    store: &mut ParamStore<T>,
    mut opt: Option<&mut AdamW<T>>,
) -> Result<u64> {
    let records = read_records(path)?;
    let mut step = 0u64;
    let present: Vec<&str> = records
        .iter()
        .filter_map(|r| r.name.strip_prefix("param/"))
        .collect();
    let expected: Vec<&String> = store.names().collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|n| !present.contains(&n.as_str()))
        .map(|n| n.to_string())
        .collect();
    let unexpected: Vec<String> = present
        .iter()
        .filter(|n| !expected.iter().any(|e| e.as_str() == **n))
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::CheckpointMismatch {
            missing,
            unexpected,
        });
    }
    for r in &records {
        if r.name == "meta/step" {
            step = r.as_u64()?;
        } else if let Some(name) = r.name.strip_prefix("param/") {
            store.set_value(name, r.to_tensor::<T>()?)?;
        } else if let Some(name) = r.name.strip_prefix("adam_m/") {
            if let Some(opt) = opt.as_deref_mut() {
                insert_moment(&mut opt.m, name, r.to_tensor::<T>()?)?;
            }
        } else if let Some(name) = r.name.strip_prefix("adam_v/") {
            if let Some(opt) = opt.as_deref_mut() {
                insert_moment(&mut opt.v, name, r.to_tensor::<T>()?)?;
            }
        }
    }
    if let Some(opt) = opt {
        opt.step_count = step;
    }
    Ok(step)
}

fn insert_moment<T: Element>(
    map: &mut indexmap::IndexMap<String, Tensor<T>>,
    name: &str,
    t: Tensor<T>,
) -> Result<()> {
    match map.get_mut(name) {
        Some(slot) => {
            *slot = t;
            Ok(())
        }
        None => Err(Error::Format(format!(
            "checkpoint has optimizer state for unknown parameter `{name}`"
        ))),
    }
}
