//! Analytic parameter and FLOP accounting.
//!
//! Counting convention (matches the kernel instrumentation in
//! [`crate::tensor::meter`]): one multiply-accumulate = 2 FLOPs; bias,
//! normalization, activation, compare, divide, exp, ln and sqrt = 1 each;
//! data movement (reshape, permute, slice, concat, padding, nearest
//! upsampling) = 0. Convolutions count densely: every output element performs
//! `cin * prod(kernel)` MACs (zero padding is materialized, not skipped).
//!
//! These functions recompute the cost of each module from shapes alone; they
//! share no code with the kernels, so the equality test between the two
//! routes is meaningful.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forecaster::Forecaster;
use crate::layers::{Conv, E4a, PlaneAgg, Variant};
use crate::model::{Model, ModelConfig, PipelineGeom};
use crate::observer::{Aggregator, Observer, ObserverSettings};
use crate::predictor::TaskKind;
use crate::tensor::ops::{conv_out_extent, Act};
use crate::tensor::params::ParamStore;
use crate::tensor::Element;

// ---- per-op formulas -------------------------------------------------------

pub fn flops_linear(rows: u64, in_w: u64, out_w: u64) -> u64 {
    rows * (2 * in_w * out_w + out_w)
}

/// `out_positions` counts batch x cout x spatial outputs.
pub fn flops_conv(out_positions: u64, cin: u64, k_total: u64) -> u64 {
    out_positions * (2 * cin * k_total + 1)
}

pub fn flops_gap(out_elems: u64, reduced: u64) -> u64 {
    out_elems * reduced
}

pub fn flops_norm_act(positions: u64, c: u64, act: Act) -> u64 {
    let act_cost = match act {
        Act::Relu => c,
        Act::Identity => 0,
    };
    positions * (7 * c + 3 + act_cost)
}

pub fn flops_softmax(rows: u64, n: u64) -> u64 {
    rows * (5 * n - 2)
}

pub fn flops_sdpa(groups: u64, nq: u64, nk: u64, d: u64, dv: u64) -> u64 {
    let rows = groups * nq;
    rows * nk * d * 2 + rows * nk + flops_softmax(rows, nk) + rows * nk * dv * 2
}

pub fn flops_matmul(m: u64, k: u64, n: u64) -> u64 {
    2 * m * k * n
}

pub fn flops_add(n: u64) -> u64 {
    n
}

pub fn flops_relu(n: u64) -> u64 {
    n
}

pub fn flops_embed_add(groups: u64, n: u64, c: u64) -> u64 {
    groups * n * c
}

pub fn flops_broadcast_sum3(out_elems: u64) -> u64 {
    2 * out_elems
}

pub fn flops_ce_loss(frames: u64, voxels: u64, k: u64) -> u64 {
    frames * voxels * (4 * k + 4) + 1
}

pub fn flops_smooth_l1(masked: u64, comps: u64) -> u64 {
    8 * comps * masked + 1
}

// ---- walk ------------------------------------------------------------------

/// Accumulates FLOPs and the largest activation along a forward walk.
#[derive(Debug, Clone, Copy, Default)]
pub struct Walk {
    pub flops: u64,
    pub peak_elems: u64,
}

impl Walk {
    pub fn op(&mut self, flops: u64, out_elems: u64) {
        self.flops += flops;
        if out_elems > self.peak_elems {
            self.peak_elems = out_elems;
        }
    }

    pub fn seed(&mut self, elems: u64) {
        if elems > self.peak_elems {
            self.peak_elems = elems;
        }
    }
}

/// Convolution over the trailing spatial extents; returns the output extents.
pub fn conv_cost(c: &Conv, batch: usize, spatial: &[usize], w: &mut Walk) -> Result<Vec<usize>> {
    let mut out_sp = Vec::with_capacity(spatial.len());
    for &e in spatial {
        out_sp.push(conv_out_extent(e, c.k, c.stride, c.pad)?);
    }
    let out_positions = (batch * c.cout * out_sp.iter().product::<usize>()) as u64;
    w.op(
        flops_conv(out_positions, c.cin as u64, c.kernel_total() as u64),
        out_positions,
    );
    Ok(out_sp)
}

pub fn wmsa_cost(channels: usize, heads: usize, window: usize, t: usize, px: usize, py: usize, w: &mut Walk) {
    let c = channels as u64;
    let groups = (t * (px / window) * (py / window)) as u64;
    let n = (window * window) as u64;
    let rows = groups * n;
    for _ in 0..3 {
        w.op(flops_linear(rows, c, c), rows * c); // q, k, v projections
    }
    let h = heads as u64;
    let dh = c / h;
    w.op(flops_sdpa(groups * h, n, n, dh, dh), rows * c);
    w.op(flops_linear(rows, c, c), rows * c); // output projection
}

pub fn temporal_attn_cost(channels: usize, t: usize, spatial: usize, w: &mut Walk) {
    let c = channels as u64;
    let (groups, n) = (spatial as u64, t as u64);
    let rows = groups * n;
    w.op(flops_embed_add(groups, n, c), rows * c);
    for _ in 0..3 {
        w.op(flops_linear(rows, c, c), rows * c);
    }
    w.op(flops_sdpa(groups, n, n, c, c), rows * c);
    w.op(flops_linear(rows, c, c), rows * c);
}

/// One tripling-attention block at the given extents (mirrors
/// `Taf::apply`: tripling, per-branch temporal attention, broadcast fusion,
/// residual add).
#[allow(clippy::too_many_arguments)]
pub fn taf_cost(
    channels: usize,
    window: usize,
    heads: usize,
    act: Act,
    t: usize,
    x: usize,
    y: usize,
    z: usize,
    w: &mut Walk,
) {
    let c = channels as u64;
    let (tu, xu, yu, zu) = (t as u64, x as u64, y as u64, z as u64);
    let full = tu * c * xu * yu * zu;

    // scene branch
    w.op(flops_gap(tu * c, xu * yu * zu), tu * c);
    w.op(flops_linear(tu, c, c), tu * c);
    w.op(flops_norm_act(tu, c, act), tu * c);
    // height branch
    w.op(flops_gap(tu * c * zu, xu * yu), tu * c * zu);
    w.op(flops_conv(tu * c * zu, c, 3), tu * c * zu);
    w.op(flops_norm_act(tu * zu, c, act), tu * c * zu);
    // bev branch
    w.op(flops_gap(tu * c * xu * yu, zu), tu * c * xu * yu);
    wmsa_cost(channels, heads, window, t, x, y, w);
    // temporal attention per branch
    temporal_attn_cost(channels, t, 1, w);
    temporal_attn_cost(channels, t, z, w);
    temporal_attn_cost(channels, t, x * y, w);
    // fusion and residual
    w.op(flops_broadcast_sum3(full), full);
    w.op(flops_add(full), full);
}

/// Whole aggregation module for a clip of `t` frames.
pub fn e4a_cost(e: &E4a, settings: &ObserverSettings, t: usize, w: &mut Walk) -> Result<()> {
    let (c, x, y, z) = (e.shape.c, e.shape.x, e.shape.y, e.shape.z);
    if e.levels == 0 {
        taf_cost(c, settings.window, settings.heads, settings.act, t, x, y, z, w);
        return Ok(());
    }
    let stride = if e.pyramid { 2 } else { 1 };
    let down = Conv {
        name: String::new(),
        dims: 3,
        cin: c,
        cout: c,
        k: 3,
        stride,
        pad: 1,
    };
    let up = Conv {
        name: String::new(),
        dims: 3,
        cin: c,
        cout: c,
        k: 3,
        stride: 1,
        pad: 1,
    };
    let mut sp = vec![x, y, z];
    let mut level_elems = Vec::new(); // pre-downsampling element counts
    for _ in 0..e.levels {
        level_elems.push((t * c * sp.iter().product::<usize>()) as u64);
        sp = conv_cost(&down, t, &sp, w)?;
        taf_cost(
            c,
            settings.window,
            settings.heads,
            settings.act,
            t,
            sp[0],
            sp[1],
            sp[2],
            w,
        );
    }
    for lvl in (0..e.levels).rev() {
        if e.pyramid {
            for s in sp.iter_mut() {
                *s *= 2;
            }
        }
        // upsample is free; the decoder conv runs at the upsampled extents
        let conv_in: Vec<usize> = sp.clone();
        let out = conv_cost(&up, t, &conv_in, w)?;
        debug_assert_eq!(out, sp);
        w.op(flops_add(level_elems[lvl]), level_elems[lvl]);
    }
    Ok(())
}

pub fn plane_cost(p: &PlaneAgg, t: usize, c: usize, x: usize, y: usize, z: usize, w: &mut Walk) -> Result<()> {
    let (folded, pa, pb) = match p.fold_axis {
        4 => (z, x, y),
        3 => (y, x, z),
        _ => (x, y, z),
    };
    let in_proj = Conv {
        name: String::new(),
        dims: 2,
        cin: c * folded,
        cout: p.width,
        k: 1,
        stride: 1,
        pad: 0,
    };
    let down = Conv {
        name: String::new(),
        dims: 2,
        cin: p.width,
        cout: p.width,
        k: 3,
        stride: 2,
        pad: 1,
    };
    let up = Conv {
        name: String::new(),
        dims: 2,
        cin: p.width,
        cout: p.width,
        k: 3,
        stride: 1,
        pad: 1,
    };
    let out_proj = Conv {
        name: String::new(),
        dims: 2,
        cin: p.width,
        cout: c * folded,
        k: 1,
        stride: 1,
        pad: 0,
    };
    let mut sp = conv_cost(&in_proj, t, &[pa, pb], w)?;
    let mut skip_elems = Vec::new();
    for _ in 0..p.levels() {
        skip_elems.push((t * p.width * sp.iter().product::<usize>()) as u64);
        sp = conv_cost(&down, t, &sp, w)?;
        let n = (t * p.width * sp.iter().product::<usize>()) as u64;
        w.op(flops_relu(n), n);
    }
    for lvl in (0..p.levels()).rev() {
        for s in sp.iter_mut() {
            *s *= 2;
        }
        conv_cost(&up, t, &sp, w)?;
        let n = (t * p.width * sp.iter().product::<usize>()) as u64;
        w.op(flops_relu(n), n);
        w.op(flops_add(skip_elems[lvl]), skip_elems[lvl]);
    }
    conv_cost(&out_proj, t, &sp, w)?;
    Ok(())
}

pub fn aggregator_cost(
    agg: &Aggregator,
    settings: &ObserverSettings,
    t: usize,
    c: usize,
    x: usize,
    y: usize,
    z: usize,
    w: &mut Walk,
) -> Result<()> {
    let full = (t * c * x * y * z) as u64;
    match agg {
        Aggregator::E4a(e) | Aggregator::Dense(e) => e4a_cost(e, settings, t, w)?,
        Aggregator::Bev(p) => {
            plane_cost(p, t, c, x, y, z, w)?;
            w.op(flops_add(full), full);
        }
        Aggregator::Tpv(planes) => {
            for p in planes {
                plane_cost(p, t, c, x, y, z, w)?;
                w.op(flops_add(full), full);
            }
        }
    }
    Ok(())
}

pub fn observer_cost(
    obs: &Observer,
    settings: &ObserverSettings,
    geom: &PipelineGeom,
    w: &mut Walk,
) -> Result<()> {
    let sp = conv_cost(&obs.reduce, geom.t_obs, &[geom.x, geom.y, geom.z], w)?;
    if let Some(agg) = &obs.aggregator {
        aggregator_cost(
            agg,
            settings,
            geom.t_obs,
            settings.channels,
            sp[0],
            sp[1],
            sp[2],
            w,
        )?;
    }
    Ok(())
}

pub fn forecaster_cost(fc: &Forecaster, geom: &PipelineGeom, channels: usize, act: Act, w: &mut Walk) {
    let vox = geom.voxels() as u64;
    let (t, c) = (geom.t_obs as u64, channels as u64);
    let fc_w = geom.t_fut as u64 * c;
    match fc {
        Forecaster::Conditional(_) => {
            w.op(flops_gap(t * c, vox), t * c);
            w.op(flops_linear(t, c, c), t * c);
            w.op(flops_norm_act(t, c, act), t * c);
            w.op(flops_linear(1, t * c, t * c * fc_w), t * c * fc_w);
            w.op(flops_matmul(fc_w, t * c, vox), fc_w * vox);
        }
        Forecaster::StaticLinear { .. } => {
            w.op(flops_linear(vox, t * c, fc_w), fc_w * vox);
        }
    }
}

pub fn head_cost(channels: usize, out: usize, frames: usize, geom: &PipelineGeom, w: &mut Walk) -> Result<()> {
    let conv1 = Conv {
        name: String::new(),
        dims: 3,
        cin: channels,
        cout: channels,
        k: 3,
        stride: 1,
        pad: 1,
    };
    let conv2 = Conv {
        name: String::new(),
        dims: 3,
        cin: channels,
        cout: out,
        k: 1,
        stride: 1,
        pad: 0,
    };
    let sp = conv_cost(&conv1, frames, &[geom.x, geom.y, geom.z], w)?;
    let n = (frames * channels * geom.voxels()) as u64;
    w.op(flops_relu(n), n);
    conv_cost(&conv2, frames, &sp, w)?;
    Ok(())
}

// ---- reports ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockCost {
    pub name: String,
    pub params: u64,
    pub flops: u64,
    pub peak_elems: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub blocks: Vec<BlockCost>,
    pub total_params: u64,
    pub total_flops: u64,
    pub peak_elems: u64,
}

impl CostReport {
    fn from_blocks(blocks: Vec<BlockCost>) -> CostReport {
        let total_params = blocks.iter().map(|b| b.params).sum();
        let total_flops = blocks.iter().map(|b| b.flops).sum();
        let peak_elems = blocks.iter().map(|b| b.peak_elems).max().unwrap_or(0);
        CostReport {
            blocks,
            total_params,
            total_flops,
            peak_elems,
        }
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<24} {:>12} {:>16} {:>14}\n",
            "block", "params", "flops", "peak elems"
        ));
        for b in &self.blocks {
            s.push_str(&format!(
                "{:<24} {:>12} {:>16} {:>14}\n",
                b.name, b.params, b.flops, b.peak_elems
            ));
        }
        s.push_str(&format!(
            "{:<24} {:>12} {:>16} {:>14}\n",
            "total", self.total_params, self.total_flops, self.peak_elems
        ));
        s
    }
}

/// Exact parameter counts grouped by the first two segments of the dotted
/// parameter path.
pub fn count_params<T: Element>(store: &ParamStore<T>) -> Vec<(String, u64)> {
    let mut groups: Vec<(String, u64)> = Vec::new();
    for (name, p) in store.iter() {
        let group = name
            .split('.')
            .take(2)
            .collect::<Vec<_>>()
            .join(".");
        match groups.iter_mut().find(|(g, _)| *g == group) {
            Some((_, n)) => *n += p.value.numel() as u64,
            None => groups.push((group, p.value.numel() as u64)),
        }
    }
    groups
}

fn params_with_prefix<T: Element>(store: &ParamStore<T>, prefix: &str) -> u64 {
    store
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .map(|(_, p)| p.value.numel() as u64)
        .sum()
}

/// Analytic cost of the whole model for its configured input shape.
pub fn model_cost<T: Element>(model: &Model, store: &ParamStore<T>) -> Result<CostReport> {
    let geom = &model.geom;
    let settings = &model.cfg.observer;
    let c = settings.channels;
    let mut blocks = Vec::new();

    let stack_blocks = |prefix: &str,
                            stack: &crate::model::Stack,
                            blocks: &mut Vec<BlockCost>|
     -> Result<()> {
        let mut w = Walk::default();
        w.seed((geom.t_obs * (geom.c_in + 6) * geom.voxels()) as u64);
        observer_cost(&stack.observer, settings, geom, &mut w)?;
        blocks.push(BlockCost {
            name: format!("{prefix}.observer"),
            params: params_with_prefix(store, &format!("{prefix}.observer.")),
            flops: w.flops,
            peak_elems: w.peak_elems,
        });
        let mut w = Walk::default();
        forecaster_cost(&stack.forecaster, geom, c, settings.act, &mut w);
        blocks.push(BlockCost {
            name: format!("{prefix}.forecaster"),
            params: params_with_prefix(store, &format!("{prefix}.forecaster.")),
            flops: w.flops,
            peak_elems: w.peak_elems,
        });
        if let Some(r) = &stack.refiner {
            let mut w = Walk::default();
            e4a_cost(&r.e4a, settings, geom.t_obs + geom.t_fut, &mut w)?;
            let shared = model.cfg.share_refiner_weights;
            blocks.push(BlockCost {
                name: format!("{prefix}.refiner"),
                params: if shared {
                    0 // weights are the observer's; counted there
                } else {
                    params_with_prefix(store, &format!("{prefix}.refiner."))
                },
                flops: w.flops,
                peak_elems: w.peak_elems,
            });
        }
        Ok(())
    };

    stack_blocks("occ", &model.occ_stack, &mut blocks)?;
    if let Some(fs) = &model.flow_stack {
        stack_blocks("flow", fs, &mut blocks)?;
    }

    let k = model.task.classes();
    let mut w = Walk::default();
    head_cost(c, k, geom.t_fut, geom, &mut w)?;
    head_cost(c, k, 1, geom, &mut w)?; // present-frame estimate
    blocks.push(BlockCost {
        name: "head.occ".to_string(),
        params: params_with_prefix(store, "head.occ."),
        flops: w.flops,
        peak_elems: w.peak_elems,
    });
    if model.flow_head.is_some() {
        let mut w = Walk::default();
        head_cost(c, 3, geom.t_fut, geom, &mut w)?;
        blocks.push(BlockCost {
            name: "head.flow".to_string(),
            params: params_with_prefix(store, "head.flow."),
            flops: w.flops,
            peak_elems: w.peak_elems,
        });
    }
    Ok(CostReport::from_blocks(blocks))
}

/// Side-by-side aggregator costs for all four representation styles at the
/// given geometry, plus the full default pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantComparison {
    pub variants: Vec<(String, CostReport)>,
    pub full_pipeline: CostReport,
}

pub fn compare_variants(
    base: &ModelConfig,
    geom: &PipelineGeom,
    task: TaskKind,
) -> Result<VariantComparison> {
    let mut variants = Vec::new();
    for variant in [Variant::E4a, Variant::Bev, Variant::Tpv, Variant::Dense] {
        let mut settings = base.observer.clone();
        settings.variant = variant;
        let mut store = ParamStore::<f32>::new();
        let shape = geom.grid_shape(settings.channels);
        let agg = Aggregator::register(
            &mut store,
            "agg",
            &settings,
            shape,
            geom.t_obs + geom.t_fut,
            0,
        )?;
        let mut w = Walk::default();
        w.seed((geom.t_obs * settings.channels * geom.voxels()) as u64);
        aggregator_cost(
            &agg,
            &settings,
            geom.t_obs,
            settings.channels,
            geom.x,
            geom.y,
            geom.z,
            &mut w,
        )?;
        let report = CostReport::from_blocks(vec![BlockCost {
            name: format!("{variant:?}").to_lowercase(),
            params: store.total_elements(),
            flops: w.flops,
            peak_elems: w.peak_elems,
        }]);
        variants.push((format!("{variant:?}").to_lowercase(), report));
    }
    let mut store = ParamStore::<f32>::new();
    let model = Model::build(
        &mut store,
        base,
        geom,
        task,
        crate::model::Ablation::None,
        0,
    )?;
    let full_pipeline = model_cost(&model, &store)?;
    Ok(VariantComparison {
        variants,
        full_pipeline,
    })
}
