//! Full pipeline assembly: per-branch observer/forecaster/refiner stacks
//! plus decoding heads, with the ablations used by the component study.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::Forecaster;
use crate::layers::{E4a, GridShape, Variant};
use crate::observer::{Aggregator, Observer, ObserverSettings};
use crate::predictor::{Head, TaskKind};
use crate::refiner::Refiner;
use crate::scene::WorldConfig;
use crate::tensor::params::ParamStore;
use crate::tensor::tape::{Session, Var};
use crate::tensor::Element;

/// Which component(s) to strip for the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Aggregator replaced by an identity pass-through.
    Observer,
    /// Conditional forecaster replaced by a single linear layer.
    Forecaster,
    /// Refiner removed.
    Refiner,
    /// All three; only the single linear layer predicts future states.
    All,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Ablation> {
        match s {
            "none" => Ok(Ablation::None),
            "observer" => Ok(Ablation::Observer),
            "forecaster" => Ok(Ablation::Forecaster),
            "refiner" => Ok(Ablation::Refiner),
            "all" => Ok(Ablation::All),
            other => Err(Error::config(format!("unknown ablation `{other}`"))),
        }
    }

    fn with_aggregator(&self) -> bool {
        !matches!(self, Ablation::Observer | Ablation::All)
    }

    fn conditional_forecaster(&self) -> bool {
        !matches!(self, Ablation::Forecaster | Ablation::All)
    }

    fn with_refiner(&self) -> bool {
        !matches!(self, Ablation::Refiner | Ablation::All)
    }
}

/// Architecture settings beyond the observer block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub observer: ObserverSettings,
    /// Two independent stacks (occupancy + flow) instead of one shared.
    pub dual_pipeline: bool,
    /// Refiner reuses the observer's aggregation weights.
    pub share_refiner_weights: bool,
    /// Init scale of the weight-generating layer; small values make initial
    /// forecasts near zero.
    pub hyper_init_scale: f64,
    /// Smooth-L1 weight on the flow branch; 0 disables flow entirely.
    pub flow_weight: f64,
    /// Occupancy cross-entropy class weights (free, gmo[, gso]).
    pub class_weights: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            observer: ObserverSettings::default(),
            dual_pipeline: true,
            share_refiner_weights: false,
            hyper_init_scale: 0.01,
            flow_weight: 1.0,
            class_weights: vec![1.0, 5.0, 2.0],
        }
    }
}

impl ModelConfig {
    pub fn flow_enabled(&self) -> bool {
        self.flow_weight > 0.0
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        if self.dual_pipeline && !self.flow_enabled() {
            return Err(Error::config(
                "dual_pipeline requires a positive flow_weight",
            ));
        }
        if self.share_refiner_weights && !matches!(self.observer.variant, Variant::E4a) {
            return Err(Error::config(
                "share_refiner_weights requires the e4a observer variant",
            ));
        }
        if self.class_weights.len() < task.classes() {
            return Err(Error::config(format!(
                "{} class weights for {} classes",
                self.class_weights.len(),
                task.classes()
            )));
        }
        if self.observer.heads == 0 || self.observer.channels % self.observer.heads != 0 {
            return Err(Error::config(
                "channels must be divisible by attention heads",
            ));
        }
        Ok(())
    }

    pub fn task_class_weights(&self, task: TaskKind) -> Vec<f64> {
        self.class_weights[..task.classes()].to_vec()
    }
}

/// Input geometry of one pipeline.
#[derive(Debug, Clone, Copy)]
pub struct PipelineGeom {
    pub t_obs: usize,
    pub t_fut: usize,
    pub c_in: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl PipelineGeom {
    pub fn from_world(w: &WorldConfig) -> PipelineGeom {
        PipelineGeom {
            t_obs: w.t_obs,
            t_fut: w.t_future,
            c_in: w.c_in,
            x: w.grid.extents.0,
            y: w.grid.extents.1,
            z: w.grid.extents.2,
        }
    }

    pub fn grid_shape(&self, channels: usize) -> GridShape {
        GridShape {
            t: self.t_obs,
            c: channels,
            x: self.x,
            y: self.y,
            z: self.z,
        }
    }

    pub fn voxels(&self) -> usize {
        self.x * self.y * self.z
    }
}

/// One observer/forecaster/refiner branch.
#[derive(Debug, Clone)]
pub struct Stack {
    pub observer: Observer,
    pub forecaster: Forecaster,
    pub refiner: Option<Refiner>,
}

impl Stack {
    fn register<T: Element>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cfg: &ModelConfig,
        geom: &PipelineGeom,
        ablation: Ablation,
        root: u64,
    ) -> Result<Stack> {
        let settings = &cfg.observer;
        let shape = geom.grid_shape(settings.channels);
        let max_t = geom.t_obs + geom.t_fut;
        let observer = Observer::register(
            store,
            &format!("{prefix}.observer"),
            settings,
            geom.c_in,
            shape,
            max_t,
            ablation.with_aggregator(),
            root,
        )?;
        let forecaster = Forecaster::register(
            store,
            &format!("{prefix}.forecaster"),
            geom.t_obs,
            geom.t_fut,
            settings.channels,
            settings.act,
            cfg.hyper_init_scale,
            ablation.conditional_forecaster(),
            root,
        )?;
        let refiner = if ablation.with_refiner() {
            let e4a = if cfg.share_refiner_weights {
                match &observer.aggregator {
                    Some(Aggregator::E4a(e)) => e.clone(),
                    _ => {
                        return Err(Error::config(
                            "share_refiner_weights needs an e4a aggregator",
                        ))
                    }
                }
            } else {
                E4a::register(
                    store,
                    &format!("{prefix}.refiner"),
                    shape,
                    settings.levels,
                    settings.window,
                    settings.heads,
                    max_t,
                    settings.act,
                    true,
                    root,
                )?
            };
            Some(Refiner::new(e4a, geom.t_obs, geom.t_fut))
        } else {
            None
        };
        Ok(Stack {
            observer,
            forecaster,
            refiner,
        })
    }

    /// Returns `(o_obs, refined_future)`.
    pub fn forward<T: Element>(
        &self,
        s: &mut Session<'_, T>,
        f_motion: Var,
    ) -> Result<(Var, Var)> {
        let o_obs = self.observer.observe(s, f_motion)?;
        let f_future = self.forecaster.forecast(s, o_obs)?;
        let v = match &self.refiner {
            Some(r) => r.refine(s, o_obs, f_future)?,
            None => f_future,
        };
        Ok((o_obs, v))
    }
}

/// The complete forecasting model for one task.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub geom: PipelineGeom,
    pub task: TaskKind,
    pub ablation: Ablation,
    pub occ_stack: Stack,
    pub flow_stack: Option<Stack>,
    pub occ_head: Head,
    pub flow_head: Option<Head>,
}

/// Tape nodes produced by one forward pass.
pub struct ForwardOut {
    /// `(t_fut, k, x, y, z)`
    pub occ_logits: Var,
    /// `(1, k, x, y, z)` from the occupancy head on the last observed frame.
    pub current_logits: Var,
    /// `(t_fut, 3, x, y, z)` when the flow branch is enabled.
    pub flow: Option<Var>,
    /// Observer output of the occupancy branch.
    pub o_obs: Var,
    /// Refined future of the occupancy branch.
    pub refined: Var,
}

impl Model {
    pub fn build<T: Element>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        geom: &PipelineGeom,
        task: TaskKind,
        ablation: Ablation,
        root: u64,
    ) -> Result<Model> {
        cfg.validate(task)?;
        let occ_stack = Stack::register(store, "occ", cfg, geom, ablation, root)?;
        let flow_stack = if cfg.dual_pipeline && cfg.flow_enabled() {
            Some(Stack::register(store, "flow", cfg, geom, ablation, root)?)
        } else {
            None
        };
        let occ_head = Head::register(
            store,
            "head.occ",
            cfg.observer.channels,
            task.classes(),
            root,
        )?;
        let flow_head = if cfg.flow_enabled() {
            Some(Head::register(
                store,
                "head.flow",
                cfg.observer.channels,
                3,
                root,
            )?)
        } else {
            None
        };
        Ok(Model {
            cfg: cfg.clone(),
            geom: *geom,
            task,
            ablation,
            occ_stack,
            flow_stack,
            occ_head,
            flow_head,
        })
    }

    /// `f_motion: (t_obs, c_in + 6, x, y, z)`.
    pub fn forward<T: Element>(&self, s: &mut Session<'_, T>, f_motion: Var) -> Result<ForwardOut> {
        let (o_obs, refined) = self.occ_stack.forward(s, f_motion)?;
        let occ_logits = self.occ_head.apply(s, refined)?;
        let last = s.slice_axis(o_obs, 0, self.geom.t_obs - 1, 1)?;
        let current_logits = self.occ_head.apply(s, last)?;
        let flow = match (&self.flow_head, &self.flow_stack) {
            (Some(head), Some(stack)) => {
                let (_, v_flow) = stack.forward(s, f_motion)?;
                Some(head.apply(s, v_flow)?)
            }
            (Some(head), None) => Some(head.apply(s, refined)?),
            (None, _) => None,
        };
        Ok(ForwardOut {
            occ_logits,
            current_logits,
            flow,
            o_obs,
            refined,
        })
    }
}
