//! The observer: channel reduction of the motion-aware feature followed by a
//! spatio-temporal aggregator, producing the spacetime-aware representation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layers::{Conv, E4a, GridShape, PlaneAgg, Variant};
use crate::tensor::ops::Act;
use crate::tensor::params::ParamStore;
use crate::tensor::tape::{Session, Var};
use crate::tensor::Element;

/// Architectural settings shared by all observer variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverSettings {
    pub variant: Variant,
    /// Downsampling stages.
    pub levels: usize,
    /// Working channel count C.
    pub channels: usize,
    pub window: usize,
    pub heads: usize,
    /// Kernel edge of the channel-reduction convolution.
    pub reduce_kernel: usize,
    /// Plane-encoder width for the BEV/TPV variants; 0 means channels * z.
    pub plane_width: usize,
    pub act: Act,
}

impl Default for ObserverSettings {
    fn default() -> ObserverSettings {
        ObserverSettings {
            variant: Variant::E4a,
            levels: 2,
            channels: 8,
            window: 4,
            heads: 2,
            reduce_kernel: 3,
            plane_width: 0,
            act: Act::Relu,
        }
    }
}

/// One of the four representation styles behind a common shape contract.
#[derive(Debug, Clone)]
pub enum Aggregator {
    E4a(E4a),
    Dense(E4a),
    Bev(PlaneAgg),
    Tpv(Vec<PlaneAgg>),
}

impl Aggregator {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        settings: &ObserverSettings,
        shape: GridShape,
        max_t: usize,
        root: u64,
    ) -> Result<Aggregator> {
        let width = if settings.plane_width == 0 {
            settings.channels * shape.z
        } else {
            settings.plane_width
        };
        match settings.variant {
            Variant::E4a => Ok(Aggregator::E4a(E4a::register(
                store,
                name,
                shape,
                settings.levels,
                settings.window,
                settings.heads,
                max_t,
                settings.act,
                true,
                root,
            )?)),
            Variant::Dense => Ok(Aggregator::Dense(E4a::register(
                store,
                name,
                shape,
                settings.levels,
                settings.window,
                settings.heads,
                max_t,
                settings.act,
                false,
                root,
            )?)),
            Variant::Bev => Ok(Aggregator::Bev(PlaneAgg::register(
                store,
                &format!("{name}.bev"),
                shape,
                4,
                settings.levels,
                width,
                root,
            )?)),
            Variant::Tpv => {
                let planes = vec![
                    PlaneAgg::register(
                        store,
                        &format!("{name}.xy"),
                        shape,
                        4,
                        settings.levels,
                        width,
                        root,
                    )?,
                    PlaneAgg::register(
                        store,
                        &format!("{name}.xz"),
                        shape,
                        3,
                        settings.levels,
                        width,
                        root,
                    )?,
                    PlaneAgg::register(
                        store,
                        &format!("{name}.yz"),
                        shape,
                        2,
                        settings.levels,
                        width,
                        root,
                    )?,
                ];
                Ok(Aggregator::Tpv(planes))
            }
        }
    }

    /// Shape-preserving aggregation with a global residual.
    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        match self {
            Aggregator::E4a(e) | Aggregator::Dense(e) => e.apply(s, x),
            Aggregator::Bev(p) => {
                let branch = p.apply_branch(s, x)?;
                s.add(x, branch)
            }
            Aggregator::Tpv(planes) => {
                let mut acc = x;
                for p in planes {
                    let branch = p.apply_branch(s, x)?;
                    acc = s.add(acc, branch)?;
                }
                Ok(acc)
            }
        }
    }
}

/// Channel reduction plus aggregation. With `aggregator = None` (ablation)
/// the observer degenerates to the channel reduction alone.
#[derive(Debug, Clone)]
pub struct Observer {
    pub reduce: Conv,
    pub aggregator: Option<Aggregator>,
}

impl Observer {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        prefix: &str,
        settings: &ObserverSettings,
        c_in: usize,
        shape: GridShape,
        max_t: usize,
        with_aggregator: bool,
        root: u64,
    ) -> Result<Observer> {
        let k = settings.reduce_kernel;
        let reduce = Conv::register(
            store,
            &format!("{prefix}.reduce"),
            3,
            c_in + 6,
            settings.channels,
            k,
            1,
            (k - 1) / 2,
            1.0,
            root,
        )?;
        let aggregator = if with_aggregator {
            Some(Aggregator::register(
                store,
                &format!("{prefix}.agg"),
                settings,
                shape,
                max_t,
                root,
            )?)
        } else {
            None
        };
        Ok(Observer { reduce, aggregator })
    }

    /// Motion-aware input `(t, c_in + 6, x, y, z)` -> `(t, c, x, y, z)`.
    pub fn observe<T: Element>(&self, s: &mut Session<'_, T>, f_motion: Var) -> Result<Var> {
        let reduced = self.reduce.apply(s, f_motion)?;
        match &self.aggregator {
            Some(agg) => agg.apply(s, reduced),
            None => Ok(reduced),
        }
    }
}
