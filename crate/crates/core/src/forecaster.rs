//! Preliminary future-state prediction.
//!
//! The conditional forecaster pools the observation into a global condition
//! vector, generates a per-scene weight matrix from it, and applies that
//! matrix voxel-wise to the time-collapsed observation. The static variant
//! (ablation) replaces the whole mechanism with one fixed linear layer.

use crate::error::{Error, Result};
use crate::layers::{Linear, NormAct};
use crate::tensor::ops::Act;
use crate::tensor::params::ParamStore;
use crate::tensor::tape::{Session, Var};
use crate::tensor::Element;

#[derive(Debug, Clone)]
pub struct ConditionalForecaster {
    pub t_obs: usize,
    pub t_fut: usize,
    pub channels: usize,
    cond_lin: Linear,
    cond_norm: NormAct,
    hyper: Linear,
}

#[derive(Debug, Clone)]
pub enum Forecaster {
    Conditional(ConditionalForecaster),
    /// One fixed per-voxel linear map from observed to future channels.
    StaticLinear {
        t_obs: usize,
        t_fut: usize,
        channels: usize,
        lin: Linear,
    },
}

impl ConditionalForecaster {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        prefix: &str,
        t_obs: usize,
        t_fut: usize,
        channels: usize,
        act: Act,
        hyper_scale: f64,
        root: u64,
    ) -> Result<ConditionalForecaster> {
        let cond_lin = Linear::register(
            store,
            &format!("{prefix}.cond.linear"),
            channels,
            channels,
            1.0,
            root,
        )?;
        let cond_norm = NormAct::register(store, &format!("{prefix}.cond.norm"), channels, act)?;
        let tc = t_obs * channels;
        let hyper = Linear::register(
            store,
            &format!("{prefix}.hyper"),
            tc,
            tc * t_fut * channels,
            hyper_scale,
            root,
        )?;
        Ok(ConditionalForecaster {
            t_obs,
            t_fut,
            channels,
            cond_lin,
            cond_norm,
            hyper,
        })
    }

    /// Global pooling, frame-shared linear, norm+act, then time-into-channel
    /// collapse: `(t, c, x, y, z)` -> `(t*c,)`.
    pub fn condition<T: Element>(&self, s: &mut Session<'_, T>, o_obs: Var) -> Result<Var> {
        let shape = s.shape(o_obs).to_vec();
        let (t, c) = (shape[0], shape[1]);
        if t != self.t_obs || c != self.channels {
            return Err(Error::shape(format!(
                "condition: want ({}, {}, ...), got {:?}",
                self.t_obs, self.channels, shape
            )));
        }
        let pooled = s.gap(o_obs, &[2, 3, 4])?;
        let pooled = s.reshape(pooled, &[t, c])?;
        let lin = self.cond_lin.apply(s, pooled)?;
        let normed = self.cond_norm.apply(s, lin)?;
        s.reshape(normed, &[t * c])
    }

    /// Condition `(t*c,)` -> adaptive weights `(t*c, t_fut*c)`.
    pub fn adaptive_weights<T: Element>(&self, s: &mut Session<'_, T>, cond: Var) -> Result<Var> {
        let tc = self.t_obs * self.channels;
        let fc = self.t_fut * self.channels;
        if s.shape(cond) != [tc] {
            return Err(Error::shape(format!(
                "adaptive_weights: want ({tc},), got {:?}",
                s.shape(cond)
            )));
        }
        let row = s.reshape(cond, &[1, tc])?;
        let flat = self.hyper.apply(s, row)?;
        s.reshape(flat, &[tc, fc])
    }

    /// Applies the weights voxel-wise (no bias): every voxel's future
    /// channels are `w^T` times its observed channels.
    /// `o_obs (t, c, x, y, z)`, `w (t*c, t_fut*c)` -> `(t_fut, c, x, y, z)`.
    pub fn forecast<T: Element>(&self, s: &mut Session<'_, T>, o_obs: Var, w: Var) -> Result<Var> {
        let shape = s.shape(o_obs).to_vec();
        let tc = self.t_obs * self.channels;
        let fc = self.t_fut * self.channels;
        if s.shape(w) != [tc, fc] {
            return Err(Error::shape(format!(
                "forecast: weights {:?}, want ({tc}, {fc})",
                s.shape(w)
            )));
        }
        let vox = shape[2] * shape[3] * shape[4];
        let flat = s.reshape(o_obs, &[tc, vox])?;
        let wt = s.permute(w, &[1, 0])?;
        let out = s.matmul(wt, flat)?;
        s.reshape(out, &[self.t_fut, self.channels, shape[2], shape[3], shape[4]])
    }
}

impl Forecaster {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        prefix: &str,
        t_obs: usize,
        t_fut: usize,
        channels: usize,
        act: Act,
        hyper_scale: f64,
        conditional: bool,
        root: u64,
    ) -> Result<Forecaster> {
        if conditional {
            Ok(Forecaster::Conditional(ConditionalForecaster::register(
                store,
                prefix,
                t_obs,
                t_fut,
                channels,
                act,
                hyper_scale,
                root,
            )?))
        } else {
            let lin = Linear::register(
                store,
                &format!("{prefix}.static"),
                t_obs * channels,
                t_fut * channels,
                1.0,
                root,
            )?;
            Ok(Forecaster::StaticLinear {
                t_obs,
                t_fut,
                channels,
                lin,
            })
        }
    }

    /// `(t, c, x, y, z)` -> `(t_fut, c, x, y, z)`.
    pub fn forecast<T: Element>(&self, s: &mut Session<'_, T>, o_obs: Var) -> Result<Var> {
        match self {
            Forecaster::Conditional(f) => {
                let cond = f.condition(s, o_obs)?;
                let w = f.adaptive_weights(s, cond)?;
                f.forecast(s, o_obs, w)
            }
            Forecaster::StaticLinear {
                t_obs,
                t_fut,
                channels,
                lin,
            } => {
                let shape = s.shape(o_obs).to_vec();
                if shape[0] != *t_obs || shape[1] != *channels {
                    return Err(Error::shape(format!(
                        "static forecast: want ({t_obs}, {channels}, ...), got {:?}",
                        shape
                    )));
                }
                let tc = t_obs * channels;
                let vox = shape[2] * shape[3] * shape[4];
                let flat = s.reshape(o_obs, &[tc, vox])?;
                let cols = s.permute(flat, &[1, 0])?; // (vox, tc)
                let out = lin.apply(s, cols)?; // (vox, t_fut*c)
                let out = s.permute(out, &[1, 0])?;
                s.reshape(out, &[*t_fut, *channels, shape[2], shape[3], shape[4]])
            }
        }
    }
}
