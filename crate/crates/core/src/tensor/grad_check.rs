//! Central-difference gradient verification (64-bit only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::params::ParamStore;
use crate::tensor::tape::{Session, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOpts {
    pub eps: f64,
    /// Cap on the number of coordinates probed per tensor; `None` checks all.
    /// Probed coordinates are drawn deterministically from `seed`.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOpts {
    fn default() -> Self {
        GradCheckOpts {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

fn probe_coords(numel: usize, opts: &GradCheckOpts, salt: u64) -> Vec<usize> {
    match opts.max_coords {
        Some(cap) if cap < numel => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ salt.wrapping_mul(0x9e37_79b9));
            let mut picked = sample(&mut rng, numel, cap).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..numel).collect(),
    }
}

fn perturbed(t: &Tensor<f64>, idx: usize, delta: f64) -> Tensor<f64> {
    let mut out = t.clone();
    out.data_mut()[idx] += delta;
    out
}

/// Compares the analytic gradient of a scalar-valued closure against central
/// finite differences, over every input tensor and every parameter the
/// closure touches. Returns the max relative error
/// `|analytic - fd| / max(1, |fd|)`.
pub fn grad_check<F>(
    params: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    opts: &GradCheckOpts,
    f: F,
) -> Result<f64>
where
    F: Fn(&mut Session<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>, ins: &[Tensor<f64>]| -> Result<f64> {
        let mut sess = Session::new(store);
        let vars: Vec<Var> = ins.iter().map(|t| sess.input(t.clone())).collect();
        let root = f(&mut sess, &vars)?;
        if sess.value(root).numel() != 1 {
            return Err(Error::shape(
                "grad_check closure must return a scalar".to_string(),
            ));
        }
        Ok(sess.value(root).data()[0])
    };

    // Analytic pass.
    let mut sess = Session::new(params);
    let vars: Vec<Var> = inputs.iter().map(|t| sess.input(t.clone())).collect();
    let root = f(&mut sess, &vars)?;
    if sess.value(root).numel() != 1 {
        return Err(Error::shape(
            "grad_check closure must return a scalar".to_string(),
        ));
    }
    let grads = sess.backward(root)?;

    let mut max_err = 0.0f64;
    let mut record = |analytic: f64, fd: f64| {
        let err = (analytic - fd).abs() / f64::max(1.0, fd.abs());
        if err > max_err {
            max_err = err;
        }
    };

    // Inputs.
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(t.shape()));
        for idx in probe_coords(t.numel(), opts, i as u64 + 1) {
            let mut plus = inputs.to_vec();
            plus[i] = perturbed(t, idx, opts.eps);
            let mut minus = inputs.to_vec();
            minus[i] = perturbed(t, idx, -opts.eps);
            let fd = (eval(params, &plus)? - eval(params, &minus)?) / (2.0 * opts.eps);
            record(analytic.data()[idx], fd);
        }
    }

    // Parameters touched by the closure.
    let touched: Vec<String> = grads.params().map(|(n, _)| n.clone()).collect();
    for (pi, name) in touched.iter().enumerate() {
        let base = params.value(name)?.clone();
        let analytic = grads
            .param(name)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(base.shape()));
        for idx in probe_coords(base.numel(), opts, 0x5eed + pi as u64) {
            let mut store = params.clone();
            store.set_value(name, perturbed(&base, idx, opts.eps))?;
            let fp = eval(&store, inputs)?;
            store.set_value(name, perturbed(&base, idx, -opts.eps))?;
            let fm = eval(&store, inputs)?;
            let fd = (fp - fm) / (2.0 * opts.eps);
            record(analytic.data()[idx], fd);
        }
    }

    Ok(max_err)
}
