//! Refinement of forecasted future states by spatio-temporal interaction
//! over the concatenated past and future frames.

use crate::error::{Error, Result};
use crate::layers::E4a;
use crate::tensor::tape::{Session, Var};
use crate::tensor::Element;

/// Runs the aggregation architecture over `[o_obs, f_future]` along time and
/// slices out the refined future frames. At zero initialization of the
/// aggregator's terminal convolutions this is exactly the identity on
/// `f_future`.
#[derive(Debug, Clone)]
pub struct Refiner {
    pub e4a: E4a,
    pub t_obs: usize,
    pub t_fut: usize,
}

impl Refiner {
    pub fn new(e4a: E4a, t_obs: usize, t_fut: usize) -> Refiner {
        Refiner { e4a, t_obs, t_fut }
    }

    /// `o_obs (t, c, x, y, z)`, `f_future (t_fut, c, x, y, z)` ->
    /// `(t_fut, c, x, y, z)`.
    pub fn refine<T: Element>(
        &self,
        s: &mut Session<'_, T>,
        o_obs: Var,
        f_future: Var,
    ) -> Result<Var> {
        let so = s.shape(o_obs).to_vec();
        let sf = s.shape(f_future).to_vec();
        if so.len() != 5 || sf.len() != 5 || so[1..] != sf[1..] {
            return Err(Error::shape(format!(
                "refine: observation {:?} vs future {:?}",
                so, sf
            )));
        }
        if so[0] != self.t_obs || sf[0] != self.t_fut {
            return Err(Error::shape(format!(
                "refine: got {} + {} frames, built for {} + {}",
                so[0], sf[0], self.t_obs, self.t_fut
            )));
        }
        let cat = s.concat(&[o_obs, f_future], 0)?;
        let refined = self.e4a.apply(s, cat)?;
        s.slice_axis(refined, 0, self.t_obs, self.t_fut)
    }
}
