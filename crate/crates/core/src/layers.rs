//! Parameterized building blocks: thin wrappers that register named tensors
//! in a [`ParamStore`] and apply the corresponding tape ops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::Act;
use crate::tensor::params::{derive_seed, Init, ParamStore};
use crate::tensor::tape::{Session, Var};
use crate::tensor::Element;

fn register_pair<T: Element>(
    store: &mut ParamStore<T>,
    name: &str,
    w_shape: &[usize],
    b_len: usize,
    fan_in: usize,
    scale: f64,
    root: u64,
) -> Result<()> {
    let (w_init, b_init) = if scale == 0.0 {
        (Init::Zero, Init::Zero)
    } else {
        (
            Init::FanInUniform { fan_in, scale },
            Init::FanInUniform { fan_in, scale },
        )
    };
    let wname = format!("{name}.weight");
    let bname = format!("{name}.bias");
    store.register(&wname, w_shape, w_init, derive_seed(root, &wname))?;
    store.register(&bname, &[b_len], b_init, derive_seed(root, &bname))?;
    Ok(())
}

/// Affine layer over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub in_w: usize,
    pub out_w: usize,
}

impl Linear {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        in_w: usize,
        out_w: usize,
        scale: f64,
        root: u64,
    ) -> Result<Linear> {
        register_pair(store, name, &[in_w, out_w], out_w, in_w, scale, root)?;
        Ok(Linear {
            name: name.to_string(),
            in_w,
            out_w,
        })
    }

    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(&format!("{}.weight", self.name))?;
        let b = s.param(&format!("{}.bias", self.name))?;
        s.linear(x, w, b)
    }
}

/// Convolution over the trailing `dims` spatial axes (cubic kernel).
#[derive(Debug, Clone)]
pub struct Conv {
    pub name: String,
    pub dims: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: usize,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        scale: f64,
        root: u64,
    ) -> Result<Conv> {
        let mut w_shape = vec![cout, cin];
        w_shape.extend(std::iter::repeat_n(k, dims));
        let fan = cin * k.pow(dims as u32);
        register_pair(store, name, &w_shape, cout, fan, scale, root)?;
        Ok(Conv {
            name: name.to_string(),
            dims,
            cin,
            cout,
            k,
            stride,
            pad,
        })
    }

    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(&format!("{}.weight", self.name))?;
        let b = s.param(&format!("{}.bias", self.name))?;
        s.conv(x, w, b, self.dims, self.stride, self.pad)
    }

    pub fn kernel_total(&self) -> usize {
        self.k.pow(self.dims as u32)
    }
}

/// Channel normalization plus activation with learned scale/shift.
#[derive(Debug, Clone)]
pub struct NormAct {
    pub name: String,
    pub c: usize,
    pub act: Act,
}

impl NormAct {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        c: usize,
        act: Act,
    ) -> Result<NormAct> {
        let gname = format!("{name}.gamma");
        let bname = format!("{name}.beta");
        store.register(&gname, &[c], Init::Constant(1.0), 0)?;
        store.register(&bname, &[c], Init::Zero, 0)?;
        Ok(NormAct {
            name: name.to_string(),
            c,
            act,
        })
    }

    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let g = s.param(&format!("{}.gamma", self.name))?;
        let b = s.param(&format!("{}.beta", self.name))?;
        s.layer_norm_act(x, g, b, self.act)
    }
}

/// Window-partitioned multi-head self-attention over a 2-D plane, with
/// query/key/value and output projections. Non-overlapping windows, no
/// shifted variant, no positional bias inside a window.
#[derive(Debug, Clone)]
pub struct Wmsa {
    pub name: String,
    pub channels: usize,
    pub heads: usize,
    pub window: usize,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl Wmsa {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        heads: usize,
        window: usize,
        root: u64,
    ) -> Result<Wmsa> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::config(format!(
                "wmsa `{name}`: channels {channels} not divisible by heads {heads}"
            )));
        }
        if window == 0 {
            return Err(Error::config(format!("wmsa `{name}`: window must be >= 1")));
        }
        let q = Linear::register(store, &format!("{name}.q"), channels, channels, 1.0, root)?;
        let k = Linear::register(store, &format!("{name}.k"), channels, channels, 1.0, root)?;
        let v = Linear::register(store, &format!("{name}.v"), channels, channels, 1.0, root)?;
        let out = Linear::register(store, &format!("{name}.out"), channels, channels, 1.0, root)?;
        Ok(Wmsa {
            name: name.to_string(),
            channels,
            heads,
            window,
            q,
            k,
            v,
            out,
        })
    }

    /// `x: (frames, channels, px, py)` -> same shape.
    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let shape = s.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::shape(format!(
                "wmsa: want (t, {}, px, py), got {:?}",
                self.channels, shape
            )));
        }
        let (t, c, px, py) = (shape[0], shape[1], shape[2], shape[3]);
        let w = self.window;
        if px % w != 0 || py % w != 0 {
            return Err(Error::config(format!(
                "wmsa: window {w} does not divide plane {px}x{py}"
            )));
        }
        let (nwx, nwy) = (px / w, py / w);
        let groups = t * nwx * nwy;
        let n = w * w;
        let h = self.heads;
        let dh = c / h;

        let xt = s.permute(x, &[0, 2, 3, 1])?; // (t, px, py, c)
        let xt = s.reshape(xt, &[t, nwx, w, nwy, w, c])?;
        let xt = s.permute(xt, &[0, 1, 3, 2, 4, 5])?; // (t, nwx, nwy, w, w, c)
        let tokens = s.reshape(xt, &[groups, n, c])?;

        let split = |s: &mut Session<'_, T>, v: Var| -> Result<Var> {
            let v = s.reshape(v, &[groups, n, h, dh])?;
            let v = s.permute(v, &[0, 2, 1, 3])?; // (groups, h, n, dh)
            s.reshape(v, &[groups * h, n, dh])
        };
        let q = self.q.apply(s, tokens)?;
        let k = self.k.apply(s, tokens)?;
        let v = self.v.apply(s, tokens)?;
        let (qh, kh, vh) = (split(s, q)?, split(s, k)?, split(s, v)?);
        let att = s.sdpa(qh, kh, vh)?;
        let att = s.reshape(att, &[groups, h, n, dh])?;
        let att = s.permute(att, &[0, 2, 1, 3])?;
        let att = s.reshape(att, &[groups, n, c])?;
        let out = self.out.apply(s, att)?;

        let out = s.reshape(out, &[t, nwx, nwy, w, w, c])?;
        let out = s.permute(out, &[0, 1, 3, 2, 4, 5])?; // (t, nwx, w, nwy, w, c)
        let out = s.reshape(out, &[t, px, py, c])?;
        s.permute(out, &[0, 3, 1, 2])
    }
}

/// Single-head self-attention along the time axis, applied independently at
/// every trailing spatial position, with learned additive temporal
/// embeddings. Supports any sequence length up to `max_len`.
#[derive(Debug, Clone)]
pub struct TemporalAttn {
    pub name: String,
    pub channels: usize,
    pub max_len: usize,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl TemporalAttn {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        max_len: usize,
        zero_out: bool,
        root: u64,
    ) -> Result<TemporalAttn> {
        let ename = format!("{name}.embed");
        store.register(&ename, &[max_len, channels], Init::Zero, 0)?;
        let q = Linear::register(store, &format!("{name}.q"), channels, channels, 1.0, root)?;
        let k = Linear::register(store, &format!("{name}.k"), channels, channels, 1.0, root)?;
        let v = Linear::register(store, &format!("{name}.v"), channels, channels, 1.0, root)?;
        let out_scale = if zero_out { 0.0 } else { 1.0 };
        let out = Linear::register(
            store,
            &format!("{name}.out"),
            channels,
            channels,
            out_scale,
            root,
        )?;
        Ok(TemporalAttn {
            name: name.to_string(),
            channels,
            max_len,
            q,
            k,
            v,
            out,
        })
    }

    /// `x: (frames, channels, spatial...)` -> same shape.
    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let shape = s.shape(x).to_vec();
        if shape.len() < 2 || shape[1] != self.channels {
            return Err(Error::shape(format!(
                "temporal attention: want (t, {}, ...), got {:?}",
                self.channels, shape
            )));
        }
        let t = shape[0];
        if t > self.max_len {
            return Err(Error::config(format!(
                "temporal attention `{}`: sequence length {t} exceeds embedding table {}",
                self.name, self.max_len
            )));
        }
        let c = self.channels;
        let spatial: usize = shape[2..].iter().product();

        let xr = s.reshape(x, &[t, c, spatial])?;
        let xr = s.permute(xr, &[2, 0, 1])?; // (spatial, t, c)
        let table = s.param(&format!("{}.embed", self.name))?;
        let table = s.slice_axis(table, 0, 0, t)?;
        let xe = s.embed_add(xr, table)?;
        let q = self.q.apply(s, xe)?;
        let k = self.k.apply(s, xe)?;
        let v = self.v.apply(s, xe)?;
        let att = s.sdpa(q, k, v)?;
        let out = self.out.apply(s, att)?;
        let out = s.permute(out, &[1, 2, 0])?; // (t, c, spatial)
        s.reshape(out, &shape)
    }
}

/// The three pooled branches of one downsampled level.
pub struct TriplingOut {
    /// `(t, c, 1, 1, 1)`
    pub scene: Var,
    /// `(t, c, 1, 1, z)`
    pub height: Var,
    /// `(t, c, x, y, 1)`
    pub bev: Var,
}

/// Three-branch decomposition (scene / height / bird's-eye-view) with
/// per-branch temporal attention and broadcast fusion.
#[derive(Debug, Clone)]
pub struct Taf {
    pub name: String,
    pub channels: usize,
    scene_lin: Linear,
    scene_norm: NormAct,
    height_conv: Conv,
    height_norm: NormAct,
    bev_attn: Wmsa,
    ta_scene: TemporalAttn,
    ta_height: TemporalAttn,
    ta_bev: TemporalAttn,
}

impl Taf {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        window: usize,
        heads: usize,
        max_t: usize,
        act: Act,
        root: u64,
    ) -> Result<Taf> {
        let scene_lin =
            Linear::register(store, &format!("{name}.scene.linear"), channels, channels, 1.0, root)?;
        let scene_norm = NormAct::register(store, &format!("{name}.scene.norm"), channels, act)?;
        let height_conv = Conv::register(
            store,
            &format!("{name}.height.conv"),
            1,
            channels,
            channels,
            3,
            1,
            1,
            1.0,
            root,
        )?;
        let height_norm = NormAct::register(store, &format!("{name}.height.norm"), channels, act)?;
        let bev_attn = Wmsa::register(store, &format!("{name}.bev.attn"), channels, heads, window, root)?;
        // Temporal attention output projections start at zero so the fused
        // branch contributes nothing at initialization.
        let ta_scene =
            TemporalAttn::register(store, &format!("{name}.ta.scene"), channels, max_t, true, root)?;
        let ta_height =
            TemporalAttn::register(store, &format!("{name}.ta.height"), channels, max_t, true, root)?;
        let ta_bev =
            TemporalAttn::register(store, &format!("{name}.ta.bev"), channels, max_t, true, root)?;
        Ok(Taf {
            name: name.to_string(),
            channels,
            scene_lin,
            scene_norm,
            height_conv,
            height_norm,
            bev_attn,
            ta_scene,
            ta_height,
            ta_bev,
        })
    }

    /// Pools `u: (t, c, x, y, z)` into the scene/height/BEV branches.
    pub fn tripling<T: Element>(&self, s: &mut Session<'_, T>, u: Var) -> Result<TriplingOut> {
        let shape = s.shape(u).to_vec();
        if shape.len() != 5 || shape[1] != self.channels {
            return Err(Error::shape(format!(
                "tripling: want (t, {}, x, y, z), got {:?}",
                self.channels, shape
            )));
        }
        let (t, c, x, y, z) = (shape[0], shape[1], shape[2], shape[3], shape[4]);

        // scene: 3-D pooling, linear, norm+act
        let sc = s.gap(u, &[2, 3, 4])?;
        let sc = s.reshape(sc, &[t, c])?;
        let sc = self.scene_lin.apply(s, sc)?;
        let sc = self.scene_norm.apply(s, sc)?;
        let scene = s.reshape(sc, &[t, c, 1, 1, 1])?;

        // height: 2-D pooling over the plane, 1-D conv along z, norm+act
        let hi = s.gap(u, &[2, 3])?;
        let hi = s.reshape(hi, &[t, c, z])?;
        let hi = self.height_conv.apply(s, hi)?;
        let hi = self.height_norm.apply(s, hi)?;
        let height = s.reshape(hi, &[t, c, 1, 1, z])?;

        // bev: 1-D pooling over z, windowed attention on the x-y plane
        let be = s.gap(u, &[4])?;
        let be = s.reshape(be, &[t, c, x, y])?;
        let be = self.bev_attn.apply(s, be)?;
        let bev = s.reshape(be, &[t, c, x, y, 1])?;

        Ok(TriplingOut { scene, height, bev })
    }

    /// Per-branch temporal attention, then broadcast sum to the full grid.
    pub fn fuse<T: Element>(&self, s: &mut Session<'_, T>, t: &TriplingOut) -> Result<Var> {
        let sc = self.ta_scene.apply(s, t.scene)?;
        let hi = self.ta_height.apply(s, t.height)?;
        let be = self.ta_bev.apply(s, t.bev)?;
        s.broadcast_sum3(sc, hi, be)
    }

    /// Residual interaction block: `u + fuse(tripling(u))`.
    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, u: Var) -> Result<Var> {
        let branches = self.tripling(s, u)?;
        let fused = self.fuse(s, &branches)?;
        s.add(u, fused)
    }
}

/// Observer representation style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// U-shaped 4D aggregation over downsampled 3D features.
    #[default]
    E4a,
    /// Fold z into channels, aggregate on a single top-down plane.
    Bev,
    /// Three orthogonal plane encoders.
    Tpv,
    /// Same block structure as E4a but at full resolution throughout.
    Dense,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "e4a" => Ok(Variant::E4a),
            "bev" => Ok(Variant::Bev),
            "tpv" => Ok(Variant::Tpv),
            "dense" => Ok(Variant::Dense),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Static geometry the aggregators are built for.
#[derive(Debug, Clone, Copy)]
pub struct GridShape {
    pub t: usize,
    pub c: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl GridShape {
    pub fn as_vec(&self) -> Vec<usize> {
        vec![self.t, self.c, self.x, self.y, self.z]
    }
}

/// U-shaped spatio-temporal aggregator with a global residual:
/// downsample L times, run the tripling-attention block at each downsampled
/// level, then upsample with skip sums back to full resolution. Terminal
/// (decoder) convolutions start at zero, so the whole module is the identity
/// at initialization.
#[derive(Debug, Clone)]
pub struct E4a {
    pub name: String,
    pub levels: usize,
    pub shape: GridShape,
    /// True: stride-2 downsampling and x2 upsampling. False: every level at
    /// full resolution (the dense variant).
    pub pyramid: bool,
    downs: Vec<Conv>,
    tafs: Vec<Taf>,
    ups: Vec<Conv>,
}

impl E4a {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        shape: GridShape,
        levels: usize,
        window: usize,
        heads: usize,
        max_t: usize,
        act: Act,
        pyramid: bool,
        root: u64,
    ) -> Result<E4a> {
        let div = if pyramid { 1usize << levels } else { 1 };
        if shape.x % div != 0 || shape.y % div != 0 || shape.z % div != 0 {
            return Err(Error::config(format!(
                "e4a `{name}`: extents ({}, {}, {}) not divisible by 2^{levels}",
                shape.x, shape.y, shape.z
            )));
        }
        if (shape.x / div) % window != 0 || (shape.y / div) % window != 0 {
            return Err(Error::config(format!(
                "e4a `{name}`: window {window} does not divide the level-{levels} plane {}x{}",
                shape.x / div,
                shape.y / div
            )));
        }
        let down_stride = if pyramid { 2 } else { 1 };
        let c = shape.c;
        let mut downs = Vec::new();
        let mut tafs = Vec::new();
        let mut ups = Vec::new();
        if levels == 0 {
            tafs.push(Taf::register(
                store,
                &format!("{name}.taf0"),
                c,
                window,
                heads,
                max_t,
                act,
                root,
            )?);
        }
        for i in 1..=levels {
            downs.push(Conv::register(
                store,
                &format!("{name}.down{i}"),
                3,
                c,
                c,
                3,
                down_stride,
                1,
                1.0,
                root,
            )?);
            tafs.push(Taf::register(
                store,
                &format!("{name}.taf{i}"),
                c,
                window,
                heads,
                max_t,
                act,
                root,
            )?);
            ups.push(Conv::register(
                store,
                &format!("{name}.up{i}"),
                3,
                c,
                c,
                3,
                1,
                1,
                0.0, // zero-initialized terminal convolution
                root,
            )?);
        }
        Ok(E4a {
            name: name.to_string(),
            levels,
            shape,
            pyramid,
            downs,
            tafs,
            ups,
        })
    }

    pub fn tafs(&self) -> &[Taf] {
        &self.tafs
    }

    /// `x: (frames, c, x, y, z)` -> same shape. Frame count may differ from
    /// `shape.t` (the refiner runs the same architecture on longer clips).
    pub fn apply<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let in_shape = s.shape(x).to_vec();
        let want = [self.shape.c, self.shape.x, self.shape.y, self.shape.z];
        if in_shape.len() != 5 || in_shape[1..] != want {
            return Err(Error::shape(format!(
                "e4a `{}`: want (t, {}, {}, {}, {}), got {:?}",
                self.name, want[0], want[1], want[2], want[3], in_shape
            )));
        }
        if self.levels == 0 {
            return self.tafs[0].apply(s, x);
        }
        let mut skips = vec![x];
        let mut u = x;
        for i in 0..self.levels {
            let d = self.downs[i].apply(s, u)?;
            u = self.tafs[i].apply(s, d)?;
            if i + 1 < self.levels {
                skips.push(u);
            }
        }
        for i in (0..self.levels).rev() {
            let up = if self.pyramid { s.upsample2(u, 3)? } else { u };
            let up = self.ups[i].apply(s, up)?;
            u = s.add(up, skips[i])?;
        }
        Ok(u)
    }
}

/// Plane-folding aggregator: z folded into channels, one 2-D U-shaped conv
/// stack, unfolded back, added as a global residual.
#[derive(Debug, Clone)]
pub struct PlaneAgg {
    pub name: String,
    /// Which axis is folded into channels: 4 = z (bev), 3 = y, 2 = x.
    pub fold_axis: usize,
    pub width: usize,
    in_proj: Conv,
    downs: Vec<Conv>,
    ups: Vec<Conv>,
    out_proj: Conv,
}

impl PlaneAgg {
    pub fn register<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        shape: GridShape,
        fold_axis: usize,
        levels: usize,
        width: usize,
        root: u64,
    ) -> Result<PlaneAgg> {
        let (folded, pa, pb) = match fold_axis {
            4 => (shape.z, shape.x, shape.y),
            3 => (shape.y, shape.x, shape.z),
            2 => (shape.x, shape.y, shape.z),
            _ => return Err(Error::config("fold_axis must be 2, 3, or 4".to_string())),
        };
        let div = 1usize << levels;
        if pa % div != 0 || pb % div != 0 {
            return Err(Error::config(format!(
                "plane aggregator `{name}`: plane {pa}x{pb} not divisible by 2^{levels}"
            )));
        }
        let cf = shape.c * folded;
        let in_proj = Conv::register(store, &format!("{name}.in"), 2, cf, width, 1, 1, 0, 1.0, root)?;
        let mut downs = Vec::new();
        let mut ups = Vec::new();
        for i in 1..=levels {
            downs.push(Conv::register(
                store,
                &format!("{name}.down{i}"),
                2,
                width,
                width,
                3,
                2,
                1,
                1.0,
                root,
            )?);
            ups.push(Conv::register(
                store,
                &format!("{name}.up{i}"),
                2,
                width,
                width,
                3,
                1,
                1,
                1.0,
                root,
            )?);
        }
        // zero-initialized so the variant starts as the identity
        let out_proj =
            Conv::register(store, &format!("{name}.out"), 2, width, cf, 1, 1, 0, 0.0, root)?;
        Ok(PlaneAgg {
            name: name.to_string(),
            fold_axis,
            width,
            in_proj,
            downs,
            ups,
            out_proj,
        })
    }

    pub fn levels(&self) -> usize {
        self.downs.len()
    }

    /// Residual branch only (caller adds it to the input).
    pub fn apply_branch<T: Element>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let sh = s.shape(x).to_vec(); // (t, c, x, y, z)
        let (t, c) = (sh[0], sh[1]);
        let (perm, unperm, folded, pa, pb): (Vec<usize>, Vec<usize>, usize, usize, usize) =
            match self.fold_axis {
                4 => (vec![0, 1, 4, 2, 3], vec![0, 1, 3, 4, 2], sh[4], sh[2], sh[3]),
                3 => (vec![0, 1, 3, 2, 4], vec![0, 1, 3, 2, 4], sh[3], sh[2], sh[4]),
                2 => (vec![0, 1, 2, 3, 4], vec![0, 1, 2, 3, 4], sh[2], sh[3], sh[4]),
                _ => unreachable!(),
            };
        let xp = s.permute(x, &perm)?; // (t, c, folded, pa, pb)
        let xf = s.reshape(xp, &[t, c * folded, pa, pb])?;
        let mut h = self.in_proj.apply(s, xf)?;
        let mut skips = Vec::new();
        for d in &self.downs {
            skips.push(h);
            let down = d.apply(s, h)?;
            h = s.relu(down);
        }
        for (u, &skip) in self.ups.iter().rev().zip(skips.iter().rev()) {
            let up = s.upsample2(h, 2)?;
            let up = u.apply(s, up)?;
            let up = s.relu(up);
            h = s.add(up, skip)?;
        }
        let out = self.out_proj.apply(s, h)?;
        let out = s.reshape(out, &[t, c, folded, pa, pb])?;
        s.permute(out, &unperm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn wmsa_rejects_bad_heads_and_window() {
        let mut store = ParamStore::<f64>::new();
        assert!(Wmsa::register(&mut store, "w", 6, 4, 2, 0).is_err());
        let mut store = ParamStore::<f64>::new();
        let w = Wmsa::register(&mut store, "w", 8, 2, 3, 0).unwrap();
        let mut s = Session::new(&store);
        let x = s.input(Tensor::zeros(&[1, 8, 4, 4]));
        assert!(matches!(w.apply(&mut s, x), Err(Error::Config(_))));
    }

    #[test]
    fn temporal_attn_rejects_overlong_sequences() {
        let mut store = ParamStore::<f64>::new();
        let ta = TemporalAttn::register(&mut store, "ta", 4, 3, false, 0).unwrap();
        let mut s = Session::new(&store);
        let x = s.input(Tensor::zeros(&[4, 4, 2]));
        assert!(matches!(ta.apply(&mut s, x), Err(Error::Config(_))));
    }

    #[test]
    fn e4a_rejects_indivisible_extents() {
        let mut store = ParamStore::<f64>::new();
        let shape = GridShape {
            t: 2,
            c: 4,
            x: 6,
            y: 8,
            z: 4,
        };
        assert!(E4a::register(&mut store, "e", shape, 2, 1, 1, 4, Act::Relu, true, 0).is_err());
    }
}
