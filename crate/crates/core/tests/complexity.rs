mod common;

use std::sync::Arc;

use common::*;
use voxcast::complexity::{
    self, aggregator_cost, compare_variants, count_params, e4a_cost, model_cost, taf_cost,
    temporal_attn_cost, wmsa_cost, Walk,
};
use voxcast::layers::{Conv, E4a, GridShape, Linear, Taf, TemporalAttn, Variant, Wmsa};
use voxcast::model::{Ablation, Model, ModelConfig, PipelineGeom};
use voxcast::observer::{Aggregator, ObserverSettings};
use voxcast::predictor::TaskKind;
use voxcast::tensor::meter;
use voxcast::tensor::ops::Act;
use voxcast::tensor::params::{Init, ParamStore};
use voxcast::tensor::tape::Session;
use voxcast::Tensor;

// ---- parameter counting ----------------------------------------------------

#[test]
fn linear_4_to_3_has_15_params() {
    let mut store = ParamStore::<f64>::new();
    Linear::register(&mut store, "lin", 4, 3, 1.0, 0).unwrap();
    assert_eq!(store.total_elements(), 15);
}

#[test]
fn conv3_2_to_4_has_220_params() {
    let mut store = ParamStore::<f64>::new();
    Conv::register(&mut store, "conv", 3, 2, 4, 3, 1, 1, 1.0, 0).unwrap();
    assert_eq!(store.total_elements(), 27 * 2 * 4 + 4);
}

#[test]
fn whole_model_params_equal_store_enumeration() {
    let mut store = ParamStore::<f32>::new();
    let geom = PipelineGeom {
        t_obs: 3,
        t_fut: 4,
        c_in: 8,
        x: 32,
        y: 32,
        z: 8,
    };
    let cfg = ModelConfig::default();
    let model = Model::build(&mut store, &cfg, &geom, TaskKind::InflatedGmo, Ablation::None, 1)
        .unwrap();
    let report = model_cost(&model, &store).unwrap();
    // brute-force enumeration oracle
    let brute: u64 = store.iter().map(|(_, p)| p.value.numel() as u64).sum();
    assert_eq!(report.total_params, brute);
    // grouped counts add up too
    let grouped: u64 = count_params(&store).iter().map(|(_, n)| n).sum();
    assert_eq!(grouped, brute);
}

// ---- spec'd flop examples ----------------------------------------------------

#[test]
fn linear_4_to_3_is_27_flops() {
    assert_eq!(complexity::flops_linear(1, 4, 3), 27);
}

#[test]
fn conv3_unit_example_flop_count() {
    // 1->1 channels, 3^3 kernel, 4^3 input, pad 1, stride 1:
    // 64 outputs x 27 MACs x 2 + 64 bias adds
    let c = Conv {
        name: String::new(),
        dims: 3,
        cin: 1,
        cout: 1,
        k: 3,
        stride: 1,
        pad: 1,
    };
    let mut w = Walk::default();
    let out = complexity::conv_cost(&c, 1, &[4, 4, 4], &mut w).unwrap();
    assert_eq!(out, vec![4, 4, 4]);
    assert_eq!(w.flops, 64 * 27 * 2 + 64);
}

#[test]
fn gap_is_n_flops_per_output() {
    assert_eq!(complexity::flops_gap(6, 24), 6 * 24);
}

// ---- instrumented equality: op level ---------------------------------------

fn metered_flops(f: impl FnOnce()) -> u64 {
    let ((), n) = meter::metered(f);
    n
}

#[test]
fn analytic_equals_instrumented_for_every_op_type() {
    let shapes: [(usize, usize, usize, usize, usize); 5] = [
        (1, 2, 4, 4, 4),
        (2, 3, 6, 4, 2),
        (1, 4, 8, 8, 4),
        (3, 2, 4, 6, 6),
        (2, 5, 5, 7, 3),
    ];
    for (si, &(b, c, x, y, z)) in shapes.iter().enumerate() {
        let seed = 1000 + si as u64;
        let store = ParamStore::<f64>::new();

        // gap over the trailing two axes
        let t = rng_tensor(&[b, c, x, y, z], seed, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let xv = s.input(t.clone());
            s.gap(xv, &[3, 4]).unwrap();
        });
        assert_eq!(got, complexity::flops_gap((b * c * x) as u64, (y * z) as u64), "gap {si}");

        // add / relu / scale
        let n = (b * c * x) as u64;
        let t2 = rng_tensor(&[b, c, x], seed + 1, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let a = s.input(t2.clone());
            let bb = s.input(t2.clone());
            let sum = s.add(a, bb).unwrap();
            let r = s.relu(sum);
            s.scale(r, 0.5);
        });
        assert_eq!(got, complexity::flops_add(n) + complexity::flops_relu(n) + n, "basic {si}");

        // linear
        let rows = b * x;
        let mut lstore = ParamStore::<f64>::new();
        let lin = Linear::register(&mut lstore, "l", c, c + 1, 1.0, seed).unwrap();
        let lt = rng_tensor(&[rows, c], seed + 2, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&lstore);
            let xv = s.input(lt.clone());
            lin.apply(&mut s, xv).unwrap();
        });
        assert_eq!(
            got,
            complexity::flops_linear(rows as u64, c as u64, (c + 1) as u64),
            "linear {si}"
        );

        // conv3d (stride 2, pad 1) through the layer wrapper
        let mut cstore = ParamStore::<f64>::new();
        let conv = Conv::register(&mut cstore, "c", 3, c, c + 1, 3, 2, 1, 1.0, seed).unwrap();
        let ct = rng_tensor(&[b, c, x, y, z], seed + 3, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&cstore);
            let xv = s.input(ct.clone());
            conv.apply(&mut s, xv).unwrap();
        });
        let mut w = Walk::default();
        complexity::conv_cost(&conv, b, &[x, y, z], &mut w).unwrap();
        assert_eq!(got, w.flops, "conv {si}");

        // norm_act
        let mut nstore = ParamStore::<f64>::new();
        nstore.register("g", &[c], Init::Constant(1.0), 0).unwrap();
        nstore.register("be", &[c], Init::Zero, 0).unwrap();
        let nt = rng_tensor(&[b, c, x * y], seed + 4, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&nstore);
            let xv = s.input(nt.clone());
            let (g, be) = (s.param("g").unwrap(), s.param("be").unwrap());
            s.layer_norm_act(xv, g, be, Act::Relu).unwrap();
        });
        assert_eq!(
            got,
            complexity::flops_norm_act((b * x * y) as u64, c as u64, Act::Relu),
            "norm {si}"
        );

        // sdpa
        let (g_, nq, nk, d, dv) = (b, x, y, c, c + 2);
        let q = rng_tensor(&[g_, nq, d], seed + 5, 1.0);
        let k = rng_tensor(&[g_, nk, d], seed + 6, 1.0);
        let v = rng_tensor(&[g_, nk, dv], seed + 7, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let (qv, kv, vv) = (s.input(q.clone()), s.input(k.clone()), s.input(v.clone()));
            s.sdpa(qv, kv, vv).unwrap();
        });
        assert_eq!(
            got,
            complexity::flops_sdpa(g_ as u64, nq as u64, nk as u64, d as u64, dv as u64),
            "sdpa {si}"
        );

        // matmul
        let a = rng_tensor(&[x, y], seed + 8, 1.0);
        let bm = rng_tensor(&[y, z], seed + 9, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let (av, bv) = (s.input(a.clone()), s.input(bm.clone()));
            s.matmul(av, bv).unwrap();
        });
        assert_eq!(got, complexity::flops_matmul(x as u64, y as u64, z as u64), "matmul {si}");

        // embed_add + broadcast fusion + upsample/permute/reshape are free
        let tok = rng_tensor(&[b, x, c], seed + 10, 1.0);
        let emb = rng_tensor(&[x, c], seed + 11, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let xv = s.input(tok.clone());
            let ev = s.input(emb.clone());
            s.embed_add(xv, ev).unwrap();
        });
        assert_eq!(got, complexity::flops_embed_add(b as u64, x as u64, c as u64), "embed {si}");

        let sc = rng_tensor(&[b, c, 1, 1, 1], seed + 12, 1.0);
        let hi = rng_tensor(&[b, c, 1, 1, z], seed + 13, 1.0);
        let be2 = rng_tensor(&[b, c, x, y, 1], seed + 14, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let (a1, a2, a3) = (s.input(sc.clone()), s.input(hi.clone()), s.input(be2.clone()));
            s.broadcast_sum3(a1, a2, a3).unwrap();
        });
        assert_eq!(
            got,
            complexity::flops_broadcast_sum3((b * c * x * y * z) as u64),
            "broadcast {si}"
        );

        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let xv = s.input(t.clone());
            let u = s.upsample2(xv, 3).unwrap();
            let p = s.permute(u, &[1, 0, 2, 3, 4]).unwrap();
            let r = s.reshape(p, &[c, b, 8 * x * y * z]).unwrap();
            let sl = s.slice_axis(r, 0, 0, 1).unwrap();
            s.concat(&[sl, sl], 0).unwrap();
        });
        assert_eq!(got, 0, "movement ops must be free {si}");

        // losses
        let k_cls = 3usize;
        let logits = rng_tensor(&[b, k_cls, x * y], seed + 15, 1.0);
        let labels: Arc<Vec<u8>> = Arc::new((0..b * x * y).map(|i| (i % k_cls) as u8).collect());
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let lv = s.input(logits.clone());
            s.ce_loss(lv, labels.clone(), &[1.0, 2.0, 3.0]).unwrap();
        });
        assert_eq!(
            got,
            complexity::flops_ce_loss(b as u64, (x * y) as u64, k_cls as u64),
            "ce {si}"
        );

        let pred = rng_tensor(&[b, 3, x * y], seed + 16, 1.0);
        let target = rng_tensor(&[b, 3, x * y], seed + 17, 1.0);
        let mask: Arc<Vec<u8>> = Arc::new((0..b * x * y).map(|i| (i % 3 == 0) as u8).collect());
        let masked = mask.iter().filter(|&&m| m != 0).count() as u64;
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let pv = s.input(pred.clone());
            s.smooth_l1_masked(pv, &target, mask.clone()).unwrap();
        });
        assert_eq!(got, complexity::flops_smooth_l1(masked, 3), "smooth_l1 {si}");
    }
}

// ---- instrumented equality: composed blocks --------------------------------

#[test]
fn analytic_equals_instrumented_for_wmsa_and_temporal_attention() {
    let (c, heads, window) = (8, 2, 2);
    let mut store = ParamStore::<f64>::new();
    let wm = Wmsa::register(&mut store, "w", c, heads, window, 3).unwrap();
    let x = rng_tensor(&[2, c, 4, 6], 4, 1.0);
    let got = metered_flops(|| {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        wm.apply(&mut s, xv).unwrap();
    });
    let mut w = Walk::default();
    wmsa_cost(c, heads, window, 2, 4, 6, &mut w);
    assert_eq!(got, w.flops);

    let mut store = ParamStore::<f64>::new();
    let ta = TemporalAttn::register(&mut store, "ta", c, 7, false, 5).unwrap();
    let x = rng_tensor(&[3, c, 2, 5], 6, 1.0);
    let got = metered_flops(|| {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        ta.apply(&mut s, xv).unwrap();
    });
    let mut w = Walk::default();
    temporal_attn_cost(c, 3, 10, &mut w);
    assert_eq!(got, w.flops);
}

#[test]
fn analytic_equals_instrumented_for_taf_and_e4a() {
    let (c, heads, window) = (4, 2, 2);
    let mut store = ParamStore::<f64>::new();
    let taf = Taf::register(&mut store, "t", c, window, heads, 4, Act::Relu, 7).unwrap();
    let x = rng_tensor(&[2, c, 4, 4, 2], 8, 1.0);
    let got = metered_flops(|| {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        taf.apply(&mut s, xv).unwrap();
    });
    let mut w = Walk::default();
    taf_cost(c, window, heads, Act::Relu, 2, 4, 4, 2, &mut w);
    assert_eq!(got, w.flops, "taf");

    for pyramid in [true, false] {
        let mut store = ParamStore::<f64>::new();
        let shape = GridShape {
            t: 2,
            c,
            x: 8,
            y: 8,
            z: 4,
        };
        let e = E4a::register(&mut store, "e", shape, 2, window, heads, 4, Act::Relu, pyramid, 9)
            .unwrap();
        let x = rng_tensor(&[2, c, 8, 8, 4], 10, 1.0);
        let got = metered_flops(|| {
            let mut s = Session::new(&store);
            let xv = s.input(x.clone());
            e.apply(&mut s, xv).unwrap();
        });
        let settings = ObserverSettings {
            channels: c,
            window,
            heads,
            levels: 2,
            ..ObserverSettings::default()
        };
        let mut w = Walk::default();
        e4a_cost(&e, &settings, 2, &mut w).unwrap();
        assert_eq!(got, w.flops, "e4a pyramid={pyramid}");
    }
}

#[test]
fn analytic_equals_instrumented_for_whole_model() {
    let geom = PipelineGeom {
        t_obs: 2,
        t_fut: 2,
        c_in: 2,
        x: 8,
        y: 8,
        z: 4,
    };
    let cfg = ModelConfig {
        observer: ObserverSettings {
            levels: 1,
            channels: 4,
            window: 2,
            heads: 2,
            ..ObserverSettings::default()
        },
        dual_pipeline: true,
        flow_weight: 0.5,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::<f64>::new();
    let model = Model::build(&mut store, &cfg, &geom, TaskKind::FineGmoGso, Ablation::None, 11)
        .unwrap();
    let x = rng_tensor(&[2, 8, 8, 8, 4], 12, 1.0);
    let got = metered_flops(|| {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        model.forward(&mut s, xv).unwrap();
    });
    let report = model_cost(&model, &store).unwrap();
    assert_eq!(got, report.total_flops);
}

// ---- variant comparisons -----------------------------------------------------

fn toy_geom() -> PipelineGeom {
    PipelineGeom {
        t_obs: 3,
        t_fut: 4,
        c_in: 8,
        x: 32,
        y: 32,
        z: 8,
    }
}

#[test]
fn pyramid_aggregation_is_under_half_of_dense() {
    let cmp = compare_variants(&ModelConfig::default(), &toy_geom(), TaskKind::InflatedGmo)
        .unwrap();
    let flops = |name: &str| {
        cmp.variants
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.total_flops)
            .unwrap()
    };
    assert!(
        (flops("e4a") as f64) < 0.5 * flops("dense") as f64,
        "e4a {} vs dense {}",
        flops("e4a"),
        flops("dense")
    );
}

#[test]
fn tpv_has_more_params_than_bev_at_matched_width() {
    let cmp = compare_variants(&ModelConfig::default(), &toy_geom(), TaskKind::InflatedGmo)
        .unwrap();
    let params = |name: &str| {
        cmp.variants
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.total_params)
            .unwrap()
    };
    assert!(params("tpv") > params("bev"));
}

#[test]
fn report_totals_equal_block_sums() {
    let cmp = compare_variants(&ModelConfig::default(), &toy_geom(), TaskKind::InflatedGmo)
        .unwrap();
    let r = &cmp.full_pipeline;
    assert_eq!(r.total_flops, r.blocks.iter().map(|b| b.flops).sum::<u64>());
    assert_eq!(r.total_params, r.blocks.iter().map(|b| b.params).sum::<u64>());
}

#[test]
fn doubling_xy_quadruples_full_resolution_conv_flops() {
    let c = Conv {
        name: String::new(),
        dims: 3,
        cin: 4,
        cout: 4,
        k: 3,
        stride: 1,
        pad: 1,
    };
    let mut w1 = Walk::default();
    complexity::conv_cost(&c, 2, &[8, 8, 4], &mut w1).unwrap();
    let mut w2 = Walk::default();
    complexity::conv_cost(&c, 2, &[16, 16, 4], &mut w2).unwrap();
    assert_eq!(w2.flops, 4 * w1.flops);
}

#[test]
fn params_are_input_shape_invariant_and_flops_monotone() {
    // same aggregator built for two extents: identical parameter count
    let settings = ObserverSettings {
        levels: 1,
        channels: 4,
        window: 2,
        heads: 2,
        ..ObserverSettings::default()
    };
    let mut s1 = ParamStore::<f32>::new();
    let mut s2 = ParamStore::<f32>::new();
    let g1 = GridShape {
        t: 2,
        c: 4,
        x: 8,
        y: 8,
        z: 4,
    };
    let g2 = GridShape {
        t: 2,
        c: 4,
        x: 16,
        y: 16,
        z: 8,
    };
    let a1 = Aggregator::register(&mut s1, "a", &settings, g1, 4, 0).unwrap();
    let a2 = Aggregator::register(&mut s2, "a", &settings, g2, 4, 0).unwrap();
    assert_eq!(s1.total_elements(), s2.total_elements());

    let mut w1 = Walk::default();
    aggregator_cost(&a1, &settings, 2, 4, 8, 8, 4, &mut w1).unwrap();
    let mut w2 = Walk::default();
    aggregator_cost(&a2, &settings, 2, 4, 16, 16, 8, &mut w2).unwrap();
    assert!(w2.flops > w1.flops);
}

#[test]
fn variant_e4a_matches_direct_aggregator_meter() {
    // the comparison table's e4a entry equals a metered forward of that
    // aggregator (cross-check of compare_variants itself)
    let geom = PipelineGeom {
        t_obs: 2,
        t_fut: 2,
        c_in: 4,
        x: 8,
        y: 8,
        z: 4,
    };
    let cfg = ModelConfig {
        observer: ObserverSettings {
            levels: 1,
            channels: 4,
            window: 2,
            heads: 2,
            ..ObserverSettings::default()
        },
        dual_pipeline: false,
        flow_weight: 0.0,
        ..ModelConfig::default()
    };
    let cmp = compare_variants(&cfg, &geom, TaskKind::InflatedGmo).unwrap();
    let mut store = ParamStore::<f64>::new();
    let shape = geom.grid_shape(4);
    let agg = Aggregator::register(&mut store, "agg", &cfg.observer, shape, 4, 0).unwrap();
    let x = rng_tensor(&[2, 4, 8, 8, 4], 13, 1.0);
    let got = metered_flops(|| {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        agg.apply(&mut s, xv).unwrap();
    });
    let table = cmp
        .variants
        .iter()
        .find(|(n, _)| n == "e4a")
        .map(|(_, r)| r.total_flops)
        .unwrap();
    assert_eq!(got, table);
}
