use std::time::Instant;
use voxcast::dataset::prepare_samples;
use voxcast::model::{Ablation, Model, ModelConfig, PipelineGeom};
use voxcast::predictor::{assemble_loss, TaskKind};
use voxcast::scene::{generate_scene, WorldConfig};
use voxcast::tensor::params::ParamStore;
use voxcast::tensor::tape::Session;

fn main() {
    let world = WorldConfig::default();
    let cfg = ModelConfig { dual_pipeline: false, flow_weight: 0.0, ..ModelConfig::default() };
    let geom = PipelineGeom::from_world(&world);
    let mut store = ParamStore::<f32>::new();
    let model = Model::build(&mut store, &cfg, &geom, TaskKind::InflatedGmo, Ablation::None, 1).unwrap();
    let samples: Vec<_> = (0..2).map(|i| generate_scene(&world, i).unwrap()).collect();
    let prepared = prepare_samples::<f32>(&samples, &world, TaskKind::InflatedGmo).unwrap();
    let p = &prepared[0];

    let n = 10;
    // forward only
    let t0 = Instant::now();
    for _ in 0..n {
        let mut s = Session::new(&store);
        let x = s.input(p.input.clone());
        let out = model.forward(&mut s, x).unwrap();
        let w = model.cfg.task_class_weights(model.task);
        let _ = assemble_loss(&mut s, out.current_logits, out.occ_logits, out.flow, &p.sup, &w, 0.0).unwrap();
    }
    println!("forward-only      {:6.1} ms", t0.elapsed().as_secs_f64() * 1e3 / n as f64);

    // forward + backward
    let t0 = Instant::now();
    for _ in 0..n {
        let mut s = Session::new(&store);
        let x = s.input(p.input.clone());
        let out = model.forward(&mut s, x).unwrap();
        let w = model.cfg.task_class_weights(model.task);
        let lv = assemble_loss(&mut s, out.current_logits, out.occ_logits, out.flow, &p.sup, &w, 0.0).unwrap();
        let _ = s.backward(lv.total).unwrap();
    }
    println!("forward+backward  {:6.1} ms", t0.elapsed().as_secs_f64() * 1e3 / n as f64);

    // full optimizer step, batch 2
    let mut opt = voxcast::optim::AdamW::<f32>::new(Default::default(), &store);
    let batch: Vec<&voxcast::dataset::Prepared<f32>> = prepared.iter().collect();
    let t0 = Instant::now();
    for step in 0..n {
        let _ = voxcast::trainer::train_step(&model, &mut store, &mut opt, &batch, step as u64).unwrap();
    }
    println!("train_step (b=2)  {:6.1} ms", t0.elapsed().as_secs_f64() * 1e3 / n as f64);
}

#[allow(dead_code)]
fn unused() {}
