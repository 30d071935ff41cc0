use std::time::Instant;
use voxcast::tensor::params::{Init, ParamStore};
use voxcast::tensor::tape::Session;
use voxcast::Tensor;

fn main() {
    let mut store = ParamStore::<f32>::new();
    store.register("w", &[8, 14, 3, 3, 3], Init::fan_in(378), 1).unwrap();
    store.register("b", &[8], Init::fan_in(378), 2).unwrap();
    let x = Tensor::<f32>::from_fn(&[3, 14, 32, 32, 8], |i| (i % 97) as f32 * 0.01);

    // forward only
    let t0 = Instant::now();
    let n = 20;
    for _ in 0..n {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        let (w, b) = (s.param("w").unwrap(), s.param("b").unwrap());
        let _ = s.conv(xv, w, b, 3, 1, 1).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / n as f64;

    // forward + backward
    let t0 = Instant::now();
    for _ in 0..n {
        let mut s = Session::new(&store);
        let xv = s.input(x.clone());
        let (w, b) = (s.param("w").unwrap(), s.param("b").unwrap());
        let y = s.conv(xv, w, b, 3, 1, 1).unwrap();
        let m = s.gap(y, &[0, 1, 2, 3, 4]).unwrap();
        let _ = s.backward_with(m, Tensor::full(&[1,1,1,1,1], 1.0)).unwrap();
    }
    let both = t0.elapsed().as_secs_f64() / n as f64;
    let flops = 3.0 * 8192.0 * 8.0 * 378.0 * 2.0;
    println!("fwd  {:.1} ms  ({:.2} GF/s)", fwd * 1e3, flops / fwd / 1e9);
    println!("f+b  {:.1} ms  ({:.2} GF/s equiv. x3)", both * 1e3, 3.0 * flops / both / 1e9);
}
