mod common;

use common::*;
use voxcast::geometry::{
    align_to_current, concat_pose_channels, relative_pose, GridSpec, Pose6DoF,
};
use voxcast::Tensor;

#[test]
fn relative_pose_of_equal_poses_is_identity() {
    let p = Pose6DoF::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
    let rel = relative_pose(&p, &p);
    assert!(rel.translation.iter().all(|v| v.abs() < 1e-12));
    assert!(rel.rotation.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn relative_pose_pure_translation_inverts() {
    let src = Pose6DoF::new([1.0, 0.0, 0.0], [0.0; 3]);
    let dst = Pose6DoF::identity();
    let rel = relative_pose(&src, &dst);
    assert!((rel.translation[0] + 1.0).abs() < 1e-12);
    assert!(rel.translation[1].abs() < 1e-12);
    assert!(rel.translation[2].abs() < 1e-12);
}

#[test]
fn relative_pose_matches_matrix_oracle() {
    // 4x4 homogeneous-matrix oracle applied to random points
    let mat4 = |p: &Pose6DoF| -> [[f64; 4]; 4] {
        let r = p.rotation_matrix();
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = r[i][j];
            }
            m[i][3] = p.translation[i];
        }
        m[3][3] = 1.0;
        m
    };
    let inv4 = |m: &[[f64; 4]; 4]| -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = m[j][i];
            }
        }
        for i in 0..3 {
            out[i][3] = -(out[i][0] * m[0][3] + out[i][1] * m[1][3] + out[i][2] * m[2][3]);
        }
        out[3][3] = 1.0;
        out
    };
    let apply = |m: &[[f64; 4]; 4], p: [f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
        }
        out
    };

    for seed in 0..10u64 {
        let t = rng_tensor(&[6], seed, 2.0);
        let u = rng_tensor(&[6], 100 + seed, 1.0);
        let src = Pose6DoF::new(
            [t.data()[0], t.data()[1], t.data()[2]],
            [t.data()[3], t.data()[4], t.data()[5]],
        );
        let dst = Pose6DoF::new(
            [u.data()[0], u.data()[1], u.data()[2]],
            [u.data()[3], u.data()[4], u.data()[5]],
        );
        let rel = relative_pose(&src, &dst);
        let oracle = {
            let mi = inv4(&mat4(&src));
            let md = mat4(&dst);
            move |p: [f64; 3]| apply(&mi, apply(&md, p))
        };
        for pseed in 0..5u64 {
            let pt = rng_tensor(&[3], 1000 + seed * 10 + pseed, 3.0);
            let p = [pt.data()[0], pt.data()[1], pt.data()[2]];
            let got = rel.transform_point(p);
            let want = oracle(p);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-9, "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn relative_pose_composition_associates() {
    let a = Pose6DoF::new([0.5, 0.0, 0.1], [0.0, 0.1, 0.4]);
    let b = Pose6DoF::new([-0.3, 1.0, 0.0], [0.2, 0.0, -0.5]);
    let c = Pose6DoF::new([2.0, -1.0, 0.2], [0.1, -0.1, 1.0]);
    let p = [0.3, -0.4, 0.9];
    let left = a.compose(&b).compose(&c).transform_point(p);
    let right = a.compose(&b.compose(&c)).transform_point(p);
    for i in 0..3 {
        assert!((left[i] - right[i]).abs() < 1e-9);
    }
}

#[test]
fn align_identity_is_identity() {
    let spec = GridSpec::centered((8, 8, 4), 0.2);
    let grid = rng_tensor(&[3, 8, 8, 4], 7, 1.0);
    let out = align_to_current(&grid, &Pose6DoF::identity(), &spec).unwrap();
    assert_eq!(out, grid);
}

#[test]
fn align_one_voxel_translation_shifts_one_cell() {
    let spec = GridSpec::centered((8, 8, 4), 0.2);
    let grid = rng_tensor(&[2, 8, 8, 4], 8, 1.0);
    let rel = Pose6DoF::new([0.2, 0.0, 0.0], [0.0; 3]);
    let out = align_to_current(&grid, &rel, &spec).unwrap();
    for c in 0..2 {
        for i in 0..8 {
            for j in 0..8 {
                for l in 0..4 {
                    let got = out.data()[((c * 8 + i) * 8 + j) * 4 + l];
                    let want = if i == 0 {
                        0.0 // vacated plane zero-filled
                    } else {
                        grid.data()[((c * 8 + (i - 1)) * 8 + j) * 4 + l]
                    };
                    assert_eq!(got, want, "c={c} i={i} j={j} l={l}");
                }
            }
        }
    }
}

#[test]
fn align_yaw_180_twice_recovers_interior() {
    let spec = GridSpec::centered((8, 8, 4), 0.2);
    let grid = rng_tensor(&[1, 8, 8, 4], 9, 1.0);
    let rel = Pose6DoF::new([0.0; 3], [0.0, 0.0, std::f64::consts::PI]);
    let once = align_to_current(&grid, &rel, &spec).unwrap();
    let twice = align_to_current(&once, &rel, &spec).unwrap();
    // every voxel's double pre-image is itself here (no border loss for a
    // centered grid under 180-degree yaw)
    let diff = once
        .data()
        .iter()
        .zip(grid.data().iter())
        .filter(|(a, b)| a != b)
        .count();
    assert!(diff > 0, "180-degree yaw must move content");
    assert_eq!(twice, grid);
}

#[test]
fn align_then_inverse_is_identity_on_interior() {
    let spec = GridSpec::centered((8, 8, 4), 0.2);
    let grid = rng_tensor(&[1, 8, 8, 4], 10, 1.0);
    let rel = Pose6DoF::new([0.4, -0.2, 0.0], [0.0; 3]);
    let fwd = align_to_current(&grid, &rel, &spec).unwrap();
    let back = align_to_current(&fwd, &rel.inverse(), &spec).unwrap();
    // interior: pre-images of pre-images stay in range (2 voxels in x, 1 in y)
    for i in 2..6 {
        for j in 1..7 {
            for l in 0..4 {
                let off = (i * 8 + j) * 4 + l;
                assert_eq!(back.data()[off], grid.data()[off]);
            }
        }
    }
}

#[test]
fn concat_pose_channels_layout() {
    let t = 3;
    let features = rng_tensor(&[t, 8, 4, 4, 2], 11, 1.0);
    let poses = vec![
        Pose6DoF::new([1.0, -2.0, 0.0], [0.0; 3]),
        Pose6DoF::new([0.5, 0.0, 0.0], [0.0, 0.0, 0.1]),
        Pose6DoF::identity(),
    ];
    let out = concat_pose_channels(&features, &poses).unwrap();
    assert_eq!(out.shape(), &[3, 14, 4, 4, 2]); // C=8 -> C+6=14
    let vox = 4 * 4 * 2;
    // first C channels preserved bit-exactly
    for f in 0..t {
        let src = &features.data()[f * 8 * vox..(f + 1) * 8 * vox];
        let dst = &out.data()[f * 14 * vox..f * 14 * vox + 8 * vox];
        assert_eq!(src, dst);
    }
    // current frame (identity relative pose): all six appended channels zero
    let cur = &out.data()[2 * 14 * vox + 8 * vox..3 * 14 * vox];
    assert!(cur.iter().all(|&v| v == 0.0));
    // past frame translation (1, -2, 0): constant channels
    let past = &out.data()[8 * vox..14 * vox];
    let expect = [1.0, -2.0, 0.0, 0.0, 0.0, 0.0];
    for (ch, &e) in expect.iter().enumerate() {
        assert!(past[ch * vox..(ch + 1) * vox].iter().all(|&v| v == e));
    }
}

#[test]
fn concat_pose_channels_wrong_count_is_error() {
    let features = rng_tensor(&[3, 4, 2, 2, 2], 12, 1.0);
    let poses = vec![Pose6DoF::identity(); 2];
    assert!(concat_pose_channels(&features, &poses).is_err());
}

#[test]
fn binary_occupancy_stays_binary_under_alignment() {
    let spec = GridSpec::centered((8, 8, 4), 0.2);
    let grid = Tensor::<f64>::from_fn(&[1, 8, 8, 4], |i| if i % 7 == 0 { 1.0 } else { 0.0 });
    let rel = Pose6DoF::new([0.37, -0.11, 0.0], [0.0, 0.0, 0.21]);
    let out = align_to_current(&grid, &rel, &spec).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.0));
}
