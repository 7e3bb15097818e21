use hpmvs::geometry::{homography, warp, CameraModel, Hypothesis};
use hpmvs::scene::{format_camera, parse_camera};
use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn random_camera(rng: &mut ChaCha8Rng) -> CameraModel<f64> {
    let axis = Vector3::new(rng.random(), rng.random(), rng.random::<f64>()) - Vector3::repeat(0.5);
    let r = Rotation3::new(axis * 0.4).into_inner();
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
    let f = rng.random_range(300.0..900.0);
    CameraModel::simple(f, (320.0, 240.0), r, t, [0.5, 50.0], 640, 480).unwrap()
}

#[test]
fn homography_agrees_with_lift_transform_project() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 10_000 {
        let (a, b) = (random_camera(&mut rng), random_camera(&mut rng));
        let px = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let ray = a.ray(&px);
        let n = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), -1.0);
        let h = Hypothesis::new(rng.random_range(1.0..20.0), n, &ray);
        // A nearby pixel on the same plane.
        let q = px + Vector2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
        let qray = a.ray(&q);
        let plane_d = -h.normal.dot(&(ray * h.depth));
        let denom = h.normal.dot(&qray);
        if denom.abs() < 1e-3 {
            continue;
        }
        let depth_q = -plane_d / denom;
        if depth_q <= 0.0 {
            continue;
        }
        let world = a.camera_to_world(&(qray * depth_q));
        let Some(expected) = b.project(&b.world_to_camera(&world)) else { continue };
        let hom = homography(&a, &b, &px, &h).unwrap();
        let got = warp(&hom, &q).unwrap();
        worst = worst.max((got - expected).norm());
        checked += 1;
    }
    assert!(worst < 1e-8, "worst {worst} px");
}

#[test]
fn identical_cameras_give_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let a = random_camera(&mut rng);
        let px = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let h = Hypothesis::new(rng.random_range(1.0..20.0), Vector3::new(0.2, -0.1, -1.0), &a.ray(&px));
        let hom = homography(&a, &a, &px, &h).unwrap();
        let hom = hom / hom[(2, 2)];
        assert!((hom - Matrix3::identity()).abs().max() < 1e-12);
    }
}

#[test]
fn project_inverts_backproject() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let c = random_camera(&mut rng);
        let px = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let d = rng.random_range(0.5..50.0);
        let world = c.camera_to_world(&c.backproject(&px, d).unwrap());
        let back = c.project(&c.world_to_camera(&world)).unwrap();
        assert!((back - px).norm() < 1e-9);
    }
}

#[test]
fn camera_text_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let c = random_camera(&mut rng);
        let back = parse_camera(&format_camera(&c), Path::new("cam.txt"), 640, 480).unwrap();
        assert!((back.intrinsics() - c.intrinsics()).abs().max() < 1e-9);
        assert!((back.rotation() - c.rotation()).abs().max() < 1e-12);
        assert!((back.translation() - c.translation()).abs().max() < 1e-12);
    }
}
