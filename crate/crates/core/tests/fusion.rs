use hpmvs::fusion::{evaluate, fuse, read_ply, write_ply, FusionConfig, PlyFormat, PointCloud};
use hpmvs::patchmatch::DepthNormalMap;
use hpmvs::synth::{render, SynthSpec, Template};
use hpmvs::Plane;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ground_truth_maps_fuse_onto_the_plane() {
    let s = render(&SynthSpec {
        template: Template::TexturedPlane,
        views: 2,
        width: 160,
        height: 120,
        ..SynthSpec::default()
    })
    .unwrap();
    let maps: Vec<_> = (0..2)
        .map(|v| DepthNormalMap::from_fields(&s.depth[v], &s.normal[v], None).unwrap())
        .collect();
    let cloud = fuse(&s.scene, &maps, &FusionConfig::default()).unwrap();
    let plane = Plane::from_point_normal(&Vector3::new(0.0, 0.0, 5.0), &Vector3::new(0.15, -0.1, -1.0).normalize());
    assert!(!cloud.is_empty());
    let worst = cloud.points.iter().map(|p| plane.residual(p).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    let gt = s.gt_cloud(1);
    // GT samples sit about 0.035 apart at this resolution.
    let m = evaluate(&cloud, &gt, &[0.05]).unwrap()[0];
    assert!(m.accuracy > 99.9);
}

#[test]
fn evaluation_matches_brute_force_and_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cloud = |n: usize| PointCloud {
        points: (0..n).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect(),
        normals: vec![Vector3::z(); n],
        colors: None,
    };
    let (a, b) = (cloud(1000), cloud(1000));
    let pct = |q: &PointCloud, t: &PointCloud, th: f64| {
        let n = q
            .points
            .iter()
            .filter(|p| t.points.iter().any(|r| (*p - r).norm() <= th))
            .count();
        100.0 * n as f64 / q.len() as f64
    };
    for m in evaluate(&a, &b, &[0.02, 0.05, 0.1]).unwrap() {
        assert!((m.accuracy - pct(&a, &b, m.threshold)).abs() < 0.01);
        assert!((m.completeness - pct(&b, &a, m.threshold)).abs() < 0.01);
    }
    for m in evaluate(&a, &a, &[0.0, 0.5]).unwrap() {
        assert_eq!((m.accuracy, m.completeness, m.f1), (100.0, 100.0, 100.0));
    }
}

#[test]
fn ply_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud {
        points: vec![Vector3::new(0.5, 1.5, -2.0); 3],
        normals: vec![Vector3::new(0.0, 0.6, 0.8); 3],
        colors: None,
    };
    for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let p = dir.path().join("x.ply");
        write_ply(&p, &cloud, f).unwrap();
        let back = read_ply(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert!((back.normals[2] - cloud.normals[2]).norm() < 1e-6);
    }
}
