use hpmvs::hpm::{manifest, run_basic, run_geometric, run_scene, HpmSchedule, RunOptions, Variant};
use hpmvs::patchmatch::{DepthNormalMap, PropagationConfig};
use hpmvs::prior::PriorConfig;
use hpmvs::scene::{Scene, View};
use hpmvs::synth::{render, SynthSpec, Template};
use hpmvs::{Camera, GrayImage};
use nalgebra::{Matrix3, Vector2, Vector3};

fn scene(template: Template, views: usize) -> hpmvs::synth::SynthScene {
    render(&SynthSpec {
        template,
        views,
        width: 80,
        height: 60,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn quick() -> PropagationConfig {
    PropagationConfig {
        iterations: 2,
        ..PropagationConfig::default()
    }
}

fn schedule(variant: Variant) -> HpmSchedule {
    HpmSchedule {
        variant,
        gc_rounds: 1,
        ..HpmSchedule::default()
    }
}

/// Round-trip reprojection error of each valid pixel of `a` through map `b`.
fn reprojection_errors(ca: &Camera, a: &DepthNormalMap, cb: &Camera, b: &DepthNormalMap) -> Vec<f64> {
    let mut errs = Vec::new();
    for y in 0..a.height() {
        for x in 0..a.width() {
            if !a.is_valid(x, y) {
                continue;
            }
            let px = Vector2::new(x as f64, y as f64);
            let world = ca.camera_to_world(&(ca.ray(&px) * a.hypothesis(x, y).depth));
            let Some(q) = cb.project(&cb.world_to_camera(&world)) else { continue };
            let (qx, qy) = (q.x.round(), q.y.round());
            if qx < 0.0 || qy < 0.0 || qx >= b.width() as f64 || qy >= b.height() as f64 {
                continue;
            }
            let (qx, qy) = (qx as usize, qy as usize);
            if !b.is_valid(qx, qy) {
                continue;
            }
            let qp = Vector2::new(qx as f64, qy as f64);
            let back = cb.camera_to_world(&(cb.ray(&qp) * b.hypothesis(qx, qy).depth));
            if let Some(r) = ca.project(&ca.world_to_camera(&back)) {
                errs.push((r - px).norm());
            }
        }
    }
    errs
}

#[test]
fn two_views_are_cross_consistent() {
    let s = scene(Template::TexturedPlane, 2);
    let out = run_scene(&s.scene, &quick(), &PriorConfig::default(), &schedule(Variant::Full), RunOptions::default()).unwrap();
    assert_eq!(out.maps.len(), 2);
    let cams: Vec<_> = s.scene.views.iter().map(|v| &v.camera).collect();
    let mut errs = reprojection_errors(cams[0], &out.maps[0], cams[1], &out.maps[1]);
    assert!(errs.len() > 1000);
    errs.sort_by(f64::total_cmp);
    assert!(errs[errs.len() / 2] < 0.5, "median {}", errs[errs.len() / 2]);
}

#[test]
fn prior_free_schedule_is_basic_plus_geometric() {
    let s = scene(Template::TexturedPlane, 2);
    let cfg = quick();
    let sched = HpmSchedule {
        scale_factors: vec![1],
        prior: false,
        ..schedule(Variant::Full)
    };
    let full = run_scene(&s.scene, &cfg, &PriorConfig::default(), &sched, RunOptions::default()).unwrap();
    let basic = (0..2).map(|i| run_basic(&s.scene, i, &cfg)).collect::<Result<Vec<_>, _>>().unwrap();
    let manual = run_geometric(&s.scene, &cfg, &PriorConfig::default(), &sched, basic, RunOptions::default()).unwrap();
    assert_eq!(full.maps, manual.maps);
}

#[test]
fn fast_and_full_agree_on_a_detail_free_plane() {
    let s = scene(Template::TexturedPlane, 2);
    let run = |v| run_scene(&s.scene, &quick(), &PriorConfig::default(), &schedule(v), RunOptions::default()).unwrap();
    let (fast, full) = (run(Variant::Fast), run(Variant::Full));
    for (a, b) in fast.maps.iter().zip(&full.maps) {
        assert_eq!(a.valid_mask(), b.valid_mask());
    }
    let stages = |r: &hpmvs::hpm::SceneResult| r.reports.iter().filter(|x| x.stage.starts_with("prior")).count();
    assert_eq!(stages(&fast), 2);
    assert_eq!(stages(&full), 6);
}

#[test]
fn finer_prior_scales_never_lose_coverage() {
    let s = scene(Template::TwoPlaneLowtex, 2);
    let out = run_scene(&s.scene, &quick(), &PriorConfig::default(), &schedule(Variant::Full), RunOptions::default()).unwrap();
    for view in &s.scene.views {
        let counts: Vec<usize> = out
            .reports
            .iter()
            .filter(|r| r.view == view.id)
            .filter_map(|r| r.prior_valid)
            .collect();
        assert_eq!(counts.len(), 3);
        assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    }
    let text = manifest(&schedule(Variant::Full), &quick(), &out.reports);
    assert!(text.contains("variant=full\n") && text.contains("prior_scales=4,2,1\n"));
}

#[test]
fn a_view_without_overlap_ends_up_invalid() {
    let mut s = scene(Template::TexturedPlane, 2);
    let c = &s.scene.views[0].camera;
    // Same center, looking backwards.
    let back = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
    let cam = Camera::new(*c.intrinsics(), back, Vector3::zeros(), c.depth_range(), 80, 60).unwrap();
    let image = GrayImage::from_fn(80, 60, |x, y| ((x * 7 + y * 13) % 17) as f32 / 17.0);
    let mut views = s.scene.views.clone();
    views.push(View {
        id: "lost".into(),
        camera: cam,
        image,
    });
    s.scene = Scene::new(views);
    let out = run_scene(&s.scene, &quick(), &PriorConfig::default(), &schedule(Variant::Fast), RunOptions::default()).unwrap();
    assert_eq!(out.maps[2].valid_count(), 0);
    assert!(out.maps[0].valid_count() > 80 * 60 / 2);
}

#[test]
fn parallel_views_do_not_depend_on_thread_count() {
    let s = scene(Template::BoxRoom, 3);
    let opts = RunOptions { parallel_views: true };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_scene(&s.scene, &quick(), &PriorConfig::default(), &schedule(Variant::Fast), opts).unwrap())
    };
    assert_eq!(run(1).maps, run(3).maps);
}
