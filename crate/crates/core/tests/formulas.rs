use hpmvs::patchmatch::{extension_threshold, PropagationConfig};
use hpmvs::prior::{prior_assisted_cost, PriorConfig};
use hpmvs::Hypothesis;
use nalgebra::Vector3;

fn table(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn extension_threshold_matches_high_precision_table() {
    let cfg = PropagationConfig::default();
    let rows = table(include_str!("data/extension_threshold.txt"));
    assert_eq!(rows.len(), 1000);
    for r in rows {
        let (t, e) = (r[0] as usize, r[1] as usize);
        let got = extension_threshold(cfg.tau_good, cfg.alpha, cfg.max_extensions, t, e);
        assert!((got - r[2]).abs() <= 1e-12, "t_iter={t} t_ext={e}: {got} vs {}", r[2]);
    }
}

#[test]
fn extension_threshold_reaches_tau_good_at_the_last_level() {
    let cfg = PropagationConfig::default();
    for t in 1..200 {
        assert_eq!(extension_threshold(cfg.tau_good, cfg.alpha, 3, t, 3), 0.8);
    }
    let first = extension_threshold(0.8, 90.0, 3, 1, 0);
    assert!((first - 0.8 * (-1.0f64 / 30.0).exp()).abs() < 1e-15);
    assert!((first - 0.77377).abs() < 5e-6);
}

#[test]
fn single_precision_threshold_tracks_double() {
    let d = extension_threshold(0.8f64, 90.0, 3, 5, 1);
    let s = extension_threshold(0.8f32, 90.0, 3, 5, 1);
    assert!((d - s as f64).abs() < 1e-6);
}

/// Hypotheses deviating from a fronto-parallel prior at depth 5 by a relative
/// depth error and a rotation about the x axis.
fn deviated(dd: f64, angle: f64) -> (Hypothesis, Hypothesis) {
    let prior = Hypothesis {
        depth: 5.0,
        normal: Vector3::new(0.0, 0.0, -1.0),
    };
    let h = Hypothesis {
        depth: 5.0 * (1.0 + dd),
        normal: Vector3::new(0.0, angle.sin(), -angle.cos()),
    };
    (h, prior)
}

#[test]
fn prior_cost_matches_high_precision_table() {
    let cfg = PriorConfig::default();
    for r in table(include_str!("data/prior_cost.txt")) {
        let (h, p) = deviated(r[1], r[2]);
        let got = prior_assisted_cost(r[0], &h, Some(&p), &cfg);
        assert!((got - r[3]).abs() < 1e-12, "{r:?}: {got}");
    }
}

#[test]
fn prior_cost_contract() {
    let cfg = PriorConfig::default();
    let (h, _) = deviated(0.0, 0.0);
    for c in [0.0, 0.3, 1.0, 2.0] {
        assert_eq!(prior_assisted_cost(c, &h, Some(&h), &cfg), c);
        let (far, _) = deviated(0.05, 0.4);
        assert_eq!(prior_assisted_cost(c, &far, None, &cfg), c);
    }
    // Monotone in both deviations over a 100x100 grid.
    let grid: Vec<Vec<f64>> = (0..100)
        .map(|i| {
            (0..100)
                .map(|j| {
                    let (h, p) = deviated(0.001 * i as f64, 0.01 * j as f64);
                    prior_assisted_cost(0.5, &h, Some(&p), &cfg)
                })
                .collect()
        })
        .collect();
    for i in 0..100 {
        for j in 0..100 {
            if i > 0 {
                assert!(grid[i][j] >= grid[i - 1][j]);
            }
            if j > 0 {
                assert!(grid[i][j] >= grid[i][j - 1]);
            }
        }
    }
    let bound = 0.5 + cfg.eta * ((cfg.gamma + 1.0) / cfg.gamma).ln();
    assert!(grid[99][99] <= bound + 1e-12);
}
