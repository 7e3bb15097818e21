use rayon::prelude::*;

use super::PointCloud;
use crate::error::{MvsError, Result};
use crate::imaging::ScalarField;
use crate::patchmatch::DepthNormalMap;
use crate::spatial::KdTree;

/// Accuracy, completeness and F1 in percent at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub threshold: f64,
    pub accuracy: f64,
    pub completeness: f64,
    pub f1: f64,
}

impl Metrics {
    fn new(threshold: f64, accuracy: f64, completeness: f64) -> Self {
        let f1 = if accuracy + completeness > 0.0 {
            2.0 * accuracy * completeness / (accuracy + completeness)
        } else {
            0.0
        };
        Self {
            threshold,
            accuracy,
            completeness,
            f1,
        }
    }
}

fn nearest_distances(query: &PointCloud, target: &PointCloud) -> Vec<f64> {
    let tree = KdTree::new(target.points.iter().map(|p| [p.x, p.y, p.z]).collect());
    query
        .points
        .par_iter()
        .map(|p| tree.nearest(&[p.x, p.y, p.z]).map_or(f64::INFINITY, |(d2, _)| d2.sqrt()))
        .collect()
}

fn percent_within(distances: &[f64], t: f64) -> f64 {
    100.0 * distances.iter().filter(|d| **d <= t).count() as f64 / distances.len() as f64
}

/// Point-to-point metrics at each threshold, sorted ascending by threshold.
pub fn evaluate(reconstructed: &PointCloud, ground_truth: &PointCloud, thresholds: &[f64]) -> Result<Vec<Metrics>> {
    if reconstructed.is_empty() {
        return Err(MvsError::EmptyCloud("reconstruction has no points".into()));
    }
    if ground_truth.is_empty() {
        return Err(MvsError::EmptyCloud("ground truth has no points".into()));
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let acc = nearest_distances(reconstructed, ground_truth);
    let comp = nearest_distances(ground_truth, reconstructed);
    Ok(ts
        .into_iter()
        .map(|t| Metrics::new(t, percent_within(&acc, t), percent_within(&comp, t)))
        .collect())
}

/// Pooled per-pixel relative depth errors over one or more views.
///
/// Accuracy counts valid estimates within `t` relative error; completeness
/// counts ground-truth pixels recovered within `t`.
#[derive(Debug, Clone, Default)]
pub struct DepthErrors {
    estimated: Vec<f64>,
    reference: Vec<f64>,
}

impl DepthErrors {
    /// Adds one view; `mask` restricts both sides to a pixel subset.
    pub fn add(&mut self, map: &DepthNormalMap, gt: &ScalarField<f64>, mask: Option<&[bool]>) -> Result<()> {
        if map.width() != gt.width() || map.height() != gt.height() {
            return Err(MvsError::invalid("depth map and ground truth differ in size"));
        }
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                if mask.is_some_and(|m| !m[y * gt.width() + x]) {
                    continue;
                }
                let Some(g) = gt.get(x, y) else { continue };
                let err = if map.is_valid(x, y) {
                    let e = (map.hypothesis(x, y).depth - g).abs() / g;
                    self.estimated.push(e);
                    e
                } else {
                    f64::INFINITY
                };
                self.reference.push(err);
            }
        }
        Ok(())
    }

    pub fn metrics(&self, thresholds: &[f64]) -> Result<Vec<Metrics>> {
        if self.reference.is_empty() {
            return Err(MvsError::EmptyCloud("no ground-truth pixels to evaluate".into()));
        }
        let mut ts = thresholds.to_vec();
        ts.sort_by(f64::total_cmp);
        Ok(ts
            .into_iter()
            .map(|t| {
                let acc = if self.estimated.is_empty() { 0.0 } else { percent_within(&self.estimated, t) };
                Metrics::new(t, acc, percent_within(&self.reference, t))
            })
            .collect())
    }
}

/// Depth metrics of a single view.
pub fn evaluate_depth(
    map: &DepthNormalMap,
    gt: &ScalarField<f64>,
    mask: Option<&[bool]>,
    thresholds: &[f64],
) -> Result<Vec<Metrics>> {
    let mut e = DepthErrors::default();
    e.add(map, gt, mask)?;
    e.metrics(thresholds)
}
