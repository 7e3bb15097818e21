use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{MvsError, Result};

/// Delaunay triangles over 2D points as index triples (counter-clockwise).
///
/// Fails with a degenerate-support error for fewer than three points or a
/// collinear set.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 3 {
        return Err(MvsError::DegenerateSupport(format!(
            "triangulation needs 3 points, got {}",
            points.len()
        )));
    }
    let sites: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    // Stable loading keeps vertex handles equal to input indices.
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(sites)
        .map_err(|e| MvsError::DegenerateSupport(format!("triangulation failed: {e:?}")))?;
    let tris: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect();
    if tris.is_empty() {
        return Err(MvsError::DegenerateSupport("all points are collinear".into()));
    }
    Ok(tris)
}

/// Assigns every pixel covered by a triangle to the first such triangle.
pub(crate) fn rasterize(
    points: &[[f64; 2]],
    tris: &[[usize; 3]],
    width: usize,
    height: usize,
) -> Vec<Option<u32>> {
    let mut owner = vec![None; width * height];
    for (t, tri) in tris.iter().enumerate() {
        let [a, b, c] = tri.map(|i| points[i]);
        let x0 = a[0].min(b[0]).min(c[0]).ceil().max(0.0) as usize;
        let y0 = a[1].min(b[1]).min(c[1]).ceil().max(0.0) as usize;
        let x1 = (a[0].max(b[0]).max(c[0]).floor() as usize).min(width.saturating_sub(1));
        let y1 = (a[1].max(b[1]).max(c[1]).floor() as usize).min(height.saturating_sub(1));
        let area = edge(a, b, c);
        if area.abs() < 1e-12 {
            continue;
        }
        let tol = -1e-9 * area.abs();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64, y as f64];
                let s = area.signum();
                if s * edge(a, b, p) >= tol && s * edge(b, c, p) >= tol && s * edge(c, a, p) >= tol {
                    let slot = &mut owner[y * width + x];
                    if slot.is_none() {
                        *slot = Some(t as u32);
                    }
                }
            }
        }
    }
    owner
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}
