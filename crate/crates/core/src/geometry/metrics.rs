use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// Default F-score threshold in normalized object units.
pub const FSCORE_TAU: f64 = 0.1;

/// Distance from each point of `from` to its nearest neighbor in `to`.
pub fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| p.distance_sq(*q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

fn check(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        Err(Error::Empty("point cloud"))
    } else {
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fscore_from(d_ab: &[f64], d_ba: &[f64], tau: f64) -> f64 {
    let precision = d_ab.iter().filter(|&&d| d < tau).count() as f64 / d_ab.len() as f64;
    let recall = d_ba.iter().filter(|&&d| d < tau).count() as f64 / d_ba.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Symmetric chamfer distance: the average of the two directed mean
/// nearest-neighbor L2 (unsquared) distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check(a, b)?;
    let d_ab = nearest_distances(&a.points, &b.points);
    let d_ba = nearest_distances(&b.points, &a.points);
    Ok(0.5 * (mean(&d_ab) + mean(&d_ba)))
}

/// Harmonic mean of precision (`pred` points within `tau` of `gt`) and recall.
pub fn fscore(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<f64> {
    check(pred, gt)?;
    let d_ab = nearest_distances(&pred.points, &gt.points);
    let d_ba = nearest_distances(&gt.points, &pred.points);
    Ok(fscore_from(&d_ab, &d_ba, tau))
}

/// Both metrics from one pair of nearest-neighbor sweeps: `(chamfer, fscore)`.
pub fn chamfer_and_fscore(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<(f64, f64)> {
    check(pred, gt)?;
    let d_ab = nearest_distances(&pred.points, &gt.points);
    let d_ba = nearest_distances(&gt.points, &pred.points);
    Ok((0.5 * (mean(&d_ab) + mean(&d_ba)), fscore_from(&d_ab, &d_ba, tau)))
}
