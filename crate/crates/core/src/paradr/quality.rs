//! Embedding quality measures computed by exhaustive comparison.

use super::embedding::{distance, Point};
use super::neighbors::squared_distance;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

fn ranked(n: usize, dist: impl Fn(usize, usize) -> f64, i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
    order
}

/// Trustworthiness of `low` with respect to `high` at neighborhood size `k`.
///
/// `1 − 2/(nk(2n − 3k − 1)) · Σᵢ Σ_{j ∈ Uᵢ} (r(i, j) − k)` where `Uᵢ` are
/// low-dimensional neighbors absent from the high-dimensional k-neighborhood
/// and `r` is the high-dimensional rank (1-based).
pub fn trustworthiness(high: &Tensor, low: &[Point], k: usize) -> Result<f64> {
    let n = high.rows();
    if low.len() != n {
        return Err(Error::ShapeMismatch("embedding rows".into()));
    }
    if k == 0 || 2 * n < 3 * k + 2 {
        return Err(Error::KTooLarge { k, n });
    }
    let hd = |a: usize, b: usize| squared_distance(high.row_slice(a), high.row_slice(b));
    let ld = |a: usize, b: usize| distance(low[a], low[b]);
    let mut penalty = 0.0;
    let mut rank = vec![0usize; n];
    for i in 0..n {
        for (r, j) in ranked(n, hd, i).into_iter().enumerate() {
            rank[j] = r + 1;
        }
        for j in ranked(n, ld, i).into_iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)
}

/// Mean silhouette coefficient of `points` under `labels`.
///
/// Points in singleton clusters score 0.
pub fn silhouette(points: &[Point], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::ShapeMismatch("labels vs points".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::BadParameters("silhouette needs two labels".into()));
    }
    let mut total = 0.0;
    for (i, &p) in points.iter().enumerate() {
        let mut sum = vec![0.0; classes.len()];
        let mut count = vec![0usize; classes.len()];
        for (j, &q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let c = classes.binary_search(&labels[j]).unwrap();
            sum[c] += distance(p, q);
            count[c] += 1;
        }
        let own = classes.binary_search(&labels[i]).unwrap();
        if count[own] == 0 {
            continue;
        }
        let a = sum[own] / count[own] as f64;
        let b = (0..classes.len())
            .filter(|&c| c != own && count[c] > 0)
            .map(|c| sum[c] / count[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / points.len() as f64)
}

/// Fraction of directed k-nearest-neighbor pairs sharing a label.
pub fn knn_label_purity(data: &Tensor, labels: &[usize], k: usize) -> f64 {
    let knn = super::neighbors::exact_knn(data, k);
    let mut same = 0usize;
    let mut total = 0usize;
    for (i, list) in knn.iter().enumerate() {
        for &(j, _) in list {
            total += 1;
            same += usize::from(labels[i] == labels[j]);
        }
    }
    same as f64 / total.max(1) as f64
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), no collinear vertices.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Inside or on the boundary of a counter-clockwise convex polygon.
pub fn hull_contains(hull: &[Point], p: Point) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        _ => (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-12),
    }
}

/// Root-mean-square distance of `points` to their centroid.
pub fn rms_radius(points: &[Point]) -> f64 {
    let c = super::embedding::centroid(points);
    let ms = points.iter().map(|&p| distance(p, c).powi(2)).sum::<f64>() / points.len().max(1) as f64;
    ms.sqrt()
}
