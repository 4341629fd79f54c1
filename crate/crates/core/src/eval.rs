//! Low-level evaluation: line matching under a known homography,
//! repeatability, localization error, line-based homography estimation and
//! vanishing-point metrics.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{d_vp, orthogonal_distance, structural_distance, CameraIntrinsics, Homography, LineSegment, Point2};
use crate::vp::VanishingPoint;

/// Relative singular-value gap below which a line configuration is
/// treated as degenerate.
const DEGENERACY_TOLERANCE: f64 = 1e-10;
const RANSAC_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKind {
    #[default]
    Structural,
    Orthogonal,
}

impl DistanceKind {
    pub fn distance(self, a: &LineSegment, b: &LineSegment) -> f64 {
        match self {
            DistanceKind::Structural => structural_distance(a, b),
            DistanceKind::Orthogonal => orthogonal_distance(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMatch {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub rep_threshold: f64,
    pub le_top_k: usize,
    pub distance_kind: DistanceKind,
    pub hest_iters: usize,
    pub hest_inlier_threshold: f64,
    pub hest_corner_threshold: f64,
    pub seed: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            rep_threshold: 3.0,
            le_top_k: 50,
            distance_kind: DistanceKind::Structural,
            hest_iters: 1_000_000,
            hest_inlier_threshold: 3.0,
            hest_corner_threshold: 3.0,
            seed: 0,
        }
    }
}

/// Greedy one-to-one matching after mapping `lines_b` into the frame of
/// `lines_a` with `h_gt^-1`. Lines of `b` that cannot be projected are left
/// unmatched.
pub fn match_one_to_one(lines_a: &[LineSegment], lines_b: &[LineSegment], h_gt: &Homography, kind: DistanceKind) -> Vec<LineMatch> {
    let inv = h_gt.inverse();
    let warped: Vec<Option<LineSegment>> = lines_b.iter().map(|l| inv.apply_segment(l).ok()).collect();
    let mut candidates = Vec::with_capacity(lines_a.len() * lines_b.len());
    for (ia, a) in lines_a.iter().enumerate() {
        for (ib, b) in warped.iter().enumerate() {
            if let Some(b) = b {
                candidates.push(LineMatch { index_a: ia, index_b: ib, distance: kind.distance(a, b) });
            }
        }
    }
    candidates.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then(x.index_a.cmp(&y.index_a))
            .then(x.index_b.cmp(&y.index_b))
    });
    let mut used_a = vec![false; lines_a.len()];
    let mut used_b = vec![false; lines_b.len()];
    let mut out = Vec::new();
    for m in candidates {
        if !used_a[m.index_a] && !used_b[m.index_b] {
            used_a[m.index_a] = true;
            used_b[m.index_b] = true;
            out.push(m);
        }
    }
    out
}

/// Share of matches closer than `rep_threshold`, over the smaller of the
/// two detection counts.
pub fn repeatability(matches: &[LineMatch], count_a: usize, count_b: usize, params: &EvalParams) -> Result<f64> {
    let denom = count_a.min(count_b);
    if denom == 0 {
        return Err(Error::EmptyLines);
    }
    let hits = matches.iter().filter(|m| m.distance < params.rep_threshold).count();
    Ok(hits as f64 / denom as f64)
}

/// Mean distance of the `le_top_k` best matches.
pub fn localization_error(matches: &[LineMatch], params: &EvalParams) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::InvalidParameter("localization error needs at least one match"));
    }
    let mut d: Vec<f64> = matches.iter().map(|m| m.distance).collect();
    d.sort_by(f64::total_cmp);
    let k = params.le_top_k.min(d.len()).max(1);
    Ok(d[..k].iter().sum::<f64>() / k as f64)
}

/// Similarity `T` moving the points to zero mean and unit mean distance
/// from the origin.
fn normalizing_transform(points: &[Point2]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_r = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_r > 0.0 { 1.0 / mean_r } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transformed_line(t: &Matrix3<f64>, l: &LineSegment) -> Result<Vector3<f64>> {
    let map = |p: &Point2| {
        let q = t * p.homogeneous();
        Point2::new(q.x / q.z, q.y / q.z)
    };
    Ok(LineSegment::new(map(&l.p1), map(&l.p2))?.homogeneous_line())
}

/// Homography from four or more line correspondences `(a, b)` with
/// `b ~ H a`. Lines map by the inverse transpose, so the linear system is
/// solved for `H^-T` on normalized coordinates.
pub fn homography_from_lines(pairs: &[(LineSegment, LineSegment)]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::DegenerateConfiguration("at least four line pairs are required"));
    }
    let pts_a: Vec<Point2> = pairs.iter().flat_map(|(a, _)| [a.p1, a.p2]).collect();
    let pts_b: Vec<Point2> = pairs.iter().flat_map(|(_, b)| [b.p1, b.p2]).collect();
    let ta = normalizing_transform(&pts_a);
    let tb = normalizing_transform(&pts_b);

    let mut a = DMatrix::zeros(3 * pairs.len(), 9);
    for (k, (la, lb)) in pairs.iter().enumerate() {
        let l = transformed_line(&ta, la)?;
        let lp = transformed_line(&tb, lb)?;
        // rows of lp x (G l) = 0, with G in row-major order
        for c in 0..3 {
            a[(3 * k, 6 + c)] = lp.y * l[c];
            a[(3 * k, 3 + c)] = -lp.z * l[c];
            a[(3 * k + 1, c)] = lp.z * l[c];
            a[(3 * k + 1, 6 + c)] = -lp.x * l[c];
            a[(3 * k + 2, 3 + c)] = lp.x * l[c];
            a[(3 * k + 2, c)] = -lp.y * l[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration("SVD failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[order.len() - 1]];
    if largest == 0.0 || svd.singular_values[order[1]] <= DEGENERACY_TOLERANCE * largest {
        return Err(Error::DegenerateConfiguration("line correspondences do not determine a homography"));
    }
    let g = v_t.row(order[0]);
    let g = Matrix3::new(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8]);
    let hn = g
        .transpose()
        .try_inverse()
        .ok_or(Error::DegenerateConfiguration("line correspondences do not determine a homography"))?;
    let tb_inv = tb.try_inverse().ok_or(Error::SingularHomography)?;
    Homography::new(tb_inv * hn * ta)
}

fn pair_error(h: &Homography, a: &LineSegment, b: &LineSegment) -> f64 {
    h.apply_segment(a).map_or(f64::INFINITY, |w| orthogonal_distance(&w, b))
}

fn canonical_key(p: &(LineSegment, LineSegment)) -> [f64; 8] {
    [p.0.p1.x, p.0.p1.y, p.0.p2.x, p.0.p2.y, p.1.p1.x, p.1.p1.y, p.1.p2.x, p.1.p2.y]
}

/// LO-RANSAC over minimal samples of four line pairs. The returned inlier
/// mask follows the input order.
///
/// A minimal sample always explains itself, so when more than four
/// candidates are given a model needs at least five inliers.
pub fn estimate_homography(pairs: &[(LineSegment, LineSegment)], params: &EvalParams) -> Result<(Homography, Vec<bool>)> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::NoModel);
    }
    let min_support = if n == 4 { 4 } else { 5 };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (ki, kj) = (canonical_key(&pairs[i]), canonical_key(&pairs[j]));
        ki.iter().zip(&kj).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    let sorted: Vec<(LineSegment, LineSegment)> = order.iter().map(|&i| pairs[i]).collect();
    let thr = params.hest_inlier_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut best: Option<(Homography, Vec<bool>, usize, f64)> = None;
    let score = |h: &Homography| {
        let errs: Vec<f64> = sorted.iter().map(|(a, b)| pair_error(h, a, b)).collect();
        let mask: Vec<bool> = errs.iter().map(|e| *e < thr).collect();
        let count = mask.iter().filter(|m| **m).count();
        let total: f64 = errs.iter().filter(|e| **e < thr).sum();
        (mask, count, total)
    };
    let mut needed = params.hest_iters;
    let mut it = 0;
    while it < needed.min(params.hest_iters) {
        it += 1;
        let idx = if n == 4 { vec![0, 1, 2, 3] } else { sample(&mut rng, n, 4).into_vec() };
        let subset: Vec<_> = idx.iter().map(|&i| sorted[i]).collect();
        let Ok(h) = homography_from_lines(&subset) else { continue };
        let (mut mask, mut count, mut total) = score(&h);
        let mut h = h;
        // local optimization: refit on the inliers while support grows
        loop {
            if count < 5 {
                break;
            }
            let inl: Vec<_> = sorted.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
            let Ok(h2) = homography_from_lines(&inl) else { break };
            let (m2, c2, t2) = score(&h2);
            if c2 > count || (c2 == count && t2 < total) {
                h = h2;
                mask = m2;
                count = c2;
                total = t2;
            } else {
                break;
            }
        }
        let better = match &best {
            None => true,
            Some((_, _, c, t)) => count > *c || (count == *c && total < *t),
        };
        if better {
            best = Some((h, mask, count, total));
            let w = count as f64 / n as f64;
            let p_all = w.powi(4);
            needed = if p_all >= 1.0 {
                it
            } else if p_all <= 0.0 {
                params.hest_iters
            } else {
                let k = (1.0 - RANSAC_CONFIDENCE).ln() / (1.0 - p_all).ln();
                (k.ceil() as usize).max(1)
            };
        }
        if n == 4 {
            break;
        }
    }
    match best {
        Some((h, mask, count, _)) if count >= min_support => {
            let mut out = vec![false; n];
            for (k, &i) in order.iter().enumerate() {
                out[i] = mask[k];
            }
            Ok((h, out))
        }
        _ => Err(Error::NoModel),
    }
}

/// Mean distance between the image corners mapped by the two homographies.
pub fn corner_error(h_est: &Homography, h_gt: &Homography, width: f64, height: f64) -> Result<f64> {
    let corners = [Point2::new(0.0, 0.0), Point2::new(width, 0.0), Point2::new(width, height), Point2::new(0.0, height)];
    let mut sum = 0.0;
    for c in &corners {
        sum += h_est.apply_point(c)?.distance(&h_gt.apply_point(c)?);
    }
    Ok(sum / 4.0)
}

/// Fraction of estimated homographies whose corner error is within the
/// configured threshold.
pub fn homography_score(corner_errors: &[f64], params: &EvalParams) -> f64 {
    if corner_errors.is_empty() {
        return 0.0;
    }
    corner_errors.iter().filter(|e| **e <= params.hest_corner_threshold).count() as f64 / corner_errors.len() as f64
}

fn lower_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// For each threshold, the fraction of ground-truth lines within that
/// `d_vp` of the VP assigned to their cluster. Clusters and VPs are paired
/// greedily by median `d_vp`, each VP used once; unpaired clusters count as
/// misses.
pub fn vp_consistency(clusters: &[Vec<LineSegment>], vps: &[VanishingPoint], thresholds: &[f64]) -> Vec<f64> {
    let total: usize = clusters.iter().map(Vec::len).sum();
    if total == 0 {
        return vec![0.0; thresholds.len()];
    }
    let mut pairs = Vec::new();
    for (c, lines) in clusters.iter().enumerate() {
        if lines.is_empty() {
            continue;
        }
        for (v, vp) in vps.iter().enumerate() {
            let med = lower_median(lines.iter().map(|l| d_vp(l, vp)).collect());
            pairs.push((med, c, v));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cluster_vp: Vec<Option<usize>> = vec![None; clusters.len()];
    let mut vp_used = vec![false; vps.len()];
    for (_, c, v) in pairs {
        if cluster_vp[c].is_none() && !vp_used[v] {
            cluster_vp[c] = Some(v);
            vp_used[v] = true;
        }
    }
    let dists: Vec<f64> = clusters
        .iter()
        .zip(&cluster_vp)
        .flat_map(|(lines, v)| lines.iter().map(move |l| v.map_or(f64::INFINITY, |v| d_vp(l, &vps[v]))))
        .collect();
    thresholds
        .iter()
        .map(|t| dists.iter().filter(|d| **d < *t).count() as f64 / total as f64)
        .collect()
}

/// Minimum-cost assignment of each row to a distinct column; requires
/// `rows <= cols`.
fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = (cost.nrows(), cost.ncols());
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Angle in degrees between two 3D directions, sign-agnostic.
pub fn direction_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = (a.normalize().dot(&b.normalize())).abs().min(1.0);
    c.acos().to_degrees()
}

/// Pairs ground-truth 3D directions with predicted VPs by minimum total
/// angular error and returns the angular errors (degrees), one per pair.
pub fn vp_angular_errors(gt_directions: &[Vector3<f64>], predicted: &[VanishingPoint], k: &CameraIntrinsics) -> Vec<f64> {
    if gt_directions.is_empty() || predicted.is_empty() {
        return Vec::new();
    }
    let pred: Vec<Vector3<f64>> = predicted.iter().map(|v| k.back_project(v.as_vector())).collect();
    let (rows, cols) = (gt_directions.len(), pred.len());
    let angle = |i: usize, j: usize| direction_angle_deg(&gt_directions[i], &pred[j]);
    if rows <= cols {
        let cost = DMatrix::from_fn(rows, cols, angle);
        hungarian(&cost).iter().enumerate().map(|(i, &j)| cost[(i, j)]).collect()
    } else {
        let cost = DMatrix::from_fn(cols, rows, |j, i| angle(i, j));
        hungarian(&cost).iter().enumerate().map(|(j, &i)| cost[(j, i)]).collect()
    }
}

/// Median angular error (degrees) and area under the recall curve on
/// `[0, max_angle_deg]`. Unmatched ground truth counts as never recalled.
/// No predictions yields `(inf, 0)`.
pub fn vp_error_auc(gt_directions: &[Vector3<f64>], predicted: &[VanishingPoint], k: &CameraIntrinsics, max_angle_deg: f64) -> (f64, f64) {
    let mut errs = vp_angular_errors(gt_directions, predicted, k);
    if errs.is_empty() {
        return (f64::INFINITY, 0.0);
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 { errs[n / 2] } else { 0.5 * (errs[n / 2 - 1] + errs[n / 2]) };
    // recall is a step function, integrated exactly
    let area: f64 = errs.iter().map(|e| (max_angle_deg - e).max(0.0)).sum();
    (median, area / (gt_directions.len() as f64 * max_angle_deg))
}
