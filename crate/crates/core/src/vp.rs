//! Vanishing points: minimal two-line solver, sequential multi-model
//! RANSAC and length-weighted least-squares refinement.

use std::cmp::Ordering;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{d_vp, d_vp_raw, LineSegment, Point2};
use crate::lm::{least_squares, LmOptions};

/// Homogeneous image point with unit norm. The sign is canonical: last
/// nonzero component positive, so `v` and `-v` compare equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanishingPoint {
    v: Vector3<f64>,
}

impl VanishingPoint {
    pub fn from_homogeneous(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateConfiguration("vanishing point must be a nonzero finite vector"));
        }
        let mut v = v / n;
        let sign_ref = if v.z != 0.0 {
            v.z
        } else if v.y != 0.0 {
            v.y
        } else {
            v.x
        };
        if sign_ref < 0.0 {
            v = -v;
        }
        Ok(Self { v })
    }

    pub fn from_point(p: &Point2) -> Result<Self> {
        Self::from_homogeneous(p.homogeneous())
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.v
    }

    /// Finite image position, `None` for points (numerically) at infinity.
    pub fn to_point(&self) -> Option<Point2> {
        (self.v.z.abs() > 1e-12).then(|| Point2::new(self.v.x / self.v.z, self.v.y / self.v.z))
    }

    /// Angle between the two homogeneous directions, ignoring sign.
    pub fn angular_distance(&self, other: &VanishingPoint) -> f64 {
        self.v.dot(&other.v).abs().min(1.0).acos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpParams {
    /// `t_vp`: a line supports a VP when `d_vp < inlier_threshold` (pixels).
    pub inlier_threshold: f64,
    pub min_support: usize,
    pub max_models: usize,
    pub ransac_iters: usize,
    pub seed: u64,
}

impl Default for VpParams {
    fn default() -> Self {
        Self { inlier_threshold: 1.5, min_support: 5, max_models: 8, ransac_iters: 1000, seed: 0 }
    }
}

/// Per-line VP index, `None` for unassigned lines.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VpAssignment(pub Vec<Option<usize>>);

impl VpAssignment {
    pub fn inliers_of(&self, vp: usize) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, a)| (*a == Some(vp)).then_some(i))
            .collect()
    }
}

/// Intersection of the two infinite lines supporting the segments.
pub fn vp_from_two_lines(l1: &LineSegment, l2: &LineSegment) -> Result<VanishingPoint> {
    let v = l1.homogeneous_line().cross(&l2.homogeneous_line());
    if v.norm() < 1e-12 {
        return Err(Error::IdenticalLines);
    }
    VanishingPoint::from_homogeneous(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpRefinement {
    pub vp: VanishingPoint,
    /// `sum_j length_j * d_vp(l_j, vp)^2` at the returned VP.
    pub cost: f64,
    pub converged: bool,
}

/// Length-weighted squared `d_vp` cost of a VP over its inliers.
pub fn vp_cost(v: &VanishingPoint, inliers: &[LineSegment]) -> f64 {
    inliers.iter().map(|l| l.length() * d_vp(l, v).powi(2)).sum()
}

/// Similarity moving the line endpoints to zero mean and unit mean radius.
fn normalizing_transform(lines: &[LineSegment]) -> Matrix3<f64> {
    let pts: Vec<Point2> = lines.iter().flat_map(|l| [l.p1, l.p2]).collect();
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_r = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_r > 1e-12 { 1.0 / mean_r } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Orthonormal basis of the plane orthogonal to `v`.
fn tangent_basis(v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let b1 = v.cross(&helper).normalize();
    let b2 = v.cross(&b1).normalize();
    (b1, b2)
}

/// Minimize `sum_j length_j * d_vp(l_j, v)^2` over the sphere of
/// homogeneous VPs, starting from `v`.
pub fn refine_vp(v: &VanishingPoint, inliers: &[LineSegment]) -> Result<VpRefinement> {
    let weights: Vec<f64> = inliers.iter().map(LineSegment::length).collect();
    refine_vp_weighted(v, inliers, &weights)
}

fn weighted_cost(v: &VanishingPoint, lines: &[LineSegment], weights: &[f64]) -> f64 {
    lines.iter().zip(weights).map(|(l, w)| w * d_vp(l, v).powi(2)).sum()
}

/// [`refine_vp`] with explicit non-negative per-line weights.
pub fn refine_vp_weighted(v: &VanishingPoint, inliers: &[LineSegment], weights: &[f64]) -> Result<VpRefinement> {
    if inliers.len() < 2 {
        return Err(Error::DegenerateConfiguration("VP refinement needs at least two inliers"));
    }
    if weights.len() != inliers.len() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter("one non-negative weight per inlier is required"));
    }
    let initial_cost = weighted_cost(v, inliers, weights);
    let t = normalizing_transform(inliers);
    let t_inv = t.try_inverse().expect("similarity is invertible");
    let lines_n: Vec<LineSegment> = inliers
        .iter()
        .map(|l| {
            let a = t * l.p1.homogeneous();
            let b = t * l.p2.homogeneous();
            LineSegment { p1: Point2::new(a.x, a.y), p2: Point2::new(b.x, b.y) }
        })
        .collect();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let mut current = (t * v.as_vector()).normalize();
    let mut converged = false;
    // re-center the chart a few times so large corrections stay well conditioned
    for _ in 0..4 {
        let (b1, b2) = tangent_basis(&current);
        let base = current;
        let point = |x: &DVector<f64>| (base + b1 * x[0] + b2 * x[1]).normalize();
        let residuals = |x: &DVector<f64>| {
            let p = point(x);
            DVector::from_iterator(lines_n.len(), lines_n.iter().zip(&sqrt_w).map(|(l, w)| w * d_vp_raw(l, &p)))
        };
        let opts = LmOptions { diff_step: 1e-7, max_iterations: 100, ..Default::default() };
        let res = least_squares(residuals, DVector::zeros(2), &opts);
        current = point(&res.x);
        converged = res.converged;
        if res.x.amax() < 1e-3 {
            break;
        }
    }
    let refined = VanishingPoint::from_homogeneous(t_inv * current)?;
    let cost = weighted_cost(&refined, inliers, weights);
    if !(cost <= initial_cost) {
        return Ok(VpRefinement { vp: *v, cost: initial_cost, converged: false });
    }
    Ok(VpRefinement { vp: refined, cost, converged })
}

/// Assign each line to the VP with the smallest `d_vp`, when below the
/// threshold.
pub fn assign_lines(lines: &[LineSegment], vps: &[VanishingPoint], threshold: f64) -> VpAssignment {
    VpAssignment(
        lines
            .iter()
            .map(|l| {
                vps.iter()
                    .enumerate()
                    .map(|(j, v)| (j, d_vp(l, v)))
                    .filter(|(_, d)| *d < threshold)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(j, _)| j)
            })
            .collect(),
    )
}

fn canonical_order(lines: &[LineSegment]) -> Vec<usize> {
    let key = |l: &LineSegment| {
        let (a, b) = if (l.p1.x, l.p1.y) <= (l.p2.x, l.p2.y) { (l.p1, l.p2) } else { (l.p2, l.p1) };
        [a.x, a.y, b.x, b.y]
    };
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&i, &j| {
        let (ki, kj) = (key(&lines[i]), key(&lines[j]));
        ki.iter()
            .zip(&kj)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    order
}

struct Support {
    vp: VanishingPoint,
    score: f64,
    members: Vec<usize>,
}

fn support(lines: &[LineSegment], pool: &[usize], vp: VanishingPoint, threshold: f64) -> Support {
    let members: Vec<usize> = pool.iter().copied().filter(|&i| d_vp(&lines[i], &vp) < threshold).collect();
    let score = members.iter().map(|&i| lines[i].length()).sum();
    Support { vp, score, members }
}

const TRIM_ROUNDS: usize = 3;
const TRIM_SIGMAS: f64 = 2.5;
const TRIM_FLOOR: f64 = 1e-6;

/// Local optimization over a support set: the VP through a pair of members
/// with the highest truncated quadratic score over all members.
fn local_best(members: &[LineSegment], start: VanishingPoint, threshold: f64, max_pairs: usize, rng: &mut ChaCha8Rng) -> VanishingPoint {
    let score = |v: &VanishingPoint| -> f64 {
        members.iter().map(|l| l.length() * (1.0 - (d_vp(l, v) / threshold).powi(2)).max(0.0)).sum()
    };
    let mut best = (score(&start), start);
    for (a, b) in sample_pairs(members.len(), max_pairs, rng) {
        let Ok(v) = vp_from_two_lines(&members[a], &members[b]) else {
            continue;
        };
        let s = score(&v);
        if s > best.0 {
            best = (s, v);
        }
    }
    best.1
}

fn sample_pairs(n: usize, max_pairs: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n * (n - 1) / 2 <= max_pairs {
        return (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    }
    (0..max_pairs)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect()
}

/// Refines a candidate on its support. Before each refit, members whose
/// residual exceeds `TRIM_SIGMAS` robust standard deviations (scale from the
/// median residual) are left out.
fn trimmed_refine(members: &[LineSegment], start: VanishingPoint) -> Option<VanishingPoint> {
    let mut vp = start;
    let mut last: Option<Vec<bool>> = None;
    for _ in 0..TRIM_ROUNDS {
        let res: Vec<f64> = members.iter().map(|l| d_vp(l, &vp)).collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = (TRIM_SIGMAS * 1.4826 * sorted[sorted.len() / 2]).max(TRIM_FLOOR);
        let keep: Vec<bool> = res.iter().map(|r| *r <= cut).collect();
        if last.as_ref() == Some(&keep) {
            break;
        }
        let kept: Vec<LineSegment> = members.iter().zip(&keep).filter(|(_, k)| **k).map(|(l, _)| *l).collect();
        if kept.len() < 2 {
            break;
        }
        vp = refine_vp(&vp, &kept).ok()?.vp;
        last = Some(keep);
    }
    last.map(|_| vp)
}

/// Sequential greedy multi-model RANSAC.
///
/// Candidates come from pairs of still-unassigned lines (all pairs when
/// their count does not exceed `ransac_iters`, random pairs otherwise) and
/// are scored by the total length of their inliers. The best candidate is
/// kept when it has at least `min_support` inliers; it is locally optimized
/// and refined with residual trimming, its
/// inliers are assigned and removed, and the search repeats.
pub fn fit_vps(lines: &[LineSegment], params: &VpParams) -> Result<(Vec<VanishingPoint>, VpAssignment)> {
    if lines.len() < 2 {
        return Err(Error::DegenerateConfiguration("VP fitting needs at least two lines"));
    }
    if params.min_support < 2 || !(params.inlier_threshold > 0.0) {
        return Err(Error::InvalidParameter("VP fitting needs min_support >= 2 and a positive threshold"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pool = canonical_order(lines);
    let mut vps = Vec::new();
    let mut assignment = vec![None; lines.len()];

    while vps.len() < params.max_models && pool.len() >= params.min_support {
        let pairs = sample_pairs(pool.len(), params.ransac_iters, &mut rng);
        let mut best: Option<Support> = None;
        for (a, b) in pairs {
            let Ok(vp) = vp_from_two_lines(&lines[pool[a]], &lines[pool[b]]) else {
                continue;
            };
            let s = support(lines, &pool, vp, params.inlier_threshold);
            if best.as_ref().is_none_or(|b| s.score > b.score) {
                best = Some(s);
            }
        }
        let Some(best) = best.filter(|b| b.members.len() >= params.min_support) else {
            break;
        };

        let members: Vec<LineSegment> = best.members.iter().map(|&i| lines[i]).collect();
        let start = local_best(&members, best.vp, params.inlier_threshold, params.ransac_iters, &mut rng);
        let chosen = match trimmed_refine(&members, start) {
            Some(vp) => {
                let refined = support(lines, &pool, vp, params.inlier_threshold);
                if refined.members.len() >= params.min_support { refined } else { best }
            }
            None => best,
        };
        let k = vps.len();
        for &i in &chosen.members {
            assignment[i] = Some(k);
        }
        pool.retain(|i| !chosen.members.contains(i));
        vps.push(chosen.vp);
    }
    Ok((vps, VpAssignment(assignment)))
}
