//! Field-driven line refinement with optional vanishing-point constraints.
//!
//! Each line moves with two degrees of freedom, a rotation about its
//! midpoint and a translation along its normal, so its length never
//! changes. Lines and VPs are refined alternately.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{FieldPair, SampleMode};
use crate::geometry::{d_vp, wrap_signed, LineSegment, Point2};
use crate::lm::{minimize_scalar, LmOptions};
use crate::vp::{assign_lines, fit_vps, refine_vp, VanishingPoint, VpAssignment, VpParams};

/// Finite-difference step, in pixels of endpoint/midpoint motion.
const DIFF_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineParams {
    pub lambda_d: f64,
    pub lambda_a: f64,
    pub lambda_v: f64,
    pub n_opt: usize,
    pub k_alternations: usize,
    /// VP term is dropped for lines farther than this from their VP.
    pub t_vp: f64,
    /// Bound on the lateral move per solver iteration, pixels.
    pub max_lateral_step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            lambda_d: 1.0,
            lambda_a: 1.0,
            lambda_v: 0.2,
            n_opt: 10,
            k_alternations: 5,
            t_vp: 1.5,
            max_lateral_step: 5.0,
            tolerance: 1e-6,
            max_iterations: 50,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_d < 0.0 || self.lambda_a < 0.0 || self.lambda_v < 0.0 {
            return Err(Error::InvalidParameter("refinement weights must be non-negative"));
        }
        if self.n_opt < 2 {
            return Err(Error::InvalidParameter("n_opt must be at least 2"));
        }
        Ok(())
    }
}

/// The three cost terms of a line against the fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub distance: f64,
    pub angle: f64,
    /// `None` when no VP applies.
    pub vp: Option<f64>,
}

impl CostTerms {
    pub fn total(&self, params: &RefineParams) -> f64 {
        let mut c = params.lambda_a * self.angle + params.lambda_d * self.distance;
        if let Some(v) = self.vp {
            if params.lambda_v != 0.0 {
                c += params.lambda_v * v;
            }
        }
        c
    }
}

fn field_terms(l: &LineSegment, fp: &FieldPair, n_opt: usize) -> Result<(f64, f64)> {
    let theta = l.orientation();
    let samples = l.sample_points(n_opt);
    let (mut cd, mut ca) = (0.0, 0.0);
    for p in &samples {
        cd += fp.df.sample_at(p, SampleMode::Linear)?;
        let a = fp.af.sample_at(p, SampleMode::CircularPi)?;
        ca += 1.0 - wrap_signed(a - theta, PI).cos();
    }
    let n = samples.len() as f64;
    Ok((cd / n, ca / n))
}

/// Cost terms of `l`; the VP term is present only when a VP is given and
/// `d_vp <= t_vp`.
pub fn line_cost_terms(l: &LineSegment, fp: &FieldPair, v: Option<&VanishingPoint>, params: &RefineParams) -> Result<CostTerms> {
    let (distance, angle) = field_terms(l, fp, params.n_opt)?;
    let vp = v.map(|v| d_vp(l, v)).filter(|d| *d <= params.t_vp);
    Ok(CostTerms { distance, angle, vp })
}

/// `lambda_A C_A + lambda_D C_D + lambda_V C_V`.
pub fn line_cost(l: &LineSegment, fp: &FieldPair, v: Option<&VanishingPoint>, params: &RefineParams) -> Result<f64> {
    Ok(line_cost_terms(l, fp, v, params)?.total(params))
}

/// Line after rotating by `arc / (L/2)` about its midpoint and shifting
/// by `lateral` along the original normal.
fn moved(l: &LineSegment, arc: f64, lateral: f64) -> LineSegment {
    let half = 0.5 * l.length();
    let (dx, dy) = l.direction();
    let m = l.midpoint();
    let (nx, ny) = (-dy, dx);
    let (s, c) = (arc / half).sin_cos();
    let (rx, ry) = (c * dx - s * dy, s * dx + c * dy);
    let mx = m.x + lateral * nx;
    let my = m.y + lateral * ny;
    LineSegment {
        p1: Point2::new(mx - half * rx, my - half * ry),
        p2: Point2::new(mx + half * rx, my + half * ry),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedLine {
    pub line: LineSegment,
    pub initial_cost: f64,
    pub cost: f64,
    /// The input could not be evaluated (outside the fields) and is
    /// returned unchanged.
    pub flagged: bool,
}

/// Refine one line against the fields and, when within `t_vp`, its VP.
pub fn refine_line(l: &LineSegment, fp: &FieldPair, v: Option<&VanishingPoint>, params: &RefineParams) -> Result<RefinedLine> {
    params.validate()?;
    let initial_cost = match line_cost(l, fp, v, params) {
        Ok(c) => c,
        Err(Error::OutOfBounds { .. }) => {
            return Ok(RefinedLine { line: *l, initial_cost: f64::NAN, cost: f64::NAN, flagged: true });
        }
        Err(e) => return Err(e),
    };
    // VP activity is decided once so the cost stays continuous while moving
    let active_vp = if params.lambda_v != 0.0 { v.filter(|v| d_vp(l, v) <= params.t_vp) } else { None };
    let cost_of = |x: &DVector<f64>| -> f64 {
        let cand = moved(l, x[0], x[1]);
        let Ok((cd, ca)) = field_terms(&cand, fp, params.n_opt) else {
            return f64::INFINITY;
        };
        let mut c = params.lambda_a * ca + params.lambda_d * cd;
        if let Some(v) = active_vp {
            c += params.lambda_v * d_vp(&cand, v);
        }
        c
    };
    let half = 0.5 * l.length();
    let opts = LmOptions {
        max_iterations: params.max_iterations,
        diff_step: DIFF_STEP,
        step_tolerance: params.tolerance,
        cost_tolerance: 1e-15,
        max_step: Some(vec![half * 0.5, params.max_lateral_step]),
    };
    let res = minimize_scalar(cost_of, DVector::zeros(2), &opts);
    let line = moved(l, res.x[0], res.x[1]);
    let cost = line_cost(&line, fp, v, params).unwrap_or(f64::INFINITY);
    if !(cost <= initial_cost) || res.x.iter().all(|v| *v == 0.0) {
        return Ok(RefinedLine { line: *l, initial_cost, cost: initial_cost, flagged: false });
    }
    Ok(RefinedLine { line, initial_cost, cost, flagged: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRefinement {
    pub lines: Vec<LineSegment>,
    pub vps: Vec<VanishingPoint>,
    pub assignment: VpAssignment,
}

/// Alternate per-line refinement and VP refinement for
/// `k_alternations` rounds. VPs are fitted once, on the lines produced by
/// the first (unconstrained) round.
pub fn refine_joint(
    lines: &[LineSegment],
    fp: &FieldPair,
    vp_params: &VpParams,
    params: &RefineParams,
) -> Result<JointRefinement> {
    if lines.is_empty() {
        return Err(Error::EmptyLines);
    }
    params.validate()?;
    let mut current = lines.to_vec();
    let mut vps = Vec::new();
    let mut assignment = VpAssignment(vec![None; lines.len()]);
    for round in 0..params.k_alternations {
        current = current
            .par_iter()
            .enumerate()
            .map(|(i, l)| {
                let v = assignment.0[i].map(|j| &vps[j]);
                refine_line(l, fp, v, params).map(|r| r.line)
            })
            .collect::<Result<Vec<_>>>()?;
        if round == 0 {
            if current.len() >= 2 {
                (vps, assignment) = fit_vps(&current, vp_params)?;
            }
            continue;
        }
        if vps.is_empty() {
            continue;
        }
        for (j, vp) in vps.iter_mut().enumerate() {
            let inliers: Vec<LineSegment> = assignment.inliers_of(j).into_iter().map(|i| current[i]).collect();
            if inliers.len() >= 2 {
                *vp = refine_vp(vp, &inliers)?.vp;
            }
        }
        assignment = assign_lines(&current, &vps, vp_params.inlier_threshold);
    }
    Ok(JointRefinement { lines: current, vps, assignment })
}

/// Per-line refinement without VPs, repeated `k_alternations` times.
pub fn refine_lines(lines: &[LineSegment], fp: &FieldPair, params: &RefineParams) -> Result<Vec<LineSegment>> {
    params.validate()?;
    let mut current = lines.to_vec();
    for _ in 0..params.k_alternations {
        current = current
            .par_iter()
            .map(|l| refine_line(l, fp, None, params).map(|r| r.line))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(current)
}
