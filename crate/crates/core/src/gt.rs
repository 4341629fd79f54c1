//! Pseudo ground truth by homography adaptation: detect lines on randomly
//! warped copies of an image, bring them back, and take per-pixel medians
//! of the resulting fields.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::detector::{detect, DetectSource, DetectorParams};
use crate::error::{Error, Result};
use crate::fields::{render_fields, FieldPair, ScalarField};
use crate::geometry::{circular_distance_pi, clip_segment, Homography, LineSegment, Point2};

/// Clipped segments shorter than this are dropped by [`warp_lines`].
pub const MIN_CLIPPED_LENGTH: f64 = 5.0;

/// Angle assigned to pixels of a warp in which nothing was detected.
pub const EMPTY_WARP_ANGLE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HomographySamplerParams {
    /// Radians.
    pub max_rotation: f64,
    pub scale_range: (f64, f64),
    /// Fraction of the image width/height.
    pub max_translation_frac: f64,
    pub max_perspective: f64,
    pub seed: u64,
}

impl Default for HomographySamplerParams {
    fn default() -> Self {
        Self {
            max_rotation: 30f64.to_radians(),
            scale_range: (0.7, 1.4),
            max_translation_frac: 0.1,
            max_perspective: 0.1,
            seed: 0,
        }
    }
}

impl HomographySamplerParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParameter("scale range must be positive and ordered"));
        }
        if !(0.0..0.5).contains(&self.max_translation_frac) || !(0.0..0.5).contains(&self.max_perspective) {
            return Err(Error::InvalidParameter("translation and perspective fractions must lie in [0, 0.5)"));
        }
        if !(self.max_rotation >= 0.0 && self.max_rotation.is_finite()) {
            return Err(Error::InvalidParameter("max rotation must be non-negative"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draw number `draw_index` of the random homography stream defined by
/// `params.seed`. The transform acts about the image center.
pub fn sample_homography(params: &HomographySamplerParams, width: usize, height: usize, draw_index: u64) -> Result<Homography> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(draw_index);
    let (w, h) = (width.max(1) as f64, height.max(1) as f64);
    let angle = uniform(&mut rng, -params.max_rotation, params.max_rotation);
    let scale = uniform(&mut rng, params.scale_range.0, params.scale_range.1);
    let tx = uniform(&mut rng, -params.max_translation_frac, params.max_translation_frac) * w;
    let ty = uniform(&mut rng, -params.max_translation_frac, params.max_translation_frac) * h;
    let px = uniform(&mut rng, -params.max_perspective, params.max_perspective) / w;
    let py = uniform(&mut rng, -params.max_perspective, params.max_perspective) / h;

    let (s, c) = angle.sin_cos();
    let to_center = Matrix3::new(1.0, 0.0, -0.5 * w, 0.0, 1.0, -0.5 * h, 0.0, 0.0, 1.0);
    let from_center = Matrix3::new(1.0, 0.0, 0.5 * w + tx, 0.0, 1.0, 0.5 * h + ty, 0.0, 0.0, 1.0);
    let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let sc = Matrix3::new(scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, 1.0);
    let persp = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, px, py, 1.0);
    Homography::new(from_center * rot * sc * persp * to_center)
}

/// Map segments through `h` and clip them to `[0, width] x [0, height]`.
/// Segments that leave the image, that cannot be projected, or that are
/// shortened below [`MIN_CLIPPED_LENGTH`] by clipping are dropped.
pub fn warp_lines(lines: &[LineSegment], h: &Homography, width: usize, height: usize) -> Vec<LineSegment> {
    lines
        .iter()
        .filter_map(|l| {
            let warped = h.apply_segment(l).ok()?;
            let clipped = clip_segment(&warped, 0.0, 0.0, width as f64, height as f64)?;
            if clipped != warped && clipped.length() < MIN_CLIPPED_LENGTH {
                return None;
            }
            Some(clipped)
        })
        .collect()
}

fn sample_replicated(img: &ScalarField, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let tx = x - x0 as f64;
    let ty = y - y0 as f64;
    let top = img.get(x0, y0) * (1.0 - tx) + img.get(x1, y0) * tx;
    let bottom = img.get(x0, y1) * (1.0 - tx) + img.get(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Image seen through `h`: output pixel `p` takes the input value at
/// `h^-1 p`, bilinearly interpolated with border replication.
pub fn warp_image(image: &ScalarField, h: &Homography) -> Result<ScalarField> {
    let (w, ht) = (image.width(), image.height());
    if w == 0 || ht == 0 {
        return Err(Error::TooSmallImage { width: w, height: ht });
    }
    let inv = h.inverse();
    let m = inv.matrix();
    let mut data = vec![0.0; w * ht];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            let q = m * p.homogeneous();
            *out = if q.z.abs() <= 1e-12 {
                sample_replicated(image, -1.0, -1.0)
            } else {
                sample_replicated(image, q.x / q.z - 0.5, q.y / q.z - 0.5)
            };
        }
    });
    ScalarField::new(w, ht, data)
}

fn circular_median(sorted: &[f64]) -> f64 {
    let mut best = sorted[0];
    let mut best_cost = f64::INFINITY;
    for &a in sorted {
        let cost: f64 = sorted.iter().map(|&b| circular_distance_pi(a, b)).sum();
        // strict comparison over ascending candidates keeps the smallest on ties
        if cost < best_cost {
            best_cost = cost;
            best = a;
        }
    }
    best
}

/// Per-pixel median of the distance fields (lower middle for even counts)
/// and circular median of the angle fields.
pub fn aggregate_median(pairs: &[FieldPair]) -> Result<FieldPair> {
    let first = pairs.first().ok_or(Error::InvalidParameter("at least one field pair is required"))?;
    for p in &pairs[1..] {
        first.df.same_shape(&p.df)?;
        if p.r != first.r {
            return Err(Error::InvalidParameter("all field pairs must share the same radius"));
        }
    }
    let (w, h) = (first.width(), first.height());
    let n = pairs.len();
    let mut df = vec![0.0; w * h];
    let mut af = vec![0.0; w * h];
    df.par_chunks_mut(w.max(1))
        .zip(af.par_chunks_mut(w.max(1)))
        .enumerate()
        .for_each(|(y, (df_row, af_row))| {
            let mut ds = Vec::with_capacity(n);
            let mut angles = Vec::with_capacity(n);
            for x in 0..w {
                ds.clear();
                angles.clear();
                for p in pairs {
                    ds.push(p.df.get(x, y));
                    angles.push(p.af.get(x, y));
                }
                ds.sort_by(f64::total_cmp);
                angles.sort_by(f64::total_cmp);
                df_row[x] = ds[(n - 1) / 2];
                af_row[x] = circular_median(&angles);
            }
        });
    FieldPair::new(ScalarField::new(w, h, df)?, ScalarField::new(w, h, af)?, first.r)
}

/// Fields assigned to a warp in which nothing was detected.
fn empty_fields(width: usize, height: usize, r: f64) -> Result<FieldPair> {
    let diag = (width as f64).hypot(height as f64);
    FieldPair::new(ScalarField::filled(width, height, diag), ScalarField::filled(width, height, EMPTY_WARP_ANGLE), r)
}

/// Homography adaptation over `n_homographies` warps, the first being the
/// identity. Fails when more than half of the warps yield no lines.
pub fn generate_pseudo_gt(
    image: &ScalarField,
    n_homographies: usize,
    detector: &DetectorParams,
    sampler: &HomographySamplerParams,
    r: f64,
) -> Result<FieldPair> {
    if n_homographies == 0 {
        return Err(Error::InvalidParameter("at least one homography is required"));
    }
    sampler.validate()?;
    let (w, h) = (image.width(), image.height());
    let per_warp: Vec<Option<FieldPair>> = (0..n_homographies)
        .into_par_iter()
        .map(|k| {
            let (warped, hom) = if k == 0 {
                (image.clone(), Homography::identity())
            } else {
                let hom = sample_homography(sampler, w, h, k as u64)?;
                (warp_image(image, &hom)?, hom)
            };
            let lines = detect(DetectSource::Image(&warped), detector, None)?;
            let back = if k == 0 { lines } else { warp_lines(&lines, &hom.inverse(), w, h) };
            if back.is_empty() {
                Ok(None)
            } else {
                render_fields(&back, w, h, r).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let empty = per_warp.iter().filter(|p| p.is_none()).count();
    if 2 * empty > n_homographies {
        return Err(Error::InsufficientSignal { empty, total: n_homographies });
    }
    let pairs = per_warp
        .into_iter()
        .map(|p| p.map_or_else(|| empty_fields(w, h, r), Ok))
        .collect::<Result<Vec<_>>>()?;
    aggregate_median(&pairs)
}
