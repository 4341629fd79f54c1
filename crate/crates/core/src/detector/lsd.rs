//! Region-growing segment extraction with a-contrario validation.
//!
//! Works on any magnitude/angle pair: the 2x2 image gradient or the
//! surrogate gradient of a distance/angle field. Angles are gradient
//! directions; the level-line direction used during growth is the gradient
//! rotated by +pi/2.
//!
//! All internal geometry is in pixel-index coordinates; the caller shifts the
//! result into image coordinates.

use std::f64::consts::{LN_10, PI};

use crate::fields::ScalarField;
use crate::geometry::{circular_distance, wrap_signed};

use super::{AnglePeriod, DetectorParams};

const NOTDEF: f64 = -1024.0;
const LANCZOS_Q: [f64; 7] = [
    75122.6331530,
    80916.6278952,
    36308.2951477,
    8687.24529705,
    1168.92649479,
    83.8676043424,
    2.50662827511,
];

/// Log-gamma via the Lanczos approximation.
pub fn log_gamma(x: f64) -> f64 {
    let mut a = (x + 0.5) * (x + 5.5).ln() - (x + 5.5);
    let mut b = 0.0;
    for (n, q) in LANCZOS_Q.iter().enumerate() {
        a -= (x + n as f64).ln();
        b += q * x.powi(n as i32);
    }
    a + b.ln()
}

/// `-log10(NFA)` of observing `k` aligned points among `n` with alignment
/// probability `p`, given `log_nt = log10(number of tests)`.
pub fn nfa(n: u64, k: u64, p: f64, log_nt: f64) -> f64 {
    const TOLERANCE: f64 = 0.1;
    if n == 0 || k == 0 {
        return -log_nt;
    }
    if n == k {
        return -log_nt - n as f64 * p.log10();
    }
    let (nf, kf) = (n as f64, k as f64);
    let p_term = p / (1.0 - p);
    let log1term = log_gamma(nf + 1.0) - log_gamma(kf + 1.0) - log_gamma(nf - kf + 1.0)
        + kf * p.ln()
        + (nf - kf) * (1.0 - p).ln();
    let mut term = log1term.exp();
    if term == 0.0 || term.abs() < f64::MIN_POSITIVE * 1e3 {
        return if kf > nf * p { -log1term / LN_10 - log_nt } else { -log_nt };
    }
    let mut bin_tail = term;
    for i in (k + 1)..=n {
        let fi = i as f64;
        let bin_term = (nf - fi + 1.0) / fi;
        let mult_term = bin_term * p_term;
        term *= mult_term;
        bin_tail += term;
        if bin_term < 1.0 {
            let err = term * ((1.0 - mult_term.powf(nf - fi + 1.0)) / (1.0 - mult_term) - 1.0);
            if err < TOLERANCE * (-bin_tail.log10() - log_nt).abs() * bin_tail {
                break;
            }
        }
    }
    -bin_tail.log10() - log_nt
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    width: f64,
    theta: f64,
    dx: f64,
    dy: f64,
    prec: f64,
    p: f64,
}

impl Rect {
    fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }
}

/// One accepted rectangle, in pixel-index coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDetection {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub width: f64,
    /// `log10(NFA)` of the accepted rectangle (lower is more significant).
    pub log_nfa: f64,
    /// Region pixel count over rectangle area when the region was accepted.
    pub density: f64,
}

struct Extractor<'a> {
    width: usize,
    height: usize,
    magnitude: &'a ScalarField,
    /// level-line angles, `NOTDEF` where the magnitude is too small
    angles: Vec<f64>,
    used: Vec<bool>,
    period: f64,
    log_nt: f64,
}

impl Extractor<'_> {
    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    fn is_aligned(&self, x: usize, y: usize, theta: f64, prec: f64) -> bool {
        let a = self.angles[self.idx(x, y)];
        a != NOTDEF && circular_distance(theta, a, self.period) <= prec
    }

    fn region_grow(&mut self, seed: (usize, usize), prec: f64) -> (Vec<(usize, usize)>, f64) {
        let k = 2.0 * PI / self.period;
        let a0 = self.angles[self.idx(seed.0, seed.1)];
        let mut reg_angle = a0;
        let mut sum_c = (k * a0).cos();
        let mut sum_s = (k * a0).sin();
        let mut reg = vec![seed];
        let seed_idx = self.idx(seed.0, seed.1);
        self.used[seed_idx] = true;
        let mut i = 0;
        while i < reg.len() {
            let (px, py) = reg[i];
            for yy in py.saturating_sub(1)..=(py + 1).min(self.height - 1) {
                for xx in px.saturating_sub(1)..=(px + 1).min(self.width - 1) {
                    let j = self.idx(xx, yy);
                    if !self.used[j] && self.is_aligned(xx, yy, reg_angle, prec) {
                        self.used[j] = true;
                        reg.push((xx, yy));
                        let a = self.angles[j];
                        sum_c += (k * a).cos();
                        sum_s += (k * a).sin();
                        reg_angle = sum_s.atan2(sum_c) / k;
                    }
                }
            }
            i += 1;
        }
        (reg, reg_angle)
    }

    fn region_to_rect(&self, reg: &[(usize, usize)], reg_angle: f64, prec: f64, p: f64) -> Rect {
        let mut sum = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for &(x, y) in reg {
            let w = self.magnitude.get(x, y);
            cx += x as f64 * w;
            cy += y as f64 * w;
            sum += w;
        }
        cx /= sum;
        cy /= sum;

        let (mut ixx, mut iyy, mut ixy) = (0.0, 0.0, 0.0);
        for &(x, y) in reg {
            let w = self.magnitude.get(x, y);
            let (ddx, ddy) = (x as f64 - cx, y as f64 - cy);
            ixx += ddy * ddy * w;
            iyy += ddx * ddx * w;
            ixy -= ddx * ddy * w;
        }
        let lambda = 0.5 * (ixx + iyy - ((ixx - iyy) * (ixx - iyy) + 4.0 * ixy * ixy).sqrt());
        let mut theta = if ixx.abs() > iyy.abs() {
            (lambda - ixx).atan2(ixy)
        } else {
            ixy.atan2(lambda - iyy)
        };
        if self.period > PI && circular_distance(theta, reg_angle, 2.0 * PI) > prec {
            theta += PI;
        }

        let (dx, dy) = (theta.cos(), theta.sin());
        let (mut l_min, mut l_max, mut w_min, mut w_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for &(x, y) in reg {
            let (ddx, ddy) = (x as f64 - cx, y as f64 - cy);
            let l = ddx * dx + ddy * dy;
            let w = -ddx * dy + ddy * dx;
            l_min = l_min.min(l);
            l_max = l_max.max(l);
            w_min = w_min.min(w);
            w_max = w_max.max(w);
        }
        Rect {
            x1: cx + l_min * dx,
            y1: cy + l_min * dy,
            x2: cx + l_max * dx,
            y2: cy + l_max * dy,
            width: (w_max - w_min).max(1.0),
            theta,
            dx,
            dy,
            prec,
            p,
        }
    }

    /// `-log10(NFA)` of a rectangle.
    fn rect_nfa(&self, rect: &Rect) -> f64 {
        let len = rect.length();
        let half_w = 0.5 * rect.width;
        let corners = [
            (rect.x1 - rect.dy * half_w, rect.y1 + rect.dx * half_w),
            (rect.x2 - rect.dy * half_w, rect.y2 + rect.dx * half_w),
            (rect.x2 + rect.dy * half_w, rect.y2 - rect.dx * half_w),
            (rect.x1 + rect.dy * half_w, rect.y1 - rect.dx * half_w),
        ];
        let xmin = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).ceil().max(0.0) as usize;
        let xmax = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).floor();
        let ymin = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).ceil().max(0.0) as usize;
        let ymax = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).floor();
        if xmax < 0.0 || ymax < 0.0 {
            return -self.log_nt;
        }
        let xmax = (xmax as usize).min(self.width - 1);
        let ymax = (ymax as usize).min(self.height - 1);
        const EPS: f64 = 1e-9;
        let (mut n, mut k) = (0u64, 0u64);
        for y in ymin..=ymax {
            for x in xmin..=xmax {
                let (ddx, ddy) = (x as f64 - rect.x1, y as f64 - rect.y1);
                let l = ddx * rect.dx + ddy * rect.dy;
                let w = -ddx * rect.dy + ddy * rect.dx;
                if l < -EPS || l > len + EPS || w.abs() > half_w + EPS {
                    continue;
                }
                n += 1;
                if self.is_aligned(x, y, rect.theta, rect.prec) {
                    k += 1;
                }
            }
        }
        nfa(n, k, rect.p, self.log_nt)
    }

    fn set_precision(&self, rect: &mut Rect, p: f64) {
        rect.p = p;
        rect.prec = p * self.period / 2.0;
    }

    fn rect_improve(&self, rect: &mut Rect, log_eps: f64) -> f64 {
        const DELTA: f64 = 0.5;
        const DELTA_2: f64 = DELTA / 2.0;
        let mut log_nfa = self.rect_nfa(rect);
        if log_nfa > log_eps {
            return log_nfa;
        }

        let mut r = *rect;
        for _ in 0..5 {
            let half = r.p / 2.0;
            self.set_precision(&mut r, half);
            let v = self.rect_nfa(&r);
            if v > log_nfa {
                log_nfa = v;
                *rect = r;
            }
        }
        if log_nfa > log_eps {
            return log_nfa;
        }

        let mut r = *rect;
        for _ in 0..5 {
            if r.width - DELTA >= 0.5 {
                r.width -= DELTA;
                let v = self.rect_nfa(&r);
                if v > log_nfa {
                    log_nfa = v;
                    *rect = r;
                }
            }
        }
        if log_nfa > log_eps {
            return log_nfa;
        }

        for side in [1.0, -1.0] {
            let mut r = *rect;
            for _ in 0..5 {
                if r.width - DELTA >= 0.5 {
                    r.x1 += -r.dy * DELTA_2 * side;
                    r.y1 += r.dx * DELTA_2 * side;
                    r.x2 += -r.dy * DELTA_2 * side;
                    r.y2 += r.dx * DELTA_2 * side;
                    r.width -= DELTA;
                    let v = self.rect_nfa(&r);
                    if v > log_nfa {
                        log_nfa = v;
                        *rect = r;
                    }
                }
            }
            if log_nfa > log_eps {
                return log_nfa;
            }
        }

        let mut r = *rect;
        for _ in 0..5 {
            let half = r.p / 2.0;
            self.set_precision(&mut r, half);
            let v = self.rect_nfa(&r);
            if v > log_nfa {
                log_nfa = v;
                *rect = r;
            }
        }
        log_nfa
    }

    fn density(reg_len: usize, rect: &Rect) -> f64 {
        reg_len as f64 / (rect.length() * rect.width)
    }

    fn reduce_region_radius(
        &mut self,
        reg: &mut Vec<(usize, usize)>,
        reg_angle: f64,
        prec: f64,
        p: f64,
        rect: &mut Rect,
        density_th: f64,
        max_retries: usize,
    ) -> bool {
        let mut density = Self::density(reg.len(), rect);
        if density >= density_th {
            return true;
        }
        let (xc, yc) = (reg[0].0 as f64, reg[0].1 as f64);
        let rad1 = (xc - rect.x1).hypot(yc - rect.y1);
        let rad2 = (xc - rect.x2).hypot(yc - rect.y2);
        let mut rad = rad1.max(rad2);
        let mut retries = 0;
        while density < density_th {
            if retries == max_retries {
                return false;
            }
            retries += 1;
            rad *= 0.75;
            let mut kept = Vec::with_capacity(reg.len());
            for &(x, y) in reg.iter() {
                if (xc - x as f64).hypot(yc - y as f64) <= rad {
                    kept.push((x, y));
                } else {
                    let j = self.idx(x, y);
                    self.used[j] = false;
                }
            }
            *reg = kept;
            if reg.len() < 2 {
                return false;
            }
            *rect = self.region_to_rect(reg, reg_angle, prec, p);
            density = Self::density(reg.len(), rect);
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        reg: &mut Vec<(usize, usize)>,
        reg_angle: &mut f64,
        prec: f64,
        p: f64,
        rect: &mut Rect,
        density_th: f64,
        max_retries: usize,
    ) -> bool {
        if reg.len() <= 1 {
            return false;
        }
        if Self::density(reg.len(), rect) >= density_th {
            return true;
        }

        // tighten the angle tolerance around the seed
        let seed = reg[0];
        let (xc, yc) = (seed.0 as f64, seed.1 as f64);
        let ang_c = self.angles[self.idx(seed.0, seed.1)];
        let (mut sum, mut s_sum, mut n) = (0.0, 0.0, 0usize);
        for &(x, y) in reg.iter() {
            let j = self.idx(x, y);
            self.used[j] = false;
            if (xc - x as f64).hypot(yc - y as f64) < rect.width {
                let d = wrap_signed(self.angles[j] - ang_c, self.period);
                sum += d;
                s_sum += d * d;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let tau = 2.0 * ((s_sum - 2.0 * mean * sum) / n as f64 + mean * mean).max(0.0).sqrt();

        let (new_reg, new_angle) = self.region_grow(seed, tau);
        *reg = new_reg;
        *reg_angle = new_angle;
        if reg.len() <= 1 {
            return false;
        }
        *rect = self.region_to_rect(reg, *reg_angle, prec, p);
        if Self::density(reg.len(), rect) < density_th {
            return self.reduce_region_radius(reg, *reg_angle, prec, p, rect, density_th, max_retries);
        }
        true
    }
}

/// Run region growing and validation on a magnitude/gradient-angle pair.
/// Results are in pixel-index coordinates (the value of pixel `(i, j)` sits
/// at `(i, j)`).
pub fn extract_raw(magnitude: &ScalarField, angle: &ScalarField, params: &DetectorParams) -> Vec<RawDetection> {
    let (w, h) = (magnitude.width(), magnitude.height());
    if w == 0 || h == 0 || angle.width() != w || angle.height() != h {
        return Vec::new();
    }
    let period = params.angle_period.radians();
    let prec = params.angle_tolerance;
    let p = 2.0 * prec / period;
    let log_nt = 2.5 * ((w as f64).log10() + (h as f64).log10());
    let min_reg_size = (-log_nt / p.log10()).max(0.0) as usize;
    let log_eps = -params.log_nfa_max;

    let mut angles = vec![NOTDEF; w * h];
    let mut max_mag = 0.0f64;
    for (i, (&m, &a)) in magnitude.data().iter().zip(angle.data()).enumerate() {
        if m > params.mag_threshold {
            angles[i] = match params.angle_period {
                AnglePeriod::TwoPi => wrap_signed(a + 0.5 * PI, 2.0 * PI),
                AnglePeriod::Pi => wrap_signed(a + 0.5 * PI, PI),
            };
            max_mag = max_mag.max(m);
        }
    }
    if max_mag <= 0.0 {
        return Vec::new();
    }

    // pseudo-ordering by magnitude bins, strongest first
    let n_bins = params.n_bins.max(1);
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &m) in magnitude.data().iter().enumerate() {
        if angles[i] != NOTDEF {
            let b = ((m * n_bins as f64 / max_mag) as usize).min(n_bins - 1);
            bins[b].push(i);
        }
    }

    let mut ex = Extractor {
        width: w,
        height: h,
        magnitude,
        angles,
        used: vec![false; w * h],
        period,
        log_nt,
    };

    let mut out = Vec::new();
    for &i in bins.iter().rev().flatten() {
        if ex.used[i] || ex.angles[i] == NOTDEF {
            continue;
        }
        let seed = (i % w, i / w);
        let (mut reg, mut reg_angle) = ex.region_grow(seed, prec);
        if reg.len() < min_reg_size {
            continue;
        }
        let mut rect = ex.region_to_rect(&reg, reg_angle, prec, p);
        if !ex.refine(
            &mut reg,
            &mut reg_angle,
            prec,
            p,
            &mut rect,
            params.density_threshold,
            params.max_radius_retries,
        ) {
            continue;
        }
        let density = Extractor::density(reg.len(), &rect);
        let neg_log_nfa = ex.rect_improve(&mut rect, log_eps);
        if neg_log_nfa < log_eps {
            continue;
        }
        if (rect.x2 - rect.x1).hypot(rect.y2 - rect.y1) <= 0.0 {
            continue;
        }
        out.push(RawDetection {
            x1: rect.x1,
            y1: rect.y1,
            x2: rect.x2,
            y2: rect.y2,
            width: rect.width,
            log_nfa: -neg_log_nfa,
            density,
        });
    }
    out
}
