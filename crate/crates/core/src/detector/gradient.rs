//! Image gradients for classical detection and for angle orientation.

use crate::error::{Error, Result};
use crate::fields::ScalarField;

/// LSD's 2x2 gradient.
///
/// The value stored at index `(x, y)` is the gradient at the pixel corner
/// shared by pixels `(x, y)` and `(x + 1, y + 1)`, i.e. at image coordinates
/// `(x + 1, y + 1)`. The last row and column have zero magnitude.
pub fn image_gradient(image: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let (w, h) = (image.width(), image.height());
    if w < 2 || h < 2 {
        return Err(Error::TooSmallImage { width: w, height: h });
    }
    let mut mag = ScalarField::filled(w, h, 0.0);
    let mut ang = ScalarField::filled(w, h, 0.0);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let a = image.get(x, y);
            let b = image.get(x + 1, y);
            let c = image.get(x, y + 1);
            let d = image.get(x + 1, y + 1);
            let gx = ((b + d) - (a + c)) / 2.0;
            let gy = ((c + d) - (a + b)) / 2.0;
            mag.set(x, y, gx.hypot(gy));
            ang.set(x, y, gy.atan2(gx));
        }
    }
    Ok((mag, ang))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with border replication.
pub fn gaussian_blur(image: &ScalarField, sigma: f64) -> ScalarField {
    let (w, h) = (image.width(), image.height());
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horizontal = ScalarField::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * image.get(clamp(x as isize + i as isize - radius, w), y))
            .sum()
    });
    ScalarField::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * horizontal.get(x, clamp(y as isize + i as isize - radius, h)))
            .sum()
    })
}

/// Gradient direction at pixel centers, used to orient mod-pi field angles:
/// Gaussian smoothing followed by central differences. Flat areas get 0.
pub fn orientation_gradient_angle(image: &ScalarField, sigma: f64) -> Result<ScalarField> {
    let (w, h) = (image.width(), image.height());
    if w < 2 || h < 2 {
        return Err(Error::TooSmallImage { width: w, height: h });
    }
    let smooth = gaussian_blur(image, sigma);
    Ok(ScalarField::from_fn(w, h, |x, y| {
        let xl = x.saturating_sub(1);
        let xr = (x + 1).min(w - 1);
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        let gx = (smooth.get(xr, y) - smooth.get(xl, y)) / (xr - xl) as f64;
        let gy = (smooth.get(x, yd) - smooth.get(x, yu)) / (yd - yu) as f64;
        gy.atan2(gx)
    }))
}

/// Gaussian-filtered resampling by `scale` (LSD's sampler with
/// `sigma = sigma_scale / scale` when downscaling).
pub fn gaussian_rescale(image: &ScalarField, scale: f64, sigma_scale: f64) -> Result<ScalarField> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("scale must be positive"));
    }
    let sigma = if scale < 1.0 { sigma_scale / scale } else { sigma_scale };
    let (w, h) = (image.width(), image.height());
    let nw = ((w as f64) * scale).floor() as usize;
    let nh = ((h as f64) * scale).floor() as usize;
    if nw < 2 || nh < 2 {
        return Err(Error::TooSmallImage { width: nw, height: nh });
    }
    let radius = (sigma * (2.0 * 3.0 * std::f64::consts::LN_10).sqrt()).ceil() as isize;
    // symmetric boundary, as in the reference sampler
    let reflect = |v: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let mut v = v.rem_euclid(period);
        if v >= n {
            v = period - 1 - v;
        }
        v as usize
    };
    let weights_for = |target: usize| -> (isize, Vec<f64>) {
        let src = target as f64 / scale;
        let center = (src + 0.5).floor() as isize;
        let mut ws: Vec<f64> = (-radius..=radius)
            .map(|i| {
                let d = (center + i) as f64 - src;
                (-0.5 * d * d / (sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = ws.iter().sum();
        ws.iter_mut().for_each(|v| *v /= s);
        (center - radius, ws)
    };
    let horizontal = ScalarField::from_fn(nw, h, |x, y| {
        let (start, ws) = weights_for(x);
        ws.iter()
            .enumerate()
            .map(|(i, kv)| kv * image.get(reflect(start + i as isize, w), y))
            .sum()
    });
    Ok(ScalarField::from_fn(nw, nh, |x, y| {
        let (start, ws) = weights_for(y);
        ws.iter()
            .enumerate()
            .map(|(i, kv)| kv * horizontal.get(x, reflect(start + i as isize, h)))
            .sum()
    }))
}
