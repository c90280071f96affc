use super::LumaImage;
use crate::error::{Error, Result};

/// Catmull-Rom parameter of the cubic convolution kernel.
const CUBIC_A: f64 = -0.5;

/// Half-sample symmetric reflection: `-1 -> 0`, `n -> n - 1`. Valid for any
/// `n >= 1` and any signed index.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

pub fn validate_factor(factor: usize) -> Result<()> {
    if (2..=4).contains(&factor) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "scale factor must be 2, 3 or 4, got {factor}"
        )))
    }
}

fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Per-output-sample taps `(source indices, weights)` for one axis.
struct Taps {
    index: Vec<usize>,
    weight: Vec<f64>,
    width: usize,
}

impl Taps {
    fn cubic(input: usize, factor: usize) -> Self {
        let out = input * factor;
        let mut index = Vec::with_capacity(out * 4);
        let mut weight = Vec::with_capacity(out * 4);
        for o in 0..out {
            // Pixel centres aligned: output centre o maps to input coordinate x.
            let x = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = x.floor();
            let frac = x - base;
            let mut w = [0.0; 4];
            for (t, wt) in w.iter_mut().enumerate() {
                *wt = cubic_weight(frac - (t as f64 - 1.0));
            }
            let sum: f64 = w.iter().sum();
            for (t, wt) in w.iter().enumerate() {
                index.push(reflect_index(base as isize + t as isize - 1, input));
                weight.push(wt / sum);
            }
        }
        Self {
            index,
            weight,
            width: 4,
        }
    }

    /// Gaussian taps centred on the low-resolution pixel centres
    /// `factor * i + (factor - 1) / 2` of the input grid.
    fn gaussian(input: usize, factor: usize) -> Self {
        let out = (input / factor).max(1);
        let sigma = gaussian_sigma(factor);
        let radius = (3.0 * sigma).ceil();
        let offset = (factor as f64 - 1.0) / 2.0;
        let lo_off = (offset - radius).ceil() as isize;
        let hi_off = (offset + radius).floor() as isize;
        let width = (hi_off - lo_off + 1) as usize;
        let mut index = Vec::with_capacity(out * width);
        let mut weight = Vec::with_capacity(out * width);
        for o in 0..out {
            let start = (o * factor) as isize;
            let centre = start as f64 + offset;
            let row: Vec<f64> = (lo_off..=hi_off)
                .map(|k| {
                    let d = (start + k) as f64 - centre;
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let sum: f64 = row.iter().sum();
            for (k, w) in (lo_off..=hi_off).zip(row) {
                index.push(reflect_index(start + k, input));
                weight.push(w / sum);
            }
        }
        Self {
            index,
            weight,
            width,
        }
    }

    fn len(&self) -> usize {
        self.index.len() / self.width
    }

    #[inline]
    fn apply(&self, o: usize, sample: impl Fn(usize) -> f64) -> f64 {
        let s = o * self.width;
        let mut acc = 0.0;
        for t in s..s + self.width {
            acc += self.weight[t] * sample(self.index[t]);
        }
        acc
    }
}

fn separable(img: &LumaImage, rows: &Taps, cols: &Taps) -> LumaImage {
    let (h, w) = img.dims();
    let out_w = cols.len();
    let out_h = rows.len();
    let mut horizontal = vec![0.0; h * out_w];
    for r in 0..h {
        let src = &img.data()[r * w..(r + 1) * w];
        for c in 0..out_w {
            horizontal[r * out_w + c] = cols.apply(c, |i| src[i]);
        }
    }
    LumaImage::from_fn(out_h, out_w, |r, c| {
        rows.apply(r, |i| horizontal[i * out_w + c])
    })
}

/// Bicubic (Catmull-Rom) interpolation by an integer factor in `{2, 3, 4}`.
pub fn upsample(img: &LumaImage, factor: usize) -> Result<LumaImage> {
    validate_factor(factor)?;
    let rows = Taps::cubic(img.height(), factor);
    let cols = Taps::cubic(img.width(), factor);
    Ok(separable(img, &rows, &cols))
}

/// Anti-alias standard deviation for decimation by `factor`.
pub fn gaussian_sigma(factor: usize) -> f64 {
    let f = factor as f64;
    0.8 * (f * f - 1.0).sqrt()
}

/// Gaussian anti-alias blur with reflected borders, sampled at the centres
/// of the coarse grid. Output is `max(1, dim / factor)` per axis; trailing
/// rows/columns that do not fill a whole cell are dropped.
pub fn downsample(img: &LumaImage, factor: usize) -> Result<LumaImage> {
    if factor < 2 {
        return Err(Error::invalid(format!(
            "downsampling factor must be at least 2, got {factor}"
        )));
    }
    let rows = Taps::gaussian(img.height(), factor);
    let cols = Taps::gaussian(img.width(), factor);
    Ok(separable(img, &rows, &cols))
}

/// `D(U(y))`: the input with the same loss of detail that `U(y)` has
/// relative to the unknown high-resolution image.
pub fn smooth_input(img: &LumaImage, factor: usize) -> Result<LumaImage> {
    downsample(&upsample(img, factor)?, factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_oracle(img: &LumaImage, factor: usize) -> LumaImage {
        // Direct 2-D convolution with the stated kernel, no separability.
        let sigma = gaussian_sigma(factor);
        let radius = (3.0 * sigma).ceil();
        let off = (factor as f64 - 1.0) / 2.0;
        let (h, w) = (img.height() / factor, img.width() / factor);
        LumaImage::from_fn(h, w, |r, c| {
            let (cy, cx) = ((r * factor) as f64 + off, (c * factor) as f64 + off);
            let (mut acc, mut norm) = (0.0, 0.0);
            let lo_y = (cy - radius).ceil() as isize;
            let hi_y = (cy + radius).floor() as isize;
            let lo_x = (cx - radius).ceil() as isize;
            let hi_x = (cx + radius).floor() as isize;
            for y in lo_y..=hi_y {
                for x in lo_x..=hi_x {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    let g = (-d2 / (2.0 * sigma * sigma)).exp();
                    acc += g * img.get_reflect(y, x);
                    norm += g;
                }
            }
            acc / norm
        })
    }

    #[test]
    fn reflect_covers_small_sizes() {
        assert_eq!(reflect_index(-1, 1), 0);
        assert_eq!(reflect_index(3, 1), 0);
        assert_eq!(reflect_index(-1, 4), 0);
        assert_eq!(reflect_index(-2, 4), 1);
        assert_eq!(reflect_index(4, 4), 3);
        assert_eq!(reflect_index(5, 4), 2);
    }

    #[test]
    fn upsample_constant() {
        let img = LumaImage::filled(4, 4, 0.3);
        let up = upsample(&img, 2).unwrap();
        assert_eq!(up.dims(), (8, 8));
        assert!(up.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn upsample_single_pixel() {
        let img = LumaImage::filled(1, 1, 0.7);
        for f in 2..=4 {
            let up = upsample(&img, f).unwrap();
            assert_eq!(up.dims(), (f, f));
            assert!(up.data().iter().all(|v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn upsample_reproduces_ramp_in_interior() {
        let img = LumaImage::from_fn(6, 12, |_, c| 0.05 * c as f64);
        let f = 2;
        let up = upsample(&img, f).unwrap();
        for r in 0..up.height() {
            // Interior: all four taps land inside the source.
            for c in 4..up.width() - 4 {
                let x = (c as f64 + 0.5) / f as f64 - 0.5;
                assert!((up.get(r, c) - 0.05 * x).abs() < 1e-12);
            }
            for c in 4..up.width() - 5 {
                let slope = up.get(r, c + 1) - up.get(r, c);
                assert!((slope - 0.025).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_rejects_bad_factor() {
        let img = LumaImage::filled(2, 2, 0.0);
        assert!(upsample(&img, 1).is_err());
        assert!(upsample(&img, 5).is_err());
    }

    #[test]
    fn downsample_constant_and_roundtrip() {
        let img = LumaImage::filled(12, 12, 0.42);
        for f in 2..=4 {
            let d = downsample(&img, f).unwrap();
            assert_eq!(d.dims(), (12 / f, 12 / f));
            assert!(d.data().iter().all(|v| (v - 0.42).abs() < 1e-14));
            let s = smooth_input(&img, f).unwrap();
            assert_eq!(s.dims(), img.dims());
            assert!(s.data().iter().all(|v| (v - 0.42).abs() < 1e-14));
        }
    }

    #[test]
    fn downsample_impulse_matches_direct_convolution() {
        for f in 2..=4 {
            let mut img = LumaImage::filled(24, 24, 0.0);
            img.set(11, 13, 1.0);
            let fast = downsample(&img, f).unwrap();
            let slow = gaussian_oracle(&img, f);
            assert_eq!(fast.dims(), slow.dims());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-13, "factor {f}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn downsample_non_divisible_crops() {
        let img = LumaImage::filled(10, 7, 0.5);
        let d = downsample(&img, 3).unwrap();
        assert_eq!(d.dims(), (3, 2));
    }

    #[test]
    fn smooth_input_attenuates_checkerboard() {
        let img = LumaImage::from_fn(12, 12, |r, c| ((r + c) % 2) as f64);
        let f = 2;
        let smoothed = smooth_input(&img, f).unwrap();
        // Independent route: explicit cubic interpolation, then the 2-D
        // Gaussian oracle.
        let up = LumaImage::from_fn(24, 24, |r, c| {
            let y = (r as f64 + 0.5) / 2.0 - 0.5;
            let x = (c as f64 + 0.5) / 2.0 - 0.5;
            let (by, bx) = (y.floor(), x.floor());
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for i in -1..=2 {
                for j in -1..=2 {
                    let w = cubic_weight(y - (by + i as f64)) * cubic_weight(x - (bx + j as f64));
                    acc += w * img.get_reflect(by as isize + i, bx as isize + j);
                    wsum += w;
                }
            }
            acc / wsum
        });
        let oracle = gaussian_oracle(&up, f);
        for (a, b) in smoothed.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let amp = |im: &LumaImage| {
            let mx = im.data().iter().cloned().fold(f64::MIN, f64::max);
            let mn = im.data().iter().cloned().fold(f64::MAX, f64::min);
            mx - mn
        };
        assert!(amp(&smoothed) < 0.5 * amp(&img));
    }
}
