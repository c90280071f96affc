//! Seeded synthetic test images on [0, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imagecore::LumaImage;

fn smoothstep(edge: f64, x: f64) -> f64 {
    // Soft edge about one pixel wide, so downsampling does not alias badly.
    (0.5 + (x - edge)).clamp(0.0, 1.0)
}

/// Running-bond brick wall with soft mortar lines and per-brick shade.
/// Bricks are large enough to stay visible after a x3 reduction.
pub fn bricks(h: usize, w: usize, seed: u64) -> LumaImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bh = rng.gen_range(12..17);
    let bw = rng.gen_range(26..38);
    let shades: Vec<f64> = (0..64).map(|_| rng.gen_range(0.45..0.8)).collect();
    LumaImage::from_fn(h, w, |r, c| {
        let row = r / bh;
        let shift = if row % 2 == 0 { 0 } else { bw / 2 };
        let col = (c + shift) / bw;
        // Distance into the brick from its nearest mortar edge.
        let in_r = (r % bh) as f64;
        let in_c = ((c + shift) % bw) as f64;
        let edge = in_r.min(in_c).min(bh as f64 - 1.0 - in_r).min(bw as f64 - 1.0 - in_c);
        let t = smoothstep(1.5, edge);
        0.15 + t * (shades[(row * 7 + col * 3) % shades.len()] - 0.15)
    })
}

/// Oriented sinusoidal stripes.
pub fn stripes(h: usize, w: usize, seed: u64) -> LumaImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let period: f64 = rng.gen_range(12.0..22.0);
    let (s, c) = angle.sin_cos();
    LumaImage::from_fn(h, w, |r, col| {
        let t = (r as f64 * s + col as f64 * c) / period;
        0.5 + 0.35 * (2.0 * std::f64::consts::PI * t).sin()
    })
}

pub fn checkerboard(h: usize, w: usize, cell: usize) -> LumaImage {
    LumaImage::from_fn(h, w, |r, c| if (r / cell + c / cell).is_multiple_of(2) { 0.8 } else { 0.2 })
}

/// Random discs and rectangles with soft edges on a flat background.
pub fn shapes(h: usize, w: usize, seed: u64) -> LumaImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = LumaImage::filled(h, w, rng.gen_range(0.2..0.4));
    for _ in 0..10 {
        let val = rng.gen_range(0.1..0.95);
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let size = rng.gen_range(6.0..(h.min(w) as f64 / 3.0).max(7.0));
        let disc = rng.gen_bool(0.5);
        for r in 0..h {
            for c in 0..w {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let inside = if disc {
                    smoothstep((dy * dy + dx * dx).sqrt(), size)
                } else {
                    smoothstep(dy.abs(), size).min(smoothstep(dx.abs(), size * 0.7))
                };
                let v = img.get(r, c);
                img.set(r, c, v + inside * (val - v));
            }
        }
    }
    img
}

/// Smooth two-dimensional ramp.
pub fn gradient(h: usize, w: usize, seed: u64) -> LumaImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    LumaImage::from_fn(h, w, |r, c| {
        let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
        (0.5 + a * (x - 0.5) + b * (y - 0.5) + 0.1 * (3.0 * x * y).sin()).clamp(0.0, 1.0)
    })
}

/// Soft-edged shapes over a smooth ramp.
pub fn ramp_shapes(h: usize, w: usize, seed: u64) -> LumaImage {
    let ramp = gradient(h, w, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    let mut img = ramp;
    for _ in 0..4 {
        let val = rng.gen_range(0.05..0.95);
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let size = rng.gen_range(5.0..(h.min(w) as f64 / 4.0).max(6.0));
        for r in 0..h {
            for c in 0..w {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let inside = smoothstep((dy * dy + dx * dx).sqrt(), size);
                let v = img.get(r, c);
                img.set(r, c, v + inside * (val - v));
            }
        }
    }
    img
}

/// Brick texture on the left half, smooth ramp on the right half.
pub fn half_texture(h: usize, w: usize, seed: u64) -> LumaImage {
    let tex = bricks(h, w, seed);
    let smooth = gradient(h, w, seed ^ 0x5eed);
    LumaImage::from_fn(h, w, |r, c| if c < w / 2 { tex.get(r, c) } else { smooth.get(r, c) })
}

/// Periodic texture with uniform noise added inside one square region.
pub fn noisy_periodic(h: usize, w: usize, seed: u64) -> LumaImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = bricks(h, w, seed);
    let (r0, c0, side) = (h / 3, w / 3, h.min(w) / 4);
    LumaImage::from_fn(h, w, |r, c| {
        let v = base.get(r, c);
        if (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&c) {
            (v + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0)
        } else {
            v
        }
    })
}

/// Seeded periodic texture: bricks, stripes or a checkerboard of random
/// cell size, chosen by `seed`.
pub fn periodic(h: usize, w: usize, seed: u64) -> LumaImage {
    match seed % 3 {
        0 => bricks(h, w, seed),
        1 => stripes(h, w, seed),
        _ => {
            let cell = ChaCha8Rng::seed_from_u64(seed).gen_range(8..15);
            checkerboard(h, w, cell)
        }
    }
}

/// Set a `fraction` of the pixels in the top-left quadrant to 0 or 1.
pub fn salt_and_pepper_quadrant(img: &LumaImage, fraction: f64, seed: u64) -> LumaImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = img.dims();
    let mut out = img.clone();
    for r in 0..h / 2 {
        for c in 0..w / 2 {
            if rng.gen_bool(fraction) {
                out.set(r, c, if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
            }
        }
    }
    out
}

/// Named evaluation images, one of each kind.
pub fn corpus(size: usize, seed: u64) -> Vec<(String, LumaImage)> {
    vec![
        ("bricks".into(), bricks(size, size, seed)),
        ("stripes".into(), stripes(size, size, seed + 1)),
        ("shapes".into(), shapes(size, size, seed + 2)),
        ("ramp".into(), ramp_shapes(size, size, seed + 3)),
        ("half".into(), half_texture(size, size, seed + 4)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_are_in_range_and_seeded() {
        for (name, img) in corpus(48, 3) {
            assert_eq!(img.dims(), (48, 48), "{name}");
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)), "{name}");
        }
        assert_eq!(shapes(32, 32, 9), shapes(32, 32, 9));
        assert_ne!(shapes(32, 32, 9), shapes(32, 32, 10));
        assert_eq!(noisy_periodic(30, 30, 1), noisy_periodic(30, 30, 1));
        assert_eq!(checkerboard(4, 4, 2).get(0, 2), 0.2);
    }

    #[test]
    fn salt_and_pepper_stays_in_its_quadrant() {
        let img = LumaImage::filled(40, 40, 0.5);
        let noisy = salt_and_pepper_quadrant(&img, 0.05, 1);
        let mut hits = 0;
        for r in 0..40 {
            for c in 0..40 {
                let v = noisy.get(r, c);
                if r >= 20 || c >= 20 {
                    assert_eq!(v, 0.5);
                } else if v != 0.5 {
                    assert!(v == 0.0 || v == 1.0);
                    hits += 1;
                }
            }
        }
        // 5% of 400 pixels.
        assert!((5..=40).contains(&hits), "{hits}");
        for seed in 0..3 {
            assert_eq!(periodic(16, 16, seed).dims(), (16, 16));
        }
    }
}
