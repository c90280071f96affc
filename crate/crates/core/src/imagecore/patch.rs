use super::LumaImage;
use crate::error::{Error, Result};

/// Overlapping square patch layout. Origins advance by `stride`; the last
/// row/column of patches is snapped inward so every patch lies inside the
/// image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    stride: usize,
    height: usize,
    width: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn axis_origins(len: usize, n: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut o = 0;
    while o + n < len {
        o += stride;
        if o + n > len {
            o = len - n;
        }
        out.push(o);
    }
    out
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_size: usize, overlap: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        if overlap >= patch_size {
            return Err(Error::invalid(format!(
                "overlap {overlap} must be smaller than patch size {patch_size}"
            )));
        }
        if patch_size > height || patch_size > width {
            return Err(Error::invalid(format!(
                "{patch_size}x{patch_size} patches do not fit a {height}x{width} image"
            )));
        }
        let stride = patch_size - overlap;
        Ok(Self {
            patch_size,
            stride,
            height,
            width,
            rows: axis_origins(height, patch_size, stride),
            cols: axis_origins(width, patch_size, stride),
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of patch rows and columns.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_origins(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_origins(&self) -> &[usize] {
        &self.cols
    }

    /// Row-major origin of the `index`-th patch.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        let nc = self.cols.len();
        (self.rows[index / nc], self.cols[index % nc])
    }

    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .flat_map(move |&r| self.cols.iter().map(move |&c| (r, c)))
    }

    fn check_image(&self, img: &LumaImage) -> Result<()> {
        if img.dims() != (self.height, self.width) {
            return Err(Error::invalid(format!(
                "grid laid out for {}x{} but image is {}x{}",
                self.height,
                self.width,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }
}

/// Row-major `n x n` crop at `(row, col)`. The caller guarantees it fits.
pub fn extract_patch(img: &LumaImage, row: usize, col: usize, n: usize) -> Vec<f64> {
    let w = img.width();
    let data = img.data();
    let mut out = Vec::with_capacity(n * n);
    for r in row..row + n {
        out.extend_from_slice(&data[r * w + col..r * w + col + n]);
    }
    out
}

pub fn extract_patches(img: &LumaImage, grid: &PatchGrid) -> Result<Vec<Vec<f64>>> {
    grid.check_image(img)?;
    let n = grid.patch_size;
    Ok(grid
        .origins()
        .map(|(r, c)| extract_patch(img, r, c, n))
        .collect())
}

/// Overlap-average patches back onto the grid's image.
pub fn assemble_patches<P: AsRef<[f64]>>(patches: &[P], grid: &PatchGrid) -> Result<LumaImage> {
    if patches.len() != grid.len() {
        return Err(Error::invalid(format!(
            "grid has {} patches, got {}",
            grid.len(),
            patches.len()
        )));
    }
    let n = grid.patch_size;
    let (h, w) = (grid.height, grid.width);
    let mut sum = vec![0.0; h * w];
    let mut count = vec![0u32; h * w];
    for (p, (r0, c0)) in patches.iter().zip(grid.origins()) {
        let p = p.as_ref();
        if p.len() != n * n {
            return Err(Error::invalid(format!(
                "patch has {} samples, expected {}",
                p.len(),
                n * n
            )));
        }
        for dr in 0..n {
            for dc in 0..n {
                let idx = (r0 + dr) * w + c0 + dc;
                sum[idx] += p[dr * n + dc];
                count[idx] += 1;
            }
        }
    }
    let data = sum
        .into_iter()
        .zip(count)
        .map(|(s, k)| s / k as f64)
        .collect();
    LumaImage::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_grid_has_one_patch() {
        let g = PatchGrid::new(5, 5, 5, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.origin(0), (0, 0));
    }

    #[test]
    fn nine_by_nine_grid() {
        let g = PatchGrid::new(9, 9, 5, 1).unwrap();
        let o: Vec<_> = g.origins().collect();
        assert_eq!(o, vec![(0, 0), (0, 4), (4, 0), (4, 4)]);
    }

    #[test]
    fn last_patch_snaps_inward() {
        let g = PatchGrid::new(10, 10, 5, 1).unwrap();
        assert_eq!(g.row_origins(), &[0, 4, 5]);
    }

    #[test]
    fn grid_errors() {
        assert!(PatchGrid::new(4, 9, 5, 1).is_err());
        assert!(PatchGrid::new(9, 9, 5, 5).is_err());
        let g = PatchGrid::new(9, 9, 5, 1).unwrap();
        assert!(extract_patches(&LumaImage::filled(10, 9, 0.0), &g).is_err());
        assert!(assemble_patches(&[vec![0.0; 25]], &g).is_err());
    }

    #[test]
    fn overlap_is_averaged() {
        let g = PatchGrid::new(5, 9, 5, 1).unwrap();
        let img = assemble_patches(&[vec![0.2; 25], vec![0.6; 25]], &g).unwrap();
        assert!((img.get(2, 4) - 0.4).abs() < 1e-15);
        assert_eq!(img.get(2, 3), 0.2);
        assert_eq!(img.get(2, 5), 0.6);
    }

    #[test]
    fn constant_patches_give_constant_image() {
        let g = PatchGrid::new(13, 17, 5, 2).unwrap();
        let patches = vec![vec![0.3; 25]; g.len()];
        let img = assemble_patches(&patches, &g).unwrap();
        assert!(img.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn roundtrip_and_coverage(
            h in 3usize..30, w in 3usize..30, n in 1usize..8, ov in 0usize..7, seed in any::<u64>()
        ) {
            prop_assume!(n <= h && n <= w && ov < n);
            let img = LumaImage::from_fn(h, w, |r, c| {
                let x = (r * 31 + c * 17) as u64 ^ seed;
                (x.wrapping_mul(0x9E3779B97F4A7C15) >> 11) as f64 / (1u64 << 53) as f64
            });
            let g = PatchGrid::new(h, w, n, ov).unwrap();
            let mut covered = vec![false; h * w];
            for (r, c) in g.origins() {
                prop_assert!(r + n <= h && c + n <= w);
                for dr in 0..n { for dc in 0..n { covered[(r + dr) * w + c + dc] = true; } }
            }
            prop_assert!(covered.iter().all(|&b| b));
            let back = assemble_patches(&extract_patches(&img, &g).unwrap(), &g).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
