use std::borrow::Cow;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{L1Problem, SolverOptions, SparseCode};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"JSRDICT\0";
const VERSION: u32 = 1;

/// Coupled low/high-resolution dictionaries sharing one code space. Each
/// column of `low` has unit norm; the matching `high` column carries the
/// same scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct DictionaryPair {
    low: DMatrix<f64>,
    high: DMatrix<f64>,
    patch_size: usize,
    factor: usize,
    low_gram: DMatrix<f64>,
    high_gram: DMatrix<f64>,
}

impl DictionaryPair {
    pub fn new(
        low: DMatrix<f64>,
        high: DMatrix<f64>,
        patch_size: usize,
        factor: usize,
    ) -> Result<Self> {
        let k = low.ncols();
        if high.ncols() != k {
            return Err(Error::invalid(format!(
                "low dictionary has {k} atoms, high has {}",
                high.ncols()
            )));
        }
        if k < low.nrows().max(high.nrows()) {
            return Err(Error::invalid(format!(
                "{k} atoms is not overcomplete for {}/{}-dimensional patches",
                low.nrows(),
                high.nrows()
            )));
        }
        if low.iter().chain(high.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dictionary contains non-finite entries"));
        }
        for (j, col) in low.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "low-resolution atom {j} has norm {}, expected 1",
                    col.norm()
                )));
            }
        }
        let low_gram = low.tr_mul(&low);
        let high_gram = high.tr_mul(&high);
        Ok(Self {
            low,
            high,
            patch_size,
            factor,
            low_gram,
            high_gram,
        })
    }

    pub fn low(&self) -> &DMatrix<f64> {
        &self.low
    }

    pub fn high(&self) -> &DMatrix<f64> {
        &self.high
    }

    /// `D_l' D_l`.
    pub fn low_gram(&self) -> &DMatrix<f64> {
        &self.low_gram
    }

    /// `D_h' D_h`.
    pub fn high_gram(&self) -> &DMatrix<f64> {
        &self.high_gram
    }

    pub fn atoms(&self) -> usize {
        self.low.ncols()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn low_dim(&self) -> usize {
        self.low.nrows()
    }

    pub fn high_dim(&self) -> usize {
        self.high.nrows()
    }

    /// `weight_low |D_l a - y|^2 + weight_high |D_h a - x|^2` in normal-equation
    /// form, reusing the cached Gram matrices.
    pub fn coupled_problem(
        &self,
        y: &[f64],
        weight_low: f64,
        x: Option<(&[f64], f64)>,
    ) -> L1Problem<'_> {
        let yv = DVector::from_column_slice(y);
        let mut linear = weight_low * self.low.tr_mul(&yv);
        let mut constant = weight_low * yv.norm_squared();
        let gram = match x {
            None if weight_low == 1.0 => Cow::Borrowed(&self.low_gram),
            None => Cow::Owned(weight_low * &self.low_gram),
            Some((x, w)) => {
                let xv = DVector::from_column_slice(x);
                linear += w * self.high.tr_mul(&xv);
                constant += w * xv.norm_squared();
                Cow::Owned(weight_low * &self.low_gram + w * &self.high_gram)
            }
        };
        L1Problem {
            gram,
            linear,
            constant,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.patch_size as u32,
            self.factor as u32,
            self.atoms() as u32,
            self.low_dim() as u32,
            self.high_dim() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in [&self.low, &self.high] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_all(&m[(r, c)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "dictionary",
            reason,
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| bad(format!("truncated header: {e}")))?;
        if &magic != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let mut header = [0u32; 6];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|e| bad(format!("truncated header: {e}")))?;
            *h = u32::from_le_bytes(b);
        }
        let [version, n, factor, k, dl, dh] = header.map(|v| v as usize);
        if version != VERSION as usize {
            return Err(bad(format!("unsupported version {version}")));
        }
        if k == 0 || dl == 0 || dh == 0 || k.max(dl).max(dh) > 1 << 20 {
            return Err(bad(format!("implausible sizes k={k} d_l={dl} d_h={dh}")));
        }
        let mut read_matrix = |rows: usize| -> Result<DMatrix<f64>> {
            let mut buf = vec![0u8; rows * k * 8];
            r.read_exact(&mut buf)
                .map_err(|e| bad(format!("truncated matrix data: {e}")))?;
            Ok(DMatrix::from_row_iterator(
                rows,
                k,
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
            ))
        };
        let low = read_matrix(dl)?;
        let high = read_matrix(dh)?;
        Self::new(low, high, n, factor)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOptions {
    pub atoms: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub patch_size: usize,
    pub factor: usize,
    pub solver: SolverOptions,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            atoms: 512,
            lambda: 0.01,
            epochs: 10,
            seed: 0,
            patch_size: 5,
            factor: 3,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainingReport {
    /// Joint objective after each sparse-coding pass.
    pub coding_objective: Vec<f64>,
    /// Joint objective after each dictionary update (same codes).
    pub update_objective: Vec<f64>,
}

fn sample_objective(d: &DMatrix<f64>, x: &[f64], code: &SparseCode, lambda: f64) -> f64 {
    let rec = code.reconstruct(d);
    let err: f64 = rec.iter().zip(x).map(|(r, v)| (r - v) * (r - v)).sum();
    err + lambda * code.l1_norm()
}

/// Objective summed in fixed chunk order so the result does not depend on
/// the number of worker threads.
fn total_objective(d: &DMatrix<f64>, xs: &[Vec<f64>], codes: &[SparseCode], lambda: f64) -> f64 {
    let partial: Vec<f64> = xs
        .par_chunks(256)
        .zip(codes.par_chunks(256))
        .map(|(xc, cc)| {
            xc.iter()
                .zip(cc)
                .map(|(x, c)| sample_objective(d, x, c, lambda))
                .sum()
        })
        .collect();
    partial.iter().sum()
}

fn code_all(
    d: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    xs: &[Vec<f64>],
    lambda: f64,
    opts: &SolverOptions,
) -> Vec<SparseCode> {
    xs.par_iter()
        .map(|x| {
            let xv = DVector::from_column_slice(x);
            let p = L1Problem {
                gram: Cow::Borrowed(gram),
                linear: d.tr_mul(&xv),
                constant: xv.norm_squared(),
            };
            match p.solve(lambda, opts) {
                Ok(c) => c,
                Err(Error::ConvergenceFailure { best, .. }) => *best,
                Err(_) => SparseCode::zeros(d.ncols()),
            }
        })
        .collect()
}

/// Train coupled dictionaries on `(low, high)` patch-vector pairs.
///
/// Both halves are scaled by `1/sqrt(dim)` and stacked, then sparse coding
/// and a norm-constrained least-squares atom update alternate. The atom
/// update is exact block-coordinate minimization over the unit ball, so
/// the joint objective never increases.
pub fn train_coupled_dictionary(
    pairs: &[(Vec<f64>, Vec<f64>)],
    opts: &TrainingOptions,
) -> Result<(DictionaryPair, TrainingReport)> {
    let k = opts.atoms;
    if pairs.len() < k {
        return Err(Error::invalid(format!(
            "need at least {k} training pairs, got {}",
            pairs.len()
        )));
    }
    if opts.epochs == 0 {
        return Err(Error::invalid("at least one training epoch is required"));
    }
    let dl = pairs[0].0.len();
    let dh = pairs[0].1.len();
    if dl == 0 || dh == 0 || pairs.iter().any(|(l, h)| l.len() != dl || h.len() != dh) {
        return Err(Error::invalid("training pairs have inconsistent dimensions"));
    }
    if k < dl.max(dh) {
        return Err(Error::invalid(format!(
            "{k} atoms is not overcomplete for {dl}/{dh}-dimensional patches"
        )));
    }
    let (sl, sh) = (1.0 / (dl as f64).sqrt(), 1.0 / (dh as f64).sqrt());
    let xs: Vec<Vec<f64>> = pairs
        .iter()
        .map(|(l, h)| {
            l.iter()
                .map(|v| v * sl)
                .chain(h.iter().map(|v| v * sh))
                .collect()
        })
        .collect();
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    let energy: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
    if energy.iter().all(|&e| e == 0.0) {
        return Err(Error::invalid(
            "degenerate training data: every patch pair is zero",
        ));
    }

    let dim = dl + dh;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut d = DMatrix::zeros(dim, k);
    let mut order: Vec<usize> = (0..xs.len()).filter(|&i| energy[i] > 0.0).collect();
    order.shuffle(&mut rng);
    for j in 0..k {
        let col: Vec<f64> = match order.get(j) {
            Some(&i) => xs[i].clone(),
            None => (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let mut v = DVector::from_vec(col);
        v /= v.norm();
        d.set_column(j, &v);
    }

    let mut report = TrainingReport::default();
    for _ in 0..opts.epochs {
        let gram = d.tr_mul(&d);
        let codes = code_all(&d, &gram, &xs, opts.lambda, &opts.solver);
        report
            .coding_objective
            .push(total_objective(&d, &xs, &codes, opts.lambda));
        update_atoms(&mut d, &xs, &codes, &energy);
        report
            .update_objective
            .push(total_objective(&d, &xs, &codes, opts.lambda));
    }

    let mut low = d.rows(0, dl) / sl;
    let mut high = d.rows(dl, dh) / sh;
    for j in 0..k {
        let norm = low.column(j).norm();
        if norm > 1e-12 {
            low.column_mut(j).scale_mut(1.0 / norm);
            high.column_mut(j).scale_mut(1.0 / norm);
        } else {
            // An atom with no low-resolution content can never be selected
            // from an observation; park it on a unit vector.
            low.column_mut(j).fill(0.0);
            low[(j % dl, j)] = 1.0;
            high.column_mut(j).fill(0.0);
        }
    }
    let pair = DictionaryPair::new(low, high, opts.patch_size, opts.factor)?;
    Ok((pair, report))
}

/// One pass of block-coordinate atom updates, each projected onto the unit
/// ball. Atoms no sample uses are moved onto the worst-represented sample,
/// which leaves the objective unchanged.
fn update_atoms(d: &mut DMatrix<f64>, xs: &[Vec<f64>], codes: &[SparseCode], energy: &[f64]) {
    let (dim, k) = d.shape();
    let chunk = 256;
    let partial: Vec<(DMatrix<f64>, DMatrix<f64>)> = xs
        .par_chunks(chunk)
        .zip(codes.par_chunks(chunk))
        .map(|(xc, cc)| {
            let mut aa = DMatrix::zeros(k, k);
            let mut xa = DMatrix::zeros(dim, k);
            for (x, c) in xc.iter().zip(cc) {
                let sup = c.support();
                let a = c.coefficients();
                for &i in &sup {
                    for &j in &sup {
                        aa[(i, j)] += a[i] * a[j];
                    }
                    for r in 0..dim {
                        xa[(r, i)] += x[r] * a[i];
                    }
                }
            }
            (aa, xa)
        })
        .collect();
    let mut aa = DMatrix::zeros(k, k);
    let mut xa = DMatrix::zeros(dim, k);
    for (a, b) in partial {
        aa += a;
        xa += b;
    }

    let mut unused = Vec::new();
    for j in 0..k {
        let ajj = aa[(j, j)];
        if ajj <= 0.0 {
            unused.push(j);
            continue;
        }
        let mut u = xa.column(j) - &*d * aa.column(j);
        u /= ajj;
        u += d.column(j);
        let n = u.norm();
        if n > 1.0 {
            u /= n;
        }
        d.set_column(j, &u);
    }
    if unused.is_empty() {
        return;
    }
    let mut residual: Vec<(f64, usize)> = xs
        .iter()
        .zip(codes)
        .enumerate()
        .filter(|(i, _)| energy[*i] > 0.0)
        .map(|(i, (x, c))| {
            let rec = c.reconstruct(d);
            let e: f64 = rec.iter().zip(x).map(|(r, v)| (r - v) * (r - v)).sum();
            (e, i)
        })
        .collect();
    residual.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (j, (_, i)) in unused.into_iter().zip(residual) {
        let mut v = DVector::from_column_slice(&xs[i]);
        v /= v.norm();
        d.set_column(j, &v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_pairs(n: usize, dl: usize, dh: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (
                    (0..dl).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    (0..dh).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect()
    }

    fn opts(atoms: usize, lambda: f64, epochs: usize) -> TrainingOptions {
        TrainingOptions {
            atoms,
            lambda,
            epochs,
            seed: 7,
            patch_size: 2,
            factor: 2,
            ..Default::default()
        }
    }

    #[test]
    fn objective_is_monotone() {
        let pairs = random_pairs(300, 4, 4, 1);
        let (_, report) = train_coupled_dictionary(&pairs, &opts(8, 0.05, 10)).unwrap();
        let mut seq = Vec::new();
        for (c, u) in report.coding_objective.iter().zip(&report.update_objective) {
            seq.push(*c);
            seq.push(*u);
        }
        for w in seq.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn one_hot_training_set_is_reproduced() {
        let k = 4;
        let pairs: Vec<_> = (0..k)
            .map(|i| {
                let mut e = vec![0.0; k];
                e[i] = 1.0;
                (e.clone(), e)
            })
            .collect();
        let (dict, _) = train_coupled_dictionary(&pairs, &opts(k, 1e-6, 5)).unwrap();
        for (l, h) in &pairs {
            let i = l.iter().position(|&v| v == 1.0).unwrap();
            let matches = (0..k).any(|j| {
                let s = dict.low()[(i, j)].signum();
                (0..k).all(|r| {
                    (dict.low()[(r, j)] - s * l[r]).abs() < 1e-6
                        && (dict.high()[(r, j)] - s * h[r]).abs() < 1e-6
                })
            });
            assert!(matches, "one-hot {i} not represented by an atom");
        }
    }

    #[test]
    fn repeated_pair_gets_a_dominant_atom() {
        let pair = (vec![0.3, -0.1, 0.4, 0.2], vec![0.5, 0.1, -0.2, 0.0]);
        let pairs = vec![pair.clone(); 8];
        let (dict, _) = train_coupled_dictionary(&pairs, &opts(4, 1e-6, 5)).unwrap();
        let code = super::super::l1_solve(dict.low(), &pair.0, 1e-9, &[], &SolverOptions::default()).unwrap();
        let rl = code.reconstruct(dict.low());
        let rh = code.reconstruct(dict.high());
        let err: f64 = rl.iter().zip(&pair.0).chain(rh.iter().zip(&pair.1)).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(err <= 1e-6, "reconstruction error {err}");
    }

    #[test]
    fn degenerate_and_short_inputs_fail() {
        let zeros = vec![(vec![0.0; 4], vec![0.0; 4]); 10];
        assert!(matches!(
            train_coupled_dictionary(&zeros, &opts(4, 0.1, 2)),
            Err(Error::InvalidArgument(_))
        ));
        let few = random_pairs(3, 4, 4, 2);
        assert!(train_coupled_dictionary(&few, &opts(4, 0.1, 2)).is_err());
    }

    #[test]
    fn serialization_roundtrip_and_corruption() {
        let pairs = random_pairs(50, 4, 9, 3);
        let (dict, _) = train_coupled_dictionary(&pairs, &opts(9, 0.05, 2)).unwrap();
        let mut buf = Vec::new();
        dict.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 24 + 8 * 9 * (4 + 9));
        let back = DictionaryPair::read_from(&buf[..]).unwrap();
        assert_eq!(back, dict);
        assert!(DictionaryPair::read_from(&buf[..40]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(DictionaryPair::read_from(&bad[..]).is_err());
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let pairs = random_pairs(400, 4, 4, 4);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let (d, _) = train_coupled_dictionary(&pairs, &opts(8, 0.05, 3)).unwrap();
                let mut buf = Vec::new();
                d.write_to(&mut buf).unwrap();
                buf
            })
        };
        assert_eq!(run(1), run(3));
    }
}
