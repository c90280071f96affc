//! Bradley-Terry scores from a pairwise winning matrix.
//!
//! `P(i beats j) = 1 / (1 + exp(s_j - s_i))`; scores are fitted by damped
//! Newton-Raphson on the log-likelihood with one anchor method pinned to 1.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `counts[i][j]` is how often method `i` was preferred over method `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WinningMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl WinningMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let m = labels.len();
        if m < 2 {
            return Err(Error::invalid("need at least two methods"));
        }
        if counts.len() != m || counts.iter().any(|row| row.len() != m) {
            return Err(Error::invalid(format!("winning matrix must be {m}x{m}")));
        }
        if let Some(i) = (0..m).find(|&i| counts[i][i] != 0) {
            return Err(Error::invalid(format!(
                "method '{}' has a nonzero self-comparison count",
                labels[i]
            )));
        }
        Ok(Self { labels, counts })
    }

    /// Header row of labels followed by one row of counts per method.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "winning-matrix CSV",
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let labels: Vec<String> = rdr
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut counts = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let row = rec
                .iter()
                .map(|v| {
                    v.parse::<u64>().map_err(|_| {
                        bad(format!("row {}: '{v}' is not a nonnegative integer", line + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            counts.push(row);
        }
        Self::new(labels, counts)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Multiply every count by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            labels: self.labels.clone(),
            counts: self
                .counts
                .iter()
                .map(|row| row.iter().map(|v| v * k).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
    pub anchor: usize,
    pub iterations: usize,
}

impl ScoreVector {
    /// Indices sorted by descending score.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,method,score\n");
        for (rank, i) in self.ranking().into_iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.10}", rank + 1, self.labels[i], self.scores[i]);
        }
        out
    }

    /// Horizontal bars scaled between the lowest and the highest score.
    pub fn bar_chart(&self, width: usize) -> String {
        let lo = self.scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(f64::EPSILON);
        let name_w = self.labels.iter().map(|l| l.len()).max().unwrap_or(0);
        let mut out = String::new();
        for i in self.ranking() {
            let len = 1 + ((self.scores[i] - lo) / span * (width.max(1) - 1) as f64).round() as usize;
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>9.4}  {}",
                self.labels[i],
                self.scores[i],
                "#".repeat(len)
            );
        }
        out
    }
}

/// `P(i preferred over j)`. `bt_predict(s, i, j) + bt_predict(s, j, i)` is
/// exactly 1.
pub fn bt_predict(scores: &[f64], i: usize, j: usize) -> f64 {
    let d = scores[i] - scores[j];
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        1.0 - 1.0 / (1.0 + d.exp())
    }
}

/// `log(1 / (1 + exp(-d)))` without overflow.
fn log_sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        -(-d).exp().ln_1p()
    } else {
        d - d.exp().ln_1p()
    }
}

pub fn log_likelihood(w: &WinningMatrix, scores: &[f64]) -> f64 {
    let m = w.len();
    let mut ll = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = w.counts[i][j];
            if c > 0 {
                ll += c as f64 * log_sigmoid(scores[i] - scores[j]);
            }
        }
    }
    ll
}

fn reachable(w: &WinningMatrix, from: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let m = w.len();
    let mut seen = vec![false; m];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(i) = queue.pop_front() {
        for j in 0..m {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

fn check_identifiable(w: &WinningMatrix, anchor: usize) -> Result<()> {
    let connected = reachable(w, anchor, |i, j| w.counts[i][j] + w.counts[j][i] > 0);
    let missing: Vec<String> = (0..w.len())
        .filter(|&i| !connected[i])
        .map(|i| w.labels[i].clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Underdetermined { methods: missing });
    }
    // A finite maximizer needs every method to both win and lose along some
    // path: the "beats" graph must be strongly connected.
    let forward = reachable(w, anchor, |i, j| w.counts[i][j] > 0);
    let backward = reachable(w, anchor, |i, j| w.counts[j][i] > 0);
    let unbounded: Vec<&str> = (0..w.len())
        .filter(|&i| !(forward[i] && backward[i]))
        .map(|i| w.labels[i].as_str())
        .collect();
    if !unbounded.is_empty() {
        return Err(Error::invalid(format!(
            "scores diverge: {} never beat or never lose to the rest along any chain",
            unbounded.join(", ")
        )));
    }
    Ok(())
}

/// Maximum-likelihood Bradley-Terry scores with `scores[anchor] == 1`.
pub fn bt_fit(
    w: &WinningMatrix,
    anchor: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ScoreVector> {
    let m = w.len();
    if anchor >= m {
        return Err(Error::invalid(format!(
            "anchor index {anchor} out of range for {m} methods"
        )));
    }
    check_identifiable(w, anchor)?;

    let free: Vec<usize> = (0..m).filter(|&i| i != anchor).collect();
    let mut s = vec![1.0; m];
    let mut ll = log_likelihood(w, &s);
    for it in 0..=max_iterations {
        let mut grad = vec![0.0; m];
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let n = (w.counts[i][j] + w.counts[j][i]) as f64;
                if n == 0.0 {
                    continue;
                }
                let p = bt_predict(&s, i, j);
                grad[i] += w.counts[i][j] as f64 - n * p;
                let curv = n * p * (1.0 - p);
                hess[(i, i)] -= curv;
                hess[(i, j)] += curv;
            }
        }
        let gnorm = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
        if gnorm <= tolerance {
            return Ok(ScoreVector {
                labels: w.labels.clone(),
                scores: s,
                anchor,
                iterations: it,
            });
        }
        if it == max_iterations {
            break;
        }
        let k = free.len();
        let neg_h = DMatrix::from_fn(k, k, |r, c| -hess[(free[r], free[c])]);
        let g = DVector::from_fn(k, |r, _| grad[free[r]]);
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => neg_h
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::invalid("singular Hessian in Bradley-Terry fit"))?,
        };
        // Halve the step until the likelihood does not drop. Near the optimum
        // the change is below rounding, so allow that much slack.
        let slack = 1e-12 * ll.abs().max(1.0);
        let mut t = 1.0;
        loop {
            let mut trial = s.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += t * step[r];
            }
            let trial_ll = log_likelihood(w, &trial);
            if trial_ll >= ll - slack || t < 1e-12 {
                s = trial;
                ll = trial_ll;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::invalid(format!(
        "Bradley-Terry fit did not reach gradient tolerance {tolerance:e} in {max_iterations} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn two_item_closed_form() {
        let w = WinningMatrix::new(labels(2), vec![vec![0, 90], vec![10, 0]]).unwrap();
        let s = bt_fit(&w, 1, 1e-9, 100).unwrap();
        assert_eq!(s.scores[1], 1.0);
        assert!((s.scores[0] - s.scores[1] - 9f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn symmetric_matrices_give_equal_scores() {
        let w = WinningMatrix::new(
            labels(3),
            vec![vec![0, 10, 10], vec![10, 0, 10], vec![10, 10, 0]],
        )
        .unwrap();
        let s = bt_fit(&w, 0, 1e-9, 100).unwrap();
        assert!(s.scores.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let w = WinningMatrix::new(
            labels(4),
            vec![vec![0, 3, 7, 1], vec![3, 0, 2, 5], vec![7, 2, 0, 4], vec![1, 5, 4, 0]],
        )
        .unwrap();
        let s = bt_fit(&w, 2, 1e-9, 100).unwrap();
        assert!(s.scores.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn predict_properties() {
        let s = [1.0, 1.0 + 9f64.ln(), -3.0];
        assert_eq!(bt_predict(&s, 0, 0), 0.5);
        assert!((bt_predict(&s, 1, 0) - 0.9).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(bt_predict(&s, i, j) + bt_predict(&s, j, i), 1.0);
            }
        }
    }

    #[test]
    fn disconnected_graph_names_methods() {
        let w = WinningMatrix::new(
            labels(4),
            vec![vec![0, 5, 0, 0], vec![3, 0, 0, 0], vec![0, 0, 0, 2], vec![0, 0, 1, 0]],
        )
        .unwrap();
        match bt_fit(&w, 0, 1e-9, 100) {
            Err(Error::Underdetermined { methods }) => assert_eq!(methods, vec!["m2", "m3"]),
            other => panic!("unexpected {other:?}"),
        }
        let w = WinningMatrix::new(labels(3), vec![vec![0, 5, 0], vec![3, 0, 0], vec![0, 0, 0]]).unwrap();
        assert!(matches!(bt_fit(&w, 0, 1e-9, 100), Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn undefeated_method_is_rejected() {
        let w = WinningMatrix::new(labels(2), vec![vec![0, 5], vec![0, 0]]).unwrap();
        assert!(bt_fit(&w, 1, 1e-9, 100).is_err());
    }

    #[test]
    fn scale_invariance_and_likelihood_bound() {
        let w = WinningMatrix::new(
            labels(4),
            vec![vec![0, 8, 12, 30], vec![5, 0, 9, 14], vec![3, 6, 0, 11], vec![1, 2, 4, 0]],
        )
        .unwrap();
        let a = bt_fit(&w, 0, 1e-9, 100).unwrap();
        let b = bt_fit(&w.scaled(7), 0, 1e-9, 100).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x - y).abs() < 1e-8);
        }
        assert!(log_likelihood(&w, &a.scores) >= log_likelihood(&w, &[1.0; 4]));
    }

    #[test]
    fn csv_parsing() {
        let text = "gt, jsr, bicubic\n0,9,20\n1,0,15\n0,2,0\n";
        let w = WinningMatrix::from_csv(text.as_bytes()).unwrap();
        assert_eq!(w.labels(), &["gt", "jsr", "bicubic"]);
        assert_eq!(w.count(1, 2), 15);
        assert!(WinningMatrix::from_csv("a,b\n0,x\n1,0\n".as_bytes()).is_err());
        assert!(WinningMatrix::from_csv("a,b\n1,0\n1,0\n".as_bytes()).is_err());
        assert!(WinningMatrix::from_csv("a,b\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn outputs_render() {
        let w = WinningMatrix::new(labels(2), vec![vec![0, 90], vec![10, 0]]).unwrap();
        let s = bt_fit(&w, 1, 1e-9, 100).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("rank,method,score\n1,m0,"));
        assert_eq!(s.bar_chart(20).lines().count(), 2);
    }
}
