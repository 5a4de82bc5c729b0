//! Per-pixel temporal change-type classification.
//!
//! For each pixel, the M×M change criterion matrix (CCM) of pairwise GLR
//! dissimilarities is binarized into an affinity matrix (1 = no significant
//! change between two dates), embedded through the normalized Laplacian
//! D^{-1/2} (D − A) D^{-1/2}, and clustered: the eigengap heuristic picks the
//! cluster count, rows of the selected eigenvectors are re-normalized and
//! k-means labels the dates. The label sequence's transition structure maps
//! to one of five change classes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glr::{s_glr, Domain, ImageStack, ProbabilityCalibration};
use crate::raster::RgbRaster;
use crate::speckle::derive_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense square matrix, row-major. Sizes here are tiny (M×M with M ≤ ~100).
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Input(format!(
                "{} values for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    fn off_diagonal_frobenius(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    sum += self.get(i, j).powi(2);
                }
            }
        }
        sum.sqrt()
    }
}

/// Exponentially weighted moving average: y₁ = x₁, y_t = αx_t + (1−α)y_{t−1}.
pub fn ewma_smooth(series: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Input("ewma input is empty".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!(
            "ewma alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut prev = series[0];
    out.push(prev);
    for &x in &series[1..] {
        prev = alpha * x + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

/// Per-pixel M×M change criterion matrix: entry (t, t') is the GLR
/// dissimilarity of the two dates. Symmetric with a zero diagonal. Entries
/// touching a zero value saturate to +inf and set the flag.
#[derive(Debug, Clone)]
pub struct CriterionMatrix {
    pub matrix: SquareMatrix,
    pub saturated: bool,
}

pub fn build_ccm(series: &[f64], enl: f64) -> Result<CriterionMatrix> {
    let m = series.len();
    if m < 2 {
        return Err(Error::Input(format!(
            "criterion matrix needs at least 2 dates, got {m}"
        )));
    }
    if series.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input(
            "criterion series values must be finite and >= 0".into(),
        ));
    }
    let mut ccm = SquareMatrix::zeros(m);
    let mut saturated = false;
    for t in 0..m {
        for t2 in (t + 1)..m {
            let s = s_glr(series[t], series[t2], enl);
            saturated |= s.is_infinite();
            ccm.set(t, t2, s);
            ccm.set(t2, t, s);
        }
    }
    Ok(CriterionMatrix {
        matrix: ccm,
        saturated,
    })
}

/// Binary symmetric affinity with unit diagonal: 1 marks "no significant
/// change" between two dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffinityMatrix {
    n: usize,
    data: Vec<u8>,
}

impl AffinityMatrix {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = AffinityMatrix {
            n,
            data: vec![0; n * n],
        };
        for i in 0..n {
            a.data[i * n + i] = 1;
        }
        for &(i, j) in edges {
            a.data[i * n + j] = 1;
            a.data[j * n + i] = 1;
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.n + j]
    }

    /// Connected components of the affinity graph, labeled 1.. in first-seen
    /// order (the brute-force partition oracle for spectral clustering).
    pub fn connected_components(&self) -> Vec<usize> {
        let n = self.n;
        let mut comp = vec![0usize; n];
        let mut next = 0usize;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != 0 {
                continue;
            }
            next += 1;
            comp[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if self.get(v, w) != 0 && comp[w] == 0 {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
        }
        comp
    }
}

/// Binarizes a CCM: affinity 1 where the change probability stays below tau
/// (similar dates), 0 otherwise; the diagonal is forced to 1.
pub fn binarize_ccm(ccm: &CriterionMatrix, enl: f64, tau: f64) -> Result<AffinityMatrix> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Parameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    let cal = ProbabilityCalibration::new(enl)?;
    let n = ccm.matrix.n();
    let mut data = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            let similar = i == j || cal.probability(ccm.matrix.get(i, j)) < tau;
            data[i * n + j] = similar as u8;
        }
    }
    Ok(AffinityMatrix { n, data })
}

/// Symmetric normalized Laplacian D^{-1/2} (D − A) D^{-1/2}. The unit
/// diagonal guarantees positive degrees; eigenvalues lie in [0, 2].
pub fn normalized_laplacian(a: &AffinityMatrix) -> SquareMatrix {
    let n = a.n();
    let mut dinv = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| a.get(i, j) as f64).sum();
        dinv[i] = 1.0 / deg.sqrt();
    }
    let mut l = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let lap = if i == j {
                (0..n).map(|k| a.get(i, k) as f64).sum::<f64>() - a.get(i, j) as f64
            } else {
                -(a.get(i, j) as f64)
            };
            l.set(i, j, dinv[i] * lap * dinv[j]);
        }
    }
    l
}

/// Ascending eigenvalues with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Column k of this matrix is the eigenvector of values[k].
    pub vectors: SquareMatrix,
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps rotate
/// every off-diagonal pair until the off-diagonal Frobenius mass drops below
/// 1e-12 (or stops shrinking at the round-off floor).
pub fn eigen_sym(matrix: &SquareMatrix) -> Result<EigenDecomposition> {
    if !matrix.is_symmetric(1e-10) {
        return Err(Error::Contract("eigen_sym requires a symmetric matrix".into()));
    }
    let n = matrix.n();
    let mut a = matrix.clone();
    let mut v = SquareMatrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let mut prev_off = f64::INFINITY;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = a.off_diagonal_frobenius();
        if off < JACOBI_TOL || off >= prev_off {
            break;
        }
        prev_off = off;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // tan of the rotation angle, the stable smaller root
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, akp - s * (akq + tau * akp));
                        a.set(p, k, a.get(k, p));
                        a.set(k, q, akq + s * (akp - tau * akq));
                        a.set(q, k, a.get(k, q));
                    }
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp - s * (vkq + tau * vkp));
                    v.set(k, q, vkq + s * (vkp - tau * vkq));
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Eigengap heuristic on ascending eigenvalues: the cluster count is the
/// position of the largest consecutive gap, ties broken toward the smallest.
pub fn eigengap_k(eigenvalues: &[f64]) -> usize {
    let mut best_k = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for t in 0..eigenvalues.len().saturating_sub(1) {
        let gap = eigenvalues[t + 1] - eigenvalues[t];
        if gap > best_gap {
            best_gap = gap;
            best_k = t + 1;
        }
    }
    best_k
}

/// Cluster labels of the M dates, 1-based and renumbered by first appearance
/// (so l₁ = 1), with the effective cluster count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSeries {
    pub labels: Vec<usize>,
    pub k: usize,
}

const KMEANS_RESTARTS: usize = 50;
const KMEANS_MAX_ITERS: usize = 100;

/// Spectral clustering of the affinity matrix with the eigengap heuristic
/// choosing k. Deterministic for a fixed seed.
pub fn spectral_labels(a: &AffinityMatrix, seed: u64) -> LabelSeries {
    let lap = normalized_laplacian(a);
    let eig = eigen_sym(&lap).expect("laplacian is symmetric by construction");
    let k = eigengap_k(&eig.values);
    spectral_labels_from_eigen(&eig, k, seed)
}

/// Spectral clustering with an externally fixed cluster count (used by the
/// component-recovery oracle and the degenerate k = M case).
pub fn spectral_labels_with_k(a: &AffinityMatrix, k: usize, seed: u64) -> LabelSeries {
    let m = a.n();
    if k >= m {
        // degenerate: every date its own cluster
        return LabelSeries {
            labels: (1..=m).collect(),
            k: m,
        };
    }
    let lap = normalized_laplacian(a);
    let eig = eigen_sym(&lap).expect("laplacian is symmetric by construction");
    spectral_labels_from_eigen(&eig, k, seed)
}

fn spectral_labels_from_eigen(eig: &EigenDecomposition, k: usize, seed: u64) -> LabelSeries {
    let m = eig.values.len();
    let k = k.min(m);
    if k == 1 {
        return LabelSeries {
            labels: vec![1; m],
            k: 1,
        };
    }
    if k == m {
        return LabelSeries {
            labels: (1..=m).collect(),
            k: m,
        };
    }
    // embed: rows of the k lowest-eigenvalue eigenvectors, re-normalized to
    // unit length (zero rows stay zero)
    let mut points = vec![vec![0.0; k]; m];
    for (row, point) in points.iter_mut().enumerate() {
        for (col, val) in point.iter_mut().enumerate() {
            *val = eig.vectors.get(row, col);
        }
        let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in point.iter_mut() {
                *v /= norm;
            }
        }
    }
    let raw = kmeans(&points, k, seed);
    canonicalize(&raw)
}

/// Renumber labels by first appearance; k becomes the distinct count.
fn canonicalize(raw: &[usize]) -> LabelSeries {
    let mut mapping: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(raw.len());
    for &r in raw {
        let id = match mapping.iter().position(|&m| m == r) {
            Some(pos) => pos + 1,
            None => {
                mapping.push(r);
                mapping.len()
            }
        };
        labels.push(id);
    }
    LabelSeries {
        labels,
        k: mapping.len(),
    }
}

/// Lloyd k-means with k-means++ style seeding, squared Euclidean distance,
/// 50 restarts and at most 100 iterations each; the seed fixes every draw.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_labels = vec![0usize; n];
    let mut best_inertia = f64::INFINITY;

    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    for _ in 0..KMEANS_RESTARTS {
        // k-means++ seeding
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        centers.push(points[rng.random_range(0..n)].clone());
        while centers.len() < k {
            let d2: Vec<f64> = points
                .iter()
                .map(|p| {
                    centers
                        .iter()
                        .map(|c| dist2(p, c))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let total: f64 = d2.iter().sum();
            let next = if total <= 0.0 {
                rng.random_range(0..n)
            } else {
                let mut target = rng.random_range(0.0..total);
                let mut pick = n - 1;
                for (i, &w) in d2.iter().enumerate() {
                    if target < w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
                pick
            };
            centers.push(points[next].clone());
        }

        let mut labels = vec![0usize; n];
        for _ in 0..KMEANS_MAX_ITERS {
            let mut moved = false;
            for (i, p) in points.iter().enumerate() {
                let mut best = 0;
                let mut bd = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = dist2(p, center);
                    if d < bd {
                        bd = d;
                        best = c;
                    }
                }
                if labels[i] != best {
                    labels[i] = best;
                    moved = true;
                }
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (i, p) in points.iter().enumerate() {
                counts[labels[i]] += 1;
                for (s, &v) in sums[labels[i]].iter_mut().zip(p) {
                    *s += v;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                if counts[c] > 0 {
                    for (cc, s) in center.iter_mut().zip(&sums[c]) {
                        *cc = s / counts[c] as f64;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        let inertia: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| dist2(p, &centers[labels[i]]))
            .sum();
        if inertia < best_inertia {
            best_inertia = inertia;
            best_labels = labels;
        }
        if best_inertia <= 1e-24 {
            break; // exact partition found, further restarts cannot improve
        }
    }
    best_labels
}

/// Table-style change classes with their display colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeClass {
    Unchanged = 0,
    Step = 1,
    Impulse = 2,
    Cycle = 3,
    Complex = 4,
}

impl ChangeClass {
    /// Display color: white, red, green, blue, cyan.
    pub fn color(self) -> [u8; 3] {
        match self {
            ChangeClass::Unchanged => [255, 255, 255],
            ChangeClass::Step => [255, 0, 0],
            ChangeClass::Impulse => [0, 255, 0],
            ChangeClass::Cycle => [0, 0, 255],
            ChangeClass::Complex => [0, 255, 255],
        }
    }

    pub fn from_u8(v: u8) -> Option<ChangeClass> {
        match v {
            0 => Some(ChangeClass::Unchanged),
            1 => Some(ChangeClass::Step),
            2 => Some(ChangeClass::Impulse),
            3 => Some(ChangeClass::Cycle),
            4 => Some(ChangeClass::Complex),
            _ => None,
        }
    }
}

/// Maps a label sequence to its change class by cluster count and adjacent
/// transitions T: k=1 → Unchanged; k≥3 → Complex; k=2 with T=1 → Step, T=2
/// returning to the start label → Impulse, anything else → Cycle (label
/// sequences with T=2 and differing endpoints have no canonical row and are
/// assigned Cycle by convention).
pub fn classify_series(series: &LabelSeries) -> ChangeClass {
    if series.k <= 1 {
        return ChangeClass::Unchanged;
    }
    if series.k >= 3 {
        return ChangeClass::Complex;
    }
    let transitions = series
        .labels
        .windows(2)
        .filter(|w| w[0] != w[1])
        .count();
    match transitions {
        0 => ChangeClass::Unchanged,
        1 => ChangeClass::Step,
        2 if series.labels.first() == series.labels.last() => ChangeClass::Impulse,
        _ => ChangeClass::Cycle,
    }
}

/// Per-pixel classification result of a stack.
#[derive(Debug, Clone)]
pub struct ChangeClassMap {
    width: usize,
    height: usize,
    pub classes: Vec<ChangeClass>,
}

impl ChangeClassMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels_u8(&self) -> Vec<u8> {
        self.classes.iter().map(|&c| c as u8).collect()
    }

    pub fn to_rgb(&self) -> RgbRaster {
        let mut rgb = RgbRaster::new(self.width, self.height);
        for (i, &c) in self.classes.iter().enumerate() {
            rgb.set_index(i, c.color());
        }
        rgb
    }
}

/// Runs the full per-pixel pipeline over an intensity stack:
/// optional EWMA → CCM → binarize → Laplacian → eigengap → spectral labels →
/// change class. Per-pixel k-means seeds derive from `seed` and the pixel
/// index, so results are deterministic and independent of thread scheduling.
pub fn classify_stack(
    stack: &ImageStack,
    tau: f64,
    ewma_alpha: Option<f64>,
    seed: u64,
) -> Result<ChangeClassMap> {
    if stack.domain() != Domain::Intensity {
        return Err(Error::Input(
            "classify_stack requires an intensity-domain stack".into(),
        ));
    }
    if stack.len() < 2 {
        return Err(Error::Input(format!(
            "classification needs at least 2 dates, got {}",
            stack.len()
        )));
    }
    if let Some(alpha) = ewma_alpha {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "ewma alpha must lie in (0, 1], got {alpha}"
            )));
        }
    }
    let enl = stack.enl();
    ProbabilityCalibration::new(enl)?;
    let n = stack.pixels();
    let classes = (0..n)
        .into_par_iter()
        .map(|idx| {
            let mut series = stack.pixel_series(idx);
            if let Some(alpha) = ewma_alpha {
                series = ewma_smooth(&series, alpha).expect("validated above");
            }
            let ccm = build_ccm(&series, enl)?;
            let affinity = binarize_ccm(&ccm, enl, tau)?;
            let labels = spectral_labels(&affinity, derive_seed(seed, idx as u64));
            Ok(classify_series(&labels))
        })
        .collect::<Result<Vec<ChangeClass>>>()?;
    Ok(ChangeClassMap {
        width: stack.width(),
        height: stack.height(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_basics() {
        let xs = [0.0, 1.0];
        assert_eq!(ewma_smooth(&xs, 0.5).unwrap(), vec![0.0, 0.5]);
        let id = [3.0, 1.0, 4.0];
        assert_eq!(ewma_smooth(&id, 1.0).unwrap(), id.to_vec());
        let flat = [2.0; 5];
        assert_eq!(ewma_smooth(&flat, 0.3).unwrap(), flat.to_vec());
        assert!(ewma_smooth(&xs, 0.0).is_err());
        assert!(ewma_smooth(&xs, 1.5).is_err());
        assert!(ewma_smooth(&[], 0.5).is_err());
    }

    #[test]
    fn ccm_structure() {
        let flat = [2.0; 4];
        let ccm = build_ccm(&flat, 9.0).unwrap();
        assert!((0..4).all(|i| (0..4).all(|j| ccm.matrix.get(i, j) == 0.0)));

        let ccm = build_ccm(&[1.0, 4.0], 1.0).unwrap();
        assert!((ccm.matrix.get(0, 1) - 0.4462871026284195).abs() < 1e-14);
        assert_eq!(ccm.matrix.get(0, 1), ccm.matrix.get(1, 0));
        assert_eq!(ccm.matrix.get(0, 0), 0.0);

        let sat = build_ccm(&[0.0, 4.0], 1.0).unwrap();
        assert!(sat.saturated);
        assert!(sat.matrix.get(0, 1).is_infinite());
        assert!(build_ccm(&[1.0], 1.0).is_err());
    }

    #[test]
    fn binarize_zero_ccm_is_all_ones() {
        let ccm = build_ccm(&[3.0, 3.0, 3.0], 9.0).unwrap();
        let a = binarize_ccm(&ccm, 9.0, 0.99).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| a.get(i, j) == 1)));
    }

    #[test]
    fn binarize_two_blocks() {
        // u then 16u at ENL 9 separates far above the tau = 0.99 threshold
        let series = [1.0, 1.0, 1.0, 16.0, 16.0, 16.0];
        let ccm = build_ccm(&series, 9.0).unwrap();
        let a = binarize_ccm(&ccm, 9.0, 0.99).unwrap();
        for i in 0..6 {
            assert_eq!(a.get(i, i), 1, "diagonal forced to 1");
            for j in 0..6 {
                let same_block = (i < 3) == (j < 3);
                assert_eq!(a.get(i, j) == 1, same_block, "({i},{j})");
            }
        }
        assert_eq!(a.connected_components(), vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn laplacian_identity_affinity_is_zero() {
        let a = AffinityMatrix::from_edges(3, &[]);
        let l = normalized_laplacian(&a);
        assert!((0..3).all(|i| (0..3).all(|j| l.get(i, j) == 0.0)));
    }

    #[test]
    fn laplacian_all_ones_2x2() {
        let a = AffinityMatrix::from_edges(2, &[(0, 1)]);
        let l = normalized_laplacian(&a);
        assert!((l.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((l.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((l.get(1, 0) + 0.5).abs() < 1e-15);
        assert!((l.get(1, 1) - 0.5).abs() < 1e-15);
        let eig = eigen_sym(&l).unwrap();
        assert!(eig.values[0].abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_kernel_vector() {
        // D^{1/2}·1 is always a 0-eigenvector
        let a = AffinityMatrix::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let l = normalized_laplacian(&a);
        let deg: Vec<f64> = (0..4)
            .map(|i| (0..4).map(|j| a.get(i, j) as f64).sum::<f64>())
            .collect();
        for i in 0..4 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += l.get(i, j) * deg[j].sqrt();
            }
            assert!(acc.abs() < 1e-12, "row {i} residual {acc}");
        }
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let m = SquareMatrix::from_rows(3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0])
            .unwrap();
        let eig = eigen_sym(&m).unwrap();
        assert_eq!(eig.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = SquareMatrix::from_rows(2, vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(eigen_sym(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn eigen_reconstruction_and_orthonormality() {
        // deterministic pseudo-random symmetric matrix
        let n = 7;
        let mut m = SquareMatrix::zeros(n);
        let mut state = 1234_u64;
        for i in 0..n {
            for j in i..n {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(12345);
                let v = ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let eig = eigen_sym(&m).unwrap();
        // V Λ Vᵀ reproduces the input
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += eig.vectors.get(i, k) * eig.values[k] * eig.vectors.get(j, k);
                }
                assert!((acc - m.get(i, j)).abs() < 1e-9, "({i},{j})");
            }
        }
        // VᵀV = I
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += eig.vectors.get(k, a) * eig.vectors.get(k, b);
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-10);
            }
        }
        // ascending order
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigengap_cases() {
        assert_eq!(eigengap_k(&[0.0, 0.01, 0.9, 1.1]), 2);
        assert_eq!(eigengap_k(&[0.5, 0.5, 0.5]), 1);
        assert_eq!(eigengap_k(&[0.0, 1.0]), 1);
        assert_eq!(eigengap_k(&[0.0]), 1);
    }

    #[test]
    fn spectral_two_blocks() {
        let a = AffinityMatrix::from_edges(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        let out = spectral_labels(&a, 42);
        assert_eq!(out.k, 2);
        assert_eq!(out.labels, vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn spectral_all_ones_single_cluster() {
        let edges: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .collect();
        let a = AffinityMatrix::from_edges(4, &edges);
        let out = spectral_labels(&a, 1);
        assert_eq!(out.k, 1);
        assert_eq!(out.labels, vec![1; 4]);
    }

    #[test]
    fn spectral_identity_affinity_degenerates_to_one_cluster() {
        // zero Laplacian: all eigenvalues zero, eigengap tie-break gives k = 1
        let a = AffinityMatrix::from_edges(3, &[]);
        let out = spectral_labels(&a, 3);
        assert_eq!(out.k, 1);
        assert_eq!(out.labels, vec![1, 1, 1]);
    }

    #[test]
    fn spectral_forced_k_equals_m_is_degenerate() {
        let a = AffinityMatrix::from_edges(4, &[(0, 1)]);
        let out = spectral_labels_with_k(&a, 4, 9);
        assert_eq!(out.labels, vec![1, 2, 3, 4]);
        assert_eq!(classify_series(&out), ChangeClass::Complex);
    }

    #[test]
    fn classify_table_patterns() {
        let mk = |labels: Vec<usize>, k| LabelSeries { labels, k };
        assert_eq!(classify_series(&mk(vec![1, 1, 1, 2, 2], 2)), ChangeClass::Step);
        assert_eq!(
            classify_series(&mk(vec![1, 1, 2, 2, 1], 2)),
            ChangeClass::Impulse
        );
        assert_eq!(classify_series(&mk(vec![1, 2, 1, 2], 2)), ChangeClass::Cycle);
        assert_eq!(
            classify_series(&mk(vec![1, 1, 2, 3, 3], 3)),
            ChangeClass::Complex
        );
        assert_eq!(
            classify_series(&mk(vec![1, 1, 1, 1, 1], 1)),
            ChangeClass::Unchanged
        );
        // T = 2 with differing endpoints: assigned Cycle by convention
        assert_eq!(
            classify_series(&mk(vec![1, 2, 2, 1, 2], 2)),
            ChangeClass::Cycle
        );
    }

    #[test]
    fn classification_ignores_label_identity_permutation() {
        let a = LabelSeries {
            labels: vec![1, 1, 2, 2, 1],
            k: 2,
        };
        // swapping cluster identities reproduces the same class after
        // canonicalization
        let swapped = canonicalize(&[2, 2, 1, 1, 2]);
        assert_eq!(classify_series(&a), classify_series(&swapped));
    }

    #[test]
    fn spectral_matches_components_when_disconnected() {
        // a path of three plus an isolated date, k forced to the component count
        let a = AffinityMatrix::from_edges(4, &[(0, 1), (1, 2)]);
        let comps = a.connected_components();
        let out = spectral_labels_with_k(&a, 2, 5);
        assert_eq!(out.labels, comps);
    }

    #[test]
    fn classify_stack_deterministic() {
        use crate::speckle::{simulate_changes, ChangeKind, ChangeProfile, ReflectivityMap};
        let u = ReflectivityMap::constant(8, 8, 1.0).unwrap();
        let p = ChangeProfile::rect(ChangeKind::Step, 0, 0, 4, 4, 4, 6, 16.0);
        let sim = simulate_changes(&u, &[p], 6, 9.0, 99).unwrap();
        let m1 = classify_stack(&sim.stack, 0.99, None, 7).unwrap();
        let m2 = classify_stack(&sim.stack, 0.99, None, 7).unwrap();
        assert_eq!(m1.classes, m2.classes);
        // step region pixels mostly classified Step
        let step_hits = (0..4)
            .flat_map(|y| (0..4).map(move |x| (x, y)))
            .filter(|&(x, y)| m1.classes[y * 8 + x] == ChangeClass::Step)
            .count();
        assert!(step_hits >= 12, "step hits {step_hits}/16");
    }
}
