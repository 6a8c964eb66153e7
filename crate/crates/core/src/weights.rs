//! Spatial weight matrices.
//!
//! Stored as compressed sparse rows with column indices sorted inside each
//! row, so every product iterates entries in the same row-major order.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct SpatialWeights {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    standardized: bool,
    /// Row sums of the matrix this one was standardized from. When that
    /// matrix was symmetric, `W` is similar to a symmetric matrix.
    source_row_sums: Option<Vec<f64>>,
    symmetric_source: bool,
    spectrum: OnceLock<Option<Vec<Complex<f64>>>>,
}

impl Clone for SpatialWeights {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.clone(),
            standardized: self.standardized,
            source_row_sums: self.source_row_sums.clone(),
            symmetric_source: self.symmetric_source,
            spectrum,
        }
    }
}

impl PartialEq for SpatialWeights {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.row_ptr == other.row_ptr
            && self.cols == other.cols
            && self.vals == other.vals
            && self.standardized == other.standardized
    }
}

impl SpatialWeights {
    /// Builds from `(i, j, w)` triplets. Duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in triplets {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidWeights(format!("entry ({i},{j}) = {w}")));
            }
            rows[i].push((j, w));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, w) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += w;
                } else if w != 0.0 {
                    cols.push(j);
                    vals.push(w);
                }
            }
            row_ptr.push(cols.len());
        }
        let mut w = Self {
            n,
            row_ptr,
            cols,
            vals,
            standardized: false,
            source_row_sums: None,
            symmetric_source: false,
            spectrum: OnceLock::new(),
        };
        w.symmetric_source = w.is_symmetric();
        Ok(w)
    }

    /// Dense constructor, mostly for tests and small problems.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch(format!("weights must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), &trip)
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_triplets(n, &[]).expect("empty matrix is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Iterates `(j, w_ij)` over row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Directed edges `(i, j, w)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, w)| (i, j, w))).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, w)| w)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    pub fn neighbor_counts(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).collect()
    }

    /// Units without neighbours.
    pub fn islands(&self) -> Vec<usize> {
        self.neighbor_counts().iter().enumerate().filter(|(_, &c)| c == 0).map(|(i, _)| i).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for (_, j, w) in self.triplets() {
            sums[j] += w.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().iter().all(|&(i, j, w)| self.get(j, i) == w)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, w) in self.triplets() {
            m[(i, j)] = w;
        }
        m
    }

    /// Fraction of structural zeros over all `n^2` entries.
    pub fn sparsity(&self) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        let total = (self.n * self.n) as f64;
        (total - self.nnz() as f64) / total
    }

    /// `W * Y` for a dense `n x p` matrix.
    pub fn mul_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(y.nrows(), self.n, "W * Y row mismatch");
        let mut out = DMatrix::zeros(self.n, y.ncols());
        for c in 0..y.ncols() {
            let col = y.column(c);
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, w) in self.row(i) {
                    acc += w * col[j];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    /// Divides every nonempty row by its sum. Zero rows stay zero.
    pub fn row_standardize(&self) -> Self {
        if self.standardized {
            return self.clone();
        }
        let sums = self.row_sums();
        let islands = self.islands();
        if !islands.is_empty() {
            log::warn!("{} unit(s) without neighbours keep a zero row: {:?}", islands.len(), islands);
        }
        let mut vals = self.vals.clone();
        for (i, sum) in sums.iter().enumerate() {
            for v in &mut vals[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *v /= sum;
            }
        }
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals,
            standardized: true,
            source_row_sums: Some(sums),
            symmetric_source: self.symmetric_source,
            spectrum: OnceLock::new(),
        }
    }

    /// Eigenvalues of `W`, computed once and cached. `None` when the
    /// eigen-solver did not converge.
    pub fn spectrum(&self) -> Option<&[Complex<f64>]> {
        self.spectrum.get_or_init(|| self.compute_spectrum()).as_deref()
    }

    fn compute_spectrum(&self) -> Option<Vec<Complex<f64>>> {
        if self.n == 0 {
            return Some(Vec::new());
        }
        if self.symmetric_source {
            // W = diag(1/s) A with A symmetric is similar to diag(s)^{1/2} W diag(s)^{-1/2}
            // = diag(s)^{-1/2} A diag(s)^{-1/2}, which is symmetric.
            let scale = match &self.source_row_sums {
                Some(s) => s.clone(),
                None => vec![1.0; self.n],
            };
            let mut m = DMatrix::zeros(self.n, self.n);
            for (i, j, w) in self.triplets() {
                if scale[i] > 0.0 && scale[j] > 0.0 {
                    m[(i, j)] = w * (scale[i] / scale[j]).sqrt();
                }
            }
            let m = (&m + m.transpose()) * 0.5;
            let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)?;
            return Some(eig.eigenvalues.iter().map(|&v| Complex::new(v, 0.0)).collect());
        }
        let schur = nalgebra::Schur::try_new(self.to_dense(), f64::EPSILON, 10_000)?;
        Some(schur.complex_eigenvalues().iter().copied().collect())
    }
}

/// Rook contiguity on a `side x side` grid, cells numbered row-major.
pub fn rook_grid(side: usize) -> Result<SpatialWeights> {
    if side < 2 {
        return Err(Error::SideTooSmall(side));
    }
    let mut trip = Vec::with_capacity(4 * side * side);
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            if r > 0 {
                trip.push((i, i - side, 1.0));
            }
            if c > 0 {
                trip.push((i, i - 1, 1.0));
            }
            if c + 1 < side {
                trip.push((i, i + 1, 1.0));
            }
            if r + 1 < side {
                trip.push((i, i + side, 1.0));
            }
        }
    }
    SpatialWeights::from_triplets(side * side, &trip)
}

/// Binary symmetric weights from an undirected edge list.
pub fn from_adjacency(n: usize, pairs: &[(usize, usize)]) -> Result<SpatialWeights> {
    let mut set = BTreeSet::new();
    for &(i, j) in pairs {
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        set.insert((i, j));
        set.insert((j, i));
    }
    let trip: Vec<_> = set.into_iter().map(|(i, j)| (i, j, 1.0)).collect();
    SpatialWeights::from_triplets(n, &trip)
}

/// Links every pair of distinct points at planar distance `<= radius`.
pub fn distance_cutoff(coords: &[(f64, f64)], radius: f64) -> Result<SpatialWeights> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::NonPositiveRadius(radius));
    }
    if let Some(i) = coords.iter().position(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::NonFinite(format!("coordinate of point {i}")));
    }
    let mut trip = Vec::new();
    for (i, a) in coords.iter().enumerate() {
        for (j, b) in coords.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = (a.0 - b.0).hypot(a.1 - b.1);
            if d > 0.0 && d <= radius {
                trip.push((i, j, 1.0));
            }
        }
    }
    SpatialWeights::from_triplets(coords.len(), &trip)
}

/// Free-function form of [`SpatialWeights::row_standardize`].
pub fn row_standardize(w: &SpatialWeights) -> SpatialWeights {
    w.row_standardize()
}

/// Free-function form of [`SpatialWeights::sparsity`].
pub fn sparsity(w: &SpatialWeights) -> f64 {
    w.sparsity()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force neighbour counting directly on grid coordinates.
    fn brute_rook_degree(side: usize, i: usize) -> usize {
        let (r, c) = ((i / side) as i64, (i % side) as i64);
        (0..side * side)
            .filter(|&j| {
                let (r2, c2) = ((j / side) as i64, (j % side) as i64);
                (r - r2).abs() + (c - c2).abs() == 1
            })
            .count()
    }

    #[test]
    fn rook_two_by_two() {
        let w = rook_grid(2).unwrap();
        assert_eq!(w.neighbor_counts(), vec![2; 4]);
        assert!(w.is_symmetric());
    }

    #[test]
    fn rook_four_by_four_degrees() {
        let w = rook_grid(4).unwrap();
        let counts = w.neighbor_counts();
        for (i, &c) in counts.iter().enumerate() {
            assert_eq!(c, brute_rook_degree(4, i));
        }
        assert_eq!(counts[0], 2);
        assert_eq!(counts[1], 3);
        assert_eq!(counts[5], 4);
        assert_eq!(w.nnz(), 48);
        assert_eq!(w.sparsity(), 0.8125);
    }

    #[test]
    fn rook_edge_count_formula() {
        for k in 2..=9 {
            let w = rook_grid(k).unwrap();
            assert_eq!(w.nnz(), 2 * (2 * k * (k - 1)));
            assert!(w.is_symmetric());
        }
        assert!(matches!(rook_grid(1), Err(Error::SideTooSmall(1))));
    }

    #[test]
    fn adjacency_examples() {
        assert_eq!(from_adjacency(3, &[]).unwrap().nnz(), 0);
        let w = from_adjacency(3, &[(0, 1)]).unwrap();
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(w.get(1, 0), 1.0);
        let dup = from_adjacency(3, &[(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(dup, w);
        assert!(matches!(from_adjacency(3, &[(1, 1)]), Err(Error::SelfLoop(1))));
        assert!(matches!(from_adjacency(3, &[(0, 3)]), Err(Error::IndexOutOfRange { index: 3, n: 3 })));
    }

    #[test]
    fn distance_cutoff_examples() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        let w = distance_cutoff(&pts, 1.0).unwrap();
        assert_eq!(w.triplets(), vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]);
        assert_eq!(distance_cutoff(&pts, 0.5).unwrap().nnz(), 0);
        let full = distance_cutoff(&pts, 10.0).unwrap();
        assert_eq!(full.nnz(), 6);
        assert!((full.sparsity() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(distance_cutoff(&pts, 0.0), Err(Error::NonPositiveRadius(_))));
    }

    #[test]
    fn standardization() {
        let w = rook_grid(2).unwrap().row_standardize();
        assert!(w.triplets().iter().all(|&(_, _, v)| v == 0.5));
        let w4 = rook_grid(4).unwrap().row_standardize();
        for s in w4.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(w4.norm_inf(), 1.0);
        assert_eq!(w4.row_standardize(), w4);
    }

    #[test]
    fn islands_stay_zero() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (10.0, 0.0)];
        let w = distance_cutoff(&pts, 1.5).unwrap().row_standardize();
        assert_eq!(w.islands(), vec![2]);
        assert_eq!(w.row_sums(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn spectrum_matches_general_solver() {
        let w = rook_grid(3).unwrap().row_standardize();
        let mut fast: Vec<f64> = w.spectrum().unwrap().iter().map(|c| c.re).collect();
        let mut general: Vec<f64> = w.to_dense().complex_eigenvalues().iter().map(|c| c.re).collect();
        fast.sort_by(f64::total_cmp);
        general.sort_by(f64::total_cmp);
        for (a, b) in fast.iter().zip(&general) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((fast.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mul_mat_matches_dense() {
        let w = rook_grid(3).unwrap().row_standardize();
        let y = DMatrix::from_fn(9, 2, |i, j| (i as f64) - 2.0 * j as f64);
        let diff = w.mul_mat(&y) - w.to_dense() * &y;
        assert!(diff.amax() < 1e-14);
    }
}
