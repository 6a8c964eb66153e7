//! Aitchison geometry on the D-part simplex.
//!
//! Compositions are strictly positive vectors closed to a constant `kappa`.
//! Every log-ratio quantity is invariant to `kappa`, so it is carried along
//! only so that results can be reported on the caller's scale.
//!
//! Log-ratio coordinates go through an [`IlrBasis`]: a `(D-1) x D` contrast
//! matrix `V` with orthonormal rows, each summing to zero. Then
//! `ilr(x) = V clr(x)` and `clr(x) = V^T ilr(x)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the closure constraint when validating input.
pub const CLOSURE_TOLERANCE: f64 = 1e-10;

/// A point on the simplex: `D >= 2` strictly positive parts summing to `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    parts: Vec<f64>,
    kappa: f64,
}

impl Composition {
    /// Validates an already closed vector.
    pub fn new(parts: Vec<f64>, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        check_parts(&parts)?;
        let sum: f64 = parts.iter().sum();
        if ((sum - kappa) / kappa).abs() > CLOSURE_TOLERANCE {
            return Err(Error::NotClosed { sum, kappa });
        }
        Ok(Self { parts, kappa })
    }

    /// The neutral element `(kappa/D, ..., kappa/D)`.
    pub fn neutral(d: usize, kappa: f64) -> Result<Self> {
        closure(&vec![1.0; d], kappa)
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.parts.len()
    }

    pub fn into_parts(self) -> Vec<f64> {
        self.parts
    }

    fn logs(&self) -> impl Iterator<Item = f64> + '_ {
        self.parts.iter().map(|v| v.ln())
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidKappa(kappa))
    }
}

fn check_parts(v: &[f64]) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::DimensionTooSmall(v.len()));
    }
    for (index, &value) in v.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("part {index} = {value}")));
        }
        if value <= 0.0 {
            return Err(Error::NonPositivePart { index, value });
        }
    }
    Ok(())
}

fn check_same(x: &Composition, y: &Composition) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    if ((x.kappa - y.kappa) / x.kappa).abs() > CLOSURE_TOLERANCE {
        return Err(Error::KappaMismatch(x.kappa, y.kappa));
    }
    Ok(())
}

/// Rescales a strictly positive vector so its parts sum to `kappa`.
pub fn closure(v: &[f64], kappa: f64) -> Result<Composition> {
    check_kappa(kappa)?;
    check_parts(v)?;
    let sum: f64 = v.iter().sum();
    let parts = v.iter().map(|x| x / sum * kappa).collect();
    Ok(Composition { parts, kappa })
}

/// Handling of zero parts in raw data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    #[default]
    Reject,
    /// Zeros become `delta * kappa` in the closed vector, which is then re-closed.
    Replace { delta: f64 },
}

/// Closure of a nonnegative vector under a zero policy. Returns the
/// composition and the number of parts that were replaced.
pub fn closure_with_policy(v: &[f64], kappa: f64, policy: ZeroPolicy) -> Result<(Composition, usize)> {
    match policy {
        ZeroPolicy::Reject => closure(v, kappa).map(|c| (c, 0)),
        ZeroPolicy::Replace { delta } => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidConfig(format!("zero replacement delta {delta} not in (0, 1)")));
            }
            if v.len() < 2 {
                return Err(Error::DimensionTooSmall(v.len()));
            }
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::NonPositivePart { index, value });
            }
            let sum: f64 = v.iter().sum();
            if sum <= 0.0 {
                return Err(Error::NonPositivePart { index: 0, value: 0.0 });
            }
            let mut replaced = 0;
            let filled: Vec<f64> = v
                .iter()
                .map(|x| {
                    if *x == 0.0 {
                        replaced += 1;
                        delta
                    } else {
                        x / sum
                    }
                })
                .collect();
            closure(&filled, kappa).map(|c| (c, replaced))
        }
    }
}

/// Perturbation `x ⊕ y`: closure of the elementwise product.
pub fn perturb(x: &Composition, y: &Composition) -> Result<Composition> {
    check_same(x, y)?;
    // Work in logs so long chains of perturbations cannot underflow.
    let logs: Vec<f64> = x.logs().zip(y.logs()).map(|(a, b)| a + b).collect();
    Ok(from_logs(&logs, x.kappa))
}

/// Powering `xi ⊙ x`: closure of elementwise `xi`-th powers.
pub fn power(xi: f64, x: &Composition) -> Result<Composition> {
    if !xi.is_finite() {
        return Err(Error::NonFinite(format!("power {xi}")));
    }
    let logs: Vec<f64> = x.logs().map(|l| xi * l).collect();
    Ok(from_logs(&logs, x.kappa))
}

/// `x ⊖ y = x ⊕ ((-1) ⊙ y)`.
pub fn difference(x: &Composition, y: &Composition) -> Result<Composition> {
    perturb(x, &power(-1.0, y)?)
}

fn from_logs(logs: &[f64], kappa: f64) -> Composition {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp().max(f64::MIN_POSITIVE)).collect();
    let sum: f64 = raw.iter().sum();
    Composition { parts: raw.into_iter().map(|v| v / sum * kappa).collect(), kappa }
}

/// Aitchison inner product, evaluated as the double sum over all log-ratios
/// `(1/2D) Σ_l Σ_k log(x_l/x_k) log(y_l/y_k)`.
pub fn aitchison_inner(x: &Composition, y: &Composition) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    let lx: Vec<f64> = x.logs().collect();
    let ly: Vec<f64> = y.logs().collect();
    let d = lx.len();
    let mut acc = 0.0;
    for l in 0..d {
        for k in 0..d {
            acc += (lx[l] - lx[k]) * (ly[l] - ly[k]);
        }
    }
    Ok(acc / (2.0 * d as f64))
}

/// One-argument Aitchison norm `sqrt(<x, x>_A)`.
pub fn aitchison_norm(x: &Composition) -> f64 {
    aitchison_inner(x, x).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
}

/// Aitchison distance `||x ⊖ y||_A`.
pub fn aitchison_dist(x: &Composition, y: &Composition) -> Result<f64> {
    Ok(aitchison_norm(&difference(x, y)?))
}

/// Centred log-ratio: log of each part over the geometric mean.
pub fn clr(x: &Composition) -> DVector<f64> {
    let logs: Vec<f64> = x.logs().collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    DVector::from_iterator(logs.len(), logs.iter().map(|l| l - mean))
}

/// Inverse clr. The input is projected onto the sum-zero hyperplane first.
pub fn clr_inv(z: &DVector<f64>, kappa: f64) -> Result<Composition> {
    check_kappa(kappa)?;
    if z.len() < 2 {
        return Err(Error::DimensionTooSmall(z.len()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clr coordinate".into()));
    }
    Ok(from_logs(z.as_slice(), kappa))
}

/// Sequential binary partition of the part indices `0..D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partition {
    Leaf(usize),
    Split(Box<Partition>, Box<Partition>),
}

impl Partition {
    /// Splits parts into two groups as equally as possible at every node,
    /// the first group taking the extra part when the count is odd.
    pub fn balanced(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        Ok(Self::balanced_range(0, d))
    }

    fn balanced_range(lo: usize, hi: usize) -> Self {
        if hi - lo == 1 {
            return Partition::Leaf(lo);
        }
        let mid = lo + (hi - lo).div_ceil(2);
        Partition::Split(Box::new(Self::balanced_range(lo, mid)), Box::new(Self::balanced_range(mid, hi)))
    }

    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            Partition::Leaf(i) => out.push(*i),
            Partition::Split(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    /// Checks that the leaves are exactly `{0, ..., d-1}`, each once.
    pub fn validate(&self, d: usize) -> Result<()> {
        let mut leaves = self.leaves();
        leaves.sort_unstable();
        if leaves.len() != d || leaves.iter().enumerate().any(|(i, &l)| i != l) {
            return Err(Error::InvalidPartition(format!("leaves {:?} do not cover 0..{d} exactly once", self.leaves())));
        }
        Ok(())
    }

    /// Parses nested pairs such as `((0,1),(2,3))` or `(0,(1,2))`.
    pub fn parse(s: &str) -> Result<Self> {
        let tokens: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let p = Self::parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::InvalidPartition(format!("trailing input in {s:?}")));
        }
        Ok(p)
    }

    fn parse_node(t: &[char], pos: &mut usize) -> Result<Self> {
        match t.get(*pos) {
            Some('(') => {
                *pos += 1;
                let left = Self::parse_node(t, pos)?;
                if t.get(*pos) != Some(&',') {
                    return Err(Error::InvalidPartition(format!("expected ',' at {}", *pos)));
                }
                *pos += 1;
                let right = Self::parse_node(t, pos)?;
                if t.get(*pos) != Some(&')') {
                    return Err(Error::InvalidPartition(format!("expected ')' at {}", *pos)));
                }
                *pos += 1;
                Ok(Partition::Split(Box::new(left), Box::new(right)))
            }
            Some(c) if c.is_ascii_digit() => {
                let start = *pos;
                while t.get(*pos).is_some_and(|c| c.is_ascii_digit()) {
                    *pos += 1;
                }
                let digits: String = t[start..*pos].iter().collect();
                digits
                    .parse()
                    .map(Partition::Leaf)
                    .map_err(|_| Error::InvalidPartition(format!("bad index {digits}")))
            }
            _ => Err(Error::InvalidPartition(format!("unexpected token at {}", *pos))),
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partition::Leaf(i) => write!(f, "{i}"),
            Partition::Split(a, b) => write!(f, "({a},{b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisMode {
    Helmert,
    Balance(Partition),
    Pivot,
}

/// Orthonormal ilr coordinate system: a `(D-1) x D` contrast matrix whose
/// rows are the clr images of the basis compositions.
#[derive(Debug, Clone, PartialEq)]
pub struct IlrBasis {
    contrast: DMatrix<f64>,
    mode: BasisMode,
}

impl IlrBasis {
    pub fn helmert(d: usize) -> Result<Self> {
        Self::build(d, BasisMode::Helmert)
    }

    pub fn pivot(d: usize) -> Result<Self> {
        Self::build(d, BasisMode::Pivot)
    }

    /// Balance coordinates from the default equal-split partition.
    pub fn balanced(d: usize) -> Result<Self> {
        Self::build(d, BasisMode::Balance(Partition::balanced(d)?))
    }

    pub fn build(d: usize, mode: BasisMode) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        let mut v = DMatrix::zeros(d - 1, d);
        match &mode {
            BasisMode::Helmert => {
                // row k: (1, ..., 1 [k times], -k, 0, ..., 0) / sqrt(k (k+1))
                for k in 1..d {
                    let s = 1.0 / ((k * (k + 1)) as f64).sqrt();
                    for j in 0..k {
                        v[(k - 1, j)] = s;
                    }
                    v[(k - 1, k)] = -(k as f64) * s;
                }
            }
            BasisMode::Pivot => {
                // row k: sqrt((D-k)/(D-k+1)) * log(x_k / g(x_{k+1..D})), 1-based k
                for k in 1..d {
                    let rest = (d - k) as f64;
                    let s = (rest / (rest + 1.0)).sqrt();
                    v[(k - 1, k - 1)] = s;
                    for j in k..d {
                        v[(k - 1, j)] = -s / rest;
                    }
                }
            }
            BasisMode::Balance(partition) => {
                partition.validate(d)?;
                let mut row = 0;
                fill_balances(partition, &mut v, &mut row);
            }
        }
        Ok(Self { contrast: v, mode })
    }

    /// The contrast matrix `V` (`(D-1) x D`).
    pub fn contrast(&self) -> &DMatrix<f64> {
        &self.contrast
    }

    pub fn mode(&self) -> &BasisMode {
        &self.mode
    }

    /// Number of parts D.
    pub fn parts(&self) -> usize {
        self.contrast.ncols()
    }

    /// Number of coordinates D - 1.
    pub fn coords(&self) -> usize {
        self.contrast.nrows()
    }

    pub fn ilr(&self, x: &Composition) -> Result<DVector<f64>> {
        if x.dim() != self.parts() {
            return Err(Error::DimensionMismatch { expected: self.parts(), got: x.dim() });
        }
        Ok(&self.contrast * clr(x))
    }

    pub fn ilr_inv(&self, y: &DVector<f64>, kappa: f64) -> Result<Composition> {
        if y.len() != self.coords() {
            return Err(Error::DimensionMismatch { expected: self.coords(), got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ilr coordinate".into()));
        }
        clr_inv(&(self.contrast.transpose() * y), kappa)
    }

    /// `clr(x) = V^T ilr(x)`.
    pub fn ilr_to_clr(&self, y: &DVector<f64>) -> DVector<f64> {
        self.contrast.transpose() * y
    }
}

fn fill_balances(node: &Partition, v: &mut DMatrix<f64>, row: &mut usize) {
    if let Partition::Split(a, b) = node {
        let left = a.leaves();
        let right = b.leaves();
        let (r, s) = (left.len() as f64, right.len() as f64);
        let pos = (s / (r * (r + s))).sqrt();
        let neg = -(r / (s * (r + s))).sqrt();
        for &i in &left {
            v[(*row, i)] = pos;
        }
        for &j in &right {
            v[(*row, j)] = neg;
        }
        *row += 1;
        fill_balances(a, v, row);
        fill_balances(b, v, row);
    }
}

/// Free-function form of [`IlrBasis::ilr`].
pub fn ilr(x: &Composition, basis: &IlrBasis) -> Result<DVector<f64>> {
    basis.ilr(x)
}

/// Free-function form of [`IlrBasis::ilr_inv`].
pub fn ilr_inv(y: &DVector<f64>, basis: &IlrBasis, kappa: f64) -> Result<Composition> {
    basis.ilr_inv(y, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn comp(v: &[f64]) -> Composition {
        closure(v, 1.0).unwrap()
    }

    #[test]
    fn closure_examples() {
        assert_eq!(comp(&[1.0, 1.0, 2.0]).parts(), &[0.25, 0.25, 0.5]);
        assert_eq!(comp(&[0.3, 0.7]).parts(), &[0.3, 0.7]);
        assert_eq!(comp(&[5.0; 4]).parts(), &[0.25; 4]);
    }

    #[test]
    fn closure_errors() {
        assert!(matches!(closure(&[1.0, 0.0], 1.0), Err(Error::NonPositivePart { index: 1, .. })));
        assert!(matches!(closure(&[1.0, -2.0], 1.0), Err(Error::NonPositivePart { .. })));
        assert!(matches!(closure(&[1.0], 1.0), Err(Error::DimensionTooSmall(1))));
        assert!(matches!(closure(&[1.0, 1.0], 0.0), Err(Error::InvalidKappa(_))));
        assert!(matches!(Composition::new(vec![0.5, 0.6], 1.0), Err(Error::NotClosed { .. })));
    }

    #[test]
    fn zero_replacement_is_opt_in() {
        assert!(closure_with_policy(&[3.0, 0.0, 1.0], 1.0, ZeroPolicy::Reject).is_err());
        let (c, n) = closure_with_policy(&[3.0, 0.0, 1.0], 1.0, ZeroPolicy::Replace { delta: 1e-6 }).unwrap();
        assert_eq!(n, 1);
        assert!(c.parts().iter().all(|v| *v > 0.0));
        assert_abs_diff_eq!(c.parts()[1] / c.parts()[0], 1e-6 / 0.75, epsilon = 1e-15);
    }

    #[test]
    fn group_laws() {
        let x = comp(&[0.2, 0.3, 0.5]);
        let neutral = Composition::neutral(3, 1.0).unwrap();
        let id = perturb(&x, &neutral).unwrap();
        for (a, b) in id.parts().iter().zip(x.parts()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let inv = perturb(&x, &power(-1.0, &x).unwrap()).unwrap();
        for v in inv.parts() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let sym = perturb(&comp(&[0.2, 0.8]), &comp(&[0.8, 0.2])).unwrap();
        assert_abs_diff_eq!(sym.parts()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn power_examples() {
        let x = comp(&[0.1, 0.6, 0.3]);
        let one = power(1.0, &x).unwrap();
        for (a, b) in one.parts().iter().zip(x.parts()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        for v in power(0.0, &x).unwrap().parts() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(power(2.0, &comp(&[0.5, 0.5])).unwrap().parts(), &[0.5, 0.5]);
    }

    #[test]
    fn perturb_dimension_mismatch() {
        let err = perturb(&comp(&[1.0, 2.0]), &comp(&[1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn inner_product_two_parts() {
        let x = comp(&[0.7, 0.3]);
        let expected = (7.0f64 / 3.0).ln().powi(2) / 2.0;
        assert_abs_diff_eq!(aitchison_inner(&x, &x).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.35900, epsilon = 1e-4);
        let neutral = Composition::neutral(2, 1.0).unwrap();
        assert_eq!(aitchison_inner(&neutral, &x).unwrap(), 0.0);
        assert_eq!(aitchison_dist(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn clr_direct_formula() {
        let x = comp(&[0.25, 0.25, 0.5]);
        let z = clr(&x);
        let mean = (0.25f64.ln() * 2.0 + 0.5f64.ln()) / 3.0;
        for (zi, xi) in z.iter().zip(x.parts()) {
            assert_abs_diff_eq!(*zi, xi.ln() - mean, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(z.sum(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[2], 2.0 * 2f64.ln() / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn helmert_two_parts() {
        let b = IlrBasis::helmert(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(b.contrast()[(0, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.contrast()[(0, 1)], -s, epsilon = 1e-15);
        let z = 0.8;
        let y = b.ilr(&comp(&[z, 1.0 - z])).unwrap();
        assert_abs_diff_eq!(y[0], s * (z / (1.0 - z)).ln(), epsilon = 1e-14);
    }

    #[test]
    fn pivot_first_coordinate() {
        let b = IlrBasis::pivot(3).unwrap();
        let x = comp(&[0.2, 0.5, 0.3]);
        let y = b.ilr(&x).unwrap();
        let direct = (2.0f64 / 3.0).sqrt() * (0.2 / (0.5f64 * 0.3).sqrt()).ln();
        assert_abs_diff_eq!(y[0], direct, epsilon = 1e-14);
    }

    #[test]
    fn balance_coordinates_are_group_log_ratios() {
        // D=4, ((0,1),(2,3)): first balance = sqrt(4*... ) with r = s = 2.
        let p = Partition::parse("((0,1),(2,3))").unwrap();
        let b = IlrBasis::build(4, BasisMode::Balance(p)).unwrap();
        let x = comp(&[0.1, 0.2, 0.3, 0.4]);
        let y = b.ilr(&x).unwrap();
        let g = |a: f64, c: f64| (a * c).sqrt();
        assert_abs_diff_eq!(y[0], 1.0 * (g(0.1, 0.2) / g(0.3, 0.4)).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(y[1], (0.5f64).sqrt() * (0.1f64 / 0.2).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(y[2], (0.5f64).sqrt() * (0.3f64 / 0.4).ln(), epsilon = 1e-14);
    }

    #[test]
    fn default_partition_splits_evenly() {
        assert_eq!(Partition::balanced(3).unwrap().to_string(), "((0,1),2)");
        assert_eq!(Partition::balanced(4).unwrap().to_string(), "((0,1),(2,3))");
        assert_eq!(Partition::balanced(5).unwrap().to_string(), "(((0,1),2),(3,4))");
    }

    #[test]
    fn invalid_partitions() {
        let dup = Partition::parse("((0,1),1)").unwrap();
        assert!(matches!(IlrBasis::build(3, BasisMode::Balance(dup)), Err(Error::InvalidPartition(_))));
        let short = Partition::parse("(0,1)").unwrap();
        assert!(IlrBasis::build(3, BasisMode::Balance(short)).is_err());
        assert!(Partition::parse("(0,1").is_err());
        assert!(Partition::parse("(0;1)").is_err());
    }

    #[test]
    fn ilr_inv_guards_large_coordinates() {
        for d in 2..=6 {
            let b = IlrBasis::helmert(d).unwrap();
            for sign in [-1.0, 1.0] {
                let y = DVector::from_element(d - 1, 30.0 * sign);
                let x = b.ilr_inv(&y, 1.0).unwrap();
                assert!(x.parts().iter().all(|v| *v > 0.0));
                assert_abs_diff_eq!(x.parts().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
        let y = DVector::from_element(2, 1e4);
        let x = IlrBasis::helmert(3).unwrap().ilr_inv(&y, 1.0).unwrap();
        assert!(x.parts().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn ilr_inv_rejects_non_finite() {
        let b = IlrBasis::helmert(3).unwrap();
        let y = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert!(matches!(b.ilr_inv(&y, 1.0), Err(Error::NonFinite(_))));
        assert!(matches!(b.ilr_inv(&DVector::zeros(3), 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn neutral_maps_to_origin() {
        for d in 2..=6 {
            for basis in [IlrBasis::helmert(d), IlrBasis::pivot(d), IlrBasis::balanced(d)] {
                let b = basis.unwrap();
                let y = b.ilr(&Composition::neutral(d, 1.0).unwrap()).unwrap();
                assert!(y.iter().all(|v| v.abs() < 1e-15));
                let x = b.ilr_inv(&DVector::zeros(d - 1), 1.0).unwrap();
                assert!(x.parts().iter().all(|v| (v - 1.0 / d as f64).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn kappa_is_kept_for_display() {
        let x = closure(&[1.0, 3.0], 100.0).unwrap();
        assert_eq!(x.parts(), &[25.0, 75.0]);
        let b = IlrBasis::helmert(2).unwrap();
        let y1 = b.ilr(&x).unwrap();
        let y2 = b.ilr(&closure(&[1.0, 3.0], 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(y1[0], y2[0], epsilon = 1e-15);
        assert_eq!(b.ilr_inv(&y1, 100.0).unwrap().kappa(), 100.0);
    }
}
