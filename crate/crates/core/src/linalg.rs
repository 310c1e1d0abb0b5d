//! Small dense and sparse linear-algebra helpers shared by the analysis
//! modules: a CSR matrix, rank decisions with gap certificates, Cholesky
//! based mass transforms and complex linear solves.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result, C64};

/// Entry type usable in [`Csr`].
pub trait Entry:
    Copy + Default + PartialEq + std::ops::AddAssign + std::ops::Mul<Output = Self> + std::fmt::Debug
{
}
impl Entry for f64 {}
impl Entry for i64 {}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Entry> Csr<T> {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped. Column indices are sorted inside each row.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = T::default();
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                if v != T::default() {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Iterator over `(col, value)` of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.data[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (c, r, v))
            .collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let mut acc = T::default();
                for (c, v) in self.row(r) {
                    acc += v * x[c];
                }
                acc
            })
            .collect()
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Csr<T>) -> Csr<T> {
        assert_eq!(self.ncols, other.nrows);
        let mut trips = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trips.push((r, c, a * b));
                }
            }
        }
        Csr::from_triplets(self.nrows, other.ncols, &trips)
    }

    pub fn map<U: Entry>(&self, f: impl Fn(T) -> U) -> Csr<U> {
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, f(v)))
            .collect();
        Csr::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::default())
    }
}

impl Csr<f64> {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn matvec_dv(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.matvec(x.as_slice()))
    }
}

/// Conjugate gradient for an SPD operator given by `apply`.
pub fn conjugate_gradient(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> DVector<f64> {
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let target = tol * tol * b.dot(b);
    for _ in 0..max_iter {
        if rr <= target {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    x
}

/// Outcome of a numerical rank decision.
#[derive(Clone, Debug, Serialize)]
pub struct RankDecision {
    pub rank: usize,
    /// Ratio between the smallest retained and the largest discarded singular
    /// value (`inf` when one side is empty or exactly zero).
    pub gap_ratio: f64,
    pub threshold: f64,
    pub singular_values: Vec<f64>,
}

/// Minimum singular-value gap ratio accepted for rank and kernel decisions.
pub const REQUIRED_GAP: f64 = 10.0;

/// Rank from singular values (any order) with threshold `rel_tol · σ_max`,
/// certified by a gap ratio of at least [`REQUIRED_GAP`].
pub fn rank_from_singular_values(sv: &[f64], rel_tol: f64) -> Result<RankDecision> {
    let mut s: Vec<f64> = sv.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax;
    let rank = s.iter().filter(|&&x| x > threshold).count();
    let above = if rank > 0 { Some(s[rank - 1]) } else { None };
    let below = s.get(rank).copied();
    let gap_ratio = match (above, below) {
        (Some(a), Some(b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    };
    if gap_ratio < REQUIRED_GAP {
        let lo = rank.saturating_sub(3);
        let hi = (rank + 3).min(s.len());
        return Err(Error::RankAmbiguous {
            gap_ratio,
            required: REQUIRED_GAP,
            profile: s[lo..hi].to_vec(),
        });
    }
    Ok(RankDecision {
        rank,
        gap_ratio,
        threshold,
        singular_values: s,
    })
}

/// Default relative tolerance for rank decisions on assembled operators.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<RankDecision> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(RankDecision {
            rank: 0,
            gap_ratio: f64::INFINITY,
            threshold: 0.0,
            singular_values: vec![],
        });
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from_singular_values(sv.as_slice(), rel_tol)
}

pub fn numerical_rank_complex(m: &DMatrix<C64>, rel_tol: f64) -> Result<RankDecision> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(RankDecision {
            rank: 0,
            gap_ratio: f64::INFINITY,
            threshold: 0.0,
            singular_values: vec![],
        });
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from_singular_values(sv.as_slice(), rel_tol)
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    a.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{}×{} block", a.nrows(), a.ncols())))
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::identity(n, n);
    if n > 0 {
        l.solve_lower_triangular_mut(&mut inv);
    }
    inv
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Size above which spectral norms come from the Gram matrix instead of an SVD.
pub const GRAM_NORM_MIN: usize = 400;

pub fn norm2_complex(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows().min(m.ncols()) >= GRAM_NORM_MIN {
        let (re, im) = split_complex(m);
        return norm2_split(&re, &im);
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn split_complex(m: &DMatrix<C64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// `‖re + i·im‖₂` as the square root of the top eigenvalue of the Hermitian
/// Gram matrix, whose products are formed with real GEMMs. The top singular
/// value keeps full relative accuracy; only small ones would suffer.
pub fn norm2_split(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    if re.is_empty() {
        return 0.0;
    }
    let (a, b) = if re.nrows() < re.ncols() {
        (re.transpose(), -im.transpose())
    } else {
        (re.clone(), im.clone())
    };
    let gr = a.tr_mul(&a) + b.tr_mul(&b);
    let gi = a.tr_mul(&b) - b.tr_mul(&a);
    let g = DMatrix::from_fn(gr.nrows(), gr.ncols(), |i, j| {
        // exact Hermitian symmetry for the eigensolver
        C64::new(
            0.5 * (gr[(i, j)] + gr[(j, i)]),
            0.5 * (gi[(i, j)] - gi[(j, i)]),
        )
    });
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Solves `A X = B` for a general complex square `A` by LU.
pub fn solve_complex(a: DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::Invalid("singular complex system".into()))
}

/// Symmetrizes in place to remove rounding asymmetry.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_sums_duplicates_and_transposes() {
        let m = Csr::from_triplets(2, 3, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0), (1, 2, 0.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense()[(0, 1)], 3.0);
        assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, -1.0]);
        let p = m.matmul(&m.transpose());
        assert_eq!(p.to_dense(), m.to_dense() * m.to_dense().transpose());
    }

    #[test]
    fn rank_gap_detection() {
        let d = rank_from_singular_values(&[3.0, 1.0, 1e-14], 1e-8).unwrap();
        assert_eq!(d.rank, 2);
        assert!(d.gap_ratio > 1e10);
        let err = rank_from_singular_values(&[1.0, 2e-8, 5e-9], 1e-8);
        assert!(matches!(err, Err(Error::RankAmbiguous { .. })));
        assert_eq!(
            rank_from_singular_values(&[0.0, 0.0], 1e-8).unwrap().rank,
            0
        );
    }

    #[test]
    fn cg_solves_spd() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = conjugate_gradient(|v| &a * v, &b, 1e-14, 100);
        assert!((&a * x - b).amax() < 1e-12);
    }

    #[test]
    fn gram_norm_matches_svd() {
        for (r, c) in [(30, 20), (20, 30), (25, 25)] {
            let m = DMatrix::from_fn(r, c, |i, j| {
                C64::new(
                    ((i * 7 + j * 3) % 11) as f64 - 5.0,
                    ((i * 5 + j * 13) % 7) as f64 - 3.0,
                )
            });
            let svd = m.clone().svd(false, false).singular_values.max();
            let (re, im) = split_complex(&m);
            let gram = norm2_split(&re, &im);
            assert!((svd - gram).abs() < 1e-12 * svd, "{r}x{c}: {svd} vs {gram}");
        }
    }
}
