//! Exact cohomology: Betti numbers by modular rank, integer cocycle
//! generators by unimodular column reduction, and the Alexander–Whitney cup
//! product on ordered tuples.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::SimplicialComplex;
use crate::linalg::Csr;
use crate::{Error, Result};

const PRIMES: [u64; 2] = [1_000_000_007, 998_244_353];

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

/// Rank of an integer matrix over `𝔽_p`, by streaming sparse elimination.
pub fn rank_mod_p(m: &Csr<i64>, p: u64) -> usize {
    let reduce = |v: i64| v.rem_euclid(p as i64) as u64;
    // pivot rows keyed by leading column, leading entry normalised to 1
    let mut pivots: HashMap<usize, Vec<(usize, u64)>> = HashMap::new();
    for r in 0..m.nrows() {
        let mut row: Vec<(usize, u64)> = m
            .row(r)
            .map(|(c, v)| (c, reduce(v)))
            .filter(|e| e.1 != 0)
            .collect();
        while let Some(&(lead, a)) = row.first() {
            match pivots.get(&lead) {
                Some(piv) => {
                    let f = p - a;
                    let mut out = Vec::with_capacity(row.len() + piv.len());
                    let (mut i, mut j) = (0, 0);
                    while i < row.len() || j < piv.len() {
                        let ci = row.get(i).map_or(usize::MAX, |e| e.0);
                        let cj = piv.get(j).map_or(usize::MAX, |e| e.0);
                        if ci < cj {
                            out.push(row[i]);
                            i += 1;
                        } else if cj < ci {
                            out.push((cj, piv[j].1 * f % p));
                            j += 1;
                        } else {
                            let v = (row[i].1 + piv[j].1 * f) % p;
                            if v != 0 {
                                out.push((ci, v));
                            }
                            i += 1;
                            j += 1;
                        }
                    }
                    row = out;
                }
                None => {
                    let inv = pow_mod(a, p - 2, p);
                    for e in row.iter_mut() {
                        e.1 = e.1 * inv % p;
                    }
                    pivots.insert(lead, row);
                    break;
                }
            }
        }
    }
    pivots.len()
}

fn exact_rank(m: &Csr<i64>) -> usize {
    PRIMES.iter().map(|&p| rank_mod_p(m, p)).max().unwrap_or(0)
}

/// Betti numbers over ℚ, `b_k = n_k − rank δ_k − rank δ_{k−1}`.
pub fn betti_numbers(cx: &SimplicialComplex) -> Vec<usize> {
    let d = cx.dim();
    let ranks: Vec<usize> = (0..d).map(|k| exact_rank(&cx.coboundary(k))).collect();
    (0..=d)
        .map(|k| {
            let out = if k < d { ranks[k] } else { 0 };
            let inc = if k > 0 { ranks[k - 1] } else { 0 };
            cx.count(k) - out - inc
        })
        .collect()
}

fn dense_i64(m: &Csr<i64>) -> Vec<Vec<i64>> {
    let mut out = vec![vec![0i64; m.ncols()]; m.nrows()];
    for (r, c, v) in m.triplets() {
        out[r][c] = v;
    }
    out
}

/// Unimodular column reduction `A V = [H | 0]`. Returns `(V, rank)`; the
/// columns `rank..` of `V` are a ℤ-basis of the integer kernel of `A` and the
/// columns `..rank` complete it to a basis of ℤⁿ.
fn column_reduce(a: &[Vec<i64>], ncols: usize) -> Result<(Vec<Vec<i64>>, usize)> {
    let mut a: Vec<Vec<i64>> = a.to_vec();
    // v stored column-major: v[c] is column c
    let mut v: Vec<Vec<i64>> = (0..ncols)
        .map(|c| {
            let mut col = vec![0; ncols];
            col[c] = 1;
            col
        })
        .collect();
    let nrows = a.len();
    let mut p = 0;
    let axpy = |x: &mut [i64], y: &[i64], q: i64| -> Result<()> {
        for (xi, yi) in x.iter_mut().zip(y) {
            if *yi != 0 {
                *xi = yi
                    .checked_mul(q)
                    .and_then(|t| xi.checked_sub(t))
                    .ok_or(Error::IntegerOverflow)?;
            }
        }
        Ok(())
    };
    // columns of A are read via a[r][c]; operate on A column-wise as well
    let mut acol: Vec<Vec<i64>> = (0..ncols)
        .map(|c| (0..nrows).map(|r| a[r][c]).collect())
        .collect();
    a.clear();
    for r in 0..nrows {
        if p == ncols {
            break;
        }
        loop {
            let nz: Vec<usize> = (p..ncols).filter(|&c| acol[c][r] != 0).collect();
            if nz.is_empty() {
                break;
            }
            let piv = *nz
                .iter()
                .min_by_key(|&&c| (acol[c][r].unsigned_abs(), c))
                .unwrap();
            if nz.len() == 1 {
                acol.swap(p, piv);
                v.swap(p, piv);
                p += 1;
                break;
            }
            let pv = acol[piv][r];
            let (pa, pvv) = (acol[piv].clone(), v[piv].clone());
            for &c in &nz {
                if c == piv {
                    continue;
                }
                let q = acol[c][r].div_euclid(pv);
                if q != 0 {
                    axpy(&mut acol[c], &pa, q)?;
                    axpy(&mut v[c], &pvv, q)?;
                }
            }
        }
    }
    Ok((v, p))
}

/// ℤ-basis of the integer kernel of `m`, as columns.
pub fn integer_kernel_basis(m: &Csr<i64>) -> Result<Vec<Vec<i64>>> {
    let (v, rank) = column_reduce(&dense_i64(m), m.ncols())?;
    Ok(v[rank..].to_vec())
}

fn transpose_rows(cols: &[Vec<i64>], n: usize) -> Vec<Vec<i64>> {
    (0..n)
        .map(|r| cols.iter().map(|c| c[r]).collect())
        .collect()
}

/// Integer cocycles whose classes form a ℤ-basis of the free part of
/// `H^k(M; ℤ)`.
pub fn cohomology_generators(cx: &SimplicialComplex, k: usize) -> Result<Vec<Vec<i64>>> {
    let nk = cx.count(k);
    let kernel = if k < cx.dim() {
        integer_kernel_basis(&cx.coboundary(k))?
    } else {
        (0..nk)
            .map(|i| {
                let mut e = vec![0; nk];
                e[i] = 1;
                e
            })
            .collect()
    };
    if k == 0 {
        return Ok(kernel);
    }
    // W spans the annihilator of im δ_{k−1}; the saturation of the
    // coboundaries inside ker δ_k is then the kernel of Wᵀ K.
    let w = integer_kernel_basis(&cx.coboundary(k - 1).transpose())?;
    let m = kernel.len();
    let mut wk = vec![vec![0i64; m]; w.len()];
    for (i, wi) in w.iter().enumerate() {
        for (j, kj) in kernel.iter().enumerate() {
            let mut acc = 0i64;
            for (x, y) in wi.iter().zip(kj) {
                if *x != 0 && *y != 0 {
                    acc = x
                        .checked_mul(*y)
                        .and_then(|t| acc.checked_add(t))
                        .ok_or(Error::IntegerOverflow)?;
                }
            }
            wk[i][j] = acc;
        }
    }
    let (v, rank) = column_reduce(&wk, m)?;
    let kern_rows = transpose_rows(&kernel, nk);
    v[..rank]
        .iter()
        .map(|coef| {
            kern_rows
                .iter()
                .map(|row| {
                    row.iter().zip(coef).try_fold(0i64, |acc, (a, b)| {
                        a.checked_mul(*b)
                            .and_then(|t| acc.checked_add(t))
                            .ok_or(Error::IntegerOverflow)
                    })
                })
                .collect()
        })
        .collect()
}

/// Alexander–Whitney cup product of a `p`-cochain and a `q`-cochain.
pub fn cup_product(
    cx: &SimplicialComplex,
    a: &[f64],
    p: usize,
    b: &[f64],
    q: usize,
) -> Result<Vec<f64>> {
    let n = p + q;
    if n > cx.dim() {
        return Err(Error::Invalid(format!("cup degree {n} exceeds dimension")));
    }
    for (x, k) in [(a, p), (b, q)] {
        if x.len() != cx.count(k) {
            return Err(Error::DimensionMismatch {
                expected: cx.count(k),
                got: x.len(),
            });
        }
    }
    Ok(cx
        .simplices(n)
        .iter()
        .map(|s| {
            let front = cx.find(&s[..=p]).expect("front face");
            let back = cx.find(&s[p..]).expect("back face");
            a[front] * b[back]
        })
        .collect())
}

fn coboundary_residual(cx: &SimplicialComplex, x: &[f64], k: usize) -> f64 {
    if k >= cx.dim() {
        return 0.0;
    }
    let d = cx.coboundary(k).map(|v| v as f64);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    d.matvec(x).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

/// Gram matrix `Q_ij = ⟨a_i ∪ a_j, [M]⟩` of `k`-cocycles with `2k = dim`.
pub fn cup_product_form(
    cx: &SimplicialComplex,
    reps: &[Vec<f64>],
    k: usize,
) -> Result<DMatrix<f64>> {
    if 2 * k != cx.dim() {
        return Err(Error::Invalid(format!(
            "form on H^{k} needs dimension {}",
            2 * k
        )));
    }
    for r in reps {
        let res = coboundary_residual(cx, r, k);
        if res > 1e-8 {
            return Err(Error::NotCocycle(res));
        }
    }
    let orient = cx.orientation();
    let mut q = DMatrix::zeros(reps.len(), reps.len());
    for i in 0..reps.len() {
        for j in 0..reps.len() {
            let c = cup_product(cx, &reps[i], k, &reps[j], k)?;
            q[(i, j)] = c
                .iter()
                .zip(orient)
                .map(|(v, &o)| v * o as f64)
                .sum::<f64>();
        }
    }
    Ok(q)
}

/// Integer intersection form on the free part of `H^k`, `2k = dim`.
pub fn intersection_matrix(cx: &SimplicialComplex, k: usize) -> Result<DMatrix<i64>> {
    let gens: Vec<Vec<f64>> = cohomology_generators(cx, k)?
        .into_iter()
        .map(|g| g.into_iter().map(|v| v as f64).collect())
        .collect();
    let q = cup_product_form(cx, &gens, k)?;
    Ok(q.map(|v| v.round() as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_circle, build_torus2, build_torus4};

    #[test]
    fn modular_rank_matches_small_example() {
        let m = Csr::from_triplets(
            3,
            3,
            &[
                (0, 0, 1),
                (0, 1, 1),
                (1, 1, 1),
                (1, 2, 1),
                (2, 0, 1),
                (2, 2, -1),
            ],
        );
        // row2 = row0 - row1
        assert_eq!(rank_mod_p(&m, PRIMES[0]), 2);
        let id = Csr::from_triplets(2, 2, &[(0, 0, 2), (1, 1, 3)]);
        assert_eq!(rank_mod_p(&id, 2), 1);
    }

    #[test]
    fn torus_betti_numbers() {
        assert_eq!(betti_numbers(&build_circle(4).unwrap()), vec![1, 1]);
        assert_eq!(betti_numbers(&build_torus2(3).unwrap()), vec![1, 2, 1]);
        assert_eq!(
            betti_numbers(&build_torus4(2).unwrap()),
            vec![1, 4, 6, 4, 1]
        );
    }

    #[test]
    fn kernel_basis_is_integral_and_exact() {
        let m = Csr::from_triplets(1, 3, &[(0, 0, 2), (0, 1, 3), (0, 2, 4)]);
        let k = integer_kernel_basis(&m).unwrap();
        assert_eq!(k.len(), 2);
        for v in &k {
            assert_eq!(2 * v[0] + 3 * v[1] + 4 * v[2], 0);
        }
    }

    #[test]
    fn torus2_intersection_form_is_hyperbolic() {
        let t = build_torus2(3).unwrap();
        let q = intersection_matrix(&t, 1).unwrap();
        assert_eq!(q.nrows(), 2);
        // antisymmetric and unimodular in degree 1
        assert_eq!(q[(0, 0)], 0);
        assert_eq!(q[(0, 1)], -q[(1, 0)]);
        assert_eq!(q[(0, 1)].abs(), 1);
    }

    #[test]
    fn torus4_intersection_form_is_even_unimodular() {
        let t = build_torus4(2).unwrap();
        let q = intersection_matrix(&t, 2).unwrap();
        assert_eq!(q.nrows(), 6);
        assert_eq!(q, q.transpose());
        let qf = q.map(|v| v as f64);
        assert!((qf.determinant().abs() - 1.0).abs() < 1e-9);
        assert!((0..6).all(|i| q[(i, i)] % 2 == 0));
        let eig = qf.symmetric_eigen().eigenvalues;
        assert_eq!(eig.iter().filter(|&&l| l > 0.0).count(), 3);
    }

    #[test]
    fn cup_form_rejects_non_cocycles() {
        let t = build_torus2(3).unwrap();
        let mut x = vec![0.0; t.count(1)];
        x[0] = 1.0;
        assert!(matches!(
            cup_product_form(&t, &[x], 1),
            Err(Error::NotCocycle(_))
        ));
    }
}
