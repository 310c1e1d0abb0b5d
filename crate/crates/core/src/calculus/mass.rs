use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::complex::{CochainLayout, SimplicialComplex};
use crate::fiber::binomial;
use crate::linalg::{cholesky_lower, conjugate_gradient, lower_inverse, Csr};
use crate::{Error, Result};

use super::norms::FiberedNorm;

/// Simplices with volume below this are rejected.
pub const MIN_VOLUME: f64 = 1e-14;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Gram matrix `G_ij = (l_0i² + l_0j² − l_ij²)/2` of the edge vectors from the
/// first vertex, given the squared edge lengths of a simplex.
fn edge_gram(len2: &DMatrix<f64>) -> DMatrix<f64> {
    let k = len2.nrows() - 1;
    DMatrix::from_fn(k, k, |i, j| {
        0.5 * (len2[(0, i + 1)] + len2[(0, j + 1)] - len2[(i + 1, j + 1)])
    })
}

/// Volume of a simplex from its squared edge lengths (0 when degenerate).
pub(crate) fn simplex_volume(len2: &DMatrix<f64>) -> f64 {
    let k = len2.nrows() - 1;
    if k == 0 {
        return 1.0;
    }
    let det = edge_gram(len2).determinant();
    if det <= 0.0 {
        0.0
    } else {
        det.sqrt() / factorial(k)
    }
}

fn det_minor(phi: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| phi[(rows[i], cols[j])]).determinant()
}

/// Local Whitney mass matrices of one `d`-simplex for every degree. Faces are
/// listed as position subsets of the simplex in increasing order.
pub(crate) struct LocalMass {
    pub volume: f64,
    pub faces: Vec<Vec<Vec<usize>>>,
    pub blocks: Vec<DMatrix<f64>>,
}

pub(crate) fn local_whitney_mass(len2: &DMatrix<f64>) -> Option<LocalMass> {
    let d = len2.nrows() - 1;
    let volume = simplex_volume(len2);
    if volume < MIN_VOLUME {
        return None;
    }
    // ⟨dλ_a, dλ_b⟩ for barycentric coordinates, with dλ_0 = −Σ dλ_i
    let ginv = edge_gram(len2).try_inverse()?;
    let mut phi = DMatrix::zeros(d + 1, d + 1);
    for i in 0..d {
        for j in 0..d {
            phi[(i + 1, j + 1)] = ginv[(i, j)];
        }
    }
    for i in 1..=d {
        let s: f64 = (1..=d).map(|j| phi[(i, j)]).sum();
        phi[(0, i)] = -s;
        phi[(i, 0)] = -s;
    }
    phi[(0, 0)] = -(1..=d).map(|i| phi[(0, i)]).sum::<f64>();

    let lam =
        |a: usize, b: usize| volume * if a == b { 2.0 } else { 1.0 } / ((d + 1) * (d + 2)) as f64;
    let mut faces = vec![Vec::new(); d + 1];
    for mask in 1u32..(1 << (d + 1)) {
        let f: Vec<usize> = (0..=d).filter(|i| mask & (1 << i) != 0).collect();
        faces[f.len() - 1].push(f);
    }
    for f in faces.iter_mut() {
        f.sort();
    }
    let blocks = (0..=d)
        .map(|k| {
            let fk = &faces[k];
            let scale = factorial(k).powi(2);
            DMatrix::from_fn(fk.len(), fk.len(), |s, t| {
                let (sig, tau) = (&fk[s], &fk[t]);
                let mut acc = 0.0;
                for i in 0..=k {
                    let rs: Vec<usize> = sig
                        .iter()
                        .enumerate()
                        .filter(|e| e.0 != i)
                        .map(|e| *e.1)
                        .collect();
                    for j in 0..=k {
                        let cs: Vec<usize> = tau
                            .iter()
                            .enumerate()
                            .filter(|e| e.0 != j)
                            .map(|e| *e.1)
                            .collect();
                        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                        acc += sign * lam(sig[i], tau[j]) * det_minor(&phi, &rs, &cs);
                    }
                }
                scale * acc
            })
        })
        .collect();
    Some(LocalMass {
        volume,
        faces,
        blocks,
    })
}

/// Squared edge lengths among the vertices of an ordered tuple.
pub(crate) fn tuple_len2(cx: &SimplicialComplex, s: &[usize]) -> DMatrix<f64> {
    let n = s.len();
    let lengths = &cx.geometry().edge_lengths;
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let e = cx.find(&[s[a], s[b]]).expect("edge of simplex");
            let l2 = lengths[e] * lengths[e];
            m[(a, b)] = l2;
            m[(b, a)] = l2;
        }
    }
    m
}

/// Whitney inner products on every cochain degree, together with the
/// vertex-collocated fiber structure used for `Lᵖ` norms.
#[derive(Debug)]
pub struct MetricStructure {
    layout: CochainLayout,
    mass: Vec<Csr<f64>>,
    chol: Vec<OnceLock<DMatrix<f64>>>,
    chol_inv: Vec<OnceLock<DMatrix<f64>>>,
    simplex_volumes: Vec<Vec<f64>>,
    lumped: Vec<Vec<f64>>,
    owner: Vec<Vec<usize>>,
    vertex_weights: Vec<f64>,
}

/// Assembles the lowest-order Whitney mass matrices from the PL metric.
#[allow(clippy::needless_range_loop)]
pub fn assemble_mass(cx: &SimplicialComplex) -> Result<MetricStructure> {
    let d = cx.dim();
    let layout = cx.layout();
    let mut trips: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); d + 1];
    let mut lumped: Vec<Vec<f64>> = (0..=d).map(|k| vec![0.0; cx.count(k)]).collect();
    let mut vertex_weights = vec![0.0; cx.n_vertices()];
    for (t, top) in cx.simplices(d).iter().enumerate() {
        let local = local_whitney_mass(&tuple_len2(cx, top)).ok_or_else(|| {
            let len2 = tuple_len2(cx, top);
            Error::DegenerateSimplex {
                degree: d,
                simplex: t,
                volume: simplex_volume(&len2),
            }
        })?;
        for v in top {
            vertex_weights[*v] += local.volume / (d + 1) as f64;
        }
        for k in 0..=d {
            let share = local.volume / binomial(d + 1, k + 1) as f64;
            let ids: Vec<usize> = local.faces[k]
                .iter()
                .map(|f| {
                    let tuple: Vec<usize> = f.iter().map(|&i| top[i]).collect();
                    cx.find(&tuple).expect("face of facet")
                })
                .collect();
            for (a, &ia) in ids.iter().enumerate() {
                lumped[k][ia] += share;
                for (b, &ib) in ids.iter().enumerate() {
                    trips[k].push((ia, ib, local.blocks[k][(a, b)]));
                }
            }
        }
    }
    let mut simplex_volumes = Vec::with_capacity(d + 1);
    let mut owner = Vec::with_capacity(d + 1);
    for k in 0..=d {
        let mut vols = Vec::with_capacity(cx.count(k));
        for (i, s) in cx.simplices(k).iter().enumerate() {
            let v = simplex_volume(&tuple_len2(cx, s));
            if v < MIN_VOLUME {
                return Err(Error::DegenerateSimplex {
                    degree: k,
                    simplex: i,
                    volume: v,
                });
            }
            lumped[k][i] /= v * v;
            vols.push(v);
        }
        simplex_volumes.push(vols);
        owner.push(cx.simplices(k).iter().map(|s| s[0]).collect());
    }
    let mass = (0..=d)
        .map(|k| Csr::from_triplets(cx.count(k), cx.count(k), &trips[k]))
        .collect();
    Ok(MetricStructure {
        layout,
        mass,
        chol: (0..=d).map(|_| OnceLock::new()).collect(),
        chol_inv: (0..=d).map(|_| OnceLock::new()).collect(),
        simplex_volumes,
        lumped,
        owner,
        vertex_weights,
    })
}

impl MetricStructure {
    pub fn layout(&self) -> &CochainLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Sparse Whitney mass matrix on `k`-cochains.
    pub fn mass(&self, k: usize) -> &Csr<f64> {
        &self.mass[k]
    }

    pub fn mass_dense(&self, k: usize) -> DMatrix<f64> {
        self.mass[k].to_dense()
    }

    /// Block-diagonal mass on stacked cochains.
    pub fn stacked_mass(&self) -> DMatrix<f64> {
        let n = self.layout.total();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..=self.dim() {
            let o = self.layout.offset(k);
            for (r, c, v) in self.mass[k].triplets() {
                m[(o + r, o + c)] = v;
            }
        }
        m
    }

    /// Lower Cholesky factor of the degree-`k` mass matrix (computed once).
    pub fn cholesky(&self, k: usize) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.chol[k].get() {
            return Ok(l);
        }
        let l = cholesky_lower(&self.mass_dense(k))
            .map_err(|_| Error::NotPositiveDefinite(format!("mass matrix of degree {k}")))?;
        Ok(self.chol[k].get_or_init(|| l))
    }

    fn cholesky_inverse(&self, k: usize) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.chol_inv[k].get() {
            return Ok(l);
        }
        let li = lower_inverse(self.cholesky(k)?);
        Ok(self.chol_inv[k].get_or_init(|| li))
    }

    /// Solves `M_k X = B`.
    pub fn solve(&self, k: usize, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l = self.cholesky(k)?;
        let mut x = b.clone();
        if x.nrows() > 0 {
            l.solve_lower_triangular_mut(&mut x);
            l.tr_solve_lower_triangular_mut(&mut x);
        }
        Ok(x)
    }

    /// Solves `M_k x = b` by conjugate gradients without dense factorization.
    pub fn solve_iterative(&self, k: usize, b: &DVector<f64>) -> DVector<f64> {
        conjugate_gradient(
            |v| self.mass[k].matvec_dv(v),
            b,
            1e-13,
            10 * b.len().max(10),
        )
    }

    /// Block lower factor `L` of the stacked mass `M = L Lᵀ`.
    pub fn stacked_cholesky(&self) -> Result<DMatrix<f64>> {
        self.stacked_from_blocks(|k| self.cholesky(k).cloned())
    }

    /// Block inverse `L⁻¹` of the stacked Cholesky factor.
    pub fn stacked_cholesky_inverse(&self) -> Result<DMatrix<f64>> {
        self.stacked_from_blocks(|k| self.cholesky_inverse(k).cloned())
    }

    fn stacked_from_blocks(
        &self,
        f: impl Fn(usize) -> Result<DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        let n = self.layout.total();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..=self.dim() {
            let r = self.layout.range(k);
            out.view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(&f(k)?);
        }
        Ok(out)
    }

    /// Expresses `A` in mass-orthonormal coordinates: `Lᵀ A L⁻ᵀ`. An operator
    /// that is self-adjoint for the mass inner product becomes symmetric and
    /// operator norms become spectral norms.
    pub fn to_orthonormal(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l = self.stacked_cholesky()?;
        let li = self.stacked_cholesky_inverse()?;
        Ok(l.transpose() * a * li.transpose())
    }

    /// Inverse of [`Self::to_orthonormal`].
    pub fn from_orthonormal(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l = self.stacked_cholesky()?;
        let li = self.stacked_cholesky_inverse()?;
        Ok(li.transpose() * a * l.transpose())
    }

    /// Mass inner product of stacked cochains.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (0..=self.dim())
            .map(|k| {
                let r = self.layout.range(k);
                let mb = self.mass[k].matvec(&b.as_slice()[r.clone()]);
                a.as_slice()[r]
                    .iter()
                    .zip(&mb)
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Apply the stacked mass matrix.
    pub fn apply(&self, a: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(a.len());
        for k in 0..=self.dim() {
            let r = self.layout.range(k);
            let y = self.mass[k].matvec(&a.as_slice()[r.clone()]);
            out.as_mut_slice()[r].copy_from_slice(&y);
        }
        out
    }

    /// Mass adjoint `M⁻¹ Aᵀ M` of a stacked operator.
    pub fn adjoint(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ma = self.stacked_mass() * a.transpose();
        let mm = ma * self.stacked_mass();
        let mut out = DMatrix::zeros(mm.nrows(), mm.ncols());
        for k in 0..=self.dim() {
            let r = self.layout.range(k);
            let rows = mm.rows(r.start, r.len()).into_owned();
            out.rows_mut(r.start, r.len())
                .copy_from(&self.solve(k, &rows)?);
        }
        Ok(out)
    }

    /// `k`-dimensional volumes of the `k`-simplices.
    pub fn simplex_volumes(&self, k: usize) -> &[f64] {
        &self.simplex_volumes[k]
    }

    /// Lumped (diagonal) mass weights `m_σ`.
    pub fn lumped(&self, k: usize) -> &[f64] {
        &self.lumped[k]
    }

    /// Vertex volume weights `w_x = Σ_{T∋x} vol T/(d+1)`.
    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    pub fn total_volume(&self) -> f64 {
        self.vertex_weights.iter().sum()
    }

    /// Vertex owning each `k`-simplex in the collocated picture.
    pub fn owner(&self, k: usize) -> &[usize] {
        &self.owner[k]
    }

    /// Collocated fiber structure: each simplex is attached to its first
    /// vertex and scaled so that the fiber `ℓ²` norm approximates the
    /// pointwise form norm at that vertex.
    pub fn collocation(&self) -> FiberedNorm {
        let nv = self.vertex_weights.len();
        let mut fibers = vec![Vec::new(); nv];
        let mut scale = vec![0.0; self.layout.total()];
        for k in 0..=self.dim() {
            let o = self.layout.offset(k);
            for (i, &x) in self.owner[k].iter().enumerate() {
                fibers[x].push(o + i);
                scale[o + i] = (self.lumped[k][i] / self.vertex_weights[x]).sqrt();
            }
        }
        FiberedNorm::new(fibers, scale, self.vertex_weights.clone())
            .expect("collocation covers every index once")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_circle, build_icosphere, build_torus2, MetricSource};

    fn regular_len2(d: usize, s: f64) -> DMatrix<f64> {
        DMatrix::from_fn(d + 1, d + 1, |i, j| if i == j { 0.0 } else { s * s })
    }

    #[test]
    fn p1_mass_on_an_interval() {
        let m = local_whitney_mass(&regular_len2(1, 2.0)).unwrap();
        assert!((m.volume - 2.0).abs() < 1e-14);
        // ∫λ_aλ_b = h(1+δ)/6
        assert!((m.blocks[0][(0, 0)] - 2.0 / 3.0).abs() < 1e-14);
        assert!((m.blocks[0][(0, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!((m.blocks[1][(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn top_degree_mass_is_inverse_volume() {
        for d in 1..=4 {
            let m = local_whitney_mass(&regular_len2(d, 1.3)).unwrap();
            assert!((m.blocks[d][(0, 0)] * m.volume - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn right_triangle_edge_mass() {
        // unit right triangle, reference values by midpoint quadrature
        let mut l2 = DMatrix::zeros(3, 3);
        for (a, b, v) in [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 2.0)] {
            l2[(a, b)] = v;
            l2[(b, a)] = v;
        }
        let m = local_whitney_mass(&l2).unwrap();
        // faces ordered [0,1], [0,2], [1,2]
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0 / 3.0,
                1.0 / 6.0,
                0.0,
                1.0 / 6.0,
                1.0 / 3.0,
                0.0,
                0.0,
                0.0,
                1.0 / 6.0,
            ],
        );
        assert!((&m.blocks[1] - expected).amax() < 1e-14, "{}", m.blocks[1]);
    }

    #[test]
    fn mass_scales_with_dimension_and_degree() {
        for d in 1..=4 {
            let a = local_whitney_mass(&regular_len2(d, 1.0)).unwrap();
            let b = local_whitney_mass(&regular_len2(d, 2.0)).unwrap();
            for k in 0..=d {
                let ratio = 2f64.powi(d as i32 - 2 * k as i32);
                assert!((&b.blocks[k] - &a.blocks[k] * ratio).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn circle_mass_row_sums_equal_spacing() {
        let cx = build_circle(8).unwrap();
        let m = assemble_mass(&cx).unwrap();
        let dense = m.mass_dense(0);
        for r in 0..8 {
            assert!((dense.row(r).sum() - 0.125).abs() < 1e-14);
        }
        assert!((m.total_volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn masses_are_spd_and_translation_invariant_on_torus() {
        let cx = build_torus2(4).unwrap();
        let m = assemble_mass(&cx).unwrap();
        for k in 0..=2 {
            let e = m.mass_dense(k).symmetric_eigen().eigenvalues;
            assert!(e.min() > 0.0);
        }
        let diag: Vec<f64> = (0..16).map(|i| m.mass_dense(0)[(i, i)]).collect();
        assert!(diag.iter().all(|x| (x - diag[0]).abs() < 1e-14));
    }

    #[test]
    fn degenerate_simplex_is_rejected() {
        let cx = build_icosphere(0).unwrap();
        let mut lengths = cx.geometry().edge_lengths.clone();
        // collapse one triangle: l_ab = l_ac + l_bc
        let tri = cx.simplex(2, 0).to_vec();
        let e = |a, b| cx.edge_index(a, b).unwrap();
        lengths[e(tri[0], tri[1])] = lengths[e(tri[0], tri[2])] + lengths[e(tri[1], tri[2])];
        let bad = cx.with_edge_lengths(lengths).unwrap();
        assert!(matches!(
            assemble_mass(&bad),
            Err(Error::DegenerateSimplex { .. })
        ));
        let _ = MetricSource::Unit;
    }

    #[test]
    fn orthonormal_round_trip() {
        let cx = build_torus2(3).unwrap();
        let m = assemble_mass(&cx).unwrap();
        let n = m.layout().total();
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let b = m.from_orthonormal(&m.to_orthonormal(&a).unwrap()).unwrap();
        assert!((a - b).amax() < 1e-10);
    }
}
