//! Gradings, Fredholm indices and the index theorems they feed: the Euler
//! characteristic as the index of `D₊`, pairings with projections, and the
//! signature from the intersection form.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::calculus::{Calculus, GradedOperator};
use crate::complex::{betti_numbers, intersection_matrix, CochainLayout, SimplicialComplex};
use crate::linalg::{numerical_rank, RankDecision, DEFAULT_RANK_TOL};
use crate::spectral::{eigensolve_dirac, spectral_sign};
use crate::{Error, Result};

/// Tolerance for exact structural identities (projector algebra,
/// anticommutation, idempotency).
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Complementary projectors `P₊`, `P₋` of an involution `γ = P₊ − P₋`.
#[derive(Clone, Debug)]
pub struct GradingDecomposition {
    pub plus: DMatrix<f64>,
    pub minus: DMatrix<f64>,
    pub labels: (String, String),
    plus_indices: Vec<usize>,
    minus_indices: Vec<usize>,
}

/// Even/odd degree grading `ω ↦ (−1)^k ω`.
pub fn euler_grading(layout: &CochainLayout) -> GradingDecomposition {
    let n = layout.total();
    let (plus_indices, minus_indices): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| layout.degree_of(i).is_multiple_of(2));
    let diag = |idx: &[usize]| {
        let mut p = DMatrix::zeros(n, n);
        for &i in idx {
            p[(i, i)] = 1.0;
        }
        p
    };
    GradingDecomposition {
        plus: diag(&plus_indices),
        minus: diag(&minus_indices),
        labels: ("even".into(), "odd".into()),
        plus_indices,
        minus_indices,
    }
}

impl GradingDecomposition {
    pub fn gamma(&self) -> DMatrix<f64> {
        &self.plus - &self.minus
    }

    pub fn dim_plus(&self) -> usize {
        self.plus_indices.len()
    }

    pub fn dim_minus(&self) -> usize {
        self.minus_indices.len()
    }

    /// `max(‖P₊ + P₋ − I‖, ‖P₊P₋‖, ‖γ² − I‖)` entrywise.
    pub fn projector_residual(&self) -> f64 {
        let n = self.plus.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let g = self.gamma();
        [
            (&self.plus + &self.minus - &id).amax(),
            (&self.plus * &self.minus).amax(),
            (&g * &g - &id).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// `‖γA + Aγ‖ / ‖A‖`, zero for odd operators.
    pub fn anticommutator_residual(&self, a: &DMatrix<f64>) -> f64 {
        let g = self.gamma();
        (&g * a + a * &g).amax() / a.amax().max(f64::MIN_POSITIVE)
    }

    /// `‖γA − Aγ‖ / ‖A‖`, zero for even operators.
    pub fn commutator_residual(&self, a: &DMatrix<f64>) -> f64 {
        let g = self.gamma();
        (&g * a - a * &g).amax() / a.amax().max(f64::MIN_POSITIVE)
    }

    /// The `+ → −` block `A₊ = P₋ A P₊` as a matrix from the `+` to the `−`
    /// subspace.
    pub fn plus_block(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a.select_rows(&self.minus_indices)
            .select_columns(&self.plus_indices)
    }

    /// The `− → +` block.
    pub fn minus_block(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a.select_rows(&self.plus_indices)
            .select_columns(&self.minus_indices)
    }

    fn restrict(&self, a: &DMatrix<f64>, plus: bool) -> DMatrix<f64> {
        let idx = if plus {
            &self.plus_indices
        } else {
            &self.minus_indices
        };
        a.select_rows(idx).select_columns(idx)
    }
}

fn serialize_ratio<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexReport {
    pub mesh: String,
    pub operator: String,
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub index: i64,
    pub rank_tol: f64,
    /// Singular-value gap at the rank cut (`"inf"` when one side is empty).
    #[serde(serialize_with = "serialize_ratio")]
    pub gap_ratio: f64,
    pub method: String,
    /// `dim ker T*` agrees with `dim coker T`, when the adjoint was checked.
    pub adjoint_consistent: Option<bool>,
}

impl IndexReport {
    pub fn with_mesh(mut self, mesh: impl Into<String>) -> Self {
        self.mesh = mesh.into();
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn from_rank(
        rows: usize,
        cols: usize,
        rank: &RankDecision,
        rank_tol: f64,
        operator: &str,
        method: &str,
    ) -> Self {
        let dim_ker = cols - rank.rank;
        let dim_coker = rows - rank.rank;
        Self {
            mesh: String::new(),
            operator: operator.into(),
            dim_ker,
            dim_coker,
            index: dim_ker as i64 - dim_coker as i64,
            rank_tol,
            gap_ratio: rank.gap_ratio,
            method: method.into(),
            adjoint_consistent: None,
        }
    }
}

/// Index of a matrix block from an SVD rank decision.
pub fn fredholm_index(t: &DMatrix<f64>, rank_tol: f64) -> Result<IndexReport> {
    let rank = numerical_rank(t, rank_tol)?;
    Ok(IndexReport::from_rank(
        t.nrows(),
        t.ncols(),
        &rank,
        rank_tol,
        "block",
        "svd",
    ))
}

/// Index of `T: (X, M_src) → (Y, M_dst)`, with singular values taken in
/// orthonormal coordinates `L_dstᵀ T L_src⁻ᵀ` and the cokernel cross-checked
/// against `ker T*` for `T* = M_src⁻¹ Tᵀ M_dst`.
pub fn fredholm_index_mass(
    t: &DMatrix<f64>,
    m_src: &DMatrix<f64>,
    m_dst: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<IndexReport> {
    let chol = |m: &DMatrix<f64>| {
        m.clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("index metric".into()))
    };
    let (ls, ld) = (chol(m_src)?, chol(m_dst)?);
    // L_dstᵀ T L_src⁻ᵀ
    let tl = ls
        .l()
        .solve_upper_triangular(&t.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("index metric".into()))?
        .transpose();
    let tt = ld.l().transpose() * tl;
    let rank = numerical_rank(&tt, rank_tol)?;
    let mut rep =
        IndexReport::from_rank(t.nrows(), t.ncols(), &rank, rank_tol, "block", "svd-mass");
    let adj = ls.solve(&(t.transpose() * m_dst));
    let adj_rank = numerical_rank(&adj, rank_tol)?;
    rep.adjoint_consistent = Some(adj.ncols() - adj_rank.rank == rep.dim_coker);
    Ok(rep)
}

/// Index of the `+ → −` block of `A` for a grading, in the mass geometry.
pub fn graded_index(
    a: &GradedOperator,
    mass: &DMatrix<f64>,
    grading: &GradingDecomposition,
    rank_tol: f64,
) -> Result<IndexReport> {
    let res = grading.anticommutator_residual(&a.matrix);
    if res > STRUCTURE_TOL {
        return Err(Error::Invalid(format!(
            "operator is not odd for the grading (residual {res:e})"
        )));
    }
    fredholm_index_mass(
        &grading.plus_block(&a.matrix),
        &grading.restrict(mass, true),
        &grading.restrict(mass, false),
        rank_tol,
    )
}

/// `Index D₊` for the even/odd grading.
pub fn euler_index(calc: &Calculus) -> Result<IndexReport> {
    let g = euler_grading(calc.layout());
    let mut rep = graded_index(
        &calc.dirac,
        &calc.metric.stacked_mass(),
        &g,
        DEFAULT_RANK_TOL,
    )?;
    rep.operator = "D+".into();
    Ok(rep)
}

/// `(Σ_{k even} b_k, Σ_{k odd} b_k)`, the dimensions `ker D₊` and
/// `coker D₊` must match.
pub fn betti_parity(cx: &SimplicialComplex) -> (usize, usize) {
    betti_numbers(cx)
        .iter()
        .enumerate()
        .fold(
            (0, 0),
            |(e, o), (k, &b)| if k % 2 == 0 { (e + b, o) } else { (e, o + b) },
        )
}

/// Vertex-indexed `r × r` projections lifted to `r` copies of the cochain
/// space: each simplex carries the average of `e` over its vertices.
fn lift_projection(e: &[DMatrix<f64>], cx: &SimplicialComplex) -> Result<DMatrix<f64>> {
    if e.len() != cx.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: cx.n_vertices(),
            got: e.len(),
        });
    }
    let r = e[0].nrows();
    for (x, ex) in e.iter().enumerate() {
        if ex.nrows() != r || ex.ncols() != r {
            return Err(Error::Invalid(format!(
                "projection at vertex {x} is not {r}×{r}"
            )));
        }
        let res = (ex * ex - ex).amax();
        if res > STRUCTURE_TOL {
            return Err(Error::Invalid(format!(
                "e is not idempotent at vertex {x} (residual {res:e})"
            )));
        }
    }
    let layout = cx.layout();
    let n = layout.total();
    let mut big = DMatrix::zeros(n * r, n * r);
    for k in 0..=cx.dim() {
        for (i, s) in cx.simplices(k).iter().enumerate() {
            let mut avg = DMatrix::<f64>::zeros(r, r);
            for &v in s {
                avg += &e[v];
            }
            avg /= s.len() as f64;
            let row = (layout.offset(k) + i) * r;
            big.view_mut((row, row), (r, r)).copy_from(&avg);
        }
    }
    let res = (&big * &big - &big).amax();
    if res > STRUCTURE_TOL {
        return Err(Error::Invalid(format!(
            "lifted projection is not idempotent (residual {res:e}); e must be locally constant"
        )));
    }
    Ok(big)
}

fn kron_identity(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows() * r, a.ncols() * r, |i, j| {
        if i % r == j % r {
            a[(i / r, j / r)]
        } else {
            0.0
        }
    })
}

/// Orthonormal basis of the column space of a projection.
fn range_basis(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.ncols() == 0 {
        return Ok(p.clone());
    }
    let rank = numerical_rank(p, DEFAULT_RANK_TOL)?.rank;
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(u.select_columns(&order[..rank]))
}

/// `Index e(Id ⊗ F₊)e` for a vertex-indexed projection `e` and an odd
/// operator `F`.
pub fn pairing_with_projection(
    e: &[DMatrix<f64>],
    f: &GradedOperator,
    grading: &GradingDecomposition,
    cx: &SimplicialComplex,
) -> Result<IndexReport> {
    let big_e = lift_projection(e, cx)?;
    let r = e[0].nrows();
    let gamma = kron_identity(&grading.gamma(), r);
    let comm = (&gamma * &big_e - &big_e * &gamma).amax();
    if comm > STRUCTURE_TOL {
        return Err(Error::Invalid(format!(
            "e does not commute with the grading (residual {comm:e})"
        )));
    }
    let fr = kron_identity(&f.matrix, r);
    let plus = kron_identity(&grading.plus, r);
    let minus = kron_identity(&grading.minus, r);
    let q_plus = range_basis(&(&big_e * &plus))?;
    let q_minus = range_basis(&(&big_e * &minus))?;
    // e(Id ⊗ F₊)e from Ran eP₊ to Ran eP₋ in orthonormal bases
    let t = q_minus.transpose() * &big_e * &minus * fr * &q_plus;
    let mut rep = fredholm_index(&t, DEFAULT_RANK_TOL)?;
    rep.operator = format!("e(Id⊗F+)e, rank {r}");
    rep.method = "svd-compressed".into();
    Ok(rep)
}

/// `F₊` with `F = sgn D`, for the pairing.
pub fn sign_grading_operator(calc: &Calculus) -> Result<GradedOperator> {
    spectral_sign(&eigensolve_dirac(calc)?, None)
}

/// Signature of the intersection form on `H^{d/2}` from integer generators.
pub fn signature_index(cx: &SimplicialComplex) -> Result<IndexReport> {
    let d = cx.dim();
    if !d.is_multiple_of(4) || d == 0 {
        return Err(Error::SignatureDimension(d));
    }
    let q = intersection_matrix(cx, d / 2)?.map(|v| v as f64);
    let (pos, neg, ratio) = if q.nrows() == 0 {
        (0, 0, f64::INFINITY)
    } else {
        let ev = q.clone().symmetric_eigenvalues();
        let norm = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smallest = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if smallest <= 1e-8 * norm {
            return Err(Error::DegenerateForm {
                eigenvalue: smallest,
                norm,
            });
        }
        let pos = ev.iter().filter(|&&v| v > 0.0).count();
        (pos, ev.len() - pos, smallest / norm)
    };
    Ok(IndexReport {
        mesh: String::new(),
        operator: format!("Q on H^{}", d / 2),
        dim_ker: pos,
        dim_coker: neg,
        index: pos as i64 - neg as i64,
        rank_tol: 1e-8,
        gap_ratio: ratio,
        method: "intersection-form".into(),
        adjoint_consistent: None,
    })
}

/// Euler indices after random relative edge-length perturbations of size
/// up to `amplitude`. Perturbations that break the metric are redrawn.
pub fn metric_perturbation_indices(
    cx: &SimplicialComplex,
    trials: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<IndexReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = cx.geometry().edge_lengths.clone();
    let mut out = Vec::with_capacity(trials);
    let mut attempts = 0;
    while out.len() < trials {
        attempts += 1;
        if attempts > 50 * trials.max(1) {
            return Err(Error::Invalid(format!(
                "no valid metric after {attempts} perturbations of size {amplitude}"
            )));
        }
        let lengths = base
            .iter()
            .map(|l| l * (1.0 + rng.gen_range(-amplitude..=amplitude)))
            .collect();
        let Ok(calc) = cx
            .with_edge_lengths(lengths)
            .and_then(|p| Calculus::new(&p))
        else {
            continue;
        };
        out.push(euler_index(&calc)?);
    }
    Ok(out)
}
