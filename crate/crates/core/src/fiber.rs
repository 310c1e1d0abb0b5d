//! Exterior algebra of a single fiber `ΛV*` over a `d`-dimensional real inner
//! product space.
//!
//! Elements are stored as dense coefficient vectors in the multi-index basis
//! `dx^I`, with `I ⊆ {0, .., d-1}` strictly increasing. The basis is ordered by
//! degree and then lexicographically inside each degree, so the degree-`k`
//! part of an element is a contiguous slice. All signs come from permutation
//! parities computed on demand.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result, C64};

/// Largest supported fiber dimension (the engine is dense over `2^d` basis
/// elements).
pub const MAX_DIM: usize = 8;

/// Exponent of `i` in the signature grading `τω = i^{k(k-1)+ℓ} ∗ω` on
/// `k`-forms of a `2ℓ`-dimensional fiber.
///
/// Some references use `k(k+1)+ℓ` instead; the two conventions differ by
/// the parity grading on odd degrees. This one squares to the identity.
pub fn tau_exponent(k: usize, dim: usize) -> usize {
    k * (k.saturating_sub(1)) + dim / 2
}

/// A real inner product space `V` together with an orientation.
///
/// `metric` is the Gram matrix `g_ij = g(e_i, e_j)` on vectors. Covectors
/// carry the inverse metric.
#[derive(Clone, Debug)]
pub struct FiberSpace {
    dim: usize,
    metric: DMatrix<f64>,
    inverse: DMatrix<f64>,
    orientation: i8,
    basis: Basis,
    gram: DMatrix<f64>,
}

#[derive(Clone, Debug)]
struct Basis {
    masks: Vec<u32>,
    position: Vec<usize>,
    degree_offsets: Vec<usize>,
}

impl Basis {
    fn new(dim: usize) -> Self {
        let mut masks: Vec<u32> = (0..(1u32 << dim)).collect();
        masks.sort_by_key(|&m| (m.count_ones(), indices_of(m)));
        let mut position = vec![0; masks.len()];
        for (i, &m) in masks.iter().enumerate() {
            position[m as usize] = i;
        }
        let mut degree_offsets = vec![0; dim + 2];
        for k in 0..=dim {
            degree_offsets[k + 1] = degree_offsets[k] + binomial(dim, k);
        }
        Self {
            masks,
            position,
            degree_offsets,
        }
    }
}

fn indices_of(mask: u32) -> Vec<u32> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Sign of the shuffle that sorts the concatenation `I ++ J` of two disjoint
/// increasing multi-indices.
fn shuffle_sign(a: u32, b: u32) -> f64 {
    let mut inversions = 0;
    for i in indices_of(a) {
        // elements of b smaller than i must jump over i
        inversions += (b & ((1u32 << i) - 1)).count_ones();
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl FiberSpace {
    pub fn new(metric: DMatrix<f64>, orientation: i8) -> Result<Self> {
        let dim = metric.nrows();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Invalid(format!(
                "fiber dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if metric.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: metric.ncols(),
            });
        }
        let asym = (&metric - metric.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::Invalid(format!("metric asymmetric by {asym:e}")));
        }
        if orientation != 1 && orientation != -1 {
            return Err(Error::Invalid("orientation must be ±1".into()));
        }
        let min_eig = metric.clone().symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "metric eigenvalue {min_eig:e}"
            )));
        }
        let inverse = metric
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("metric".into()))?
            .inverse();
        let basis = Basis::new(dim);
        let n = basis.masks.len();
        let mut gram = DMatrix::zeros(n, n);
        for k in 0..=dim {
            let range = basis.degree_offsets[k]..basis.degree_offsets[k + 1];
            for a in range.clone() {
                for b in range.clone() {
                    gram[(a, b)] = minor(&inverse, basis.masks[a], basis.masks[b]);
                }
            }
        }
        Ok(Self {
            dim,
            metric,
            inverse,
            orientation,
            basis,
            gram,
        })
    }

    /// Euclidean metric with the standard orientation.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim), 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    /// Number of basis multi-indices, `2^d`.
    pub fn len(&self) -> usize {
        self.basis.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Range of basis positions holding degree `k`.
    pub fn degree_range(&self, k: usize) -> std::ops::Range<usize> {
        self.basis.degree_offsets[k]..self.basis.degree_offsets[k + 1]
    }

    /// Basis position of the multi-index with the given (0-based) entries.
    pub fn position(&self, indices: &[usize]) -> usize {
        let mask = indices.iter().fold(0u32, |m, &i| m | (1 << i));
        self.basis.position[mask as usize]
    }

    /// Multi-index (0-based, increasing) at a basis position.
    pub fn multi_index(&self, position: usize) -> Vec<usize> {
        indices_of(self.basis.masks[position])
            .into_iter()
            .map(|i| i as usize)
            .collect()
    }

    pub fn degree_of(&self, position: usize) -> usize {
        self.basis.masks[position].count_ones() as usize
    }

    /// Gram matrix of the induced inner product on `ΛV*` in the multi-index
    /// basis (block diagonal by degree, determinant of the inverse metric).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn zero(&self) -> ExteriorElement {
        ExteriorElement {
            dim: self.dim,
            coeffs: DVector::zeros(self.len()),
        }
    }

    pub fn scalar(&self, c: C64) -> ExteriorElement {
        let mut e = self.zero();
        e.coeffs[0] = c;
        e
    }

    /// Basis element `dx^{i_1} ∧ … ∧ dx^{i_k}`; indices must be increasing.
    pub fn basis_element(&self, indices: &[usize]) -> ExteriorElement {
        let mut e = self.zero();
        e.coeffs[self.position(indices)] = C64::new(1.0, 0.0);
        e
    }

    /// Covector with the given components in the `dx^i` basis.
    pub fn covector(&self, components: &[f64]) -> ExteriorElement {
        let mut e = self.zero();
        for (i, &c) in components.iter().enumerate() {
            e.coeffs[self.position(&[i])] = C64::new(c, 0.0);
        }
        e
    }

    /// Riemannian volume element `± sqrt(det g) dx^1 ∧ … ∧ dx^d`.
    pub fn volume(&self) -> ExteriorElement {
        let mut e = self.zero();
        let top = self.len() - 1;
        e.coeffs[top] = C64::new(
            self.orientation as f64 * self.metric.determinant().sqrt(),
            0.0,
        );
        e
    }

    fn check(&self, e: &ExteriorElement) -> Result<()> {
        if e.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: e.dim,
            });
        }
        Ok(())
    }

    /// Hermitian inner product, linear in the first slot.
    pub fn inner(&self, a: &ExteriorElement, b: &ExteriorElement) -> Result<C64> {
        self.check(a)?;
        self.check(b)?;
        let gb = self.gram.map(|x| C64::new(x, 0.0)) * b.coeffs.map(|z| z.conj());
        Ok(a.coeffs.dot(&gb))
    }

    pub fn norm(&self, a: &ExteriorElement) -> Result<f64> {
        Ok(self.inner(a, a)?.re.max(0.0).sqrt())
    }

    pub fn wedge(&self, a: &ExteriorElement, b: &ExteriorElement) -> Result<ExteriorElement> {
        self.check(a)?;
        self.check(b)?;
        let mut out = self.zero();
        for (i, &ma) in self.basis.masks.iter().enumerate() {
            let ca = a.coeffs[i];
            if ca == C64::new(0.0, 0.0) {
                continue;
            }
            for (j, &mb) in self.basis.masks.iter().enumerate() {
                if ma & mb != 0 {
                    continue;
                }
                let cb = b.coeffs[j];
                if cb == C64::new(0.0, 0.0) {
                    continue;
                }
                let target = self.basis.position[(ma | mb) as usize];
                out.coeffs[target] += ca * cb * shuffle_sign(ma, mb);
            }
        }
        Ok(out)
    }

    /// Interior product `i_v ω` with a vector `v` given by its components in
    /// the basis `e_i` dual to `dx^i`. Degree-0 parts map to zero.
    pub fn interior_product(&self, v: &[f64], omega: &ExteriorElement) -> Result<ExteriorElement> {
        self.check(omega)?;
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut out = self.zero();
        for (i, &m) in self.basis.masks.iter().enumerate() {
            let c = omega.coeffs[i];
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (slot, idx) in indices_of(m).into_iter().enumerate() {
                let vi = v[idx as usize];
                if vi == 0.0 {
                    continue;
                }
                let sign = if slot % 2 == 0 { 1.0 } else { -1.0 };
                let target = self.basis.position[(m & !(1 << idx)) as usize];
                out.coeffs[target] += c * (sign * vi);
            }
        }
        Ok(out)
    }

    pub fn hodge_star(&self, omega: &ExteriorElement) -> Result<ExteriorElement> {
        self.check(omega)?;
        Ok(self.hodge_star_operator().apply(omega))
    }

    /// Matrix of the Hodge star, defined by `α ∧ ∗β = ⟨α, β⟩ vol`.
    ///
    /// For a basis form `dx^I` only `J = I^c` pairs to the top degree, so
    /// `(∗β)_{I^c} = ε(I, I^c) · orientation · sqrt(det g) · Σ_K G_{IK} β_K`.
    pub fn hodge_star_operator(&self) -> FiberOperator {
        let n = self.len();
        let full = (1u32 << self.dim) - 1;
        let vol = self.orientation as f64 * self.metric.determinant().sqrt();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for (row_src, &mi) in self.basis.masks.iter().enumerate() {
            let comp = full & !mi;
            let target = self.basis.position[comp as usize];
            let eps = shuffle_sign(mi, comp);
            for k in self.degree_range(mi.count_ones() as usize) {
                m[(target, k)] += C64::new(eps * vol * self.gram[(row_src, k)], 0.0);
            }
        }
        FiberOperator { matrix: m }
    }

    /// `v ↦ v♭ = g v`.
    pub fn flat(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        (&self.metric * v).iter().copied().collect()
    }

    /// `α ↦ α♯ = g⁻¹ α`.
    pub fn sharp(&self, alpha: &[f64]) -> Vec<f64> {
        let a = DVector::from_column_slice(alpha);
        (&self.inverse * a).iter().copied().collect()
    }

    /// `g(u, v)`.
    pub fn metric_product(&self, u: &[f64], v: &[f64]) -> f64 {
        let u = DVector::from_column_slice(u);
        let v = DVector::from_column_slice(v);
        u.dot(&(&self.metric * v))
    }

    /// Left multiplication `E(α): ω ↦ α ∧ ω` by a covector.
    pub fn wedge_operator(&self, alpha: &[f64]) -> FiberOperator {
        let a = self.covector(alpha);
        self.operator_from_fn(|e| self.wedge(&a, e).expect("same fiber"))
    }

    /// `I(v♭) = i_v` for a vector `v`.
    pub fn interior_operator(&self, v: &[f64]) -> FiberOperator {
        self.operator_from_fn(|e| self.interior_product(v, e).expect("same fiber"))
    }

    /// `γ₋(v) = E(v♭) − I(v♭)`; for `v = α♯` this is `C_α = α∧ − i_{α♯}`.
    pub fn clifford_minus(&self, v: &[f64]) -> FiberOperator {
        let e = self.wedge_operator(&self.flat(v));
        let i = self.interior_operator(v);
        FiberOperator {
            matrix: e.matrix - i.matrix,
        }
    }

    /// `γ₊(v) = E(v♭) + I(v♭)`.
    pub fn clifford_plus(&self, v: &[f64]) -> FiberOperator {
        let e = self.wedge_operator(&self.flat(v));
        let i = self.interior_operator(v);
        FiberOperator {
            matrix: e.matrix + i.matrix,
        }
    }

    /// `ω ↦ (−1)^k ω` on degree `k`.
    pub fn parity_grading(&self) -> FiberOperator {
        let n = self.len();
        let diag = DVector::from_iterator(
            n,
            self.basis
                .masks
                .iter()
                .map(|m| C64::new(if m.count_ones() % 2 == 0 { 1.0 } else { -1.0 }, 0.0)),
        );
        FiberOperator {
            matrix: DMatrix::from_diagonal(&diag),
        }
    }

    /// Signature grading `τω = i^{k(k-1)+ℓ} ∗ω`, `d = 2ℓ`.
    pub fn tau_grading(&self) -> Result<FiberOperator> {
        if !self.dim.is_multiple_of(2) {
            return Err(Error::TauOddDimension(self.dim));
        }
        let star = self.hodge_star_operator();
        let n = self.len();
        let mut m = star.matrix;
        for col in 0..n {
            let k = self.degree_of(col);
            let phase = i_power(tau_exponent(k, self.dim));
            for row in 0..n {
                m[(row, col)] *= phase;
            }
        }
        Ok(FiberOperator { matrix: m })
    }

    /// Operator norm of `op` with respect to the metric norm on `ΛV*`.
    pub fn operator_norm(&self, op: &FiberOperator) -> f64 {
        let (s, s_inv) = self.gram_sqrt();
        let conj = s * &op.matrix * s_inv;
        conj.singular_values().max()
    }

    /// Hermitian square root of the Gram matrix and its inverse.
    fn gram_sqrt(&self) -> (DMatrix<C64>, DMatrix<C64>) {
        let eig = self.gram.clone().symmetric_eigen();
        let sqrt = eig.eigenvalues.map(f64::sqrt);
        let q = &eig.eigenvectors;
        let s = q * DMatrix::from_diagonal(&sqrt) * q.transpose();
        let s_inv = q * DMatrix::from_diagonal(&sqrt.map(|x| 1.0 / x)) * q.transpose();
        (s.map(|x| C64::new(x, 0.0)), s_inv.map(|x| C64::new(x, 0.0)))
    }

    /// Adjoint of `op` with respect to the metric inner product.
    pub fn adjoint(&self, op: &FiberOperator) -> FiberOperator {
        let g = self.gram.map(|x| C64::new(x, 0.0));
        let g_inv = self
            .gram
            .clone()
            .try_inverse()
            .expect("gram is SPD")
            .map(|x| C64::new(x, 0.0));
        FiberOperator {
            matrix: g_inv * op.matrix.adjoint() * g,
        }
    }

    fn operator_from_fn(&self, f: impl Fn(&ExteriorElement) -> ExteriorElement) -> FiberOperator {
        let n = self.len();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for j in 0..n {
            let mut e = self.zero();
            e.coeffs[j] = C64::new(1.0, 0.0);
            m.set_column(j, &f(&e).coeffs);
        }
        FiberOperator { matrix: m }
    }
}

/// Worst residuals of the fiber identities over random metrics and
/// orientations in dimensions `1..=5` (`τ` in dimensions 2 and 4, the middle
/// degree check in dimension 4).
#[derive(Clone, Debug, Serialize)]
pub struct IdentitySuite {
    pub instances: usize,
    pub star_square: f64,
    pub star_wedge_interior: f64,
    pub clifford_relations: f64,
    pub clifford_norm: f64,
    pub tau_involution: f64,
    pub tau_isometry: f64,
    pub tau_middle_star: f64,
}

impl IdentitySuite {
    pub fn max_residual(&self) -> f64 {
        [
            self.star_square,
            self.star_wedge_interior,
            self.clifford_relations,
            self.clifford_norm,
            self.tau_involution,
            self.tau_isometry,
            self.tau_middle_star,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn random_fiber(rng: &mut impl Rng, d: usize) -> Result<FiberSpace> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let orientation = if rng.gen_bool(0.5) { 1 } else { -1 };
    FiberSpace::new(
        a.transpose() * a + DMatrix::identity(d, d) * 0.5,
        orientation,
    )
}

fn random_form(rng: &mut impl Rng, fs: &FiberSpace) -> ExteriorElement {
    let mut e = fs.zero();
    for z in e.coeffs.iter_mut() {
        *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    e
}

fn random_covector(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs every identity on `instances` random fibers each.
pub fn identity_suite(instances: usize, seed: u64) -> Result<IdentitySuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = |e: usize| C64::new(if e.is_multiple_of(2) { 1.0 } else { -1.0 }, 0.0);
    let mut r = IdentitySuite {
        instances,
        star_square: 0.0,
        star_wedge_interior: 0.0,
        clifford_relations: 0.0,
        clifford_norm: 0.0,
        tau_involution: 0.0,
        tau_isometry: 0.0,
        tau_middle_star: 0.0,
    };
    for i in 0..instances {
        let d = 1 + i % 5;
        let fs = random_fiber(&mut rng, d)?;
        let w = random_form(&mut rng, &fs);
        let alpha = random_covector(&mut rng, d);
        let beta = random_covector(&mut rng, d);
        let scale = w.max_abs().max(1.0);
        for k in 0..=d {
            let wk = w.degree_part(&fs, k);
            let ss = fs.hodge_star(&fs.hodge_star(&wk)?)?;
            r.star_square = r
                .star_square
                .max(ss.sub(&wk.scale(sign(k * (d - k)))).max_abs() / scale);
            if k > 0 {
                let a = fs.covector(&alpha);
                let lhs = fs.hodge_star(&fs.wedge(&a, &fs.hodge_star(&wk)?)?)?;
                let rhs = fs
                    .interior_product(&fs.sharp(&alpha), &wk)?
                    .scale(sign(d * (k - 1)));
                r.star_wedge_interior = r.star_wedge_interior.max(lhs.sub(&rhs).max_abs() / scale);
            }
        }
        let g = fs.metric_product(&fs.sharp(&alpha), &fs.sharp(&beta));
        let (ca, cb) = (
            fs.clifford_minus(&fs.sharp(&alpha)),
            fs.clifford_minus(&fs.sharp(&beta)),
        );
        let anti = &(&ca * &cb) + &(&cb * &ca);
        let target = FiberOperator {
            matrix: FiberOperator::identity(&fs).matrix * C64::new(-2.0, 0.0) * C64::new(g, 0.0),
        };
        r.clifford_relations = r.clifford_relations.max((&anti - &target).max_abs());
        let alen = fs
            .metric_product(&fs.sharp(&alpha), &fs.sharp(&alpha))
            .sqrt();
        r.clifford_norm = r
            .clifford_norm
            .max((fs.operator_norm(&ca) - alen).abs() / alen.max(1e-300));

        let de = 2 + 2 * (i % 2);
        let fs = random_fiber(&mut rng, de)?;
        let tau = fs.tau_grading()?;
        let w = random_form(&mut rng, &fs);
        let e = random_form(&mut rng, &fs);
        let scale = w.max_abs().max(1.0);
        r.tau_involution = r
            .tau_involution
            .max(tau.apply(&tau.apply(&w)).sub(&w).max_abs() / scale);
        let lhs = fs.inner(&tau.apply(&w), &tau.apply(&e))?;
        let rhs = fs.inner(&w, &e)?;
        r.tau_isometry = r.tau_isometry.max((lhs - rhs).norm() / rhs.norm().max(1.0));
        // τ = ∗ on the middle degree needs d ≡ 0 mod 4
        let (f4, tau4, w4) = if de == 4 {
            (fs, tau, w)
        } else {
            let f4 = random_fiber(&mut rng, 4)?;
            let tau4 = f4.tau_grading()?;
            let w4 = random_form(&mut rng, &f4);
            (f4, tau4, w4)
        };
        let w2 = w4.degree_part(&f4, 2);
        let scale = w2.max_abs().max(1.0);
        r.tau_middle_star = r
            .tau_middle_star
            .max(tau4.apply(&w2).sub(&f4.hodge_star(&w2)?).max_abs() / scale);
    }
    Ok(r)
}

fn i_power(e: usize) -> C64 {
    match e % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// `det(M[I, J])` for equal-size index sets (1 for the empty set).
fn minor(m: &DMatrix<f64>, rows: u32, cols: u32) -> f64 {
    let r = indices_of(rows);
    let c = indices_of(cols);
    if r.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i] as usize, c[j] as usize)]).determinant()
}

/// Element of `ΛV*` in the multi-index basis of its [`FiberSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExteriorElement {
    dim: usize,
    pub coeffs: DVector<C64>,
}

impl ExteriorElement {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Homogeneous degree-`k` part.
    pub fn degree_part(&self, fs: &FiberSpace, k: usize) -> ExteriorElement {
        let mut out = fs.zero();
        for i in fs.degree_range(k) {
            out.coeffs[i] = self.coeffs[i];
        }
        out
    }

    pub fn scale(&self, c: C64) -> ExteriorElement {
        ExteriorElement {
            dim: self.dim,
            coeffs: &self.coeffs * c,
        }
    }

    pub fn add(&self, other: &ExteriorElement) -> ExteriorElement {
        ExteriorElement {
            dim: self.dim,
            coeffs: &self.coeffs + &other.coeffs,
        }
    }

    pub fn sub(&self, other: &ExteriorElement) -> ExteriorElement {
        ExteriorElement {
            dim: self.dim,
            coeffs: &self.coeffs - &other.coeffs,
        }
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Endomorphism of `ΛV*` as a `2^d × 2^d` matrix in the multi-index basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberOperator {
    pub matrix: DMatrix<C64>,
}

#[derive(Serialize)]
struct OperatorDump {
    size: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl FiberOperator {
    pub fn identity(fs: &FiberSpace) -> Self {
        Self {
            matrix: DMatrix::identity(fs.len(), fs.len()),
        }
    }

    pub fn apply(&self, e: &ExteriorElement) -> ExteriorElement {
        ExteriorElement {
            dim: e.dim,
            coeffs: &self.matrix * &e.coeffs,
        }
    }

    pub fn compose(&self, other: &FiberOperator) -> FiberOperator {
        FiberOperator {
            matrix: &self.matrix * &other.matrix,
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Row-major JSON dump `{size, re, im}` for test tooling.
    pub fn to_json(&self) -> String {
        let n = self.matrix.nrows();
        let dump = OperatorDump {
            size: n,
            re: (0..n)
                .map(|i| (0..n).map(|j| self.matrix[(i, j)].re).collect())
                .collect(),
            im: (0..n)
                .map(|i| (0..n).map(|j| self.matrix[(i, j)].im).collect())
                .collect(),
        };
        serde_json::to_string(&dump).expect("plain numeric payload")
    }
}

impl std::ops::Add for &FiberOperator {
    type Output = FiberOperator;
    fn add(self, rhs: &FiberOperator) -> FiberOperator {
        FiberOperator {
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl std::ops::Sub for &FiberOperator {
    type Output = FiberOperator;
    fn sub(self, rhs: &FiberOperator) -> FiberOperator {
        FiberOperator {
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl std::ops::Mul for &FiberOperator {
    type Output = FiberOperator;
    fn mul(self, rhs: &FiberOperator) -> FiberOperator {
        self.compose(rhs)
    }
}
