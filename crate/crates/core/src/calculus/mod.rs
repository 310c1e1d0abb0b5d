//! Discrete exterior calculus on cochains: the coboundary `d`, Whitney mass
//! matrices, the codifferential `d* = M⁻¹dᵀM`, the Hodge-Dirac operator
//! `D = d + d*`, the Laplacian `Δ = D²`, multiplication operators and
//! fibered `Lᵖ` norms.

mod mass;
mod matrix_free;
mod norms;

pub use mass::{assemble_mass, MetricStructure, MIN_VOLUME};
pub use matrix_free::{commutator_norm_lanczos, SparseDirac};
pub use norms::{opnorm_fibered, opnorm_fibered_real, FiberedNorm, NormBounds, OpNormOptions};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::complex::{CochainLayout, SimplicialComplex};
use crate::linalg::{to_complex, Csr};
use crate::{Error, Result, C64};

/// Degree behaviour of a graded operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DegreeShift {
    Raise,
    Lower,
    Preserve,
    Mixed,
}

impl DegreeShift {
    fn allows(self, src: usize, dst: usize) -> bool {
        match self {
            DegreeShift::Raise => dst == src + 1,
            DegreeShift::Lower => dst + 1 == src,
            DegreeShift::Preserve => dst == src,
            DegreeShift::Mixed => true,
        }
    }

    fn combine(self, other: DegreeShift) -> DegreeShift {
        if self == other {
            self
        } else {
            DegreeShift::Mixed
        }
    }
}

/// A stacked cochain over all degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub layout: CochainLayout,
    pub values: DVector<f64>,
}

impl Cochain {
    pub fn zeros(layout: &CochainLayout) -> Self {
        Self {
            layout: layout.clone(),
            values: DVector::zeros(layout.total()),
        }
    }

    pub fn new(layout: &CochainLayout, values: DVector<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::DimensionMismatch {
                expected: layout.total(),
                got: values.len(),
            });
        }
        Ok(Self {
            layout: layout.clone(),
            values,
        })
    }

    /// Cochain concentrated in degree `k`.
    pub fn in_degree(layout: &CochainLayout, k: usize, block: &[f64]) -> Result<Self> {
        if block.len() != layout.count(k) {
            return Err(Error::DimensionMismatch {
                expected: layout.count(k),
                got: block.len(),
            });
        }
        let mut c = Self::zeros(layout);
        c.values.as_mut_slice()[layout.range(k)].copy_from_slice(block);
        Ok(c)
    }

    pub fn degree(&self, k: usize) -> &[f64] {
        &self.values.as_slice()[self.layout.range(k)]
    }
}

/// A linear map on stacked cochains with its degree behaviour.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedOperator {
    pub matrix: DMatrix<f64>,
    pub layout: CochainLayout,
    pub shift: DegreeShift,
}

impl GradedOperator {
    pub fn new(matrix: DMatrix<f64>, layout: CochainLayout, shift: DegreeShift) -> Result<Self> {
        let n = layout.total();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        Ok(Self {
            matrix,
            layout,
            shift,
        })
    }

    pub fn identity(layout: &CochainLayout) -> Self {
        let n = layout.total();
        Self {
            matrix: DMatrix::identity(n, n),
            layout: layout.clone(),
            shift: DegreeShift::Preserve,
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Block from degree `src` to degree `dst`.
    pub fn block(&self, dst: usize, src: usize) -> DMatrix<f64> {
        let (r, c) = (self.layout.range(dst), self.layout.range(src));
        self.matrix
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    /// Largest entry outside the blocks permitted by `shift`.
    pub fn shift_residual(&self) -> f64 {
        let d = self.layout.dim();
        let mut worst = 0.0f64;
        for dst in 0..=d {
            for src in 0..=d {
                if !self.shift.allows(src, dst) {
                    worst = worst.max(self.block(dst, src).amax());
                }
            }
        }
        worst
    }

    pub fn apply(&self, c: &Cochain) -> Cochain {
        Cochain {
            layout: self.layout.clone(),
            values: &self.matrix * &c.values,
        }
    }

    pub fn compose(&self, other: &GradedOperator) -> GradedOperator {
        let shift = match (self.shift, other.shift) {
            (DegreeShift::Preserve, s) | (s, DegreeShift::Preserve) => s,
            (DegreeShift::Raise, DegreeShift::Lower) | (DegreeShift::Lower, DegreeShift::Raise) => {
                DegreeShift::Preserve
            }
            _ => DegreeShift::Mixed,
        };
        GradedOperator {
            matrix: &self.matrix * &other.matrix,
            layout: self.layout.clone(),
            shift,
        }
    }

    pub fn add(&self, other: &GradedOperator) -> GradedOperator {
        GradedOperator {
            matrix: &self.matrix + &other.matrix,
            layout: self.layout.clone(),
            shift: self.shift.combine(other.shift),
        }
    }

    pub fn sub(&self, other: &GradedOperator) -> GradedOperator {
        GradedOperator {
            matrix: &self.matrix - &other.matrix,
            layout: self.layout.clone(),
            shift: self.shift.combine(other.shift),
        }
    }

    pub fn scale(&self, s: f64) -> GradedOperator {
        GradedOperator {
            matrix: &self.matrix * s,
            layout: self.layout.clone(),
            shift: self.shift,
        }
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        to_complex(&self.matrix)
    }

    /// Nonzero entries as `row col value` lines, row-major.
    pub fn write_triplets(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.matrix.nrows(), self.matrix.ncols())?;
        for r in 0..self.matrix.nrows() {
            for c in 0..self.matrix.ncols() {
                let v = self.matrix[(r, c)];
                if v != 0.0 {
                    writeln!(w, "{r} {c} {v:e}")?;
                }
            }
        }
        Ok(())
    }

    /// Dense row-major little-endian `f64` dump preceded by two `u64` sizes.
    pub fn write_dense(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.matrix.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.matrix.ncols() as u64).to_le_bytes())?;
        for r in 0..self.matrix.nrows() {
            for c in 0..self.matrix.ncols() {
                w.write_all(&self.matrix[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Sparse coboundary blocks `d_k : C^k → C^{k+1}`.
pub fn sparse_d(cx: &SimplicialComplex) -> Vec<Csr<f64>> {
    (0..cx.dim())
        .map(|k| cx.coboundary(k).map(|v| v as f64))
        .collect()
}

/// The exterior derivative on stacked cochains.
pub fn assemble_d(cx: &SimplicialComplex) -> GradedOperator {
    let layout = cx.layout();
    let n = layout.total();
    let mut m = DMatrix::zeros(n, n);
    for (k, blk) in sparse_d(cx).iter().enumerate() {
        let (ro, co) = (layout.offset(k + 1), layout.offset(k));
        for (r, c, v) in blk.triplets() {
            m[(ro + r, co + c)] = v;
        }
    }
    GradedOperator {
        matrix: m,
        layout,
        shift: DegreeShift::Raise,
    }
}

/// `d*` with blocks `M_k⁻¹ d_kᵀ M_{k+1}`, the adjoint of `d` for the mass
/// inner product.
pub fn assemble_codifferential(d: &GradedOperator, m: &MetricStructure) -> Result<GradedOperator> {
    let layout = &d.layout;
    if layout != m.layout() {
        return Err(Error::Invalid("operator and metric layouts differ".into()));
    }
    let n = layout.total();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..layout.dim() {
        let dk = d.block(k + 1, k);
        let rhs = dk.transpose() * m.mass_dense(k + 1);
        let blk = m.solve(k, &rhs)?;
        let (r, c) = (layout.range(k), layout.range(k + 1));
        out.view_mut((r.start, c.start), (r.len(), c.len()))
            .copy_from(&blk);
    }
    Ok(GradedOperator {
        matrix: out,
        layout: layout.clone(),
        shift: DegreeShift::Lower,
    })
}

/// `D = d + d*`.
pub fn assemble_hodge_dirac(d: &GradedOperator, dstar: &GradedOperator) -> Result<GradedOperator> {
    if d.layout != dstar.layout {
        return Err(Error::Invalid("d and d* layouts differ".into()));
    }
    Ok(d.add(dstar))
}

/// `Δ = D²`.
pub fn laplacian(dirac: &GradedOperator) -> GradedOperator {
    let mut l = dirac.compose(dirac);
    l.shift = DegreeShift::Preserve;
    l
}

/// The assembled calculus of one complex.
#[derive(Debug)]
pub struct Calculus {
    pub d: GradedOperator,
    pub dstar: GradedOperator,
    pub dirac: GradedOperator,
    pub metric: MetricStructure,
}

impl Calculus {
    pub fn new(cx: &SimplicialComplex) -> Result<Self> {
        let metric = assemble_mass(cx)?;
        let d = assemble_d(cx);
        let dstar = assemble_codifferential(&d, &metric)?;
        let dirac = assemble_hodge_dirac(&d, &dstar)?;
        Ok(Self {
            d,
            dstar,
            dirac,
            metric,
        })
    }

    pub fn layout(&self) -> &CochainLayout {
        &self.d.layout
    }

    pub fn laplacian(&self) -> GradedOperator {
        laplacian(&self.dirac)
    }

    /// Generalized form of the degree-`k` Laplacian: `(M_k Δ_k, M_k)`, with
    /// `M_k Δ_k = M_k d_{k−1} M_{k−1}⁻¹ d_{k−1}ᵀ M_k + d_kᵀ M_{k+1} d_k`.
    pub fn laplacian_degree(&self, k: usize) -> Result<GradedBlock> {
        let layout = self.layout();
        let mk = self.metric.mass_dense(k);
        let mut stiff = DMatrix::zeros(mk.nrows(), mk.ncols());
        if k > 0 {
            let dkm = self.d.block(k, k - 1);
            let a = &mk * &dkm;
            let solved = self.metric.solve(k - 1, &a.transpose())?;
            stiff += &a * solved;
        }
        if k < layout.dim() {
            let dk = self.d.block(k + 1, k);
            stiff += dk.transpose() * self.metric.mass_dense(k + 1) * &dk;
        }
        crate::linalg::symmetrize(&mut stiff);
        Ok(GradedBlock {
            degree: k,
            stiffness: stiff,
            mass: mk,
        })
    }
}

/// A single-degree symmetric pencil `(A, M)`.
#[derive(Clone, Debug)]
pub struct GradedBlock {
    pub degree: usize,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
}

/// Lift of a vertex function to stacked cochains: each `k`-simplex
/// coefficient is multiplied by the mean of `f` over its vertices.
pub fn multiplication_operator(f: &[f64], cx: &SimplicialComplex) -> Result<GradedOperator> {
    if f.len() != cx.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: cx.n_vertices(),
            got: f.len(),
        });
    }
    let layout = cx.layout();
    let mut diag = Vec::with_capacity(layout.total());
    for k in 0..=cx.dim() {
        for s in cx.simplices(k) {
            let first = f[s[0]];
            // constants stay exact; (c + c + c)/3 can be off by an ulp
            if s.iter().all(|&v| f[v] == first) {
                diag.push(first);
            } else {
                diag.push(s.iter().map(|&v| f[v]).sum::<f64>() / s.len() as f64);
            }
        }
    }
    Ok(GradedOperator {
        matrix: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        layout,
        shift: DegreeShift::Preserve,
    })
}

/// `[D, M_f] = D M_f − M_f D`.
pub fn commutator(dirac: &GradedOperator, mf: &GradedOperator) -> Result<GradedOperator> {
    if dirac.layout != mf.layout {
        return Err(Error::Invalid("operator layouts differ".into()));
    }
    let m = &dirac.matrix * &mf.matrix - &mf.matrix * &dirac.matrix;
    Ok(GradedOperator {
        matrix: m,
        layout: dirac.layout.clone(),
        shift: dirac.shift.combine(mf.shift),
    })
}

/// Vertex-collocated `Lᵖ` norm: fiber `ℓ²` over degrees at each vertex, then
/// a volume-weighted `p`-sum over vertices.
pub fn lp_norm(omega: &Cochain, p: f64, m: &MetricStructure) -> Result<f64> {
    m.collocation().norm_real(omega.values.as_slice(), p)
}

/// Complex-valued version of [`lp_norm`].
pub fn lp_norm_complex(omega: &[C64], p: f64, m: &MetricStructure) -> Result<f64> {
    m.collocation().norm(omega, p)
}

/// Operator-norm bounds of `t` for the `p`-norm on cochains.
///
/// `p = 2` is the Whitney mass norm, computed exactly in mass-orthonormal
/// coordinates. Other exponents use the vertex-collocated norm.
pub fn opnorm_p(
    t: &DMatrix<C64>,
    p: f64,
    m: &MetricStructure,
    opts: &OpNormOptions,
) -> Result<NormBounds> {
    if p == 2.0 {
        let v = mass_norm(t, m)?;
        return Ok(NormBounds {
            lower: v,
            upper: v,
            exact: true,
            converged: true,
        });
    }
    opnorm_fibered(t, &m.collocation(), p, opts)
}

/// Exact operator norm for the Whitney mass inner product.
pub fn mass_norm(t: &DMatrix<C64>, m: &MetricStructure) -> Result<f64> {
    let lt = m.stacked_cholesky()?.transpose();
    let lit = m.stacked_cholesky_inverse()?.transpose();
    let (re, im) = crate::linalg::split_complex(t);
    if re.nrows() >= crate::linalg::GRAM_NORM_MIN {
        // real GEMMs are much faster than generic complex products here
        return Ok(crate::linalg::norm2_split(
            &(&lt * re * &lit),
            &(&lt * im * &lit),
        ));
    }
    Ok(crate::linalg::norm2_complex(
        &(to_complex(&lt) * t * to_complex(&lit)),
    ))
}

/// Operator-norm bounds in the collocated norm for every `p`, including 2.
pub fn opnorm_collocated(
    t: &DMatrix<C64>,
    p: f64,
    m: &MetricStructure,
    opts: &OpNormOptions,
) -> Result<NormBounds> {
    opnorm_fibered(t, &m.collocation(), p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_circle, build_icosphere, build_torus2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn circle_d0_is_signed_cycle_difference() {
        let cx = build_circle(3).unwrap();
        let d = assemble_d(&cx);
        let d0 = d.block(1, 0);
        assert_eq!(d0.nrows(), 3);
        for r in 0..3 {
            assert_eq!(d0.row(r).sum(), 0.0);
            assert_eq!(d0.row(r).iter().filter(|x| **x != 0.0).count(), 2);
        }
        assert_eq!(crate::linalg::numerical_rank(&d0, 1e-10).unwrap().rank, 2);
        let ones = Cochain::in_degree(&cx.layout(), 0, &[1.0; 3]).unwrap();
        assert_eq!(d.apply(&ones).values.amax(), 0.0);
    }

    #[test]
    fn d_squares_to_zero_and_dstar_is_adjoint() {
        let cx = build_torus2(6).unwrap();
        let calc = Calculus::new(&cx).unwrap();
        assert_eq!((&calc.d.matrix * &calc.d.matrix).amax(), 0.0);
        assert!((&calc.dstar.matrix * &calc.dstar.matrix).amax() < 1e-10);
        assert_eq!(calc.d.shift_residual(), 0.0);
        assert_eq!(calc.dstar.shift_residual(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = calc.layout().total();
        for _ in 0..100 {
            let (w, phi) = (random_vec(n, &mut rng), random_vec(n, &mut rng));
            let lhs = calc.metric.inner(&(&calc.d.matrix * &w), &phi);
            let rhs = calc.metric.inner(&w, &(&calc.dstar.matrix * &phi));
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
        // d* kills 0-cochains
        let r0 = calc.layout().range(0);
        assert_eq!(calc.dstar.matrix.columns(r0.start, r0.len()).amax(), 0.0);
    }

    #[test]
    fn dirac_is_mass_symmetric_odd_and_pythagorean() {
        let cx = build_icosphere(1).unwrap();
        let calc = Calculus::new(&cx).unwrap();
        let m = calc.metric.stacked_mass();
        let md = &m * &calc.dirac.matrix;
        assert!((&md - md.transpose()).amax() < 1e-9 * md.amax());
        let gamma = DMatrix::from_diagonal(&DVector::from_fn(calc.layout().total(), |i, _| {
            if calc.layout().degree_of(i).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        }));
        let anti = &gamma * &calc.dirac.matrix * &gamma + &calc.dirac.matrix;
        assert_eq!(anti.amax(), 0.0);
        let lap = calc.laplacian();
        let split = &calc.d.matrix * &calc.dstar.matrix + &calc.dstar.matrix * &calc.d.matrix;
        assert!((&lap.matrix - split).amax() < 1e-9 * lap.matrix.amax());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let w = random_vec(calc.layout().total(), &mut rng);
            let dw = calc.metric.norm(&(&calc.d.matrix * &w)).powi(2);
            let sw = calc.metric.norm(&(&calc.dstar.matrix * &w)).powi(2);
            let full = calc.metric.norm(&(&calc.dirac.matrix * &w)).powi(2);
            assert!((full - dw - sw).abs() < 1e-10 * full.max(1.0));
        }
    }

    #[test]
    fn multiplication_lifts_constants_to_scalars() {
        let cx = build_torus2(4).unwrap();
        let layout = cx.layout();
        let one = multiplication_operator(&[1.0; 16], &cx).unwrap();
        assert_eq!(one, GradedOperator::identity(&layout));
        let three = multiplication_operator(&[3.0; 16], &cx).unwrap();
        assert_eq!(
            three.matrix,
            DMatrix::identity(layout.total(), layout.total()) * 3.0
        );
        let calc = Calculus::new(&cx).unwrap();
        assert_eq!(commutator(&calc.dirac, &three).unwrap().matrix.amax(), 0.0);
    }

    #[test]
    fn commutator_is_linear_in_f() {
        let cx = build_torus2(4).unwrap();
        let calc = Calculus::new(&cx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
        let g: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let c = |h: &[f64]| {
            commutator(&calc.dirac, &multiplication_operator(h, &cx).unwrap())
                .unwrap()
                .matrix
        };
        assert!((c(&fg) - c(&f) - c(&g)).amax() < 1e-12 * c(&fg).amax());
    }

    #[test]
    fn multiplication_norms_bounded_by_sup() {
        let cx = build_torus2(6).unwrap();
        let m = assemble_mass(&cx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: Vec<f64> = (0..36).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let sup = f.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mf = multiplication_operator(&f, &cx).unwrap().to_complex();
        for p in [1.0, 2.0, f64::INFINITY] {
            let b = opnorm_collocated(&mf, p, &m, &OpNormOptions::default()).unwrap();
            assert!(b.upper <= sup + 1e-12, "p={p} {b:?} sup {sup}");
        }
    }

    #[test]
    fn lp_norm_basics() {
        let cx = build_torus2(4).unwrap();
        let m = assemble_mass(&cx).unwrap();
        let layout = cx.layout();
        assert_eq!(lp_norm(&Cochain::zeros(&layout), 3.0, &m).unwrap(), 0.0);
        let mut e = vec![0.0; 16];
        e[5] = 1.0;
        let ind = Cochain::in_degree(&layout, 0, &e).unwrap();
        assert!((lp_norm(&ind, 1.0, &m).unwrap() - m.vertex_weights()[5]).abs() < 1e-14);
        assert!(lp_norm(&ind, 0.5, &m).is_err());
        // p = 2 agrees with the Whitney norm up to lumping
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let smooth: Vec<f64> = (0..16)
            .map(|i| ((i % 4) as f64 * std::f64::consts::PI / 2.0).sin() + rng.gen::<f64>() * 0.01)
            .collect();
        let c = Cochain::in_degree(&layout, 0, &smooth).unwrap();
        let a = lp_norm(&c, 2.0, &m).unwrap();
        let b = m.norm(&c.values);
        assert!((a - b).abs() < 0.5 * b);
    }

    #[test]
    fn mass_norm_of_resolvent_is_contractive() {
        let cx = build_circle(8).unwrap();
        let calc = Calculus::new(&cx).unwrap();
        let n = calc.layout().total();
        for t in [0.01, 0.3, 5.0, 100.0] {
            let a = DMatrix::<C64>::identity(n, n) * C64::new(0.0, t) - calc.dirac.to_complex();
            let r = crate::linalg::solve_complex(a, &DMatrix::identity(n, n)).unwrap()
                * C64::new(t, 0.0);
            let b = opnorm_p(&r, 2.0, &calc.metric, &OpNormOptions::default()).unwrap();
            assert!(b.upper <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn operator_exports() {
        let cx = build_circle(3).unwrap();
        let d = assemble_d(&cx);
        let mut text = Vec::new();
        d.write_triplets(&mut text).unwrap();
        let s = String::from_utf8(text).unwrap();
        assert_eq!(s.lines().count(), 1 + 6);
        let mut bin = Vec::new();
        d.write_dense(&mut bin).unwrap();
        assert_eq!(bin.len(), 16 + 36 * 8);
    }
}
