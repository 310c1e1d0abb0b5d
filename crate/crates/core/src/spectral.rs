//! Dense generalized eigen-analysis of `D` and `Δ` in the mass inner product,
//! harmonic projection, the heat semigroup and its kernels, and
//! approximation-number diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus::{Calculus, DegreeShift, GradedOperator, MetricStructure};
use crate::complex::{CochainLayout, SimplicialComplex};
use crate::linalg::{
    cholesky_lower, lower_inverse, numerical_rank, rank_from_singular_values, symmetrize,
    DEFAULT_RANK_TOL, REQUIRED_GAP,
};
use crate::{Error, Result, C64};

/// Laplacian eigenvalues in `[−LAPLACIAN_CLAMP, 0)` are set to zero.
pub const LAPLACIAN_CLAMP: f64 = 1e-10;

/// Relative asymmetry accepted by [`eigensolve`].
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorTag {
    Dirac,
    Laplacian,
}

impl OperatorTag {
    pub fn name(self) -> &'static str {
        match self {
            OperatorTag::Dirac => "D",
            OperatorTag::Laplacian => "Laplacian",
        }
    }
}

/// Full eigendecomposition `A V = V Λ` with `Vᵀ M V = I`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Mass-orthonormal eigenvectors, one per column.
    pub eigenvectors: DMatrix<f64>,
    pub tag: OperatorTag,
    pub layout: CochainLayout,
    mass: DMatrix<f64>,
}

/// Solves the symmetric pencil of `a` against the stacked mass of `m`.
pub fn eigensolve(
    a: &GradedOperator,
    m: &MetricStructure,
    tag: OperatorTag,
) -> Result<SpectralData> {
    if a.layout != *m.layout() {
        return Err(Error::Invalid("operator and metric layouts differ".into()));
    }
    let mass = m.stacked_mass();
    let ma = &mass * &a.matrix;
    let scale = ma.amax();
    if scale > 0.0 {
        let asym = (&ma - ma.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
    }
    let mut b = m.to_orthonormal(&a.matrix)?;
    symmetrize(&mut b);
    let eig = b.symmetric_eigen();
    let lit = m.stacked_cholesky_inverse()?.transpose();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let mut lam = eig.eigenvalues[i];
        if tag == OperatorTag::Laplacian && (-LAPLACIAN_CLAMP..0.0).contains(&lam) {
            lam = 0.0;
        }
        let mut v = &lit * eig.eigenvectors.column(i);
        fix_sign(&mut v);
        eigenvalues.push(lam);
        eigenvectors.set_column(c, &v);
    }
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        tag,
        layout: a.layout.clone(),
        mass,
    })
}

/// Sign convention: the first entry of (near-)maximal magnitude is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let amax = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() >= amax * (1.0 - 1e-12)) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

pub fn eigensolve_dirac(calc: &Calculus) -> Result<SpectralData> {
    eigensolve(&calc.dirac, &calc.metric, OperatorTag::Dirac)
}

pub fn eigensolve_laplacian(calc: &Calculus) -> Result<SpectralData> {
    eigensolve(&calc.laplacian(), &calc.metric, OperatorTag::Laplacian)
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Size of each eigenvalue as seen by the kernel test: `|λ|` for `D`,
    /// `λ` for `Δ`.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.abs()).collect()
    }

    /// Eigenvalues of `Δ` associated with this spectrum.
    pub fn laplacian_values(&self) -> Vec<f64> {
        match self.tag {
            OperatorTag::Dirac => self.eigenvalues.iter().map(|l| l * l).collect(),
            OperatorTag::Laplacian => self.eigenvalues.clone(),
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().into_iter().fold(0.0, f64::max)
    }

    /// `V f(Λ) Vᵀ M`.
    pub fn function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col *= f(l);
        }
        scaled * (self.eigenvectors.transpose() * &self.mass)
    }

    /// Complex version of [`Self::function`].
    pub fn function_complex(&self, f: impl Fn(f64) -> C64) -> DMatrix<C64> {
        let v = self.eigenvectors.map(|x| C64::new(x, 0.0));
        let mut scaled = v.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col *= f(l);
        }
        let right = (self.eigenvectors.transpose() * &self.mass).map(|x| C64::new(x, 0.0));
        scaled * right
    }

    fn graded(&self, matrix: DMatrix<f64>, shift: DegreeShift) -> GradedOperator {
        GradedOperator {
            matrix,
            layout: self.layout.clone(),
            shift,
        }
    }

    /// Largest relative pencil residual `‖B u − λ u‖ / ‖B‖` in mass-orthonormal
    /// coordinates, where `B` is `a` expressed in those coordinates.
    pub fn max_residual(&self, a: &GradedOperator, m: &MetricStructure) -> Result<f64> {
        let b = m.to_orthonormal(&a.matrix)?;
        let l = m.stacked_cholesky()?;
        let u = l.transpose() * &self.eigenvectors;
        let bnorm = crate::linalg::norm2(&b).max(f64::MIN_POSITIVE);
        let r = &b * &u - &u * DMatrix::from_diagonal(&DVector::from_row_slice(&self.eigenvalues));
        Ok(r.column_iter().map(|c| c.norm()).fold(0.0, f64::max) / bnorm)
    }

    /// `max |Vᵀ M V − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.eigenvectors.transpose() * &self.mass * &self.eigenvectors;
        (g - DMatrix::identity(self.len(), self.len())).amax()
    }
}

/// Default kernel threshold `max(1e-9, 1e-6·λ₁)`, where `λ₁` is the smallest
/// magnitude above `1e-8` of the largest.
pub fn default_harmonic_tol(magnitudes: &[f64]) -> f64 {
    let top = magnitudes.iter().copied().fold(0.0, f64::max);
    let first = magnitudes
        .iter()
        .copied()
        .filter(|&x| x > 1e-8 * top)
        .fold(f64::INFINITY, f64::min);
    if first.is_finite() {
        (1e-6 * first).max(1e-9)
    } else {
        1e-9
    }
}

/// Indices with magnitude at most `tol`, after checking that `tol` sits in a
/// gap of ratio at least [`REQUIRED_GAP`].
pub fn kernel_indices(magnitudes: &[f64], tol: f64) -> Result<Vec<usize>> {
    let below = magnitudes
        .iter()
        .copied()
        .filter(|&x| x <= tol)
        .fold(0.0, f64::max);
    let above = magnitudes
        .iter()
        .copied()
        .filter(|&x| x > tol)
        .fold(f64::INFINITY, f64::min);
    let gap = if below == 0.0 {
        f64::INFINITY
    } else {
        above / below
    };
    if gap < REQUIRED_GAP {
        return Err(Error::ClusterSplit(gap));
    }
    Ok((0..magnitudes.len())
        .filter(|&i| magnitudes[i] <= tol)
        .collect())
}

/// Spectral projector onto the eigenvalues with `|λ| ≤ tol` (default
/// [`default_harmonic_tol`]).
pub fn harmonic_projection(sd: &SpectralData, tol: Option<f64>) -> Result<GradedOperator> {
    let mags = sd.magnitudes();
    let tol = tol.unwrap_or_else(|| default_harmonic_tol(&mags));
    let keep = kernel_indices(&mags, tol)?;
    let vh = sd.eigenvectors.select_columns(&keep);
    let p = &vh * (vh.transpose() * &sd.mass);
    Ok(sd.graded(p, DegreeShift::Preserve))
}

/// `sgn(D)` from the eigendecomposition, zero on the harmonic part.
pub fn spectral_sign(sd: &SpectralData, tol: Option<f64>) -> Result<GradedOperator> {
    let mags = sd.magnitudes();
    let tol = tol.unwrap_or_else(|| default_harmonic_tol(&mags));
    kernel_indices(&mags, tol)?;
    let s = sd.function(|l| if l.abs() <= tol { 0.0 } else { l.signum() });
    Ok(sd.graded(s, DegreeShift::Mixed))
}

/// `𝒟 = |D| + P` with its extreme eigenvalues.
#[derive(Clone, Debug)]
pub struct ScriptD {
    pub operator: GradedOperator,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition: f64,
}

pub fn script_d(sd: &SpectralData, p: &GradedOperator) -> Result<ScriptD> {
    if p.layout != sd.layout {
        return Err(Error::Invalid("projection layout differs".into()));
    }
    let abs = sd.function(f64::abs);
    let op = abs + &p.matrix;
    // eigenvalues of an M-self-adjoint operator via the eigenbasis
    let mut b = sd.eigenvectors.transpose() * &sd.mass * &op * &sd.eigenvectors;
    symmetrize(&mut b);
    let ev = b.symmetric_eigenvalues();
    let min_eigenvalue = ev.min();
    let max_eigenvalue = ev.max();
    Ok(ScriptD {
        operator: sd.graded(op, DegreeShift::Preserve),
        min_eigenvalue,
        max_eigenvalue,
        condition: max_eigenvalue / min_eigenvalue,
    })
}

/// `e^{−tΔ}`; for a Dirac spectrum `Δ = D²`.
pub fn heat_semigroup(sd: &SpectralData, t: f64) -> Result<GradedOperator> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Invalid(format!(
            "heat time must be positive, got {t}"
        )));
    }
    let h = match sd.tag {
        OperatorTag::Dirac => sd.function(|l| (-t * l * l).exp()),
        OperatorTag::Laplacian => sd.function(|l| (-t * l).exp()),
    };
    Ok(sd.graded(h, DegreeShift::Preserve))
}

/// Heat kernel at one time, in collocated fiber coordinates.
///
/// The kernel is `K = S H M⁻¹ S`, so that `S H ω = Σ_y K(·, y) (S ω)(y) w_y`
/// up to the lumping of `M`. It is exactly symmetric whenever `H` is
/// self-adjoint in the mass inner product.
#[derive(Clone, Debug)]
pub struct HeatKernelSlice {
    pub t: f64,
    pub kernel: DMatrix<f64>,
    /// Collocation fibers: stacked indices owned by each vertex.
    pub fibers: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    /// Per degree `k`: the `n_v × n_v` matrix of `‖K^k(x, y)‖`.
    pub degree_norms: Vec<DMatrix<f64>>,
    /// Scalar kernel `p_t(x, y)`.
    pub scalar: DMatrix<f64>,
}

pub fn kernel_extract(h: &GradedOperator, m: &MetricStructure, t: f64) -> Result<HeatKernelSlice> {
    let layout = m.layout();
    if h.layout != *layout {
        return Err(Error::Invalid("operator and metric layouts differ".into()));
    }
    let n = layout.total();
    let mut hm = DMatrix::zeros(n, n);
    for k in 0..=m.dim() {
        let r = layout.range(k);
        let cols = h.matrix.columns(r.start, r.len()).transpose();
        let solved = m.solve(k, &cols)?;
        hm.columns_mut(r.start, r.len())
            .copy_from(&solved.transpose());
    }
    let colloc = m.collocation();
    let s = colloc.scale();
    let kernel = DMatrix::from_fn(n, n, |i, j| s[i] * hm[(i, j)] * s[j]);
    let fibers = colloc.fibers().to_vec();
    let nv = fibers.len();

    let degree_norms = (0..=m.dim())
        .map(|k| {
            let r = layout.range(k);
            let sub: Vec<Vec<usize>> = fibers
                .iter()
                .map(|f| f.iter().copied().filter(|i| r.contains(i)).collect())
                .collect();
            DMatrix::from_fn(nv, nv, |x, y| block_norm(&kernel, &sub[x], &sub[y]))
        })
        .collect();
    let r0 = layout.range(0);
    let scalar = kernel
        .view((r0.start, r0.start), (r0.len(), r0.len()))
        .into_owned();
    Ok(HeatKernelSlice {
        t,
        kernel,
        fibers,
        weights: colloc.weights().to_vec(),
        degree_norms,
        scalar,
    })
}

fn block_norm(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    match (rows.len(), cols.len()) {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => k[(rows[0], cols[0])].abs(),
        _ => {
            let b = DMatrix::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])]);
            crate::linalg::norm2(&b)
        }
    }
}

/// `max_{x,y} ‖K(x, y)‖` over fiber blocks, which is the `L¹ → L∞` norm of
/// the integral operator with kernel `K`.
pub fn kernel_norm_l1_linf(kernel: &DMatrix<f64>, fibers: &[Vec<usize>]) -> f64 {
    let mut best = 0.0f64;
    for fx in fibers {
        for fy in fibers {
            best = best.max(block_norm(kernel, fx, fy));
        }
    }
    best
}

impl HeatKernelSlice {
    pub fn l1_linf_norm(&self) -> f64 {
        kernel_norm_l1_linf(&self.kernel, &self.fibers)
    }

    /// Matrix of the integral operator `u ↦ Σ_y K(·, y) u(y) w_y` in fiber
    /// coordinates.
    pub fn integral_operator(&self) -> DMatrix<f64> {
        let mut w = vec![0.0; self.kernel.ncols()];
        for (f, &wx) in self.fibers.iter().zip(&self.weights) {
            for &i in f {
                w[i] = wx;
            }
        }
        let mut out = self.kernel.clone();
        for (mut col, wi) in out.column_iter_mut().zip(w) {
            col *= wi;
        }
        out
    }

    /// `max |K − Kᵀ| / max |K|`.
    pub fn symmetry_error(&self) -> f64 {
        let scale = self.kernel.amax().max(f64::MIN_POSITIVE);
        (&self.kernel - self.kernel.transpose()).amax() / scale
    }

    pub fn min_scalar(&self) -> f64 {
        self.scalar.min()
    }

    /// Sign check of the scalar kernel. Consistent-mass heat kernels can dip
    /// below zero when `√t` is below the mesh size.
    pub fn positivity(&self) -> Positivity {
        let min_relative = self.min_scalar() / self.scalar.amax().max(f64::MIN_POSITIVE);
        Positivity {
            min_relative,
            violated: self.min_scalar() < -1e-12,
        }
    }

    /// Scalar kernel with negative entries clamped to zero, for reporting.
    pub fn clamped_scalar(&self) -> DMatrix<f64> {
        self.scalar.map(|x| x.max(0.0))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Positivity {
    pub min_relative: f64,
    pub violated: bool,
}

/// Smallest `a(t)` with `‖p_t^k(x, y)‖ ≤ e^{a t} p_t(x, y)` at each time.
#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub t: Vec<f64>,
    /// Fitted `a(t)` over all degrees `k ≥ 1`.
    pub a: Vec<f64>,
    /// Fitted `a(t)` per degree, `k = 0..=dim`.
    pub a_by_degree: Vec<Vec<f64>>,
    pub max_a: f64,
    pub lambda_max: f64,
    /// Pairs skipped because `p_t(x, y)` was not positive.
    pub skipped_pairs: usize,
}

pub fn domination_check(
    sd: &SpectralData,
    m: &MetricStructure,
    t_grid: &[f64],
) -> Result<DominationReport> {
    let mut a = Vec::with_capacity(t_grid.len());
    let mut a_by_degree = Vec::with_capacity(t_grid.len());
    let mut skipped = 0;
    for &t in t_grid {
        let slice = kernel_extract(&heat_semigroup(sd, t)?, m, t)?;
        let pmax = slice.scalar.amax();
        let mut per = Vec::with_capacity(slice.degree_norms.len());
        for norms in &slice.degree_norms {
            let mut ak = f64::NEG_INFINITY;
            for ((x, y), &kn) in norms
                .iter()
                .enumerate()
                .map(|(i, v)| ((i % norms.nrows(), i / norms.nrows()), v))
            {
                if kn == 0.0 {
                    continue;
                }
                let p = slice.scalar[(x, y)];
                if p <= 1e-12 * pmax {
                    skipped += 1;
                    continue;
                }
                ak = ak.max((kn / p).ln() / t);
            }
            per.push(ak);
        }
        a.push(
            per.iter()
                .skip(1)
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        );
        a_by_degree.push(per);
    }
    let lambda_max = sd.laplacian_values().into_iter().fold(0.0, f64::max);
    Ok(DominationReport {
        t: t_grid.to_vec(),
        max_a: a.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        a,
        a_by_degree,
        lambda_max,
        skipped_pairs: skipped,
    })
}

/// Fit of `‖K_t^k(x, y)‖ ≈ C V(x, √t)⁻¹ exp(−c d(x, y)²/t)`.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianFit {
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
    pub r2: f64,
    pub pairs: usize,
}

pub const MIN_FIT_POINTS: usize = 10;

pub fn gaussian_fit(
    slice: &HeatKernelSlice,
    cx: &SimplicialComplex,
    degree: usize,
) -> Result<GaussianFit> {
    let norms = slice
        .degree_norms
        .get(degree)
        .ok_or_else(|| Error::Invalid(format!("no kernel in degree {degree}")))?;
    let nv = norms.nrows();
    let floor = 1e-12 * norms.amax();
    let rt = slice.t.sqrt();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for x in 0..nv {
        let dist = cx.distances_from(x);
        let vol: f64 = dist
            .iter()
            .zip(&slice.weights)
            .filter(|(d, _)| **d <= rt)
            .map(|(_, w)| w)
            .sum::<f64>()
            .max(slice.weights[x]);
        for y in 0..nv {
            let k = norms[(x, y)];
            if k > floor {
                xs.push(dist[y] * dist[y] / slice.t);
                ys.push(k.ln() + vol.ln());
            }
        }
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::WindowTooSmall(xs.len(), MIN_FIT_POINTS));
    }
    let fit = linear_fit(&xs, &ys);
    Ok(GaussianFit {
        big_c: fit.intercept.exp(),
        c: -fit.slope,
        r2: fit.r2,
        pairs: xs.len(),
    })
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope.
    pub stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let stderr = if n > 2.0 && sxx > 0.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    LinearFit {
        slope,
        intercept,
        r2,
        stderr,
    }
}

/// Singular values in decreasing order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Approximation numbers `a_n(T)` for the mass norm: the singular values of
/// `T` in mass-orthonormal coordinates.
pub fn approximation_numbers(t: &GradedOperator, m: &MetricStructure) -> Result<Vec<f64>> {
    Ok(singular_values_desc(&m.to_orthonormal(&t.matrix)?))
}

/// Log-log decay of the resolvent approximation numbers.
#[derive(Clone, Debug, Serialize)]
pub struct SummabilityReport {
    pub operator: OperatorTag,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub stderr: f64,
    /// Expected slope: `−1/d` for `(D + i)⁻¹`, `−2/d` for `(Δ + 1)⁻¹`.
    pub target: f64,
    /// Inclusive 1-based window of `n`.
    pub window: (usize, usize),
}

/// Fit window: drop the first 10% and the last 50% of the indices.
pub fn summability_window(len: usize) -> (usize, usize) {
    (len / 10 + 1, len / 2)
}

pub fn summability_check(sd: &SpectralData, dim: usize) -> Result<SummabilityReport> {
    if dim == 0 {
        return Err(Error::Invalid("dimension must be positive".into()));
    }
    let mut a: Vec<f64> = match sd.tag {
        OperatorTag::Dirac => sd
            .eigenvalues
            .iter()
            .map(|l| 1.0 / (1.0 + l * l).sqrt())
            .collect(),
        OperatorTag::Laplacian => sd.eigenvalues.iter().map(|l| 1.0 / (1.0 + l)).collect(),
    };
    a.sort_by(|x, y| y.total_cmp(x));
    let (lo, hi) = summability_window(a.len());
    let points = hi.saturating_sub(lo) + 1;
    if hi < lo || points < MIN_FIT_POINTS {
        return Err(Error::WindowTooSmall(points.min(a.len()), MIN_FIT_POINTS));
    }
    let xs: Vec<f64> = (lo..=hi).map(|n| (n as f64).ln()).collect();
    let ys: Vec<f64> = (lo..=hi).map(|n| a[n - 1].ln()).collect();
    let fit = linear_fit(&xs, &ys);
    let target = match sd.tag {
        OperatorTag::Dirac => -1.0 / dim as f64,
        OperatorTag::Laplacian => -2.0 / dim as f64,
    };
    Ok(SummabilityReport {
        operator: sd.tag,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        stderr: fit.stderr,
        target,
        window: (lo, hi),
    })
}

/// Eigenvalues of the degree-`k` Laplacian pencil, ascending.
pub fn degree_spectrum(calc: &Calculus, k: usize) -> Result<Vec<f64>> {
    let block = calc.laplacian_degree(k)?;
    let li = lower_inverse(&cholesky_lower(&block.mass)?);
    let mut b = &li * &block.stiffness * li.transpose();
    symmetrize(&mut b);
    let mut ev: Vec<f64> = b.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    for l in &mut ev {
        if (-LAPLACIAN_CLAMP..0.0).contains(l) {
            *l = 0.0;
        }
    }
    Ok(ev)
}

/// `dim ker Δ_k` for every degree, each certified by a spectral gap.
pub fn harmonic_dimensions(calc: &Calculus) -> Result<Vec<usize>> {
    (0..=calc.layout().dim())
        .map(|k| {
            let ev = degree_spectrum(calc, k)?;
            Ok(kernel_indices(&ev, default_harmonic_tol(&ev))?.len())
        })
        .collect()
}

/// Dimension count of `C^k = im d_{k−1} ⊕ im d*_{k+1} ⊕ ker Δ_k`.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct HodgeDimensions {
    pub degree: usize,
    pub n: usize,
    pub rank_d: usize,
    pub rank_dstar: usize,
    pub harmonic: usize,
    /// Dimensions of the pairwise intersections (exact, coexact),
    /// (exact, harmonic), (coexact, harmonic).
    pub intersections: [usize; 3],
}

impl HodgeDimensions {
    pub fn is_direct_sum(&self) -> bool {
        self.intersections == [0; 3] && self.n == self.rank_d + self.rank_dstar + self.harmonic
    }
}

/// Orthonormal basis of the column space, with a gap-certified rank.
fn column_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return Ok(DMatrix::zeros(a.nrows(), 0));
    }
    let rank = numerical_rank(a, DEFAULT_RANK_TOL)?.rank;
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    Ok(u.select_columns(&idx[..rank]))
}

fn intersection_dim(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Ok(0);
    }
    let mut ab = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    ab.columns_mut(0, a.ncols()).copy_from(a);
    ab.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    let sv = ab.svd(false, false).singular_values;
    // orthonormal inputs: singular values lie in [0, √2]
    let r = rank_from_singular_values(sv.as_slice(), DEFAULT_RANK_TOL)?.rank;
    Ok(a.ncols() + b.ncols() - r)
}

pub fn hodge_decomposition(calc: &Calculus, k: usize) -> Result<HodgeDimensions> {
    let layout = calc.layout();
    let n = layout.count(k);
    let lt = cholesky_lower(&calc.metric.mass_dense(k))?.transpose();
    let exact = if k > 0 {
        column_basis(&(&lt * calc.d.block(k, k - 1)))?
    } else {
        DMatrix::zeros(n, 0)
    };
    let coexact = if k < layout.dim() {
        column_basis(&(&lt * calc.dstar.block(k, k + 1)))?
    } else {
        DMatrix::zeros(n, 0)
    };
    let block = calc.laplacian_degree(k)?;
    let li = lower_inverse(&lt.transpose());
    let mut b = &li * &block.stiffness * li.transpose();
    symmetrize(&mut b);
    let eig = b.symmetric_eigen();
    let ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let keep = kernel_indices(&ev, default_harmonic_tol(&ev))?;
    let harmonic = eig.eigenvectors.select_columns(&keep);
    Ok(HodgeDimensions {
        degree: k,
        n,
        rank_d: exact.ncols(),
        rank_dstar: coexact.ncols(),
        harmonic: harmonic.ncols(),
        intersections: [
            intersection_dim(&exact, &coexact)?,
            intersection_dim(&exact, &harmonic)?,
            intersection_dim(&coexact, &harmonic)?,
        ],
    })
}

/// `X = Ran D ⊕ ker D` computed independently: the range from a rank-certified
/// SVD of `D`, the kernel from the spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct RangeKernelSplit {
    pub total: usize,
    pub range_dim: usize,
    pub kernel_dim: usize,
    /// Smallest principal angle between the two subspaces, in radians.
    pub min_angle: f64,
}

pub fn range_kernel_split(calc: &Calculus, sd: &SpectralData) -> Result<RangeKernelSplit> {
    let lt = calc.metric.stacked_cholesky()?.transpose();
    let b = calc.metric.to_orthonormal(&calc.dirac.matrix)?;
    let range = column_basis(&b)?;
    let mags = sd.magnitudes();
    let keep = kernel_indices(&mags, default_harmonic_tol(&mags))?;
    let kernel = lt * sd.eigenvectors.select_columns(&keep);
    let cos = if range.ncols() == 0 || kernel.ncols() == 0 {
        0.0
    } else {
        crate::linalg::norm2(&(range.transpose() * &kernel)).min(1.0)
    };
    Ok(RangeKernelSplit {
        total: b.nrows(),
        range_dim: range.ncols(),
        kernel_dim: kernel.ncols(),
        min_angle: cos.acos(),
    })
}

/// Exported spectral diagnostics with fixed field names.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SpectralReport {
    pub operator: String,
    pub mesh: String,
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub fitted_a: Option<f64>,
    #[serde(rename = "C")]
    pub big_c: Option<f64>,
    pub c: Option<f64>,
}

impl SpectralReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_eigenvalues_csv(sd: &SpectralData, mut w: impl Write) -> Result<()> {
    writeln!(w, "index,eigenvalue")?;
    for (i, l) in sd.eigenvalues.iter().enumerate() {
        writeln!(w, "{i},{l:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{opnorm_fibered, FiberedNorm, OpNormOptions};
    use crate::complex::{build_circle, build_icosphere, build_torus2};
    use crate::linalg::to_complex;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn calc(cx: &SimplicialComplex) -> Calculus {
        Calculus::new(cx).unwrap()
    }

    #[test]
    fn circle_laplacian_matches_circulant_pencil() {
        let n = 8;
        let cx = build_circle(n).unwrap();
        let c = calc(&cx);
        let ev = degree_spectrum(&c, 0).unwrap();
        let h = 1.0 / n as f64;
        // stiffness symbol (2 − 2cos θ)/h over mass symbol h(2 + cos θ)/3
        let mut expect: Vec<f64> = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                (2.0 - 2.0 * th.cos()) / h / (h * (2.0 + th.cos()) / 3.0)
            })
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn torus_harmonic_dimensions_are_betti() {
        let c = calc(&build_torus2(5).unwrap());
        assert_eq!(harmonic_dimensions(&c).unwrap(), vec![1, 2, 1]);
        let sd = eigensolve_laplacian(&c).unwrap();
        let p = harmonic_projection(&sd, None).unwrap();
        let traces: Vec<f64> = (0..3).map(|k| p.block(k, k).trace()).collect();
        for (t, b) in traces.iter().zip([1.0, 2.0, 1.0]) {
            assert!((t - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dirac_spectrum_is_symmetric_and_parity_conjugated() {
        let cx = build_icosphere(1).unwrap();
        let c = calc(&cx);
        let sd = eigensolve_dirac(&c).unwrap();
        assert!(sd.max_residual(&c.dirac, &c.metric).unwrap() < 1e-8);
        assert!(sd.orthonormality_error() < 1e-10);
        let mut neg: Vec<f64> = sd.eigenvalues.iter().map(|l| -l).collect();
        neg.sort_by(f64::total_cmp);
        let scale = sd.max_magnitude();
        for (a, b) in sd.eigenvalues.iter().zip(&neg) {
            assert!((a - b).abs() < 1e-9 * scale);
        }
        // γ v is an eigenvector for −λ
        let layout = c.layout();
        let gamma = DVector::from_fn(layout.total(), |i, _| {
            if layout.degree_of(i).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        });
        for (j, &l) in sd.eigenvalues.iter().enumerate().step_by(7) {
            let gv = sd.eigenvectors.column(j).component_mul(&gamma);
            let r = &c.dirac.matrix * &gv + &gv * l;
            assert!(r.amax() < 1e-8 * scale * gv.amax());
        }
    }

    #[test]
    fn asymmetric_operator_is_rejected() {
        let c = calc(&build_circle(4).unwrap());
        let err = eigensolve(&c.d, &c.metric, OperatorTag::Dirac).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric(_)));
    }

    #[test]
    fn projection_is_idempotent_and_annihilated_by_dirac() {
        let c = calc(&build_torus2(4).unwrap());
        let sd = eigensolve_dirac(&c).unwrap();
        let p = harmonic_projection(&sd, None).unwrap();
        assert!((&p.matrix * &p.matrix - &p.matrix).amax() < 1e-10);
        assert!((p.matrix.trace() - 4.0).abs() < 1e-9);
        let scale = sd.max_magnitude();
        assert!((&c.dirac.matrix * &p.matrix).amax() < 1e-9 * scale);
        assert!((&p.matrix * &c.dirac.matrix).amax() < 1e-9 * scale);
        assert!(p.shift_residual() < 1e-10);
    }

    #[test]
    fn tolerance_inside_a_cluster_is_rejected() {
        let mags = [0.0, 1.0, 1.5, 4.0];
        assert!(matches!(
            kernel_indices(&mags, 1.2),
            Err(Error::ClusterSplit(_))
        ));
        assert_eq!(kernel_indices(&mags, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn script_d_is_invertible_and_factors_dirac() {
        let c = calc(&build_torus2(6).unwrap());
        let sd = eigensolve_dirac(&c).unwrap();
        let p = harmonic_projection(&sd, None).unwrap();
        let sc = script_d(&sd, &p).unwrap();
        let lam1 = sd
            .magnitudes()
            .into_iter()
            .filter(|&x| x > 1e-6)
            .fold(f64::INFINITY, f64::min);
        assert!((sc.min_eigenvalue - lam1.min(1.0)).abs() < 1e-9);
        let sgn = spectral_sign(&sd, None).unwrap();
        let r = &sgn.matrix * &sc.operator.matrix - &c.dirac.matrix;
        assert!(r.amax() < 1e-9 * sd.max_magnitude());
        // 𝒟 preserves degrees
        assert!(sc.operator.shift_residual() < 1e-9 * sd.max_magnitude());
    }

    #[test]
    fn heat_semigroup_laws() {
        let c = calc(&build_icosphere(1).unwrap());
        let sd = eigensolve_laplacian(&c).unwrap();
        let h1 = heat_semigroup(&sd, 0.1).unwrap();
        let h2 = heat_semigroup(&sd, 0.2).unwrap();
        let h3 = heat_semigroup(&sd, 0.3).unwrap();
        assert!((&h1.matrix * &h2.matrix - &h3.matrix).amax() < 1e-9);
        assert!(h1.matrix.trace() > h2.matrix.trace());

        let lmax = sd.max_magnitude();
        let h0 = heat_semigroup(&sd, 1e-8 / lmax).unwrap();
        let n = h0.size();
        assert!((&h0.matrix - DMatrix::<f64>::identity(n, n)).amax() < 1e-6);

        let lam1 = sd.eigenvalues.iter().copied().find(|&l| l > 1e-6).unwrap();
        let hinf = heat_semigroup(&sd, 40.0 / lam1).unwrap();
        let p = harmonic_projection(&sd, None).unwrap();
        assert!((&hinf.matrix - &p.matrix).amax() < 1e-8);

        assert!(heat_semigroup(&sd, 0.0).is_err());
        assert!(heat_semigroup(&sd, -1.0).is_err());
    }

    #[test]
    fn heat_kernel_is_symmetric_and_scalar_part_positive() {
        let cx = build_torus2(12).unwrap();
        let c = calc(&cx);
        let sd = eigensolve_laplacian(&c).unwrap();
        for t in [0.01, 0.1, 1.0] {
            let slice = kernel_extract(&heat_semigroup(&sd, t).unwrap(), &c.metric, t).unwrap();
            assert!(slice.symmetry_error() < 1e-9);
            let pos = slice.positivity();
            // resolved times are positive; the under-resolved one is reported
            assert_eq!(pos.violated, t < 0.05, "t = {t}: {pos:?}");
            assert!(slice.clamped_scalar().min() >= 0.0);
        }
    }

    /// Evaluates the integral operator on the extremal inputs `e δ_y / w_y`
    /// and measures them with the generic fibered norms.
    fn brute_l1_linf(slice: &HeatKernelSlice) -> f64 {
        let t = slice.integral_operator();
        let norm = FiberedNorm::new(
            slice.fibers.clone(),
            vec![1.0; t.nrows()],
            slice.weights.clone(),
        )
        .unwrap();
        let mut best = 0.0f64;
        for (y, fy) in slice.fibers.iter().enumerate() {
            for fx in &slice.fibers {
                if fx.is_empty() || fy.is_empty() {
                    continue;
                }
                let b = DMatrix::from_fn(fx.len(), fy.len(), |i, j| slice.kernel[(fx[i], fy[j])]);
                let svd = b.svd(false, true);
                let vt = svd.v_t.unwrap();
                let imax = svd.singular_values.imax();
                let mut u = DVector::zeros(t.ncols());
                for (j, &idx) in fy.iter().enumerate() {
                    u[idx] = vt[(imax, j)] / slice.weights[y];
                }
                let out: Vec<f64> = (&t * &u).iter().copied().collect();
                let num = norm.norm_real(&out, f64::INFINITY).unwrap();
                let den = norm.norm_real(u.as_slice(), 1.0).unwrap();
                best = best.max(num / den);
            }
        }
        best
    }

    #[test]
    fn kernel_norm_identity_on_heat_slices() {
        let c = calc(&build_torus2(4).unwrap());
        let sd = eigensolve_laplacian(&c).unwrap();
        let slice = kernel_extract(&heat_semigroup(&sd, 0.05).unwrap(), &c.metric, 0.05).unwrap();
        let a = slice.l1_linf_norm();
        let b = brute_l1_linf(&slice);
        assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
    }

    #[test]
    fn kernel_norm_identity_on_random_scalar_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10;
        for _ in 0..20 {
            let k = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let w: Vec<f64> = (0..n).map(|_| 0.1 + rng.gen::<f64>()).collect();
            let fibers: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            let t = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * w[j]);
            // brute force over basis indicators δ_y / w_y
            let norm = FiberedNorm::weighted_scalar(w.clone());
            let mut brute = 0.0f64;
            for y in 0..n {
                let mut u = vec![0.0; n];
                u[y] = 1.0 / w[y];
                let out: Vec<f64> = (&t * DVector::from_row_slice(&u)).iter().copied().collect();
                brute = brute.max(
                    norm.norm_real(&out, f64::INFINITY).unwrap() / norm.norm_real(&u, 1.0).unwrap(),
                );
            }
            let formula = kernel_norm_l1_linf(&k, &fibers);
            assert!((formula - brute).abs() < 1e-12 * formula);
        }
    }

    #[test]
    fn scalar_domination_is_trivial_and_flat_torus_a_is_finite() {
        let c = calc(&build_torus2(8).unwrap());
        let sd = eigensolve_laplacian(&c).unwrap();
        let rep = domination_check(&sd, &c.metric, &[0.1, 0.5]).unwrap();
        for per in &rep.a_by_degree {
            assert!(per[0].abs() < 1e-9, "scalar a = {}", per[0]);
        }
        assert!(rep.max_a.is_finite());
        assert!(rep.max_a <= 0.25 * rep.lambda_max);
    }

    #[test]
    fn gaussian_fit_on_flat_torus() {
        let cx = build_torus2(12).unwrap();
        let c = calc(&cx);
        let sd = eigensolve_laplacian(&c).unwrap();
        let t = 0.05;
        let slice = kernel_extract(&heat_semigroup(&sd, t).unwrap(), &c.metric, t).unwrap();
        let fit = gaussian_fit(&slice, &cx, 0).unwrap();
        assert!(fit.r2 >= 0.9, "r2 = {}", fit.r2);
        assert!(fit.c > 0.0);
        // t beyond diam²: essentially constant kernel with finite C
        let t = 4.0;
        let slice = kernel_extract(&heat_semigroup(&sd, t).unwrap(), &c.metric, t).unwrap();
        let fit = gaussian_fit(&slice, &cx, 0).unwrap();
        assert!(fit.big_c.is_finite() && fit.big_c > 0.0);
    }

    #[test]
    fn approximation_numbers_basics() {
        let c = calc(&build_circle(6).unwrap());
        let a = approximation_numbers(&c.dirac, &c.metric).unwrap();
        let top = crate::calculus::mass_norm(&to_complex(&c.dirac.matrix), &c.metric).unwrap();
        assert!((a[0] - top).abs() < 1e-10 * top);
        assert!(a.windows(2).all(|w| w[0] >= w[1]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        assert_eq!(singular_values_desc(&d), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn summability_slopes() {
        let c = calc(&build_circle(64).unwrap());
        let sd = eigensolve_dirac(&c).unwrap();
        let rep = summability_check(&sd, 1).unwrap();
        assert!((-1.2..=-0.8).contains(&rep.slope), "slope {}", rep.slope);
        let sl = eigensolve_laplacian(&c).unwrap();
        let rl = summability_check(&sl, 1).unwrap();
        assert!(
            (rl.slope / rep.slope - 2.0).abs() < 0.4,
            "{} vs {}",
            rl.slope,
            rep.slope
        );
        assert!(summability_check(
            &eigensolve_dirac(&calc(&build_circle(3).unwrap())).unwrap(),
            1
        )
        .is_err());
    }

    #[test]
    fn hodge_dimensions_on_sphere() {
        let c = calc(&build_icosphere(1).unwrap());
        for k in 0..=2 {
            let h = hodge_decomposition(&c, k).unwrap();
            assert!(h.is_direct_sum(), "{h:?}");
        }
        assert_eq!(hodge_decomposition(&c, 1).unwrap().harmonic, 0);
    }

    #[test]
    fn range_and_kernel_split_the_space() {
        let c = calc(&build_torus2(4).unwrap());
        let sd = eigensolve_dirac(&c).unwrap();
        let s = range_kernel_split(&c, &sd).unwrap();
        assert_eq!(s.range_dim + s.kernel_dim, s.total);
        assert_eq!(s.kernel_dim, 4);
        assert!(s.min_angle > 1.5);
    }

    #[test]
    fn reports_serialize_with_fixed_fields() {
        let c = calc(&build_circle(4).unwrap());
        let sd = eigensolve_dirac(&c).unwrap();
        let mut buf = Vec::new();
        write_eigenvalues_csv(&sd, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,eigenvalue\n"));
        assert_eq!(text.lines().count(), sd.len() + 1);
        let rep = SpectralReport {
            operator: "D".into(),
            mesh: "circle".into(),
            n: 4,
            eigenvalues: sd.eigenvalues.clone(),
            ..Default::default()
        };
        let v: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        for key in [
            "operator",
            "mesh",
            "n",
            "eigenvalues",
            "slope",
            "r2",
            "fitted_a",
            "C",
            "c",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn collocated_p2_bound_of_heat_is_at_most_one_in_mass_norm() {
        let c = calc(&build_circle(8).unwrap());
        let sd = eigensolve_laplacian(&c).unwrap();
        let h = heat_semigroup(&sd, 0.01).unwrap();
        let v = crate::calculus::mass_norm(&to_complex(&h.matrix), &c.metric).unwrap();
        assert!(v <= 1.0 + 1e-12);
        let b = opnorm_fibered(
            &to_complex(&h.matrix),
            &c.metric.collocation(),
            1.0,
            &OpNormOptions::default(),
        )
        .unwrap();
        assert!(b.upper.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn block_direct_sum_lemma(seed in 0u64..1000, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes: Vec<usize> = (0..3).map(|_| rng.gen_range(2..6)).collect();
            let blocks: Vec<DMatrix<f64>> = sizes
                .iter()
                .map(|&s| DMatrix::from_fn(s, s, |_, _| rng.gen::<f64>() - 0.5))
                .collect();
            let total: usize = sizes.iter().sum();
            let mut big = DMatrix::zeros(total, total);
            let mut o = 0;
            for b in &blocks {
                big.view_mut((o, o), b.shape()).copy_from(b);
                o += b.nrows();
            }
            let a = singular_values_desc(&big);
            let rhs = blocks
                .iter()
                .map(|b| singular_values_desc(b).get(n - 1).copied().unwrap_or(0.0))
                .fold(0.0, f64::max);
            let lhs = a.get(3 * n - 1).copied().unwrap_or(0.0);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn approximation_numbers_are_non_increasing(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(7, 7, |_, _| rng.gen::<f64>() - 0.5);
            let a = singular_values_desc(&m);
            prop_assert!(a.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
