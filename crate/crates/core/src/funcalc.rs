//! Resolvents and the holomorphic functional calculus of `D` and `Δ` by
//! Cauchy-integral quadrature on sector and bisector contours.
//!
//! For a symbol `f` decaying at `0` and `∞`,
//! `f(A) = (1/2πi) ∫_{∂Σ} f(z) (z − A)⁻¹ dz` with the boundary oriented so that
//! the (bi)sector lies to its left. Each ray is integrated in the log-radius
//! `s = ln r`, compactified by `s = s_c + c·artanh(x)` and sampled with
//! Gauss–Legendre nodes in `x`, so the whole half-line is covered without
//! truncation.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::calculus::{opnorm_p, GradedOperator, MetricStructure, OpNormOptions};
use crate::spectral::{default_harmonic_tol, spectral_sign, SpectralData};
use crate::{Error, Result, C64};

/// Minimum number of quadrature nodes per ray.
pub const MIN_NODES_PER_RAY: usize = 8;

/// Default half-angle. Narrow contours pass close to the real spectrum and
/// need more nodes for the same accuracy.
pub const DEFAULT_NU: f64 = PI / 4.0;

/// Contour-point count used to validate decay certificates.
pub const CERTIFICATE_SAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourKind {
    /// `∂Σ_ν` around the positive axis, for nonnegative operators such as `Δ`.
    Sector,
    /// `∂Σ^bi_ν = ∂Σ_ν ∪ ∂(−Σ_ν)`, for `D`.
    Bisector,
}

/// Radial quadrature rule along each ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialRule {
    /// Gauss–Legendre in `x` with `ln r = s_c + c·artanh(x)`, centred at
    /// `√(r_min r_max)`; `c` is the smallest even integer placing the
    /// extreme nodes beyond `[r_min, r_max]`.
    Compactified,
    /// Composite Gauss–Legendre in `ln r` on `[ln r_min, ln r_max]`.
    LogComposite { panels: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub kind: ContourKind,
    /// Half-angle of the sectors, in `(0, π/2)`.
    pub nu: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub nodes_per_ray: usize,
    pub rule: RadialRule,
}

/// One quadrature node: the point `z` and the weight of `dz`.
#[derive(Clone, Copy, Debug)]
struct Node {
    z: C64,
    dz: C64,
}

impl ContourSpec {
    pub fn new(
        kind: ContourKind,
        nu: f64,
        r_min: f64,
        r_max: f64,
        nodes_per_ray: usize,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            nu,
            r_min,
            r_max,
            nodes_per_ray,
            rule: RadialRule::Compactified,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Radii chosen a factor 20 beyond the spectral extremes.
    pub fn for_spectrum(
        kind: ContourKind,
        nu: f64,
        lambda_min: f64,
        lambda_max: f64,
        nodes_per_ray: usize,
    ) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
            return Err(Error::Contour(format!(
                "need 0 < λ_min ≤ λ_max, got {lambda_min}, {lambda_max}"
            )));
        }
        Self::new(
            kind,
            nu,
            lambda_min / 20.0,
            lambda_max * 20.0,
            nodes_per_ray,
        )
    }

    pub fn with_rule(mut self, rule: RadialRule) -> Result<Self> {
        self.rule = rule;
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < PI / 2.0) {
            return Err(Error::Contour(format!(
                "half-angle {} outside (0, π/2)",
                self.nu
            )));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::Contour(format!(
                "radii must satisfy 0 < r_min < r_max, got {} and {}",
                self.r_min, self.r_max
            )));
        }
        if self.nodes_per_ray < MIN_NODES_PER_RAY {
            return Err(Error::Contour(format!(
                "{} nodes per ray, need at least {MIN_NODES_PER_RAY}",
                self.nodes_per_ray
            )));
        }
        if let RadialRule::LogComposite { panels } = self.rule {
            if panels == 0 || !self.nodes_per_ray.is_multiple_of(panels) {
                return Err(Error::Contour(format!(
                    "{panels} panels do not divide {} nodes",
                    self.nodes_per_ray
                )));
            }
        }
        Ok(())
    }

    /// Checks the radii and angle against a spectrum.
    pub fn validate_for(&self, spectrum: &[C64]) -> Result<()> {
        self.check()?;
        let top = spectrum.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let nonzero = spectrum
            .iter()
            .map(|l| l.norm())
            .filter(|&x| x > 1e-8 * top.max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min);
        if nonzero.is_finite() && self.r_min >= nonzero / 10.0 {
            return Err(Error::Contour(format!(
                "r_min = {} must be below λ_min/10 = {}",
                self.r_min,
                nonzero / 10.0
            )));
        }
        if self.r_max <= 10.0 * top {
            return Err(Error::Contour(format!(
                "r_max = {} must exceed 10·λ_max = {}",
                self.r_max,
                10.0 * top
            )));
        }
        let slack = 1e-9 * top.max(1.0);
        for l in spectrum {
            let inside = l.im.abs() <= self.nu.tan() * l.re.abs() + slack;
            let side = self.kind == ContourKind::Bisector || l.re >= -slack;
            if !(inside && side) {
                return Err(Error::Contour(format!(
                    "eigenvalue {l} lies outside the {:?} of half-angle {}",
                    self.kind, self.nu
                )));
            }
        }
        Ok(())
    }

    /// Ray angles with orientation: `+1` outward, `−1` inward. Each sector
    /// is traversed out along its lower edge and back along its upper edge,
    /// which keeps its interior on the left.
    pub fn rays(&self) -> Vec<(f64, f64)> {
        let mut r = vec![(-self.nu, 1.0), (self.nu, -1.0)];
        if self.kind == ContourKind::Bisector {
            r.push((PI - self.nu, 1.0));
            r.push((PI + self.nu, -1.0));
        }
        r
    }

    fn gauss(&self, n: usize) -> Vec<(f64, f64)> {
        GaussLegendre::new(NonZeroUsize::new(n).expect("positive node count"))
            .as_node_weight_pairs()
            .to_vec()
    }

    /// Radial nodes `(r, w)` with `Σ w g(r) ≈ ∫₀^∞ g(r) dr/r`.
    fn radial_log_nodes(&self) -> Vec<(f64, f64)> {
        match self.rule {
            RadialRule::Compactified => {
                let gl = self.gauss(self.nodes_per_ray);
                let outer = gl.iter().map(|(x, _)| x.abs()).fold(0.0, f64::max).atanh();
                let half = 0.5 * (self.r_max / self.r_min).ln();
                // even c keeps r^a = ((1 − x)/(1 + x))^{±ca/2} smooth at x = ±1
                let c = 2.0 * (half / outer / 2.0).ceil().max(1.0);
                let sc = 0.5 * (self.r_min * self.r_max).ln();
                gl.iter()
                    .map(|&(x, w)| ((sc + c * x.atanh()).exp(), w * c / (1.0 - x * x)))
                    .collect()
            }
            RadialRule::LogComposite { panels } => {
                let gl = self.gauss(self.nodes_per_ray / panels);
                let (a, b) = (self.r_min.ln(), self.r_max.ln());
                let h = (b - a) / panels as f64;
                (0..panels)
                    .flat_map(|p| {
                        let mid = a + (p as f64 + 0.5) * h;
                        gl.iter()
                            .map(move |&(x, w)| ((mid + 0.5 * h * x).exp(), 0.5 * h * w))
                    })
                    .collect()
            }
        }
    }

    /// Nodes of the open (bi)sector boundary.
    fn open_nodes(&self) -> Vec<Node> {
        let radial = self.radial_log_nodes();
        let mut out = Vec::with_capacity(radial.len() * 4);
        for (theta, orient) in self.rays() {
            // left rays as exact mirrors of the right ones
            let e = if theta > PI / 2.0 {
                -C64::from_polar(1.0, theta - PI)
            } else {
                C64::from_polar(1.0, theta)
            };
            for &(r, w) in &radial {
                let z = e * r;
                // dz = z ds
                out.push(Node {
                    z,
                    dz: z * (w * orient),
                });
            }
        }
        out
    }

    /// Nodes of the boundary of the (bi)sector truncated at `radius`, closed
    /// by arcs. Valid for any symbol holomorphic on a neighbourhood of the
    /// truncated sectors that vanishes at `0`.
    fn closed_nodes(&self, radius: f64) -> Vec<Node> {
        let gl = self.gauss(self.nodes_per_ray);
        // [0, r_min] in r, where the integrand is smooth for r ≪ |λ|, then
        // [r_min, R] in ln r on panels of log-width at most 1
        let inner = (self.nodes_per_ray / 4).max(4);
        let (a, b) = (self.r_min.ln(), radius.ln());
        let panels = (b - a).ceil().max(1.0) as usize;
        let per_panel = (self.nodes_per_ray - inner)
            .div_ceil(panels)
            .max(MIN_NODES_PER_RAY);
        let h = (b - a) / panels as f64;
        let mut radial: Vec<(f64, f64)> = self
            .gauss(inner)
            .iter()
            .map(|&(x, w)| (0.5 * self.r_min * (1.0 + x), 0.5 * self.r_min * w))
            .collect();
        let gl_panel = self.gauss(per_panel);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            radial.extend(gl_panel.iter().map(|&(x, w)| {
                let r = (mid + 0.5 * h * x).exp();
                (r, 0.5 * h * w * r)
            }));
        }
        let mut out = Vec::new();
        let mut sectors = vec![1.0];
        if self.kind == ContourKind::Bisector {
            sectors.push(-1.0);
        }
        for side in sectors {
            // the left sector is the mirror image z ↦ −z of the right one
            let e_lo = C64::from_polar(side, -self.nu);
            let e_hi = C64::from_polar(side, self.nu);
            for &(r, w) in &radial {
                out.push(Node {
                    z: e_lo * r,
                    dz: e_lo * w,
                });
            }
            for &(x, w) in &gl {
                let z = C64::from_polar(radius * side, self.nu * x);
                out.push(Node {
                    z,
                    dz: C64::i() * z * (w * self.nu),
                });
            }
            for &(r, w) in &radial {
                out.push(Node {
                    z: e_hi * r,
                    dz: -e_hi * w,
                });
            }
        }
        out
    }

    /// Sample points on the contour, log-spaced in radius from
    /// `r_min/100` to `100·r_max` and spread over the rays.
    fn sample_points(&self, count: usize) -> Vec<C64> {
        let rays = self.rays();
        let (a, b) = ((self.r_min / 100.0).ln(), (self.r_max * 100.0).ln());
        (0..count)
            .map(|i| {
                let s = a + (b - a) * i as f64 / (count - 1) as f64;
                C64::from_polar(s.exp(), rays[i % rays.len()].0)
            })
            .collect()
    }
}

/// `|f(z)| ≤ C · min((|z|/scale)^s, (scale/|z|)^s)` on the contour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub constant: f64,
    pub exponent: f64,
    pub scale: f64,
}

impl DecayCertificate {
    pub fn new(constant: f64, exponent: f64) -> Self {
        Self {
            constant,
            exponent,
            scale: 1.0,
        }
    }

    pub fn bound(&self, z: C64) -> f64 {
        let u = z.norm() / self.scale;
        self.constant * u.powf(self.exponent).min(u.powf(-self.exponent))
    }
}

/// A scalar symbol with its decay certificate.
#[derive(Clone)]
pub struct HolomorphicSymbol {
    pub name: String,
    eval: Arc<dyn Fn(C64) -> C64 + Send + Sync>,
    pub decay: DecayCertificate,
}

impl fmt::Debug for HolomorphicSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HolomorphicSymbol")
            .field("name", &self.name)
            .field("decay", &self.decay)
            .finish()
    }
}

/// `max |1 + w²|⁻¹` over `|w| ≤ 1` on the rays of half-angle `ν`.
fn rational_constant(nu: f64) -> f64 {
    let c2 = (2.0 * nu).cos();
    if c2 >= 0.0 {
        1.0
    } else {
        1.0 / (2.0 * nu).sin()
    }
}

impl HolomorphicSymbol {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(C64) -> C64 + Send + Sync + 'static,
        decay: DecayCertificate,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            decay,
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        (self.eval)(z)
    }

    /// `z^k / (1 + z²)^k`, certified for contours of half-angle up to `nu`.
    pub fn rational(k: u32, nu: f64) -> Self {
        let c = rational_constant(nu).powi(k as i32) * (1.0 + 1e-12);
        Self::new(
            format!("rational{k}"),
            move |z: C64| (z / (C64::new(1.0, 0.0) + z * z)).powi(k as i32),
            DecayCertificate::new(c, k as f64),
        )
    }

    /// `s z / (z² + s²)`, whose supremum on `∂Σ^bi_ν` is `1/(2 cos ν)`.
    pub fn bump(s: f64, nu: f64) -> Self {
        let c = rational_constant(nu) * (1.0 + 1e-12);
        Self::new(
            format!("bump({s})"),
            move |z: C64| z * s / (z * z + s * s),
            DecayCertificate {
                constant: c,
                exponent: 1.0,
                scale: s,
            },
        )
    }

    /// Pointwise product; certificates multiply when the scales agree.
    pub fn product(&self, other: &HolomorphicSymbol) -> Result<Self> {
        if (self.decay.scale - other.decay.scale).abs() > 1e-12 * self.decay.scale {
            return Err(Error::DecayCertificate(
                "product of symbols with different scales".into(),
            ));
        }
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Ok(Self {
            name: format!("{}*{}", self.name, other.name),
            eval: Arc::new(move |z| f(z) * g(z)),
            decay: DecayCertificate {
                constant: self.decay.constant * other.decay.constant,
                exponent: self.decay.exponent + other.decay.exponent,
                scale: self.decay.scale,
            },
        })
    }

    /// `α f + β g`, certified with the smaller exponent.
    pub fn combine(
        alpha: f64,
        f: &HolomorphicSymbol,
        beta: f64,
        g: &HolomorphicSymbol,
    ) -> Result<Self> {
        if (f.decay.scale - g.decay.scale).abs() > 1e-12 * f.decay.scale {
            return Err(Error::DecayCertificate(
                "combination of symbols with different scales".into(),
            ));
        }
        let (fe, ge) = (f.eval.clone(), g.eval.clone());
        Ok(Self {
            name: format!("{alpha}*{}+{beta}*{}", f.name, g.name),
            eval: Arc::new(move |z| fe(z) * alpha + ge(z) * beta),
            decay: DecayCertificate {
                constant: alpha.abs() * f.decay.constant + beta.abs() * g.decay.constant,
                exponent: f.decay.exponent.min(g.decay.exponent),
                scale: f.decay.scale,
            },
        })
    }

    /// Checks the certificate on [`CERTIFICATE_SAMPLES`] contour points.
    pub fn validate(&self, contour: &ContourSpec) -> Result<()> {
        let d = self.decay;
        if !(d.constant > 0.0 && d.constant.is_finite() && d.exponent > 0.0 && d.scale > 0.0) {
            return Err(Error::DecayCertificate(format!(
                "{}: need C > 0, s > 0, got C = {}, s = {}",
                self.name, d.constant, d.exponent
            )));
        }
        for z in contour.sample_points(CERTIFICATE_SAMPLES) {
            let v = self.eval(z).norm();
            let b = d.bound(z);
            if !(v <= b * (1.0 + 1e-9) + 1e-300) {
                return Err(Error::DecayCertificate(format!(
                    "{}: |f({z})| = {v:e} exceeds the bound {b:e}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// `(z − A)⁻¹` with its residual `‖(z − A)R − I‖_F`.
#[derive(Clone, Debug)]
pub struct Resolvent {
    pub matrix: DMatrix<C64>,
    pub residual: f64,
}

/// Eigenvalues of a real operator matrix by a real Schur decomposition with
/// a bounded iteration count. Deflation is tested relative to neighbouring
/// diagonal entries, which vanish on kernels, so failed attempts are retried
/// on `A + σI` for fixed shifts `σ`.
pub fn spectrum(a: &GradedOperator) -> Result<Vec<C64>> {
    let n = a.size();
    let scale = a.matrix.amax().max(f64::MIN_POSITIVE);
    for sigma in [0.0, std::f64::consts::FRAC_1_PI, -0.577_215_665] {
        let shift = sigma * scale;
        let m = &a.matrix + DMatrix::<f64>::identity(n, n) * shift;
        if let Some(s) = nalgebra::linalg::Schur::try_new(m, 1e-13, 100 * n.max(1)) {
            return Ok(s.complex_eigenvalues().iter().map(|l| l - shift).collect());
        }
    }
    Err(Error::Invalid("Schur iteration did not converge".into()))
}

/// Distance below which `z` counts as a pole of the resolvent.
pub const POLE_TOL: f64 = 1e-10;

pub fn resolvent(a: &GradedOperator, z: C64) -> Result<Resolvent> {
    if let Some(l) = spectrum(a)?
        .into_iter()
        .min_by(|p, q| (z - p).norm().total_cmp(&(z - q).norm()))
    {
        let dist = (z - l).norm();
        if dist < POLE_TOL {
            return Err(Error::ResolventPole {
                z: z.to_string(),
                eigenvalue: l.to_string(),
                distance: dist,
            });
        }
    }
    shifted_inverse(&a.matrix, z)
}

fn shifted(a: &DMatrix<f64>, z: C64) -> DMatrix<C64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { z } else { C64::new(0.0, 0.0) };
        d - a[(i, j)]
    })
}

fn shifted_inverse(a: &DMatrix<f64>, z: C64) -> Result<Resolvent> {
    let n = a.nrows();
    let zma = shifted(a, z);
    let inv = zma
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Invalid(format!("z − A is singular at z = {z}")))?;
    let residual = (zma * &inv - DMatrix::<C64>::identity(n, n)).norm();
    Ok(Resolvent {
        matrix: inv,
        residual,
    })
}

fn conj_key(z: C64) -> (u64, u64) {
    (z.re.to_bits(), z.im.to_bits())
}

/// `(1/2πi) Σ f(z_j) R(z_j) dz_j` in node order. `A` is real, so
/// `R(z̄) = conj R(z)` and mirrored nodes share one solve.
fn contour_sum(a: &DMatrix<f64>, nodes: &[Node], f: impl Fn(C64) -> C64) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let index: HashMap<(u64, u64), usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, v)| (conj_key(v.z), i))
        .collect();
    let mut done = vec![false; nodes.len()];
    let mut acc = DMatrix::<C64>::zeros(n, n);
    for (i, node) in nodes.iter().enumerate() {
        if done[i] {
            continue;
        }
        done[i] = true;
        let mirror = index
            .get(&conj_key(node.z.conj()))
            .copied()
            .filter(|&j| j != i && !done[j]);
        let fz = f(node.z);
        let fm = mirror.map(|j| f(nodes[j].z) * nodes[j].dz);
        if fz == C64::new(0.0, 0.0) && fm.is_none_or(|v| v == C64::new(0.0, 0.0)) {
            if let Some(j) = mirror {
                done[j] = true;
            }
            continue;
        }
        let r = shifted_inverse(a, node.z)?.matrix;
        if let (Some(j), Some(w)) = (mirror, fm) {
            done[j] = true;
            acc += r.map(|x| x.conj()) * w;
        }
        acc += r * (fz * node.dz);
    }
    Ok(acc / C64::new(0.0, 2.0 * PI))
}

/// `f(A)` by quadrature on the open contour. The spectrum of `A` must lie in
/// the (bi)sector and inside `[r_min, r_max]` by a factor of 10.
pub fn cauchy_fcalc(
    a: &GradedOperator,
    f: &HolomorphicSymbol,
    c: &ContourSpec,
) -> Result<DMatrix<C64>> {
    c.validate_for(&spectrum(a)?)?;
    f.validate(c)?;
    contour_sum(&a.matrix, &c.open_nodes(), |z| f.eval(z))
}

/// `f(A)` for a bounded symbol vanishing at `0` (but not necessarily at `∞`),
/// on the contour truncated at `r_max` and closed by arcs.
pub fn cauchy_fcalc_closed(
    a: &GradedOperator,
    f: impl Fn(C64) -> C64,
    c: &ContourSpec,
) -> Result<DMatrix<C64>> {
    c.validate_for(&spectrum(a)?)?;
    contour_sum(&a.matrix, &c.closed_nodes(c.r_max), f)
}

/// Eigen-oracle value `Σ f(λ) P_λ` of a symbol.
pub fn fcalc_oracle(sd: &SpectralData, f: &HolomorphicSymbol) -> DMatrix<C64> {
    sd.function_complex(|l| f.eval(C64::new(l, 0.0)))
}

/// `‖A − B‖ / ‖B‖` in the mass norm.
pub fn relative_error(a: &DMatrix<C64>, b: &DMatrix<C64>, m: &MetricStructure) -> Result<f64> {
    let num = crate::calculus::mass_norm(&(a - b), m)?;
    let den = crate::calculus::mass_norm(b, m)?;
    Ok(if den > 0.0 { num / den } else { num })
}

/// How to compute `sgn(D)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SignMethod {
    /// `Σ_{λ>0} P_λ − Σ_{λ<0} P_λ`.
    Oracle,
    /// `z (z² + ε²)^{−1/2}` with `ε = eps_factor · λ_min` on the closed
    /// bisector of half-angle `nu`.
    Contour {
        nodes_per_ray: usize,
        eps_factor: f64,
        nu: f64,
    },
}

impl SignMethod {
    pub fn contour() -> Self {
        SignMethod::Contour {
            nodes_per_ray: 128,
            eps_factor: 1e-3,
            nu: DEFAULT_NU,
        }
    }
}

/// Largest accepted regularization bias `ε²/(2 λ_min²)` of the contour sign.
pub const SIGN_BIAS_LIMIT: f64 = 1e-6;

pub fn sign_operator(
    d: &GradedOperator,
    sd: &SpectralData,
    method: SignMethod,
) -> Result<GradedOperator> {
    match method {
        SignMethod::Oracle => spectral_sign(sd, None),
        SignMethod::Contour {
            nodes_per_ray,
            eps_factor,
            nu,
        } => {
            let mags = sd.magnitudes();
            let tol = default_harmonic_tol(&mags);
            let lmin = mags
                .iter()
                .copied()
                .filter(|&x| x > tol)
                .fold(f64::INFINITY, f64::min);
            let lmax = sd.max_magnitude();
            if !lmin.is_finite() {
                return Ok(GradedOperator {
                    matrix: DMatrix::zeros(d.size(), d.size()),
                    layout: d.layout.clone(),
                    shift: crate::calculus::DegreeShift::Mixed,
                });
            }
            let eps = eps_factor * lmin;
            let bias = eps * eps / (2.0 * lmin * lmin);
            if !(eps > 0.0) || bias > SIGN_BIAS_LIMIT {
                return Err(Error::Contour(format!(
                    "regularization ε = {eps:e} too large for the spectral gap {lmin:e} (bias {bias:e})"
                )));
            }
            let c = ContourSpec::new(
                ContourKind::Bisector,
                nu,
                eps / 100.0,
                20.0 * lmax,
                nodes_per_ray,
            )?;
            let m = cauchy_fcalc_closed(d, |z| z / (z * z + eps * eps).sqrt(), &c)?;
            Ok(GradedOperator {
                matrix: m.map(|x| x.re),
                layout: d.layout.clone(),
                shift: crate::calculus::DegreeShift::Mixed,
            })
        }
    }
}

fn serialize_p<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

/// `sup_t ‖t R(it, D)‖_{p→p}` over a grid.
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    #[serde(serialize_with = "serialize_p")]
    pub p: f64,
    pub grid: Vec<f64>,
    /// Upper bounds on the operator norms.
    pub norms: Vec<f64>,
    /// Matching lower bounds (equal to `norms` where exact).
    pub lower: Vec<f64>,
    pub sup: f64,
    pub method: String,
}

fn norm_method(p: f64) -> &'static str {
    if p == 2.0 {
        "mass-exact"
    } else if p == 1.0 || p.is_infinite() {
        "collocated-block-bracket"
    } else {
        "collocated-power-interpolation"
    }
}

/// Log-spaced grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Smallest and largest nonzero spectral magnitudes, `(1, 1)` when the
/// spectrum is all kernel.
pub fn nonzero_range(sd: &SpectralData) -> (f64, f64) {
    let mags = sd.magnitudes();
    let tol = default_harmonic_tol(&mags);
    let lmin = mags
        .iter()
        .copied()
        .filter(|&x| x > tol)
        .fold(f64::INFINITY, f64::min);
    let lmax = sd.max_magnitude();
    if lmin.is_finite() {
        (lmin, lmax)
    } else {
        (1.0, 1.0)
    }
}

/// `t` grid spanning `[λ_min/100, 100·λ_max]`.
pub fn default_t_grid(sd: &SpectralData, count: usize) -> Vec<f64> {
    let (lo, hi) = nonzero_range(sd);
    log_grid(lo / 100.0, hi * 100.0, count)
}

pub fn bisectoriality_sweep(
    d: &GradedOperator,
    m: &MetricStructure,
    p_list: &[f64],
    t_grid: &[f64],
    opts: &OpNormOptions,
) -> Result<Vec<SweepReport>> {
    let mut upper = vec![Vec::with_capacity(t_grid.len()); p_list.len()];
    let mut lower = vec![Vec::with_capacity(t_grid.len()); p_list.len()];
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::Invalid(format!(
                "sweep times must be positive, got {t}"
            )));
        }
        let r = shifted_inverse(&d.matrix, C64::new(0.0, t))?;
        let tr = r.matrix * C64::new(t, 0.0);
        for (i, &p) in p_list.iter().enumerate() {
            let b = opnorm_p(&tr, p, m, opts)?;
            upper[i].push(b.upper);
            lower[i].push(b.lower);
        }
    }
    Ok(p_list
        .iter()
        .zip(upper.into_iter().zip(lower))
        .map(|(&p, (norms, lower))| SweepReport {
            p,
            grid: t_grid.to_vec(),
            sup: norms.iter().copied().fold(0.0, f64::max),
            norms,
            lower,
            method: norm_method(p).into(),
        })
        .collect())
}

/// Empirical `H∞` constant `max_s ‖f_s(D)‖_{p→p} / sup_{∂Σ^bi_ν} |f_s|` for
/// `f_s(z) = s z/(z² + s²)`.
#[derive(Clone, Debug, Serialize)]
pub struct HinfReport {
    #[serde(serialize_with = "serialize_p")]
    pub p: f64,
    pub nu: f64,
    pub grid: Vec<f64>,
    /// Upper bounds on `‖f_s(D)‖_{p→p}`.
    pub norms: Vec<f64>,
    pub symbol_sups: Vec<f64>,
    pub ratios: Vec<f64>,
    pub sup: f64,
    pub method: String,
}

/// Supremum of `|f|` on `∂Σ^bi_ν`, sampled at `4·samples` points log-spaced
/// in `[lo, hi]` on the four rays.
pub fn contour_sup(f: &HolomorphicSymbol, nu: f64, lo: f64, hi: f64, samples: usize) -> f64 {
    let mut best = 0.0f64;
    for r in log_grid(lo, hi, samples) {
        for theta in [nu, -nu, PI - nu, PI + nu] {
            best = best.max(f.eval(C64::from_polar(r, theta)).norm());
        }
    }
    best
}

/// `s` grid spanning `[λ_min/10, 10·λ_max]`.
pub fn default_s_grid(sd: &SpectralData, count: usize) -> Vec<f64> {
    let (lo, hi) = nonzero_range(sd);
    log_grid(lo / 10.0, hi * 10.0, count)
}

/// `f_s(D)` is formed from the eigendecomposition; only its `p`-norm is
/// estimated here.
pub fn hinf_ratio_probe(
    sd: &SpectralData,
    m: &MetricStructure,
    p: f64,
    s_grid: &[f64],
    nu: f64,
    opts: &OpNormOptions,
) -> Result<HinfReport> {
    if !(nu > 0.0 && nu < PI / 2.0) {
        return Err(Error::Contour(format!("half-angle {nu} outside (0, π/2)")));
    }
    let mut norms = Vec::with_capacity(s_grid.len());
    let mut sups = Vec::with_capacity(s_grid.len());
    let mut ratios = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let f = HolomorphicSymbol::bump(s, nu);
        let fd = fcalc_oracle(sd, &f);
        let b = opnorm_p(&fd, p, m, opts)?;
        let sup = contour_sup(&f, nu, s * 1e-3, s * 1e3, 2001);
        norms.push(b.upper);
        sups.push(sup);
        ratios.push(b.upper / sup);
    }
    Ok(HinfReport {
        p,
        nu,
        grid: s_grid.to_vec(),
        sup: ratios.iter().copied().fold(0.0, f64::max),
        norms,
        symbol_sups: sups,
        ratios,
        method: format!("eigen-oracle symbol, {}", norm_method(p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{mass_norm, Calculus};
    use crate::complex::{build_circle, build_icosphere, build_torus2};
    use crate::linalg::to_complex;
    use crate::spectral::{eigensolve_dirac, eigensolve_laplacian, harmonic_projection};

    fn cmax(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    fn setup(n: usize) -> (Calculus, SpectralData) {
        let c = Calculus::new(&build_circle(n).unwrap()).unwrap();
        let sd = eigensolve_dirac(&c).unwrap();
        (c, sd)
    }

    fn bisector_for(sd: &SpectralData, nu: f64, nodes: usize) -> ContourSpec {
        let (lo, hi) = nonzero_range(sd);
        ContourSpec::for_spectrum(ContourKind::Bisector, nu, lo, hi, nodes).unwrap()
    }

    fn scalar_op(l: f64) -> GradedOperator {
        let layout = crate::complex::CochainLayout::new(vec![1]);
        GradedOperator::new(
            DMatrix::from_element(1, 1, l),
            layout,
            crate::calculus::DegreeShift::Preserve,
        )
        .unwrap()
    }

    #[test]
    fn orientation_reproduces_scalar_values() {
        let f = HolomorphicSymbol::rational(1, 0.4);
        for l in [0.7f64, -1.3, 2.0] {
            let c = ContourSpec::for_spectrum(ContourKind::Bisector, 0.4, l.abs(), l.abs(), 128)
                .unwrap();
            let v = cauchy_fcalc(&scalar_op(l), &f, &c).unwrap()[(0, 0)];
            assert!((v - f.eval(C64::new(l, 0.0))).norm() < 1e-12, "{l}: {v}");
        }
        let c = ContourSpec::for_spectrum(ContourKind::Sector, 0.4, 1.5, 1.5, 128).unwrap();
        let v = cauchy_fcalc(&scalar_op(1.5), &f, &c).unwrap()[(0, 0)];
        assert!((v.re - 1.5 / (1.0 + 2.25)).abs() < 1e-12);
        assert!(c.rays() == vec![(-0.4, 1.0), (0.4, -1.0)]);
    }

    #[test]
    fn resolvent_of_zero_and_residuals() {
        let z = C64::new(0.5, -2.0);
        let layout = crate::complex::CochainLayout::new(vec![3]);
        let zero = GradedOperator::new(
            DMatrix::zeros(3, 3),
            layout,
            crate::calculus::DegreeShift::Preserve,
        )
        .unwrap();
        let r = resolvent(&zero, z).unwrap();
        let expect = DMatrix::<C64>::identity(3, 3) / z;
        assert!(cmax(&(r.matrix - expect)) < 1e-15);

        let c = Calculus::new(&build_torus2(4).unwrap()).unwrap();
        let r = resolvent(&c.dirac, C64::new(1.0, 1.0)).unwrap();
        assert!(r.residual < 1e-9);
        let err = resolvent(&c.dirac, C64::new(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::ResolventPole { .. }));
    }

    #[test]
    fn resolvent_identity() {
        let (c, _) = setup(6);
        let (z, w) = (C64::new(0.3, 1.1), C64::new(-2.0, 0.4));
        let rz = resolvent(&c.dirac, z).unwrap().matrix;
        let rw = resolvent(&c.dirac, w).unwrap().matrix;
        let lhs = &rz - &rw;
        let rhs = (&rz * &rw) * (w - z);
        assert!(cmax(&(lhs - rhs)) < 1e-8);
    }

    #[test]
    fn imaginary_axis_resolvent_is_contractive() {
        let (c, sd) = setup(8);
        let grid = default_t_grid(&sd, 15);
        let rep = bisectoriality_sweep(
            &c.dirac,
            &c.metric,
            &[2.0],
            &grid,
            &OpNormOptions::default(),
        )
        .unwrap();
        assert!(rep[0].sup <= 1.0 + 1e-10);
        assert!(rep[0].sup > 0.99);
        assert!(rep[0].grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rational_symbol_matches_oracle_at_64_nodes() {
        let (c, sd) = setup(8);
        let f = HolomorphicSymbol::rational(1, DEFAULT_NU);
        let fa = cauchy_fcalc(&c.dirac, &f, &bisector_for(&sd, DEFAULT_NU, 64)).unwrap();
        let err = relative_error(&fa, &fcalc_oracle(&sd, &f), &c.metric).unwrap();
        assert!(err < 1e-8, "relative error {err:e}");
    }

    #[test]
    fn angle_independence_linearity_and_homomorphism() {
        let (c, sd) = setup(8);
        let f = HolomorphicSymbol::rational(1, 0.6);
        let g = HolomorphicSymbol::rational(2, 0.6);
        let fa = cauchy_fcalc(&c.dirac, &f, &bisector_for(&sd, 0.3, 128)).unwrap();
        let fb = cauchy_fcalc(&c.dirac, &f, &bisector_for(&sd, 0.6, 128)).unwrap();
        assert!(mass_norm(&(&fa - &fb), &c.metric).unwrap() < 1e-8);

        let cs = bisector_for(&sd, 0.6, 128);
        let ga = cauchy_fcalc(&c.dirac, &g, &cs).unwrap();
        let fg = cauchy_fcalc(&c.dirac, &f.product(&g).unwrap(), &cs).unwrap();
        assert!(mass_norm(&(&fg - &fb * &ga), &c.metric).unwrap() < 1e-8);

        let comb = HolomorphicSymbol::combine(2.0, &f, -3.0, &g).unwrap();
        let ca = cauchy_fcalc(&c.dirac, &comb, &cs).unwrap();
        let lin = &fb * C64::new(2.0, 0.0) - &ga * C64::new(3.0, 0.0);
        assert!(cmax(&(ca - lin)) < 1e-10);
    }

    #[test]
    fn quadrature_error_shrinks_with_refinement() {
        let c = Calculus::new(&build_torus2(4).unwrap()).unwrap();
        let sd = eigensolve_dirac(&c).unwrap();
        let f = HolomorphicSymbol::rational(1, 0.3);
        let oracle = fcalc_oracle(&sd, &f);
        let mut prev = f64::INFINITY;
        for nodes in [16, 32, 64, 128] {
            let fa = cauchy_fcalc(&c.dirac, &f, &bisector_for(&sd, 0.3, nodes)).unwrap();
            let err = relative_error(&fa, &oracle, &c.metric).unwrap();
            assert!(
                err <= (0.5 * prev).max(1e-10),
                "{nodes}: {err:e} after {prev:e}"
            );
            prev = err;
        }
    }

    #[test]
    fn log_composite_rule_converges_with_wide_radii() {
        let (c, sd) = setup(8);
        let f = HolomorphicSymbol::rational(2, 0.6);
        let (lo, hi) = nonzero_range(&sd);
        let cs = ContourSpec::new(ContourKind::Bisector, 0.6, lo * 1e-6, hi * 1e6, 640)
            .unwrap()
            .with_rule(RadialRule::LogComposite { panels: 40 })
            .unwrap();
        let fa = cauchy_fcalc(&c.dirac, &f, &cs).unwrap();
        assert!(relative_error(&fa, &fcalc_oracle(&sd, &f), &c.metric).unwrap() < 1e-8);
    }

    #[test]
    fn sector_calculus_of_laplacian() {
        let c = Calculus::new(&build_icosphere(0).unwrap()).unwrap();
        let sd = eigensolve_laplacian(&c).unwrap();
        let (lo, hi) = nonzero_range(&sd);
        let cs = ContourSpec::for_spectrum(ContourKind::Sector, 0.5, lo, hi, 128).unwrap();
        let f = HolomorphicSymbol::rational(1, 0.5);
        let fa = cauchy_fcalc(&c.laplacian(), &f, &cs).unwrap();
        assert!(relative_error(&fa, &fcalc_oracle(&sd, &f), &c.metric).unwrap() < 1e-8);
        // the Dirac spectrum is not inside a single sector
        let d = eigensolve_dirac(&c).unwrap();
        let (lo, hi) = nonzero_range(&d);
        let cs = ContourSpec::for_spectrum(ContourKind::Sector, 0.5, lo, hi, 64).unwrap();
        assert!(matches!(
            cauchy_fcalc(&c.dirac, &f, &cs),
            Err(Error::Contour(_))
        ));
    }

    #[test]
    fn contour_invariants_are_enforced() {
        assert!(ContourSpec::new(ContourKind::Bisector, 0.0, 0.1, 10.0, 64).is_err());
        assert!(ContourSpec::new(ContourKind::Bisector, 1.6, 0.1, 10.0, 64).is_err());
        assert!(ContourSpec::new(ContourKind::Bisector, 0.3, 1.0, 0.5, 64).is_err());
        assert!(ContourSpec::new(ContourKind::Bisector, 0.3, 0.1, 10.0, 4).is_err());
        let (c, sd) = setup(8);
        let (lo, hi) = nonzero_range(&sd);
        let tight = ContourSpec::new(ContourKind::Bisector, 0.3, lo / 2.0, hi * 20.0, 64).unwrap();
        let f = HolomorphicSymbol::rational(1, 0.3);
        assert!(matches!(
            cauchy_fcalc(&c.dirac, &f, &tight),
            Err(Error::Contour(_))
        ));
    }

    #[test]
    fn invalid_certificates_are_rejected() {
        let (c, sd) = setup(8);
        let cs = bisector_for(&sd, 0.3, 64);
        let bad = HolomorphicSymbol::new(
            "z/(1+z^2)",
            |z: C64| z / (z * z + 1.0),
            DecayCertificate::new(0.1, 1.0),
        );
        assert!(matches!(
            cauchy_fcalc(&c.dirac, &bad, &cs),
            Err(Error::DecayCertificate(_))
        ));
        let flat =
            HolomorphicSymbol::new("1", |_| C64::new(1.0, 0.0), DecayCertificate::new(1.0, 0.0));
        assert!(flat.validate(&cs).is_err());
        assert!(HolomorphicSymbol::rational(3, 1.2)
            .validate(&ContourSpec::new(ContourKind::Bisector, 1.2, 0.1, 10.0, 8).unwrap())
            .is_ok());
    }

    #[test]
    fn sign_operator_identities() {
        let (c, sd) = setup(8);
        let p = harmonic_projection(&sd, None).unwrap();
        let s = sign_operator(&c.dirac, &sd, SignMethod::Oracle).unwrap();
        let n = s.size();
        let id = DMatrix::<f64>::identity(n, n);
        assert!((&s.matrix * &s.matrix + &p.matrix - &id).amax() < 1e-9);
        let abs = sd.function(f64::abs);
        assert!((&s.matrix * abs - &c.dirac.matrix).amax() < 1e-9 * sd.max_magnitude());
        let sc = sign_operator(&c.dirac, &sd, SignMethod::contour()).unwrap();
        let diff = mass_norm(&to_complex(&(&sc.matrix - &s.matrix)), &c.metric).unwrap();
        assert!(diff < 1e-6, "contour vs oracle {diff:e}");
        // anticommutes with the degree parity
        let layout = c.layout();
        let gamma = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| {
            if layout.degree_of(i) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }));
        assert!((&gamma * &s.matrix + &s.matrix * &gamma).amax() < 1e-9);
    }

    #[test]
    fn sign_contour_rejects_large_regularization() {
        let (c, sd) = setup(8);
        let m = SignMethod::Contour {
            nodes_per_ray: 64,
            eps_factor: 0.1,
            nu: 0.5,
        };
        assert!(matches!(
            sign_operator(&c.dirac, &sd, m),
            Err(Error::Contour(_))
        ));
    }

    #[test]
    fn piecewise_constant_symbol_reproduces_sign() {
        let (c, sd) = setup(8);
        let (lo, hi) = nonzero_range(&sd);
        let cs = ContourSpec::new(ContourKind::Bisector, 0.5, lo / 20.0, hi * 20.0, 64).unwrap();
        let f = cauchy_fcalc_closed(&c.dirac, |z| C64::new(z.re.signum(), 0.0), &cs).unwrap();
        let s = sign_operator(&c.dirac, &sd, SignMethod::Oracle).unwrap();
        let err = mass_norm(&(f - to_complex(&s.matrix)), &c.metric).unwrap();
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn hinf_probe_is_contractive_at_p2() {
        let (c, sd) = setup(8);
        let grid = default_s_grid(&sd, 7);
        let rep =
            hinf_ratio_probe(&sd, &c.metric, 2.0, &grid, 0.5, &OpNormOptions::default()).unwrap();
        assert!(rep.sup <= 1.0 + 1e-9);
        for s in &rep.symbol_sups {
            assert!((s - 1.0 / (2.0 * 0.5f64.cos())).abs() < 1e-6);
        }
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["p", "grid", "norms", "sup", "method"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn sweep_reports_finite_sups_for_other_exponents() {
        let (c, sd) = setup(8);
        let grid = default_t_grid(&sd, 7);
        let reps = bisectoriality_sweep(
            &c.dirac,
            &c.metric,
            &[1.0, 4.0, f64::INFINITY],
            &grid,
            &OpNormOptions::default(),
        )
        .unwrap();
        for r in &reps {
            assert!(r.sup.is_finite() && r.sup > 0.0, "{r:?}");
            assert!(r
                .lower
                .iter()
                .zip(&r.norms)
                .all(|(l, u)| l <= &(u * (1.0 + 1e-9))));
        }
        let json = serde_json::to_string(&reps[2]).unwrap();
        assert!(json.contains("\"p\":\"inf\""));
    }

    #[test]
    fn contour_spec_round_trips_through_json() {
        let cs = ContourSpec::new(ContourKind::Sector, 0.4, 0.01, 100.0, 32)
            .unwrap()
            .with_rule(RadialRule::LogComposite { panels: 4 })
            .unwrap();
        let back: ContourSpec = serde_json::from_str(&serde_json::to_string(&cs).unwrap()).unwrap();
        assert_eq!(cs, back);
    }
}
