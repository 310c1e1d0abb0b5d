//! Fibered `Lᵖ` norms `‖ω‖_p = (Σ_x w_x |S ω|_x^p)^{1/p}` and operator-norm
//! bounds for them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{norm2_complex, to_complex};
use crate::{Error, Result, C64};

/// A partition of coefficient indices into fibers with fiber weights and a
/// per-coefficient scaling.
#[derive(Clone, Debug)]
pub struct FiberedNorm {
    fibers: Vec<Vec<usize>>,
    scale: Vec<f64>,
    weights: Vec<f64>,
}

impl FiberedNorm {
    pub fn new(fibers: Vec<Vec<usize>>, scale: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if fibers.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: fibers.len(),
                got: weights.len(),
            });
        }
        let mut seen = vec![false; scale.len()];
        for &i in fibers.iter().flatten() {
            if i >= seen.len() || seen[i] {
                return Err(Error::Invalid("fibers must partition the indices".into()));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Invalid("fibers must partition the indices".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Invalid("weights and scales must be positive".into()));
        }
        Ok(Self {
            fibers,
            scale,
            weights,
        })
    }

    /// Plain `ℓᵖ` on `n` scalar coefficients with unit weights.
    pub fn scalar(n: usize) -> Self {
        Self::weighted_scalar(vec![1.0; n])
    }

    /// Weighted `ℓᵖ` on scalar coefficients.
    pub fn weighted_scalar(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self::new((0..n).map(|i| vec![i]).collect(), vec![1.0; n], weights)
            .expect("valid scalar norm")
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn fibers(&self) -> &[Vec<usize>] {
        &self.fibers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Euclidean norm of each scaled fiber.
    pub fn fiber_norms(&self, v: &[C64]) -> Vec<f64> {
        self.fibers
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&i| (v[i] * self.scale[i]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn norm(&self, v: &[C64], p: f64) -> Result<f64> {
        check_p(p)?;
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        let fn_ = self.fiber_norms(v);
        Ok(if p.is_infinite() {
            fn_.iter().fold(0.0, |m: f64, x| m.max(*x))
        } else {
            fn_.iter()
                .zip(&self.weights)
                .map(|(x, w)| w * x.powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        })
    }

    pub fn norm_real(&self, v: &[f64], p: f64) -> Result<f64> {
        let c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.norm(&c, p)
    }

    /// Matrix `B = W^{1/p} S T S⁻¹ W^{-1/p}` whose mixed `ℓᵖ(ℓ²)` norm equals
    /// the fibered `p`-norm of `T`, with rows and columns grouped by fiber.
    fn normalized(&self, t: &DMatrix<C64>, p: f64) -> (DMatrix<C64>, Vec<std::ops::Range<usize>>) {
        let order: Vec<usize> = self.fibers.iter().flatten().copied().collect();
        let mut ranges = Vec::with_capacity(self.fibers.len());
        let mut factor = Vec::with_capacity(order.len());
        let mut start = 0;
        for (f, w) in self.fibers.iter().zip(&self.weights) {
            let wp = if p.is_infinite() {
                1.0
            } else {
                w.powf(1.0 / p)
            };
            for &i in f {
                factor.push(wp * self.scale[i]);
            }
            ranges.push(start..start + f.len());
            start += f.len();
        }
        let b = DMatrix::from_fn(order.len(), order.len(), |r, c| {
            t[(order[r], order[c])] * (factor[r] / factor[c])
        });
        (b, ranges)
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Invalid(format!("p must lie in [1, ∞], got {p}")));
    }
    Ok(())
}

/// Bracket on an operator norm.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct NormBounds {
    pub lower: f64,
    pub upper: f64,
    /// Lower and upper bounds agree to the iteration tolerance.
    pub exact: bool,
    /// The lower-bound iteration met its tolerance within the iteration cap.
    pub converged: bool,
}

impl NormBounds {
    fn exact(v: f64) -> Self {
        Self {
            lower: v,
            upper: v,
            exact: true,
            converged: true,
        }
    }

    /// Midpoint of the bracket.
    pub fn estimate(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Controls for the power-iteration lower bounds.
#[derive(Clone, Copy, Debug)]
pub struct OpNormOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for OpNormOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            tol: 1e-8,
            max_iter: 500,
            seed: 0,
        }
    }
}

fn mixed_norm(x: &DVector<C64>, ranges: &[std::ops::Range<usize>], p: f64) -> f64 {
    let fib = ranges.iter().map(|r| {
        x.rows(r.start, r.len())
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    });
    if p.is_infinite() {
        fib.fold(0.0, f64::max)
    } else {
        fib.map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Dual vector of `x` in mixed `ℓᵖ(ℓ²)`: unit `q`-norm and `⟨x, y⟩ = ‖x‖_p`.
fn dual(x: &DVector<C64>, ranges: &[std::ops::Range<usize>], p: f64) -> DVector<C64> {
    let nx = mixed_norm(x, ranges, p);
    let mut y = DVector::zeros(x.len());
    if nx == 0.0 {
        return y;
    }
    for r in ranges {
        let f = x.rows(r.start, r.len());
        let fnorm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if fnorm == 0.0 {
            continue;
        }
        let c = (fnorm / nx).powf(p - 1.0) / fnorm;
        y.rows_mut(r.start, r.len())
            .copy_from(&(f * C64::new(c, 0.0)));
    }
    y
}

fn normalize(x: DVector<C64>, ranges: &[std::ops::Range<usize>], p: f64) -> DVector<C64> {
    let n = mixed_norm(&x, ranges, p);
    if n > 0.0 {
        x / C64::new(n, 0.0)
    } else {
        x
    }
}

/// Boyd's power method for the mixed `ℓᵖ(ℓ²)` norm, `1 < p < ∞`.
fn boyd_lower(
    b: &DMatrix<C64>,
    ranges: &[std::ops::Range<usize>],
    p: f64,
    opts: &OpNormOptions,
) -> (f64, bool) {
    let q = p / (p - 1.0);
    let bh = b.adjoint();
    let n = b.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = 0.0f64;
    let mut all_converged = true;
    for restart in 0..opts.restarts.max(1) {
        let start = if restart == 0 {
            DVector::from_element(n, C64::new(1.0, 0.0))
        } else {
            DVector::from_fn(n, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            })
        };
        let mut x = normalize(start, ranges, p);
        let mut est = 0.0;
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let y = b * &x;
            est = mixed_norm(&y, ranges, p);
            if est == 0.0 {
                converged = true;
                break;
            }
            let z = &bh * dual(&y, ranges, p);
            let zq = mixed_norm(&z, ranges, q);
            let zx = z.dotc(&x).re;
            if zq <= zx * (1.0 + opts.tol) {
                converged = true;
                break;
            }
            x = dual(&z, ranges, q);
        }
        all_converged &= converged;
        best = best.max(est);
    }
    (best, all_converged)
}

/// Mixed `ℓ¹(ℓ²)` norm of `b`: upper bound `max_x Σ_y ‖B_yx‖₂`, lower bound by
/// maximizing `Σ_y |B_yx u|` over unit `u` in each source fiber.
fn one_norm_bounds(
    b: &DMatrix<C64>,
    ranges: &[std::ops::Range<usize>],
    opts: &OpNormOptions,
) -> NormBounds {
    let mut upper = 0.0f64;
    let mut lower = 0.0f64;
    let mut converged = true;
    for src in ranges {
        let cols = b.columns(src.start, src.len());
        let blocks: Vec<DMatrix<C64>> = ranges
            .iter()
            .map(|dst| cols.rows(dst.start, dst.len()).into_owned())
            .filter(|blk| blk.iter().any(|z| z.norm_sqr() > 0.0))
            .collect();
        upper = upper.max(blocks.iter().map(norm2_complex).sum());
        let objective = |u: &DVector<C64>| blocks.iter().map(|blk| (blk * u).norm()).sum::<f64>();
        // starts: right singular vectors of every block, then fixed-point ascent
        let mut starts: Vec<DVector<C64>> = Vec::new();
        for blk in &blocks {
            let svd = blk.clone().svd(false, true);
            if let Some(vt) = svd.v_t {
                let i = svd.singular_values.imax();
                starts.push(vt.row(i).adjoint());
            }
        }
        if starts.is_empty() {
            continue;
        }
        for mut u in starts {
            let mut val = objective(&u);
            let mut ok = false;
            for _ in 0..opts.max_iter {
                let mut g = DVector::zeros(u.len());
                for blk in &blocks {
                    let y = blk * &u;
                    let ny = y.norm();
                    if ny > 0.0 {
                        g += blk.adjoint() * (y / C64::new(ny, 0.0));
                    }
                }
                let ng = g.norm();
                if ng == 0.0 {
                    ok = true;
                    break;
                }
                let next = g / C64::new(ng, 0.0);
                let nv = objective(&next);
                if nv <= val * (1.0 + opts.tol) {
                    val = val.max(nv);
                    ok = true;
                    break;
                }
                u = next;
                val = nv;
            }
            converged &= ok;
            lower = lower.max(val);
        }
    }
    let lower = lower.min(upper);
    NormBounds {
        lower,
        upper,
        exact: upper - lower <= opts.tol.max(1e-12) * upper.max(1e-300),
        converged,
    }
}

/// Operator-norm bounds of `t` on `(ℂⁿ, ‖·‖_p)` for a fibered norm.
///
/// * `p = 2`: exact spectral norm of the weighted operator.
/// * `p ∈ {1, ∞}`: column/row sums of fiber block norms, exact for scalar
///   fibers; otherwise a bracket with a local-ascent lower bound.
/// * `1 < p < ∞`: lower bound by Boyd's power method, upper bound by
///   Riesz–Thorin interpolation between the `p = 2` value and the `p = 1` or
///   `p = ∞` upper bound.
pub fn opnorm_fibered(
    t: &DMatrix<C64>,
    norm: &FiberedNorm,
    p: f64,
    opts: &OpNormOptions,
) -> Result<NormBounds> {
    check_p(p)?;
    if t.nrows() != norm.len() || t.ncols() != norm.len() {
        return Err(Error::DimensionMismatch {
            expected: norm.len(),
            got: t.nrows(),
        });
    }
    if p == 2.0 {
        let (b, _) = norm.normalized(t, 2.0);
        return Ok(NormBounds::exact(norm2_complex(&b)));
    }
    if p == 1.0 {
        let (b, ranges) = norm.normalized(t, 1.0);
        return Ok(one_norm_bounds(&b, &ranges, opts));
    }
    if p.is_infinite() {
        let (b, ranges) = norm.normalized(t, f64::INFINITY);
        return Ok(one_norm_bounds(&b.adjoint(), &ranges, opts));
    }
    let (b, ranges) = norm.normalized(t, p);
    let (lower, converged) = boyd_lower(&b, &ranges, p, opts);
    let two = norm2_complex(&norm.normalized(t, 2.0).0);
    // 1/p = θ/p₀ + (1−θ)/2 with p₀ = 1 or ∞
    let upper = if p < 2.0 {
        let theta = 2.0 / p - 1.0;
        let one = opnorm_fibered(t, norm, 1.0, opts)?.upper;
        one.powf(theta) * two.powf(1.0 - theta)
    } else {
        let theta = 1.0 - 2.0 / p;
        let inf = opnorm_fibered(t, norm, f64::INFINITY, opts)?.upper;
        inf.powf(theta) * two.powf(1.0 - theta)
    };
    let upper = upper.max(lower);
    Ok(NormBounds {
        lower,
        upper,
        exact: upper - lower <= 1e-8 * upper.max(1e-300),
        converged,
    })
}

/// Real-matrix convenience wrapper around [`opnorm_fibered`].
pub fn opnorm_fibered_real(
    t: &DMatrix<f64>,
    norm: &FiberedNorm,
    p: f64,
    opts: &OpNormOptions,
) -> Result<NormBounds> {
    opnorm_fibered(&to_complex(t), norm, p, opts)
}
