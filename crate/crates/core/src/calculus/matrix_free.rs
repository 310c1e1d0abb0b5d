//! Sparse, factorization-free application of `d`, `d*` and `D` for meshes
//! too large for dense matrices.

use nalgebra::{DMatrix, DVector};

use super::{assemble_mass, sparse_d, MetricStructure};
use crate::complex::SimplicialComplex;
use crate::linalg::Csr;
use crate::{Error, Result};

pub struct SparseDirac {
    d: Vec<Csr<f64>>,
    dt: Vec<Csr<f64>>,
    metric: MetricStructure,
}

impl SparseDirac {
    pub fn new(cx: &SimplicialComplex) -> Result<Self> {
        let d = sparse_d(cx);
        let dt = d.iter().map(Csr::transpose).collect();
        Ok(Self {
            d,
            dt,
            metric: assemble_mass(cx)?,
        })
    }

    pub fn metric(&self) -> &MetricStructure {
        &self.metric
    }

    pub fn size(&self) -> usize {
        self.metric.layout().total()
    }

    fn block<'a>(&self, x: &'a DVector<f64>, k: usize) -> &'a [f64] {
        &x.as_slice()[self.metric.layout().range(k)]
    }

    fn put(&self, out: &mut DVector<f64>, k: usize, v: &[f64]) {
        let r = self.metric.layout().range(k);
        for (o, a) in out.as_mut_slice()[r].iter_mut().zip(v) {
            *o += a;
        }
    }

    pub fn apply_d(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (k, dk) in self.d.iter().enumerate() {
            self.put(&mut out, k + 1, &dk.matvec(self.block(x, k)));
        }
        out
    }

    pub fn apply_dstar(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (k, dtk) in self.dt.iter().enumerate() {
            let mx = self.metric.mass(k + 1).matvec(self.block(x, k + 1));
            let rhs = DVector::from_vec(dtk.matvec(&mx));
            let y = self.metric.solve_iterative(k, &rhs);
            self.put(&mut out, k, y.as_slice());
        }
        out
    }

    pub fn apply_dirac(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_d(x) + self.apply_dstar(x)
    }

    /// `Dᵀ = dᵀ + M d M⁻¹`.
    pub fn apply_dirac_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (k, dtk) in self.dt.iter().enumerate() {
            self.put(&mut out, k, &dtk.matvec(self.block(x, k + 1)));
            let y = self
                .metric
                .solve_iterative(k, &DVector::from_row_slice(self.block(x, k)));
            let dy = self.d[k].matvec(y.as_slice());
            self.put(&mut out, k + 1, &self.metric.mass(k + 1).matvec(&dy));
        }
        out
    }

    pub fn solve_mass(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for k in 0..=self.metric.dim() {
            let y = self
                .metric
                .solve_iterative(k, &DVector::from_row_slice(self.block(x, k)));
            self.put(&mut out, k, y.as_slice());
        }
        out
    }
}

/// Mass-norm of `[D, M_f]` by Lanczos on `C*C` in the mass inner product,
/// where `M_f` is the vertex-average lift of `f` (given per stacked index).
pub fn commutator_norm_lanczos(op: &SparseDirac, lift: &[f64], steps: usize) -> Result<f64> {
    let n = op.size();
    if lift.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lift.len(),
        });
    }
    let mf = DVector::from_row_slice(lift);
    let apply_c = |x: &DVector<f64>| -> DVector<f64> {
        op.apply_dirac(&x.component_mul(&mf)) - op.apply_dirac(x).component_mul(&mf)
    };
    // C* = M⁻¹ Cᵀ M with Cᵀ = M_f Dᵀ − Dᵀ M_f
    let apply_cstar = |y: &DVector<f64>| -> DVector<f64> {
        let my = op.metric.apply(y);
        let ct = op.apply_dirac_transpose(&my).component_mul(&mf)
            - op.apply_dirac_transpose(&my.component_mul(&mf));
        op.solve_mass(&ct)
    };
    let inner = |a: &DVector<f64>, b: &DVector<f64>| op.metric.inner(a, b);

    let steps = steps.min(n).max(1);
    // deterministic start with support in every degree
    let mut q = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    q /= inner(&q, &q).sqrt();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = apply_cstar(&apply_c(&basis[j]));
        alpha.push(inner(&w, &basis[j]));
        // full reorthogonalization, twice
        for _ in 0..2 {
            for b in &basis {
                let c = inner(&w, b);
                w.axpy(-c, b, 1.0);
            }
        }
        let nb = inner(&w, &w).max(0.0).sqrt();
        if nb < 1e-12 * alpha[j].abs().max(1e-300) || j + 1 == steps {
            break;
        }
        beta.push(nb);
        basis.push(w / nb);
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    Ok(t.symmetric_eigen().eigenvalues.max().max(0.0).sqrt())
}
