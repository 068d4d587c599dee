//! Fitting and evaluating the regularized density ratio.
//!
//! Write `T = S*S` for the empirical covariance operator on the RKHS,
//! `T f = (1/n) Σ_i f(x_i) K(·, x_i)`, and `f_q = (1/m) Σ_j K(·, x'_j)` for
//! the empirical mean embedding of the q-sample. The iterated Lavrentiev
//! estimate is the `k`-th term of
//!
//! ```text
//! β_0 = 0,    (λI + T) β_l = f_q + λ β_{l-1}.
//! ```
//!
//! Evaluating at the p-sample gives the `n × n` recursion
//! `(nλI + K) v_l = F̄ + nλ v_{l-1}` with `v_l = (β_l(x_i))_i`.
//!
//! To evaluate off-sample we keep `β_l` in representer form
//! `β_l = Σ_i α_i K(·, x_i) + μ f_q`. Rearranging the recursion,
//!
//! ```text
//! β_l = (1/λ) f_q + β_{l-1} − (1/(nλ)) Σ_i v_l[i] K(·, x_i),
//! ```
//!
//! so each step adds `1/λ` to `μ` and subtracts `v_l / (nλ)` from `α`.
//! After `k` steps `μ = k/λ`.
//!
//! The spectral path handles any filter. Since `T` vanishes on the
//! orthogonal complement of `span{K(·, x_i)}`,
//!
//! ```text
//! g(T) f_q = g(0) f_q + h(T) T f_q,     h(t) = (g(t) − g(0)) / t,
//! ```
//!
//! and `T f_q = S*(F̄/n)`. Using `h(S*S) S* = S* h(SS*)` with `SS* = K/n`
//! on the p-sample, the representer coefficients are
//! `α = (1/n) h(K/n) F̄/n` and `μ = g(0)`, and the sample values are
//! `g(K/n) F̄/n`. No pseudo-inverse of `K` is needed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GramSystem, KernelSpec, SampleSet};
use crate::regularization::{RegScheme, SchemeKind};

/// Fitted estimate `β_X^λ` in representer form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioModel {
    pub kernel: KernelSpec,
    pub scheme: RegScheme,
    pub xp_points: Vec<Vec<f64>>,
    pub xq_points: Vec<Vec<f64>>,
    /// Coefficients on `K(·, x_i)`.
    pub alpha: Vec<f64>,
    /// Coefficient on the q-sample mean embedding.
    pub mu_coeff: f64,
    pub values_at_xp: Vec<f64>,
}

fn check_inputs(gram: &GramSystem, xp: &SampleSet, xq: &SampleSet) -> Result<()> {
    if gram.n != xp.len() || gram.m != xq.len() {
        return Err(Error::Input(format!(
            "gram system is {}x{} but samples have n = {}, m = {}",
            gram.n,
            gram.m,
            xp.len(),
            xq.len()
        )));
    }
    if xp.dim() != xq.dim() {
        return Err(Error::DimensionMismatch {
            expected: xp.dim(),
            got: xq.dim(),
        });
    }
    Ok(())
}

/// Cholesky factor of `nλI + K`.
pub(crate) fn shifted_cholesky(
    k_matrix: &DMatrix<f64>,
    shift: f64,
    lambda: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let n = k_matrix.nrows();
    let mut a = k_matrix.clone();
    for i in 0..n {
        a[(i, i)] += shift;
    }
    match Cholesky::new(a.clone()) {
        Some(c) => Ok(c),
        None => {
            let min_ev = a
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            Err(Error::numerical(
                lambda,
                format!("shifted Gram matrix is not positive definite (smallest eigenvalue estimate {min_ev:e})"),
            ))
        }
    }
}

fn ensure_finite(values: &[f64], lambda: f64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(
            lambda,
            "non-finite values in the estimate",
        ))
    }
}

/// Run `k` steps of the iterated Lavrentiev recursion with one factorization.
pub fn fit_iterated_lavrentiev(
    gram: &GramSystem,
    xp: &SampleSet,
    xq: &SampleSet,
    kernel: &KernelSpec,
    lambda: f64,
    k: u32,
) -> Result<RatioModel> {
    let scheme = RegScheme::iterated_lavrentiev(k, lambda)?;
    check_inputs(gram, xp, xq)?;
    let n = gram.n;
    let n_lambda = n as f64 * lambda;
    let chol = shifted_cholesky(&gram.k_matrix, n_lambda, lambda)?;

    let mut values = DVector::<f64>::zeros(n);
    let mut alpha = DVector::<f64>::zeros(n);
    for _ in 0..k {
        let rhs = &gram.f_bar + &values * n_lambda;
        values = chol.solve(&rhs);
        alpha -= &values / n_lambda;
    }
    let values_at_xp: Vec<f64> = values.iter().copied().collect();
    let alpha: Vec<f64> = alpha.iter().copied().collect();
    ensure_finite(&values_at_xp, lambda)?;
    ensure_finite(&alpha, lambda)?;

    Ok(RatioModel {
        kernel: kernel.clone(),
        scheme,
        xp_points: xp.points.clone(),
        xq_points: xq.points.clone(),
        alpha,
        mu_coeff: k as f64 / lambda,
        values_at_xp,
    })
}

/// Eigendecomposition of `K/n`, reusable across schemes for one sample.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigen: SymmetricEigen<f64, Dyn>,
    /// `Uᵀ F̄/n`
    rhs_coords: DVector<f64>,
    n: usize,
}

impl SpectralBasis {
    pub fn new(gram: &GramSystem) -> Result<Self> {
        let n = gram.n;
        let scaled = &gram.k_matrix / n as f64;
        let eigen = SymmetricEigen::try_new(scaled, f64::EPSILON, 0).ok_or_else(|| {
            Error::numerical(f64::NAN, "symmetric eigendecomposition did not converge")
        })?;
        let rhs_coords = eigen.eigenvectors.transpose() * (&gram.f_bar / n as f64);
        Ok(Self {
            eigen,
            rhs_coords,
            n,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen.eigenvalues
    }

    /// Sample values and representer coefficients for `scheme`.
    fn apply(&self, scheme: &RegScheme) -> (Vec<f64>, Vec<f64>, f64) {
        let t = &self.eigen.eigenvalues;
        let u = &self.eigen.eigenvectors;
        let gv = DVector::from_iterator(
            self.n,
            t.iter()
                .zip(self.rhs_coords.iter())
                .map(|(&ti, &c)| scheme.filter_value(ti) * c),
        );
        let hv = DVector::from_iterator(
            self.n,
            t.iter()
                .zip(self.rhs_coords.iter())
                .map(|(&ti, &c)| scheme.filter_slope(ti) * c),
        );
        let values = u * gv;
        let alpha = (u * hv) / self.n as f64;
        (
            values.iter().copied().collect(),
            alpha.iter().copied().collect(),
            scheme.filter_value(0.0),
        )
    }
}

/// Fit any supported scheme through the eigendecomposition of `K/n`.
pub fn fit_spectral(
    gram: &GramSystem,
    xp: &SampleSet,
    xq: &SampleSet,
    kernel: &KernelSpec,
    scheme: &RegScheme,
) -> Result<RatioModel> {
    check_inputs(gram, xp, xq)?;
    let basis = SpectralBasis::new(gram)?;
    fit_spectral_with(&basis, xp, xq, kernel, scheme)
}

/// As [`fit_spectral`], reusing a precomputed basis.
pub fn fit_spectral_with(
    basis: &SpectralBasis,
    xp: &SampleSet,
    xq: &SampleSet,
    kernel: &KernelSpec,
    scheme: &RegScheme,
) -> Result<RatioModel> {
    if basis.n != xp.len() {
        return Err(Error::Input(
            "spectral basis does not match the p-sample".into(),
        ));
    }
    let (values_at_xp, alpha, mu_coeff) = basis.apply(scheme);
    ensure_finite(&values_at_xp, scheme.lambda())?;
    ensure_finite(&alpha, scheme.lambda())?;
    Ok(RatioModel {
        kernel: kernel.clone(),
        scheme: *scheme,
        xp_points: xp.points.clone(),
        xq_points: xq.points.clone(),
        alpha,
        mu_coeff,
        values_at_xp,
    })
}

/// Fit with whichever path is authoritative for the scheme.
pub fn fit(
    gram: &GramSystem,
    xp: &SampleSet,
    xq: &SampleSet,
    kernel: &KernelSpec,
    scheme: &RegScheme,
) -> Result<RatioModel> {
    match scheme.kind() {
        SchemeKind::Lavrentiev => fit_iterated_lavrentiev(gram, xp, xq, kernel, scheme.lambda(), 1),
        SchemeKind::IteratedLavrentiev(k) => {
            fit_iterated_lavrentiev(gram, xp, xq, kernel, scheme.lambda(), k)
        }
        SchemeKind::SpectralCutoff => fit_spectral(gram, xp, xq, kernel, scheme),
    }
}

impl RatioModel {
    pub fn n(&self) -> usize {
        self.xp_points.len()
    }

    pub fn m(&self) -> usize {
        self.xq_points.len()
    }

    pub fn dim(&self) -> usize {
        self.xp_points.first().map_or(0, Vec::len)
    }

    /// `(1/m) Σ_j k(x, x'_j)`
    pub fn mean_embedding(&self, x: &[f64]) -> f64 {
        self.xq_points
            .iter()
            .map(|y| self.kernel.value(x, y))
            .sum::<f64>()
            / self.m() as f64
    }

    /// Evaluate `β_X^λ(x)` at an arbitrary point.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let sections: f64 = self
            .alpha
            .iter()
            .zip(&self.xp_points)
            .map(|(a, xi)| a * self.kernel.value(x, xi))
            .sum();
        let embedding = if self.mu_coeff == 0.0 {
            0.0
        } else {
            self.mu_coeff * self.mean_embedding(x)
        };
        Ok(sections + embedding)
    }

    pub fn evaluate_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: RatioModel = serde_json::from_str(s)?;
        if model.alpha.len() != model.xp_points.len()
            || model.values_at_xp.len() != model.xp_points.len()
        {
            return Err(Error::Parse(
                "model coefficient lengths do not match the p-sample".into(),
            ));
        }
        if model.xq_points.is_empty() || model.xp_points.is_empty() {
            return Err(Error::Parse("model has an empty sample".into()));
        }
        Ok(model)
    }
}
