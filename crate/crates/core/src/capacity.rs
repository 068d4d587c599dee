//! Empirical capacity of the RKHS under the p-sample.
//!
//! All quantities replace the population operator by `T = S*S`, whose
//! non-zero spectrum is that of `K/n`. The regularized Christoffel function
//! is `C_λ(x) = ⟨K_x, (λI + T)^{-1} K_x⟩`; by the push-through identity
//!
//! ```text
//! C_λ(x) = (1/λ) (k(x,x) − k_xᵀ (nλI + K)^{-1} k_x),   k_x = (k(x_i, x))_i.
//! ```
//!
//! Its sample mean is the effective dimension `N(λ) = tr((λI + K/n)^{-1} K/n)`.

use nalgebra::{Cholesky, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::shifted_cholesky;
use crate::kernel::{GramSystem, KernelSpec, SampleSet};

/// Evaluates `C_λ` at many points with one factorization.
pub struct Christoffel<'a> {
    chol: Cholesky<f64, Dyn>,
    kernel: &'a KernelSpec,
    xp: &'a SampleSet,
    lambda: f64,
}

impl<'a> Christoffel<'a> {
    pub fn new(
        gram: &GramSystem,
        kernel: &'a KernelSpec,
        xp: &'a SampleSet,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("must be positive, got {lambda}"),
            ));
        }
        if gram.n != xp.len() {
            return Err(Error::Input(
                "gram system does not match the p-sample".into(),
            ));
        }
        let chol = shifted_cholesky(&gram.k_matrix, gram.n as f64 * lambda, lambda)?;
        Ok(Self {
            chol,
            kernel,
            xp,
            lambda,
        })
    }

    pub fn at(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.xp.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.xp.dim(),
                got: x.len(),
            });
        }
        let kx = DVector::from_iterator(
            self.xp.len(),
            self.xp.points.iter().map(|xi| self.kernel.value(xi, x)),
        );
        let h = self.chol.solve(&kx);
        let c = (self.kernel.value(x, x) - kx.dot(&h)) / self.lambda;
        if !c.is_finite() {
            return Err(Error::numerical(
                self.lambda,
                "non-finite Christoffel value",
            ));
        }
        // clamp rounding noise
        Ok(c.max(0.0))
    }
}

/// Regularized Christoffel function `C_λ(x)` under the empirical operator.
pub fn christoffel(
    gram: &GramSystem,
    kernel: &KernelSpec,
    xp: &SampleSet,
    lambda: f64,
    x: &[f64],
) -> Result<f64> {
    Christoffel::new(gram, kernel, xp, lambda)?.at(x)
}

/// `Σ t_i / (λ + t_i)` over a spectrum; negative rounding noise is clamped to zero.
pub fn effective_dimension_from_eigenvalues(eigenvalues: &[f64], lambda: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|&t| {
            let t = t.max(0.0);
            t / (lambda + t)
        })
        .sum()
}

/// Empirical effective dimension `N(λ)`.
pub fn effective_dimension(gram: &GramSystem, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(
            "lambda",
            format!("must be positive, got {lambda}"),
        ));
    }
    Ok(effective_dimension_from_eigenvalues(
        &gram.scaled_eigenvalues(),
        lambda,
    ))
}

/// Lower estimate of `N_∞(λ) = sup_x C_λ(x)`: the maximum over `probes ∪ X_p`.
pub fn n_inf_estimate(
    gram: &GramSystem,
    kernel: &KernelSpec,
    xp: &SampleSet,
    lambda: f64,
    probes: &[Vec<f64>],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Input("probe set is empty".into()));
    }
    let c = Christoffel::new(gram, kernel, xp, lambda)?;
    let mut best = 0.0f64;
    for x in probes.iter().chain(&xp.points) {
        best = best.max(c.at(x)?);
    }
    Ok(best)
}

/// Uniform grid over the bounding box of `xp` inflated by 20% per axis
/// (10% on each side), with `per_axis` points along each axis.
pub fn default_probe_grid(xp: &SampleSet, per_axis: usize) -> Vec<Vec<f64>> {
    let d = xp.dim();
    let per_axis = per_axis.max(2);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in &xp.points {
        for (a, &v) in p.iter().enumerate() {
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let pad = 0.1 * (hi[a] - lo[a]).max(1e-12);
            let (l, h) = (lo[a] - pad, hi[a] + pad);
            (0..per_axis)
                .map(|i| l + (h - l) * i as f64 / (per_axis - 1) as f64)
                .collect()
        })
        .collect();
    let mut out = vec![Vec::with_capacity(d)];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Default probe density: about 1000 grid points in total, at least 2 per axis.
pub fn default_points_per_axis(dim: usize) -> usize {
    ((1000f64).powf(1.0 / dim.max(1) as f64) + 1e-9)
        .floor()
        .max(2.0) as usize
}

/// Default bracket for the balance point: `(1e-8, max_i K_ii)`, i.e. up to κ_0².
pub fn default_lambda_star_bracket(gram: &GramSystem) -> (f64, f64) {
    let kappa_sq = gram.k_matrix.diagonal().iter().cloned().fold(0.0, f64::max);
    (1e-8, kappa_sq)
}

/// Solve `N(λ)/λ = n` by bisection on the decreasing map `λ ↦ N(λ)/λ`.
pub fn find_lambda_star(gram: &GramSystem, bracket: (f64, f64)) -> Result<f64> {
    lambda_star_from_eigenvalues(&gram.scaled_eigenvalues(), gram.n, bracket)
}

pub fn lambda_star_from_eigenvalues(
    eigenvalues: &[f64],
    n: usize,
    bracket: (f64, f64),
) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::param(
            "bracket",
            format!("need 0 < lo < hi, got ({lo}, {hi})"),
        ));
    }
    let target = n as f64;
    let ratio = |l: f64| effective_dimension_from_eigenvalues(eigenvalues, l) / l;
    let (r_lo, r_hi) = (ratio(lo), ratio(hi));
    if !(r_lo > target && target > r_hi) {
        return Err(Error::Input(format!(
            "lambda_star not bracketed: N(lo)/lo = {r_lo:e} at lo = {lo:e}, N(hi)/hi = {r_hi:e} at hi = {hi:e}, target n = {n}"
        )));
    }
    // geometric bisection; the bracket can span many decades
    for _ in 0..200 {
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityProfile {
    pub lambdas: Vec<f64>,
    pub n_eff: Vec<f64>,
    pub n_inf: Vec<f64>,
    pub lambda_star: Option<f64>,
}

/// Sweep `N(λ)` and the `N_∞(λ)` estimate over `lambdas`; λ_* is attempted
/// with the default bracket and left empty if it is not bracketed.
pub fn capacity_profile(
    gram: &GramSystem,
    kernel: &KernelSpec,
    xp: &SampleSet,
    lambdas: &[f64],
    probes: &[Vec<f64>],
) -> Result<CapacityProfile> {
    let eigenvalues = gram.scaled_eigenvalues();
    let rows: Vec<(f64, f64)> = lambdas
        .par_iter()
        .map(|&l| {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::param("lambda", format!("must be positive, got {l}")));
            }
            let ne = effective_dimension_from_eigenvalues(&eigenvalues, l);
            let ni = n_inf_estimate(gram, kernel, xp, l, probes)?;
            Ok((ne, ni))
        })
        .collect::<Result<_>>()?;
    let lambda_star =
        lambda_star_from_eigenvalues(&eigenvalues, gram.n, default_lambda_star_bracket(gram)).ok();
    Ok(CapacityProfile {
        lambdas: lambdas.to_vec(),
        n_eff: rows.iter().map(|r| r.0).collect(),
        n_inf: rows.iter().map(|r| r.1).collect(),
        lambda_star,
    })
}
