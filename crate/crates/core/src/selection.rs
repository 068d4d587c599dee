//! Choosing λ: the quasi-optimality criterion and the a-priori rule `λ_{m,n}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_iterated_lavrentiev, RatioModel};
use crate::kernel::{GramSystem, KernelSpec, SampleSet};

/// Geometric grid `λ_ι = λ_0 ρ^ι`, `ι = 1..w`.
///
/// `values` holds `λ_1..λ_w`; `λ_0` itself is kept separately because the
/// criterion needs the estimate there as the predecessor of `λ_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lambda_0: f64,
    /// `None` for grids given by explicit values.
    pub rho: Option<f64>,
    pub w: usize,
    pub values: Vec<f64>,
}

impl Default for LambdaGrid {
    /// `λ_0 = 0.9`, `ρ = (1/9)^{1/9}`, `w = 9`: nine values from 0.9ρ down to 0.1.
    fn default() -> Self {
        Self::geometric(0.9, (1.0f64 / 9.0).powf(1.0 / 9.0), 9).expect("default grid is valid")
    }
}

impl LambdaGrid {
    pub fn geometric(lambda_0: f64, rho: f64, w: usize) -> Result<Self> {
        if !(lambda_0 > 0.0 && lambda_0.is_finite()) {
            return Err(Error::param(
                "lambda_0",
                format!("must be positive, got {lambda_0}"),
            ));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::param(
                "rho",
                format!("must lie in (0, 1), got {rho}"),
            ));
        }
        if w < 1 {
            return Err(Error::param("w", "must be at least 1"));
        }
        let values = (1..=w).map(|i| lambda_0 * rho.powi(i as i32)).collect();
        Ok(Self {
            lambda_0,
            rho: Some(rho),
            w,
            values,
        })
    }

    /// Grid from explicit values; `lambdas[0]` plays the role of `λ_0`.
    pub fn from_values(lambdas: &[f64]) -> Result<Self> {
        if lambdas.len() < 2 {
            return Err(Error::param(
                "lambdas",
                "need λ_0 and at least one more value",
            ));
        }
        if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::param("lambdas", "all values must be positive"));
        }
        Ok(Self {
            lambda_0: lambdas[0],
            rho: None,
            w: lambdas.len() - 1,
            values: lambdas[1..].to_vec(),
        })
    }

    /// `λ_ι` for `ι = 0..=w`.
    pub fn lambda(&self, iota: usize) -> f64 {
        if iota == 0 {
            self.lambda_0
        } else {
            self.values[iota - 1]
        }
    }

    /// All `w + 1` values `λ_0, λ_1, .., λ_w`.
    pub fn all(&self) -> Vec<f64> {
        std::iter::once(self.lambda_0)
            .chain(self.values.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub grid: LambdaGrid,
    pub k: u32,
    /// `diffs[ι - 1] = ‖β^{λ_ι} − β^{λ_{ι−1}}‖_{R^n}` for `ι = 1..w`.
    pub diffs: Vec<f64>,
    /// `ι_0 ∈ 1..=w`
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<RatioModel>>,
}

impl SelectionTrace {
    /// Model at `λ_{ι_0}`, if models were retained.
    pub fn chosen_model(&self) -> Option<&RatioModel> {
        self.models.as_ref().map(|m| &m[self.chosen_index])
    }
}

/// `‖u − v‖` in `R^n` with the `1/n`-weighted inner product.
pub fn rn_distance(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len().max(1) as f64;
    (u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt()
}

/// Index `ι ∈ 1..=w` minimizing the consecutive differences of the value
/// vectors `values[0..=w]`. Ties go to the smaller `ι` (larger λ).
pub fn quasi_optimal_index(values: &[Vec<f64>]) -> (Vec<f64>, usize) {
    let diffs: Vec<f64> = values
        .windows(2)
        .map(|w| rn_distance(&w[1], &w[0]))
        .collect();
    let mut best = 0;
    for (i, d) in diffs.iter().enumerate() {
        if *d < diffs[best] {
            best = i;
        }
    }
    (diffs, best + 1)
}

/// Fit the `k`-iterated estimate at `λ_0..λ_w` and apply the criterion.
pub fn quasi_optimality(
    gram: &GramSystem,
    xp: &SampleSet,
    xq: &SampleSet,
    kernel: &KernelSpec,
    k: u32,
    grid: &LambdaGrid,
    retain_models: bool,
) -> Result<SelectionTrace> {
    if grid.w < 2 {
        return Err(Error::param(
            "w",
            "quasi-optimality needs at least two grid values",
        ));
    }
    let lambdas = grid.all();
    let models: Vec<RatioModel> = lambdas
        .par_iter()
        .map(|&l| fit_iterated_lavrentiev(gram, xp, xq, kernel, l, k))
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = models.iter().map(|m| m.values_at_xp.clone()).collect();
    let (diffs, chosen_index) = quasi_optimal_index(&values);
    Ok(SelectionTrace {
        grid: grid.clone(),
        k,
        diffs,
        chosen_index,
        chosen_lambda: grid.lambda(chosen_index),
        models: retain_models.then_some(models),
    })
}

/// A-priori choice `λ_{m,n} = (m^{-1/2} + n^{-1/2})^{1/(η + 1 − ς)}` for the
/// power-type source conditions `φ(t) = t^η`, `ξ(t) = t^ς`.
pub fn lambda_mn(m: usize, n: usize, eta: f64, varsigma: f64) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::param("m, n", "sample sizes must be at least 1"));
    }
    let exponent = eta + 1.0 - varsigma;
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::param(
            "eta, varsigma",
            format!("eta + 1 - varsigma must be positive, got {exponent}"),
        ));
    }
    let base = (m as f64).powf(-0.5) + (n as f64).powf(-0.5);
    Ok(base.powf(1.0 / exponent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_spans_point_one_to_point_nine() {
        let g = LambdaGrid::default();
        assert_eq!(g.values.len(), 9);
        assert!((g.values[8] - 0.1).abs() < 1e-12);
        assert!(g.all().iter().all(|&l| (0.1 - 1e-12..=0.9).contains(&l)));
        for i in 1..=9 {
            assert!((g.lambda(i) / g.lambda(i - 1) - g.rho.unwrap()).abs() < 1e-12);
        }
        assert!(g.values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::geometric(0.0, 0.5, 3).is_err());
        assert!(LambdaGrid::geometric(1.0, 1.0, 3).is_err());
        assert!(LambdaGrid::geometric(1.0, 0.5, 0).is_err());
        assert!(LambdaGrid::from_values(&[1.0]).is_err());
        assert!(LambdaGrid::from_values(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn zero_difference_wins() {
        let values = vec![vec![1.0, 2.0], vec![1.5, 2.5], vec![1.5, 2.5]];
        let (diffs, idx) = quasi_optimal_index(&values);
        assert_eq!(diffs[1], 0.0);
        assert_eq!(idx, 2);
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        let values = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let (_, idx) = quasi_optimal_index(&values);
        assert_eq!(idx, 1);
    }

    #[test]
    fn criterion_is_scale_invariant() {
        let values = vec![
            vec![0.3, 1.0],
            vec![0.5, 1.4],
            vec![0.55, 1.45],
            vec![0.9, 1.0],
        ];
        let scaled: Vec<Vec<f64>> = values
            .iter()
            .map(|v| v.iter().map(|x| x * 7.5).collect())
            .collect();
        assert_eq!(
            quasi_optimal_index(&values).1,
            quasi_optimal_index(&scaled).1
        );
    }

    #[test]
    fn rn_norm_is_weighted() {
        assert!((rn_distance(&[3.0, 0.0, 0.0, 0.0], &[0.0; 4]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_mn_examples() {
        let l = lambda_mn(100, 100, 1.0, 0.5).unwrap();
        assert!((l - 0.2f64.powf(2.0 / 3.0)).abs() < 1e-15);
        assert!((l - 0.341_995).abs() < 1e-6);
        let l0 = lambda_mn(64, 16, 1.0, 0.0).unwrap();
        assert!((l0 - (0.125f64 + 0.25).sqrt()).abs() < 1e-15);
        let seq: Vec<f64> = [10, 100, 1000, 10000]
            .iter()
            .map(|&n| lambda_mn(n, n, 1.0, 0.5).unwrap())
            .collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!(lambda_mn(0, 5, 1.0, 0.5).is_err());
        assert!(lambda_mn(5, 5, -2.0, 0.5).is_err());
    }
}
