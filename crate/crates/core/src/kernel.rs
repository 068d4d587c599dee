//! Kernels, sample sets and the Gram system.
//!
//! The estimator only ever touches the two samples through kernel values:
//! the symmetric matrix `K = (k(x_i, x_j))` over the p-sample and the
//! cross sums `F_i = (n/m) Σ_j k(x_i, x'_j)` against the q-sample.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Which measure a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureTag {
    P,
    Q,
}

impl fmt::Display for MeasureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureTag::P => f.write_str("p"),
            MeasureTag::Q => f.write_str("q"),
        }
    }
}

type KernelFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// A user-supplied kernel. Must be symmetric and positive definite; the
/// library does not check either property.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    func: Arc<KernelFn>,
}

impl CustomKernel {
    pub fn new<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            func: Arc::new(func),
        }
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// `offset + exp(-‖x−y‖² / (2 h²))`; with offset 1 the RKHS contains constants.
    GaussianPlusOne,
    /// Plain Gaussian; the offset is ignored and treated as 0.
    Gaussian,
    CustomRef(CustomKernel),
}

/// Kernel choice plus its parameters.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub offset: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::GaussianPlusOne,
            bandwidth: 1.0,
            offset: 1.0,
        }
    }
}

impl KernelSpec {
    pub fn gaussian_plus_one(bandwidth: f64, offset: f64) -> Result<Self> {
        Self::new(KernelFamily::GaussianPlusOne, bandwidth, offset)
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth, 0.0)
    }

    pub fn custom(kernel: CustomKernel) -> Self {
        Self {
            family: KernelFamily::CustomRef(kernel),
            bandwidth: 1.0,
            offset: 0.0,
        }
    }

    pub fn new(family: KernelFamily, bandwidth: f64, offset: f64) -> Result<Self> {
        let spec = Self {
            family,
            bandwidth,
            offset,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::param(
                "bandwidth",
                format!("must be positive, got {}", self.bandwidth),
            ));
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(Error::param(
                "offset",
                format!("must be non-negative, got {}", self.offset),
            ));
        }
        Ok(())
    }

    fn effective_offset(&self) -> f64 {
        match self.family {
            KernelFamily::GaussianPlusOne => self.offset,
            _ => 0.0,
        }
    }

    /// Kernel value without the dimension check.
    #[inline]
    pub(crate) fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::GaussianPlusOne | KernelFamily::Gaussian => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                self.effective_offset() + (-sq / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
            KernelFamily::CustomRef(c) => (c.func)(x, y),
        }
    }

    /// Bound κ_0 on `sqrt(k(x, x))`. `None` for custom kernels.
    pub fn kappa0(&self) -> Option<f64> {
        match self.family {
            KernelFamily::CustomRef(_) => None,
            _ => Some((self.effective_offset() + 1.0).sqrt()),
        }
    }

    /// Diagonal value `k(x, x)` for the Gaussian families.
    pub fn diagonal(&self) -> Option<f64> {
        self.kappa0().map(|k| k * k)
    }
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        let same_family = match (&self.family, &other.family) {
            (KernelFamily::GaussianPlusOne, KernelFamily::GaussianPlusOne) => true,
            (KernelFamily::Gaussian, KernelFamily::Gaussian) => true,
            (KernelFamily::CustomRef(a), KernelFamily::CustomRef(b)) => {
                Arc::ptr_eq(&a.func, &b.func)
            }
            _ => false,
        };
        same_family && self.bandwidth == other.bandwidth && self.offset == other.offset
    }
}

/// Evaluate the kernel at a pair of points.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(spec.value(x, y))
}

#[derive(Serialize, Deserialize)]
struct KernelWire {
    family: String,
    bandwidth: f64,
    offset: f64,
}

impl Serialize for KernelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let family = match &self.family {
            KernelFamily::GaussianPlusOne => "gaussian_plus_one",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::CustomRef(c) => {
                return Err(serde::ser::Error::custom(format!(
                    "custom kernel `{}` cannot be serialized",
                    c.name
                )))
            }
        };
        KernelWire {
            family: family.to_string(),
            bandwidth: self.bandwidth,
            offset: self.offset,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = KernelWire::deserialize(d)?;
        let family = match w.family.as_str() {
            "gaussian_plus_one" => KernelFamily::GaussianPlusOne,
            "gaussian" => KernelFamily::Gaussian,
            other => {
                return Err(serde::de::Error::custom(format!(
                    "unknown or non-serializable kernel family `{other}`"
                )))
            }
        };
        KernelSpec::new(family, w.bandwidth, w.offset).map_err(serde::de::Error::custom)
    }
}

/// Ordered sample of points in R^d drawn from one of the two measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub measure_tag: MeasureTag,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>, measure_tag: MeasureTag, seed: Option<u64>) -> Result<Self> {
        let set = Self {
            points,
            measure_tag,
            seed,
        };
        set.validate()?;
        Ok(set)
    }

    /// Build a one-dimensional sample from scalars.
    pub fn from_scalars(
        values: &[f64],
        measure_tag: MeasureTag,
        seed: Option<u64>,
    ) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), measure_tag, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.points.first().ok_or_else(|| {
            Error::Input(format!(
                "sample set for measure {} is empty",
                self.measure_tag
            ))
        })?;
        let d = first.len();
        if d == 0 {
            return Err(Error::Input("points must have dimension >= 1".into()));
        }
        for p in &self.points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(
                    "sample contains non-finite coordinates".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Finite-dimensional surrogate of the empirical operator equation.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub k_matrix: DMatrix<f64>,
    pub f_bar: DVector<f64>,
    pub n: usize,
    pub m: usize,
}

impl GramSystem {
    /// Tolerance below zero tolerated for eigenvalues of `K`.
    pub fn tol_psd(&self) -> f64 {
        let max_diag = self.k_matrix.diagonal().iter().cloned().fold(0.0, f64::max);
        1e-10 * self.n as f64 * max_diag
    }

    /// Eigenvalues of `K/n`, ascending.
    pub fn scaled_eigenvalues(&self) -> Vec<f64> {
        let scaled = &self.k_matrix / self.n as f64;
        let mut ev: Vec<f64> = scaled.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Symmetric kernel matrix over one sample; each unordered pair is
/// evaluated once and mirrored, so the result is exactly symmetric.
fn kernel_matrix(spec: &KernelSpec, xs: &SampleSet) -> DMatrix<f64> {
    let n = xs.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| spec.value(&xs.points[i], &xs.points[j]))
                .collect()
        })
        .collect();
    let mut k_matrix = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            k_matrix[(i, j)] = v;
            k_matrix[(j, i)] = v;
        }
    }
    k_matrix
}

/// Gram system with only the p-sample: `F̄` is empty and `m = 0`.
/// Enough for the capacity diagnostics, not for fitting.
pub fn assemble_p_gram(spec: &KernelSpec, xp: &SampleSet) -> Result<GramSystem> {
    spec.validate()?;
    xp.validate()?;
    Ok(GramSystem {
        k_matrix: kernel_matrix(spec, xp),
        f_bar: DVector::zeros(0),
        n: xp.len(),
        m: 0,
    })
}

/// Assemble `K` over `xp` and `F̄` against `xq`.
pub fn assemble_gram(spec: &KernelSpec, xp: &SampleSet, xq: &SampleSet) -> Result<GramSystem> {
    spec.validate()?;
    xp.validate()?;
    xq.validate()?;
    if xp.measure_tag != MeasureTag::P {
        return Err(Error::Input("first sample must be tagged p".into()));
    }
    if xq.measure_tag != MeasureTag::Q {
        return Err(Error::Input("second sample must be tagged q".into()));
    }
    if xp.dim() != xq.dim() {
        return Err(Error::DimensionMismatch {
            expected: xp.dim(),
            got: xq.dim(),
        });
    }
    let n = xp.len();
    let m = xq.len();
    let k_matrix = kernel_matrix(spec, xp);

    let scale = n as f64 / m as f64;
    let f: Vec<f64> = xp
        .points
        .par_iter()
        .map(|x| scale * xq.points.iter().map(|y| spec.value(x, y)).sum::<f64>())
        .collect();

    Ok(GramSystem {
        k_matrix,
        f_bar: DVector::from_vec(f),
        n,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> KernelSpec {
        KernelSpec::default()
    }

    #[test]
    fn coincident_points_give_two() {
        assert_eq!(eval_kernel(&k(), &[0.0], &[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn far_points_approach_offset() {
        let v = eval_kernel(&k(), &[0.0], &[1e3]).unwrap();
        assert!(v >= 1.0 && v - 1.0 < 1e-12);
    }

    #[test]
    fn sqrt_two_distance() {
        let v = eval_kernel(&k(), &[0.0], &[2f64.sqrt()]).unwrap();
        // 1 + e^{-1}
        assert!((v - 1.367_879_441_171_442_2).abs() < 1e-15);
    }

    #[test]
    fn plain_gaussian_has_no_offset() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(eval_kernel(&g, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            eval_kernel(&k(), &[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_bandwidth_rejected() {
        assert!(KernelSpec::gaussian_plus_one(0.0, 1.0).is_err());
        assert!(KernelSpec::gaussian_plus_one(-1.0, 1.0).is_err());
        assert!(KernelSpec::gaussian_plus_one(1.0, -0.5).is_err());
    }

    #[test]
    fn single_point_gram() {
        let xp = SampleSet::from_scalars(&[0.3], MeasureTag::P, None).unwrap();
        let xq = SampleSet::from_scalars(&[0.3], MeasureTag::Q, None).unwrap();
        let g = assemble_gram(&k(), &xp, &xq).unwrap();
        assert_eq!(g.k_matrix[(0, 0)], 2.0);
        assert_eq!(g.f_bar[0], 2.0);
    }

    #[test]
    fn two_by_one_cross_sums() {
        let xp = SampleSet::from_scalars(&[0.0, 2f64.sqrt()], MeasureTag::P, None).unwrap();
        let xq = SampleSet::from_scalars(&[0.0], MeasureTag::Q, None).unwrap();
        let g = assemble_gram(&k(), &xp, &xq).unwrap();
        assert!((g.f_bar[0] - 4.0).abs() < 1e-15);
        assert!((g.f_bar[1] - 2.735_758_882_342_884_4).abs() < 1e-14);
        assert_eq!(g.k_matrix, g.k_matrix.transpose());
    }

    #[test]
    fn empty_sample_rejected() {
        let xq = SampleSet::from_scalars(&[0.0], MeasureTag::Q, None).unwrap();
        let xp = SampleSet {
            points: vec![],
            measure_tag: MeasureTag::P,
            seed: None,
        };
        assert!(matches!(
            assemble_gram(&k(), &xp, &xq),
            Err(Error::Input(_))
        ));
        assert!(SampleSet::from_scalars(&[], MeasureTag::P, None).is_err());
    }

    #[test]
    fn tags_are_checked() {
        let a = SampleSet::from_scalars(&[0.0], MeasureTag::Q, None).unwrap();
        let b = SampleSet::from_scalars(&[0.0], MeasureTag::Q, None).unwrap();
        assert!(assemble_gram(&k(), &a, &b).is_err());
    }

    #[test]
    fn ragged_points_rejected() {
        assert!(SampleSet::new(vec![vec![0.0], vec![1.0, 2.0]], MeasureTag::P, None).is_err());
    }

    #[test]
    fn custom_kernel_evaluates_but_does_not_serialize() {
        let lin = CustomKernel::new("linear_plus_one", |x, y| {
            1.0 + x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
        });
        let spec = KernelSpec::custom(lin);
        assert_eq!(eval_kernel(&spec, &[2.0], &[3.0]).unwrap(), 7.0);
        assert!(serde_json::to_string(&spec).is_err());
        assert!(spec.kappa0().is_none());
    }

    #[test]
    fn kernel_json_round_trip() {
        let spec = KernelSpec::gaussian_plus_one(0.7, 2.0).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: KernelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back.bandwidth, 0.7);
        assert_eq!(back.offset, 2.0);
        assert!(serde_json::from_str::<KernelSpec>(
            r#"{"family":"gaussian","bandwidth":-1,"offset":0}"#
        )
        .is_err());
    }
}
