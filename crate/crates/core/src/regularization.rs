//! Spectral filter families `g_λ` and their residuals `r_λ(t) = 1 − t g_λ(t)`.
//!
//! For the `k` times iterated Lavrentiev scheme
//!
//! ```text
//! g_{λ,k}(t) = (1 − (λ/(λ+t))^k) / t,      r_{λ,k}(t) = (λ/(λ+t))^k.
//! ```
//!
//! With `ρ = λ/(λ+t)` we have `(1 − ρ)/t = 1/(λ+t)`, so the filter is
//! evaluated as the geometric sum `Σ_{j<k} ρ^j / (λ+t)`. That form has no
//! cancellation near `t = 0` and takes the value `k/λ` there.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Plain Lavrentiev (KuLSIF); same as `IteratedLavrentiev(1)`.
    Lavrentiev,
    IteratedLavrentiev(u32),
    /// `g(t) = 1/t` for `t ≥ λ`, zero below. Infinite qualification.
    SpectralCutoff,
}

impl SchemeKind {
    /// Number of Lavrentiev iterations, if the scheme is of that type.
    pub fn iterations(&self) -> Option<u32> {
        match *self {
            SchemeKind::Lavrentiev => Some(1),
            SchemeKind::IteratedLavrentiev(k) => Some(k),
            SchemeKind::SpectralCutoff => None,
        }
    }
}

/// Constants of the three basic filter bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConstants {
    pub gamma_0: f64,
    pub gamma_neg_half: f64,
    pub gamma_neg_1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegScheme {
    kind: SchemeKind,
    lambda: f64,
}

impl RegScheme {
    pub fn new(kind: SchemeKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("must be positive, got {lambda}"),
            ));
        }
        if let SchemeKind::IteratedLavrentiev(0) = kind {
            return Err(Error::param("k", "iteration count must be at least 1"));
        }
        Ok(Self { kind, lambda })
    }

    pub fn lavrentiev(lambda: f64) -> Result<Self> {
        Self::new(SchemeKind::Lavrentiev, lambda)
    }

    pub fn iterated_lavrentiev(k: u32, lambda: f64) -> Result<Self> {
        Self::new(SchemeKind::IteratedLavrentiev(k), lambda)
    }

    pub fn spectral_cutoff(lambda: f64) -> Result<Self> {
        Self::new(SchemeKind::SpectralCutoff, lambda)
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn constants(&self) -> SchemeConstants {
        match self.kind.iterations() {
            Some(k) => SchemeConstants {
                gamma_0: 1.0,
                gamma_neg_half: (k as f64).sqrt(),
                gamma_neg_1: k as f64,
            },
            None => SchemeConstants {
                gamma_0: 1.0,
                gamma_neg_half: 1.0,
                gamma_neg_1: 1.0,
            },
        }
    }

    /// Qualification `s`; `f64::INFINITY` for spectral cut-off.
    pub fn qualification(&self) -> f64 {
        self.kind.iterations().map_or(f64::INFINITY, |k| k as f64)
    }

    /// `γ_s` in `t^s |r_λ(t)| ≤ γ_s λ^s`. Equal to 1 for every supported scheme.
    pub fn gamma_s(&self) -> f64 {
        1.0
    }

    /// `g_λ(t)`. At `t = 0` this is the analytic limit (`k/λ`, or 0 for cut-off).
    pub fn filter_value(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0 || self.kind.iterations().is_some());
        match self.kind.iterations() {
            Some(k) => {
                let denom = self.lambda + t;
                let rho = self.lambda / denom;
                let mut term = 1.0;
                let mut sum = 0.0;
                for _ in 0..k {
                    sum += term;
                    term *= rho;
                }
                sum / denom
            }
            None => {
                if t >= self.lambda {
                    1.0 / t
                } else {
                    0.0
                }
            }
        }
    }

    /// `r_λ(t) = 1 − t g_λ(t)`, in closed form.
    pub fn residual_value(&self, t: f64) -> f64 {
        match self.kind.iterations() {
            Some(k) => (self.lambda / (self.lambda + t)).powi(k as i32),
            None => {
                if t >= self.lambda {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// `(g_λ(t) − g_λ(0)) / t`, continuous at `t = 0`.
    ///
    /// For iterated Lavrentiev this equals `−(1/λ) Σ_{l=1..k} g_{λ,l}(t)`,
    /// which is what the spectral path needs for the component of the
    /// right-hand side inside the span of the sample kernel sections.
    pub(crate) fn filter_slope(&self, t: f64) -> f64 {
        match self.kind.iterations() {
            Some(k) => {
                let denom = self.lambda + t;
                let rho = self.lambda / denom;
                let mut term = 1.0;
                let mut partial = 0.0;
                let mut total = 0.0;
                for _ in 0..k {
                    partial += term;
                    term *= rho;
                    total += partial;
                }
                -total / (denom * self.lambda)
            }
            None => {
                if t >= self.lambda {
                    1.0 / (t * t)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemeWire {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    lambda: f64,
}

impl Serialize for RegScheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, k) = match self.kind {
            SchemeKind::Lavrentiev => ("lavrentiev", Some(1)),
            SchemeKind::IteratedLavrentiev(k) => ("iterated_lavrentiev", Some(k)),
            SchemeKind::SpectralCutoff => ("spectral_cutoff", None),
        };
        SchemeWire {
            kind: kind.into(),
            k,
            lambda: self.lambda,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegScheme {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = SchemeWire::deserialize(d)?;
        let kind = match w.kind.as_str() {
            "lavrentiev" => SchemeKind::Lavrentiev,
            "iterated_lavrentiev" => {
                SchemeKind::IteratedLavrentiev(w.k.ok_or_else(|| D::Error::missing_field("k"))?)
            }
            "spectral_cutoff" => SchemeKind::SpectralCutoff,
            other => return Err(D::Error::custom(format!("unknown scheme kind `{other}`"))),
        };
        RegScheme::new(kind, w.lambda).map_err(D::Error::custom)
    }
}

/// Outcome of one inequality check over the grid.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    /// Smallest `bound − value` seen on the grid.
    pub min_slack: f64,
    /// Largest `value / bound`.
    pub worst_ratio: f64,
    pub worst_t: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeCheckReport {
    pub scheme: RegScheme,
    pub t_max: f64,
    pub grid_size: usize,
    pub residual_bound: InequalityCheck,
    pub sqrt_filter_bound: InequalityCheck,
    pub filter_bound: InequalityCheck,
    /// `None` when the qualification is infinite and no finite `s` was requested.
    pub qualification_bound: Option<InequalityCheck>,
}

impl SchemeCheckReport {
    pub fn all_hold(&self) -> bool {
        self.residual_bound.holds
            && self.sqrt_filter_bound.holds
            && self.filter_bound.holds
            && self.qualification_bound.as_ref().is_none_or(|c| c.holds)
    }
}

const CHECK_REL_TOL: f64 = 1e-12;

fn log_grid(t_max: f64, size: usize) -> Vec<f64> {
    let lo = (t_max * 1e-10).ln();
    let hi = t_max.ln();
    (0..size)
        .map(|i| {
            if i + 1 == size {
                t_max
            } else {
                (lo + (hi - lo) * i as f64 / (size - 1) as f64).exp()
            }
        })
        .collect()
}

fn check(name: &str, grid: &[f64], bound: f64, value: impl Fn(f64) -> f64) -> InequalityCheck {
    let mut out = InequalityCheck {
        name: name.to_string(),
        min_slack: f64::INFINITY,
        worst_ratio: f64::NEG_INFINITY,
        worst_t: grid[0],
        holds: true,
    };
    for &t in grid {
        let v = value(t);
        let slack = bound - v;
        let ratio = v / bound;
        if slack < out.min_slack {
            out.min_slack = slack;
        }
        if ratio > out.worst_ratio {
            out.worst_ratio = ratio;
            out.worst_t = t;
        }
    }
    out.holds = out.worst_ratio <= 1.0 + CHECK_REL_TOL;
    out
}

/// Check the basic filter bounds and the qualification bound at the
/// scheme's own qualification on a log-spaced grid over `(0, t_max]`.
pub fn check_scheme_constants(
    scheme: &RegScheme,
    t_max: f64,
    grid_size: usize,
) -> Result<SchemeCheckReport> {
    let s = scheme.qualification();
    let claimed = s.is_finite().then_some((s, scheme.gamma_s()));
    check_scheme_constants_with(scheme, t_max, grid_size, claimed)
}

/// As [`check_scheme_constants`] but with an explicitly claimed `(s, γ_s)`.
pub fn check_scheme_constants_with(
    scheme: &RegScheme,
    t_max: f64,
    grid_size: usize,
    qualification: Option<(f64, f64)>,
) -> Result<SchemeCheckReport> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::param("t_max", "must be positive"));
    }
    if grid_size < 2 {
        return Err(Error::param("grid_size", "must be at least 2"));
    }
    let grid = log_grid(t_max, grid_size);
    let lambda = scheme.lambda();
    let c = scheme.constants();

    let residual_bound = check("|r(t)| <= gamma_0", &grid, c.gamma_0, |t| {
        scheme.residual_value(t).abs()
    });
    let sqrt_filter_bound = check(
        "sqrt(t)|g(t)| <= gamma_-1/2 / sqrt(lambda)",
        &grid,
        c.gamma_neg_half / lambda.sqrt(),
        |t| t.sqrt() * scheme.filter_value(t).abs(),
    );
    let filter_bound = check(
        "|g(t)| <= gamma_-1 / lambda",
        &grid,
        c.gamma_neg_1 / lambda,
        |t| scheme.filter_value(t).abs(),
    );
    let qualification_bound = qualification.map(|(s, gamma_s)| {
        check(
            &format!("t^{s}|r(t)| <= gamma_s lambda^{s}"),
            &grid,
            gamma_s * lambda.powf(s),
            |t| t.powf(s) * scheme.residual_value(t).abs(),
        )
    });

    Ok(SchemeCheckReport {
        scheme: *scheme,
        t_max,
        grid_size,
        residual_bound,
        sqrt_filter_bound,
        filter_bound,
        qualification_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct substitution into the textbook formula; only usable away from t = 0.
    fn naive_filter(k: u32, lambda: f64, t: f64) -> f64 {
        (1.0 - lambda.powi(k as i32) / (lambda + t).powi(k as i32)) / t
    }

    #[test]
    fn lavrentiev_at_equal_lambda() {
        let s = RegScheme::iterated_lavrentiev(1, 0.5).unwrap();
        assert!((s.filter_value(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_iterations_at_one() {
        let s = RegScheme::iterated_lavrentiev(2, 1.0).unwrap();
        assert!((s.filter_value(1.0) - 0.75).abs() < 1e-15);
        assert!((naive_filter(2, 1.0, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_limit_is_k_over_lambda() {
        for k in [1, 2, 3, 5, 10] {
            for lambda in [0.1, 0.37, 2.0] {
                let s = RegScheme::iterated_lavrentiev(k, lambda).unwrap();
                let at0 = s.filter_value(0.0);
                assert!((at0 - k as f64 / lambda).abs() < 1e-12 * at0);
                let near = s.filter_value(1e-12);
                assert!(((near - at0) / at0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn residual_examples() {
        let l = RegScheme::lavrentiev(0.1).unwrap();
        assert_eq!(l.residual_value(0.0), 1.0);
        assert!((l.residual_value(0.9) - 0.1).abs() < 1e-15);
        let c = RegScheme::spectral_cutoff(0.3).unwrap();
        assert_eq!(c.residual_value(0.0), 1.0);
        assert_eq!(c.residual_value(0.3), 0.0);
        assert_eq!(c.residual_value(5.0), 0.0);
        assert_eq!(c.filter_value(0.1), 0.0);
        assert_eq!(c.filter_value(0.5), 2.0);
    }

    #[test]
    fn constants_and_qualification() {
        let s = RegScheme::iterated_lavrentiev(4, 0.2).unwrap();
        let c = s.constants();
        assert_eq!(
            (c.gamma_0, c.gamma_neg_half, c.gamma_neg_1),
            (1.0, 2.0, 4.0)
        );
        assert_eq!(s.qualification(), 4.0);
        let l = RegScheme::lavrentiev(0.2).unwrap();
        assert_eq!(
            l.constants(),
            RegScheme::iterated_lavrentiev(1, 0.2).unwrap().constants()
        );
        assert_eq!(
            RegScheme::spectral_cutoff(0.2).unwrap().qualification(),
            f64::INFINITY
        );
    }

    #[test]
    fn invalid_schemes() {
        assert!(RegScheme::lavrentiev(0.0).is_err());
        assert!(RegScheme::lavrentiev(-1.0).is_err());
        assert!(RegScheme::iterated_lavrentiev(0, 1.0).is_err());
    }

    #[test]
    fn three_iterations_satisfy_all_bounds() {
        let s = RegScheme::iterated_lavrentiev(3, 0.2).unwrap();
        let r = check_scheme_constants(&s, 2.0, 400).unwrap();
        assert!(r.all_hold(), "{r:?}");
        assert!(r.qualification_bound.is_some());
    }

    #[test]
    fn lavrentiev_has_qualification_one_not_two() {
        let s = RegScheme::lavrentiev(0.5).unwrap();
        assert!(check_scheme_constants(&s, 2.0, 400).unwrap().all_hold());
        let small = RegScheme::lavrentiev(0.01).unwrap();
        let r = check_scheme_constants_with(&small, 2.0, 400, Some((2.0, 1.0))).unwrap();
        let q = r.qualification_bound.unwrap();
        assert!(!q.holds);
        // sup_t t² λ/(λ+t) ≈ λ t_max for small λ
        assert!(q.worst_ratio > 50.0);
        assert_eq!(q.worst_t, 2.0);
    }

    #[test]
    fn cutoff_skips_infinite_qualification() {
        let s = RegScheme::spectral_cutoff(0.3).unwrap();
        let r = check_scheme_constants(&s, 2.0, 100).unwrap();
        assert!(r.qualification_bound.is_none());
        assert!(r.all_hold());
        let r = check_scheme_constants_with(&s, 2.0, 100, Some((7.0, 1.0))).unwrap();
        assert!(r.all_hold());
    }

    #[test]
    fn check_rejects_bad_grid() {
        let s = RegScheme::lavrentiev(0.5).unwrap();
        assert!(check_scheme_constants(&s, 2.0, 1).is_err());
        assert!(check_scheme_constants(&s, 0.0, 10).is_err());
    }

    #[test]
    fn slope_matches_difference_quotient() {
        let s = RegScheme::iterated_lavrentiev(5, 0.3).unwrap();
        for t in [0.01, 0.1, 1.0, 3.0] {
            let dq = (s.filter_value(t) - s.filter_value(0.0)) / t;
            assert!((s.filter_slope(t) - dq).abs() < 1e-10 * dq.abs());
        }
        // derivative at zero: −k(k+1)/(2λ²)
        assert!((s.filter_slope(0.0) + 15.0 / (0.09)).abs() < 1e-9);
    }

    #[test]
    fn scheme_json_shape() {
        let s = RegScheme::iterated_lavrentiev(3, 0.25).unwrap();
        let v = serde_json::to_value(s).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"kind": "iterated_lavrentiev", "k": 3, "lambda": 0.25})
        );
        let back: RegScheme = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<RegScheme>(r#"{"kind":"lavrentiev","lambda":0}"#).is_err());
    }

    proptest! {
        #[test]
        fn filter_and_residual_sum_to_one(k in 1u32..12, lambda in 1e-3f64..5.0, e in -10.0f64..1.0) {
            let t = 10f64.powf(e);
            let s = RegScheme::iterated_lavrentiev(k, lambda).unwrap();
            prop_assert!((t * s.filter_value(t) + s.residual_value(t) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn residual_nests(k in 1u32..12, lambda in 1e-3f64..5.0, e in -10.0f64..1.0) {
            let t = 10f64.powf(e);
            let one = RegScheme::lavrentiev(lambda).unwrap().residual_value(t);
            let rk = RegScheme::iterated_lavrentiev(k, lambda).unwrap().residual_value(t);
            prop_assert!((rk - one.powi(k as i32)).abs() <= 1e-12 * rk.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn filter_non_increasing_in_lambda(k in 1u32..8, l1 in 1e-3f64..2.0, dl in 0.0f64..2.0, t in 1e-6f64..10.0) {
            let a = RegScheme::iterated_lavrentiev(k, l1).unwrap().filter_value(t);
            let b = RegScheme::iterated_lavrentiev(k, l1 + dl).unwrap().filter_value(t);
            prop_assert!(b <= a * (1.0 + 1e-14));
        }
    }
}
