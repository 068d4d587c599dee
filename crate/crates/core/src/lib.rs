//! Density-ratio (Radon–Nikodym derivative) estimation in a reproducing
//! kernel Hilbert space by general spectral regularization.
//!
//! Given samples `X_p` from `p` and `X_q` from `q`, the ratio `β = dq/dp`
//! solves the empirical operator equation `S_p* S_p β = S_q* S_q 1`. This
//! crate regularizes it with spectral filters `g_λ`, most importantly the
//! `k` times iterated Lavrentiev scheme (KuLSIF for `k = 1`), and provides:
//!
//! - [`kernel`]: kernels, sample sets and the Gram system `(K, F̄)`;
//! - [`regularization`]: filter families, residuals and their constants;
//! - [`estimator`]: the iterated recursion, the eigendecomposition path and
//!   off-sample evaluation in representer form;
//! - [`capacity`]: Christoffel function, effective dimension, `N_∞`, `λ_*`;
//! - [`selection`]: the quasi-optimality criterion and `λ_{m,n}`;
//! - [`experiment`]: the Gaussian simulation study and rate sweeps;
//! - [`io`] and [`cli`]: file formats and the `rkhs-ratio` command.
//!
//! ```
//! use rkhs_ratio::prelude::*;
//!
//! let xp = sample_normal(2.0, 5.0, 100, 1, MeasureTag::P).unwrap();
//! let xq = sample_normal(2.0, 0.5, 100, 2, MeasureTag::Q).unwrap();
//! let kernel = KernelSpec::default();
//! let gram = assemble_gram(&kernel, &xp, &xq).unwrap();
//! let trace = quasi_optimality(&gram, &xp, &xq, &kernel, 3, &LambdaGrid::default(), true).unwrap();
//! let model = trace.chosen_model().unwrap();
//! assert!(model.evaluate(&[2.0]).unwrap() > 0.0);
//! ```

pub mod capacity;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod io;
pub mod kernel;
pub mod regularization;
pub mod selection;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::capacity::{
        capacity_profile, christoffel, effective_dimension, find_lambda_star, n_inf_estimate,
        CapacityProfile,
    };
    pub use crate::error::{Error, Result};
    pub use crate::estimator::{fit, fit_iterated_lavrentiev, fit_spectral, RatioModel};
    pub use crate::experiment::{
        msd, run_rate_study, run_study, sample_normal, true_beta, ExperimentReport, RateConfig,
        SimConfig,
    };
    pub use crate::kernel::{
        assemble_gram, eval_kernel, GramSystem, KernelSpec, MeasureTag, SampleSet,
    };
    pub use crate::regularization::{check_scheme_constants, RegScheme, SchemeKind};
    pub use crate::selection::{lambda_mn, quasi_optimality, LambdaGrid, SelectionTrace};
}
