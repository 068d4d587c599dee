//! Values frozen from the first verified run. They pin the sampler stream
//! (ChaCha8 + rand_distr Normal via Cargo.lock) and the selection rule.

use rkhs_ratio::experiment::{mix_seed, msd, sample_normal};
use rkhs_ratio::prelude::*;

fn trace(mu_q: f64, k: u32) -> SelectionTrace {
    let seed = 2023;
    let xp = sample_normal(2.0, 5.0, 100, mix_seed(&[seed, 0]), MeasureTag::P).unwrap();
    let xq = sample_normal(mu_q, 0.5, 100, mix_seed(&[seed, 1]), MeasureTag::Q).unwrap();
    let kernel = KernelSpec::default();
    let gram = assemble_gram(&kernel, &xp, &xq).unwrap();
    quasi_optimality(&gram, &xp, &xq, &kernel, k, &LambdaGrid::default(), true).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

#[test]
fn quasi_optimal_lambda_mu_q_3_k_3() {
    let t = trace(3.0, 3);
    assert_eq!(t.chosen_index, 9);
    assert!(close(t.chosen_lambda, 0.09999999999999999));
    assert!(close(t.diffs[0], 0.09355971038812037));
    assert!(close(t.diffs[8], 0.058102189387236686));
}

#[test]
fn msd_mu_q_2_k_3() {
    let t = trace(2.0, 3);
    let value = msd(t.chosen_model().unwrap(), 2.0);
    assert!(close(value, 0.13347303559982243), "{value}");
}
