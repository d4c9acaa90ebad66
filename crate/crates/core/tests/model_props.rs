mod common;

use common::{brute_force, random_model, random_sparse, rng};
use proptest::prelude::*;
use shfm_kit::{anova_kernel, FactorizedModel, ModelKind, SparseVector, Task};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn efficient_prediction_matches_pair_sum(seed in any::<u64>(), d in 1usize..20, k in 1usize..6, kind_ix in 0usize..5) {
        let mut r = rng(seed);
        let kind = ModelKind::ALL[kind_ix];
        let m = random_model(&mut r, kind, Task::Regression, 1, d, k);
        let x = random_sparse(&mut r, d, d);
        let y = m.predict(&x).unwrap()[0];
        prop_assert!(close(y, brute_force(&m, 0, &x), 1e-10));
    }

    #[test]
    fn prediction_is_affine_in_each_row(seed in any::<u64>(), d in 1usize..15, k in 1usize..5) {
        let mut r = rng(seed);
        let kind = if seed % 2 == 0 { ModelKind::Shfm } else { ModelKind::Sha2 };
        let m = random_model(&mut r, kind, Task::Regression, 1, d, k);
        let x = random_sparse(&mut r, d, d);
        let i = (seed as usize) % (d + 1);
        let a = random_model(&mut r, kind, Task::Regression, 1, d, k).row(0, i).to_vec();
        let b = random_model(&mut r, kind, Task::Regression, 1, d, k).row(0, i).to_vec();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        let at = |row: &[f64]| {
            let mut mm = m.clone();
            mm.set_row(0, i, row).unwrap();
            mm.predict(&x).unwrap()[0]
        };
        prop_assert!(close(at(&mid), 0.5 * (at(&a) + at(&b)), 1e-10));
    }

    #[test]
    fn fm_equals_anova_at_unit_beta(seed in any::<u64>(), d in 1usize..20, k in 1usize..6) {
        let mut r = rng(seed);
        let fm = random_model(&mut r, ModelKind::Fm, Task::Regression, 1, d, k);
        let mut a2 = FactorizedModel::new(ModelKind::Anova2, Task::Regression, 1, d, k).unwrap();
        a2.set_bias(0, fm.bias(0)).unwrap();
        for i in 1..=d {
            a2.set_row(0, i, fm.row(0, i)).unwrap();
        }
        let x = random_sparse(&mut r, d, d);
        prop_assert_eq!(fm.predict(&x).unwrap()[0], a2.predict(&x).unwrap()[0]);
    }

    #[test]
    fn kernel_values_match_dynamic_program(seed in any::<u64>(), d in 1usize..15, k in 1usize..4) {
        let mut r = rng(seed);
        let m = random_model(&mut r, ModelKind::Sha2, Task::Regression, 1, d, k);
        let x = random_sparse(&mut r, d, d);
        let kern = m.kernel_values(&x).unwrap();
        let mut xs = vec![0.0; d + 1];
        xs[0] = 1.0;
        let mut support = vec![0];
        for (i, v) in x.iter() {
            xs[i] = v;
            support.push(i);
        }
        for f in 0..k {
            let col: Vec<f64> = (0..=d).map(|i| m.factor(0, i, f)).collect();
            let dp = anova_kernel(2, &col, &xs, &support).unwrap();
            prop_assert!(close(kern[0][f], dp, 1e-10));
        }
    }
}

#[test]
fn empty_support_predicts_bias_or_context_free_bias() {
    let mut r = rng(3);
    for kind in ModelKind::ALL {
        let m = random_model(&mut r, kind, Task::Regression, 1, 5, 3);
        let y = m.predict(&SparseVector::empty(5)).unwrap()[0];
        assert_eq!(y, m.bias(0), "{kind}");
    }
}

#[test]
fn prediction_cost_grows_linearly_in_k() {
    use std::time::Instant;
    let mut r = rng(11);
    let d = 500;
    let xs: Vec<SparseVector> = (0..2000).map(|_| random_sparse(&mut r, d, 40)).collect();
    let mut times = Vec::new();
    let ks = [8.0, 16.0, 32.0, 64.0];
    for &k in &ks {
        let m = random_model(&mut r, ModelKind::Shfm, Task::Regression, 1, d, k as usize);
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let t = Instant::now();
            let mut acc = 0.0;
            for x in &xs {
                acc += m.predict(x).unwrap()[0];
            }
            std::hint::black_box(acc);
            best = best.min(t.elapsed().as_secs_f64());
        }
        times.push(best);
    }
    let r2 = common::linear_r2(&ks, &times);
    assert!(r2 > 0.9, "r2 = {r2}, times = {times:?}");
}

#[test]
fn multiclass_heads_are_independent() {
    let mut r = rng(5);
    let m = random_model(&mut r, ModelKind::Sha2, Task::Classification, 3, 6, 2);
    let x = random_sparse(&mut r, 6, 6);
    let y = m.predict(&x).unwrap();
    for h in 0..3 {
        assert!(close(y[h], brute_force(&m, h, &x), 1e-12));
    }
}
