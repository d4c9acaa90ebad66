mod common;

use proptest::prelude::*;
use shfm_kit::metrics::{f1_scores, sparsity};
use shfm_kit::{FactorizedModel, ModelKind, Task};

proptest! {
    #[test]
    fn micro_f1_equals_accuracy(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..100)) {
        let (pred, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let (micro, macro_f1) = f1_scores(&pred, &labels, 4).unwrap();
        let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64;
        prop_assert!((micro - acc).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&macro_f1));
    }

    #[test]
    fn zeroing_entries_never_lowers_sparsity(seed in any::<u64>(), zeroed in proptest::collection::vec((0usize..9, 0usize..3), 0..20)) {
        let mut r = common::rng(seed);
        let mut m = common::random_model(&mut r, ModelKind::Shfm, Task::Regression, 1, 8, 3);
        let mut last = sparsity(&m).element;
        for (i, f) in zeroed {
            m.set_factor(0, i, f, 0.0).unwrap();
            let s = sparsity(&m).element;
            prop_assert!(s >= last);
            last = s;
        }
    }
}

#[test]
fn perfect_predictions_score_one() {
    let labels = [0, 1, 2, 2, 1];
    assert_eq!(f1_scores(&labels, &labels, 3).unwrap(), (1.0, 1.0));
}

#[test]
fn fm_sparsity_ignores_context_row() {
    let mut m = FactorizedModel::new(ModelKind::Fm, Task::Regression, 1, 2, 2).unwrap();
    m.set_factor(0, 1, 0, 1.0).unwrap();
    assert_eq!(sparsity(&m).element, 0.75);
    let mut h = FactorizedModel::new(ModelKind::Shfm, Task::Regression, 1, 2, 2).unwrap();
    h.set_factor(0, 1, 0, 1.0).unwrap();
    assert!((sparsity(&h).element - 5.0 / 6.0).abs() < 1e-15);
}
