use proptest::prelude::*;

use procopt::ahp::{self, ComparisonMatrix, Verdict};

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    idx
}

/// Weight vectors whose pairwise ratios stay inside the nine-point scale.
fn scale_weights() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=10).prop_flat_map(|m| prop::collection::vec(1.0f64..3.0, m))
}

/// Reciprocal matrices with entries drawn from the nine-point scale.
fn reciprocal_matrix() -> impl Strategy<Value = ComparisonMatrix> {
    let scale: Vec<f64> = (1..=9).flat_map(|k| [k as f64, 1.0 / k as f64]).collect();
    (2usize..=8).prop_flat_map(move |m| {
        prop::collection::vec(prop::sample::select(scale.clone()), m * (m - 1) / 2).prop_map(
            move |upper| {
                let mut rows = vec![vec![1.0; m]; m];
                let mut k = 0;
                for i in 0..m {
                    for j in i + 1..m {
                        rows[i][j] = upper[k];
                        rows[j][i] = 1.0 / upper[k];
                        k += 1;
                    }
                }
                ComparisonMatrix::from_rows(&rows).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn consistent_matrices_recover_their_weights(w in scale_weights()) {
        let total: f64 = w.iter().sum();
        let out = ahp::derive_weights(&ComparisonMatrix::consistent(&w)).unwrap();
        for (got, raw) in out.weights.iter().zip(&w) {
            prop_assert!((got - raw / total).abs() < 1e-12);
        }
        prop_assert!(out.ci.abs() < 1e-12);
        prop_assert!((out.lambda_max - w.len() as f64).abs() < 1e-9);
        if let Some(cr) = out.cr {
            prop_assert!(cr.abs() < 1e-12);
        }
        prop_assert_eq!(ahp::check_consistency(&out, 0.08), Verdict::Accept);
    }

    #[test]
    fn lambda_max_is_at_least_m(matrix in reciprocal_matrix()) {
        let out = ahp::derive_weights(&matrix).unwrap();
        prop_assert!(out.lambda_max >= matrix.size() as f64 - 1e-9);
        prop_assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_rescaling_keeps_the_weight_order(w in scale_weights(), pick in any::<prop::sample::Index>(), c in 0.5f64..2.0) {
        // rescaling criterion k by c keeps a_ij = w_i / w_j, so the matrix stays consistent
        let k = pick.index(w.len());
        let mut scaled = w.clone();
        scaled[k] *= c;
        let m = w.len();
        let base = ComparisonMatrix::consistent(&w);
        let mut rows: Vec<Vec<f64>> = (0..m).map(|i| base.row(i).to_vec()).collect();
        for j in 0..m {
            if j != k {
                rows[k][j] *= c;
                rows[j][k] /= c;
            }
        }
        let rescaled = ComparisonMatrix::from_rows(&rows).unwrap();
        prop_assume!(rescaled.validate().is_ok());
        let before = ahp::derive_weights(&ComparisonMatrix::consistent(&scaled)).unwrap();
        let after = ahp::derive_weights(&rescaled).unwrap();
        prop_assert_eq!(argsort(&before.weights), argsort(&after.weights));
    }
}

#[test]
fn all_ones_matrix_is_perfectly_consistent() {
    let out = ahp::derive_weights(&ComparisonMatrix::consistent(&[1.0; 4])).unwrap();
    assert!(out.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
    assert!((out.lambda_max - 4.0).abs() < 1e-12);
    assert!(out.ci.abs() < 1e-12 && out.cr.unwrap().abs() < 1e-12);
}

#[test]
fn strongly_intransitive_judgments_are_rejected() {
    // 1 ≻ 2 ≻ 3 but 3 ≻ 1
    let m = ComparisonMatrix::from_rows(&[
        vec![1.0, 5.0, 1.0 / 5.0],
        vec![1.0 / 5.0, 1.0, 5.0],
        vec![5.0, 1.0 / 5.0, 1.0],
    ])
    .unwrap();
    let out = ahp::derive_weights(&m).unwrap();
    assert!(out.cr.unwrap() > 0.08);
    assert_eq!(ahp::check_consistency(&out, 0.08), Verdict::Reject);
}

#[test]
fn two_criteria_have_no_consistency_ratio() {
    let out = ahp::derive_weights(&ComparisonMatrix::consistent(&[3.0, 1.0])).unwrap();
    assert_eq!(out.cr, None);
    assert_eq!(ahp::check_consistency(&out, 0.0), Verdict::Accept);
}
