//! Metric oracles over random inputs: the ROUGE LCS against a full-table
//! dynamic program, BLEU/softmax-style invariants over generated corpora.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use radmem_core::metrics::{bleu_n, ce_scores, lcs_length, rouge_l_pair, LabelVector};
use radmem_core::numerics::{log_sum_exp, softmax, Matrix, Vector};

/// Full-matrix LCS reference, independent of the two-row implementation.
fn lcs_reference(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

fn random_tokens(rng: &mut ChaCha12Rng, max_len: usize, vocab: usize) -> Vec<String> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}

#[test]
fn lcs_matches_reference_dp_on_500_random_pairs() {
    let mut rng = ChaCha12Rng::seed_from_u64(600);
    for _ in 0..500 {
        let a = random_tokens(&mut rng, 12, 6);
        let b = random_tokens(&mut rng, 12, 6);
        assert_eq!(lcs_length(&a, &b), lcs_reference(&a, &b), "a={a:?} b={b:?}");
    }
}

#[test]
fn rouge_is_symmetric_and_bounded_on_random_pairs() {
    let mut rng = ChaCha12Rng::seed_from_u64(601);
    for _ in 0..200 {
        let a = random_tokens(&mut rng, 10, 5);
        let b = random_tokens(&mut rng, 10, 5);
        let f = rouge_l_pair(&a, &b).unwrap();
        let g = rouge_l_pair(&b, &a).unwrap();
        assert!((f - g).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn bleu_stays_bounded_and_perfect_on_self_match() {
    // Order monotonicity is a property of realistic corpora, not arbitrary
    // token soup (the geometric mean can rise when a higher-order precision
    // beats a lower one); the fixed-corpus case is covered by unit tests.
    let mut rng = ChaCha12Rng::seed_from_u64(602);
    for _ in 0..50 {
        let n_pairs = rng.random_range(1..=5);
        // Length at least 4 so every order has n-grams to score.
        let cands: Vec<Vec<String>> = (0..n_pairs)
            .map(|_| {
                let mut t = random_tokens(&mut rng, 9, 4);
                while t.len() < 4 {
                    t.push(format!("w{}", rng.random_range(0..4)));
                }
                t
            })
            .collect();
        let refs: Vec<Vec<String>> = cands
            .iter()
            .map(|_| {
                let mut t = random_tokens(&mut rng, 9, 4);
                while t.len() < 4 {
                    t.push(format!("w{}", rng.random_range(0..4)));
                }
                t
            })
            .collect();
        for n in 1..=4 {
            let s = bleu_n(&cands, &refs, n).unwrap();
            assert!((0.0..=1.0).contains(&s));
            let s_self = bleu_n(&refs, &refs, n).unwrap();
            assert_eq!(s_self, 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_sums_to_one_and_shifts_out(
        values in prop::collection::vec(-50.0f64..50.0, 1..24),
        shift in -30.0f64..30.0,
    ) {
        let v = Vector::new(values.clone()).unwrap();
        let s = softmax(&v);
        let sum: f64 = s.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(s.iter().all(|x| *x >= 0.0));

        let shifted = Vector::new(values.iter().map(|x| x + shift).collect()).unwrap();
        let s2 = softmax(&shifted);
        for (a, b) in s.iter().zip(s2.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_shift_identity(
        values in prop::collection::vec(-40.0f64..40.0, 1..20),
        shift in -25.0f64..25.0,
    ) {
        let v = Vector::new(values.clone()).unwrap();
        let shifted = Vector::new(values.iter().map(|x| x + shift).collect()).unwrap();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&v) - shift).abs() < 1e-10);
    }

    #[test]
    fn matvec_matches_triple_loop_oracle(seed in 0u64..500) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let rows = 32;
        let cols = 32;
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = Matrix::new(rows, cols, data.clone()).unwrap();
        let v: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = m.matvec(&Vector::new(v.clone()).unwrap()).unwrap();
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += data[r * cols + c] * v[c];
            }
            prop_assert!((out.get(r) - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_scores_stay_in_unit_interval(seed in 0u64..300, n in 1usize..12) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rand_labels = || -> Vec<LabelVector> {
            (0..n)
                .map(|_| {
                    let mut bits = [false; 14];
                    for b in bits.iter_mut() {
                        *b = rng.random_range(0.0..1.0) < 0.3;
                    }
                    LabelVector::new(bits)
                })
                .collect()
        };
        let pred = rand_labels();
        let truth = rand_labels();
        let (p, r, f1) = ce_scores(&pred, &truth).unwrap();
        for v in [p, r, f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
