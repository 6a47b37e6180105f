mod common;

use common::cases;
use ergodyn::registry::builtin;
use ergodyn::systems::{compose_orbit, sample_word, CommutingSystem, RandomWord, Weights};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn system(name: &str) -> CommutingSystem {
    builtin(name).unwrap().commuting().unwrap()
}

/// Endpoints of a word and of a permutation of it.
fn endpoints(sys: &CommutingSystem, symbols: &[u8], perm: &[usize], x0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = RandomWord::from_symbols(symbols.to_vec()).unwrap();
    let p = RandomWord::from_symbols(perm.iter().map(|&i| symbols[i]).collect()).unwrap();
    let a = compose_orbit(sys, &w, x0).unwrap().pop().unwrap();
    let b = compose_orbit(sys, &p, x0).unwrap().pop().unwrap();
    (a, b)
}

fn word_and_permutation(max_len: usize) -> impl Strategy<Value = (Vec<u8>, Vec<usize>)> {
    prop::collection::vec(1u8..=2, 1..=max_len).prop_flat_map(|symbols| {
        let idx: Vec<usize> = (0..symbols.len()).collect();
        (Just(symbols), Just(idx).prop_shuffle())
    })
}

proptest! {
    #![proptest_config(cases(128))]

    #[test]
    fn permuted_words_reach_the_same_endpoint(
        (symbols, perm) in word_and_permutation(24),
        name in prop::sample::select(vec!["cat-and-square", "cat-and-inverse", "times2-times3", "diag-mixed", "compact-diag"]),
        seed in any::<u64>(),
    ) {
        let sys = system(name);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x0 = sys.f1().sample_point(&mut rng);
        if name == "diag-mixed" {
            // 24 steps of diag(2, 1/2) may grow a coordinate by 2^24; start deep inside the ball.
            x0.iter_mut().for_each(|v| *v /= (1u64 << 24) as f64);
        }
        let (a, b) = endpoints(&sys, &symbols, &perm, &x0);
        prop_assert!(sys.f1().distance(&a, &b) <= 1e-9, "{a:?} vs {b:?}");
    }

    #[test]
    fn identical_inputs_give_identical_words_and_orbits(seed in any::<u64>(), nu1 in 0.0f64..=1.0, n in 1usize..200) {
        let nu = Weights::new(nu1, 1.0 - nu1).unwrap();
        let (a, b) = (sample_word(nu, n, seed), sample_word(nu, n, seed));
        prop_assert_eq!(&a, &b);
        let sys = system("cat-and-square").with_nu(nu);
        let x0 = [0.125, 0.375];
        let (oa, ob) = (compose_orbit(&sys, &a, &x0).unwrap(), compose_orbit(&sys, &b, &x0).unwrap());
        prop_assert!(oa.iter().flatten().zip(ob.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn word_counts_follow_the_weights() {
    let n = 100_000;
    for nu1 in [0.1, 0.5, 0.73] {
        let nu = Weights::new(nu1, 1.0 - nu1).unwrap();
        let freqs: Vec<f64> = (0..100u64).map(|s| sample_word(nu, n, s).counts[0] as f64 / n as f64).collect();
        let mean = freqs.iter().sum::<f64>() / 100.0;
        let sd = (freqs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        let se = sd / 10.0;
        assert!((mean - nu1).abs() <= 3.0 * se, "nu1 = {nu1}: mean {mean}, se {se}");
    }
}
