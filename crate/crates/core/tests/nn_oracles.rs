mod common;

use common::{gradient_check, layer_errors, Shape};
use proptest::prelude::*;

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..20 {
        let e = gradient_check(seed);
        assert!(e < 1e-4, "seed {seed}: relative error {e:e}");
    }
}

#[test]
fn kernel_wider_than_image() {
    for (h, w) in [(1, 1), (1, 2), (2, 1), (3, 1)] {
        let s = Shape { b: 1, c: 2, h, w, m: 2, k: 5, pool: 1 };
        for e in layer_errors(s, 0) {
            assert!(e < 1e-5, "{h}x{w}: {e:e}");
        }
    }
}

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..=3, 1usize..=3, 1usize..=4, 1usize..=5, prop::sample::select(vec![1usize, 3, 5]))
        .prop_flat_map(|(pool, b, c, m, k)| {
            (pool..=12usize, pool..=12usize).prop_map(move |(h, w)| Shape { b, c, h, w, m, k, pool })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn layers_match_direct_loops(s in shape(), seed in any::<u64>()) {
        let [cf, cb, pf, pb] = layer_errors(s, seed);
        prop_assert!(cf < 1e-5, "conv forward {cf:e}");
        prop_assert!(cb < 1e-5, "conv backward {cb:e}");
        prop_assert!(pf < 1e-5, "pool forward {pf:e}");
        prop_assert!(pb < 1e-5, "pool adjoint {pb:e}");
    }
}
