mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mlp_backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let worst = common::mlp_gradient_error(&mut rng, 150);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn actor_gradient_through_the_critic_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let worst = common::actor_gradient_error(&mut rng, 150);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn band_cost_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let worst = common::band_gradient_error(&mut rng, 150);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}
