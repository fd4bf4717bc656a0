mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{scripted, StraightLine};
use tdoa_af::harness::Scenario;
use tdoa_af::measurement::Point;
use tdoa_af::optim::{rmsprop_af_step, Algorithm, OptimizerConfig, OptimizerState};

#[test]
fn rmsprop_af_matches_straight_line_oracle() {
    let config = OptimizerConfig {
        buffer_size: 3,
        ..OptimizerConfig::new(Algorithm::RmsPropAf)
    };
    for grads in scripted() {
        let mut state = OptimizerState::new(Point::new(5.0, -7.0), &config);
        let mut oracle = StraightLine::new([5.0, -7.0]);
        for (idx, g) in grads.iter().enumerate() {
            rmsprop_af_step(&mut state, &Point::new(g[0], g[1]), &config).unwrap();
            oracle.step(
                idx + 1,
                *g,
                config.learning_rate,
                config.decay_threshold,
                config.smoothing,
            );
            assert_eq!(
                [state.position.x, state.position.y],
                oracle.p,
                "position at k={}",
                idx + 1
            );
            assert_eq!(
                [state.accumulator.x, state.accumulator.y],
                oracle.r,
                "accumulator at k={}",
                idx + 1
            );
            assert_eq!(state.current_rho, oracle.rho, "rho at k={}", idx + 1);
            for a in 0..2 {
                assert_eq!(state.buffers[a].populated(), &oracle.buf[a][..oracle.filled]);
            }
        }
    }
}

#[test]
fn rmsprop_af_wraps_after_capacity() {
    // Fourth entry overwrites the first slot, so the spike at k=1 drops out.
    let config = OptimizerConfig {
        buffer_size: 3,
        ..OptimizerConfig::new(Algorithm::RmsPropAf)
    };
    let mut state = OptimizerState::new(Point::zeros(), &config);
    for g in [30.0, 1.0, 1.0, 1.0] {
        rmsprop_af_step(&mut state, &Point::new(g, g), &config).unwrap();
    }
    assert_eq!(state.buffers[0].populated(), &[1.0, 1.0, 1.0]);
    assert_eq!(state.current_rho, [0.99, 0.99]);
}

#[test]
fn correlated_noise_has_configured_covariance() {
    let cov = Scenario::scenario1().covariance().unwrap();
    let m = cov.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 100_000;
    let mut sum = vec![0.0; m];
    let mut outer = vec![vec![0.0; m]; m];
    for _ in 0..draws {
        let u = cov.sample(&mut rng);
        for i in 0..m {
            sum[i] += u[i];
            for j in 0..m {
                outer[i][j] += u[i] * u[j];
            }
        }
    }
    let n = draws as f64;
    for i in 0..m {
        for j in 0..m {
            let c = outer[i][j] / n - sum[i] / n * sum[j] / n;
            if i == j {
                assert!((c - 0.4).abs() <= 0.05 * 0.4, "var[{i}] = {c}");
            } else {
                assert!((c - 0.1).abs() <= 0.02, "cov[{i},{j}] = {c}");
            }
        }
    }
}
