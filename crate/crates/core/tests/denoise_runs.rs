use proptest::prelude::*;

use salm_core::alm::Termination;
use salm_core::denoise::{
    denoise, denoise_observed, kl_divergence, simulate_counts, DenoiseConfig, IntensityGrid, SyntheticImage,
};
use salm_core::numkit::Rng;

fn config(n: usize, seed: u64) -> DenoiseConfig {
    DenoiseConfig {
        q_tilde: Some(1.0),
        max_scale: n / 4,
        seed,
        ..DenoiseConfig::default()
    }
}

fn observation(n: usize, seed: u64) -> salm_core::denoise::CountsGrid {
    let truth = SyntheticImage::Blocks.render(n, 1000.0).unwrap();
    simulate_counts(&truth, &mut Rng::new(seed))
}

#[test]
fn runs_are_reproducible() {
    let z = observation(16, 3);
    let a = denoise(&z, &config(16, 5)).unwrap();
    let b = denoise(&z, &config(16, 5)).unwrap();
    assert_eq!(a.reconstruction, b.reconstruction);
    assert_eq!(a.metrics.len(), b.metrics.len());
}

#[test]
fn observer_sees_every_outer_iteration() {
    let z = observation(16, 4);
    let mut seen = Vec::new();
    let out = denoise_observed(&z, &config(16, 1), &mut |m| seen.push(m.k)).unwrap();
    assert_eq!(seen, (0..out.metrics.len()).collect::<Vec<_>>());
    assert_eq!(out.trace.len(), out.metrics.len());
}

#[test]
fn blocks_converge_and_first_step_descends() {
    let z = observation(32, 8);
    let out = denoise(&z, &config(32, 2)).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    let (first, last) = (&out.metrics[0], out.metrics.last().unwrap());
    assert!(out.f_initial > first.f);
    assert!(last.feasibility <= 1e-2);
    assert!(last.violated_fraction <= 0.01);
    assert!(first.violated_fraction > last.violated_fraction);
}

#[test]
fn looser_constraints_give_smoother_reconstructions() {
    let z = observation(16, 6);
    let tight = denoise(&z, &config(16, 9)).unwrap();
    let loose = denoise(
        &z,
        &DenoiseConfig {
            r_shift: 200.0,
            ..config(16, 9)
        },
    )
    .unwrap();
    assert!(loose.metrics.last().unwrap().f < tight.metrics.last().unwrap().f);
}

proptest! {
    #[test]
    fn counts_are_nonnegative_and_zero_where_dark(seed in 0u64..1000, level in 0.0f64..50.0) {
        let mut values = vec![level; 64];
        values[..8].fill(0.0);
        let truth = IntensityGrid::new(8, values).unwrap();
        let z = simulate_counts(&truth, &mut Rng::new(seed));
        prop_assert!(z.counts()[..8].iter().all(|&c| c == 0));
    }

    #[test]
    fn kl_is_zero_only_on_the_diagonal(a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let d = kl_divergence(a, b);
        prop_assert!(d >= 0.0);
        if (a - b).abs() > 1e-3 {
            prop_assert!(d > 0.0);
        }
    }
}
