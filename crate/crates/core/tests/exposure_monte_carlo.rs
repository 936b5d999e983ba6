//! Exposure laws against direct simulation of independent neighbour
//! treatments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillsense_core::graph::{exposure_distribution, exposure_value, ExposureSpec};

const DRAWS: usize = 1_000_000;

fn check(spec: &ExposureSpec, props: &[f64], seed: u64) {
    let pmf = exposure_distribution(spec, props).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; pmf.len()];
    let mut t = vec![0u8; props.len()];
    for _ in 0..DRAWS {
        for (ti, &p) in t.iter_mut().zip(props) {
            *ti = u8::from(rng.gen::<f64>() < p);
        }
        counts[exposure_value(spec, &t).unwrap()] += 1;
    }
    for (g, (&c, &p)) in counts.iter().zip(&pmf).enumerate() {
        let freq = c as f64 / DRAWS as f64;
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
        if p == 0.0 {
            assert_eq!(c, 0, "level {g} has zero probability but was drawn");
        } else {
            assert!((freq - p).abs() <= 4.0 * se, "level {g}: frequency {freq} vs {p} (se {se})");
        }
    }
}

#[test]
fn count_exposure_matches_simulation() {
    check(&ExposureSpec::count(6), &[0.1, 0.5, 0.7, 0.9, 0.3, 0.25], 1);
}

#[test]
fn clamped_count_folds_the_tail() {
    check(&ExposureSpec::count_clamped(2), &[0.6, 0.5, 0.7, 0.8, 0.4], 2);
}

#[test]
fn any_and_threshold_match_simulation() {
    let props = [0.15, 0.35, 0.05, 0.6];
    check(&ExposureSpec::any(), &props, 3);
    check(&ExposureSpec::threshold(2).unwrap(), &props, 4);
}
