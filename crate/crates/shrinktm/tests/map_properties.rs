//! Distributional properties of the fitted map that need Monte Carlo or
//! other heavier machinery than the unit tests carry.

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use shrinktm::basegauss::{vecchia_coefficients, FamilyKind};
use shrinktm::geometry::{maximin_order, Locations};
use shrinktm::mapkernel::{HyperParams, Method};
use shrinktm::posterior::{fit_components, DataMatrix, FittedMap};

fn exp_hp() -> HyperParams {
    HyperParams {
        family: FamilyKind::Exponential,
        log_range: (0.3_f64).ln(),
        log_variance: 0.0,
        ..HyperParams::default()
    }
}

fn fit_tiny_map(n: usize, pts: Vec<Vec<f64>>, hp: &HyperParams, seed: u64) -> FittedMap {
    let locs = Locations::new(pts).unwrap();
    let ordering = maximin_order(&locs, None).unwrap();
    let base = vecchia_coefficients(&hp.base_family(), &locs, &ordering, hp.m).unwrap();
    let y = if n == 0 {
        DataMatrix::empty(locs.len())
    } else {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut values = Array2::zeros((n, locs.len()));
        for r in 0..n {
            for i in 0..locs.len() {
                let mean: f64 = base.xi[i]
                    .iter()
                    .zip(&base.g_sets[i])
                    .map(|(w, &j)| w * values[(r, j)])
                    .sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                values[(r, i)] = mean + base.tau2[i].sqrt() * e;
            }
        }
        DataMatrix::new(values).unwrap()
    };
    fit_components(&y, hp, &ordering, &base, Method::ShrinkTm).unwrap()
}

/// Conditional draws must match unconditional draws whose prefix happens to
/// fall near the conditioning values (rejection sampling as the oracle).
#[test]
fn conditional_draws_match_rejection_filtered_unconditional_draws() {
    let pts = vec![
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.25, 0.9],
        vec![0.7, 0.45],
    ];
    // moderate nonlinearity so the check exercises the kernel path
    let mut hp = exp_hp();
    hp.theta_sigma1 = -1.0;
    let map = fit_tiny_map(2, pts, &hp, 88);

    // conditioning prefix: the median field's first three ordered values
    let median = map.inverse(&[0.0, 0.0, 0.0, 0.0]).unwrap();
    let observed = &median[..3];

    // rejection oracle: unconditional draws whose prefix lands in a small
    // window around the observed values
    let band = 0.15;
    let total = 2_000_000;
    let uncond = map.sample(total, 404).unwrap();
    let mut accepted: Vec<f64> = Vec::new();
    for r in 0..total {
        let row = uncond.values().row(r);
        if (0..3).all(|j| (row[j] - observed[j]).abs() < band) {
            accepted.push(row[3]);
        }
    }
    assert!(accepted.len() > 1500, "only {} rejection hits", accepted.len());

    let cond = map.conditional_sample(20_000, 505, observed).unwrap();
    let mut cond4: Vec<f64> = (0..20_000).map(|r| cond.values()[(r, 3)]).collect();

    accepted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cond4.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = two_sample_ks(&accepted, &cond4);
    assert!(ks < 0.05, "KS distance {ks} between conditional and filtered draws");
}

fn two_sample_ks(a_sorted: &[f64], b_sorted: &[f64]) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a_sorted.len() as f64, b_sorted.len() as f64);
    let mut ks: f64 = 0.0;
    while i < a_sorted.len() && j < b_sorted.len() {
        if a_sorted[i] <= b_sorted[j] {
            i += 1;
        } else {
            j += 1;
        }
        ks = ks.max((i as f64 / na - j as f64 / nb).abs());
    }
    ks
}

/// Finite but extreme inputs clamp on the reference scale instead of
/// producing infinities, and the event is counted.
#[test]
fn forward_clamps_and_counts_extreme_inputs() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let map = fit_tiny_map(1, pts, &exp_hp(), 3);
    assert_eq!(map.clamp_count(), 0);
    // the first component has a fixed predictive scale, so a huge value
    // there must clamp; later components rescale with their inputs
    let y = vec![1e12, -1e12, 1e12, -1e12];
    let z = map.forward(&y).unwrap();
    assert!(z.iter().all(|v| v.is_finite() && v.abs() <= 8.2));
    assert!(map.clamp_count() >= 1);
    // inverse clamps wild reference inputs the same way
    let before = map.clamp_count();
    let y = map.inverse(&[55.0, -60.0, 0.0, 0.1]).unwrap();
    assert!(y.iter().all(|v| v.is_finite()));
    assert_eq!(map.clamp_count(), before + 2);
}

/// Round trips hold at the acceptance scale for a prior-only map as well as
/// fitted ones (quick version of the acceptance criterion).
#[test]
fn round_trip_with_prior_only_map() {
    let mut pts = Vec::new();
    for iy in 0..6 {
        for ix in 0..6 {
            pts.push(vec![ix as f64 / 5.0, iy as f64 / 5.0]);
        }
    }
    let map = fit_tiny_map(0, pts, &exp_hp(), 0);
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..30 {
        let z: Vec<f64> = (0..36).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = map.inverse(&z).unwrap();
        let z2 = map.forward(&y).unwrap();
        let err = z.iter().zip(&z2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "round trip error {err}");
    }
}
