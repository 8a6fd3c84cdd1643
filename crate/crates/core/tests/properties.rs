use kdd_core::io::{pattern_from_str, pattern_to_string};
use kdd_core::models::random_sensitivities;
use kdd_core::{
    approx_best_candidate, build_dense, collapse_readout, compute_w, dd_direct, dd_fft, exact_best_candidate,
    poisson_disc, threshold_w, trace_moment2, DesignConfig, GridShape, Keep, PoissonTarget, SamplingPattern,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape_strategy() -> impl Strategy<Value = GridShape> {
    (1usize..7, 1usize..6, 1usize..3).prop_map(|(ny, nz, t)| {
        if nz == 1 {
            GridShape::new(&[ny], t).unwrap()
        } else {
            GridShape::new(&[ny, nz], t).unwrap()
        }
    })
}

fn pattern_in(shape: GridShape, seed: u64, samples: usize) -> SamplingPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = shape.cells();
    let n = shape.len();
    let picks: Vec<(usize, usize)> = (0..samples)
        .map(|_| {
            let i = rng.random_range(0..cells);
            (i % n, i / n)
        })
        .collect();
    SamplingPattern::from_samples(shape, picks).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_and_direct_distributions_agree(shape in shape_strategy(), seed: u64, samples in 0usize..20) {
        let p = pattern_in(shape, seed, samples);
        let (a, b) = (dd_fft(&p), dd_direct(&p));
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-9 * (samples * samples).max(1) as f64);
        }
    }

    #[test]
    fn second_moment_matches_the_dense_gram(shape in shape_strategy(), seed: u64, samples in 1usize..12, coils in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = shape.frames();
        let sens = random_sensitivities(shape.phase_dims(), frames, frames, coils, &mut rng).unwrap();
        let p = pattern_in(shape, seed ^ 1, samples);
        let j = trace_moment2(&compute_w(&sens), &dd_fft(&p)).unwrap();
        let dense = build_dense(&sens, &p).unwrap().frobenius_sq();
        prop_assert!(close(j, dense, 1e-9), "{} vs {}", j, dense);
    }

    #[test]
    fn weights_are_conjugate_symmetric(shape in shape_strategy(), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = shape.frames();
        let sens = random_sensitivities(shape.phase_dims(), frames, 1, 2, &mut rng).unwrap();
        let w = compute_w(&sens);
        let grid = w.grid().unwrap();
        for t in 0..frames {
            for t2 in 0..frames {
                for d in 0..grid.len() {
                    let (a, b) = (w.get(d, t, t2), w.get(grid.neg(d), t2, t));
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn objective_is_translation_invariant(shape in shape_strategy(), seed: u64, samples in 1usize..12, shift in 0usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = shape.frames();
        let sens = random_sensitivities(shape.phase_dims(), frames, 1, 2, &mut rng).unwrap();
        let w = compute_w(&sens);
        let p = pattern_in(shape.clone(), seed, samples);
        let moved = p.translated(shift % shape.len());
        let (a, b) = (trace_moment2(&w, &dd_fft(&p)).unwrap(), trace_moment2(&w, &dd_fft(&moved)).unwrap());
        prop_assert!(close(a, b, 1e-9));
    }

    #[test]
    fn pattern_text_round_trips(shape in shape_strategy(), seed: u64, samples in 0usize..30) {
        let p = pattern_in(shape, seed, samples);
        let text = pattern_to_string(&p);
        let back = pattern_from_str(&text).unwrap();
        prop_assert_eq!(back.counts(), p.counts());
        prop_assert_eq!(pattern_to_string(&back), text);
    }

    #[test]
    fn exact_and_full_approximate_greedy_coincide(shape in shape_strategy(), seed: u64, fill in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = shape.frames();
        let sens = random_sensitivities(shape.phase_dims(), frames, 1, 2, &mut rng).unwrap();
        let w = compute_w(&sens);
        let config = DesignConfig::new(shape.cells() * fill / 2 + 1);
        let exact = exact_best_candidate(&w, &config).unwrap();
        let approx = approx_best_candidate(&threshold_w(&w, Keep::Fraction(1.0)).unwrap(), &config).unwrap();
        prop_assert_eq!(&exact.sequence, &approx.sequence);
        prop_assert_eq!(exact.objective.to_bits(), approx.objective.to_bits());
    }
}

#[test]
fn collapsed_readout_scales_with_readout_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (ny, m) = (6, 5);
    let sens = random_sensitivities(&[ny, m], 1, 1, 2, &mut rng).unwrap();
    let collapsed = collapse_readout(&compute_w(&sens.clone().with_readout(Some(1)).unwrap())).unwrap();
    let phase = SamplingPattern::from_samples(GridShape::new(&[ny], 1).unwrap(), [(0, 0), (1, 0), (4, 0), (4, 0)]).unwrap();
    let j = trace_moment2(&collapsed, &dd_fft(&phase)).unwrap();
    let lifted = phase.with_full_readout(1, m).unwrap();
    let dense = build_dense(&sens, &lifted).unwrap().frobenius_sq();
    assert!(close(m as f64 * j, dense, 1e-9), "{} vs {dense}", m as f64 * j);
}

#[test]
fn poisson_disc_respects_its_radius() {
    let shape = GridShape::new(&[32, 24], 2).unwrap();
    let disc = poisson_disc(&shape, PoissonTarget::Count(80), [1.0, 1.0], 4).unwrap();
    assert_eq!(disc.pattern.totals(), &[80, 80]);
    let n = shape.len();
    for t in 0..2 {
        let pts: Vec<(i64, i64)> = (0..n)
            .filter(|&k| disc.pattern.count(k, t) > 0)
            .map(|k| {
                let (y, z) = shape.coords(k);
                (y as i64, z as i64)
            })
            .collect();
        let wrap = |d: i64, len: i64| d.rem_euclid(len).min((-d).rem_euclid(len)) as f64;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let d = wrap(a.0 - b.0, 32).hypot(wrap(a.1 - b.1, 24));
                assert!(d + 1e-12 >= disc.r_min[t], "{d} < {}", disc.r_min[t]);
            }
        }
    }
}
