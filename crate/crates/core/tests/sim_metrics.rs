use gps_core::grid::{frequency_radius, Field, Lattice, SupportMask};
use gps_core::metrics::{median, r_real_embedded, Histogram};
use gps_core::sim::{calibrate_flux, embed, make_phantom, oversample, r_noise, simulate_magnitudes};
use gps_core::solver::random_phase_start;
use gps_core::{
    aggregate, dft2, r_real, residual, rf_factor, Algorithm, Domain, MagnitudeData, NoiseSpec, Phantom, PhantomKind,
    RunRecord, SolverConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn setup(kind: PhantomKind, n: usize, seed: u64) -> (Phantom, Field, SupportMask) {
    let p = make_phantom(kind, Lattice::new(n, n).unwrap(), seed).unwrap();
    let (u0, s) = oversample(&p, 2.0, 0).unwrap();
    (p, u0, s)
}

#[test]
fn oversampling_preserves_mass_and_centers_support() {
    let (p, u0, s) = setup(PhantomKind::Vesicle, 64, 7);
    assert_eq!((u0.lattice().rows(), u0.lattice().cols()), (128, 128));
    assert_eq!(s.count(), 64 * 64);
    assert!(s.is_centered());
    let mass: f64 = u0.real_parts().iter().sum();
    assert!((mass - p.total()).abs() < 1e-9 * p.total());
    let (_, wide) = oversample(&p, 2.0, 2).unwrap();
    assert_eq!(wide.count(), 68 * 68);
    assert!(oversample(&p, 0.5, 0).is_err());
}

#[test]
fn phantom_density_is_nonnegative() {
    for kind in [PhantomKind::Vesicle, PhantomKind::Disks] {
        for seed in 0..20 {
            let p = make_phantom(kind, Lattice::new(32, 40).unwrap(), seed).unwrap();
            assert!(p.density().iter().all(|&d| d >= 0.0));
            assert!(p.total() > 0.0);
        }
    }
    assert!(make_phantom(PhantomKind::Disks, Lattice::new(8, 32).unwrap(), 0).is_err());
}

#[test]
fn noiseless_round_trip_has_zero_rf() {
    let (_, u0, _) = setup(PhantomKind::Vesicle, 32, 1);
    let data = simulate_magnitudes(&u0, &NoiseSpec::noiseless(), 0.0).unwrap();
    assert_eq!(rf_factor(&dft2(&u0), &data).unwrap(), 0.0);
    assert_eq!(r_noise(&data, &u0).unwrap(), 0.0);
}

#[test]
fn beamstop_mask_matches_predicate() {
    let (_, u0, _) = setup(PhantomKind::Disks, 32, 1);
    let k = frequency_radius(u0.lattice());
    for radius in [0.0, 1.0, 2.5, 5.0] {
        let data = simulate_magnitudes(&u0, &NoiseSpec::poisson(1e6, 3), radius).unwrap();
        for (i, &kr) in k.as_slice().iter().enumerate() {
            assert_eq!(data.is_measured(i), kr >= radius, "radius {radius} pixel {i}");
        }
        assert!(data.magnitudes().iter().all(|&b| b >= 0.0));
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let (_, u0, _) = setup(PhantomKind::Vesicle, 32, 2);
    let mut spec = NoiseSpec::poisson(1e5, 9);
    spec.readout_sigma = 0.5;
    let a = simulate_magnitudes(&u0, &spec, 3.0).unwrap();
    let b = simulate_magnitudes(&u0, &spec, 3.0).unwrap();
    assert_eq!(a, b);
    spec.seed = 10;
    assert_ne!(a, simulate_magnitudes(&u0, &spec, 3.0).unwrap());
}

#[test]
fn r_noise_falls_with_flux() {
    let (_, u0, _) = setup(PhantomKind::Vesicle, 32, 3);
    let at = |flux: f64| {
        let v: Vec<f64> = (0..10)
            .map(|seed| r_noise(&simulate_magnitudes(&u0, &NoiseSpec::poisson(flux, seed), 0.0).unwrap(), &u0).unwrap())
            .collect();
        median(&v)
    };
    let (a, b, c) = (at(1e5), at(1e6), at(1e7));
    assert!(a > b && b > c, "{a} {b} {c}");
    assert!(at(1e12) < 1e-3);
}

#[test]
fn calibration_lands_in_band() {
    let (_, u0, _) = setup(PhantomKind::Vesicle, 64, 1);
    let cal = calibrate_flux(&u0, 0.05, 0.0, 0.0, 1000).unwrap();
    assert!((0.045..=0.055).contains(&cal.r_noise), "{cal:?}");
    let fresh = r_noise(&simulate_magnitudes(&u0, &NoiseSpec::poisson(cal.flux, 1000), 0.0).unwrap(), &u0).unwrap();
    assert!((0.04..=0.06).contains(&fresh));
}

#[test]
fn residual_matches_fidelity_term() {
    let (_, u0, _) = setup(PhantomKind::Disks, 16, 5);
    let data = simulate_magnitudes(&u0, &NoiseSpec::poisson(1e4, 2), 2.0).unwrap();
    let z = random_phase_start(&data, 1).map(|v| v * 1.3 + Complex64::new(0.1, -0.2));
    let res = residual(&z, &data, Domain::Fourier).unwrap();
    for sigma in [0.01, 1.0, 7.5] {
        let g: f64 = z
            .values()
            .iter()
            .zip(data.magnitudes())
            .zip(data.measured())
            .filter(|(_, &m)| m)
            .map(|((v, b), _)| (v.norm() - b).powi(2) / (2.0 * sigma))
            .sum();
        assert!((res * res - 2.0 * sigma * g).abs() < 1e-10 * res * res);
    }
}

fn fake_run(seed: u64, rf: f64, image: &Field) -> RunRecord {
    RunRecord {
        rf_trace: vec![rf + 0.1, rf],
        best_rf: rf,
        best_iteration: 1,
        best_iterate: dft2(image),
        final_image: image.clone(),
        iterations_run: 2,
        config_echo: SolverConfig::new(Algorithm::GpsF, image.lattice(), seed),
    }
}

#[test]
fn aggregate_top_five_of_five_hundred() {
    let (_, u0, _) = setup(PhantomKind::Disks, 16, 1);
    let data = MagnitudeData::complete(u0.lattice(), dft2(&u0).magnitudes()).unwrap();
    let rfs: Vec<f64> = (0..500).map(|i| 0.05 + ((i * 7919) % 500) as f64 * 1e-4).collect();
    let runs: Vec<RunRecord> = rfs.iter().enumerate().map(|(i, &rf)| fake_run(i as u64, rf, &u0)).collect();
    let s = aggregate(&runs, &data, None, 5).unwrap();
    let mut sorted = rfs.clone();
    sorted.sort_by(f64::total_cmp);
    let top = &sorted[..5];
    let mean = top.iter().sum::<f64>() / 5.0;
    let std = (top.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
    assert!((s.rf_mean_topk - mean).abs() < 1e-15);
    assert!((s.rf_std_topk - std).abs() < 1e-15);
    assert_eq!(s.rf_histogram.counts.iter().sum::<usize>(), 500);
    assert_eq!(s.per_run.len(), 500);
    assert!(s.per_run.windows(2).all(|w| w[0].seed < w[1].seed));
    assert_eq!(s.best_trace, runs[s.best_seed as usize].rf_trace);
}

#[test]
fn aggregate_single_run_and_identical_runs() {
    let (p, u0, support) = setup(PhantomKind::Disks, 16, 1);
    let data = MagnitudeData::complete(u0.lattice(), dft2(&u0).magnitudes()).unwrap();
    let one = aggregate(&[fake_run(3, 0.2, &u0)], &data, Some((&p, &support)), 1).unwrap();
    assert_eq!(one.rf_mean_topk, 0.2);
    assert_eq!(one.rf_std_topk, 0.0);
    assert_eq!(one.per_run[0].r_real, Some(0.0));
    assert!(one.per_run[0].residual < 1e-10);

    let same: Vec<RunRecord> = (0..9).map(|s| fake_run(s, 0.07, &u0)).collect();
    let h = aggregate(&same, &data, None, 3).unwrap().rf_histogram;
    assert_eq!(h.counts, vec![9]);
    assert!(aggregate(&[], &data, None, 1).is_err());
    assert!(aggregate(&same, &data, None, 10).is_err());
}

#[test]
fn histogram_edges_cover_data() {
    let v: Vec<f64> = (0..60).map(|i| (i as f64 * 0.61).cos().abs()).collect();
    let h = Histogram::freedman_diaconis(&v);
    let (lo, _) = h.edges(0);
    let (_, hi) = h.edges(h.counts.len() - 1);
    assert!(v.iter().all(|&x| x >= lo && x <= hi));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn r_real_ignores_ambiguities(seed in 0u64..1000, dr in -2isize..=2, dc in -2isize..=2, twin in any::<bool>()) {
        let (p, u0, support) = setup(PhantomKind::Vesicle, 16, seed);
        let l = u0.lattice();
        let (c1, c2) = l.center();
        let mut moved = u0.roll(dr, dc);
        if twin {
            moved = Field::from_fn(l, |r, c| moved.get((2 * c1 + l.rows() - r) % l.rows(), (2 * c2 + l.cols() - c) % l.cols()));
        }
        prop_assert!(r_real(&moved, &p, &support).unwrap() < 1e-14);
    }

    #[test]
    fn aggregate_is_order_invariant(seed in any::<u64>(), k in 1usize..8) {
        let (_, u0, _) = setup(PhantomKind::Disks, 16, 2);
        let data = MagnitudeData::complete(u0.lattice(), dft2(&u0).magnitudes()).unwrap();
        // Repeated values exercise the tie-break.
        let runs: Vec<RunRecord> = (0..8u64).map(|s| fake_run(s, 0.01 * ((s * 3 + seed) % 4) as f64, &u0)).collect();
        let mut shuffled = runs.clone();
        shuffled.rotate_left((seed % 8) as usize);
        shuffled.swap(0, 5);
        let a = aggregate(&runs, &data, None, k).unwrap();
        let b = aggregate(&shuffled, &data, None, k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn r_real_embedded_scales_linearly(scale in 0.0f64..3.0) {
        let (p, u0, _) = setup(PhantomKind::Disks, 16, 4);
        let (truth, _) = embed(&p, u0.lattice()).unwrap();
        let got = r_real_embedded(&u0.scale(scale), &truth).unwrap();
        prop_assert!((got - (1.0 - scale).abs()).abs() < 1e-12);
    }
}
