use std::f64::consts::LN_2;

use proptest::prelude::*;
use qmimo_core::beamforming::{
    altmin_beamforming, mse_matrix, spectral_efficiency, update_combiner, update_precoder, update_weight, waterfilling_baseline,
    AltMinOptions,
};
use qmimo_core::bussgang::{bussgang_gain, effective_noise_cov, BussgangGain};
use qmimo_core::channel::{sample_symbols, saleh_valenzuela, SvParams, SymbolKind};
use qmimo_core::linalg::{c64, frobenius_sq, identity, logdet_hpd, max_abs_diff, CMat};
use qmimo_core::quantizer::DistortionTable;

struct Instance {
    h: CMat,
    f: CMat,
    g: BussgangGain,
    c_e: CMat,
    ns: usize,
}

fn instance(nt: usize, nr: usize, ns: usize, seed: u64, s2: f64) -> Instance {
    let h = saleh_valenzuela(nt, nr, &SvParams::default(), seed).unwrap().h;
    let f0 = sample_symbols(SymbolKind::Gaussian, nt, ns, seed.wrapping_add(1)).unwrap();
    let f = &f0 * c64(1.0 / frobenius_sq(&f0).sqrt(), 0.0);
    let bits: Vec<u32> = (0..nr).map(|i| 1 + ((seed as usize + i) % 5) as u32).collect();
    let g = bussgang_gain(&bits, DistortionTable::lloyd_max()).unwrap();
    let c_e = effective_noise_cov(&g, &h, &f, s2).unwrap();
    Instance { h, f, g, c_e, ns }
}

fn inverse(m: &CMat) -> CMat {
    m.clone().try_inverse().expect("invertible")
}

fn capacity(h: &CMat, f: &CMat, s2: f64) -> f64 {
    let hf = h * f;
    logdet_hpd(&(identity(h.nrows()) + &hf * hf.adjoint() * c64(1.0 / s2, 0.0))).unwrap() / LN_2
}

#[test]
fn scalar_awgn_link_has_shannon_rate() {
    let h = CMat::from_element(1, 1, c64(0.8, -0.6));
    let g = BussgangGain::identity(1);
    for (pt, s2) in [(1.0f64, 0.1), (2.0, 1.0), (0.5, 0.01)] {
        let f = CMat::from_element(1, 1, c64(pt.sqrt(), 0.0));
        let c_e = effective_noise_cov(&g, &h, &f, s2).unwrap();
        let u = update_combiner(&h, &f, &g, &c_e).unwrap();
        let se = spectral_efficiency(&h, &f, &u, &g, &c_e).unwrap();
        assert!((se - (1.0 + pt / s2).log2()).abs() < 1e-12);
    }
}

#[test]
fn altmin_without_quantization_reaches_capacity() {
    for (k, snr_db) in [0.0, 10.0, 20.0].into_iter().enumerate() {
        let s2 = 10f64.powf(-snr_db / 10.0);
        let h = saleh_valenzuela(6, 6, &SvParams::default(), 90 + k as u64).unwrap().h;
        let wf = waterfilling_baseline(&h, 1.0, s2, 3).unwrap();
        let (_, report) = altmin_beamforming(&h, &BussgangGain::identity(6), 1.0, s2, 3, &AltMinOptions::default()).unwrap();
        assert!((report.final_se - capacity(&h, &wf.f, s2)).abs() < 1e-2, "{snr_db} dB");
    }
}

#[test]
fn altmin_result_matches_its_beamformers() {
    let inst = instance(6, 6, 2, 4, 0.05);
    let (bf, report) = altmin_beamforming(&inst.h, &inst.g, 1.0, 0.05, 2, &AltMinOptions::default()).unwrap();
    let c_e = effective_noise_cov(&inst.g, &inst.h, &bf.f, 0.05).unwrap();
    let se = spectral_efficiency(&inst.h, &bf.f, &bf.u, &inst.g, &c_e).unwrap();
    assert!((se - report.final_se).abs() < 1e-12);
    assert!(frobenius_sq(&bf.f) <= 1.0 + 1e-9);
    assert!(report.converged);
    assert_eq!(report.objective_trace.len(), report.iterations);
}

#[test]
fn altmin_beats_waterfilling_under_coarse_quantization() {
    let table = DistortionTable::lloyd_max();
    let mut wins = 0;
    for k in 0..5u64 {
        let h = saleh_valenzuela(8, 8, &SvParams::default(), 300 + k).unwrap().h;
        let g = bussgang_gain(&[1; 8], table).unwrap();
        let s2 = 0.01;
        let wf = waterfilling_baseline(&h, 1.0, s2, 2).unwrap();
        let c_e = effective_noise_cov(&g, &h, &wf.f, s2).unwrap();
        let wf_se = spectral_efficiency(&h, &wf.f, &wf.u, &g, &c_e).unwrap();
        let (_, report) = altmin_beamforming(&h, &g, 1.0, s2, 2, &AltMinOptions::default()).unwrap();
        if report.final_se >= wf_se {
            wins += 1;
        }
    }
    assert_eq!(wins, 5);
}

#[test]
fn receive_permutation_leaves_altmin_rate_unchanged() {
    let inst = instance(5, 6, 2, 17, 0.1);
    let perm = [3usize, 0, 5, 1, 4, 2];
    let hp = CMat::from_fn(6, 5, |i, j| inst.h[(perm[i], j)]);
    let gp = BussgangGain::from_diag(perm.iter().map(|&i| inst.g.diag()[i]).collect()).unwrap();
    let opts = AltMinOptions::default();
    let (_, a) = altmin_beamforming(&inst.h, &inst.g, 1.0, 0.1, 2, &opts).unwrap();
    let (_, b) = altmin_beamforming(&hp, &gp, 1.0, 0.1, 2, &opts).unwrap();
    assert!((a.final_se - b.final_se).abs() < 1e-6, "{} vs {}", a.final_se, b.final_se);
}

#[test]
fn too_many_streams_is_rejected() {
    let h = saleh_valenzuela(3, 2, &SvParams::default(), 0).unwrap().h;
    assert!(altmin_beamforming(&h, &BussgangGain::identity(2), 1.0, 0.1, 3, &AltMinOptions::default()).is_err());
    assert!(waterfilling_baseline(&h, 1.0, 0.1, 0).is_err());
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64, f64)> {
    (1usize..7, 1usize..7, any::<u64>(), -1.0f64..3.0).prop_flat_map(|(nt, nr, seed, snr)| {
        (Just(nt), Just(nr), 1..=nt.min(nr), Just(seed), Just(10f64.powf(-snr)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wmmse_identities((nt, nr, ns, seed, s2) in dims()) {
        let inst = instance(nt, nr, ns, seed, s2);
        let u = update_combiner(&inst.h, &inst.f, &inst.g, &inst.c_e).unwrap();
        let w = update_weight(&inst.h, &inst.f, &inst.g, &inst.c_e).unwrap();
        let e = mse_matrix(&inst.h, &inst.f, &u, &inst.g, &inst.c_e).unwrap();
        let r = spectral_efficiency(&inst.h, &inst.f, &u, &inst.g, &inst.c_e).unwrap();
        prop_assert!(((&w * &e).trace().re - inst.ns as f64).abs() < 1e-9);
        prop_assert!((logdet_hpd(&w).unwrap() / LN_2 - r).abs() < 1e-9);
        // at the MMSE combiner the error covariance is the inverse weight
        prop_assert!(max_abs_diff(&e, &inverse(&w)) < 1e-9 * (1.0 + w.norm()));
    }

    #[test]
    fn combiner_matches_woodbury_form((nt, nr, ns, seed, s2) in dims()) {
        let inst = instance(nt, nr, ns, seed, s2);
        let u = update_combiner(&inst.h, &inst.f, &inst.g, &inst.c_e).unwrap();
        let l = CMat::from_fn(nr, ns, |i, j| (&inst.h * &inst.f)[(i, j)] * inst.g.diag()[i]);
        let ce_inv = inverse(&inst.c_e);
        let woodbury = &ce_inv * &l * inverse(&(identity(ns) + l.adjoint() * &ce_inv * &l));
        prop_assert!(max_abs_diff(&u, &woodbury) < 1e-8 * (1.0 + u.norm()));
    }

    #[test]
    fn arbitrary_combiner_never_beats_mmse((nt, nr, ns, seed, s2) in dims()) {
        let inst = instance(nt, nr, ns, seed, s2);
        let u = update_combiner(&inst.h, &inst.f, &inst.g, &inst.c_e).unwrap();
        let best = spectral_efficiency(&inst.h, &inst.f, &u, &inst.g, &inst.c_e).unwrap();
        let other = sample_symbols(SymbolKind::Gaussian, nr, ns, seed ^ 7).unwrap();
        let se = spectral_efficiency(&inst.h, &inst.f, &other, &inst.g, &inst.c_e).unwrap();
        prop_assert!(se <= best + 1e-9);
        // the rate of a combiner depends only on its column space
        let scaled = CMat::from_fn(nr, ns, |i, j| other[(i, j)] * c64(1.0 + j as f64, 0.5));
        let se_scaled = spectral_efficiency(&inst.h, &inst.f, &scaled, &inst.g, &inst.c_e).unwrap();
        prop_assert!((se - se_scaled).abs() < 1e-8);
    }

    #[test]
    fn precoder_respects_power_and_grows_with_budget((nt, nr, ns, seed, s2) in dims()) {
        let inst = instance(nt, nr, ns, seed, s2);
        let u = update_combiner(&inst.h, &inst.f, &inst.g, &inst.c_e).unwrap();
        let w = update_weight(&inst.h, &inst.f, &inst.g, &inst.c_e).unwrap();
        let mut last = 0.0;
        for pt in [0.01, 0.1, 1.0, 10.0] {
            let f = update_precoder(&inst.h, &inst.g, &u, &w, pt).unwrap();
            let p = frobenius_sq(&f);
            prop_assert!(p <= pt * (1.0 + 1e-9));
            prop_assert!(p >= last * (1.0 - 1e-9));
            last = p;
        }
    }

    #[test]
    fn altmin_objective_never_decreases((nt, nr, ns, seed, s2) in dims()) {
        let inst = instance(nt, nr, ns, seed, s2);
        let (bf, report) = altmin_beamforming(&inst.h, &inst.g, 1.0, s2, ns, &AltMinOptions::default()).unwrap();
        for w in report.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        prop_assert!(frobenius_sq(&bf.f) <= 1.0 + 1e-9);
        prop_assert!(report.final_se.is_finite() && report.final_se >= 0.0);
    }
}
