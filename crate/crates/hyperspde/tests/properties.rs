use proptest::prelude::*;

use hyperspde::estimator::{c_constant, fisher_matrix};
use hyperspde::experiments::fit_rate;
use hyperspde::kernels::{KernelProfile, KernelTable};
use hyperspde::measurements::{extract_measurements, make_placement, Placement};
use hyperspde::model::{scan_ell, validate_parameters, ModeSymbol, ModelSpec, Term};
use hyperspde::spectral_sim::{mn_scalar, simulate, transition, Integrator, SimOptions, TimeGrid};

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * scale.max(f64::MIN_POSITIVE)
}

/// Valid single-term-or-two-term specs with negative leading coefficients.
fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    (
        0.5f64..2.5,
        -2.0f64..-0.05,
        prop::option::of((0.0f64..0.45, -1.0f64..1.0)),
        0.0f64..0.5,
        -2.0f64..-0.05,
        0.5f64..2.0,
    )
        .prop_map(|(a1, th1, second, bfrac, eta1, len)| {
            let mut elastic = vec![Term::new(a1, th1)];
            if let Some((f, th2)) = second {
                elastic.push(Term::new(a1 * f, th2));
            }
            ModelSpec {
                domain_length: len,
                elastic,
                damping: vec![Term::new(a1 * bfrac, eta1)],
                horizon: 1.0,
                initial_u: vec![],
                initial_v: vec![],
            }
        })
}

fn symbol_strategy() -> impl Strategy<Value = ModeSymbol> {
    // oscillating, overdamped and near-critical branches
    (-500.0f64..-0.1, -40.0f64..0.0).prop_map(|(a, b)| ModeSymbol::from_ab(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ell_identity(spec in spec_strategy(), k in 1usize..2000) {
        let s = spec.mode_symbol(k);
        let scale = s.a.abs().max(s.b * s.b / 4.0).max(s.ell.abs());
        prop_assert!((s.ell + s.a + s.b * s.b / 4.0).abs() <= 4.0 * f64::EPSILON * scale);
        prop_assert!(spec.lambda(k + 1) > spec.lambda(k));
    }

    #[test]
    fn sufficient_condition_implies_scan(spec in spec_strategy()) {
        let report = validate_parameters(&spec, 2000).unwrap();
        if report.sufficient_condition {
            prop_assert_eq!(scan_ell(&spec, 2000).nonpositive, 0);
        }
    }

    #[test]
    fn wronskian(sym in symbol_strategy(), t in 0.0f64..1.0) {
        let v = mn_scalar(t, &sym).unwrap();
        let w = v.m * v.n_prime - v.n * v.m_prime;
        let scale = (v.m * v.n_prime).abs() + (v.n * v.m_prime).abs();
        prop_assert!(close(w, (sym.b * t).exp(), 1e-8, scale.max((sym.b * t).exp())));
    }

    #[test]
    fn flow_and_covariance_composition(sym in symbol_strategy(), h1 in 1e-4f64..0.5, h2 in 1e-4f64..0.5) {
        let a = transition(h1, &sym).unwrap();
        let b = transition(h2, &sym).unwrap();
        let ab = transition(h1 + h2, &sym).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let prod = b.phi[i][0] * a.phi[0][j] + b.phi[i][1] * a.phi[1][j];
                let sc = (b.phi[i][0] * a.phi[0][j]).abs() + (b.phi[i][1] * a.phi[1][j]).abs();
                prop_assert!(close(prod, ab.phi[i][j], 1e-8, sc));
                let mut q = b.q[i][j];
                let mut qs = b.q[i][j].abs();
                for k in 0..2 {
                    for l in 0..2 {
                        let t = b.phi[i][k] * a.q[k][l] * b.phi[j][l];
                        q += t;
                        qs += t.abs();
                    }
                }
                prop_assert!(close(q, ab.q[i][j], 1e-8, qs));
            }
        }
    }

    #[test]
    fn scaling_isometry(delta in 0.02f64..0.2, frac in 0.0f64..1.0) {
        let x = delta + frac * (1.0 - 2.0 * delta);
        let c = KernelTable::new(&KernelProfile::bump(), delta, 1024, 1.0).unwrap().coeffs_unchecked(x).unwrap();
        prop_assert!(c.tail_deficit().abs() <= 1e-8 * c.norm_sq);
    }

    #[test]
    fn placements_are_packed(n in 1usize..30, delta in 0.005f64..0.2, margin in 0.0f64..0.3) {
        match make_placement(n, delta, 1.0, margin) {
            Ok(Placement { locations, .. }) => {
                prop_assert_eq!(locations.len(), n);
                for w in locations.windows(2) {
                    prop_assert!(w[1] - w[0] >= 2.0 * delta * (1.0 - 1e-9));
                }
                for x in &locations {
                    prop_assert!(*x - delta >= -1e-12 && *x + delta <= 1.0 + 1e-12);
                }
            }
            Err(_) => prop_assert!(n > Placement::capacity(delta, 1.0, margin) || n == 1 || margin < delta),
        }
    }

    #[test]
    fn power_laws_are_recovered(slope in -3.0f64..3.0, c in 0.01f64..100.0) {
        let d = [0.2f64, 0.1, 0.05, 0.02];
        let r: Vec<f64> = d.iter().map(|x| c * x.powf(slope)).collect();
        let f = fit_rate(&d, &r).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn c_constant_is_positive_and_monotone(eta in -5.0f64..5.0, t in 0.1f64..3.0) {
        let c = c_constant(eta, t);
        prop_assert!(c > 0.0);
        prop_assert!(c_constant(eta + 0.01, t) > c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fisher_relabel_invariant_and_psd(seed in 0u64..1000) {
        let spec = hyperspde::model::Preset::PlateStructural.spec();
        let paths = simulate(&spec, 96, TimeGrid::new(1.0, 400).unwrap(), Integrator::Exact, seed, SimOptions::default()).unwrap();
        let pl = make_placement(3, 0.1, 1.0, 0.15).unwrap();
        let ms = extract_measurements(&paths, &pl, &KernelProfile::bump(), &spec).unwrap();
        let f = fisher_matrix(&ms).unwrap().matrix;
        let rev: Vec<_> = ms.iter().rev().cloned().collect();
        prop_assert_eq!(&fisher_matrix(&rev).unwrap().matrix, &f);
        let eig = f.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-12 * f.trace());
    }

    #[test]
    fn measurements_are_linear(seed in 0u64..1000, scale in -3.0f64..3.0) {
        let spec = hyperspde::model::Preset::WaveWeak.spec();
        let paths = simulate(&spec, 64, TimeGrid::new(1.0, 50).unwrap(), Integrator::Exact, seed, SimOptions::default()).unwrap();
        let pl = make_placement(2, 0.1, 1.0, 0.2).unwrap();
        let prof = KernelProfile::bump();
        let a = extract_measurements(&paths, &pl, &prof, &spec).unwrap();
        let b = extract_measurements(&paths.scaled(scale), &pl, &prof, &spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (rx, ry) in x.y.iter().zip(&y.y) {
                for (p, q) in rx.iter().zip(ry) {
                    prop_assert!((scale * p - q).abs() <= 1e-12 * (1.0 + p.abs()));
                }
            }
        }
    }
}
