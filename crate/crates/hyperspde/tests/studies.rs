use hyperspde::experiments::{run_mc_study, EstimatorPath, NRule, StudyConfig};
use hyperspde::kernels::KernelProfile;
use hyperspde::measurements::{extract_measurements, make_placement};
use hyperspde::model::Preset;
use hyperspde::spectral_sim::{simulate, Integrator, SimOptions, TimeGrid};

#[test]
fn noise_is_independent_across_locations() {
    let spec = Preset::PlateStructural.spec();
    let n = 4000;
    let grid = TimeGrid::new(1.0, n).unwrap();
    let opts = SimOptions {
        record_increments: true,
        ..Default::default()
    };
    let paths = simulate(&spec, 512, grid, Integrator::Exact, 31, opts).unwrap();
    let prof = KernelProfile::bump();
    let pl = make_placement(3, 0.1, 1.0, 0.1).unwrap();
    let ms = extract_measurements(&paths, &pl, &prof, &spec).unwrap();
    let noise: Vec<&Vec<f64>> = ms.iter().map(|m| m.noise.as_ref().unwrap()).collect();

    // per-step variance h |K|^2, to 4 standard errors of a chi-square mean
    for e in &noise {
        let var = e.iter().map(|x| x * x).sum::<f64>() / (n as f64 * grid.h());
        assert!((var / prof.norm_sq() - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "{var}");
    }
    for i in 0..noise.len() {
        for j in i + 1..noise.len() {
            let dot: f64 = noise[i].iter().zip(noise[j]).map(|(a, b)| a * b).sum();
            let ni: f64 = noise[i].iter().map(|x| x * x).sum();
            let nj: f64 = noise[j].iter().map(|x| x * x).sum();
            let corr = dot / (ni * nj).sqrt();
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr({i},{j}) = {corr}");
        }
    }
}

#[test]
fn initial_condition_washes_out() {
    let mut c = StudyConfig::new("ic", Preset::PlateStructural.spec(), vec![0.1, 0.05, 0.025]);
    c.replicates = 6;
    c.n_steps = 4000;
    c.seed = 5;
    c.estimator = EstimatorPath::Decomposition;
    c.n_rule = NRule::Fixed(2);
    let base = run_mc_study(&c).unwrap();
    let mut moved = c.clone();
    moved.spec.initial_u = vec![1.0, 0.5, 0.25];
    moved.spec.initial_v = vec![0.0, 1.0];
    let ic = run_mc_study(&moved).unwrap();

    for i in 0..2 {
        let shift: Vec<f64> = base
            .cells
            .iter()
            .zip(&ic.cells)
            .map(|(x, y)| {
                let s: f64 = x.outcomes.iter().zip(&y.outcomes).map(|(a, b)| (a.estimate[i] - b.estimate[i]).abs()).sum();
                s / x.count() as f64
            })
            .collect();
        let rmse_shift: Vec<f64> = base
            .cells
            .iter()
            .zip(&ic.cells)
            .map(|(x, y)| (x.rmse(i, &base.truth) - y.rmse(i, &base.truth)).abs())
            .collect();
        assert!(shift.windows(2).all(|w| w[1] < w[0]), "parameter {i}: {shift:?}");
        assert!(rmse_shift[2] < rmse_shift[0], "parameter {i}: {rmse_shift:?}");
    }
}

// Only wave_weak: the semi-implicit scheme damps the stiff plate modes at this step.
#[test]
fn euler_matches_exact_on_wave() {
    let mut c = StudyConfig::new("parity", Preset::WaveWeak.spec(), vec![0.1, 0.05]);
    c.replicates = 40;
    c.seed = 5;
    c.estimator = EstimatorPath::Decomposition;
    c.n_rule = NRule::Fixed(2);
    let exact = run_mc_study(&c).unwrap();
    c.integrator = Integrator::Euler;
    let euler = run_mc_study(&c).unwrap();
    for (x, y) in exact.cells.iter().zip(&euler.cells) {
        for i in 0..2 {
            let (a, b) = (x.rmse(i, &exact.truth), y.rmse(i, &euler.truth));
            let se = x.rmse_se(i, &exact.truth).hypot(y.rmse_se(i, &euler.truth));
            assert!((a - b).abs() <= 3.0 * se, "delta {} parameter {i}: {a:e} vs {b:e} (se {se:e})", x.delta);
        }
    }
}
