//! Local measurements and the observation vector.
//!
//! At location `x` the observation vector is
//! `Y = (u^{D_1}, ..., u^{D_p}, v^{D_1}, ..., v^{D_q})` with
//! `u^{D_i} = <u, (-Lap)^{alpha_i} K_{delta,x}>` and `v^{D_j}` analogous with
//! `beta_j`; the driving path is `v_{delta,x} = <v, K_{delta,x}>`. All of them
//! are evaluated in the sine basis.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::kernels::{KernelProfile, KernelTable, SineCoeffs};
use crate::model::ModelSpec;
use crate::spectral_sim::{ModePaths, TimeGrid};

/// Default margin of the location set, as a fraction of `L`.
pub const DEFAULT_MARGIN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub delta: f64,
    pub domain_length: f64,
    pub margin: f64,
    pub locations: Vec<f64>,
}

impl Placement {
    pub fn n(&self) -> usize {
        self.locations.len()
    }

    /// Largest `N` with `2 N delta <= L - 2 margin`.
    pub fn capacity(delta: f64, domain_length: f64, margin: f64) -> usize {
        ((domain_length - 2.0 * margin) / (2.0 * delta) + 1e-12).floor().max(0.0) as usize
    }
}

/// `N` equispaced locations from `margin` to `L - margin` (one centred location for `N = 1`).
pub fn make_placement(n: usize, delta: f64, domain_length: f64, margin: f64) -> Result<Placement> {
    if n == 0 || !(delta > 0.0) || !(domain_length > 0.0) || !(margin >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "placement needs N >= 1, delta > 0, L > 0, margin >= 0 (got {n}, {delta}, {domain_length}, {margin})"
        )));
    }
    let max_feasible = Placement::capacity(delta, domain_length, margin);
    if n > max_feasible {
        return Err(Error::Capacity {
            requested: n,
            delta,
            max_feasible,
        });
    }
    let locations: Vec<f64> = if n == 1 {
        vec![0.5 * domain_length]
    } else {
        let span = domain_length - 2.0 * margin;
        (0..n)
            .map(|i| margin + span * i as f64 / (n - 1) as f64)
            .collect()
    };
    // The bump vanishes to all orders at |y| = 1, so a support touching the boundary is allowed.
    for &x in &locations {
        if !(x - delta >= -1e-12 * domain_length && x + delta <= domain_length * (1.0 + 1e-12)) {
            return Err(Error::Placement {
                lo: x - delta,
                hi: x + delta,
                length: domain_length,
            });
        }
    }
    if locations.windows(2).any(|w| w[1] - w[0] < 2.0 * delta * (1.0 - 1e-12)) {
        return Err(Error::Capacity {
            requested: n,
            delta,
            max_feasible,
        });
    }
    Ok(Placement {
        delta,
        domain_length,
        margin,
        locations,
    })
}

/// Sampled observation vector and driving path at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub x: f64,
    pub delta: f64,
    pub grid: TimeGrid,
    pub p: usize,
    pub q: usize,
    /// `y[r][n]`: component `r` of `Y` at `t_n`; `u`-type rows first.
    pub y: Vec<Vec<f64>>,
    /// `v_{delta,x}(t_n)`.
    pub v: Vec<f64>,
    /// Noise increments `<W(t_{n+1}) - W(t_n), K_{delta,x}>` when recorded.
    pub noise: Option<Vec<f64>>,
}

impl MeasurementSet {
    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    /// `sum_n (v(t_{n+1}) - v(t_n))^2`.
    pub fn quadratic_variation(&self) -> f64 {
        self.v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut out = String::from("t");
        for i in 1..=self.p {
            out.push_str(&format!(",u_delta_{i}"));
        }
        for j in 1..=self.q {
            out.push_str(&format!(",v_delta_{j}"));
        }
        out.push_str(",v\n");
        for n in 0..=self.grid.n_steps {
            out.push_str(&format!("{:e}", self.grid.t(n)));
            for row in &self.y {
                out.push_str(&format!(",{:e}", row[n]));
            }
            out.push_str(&format!(",{:e}\n", self.v[n]));
        }
        w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Linear maps from mode states to measurements for a fixed placement.
///
/// Row layout: `wu` has `N p` rows (`l p + i`), `wv` has `N (q + 1)` rows
/// (`l (q + 1) + j`, the last one per location being the plain `v` row), and
/// `wc` has `N` rows of plain coefficients.
#[derive(Debug, Clone)]
pub struct Projector {
    pub p: usize,
    pub q: usize,
    pub n_loc: usize,
    pub wu: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wc: DMatrix<f64>,
    pub coeffs: Vec<SineCoeffs>,
}

impl Projector {
    pub fn new(spec: &ModelSpec, profile: &KernelProfile, placement: &Placement, k_max: usize) -> Result<Projector> {
        if (placement.domain_length - spec.domain_length).abs() > 1e-12 * spec.domain_length {
            return Err(Error::Dimension(format!(
                "placement domain {} differs from model domain {}",
                placement.domain_length, spec.domain_length
            )));
        }
        let table = KernelTable::new(profile, placement.delta, k_max, spec.domain_length)?;
        let coeffs = placement
            .locations
            .iter()
            .map(|&x| table.coeffs(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Projector::from_coeffs(spec, coeffs))
    }

    pub fn from_coeffs(spec: &ModelSpec, coeffs: Vec<SineCoeffs>) -> Projector {
        let (p, q, n_loc) = (spec.p(), spec.q(), coeffs.len());
        let k_max = coeffs.first().map_or(0, |c| c.k_max());
        let lambda: Vec<f64> = (1..=k_max).map(|k| spec.lambda(k)).collect();
        let mut wu = DMatrix::zeros(n_loc * p, k_max);
        let mut wv = DMatrix::zeros(n_loc * (q + 1), k_max);
        let mut wc = DMatrix::zeros(n_loc, k_max);
        for (l, c) in coeffs.iter().enumerate() {
            for k in 0..k_max {
                for (i, t) in spec.elastic.iter().enumerate() {
                    wu[(l * p + i, k)] = lambda[k].powf(t.exponent) * c.c[k];
                }
                for (j, t) in spec.damping.iter().enumerate() {
                    wv[(l * (q + 1) + j, k)] = lambda[k].powf(t.exponent) * c.c[k];
                }
                wv[(l * (q + 1) + q, k)] = c.c[k];
                wc[(l, k)] = c.c[k];
            }
        }
        Projector {
            p,
            q,
            n_loc,
            wu,
            wv,
            wc,
            coeffs,
        }
    }

    pub fn k_max(&self) -> usize {
        self.wc.ncols()
    }
}

/// Evaluates every location's observation vector on the full path grid.
pub fn extract_measurements(
    paths: &ModePaths,
    placement: &Placement,
    profile: &KernelProfile,
    spec: &ModelSpec,
) -> Result<Vec<MeasurementSet>> {
    let proj = Projector::new(spec, profile, placement, paths.k_max)?;
    extract_with(paths, &proj, placement.delta)
}

/// Same as [`extract_measurements`] with a prebuilt projector.
pub fn extract_with(paths: &ModePaths, proj: &Projector, delta: f64) -> Result<Vec<MeasurementSet>> {
    let k = paths.k_max;
    let cols = paths.grid.n_steps + 1;
    if proj.k_max() != k || paths.u.len() != k * cols || paths.v.len() != k * cols {
        return Err(Error::Dimension(format!(
            "projector has {} modes, paths have {k} modes over {cols} time points",
            proj.k_max()
        )));
    }
    let u = DMatrixView::from_slice(&paths.u, k, cols);
    let v = DMatrixView::from_slice(&paths.v, k, cols);
    let yu = &proj.wu * u;
    let yv = &proj.wv * v;
    let nb = match &paths.increments {
        Some(d) => Some(&proj.wc * DMatrixView::from_slice(d, k, paths.grid.n_steps)),
        None => None,
    };
    let (p, q) = (proj.p, proj.q);
    let out = (0..proj.n_loc)
        .map(|l| {
            let mut y = Vec::with_capacity(p + q);
            for i in 0..p {
                y.push(yu.row(l * p + i).iter().copied().collect());
            }
            for j in 0..q {
                y.push(yv.row(l * (q + 1) + j).iter().copied().collect());
            }
            MeasurementSet {
                x: proj.coeffs[l].x,
                delta,
                grid: paths.grid,
                p,
                q,
                y,
                v: yv.row(l * (q + 1) + q).iter().copied().collect(),
                noise: nb.as_ref().map(|m| m.row(l).iter().copied().collect()),
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Preset, Term};
    use crate::spectral_sim::{simulate, simulate_exact, Integrator, SimOptions};

    #[test]
    fn feasible_example_spacing() {
        let p = make_placement(8, 0.05, 1.0, 0.1).unwrap();
        assert_eq!(p.n(), 8);
        let spacing = p.locations[1] - p.locations[0];
        assert!((spacing - 0.8 / 7.0).abs() < 1e-15);
        assert!((p.locations[0] - 0.1).abs() < 1e-15 && (p.locations[7] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn single_location_centered() {
        let p = make_placement(1, 0.3, 1.0, 0.1).unwrap();
        assert_eq!(p.locations, vec![0.5]);
    }

    #[test]
    fn capacity_error_quotes_max() {
        match make_placement(8, 0.2, 1.0, 0.1) {
            Err(Error::Capacity { max_feasible, .. }) => assert_eq!(max_feasible, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(Placement::capacity(0.02, 1.0, 0.1), 20);
        assert!(make_placement(20, 0.02, 1.0, 0.1).is_ok());
        assert!(make_placement(21, 0.02, 1.0, 0.1).is_err());
    }

    fn small_paths(spec: &ModelSpec, k_max: usize) -> ModePaths {
        simulate_exact(spec, k_max, TimeGrid::new(1.0, 20).unwrap(), 4).unwrap()
    }

    #[test]
    fn zero_exponent_row_is_plain_measurement() {
        let spec = ModelSpec {
            elastic: vec![Term::new(0.0, -1.0)],
            ..Preset::PlateStructural.spec()
        };
        // alpha_1 = 0 is rejected by validation but the projection is still defined
        let proj = Projector::from_coeffs(
            &spec,
            vec![crate::kernels::rescale_coeffs(&KernelProfile::bump(), 0.1, 0.5, 100, 1.0).unwrap()],
        );
        let mut ok_spec = spec.clone();
        ok_spec.elastic[0].exponent = 2.0;
        let paths = small_paths(&ok_spec, 100);
        let ms = extract_with(&paths, &proj, 0.1).unwrap();
        let m = &ms[0];
        for n in 0..=20 {
            let direct: f64 = (1..=100).map(|k| proj.coeffs[0].c[k - 1] * paths.u_mode(k, n)).sum();
            assert!((m.y[0][n] - direct).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn single_mode_is_linear() {
        let spec = Preset::PlateStructural.spec();
        let paths = small_paths(&spec, 1);
        let c = crate::kernels::KernelTable::new(&KernelProfile::bump(), 0.3, 1, 1.0)
            .unwrap()
            .coeffs_unchecked(0.5)
            .unwrap();
        let proj = Projector::from_coeffs(&spec, vec![c.clone()]);
        let ms = extract_with(&paths, &proj, 0.3).unwrap();
        let l1 = spec.lambda(1);
        for n in 0..=20 {
            let expect = l1.powi(2) * c.c[0] * paths.u_mode(1, n);
            assert!((ms[0].y[0][n] - expect).abs() <= 1e-14 * expect.abs().max(1e-300));
        }
    }

    #[test]
    fn doubling_paths_doubles_measurements() {
        let spec = Preset::PlateStructural.spec();
        let paths = small_paths(&spec, 64);
        let pl = make_placement(3, 0.1, 1.0, 0.15).unwrap();
        let prof = KernelProfile::bump();
        let a = extract_measurements(&paths, &pl, &prof, &spec).unwrap();
        let b = extract_measurements(&paths.scaled(2.0), &pl, &prof, &spec).unwrap();
        for (ma, mb) in a.iter().zip(&b) {
            for (ra, rb) in ma.y.iter().zip(&mb.y) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_eq!(2.0 * x, *y);
                }
            }
        }
    }

    #[test]
    fn noise_rows_follow_recorded_increments() {
        let spec = Preset::PlateStructural.spec();
        let opts = SimOptions { record_increments: true, ..Default::default() };
        let paths = simulate(&spec, 64, TimeGrid::new(1.0, 10).unwrap(), Integrator::Exact, 2, opts).unwrap();
        let pl = make_placement(2, 0.1, 1.0, 0.2).unwrap();
        let ms = extract_measurements(&paths, &pl, &KernelProfile::bump(), &spec).unwrap();
        let noise = ms[1].noise.as_ref().unwrap();
        assert_eq!(noise.len(), 10);
        let direct: f64 = (1..=64)
            .map(|k| pl_coeff(&pl, 1, k) * paths.increments_at(3).unwrap()[k - 1])
            .sum();
        assert!((noise[3] - direct).abs() < 1e-13);
    }

    fn pl_coeff(pl: &Placement, l: usize, k: usize) -> f64 {
        crate::kernels::rescale_coeffs(&KernelProfile::bump(), pl.delta, pl.locations[l], 64, 1.0)
            .unwrap()
            .c[k - 1]
    }

    #[test]
    fn csv_columns() {
        let spec = Preset::PlateStructural.spec();
        let paths = small_paths(&spec, 40);
        let pl = make_placement(1, 0.1, 1.0, 0.1).unwrap();
        let ms = extract_measurements(&paths, &pl, &KernelProfile::bump(), &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("m.csv");
        ms[0].write_csv(&f).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,u_delta_1,v_delta_1,v");
        assert_eq!(text.lines().count(), 22);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let spec = Preset::PlateStructural.spec();
        let paths = small_paths(&spec, 40);
        let pl = make_placement(1, 0.1, 1.0, 0.1).unwrap();
        let proj = Projector::new(&spec, &KernelProfile::bump(), &pl, 50).unwrap();
        assert!(matches!(extract_with(&paths, &proj, 0.1), Err(Error::Dimension(_))));
    }
}
