use std::path::Path;

use serde::Deserialize;

use super::{NRule, StudyConfig, DEFAULT_N_CONSTANT};
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelProfile};
use crate::model::{ModelSpec, Preset};

/// On-disk study description.
///
/// ```toml
/// name = "structural"
/// preset = "plate_structural"
/// deltas = [0.1, 0.07, 0.05, 0.035]
/// n_constant = 0.35
/// replicates = 100
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub name: Option<String>,
    pub preset: Option<String>,
    pub model: Option<ModelSpec>,
    /// Overrides the preset's `(theta, eta)` in model order.
    pub parameters: Option<Vec<f64>>,
    pub kernel: Option<KernelKind>,
    pub deltas: Option<Vec<f64>>,
    /// Fixed location count; excludes `n_constant`.
    pub n_locations: Option<usize>,
    pub n_constant: Option<f64>,
    pub replicates: Option<usize>,
    pub n_steps: Option<usize>,
    pub k_max: Option<usize>,
    pub margin: Option<f64>,
    pub seed: Option<u64>,
    pub integrator: Option<String>,
    pub estimator: Option<String>,
}

impl StudyFile {
    pub fn load(path: &Path) -> Result<StudyFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        StudyFile::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<StudyFile> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = match (&self.preset, &self.model) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `preset` or `[model]`, not both".into())),
            (Some(p), None) => Preset::from_name(p)?.spec(),
            (None, Some(m)) => m.clone(),
            (None, None) => return Err(Error::Config("missing `preset` or `[model]`".into())),
        };
        match &self.parameters {
            Some(p) => spec.with_parameters(p),
            None => Ok(spec),
        }
    }

    pub fn into_config(self) -> Result<StudyConfig> {
        let spec = self.model_spec()?;
        let deltas = self.deltas.clone().ok_or_else(|| Error::Config("missing `deltas`".into()))?;
        let name = self.name.clone().or_else(|| self.preset.clone()).unwrap_or_else(|| "study".into());
        let mut c = StudyConfig::new(&name, spec, deltas);
        c.n_rule = match (self.n_locations, self.n_constant) {
            (Some(_), Some(_)) => return Err(Error::Config("`n_locations` and `n_constant` are exclusive".into())),
            (Some(n), None) => NRule::Fixed(n),
            (None, Some(k)) => NRule::Proportional(k),
            (None, None) => NRule::Proportional(DEFAULT_N_CONSTANT),
        };
        if let Some(k) = self.kernel {
            c.profile = KernelProfile::new(k);
        }
        if let Some(r) = self.replicates {
            c.replicates = r;
        }
        if let Some(n) = self.n_steps {
            c.n_steps = n;
        }
        c.k_max = self.k_max;
        if let Some(m) = self.margin {
            c.margin = m;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(i) = &self.integrator {
            c.integrator = i.parse()?;
        }
        if let Some(e) = &self.estimator {
            c.estimator = e.parse()?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::EstimatorPath;
    use crate::spectral_sim::Integrator;

    #[test]
    fn preset_file() {
        let f = StudyFile::parse(
            r#"
            preset = "plate_weak"
            deltas = [0.1, 0.05]
            n_locations = 3
            replicates = 7
            integrator = "euler"
            estimator = "decomposition"
            parameters = [-0.2, -0.4]
            [kernel]
            kind = "laplacian_bump"
            order = 1
            "#,
        )
        .unwrap();
        let c = f.into_config().unwrap();
        assert_eq!(c.name, "plate_weak");
        assert_eq!(c.n_rule, NRule::Fixed(3));
        assert_eq!(c.replicates, 7);
        assert_eq!(c.integrator, Integrator::Euler);
        assert_eq!(c.estimator, EstimatorPath::Decomposition);
        assert_eq!(c.spec.parameters(), [-0.2, -0.4]);
        assert_eq!(c.profile.order(), 1);
    }

    #[test]
    fn explicit_model() {
        let f = StudyFile::parse(
            r#"
            deltas = [0.1]
            [model]
            domain_length = 2.0
            horizon = 0.5
            elastic = [{ exponent = 1.0, coeff = -1.0 }]
            damping = []
            "#,
        )
        .unwrap();
        let c = f.into_config().unwrap();
        assert_eq!(c.spec.domain_length, 2.0);
        assert_eq!(c.n_rule, NRule::Proportional(DEFAULT_N_CONSTANT));
    }

    #[test]
    fn conflicts_and_typos() {
        assert!(StudyFile::parse("preset = \"wave_weak\"\ndelta = [0.1]").is_err());
        let both = StudyFile::parse("preset = \"wave_weak\"\ndeltas = [0.1]\nn_locations = 2\nn_constant = 0.3").unwrap();
        assert!(matches!(both.into_config(), Err(Error::Config(_))));
        let none = StudyFile::parse("deltas = [0.1]").unwrap();
        assert!(none.into_config().is_err());
        let bad = StudyFile::parse("preset = \"wave_weak\"\ndeltas = [0.1]\nintegrator = \"rk4\"").unwrap();
        assert!(bad.into_config().is_err());
    }
}
