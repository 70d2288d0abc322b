//! Experiment configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trotter_core::models::{build_heisenberg, build_qimf, HamiltonianSplit, QimfParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Model,
    Bound,
    Evolve,
    Worstcase,
    Shadows,
    Adaptive,
    Fig1,
    Fig4,
    Fig5,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Model => "model",
            ExperimentKind::Bound => "bound",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Worstcase => "worstcase",
            ExperimentKind::Shadows => "shadows",
            ExperimentKind::Adaptive => "adaptive",
            ExperimentKind::Fig1 => "fig1",
            ExperimentKind::Fig4 => "fig4",
            ExperimentKind::Fig5 => "fig5",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Qimf,
    Heisenberg,
}

/// Which QIMF parameter sets to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSet {
    #[default]
    Typical,
    Atypical,
    Both,
    /// Uses `hx`, `hy`, `j`.
    Custom,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenSpec {
    /// CSV path relative to the config file.
    pub file: String,
    /// Artifact compared against the golden file.
    pub artifact: String,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_tolerance")]
    pub default_tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_order() -> usize {
    2
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub params: ParamSet,
    pub hx: Option<f64>,
    pub hy: Option<f64>,
    pub j: Option<f64>,
    /// Heisenberg fields, one per site.
    pub fields: Option<Vec<f64>>,
    /// Heisenberg fields drawn uniformly from `[-1, 1]` with this seed.
    pub field_seed: Option<u64>,
    pub n_qubits: Option<usize>,
    pub n_range: Option<Vec<usize>>,
    #[serde(default = "default_order")]
    pub order: usize,
    pub dt: Option<f64>,
    /// Total time; figure runs default to `N`.
    pub t: Option<f64>,
    /// Sampling interval along trajectories.
    pub t_step: Option<f64>,
    pub epsilon: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    /// Uniform checkpoint counts swept by adaptive runs.
    pub checkpoint_counts: Option<Vec<usize>>,
    pub shots: Option<usize>,
    #[serde(default)]
    pub exact_measurement: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// `zero`, `haar`, `worst_case` or `evolved` (exact state at `t`).
    pub state: Option<String>,
    pub depth: Option<usize>,
    /// Step-count methods for fig5; all when absent.
    pub methods: Option<Vec<String>>,
    pub output_dir: Option<String>,
    #[serde(default)]
    pub svg: bool,
    pub golden: Option<GoldenSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Minimal config for a subcommand run without a file.
    pub fn default_for(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            id: kind.name().into(),
            experiment: kind,
            model: ModelKind::Qimf,
            params: ParamSet::Typical,
            hx: None,
            hy: None,
            j: None,
            fields: None,
            field_seed: None,
            n_qubits: Some(8),
            n_range: None,
            order: 2,
            dt: None,
            t: None,
            t_step: None,
            epsilon: None,
            checkpoints: None,
            checkpoint_counts: None,
            shots: None,
            exact_measurement: false,
            seeds: vec![0],
            state: None,
            depth: None,
            methods: None,
            output_dir: None,
            svg: false,
            golden: None,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            bail!("id must be a non-empty file-name-safe string");
        }
        let pos = |name: &str, v: Option<f64>| -> Result<()> {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    bail!("{name} must be positive, got {x}");
                }
            }
            Ok(())
        };
        pos("dt", self.dt)?;
        pos("t", self.t)?;
        pos("t_step", self.t_step)?;
        pos("epsilon", self.epsilon)?;
        if !(1..=6).contains(&self.order) || (self.order > 2 && self.order % 2 == 1) {
            bail!("order must be 1 or an even number up to 6, got {}", self.order);
        }
        let sizes: Vec<usize> = self.sizes();
        if sizes.is_empty() {
            bail!("n_qubits or n_range is required");
        }
        for &n in &sizes {
            if !(2..=16).contains(&n) {
                bail!("qubit count {n} outside 2..=16");
            }
            if self.model == ModelKind::Heisenberg && n % 2 == 1 {
                bail!("heisenberg chains need an even qubit count, got {n}");
            }
        }
        if self.params == ParamSet::Custom && (self.hx.is_none() || self.hy.is_none() || self.j.is_none()) {
            bail!("custom params need hx, hy and j");
        }
        if let Some(f) = &self.fields {
            if self.model != ModelKind::Heisenberg {
                bail!("fields apply to the heisenberg model only");
            }
            if sizes.iter().any(|&n| n != f.len()) {
                bail!("fields has {} entries but the run uses sizes {sizes:?}", f.len());
            }
        }
        if let Some(s) = &self.state {
            if !["zero", "haar", "worst_case", "evolved"].contains(&s.as_str()) {
                bail!("unknown state '{s}'");
            }
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if let Some(m) = &self.methods {
            for x in m {
                if !FIG5_METHODS.contains(&x.as_str()) {
                    bail!("unknown fig5 method '{x}'");
                }
            }
        }
        if let Some(0) = self.shots {
            bail!("shots must be positive");
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        match (&self.n_range, self.n_qubits) {
            (Some(r), _) => r.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => vec![],
        }
    }

    pub fn n(&self) -> usize {
        self.sizes()[0]
    }

    /// Named QIMF parameter sets selected by `params`.
    pub fn qimf_sets(&self) -> Vec<(String, QimfParams)> {
        match self.params {
            ParamSet::Typical => vec![("typical".into(), QimfParams::TYPICAL)],
            ParamSet::Atypical => vec![("atypical".into(), QimfParams::ATYPICAL)],
            ParamSet::Both => vec![
                ("typical".into(), QimfParams::TYPICAL),
                ("atypical".into(), QimfParams::ATYPICAL),
            ],
            ParamSet::Custom => vec![(
                "custom".into(),
                QimfParams {
                    hx: self.hx.unwrap(),
                    hy: self.hy.unwrap(),
                    j: self.j.unwrap(),
                },
            )],
        }
    }

    /// Named splits for size `n`.
    pub fn splits(&self, n: usize) -> Result<Vec<(String, HamiltonianSplit)>> {
        match self.model {
            ModelKind::Qimf => self
                .qimf_sets()
                .into_iter()
                .map(|(name, p)| Ok((name, build_qimf(n, p)?)))
                .collect(),
            ModelKind::Heisenberg => {
                let fields = match (&self.fields, self.field_seed) {
                    (Some(f), _) => f.clone(),
                    (None, Some(seed)) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
                    }
                    (None, None) => vec![0.0; n],
                };
                Ok(vec![("heisenberg".into(), build_heisenberg(n, &fields)?)])
            }
        }
    }

    pub fn total_time(&self, n: usize) -> f64 {
        self.t.unwrap_or(n as f64)
    }

    /// `output_dir`, else `<root>/<id>`.
    pub fn output_path(&self, root: &Path) -> PathBuf {
        match &self.output_dir {
            Some(d) => PathBuf::from(d),
            None => root.join(&self.id),
        }
    }
}

pub const FIG5_METHODS: [&str; 6] = [
    "empirical_spectral",
    "empirical_state",
    "empirical_random_input",
    "theoretical_worst",
    "theoretical_average",
    "distance_segmented",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_hashes_deterministically() {
        let text = r#"
            id = "f1"
            experiment = "fig1"
            params = "both"
            n_qubits = 8
            dt = 0.1
        "#;
        let a = ExperimentConfig::from_toml(text).unwrap();
        let b = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert_eq!(a.qimf_sets().len(), 2);
        let mut c = a.clone();
        c.dt = Some(0.2);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "id = 'x'\nexperiment = 'fig1'",
            "id = 'x'\nexperiment = 'fig1'\nn_qubits = 8\ndt = -1.0",
            "id = 'x'\nexperiment = 'fig1'\nn_qubits = 7\nmodel = 'heisenberg'",
            "id = 'x'\nexperiment = 'fig1'\nn_qubits = 8\nbogus = 1",
            "id = 'x'\nexperiment = 'nope'\nn_qubits = 8",
            "id = 'x'\nexperiment = 'fig1'\nn_qubits = 8\nparams = 'custom'",
            "id = 'x'\nexperiment = 'fig5'\nn_qubits = 8\nmethods = ['magic']",
            "id = 'x'\nexperiment = 'fig1'\nn_qubits = 8\norder = 3",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn heisenberg_fields_from_seed() {
        let text = "id = 'h'\nexperiment = 'model'\nmodel = 'heisenberg'\nn_qubits = 6\nfield_seed = 3";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let a = cfg.splits(6).unwrap();
        let b = cfg.splits(6).unwrap();
        assert_eq!(a[0].1.hamiltonian(), b[0].1.hamiltonian());
    }
}
