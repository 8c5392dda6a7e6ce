//! Flat `key = value` run configuration with a fixed key registry.
//!
//! File syntax: one `key = value` per line; `#` starts a comment; blank
//! lines are ignored. Later sources override earlier ones in the order
//! defaults → file → `--set` → `--seed`/`--out`. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use tudm::diffusion::{ClassChoice, OrthoTimeConfig};
use tudm::geometry::{check_epsilon, AmbientConfig};
use tudm::model::{AdamConfig, TrainConfig};
use tudm::schedule::{ScheduleKind, ScheduleSpec};

use crate::error::CliError;

/// `(key, default, description)` for every accepted key.
pub const REGISTRY: &[(&str, &str, &str)] = &[
    ("run_label", "run", "prefix of the per-run output directory"),
    ("seed", "0", "master seed; every random draw derives from it"),
    ("out", "runs", "root directory for run outputs"),
    ("schedule", "uniform_radial", "conventional | uniform_radial | late_expansion | ot_geodesic"),
    ("beta_min", "1e-4", "conventional schedule: β at k = 1"),
    ("beta_max", "0.02", "conventional schedule: β at k = T"),
    ("steps", "100", "number of diffusion steps T"),
    ("epsilon", "0.01", "shell-band concentration parameter, in (0, 0.25)"),
    ("ambient_dim", "256", "ambient dimension D"),
    ("dataset", "swiss_roll", "swiss_roll | gaussian_mixture"),
    ("n_train", "50000", "number of clean training points"),
    ("swiss_roll.noise", "0.01", "isotropic jitter added to the spiral"),
    ("mixture.components", "8", "number of mixture components (ring layout)"),
    ("mixture.radius", "1.0", "radius of the ring of component centers"),
    ("mixture.scale", "0.05", "per-component standard deviation"),
    ("ortho", "false", "use the orthogonal time-space variant"),
    ("ortho.spacing", "0.05", "time spacing s; δ = s·√(D − d′)"),
    ("ortho.direction", "axis", "axis | least_variance"),
    ("conditional", "false", "one time direction per mixture class"),
    ("hidden", "256,256,256", "hidden layer widths; empty for a linear model"),
    ("epochs", "200", "training epochs"),
    ("batch_size", "2048", "minibatch size"),
    ("learning_rate", "1e-3", "Adam learning rate"),
    ("adam_beta1", "0.9", "Adam first-moment decay"),
    ("adam_beta2", "0.999", "Adam second-moment decay"),
    ("adam_eps", "1e-8", "Adam denominator offset"),
    ("sample.count", "4096", "number of generated samples"),
    ("sample.class_id", "auto", "auto (round-robin) or a class index"),
    ("sample.project_eps", "true", "project model outputs onto t_ortho^⊥"),
    ("sample.trajectory", "false", "also write per-step trajectory statistics"),
    ("eval.projections", "128", "random directions for the sliced distance"),
    ("eval.reference_count", "4096", "clean reference samples for evaluation"),
    ("verify.ambient_dim", "1024", "ambient dimension for verify-props"),
    ("verify.intrinsic_dim", "2", "intrinsic dimension for verify-props"),
    ("verify.samples", "10000", "Monte-Carlo draws per coverage check"),
    ("verify.sequences", "1000", "random σ sequences for the equivalence check"),
    ("verify.max_steps", "100", "largest T scanned by the step-size check"),
    ("sweep.spacings", "0,0.025,0.05", "time spacings s evaluated by sweep-delta"),
    ("sweep.replicates", "1", "seeds per spacing (seed, seed+1, …)"),
];

/// Intrinsic dimension of both toy datasets.
pub const DATA_INTRINSIC_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    SwissRoll,
    GaussianMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    Axis,
    LeastVariance,
}

/// Raw validated-key values, before typing.
#[derive(Debug, Clone)]
pub struct ConfigValues {
    values: BTreeMap<&'static str, String>,
}

impl Default for ConfigValues {
    fn default() -> Self {
        ConfigValues {
            values: REGISTRY.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
        }
    }
}

impl ConfigValues {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let (k, _, _) = REGISTRY
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a registered key"))
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = std::collections::HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{origin}:{}: expected key = value", no + 1))
            })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(CliError::Config(format!("{origin}:{}: duplicate key `{k}`", no + 1)));
            }
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn dump(&self) -> String {
        REGISTRY
            .iter()
            .map(|(k, _, _)| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)
            .parse()
            .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{}`", self.get(key))))
    }

    fn parse_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(CliError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{s}`")))
            })
            .collect()
    }
}

/// Typed configuration for all subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub values: ConfigValues,
    pub run_label: String,
    pub seed: u64,
    pub out: PathBuf,
    pub schedule_kind: ScheduleKind,
    pub steps: usize,
    pub epsilon: f64,
    pub ambient_dim: usize,
    pub dataset: DatasetKind,
    pub n_train: usize,
    pub swiss_roll_noise: f64,
    pub mixture_components: usize,
    pub mixture_radius: f64,
    pub mixture_scale: f64,
    pub ortho: bool,
    pub ortho_spacing: f64,
    pub ortho_direction: DirectionMode,
    pub conditional: bool,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub sample_count: usize,
    pub class_choice: ClassChoice,
    pub project_eps: bool,
    pub trajectory: bool,
    pub eval_projections: usize,
    pub eval_reference_count: usize,
    pub verify_ambient_dim: usize,
    pub verify_intrinsic_dim: usize,
    pub verify_samples: usize,
    pub verify_sequences: usize,
    pub verify_max_steps: usize,
    pub sweep_spacings: Vec<f64>,
    pub sweep_replicates: usize,
}

impl RunConfig {
    pub fn from_values(values: ConfigValues) -> Result<Self, CliError> {
        let v = &values;
        let schedule_kind = match v.get("schedule").parse::<ScheduleKind>() {
            Ok(ScheduleKind::ConventionalVp { .. }) => ScheduleKind::ConventionalVp {
                beta_min: v.parse("beta_min")?,
                beta_max: v.parse("beta_max")?,
            },
            Ok(k) => k,
            Err(e) => return Err(CliError::Config(format!("`schedule`: {e}"))),
        };
        schedule_kind.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let dataset = match v.get("dataset") {
            "swiss_roll" => DatasetKind::SwissRoll,
            "gaussian_mixture" => DatasetKind::GaussianMixture,
            d => return Err(CliError::Config(format!("`dataset`: unknown dataset `{d}`"))),
        };
        let ortho_direction = match v.get("ortho.direction") {
            "axis" => DirectionMode::Axis,
            "least_variance" => DirectionMode::LeastVariance,
            d => return Err(CliError::Config(format!("`ortho.direction`: unknown mode `{d}`"))),
        };
        let class_choice = match v.get("sample.class_id") {
            "auto" => ClassChoice::Auto,
            _ => ClassChoice::Fixed(v.parse("sample.class_id")?),
        };
        let run_label = v.get("run_label").to_string();
        if run_label.is_empty() || run_label.contains(['/', '\\']) {
            return Err(CliError::Config(format!("`run_label`: invalid label `{run_label}`")));
        }
        let cfg = RunConfig {
            run_label,
            seed: v.parse("seed")?,
            out: PathBuf::from(v.get("out")),
            schedule_kind,
            steps: v.parse("steps")?,
            epsilon: v.parse("epsilon")?,
            ambient_dim: v.parse("ambient_dim")?,
            dataset,
            n_train: v.parse("n_train")?,
            swiss_roll_noise: v.parse("swiss_roll.noise")?,
            mixture_components: v.parse("mixture.components")?,
            mixture_radius: v.parse("mixture.radius")?,
            mixture_scale: v.parse("mixture.scale")?,
            ortho: v.parse_bool("ortho")?,
            ortho_spacing: v.parse("ortho.spacing")?,
            ortho_direction,
            conditional: v.parse_bool("conditional")?,
            hidden: v.parse_list("hidden")?,
            epochs: v.parse("epochs")?,
            batch_size: v.parse("batch_size")?,
            adam: AdamConfig {
                learning_rate: v.parse("learning_rate")?,
                beta1: v.parse("adam_beta1")?,
                beta2: v.parse("adam_beta2")?,
                eps: v.parse("adam_eps")?,
            },
            sample_count: v.parse("sample.count")?,
            class_choice,
            project_eps: v.parse_bool("sample.project_eps")?,
            trajectory: v.parse_bool("sample.trajectory")?,
            eval_projections: v.parse("eval.projections")?,
            eval_reference_count: v.parse("eval.reference_count")?,
            verify_ambient_dim: v.parse("verify.ambient_dim")?,
            verify_intrinsic_dim: v.parse("verify.intrinsic_dim")?,
            verify_samples: v.parse("verify.samples")?,
            verify_sequences: v.parse("verify.sequences")?,
            verify_max_steps: v.parse("verify.max_steps")?,
            sweep_spacings: v.parse_list("sweep.spacings")?,
            sweep_replicates: v.parse("sweep.replicates")?,
            values,
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    fn check_ranges(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        check_epsilon(self.epsilon).map_err(|e| CliError::Config(format!("`epsilon`: {e}")))?;
        if self.steps == 0 {
            return bad("`steps` must be >= 1".into());
        }
        if self.ambient_dim <= DATA_INTRINSIC_DIM {
            return bad(format!("`ambient_dim` must exceed {DATA_INTRINSIC_DIM}"));
        }
        if self.mixture_components == 0 {
            return bad("`mixture.components` must be >= 1".into());
        }
        if !(self.mixture_scale > 0.0 && self.mixture_scale.is_finite()) {
            return bad("`mixture.scale` must be > 0".into());
        }
        if !(self.mixture_radius >= 0.0 && self.mixture_radius.is_finite()) {
            return bad("`mixture.radius` must be >= 0".into());
        }
        if !(self.swiss_roll_noise >= 0.0 && self.swiss_roll_noise.is_finite()) {
            return bad("`swiss_roll.noise` must be >= 0".into());
        }
        if !(self.ortho_spacing >= 0.0 && self.ortho_spacing.is_finite()) {
            return bad("`ortho.spacing` must be >= 0".into());
        }
        if self.sweep_spacings.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("`sweep.spacings` entries must be finite and >= 0".into());
        }
        if self.hidden.contains(&0) {
            return bad("`hidden` widths must be >= 1".into());
        }
        if self.eval_projections == 0 {
            return bad("`eval.projections` must be >= 1".into());
        }
        if self.sweep_replicates == 0 {
            return bad("`sweep.replicates` must be >= 1".into());
        }
        if self.conditional {
            if self.dataset != DatasetKind::GaussianMixture {
                return bad("`conditional` needs dataset = gaussian_mixture".into());
            }
            if !self.ortho {
                return bad("`conditional` needs ortho = true".into());
            }
            if DATA_INTRINSIC_DIM + self.mixture_components > self.ambient_dim {
                return bad("not enough normal axes for one time direction per class".into());
            }
        }
        Ok(())
    }

    pub fn ambient(&self) -> Result<AmbientConfig, CliError> {
        Ok(AmbientConfig::new(self.ambient_dim, DATA_INTRINSIC_DIM)?)
    }

    pub fn schedule(&self) -> Result<ScheduleSpec, CliError> {
        Ok(ScheduleSpec::new(self.schedule_kind, self.steps)?)
    }

    /// δ for a given time spacing at this ambient dimension.
    pub fn delta_for(&self, spacing: f64) -> Result<f64, CliError> {
        Ok(OrthoTimeConfig::scaled_delta(&self.ambient()?, spacing))
    }

    pub fn train_config(&self, ortho: Option<OrthoTimeConfig>, seed: u64) -> Result<TrainConfig, CliError> {
        let mut cfg = TrainConfig::new(self.schedule()?, self.ambient()?);
        cfg.ortho = ortho;
        cfg.hidden = self.hidden.clone();
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.adam = self.adam;
        cfg.seed = seed;
        cfg.conditional = self.conditional;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `<out>/<run_label>-seed<seed>`
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(format!("{}-seed{}", self.run_label, self.seed))
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.values.dump())
    }
}

/// Where configuration comes from, in increasing precedence.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources {
    pub file: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ConfigSources {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut values = ConfigValues::default();
        if let Some(path) = &self.file {
            values.apply_file(path)?;
        }
        for o in &self.overrides {
            values.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            values.set("seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            values.set("out", &out.to_string_lossy())?;
        }
        RunConfig::from_values(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(overrides: &[&str]) -> Result<RunConfig, CliError> {
        ConfigSources {
            overrides: overrides.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
        .resolve()
    }

    #[test]
    fn defaults_parse() {
        let cfg = resolve(&[]).unwrap();
        assert_eq!(cfg.steps, 100);
        assert_eq!(cfg.hidden, vec![256, 256, 256]);
        assert_eq!(cfg.schedule_kind, ScheduleKind::UniformRadialVp);
        assert_eq!(cfg.run_dir(), PathBuf::from("runs/run-seed0"));
        assert_eq!(cfg.sweep_spacings, vec![0.0, 0.025, 0.05]);
    }

    #[test]
    fn registry_keys_unique() {
        let mut keys: Vec<_> = REGISTRY.iter().map(|(k, _, _)| k).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), REGISTRY.len());
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        assert!(resolve(&["nope=1"]).is_err());
        assert!(resolve(&["steps"]).is_err());
        assert!(resolve(&["steps=ten"]).is_err());
        assert!(resolve(&["epsilon=0.3"]).is_err());
        assert!(resolve(&["schedule=cosine"]).is_err());
        assert!(resolve(&["conditional=true"]).is_err());
        assert!(resolve(&["ortho=maybe"]).is_err());
    }

    #[test]
    fn file_then_overrides() {
        let mut v = ConfigValues::default();
        v.apply_text("# comment\nsteps = 7\n\nschedule = conventional # trailing\n", "f")
            .unwrap();
        v.apply_override("steps=9").unwrap();
        let cfg = RunConfig::from_values(v).unwrap();
        assert_eq!(cfg.steps, 9);
        assert_eq!(cfg.schedule_kind, ScheduleKind::conventional());
        let mut dup = ConfigValues::default();
        assert!(dup.apply_text("steps = 1\nsteps = 2\n", "f").is_err());
        assert!(dup.apply_text("mystery = 1\n", "f").is_err());
    }

    #[test]
    fn empty_hidden_is_linear() {
        let cfg = resolve(&["hidden="]).unwrap();
        assert!(cfg.hidden.is_empty());
    }
}
