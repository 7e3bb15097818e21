//! Flat `key=value` run configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hpmvs::fusion::FusionConfig;
use hpmvs::hpm::{schedule_for, HpmSchedule, RunOptions};
use hpmvs::patchmatch::PropagationConfig;
use hpmvs::prior::PriorConfig;
use hpmvs::{MvsError, Result};

/// Every tunable of a run. Defaults reproduce the published settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    /// 0 uses every available core.
    pub workers: usize,
    pub propagation: PropagationConfig,
    pub prior: PriorConfig,
    pub fusion: FusionConfig,
    pub scale_factors: Vec<usize>,
    pub gc_rounds: usize,
    pub use_prior: bool,
    pub hpm_fast: bool,
    pub hpm_full: bool,
    pub parallel_views: bool,
    pub ascii_ply: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = HpmSchedule::default();
        Self {
            input: PathBuf::new(),
            output: PathBuf::from("out"),
            workers: 0,
            propagation: PropagationConfig::default(),
            prior: PriorConfig::default(),
            fusion: FusionConfig::default(),
            scale_factors: schedule.scale_factors,
            gc_rounds: schedule.gc_rounds,
            use_prior: true,
            hpm_fast: false,
            hpm_full: true,
            parallel_views: false,
            ascii_ply: false,
        }
    }
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> std::result::Result<(), String>;

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',').map(|s| parse(s.trim())).collect()
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+ : $kind:ident),* $(,)?) => {
        const KEYS: &[(&str, Getter, Setter)] = &[
            $(($key, |c| keys!(@get $kind, c.$($field).+), |c, v| { c.$($field).+ = keys!(@set $kind, v)?; Ok(()) }),)*
        ];
    };
    (@get path, $e:expr) => { $e.display().to_string() };
    (@get list, $e:expr) => { $e.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",") };
    (@get value, $e:expr) => { $e.to_string() };
    (@set path, $v:expr) => { Ok::<PathBuf, String>(PathBuf::from($v)) };
    (@set list, $v:expr) => { parse_list($v) };
    (@set value, $v:expr) => { parse($v) };
}

keys! {
    "input" => input: path,
    "output" => output: path,
    "workers" => workers: value,
    "seed" => propagation.seed: value,
    "nonlocal" => propagation.nonlocal: value,
    "extensible" => propagation.extensible: value,
    "prior" => use_prior: value,
    "hpm_fast" => hpm_fast: value,
    "hpm_full" => hpm_full: value,
    "top_k" => propagation.top_k: value,
    "max_extensions" => propagation.max_extensions: value,
    "tau_good" => propagation.tau_good: value,
    "tau_bad" => propagation.tau_bad: value,
    "alpha" => propagation.alpha: value,
    "n_good" => propagation.n_good: value,
    "n_bad" => propagation.n_bad: value,
    "nonlocal_radius" => propagation.nonlocal_radius: value,
    "iterations" => propagation.iterations: value,
    "patch_radius" => propagation.patch_radius: value,
    "patch_step" => propagation.patch_step: value,
    "sigma_spatial" => propagation.sigma_spatial: value,
    "sigma_range" => propagation.sigma_range: value,
    "view_beta" => propagation.view_beta: value,
    "depth_perturbation" => propagation.depth_perturbation: value,
    "normal_perturbation_deg" => propagation.normal_perturbation_deg: value,
    "geom_weight" => propagation.geom_weight: value,
    "geom_clamp" => propagation.geom_clamp: value,
    "tau_cred" => prior.tau_cred: value,
    "knn" => prior.knn: value,
    "min_area" => prior.min_area: value,
    "eta" => prior.eta: value,
    "gamma" => prior.gamma: value,
    "sigma_depth" => prior.sigma_depth: value,
    "sigma_normal" => prior.sigma_normal: value,
    "max_support_angle" => prior.max_support_angle: value,
    "scale_factors" => scale_factors: list,
    "gc_rounds" => gc_rounds: value,
    "parallel_views" => parallel_views: value,
    "min_consistent" => fusion.min_consistent: value,
    "max_reproj" => fusion.max_reproj: value,
    "max_rel_depth_diff" => fusion.max_rel_depth_diff: value,
    "max_normal_angle" => fusion.max_normal_angle: value,
    "ascii_ply" => ascii_ply: value,
}

impl RunConfig {
    /// Every key in a fixed order.
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _, _)| *k)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, g, _)| g(self))
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (_, _, set) = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| MvsError::InvalidArgument(format!("unknown config key `{key}`")))?;
        set(self, value.trim()).map_err(|e| MvsError::InvalidArgument(format!("{key}: {e}")))
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| MvsError::InvalidArgument(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    pub fn dump(&self) -> String {
        KEYS.iter().map(|(k, g, _)| format!("{k}={}\n", g(self))).collect()
    }

    /// Parses a dump over the defaults. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(MvsError::Format {
                    file: source.to_path_buf(),
                    line: i + 1,
                    message: "expected key=value".into(),
                });
            };
            cfg.set(k.trim(), v).map_err(|e| MvsError::Format {
                file: source.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MvsError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    pub fn schedule(&self) -> HpmSchedule {
        let base = HpmSchedule {
            scale_factors: self.scale_factors.clone(),
            gc_rounds: self.gc_rounds,
            ..HpmSchedule::default()
        };
        schedule_for(&base, self.use_prior, self.hpm_fast, self.hpm_full)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            parallel_views: self.parallel_views,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.propagation.validate()?;
        self.prior.validate()?;
        self.fusion.validate()?;
        self.schedule().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_parse_dump_is_identical() {
        let mut cfg = RunConfig::default();
        cfg.apply("tau_good=0.7999999999999999").unwrap();
        cfg.apply("scale_factors=8,2,1").unwrap();
        cfg.apply("input=/tmp/some scene").unwrap();
        for c in [RunConfig::default(), cfg] {
            let text = c.dump();
            let back = RunConfig::parse(&text, Path::new("x")).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.dump(), text);
        }
    }

    #[test]
    fn defaults_are_the_published_values() {
        let d = RunConfig::default().dump();
        for line in [
            "top_k=4",
            "max_extensions=3",
            "tau_good=0.8",
            "tau_bad=1.2",
            "alpha=90",
            "n_good=1",
            "n_bad=2",
            "nonlocal_radius=4",
            "tau_cred=0.1",
            "knn=6",
            "eta=0.2",
            "gamma=0.1",
        ] {
            assert!(d.lines().any(|l| l == line), "{line}");
        }
    }

    #[test]
    fn bad_lines_name_the_line() {
        let err = RunConfig::parse("seed=1\n\ntop_k=x\n", Path::new("cfg.txt")).unwrap_err();
        match err {
            MvsError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
        assert!(RunConfig::default().clone().apply("nope=1").is_err());
    }

    #[test]
    fn toggles_drive_the_schedule() {
        let mut c = RunConfig::default();
        assert_eq!(c.schedule().prior_scales(), &[4, 2, 1]);
        c.hpm_full = false;
        c.hpm_fast = true;
        assert_eq!(c.schedule().prior_scales(), &[4]);
        c.use_prior = false;
        assert!(c.schedule().prior_scales().is_empty());
    }
}
