//! Hierarchical prior mining: basic PatchMatch, then prior-assisted passes
//! from coarse to fine scales, then geometric-consistency rounds.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{MvsError, Result};
use crate::imaging::JbuParams;
use crate::patchmatch::{DepthNormalMap, PatchMatch, PatchMatchState, PropagationConfig};
use crate::prior::{build_prior_model, PlanarPriorModel, PriorConfig};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// A prior pass at every scale.
    Full,
    /// A single prior pass at the coarsest scale.
    Fast,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Fast => "fast",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "fast" => Ok(Self::Fast),
            _ => Err(MvsError::invalid(format!("unknown variant `{s}` (full, fast)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpmSchedule {
    /// Strictly decreasing, ending at 1.
    pub scale_factors: Vec<usize>,
    pub variant: Variant,
    pub gc_rounds: usize,
    /// Without priors only the basic stage and geometric rounds run.
    pub prior: bool,
}

impl Default for HpmSchedule {
    fn default() -> Self {
        Self {
            scale_factors: vec![4, 2, 1],
            variant: Variant::Full,
            gc_rounds: 2,
            prior: true,
        }
    }
}

impl HpmSchedule {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scale_factors;
        if s.is_empty() || *s.last().unwrap() != 1 || s.contains(&0) {
            return Err(MvsError::invalid("scale factors must be positive and end at 1"));
        }
        if s.windows(2).any(|w| w[0] <= w[1]) {
            return Err(MvsError::invalid("scale factors must be strictly decreasing"));
        }
        Ok(())
    }

    /// Scales at which a prior model is built, coarsest first.
    pub fn prior_scales(&self) -> &[usize] {
        match (self.prior, self.variant) {
            (false, _) => &[],
            (true, Variant::Full) => &self.scale_factors,
            (true, Variant::Fast) => &self.scale_factors[..1],
        }
    }
}

/// Rows of the ablation table, as stage toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationRow {
    Baseline,
    Nsp,
    Esp,
    Nesp,
    NespPa,
    HpmFast,
    Hpm,
    HpmMvsFast,
    HpmMvs,
}

impl AblationRow {
    pub const ALL: [AblationRow; 9] = [
        Self::Baseline,
        Self::Nsp,
        Self::Esp,
        Self::Nesp,
        Self::NespPa,
        Self::HpmFast,
        Self::Hpm,
        Self::HpmMvsFast,
        Self::HpmMvs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Nsp => "nsp",
            Self::Esp => "esp",
            Self::Nesp => "nesp",
            Self::NespPa => "nesp+pa",
            Self::HpmFast => "hpm-fast",
            Self::Hpm => "hpm",
            Self::HpmMvsFast => "hpm-mvs-fast",
            Self::HpmMvs => "hpm-mvs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|r| r.name()).collect();
            MvsError::invalid(format!("unknown row `{s}`; valid rows: {}", names.join(", ")))
        })
    }

    /// `(nonlocal, extensible, prior, hpm_fast, hpm_full)`.
    pub fn toggles(self) -> (bool, bool, bool, bool, bool) {
        match self {
            Self::Baseline => (false, false, false, false, false),
            Self::Nsp => (true, false, false, false, false),
            Self::Esp => (false, true, false, false, false),
            Self::Nesp => (true, true, false, false, false),
            Self::NespPa => (true, true, true, false, false),
            Self::HpmFast => (false, false, true, true, false),
            Self::Hpm => (false, false, true, false, true),
            Self::HpmMvsFast => (true, true, true, true, false),
            Self::HpmMvs => (true, true, true, false, true),
        }
    }

    /// Applies the toggles to copies of the base settings.
    pub fn configure(self, cfg: &PropagationConfig, schedule: &HpmSchedule) -> (PropagationConfig, HpmSchedule) {
        let (n, e, pa, fast, full) = self.toggles();
        let mut c = cfg.clone();
        c.nonlocal = n;
        c.extensible = e;
        (c, schedule_for(schedule, pa, fast, full))
    }
}

/// Schedule implied by the prior toggles: no prior, prior at full resolution
/// only, coarsest scale only, or every scale.
pub fn schedule_for(base: &HpmSchedule, prior: bool, hpm_fast: bool, hpm_full: bool) -> HpmSchedule {
    let mut s = base.clone();
    s.prior = prior;
    if hpm_full {
        s.variant = Variant::Full;
    } else if hpm_fast {
        s.variant = Variant::Fast;
    } else {
        s.scale_factors = vec![1];
        s.variant = Variant::Full;
    }
    s
}

/// Wall time and mean cost of one stage on one view.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub view: String,
    pub stage: String,
    pub seconds: f64,
    pub mean_cost: f64,
    pub valid: usize,
    /// Pixels with a valid prior, for prior stages.
    pub prior_valid: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SceneResult {
    pub maps: Vec<DepthNormalMap>,
    pub priors: Vec<Option<PlanarPriorModel>>,
    pub reports: Vec<StageReport>,
}

/// Per-view outcome of the photometric stages.
#[derive(Debug, Clone)]
pub struct ViewResult {
    pub state: PatchMatchState,
    pub prior: Option<PlanarPriorModel>,
    pub reports: Vec<StageReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Process views concurrently; geometric rounds then read the previous
    /// round's maps of every view.
    pub parallel_views: bool,
}

fn report(scene: &Scene, view: usize, stage: &str, start: Instant, st: &PatchMatchState) -> StageReport {
    StageReport {
        view: scene.views[view].id.clone(),
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
        mean_cost: st.map.mean_cost(),
        valid: st.map.valid_count(),
        prior_valid: None,
    }
}

/// The basic stage alone: random init and propagation/refinement.
pub fn run_basic(scene: &Scene, view: usize, cfg: &PropagationConfig) -> Result<ViewResult> {
    let start = Instant::now();
    let pm = PatchMatch::new(scene, view, cfg)?;
    let mut state = pm.random_init();
    pm.run(&mut state, None);
    pm.finalize(&mut state);
    let reports = vec![report(scene, view, "nesp", start, &state)];
    Ok(ViewResult {
        state,
        prior: None,
        reports,
    })
}

/// Prior-assisted passes on top of a basic result.
pub fn run_priors(
    scene: &Scene,
    view: usize,
    cfg: &PropagationConfig,
    prior_cfg: &PriorConfig,
    schedule: &HpmSchedule,
    basic: ViewResult,
) -> Result<ViewResult> {
    schedule.validate()?;
    prior_cfg.validate()?;
    let ViewResult {
        mut state,
        mut prior,
        mut reports,
    } = basic;
    let v = &scene.views[view];
    for (k, &s) in schedule.prior_scales().iter().enumerate() {
        let start = Instant::now();
        let coarse = state.map.downsample(s)?;
        let camera = v.camera.downscaled(s)?;
        let model = build_prior_model(&coarse, &camera, prior_cfg)?;
        let mut model = if s == 1 {
            model
        } else {
            model.upsampled(&v.camera, &v.image, s, JbuParams::for_scale(s))?
        };
        if let Some(previous) = &prior {
            model.fill_from(previous)?;
        }
        let pm = PatchMatch::new(scene, view, cfg)?
            .with_prior(&model, prior_cfg)?
            .with_stage(1 + k as u64);
        pm.rescore(&mut state);
        pm.run(&mut state, None);
        pm.finalize(&mut state);
        let mut r = report(scene, view, &format!("prior_x{s}"), start, &state);
        r.prior_valid = Some(model.valid_count());
        reports.push(r);
        prior = Some(model);
    }
    Ok(ViewResult {
        state,
        prior,
        reports,
    })
}

/// Photometric stages for one view: basic PatchMatch then the prior passes.
pub fn run_view(
    scene: &Scene,
    view: usize,
    cfg: &PropagationConfig,
    prior_cfg: &PriorConfig,
    schedule: &HpmSchedule,
) -> Result<ViewResult> {
    let basic = run_basic(scene, view, cfg)?;
    run_priors(scene, view, cfg, prior_cfg, schedule, basic)
}

/// Geometric-consistency rounds over per-view results.
pub fn run_geometric(
    scene: &Scene,
    cfg: &PropagationConfig,
    prior_cfg: &PriorConfig,
    schedule: &HpmSchedule,
    views: Vec<ViewResult>,
    opts: RunOptions,
) -> Result<SceneResult> {
    let mut gc_cfg = cfg.clone();
    gc_cfg.iterations = 1;
    let mut maps: Vec<DepthNormalMap> = views.iter().map(|r| r.state.map.clone()).collect();
    let mut states: Vec<PatchMatchState> = Vec::with_capacity(views.len());
    let mut priors = Vec::with_capacity(views.len());
    let mut reports = Vec::new();
    for r in views {
        states.push(r.state);
        priors.push(r.prior);
        reports.extend(r.reports);
    }
    for round in 0..schedule.gc_rounds {
        let stage = 100 + round as u64;
        let name = format!("gc{}", round + 1);
        let step = |i: usize, st: &mut PatchMatchState, maps: &[DepthNormalMap]| -> Result<StageReport> {
            let start = Instant::now();
            let mut pm = PatchMatch::new(scene, i, &gc_cfg)?
                .with_geometry(scene, maps)?
                .with_stage(stage);
            if let Some(model) = &priors[i] {
                pm = pm.with_prior(model, prior_cfg)?;
            }
            pm.rescore(st);
            pm.run(st, None);
            pm.finalize(st);
            Ok(report(scene, i, &name, start, st))
        };
        if opts.parallel_views {
            let snapshot = maps.clone();
            let out: Vec<Result<StageReport>> = states
                .par_iter_mut()
                .enumerate()
                .map(|(i, st)| step(i, st, &snapshot))
                .collect();
            for r in out {
                reports.push(r?);
            }
            maps = states.iter().map(|s| s.map.clone()).collect();
        } else {
            for i in 0..states.len() {
                reports.push(step(i, &mut states[i], &maps)?);
                maps[i] = states[i].map.clone();
            }
        }
    }
    Ok(SceneResult {
        maps,
        priors,
        reports,
    })
}

/// Every view in turn as reference, then geometric rounds.
pub fn run_scene(
    scene: &Scene,
    cfg: &PropagationConfig,
    prior_cfg: &PriorConfig,
    schedule: &HpmSchedule,
    opts: RunOptions,
) -> Result<SceneResult> {
    scene.require_views(2)?;
    schedule.validate()?;
    let views: Vec<ViewResult> = if opts.parallel_views {
        (0..scene.len())
            .into_par_iter()
            .map(|i| run_view(scene, i, cfg, prior_cfg, schedule))
            .collect::<Result<_>>()?
    } else {
        (0..scene.len())
            .map(|i| run_view(scene, i, cfg, prior_cfg, schedule))
            .collect::<Result<_>>()?
    };
    run_geometric(scene, cfg, prior_cfg, schedule, views, opts)
}

/// Key=value run manifest.
pub fn manifest(schedule: &HpmSchedule, cfg: &PropagationConfig, reports: &[StageReport]) -> String {
    let mut s = String::new();
    let scales: Vec<String> = schedule.scale_factors.iter().map(|f| f.to_string()).collect();
    let prior: Vec<String> = schedule.prior_scales().iter().map(|f| f.to_string()).collect();
    let _ = writeln!(s, "variant={}", schedule.variant.as_str());
    let _ = writeln!(s, "scales={}", scales.join(","));
    let _ = writeln!(s, "prior_scales={}", prior.join(","));
    let _ = writeln!(s, "gc_rounds={}", schedule.gc_rounds);
    let _ = writeln!(s, "seed={}", cfg.seed);
    for r in reports {
        let _ = writeln!(s, "view.{}.{}.seconds={:.3}", r.view, r.stage, r.seconds);
        let _ = writeln!(s, "view.{}.{}.mean_cost={:.6}", r.view, r.stage, r.mean_cost);
        let _ = writeln!(s, "view.{}.{}.valid={}", r.view, r.stage, r.valid);
        if let Some(p) = r.prior_valid {
            let _ = writeln!(s, "view.{}.{}.prior_valid={}", r.view, r.stage, p);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(HpmSchedule::default().validate().is_ok());
        for bad in [vec![], vec![2], vec![1, 2], vec![4, 4, 1], vec![0, 1]] {
            let s = HpmSchedule {
                scale_factors: bad,
                ..HpmSchedule::default()
            };
            assert!(s.validate().is_err());
        }
    }

    #[test]
    fn prior_passes_per_variant() {
        let mut s = HpmSchedule::default();
        assert_eq!(s.prior_scales(), &[4, 2, 1]);
        s.variant = Variant::Fast;
        assert_eq!(s.prior_scales(), &[4]);
        s.prior = false;
        assert!(s.prior_scales().is_empty());
    }

    #[test]
    fn rows_map_to_schedules() {
        let base = HpmSchedule::default();
        let cfg = PropagationConfig::default();
        let (c, s) = AblationRow::NespPa.configure(&cfg, &base);
        assert!(c.nonlocal && c.extensible);
        assert_eq!(s.prior_scales(), &[1]);
        let (c, s) = AblationRow::HpmFast.configure(&cfg, &base);
        assert!(!c.nonlocal && !c.extensible);
        assert_eq!(s.prior_scales(), &[4]);
        assert_eq!(AblationRow::HpmMvs.configure(&cfg, &base).1.prior_scales(), &[4, 2, 1]);
        assert!(AblationRow::Nesp.configure(&cfg, &base).1.prior_scales().is_empty());
        assert!(AblationRow::parse("nesp+pa").is_ok());
        let err = AblationRow::parse("bogus").unwrap_err().to_string();
        assert!(err.contains("hpm-mvs-fast"));
    }
}
