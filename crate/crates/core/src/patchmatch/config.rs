use crate::error::{MvsError, Result};

/// Parameters of the basic PatchMatch engine with non-local extensible sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    /// Number of best per-view costs averaged for the initial cost.
    pub top_k: usize,
    /// Maximum number of region extensions.
    pub max_extensions: usize,
    pub tau_good: f64,
    pub tau_bad: f64,
    /// Decay constant of the extension threshold schedule.
    pub alpha: f64,
    pub n_good: usize,
    pub n_bad: usize,
    /// Non-local exclusion radius in pixels.
    pub nonlocal_radius: f64,
    /// Disabling falls back to the plain local sampling templates.
    pub nonlocal: bool,
    /// Disabling keeps every region at its level-0 template.
    pub extensible: bool,
    pub iterations: usize,
    pub patch_radius: usize,
    pub patch_step: usize,
    pub sigma_spatial: f64,
    pub sigma_range: f64,
    /// Gaussian width of the view weights.
    pub view_beta: f64,
    /// Relative depth perturbation of the first refinement round.
    pub depth_perturbation: f64,
    /// Normal perturbation of the first refinement round, in degrees.
    pub normal_perturbation_deg: f64,
    pub geom_weight: f64,
    /// Reprojection error clamp in pixels.
    pub geom_clamp: f64,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            top_k: 4,
            max_extensions: 3,
            tau_good: 0.8,
            tau_bad: 1.2,
            alpha: 90.0,
            n_good: 1,
            n_bad: 2,
            nonlocal_radius: 4.0,
            nonlocal: true,
            extensible: true,
            iterations: 3,
            patch_radius: 5,
            patch_step: 2,
            sigma_spatial: 2.5,
            sigma_range: 0.1,
            view_beta: 0.3,
            depth_perturbation: 0.1,
            normal_perturbation_deg: 10.0,
            geom_weight: 0.2,
            geom_clamp: 3.0,
            seed: 0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(MvsError::invalid(m.to_string()));
        if self.top_k < 1 {
            return fail("top_k must be at least 1");
        }
        if !(self.tau_good < self.tau_bad) {
            return fail("tau_good must be below tau_bad");
        }
        if !(self.alpha > 0.0) {
            return fail("alpha must be positive");
        }
        if !(self.nonlocal_radius >= 0.0) {
            return fail("nonlocal radius must be non-negative");
        }
        if self.patch_step == 0 {
            return fail("patch step must be positive");
        }
        if !(self.sigma_spatial > 0.0 && self.sigma_range > 0.0 && self.view_beta > 0.0) {
            return fail("kernel widths must be positive");
        }
        if !(self.geom_clamp > 0.0 && self.geom_weight >= 0.0) {
            return fail("geometric consistency constants must be positive");
        }
        Ok(())
    }

    /// Radius actually used for masking (0 when non-local sampling is off).
    pub fn effective_radius(&self) -> f64 {
        if self.nonlocal {
            self.nonlocal_radius
        } else {
            0.0
        }
    }

    /// Extension budget actually used (0 when extension is off).
    pub fn effective_extensions(&self) -> usize {
        if self.extensible {
            self.max_extensions
        } else {
            0
        }
    }
}
