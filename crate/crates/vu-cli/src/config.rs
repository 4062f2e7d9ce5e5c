//! Pipeline configuration: every tunable from every stage, JSON-loadable,
//! range-checked before any computation. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vu_core::dynamics::DynamicsConfig;
use vu_core::preprocess::PreprocessConfig;
use vu_core::unfold_geometry::BaselineOrientation;
use vu_core::unfolded_view::RenderMode;
use vu_core::wall_model::WallModelConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub baseline_orientation: BaselineOrientation,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { baseline_orientation: BaselineOrientation::Paper }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    /// In-plane margin around the deformed model (mm).
    pub margin_mm: f64,
    pub window_center: f64,
    pub window_width: f64,
    pub render_mode: RenderMode,
    /// Springs stretched beyond this ratio count as broken.
    pub broken_stretch_ratio: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            margin_mm: 5.0,
            window_center: 40.0,
            window_width: 400.0,
            render_mode: RenderMode::Mip,
            broken_stretch_ratio: 2.0,
        }
    }
}

/// Every tunable of the pipeline with its defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub model: WallModelConfig,
    pub geometry: GeometryConfig,
    pub dynamics: DynamicsConfig,
    pub view: ViewConfig,
}

impl PipelineConfig {
    /// Loads a JSON config file; unknown keys are errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Range-checks every value against the module invariants.
    pub fn validate(&self) -> Result<()> {
        let p = &self.preprocess;
        if !(p.wall_shell_mm > 0.0) {
            bail!("preprocess.wall_shell_mm must be positive, got {}", p.wall_shell_mm);
        }
        if !(p.resample_step_mm > 0.0) {
            bail!("preprocess.resample_step_mm must be positive, got {}", p.resample_step_mm);
        }
        if !(p.slab_half_width_mm > 0.0) {
            bail!("preprocess.slab_half_width_mm must be positive, got {}", p.slab_half_width_mm);
        }
        if !(p.landmark_snap_mm > 0.0) {
            bail!("preprocess.landmark_snap_mm must be positive, got {}", p.landmark_snap_mm);
        }
        if !(p.endpoint_tolerance_mm > 0.0) {
            bail!("preprocess.endpoint_tolerance_mm must be positive");
        }
        if !(p.air_threshold.is_finite() && p.wall_intensity_threshold.is_finite()) {
            bail!("preprocess thresholds must be finite");
        }

        let m = &self.model;
        if m.d < 2 {
            bail!("model.d must be at least 2, got {}", m.d);
        }
        if !(m.rho > 0.0) {
            bail!("model.rho must be positive, got {}", m.rho);
        }
        if !(m.edge_stiffness >= 0.0 && m.diagonal_stiffness >= 0.0 && m.damper_coefficient >= 0.0)
        {
            bail!("model stiffness and damping must be non-negative");
        }
        if !(m.svb_radius_factor > 0.0) {
            bail!("model.svb_radius_factor must be positive");
        }

        self.dynamics.validate().map_err(|e| anyhow::anyhow!("{e}"))?;

        let v = &self.view;
        if !(v.margin_mm >= 0.0) {
            bail!("view.margin_mm must be non-negative, got {}", v.margin_mm);
        }
        if !(v.window_width > 0.0) {
            bail!("view.window_width must be positive, got {}", v.window_width);
        }
        if !(v.broken_stretch_ratio > 1.0) {
            bail!("view.broken_stretch_ratio must exceed 1, got {}", v.broken_stretch_ratio);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn default_parameter_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.model.d, 8);
        assert_eq!(cfg.dynamics.kappa, 0.5);
    }

    #[test]
    fn zero_kappa_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.dynamics.kappa = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"dynamics": {"warp": 9}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<PipelineConfig>(r#"{"frobnicate": true}"#);
        assert!(err.is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        let again = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(text, again);
    }
}
