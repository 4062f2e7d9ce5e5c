//! Run manifest: a self-contained record of one pipeline run, written
//! exactly once. Re-running with the embedded config snapshot reproduces
//! the outputs byte for byte (timings aside).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vu_core::dynamics::StopReason;

use crate::config::PipelineConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestInputs {
    pub volume: String,
    pub volume_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_sha256: Option<String>,
    pub cardia_mm: [f64; 3],
    pub pylorus_mm: [f64; 3],
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DefectMetrics {
    pub overlap_fraction: f64,
    pub broken_fraction: f64,
    pub bending_rms_mm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelStats {
    pub vertices: usize,
    pub springs: usize,
    pub hexahedra: usize,
    pub outer_surface_vertices: usize,
    pub inner_surface_vertices: usize,
    pub cut_edge_vertices: usize,
    pub dropped_components: usize,
    pub dropped_cells: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridInfo {
    pub origin_mm: [f64; 3],
    pub v1: [f64; 3],
    pub v2: [f64; 3],
    pub normal: [f64; 3],
    pub spacing_mm: [f64; 3],
    pub dims: [usize; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputPaths {
    /// Absent when the run diverged and no usable volume existed to write.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unfolded_volume: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unfolded_mask: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub iteration_log: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub inputs: ManifestInputs,
    pub model: ModelStats,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub initial_d_mm: f64,
    pub final_d_mm: f64,
    pub d_history: Vec<f64>,
    /// Absent when the view stage was skipped for a diverged run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defects: Option<DefectMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridInfo>,
    pub outputs: OutputPaths,
    /// Per-stage wall-clock milliseconds. Timing varies run to run; strip
    /// this field when comparing manifests for reproducibility.
    pub timings_ms: BTreeMap<String, u128>,
}
