//! End-to-end pipeline: volumes + two landmarks in, unfolded volume,
//! rendered view, iteration log, and manifest out.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use vu_core::dynamics::{run_unfold, StopReason};
use vu_core::preprocess::{
    determine_incision_line, extract_air_region, extract_centerline, extract_wall_region,
};
use vu_core::unfold_geometry::{
    compute_base_line, compute_destinations, compute_radii, compute_unfold_plane, dump_geometry,
};
use vu_core::unfolded_view::{
    bending_rms, broken_fraction, build_unfolded_grid, render_view, resample_unfolded,
};
use vu_core::volume::{
    read_volume, write_volume, AnyVolume, LabelVolume, ScalarVolume, LABEL_AIR, LABEL_BACKGROUND,
    LABEL_WALL,
};
use vu_core::wall_model::{build_hex_model, classify_vertex_sets};
use vu_core::Vec3;

use crate::config::PipelineConfig;
use crate::manifest::{
    DefectMetrics, GridInfo, ManifestInputs, ModelStats, OutputPaths, RunManifest,
};

/// A pipeline failure, tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn stage_err<E: fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> StageError {
    move |e| StageError { stage, message: e.to_string() }
}

pub struct UnfoldInputs {
    pub volume_path: PathBuf,
    pub labels_path: Option<PathBuf>,
    pub cardia: Vec3,
    pub pylorus: Vec3,
    pub out_dir: PathBuf,
    pub dump_model: bool,
    pub dump_geometry: bool,
}

pub struct PipelineOutcome {
    pub stop: StopReason,
    pub iterations: usize,
    pub initial_d: f64,
    pub final_d: f64,
    /// Absent when the view stage was skipped for a diverged run.
    pub defects: Option<DefectMetrics>,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Splits a combined label volume into air-only and wall-only volumes.
fn split_labels(labels: &LabelVolume) -> (LabelVolume, LabelVolume) {
    let mut air = LabelVolume::filled(labels.dims(), labels.spacing(), LABEL_BACKGROUND)
        .expect("dims from an existing volume");
    let mut wall = air.clone();
    for (idx, &l) in labels.data().iter().enumerate() {
        match l {
            LABEL_AIR => air.data_mut()[idx] = LABEL_AIR,
            LABEL_WALL => wall.data_mut()[idx] = LABEL_WALL,
            _ => {}
        }
    }
    (air, wall)
}

/// Runs preprocess, wall model, unfolding geometry, dynamics, and view
/// generation; writes the unfolded GVOL, mask, PPM image, iteration log,
/// and the run manifest into the output directory.
pub fn run_unfold_pipeline(
    cfg: &PipelineConfig,
    inputs: &UnfoldInputs,
) -> Result<PipelineOutcome, StageError> {
    cfg.validate().map_err(stage_err("config"))?;
    fs::create_dir_all(&inputs.out_dir).map_err(stage_err("setup"))?;
    let mut timings: BTreeMap<String, u128> = BTreeMap::new();
    let timed = |name: &'static str, timings: &mut BTreeMap<String, u128>, start: Instant| {
        timings.insert(name.to_string(), start.elapsed().as_millis());
    };

    // Load inputs.
    let t0 = Instant::now();
    let volume_bytes = fs::read(&inputs.volume_path).map_err(stage_err("load"))?;
    let volume_sha = sha256_hex(&volume_bytes);
    let scalar: ScalarVolume = vu_core::volume::volume_from_bytes(&volume_bytes)
        .and_then(AnyVolume::into_scalar)
        .map_err(stage_err("load"))?;
    let mut labels_sha = None;
    let provided_labels = match &inputs.labels_path {
        Some(p) => {
            let bytes = fs::read(p).map_err(stage_err("load"))?;
            labels_sha = Some(sha256_hex(&bytes));
            let labels = vu_core::volume::volume_from_bytes(&bytes)
                .and_then(AnyVolume::into_label)
                .map_err(stage_err("load"))?;
            Some(labels)
        }
        None => None,
    };
    timed("load", &mut timings, t0);

    // Air and wall regions.
    let t0 = Instant::now();
    let (air, wall) = match &provided_labels {
        Some(labels) => {
            let (air, wall) = split_labels(labels);
            if !air.data().iter().any(|&l| l == LABEL_AIR) {
                return Err(StageError {
                    stage: "preprocess-air",
                    message: "provided label volume has no air (label 2) voxels".into(),
                });
            }
            let wall = if wall.data().iter().any(|&l| l == LABEL_WALL) {
                wall
            } else {
                extract_wall_region(&scalar, &air, &cfg.preprocess)
                    .map_err(stage_err("preprocess-wall"))?
            };
            (air, wall)
        }
        None => {
            let air = extract_air_region(&scalar, &inputs.cardia, &cfg.preprocess)
                .map_err(stage_err("preprocess-air"))?;
            let wall = extract_wall_region(&scalar, &air, &cfg.preprocess)
                .map_err(stage_err("preprocess-wall"))?;
            (air, wall)
        }
    };
    timed("regions", &mut timings, t0);

    // Centerline and incision line.
    let t0 = Instant::now();
    let centerline = extract_centerline(&air, &inputs.cardia, &inputs.pylorus, &cfg.preprocess)
        .map_err(stage_err("preprocess-centerline"))?;
    let incision = determine_incision_line(
        &wall,
        &air,
        &centerline,
        &inputs.cardia,
        &inputs.pylorus,
        &cfg.preprocess,
    )
    .map_err(stage_err("preprocess-incision"))?;
    timed("curves", &mut timings, t0);

    // Elastic model.
    let t0 = Instant::now();
    let model =
        build_hex_model(&wall, &air, incision.points(), &cfg.model).map_err(stage_err("wall-model"))?;
    let sets = classify_vertex_sets(&model, &air, incision.points(), &cfg.model);
    timed("wall-model", &mut timings, t0);

    // Unfolding geometry.
    let t0 = Instant::now();
    let plane0 =
        compute_unfold_plane(&incision, &model, &sets).map_err(stage_err("unfold-geometry"))?;
    let radii = compute_radii(&model, &sets, &centerline, &incision)
        .map_err(stage_err("unfold-geometry"))?;
    let (baseline, plane) =
        compute_base_line(&incision, &plane0, cfg.geometry.baseline_orientation)
            .map_err(stage_err("unfold-geometry"))?;
    let dest = compute_destinations(&model, &radii, &baseline, &plane, &centerline, &incision);
    timed("unfold-geometry", &mut timings, t0);

    if inputs.dump_model {
        fs::write(inputs.out_dir.join("model_dump.txt"), model.dump(Some(&sets)))
            .map_err(stage_err("write"))?;
    }
    if inputs.dump_geometry {
        fs::write(
            inputs.out_dir.join("geometry_dump.txt"),
            dump_geometry(&plane, &baseline, &dest),
        )
        .map_err(stage_err("write"))?;
    }

    // Deformation.
    let t0 = Instant::now();
    let mut surface: Vec<u32> = sets.vo.iter().chain(sets.vi.iter()).copied().collect();
    surface.sort_unstable();
    surface.dedup();
    let run = run_unfold(&model, &dest, &plane, &surface, &cfg.dynamics)
        .map_err(stage_err("dynamics"))?;
    timed("dynamics", &mut timings, t0);

    let log_path = inputs.out_dir.join("iterations.log");
    let mut log = String::new();
    for (alpha, d) in run.state.d_history.iter().enumerate() {
        let max_force =
            if alpha == 0 { 0.0 } else { run.max_force_history[alpha - 1] };
        log.push_str(&format!("{alpha} {d} {max_force}\n"));
    }
    fs::write(&log_path, log).map_err(stage_err("write"))?;

    if inputs.dump_model {
        let mut out = String::new();
        for (i, p) in run.state.positions.iter().enumerate() {
            out.push_str(&format!("r {} {} {} {}\n", i, p.x, p.y, p.z));
        }
        for e in &dest.entries {
            let r = run.state.positions[e.vertex as usize];
            out.push_str(&format!(
                "vb {} dist {} goal {} {} {}\n",
                e.vertex,
                (r - e.goal).norm(),
                e.goal.x,
                e.goal.y,
                e.goal.z
            ));
        }
        fs::write(inputs.out_dir.join("deformed_dump.txt"), out)
            .map_err(stage_err("write"))?;
    }

    // Unfolded volume and rendering; skipped when the run diverged (the
    // positions are not a sheet anymore).
    let t0 = Instant::now();
    let mut defects = None;
    let mut grid_info = None;
    let mut vol_path = None;
    let mut mask_path = None;
    let mut image_path = None;
    if run.stop != StopReason::Diverged {
        let grid = build_unfolded_grid(
            &plane,
            &run.state.positions,
            cfg.view.margin_mm,
            scalar.spacing(),
        )
        .map_err(stage_err("unfolded-view"))?;
        let (uv, report) =
            resample_unfolded(&scalar, &model, &model.positions, &run.state.positions, &grid);
        let image =
            render_view(&uv, cfg.view.window_center, cfg.view.window_width, cfg.view.render_mode)
                .map_err(stage_err("unfolded-view"))?;
        defects = Some(DefectMetrics {
            overlap_fraction: report.overlap_fraction,
            broken_fraction: broken_fraction(
                &model,
                &run.state.positions,
                cfg.view.broken_stretch_ratio,
            ),
            bending_rms_mm: bending_rms(&uv, &plane),
        });
        grid_info = Some(GridInfo {
            origin_mm: [grid.origin.x, grid.origin.y, grid.origin.z],
            v1: [grid.axes[0].x, grid.axes[0].y, grid.axes[0].z],
            v2: [grid.axes[1].x, grid.axes[1].y, grid.axes[1].z],
            normal: [grid.axes[2].x, grid.axes[2].y, grid.axes[2].z],
            spacing_mm: [grid.spacing.0, grid.spacing.1, grid.spacing.2],
            dims: [grid.dims.0, grid.dims.1, grid.dims.2],
        });
        let vp = inputs.out_dir.join("unfolded.gvol");
        let mp = inputs.out_dir.join("unfolded_mask.gvol");
        let ip = inputs.out_dir.join("view.ppm");
        write_volume(&uv.volume, &vp).map_err(stage_err("write"))?;
        write_volume(&uv.mask, &mp).map_err(stage_err("write"))?;
        fs::write(&ip, image.to_ppm()).map_err(stage_err("write"))?;
        vol_path = Some(vp);
        mask_path = Some(mp);
        image_path = Some(ip);
    }
    timed("unfolded-view", &mut timings, t0);

    let iterations = run.state.iteration;
    let initial_d = run.state.d_history[0];
    let final_d = *run.state.d_history.last().expect("history nonempty");
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        inputs: ManifestInputs {
            volume: inputs.volume_path.display().to_string(),
            volume_sha256: volume_sha,
            labels: inputs.labels_path.as_ref().map(|p| p.display().to_string()),
            labels_sha256: labels_sha,
            cardia_mm: [inputs.cardia.x, inputs.cardia.y, inputs.cardia.z],
            pylorus_mm: [inputs.pylorus.x, inputs.pylorus.y, inputs.pylorus.z],
        },
        model: ModelStats {
            vertices: model.vertex_count(),
            springs: model.springs.len(),
            hexahedra: model.hexahedra.len(),
            outer_surface_vertices: sets.vo.len(),
            inner_surface_vertices: sets.vi.len(),
            cut_edge_vertices: sets.vb.len(),
            dropped_components: model.dropped_components,
            dropped_cells: model.dropped_cells,
        },
        iterations,
        stop_reason: run.stop,
        initial_d_mm: initial_d,
        final_d_mm: final_d,
        d_history: run.state.d_history.clone(),
        defects,
        grid: grid_info,
        outputs: OutputPaths {
            unfolded_volume: vol_path.map(|p| p.display().to_string()),
            unfolded_mask: mask_path.map(|p| p.display().to_string()),
            image: image_path.map(|p| p.display().to_string()),
            iteration_log: log_path.display().to_string(),
        },
        timings_ms: timings,
    };
    let manifest_path = inputs.out_dir.join("manifest.json");
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(stage_err("write"))?;
    fs::write(&manifest_path, manifest_json + "\n").map_err(stage_err("write"))?;

    Ok(PipelineOutcome {
        stop: run.stop,
        iterations,
        initial_d,
        final_d,
        defects,
        manifest,
        manifest_path,
    })
}

/// One row of the kappa sweep report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepRow {
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_d_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub broken_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bending_rms_mm: Option<f64>,
}

/// Runs the full pipeline once per kappa; individual failures are recorded
/// in their row and do not stop the sweep.
pub fn run_sweep(
    cfg: &PipelineConfig,
    inputs: &UnfoldInputs,
    kappas: &[f64],
) -> Result<Vec<SweepRow>, StageError> {
    fs::create_dir_all(&inputs.out_dir).map_err(stage_err("setup"))?;
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let mut run_cfg = cfg.clone();
        run_cfg.dynamics.kappa = kappa;
        let run_inputs = UnfoldInputs {
            volume_path: inputs.volume_path.clone(),
            labels_path: inputs.labels_path.clone(),
            cardia: inputs.cardia,
            pylorus: inputs.pylorus,
            out_dir: inputs.out_dir.join(format!("kappa-{kappa:.2}")),
            dump_model: false,
            dump_geometry: false,
        };
        match run_unfold_pipeline(&run_cfg, &run_inputs) {
            Ok(outcome) => rows.push(SweepRow {
                kappa,
                error: None,
                stop_reason: Some(outcome.stop),
                iterations: Some(outcome.iterations),
                final_d_mm: Some(outcome.final_d),
                overlap_fraction: outcome.defects.map(|d| d.overlap_fraction),
                broken_fraction: outcome.defects.map(|d| d.broken_fraction),
                bending_rms_mm: outcome.defects.map(|d| d.bending_rms_mm),
            }),
            Err(e) => rows.push(SweepRow {
                kappa,
                error: Some(e.to_string()),
                stop_reason: None,
                iterations: None,
                final_d_mm: None,
                overlap_fraction: None,
                broken_fraction: None,
                bending_rms_mm: None,
            }),
        }
    }
    let report = serde_json::to_string_pretty(&rows).map_err(stage_err("write"))?;
    fs::write(inputs.out_dir.join("sweep_report.json"), report + "\n")
        .map_err(stage_err("write"))?;
    Ok(rows)
}

/// Plain-text sweep table for stdout.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str("kappa  stop            iters  final_D    overlap    broken     bending_rms\n");
    for r in rows {
        match &r.error {
            Some(e) => out.push_str(&format!("{:<6.2} ERROR: {e}\n", r.kappa)),
            None => out.push_str(&format!(
                "{:<6.2} {:<15} {:<6} {:<10.4} {:<10.6} {:<10.6} {:<10.4}\n",
                r.kappa,
                r.stop_reason.map(|s| s.to_string()).unwrap_or_default(),
                r.iterations.unwrap_or(0),
                r.final_d_mm.unwrap_or(f64::NAN),
                r.overlap_fraction.unwrap_or(f64::NAN),
                r.broken_fraction.unwrap_or(f64::NAN),
                r.bending_rms_mm.unwrap_or(f64::NAN),
            )),
        }
    }
    out
}

/// Reads an unfolded volume + mask pair back for re-rendering.
pub fn load_unfolded(
    volume_path: &Path,
    mask_path: &Path,
) -> Result<(ScalarVolume, LabelVolume), StageError> {
    let vol = read_volume(volume_path)
        .and_then(AnyVolume::into_scalar)
        .map_err(stage_err("load"))?;
    let mask = read_volume(mask_path)
        .and_then(AnyVolume::into_label)
        .map_err(stage_err("load"))?;
    Ok((vol, mask))
}
