//! Command implementations behind the `hpmvs` binary.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hpmvs::fusion::{evaluate, fuse, read_ply, write_ply, DepthErrors, Metrics, PlyFormat};
use hpmvs::hpm::{manifest, run_basic, run_geometric, run_priors, run_scene, AblationRow, ViewResult};
use hpmvs::imaging::{load_gray, read_pfm, write_pfm, PfmData, ScalarField};
use hpmvs::patchmatch::DepthNormalMap;
use hpmvs::scene::Scene;
use hpmvs::{MvsError, Result};

pub use config::RunConfig;

fn io_err(path: &Path, e: std::io::Error) -> MvsError {
    MvsError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Runs `f` on a pool with `workers` threads (0 = all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| MvsError::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Files written by [`reconstruct`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub depth_maps: Vec<PathBuf>,
    pub normal_maps: Vec<PathBuf>,
    pub cloud: PathBuf,
    pub manifest: PathBuf,
    pub points: usize,
}

/// Full pipeline on the scene at `cfg.input`, writing into `cfg.output`.
pub fn reconstruct(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let scene = Scene::load(&cfg.input)?;
    scene.require_views(2)?;
    let schedule = cfg.schedule();
    let result = run_scene(&scene, &cfg.propagation, &cfg.prior, &schedule, cfg.run_options())?;
    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut art = Artifacts {
        depth_maps: Vec::new(),
        normal_maps: Vec::new(),
        cloud: out.join("fused.ply"),
        manifest: out.join("manifest.txt"),
        points: 0,
    };
    for (view, map) in scene.views.iter().zip(&result.maps) {
        let d = out.join(format!("depth_{}.pfm", view.id));
        let n = out.join(format!("normal_{}.pfm", view.id));
        write_pfm(&d, &PfmData::from_scalar(&map.depth_field()))?;
        write_pfm(&n, &PfmData::from_vector(&map.normal_field()))?;
        art.depth_maps.push(d);
        art.normal_maps.push(n);
    }
    let cloud = fuse(&scene, &result.maps, &cfg.fusion)?;
    art.points = cloud.len();
    let format = if cfg.ascii_ply { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    write_ply(&art.cloud, &cloud, format)?;
    let mut text = cfg.dump();
    text.push_str(&manifest(&schedule, &cfg.propagation, &result.reports));
    let _ = writeln!(text, "fused_points={}", cloud.len());
    write_text(&art.manifest, &text)?;
    Ok(art)
}

/// Text table of metrics, one row per threshold.
pub fn format_metrics(rows: &[Metrics]) -> String {
    let mut s = format!("{:>10} {:>9} {:>13} {:>7}\n", "threshold", "accuracy", "completeness", "f1");
    for m in rows {
        let _ = writeln!(s, "{:>10} {:>9.2} {:>13.2} {:>7.2}", m.threshold, m.accuracy, m.completeness, m.f1);
    }
    s
}

/// Machine-readable form of [`format_metrics`].
pub fn metrics_key_values(rows: &[Metrics]) -> String {
    let mut s = String::new();
    for m in rows {
        let t = m.threshold;
        let _ = writeln!(s, "accuracy@{t}={:.2}", m.accuracy);
        let _ = writeln!(s, "completeness@{t}={:.2}", m.completeness);
        let _ = writeln!(s, "f1@{t}={:.2}", m.f1);
    }
    s
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>> {
    let mut ts = Vec::new();
    for part in text.split(',') {
        let t: f64 = part
            .trim()
            .parse()
            .map_err(|_| MvsError::InvalidArgument(format!("bad threshold `{part}`")))?;
        if !(t >= 0.0) {
            return Err(MvsError::InvalidArgument(format!("threshold must be non-negative: {t}")));
        }
        ts.push(t);
    }
    ts.sort_by(f64::total_cmp);
    Ok(ts)
}

/// Compares two PLY files; returns metrics sorted by threshold.
pub fn eval_files(reconstruction: &Path, ground_truth: &Path, thresholds: &[f64]) -> Result<Vec<Metrics>> {
    let rec = read_ply(reconstruction)?;
    let gt = read_ply(ground_truth)?;
    evaluate(&rec, &gt, thresholds)
}

/// Scene with per-view ground-truth depth and optional masks.
#[derive(Debug, Clone)]
pub struct GroundTruthScene {
    pub scene: Scene,
    pub depth: Vec<ScalarField<f64>>,
    pub textureless: Option<Vec<Vec<bool>>>,
    /// Pixels seen by at least one other view; depth metrics skip the rest.
    pub covisible: Option<Vec<Vec<bool>>>,
}

impl GroundTruthScene {
    /// Reads `gt/depth_<id>.pfm` and, when present for every view,
    /// `gt/textureless_<id>.png` and `gt/covisible_<id>.png`.
    pub fn load(dir: &Path) -> Result<Self> {
        let scene = Scene::load(dir)?;
        let gt = dir.join("gt");
        let depth = scene
            .views
            .iter()
            .map(|v| read_pfm(&gt.join(format!("depth_{}.pfm", v.id)))?.to_scalar())
            .collect::<Result<Vec<_>>>()?;
        let textureless = load_masks(&scene, &gt, "textureless")?;
        let covisible = load_masks(&scene, &gt, "covisible")?;
        Ok(Self {
            scene,
            depth,
            textureless,
            covisible,
        })
    }
}

fn load_masks(scene: &Scene, gt: &Path, name: &str) -> Result<Option<Vec<Vec<bool>>>> {
    let mut masks = Vec::new();
    for v in &scene.views {
        let m = gt.join(format!("{name}_{}.png", v.id));
        if !m.exists() {
            return Ok(None);
        }
        masks.push(load_gray(&m)?.data().iter().map(|p| *p > 0.5).collect());
    }
    Ok(Some(masks))
}

impl From<hpmvs::synth::SynthScene> for GroundTruthScene {
    fn from(s: hpmvs::synth::SynthScene) -> Self {
        Self {
            scene: s.scene,
            depth: s.depth,
            textureless: Some(s.textureless),
            covisible: Some(s.covisible),
        }
    }
}

/// Metrics of one ablation row, pooled over all views.
#[derive(Debug, Clone)]
pub struct AblationResult {
    pub row: AblationRow,
    pub all: Vec<Metrics>,
    /// Restricted to textureless pixels, when the scene marks them.
    pub textureless: Option<Vec<Metrics>>,
    pub fused_points: usize,
}

/// Runs each row on the same scene with per-pixel relative depth metrics.
///
/// Rows sharing the propagation toggles reuse one basic stage per view.
pub fn ablate(
    data: &GroundTruthScene,
    rows: &[AblationRow],
    cfg: &RunConfig,
    thresholds: &[f64],
) -> Result<Vec<AblationResult>> {
    cfg.validate()?;
    data.scene.require_views(2)?;
    let base_schedule = cfg.schedule();
    let mut basics: Vec<((bool, bool), Vec<ViewResult>)> = Vec::new();
    let mut out = Vec::new();
    for &row in rows {
        let (prop, schedule) = row.configure(&cfg.propagation, &base_schedule);
        let key = (prop.nonlocal, prop.extensible);
        if !basics.iter().any(|(k, _)| *k == key) {
            let views = (0..data.scene.len())
                .map(|i| run_basic(&data.scene, i, &prop))
                .collect::<Result<Vec<_>>>()?;
            basics.push((key, views));
        }
        let basic = &basics.iter().find(|(k, _)| *k == key).unwrap().1;
        let views = basic
            .iter()
            .enumerate()
            .map(|(i, b)| run_priors(&data.scene, i, &prop, &cfg.prior, &schedule, b.clone()))
            .collect::<Result<Vec<_>>>()?;
        let result = run_geometric(&data.scene, &prop, &cfg.prior, &schedule, views, cfg.run_options())?;
        let cloud = fuse(&data.scene, &result.maps, &cfg.fusion)?;
        out.push(AblationResult {
            row,
            all: depth_metrics(&result.maps, data, false, thresholds)?,
            textureless: match data.textureless {
                Some(_) => Some(depth_metrics(&result.maps, data, true, thresholds)?),
                None => None,
            },
            fused_points: cloud.len(),
        });
    }
    Ok(out)
}

fn depth_metrics(maps: &[DepthNormalMap], data: &GroundTruthScene, masked: bool, ts: &[f64]) -> Result<Vec<Metrics>> {
    let mut e = DepthErrors::default();
    for (i, map) in maps.iter().enumerate() {
        let flat = data.textureless.as_ref().filter(|_| masked).map(|m| &m[i]);
        let seen = data.covisible.as_ref().map(|m| &m[i]);
        let mask: Option<Vec<bool>> = match (flat, seen) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(a, b)| *a && *b).collect()),
            (a, b) => a.or(b).cloned(),
        };
        e.add(map, &data.depth[i], mask.as_deref())?;
    }
    e.metrics(ts)
}

/// One line per row and threshold.
pub fn format_ablation(results: &[AblationResult]) -> String {
    let mut s = format!(
        "{:<14} {:>9} {:>9} {:>13} {:>7} {:>13} {:>8}\n",
        "row", "threshold", "accuracy", "completeness", "f1", "lowtex_comp", "points"
    );
    for r in results {
        for (k, m) in r.all.iter().enumerate() {
            let low = r
                .textureless
                .as_ref()
                .map_or("-".to_string(), |t| format!("{:.2}", t[k].completeness));
            let _ = writeln!(
                s,
                "{:<14} {:>9} {:>9.2} {:>13.2} {:>7.2} {:>13} {:>8}",
                r.row.name(),
                m.threshold,
                m.accuracy,
                m.completeness,
                m.f1,
                low,
                r.fused_points
            );
        }
    }
    s
}

/// Parses a comma-separated row list.
pub fn parse_rows(text: &str) -> Result<Vec<AblationRow>> {
    text.split(',').map(|r| AblationRow::parse(r.trim())).collect()
}
