use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use posefree_core::align::{DEFAULT_GAMMA, DEFAULT_REJECT_THRESHOLD};
use posefree_core::depth_align::{apply_scale_shift, ransac_scale_shift, RansacConfig};
use posefree_core::gaussians::{interpolate_embedding, AppearanceEmbedding};
use posefree_core::geom::{DepthMap, PinholeCamera, VisibilityMask};
use posefree_core::io::{self, SceneManifest};
use posefree_core::pipeline::{self, PredictedView};
use posefree_core::render::{masked_mse, psnr, rasterize};
use posefree_core::synth::{self, SynthConfig};
use posefree_core::visibility::{
    select_context_pairs, select_targets, MiningConfig, ViewId, DEFAULT_COVERAGE_THRESHOLD, DEFAULT_DELTA,
    DEFAULT_SKY_CUTOFF, DEFAULT_VISIBILITY_THRESHOLD,
};

/// Pose-free Gaussian scene reconstruction tools.
#[derive(Parser)]
#[command(name = "posefree", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "POSEFREE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit relative depth to sparse metric samples and write the aligned depth.
    AlignDepth(AlignDepthArgs),
    /// List context pairs and target views around a seed view.
    MineViews(MineViewsArgs),
    /// Write the visibility mask of a target view and its sky extension.
    Mask(MaskArgs),
    /// Build pixel-aligned Gaussians from per-view predictions.
    Build(BuildArgs),
    /// Align predicted Gaussians to the manifest's reference depth.
    Align(AlignArgs),
    /// Render a Gaussian file.
    Render(RenderArgs),
    /// Render a sweep between two appearance embeddings.
    Interp(InterpArgs),
    /// PSNR and MSE between two images.
    Eval(EvalArgs),
    /// Write a synthetic scene.
    Synth(SynthArgs),
}

#[derive(Args)]
struct AlignDepthArgs {
    /// Relative depth raster.
    #[arg(long)]
    pred: PathBuf,
    /// Sparse `u,v,depth` CSV.
    #[arg(long)]
    sparse: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 0.05)]
    thresh: f64,
    #[arg(long)]
    min_inliers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MineViewsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    seed_view: ViewId,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE_THRESHOLD)]
    cov: f64,
    #[arg(long, default_value_t = DEFAULT_VISIBILITY_THRESHOLD)]
    vis: f64,
    #[arg(long, default_value_t = DEFAULT_SKY_CUTOFF)]
    sky_cutoff: f64,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    target: ViewId,
    #[arg(long, value_delimiter = ',', required = true)]
    contexts: Vec<ViewId>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_SKY_CUTOFF)]
    sky_cutoff: f64,
    /// Output raster for the visibility mask.
    #[arg(long)]
    out: PathBuf,
    /// Output raster for the mask extended with sky.
    #[arg(long)]
    out_sky: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// One or more view ids; their Gaussians are concatenated in this order.
    #[arg(long, value_delimiter = ',', required = true)]
    view: Vec<ViewId>,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    /// Row of the embedding file to use.
    #[arg(long, default_value_t = 0)]
    embedding_index: usize,
    /// Use this variant's image as features instead of the manifest's feature raster.
    #[arg(long)]
    variant: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    gauss: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Views the Gaussians were built from (default: every view with predictions).
    #[arg(long, value_delimiter = ',')]
    views: Vec<ViewId>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_REJECT_THRESHOLD)]
    reject: f64,
    #[arg(long, default_value_t = DEFAULT_SKY_CUTOFF)]
    sky_cutoff: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    gauss: PathBuf,
    /// View id in `--manifest`, or a camera file.
    #[arg(long)]
    camera: String,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Expected-depth raster output.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Accumulated-alpha raster output.
    #[arg(long)]
    alpha: Option<PathBuf>,
}

#[derive(Args)]
struct InterpArgs {
    /// Gaussians whose geometry is kept; colors are recomputed.
    #[arg(long)]
    gauss_geom: PathBuf,
    #[arg(long)]
    e1: PathBuf,
    #[arg(long)]
    e2: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Views the Gaussians were built from, in build order.
    #[arg(long, value_delimiter = ',', required = true)]
    views: Vec<ViewId>,
    /// View id in `--manifest`, or a camera file.
    #[arg(long)]
    camera: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Mask raster; pixels ≥ 0.5 are scored.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    gaussians: usize,
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 2)]
    variants: usize,
    #[arg(long, default_value_t = 40.0)]
    arc: f64,
    #[arg(long, default_value_t = 0.02)]
    jitter: f64,
    #[arg(long, default_value_t = 32)]
    embedding_dim: usize,
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn camera_arg(spec: &str, manifest: Option<&SceneManifest>) -> Result<PinholeCamera> {
    match spec.parse::<ViewId>() {
        Ok(id) => {
            let m = manifest.ok_or_else(|| anyhow!("--camera {id} needs --manifest"))?;
            Ok(m.view(id)?.camera.to_camera()?)
        }
        Err(_) => Ok(io::load_camera(spec)?),
    }
}

fn views_with_predictions(m: &SceneManifest) -> Vec<ViewId> {
    m.views
        .iter()
        .filter(|v| v.rays.is_some() && v.pred_depth.is_some() && v.head.is_some())
        .map(|v| v.id)
        .collect()
}

fn align_depth(a: AlignDepthArgs) -> Result<()> {
    let pred = DepthMap::from_raster(&io::read_raster(&a.pred)?)?;
    let sparse = io::read_sparse(&a.sparse)?;
    let cfg = RansacConfig {
        iterations: a.iters,
        inlier_log_threshold: a.thresh,
        min_inliers: a.min_inliers,
        seed: a.seed,
    };
    let fit = ransac_scale_shift(&pred, &sparse, &cfg)?;
    io::write_raster(&a.out, &apply_scale_shift(&pred, &fit.model).to_raster())?;
    print_json(&json!({
        "scale": fit.model.scale,
        "shift": fit.model.shift,
        "inliers": fit.inlier_count,
        "samples": sparse.len(),
    }))
}

fn mine_views(a: MineViewsArgs) -> Result<()> {
    let m = SceneManifest::load(&a.manifest)?;
    let ids: Vec<ViewId> = m.views.iter().map(|v| v.id).collect();
    let records = pipeline::load_view_records(&m, &ids)?;
    let cfg = MiningConfig {
        delta: a.delta,
        sky_cutoff: a.sky_cutoff,
        coverage_threshold: a.cov,
        visibility_threshold: a.vis,
    };
    let find = |id| records.iter().find(|r| r.id == id).expect("loaded from the manifest");
    let mut sets = Vec::new();
    for (c1, c2, cov) in select_context_pairs(&records, a.seed_view, &cfg)? {
        let targets = match select_targets(find(c1), find(c2), &records, &cfg) {
            Err(posefree_core::Error::Degenerate(_)) => Vec::new(),
            r => r?,
        };
        sets.push(json!({ "contexts": [c1, c2], "coverage": cov, "targets": targets }));
    }
    print_json(&json!({ "seed_view": a.seed_view, "view_sets": sets }))
}

fn mask(a: MaskArgs) -> Result<()> {
    let m = SceneManifest::load(&a.manifest)?;
    let target = pipeline::load_view_record(&m, a.target)?;
    let contexts = pipeline::load_view_records(&m, &a.contexts)?;
    let refs: Vec<_> = contexts.iter().collect();
    let (mask, with_sky) = pipeline::target_masks(&target, &refs, a.delta, a.sky_cutoff)?;
    io::write_raster(&a.out, &mask.to_raster())?;
    if let Some(p) = &a.out_sky {
        io::write_raster(p, &with_sky.to_raster())?;
    }
    print_json(&json!({
        "target": a.target,
        "pixels": mask.len(),
        "visible": mask.count(),
        "visible_or_sky": with_sky.count(),
    }))
}

fn load_predictions(m: &SceneManifest, ids: &[ViewId], variant: Option<usize>) -> Result<Vec<PredictedView>> {
    ids.iter()
        .map(|id| {
            let features = match variant {
                Some(k) => {
                    let entry = m.view(*id)?;
                    let png = entry
                        .images
                        .get(k)
                        .ok_or_else(|| anyhow!("view {id} has no image for variant {k}"))?;
                    Some(io::read_png(m.resolve(png))?.into_raster())
                }
                None => None,
            };
            Ok(PredictedView::load(m, *id, features)?)
        })
        .collect()
}

fn build(a: BuildArgs) -> Result<()> {
    let m = SceneManifest::load(&a.manifest)?;
    let weights = io::read_weights(&a.weights)?;
    let embedding = io::read_embedding(&a.embedding, a.embedding_index)?;
    let views = load_predictions(&m, &a.view, a.variant)?;
    let g = pipeline::build_gaussians(&views, &weights, &embedding)?;
    io::write_gaussians(&a.out, &g)?;
    print_json(&json!({ "views": a.view, "gaussians": g.len(), "sh_degree": g.sh_degree }))
}

fn align(a: AlignArgs) -> Result<()> {
    let m = SceneManifest::load(&a.manifest)?;
    let ids = if a.views.is_empty() { views_with_predictions(&m) } else { a.views.clone() };
    let g = io::read_gaussians(&a.gauss)?;
    let predicted = load_predictions(&m, &ids, None)?;
    let records = pipeline::load_view_records(&m, &ids)?;
    let report = pipeline::align_predictions(&predicted, &records, a.gamma, a.sky_cutoff, a.reject)?;
    let summary = json!({
        "views": ids,
        "scale": report.transform.scale,
        "translation": report.transform.translation.as_slice(),
        "residual": report.residual,
        "rejected": report.rejected,
    });
    print_json(&summary)?;
    io::write_gaussians(&a.out, &pipeline::aligned_gaussians(&g, &report)?)?;
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let m = a.manifest.as_deref().map(SceneManifest::load).transpose()?;
    let camera = camera_arg(&a.camera, m.as_ref())?;
    let g = io::read_gaussians(&a.gauss)?;
    let out = rasterize(&g, &camera);
    io::write_png(&a.out, &out.color)?;
    if let Some(p) = &a.depth {
        io::write_raster(p, &out.expected_depth)?;
    }
    if let Some(p) = &a.alpha {
        io::write_raster(p, &out.accum_alpha)?;
    }
    Ok(())
}

fn interp(a: InterpArgs) -> Result<()> {
    if a.steps == 0 {
        bail!("--steps must be at least 1");
    }
    let m = SceneManifest::load(&a.manifest)?;
    let camera = camera_arg(&a.camera, Some(&m))?;
    let geometry = io::read_gaussians(&a.gauss_geom)?;
    let weights = io::read_weights(&a.weights)?;
    let (e1, e2) = (io::read_embedding(&a.e1, 0)?, io::read_embedding(&a.e2, 0)?);
    let views = load_predictions(&m, &a.views, None)?;
    fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
    let mut written = Vec::new();
    for k in 0..a.steps {
        let t = if a.steps == 1 { 0.0 } else { k as f64 / (a.steps - 1) as f64 };
        let e: AppearanceEmbedding = interpolate_embedding(&e1, &e2, t)?;
        let g = pipeline::recolor(&geometry, &views, &weights, &e)?;
        let path = a.out_dir.join(format!("interp_{k:03}.png"));
        io::write_png(&path, &rasterize(&g, &camera).color)?;
        written.push(path.display().to_string());
    }
    print_json(&json!({ "images": written }))
}

fn eval(a: EvalArgs) -> Result<()> {
    let (x, y) = (io::read_png(&a.a)?, io::read_png(&a.b)?);
    let mask = a
        .mask
        .as_deref()
        .map(|p| -> Result<VisibilityMask> { Ok(VisibilityMask::from_raster(&io::read_raster(p)?)?) })
        .transpose()?;
    let mse = masked_mse(&x, &y, mask.as_ref())?;
    let db = psnr(&x, &y, mask.as_ref())?;
    println!("PSNR {db:.2} dB");
    println!("MSE {mse:.6e}");
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_gaussians: a.gaussians,
        n_views: a.views,
        width: a.width,
        height: a.height,
        seed: a.seed,
        n_variants: a.variants,
        arc_degrees: a.arc,
        jitter: a.jitter,
        embedding_dim: a.embedding_dim,
        ..SynthConfig::default()
    };
    let scene = synth::synth_scene(&cfg)?;
    let manifest = synth::write_scene(&scene, &a.out)?;
    print_json(&json!({
        "manifest": a.out.join(synth::MANIFEST_FILE).display().to_string(),
        "views": manifest.views.len(),
        "gaussians": scene.gaussians.len(),
    }))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::AlignDepth(a) => align_depth(a),
        Command::MineViews(a) => mine_views(a),
        Command::Mask(a) => mask(a),
        Command::Build(a) => build(a),
        Command::Align(a) => align(a),
        Command::Render(a) => render(a),
        Command::Interp(a) => interp(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // causes already spelled out by an outer message are not repeated
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
