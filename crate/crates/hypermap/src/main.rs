//! `hypermap` CLI: one executable exposing the full pipeline as subcommands
//! (`synth`, `train`, `classify-scene`, `segment`, `embed`, `activations`).
//! Every run writes a `run.txt` echoing its resolved parameters; identical
//! flags and seed reproduce identical output bytes.
//!
//! Exit codes: 0 success, 2 input error, 3 I/O error, 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hypermap::checkpoint::{load_checkpoint, save_checkpoint};
use hypermap::dataset::{load_split, load_split_rasters};
use hypermap::manifest::{build_manifest, read_manifest, write_manifest, SceneEntry, Split};
use hypermap::parallel::{classify_scene_blocks_par, segment_pixels_par};
use hypermap::pgm::{read_pgm, write_label_pgm, write_raster_pgm, write_scene_pgm};
use hypermap::pngio::write_label_png;
use hypermap::{HmError, Result};
use hypermap_core::embedding::{image_scatter, pairwise_affinities, tsne_fit, EmbeddingConfig};
use hypermap_core::features::{capture_activations, fcn_features, LayerSelector};
use hypermap_core::mapping::SegmentConfig;
use hypermap_core::net::{build_network, train, ArchitectureSpec, CheckpointMeta, Network, TrainConfig};
use hypermap_core::raster::Raster;
use hypermap_core::synth::{generate_synthetic_scene, SyntheticSceneConfig};
use hypermap_core::viz::{backproject, max_activation_select, render_panel};

#[derive(Parser)]
#[command(
    name = "hypermap",
    version,
    about = "Settlement mapping from single-band overhead imagery: train one CNN, reuse its features for block classification, pixel segmentation, 2-D embedding and activation probing"
)]
struct Cli {
    /// Seed for every stochastic step of the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads for scene operations.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config file; flags override it, it overrides built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth and a dataset manifest.
    Synth(SynthArgs),
    /// Train the patch classifier and write a checkpoint plus report.
    Train(TrainArgs),
    /// Block-level scene classification from a checkpoint.
    #[command(name = "classify-scene")]
    ClassifyScene(ClassifyArgs),
    /// Pixel-level hypercolumn segmentation of a scene.
    Segment(SegmentArgs),
    /// 2-D semantic embedding of patch features with an image montage.
    Embed(EmbedArgs),
    /// Maximal-activation backprojection panels for patches.
    Activations(ActivationsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Fraction of each scene covered by the settlement strip.
    #[arg(long)]
    density: Option<f64>,
    /// Structure side, pixels.
    #[arg(long)]
    structure: Option<usize>,
    /// Gap between structures, pixels.
    #[arg(long)]
    spacing: Option<usize>,
    /// Gaussian pixel-noise sigma.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// train,val,map split ratios, e.g. "0.5,0.25,0.25" (by scene).
    #[arg(long)]
    ratios: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Architecture: "reduced" (36 px) or "full" (144 px).
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Multiplier on the fan-in-scaled weight init.
    #[arg(long)]
    init_std: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    block: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// "all" or a comma list like "conv1,conv3".
    #[arg(long)]
    layers: Option<String>,
    /// Fit-sample stride in pixels (prediction is always dense).
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    kmeans_batch: Option<usize>,
    #[arg(long)]
    kmeans_iters: Option<usize>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Manifest split to embed: train, val or map.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    perplexity: Option<f64>,
    /// Cap on the number of embedded patches.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Square montage side, pixels.
    #[arg(long)]
    canvas: Option<usize>,
    /// Target thumbnail side on the montage, pixels.
    #[arg(long)]
    thumb: Option<usize>,
}

#[derive(Args)]
struct ActivationsArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Patch PGM files (network input size).
    #[arg(long, num_args = 1..)]
    patch: Vec<PathBuf>,
    /// "all" or one layer like "conv2".
    #[arg(long)]
    layer: Option<String>,
}

/// TOML config lookup: `[section] key = value`, plus `[global]` for the
/// shared flags.
struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| HmError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| HmError::Format(format!("{}: {e}", p.display())))?
            }
        };
        Ok(ConfigFile { table })
    }

    fn get(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.table.get(section)?.as_table()?.get(key)
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .as_integer()
                .filter(|i| *i >= 0)
                .map(|i| Some(i as usize))
                .ok_or_else(|| bad_config(section, key)),
        }
    }

    fn u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .as_integer()
                .filter(|i| *i >= 0)
                .map(|i| Some(i as u64))
                .ok_or_else(|| bad_config(section, key)),
        }
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .map(Some)
                .ok_or_else(|| bad_config(section, key)),
        }
    }

    fn string(&self, section: &str, key: &str) -> Result<Option<String>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(|s| Some(s.to_string()))
                .ok_or_else(|| bad_config(section, key)),
        }
    }
}

fn bad_config(section: &str, key: &str) -> HmError {
    HmError::Input(format!("config [{section}] {key}: wrong value type"))
}

/// Shared flags after flag/config/default resolution.
struct Ctx {
    seed: u64,
    out: PathBuf,
    cfg: ConfigFile,
}

impl Ctx {
    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| HmError::io(&self.out, e))
    }

    /// Reproducibility record: the subcommand plus every resolved parameter.
    fn write_run_record(&self, command: &str, params: &[(&str, String)]) -> Result<()> {
        let mut lines = vec![format!("command={command}")];
        lines.push(format!("seed={}", self.seed));
        let mut rest: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        rest.sort();
        lines.extend(rest);
        let path = self.out.join("run.txt");
        fs::write(&path, lines.join("\n") + "\n").map_err(|e| HmError::io(&path, e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => cfg.u64("global", "seed")?.unwrap_or(0),
    };
    let out = match cli.out {
        Some(o) => o,
        None => cfg
            .string("global", "out")?
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out")),
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => cfg.usize("global", "threads")?,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(HmError::Input("--threads must be >= 1".into()));
        }
        // Ignore the error if a pool already exists (e.g. repeated calls in
        // one process under test).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx { seed, out, cfg };

    match cli.command {
        Command::Synth(args) => cmd_synth(&ctx, args),
        Command::Train(args) => cmd_train(&ctx, args),
        Command::ClassifyScene(args) => cmd_classify(&ctx, args),
        Command::Segment(args) => cmd_segment(&ctx, args),
        Command::Embed(args) => cmd_embed(&ctx, args),
        Command::Activations(args) => cmd_activations(&ctx, args),
    }
}

fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| HmError::Input(format!("missing required --{what}")))
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(HmError::Input(format!(
            "ratios must be three comma-separated numbers, got \"{s}\""
        )));
    }
    let mut v = [0.0f64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse()
            .map_err(|_| HmError::Input(format!("unreadable ratio \"{p}\"")))?;
    }
    Ok((v[0], v[1], v[2]))
}

fn cmd_synth(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let c = &ctx.cfg;
    let scenes = args.scenes.or(c.usize("synth", "scenes")?).unwrap_or(4);
    let width = args.width.or(c.usize("synth", "width")?).unwrap_or(432);
    let height = args.height.or(c.usize("synth", "height")?).unwrap_or(432);
    let density = args.density.or(c.f64("synth", "density")?).unwrap_or(0.5);
    let structure = args.structure.or(c.usize("synth", "structure")?).unwrap_or(6);
    let spacing = args.spacing.or(c.usize("synth", "spacing")?).unwrap_or(3);
    let noise = args.noise.or(c.f64("synth", "noise")?).unwrap_or(0.02);
    let patch_size = args.patch_size.or(c.usize("synth", "patch_size")?).unwrap_or(36);
    let stride = args.stride.or(c.usize("synth", "stride")?).unwrap_or(18);
    let ratios_s = args
        .ratios
        .or(c.string("synth", "ratios")?)
        .unwrap_or_else(|| "0.5,0.25,0.25".to_string());
    let ratios = parse_ratios(&ratios_s)?;
    if scenes == 0 {
        return Err(HmError::Input("need at least one scene".into()));
    }

    ctx.prepare()?;
    let mut generated = Vec::with_capacity(scenes);
    for i in 0..scenes {
        let cfg = SyntheticSceneConfig {
            width,
            height,
            settlement_density: density as f32,
            structure_size: structure,
            spacing,
            noise_sigma: noise as f32,
            seed: ctx.seed.wrapping_add(i as u64),
        };
        let (scene, mask) = generate_synthetic_scene(&cfg)?;
        let scene_name = format!("scene_{i:02}.pgm");
        let mask_name = format!("mask_{i:02}.pgm");
        write_scene_pgm(ctx.out.join(&scene_name), &scene, 255)?;
        write_label_pgm(ctx.out.join(&mask_name), &mask)?;
        generated.push((scene_name, scene, mask));
    }
    let entries: Vec<SceneEntry> = generated
        .iter()
        .map(|(name, scene, mask)| SceneEntry {
            path: name.clone(),
            scene,
            mask,
        })
        .collect();
    let manifest = build_manifest(&entries, patch_size, stride, ratios, ctx.seed)?;
    write_manifest(ctx.out.join("manifest.tsv"), &manifest)?;

    ctx.write_run_record(
        "synth",
        &[
            ("scenes", scenes.to_string()),
            ("width", width.to_string()),
            ("height", height.to_string()),
            ("density", density.to_string()),
            ("structure", structure.to_string()),
            ("spacing", spacing.to_string()),
            ("noise", noise.to_string()),
            ("patch_size", patch_size.to_string()),
            ("stride", stride.to_string()),
            ("ratios", ratios_s),
        ],
    )?;
    println!(
        "synth: {scenes} scenes ({width}x{height}), {} manifest records -> {}",
        manifest.records.len(),
        ctx.out.display()
    );
    Ok(())
}

fn arch_spec(name: &str, num_classes: usize) -> Result<ArchitectureSpec> {
    match name {
        "reduced" => Ok(ArchitectureSpec::with_widths(
            36,
            &[(8, 5), (16, 5), (24, 3), (32, 3)],
            64,
            num_classes,
        )),
        "full" => Ok(ArchitectureSpec::with_widths(
            144,
            &[(32, 5), (64, 5), (96, 3), (128, 3)],
            512,
            num_classes,
        )),
        other => Err(HmError::Input(format!(
            "unknown architecture \"{other}\" (expected \"reduced\" or \"full\")"
        ))),
    }
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let c = &ctx.cfg;
    let manifest_path = require(
        args.manifest
            .or(c.string("train", "manifest")?.map(PathBuf::from)),
        "manifest",
    )?;
    let arch = args
        .arch
        .or(c.string("train", "arch")?)
        .unwrap_or_else(|| "reduced".to_string());
    let lr = args.lr.or(c.f64("train", "lr")?).unwrap_or(0.00273);
    let batch = args.batch.or(c.usize("train", "batch")?).unwrap_or(150);
    let epochs = args.epochs.or(c.usize("train", "epochs")?).unwrap_or(10);
    let init_std = args.init_std.or(c.f64("train", "init_std")?).unwrap_or(1.0);

    let manifest = read_manifest(&manifest_path)?;
    let spec = arch_spec(&arch, manifest.num_classes)?;
    if manifest.patch_size != spec.input_size {
        return Err(HmError::Input(format!(
            "manifest patch size {} does not match the {arch} architecture input {}",
            manifest.patch_size, spec.input_size
        )));
    }
    let base = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let train_set = load_split(&manifest, &base, Split::Train)?;
    let val_set = load_split(&manifest, &base, Split::Val)?;

    let cfg = TrainConfig {
        learning_rate: lr as f32,
        batch_size: batch,
        epochs,
        init_std: init_std as f32,
        seed: ctx.seed,
        shuffle: true,
    };
    let mut net = build_network(&spec, &cfg)?;
    let report = train(&mut net, &train_set, &val_set, &cfg)?;

    ctx.prepare()?;
    let meta = CheckpointMeta {
        epochs_run: epochs as u32,
        final_losses: report.epochs.iter().map(|e| e.train_loss).collect(),
        seed: ctx.seed,
    };
    save_checkpoint(ctx.out.join("checkpoint.hmap"), &net, &meta)?;
    let mut table = String::from("epoch\ttrain_loss\tval_acc\n");
    for e in &report.epochs {
        table.push_str(&format!(
            "{}\t{:.6}\t{:.6}\n",
            e.epoch, e.train_loss, e.val_accuracy
        ));
    }
    let report_path = ctx.out.join("report.txt");
    fs::write(&report_path, &table).map_err(|e| HmError::io(&report_path, e))?;
    ctx.write_run_record(
        "train",
        &[
            ("manifest", manifest_path.display().to_string()),
            ("arch", arch.clone()),
            ("lr", lr.to_string()),
            ("batch", batch.to_string()),
            ("epochs", epochs.to_string()),
            ("init_std", init_std.to_string()),
            ("train_patches", train_set.len().to_string()),
            ("val_patches", val_set.len().to_string()),
        ],
    )?;
    if let Some(last) = report.epochs.last() {
        println!(
            "train: {} epochs, final loss {:.4}, val accuracy {:.4} -> {}",
            epochs,
            last.train_loss,
            last.val_accuracy,
            ctx.out.display()
        );
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<Network> {
    Ok(load_checkpoint(path)?.0)
}

fn cmd_classify(ctx: &Ctx, args: ClassifyArgs) -> Result<()> {
    let c = &ctx.cfg;
    let checkpoint = require(
        args.checkpoint
            .or(c.string("classify-scene", "checkpoint")?.map(PathBuf::from)),
        "checkpoint",
    )?;
    let scene_path = require(
        args.scene
            .or(c.string("classify-scene", "scene")?.map(PathBuf::from)),
        "scene",
    )?;
    let block = args.block.or(c.usize("classify-scene", "block")?).unwrap_or(16);

    let net = load_net(&checkpoint)?;
    let scene = read_pgm(&scene_path)?;
    let grid = classify_scene_blocks_par(&net, &scene, block)?;

    ctx.prepare()?;
    write_label_pgm(ctx.out.join("labels.pgm"), &grid)?;
    write_label_png(ctx.out.join("preview.png"), &grid)?;
    ctx.write_run_record(
        "classify-scene",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("scene", scene_path.display().to_string()),
            ("block", block.to_string()),
            ("grid", format!("{}x{}", grid.rows, grid.cols)),
        ],
    )?;
    println!(
        "classify-scene: {}x{} grid -> {}",
        grid.rows,
        grid.cols,
        ctx.out.display()
    );
    Ok(())
}

fn parse_layers(spec: &str, n_convs: usize) -> Result<Vec<usize>> {
    if spec == "all" {
        return Ok((1..=n_convs).collect());
    }
    let mut ids = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let digits = part.strip_prefix("conv").unwrap_or(part);
        let id: usize = digits
            .parse()
            .map_err(|_| HmError::Input(format!("unreadable layer name \"{part}\"")))?;
        if id == 0 || id > n_convs {
            return Err(HmError::Input(format!(
                "layer \"{part}\" out of range: network has conv1..conv{n_convs}"
            )));
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(HmError::Input("empty layer list".into()));
    }
    Ok(ids)
}

fn cmd_segment(ctx: &Ctx, args: SegmentArgs) -> Result<()> {
    let c = &ctx.cfg;
    let checkpoint = require(
        args.checkpoint
            .or(c.string("segment", "checkpoint")?.map(PathBuf::from)),
        "checkpoint",
    )?;
    let scene_path = require(
        args.scene.or(c.string("segment", "scene")?.map(PathBuf::from)),
        "scene",
    )?;
    let k = args.k.or(c.usize("segment", "k")?).unwrap_or(4);
    let layers = args
        .layers
        .or(c.string("segment", "layers")?)
        .unwrap_or_else(|| "all".to_string());
    let stride = args.stride.or(c.usize("segment", "stride")?).unwrap_or(4);
    let kmeans_batch = args
        .kmeans_batch
        .or(c.usize("segment", "kmeans_batch")?)
        .unwrap_or(1024);
    let kmeans_iters = args
        .kmeans_iters
        .or(c.usize("segment", "kmeans_iters")?)
        .unwrap_or(100);

    let net = load_net(&checkpoint)?;
    let scene = read_pgm(&scene_path)?;
    let selector = LayerSelector {
        layer_ids: parse_layers(&layers, net.spec.conv_count())?,
        include_fcn: false,
    };
    let seg_cfg = SegmentConfig {
        k,
        selector,
        sample_stride: stride,
        seed: ctx.seed,
        kmeans_batch_size: kmeans_batch,
        kmeans_iterations: kmeans_iters,
    };
    let grid = segment_pixels_par(&net, &scene, &seg_cfg)?;

    ctx.prepare()?;
    write_label_pgm(ctx.out.join("clusters.pgm"), &grid)?;
    write_label_png(ctx.out.join("preview.png"), &grid)?;
    ctx.write_run_record(
        "segment",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("scene", scene_path.display().to_string()),
            ("k", k.to_string()),
            ("layers", layers.clone()),
            ("stride", stride.to_string()),
            ("kmeans_batch", kmeans_batch.to_string()),
            ("kmeans_iters", kmeans_iters.to_string()),
        ],
    )?;
    println!(
        "segment: {} clusters over {}x{} pixels -> {}",
        k,
        grid.rows,
        grid.cols,
        ctx.out.display()
    );
    Ok(())
}

fn cmd_embed(ctx: &Ctx, args: EmbedArgs) -> Result<()> {
    let c = &ctx.cfg;
    let checkpoint = require(
        args.checkpoint
            .or(c.string("embed", "checkpoint")?.map(PathBuf::from)),
        "checkpoint",
    )?;
    let manifest_path = require(
        args.manifest
            .or(c.string("embed", "manifest")?.map(PathBuf::from)),
        "manifest",
    )?;
    let split_s = args
        .split
        .or(c.string("embed", "split")?)
        .unwrap_or_else(|| "map".to_string());
    let split = Split::parse(&split_s).map_err(|_| {
        HmError::Input(format!(
            "unknown split \"{split_s}\" (expected train, val or map)"
        ))
    })?;
    let perplexity = args.perplexity.or(c.f64("embed", "perplexity")?).unwrap_or(30.0);
    let n_cap = args.n.or(c.usize("embed", "n")?).unwrap_or(2000);
    let iterations = args.iterations.or(c.usize("embed", "iterations")?).unwrap_or(1000);
    let canvas = args.canvas.or(c.usize("embed", "canvas")?).unwrap_or(800);
    let thumb = args.thumb.or(c.usize("embed", "thumb")?).unwrap_or(24);

    let net = load_net(&checkpoint)?;
    let manifest = read_manifest(&manifest_path)?;
    let base = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let items = load_split_rasters(&manifest, &base, split, n_cap)?;
    if items.is_empty() {
        return Err(HmError::Input(format!(
            "manifest has no records in split \"{split_s}\""
        )));
    }

    // fcn features for every patch.
    let mut features: Vec<f32> = Vec::new();
    let mut dim = 0usize;
    for (patch, _, _) in &items {
        let f = fcn_features(&net, patch)?;
        dim = f.len();
        features.extend_from_slice(f.data());
    }

    let aff = pairwise_affinities(&features, dim, perplexity)?;
    let emb_cfg = EmbeddingConfig {
        perplexity,
        iterations,
        seed: ctx.seed,
        ..EmbeddingConfig::default()
    };
    let emb = tsne_fit(&aff, &emb_cfg)?;

    ctx.prepare()?;
    let mut table = String::new();
    for (i, (_, _, label)) in items.iter().enumerate() {
        table.push_str(&format!(
            "{i},{:.6},{:.6},{}\n",
            emb.coords[i * 2 + 1],
            emb.coords[i * 2],
            label
        ));
    }
    let coords_path = ctx.out.join("coords.csv");
    fs::write(&coords_path, table).map_err(|e| HmError::io(&coords_path, e))?;

    let factor = manifest.patch_size.div_ceil(thumb.max(1)).max(1);
    let thumbs: Vec<Raster> = items
        .iter()
        .map(|(_, raster, _)| raster.box_downsample(factor))
        .collect::<hypermap_core::Result<_>>()?;
    let montage = image_scatter(&emb, &thumbs, canvas, canvas)?;
    write_raster_pgm(ctx.out.join("montage.pgm"), &montage, 255)?;

    ctx.write_run_record(
        "embed",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("manifest", manifest_path.display().to_string()),
            ("split", split_s.clone()),
            ("perplexity", perplexity.to_string()),
            ("n", n_cap.to_string()),
            ("points", items.len().to_string()),
            ("iterations", iterations.to_string()),
            ("canvas", canvas.to_string()),
            ("thumb", thumb.to_string()),
        ],
    )?;
    println!(
        "embed: {} points, final objective {:.4} -> {}",
        emb.n,
        emb.kl_trace.last().copied().unwrap_or(f64::NAN),
        ctx.out.display()
    );
    Ok(())
}

fn cmd_activations(ctx: &Ctx, args: ActivationsArgs) -> Result<()> {
    let c = &ctx.cfg;
    let checkpoint = require(
        args.checkpoint
            .or(c.string("activations", "checkpoint")?.map(PathBuf::from)),
        "checkpoint",
    )?;
    let patches = if args.patch.is_empty() {
        c.string("activations", "patch")?
            .map(|s| vec![PathBuf::from(s)])
            .unwrap_or_default()
    } else {
        args.patch
    };
    if patches.is_empty() {
        return Err(HmError::Input("missing required --patch".into()));
    }
    let layer_s = args
        .layer
        .or(c.string("activations", "layer")?)
        .unwrap_or_else(|| "all".to_string());

    let net = load_net(&checkpoint)?;
    let layer_ids = parse_layers(&layer_s, net.spec.conv_count())?;

    ctx.prepare()?;
    let mut panels = Vec::new();
    for path in &patches {
        let raster = read_pgm(path)?;
        let s = net.spec.input_size;
        if raster.height != s || raster.width != s {
            return Err(HmError::Input(format!(
                "{}: patch is {}x{}, network expects {s}x{s}",
                path.display(),
                raster.height,
                raster.width
            )));
        }
        let patch = hypermap_core::synth::extract_patch(&raster, 0, 0, s)?;
        let stack = capture_activations(&net, &patch)?;
        let mut results = Vec::new();
        for &layer in &layer_ids {
            let (filter, _) = max_activation_select(&stack, layer)?;
            results.push(backproject(&net, &stack, layer, filter)?);
        }
        let panel = render_panel(&patch, &results)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "patch".to_string());
        let name = format!("panel_{stem}.pgm");
        write_raster_pgm(ctx.out.join(&name), &panel, 255)?;
        panels.push(name);
    }
    ctx.write_run_record(
        "activations",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("layer", layer_s.clone()),
            ("patches", patches.len().to_string()),
        ],
    )?;
    println!(
        "activations: {} panel(s) -> {}",
        panels.len(),
        ctx.out.display()
    );
    Ok(())
}
