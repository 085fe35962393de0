use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use perceptiq_core::image_io::{is_supported_extension, list_images, load_gray, save_gray};
use perceptiq_core::loss::{
    parse_preset, probe_descent, CompositeLoss, LossResources, LossSpec, MaVariant, ProbeError,
    ProbeOptions, ProbeTrace,
};
use perceptiq_core::msd::{
    forest_predict, forest_train, msd_features, read_training_csv, ForestModel, ForestParams,
    Regressor, DEFAULT_MSD_PATCH,
};
use perceptiq_core::niqe::{extract_patch_features, fit_natural_model, MvgModel, NiqeConfig};
use perceptiq_core::nss::{PatchFeature18, WindowWeighting};
use perceptiq_core::scoring::{batch_report, batch_report_files, RmseSpace, ScoreOptions};
use perceptiq_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "perceptiq",
    version,
    about = "NIQE and Ma metrics, losses and the loss probe"
)]
struct Cli {
    /// Worker threads for image-level parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0, env = "PERCEPTIQ_WORKERS")]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a natural-scene model from a directory of pristine images.
    FitNiqe(FitNiqeArgs),
    /// Score images with NIQE, Ma and the perceptual score, optionally with RMSE against references.
    Score(ScoreArgs),
    /// Train the Ma regression forest from a CSV of feature rows with a trailing score column.
    TrainForest(TrainForestArgs),
    /// Run pixel-space finite-difference descent on a composite loss.
    Probe(ProbeArgs),
    /// Dump MSD singular-value features as CSV.
    MsdFeatures(MsdFeaturesArgs),
}

#[derive(Args, Debug)]
struct NiqeArgs {
    /// Patch side in pixels.
    #[arg(long, default_value_t = 96, env = "PERCEPTIQ_NIQE_PATCH")]
    patch: usize,
    /// Local normalization window side (odd).
    #[arg(long, default_value_t = 7, env = "PERCEPTIQ_WINDOW")]
    window: usize,
    /// Keep patches whose sharpness exceeds this fraction of the image maximum.
    #[arg(long, default_value_t = 0.75, env = "PERCEPTIQ_THRESHOLD")]
    threshold: f64,
    /// Local normalization window weighting.
    #[arg(long, default_value = "gaussian", value_parser = ["gaussian", "box"], env = "PERCEPTIQ_WEIGHTING")]
    weighting: String,
    /// 1 for 18-d features, 2 to append the half-resolution features.
    #[arg(long, default_value_t = 1, env = "PERCEPTIQ_SCALES")]
    scales: usize,
}

impl NiqeArgs {
    fn config(&self) -> Result<NiqeConfig> {
        let cfg = NiqeConfig {
            patch: self.patch,
            window: self.window,
            threshold_fraction: self.threshold,
            weighting: self.weighting.parse::<WindowWeighting>()?,
            scales: self.scales,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FitNiqeArgs {
    /// Directory of pristine images.
    corpus: PathBuf,
    /// Model file to write.
    #[arg(long, env = "PERCEPTIQ_MODEL_OUT")]
    out: PathBuf,
    #[command(flatten)]
    niqe: NiqeArgs,
    /// Free-text corpus description stored in the model.
    #[arg(long, default_value = "", env = "PERCEPTIQ_NOTE")]
    note: String,
    /// Also write every kept patch's feature vector to this CSV.
    #[arg(long)]
    dump_features: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Space {
    Luma,
    Rgb,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Image file or directory of images.
    input: PathBuf,
    /// Natural-scene model from fit-niqe.
    #[arg(long, env = "PERCEPTIQ_MODEL")]
    model: PathBuf,
    /// Ma forest from train-forest; without it Ma and the perceptual score are left empty.
    #[arg(long, env = "PERCEPTIQ_FOREST")]
    forest: Option<PathBuf>,
    /// Reference image or directory; files are paired by name.
    #[arg(long, env = "PERCEPTIQ_HR")]
    hr: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv, env = "PERCEPTIQ_FORMAT")]
    format: Format,
    /// Pixels shaved from each side before RMSE.
    #[arg(long, default_value_t = 0, env = "PERCEPTIQ_CROP")]
    crop: usize,
    /// Color space for RMSE.
    #[arg(long, value_enum, default_value_t = Space::Luma, env = "PERCEPTIQ_RMSE_SPACE")]
    rmse_space: Space,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainForestArgs {
    /// Rows of feature values followed by the score; an optional header row.
    csv: PathBuf,
    /// Forest file to write.
    #[arg(long)]
    out: PathBuf,
    /// Number of trees.
    #[arg(long, default_value_t = 100, env = "PERCEPTIQ_TREES")]
    trees: usize,
    /// Maximum tree depth (unlimited when absent).
    #[arg(long, env = "PERCEPTIQ_MAX_DEPTH")]
    max_depth: Option<usize>,
    /// Minimum samples per leaf.
    #[arg(long, default_value_t = 5, env = "PERCEPTIQ_MIN_LEAF")]
    min_leaf: usize,
    #[arg(long, default_value_t = 0, env = "PERCEPTIQ_SEED")]
    seed: u64,
    /// Candidate features per split (ceil(sqrt(n_features)) when absent).
    #[arg(long, env = "PERCEPTIQ_MAX_FEATURES")]
    max_features: Option<usize>,
    /// Train every tree on the full table instead of a bootstrap sample.
    #[arg(long)]
    no_bootstrap: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MaChoice {
    /// Distance to the reference image's MSD features.
    Ref,
    /// 10 minus the forest score.
    Forest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NiqeForm {
    Squared,
    Plain,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("objective").required(true).args(["loss", "preset"])))]
struct ProbeArgs {
    /// Starting image (at most 64x64).
    #[arg(long)]
    init: PathBuf,
    /// Reference image, same size as --init.
    #[arg(long)]
    hr: PathBuf,
    /// Loss spec, e.g. "mse:10,niqe:0.01,ma-ref:0.001".
    #[arg(long, env = "PERCEPTIQ_LOSS")]
    loss: Option<String>,
    /// Weight-table preset, e.g. table1-16.
    #[arg(long)]
    preset: Option<String>,
    /// Ma term used by presets.
    #[arg(long, value_enum, default_value_t = MaChoice::Ref)]
    ma_variant: MaChoice,
    /// Descent iterations.
    #[arg(long, default_value_t = 50, env = "PERCEPTIQ_STEPS")]
    steps: usize,
    /// Gradient step, in gray levels per unit gradient.
    #[arg(long, default_value_t = 10.0, env = "PERCEPTIQ_STEP_SIZE")]
    step_size: f64,
    /// Half-width of the central difference, in gray levels.
    #[arg(long, default_value_t = 0.5, env = "PERCEPTIQ_FD_EPSILON")]
    fd_epsilon: f64,
    /// Natural-scene model, needed by the niqe term.
    #[arg(long, env = "PERCEPTIQ_MODEL")]
    niqe_model: Option<PathBuf>,
    /// Ma forest, needed by the ma-forest term.
    #[arg(long, env = "PERCEPTIQ_FOREST")]
    forest: Option<PathBuf>,
    /// MSD patch side for the ma-ref term.
    #[arg(long, default_value_t = DEFAULT_MSD_PATCH, env = "PERCEPTIQ_MSD_PATCH")]
    msd_patch: usize,
    /// NIQE term form [default: squared for --loss, plain for --preset].
    #[arg(long, value_enum)]
    niqe_form: Option<NiqeForm>,
    /// Output prefix: writes <prefix>_trace.csv and <prefix>_final.png.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MsdFeaturesArgs {
    /// Image file or directory of images.
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MSD_PATCH, env = "PERCEPTIQ_MSD_PATCH")]
    patch: usize,
    /// One row per tile instead of the pooled spectrum.
    #[arg(long)]
    per_patch: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Outcome of a command that may finish with per-item errors.
enum Outcome {
    Clean,
    Partial,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PERCEPTIQ_LOG", "warn"))
        .init();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::FitNiqe(a) => fit_niqe(a),
        Command::Score(a) => score(a),
        Command::TrainForest(a) => train_forest(a),
        Command::Probe(a) => probe(a),
        Command::MsdFeatures(a) => dump_msd(a),
    }
}

fn header(command: &str, niqe: &NiqeConfig, msd_patch: usize) {
    eprintln!(
        "perceptiq {command}: niqe patch={} window={} threshold={} weighting={} scales={}; msd patch={msd_patch}; workers={}",
        niqe.patch,
        niqe.window,
        niqe.threshold_fraction,
        niqe.weighting.as_str(),
        niqe.scales,
        rayon::current_num_threads()
    );
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Files named by `input`: the file itself, or the sorted images of a directory.
fn input_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let files = list_images(input)?;
        if files.is_empty() {
            bail!("no images in {}", input.display());
        }
        Ok(files)
    } else if input.is_file() {
        if !is_supported_extension(input) {
            bail!(Error::UnsupportedFormat(input.to_path_buf()));
        }
        Ok(vec![input.to_path_buf()])
    } else {
        bail!("{} does not exist", input.display())
    }
}

fn fit_niqe(a: FitNiqeArgs) -> Result<Outcome> {
    let cfg = a.niqe.config()?;
    header("fit-niqe", &cfg, DEFAULT_MSD_PATCH);
    let files = input_images(&a.corpus)?;
    let model = fit_natural_model(&files, &cfg, &a.note)?;
    model.save(&a.out)?;
    if let Some(dump) = &a.dump_features {
        dump_niqe_features(&files, &cfg, dump)?;
    }
    println!(
        "fitted {}-d model from {} patches over {} images (patch {}, window {}, threshold {}, {} weighting, {} scale{})",
        model.dim(),
        model.meta.patch_count,
        files.len(),
        cfg.patch,
        cfg.window,
        cfg.threshold_fraction,
        cfg.weighting.as_str(),
        cfg.scales,
        if cfg.scales == 1 { "" } else { "s" }
    );
    println!("wrote {}", a.out.display());
    Ok(Outcome::Clean)
}

fn dump_niqe_features(files: &[PathBuf], cfg: &NiqeConfig, path: &Path) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut head = vec!["image".to_string(), "x".into(), "y".into()];
    for scale in 1..=cfg.scales {
        for n in PatchFeature18::NAMES {
            head.push(if scale == 1 {
                n.to_string()
            } else {
                format!("s{scale}_{n}")
            });
        }
    }
    w.write_record(&head)?;
    for f in files {
        let img = load_gray(f)?;
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let patches = match extract_patch_features(&img, cfg) {
            Ok(p) => p,
            Err(Error::InsufficientTexture) => continue,
            Err(e) => return Err(e.into()),
        };
        for ((x, y), v) in patches {
            let mut rec = vec![name.clone(), x.to_string(), y.to_string()];
            rec.extend(v.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn score(a: ScoreArgs) -> Result<Outcome> {
    let natural = MvgModel::load(&a.model)?;
    let forest = a.forest.as_deref().map(ForestModel::load).transpose()?;
    header(
        "score",
        natural.config(),
        forest
            .as_ref()
            .map_or(DEFAULT_MSD_PATCH, |f| f.n_features()),
    );
    let opts = ScoreOptions {
        niqe: &natural,
        forest: forest.as_ref().map(|f| f as &dyn Regressor),
        crop: a.crop,
        rmse_space: match a.rmse_space {
            Space::Luma => RmseSpace::Luma,
            Space::Rgb => RmseSpace::Rgb,
        },
    };
    let report = if a.input.is_dir() {
        if a.hr.as_deref().is_some_and(|h| !h.is_dir()) {
            bail!("--hr must be a directory when scoring a directory");
        }
        batch_report(&a.input, a.hr.as_deref(), &opts)?
    } else {
        let sr = input_images(&a.input)?.remove(0);
        let hr = a.hr.as_deref().map(|h| reference_for(&sr, h)).transpose()?;
        batch_report_files(&[(sr, hr)], &opts)
    };
    let text = match a.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    write_output(a.output.as_deref(), &text)?;
    if report.has_errors() {
        eprintln!(
            "{} of {} images had errors",
            report.aggregate.failed, report.aggregate.images
        );
        Ok(Outcome::Partial)
    } else {
        Ok(Outcome::Clean)
    }
}

/// `hr` itself if it is a file, else the image in `hr` with the same stem as `sr`.
fn reference_for(sr: &Path, hr: &Path) -> Result<PathBuf> {
    if !hr.is_dir() {
        return Ok(hr.to_path_buf());
    }
    let stem = sr.file_stem();
    list_images(hr)?
        .into_iter()
        .find(|p| p.file_stem() == stem)
        .with_context(|| format!("no reference for {} in {}", sr.display(), hr.display()))
}

fn train_forest(a: TrainForestArgs) -> Result<Outcome> {
    header("train-forest", &NiqeConfig::default(), DEFAULT_MSD_PATCH);
    let rows = read_training_csv(&a.csv)?;
    let params = ForestParams {
        n_trees: a.trees,
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
        seed: a.seed,
        bootstrap: !a.no_bootstrap,
        max_features: a.max_features,
    };
    let forest = forest_train(&rows, &params)?;
    forest.save(&a.out)?;
    let mut sq = 0.0;
    for (x, y) in &rows {
        sq += (forest_predict(&forest, x)? - y).powi(2);
    }
    let rmse = (sq / rows.len() as f64).sqrt();
    println!(
        "trained {} trees on {} rows of {} features (seed {})",
        params.n_trees,
        rows.len(),
        forest.n_features(),
        params.seed
    );
    println!("training rmse {rmse}");
    println!("wrote {}", a.out.display());
    Ok(Outcome::Clean)
}

fn probe(a: ProbeArgs) -> Result<Outcome> {
    let ma_variant = match a.ma_variant {
        MaChoice::Ref => MaVariant::Reference,
        MaChoice::Forest => MaVariant::Regressor,
    };
    let mut spec = match (&a.loss, &a.preset) {
        (Some(text), _) => LossSpec::parse(text)?,
        (None, Some(name)) => parse_preset(name, ma_variant)?,
        (None, None) => unreachable!("clap requires --loss or --preset"),
    };
    if let Some(form) = a.niqe_form {
        spec.niqe_squared = matches!(form, NiqeForm::Squared);
    }
    let natural = a.niqe_model.as_deref().map(MvgModel::load).transpose()?;
    let forest = a.forest.as_deref().map(ForestModel::load).transpose()?;
    header(
        "probe",
        natural
            .as_ref()
            .map_or(&NiqeConfig::default(), |m| m.config()),
        a.msd_patch,
    );
    let init = load_gray(&a.init)?;
    let hr = load_gray(&a.hr)?;
    let res = LossResources {
        hr: Some(&hr),
        natural: natural.as_ref(),
        regressor: forest.as_ref().map(|f| f as &dyn Regressor),
        msd_patch: a.msd_patch,
        niqe_squared: spec.niqe_squared,
    };
    let loss = CompositeLoss::new(&spec, &res)?;
    let opts = ProbeOptions {
        steps: a.steps,
        step_size: a.step_size,
        fd_epsilon: a.fd_epsilon,
    };
    eprintln!(
        "loss {spec} (niqe {}), {} steps of size {}, epsilon {}",
        if spec.niqe_squared {
            "squared"
        } else {
            "plain"
        },
        opts.steps,
        opts.step_size,
        opts.fd_epsilon
    );
    let trace_path = suffixed(&a.out, "_trace.csv");
    match probe_descent(&init, &hr, &loss, &opts) {
        Ok(trace) => {
            write_trace(&trace, &trace_path, &suffixed(&a.out, "_final.png"))?;
            let first = trace.iterations[0].total;
            let last = trace.iterations.last().map_or(first, |s| s.total);
            println!("initial loss {first}");
            println!("final loss {last}");
            Ok(Outcome::Clean)
        }
        Err(ProbeError::Aborted {
            step,
            reason,
            partial,
        }) => {
            write_trace(&partial, &trace_path, &suffixed(&a.out, "_partial.png"))?;
            bail!(
                "probe aborted at step {step}: {reason} (partial trace in {})",
                trace_path.display()
            )
        }
        Err(ProbeError::Setup(e)) => Err(e.into()),
    }
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_trace(trace: &ProbeTrace, csv_path: &Path, image_path: &Path) -> Result<()> {
    fs::write(csv_path, trace.to_csv())
        .with_context(|| format!("writing {}", csv_path.display()))?;
    save_gray(&trace.final_image, image_path)?;
    Ok(())
}

fn dump_msd(a: MsdFeaturesArgs) -> Result<Outcome> {
    header("msd-features", &NiqeConfig::default(), a.patch);
    let files = input_images(&a.input)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["image".to_string()];
    if a.per_patch {
        head.extend(["tile_row".into(), "tile_col".into()]);
    }
    head.extend((0..a.patch).map(|i| format!("s{i}")));
    w.write_record(&head)?;
    let mut failed = 0;
    for f in &files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let feat = match load_gray(f).and_then(|img| msd_features(&img, a.patch)) {
            Ok(feat) => feat,
            Err(e) => {
                eprintln!("{name}: {e}");
                failed += 1;
                continue;
            }
        };
        if a.per_patch {
            for (k, s) in feat.per_patch().enumerate() {
                let mut rec = vec![
                    name.clone(),
                    (k / feat.grid.1).to_string(),
                    (k % feat.grid.1).to_string(),
                ];
                rec.extend(s.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        } else {
            let mut rec = vec![name];
            rec.extend(feat.pooled.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    let text = String::from_utf8(w.into_inner()?)?;
    write_output(a.output.as_deref(), &text)?;
    Ok(if failed > 0 {
        Outcome::Partial
    } else {
        Outcome::Clean
    })
}
