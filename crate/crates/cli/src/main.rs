//! `fundus-qa` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fundus_qa::adversarial::{
    score_triples, ConstantDiscriminator, CsvDiscriminator, LossConfig, TripleEntry, DEFAULT_EPSILON, DEFAULT_LAMBDA,
};
use fundus_qa::isc::{train_isc, IscModel, IscTrainParams, DEFAULT_C, DEFAULT_EPOCHS, DEFAULT_K};
use fundus_qa::pipeline::{
    build_manifest, compare_report, read_id_list, read_labeled_scores, read_scores_csv, score_batch, score_paths,
    split_dataset, write_scores_csv, BatchOptions, DatasetManifest, ImageRole, Metric, MetricScores, ScoreRow,
    SplitSpec,
};
use fundus_qa::qv::DEFAULT_WINDOW;
use fundus_qa::raster::{detect_fov, load_image, save_png, DEFAULT_FOV_THRESHOLD};
use fundus_qa::stats::{auc, roc_curve, youden_threshold, DEFAULT_ALPHA};
use fundus_qa::synth::{defocus, render_fundus, FundusSpec};
use fundus_qa::vesselness::{binarize, masked_vesselness, BinaryVesselTree, FrangiParams};

const THREADS_ENV: &str = "FUNDUS_QA_THREADS";

#[derive(Parser)]
#[command(
    name = "fundus-qa",
    version,
    about = "Retinal fundus image quality metrics and evaluation tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair retina and vessel-tree files by name into a manifest.
    Manifest(ManifestArgs),
    /// Split a manifest into train / validation / test manifests.
    Split(SplitArgs),
    /// Segment vessels with the Frangi filter and a fixed or Youden threshold.
    Segment(SegmentArgs),
    /// Score images with a no-reference quality metric.
    #[command(subcommand)]
    Quality(QualityCommand),
    /// Train an ISC model from acceptable and degraded example images.
    IscTrain(IscTrainArgs),
    /// ROC analysis of a scored, labelled CSV.
    Roc(RocArgs),
    /// Adversarial, L1 and combined losses over (vessel, real, generated) triples.
    Loss(LossArgs),
    /// Compare real and synthetic score tables.
    Report(ReportArgs),
    /// Render synthetic fundus fixtures with their vessel trees.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    retina: PathBuf,
    #[arg(long)]
    vessels: PathBuf,
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// CSV with `id,grade` columns; grades above 2 are excluded.
    #[arg(long)]
    grades: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Train, validation and test counts, e.g. `614,155,177`.
    #[arg(long, value_parser = parse_counts)]
    counts: (usize, usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.jsonl, val.jsonl and test.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("rule").required(true).args(["threshold", "truth"])))]
struct SegmentArgs {
    /// An image file or a directory of images.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fixed vesselness threshold in [0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory of ground-truth vessel trees; the threshold maximizing the
    /// Youden index over all field-of-view pixels is used.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum QualityCommand {
    /// Vesselness-weighted anisotropy score.
    Qv {
        #[command(flatten)]
        input: QualityInput,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
    /// Image Structure Clustering score from a trained model.
    Isc {
        #[command(flatten)]
        input: QualityInput,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Retina,
    Synthetic,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "manifest"])))]
struct QualityInput {
    /// Directory of images; ids are file stems.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Which image of each manifest entry to score.
    #[arg(long, value_enum, default_value = "retina")]
    role: Role,
    /// File with one id per line to leave out.
    #[arg(long)]
    exclude_list: Option<PathBuf>,
    /// Also score manifest entries flagged as excluded.
    #[arg(long)]
    include_excluded: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IscTrainArgs {
    /// Directory of acceptable-quality images.
    #[arg(long)]
    good: PathBuf,
    /// Directory of degraded images.
    #[arg(long)]
    bad: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 5_000)]
    pixels_per_image: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value = "score")]
    score_col: String,
    #[arg(long, default_value = "label")]
    labels_col: String,
}

#[derive(Args)]
struct LossArgs {
    /// Manifest whose entries name vessel, retina and synthetic images.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Directory with `<id>_real.csv` and `<id>_fake.csv` discriminator
    /// fields; a constant 0.5 discriminator is used otherwise.
    #[arg(long)]
    fields: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, requires = "qv_synthetic")]
    qv_real: Option<PathBuf>,
    #[arg(long, requires = "qv_real")]
    qv_synthetic: Option<PathBuf>,
    #[arg(long, requires = "isc_synthetic")]
    isc_real: Option<PathBuf>,
    #[arg(long, requires = "isc_real")]
    isc_synthetic: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    count: u64,
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write defocused copies with this blur sigma to `<out>/blurred`.
    #[arg(long)]
    blur: Option<f64>,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<fundus_qa::Error> for Failure {
    fn from(e: fundus_qa::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn parse_counts(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("`{p}` is not a count")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated counts".into()),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Image files in `dir`, sorted by name, keyed by stem.
fn images_in(dir: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let read = std::fs::read_dir(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut items = Vec::new();
    for entry in read {
        let path = entry.map_err(|e| Failure::Data(e.to_string()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !matches!(ext.as_deref(), Some("png" | "ppm" | "pnm")) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        items.push((stem, path));
    }
    items.sort();
    Ok(items)
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn run_manifest(a: ManifestArgs) -> CmdResult {
    let built = build_manifest(&a.retina, &a.vessels, a.synthetic.as_deref(), a.grades.as_deref())?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    built.manifest.write(&a.out)?;
    let excluded = built.manifest.entries.iter().filter(|e| e.excluded).count();
    println!(
        "{} entries ({} excluded), {} warnings -> {}",
        built.manifest.len(),
        excluded,
        built.warnings.len(),
        a.out.display()
    );
    Ok(())
}

fn run_split(a: SplitArgs) -> CmdResult {
    let manifest = DatasetManifest::read(&a.manifest)?;
    let (train, val, test) = a.counts;
    let split = split_dataset(
        &manifest,
        &SplitSpec {
            train,
            val,
            test,
            seed: a.seed,
        },
    )?;
    create_dir(&a.out_dir)?;
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        part.write(a.out_dir.join(format!("{name}.jsonl")))?;
    }
    println!(
        "train {} / val {} / test {} (seed {})",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        a.seed
    );
    Ok(())
}

fn run_segment(a: SegmentArgs) -> CmdResult {
    let items = if a.input.is_dir() {
        images_in(&a.input)?
    } else {
        let stem = a
            .input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        vec![(stem, a.input.clone())]
    };
    if items.is_empty() {
        return Err(Failure::Data(format!("no images in {}", a.input.display())));
    }
    let params = FrangiParams::default();
    let mut maps = Vec::new();
    for (id, path) in &items {
        let img = load_image(path)?;
        let mask = detect_fov(&img, DEFAULT_FOV_THRESHOLD)?;
        maps.push((id, masked_vesselness(&img, &mask, &params)?, mask));
    }
    let threshold = match (a.threshold, &a.truth) {
        (Some(t), _) => t,
        (None, Some(truth_dir)) => {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for (id, map, mask) in &maps {
                let truth_path = images_in(truth_dir)?
                    .into_iter()
                    .find(|(s, _)| s == *id)
                    .map(|(_, p)| p)
                    .ok_or_else(|| Failure::Data(format!("no ground truth for `{id}`")))?;
                let truth = BinaryVesselTree::load(&truth_path)?;
                if truth.dims() != map.dims() {
                    return Err(Failure::Data(format!("ground truth for `{id}` differs in size")));
                }
                for (i, inside) in mask.data().iter().enumerate() {
                    if *inside {
                        scores.push(map.plane().data()[i]);
                        labels.push(truth.data()[i]);
                    }
                }
            }
            let curve = roc_curve(&scores, &labels)?;
            let y = youden_threshold(&curve);
            println!("pixel AUC {}", auc(&curve));
            println!(
                "Youden threshold {} (J {}, tpr {}, fpr {})",
                y.threshold, y.j, y.tpr, y.fpr
            );
            y.threshold
        }
        (None, None) => unreachable!("clap requires one rule"),
    };
    create_dir(&a.out)?;
    for (id, map, _) in &maps {
        let tree = binarize(map, threshold)?;
        tree.save_png(a.out.join(format!("{id}.png")))?;
    }
    println!(
        "{} vessel trees at threshold {threshold} -> {}",
        maps.len(),
        a.out.display()
    );
    Ok(())
}

fn score_input(input: &QualityInput, metric: &Metric) -> Result<Vec<ScoreRow>, Failure> {
    let exclude = input
        .exclude_list
        .as_ref()
        .map(read_id_list)
        .transpose()?
        .unwrap_or_default();
    let rows = match (&input.input, &input.manifest) {
        (Some(dir), _) => {
            let items: Vec<(String, PathBuf)> = images_in(dir)?
                .into_iter()
                .filter(|(id, _)| !exclude.contains(id))
                .collect();
            score_paths(&items, metric)
        }
        (None, Some(m)) => {
            let manifest = DatasetManifest::read(m)?;
            let role = match input.role {
                Role::Retina => ImageRole::Retina,
                Role::Synthetic => ImageRole::Synthetic,
            };
            let opts = BatchOptions {
                exclude,
                include_excluded: input.include_excluded,
            };
            score_batch(&manifest, metric, role, &opts)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    write_scores_csv(&rows, &input.out)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} rows ({} failed) -> {}", rows.len(), failed, input.out.display());
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("error: {}: {}", r.id, r.error.as_deref().unwrap_or_default());
    }
    Ok(rows)
}

fn run_quality(q: QualityCommand) -> CmdResult {
    match q {
        QualityCommand::Qv { input, window } => {
            let metric = Metric::Qv {
                params: FrangiParams::default(),
                window,
            };
            score_input(&input, &metric)?;
        }
        QualityCommand::Isc { input, model } => {
            let model = IscModel::load(&model)?;
            score_input(&input, &Metric::Isc(&model))?;
        }
    }
    Ok(())
}

fn run_isc_train(a: IscTrainArgs) -> CmdResult {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (dir, label) in [(&a.good, true), (&a.bad, false)] {
        for (_, path) in images_in(dir)? {
            let img = load_image(&path)?;
            let mask = detect_fov(&img, DEFAULT_FOV_THRESHOLD)?;
            images.push((img, mask));
            labels.push(label);
        }
    }
    let params = IscTrainParams {
        k: a.k,
        pixels_per_image: a.pixels_per_image,
        epochs: a.epochs,
        c_reg: a.c,
        seed: a.seed,
        ..Default::default()
    };
    let trained = train_isc(&images, &labels, &params)?;
    trained.model.save(&a.out)?;
    let correct = trained
        .histograms
        .iter()
        .zip(&labels)
        .filter(|(h, l)| (trained.model.svm.probability(h.counts()) >= 0.5) == **l)
        .count();
    println!(
        "trained on {} images: k-means {} iterations, training accuracy {}/{} -> {}",
        labels.len(),
        trained.kmeans.iterations,
        correct,
        labels.len(),
        a.out.display()
    );
    Ok(())
}

fn run_roc(a: RocArgs) -> CmdResult {
    let (scores, labels) = read_labeled_scores(&a.scores, &a.score_col, &a.labels_col)?;
    let curve = roc_curve(&scores, &labels)?;
    let y = youden_threshold(&curve);
    println!("AUC {}", auc(&curve));
    println!("Youden threshold {}", y.threshold);
    println!("J {} (tpr {}, fpr {})", y.j, y.tpr, y.fpr);
    Ok(())
}

fn run_loss(a: LossArgs) -> CmdResult {
    let cfg = LossConfig::new(a.lambda, a.epsilon).map_err(|e| Failure::Usage(e.to_string()))?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let entries: Vec<TripleEntry> = manifest
        .included()
        .map(|e| {
            let field = |kind: &str| {
                a.fields
                    .as_ref()
                    .map(|d| d.join(format!("{}_{kind}.csv", e.id)))
                    .filter(|p| p.is_file())
            };
            TripleEntry {
                id: e.id.clone(),
                vessel_path: e.vessel_path.clone(),
                real_path: e.retina_path.clone(),
                generated_path: e.synthetic_path.clone().unwrap_or_default(),
                d_real_csv: field("real"),
                d_fake_csv: field("fake"),
            }
        })
        .collect();
    let source = CsvDiscriminator {
        fallback: ConstantDiscriminator::default(),
    };
    let report = score_triples(&entries, &cfg, &source);
    let mut lines = vec!["id,l1,adversarial,combined,error".to_string()];
    for o in &report.outcomes {
        match &o.result {
            Ok(s) => lines.push(format!("{},{},{},{},", o.id, s.l1, s.adversarial, s.combined)),
            Err(e) => {
                eprintln!("error: {}: {e}", o.id);
                lines.push(format!("{},,,,\"{}\"", o.id, e.to_string().replace('"', "'")));
            }
        }
    }
    if let Some(out) = &a.out {
        std::fs::write(out, lines.join("\n") + "\n").map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    }
    println!("lambda {} epsilon {}", cfg.lambda(), cfg.epsilon_clamp());
    match report.mean {
        Some(m) => println!("mean L1 {} adversarial {} combined {}", m.l1, m.adversarial, m.combined),
        None => return Err(Failure::Data("no triple could be scored".into())),
    }
    Ok(())
}

fn run_report(a: ReportArgs) -> CmdResult {
    let mut metrics = Vec::new();
    for (name, real, synthetic) in [
        ("Qv", &a.qv_real, &a.qv_synthetic),
        ("ISC", &a.isc_real, &a.isc_synthetic),
    ] {
        if let (Some(r), Some(s)) = (real, synthetic) {
            metrics.push(MetricScores {
                metric: name.into(),
                real: read_scores_csv(r)?,
                synthetic: read_scores_csv(s)?,
            });
        }
    }
    if metrics.is_empty() {
        return Err(Failure::Usage(
            "give --qv-real/--qv-synthetic and/or --isc-real/--isc-synthetic".into(),
        ));
    }
    let table = compare_report(&metrics, a.alpha)?;
    print!("{}", table.render_text());
    if let Some(out) = &a.out {
        table.write_csv(out)?;
    }
    if let Some(bad) = table.paired.iter().find(|p| p.test.is_err()) {
        return Err(Failure::Data(format!(
            "{}: {}",
            bad.metric,
            bad.test.as_ref().unwrap_err()
        )));
    }
    Ok(())
}

fn run_synth(a: SynthArgs) -> CmdResult {
    if a.size < 32 {
        return Err(Failure::Usage("--size must be at least 32".into()));
    }
    let (retina, vessels) = (a.out.join("retina"), a.out.join("vessels"));
    create_dir(&retina)?;
    create_dir(&vessels)?;
    let blurred = a.blur.map(|_| a.out.join("blurred"));
    if let Some(b) = &blurred {
        create_dir(b)?;
    }
    let spec = FundusSpec::new(a.size);
    for i in 0..a.count {
        let seed = a.seed + i;
        let f = render_fundus(&spec, seed);
        let name = format!("fundus_{seed:04}.png");
        save_png(&f.image, retina.join(&name))?;
        BinaryVesselTree::new(a.size, a.size, f.vessels.clone())?.save_png(vessels.join(&name))?;
        if let (Some(dir), Some(sigma)) = (&blurred, a.blur) {
            save_png(&defocus(&f.image, &f.fov, sigma), dir.join(&name))?;
        }
    }
    println!("{} fixtures at {}x{} -> {}", a.count, a.size, a.size, a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Manifest(a) => run_manifest(a),
        Command::Split(a) => run_split(a),
        Command::Segment(a) => run_segment(a),
        Command::Quality(q) => run_quality(q),
        Command::IscTrain(a) => run_isc_train(a),
        Command::Roc(a) => run_roc(a),
        Command::Loss(a) => run_loss(a),
        Command::Report(a) => run_report(a),
        Command::Synth(a) => run_synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
