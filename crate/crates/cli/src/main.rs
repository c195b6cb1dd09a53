//! Command-line front end: corpus generation, stage-1 training, activation
//! maps, masking, bank construction, retrieval probes, the end-to-end
//! pipeline, evaluation, and parameter sweeps.
//!
//! Results are written as line-delimited `key=value` records on standard
//! output. Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use radmem_core::bank::{peek_bank_kind, BankKind, ReportMemory, VisualBank};
use radmem_core::classifier::LinearClassifier;
use radmem_core::config::{EnhanceMode, PipelineConfig};
use radmem_core::corpus::DISEASES;
use radmem_core::error::Error;
use radmem_core::hopfield::{retrieve, HopfieldConfig, PatternMatrix};
use radmem_core::metrics::LabelVector;
use radmem_core::numerics::Vector;
use radmem_core::pipeline::{
    self, corpus_for, evaluate_reports, noisy_pattern_query, patch_encoder_for, run_pipeline,
    run_stage1, seeds,
};
use radmem_core::roi::{
    apply_mask, patch_means, read_raster, select_roi, ActivationMap, ImageTensor,
};
use radmem_core::sweep::{sweep_beta, sweep_cap, sweep_report_size};
use radmem_core::Result;

#[derive(Parser)]
#[command(
    name = "radmem",
    version,
    about = "Associative memory engine for X-ray report generation on synthetic data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration knobs shared by most subcommands. Flags override the config
/// file, which overrides the built-in defaults.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Plain-text config file of `key = value` lines (# comments allowed).
    #[arg(long, global = false)]
    config: Option<PathBuf>,
    /// Master seed; every random choice in a run derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of synthetic cases.
    #[arg(long)]
    cases: Option<usize>,
    /// Inverse temperature of the Hopfield retrievals.
    #[arg(long)]
    beta: Option<f64>,
    /// Activation threshold for region selection.
    #[arg(long)]
    tau: Option<f64>,
    /// Keep only the k highest-activation patches.
    #[arg(long)]
    top_k: Option<usize>,
    /// Retrieval mode: cccp or gradient.
    #[arg(long)]
    mode: Option<String>,
    /// Patch feature dimension.
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Sentence embedding dimension.
    #[arg(long)]
    sentence_dim: Option<usize>,
    /// Output dimension of each enhanced half.
    #[arg(long)]
    d_out: Option<usize>,
    /// Visual bank cap per disease.
    #[arg(long)]
    cap: Option<usize>,
    /// Report memory size budget.
    #[arg(long)]
    report_size: Option<usize>,
    /// Stage-1 learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Stage-1 training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.cases {
            cfg.n_cases = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.top_k {
            cfg.top_k = Some(v);
        }
        if let Some(v) = &self.mode {
            cfg.mode = v.parse()?;
        }
        if let Some(v) = self.feature_dim {
            cfg.feature_dim = v;
        }
        if let Some(v) = self.sentence_dim {
            cfg.sentence_dim = v;
        }
        if let Some(v) = self.d_out {
            cfg.d_out = v;
        }
        if let Some(v) = self.cap {
            cfg.cap_per_disease = v;
        }
        if let Some(v) = self.report_size {
            cfg.report_memory_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BankKindArg {
    Visual,
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Beta,
    Cap,
    #[value(name = "report-size")]
    ReportSize,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateArg {
    None,
    Visual,
    Report,
    Both,
}

impl From<AblateArg> for EnhanceMode {
    fn from(a: AblateArg) -> Self {
        match a {
            AblateArg::None => EnhanceMode::None,
            AblateArg::Visual => EnhanceMode::VisualOnly,
            AblateArg::Report => EnhanceMode::ReportOnly,
            AblateArg::Both => EnhanceMode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and write reports, labels, and ids.
    GenCorpus {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also dump every case image as a raster file.
        #[arg(long)]
        write_images: bool,
    },
    /// Train the stage-1 classifier on a synthetic corpus.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Where to persist the trained classifier.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a class activation map for one image raster.
    Cam {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Disease index in 0..14.
        #[arg(long)]
        class: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold an activation map and mask an image to its RoI patches.
    Mask {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and persist a memory bank from a synthetic corpus.
    BuildBank {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        kind: BankKindArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe retrieval against a persisted bank.
    Retrieve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        bank: PathBuf,
        /// Restrict the memory to one disease id.
        #[arg(long)]
        disease: Option<u8>,
        /// Query from a stored pattern index plus noise.
        #[arg(long)]
        from_pattern: Option<usize>,
        /// Noise level for --from-pattern queries.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Query from a 1 x dim x 1 raster file instead.
        #[arg(long)]
        query_file: Option<PathBuf>,
    },
    /// Run the full two-stage pipeline and report metrics.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "both")]
        ablate: AblateArg,
        /// Write generated/reference reports and label CSVs here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score candidate reports against references.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// One candidate report per line.
        #[arg(long)]
        candidates: PathBuf,
        /// One reference report per line, parallel to the candidates.
        #[arg(long)]
        references: PathBuf,
        /// Predicted 14-label CSV rows for clinical-efficacy scoring.
        #[arg(long)]
        pred_labels: Option<PathBuf>,
        /// Ground-truth 14-label CSV rows.
        #[arg(long)]
        true_labels: Option<PathBuf>,
    },
    /// Sweep one parameter and emit a record per value.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values, e.g. 0.5,1,2,4,8,16.
        #[arg(long)]
        values: String,
    },
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::to_string)
        .collect())
}

fn read_labels(path: &Path) -> Result<Vec<LabelVector>> {
    read_lines(path)?
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| LabelVector::parse_csv_row(l))
        .collect()
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn parse_values<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidInput(format!("cannot parse `{s}` as a {what} value")))
        })
        .collect()
}

fn cmd_gen_corpus(cfg: &ConfigArgs, out_dir: &Path, write_images: bool) -> Result<()> {
    let cfg = cfg.build()?;
    let corpus = corpus_for(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let reports: Vec<String> = corpus.iter().map(|c| c.report.clone()).collect();
    let labels: Vec<String> = corpus.iter().map(|c| c.labels.to_csv_row()).collect();
    let ids: Vec<String> = corpus.iter().map(|c| c.id.clone()).collect();
    write_lines(&out_dir.join("reports.txt"), &reports)?;
    write_lines(&out_dir.join("labels.csv"), &labels)?;
    write_lines(&out_dir.join("ids.txt"), &ids)?;
    if write_images {
        let img_dir = out_dir.join("images");
        fs::create_dir_all(&img_dir)?;
        for case in &corpus {
            case.image.save(img_dir.join(format!("{}.raster", case.id)))?;
        }
    }
    println!(
        "corpus cases={} positives={} out_dir={}",
        corpus.len(),
        corpus.iter().map(|c| c.labels.count_positives()).sum::<usize>(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ConfigArgs, out: Option<&Path>) -> Result<()> {
    let cfg = cfg.build()?;
    let corpus = corpus_for(&cfg)?;
    let s1 = run_stage1(&corpus, &cfg)?;
    if let Some(path) = out {
        s1.classifier.save(path)?;
    }
    println!(
        "stage1 cases={} epochs={} first_loss={:.6} final_loss={:.6} train_micro_f1={:.6} visual_candidates={}",
        corpus.len(),
        cfg.epochs,
        s1.loss_trace.first().copied().unwrap_or(f64::NAN),
        s1.loss_trace.last().copied().unwrap_or(f64::NAN),
        s1.train_micro_f1,
        s1.visual_candidates.len()
    );
    Ok(())
}

fn cmd_cam(cfg: &ConfigArgs, classifier: &Path, image: &Path, class: usize, out: &Path) -> Result<()> {
    let cfg = cfg.build()?;
    let clf = LinearClassifier::load(classifier)?;
    let img = ImageTensor::load(image)?;
    let encoder = patch_encoder_for(&cfg)?;
    let feats = encoder.encode_patches(&img)?;
    let cam = clf.linear_cam(&feats, class, cfg.patch_size)?;
    cam.save(out)?;
    let means = patch_means(&cam, cfg.patch_size)?;
    let (mut best, mut best_v) = (0usize, f64::NEG_INFINITY);
    for (i, v) in means.values.iter().enumerate() {
        if *v > best_v {
            best = i;
            best_v = *v;
        }
    }
    println!(
        "cam class={class} disease={} hottest_patch={best} hottest_mean={best_v:.6} out={}",
        DISEASES[class],
        out.display()
    );
    Ok(())
}

fn cmd_mask(cfg: &ConfigArgs, image: &Path, map: &Path, out: &Path) -> Result<()> {
    let cfg = cfg.build()?;
    let img = ImageTensor::load(image)?;
    let map = ActivationMap::load(map)?;
    let means = patch_means(&map, cfg.patch_size)?;
    let selection = select_roi(&means, cfg.tau, cfg.top_k, cfg.patch_size)?;
    let masked = apply_mask(&img, &selection)?;
    masked.save(out)?;
    println!(
        "mask selected={} total={} tau={:.4} out={}",
        selection.count(),
        selection.selected.len(),
        cfg.tau,
        out.display()
    );
    Ok(())
}

fn cmd_build_bank(cfg: &ConfigArgs, kind: BankKindArg, out: &Path) -> Result<()> {
    let cfg = cfg.build()?;
    let corpus = corpus_for(&cfg)?;
    let s1 = run_stage1(&corpus, &cfg)?;
    let (visual, report) = pipeline::build_banks(&s1, &cfg)?;
    match kind {
        BankKindArg::Visual => {
            visual.save(out)?;
            println!(
                "bank kind=visual entries={} dim={} cap={} out={}",
                visual.len(),
                visual.dim(),
                cfg.cap_per_disease,
                out.display()
            );
        }
        BankKindArg::Report => {
            report.save(out)?;
            println!(
                "bank kind=report entries={} dim={} budget={} out={}",
                report.len(),
                report.dim(),
                cfg.report_memory_size,
                out.display()
            );
        }
    }
    Ok(())
}

fn cmd_retrieve(
    cfg: &ConfigArgs,
    bank_path: &Path,
    disease: Option<u8>,
    from_pattern: Option<usize>,
    noise: f64,
    query_file: Option<&Path>,
) -> Result<()> {
    let cfg = cfg.build()?;
    let kind = peek_bank_kind(bank_path)?;
    let (patterns, kind_name): (PatternMatrix, &str) = match kind {
        BankKind::Visual => (VisualBank::load(bank_path)?.as_pattern_matrix(disease)?, "visual"),
        BankKind::Report => (ReportMemory::load(bank_path)?.as_pattern_matrix(disease)?, "report"),
    };

    let query = match (from_pattern, query_file) {
        (Some(idx), None) => noisy_pattern_query(
            &patterns,
            idx,
            noise,
            seeds::subseed(cfg.seed, seeds::QUERY_NOISE),
        )?,
        (None, Some(path)) => {
            let (h, w, c, data) = read_raster(path)?;
            if h != 1 || c != 1 || w != patterns.dim() {
                return Err(Error::InvalidInput(format!(
                    "query raster must be 1x{}x1, found {h}x{w}x{c}",
                    patterns.dim()
                )));
            }
            Vector::new(data)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "pass exactly one of --from-pattern or --query-file".into(),
            ))
        }
    };

    let hop = HopfieldConfig::new(cfg.beta, cfg.mode)?
        .with_step_size(cfg.step_size)
        .with_max_iters(cfg.max_iters)
        .with_tolerance(cfg.tolerance);
    let result = retrieve(&query, &patterns, &hop)?;
    let (mut best, mut best_v) = (0usize, f64::NEG_INFINITY);
    for i in 0..result.weights.dim() {
        if result.weights.get(i) > best_v {
            best = i;
            best_v = result.weights.get(i);
        }
    }
    let mut line = format!(
        "retrieve bank={kind_name} patterns={} beta={} mode={} iterations={} energy_initial={:.6} energy_final={:.6} top_index={best} top_alpha={:.6}",
        patterns.count(),
        cfg.beta,
        cfg.mode,
        result.iterations,
        result.energy_trace.first().unwrap(),
        result.energy_trace.last().unwrap(),
        best_v
    );
    if let Some(idx) = from_pattern {
        let target = Vector::new(patterns.row(idx).to_vec())?;
        let c = radmem_core::numerics::cosine(&result.updated, &target)?;
        line.push_str(&format!(" source_pattern={idx} cosine_to_source={c:.6}"));
    }
    println!("{line}");
    Ok(())
}

fn cmd_pipeline(cfg: &ConfigArgs, ablate: AblateArg, out_dir: Option<&Path>) -> Result<()> {
    let cfg = cfg.build()?;
    let mode: EnhanceMode = ablate.into();
    let outcome = run_pipeline(&cfg, mode)?;
    for record in &outcome.records {
        println!("{record}");
    }
    let metrics_line = outcome.metrics.record_line(&mode.to_string());
    println!("{metrics_line}");

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_lines(&dir.join("generated.txt"), &outcome.generated)?;
        write_lines(&dir.join("reference.txt"), &outcome.reference)?;
        let pred: Vec<String> = outcome.pred_labels.iter().map(LabelVector::to_csv_row).collect();
        let truth: Vec<String> = outcome.true_labels.iter().map(LabelVector::to_csv_row).collect();
        write_lines(&dir.join("predicted_labels.csv"), &pred)?;
        write_lines(&dir.join("true_labels.csv"), &truth)?;
        write_lines(&dir.join("metrics.txt"), &[metrics_line])?;
        write_lines(&dir.join("records.txt"), &outcome.records)?;
    }
    Ok(())
}

fn cmd_evaluate(
    _cfg: &ConfigArgs,
    candidates: &Path,
    references: &Path,
    pred_labels: Option<&Path>,
    true_labels: Option<&Path>,
) -> Result<()> {
    let cands = read_lines(candidates)?;
    let refs = read_lines(references)?;
    if cands.len() != refs.len() {
        return Err(Error::InvalidInput(format!(
            "{} candidate lines but {} reference lines",
            cands.len(),
            refs.len()
        )));
    }
    let label_pairs = match (pred_labels, true_labels) {
        (Some(p), Some(t)) => Some((read_labels(p)?, read_labels(t)?)),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidInput(
                "pass both --pred-labels and --true-labels or neither".into(),
            ))
        }
    };
    let report = match &label_pairs {
        Some((p, t)) => evaluate_reports(&cands, &refs, Some((p, t)))?,
        None => evaluate_reports(&cands, &refs, None)?,
    };
    println!("{}", report.record_line("eval"));
    Ok(())
}

fn cmd_sweep(cfg: &ConfigArgs, param: SweepParam, values: &str) -> Result<()> {
    let cfg = cfg.build()?;
    match param {
        SweepParam::Beta => {
            let betas: Vec<f64> = parse_values(values, "beta")?;
            for row in sweep_beta(&betas, cfg.seed)? {
                println!(
                    "sweep param=beta value={} accuracy={:.6} mean_iterations={:.4}",
                    row.beta, row.accuracy, row.mean_iterations
                );
            }
        }
        SweepParam::Cap => {
            let caps: Vec<usize> = parse_values(values, "cap")?;
            for row in sweep_cap(&caps, &cfg)? {
                println!(
                    "sweep param=cap value={} total_entries={} min_per_disease={} max_per_disease={}",
                    row.cap, row.total_entries, row.min_per_disease, row.max_per_disease
                );
            }
        }
        SweepParam::ReportSize => {
            let sizes: Vec<usize> = parse_values(values, "report-size")?;
            for row in sweep_report_size(&sizes, &cfg)? {
                println!(
                    "sweep param=report-size value={} total_entries={}",
                    row.size, row.total_entries
                );
            }
        }
    }
    Ok(())
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::GenCorpus { cfg, out_dir, write_images } => cmd_gen_corpus(cfg, out_dir, *write_images),
        Command::Train { cfg, out } => cmd_train(cfg, out.as_deref()),
        Command::Cam { cfg, classifier, image, class, out } => {
            cmd_cam(cfg, classifier, image, *class, out)
        }
        Command::Mask { cfg, image, map, out } => cmd_mask(cfg, image, map, out),
        Command::BuildBank { cfg, kind, out } => cmd_build_bank(cfg, *kind, out),
        Command::Retrieve { cfg, bank, disease, from_pattern, noise, query_file } => cmd_retrieve(
            cfg,
            bank,
            *disease,
            *from_pattern,
            *noise,
            query_file.as_deref(),
        ),
        Command::Pipeline { cfg, ablate, out_dir } => cmd_pipeline(cfg, *ablate, out_dir.as_deref()),
        Command::Evaluate { cfg, candidates, references, pred_labels, true_labels } => cmd_evaluate(
            cfg,
            candidates,
            references,
            pred_labels.as_deref(),
            true_labels.as_deref(),
        ),
        Command::Sweep { cfg, param, values } => cmd_sweep(cfg, *param, values),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
