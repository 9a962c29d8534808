//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bagio::{generate_bags, read_bagemb, read_header, write_bagemb, Dataset, Manifest, ManifestEntry, Split, SyntheticSpec};
use crate::dec::{dec_fit, DecConfig, ALPHA, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::graph::{build_graph, EdgeMode};
use crate::heads::{DecodeMode, Task};
use crate::trainer::{predict_split, report_from_predictions, Checkpoint, Pipeline, TrainConfig, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "milcap", version, about = "Bag-of-embeddings classification and captioning")]
pub struct Cli {
    /// Worker threads for per-bag work (0 = all cores)
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset: one .bagemb per bag plus manifest.json
    Synth(SynthArgs),
    /// Train a model from a manifest
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split
    Eval(EvalArgs),
    /// Dump soft assignments, targets and centroids for one bag
    Cluster(ClusterArgs),
    /// Dump per-cluster attention scores and chosen representatives
    Select(BagModelArgs),
    /// Write the similarity graph of one bag as DOT and adjacency JSON
    GraphExport(GraphExportArgs),
    /// Decode a caption for one bag from a checkpoint
    Caption(CaptionArgs),
    /// Print the header of a .bagemb file
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of bags
    #[arg(long, default_value_t = 40)]
    pub bags: usize,
    /// Fraction of bags placed in the test split (the rest is train)
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    /// Tissue regions per bag
    #[arg(long, default_value_t = 5)]
    pub regions: usize,
    /// Near-duplicate captures per region
    #[arg(long, default_value_t = 4)]
    pub copies: usize,
    /// Embedding dimension
    #[arg(long, default_value_t = 32)]
    pub d_v: usize,
    /// Minimum distance between region centers
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    /// Per-capture Gaussian noise
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Probability that a region is malignant
    #[arg(long, default_value_t = 0.13)]
    pub positive_prob: f64,
    /// Attach template captions
    #[arg(long)]
    pub captions: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Classify,
    Caption,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Caption => Task::Caption,
        }
    }
}

/// Training overrides; each flag wins over the config file, which wins over
/// the built-in defaults.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON file with TrainConfig fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task [default: classify]
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decoupled weight decay [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Dropout rate [default: 0.3]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Bags per optimizer step [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Clusters per bag [default: 8]
    #[arg(long)]
    pub k: Option<usize>,
    /// Gumbel noise scale for training edges [default: 1]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Neighbors chosen per node [default: 1]
    #[arg(long)]
    pub m_neighbors: Option<usize>,
    /// Weight of the clustering loss [default: 1]
    #[arg(long)]
    pub lambda_clu: Option<f64>,
    /// Seed for initialization and every random draw [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.task {
            c.task = v.into();
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        over!(epochs, lr, weight_decay, dropout, batch_size, k, tau, m_neighbors, lambda_clu, seed);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines training log (stdout when omitted)
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Json,
    Table,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Report format on stdout
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Also write per-bag predictions as JSON
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Input .bagemb file
    #[arg(long)]
    pub bag: PathBuf,
    /// Number of clusters
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Centroid step budget
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Adam step size on centroids
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Convergence threshold on the changed-assignment fraction
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Output JSON file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BagModelArgs {
    /// Input .bagemb file
    #[arg(long)]
    pub bag: PathBuf,
    /// Take parameters and settings from this checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Clusters per bag when no checkpoint is given
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Parameter seed when no checkpoint is given
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EdgeModeArg {
    Eval,
    Train,
}

#[derive(Args, Debug)]
pub struct GraphExportArgs {
    /// Input .bagemb file
    #[arg(long)]
    pub bag: PathBuf,
    /// Take parameters and settings from this checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Clusters per bag when no checkpoint is given
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Seed for parameters and Gumbel noise
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Neighbors chosen per node when no checkpoint is given
    #[arg(long, default_value_t = 1)]
    pub m_neighbors: usize,
    /// Gumbel noise scale in train mode when no checkpoint is given
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = EdgeModeArg::Eval)]
    pub mode: EdgeModeArg,
    /// DOT output file
    #[arg(long)]
    pub dot: PathBuf,
    /// Adjacency-list JSON output file
    #[arg(long)]
    pub json: PathBuf,
}

#[derive(Args, Debug)]
pub struct CaptionArgs {
    /// Input .bagemb file
    #[arg(long)]
    pub bag: PathBuf,
    /// Captioning checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sample at this temperature instead of greedy decoding
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// .bagemb file
    pub file: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => EXIT_NUMERIC,
        Error::Contract(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Contract(format!("--jobs {}: {e}", cli.jobs)))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Cluster(a) => cluster(&a),
        Command::Select(a) => select(&a),
        Command::GraphExport(a) => graph_export(&a),
        Command::Caption(a) => caption(&a),
        Command::Inspect(a) => inspect(&a),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn synth(a: &SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.test_frac) {
        return Err(Error::Contract(format!("--test-frac must lie in [0, 1], got {}", a.test_frac)));
    }
    let spec = SyntheticSpec {
        region_count: a.regions,
        copies_per_region: a.copies,
        d_v: a.d_v,
        region_separation: a.separation,
        noise_sigma: a.noise,
        positive_region_prob: a.positive_prob,
        seed: a.seed,
        with_caption: a.captions,
    };
    spec.validate()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let bags = generate_bags(&spec, a.bags)?;
    let n_test = (a.bags as f64 * a.test_frac).round() as usize;
    let mut entries = Vec::with_capacity(a.bags);
    for (i, bag) in bags.iter().enumerate() {
        let name = format!("bag_{i:04}.bagemb");
        write_bagemb(&bag.record, a.out.join(&name))?;
        entries.push(ManifestEntry {
            path: name,
            split: if i < a.bags - n_test { Split::Train } else { Split::Test },
            tags: Default::default(),
        });
    }
    Manifest { d_v: a.d_v, bags: entries }.save(a.out.join("manifest.json"))?;
    eprintln!("wrote {} bags to {}", a.bags, a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let dataset = Dataset::load(&a.data)?;
    let mut trainer = Trainer::new(&dataset, config)?;
    let mut log = String::new();
    while trainer.epoch() < trainer.pipeline.config.epochs {
        let entry = trainer.train_epoch()?;
        log.push_str(&entry.to_json_line());
        log.push('\n');
        if a.log.is_none() {
            println!("{}", entry.to_json_line());
        }
    }
    if let Some(p) = &a.log {
        write_text(Some(p), &log)?;
    }
    trainer.checkpoint().save(&a.out)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let dataset = Dataset::load(&a.data)?;
    let pipeline = Checkpoint::load(&a.checkpoint)?.to_pipeline()?;
    let predictions = predict_split(&pipeline, &dataset, a.split.into())?;
    if let Some(p) = &a.predictions {
        write_text(Some(p), &to_json(&predictions))?;
    }
    let report = report_from_predictions(pipeline.config.task, &predictions)?;
    let text = match a.format {
        FormatArg::Json => format!("{}\n", report.to_json()),
        FormatArg::Table => report.to_table(),
    };
    write_text(None, &text)
}

#[derive(Serialize)]
struct ClusterDump<'a> {
    k: usize,
    alpha: f64,
    iterations: usize,
    converged: bool,
    initial_loss: f64,
    final_loss: f64,
    assignments: &'a [usize],
    centroids: Vec<&'a [f64]>,
    q: Vec<&'a [f64]>,
    t: Vec<&'a [f64]>,
}

fn cluster(a: &ClusterArgs) -> Result<()> {
    let record = read_bagemb(&a.bag)?;
    let state = dec_fit(
        &record.embeddings,
        &DecConfig {
            k: a.k,
            alpha: ALPHA,
            epsilon: a.epsilon,
            max_iters: a.max_iters,
            lr: a.lr,
            ..DecConfig::default()
        },
    )?;
    let dump = ClusterDump {
        k: state.k,
        alpha: state.alpha,
        iterations: state.iterations,
        converged: state.converged,
        initial_loss: state.initial_loss,
        final_loss: state.final_loss,
        assignments: &state.assignments,
        centroids: state.centroids.row_iter().collect(),
        q: state.q.row_iter().collect(),
        t: state.t.row_iter().collect(),
    };
    write_text(a.out.as_deref(), &to_json(&dump))
}

fn bag_pipeline(bag: &Path, checkpoint: Option<&Path>, k: usize, seed: u64) -> Result<(crate::bagio::BagRecord, Pipeline)> {
    let record = read_bagemb(bag)?;
    let pipeline = match checkpoint {
        Some(p) => Checkpoint::load(p)?.to_pipeline()?,
        None => Pipeline::new(TrainConfig { k, seed, ..TrainConfig::default() }, record.d_v(), None)?,
    };
    Ok((record, pipeline))
}

fn select(a: &BagModelArgs) -> Result<()> {
    let (record, pipeline) = bag_pipeline(&a.bag, a.checkpoint.as_deref(), a.k, a.seed)?;
    let state = dec_fit(&record.embeddings, &pipeline.config.dec(false))?;
    let selection = pipeline
        .selector
        .select(&pipeline.store, &record.embeddings, &state.assignments, state.k)?;
    write_text(a.out.as_deref(), &to_json(&selection.clusters))
}

fn graph_export(a: &GraphExportArgs) -> Result<()> {
    let (record, mut pipeline) = bag_pipeline(&a.bag, a.checkpoint.as_deref(), a.k, a.seed)?;
    if a.checkpoint.is_none() {
        pipeline.config.m_neighbors = a.m_neighbors;
        pipeline.config.tau = a.tau;
    }
    let state = dec_fit(&record.embeddings, &pipeline.config.dec(false))?;
    let selection = pipeline
        .selector
        .select(&pipeline.store, &record.embeddings, &state.assignments, state.k)?;
    let mode = match a.mode {
        EdgeModeArg::Eval => EdgeMode::Eval,
        EdgeModeArg::Train => EdgeMode::Train { seed: a.seed, tau: pipeline.config.tau },
    };
    let graph = build_graph(&selection.r, mode, &pipeline.config.graph())?;
    write_text(Some(&a.dot), &graph.to_dot())?;
    write_text(Some(&a.json), &format!("{}\n", graph.to_json()))
}

fn caption(a: &CaptionArgs) -> Result<()> {
    let record = read_bagemb(&a.bag)?;
    let pipeline = Checkpoint::load(&a.checkpoint)?.to_pipeline()?;
    let mode = match a.temperature {
        Some(temperature) => DecodeMode::Sample { temperature, seed: a.seed },
        None => DecodeMode::Greedy,
    };
    let text = pipeline.caption(&record.embeddings, mode)?;
    write_text(None, &format!("{text}\n"))
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let h = read_header(&a.file)?;
    let mut out = String::new();
    out.push_str(&format!("file:       {}\n", a.file.display()));
    out.push_str(&format!("version:    {}\n", h.version));
    out.push_str(&format!("patient_id: {}\n", h.patient_id));
    out.push_str(&format!("n_p:        {}\n", h.n_p));
    out.push_str(&format!("d_v:        {}\n", h.d_v));
    out.push_str(&format!(
        "label:      {}\n",
        h.label.map_or("none".to_string(), |l| u8::from(l).to_string())
    ));
    out.push_str(&format!("caption:    {}\n", h.caption.as_deref().unwrap_or("none")));
    write_text(None, &out)
}
