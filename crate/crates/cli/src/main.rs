mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use discoconf::cluster::{ClusterError, Linkage};
use discoconf::cooccur::EmbedError;
use discoconf::manifold::{project, Init, ManifoldError};
use discoconf::ordinal::{clm_fit, clmm_fit, lrt, parse_formula, FitMethod, OrdinalData, OrdinalError, OrdinalFit};
use discoconf::pipeline::{analyze, AnalysisConfig, Analysis, PipelineError};
use discoconf::simulate::{generate, SimConfig, SimError};
use discoconf::stats::{confidence_table, label_frequencies};
use discoconf::{assemble, factorize, parse_dataset, relation_rows, ContextKind, DataError, Dataset, Format};

use config::PipelineConfig;
use output::Outputs;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit code 2.
    Usage(String),
    /// Input or a module rejected the run: exit code 1.
    Failed { module: &'static str, message: String },
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failed {
            module: "io",
            message: format!("{}: {e}", path.display()),
        }
    }
}

macro_rules! module_error {
    ($ty:ty, $module:literal) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Failed {
                    module: $module,
                    message: e.to_string(),
                }
            }
        }
    };
}

module_error!(DataError, "data-model");
module_error!(EmbedError, "cooccur-embed");
module_error!(ManifoldError, "manifold");
module_error!(ClusterError, "cluster");
module_error!(OrdinalError, "ordinal");
module_error!(SimError, "simulate");

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Embed(e) => e.into(),
            PipelineError::Manifold(e) => e.into(),
            PipelineError::Cluster(e) => e.into(),
        }
    }
}

/// Distributional analysis of multi-label discourse-relation annotations.
#[derive(Parser)]
#[command(name = "discoconf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus against the record schema.
    Validate(Io),
    /// Label frequencies and mean confidence per label and context kind.
    Stats(Io),
    /// Co-occurrence matrix and PCA embeddings.
    Embed {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        assembly: Assembly,
    },
    /// 2-D projection of the relation embeddings.
    Project {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        assembly: Assembly,
        #[command(flatten)]
        umap: Umap,
        #[arg(long)]
        seed: u64,
    },
    /// Hierarchical clustering of the projected relations with k selection.
    Cluster {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        assembly: Assembly,
        #[command(flatten)]
        umap: Umap,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
    },
    /// Fit a cumulative link (mixed) model of confidence.
    Fit {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        /// e.g. "confidence ~ kind + (1 | annotator)"
        #[arg(long)]
        formula: Option<String>,
    },
    /// Likelihood-ratio test between two nested models.
    Lrt {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        model: Model,
        #[arg(long = "null")]
        null_formula: Option<String>,
        #[arg(long = "full")]
        formula: Option<String>,
    },
    /// Generate a synthetic corpus with known ground truth.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        annotators: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Everything: stats, embeddings, projection, clustering and a model fit.
    Pipeline {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        assembly: Assembly,
        #[command(flatten)]
        umap: Umap,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        formula: Option<String>,
        /// Skip the confidence model.
        #[arg(long)]
        no_fit: bool,
    },
}

#[derive(Args)]
struct Io {
    /// Corpus file (.jsonl or .csv).
    input: Option<PathBuf>,
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct Assembly {
    /// Weight annotation rows by confidence.
    #[arg(long, overrides_with = "no_weight")]
    weighted: bool,
    #[arg(long)]
    no_weight: bool,
    /// Add context-kind indicator columns.
    #[arg(long, overrides_with = "no_context")]
    include_context: bool,
    #[arg(long)]
    no_context: bool,
    /// Embedding dimension.
    #[arg(long)]
    dims: Option<usize>,
}

#[derive(Args)]
struct Umap {
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    negative_samples: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
}

#[derive(Args)]
struct Model {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Quadrature nodes for --method aghq.
    #[arg(long, default_value_t = 7)]
    nodes: usize,
    /// Correlated random effects for `(a | g)` terms.
    #[arg(long)]
    correlated: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Single,
    Complete,
    Average,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Spectral,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Laplace,
    Aghq,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl Io {
    fn apply(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::load(self.config.as_deref())?;
        if let Some(p) = &self.input {
            cfg.input = Some(p.display().to_string());
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

impl Assembly {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.weighted {
            cfg.weighted = true;
        }
        if self.no_weight {
            cfg.weighted = false;
        }
        if self.include_context {
            cfg.include_context = true;
        }
        if self.no_context {
            cfg.include_context = false;
        }
        if let Some(d) = self.dims {
            cfg.pca_dims = d;
        }
    }
}

impl Umap {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let k = &mut cfg.umap;
        k.n_neighbors = self.neighbors.unwrap_or(k.n_neighbors);
        k.min_dist = self.min_dist.unwrap_or(k.min_dist);
        k.spread = self.spread.unwrap_or(k.spread);
        k.epochs = self.epochs.unwrap_or(k.epochs);
        k.negative_samples = self.negative_samples.unwrap_or(k.negative_samples);
        if let Some(i) = self.init {
            k.init = match i {
                InitArg::Spectral => Init::Spectral,
                InitArg::Random => Init::Random,
            };
        }
    }
}

impl Model {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(m) = self.method {
            cfg.method = match m {
                MethodArg::Laplace => FitMethod::Laplace,
                MethodArg::Aghq => FitMethod::Aghq { nodes: self.nodes },
                MethodArg::Exact => FitMethod::Exact,
            };
        }
        if self.correlated {
            cfg.correlated = true;
        }
    }
}

fn apply_linkage(cfg: &mut PipelineConfig, l: Option<LinkageArg>) {
    if let Some(l) = l {
        cfg.linkage = match l {
            LinkageArg::Single => Linkage::Single,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Average => Linkage::Average,
        };
    }
}

fn load_input(cfg: &PipelineConfig) -> Result<Dataset, CliError> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing input corpus".into()))?;
    let path = Path::new(input);
    let format = Format::from_path(path)?;
    Ok(parse_dataset(path, format)?)
}

fn validate_report(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ok: {} records", ds.len());
    let _ = writeln!(out, "annotators: {}", ds.by_annotator().len());
    let _ = writeln!(out, "du pairs: {}", ds.by_du_pair().len());
    let _ = writeln!(out, "conversations: {}", ds.by_conversation().len());
    let _ = writeln!(out, "label tokens: {}", ds.label_tokens());
    for c in ContextKind::ALL {
        let n = ds.records().iter().filter(|r| r.context == c).count();
        let _ = writeln!(out, "context {}: {n}", c.token());
    }
    let multi = ds.records().iter().filter(|r| r.labels.len() > 1).count();
    let _ = writeln!(out, "multi-label records: {multi}");
    out
}

fn write_stats(out: &mut Outputs, ds: &Dataset) -> Result<(), CliError> {
    out.write("label_counts.csv", &label_frequencies(ds).to_csv())?;
    out.write("confidence_table.csv", &confidence_table(ds).to_csv())
}

fn fit_model(data: &OrdinalData, formula: &str, cfg: &PipelineConfig) -> Result<OrdinalFit, CliError> {
    let spec = parse_formula(formula)?.to_spec(data, cfg.correlated)?;
    let fit = if spec.random.is_empty() {
        clm_fit(data, &spec)?
    } else {
        clmm_fit(data, &spec, cfg.method)?
    };
    Ok(fit)
}

fn write_analysis(out: &mut Outputs, an: &Analysis, cfg: &PipelineConfig) -> Result<(), CliError> {
    let variant = cfg.variant();
    out.write("cooccurrence.csv", &an.cooccurrence.to_csv())?;
    out.write("cooccurrence.json", &an.cooccurrence.to_json())?;
    out.write("embeddings.csv", &an.embeddings.to_csv())?;
    out.write("embeddings.json", &an.embeddings.to_json())?;
    out.write("coords.csv", &an.projection.to_csv())?;
    out.write("coords.json", &an.projection.to_json())?;
    let title = format!("Relation projection ({variant})");
    out.write("projection.svg", &an.projection.to_svg(&title, Some(&an.assignment)))?;
    out.write("dendrogram.json", &an.tree.to_json())?;
    out.write("dendrogram.dot", &an.tree.to_dot(Some(&an.assignment)))?;
    out.write("dendrogram.txt", &an.tree.to_text())?;
    let title = format!("Relation dendrogram ({variant})");
    out.write("dendrogram.svg", &an.tree.to_svg(&title, Some(&an.assignment)))?;
    out.write("kselect.json", &serde_json::to_string(&an.selection).expect("serializable"))?;
    let mut clusters = String::from("label,cluster\n");
    for (name, c) in an.projection.names.iter().zip(&an.assignment) {
        let _ = writeln!(clusters, "{name},{c}");
    }
    out.write("clusters.csv", &clusters)
}

fn analysis_config(cfg: &PipelineConfig) -> AnalysisConfig {
    AnalysisConfig {
        assembly: cfg.assembly(),
        umap: cfg.umap_config(),
        linkage: cfg.linkage,
    }
}

fn run(command: Command) -> Result<String, CliError> {
    let mut log = String::new();
    let outs = |out: &Outputs, log: &mut String| {
        for p in &out.written {
            let _ = writeln!(log, "wrote {}", p.display());
        }
    };
    match command {
        Command::Validate(io) => {
            let cfg = io.apply()?;
            let ds = load_input(&cfg)?;
            log.push_str(&validate_report(&ds));
        }
        Command::Stats(io) => {
            let cfg = io.apply()?;
            let ds = load_input(&cfg)?;
            let mut out = Outputs::new("stats", &cfg)?;
            write_stats(&mut out, &ds)?;
            outs(&out, &mut log);
        }
        Command::Embed { io, assembly } => {
            let mut cfg = io.apply()?;
            assembly.apply(&mut cfg);
            let ds = load_input(&cfg)?;
            let co = assemble(&ds, cfg.assembly());
            let emb = factorize(&co, cfg.pca_dims)?;
            let mut out = Outputs::new("embed", &cfg)?;
            out.write("cooccurrence.csv", &co.to_csv())?;
            out.write("cooccurrence.json", &co.to_json())?;
            out.write("embeddings.csv", &emb.to_csv())?;
            out.write("embeddings.json", &emb.to_json())?;
            outs(&out, &mut log);
        }
        Command::Project { io, assembly, umap, seed } => {
            let mut cfg = io.apply()?;
            assembly.apply(&mut cfg);
            umap.apply(&mut cfg);
            cfg.seed = Some(seed);
            let ds = load_input(&cfg)?;
            let emb = factorize(&assemble(&ds, cfg.assembly()), cfg.pca_dims)?;
            let p = project(&relation_rows(&emb), &cfg.umap_config())?;
            let mut out = Outputs::new("project", &cfg)?;
            out.write("coords.csv", &p.to_csv())?;
            out.write("coords.json", &p.to_json())?;
            out.write("projection.svg", &p.to_svg(&format!("Relation projection ({})", cfg.variant()), None))?;
            for w in &p.warnings {
                let _ = writeln!(log, "warning: manifold: {w}");
            }
            outs(&out, &mut log);
        }
        Command::Cluster { io, assembly, umap, seed, linkage } => {
            let mut cfg = io.apply()?;
            assembly.apply(&mut cfg);
            umap.apply(&mut cfg);
            cfg.seed = seed.or(cfg.seed);
            apply_linkage(&mut cfg, linkage);
            let ds = load_input(&cfg)?;
            let an = analyze(&ds, &analysis_config(&cfg))?;
            let mut out = Outputs::new("cluster", &cfg)?;
            write_analysis(&mut out, &an, &cfg)?;
            let _ = writeln!(log, "k_best = {}", an.selection.k_best);
            outs(&out, &mut log);
        }
        Command::Fit { io, model, formula } => {
            let mut cfg = io.apply()?;
            model.apply(&mut cfg);
            if let Some(f) = formula {
                cfg.formula = f;
            }
            let ds = load_input(&cfg)?;
            let fit = fit_model(&OrdinalData::from_dataset(&ds), &cfg.formula, &cfg)?;
            let mut out = Outputs::new("fit", &cfg)?;
            out.write("fit.json", &fit.to_json())?;
            out.write("fit.txt", &fit.report())?;
            log.push_str(&fit.report());
            outs(&out, &mut log);
        }
        Command::Lrt { io, model, null_formula, formula } => {
            let mut cfg = io.apply()?;
            model.apply(&mut cfg);
            if let Some(f) = formula {
                cfg.formula = f;
            }
            if null_formula.is_some() {
                cfg.null_formula = null_formula;
            }
            let null = cfg
                .null_formula
                .clone()
                .ok_or_else(|| CliError::Usage("lrt needs --null (or null_formula in the config)".into()))?;
            let ds = load_input(&cfg)?;
            let data = OrdinalData::from_dataset(&ds);
            let null_fit = fit_model(&data, &null, &cfg)?;
            let full_fit = fit_model(&data, &cfg.formula, &cfg)?;
            let test = lrt(&null_fit, &full_fit)?;
            let mut out = Outputs::new("lrt", &cfg)?;
            out.write("fit_null.json", &null_fit.to_json())?;
            out.write("fit_full.json", &full_fit.to_json())?;
            out.write("lrt.json", &test.to_json())?;
            let report = format!(
                "null: {}\nfull: {}\n{test}\n\n{}\n{}",
                test.null_formula,
                test.full_formula,
                null_fit.report(),
                full_fit.report()
            );
            out.write("lrt.txt", &report)?;
            let _ = writeln!(log, "{test}");
            outs(&out, &mut log);
        }
        Command::Simulate { config, out, seed, pairs, annotators, format } => {
            let mut cfg = PipelineConfig::load(config.as_deref())?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.seed = Some(seed);
            cfg.simulate.n_du_pairs = pairs.or(cfg.simulate.n_du_pairs);
            cfg.simulate.n_annotators = annotators.or(cfg.simulate.n_annotators);
            if let Some(f) = format {
                cfg.simulate.format = match f {
                    FormatArg::Jsonl => Format::Jsonl,
                    FormatArg::Csv => Format::Csv,
                };
            }
            let mut sim_cfg = SimConfig::two_regime(seed);
            sim_cfg.n_du_pairs = cfg.simulate.n_du_pairs.unwrap_or(sim_cfg.n_du_pairs);
            sim_cfg.n_annotators = cfg.simulate.n_annotators.unwrap_or(sim_cfg.n_annotators);
            let sim = generate(&sim_cfg)?;
            let mut out = Outputs::new("simulate", &cfg)?;
            match cfg.simulate.format {
                Format::Jsonl => out.write("corpus.jsonl", &sim.dataset.to_jsonl())?,
                Format::Csv => out.write("corpus.csv", &sim.dataset.to_csv())?,
            }
            out.write("truth.json", &sim.truth.to_json())?;
            outs(&out, &mut log);
        }
        Command::Pipeline {
            io,
            assembly,
            umap,
            seed,
            linkage,
            model,
            formula,
            no_fit,
        } => {
            let mut cfg = io.apply()?;
            assembly.apply(&mut cfg);
            umap.apply(&mut cfg);
            model.apply(&mut cfg);
            cfg.seed = seed.or(cfg.seed);
            apply_linkage(&mut cfg, linkage);
            if let Some(f) = formula {
                cfg.formula = f;
            }
            let ds = load_input(&cfg)?;
            let an = analyze(&ds, &analysis_config(&cfg))?;
            let fit = if no_fit {
                None
            } else {
                Some(fit_model(&OrdinalData::from_dataset(&ds), &cfg.formula, &cfg)?)
            };
            let mut out = Outputs::new("pipeline", &cfg)?;
            write_stats(&mut out, &ds)?;
            write_analysis(&mut out, &an, &cfg)?;
            if let Some(fit) = fit {
                out.write("fit.json", &fit.to_json())?;
                out.write("fit.txt", &fit.report())?;
            }
            let _ = writeln!(log, "variant = {}", cfg.variant());
            let _ = writeln!(log, "k_best = {}", an.selection.k_best);
            outs(&out, &mut log);
        }
    }
    Ok(log)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(log) => {
            print!("{log}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed { module, message }) => {
            eprintln!("error: {module}: {message}");
            ExitCode::FAILURE
        }
    }
}
