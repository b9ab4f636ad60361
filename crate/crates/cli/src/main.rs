use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cipher_sim::affinity::{train_symbol_classifier, AffinityTable, ClassifierParams};
use cipher_sim::baseline::BaselineParams;
use cipher_sim::corpus::{save_feature_file, Document, FeatureSet, FeatureSource};
use cipher_sim::descriptor::{describe_all, pca_fit, pca_transform, GridDescriptorParams};
use cipher_sim::graphsim::{CsiParams, RemovalRule};
use cipher_sim::protocol::SamplingProtocol;
use cipher_sim::report::{
    agreement, all_pairs, compare_pair, nearest_pairs, znormalize, AllPairsOptions, CorpusEntry,
    CorpusManifest, MetricParams, PairReport, SimilarityMatrix,
};
use cipher_sim::segment::{
    load_crop, read_crop_index, segment_page, write_crop_index, write_crops, GrayImage, Polarity,
    SauvolaParams, SegmentParams,
};
use cipher_sim::synth::{make_corpus_named, render_corpus, PageLayout, RenderSpec, SynthSpec};
use cipher_sim::{Error, ErrorClass, Result};

#[derive(Parser, Debug)]
#[command(
    name = "cipher-sim",
    version,
    about = "Compare cipher alphabets through their symbol images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Binarize pages and cut them into symbol crops.
    Segment(SegmentArgs),
    /// Compute feature files from symbol crops.
    Features(FeaturesArgs),
    /// Compare two feature files.
    Compare(CompareArgs),
    /// All-pairs similarity matrices for a corpus.
    Matrix(MatrixArgs),
    /// Combine matrices from several feature sources.
    Agree(AgreeArgs),
    /// Second-choice affinity of test documents to training documents.
    Affinity(AffinityArgs),
    /// Generate a synthetic corpus with known alphabet overlap.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(required = true)]
    pages: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Sauvola window side, odd.
    #[arg(long, default_value_t = 31)]
    window: usize,
    #[arg(long = "sauvola-k", default_value_t = 0.2)]
    sauvola_k: f64,
    /// Dynamic range of the standard deviation.
    #[arg(long, default_value_t = 128.0)]
    range: f64,
    /// Pages have light ink on a dark background.
    #[arg(long)]
    light_on_dark: bool,
    /// Minimum distance between line peaks; derived from the page if unset.
    #[arg(long)]
    min_dist: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    rel_threshold: f64,
    /// Merge gap in pixels; 15% of the line height if unset.
    #[arg(long)]
    merge_gap: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    GridSift,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    /// Crop directories written by `segment`, one per document.
    #[arg(required = true)]
    crops: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::GridSift)]
    method: Method,
    /// Reduce to this many dimensions with one PCA fit over all inputs; 0 keeps the full descriptor.
    #[arg(long, default_value_t = 0)]
    pca: usize,
    /// Document id; only with a single crop directory (defaults to the directory name).
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Add the written files to this corpus manifest, creating it if needed.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    resize: usize,
    #[arg(long, default_value_t = 4)]
    grid: usize,
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MetricArg {
    Csi,
    Baseline,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum RemovalArg {
    Betweenness,
    LongestEdge,
}

#[derive(Args, Debug, Clone)]
struct MetricArgs {
    #[arg(long, value_enum, default_value_t = MetricArg::Csi)]
    metric: MetricArg,
    /// Neighbourhood size of the mutual kNN graph.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Edge removals per run.
    #[arg(long = "msteps", default_value_t = 50)]
    m_steps: usize,
    #[arg(long, value_enum, default_value_t = RemovalArg::Betweenness)]
    removal: RemovalArg,
    #[arg(long, default_value_t = 60)]
    kmeans_k: usize,
    /// A cluster is mixed when its minority share exceeds this.
    #[arg(long, default_value_t = 0.1)]
    minority_threshold: f64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 500)]
    per_doc: usize,
    #[arg(long, default_value_t = 4)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// PCA dimension applied to each pooled sample; 0 disables.
    #[arg(long, default_value_t = 50)]
    pca_dim: usize,
    /// Reuse the first run's sample in every run.
    #[arg(long)]
    no_resample: bool,
    /// Allow documents with fewer than --per-doc vectors.
    #[arg(long)]
    truncate: bool,
}

impl MetricArgs {
    fn params(&self) -> MetricParams {
        let protocol = SamplingProtocol {
            per_doc: self.per_doc,
            runs: self.runs,
            seed: self.seed,
            pca_dim: (self.pca_dim > 0).then_some(self.pca_dim),
            resample: !self.no_resample,
            truncate: self.truncate,
        };
        match self.metric {
            MetricArg::Csi => MetricParams::Csi(CsiParams {
                k: self.k,
                m_steps: self.m_steps,
                removal: match self.removal {
                    RemovalArg::Betweenness => RemovalRule::Betweenness,
                    RemovalArg::LongestEdge => RemovalRule::LongestEdge,
                },
                protocol,
            }),
            MetricArg::Baseline => MetricParams::Baseline(BaselineParams {
                kmeans_k: self.kmeans_k,
                minority_threshold: self.minority_threshold,
                max_iter: self.max_iter,
                protocol,
                ..BaselineParams::default()
            }),
        }
    }
}

#[derive(Args, Debug)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Report path; printed to stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MatrixArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Feature sources to use; all sources in the manifest when empty.
    #[arg(long, value_delimiter = ',')]
    sources: Vec<String>,
    /// Restrict to these document ids.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    out: PathBuf,
    /// Pair cache directory (default: <out>/cache).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
    /// Fill the diagonal with split-half self comparisons.
    #[arg(long)]
    diagonal: bool,
}

#[derive(Args, Debug)]
struct AgreeArgs {
    /// Matrix JSON files, one per feature source.
    #[arg(required = true)]
    matrices: Vec<PathBuf>,
    /// Z-normalize inputs that are not normalized yet.
    #[arg(long)]
    znorm: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AffinityArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "grid_sift")]
    source: String,
    #[arg(long, value_delimiter = ',', required = true)]
    train: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    test: Vec<String>,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; printed to stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON spec: one object or a list of objects.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Render page images instead of feature vectors.
    #[arg(long)]
    render: bool,
    #[arg(long, default_value_t = 1)]
    pages: usize,
    #[arg(long, default_value_t = 3)]
    lines: usize,
    #[arg(long, default_value_t = 10)]
    per_line: usize,
    /// Glyph box side in pixels.
    #[arg(long, default_value_t = 24)]
    glyph_size: usize,
    /// Stroke width in pixels.
    #[arg(long, default_value_t = 2.5)]
    stroke: f64,
    /// Vertex jitter as a fraction of the glyph size.
    #[arg(long, default_value_t = 0.03)]
    jitter: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(SynthSpec),
    Many(Vec<SynthSpec>),
}

#[derive(Serialize)]
struct RenderTruth<'a> {
    overlap: f64,
    shared_ids: Vec<usize>,
    pages: BTreeMap<String, &'a Vec<Vec<Vec<usize>>>>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into())
}

fn run_segment(args: &SegmentArgs) -> Result<()> {
    let params = SegmentParams {
        sauvola: SauvolaParams {
            window: args.window,
            k: args.sauvola_k,
            r: args.range,
            polarity: if args.light_on_dark {
                Polarity::LightOnDark
            } else {
                Polarity::DarkOnLight
            },
        },
        min_dist: args.min_dist,
        rel_threshold: args.rel_threshold,
        merge_gap: args.merge_gap,
    };
    let mut index = Vec::new();
    for page in &args.pages {
        let img = GrayImage::load(page)?;
        let symbols = segment_page(&img, &params)?;
        let name = file_stem(page);
        eprintln!("{}: {} symbols", page.display(), symbols.len());
        index.extend(write_crops(&symbols, &name, &args.out)?);
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_crop_index(&index, &args.out)
}

fn run_features(args: &FeaturesArgs) -> Result<()> {
    if args.id.is_some() && args.crops.len() != 1 {
        return Err(Error::Param("--id needs exactly one crop directory".into()));
    }
    let params = GridDescriptorParams {
        resize: args.resize,
        grid: args.grid,
        smoothing_sigma: args.smoothing,
        ..GridDescriptorParams::default()
    };
    let mut sets = Vec::with_capacity(args.crops.len());
    for dir in &args.crops {
        let id = args.id.clone().unwrap_or_else(|| file_stem(dir));
        let crops = read_crop_index(dir)?
            .iter()
            .map(|e| load_crop(&dir.join(&e.file)))
            .collect::<Result<Vec<_>>>()?;
        if crops.is_empty() {
            return Err(Error::Data(format!("{} has no crops", dir.display())));
        }
        let fs_ = match args.method {
            Method::GridSift => describe_all(&id, &crops, &params)?,
        };
        sets.push(fs_);
    }
    if args.pca > 0 {
        let all: Vec<&[f64]> = sets.iter().flat_map(|s| s.vectors().iter_rows()).collect();
        let stacked = cipher_sim::corpus::RowMatrix::from_rows(&all)?;
        let model = pca_fit(&stacked, args.pca)?;
        sets = sets
            .into_iter()
            .map(|s| {
                let reduced = pca_transform(&model, s.vectors())?;
                FeatureSet::new(s.document_id.clone(), s.feature_source, reduced)
            })
            .collect::<Result<_>>()?;
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut manifest = match &args.manifest {
        Some(p) if p.exists() => Some(CorpusManifest::load(p)?),
        Some(p) => Some(CorpusManifest {
            documents: Vec::new(),
            base_dir: p.parent().map(Path::to_path_buf).unwrap_or_default(),
        }),
        None => None,
    };
    let source = FeatureSource::GridSift.to_string();
    for s in &sets {
        let path = args.out_dir.join(format!("{}.cfea", s.document_id));
        save_feature_file(s, &path)?;
        eprintln!("{}: {} x {}", path.display(), s.len(), s.dim());
        if let Some(m) = manifest.as_mut() {
            let rel = relative_to(&path, &m.base_dir);
            match m
                .documents
                .iter_mut()
                .find(|e| e.document.id == s.document_id)
            {
                Some(e) => {
                    e.features.insert(source.clone(), rel);
                }
                None => m.documents.push(CorpusEntry {
                    document: Document::new(s.document_id.clone(), s.document_id.clone())?,
                    features: BTreeMap::from([(source.clone(), rel)]),
                }),
            }
        }
    }
    if let (Some(m), Some(p)) = (manifest, &args.manifest) {
        m.save(p)?;
    }
    Ok(())
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (path_abs, base_abs) = (
        abs(path),
        abs(if base.as_os_str().is_empty() {
            Path::new(".")
        } else {
            base
        }),
    );
    path_abs
        .strip_prefix(&base_abs)
        .map(Path::to_path_buf)
        .unwrap_or(path_abs)
}

fn summary(report: &PairReport) -> String {
    let (a, b) = report.docs();
    match report {
        PairReport::Csi(r) => format!("{a} {b} csi={:.6} runs={:?}", r.mean_csi, r.per_run_csi),
        PairReport::Baseline(r) => format!(
            "{a} {b} mixed_ratio={:.6} runs={:?}",
            r.mean_ratio, r.per_run_ratio
        ),
    }
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let a = cipher_sim::corpus::load_feature_file(&args.a)?;
    let b = cipher_sim::corpus::load_feature_file(&args.b)?;
    let report = compare_pair(&a, &b, &args.metric.params())?;
    eprintln!("{}", summary(&report));
    match &args.out {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn write_matrix(m: &SimilarityMatrix, out: &Path, stem: &str) -> Result<()> {
    write_text(&out.join(format!("{stem}.csv")), &m.to_csv())?;
    m.save_json(&out.join(format!("{stem}.json")))
}

#[derive(Serialize)]
struct CurveRecord<'a> {
    doc_a: &'a str,
    doc_b: &'a str,
    entropy_curve: &'a [f64],
    per_run_curves: &'a [Vec<f64>],
}

fn run_matrix(args: &MatrixArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&args.corpus)?;
    let sources = if args.sources.is_empty() {
        manifest.sources()
    } else {
        args.sources.clone()
    };
    if sources.is_empty() {
        return Err(Error::Data(
            "corpus manifest names no feature sources".into(),
        ));
    }
    let ids = (!args.ids.is_empty()).then_some(args.ids.as_slice());
    let params = args.metric.params();
    let metric = params.metric().as_str();
    let options = AllPairsOptions {
        cache_dir: (!args.no_cache)
            .then(|| args.cache.clone().unwrap_or_else(|| args.out.join("cache"))),
        diagonal: args.diagonal,
    };
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut normalized = Vec::new();
    let mut last_raw = None;
    for source in &sources {
        let docs = manifest.load_source(source, ids)?;
        let mut result = all_pairs(&docs, &params, &options)?;
        result.matrix.feature_source = source.clone();
        eprintln!(
            "{source}: {} pairs computed, {} from cache, {} failed",
            result.computed,
            result.cache_hits,
            result.failures.len()
        );
        for f in &result.failures {
            eprintln!("  {} / {}: {}", f.doc_a, f.doc_b, f.error);
        }
        let stem = format!("{metric}_{source}");
        write_matrix(&result.matrix, &args.out, &stem)?;
        write_json(
            &args.out.join(format!("{stem}_pairs.json")),
            &serde_json::json!({ "reports": result.reports, "failures": result.failures }),
        )?;
        let curves: Vec<CurveRecord> = result
            .reports
            .iter()
            .filter_map(|r| match r {
                PairReport::Csi(c) => Some(CurveRecord {
                    doc_a: &c.doc_a,
                    doc_b: &c.doc_b,
                    entropy_curve: &c.entropy_curve,
                    per_run_curves: &c.per_run_curves,
                }),
                PairReport::Baseline(_) => None,
            })
            .collect();
        if !curves.is_empty() {
            write_json(&args.out.join(format!("{stem}_curves.json")), &curves)?;
        }
        match znormalize(&result.matrix) {
            Ok(z) => {
                write_matrix(&z, &args.out, &format!("{stem}_z"))?;
                normalized.push(z);
            }
            Err(e) => eprintln!("{source}: no z-normalized matrix ({e})"),
        }
        last_raw = Some(result.matrix);
    }
    let ranked = if sources.len() > 1 && normalized.len() == sources.len() {
        let agr = agreement(&normalized)?;
        write_matrix(&agr, &args.out, &format!("{metric}_agreement"))?;
        nearest_pairs(&agr)
    } else {
        nearest_pairs(last_raw.as_ref().expect("at least one source"))
    };
    write_json(
        &args.out.join(format!("{metric}_nearest_pairs.json")),
        &ranked,
    )?;
    for p in &ranked {
        println!("{}\t{}\t{}", p.doc, p.partner, p.value);
    }
    Ok(())
}

fn run_agree(args: &AgreeArgs) -> Result<()> {
    let mut matrices = Vec::with_capacity(args.matrices.len());
    for p in &args.matrices {
        let m = SimilarityMatrix::load_json(p)?;
        matrices.push(if args.znorm && !m.normalized {
            znormalize(&m)?
        } else {
            m
        });
    }
    let agr = agreement(&matrices)?;
    write_matrix(&agr, &args.out, "agreement")?;
    let ranked = nearest_pairs(&agr);
    write_json(&args.out.join("nearest_pairs.json"), &ranked)?;
    for p in &ranked {
        println!("{}\t{}\t{}", p.doc, p.partner, p.value);
    }
    Ok(())
}

fn run_affinity(args: &AffinityArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&args.corpus)?;
    let train = manifest.load_source(&args.source, Some(&args.train))?;
    let test = manifest.load_source(&args.source, Some(&args.test))?;
    let params = ClassifierParams {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        l2: args.l2,
    };
    let model = train_symbol_classifier(&train, &params, args.seed)?;
    eprintln!("training accuracy {:.4}", model.training_accuracy);
    let table = AffinityTable::build(&model, &test)?;
    match &args.out {
        Some(p) => write_text(p, &table.to_csv()),
        None => {
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let specs = match read_json::<SpecFile>(&args.spec)? {
        SpecFile::One(s) => vec![("synth_".to_string(), s)],
        SpecFile::Many(v) => v
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("s{i:02}_"), s))
            .collect(),
    };
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    if args.render {
        let render = RenderSpec {
            pages: args.pages,
            lines_per_page: args.lines,
            glyphs_per_line: args.per_line,
            layout: PageLayout {
                glyph_size: args.glyph_size,
                stroke: args.stroke,
                jitter: args.jitter,
                ..PageLayout::default()
            },
        };
        for (prefix, spec) in &specs {
            let (a, b) = render_corpus(spec, &render, prefix)?;
            for doc in [&a, &b] {
                let dir = args.out.join(&doc.id);
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (i, page) in doc.pages.iter().enumerate() {
                    page.save_png(dir.join(format!("page_{i:03}.png")))?;
                }
            }
            let truth = RenderTruth {
                overlap: spec.overlap(),
                shared_ids: (0..spec.shared).collect(),
                pages: BTreeMap::from([(a.id.clone(), &a.truth), (b.id.clone(), &b.truth)]),
            };
            write_json(&args.out.join(format!("{prefix}truth.json")), &truth)?;
            eprintln!("{} / {}: overlap {}", a.id, b.id, spec.overlap());
        }
        return Ok(());
    }
    let mut documents = Vec::new();
    let source = FeatureSource::External.to_string();
    for (prefix, spec) in &specs {
        let corpus = make_corpus_named(spec, prefix)?;
        for fs_ in [&corpus.a, &corpus.b] {
            let file = format!("{}.cfea", fs_.document_id);
            save_feature_file(fs_, args.out.join(&file))?;
            documents.push(CorpusEntry {
                document: Document::new(fs_.document_id.clone(), fs_.document_id.clone())?,
                features: BTreeMap::from([(source.clone(), PathBuf::from(file))]),
            });
        }
        write_json(
            &args.out.join(format!("{prefix}truth.json")),
            &corpus.ground_truth(),
        )?;
        eprintln!(
            "{} / {}: overlap {}",
            corpus.a.document_id, corpus.b.document_id, corpus.overlap
        );
    }
    let manifest = CorpusManifest {
        documents,
        base_dir: args.out.clone(),
    };
    manifest.save(&args.out.join("corpus.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Segment(a) => run_segment(a),
        Command::Features(a) => run_features(a),
        Command::Compare(a) => run_compare(a),
        Command::Matrix(a) => run_matrix(a),
        Command::Agree(a) => run_agree(a),
        Command::Affinity(a) => run_affinity(a),
        Command::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Parameter => ExitCode::from(2),
                ErrorClass::Data => ExitCode::from(3),
            }
        }
    }
}
