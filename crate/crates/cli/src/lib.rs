//! `acttopo` command-line driver: sampling, persistence, distance harnesses,
//! mapper graphs and purity, plus a small read-only HTTP service.

pub mod manifest;
pub mod serve;

use std::path::{Path, PathBuf};

use acttopo_core::diagram_distance::{
    batch_cv, format_matrix_csv, format_sensitivity_csv, layer_distance_matrix, parse_matrix_csv,
    sensitivity_curve, specificity_correlation, DimSelection, EssentialPolicy, RemovalOrder, SensitivityConfig,
    SwConfig,
};
use acttopo_core::mapper::{run_mapper, EpsChoice, FilterSpec, GraphDocument, MapperParams};
use acttopo_core::persistence::{pairwise_distances, vr_persistence, Threshold};
use acttopo_core::purity::PurityReport;
use acttopo_core::sampling::{
    sample_full, sample_random, sample_top_l2, sample_top_weighted, weight_positions, ConvLayer, LayerChain, Mask,
    MaskMode,
};
use acttopo_core::tensor_io::{
    decode_tensor, format_diagram_csv, format_point_cloud_csv, format_provenance_csv, header_declares_labels,
    parse_diagram_csv, parse_point_cloud_csv,
};
use acttopo_core::{ActivationTensor, LabeledPointCloud, PersistenceDiagram};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::Recorder;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<acttopo_core::Error> for CliError {
    fn from(e: acttopo_core::Error) -> Self {
        Self {
            code: if e.is_io() { EXIT_IO } else { EXIT_VALIDATION },
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "acttopo", version, about = "Topology of neural-network activation spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn per-image activation tensors into a labeled point cloud.
    Sample(SampleArgs),
    /// Vietoris–Rips persistence diagram of a point cloud.
    Ph(PhArgs),
    /// Sliced Wasserstein distance matrix between diagrams.
    Swdist(SwdistArgs),
    /// Coefficient of variation across distance matrices from several batches.
    Cv(CvArgs),
    /// Per-layer correlation of internal and cross-model distances.
    Specificity(SpecificityArgs),
    /// Distance from a cloud's diagram to those of its low-rank approximations.
    Sensitivity(SensitivityArgs),
    /// Mapper graph of a point cloud, as JSON.
    Mapper(MapperArgs),
    /// Node, point and class purity of a mapper graph.
    Purity(PurityArgs),
    /// Serve mapper and purity over HTTP for pre-registered clouds.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    Random,
    Full,
    TopL2,
    Fg,
    Bg,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Directory of `.atns` tensors, one per image, taken in file-name order.
    #[arg(long)]
    pub tensors: PathBuf,
    /// One integer class id per line, aligned with the sorted tensor files.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SampleMode,
    /// Seed for `--mode random`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Positions kept per image for `fg`/`bg`.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Directory of masks named after the tensors (`<stem>.pgm` or `<stem>.csv`).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Layers from the input image to the tensor, as `k,s,p;k,s,p;...`.
    #[arg(long)]
    pub chain: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CloudInput {
    /// Point-cloud CSV; a `#...,label` header marks the label column.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Treat a header-less file as having no label column.
    #[arg(long)]
    pub no_labels: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PhArgs {
    #[command(flatten)]
    pub input: CloudInput,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub maxdim: u8,
    /// `auto` (enclosing radius) or a distance.
    #[arg(long, default_value = "auto", value_parser = parse_threshold)]
    #[serde(serialize_with = "ser_threshold")]
    pub threshold: Threshold,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dims {
    H0,
    H1,
    Both,
}

impl From<Dims> for DimSelection {
    fn from(d: Dims) -> Self {
        match d {
            Dims::H0 => DimSelection::H0,
            Dims::H1 => DimSelection::H1,
            Dims::Both => DimSelection::Both,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SwOptions {
    #[arg(long, default_value_t = 50)]
    pub slices: usize,
    /// Cap infinite deaths at this value instead of dropping them.
    #[arg(long)]
    pub cap: Option<f64>,
}

impl SwOptions {
    fn config(&self, dims: Dims) -> CliResult<SwConfig> {
        let essential = match self.cap {
            None => EssentialPolicy::Drop,
            Some(c) if c.is_finite() && c > 0.0 => EssentialPolicy::CapAt(c),
            Some(c) => return Err(CliError::validation(format!("--cap must be a positive number, got {c}"))),
        };
        Ok(SwConfig {
            num_slices: self.slices,
            essential,
            dims: dims.into(),
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SwdistArgs {
    /// Diagram CSV files, one per layer.
    #[arg(required = true)]
    pub diagrams: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Dims::H1)]
    pub dims: Dims,
    #[command(flatten)]
    pub sw: SwOptions,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    /// Distance-matrix CSVs written by `swdist`, one per batch.
    #[arg(required = true)]
    pub matrices: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SpecificityArgs {
    /// Model A diagrams, one per layer, in layer order.
    #[arg(long = "a", num_args = 1.., required = true)]
    pub model_a: Vec<PathBuf>,
    /// Model B diagrams, same layers.
    #[arg(long = "b", num_args = 1.., required = true)]
    pub model_b: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Dims::H1)]
    pub dims: Dims,
    #[command(flatten)]
    pub sw: SwOptions,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Least,
    Greatest,
}

#[derive(Debug, Args, Serialize)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub input: CloudInput,
    /// Distance above which a change counts as detectable.
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Remove least- or greatest-variance components first.
    #[arg(long, value_enum, default_value_t = Order::Least)]
    pub order: Order,
    #[arg(long, value_enum, default_value_t = Dims::Both)]
    pub dims: Dims,
    #[command(flatten)]
    pub sw: SwOptions,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MapperArgs {
    #[command(flatten)]
    pub input: CloudInput,
    #[arg(long, default_value_t = acttopo_core::mapper::DEFAULT_NUM_INTERVALS)]
    pub num_intervals: usize,
    #[arg(long, default_value_t = acttopo_core::mapper::DEFAULT_OVERLAP)]
    pub overlap: f64,
    /// `auto` (elbow of the k-NN curve) or a radius.
    #[arg(long, default_value = "auto")]
    pub eps: String,
    #[arg(long, default_value_t = acttopo_core::mapper::DEFAULT_MIN_SAMPLES)]
    pub min_samples: usize,
    /// `l2` or `coord:<k>`.
    #[arg(long, default_value = "l2")]
    pub filter: String,
    /// Leave member lists out of the JSON.
    #[arg(long)]
    pub no_members: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PurityArgs {
    /// Graph JSON written by `mapper` (with member lists).
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub input: CloudInput,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Cloud to register, as `id=path` or just `path` (id = file stem).
    #[arg(long = "cloud", required = true)]
    pub clouds: Vec<String>,
    #[arg(long)]
    pub no_labels: bool,
}

fn parse_threshold(text: &str) -> Result<Threshold, String> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(Threshold::Auto);
    }
    match text.parse::<f64>() {
        Ok(t) if t >= 0.0 && t.is_finite() => Ok(Threshold::Value(t)),
        _ => Err(format!("expected `auto` or a non-negative number, got {text:?}")),
    }
}

fn ser_threshold<S: serde::Serializer>(t: &Threshold, s: S) -> Result<S::Ok, S::Error> {
    match t {
        Threshold::Auto => s.serialize_str("auto"),
        Threshold::Value(v) => s.serialize_f64(*v),
    }
}

/// Parses `auto` or a number; range checks happen in the pipeline.
pub fn parse_eps(text: &str) -> CliResult<EpsChoice> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(EpsChoice::Auto);
    }
    text.parse::<f64>()
        .map(EpsChoice::Value)
        .map_err(|_| CliError::validation(format!("--eps expects `auto` or a number, got {text:?}")))
}

pub fn parse_chain(text: &str) -> CliResult<Vec<ConvLayer>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|layer| {
            let nums: Vec<usize> = layer
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::validation(format!("bad layer {layer:?}; expected k,s,p")))?;
            match nums[..] {
                [k, s, p] => Ok(ConvLayer::new(k, s, p)),
                _ => Err(CliError::validation(format!("bad layer {layer:?}; expected k,s,p"))),
            }
        })
        .collect()
}

/// Decodes a cloud file; a header decides the label column, else `no_labels`.
pub fn decode_cloud(text: &str, no_labels: bool) -> CliResult<(LabeledPointCloud, bool)> {
    let labeled = header_declares_labels(text).unwrap_or(!no_labels);
    Ok((parse_point_cloud_csv(text, labeled)?, labeled))
}

fn read_cloud(rec: &mut Recorder, input: &CloudInput) -> CliResult<(LabeledPointCloud, bool)> {
    let text = rec.read_text(&input.cloud)?;
    decode_cloud(&text, input.no_labels)
}

fn read_diagram(rec: &mut Recorder, path: &Path) -> CliResult<PersistenceDiagram> {
    Ok(parse_diagram_csv(&rec.read_text(path)?)?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Builds the mapper parameters shared by the CLI and the service.
pub fn mapper_params(
    num_intervals: usize,
    overlap: f64,
    eps: EpsChoice,
    min_samples: usize,
    filter: &str,
) -> CliResult<MapperParams> {
    Ok(MapperParams {
        num_intervals,
        overlap,
        eps,
        min_samples,
        filter: FilterSpec::parse(filter)?,
    })
}

/// The graph JSON for a cloud; both `mapper` and `POST /mapper` return these bytes.
pub fn mapper_json(cloud: &LabeledPointCloud, params: &MapperParams, include_members: bool) -> CliResult<String> {
    let (graph, echo) = run_mapper(cloud, params)?;
    Ok(GraphDocument::new(&graph, echo, include_members).to_json())
}

/// Purity of a graph document over a labeled cloud.
pub fn purity_report(doc: &GraphDocument, cloud: &LabeledPointCloud, labeled: bool) -> CliResult<PurityReport> {
    if !labeled {
        return Err(CliError::validation("purity needs class labels; the cloud has none"));
    }
    if doc.params.num_points != cloud.len() {
        return Err(CliError::validation(format!(
            "graph was built from {} points but the cloud has {}",
            doc.params.num_points,
            cloud.len()
        )));
    }
    Ok(PurityReport::compute(&doc.to_graph()?, cloud.labels())?)
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Sample(a) => cmd_sample(&a),
        Command::Ph(a) => cmd_ph(&a),
        Command::Swdist(a) => cmd_swdist(&a),
        Command::Cv(a) => cmd_cv(&a),
        Command::Specificity(a) => cmd_specificity(&a),
        Command::Sensitivity(a) => cmd_sensitivity(&a),
        Command::Mapper(a) => cmd_mapper(&a),
        Command::Purity(a) => cmd_purity(&a),
        Command::Serve(a) => serve::run(&a),
    }
}

fn tensor_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("atns")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::validation(format!("no .atns files in {}", dir.display())));
    }
    Ok(files)
}

fn parse_labels(text: &str) -> CliResult<Vec<u32>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<u32>()
                .map_err(|_| CliError::validation(format!("label {l:?} is not a non-negative integer")))
        })
        .collect()
}

fn find_mask(dir: &Path, stem: &str) -> CliResult<PathBuf> {
    ["pgm", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            CliError::io(
                &dir.join(stem),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no matching .pgm or .csv mask"),
            )
        })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let base = path.with_extension("");
    let mut name = base.into_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_sample(a: &SampleArgs) -> CliResult {
    let mut rec = Recorder::new("sample", a);
    let files = tensor_files(&a.tensors)?;
    let tensors: Vec<ActivationTensor> = files
        .iter()
        .map(|f| Ok(decode_tensor(&rec.read(f)?)?))
        .collect::<CliResult<_>>()?;
    let labels = parse_labels(&rec.read_text(&a.labels)?)?;
    if labels.len() != tensors.len() {
        return Err(CliError::validation(format!(
            "{} labels for {} tensors",
            labels.len(),
            tensors.len()
        )));
    }
    let cloud = match a.mode {
        SampleMode::Random => sample_random(&tensors, &labels, a.seed)?,
        SampleMode::Full => sample_full(&tensors, &labels)?,
        SampleMode::TopL2 => sample_top_l2(&tensors, &labels)?,
        SampleMode::Fg | SampleMode::Bg => {
            let mode = if a.mode == SampleMode::Fg {
                MaskMode::Foreground
            } else {
                MaskMode::Background
            };
            let mask_dir = a
                .masks
                .as_deref()
                .ok_or_else(|| CliError::validation("--masks is required for fg/bg sampling"))?;
            let layers = parse_chain(
                a.chain
                    .as_deref()
                    .ok_or_else(|| CliError::validation("--chain is required for fg/bg sampling"))?,
            )?;
            let mut maps = Vec::with_capacity(files.len());
            for (file, tensor) in files.iter().zip(&tensors) {
                let mask_path = find_mask(mask_dir, &stem(file))?;
                let bytes = rec.read(&mask_path)?;
                let mask = if mask_path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                    Mask::from_pgm(&bytes)?
                } else {
                    Mask::from_csv(&String::from_utf8_lossy(&bytes))?
                };
                let chain = LayerChain::new(layers.clone(), mask.size())?;
                let grid = (tensor.height(), tensor.width());
                if chain.output_size() != grid {
                    return Err(CliError::validation(format!(
                        "layer chain maps {:?} to {:?}, but {} is {grid:?}",
                        mask.size(),
                        chain.output_size(),
                        file.display()
                    )));
                }
                maps.push(weight_positions(&chain, &mask, mode)?);
            }
            sample_top_weighted(&tensors, &labels, &maps, a.p)?
        }
    };
    let prov = format_provenance_csv(&cloud).expect("sampled clouds carry positions");
    rec.finish(&[
        (a.out.clone(), format_point_cloud_csv(&cloud, true).into_bytes()),
        (with_suffix(&a.out, ".prov.csv"), prov.into_bytes()),
    ])
}

fn cmd_ph(a: &PhArgs) -> CliResult {
    let mut rec = Recorder::new("ph", a);
    let (cloud, _) = read_cloud(&mut rec, &a.input)?;
    let diagram = vr_persistence(&pairwise_distances(&cloud), a.maxdim, a.threshold)?;
    rec.finish(&[(a.out.clone(), format_diagram_csv(&diagram).into_bytes())])
}

fn cmd_swdist(a: &SwdistArgs) -> CliResult {
    if a.diagrams.len() < 2 {
        return Err(CliError::validation("swdist needs at least two diagrams"));
    }
    let cfg = a.sw.config(a.dims)?;
    let mut rec = Recorder::new("swdist", a);
    let diagrams: Vec<_> = a.diagrams.iter().map(|p| read_diagram(&mut rec, p)).collect::<CliResult<_>>()?;
    let matrix = layer_distance_matrix(&diagrams, &cfg)?;
    let names: Vec<String> = a.diagrams.iter().map(|p| stem(p)).collect();
    rec.finish(&[(a.out.clone(), format_matrix_csv(&matrix, &names)?.into_bytes())])
}

fn cmd_cv(a: &CvArgs) -> CliResult {
    let mut rec = Recorder::new("cv", a);
    let mut names = None;
    let mut matrices = Vec::with_capacity(a.matrices.len());
    for path in &a.matrices {
        let (n, m) = parse_matrix_csv(&rec.read_text(path)?)?;
        if names.get_or_insert_with(|| n.clone()) != &n {
            return Err(CliError::validation(format!("{} has different layers", path.display())));
        }
        matrices.push(m);
    }
    let cv = batch_cv(&matrices)?;
    let names = names.expect("clap requires at least one matrix");
    rec.finish(&[(a.out.clone(), format_matrix_csv(&cv, &names)?.into_bytes())])
}

fn cmd_specificity(a: &SpecificityArgs) -> CliResult {
    let cfg = a.sw.config(a.dims)?;
    let mut rec = Recorder::new("specificity", a);
    let model_a: Vec<_> = a.model_a.iter().map(|p| read_diagram(&mut rec, p)).collect::<CliResult<_>>()?;
    let model_b: Vec<_> = a.model_b.iter().map(|p| read_diagram(&mut rec, p)).collect::<CliResult<_>>()?;
    let report = specificity_correlation(&model_a, &model_b, &cfg)?;
    let mut out = String::from("layer,rho\n");
    for (i, rho) in report.per_layer.iter().enumerate() {
        out.push_str(&format!("{i},{rho}\n"));
    }
    out.push_str(&format!("mean,{}\n", report.mean));
    rec.finish(&[(a.out.clone(), out.into_bytes())])
}

fn cmd_sensitivity(a: &SensitivityArgs) -> CliResult {
    let cfg = SensitivityConfig {
        sw: a.sw.config(a.dims)?,
        order: match a.order {
            Order::Least => RemovalOrder::LeastVarianceFirst,
            Order::Greatest => RemovalOrder::GreatestVarianceFirst,
        },
        ..SensitivityConfig::default()
    };
    let mut rec = Recorder::new("sensitivity", a);
    let (cloud, _) = read_cloud(&mut rec, &a.input)?;
    let curve = sensitivity_curve(&cloud, &cfg, a.baseline)?;
    rec.finish(&[(a.out.clone(), format_sensitivity_csv(&curve).into_bytes())])
}

fn cmd_mapper(a: &MapperArgs) -> CliResult {
    let params = mapper_params(a.num_intervals, a.overlap, parse_eps(&a.eps)?, a.min_samples, &a.filter)?;
    let mut rec = Recorder::new("mapper", a);
    let (cloud, _) = read_cloud(&mut rec, &a.input)?;
    let json = mapper_json(&cloud, &params, !a.no_members)?;
    rec.finish(&[(a.out.clone(), json.into_bytes())])
}

fn cmd_purity(a: &PurityArgs) -> CliResult {
    let mut rec = Recorder::new("purity", a);
    let doc = GraphDocument::from_json(&rec.read_text(&a.graph)?)?;
    let (cloud, labeled) = read_cloud(&mut rec, &a.input)?;
    let report = purity_report(&doc, &cloud, labeled)?;
    rec.finish(&[(a.out.clone(), report.to_csv().into_bytes())])
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
