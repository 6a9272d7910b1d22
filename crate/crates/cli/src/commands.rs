use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hexposome::analytics::{
    cluster_summary, grid_search_hdbscan, hdbscan_fit, labels_frame, pca_fit, pca_select, pca_transform, standardize,
    summary_csv, Matrix, PcaSelect, DEFAULT_LATTICE,
};
use hexposome::catalog::{self, DataType, DatasetRecord, Predicate, TemporalExtent};
use hexposome::convert::{
    self, apply_overlay_with, build_overlay_map, chunked_convert, points_from_table, source_values, Aggregation,
    ChunkSpec, OverlayMap, OverlaySources, Semantics, Source, Strategy,
};
use hexposome::expometrics::{ceem_map, classify_frame, population_mask, CarcinogenFilter, ClassifyMode, Limits};
use hexposome::hexgrid::format_f64;
use hexposome::ingest::{
    read_ascii_grid, read_csv, read_geojson_polygons, read_hexframe, write_hexframe, ColumnKind, FeatureSet, HexFrame,
    Schema,
};
use hexposome::linkage::{aggregate_to_zone, build_crosswalk, Crosswalk, CrosswalkMode, ZoneStats};
use hexposome::RasterGrid;

use crate::config::{env_threads, ConfigFile, Overrides, RunConfig};
use crate::thematic::{render_svg, Classing, CEEM_THRESHOLD};
use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "hexposome", version, about = "Hexagonal exposure harmonization and exposome analytics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value settings file; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Grid resolution
    #[arg(long, global = true)]
    pub res: Option<u8>,
    /// Resolution-0 edge length in km
    #[arg(long, global = true)]
    pub base_edge: Option<f64>,
    /// Lattice rotation direction, 1 or -1
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub rotation_sign: Option<i8>,
    /// Lattice origin as x,y in km
    #[arg(long, global = true, value_name = "X,Y", allow_hyphen_values = true)]
    pub origin: Option<String>,
    /// Worker threads (0 = all cores); defaults to HEXPOSOME_THREADS
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raster, polygon or point file to a hex frame
    Hexify(HexifyArgs),
    /// Precompute pixel or polygon to hex overlay fractions
    OverlayMap(OverlayMapArgs),
    /// Convert values through a precomputed overlay map
    Apply(ApplyArgs),
    /// Cumulative excess exposure mixture score per hex
    Ceem(CeemArgs),
    /// Keep hexes with enough population
    Mask(MaskArgs),
    /// Append AQI, bivariate or attainment classes
    Classify(ClassifyArgs),
    /// Density clustering of hex feature vectors
    Cluster(ClusterArgs),
    /// Principal component scores of hex feature vectors
    Pca(PcaArgs),
    /// Hex to zone crosswalk from zone polygons
    Crosswalk(CrosswalkArgs),
    /// Aggregate a hex frame to zones through a crosswalk
    Aggregate(AggregateArgs),
    /// Dataset manifest operations
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// SVG choropleth of one frame column
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Centroid,
    Polyfill,
    Overlay,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Feature property or CSV column holding the value
    #[arg(long)]
    pub field: Option<String>,
    /// CSV column with x coordinates (point input)
    #[arg(long, default_value = "x")]
    pub x: String,
    /// CSV column with y coordinates (point input)
    #[arg(long, default_value = "y")]
    pub y: String,
}

#[derive(Debug, Args)]
pub struct HexifyArgs {
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// mean, sum, count, min or max (centroid strategy)
    #[arg(long, default_value = "mean")]
    pub aggregation: String,
    /// intensive, extensive or categorical (overlay strategy)
    #[arg(long, default_value = "intensive")]
    pub semantics: String,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Output variable name; defaults to the field name or "value"
    #[arg(long)]
    pub var: Option<String>,
    /// Period label for the output rows
    #[arg(long)]
    pub period: Option<String>,
    /// Process in square chunks of this width (km)
    #[arg(long)]
    pub chunk_width: Option<f64>,
    /// Halo around each chunk (km); defaults to the minimum safe value
    #[arg(long)]
    pub halo: Option<f64>,
    /// Minimum covered fraction of a hex for overlay output
    #[arg(long)]
    pub min_coverage: Option<f64>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayMapArgs {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, default_value = "intensive")]
    pub semantics: String,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub var: Option<String>,
    #[arg(long)]
    pub period: Option<String>,
    #[arg(long)]
    pub min_coverage: Option<f64>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CeemArgs {
    /// CSV with cas, limit and optional group and sites columns
    #[arg(long)]
    pub limits: PathBuf,
    /// e.g. "group in {1,2A} and site has lung"
    #[arg(long)]
    pub filter: Option<String>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Hex frame with population counts
    #[arg(long)]
    pub pop: PathBuf,
    #[arg(long, default_value = "population")]
    pub pop_column: String,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassifyModeArg {
    Aqi,
    Bivariate,
    Attainment,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_enum)]
    pub mode: ClassifyModeArg,
    /// Input column, or smoke,total for bivariate
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    /// Annual standard for attainment mode
    #[arg(long, default_value_t = hexposome::expometrics::PM25_ANNUAL_STANDARD)]
    pub standard: f64,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Feature columns; all but coverage_* by default
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Use raw values instead of z-scores
    #[arg(long)]
    pub no_standardize: bool,
    /// One row per hex with a column per (variable, period)
    #[arg(long)]
    pub pivot_periods: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Fixed min_cluster_size; otherwise searched
    #[arg(long, requires = "min_samples")]
    pub min_cluster_size: Option<usize>,
    #[arg(long, requires = "min_cluster_size")]
    pub min_samples: Option<usize>,
    /// Parameter values for the search
    #[arg(long, value_delimiter = ',')]
    pub lattice: Vec<usize>,
    /// Cluster on the first K principal components
    #[arg(long, conflicts_with = "pca_threshold")]
    pub pca_components: Option<usize>,
    /// Cluster on the components reaching this cumulative variance
    #[arg(long)]
    pub pca_threshold: Option<f64>,
    /// Per-cluster five-number summaries (CSV)
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Condensed tree (CSV)
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Silhouette of every searched pair (CSV)
    #[arg(long)]
    pub scores: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long, conflicts_with_all = ["threshold", "elbow"])]
    pub components: Option<usize>,
    /// Cumulative explained variance to reach (default 0.9)
    #[arg(long, conflicts_with = "elbow")]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub elbow: bool,
    /// Eigenvalues and explained variance (CSV)
    #[arg(long)]
    pub variance: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CrosswalkModeArg {
    Fractional,
    Dominant,
}

#[derive(Debug, Args)]
pub struct CrosswalkArgs {
    #[arg(long, default_value = "zone_id")]
    pub id_field: String,
    #[arg(long, value_enum, default_value = "fractional")]
    pub mode: CrosswalkModeArg,
    pub zones: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub crosswalk: PathBuf,
    /// Variables to aggregate; all by default
    #[arg(long, value_delimiter = ',')]
    pub vars: Vec<String>,
    /// Subset of mean,std
    #[arg(long, value_delimiter = ',', default_value = "mean,std")]
    pub stats: Vec<String>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CatalogCommand {
    /// Validate and append a dataset record
    Register(RegisterArgs),
    /// Write records matching every predicate
    Query(QueryArgs),
    /// Check every record; exits 2 when any is invalid
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub name: String,
    /// raster, vector, tabular, model or ingestion-code
    #[arg(long)]
    pub data_type: String,
    #[arg(long)]
    pub format: String,
    /// min_x,min_y,max_x,max_y
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub extent: Vec<f64>,
    /// START/END dates, or - when static
    #[arg(long, default_value = "-")]
    pub period: String,
    #[arg(long)]
    pub resolution: String,
    #[arg(long)]
    pub source_url: String,
    #[arg(long)]
    pub license: String,
    #[arg(long, default_value = "")]
    pub code_ref: String,
    /// Data file to checksum
    #[arg(long, conflicts_with = "checksum")]
    pub file: Option<PathBuf>,
    #[arg(long)]
    pub checksum: Option<String>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// field=value, field~text, bbox=a,b,c,d or period=START[/END]
    #[arg(long = "where")]
    pub predicates: Vec<String>,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// ID=PATH: recompute the checksum of a record's data file
    #[arg(long)]
    pub file: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RenderModeArg {
    Quantile,
    Bivariate,
    Ceem,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, value_enum, default_value = "quantile")]
    pub mode: RenderModeArg,
    /// Column to map, or smoke,total for bivariate
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = CEEM_THRESHOLD)]
    pub threshold: f64,
    /// Only rows of this period
    #[arg(long)]
    pub period: Option<String>,
    /// Comma-separated #rrggbb colors, one per class
    #[arg(long, value_delimiter = ',')]
    pub palette: Vec<String>,
    pub input: PathBuf,
    pub output: PathBuf,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn overrides(g: &GlobalArgs) -> Result<Overrides> {
    let origin = match &g.origin {
        None => None,
        Some(s) => {
            let parts: Vec<&str> = s.split(',').map(str::trim).collect();
            match parts.as_slice() {
                [x, y] => Some((
                    x.parse().map_err(|_| usage(format!("--origin: bad x {x:?}")))?,
                    y.parse().map_err(|_| usage(format!("--origin: bad y {y:?}")))?,
                )),
                _ => return Err(usage(format!("--origin expects X,Y, got {s:?}"))),
            }
        }
    };
    Ok(Overrides {
        res: g.res,
        base_edge: g.base_edge,
        rotation_sign: g.rotation_sign,
        origin,
        threads: g.threads,
        ..Default::default()
    })
}

pub fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.global.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    let mut flags = overrides(&cli.global)?;
    match &cli.command {
        Command::Hexify(a) => {
            flags.chunk_width = a.chunk_width;
            flags.halo = a.halo;
            flags.min_coverage = a.min_coverage;
        }
        Command::Apply(a) => flags.min_coverage = a.min_coverage,
        _ => {}
    }
    let cfg = RunConfig::resolve(&file, &flags, env_threads()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| anyhow!("building thread pool: {e}"))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Hexify(a) => hexify(a, cfg),
        Command::OverlayMap(a) => overlay_map(a, cfg),
        Command::Apply(a) => apply(a, cfg),
        Command::Ceem(a) => ceem(a),
        Command::Mask(a) => mask(a),
        Command::Classify(a) => classify(a),
        Command::Cluster(a) => cluster(a),
        Command::Pca(a) => pca(a),
        Command::Crosswalk(a) => crosswalk(a, cfg),
        Command::Aggregate(a) => aggregate(a),
        Command::Catalog(c) => catalog_cmd(c),
        Command::Render(a) => render(a),
    }
}

enum Input {
    Raster(RasterGrid),
    Features(FeatureSet),
    Points(hexposome::ingest::Table),
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn load_input(path: &Path, src: &SourceArgs, allow_points: bool) -> Result<Input> {
    match extension(path).as_str() {
        "asc" => Ok(Input::Raster(read_ascii_grid(path)?)),
        "geojson" | "json" => Ok(Input::Features(read_geojson_polygons(path)?)),
        "csv" if allow_points => {
            let field = src.field.as_deref().unwrap_or("value");
            let schema = Schema::new(&[
                (src.x.as_str(), ColumnKind::Number),
                (src.y.as_str(), ColumnKind::Number),
                (field, ColumnKind::Number),
            ]);
            Ok(Input::Points(read_csv(path, &schema)?))
        }
        other => Err(usage(format!(
            "{}: unsupported input type {other:?} (expected .asc, .geojson{})",
            path.display(),
            if allow_points { " or .csv" } else { "" }
        ))),
    }
}

fn with_source<R>(input: &Input, src: &SourceArgs, f: impl FnOnce(&Source<'_>) -> Result<R>) -> Result<R> {
    match input {
        Input::Raster(g) => f(&Source::Raster(g)),
        Input::Features(set) => {
            let field = src
                .field
                .as_deref()
                .ok_or_else(|| usage("polygon input needs --field naming the value property"))?;
            f(&Source::Features { set, field })
        }
        Input::Points(t) => {
            let field = src.field.as_deref().unwrap_or("value");
            let pts = points_from_table(t, &src.x, &src.y, field)?;
            f(&Source::Points(&pts))
        }
    }
}

fn var_name(var: &Option<String>, src: &SourceArgs) -> String {
    var.clone().or_else(|| src.field.clone()).unwrap_or_else(|| "value".into())
}

fn finish_frame(mut frame: HexFrame, period: &Option<String>, out: &Path) -> Result<()> {
    if let Some(p) = period {
        frame.set_period(p)?;
    }
    write_hexframe(out, &frame)?;
    eprintln!("wrote {} rows to {}", frame.len(), out.display());
    Ok(())
}

fn parse_semantics(s: &str) -> Result<Semantics> {
    s.parse().map_err(|e: convert::ConvertError| usage(e.to_string()))
}

fn hexify(a: &HexifyArgs, cfg: &RunConfig) -> Result<()> {
    let strategy = match a.strategy {
        StrategyArg::Centroid => Strategy::Centroid(
            a.aggregation
                .parse::<Aggregation>()
                .map_err(|e| usage(e.to_string()))?,
        ),
        StrategyArg::Polyfill => Strategy::Polyfill,
        StrategyArg::Overlay => Strategy::Overlay(parse_semantics(&a.semantics)?),
    };
    let input = load_input(&a.input, &a.source, true)?;
    let var = var_name(&a.var, &a.source);
    let frame = with_source(&input, &a.source, |src| {
        let frame = match (cfg.chunk_width, strategy) {
            (Some(w), _) => {
                let mut spec = ChunkSpec::new(w);
                if let Some(h) = cfg.halo {
                    spec = spec.with_halo(h);
                }
                chunked_convert(src, cfg.res, &cfg.grid, strategy, &spec, &var)?
            }
            (None, Strategy::Overlay(sem)) => {
                let map = build_overlay_map(&OverlaySources::try_from(src)?, cfg.res, &cfg.grid)?;
                apply_overlay_with(&map, &source_values(src, sem)?, sem, &var, cfg.min_coverage)?
            }
            (None, s) => convert::convert(src, cfg.res, &cfg.grid, s, &var)?,
        };
        Ok(frame)
    })?;
    finish_frame(frame, &a.period, &a.output)
}

fn overlay_map(a: &OverlayMapArgs, cfg: &RunConfig) -> Result<()> {
    let none = SourceArgs {
        field: None,
        x: "x".into(),
        y: "y".into(),
    };
    let map = match load_input(&a.input, &none, false)? {
        Input::Raster(g) => build_overlay_map(&OverlaySources::Raster(&g), cfg.res, &cfg.grid)?,
        Input::Features(f) => build_overlay_map(&OverlaySources::Features(&f), cfg.res, &cfg.grid)?,
        Input::Points(_) => unreachable!("points are rejected by load_input"),
    };
    map.write(&a.output)?;
    eprintln!(
        "wrote {} fragments from {} sources to {}",
        map.records.len(),
        map.source_count,
        a.output.display()
    );
    Ok(())
}

fn apply(a: &ApplyArgs, cfg: &RunConfig) -> Result<()> {
    let sem = parse_semantics(&a.semantics)?;
    let map = OverlayMap::read(&a.map)?;
    let expected = cfg.fingerprint();
    if map.grid != expected {
        return Err(convert::ConvertError::GridMismatch {
            expected: map.grid,
            found: expected,
        }
        .into());
    }
    let input = load_input(&a.input, &a.source, false)?;
    let var = var_name(&a.var, &a.source);
    let frame = with_source(&input, &a.source, |src| {
        map.check_sources(&OverlaySources::try_from(src)?)?;
        Ok(apply_overlay_with(&map, &source_values(src, sem)?, sem, &var, cfg.min_coverage)?)
    })?;
    finish_frame(frame, &a.period, &a.output)
}

fn ceem(a: &CeemArgs) -> Result<()> {
    let frame = read_hexframe(&a.input)?;
    let limits = Limits::read(&a.limits)?;
    let filter = a
        .filter
        .as_deref()
        .map(CarcinogenFilter::parse)
        .transpose()
        .map_err(|e| usage(format!("--filter: {e}")))?;
    let (out, summary) = ceem_map(&frame, &limits, filter.as_ref())?;
    eprintln!(
        "ceem over {} chemicals ({} filtered out); {} rows without values",
        summary.chemicals.len(),
        summary.filtered_out.len(),
        summary.rows_without_values
    );
    finish_frame(out, &None, &a.output)
}

fn mask(a: &MaskArgs) -> Result<()> {
    let frame = read_hexframe(&a.input)?;
    let pop = read_hexframe(&a.pop)?;
    let out = population_mask(&frame, &pop, &a.pop_column, a.threshold)?;
    eprintln!("kept {} of {} rows", out.len(), frame.len());
    finish_frame(out, &None, &a.output)
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let frame = read_hexframe(&a.input)?;
    let mode = match a.mode {
        ClassifyModeArg::Aqi => ClassifyMode::Aqi,
        ClassifyModeArg::Bivariate => ClassifyMode::Bivariate,
        ClassifyModeArg::Attainment => ClassifyMode::Attainment(a.standard),
    };
    let want = if matches!(mode, ClassifyMode::Bivariate) { 2 } else { 1 };
    if a.columns.len() != want {
        return Err(usage(format!("--columns: {want} column(s) expected for this mode")));
    }
    let cols: Vec<&str> = a.columns.iter().map(String::as_str).collect();
    finish_frame(classify_frame(&frame, &cols, mode)?, &None, &a.output)
}

/// Frame rows as a matrix: the raw values and the values fed to the model.
fn feature_matrix(f: &FeatureArgs, input: &Path) -> Result<(HexFrame, Matrix, Matrix)> {
    let mut frame = read_hexframe(input)?;
    if f.pivot_periods {
        frame = frame.pivot_periods()?;
    }
    let cols: Vec<&str> = if f.columns.is_empty() {
        frame
            .variables()
            .iter()
            .map(String::as_str)
            .filter(|v| !v.starts_with("coverage_"))
            .collect()
    } else {
        f.columns.iter().map(String::as_str).collect()
    };
    let (raw, dropped) = Matrix::from_frame(&frame, &cols)?;
    if dropped > 0 {
        eprintln!("dropped {dropped} rows with missing values");
    }
    let model_input = if f.no_standardize { raw.clone() } else { standardize(&raw)?.0 };
    Ok((frame, raw, model_input))
}

fn cluster(a: &ClusterArgs) -> Result<()> {
    let (frame, raw, mut x) = feature_matrix(&a.features, &a.input)?;
    if a.pca_components.is_some() || a.pca_threshold.is_some() {
        let m = pca_fit(&x)?;
        let k = match (a.pca_components, a.pca_threshold) {
            (Some(k), _) => k,
            (None, Some(t)) => pca_select(&m.explained_variance_ratio, PcaSelect::Threshold(t))?,
            (None, None) => unreachable!(),
        };
        x = pca_transform(&m, &x, k)?;
        eprintln!("clustering on {k} principal components");
    }
    let (model, scores) = match (a.min_cluster_size, a.min_samples) {
        (Some(mcs), Some(ms)) => (hdbscan_fit(&x, mcs, ms)?, None),
        _ => {
            let lattice: &[usize] = if a.lattice.is_empty() { &DEFAULT_LATTICE } else { &a.lattice };
            let g = grid_search_hdbscan(&x, lattice)?;
            eprintln!(
                "best min_cluster_size={} min_samples={} silhouette={:.4}",
                g.min_cluster_size, g.min_samples, g.score
            );
            (g.model, Some(g.scores))
        }
    };
    eprintln!("{} clusters, {} noise rows", model.n_clusters(), model.noise_count());
    if let Some(p) = &a.summary {
        write_text(p, &summary_csv(&raw, &cluster_summary(&raw, &model.labels)?))?;
    }
    if let Some(p) = &a.tree {
        write_text(p, &model.tree_csv())?;
    }
    if let Some(p) = &a.scores {
        let Some(scores) = scores else {
            return Err(usage("--scores needs a parameter search (omit --min-cluster-size)"));
        };
        let mut out = String::from("min_cluster_size,min_samples,silhouette\n");
        for (mcs, ms, s) in scores {
            let _ = writeln!(out, "{mcs},{ms},{}", s.map_or("NA".into(), format_f64));
        }
        write_text(p, &out)?;
    }
    finish_frame(labels_frame(&x, &model.labels, *frame.grid())?, &None, &a.output)
}

fn pca(a: &PcaArgs) -> Result<()> {
    let (frame, _, x) = feature_matrix(&a.features, &a.input)?;
    let m = pca_fit(&x)?;
    let k = match (a.components, a.threshold, a.elbow) {
        (Some(k), _, _) => k,
        (None, _, true) => pca_select(&m.explained_variance_ratio, PcaSelect::Elbow)?,
        (None, t, false) => pca_select(&m.explained_variance_ratio, PcaSelect::Threshold(t.unwrap_or(0.9)))?,
    };
    if let Some(p) = &a.variance {
        let mut out = String::from("component,eigenvalue,explained_variance_ratio\n");
        for (i, (e, r)) in m.eigenvalues.iter().zip(&m.explained_variance_ratio).enumerate() {
            let _ = writeln!(out, "PC{},{},{}", i + 1, format_f64(*e), format_f64(*r));
        }
        write_text(p, &out)?;
    }
    eprintln!("keeping {k} of {} components", m.eigenvalues.len());
    finish_frame(pca_transform(&m, &x, k)?.to_frame(*frame.grid())?, &None, &a.output)
}

fn crosswalk(a: &CrosswalkArgs, cfg: &RunConfig) -> Result<()> {
    let zones = read_geojson_polygons(&a.zones)?;
    let mode = match a.mode {
        CrosswalkModeArg::Fractional => CrosswalkMode::Fractional,
        CrosswalkModeArg::Dominant => CrosswalkMode::Dominant,
    };
    let x = build_crosswalk(&zones, &a.id_field, cfg.res, &cfg.grid, mode)?;
    x.write(&a.output)?;
    eprintln!("wrote {} crosswalk records to {}", x.records.len(), a.output.display());
    Ok(())
}

fn aggregate(a: &AggregateArgs) -> Result<()> {
    let frame = read_hexframe(&a.input)?;
    let x = Crosswalk::read(&a.crosswalk)?;
    let mut stats = ZoneStats { mean: false, std: false };
    for s in &a.stats {
        match s.as_str() {
            "mean" => stats.mean = true,
            "std" => stats.std = true,
            other => return Err(usage(format!("--stats: unknown statistic {other:?} (expected mean, std)"))),
        }
    }
    let vars: Vec<&str> = a.vars.iter().map(String::as_str).collect();
    let t = aggregate_to_zone(&frame, &x, &vars, stats)?;
    t.write(&a.output)?;
    eprintln!("wrote {} zone rows to {}", t.rows.len(), a.output.display());
    Ok(())
}

fn catalog_cmd(c: &CatalogCommand) -> Result<()> {
    match c {
        CatalogCommand::Register(a) => {
            let data_type: DataType = a.data_type.parse().map_err(|e: String| usage(e))?;
            let temporal_extent = match a.period.split_once('/') {
                None if a.period == "-" => TemporalExtent::None,
                Some((s, e)) => TemporalExtent::Range {
                    start: s.to_string(),
                    end: e.to_string(),
                },
                None => return Err(usage(format!("--period expects START/END or -, got {:?}", a.period))),
            };
            let [x0, y0, x1, y1] = a.extent[..] else {
                return Err(usage(format!("--extent expects 4 numbers, got {}", a.extent.len())));
            };
            let checksum = match (&a.file, &a.checksum) {
                (Some(p), _) => catalog::checksum_file(p)?,
                (None, Some(c)) => c.clone(),
                (None, None) => String::new(),
            };
            let record = DatasetRecord {
                id: a.id.clone(),
                name: a.name.clone(),
                data_type,
                format: a.format.clone(),
                spatial_extent: [x0, y0, x1, y1],
                temporal_extent,
                native_resolution: a.resolution.clone(),
                source_url: a.source_url.clone(),
                license: a.license.clone(),
                ingestion_code_ref: a.code_ref.clone(),
                checksum,
                created: catalog::now_timestamp(),
            };
            catalog::register(&record, &a.manifest)?;
            eprintln!("registered {} in {}", record.id, a.manifest.display());
            Ok(())
        }
        CatalogCommand::Query(a) => {
            let preds = a
                .predicates
                .iter()
                .map(|p| Predicate::parse(p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| usage(e.to_string()))?;
            let found = catalog::query(&a.manifest, &preds)?;
            write_text(&a.output, &catalog::manifest_string(&found))?;
            eprintln!("{} matching records", found.len());
            Ok(())
        }
        CatalogCommand::Validate(a) => {
            let mut files = std::collections::BTreeMap::new();
            for f in &a.file {
                let (id, path) = f
                    .split_once('=')
                    .ok_or_else(|| usage(format!("--file expects ID=PATH, got {f:?}")))?;
                files.insert(id.to_string(), PathBuf::from(path));
            }
            let records = catalog::read_manifest(&a.manifest)?;
            let mut bad = 0;
            for r in &records {
                let problems = catalog::validate(r, files.get(&r.id).map(PathBuf::as_path));
                for p in &problems {
                    eprintln!("{}: {p}", r.id);
                }
                bad += usize::from(!problems.is_empty());
            }
            if let Some(id) = files.keys().find(|id| !records.iter().any(|r| &r.id == *id)) {
                return Err(usage(format!("--file names unknown dataset {id:?}")));
            }
            anyhow::ensure!(bad == 0, "{bad} of {} records invalid", records.len());
            eprintln!("{} records valid", records.len());
            Ok(())
        }
    }
}

fn render(a: &RenderArgs) -> Result<()> {
    let one = |mode: &str| -> Result<String> {
        match a.columns.as_slice() {
            [c] => Ok(c.clone()),
            _ => Err(usage(format!("--columns: {mode} mode maps exactly one column"))),
        }
    };
    let classing = match a.mode {
        RenderModeArg::Quantile => Classing::Quantile {
            column: one("quantile")?,
            classes: a.classes,
        },
        RenderModeArg::Ceem => Classing::CeemThreshold {
            column: one("ceem")?,
            threshold: a.threshold,
        },
        RenderModeArg::Bivariate => match a.columns.as_slice() {
            [s, t] => Classing::Bivariate {
                smoke: s.clone(),
                total: t.clone(),
            },
            _ => return Err(usage("--columns: bivariate mode needs smoke,total")),
        },
    };
    let mut frame = read_hexframe(&a.input)?;
    if let Some(p) = &a.period {
        frame = frame.filter_period(p);
    }
    let palette = (!a.palette.is_empty()).then_some(a.palette.as_slice());
    let svg = render_svg(&frame, &classing, palette)?;
    write_text(&a.output, &svg)?;
    eprintln!("rendered {} hexes to {}", frame.len(), a.output.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| anyhow!("{}: {e}", path.display()))
}
