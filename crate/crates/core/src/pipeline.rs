//! End-to-end commands: ingest → filter → normalize → transform → compress →
//! cluster → cut, plus the validation, embedding and synthesis steps.
//!
//! Every command assembles its outputs in memory and only then writes them,
//! each through a temporary file renamed into place, so a failing run leaves
//! nothing behind.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clustering::{cut, standardize_columns, ward_linkage, ClusterAssignment, Dendrogram};
use crate::embedding::{classical_mds, distances_from_csv, euclidean_distances, Embedding2D};
use crate::ingestion::{
    filter_complete, load_readings_with_topology, normalize, FeederDataset, PeriodId, Topology,
};
use crate::spectral::{compress, dft_real, CompressionMask, FeatureMatrix};
use crate::synth::{generate_study, SynthConfig};
use crate::validation::{stability, transformer_purity, PurityReport, StabilityReport};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 3;

/// Inputs and knobs shared by `cluster` and `report`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub readings: PathBuf,
    pub topology: PathBuf,
    pub feeder_id: String,
    pub periods: Vec<PeriodId>,
    /// `None` selects the six daily harmonics for each period's length.
    pub mask: Option<CompressionMask>,
    pub k: usize,
    pub standardize: bool,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn check(&self, expected_periods: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if self.periods.len() != expected_periods {
            return Err(Error::Parameter(format!(
                "expected {expected_periods} period(s), got {}",
                self.periods.len()
            )));
        }
        for p in [&self.readings, &self.topology] {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}

/// Files produced by a command, keyed by path relative to the output directory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, rel: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.insert(rel.into(), contents.into());
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.keys().map(PathBuf::as_path)
    }

    pub fn get(&self, rel: impl AsRef<Path>) -> Option<&[u8]> {
        self.files.get(rel.as_ref()).map(Vec::as_slice)
    }

    /// Writes every file via a sibling temporary and an atomic rename.
    pub fn commit(&self, out_dir: &Path) -> Result<()> {
        for (rel, contents) in &self.files {
            let target = out_dir.join(rel);
            let dir = target.parent().unwrap_or(out_dir);
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
            tmp.write_all(contents).map_err(|e| Error::io(&target, e))?;
            tmp.persist(&target)
                .map_err(|e| Error::io(&target, e.error))?;
        }
        Ok(())
    }
}

/// Clustering of one feeder-period.
#[derive(Debug, Clone)]
pub struct PeriodResult {
    pub period: PeriodId,
    pub mask: CompressionMask,
    pub features: FeatureMatrix,
    pub dendrogram: Dendrogram,
    pub assignment: ClusterAssignment,
}

/// Runs normalize → transform → compress → Ward → cut on a dataset whose
/// meters are all complete.
pub fn cluster_dataset(
    dataset: &FeederDataset,
    mask: Option<&CompressionMask>,
    k: usize,
    standardize: bool,
) -> Result<PeriodResult> {
    let n = dataset.meters.len();
    if n == 0 {
        return Err(Error::NoCompleteMeters {
            feeder_id: dataset.feeder_id.clone(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "k = {k} is outside 1..={n} for {n} complete meters"
        )));
    }
    let mask = match mask {
        Some(m) => m.clone(),
        None => CompressionMask::daily_harmonics(dataset.period.hours())?,
    };

    let mut ids = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n);
    for series in dataset.complete_series()? {
        let normalized = normalize(&series)?;
        spectra.push(compress(&dft_real(&normalized.values)?, &mask)?);
        ids.push(series.meter_id);
    }
    let features = FeatureMatrix::build(ids.clone(), &spectra)?;
    let mut rows = features.rows.clone();
    if standardize {
        standardize_columns(&mut rows);
    }

    let (dendrogram, mut assignment) = if n == 1 {
        let d = Dendrogram {
            n_leaves: 1,
            merges: Vec::new(),
            leaf_order: ids,
        };
        let a = cut(&d, 1)?;
        (d, a)
    } else {
        let d = ward_linkage(ids, &rows)?;
        let a = cut(&d, k)?;
        (d, a)
    };
    assignment.period_id = dataset.period.to_string();

    Ok(PeriodResult {
        period: dataset.period,
        mask,
        features,
        dendrogram,
        assignment,
    })
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct PeriodRecord {
    period: String,
    mask: String,
    complete_meters: usize,
    dropped_meters: Vec<String>,
    cluster_sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    feeder_id: String,
    periods: Vec<String>,
    mask: String,
    k: usize,
    standardize: bool,
    significant_digits: usize,
    inputs: BTreeMap<&'static str, InputRecord>,
    results: Vec<PeriodRecord>,
}

fn input_record(path: &Path) -> Result<InputRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputRecord {
        path: path.display().to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("manifest serializes") + "\n"
}

struct Loaded {
    topology: Topology,
    raw: Vec<FeederDataset>,
    filtered: Vec<FeederDataset>,
}

fn load(config: &RunConfig) -> Result<Loaded> {
    let topology = Topology::load(&config.topology)?;
    let raw = config
        .periods
        .iter()
        .map(|&p| {
            load_readings_with_topology(&config.readings, topology.clone(), &config.feeder_id, p)
        })
        .collect::<Result<Vec<_>>>()?;
    let filtered = filter_complete(&raw);
    if filtered.iter().any(|d| d.meters.is_empty()) {
        return Err(Error::NoCompleteMeters {
            feeder_id: config.feeder_id.clone(),
        });
    }
    Ok(Loaded {
        topology,
        raw,
        filtered,
    })
}

fn manifest(
    command: &'static str,
    config: &RunConfig,
    loaded: &Loaded,
    results: &[PeriodResult],
) -> Result<String> {
    let mut inputs = BTreeMap::new();
    inputs.insert("readings", input_record(&config.readings)?);
    inputs.insert("topology", input_record(&config.topology)?);
    let records = results
        .iter()
        .zip(&loaded.raw)
        .map(|(r, raw)| PeriodRecord {
            period: r.period.to_string(),
            mask: r.mask.to_string(),
            complete_meters: r.assignment.len(),
            dropped_meters: raw
                .meter_ids()
                .filter(|m| r.assignment.get(m).is_none())
                .map(str::to_string)
                .collect(),
            cluster_sizes: r
                .assignment
                .cluster_sizes()
                .into_iter()
                .map(|(l, s)| (l.to_string(), s))
                .collect(),
        })
        .collect();
    Ok(to_json(&Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        feeder_id: config.feeder_id.clone(),
        periods: config.periods.iter().map(PeriodId::to_string).collect(),
        mask: config
            .mask
            .as_ref()
            .map_or_else(|| "daily".to_string(), CompressionMask::to_string),
        k: config.k,
        standardize: config.standardize,
        significant_digits: crate::format::SIGNIFICANT_DIGITS,
        inputs,
        results: records,
    }))
}

fn add_period_files(artifacts: &mut Artifacts, prefix: &Path, r: &PeriodResult) {
    artifacts.add(prefix.join("assignment.csv"), r.assignment.to_csv());
    artifacts.add(prefix.join("dendrogram.csv"), r.dendrogram.to_csv());
    artifacts.add(prefix.join("features.csv"), r.features.to_csv());
}

/// `cluster`: one feeder, one period.
pub fn cmd_cluster(config: &RunConfig) -> Result<(Artifacts, PeriodResult)> {
    config.check(1)?;
    let loaded = load(config)?;
    let result = cluster_dataset(
        &loaded.filtered[0],
        config.mask.as_ref(),
        config.k,
        config.standardize,
    )?;
    let mut artifacts = Artifacts::default();
    add_period_files(&mut artifacts, Path::new(""), &result);
    artifacts.add(
        "manifest.json",
        manifest("cluster", config, &loaded, std::slice::from_ref(&result))?,
    );
    artifacts.commit(&config.out_dir)?;
    Ok((artifacts, result))
}

/// Outcome of a two-period study.
#[derive(Debug, Clone)]
pub struct Report {
    pub periods: Vec<PeriodResult>,
    pub purity: Vec<PurityReport>,
    pub stability: StabilityReport,
    pub embeddings: Vec<Embedding2D>,
}

/// Builds the full two-period study without touching the filesystem beyond
/// reading inputs.
pub fn build_report(config: &RunConfig) -> Result<(Artifacts, Report)> {
    config.check(2)?;
    let loaded = load(config)?;
    let periods = loaded
        .filtered
        .iter()
        .map(|ds| cluster_dataset(ds, config.mask.as_ref(), config.k, config.standardize))
        .collect::<Result<Vec<_>>>()?;
    let purity = periods
        .iter()
        .map(|r| transformer_purity(&r.assignment, &loaded.topology))
        .collect::<Result<Vec<_>>>()?;
    let stab = stability(&periods[0].assignment, &periods[1].assignment)?;
    let embeddings = periods
        .iter()
        .map(|r| {
            classical_mds(
                &euclidean_distances(&r.features.rows)?,
                &r.features.meter_ids,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut artifacts = Artifacts::default();
    for ((r, p), e) in periods.iter().zip(&purity).zip(&embeddings) {
        let dir = PathBuf::from(r.period.to_string());
        add_period_files(&mut artifacts, &dir, r);
        artifacts.add(dir.join("coordinates.csv"), e.to_csv(Some(&r.assignment)));
        artifacts.add(dir.join("purity.json"), p.to_json());
        artifacts.add(dir.join("purity.txt"), p.to_text());
    }
    artifacts.add("stability.json", stab.to_json());
    artifacts.add("stability.txt", stab.to_text());
    artifacts.add(
        "manifest.json",
        manifest("report", config, &loaded, &periods)?,
    );

    Ok((
        artifacts,
        Report {
            periods,
            purity,
            stability: stab,
            embeddings,
        },
    ))
}

/// `report`: both periods clustered, validated and embedded in one go.
pub fn cmd_report(config: &RunConfig) -> Result<(Artifacts, Report)> {
    let (artifacts, report) = build_report(config)?;
    artifacts.commit(&config.out_dir)?;
    Ok((artifacts, report))
}

/// Name used for an assignment file in reports: its stem, or the parent
/// directory's name for the generic `assignment.csv`.
fn assignment_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if stem == "assignment" {
        if let Some(parent) = path.parent().and_then(Path::file_name) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

pub fn read_assignment(path: &Path) -> Result<ClusterAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ClusterAssignment::from_csv(&text, assignment_name(path)).map_err(|e| relocate(e, path))
}

fn relocate(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    }
}

/// `validate`: purity for each assignment, stability when there are two.
pub fn cmd_validate(
    assignments: &[PathBuf],
    topology: &Path,
    out_dir: &Path,
) -> Result<(Artifacts, Vec<PurityReport>, Option<StabilityReport>)> {
    if assignments.is_empty() || assignments.len() > 2 {
        return Err(Error::Parameter(format!(
            "expected one or two assignment files, got {}",
            assignments.len()
        )));
    }
    let topology = Topology::load(topology)?;
    let parsed = assignments
        .iter()
        .map(|p| read_assignment(p))
        .collect::<Result<Vec<_>>>()?;
    let purity = parsed
        .iter()
        .map(|a| transformer_purity(a, &topology))
        .collect::<Result<Vec<_>>>()?;
    let stab = match parsed.as_slice() {
        [a, b] => Some(stability(a, b)?),
        _ => None,
    };

    let mut artifacts = Artifacts::default();
    for (i, p) in purity.iter().enumerate() {
        artifacts.add(format!("purity_{}.json", i + 1), p.to_json());
        artifacts.add(format!("purity_{}.txt", i + 1), p.to_text());
    }
    if let Some(s) = &stab {
        artifacts.add("stability.json", s.to_json());
        artifacts.add("stability.txt", s.to_text());
    }
    artifacts.commit(out_dir)?;
    Ok((artifacts, purity, stab))
}

/// Where `embed` takes its geometry from.
#[derive(Debug, Clone)]
pub enum EmbedInput {
    Features(PathBuf),
    Distances(PathBuf),
}

/// `embed`: 2D coordinates for plotting.
pub fn cmd_embed(
    input: &EmbedInput,
    assignment: Option<&Path>,
    out_dir: &Path,
) -> Result<(Artifacts, Embedding2D)> {
    let (ids, distances) = match input {
        EmbedInput::Features(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let fm = FeatureMatrix::from_csv(&text).map_err(|e| relocate(e, path))?;
            let d = euclidean_distances(&fm.rows)?;
            (fm.meter_ids, d)
        }
        EmbedInput::Distances(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            distances_from_csv(&text).map_err(|e| relocate(e, path))?
        }
    };
    let assignment = assignment.map(read_assignment).transpose()?;
    let embedding = classical_mds(&distances, &ids)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("coordinates.csv", embedding.to_csv(assignment.as_ref()));
    artifacts.commit(out_dir)?;
    Ok((artifacts, embedding))
}

/// `synth`: readings, topology and ground-truth CSVs for every period.
pub fn cmd_synth(config: &SynthConfig, out_dir: &Path) -> Result<Artifacts> {
    let study = generate_study(config)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("readings.csv", study.readings_csv());
    artifacts.add("topology.csv", study.topology_csv());
    artifacts.add("ground_truth.csv", study.ground_truth_csv());
    artifacts.add(
        "synth_config.toml",
        toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?,
    );
    artifacts.commit(out_dir)?;
    Ok(artifacts)
}
