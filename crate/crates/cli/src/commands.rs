use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use cratos::clustering::{extract_features, hierarchical_fit, ClusterTree};
use cratos::datagen::GeneratorConfig;
use cratos::detect::run_pipeline;
use cratos::eval::{clustering_report, pass_rate, series_passes, ClusteringReport};
use cratos::evolve::{self as evo, cluster_seed, EvolutionConfig, EvolvedPipeline, GeneSpace, MutationRule};
use cratos::io::{load_dataset, load_series, read_json, save_dataset, write_json, write_text};
use cratos::{ClusterCode, LabeledDataset};
use serde::{Deserialize, Serialize};

use crate::{ClusterArgs, DetectArgs, EvalArgs, EvolveArgs, FeaturesArgs, GenArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(cratos::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<cratos::Error> for CliError {
    fn from(e: cratos::Error) -> Self {
        CliError::Data(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Provenance of an `evolve` run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub dataset: PathBuf,
    pub model: PathBuf,
    /// Genome file name per cluster code, relative to the run directory.
    pub genomes: BTreeMap<ClusterCode, PathBuf>,
    pub version: String,
}

fn genome_file(code: ClusterCode) -> String {
    format!("genome_{code}.json")
}

fn parse_range(text: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Usage(format!("--anomalies expects N or MIN-MAX, got {text:?}"));
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = text.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn gen(args: &GenArgs, seed: u64) -> Result<()> {
    let mut cfg: GeneratorConfig = match &args.spec {
        Some(path) => read_json(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(range) = &args.anomalies {
        cfg.anomalies = parse_range(range)?;
    }
    if args.per_cluster == 0 {
        return Err(CliError::Usage("--per-cluster must be at least 1".into()));
    }
    let dataset = cfg.generate(args.per_cluster, args.length, seed)?;
    let manifest = save_dataset(&dataset, &args.out)?;
    eprintln!("wrote {} series to {}", dataset.len(), manifest.display());
    Ok(())
}

fn predict_codes(tree: &ClusterTree, dataset: &LabeledDataset) -> Result<Vec<ClusterCode>> {
    if dataset.common_length() != tree.training_length {
        return Err(cratos::Error::LengthMismatch {
            first: "cluster tree training data".into(),
            first_len: tree.training_length,
            second: "dataset".into(),
            second_len: dataset.common_length(),
        }
        .into());
    }
    let feats = extract_features(dataset, &tree.features)?;
    Ok(feats.iter().map(|f| tree.predict_features(f)).collect::<cratos::Result<_>>()?)
}

fn assignments_csv(dataset: &LabeledDataset, codes: &[ClusterCode]) -> String {
    let mut out = String::from("name,code\n");
    for (e, c) in dataset.entries().iter().zip(codes) {
        let _ = writeln!(out, "{},{c}", e.name);
    }
    out
}

pub fn cluster(args: &ClusterArgs, seed: u64) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let (tree, codes) = hierarchical_fit(&dataset, seed)?;
    tree.save(&args.out.join("tree.json"))?;
    write_text(&args.out.join("assignments.csv"), &assignments_csv(&dataset, &codes))?;
    for code in ClusterCode::all() {
        println!("{code} {}", codes.iter().filter(|&&c| c == code).count());
    }
    Ok(())
}

fn evolve_cmd_config(args: &EvolveArgs, seed: u64) -> Result<EvolutionConfig> {
    let survivors = args.survivors.unwrap_or((args.population / 5).max(1));
    let offspring = match args.offspring {
        Some(o) => o,
        None => args.population.checked_sub(survivors).ok_or_else(|| {
            CliError::Usage(format!(
                "--survivors ({survivors}) exceeds --population ({})",
                args.population
            ))
        })?,
    };
    let cfg = EvolutionConfig {
        population: args.population,
        survivors,
        offspring,
        generations: args.generations,
        seed,
        delay_tolerance: args.delay_tolerance,
        workers: args.workers,
        meta_rate: args.meta_rate,
        rule: if args.conventional_mutation {
            MutationRule::Conventional
        } else {
            MutationRule::Literal
        },
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(args.meta_rate > 0.0 && args.meta_rate.is_finite()) {
        return Err(CliError::Usage("--meta-rate must be positive".into()));
    }
    Ok(cfg)
}

pub fn evolve(args: &EvolveArgs, seed: u64) -> Result<()> {
    let cfg = evolve_cmd_config(args, seed)?;
    let targets: Option<ClusterCode> = if args.cluster.eq_ignore_ascii_case("all") {
        None
    } else {
        Some(
            args.cluster
                .parse()
                .map_err(|e: cratos::Error| CliError::Usage(e.to_string()))?,
        )
    };
    let dataset = load_dataset(&args.dataset)?;
    let tree = ClusterTree::load(&args.model)?;
    let codes = predict_codes(&tree, &dataset)?;
    let space = GeneSpace::pipeline(dataset.common_length(), cfg.meta_rate, cfg.rule)?;

    let wanted: Vec<ClusterCode> = ClusterCode::all()
        .into_iter()
        .filter(|c| targets.is_none_or(|t| t == *c))
        .filter(|c| codes.contains(c))
        .collect();
    if let Some(t) = targets {
        if wanted.is_empty() {
            return Err(cratos::Error::InsufficientData(format!("no series of the dataset fall into cluster {t}")).into());
        }
    }
    let mut genomes = BTreeMap::new();
    for code in wanted {
        let members = dataset.subset(|i, _| codes[i] == code)?;
        let cluster_cfg = EvolutionConfig {
            seed: cluster_seed(seed, code),
            ..cfg.clone()
        };
        let outcome = evo::evolve(&cluster_cfg, &members)?;
        let result = EvolvedPipeline::new(code, &outcome, &space)?;
        result.save(&args.out.join(genome_file(code)))?;
        evo::save_history(&args.out.join(format!("history_{code}.csv")), &outcome.history)?;
        println!("{code} {}/{}", result.fitness, result.dataset_size);
        genomes.insert(code, PathBuf::from(genome_file(code)));
    }
    write_json(
        &args.out.join("run.json"),
        &RunManifest {
            seed,
            dataset: args.dataset.clone(),
            model: args.model.clone(),
            genomes,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )?;
    Ok(())
}

fn load_genome(dir: &Path, code: ClusterCode) -> Result<Option<EvolvedPipeline>> {
    let path = dir.join(genome_file(code));
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(EvolvedPipeline::load(&path)?))
}

pub fn detect(args: &DetectArgs) -> Result<()> {
    let series = load_series(&args.series)?;
    let tree = ClusterTree::load(&args.model)?;
    let code = tree.predict(&series)?;
    let genome = load_genome(&args.genomes, code)?.ok_or_else(|| {
        cratos::Error::InsufficientData(format!(
            "no {} in {} for cluster {code}",
            genome_file(code),
            args.genomes.display()
        ))
    })?;
    let result = run_pipeline(&genome.pipeline, &series)?;
    println!("{code}");
    match &args.out {
        Some(path) => result.save_csv(path)?,
        None => print!("{}", result.to_csv()),
    }
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct ClusterPass {
    total: usize,
    passed: usize,
}

#[derive(Debug, Serialize)]
struct DetectionReport {
    delay_tolerance: usize,
    total: usize,
    passed: usize,
    pass_rate: f64,
    per_cluster: BTreeMap<ClusterCode, ClusterPass>,
    /// Clusters that received series but have no genome; their series fail.
    missing_genomes: Vec<ClusterCode>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    clustering: ClusteringReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<DetectionReport>,
}

fn read_predictions(path: &Path, dataset: &LabeledDataset) -> Result<Vec<ClusterCode>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        cratos::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    })?;
    let mut by_name = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "name,code") {
            continue;
        }
        let (name, code) = line.rsplit_once(',').ok_or_else(|| cratos::Error::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            message: format!("expected \"name,code\", found {line:?}"),
        })?;
        by_name.insert(name.to_string(), code.parse::<ClusterCode>()?);
    }
    dataset
        .entries()
        .iter()
        .map(|e| {
            by_name.get(&e.name).copied().ok_or_else(|| {
                cratos::Error::InsufficientData(format!("{} has no prediction for {}", path.display(), e.name)).into()
            })
        })
        .collect()
}

fn detection_report(
    dataset: &LabeledDataset,
    codes: &[ClusterCode],
    dir: &Path,
    delay_tolerance: usize,
) -> Result<DetectionReport> {
    let mut genomes = BTreeMap::new();
    let mut per_cluster: BTreeMap<ClusterCode, ClusterPass> = BTreeMap::new();
    let mut missing = Vec::new();
    for (entry, &code) in dataset.entries().iter().zip(codes) {
        let labels = entry.labels.as_ref().ok_or_else(|| {
            cratos::Error::InvalidLabels(format!("{} has no anomaly labels", entry.name))
        })?;
        if !genomes.contains_key(&code) {
            genomes.insert(code, load_genome(dir, code)?);
        }
        let stats = per_cluster.entry(code).or_default();
        stats.total += 1;
        match &genomes[&code] {
            Some(g) => {
                let result = run_pipeline(&g.pipeline, &entry.series)?;
                if series_passes(&result.anomalous_indices, labels, delay_tolerance) {
                    stats.passed += 1;
                }
            }
            None if !missing.contains(&code) => missing.push(code),
            None => {}
        }
    }
    let total = dataset.len();
    let passed = per_cluster.values().map(|c| c.passed).sum();
    Ok(DetectionReport {
        delay_tolerance,
        total,
        passed,
        pass_rate: pass_rate(passed, total)?,
        per_cluster,
        missing_genomes: missing,
    })
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let truth: Vec<ClusterCode> = dataset
        .entries()
        .iter()
        .map(|e| {
            e.truth.ok_or_else(|| {
                CliError::Data(cratos::Error::InsufficientData(format!("{} has no truth code", e.name)))
            })
        })
        .collect::<Result<_>>()?;
    let (codes, tree) = match (&args.model, &args.predictions) {
        (Some(model), _) => {
            let tree = ClusterTree::load(model)?;
            (predict_codes(&tree, &dataset)?, Some(tree))
        }
        (None, Some(pred)) => (read_predictions(pred, &dataset)?, None),
        (None, None) => return Err(CliError::Usage("one of --model or --predictions is required".into())),
    };
    let clustering = clustering_report(&codes, &truth)?;
    let detection = match (&args.genomes, tree) {
        (Some(dir), Some(_)) => Some(detection_report(&dataset, &codes, dir, args.delay_tolerance)?),
        _ => None,
    };
    let mut table = clustering.to_table();
    if let Some(d) = &detection {
        let _ = writeln!(table);
        let _ = writeln!(table, "{:<10}{:>8}{:>8}{:>11}", "cluster", "passed", "total", "pass_rate");
        for (code, c) in &d.per_cluster {
            let rate = c.passed as f64 / c.total as f64;
            let _ = writeln!(table, "{:<10}{:>8}{:>8}{:>11.4}", code.to_string(), c.passed, c.total, rate);
        }
        let _ = writeln!(table, "{:<10}{:>8}{:>8}{:>11.4}", "all", d.passed, d.total, d.pass_rate);
    }
    let report = EvalReport { clustering, detection };
    write_json(&args.out.join("report.json"), &report)?;
    write_text(&args.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn features(args: &FeaturesArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let cfg = cratos::features::FeatureConfig::default();
    let feats = extract_features(&dataset, &cfg)?;
    let mut files = [String::new(), String::new(), String::new()];
    for (entry, f) in dataset.entries().iter().zip(&feats) {
        let rows = [
            &f.section_sign.values,
            &f.swing.values,
            &f.diff_thres.features.values,
        ];
        for (out, row) in files.iter_mut().zip(rows) {
            out.push_str(&entry.name);
            for v in row.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    for (name, text) in ["section_sign", "swing", "diff_thres"].iter().zip(&files) {
        write_text(&args.out.join(format!("{name}.csv")), text)?;
    }
    Ok(())
}
