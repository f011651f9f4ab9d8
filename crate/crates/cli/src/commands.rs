use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use u1sym_core::activation::centered_coords;
use u1sym_core::amf::{load_activation_map, save_activation_map};
use u1sym_core::ann::RpForest;
use u1sym_core::classifier::{evaluate, image_likelihood, BankMeta, MemoryBank};
use u1sym_core::manifest::{
    load_records, read_manifest, write_manifest, LabeledMap, MemoryRecord, Split,
};
use u1sym_core::report::{bundle, write_heatmap};
use u1sym_core::symmetry::{
    aggregate_energy, angular_stats, class_report, conditional_match_distribution, match_histogram,
    match_locations, radial_tangential_variance, write_class_report, MatchSet,
};
use u1sym_core::synth::{lobe_dataset, LobeSpec};
use u1sym_core::trainer::{
    evaluate as evaluate_net, gaussian_blobs, gen_labels, image_grid, label_config_ablation, train,
    AblationConfig, BlobSpec, Dataset, ImageSpec, LabelConfig, LabelKind, NetConfig, ToyNet,
    TrainConfig,
};
use u1sym_core::{Error, Result};

use crate::args::*;

pub const INDEX_FILE: &str = "index.u1ix";
pub const BANK_FILE: &str = "bank.json";

pub fn dispatch(
    cli: &Cli,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<()> {
    let out = cli.out.as_path();
    let mut log = |msg: String| {
        if cli.verbose > 0 {
            let _ = writeln!(stderr, "{msg}");
        }
    };
    match &cli.command {
        Command::Ingest(a) => ingest(a, stdout),
        Command::Index(a) => index(a, out, stdout, &mut log),
        Command::Classify(a) => classify(a, stdout, &mut log),
        Command::Eval(a) => eval(a, out, stdout, &mut log),
        Command::Analyze { what } => analyze(what, out, stdout, &mut log),
        Command::Labels(a) => labels(a, out, stdout),
        Command::Train(a) => train_cmd(a, out, stdout),
        Command::Ablate(a) => ablate(a, out, stdout),
        Command::Report(a) => emit(stdout, &bundle(&a.inputs, out)?),
        Command::Synth(a) => synth(a, out, stdout),
    }
}

fn emit<T: Serialize + ?Sized>(out: &mut dyn Write, value: &T) -> Result<()> {
    out.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn select(records: &[MemoryRecord], splits: &[Split]) -> Vec<MemoryRecord> {
    records
        .iter()
        .filter(|r| splits.contains(&r.split))
        .cloned()
        .collect()
}

/// Memory records: those in `splits`, or every record when none match.
fn memory_records(
    manifest: &Path,
    splits: &[Split],
) -> Result<(Vec<MemoryRecord>, Vec<MemoryRecord>)> {
    let all = read_manifest(manifest)?;
    let mem = select(&all, splits);
    let mem = if mem.is_empty() { all.clone() } else { mem };
    Ok((mem, all))
}

struct Loaded {
    memory: Vec<LabeledMap>,
    queries: Vec<LabeledMap>,
    bank: MemoryBank,
}

fn load_query_setup(a: &QueryArgs, log: &mut dyn FnMut(String)) -> Result<Loaded> {
    let (mem, all) = memory_records(&a.memory.manifest, &a.memory.memory_split)?;
    let memory = load_records(&mem)?;
    let q = select(&all, &a.query_split);
    let queries = if q.is_empty() {
        memory.clone()
    } else {
        load_records(&q)?
    };
    let bank = MemoryBank::from_maps(&memory, a.memory.normalize, a.index.config())?;
    log(format!(
        "memory: {} maps, {} vectors; queries: {}",
        memory.len(),
        bank.len(),
        queries.len()
    ));
    Ok(Loaded {
        memory,
        queries,
        bank,
    })
}

#[derive(Serialize)]
struct IngestSummary {
    records: usize,
    classes: BTreeMap<u32, String>,
    splits: BTreeMap<Split, usize>,
    /// Distinct (H, W, C) shapes.
    shapes: Vec<(usize, usize, usize)>,
    /// Files flagged non-negative that hold negative values.
    nonneg_violations: Vec<String>,
}

fn ingest(a: &IngestArgs, stdout: &mut dyn Write) -> Result<()> {
    let records = read_manifest(&a.manifest)?;
    if records.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    let mut s = IngestSummary {
        records: records.len(),
        classes: BTreeMap::new(),
        splits: BTreeMap::new(),
        shapes: Vec::new(),
        nonneg_violations: Vec::new(),
    };
    for r in &records {
        let map = load_activation_map(&r.path)?;
        s.classes.insert(r.class_id, r.class_name.clone());
        *s.splits.entry(r.split).or_insert(0) += 1;
        let shape = (map.height(), map.width(), map.channels());
        if !s.shapes.contains(&shape) {
            s.shapes.push(shape);
        }
        if map.nonneg() && !map.check_nonneg() {
            s.nonneg_violations.push(r.image_id.clone());
        }
    }
    s.shapes.sort_unstable();
    emit(stdout, &s)?;
    if s.nonneg_violations.is_empty() {
        Ok(())
    } else {
        Err(Error::MalformedMap(format!(
            "{} file(s) flagged non-negative hold negative values",
            s.nonneg_violations.len()
        )))
    }
}

fn index(
    a: &IndexCmd,
    out: &Path,
    stdout: &mut dyn Write,
    log: &mut dyn FnMut(String),
) -> Result<()> {
    let (mem, _) = memory_records(&a.memory.manifest, &a.memory.memory_split)?;
    let maps = load_records(&mem)?;
    let bank = MemoryBank::from_maps(&maps, a.memory.normalize, a.index.config())?;
    log(format!(
        "indexed {} vectors from {} maps",
        bank.len(),
        maps.len()
    ));
    bank.forest().save(out.join(INDEX_FILE))?;
    let meta = bank.meta();
    fs::write(
        out.join(BANK_FILE),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    emit(stdout, &meta)
}

fn open_bank(a: &BankArgs) -> Result<MemoryBank> {
    match (&a.index_dir, &a.manifest) {
        (Some(dir), _) => {
            let forest = RpForest::load(dir.join(INDEX_FILE))?;
            let meta: BankMeta = serde_json::from_str(&fs::read_to_string(dir.join(BANK_FILE))?)?;
            MemoryBank::from_forest(forest, meta.normalized, meta.grid)
        }
        (None, Some(manifest)) => {
            let (mem, _) = memory_records(manifest, &a.memory_split)?;
            MemoryBank::from_maps(&load_records(&mem)?, a.normalize, a.index.config())
        }
        (None, None) => Err(Error::InvalidConfig("need --manifest or --index".into())),
    }
}

fn classify(a: &ClassifyArgs, stdout: &mut dyn Write, log: &mut dyn FnMut(String)) -> Result<()> {
    let bank = open_bank(&a.bank)?;
    let query = load_activation_map(&a.query)?;
    let id = match &a.query_id {
        Some(id) => id.clone(),
        None => a
            .query
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    log(format!("query {id:?} against {} vectors", bank.len()));
    let cfg = a.classifier.config(bank.metric(), bank.normalized());
    let table = image_likelihood(&query, &id, &bank, &cfg)?;
    stdout.write_all(table.to_json().as_bytes())?;
    stdout.write_all(b"\n")?;
    Ok(())
}

fn eval(
    a: &EvalArgs,
    out: &Path,
    stdout: &mut dyn Write,
    log: &mut dyn FnMut(String),
) -> Result<()> {
    let q = &a.query;
    let l = load_query_setup(q, log)?;
    let cfg = q.classifier.config(l.bank.metric(), l.bank.normalized());
    let report = evaluate(&l.queries, &l.bank, &cfg)?;
    report.write_csv(create(&out.join("predictions.csv"))?)?;
    let summary = report.summary_json();
    fs::write(out.join("eval.json"), summary.clone() + "\n")?;
    stdout.write_all(summary.as_bytes())?;
    stdout.write_all(b"\n")?;
    Ok(())
}

fn analyze(
    what: &AnalyzeCmd,
    out: &Path,
    stdout: &mut dyn Write,
    log: &mut dyn FnMut(String),
) -> Result<()> {
    match what {
        AnalyzeCmd::Energy(a) => {
            let records = read_manifest(&a.manifest)?;
            let records = if a.split.is_empty() {
                records
            } else {
                select(&records, &a.split)
            };
            let maps: Vec<_> = load_records(&records)?.into_iter().map(|m| m.map).collect();
            let s = aggregate_energy(&maps)?;
            write_heatmap(
                out,
                "energy_mean",
                &s.mean.cells,
                s.mean.height,
                s.mean.width,
            )?;
            s.profile
                .write_csv(create(&out.join("radial_profile.csv"))?)?;
            emit(stdout, &s)
        }
        AnalyzeCmd::Matches(a) => {
            let set = matches(a, log)?;
            set.write_csv(create(&out.join("matches.csv"))?)?;
            emit(stdout, &MatchSummary::new(&set, a))
        }
        AnalyzeCmd::Angular(a) => {
            let set = matches(a, log)?;
            let rows = class_report(&set.points, a.weighting);
            write_class_report(&rows, create(&out.join("angular.csv"))?)?;
            emit(stdout, &MatchSummary::new(&set, a))
        }
        AnalyzeCmd::Conditional(a) => conditional(a, out, stdout, log),
        AnalyzeCmd::Radtan(a) => {
            let set = matches(a, log)?;
            let mut by_class: BTreeMap<u32, Vec<_>> = BTreeMap::new();
            for m in &set.points {
                by_class.entry(m.query_class).or_default().push(m.clone());
            }
            let per_class: BTreeMap<u32, _> = by_class
                .iter()
                .map(|(&c, ms)| (c, radial_tangential_variance(ms)))
                .collect();
            emit(
                stdout,
                &serde_json::json!({
                    "pairing": set.pairing,
                    "overall": radial_tangential_variance(&set.points),
                    "per_class": per_class,
                }),
            )
        }
    }
}

fn matches(a: &MatchArgs, log: &mut dyn FnMut(String)) -> Result<MatchSet> {
    let l = load_query_setup(&a.query, log)?;
    let cfg = a
        .query
        .classifier
        .config(l.bank.metric(), l.bank.normalized());
    drop(l.memory);
    let set = match_locations(&l.queries, &l.bank, &cfg, a.pairing)?;
    if set.is_empty() {
        log(format!("pairing {:?} left no matches", a.pairing));
    }
    Ok(set)
}

#[derive(Serialize)]
struct MatchSummary {
    pairing: u1sym_core::symmetry::Pairing,
    weighting: u1sym_core::symmetry::Weighting,
    matches: usize,
    filtered_out: usize,
    overall: u1sym_core::symmetry::AngularStats,
    classes: Vec<u1sym_core::symmetry::ClassSymmetryRow>,
}

impl MatchSummary {
    fn new(set: &MatchSet, a: &MatchArgs) -> Self {
        Self {
            pairing: set.pairing,
            weighting: a.weighting,
            matches: set.points.len(),
            filtered_out: set.filtered_out,
            overall: angular_stats(&set.points, a.weighting),
            classes: class_report(&set.points, a.weighting),
        }
    }
}

#[derive(Serialize)]
struct LocationSummary {
    row: usize,
    col: usize,
    xi: f64,
    yi: f64,
    n: usize,
    spread: f64,
}

fn conditional(
    a: &ConditionalArgs,
    out: &Path,
    stdout: &mut dyn Write,
    log: &mut dyn FnMut(String),
) -> Result<()> {
    let set = matches(&a.matches, log)?;
    let (h, w) = (set.height, set.width);
    let counts: Vec<f64> = match_histogram(&set.points, h, w)
        .into_iter()
        .map(|c| c as f64)
        .collect();
    write_heatmap(out, "match_histogram", &counts, h, w)?;
    if let (Some(x), Some(y)) = (a.x, a.y) {
        let hist = conditional_match_distribution(&set.points, (x, y), h, w);
        write_heatmap(out, "conditional", &hist.probs, h, w)?;
        return emit(stdout, &hist);
    }
    let mut summary = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let loc = centered_coords(r, c, h, w);
            let hist = conditional_match_distribution(&set.points, loc, h, w);
            if !hist.is_empty() {
                write_heatmap(out, &format!("conditional_r{r}_c{c}"), &hist.probs, h, w)?;
            }
            summary.push(LocationSummary {
                row: r,
                col: c,
                xi: loc.0,
                yi: loc.1,
                n: hist.n,
                spread: hist.spread(),
            });
        }
    }
    emit(stdout, &summary)
}

fn labels(a: &LabelArgs, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let set = gen_labels(&LabelConfig {
        kind: a.kind,
        seed: a.seed,
        n_classes: a.n_classes,
    })?;
    let json = set.to_json() + "\n";
    fs::write(out.join("labels.json"), &json)?;
    stdout.write_all(json.as_bytes())?;
    Ok(())
}

fn datasets(a: &TrainArgs) -> Result<(Dataset, Dataset)> {
    match a.dataset {
        DatasetKind::Blobs => gaussian_blobs(&BlobSpec {
            classes: a.classes,
            train_per_class: a.per_class,
            test_per_class: a.per_class,
            noise: a.noise,
            seed: a.seed,
            ..Default::default()
        }),
        DatasetKind::Images => {
            let spec = ImageSpec {
                classes: a.classes,
                per_class: a.per_class,
                seed: a.seed,
                ..Default::default()
            };
            let test = image_grid(&ImageSpec {
                seed: a.seed.wrapping_add(1),
                ..spec.clone()
            })?;
            Ok((image_grid(&spec)?, test))
        }
    }
}

fn net_config(a: &TrainArgs, input: usize) -> NetConfig {
    NetConfig {
        input,
        hidden: a.hidden.clone(),
        classes: a.classes,
        u1_layers: a.u1_layers,
    }
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        lr_min: a.lr_min,
        batch: a.batch,
        seed: a.seed,
        lambda: a.lambda,
        one_hot_only: a.one_hot_only,
        augment: a.augment,
        ..Default::default()
    }
}

#[derive(Serialize)]
struct TrainSummary {
    kind: LabelKind,
    epochs: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    angular_error_deg: Option<f64>,
    init_checksum: String,
    final_checksum: String,
}

fn train_cmd(a: &TrainCmd, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let t = &a.train;
    let (train_set, test_set) = datasets(t)?;
    let labels = gen_labels(&LabelConfig {
        kind: a.kind,
        seed: t.seed,
        n_classes: t.classes,
    })?;
    fs::write(out.join("labels.json"), labels.to_json() + "\n")?;
    let mut net = ToyNet::new(&net_config(t, train_set.dim), t.seed)?;
    let report = train(&mut net, &train_set, &labels, &train_config(t))?;
    report.write_csv(create(&out.join("metrics.csv"))?)?;
    let (test_accuracy, _) = evaluate_net(&net, &test_set, &labels)?;
    let last = report.metrics.last().expect("at least one epoch");
    emit(
        stdout,
        &TrainSummary {
            kind: a.kind,
            epochs: report.metrics.len(),
            train_accuracy: last.accuracy,
            test_accuracy,
            angular_error_deg: last.angular_error_deg,
            init_checksum: report.init_checksum,
            final_checksum: report.final_checksum,
        },
    )
}

fn ablate(a: &AblateArgs, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let t = &a.train;
    let (train_set, test_set) = datasets(t)?;
    let cfg = AblationConfig {
        kinds: a.kinds.clone(),
        seeds: (0..a.seeds).map(|i| t.seed.wrapping_add(i)).collect(),
        net: net_config(t, train_set.dim),
        train: train_config(t),
        controlled_init: !a.uncontrolled_init,
    };
    let table = label_config_ablation(&train_set, &test_set, &cfg)?;
    table.write_csv(create(&out.join("ablation.csv"))?)?;
    let json = table.to_json() + "\n";
    fs::write(out.join("ablation.json"), &json)?;
    stdout.write_all(json.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    manifest: String,
    maps: usize,
    classes: usize,
    angles_deg: Vec<f64>,
}

fn synth(a: &SynthArgs, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let spec = LobeSpec {
        classes: a.classes,
        per_class: a.per_class,
        height: a.height,
        width: a.width,
        channels: a.channels,
        seed: a.seed,
        ..Default::default()
    };
    let maps = lobe_dataset(&spec)?;
    fs::create_dir_all(out.join("maps"))?;
    let mut records = Vec::with_capacity(maps.len());
    for m in &maps {
        let rel = format!("maps/{}.amf", m.image_id);
        save_activation_map(&m.map, out.join(&rel))?;
        records.push(MemoryRecord {
            path: rel.into(),
            image_id: m.image_id.clone(),
            class_id: m.class_id,
            class_name: format!("lobe{}", m.class_id),
            split: Split::Memory,
        });
    }
    write_manifest(&records, out.join("manifest.jsonl"))?;
    emit(
        stdout,
        &SynthSummary {
            manifest: "manifest.jsonl".into(),
            maps: maps.len(),
            classes: spec.classes,
            angles_deg: (0..spec.classes)
                .map(|c| spec.angle(c).to_degrees())
                .collect(),
        },
    )
}
