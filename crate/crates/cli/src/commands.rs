//! Subcommand implementations. Each returns the files it read and wrote so
//! the manifest can checksum them.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use prodtraffic::eval::{
    compare_models_with_histograms, export_histogram, generate_synthetic_dataset, interarrivals_by_state,
    ComparisonRow, ExponentialSampler, InterarrivalSampler, ReplaySampler, SyntheticDataset, SyntheticSpec,
    DEFAULT_JUMPS, ROW_LABELS,
};
use prodtraffic::generative::{fit_model, load_model, save_model, DataMode, GenerativeModel, ModelKind, TrainConfig};
use prodtraffic::ingest::{
    annotate_states, count_by_state, extract_samples, parse_log, read_episodes, read_samples, split_dataset,
    write_episodes, write_log, write_samples, SampleFile, StateMap,
};
use prodtraffic::smp::{count_transitions, count_transitions_from_spans, SemiMarkovModel};
use prodtraffic::traffic::{export_trace, generate_trace, GenerateOptions, ModelPackets};
use prodtraffic::{Error, ProductionState};
use serde_json::json;

use crate::config::{Config, Params};
use crate::manifest::write_manifest;
use crate::{Cli, Command, Failure};

/// Start of synthetic logs: 2020-09-13T12:26:40Z.
const SYNTH_BASE_MS: i64 = 1_600_000_000_000;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of production-state jumps to simulate
    #[arg(long)]
    jumps: Option<usize>,
    /// Ground-truth spec (JSON); defaults to the built-in multi-modal spec
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Machine log CSV
    #[arg(long)]
    log: Option<PathBuf>,
    /// State map: one `data_id,value_regex,state` rule per line
    #[arg(long)]
    state_map: Option<PathBuf>,
    /// Fraction of samples used for training
    #[arg(long)]
    train_ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitSmpArgs {
    /// Episodes CSV written by `ingest`
    #[arg(long)]
    episodes: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Samples CSV written by `ingest`
    #[arg(long)]
    samples: Option<PathBuf>,
    /// vae, cvae or gan
    #[arg(long)]
    kind: Option<String>,
    /// 1d (interarrival time) or 2d (interarrival time and size)
    #[arg(long)]
    mode: Option<String>,
    /// Train on one state only; vae and gan train all five otherwise
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Weight of the KL term in VAE objectives
    #[arg(long)]
    kl_weight: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Production model written by `fit-smp`
    #[arg(long)]
    smp: Option<PathBuf>,
    /// Model file; repeat for per-state models
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Directory of model files
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Samples CSV; 1D models draw packet sizes from its training split
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Number of state jumps
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Samples CSV written by `ingest`; the test split is the reference
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Model file; repeatable
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Directory of model files
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Table rows to score, e.g. "VAE 1D"; all six by default
    #[arg(long)]
    rows: Vec<String>,
    /// Add exponential and replay rows
    #[arg(long)]
    baselines: bool,
}

struct Run<'a> {
    params: Params<'a>,
    seed: u64,
    out_dir: PathBuf,
    manifest_stem: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run<'_> {
    fn output(&mut self, name: impl AsRef<Path>) -> Result<PathBuf, Failure> {
        let path = self.out_dir.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn write(&mut self, name: impl AsRef<Path>, text: &str) -> Result<PathBuf, Failure> {
        let path = self.output(name)?;
        fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn create(&mut self, name: impl AsRef<Path>) -> Result<BufWriter<File>, Failure> {
        let path = self.output(name)?;
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }

    fn open(&mut self, path: &Path) -> Result<File, Failure> {
        self.inputs.push(path.to_path_buf());
        File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let name = match &cli.command {
        Command::SynthData(_) => "synth-data",
        Command::Ingest(_) => "ingest",
        Command::FitSmp(_) => "fit-smp",
        Command::Train(_) => "train",
        Command::Generate(_) => "generate",
        Command::Evaluate(_) => "evaluate",
    };
    let config = match &cli.shared.config {
        Some(path) => Config::load(path, name)?,
        None => Config::default(),
    };
    let mut params = Params::new(name, &config);
    let seed = params.get("seed", cli.shared.seed, 0u64)?;
    let out_dir = params.get("out_dir", cli.shared.out_dir.clone(), PathBuf::from("."))?;
    fs::create_dir_all(&out_dir).map_err(|e| Failure::data(format!("{}: {e}", out_dir.display())))?;
    let mut run = Run {
        params,
        seed,
        out_dir,
        manifest_stem: name.to_string(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    match cli.command {
        Command::SynthData(a) => synth_data(&mut run, a)?,
        Command::Ingest(a) => ingest(&mut run, a)?,
        Command::FitSmp(a) => fit_smp(&mut run, a)?,
        Command::Train(a) => train(&mut run, a)?,
        Command::Generate(a) => generate(&mut run, a)?,
        Command::Evaluate(a) => evaluate(&mut run, a)?,
    }
    let manifest = write_manifest(&run.out_dir, &run.manifest_stem, name, &run.params.resolved, &run.inputs, &run.outputs)?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn parse_state(s: &str) -> Result<ProductionState, Failure> {
    s.parse().map_err(|_| Failure::usage(format!("unknown production state `{s}`")))
}

fn synth_data(run: &mut Run, a: SynthArgs) -> Result<(), Failure> {
    let jumps = run.params.get("jumps", a.jumps, DEFAULT_JUMPS)?;
    if jumps == 0 {
        return Err(Failure::usage("--jumps must be at least 1"));
    }
    let spec_path = run.params.optional("spec", a.spec)?;
    let spec = match &spec_path {
        Some(path) => {
            let mut text = String::new();
            std::io::Read::read_to_string(&mut run.open(path)?, &mut text)
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            SyntheticSpec::from_json(&text)?
        }
        None => SyntheticSpec::factory_shaped(),
    };
    let ds = generate_synthetic_dataset(&spec, jumps, run.seed)?;
    let out = run.create("synthetic_log.csv")?;
    write_log(&ds.to_log_records(SYNTH_BASE_MS), out)?;
    run.write("state_map.txt", &SyntheticDataset::state_map().to_text())?;
    run.write("synthetic_spec.json", &spec.to_json())?;
    for s in ProductionState::ALL {
        println!("{:<8} {:>7} samples {:>5} visits", s.name(), ds.count(s), ds.trace.visit_counts()[s.index()]);
    }
    Ok(())
}

fn ingest(run: &mut Run, a: IngestArgs) -> Result<(), Failure> {
    let log = run.params.required("log", a.log)?;
    let map_path = run.params.required("state_map", a.state_map)?;
    let ratio = run.params.get("train_ratio", a.train_ratio, 0.7)?;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Failure::usage(format!("--train-ratio {ratio} must lie in (0, 1)")));
    }
    run.inputs.push(log.clone());
    run.inputs.push(map_path.clone());
    let records = parse_log(&log)?;
    let map = StateMap::load(&map_path)?;
    let trace = annotate_states(&records, &map)?;
    let samples = extract_samples(&trace);
    let split = split_dataset(&samples, ratio, run.seed)?;
    let (counts, _) = count_transitions(&trace)?;

    write_samples(&samples, &split, run.create("samples.csv")?)?;
    write_episodes(&trace.spans(), run.create("episodes.csv")?)?;
    let (train, test) = (count_by_state(&split.train), count_by_state(&split.test));
    let per_state: serde_json::Map<String, serde_json::Value> = ProductionState::ALL
        .iter()
        .map(|s| {
            let n = |m: &std::collections::BTreeMap<ProductionState, usize>| m.get(s).copied().unwrap_or(0);
            (s.name().to_string(), json!({"train": n(&train), "test": n(&test)}))
        })
        .collect();
    let summary = json!({
        "records": records.len(),
        "episodes": trace.episodes.len(),
        "samples": per_state,
        "transition_counts": counts,
    });
    run.write("ingest_summary.json", &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;

    println!("{} records, {} episodes, {} samples", records.len(), trace.episodes.len(), samples.len());
    for s in ProductionState::ALL {
        println!(
            "{:<8} train {:>6} test {:>6}  transitions {:?}",
            s.name(),
            train.get(&s).unwrap_or(&0),
            test.get(&s).unwrap_or(&0),
            counts[s.index()]
        );
    }
    Ok(())
}

fn fit_smp(run: &mut Run, a: FitSmpArgs) -> Result<(), Failure> {
    let path = run.params.required("episodes", a.episodes)?;
    let spans = read_episodes(run.open(&path)?)?;
    let (counts, jumping) = count_transitions_from_spans(&spans)?;
    let model = SemiMarkovModel::new(counts, jumping)?;
    let out = run.output("smp.json")?;
    model.save(&out)?;
    for s in ProductionState::ALL {
        let row: Vec<String> = model.matrix().row(s).iter().map(|p| format!("{p:.4}")).collect();
        println!("{:<8} {}", s.name(), row.join(" "));
    }
    Ok(())
}

fn model_name(kind: ModelKind, mode: DataMode, state: Option<ProductionState>) -> String {
    match state {
        Some(s) => format!("{kind}-{}-{}", mode.label(), s.name().to_lowercase()),
        None => format!("{kind}-{}", mode.label()),
    }
}

fn train(run: &mut Run, a: TrainArgs) -> Result<(), Failure> {
    let samples_path = run.params.required("samples", a.samples)?;
    let kind_text: String = run.params.required("kind", a.kind)?;
    let kind: ModelKind = kind_text.parse().map_err(|_| Failure::usage(format!("unknown model kind `{kind_text}`")))?;
    let mode_text = run.params.get("mode", a.mode, "1d".to_string())?;
    let mode: DataMode = mode_text.parse().map_err(|_| Failure::usage(format!("unknown mode `{mode_text}`")))?;
    let state = run
        .params
        .optional("state", a.state)?
        .map(|s| parse_state(&s))
        .transpose()?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: run.params.get("epochs", a.epochs, defaults.epochs)?,
        batch_size: run.params.get("batch_size", a.batch_size, defaults.batch_size)?,
        learning_rate: run.params.get("learning_rate", a.learning_rate, defaults.learning_rate)?,
        kl_weight: run.params.get("kl_weight", a.kl_weight, defaults.kl_weight)?,
        seed: run.seed,
        ..defaults
    };
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    if kind == ModelKind::Cvae && state.is_some() {
        return Err(Failure::usage("cvae trains one model for all states; drop --state"));
    }
    let file = read_samples(run.open(&samples_path)?)?;
    let jobs: Vec<Option<ProductionState>> = match (kind, state) {
        (ModelKind::Cvae, _) => vec![None],
        (_, Some(s)) => vec![Some(s)],
        _ => ProductionState::ALL.map(Some).to_vec(),
    };
    // independent per-state jobs run in parallel
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&s| {
                let (train, cfg) = (&file.train, &cfg);
                scope.spawn(move || fit_model(kind, mode, train, s, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect::<Vec<_>>()
    });
    run.manifest_stem = format!("train-{}", model_name(kind, mode, state));
    let mut trained = Vec::with_capacity(jobs.len());
    for (s, result) in jobs.into_iter().zip(results) {
        trained.push((s, result.map_err(|e| {
            let f = Failure::from(e);
            match s {
                Some(s) => Failure {
                    message: format!("{s}: {}", f.message),
                    ..f
                },
                None => f,
            }
        })?));
    }
    for (s, (model, history)) in trained {
        let name = model_name(kind, mode, s);
        let path = run.output(format!("models/{name}.json"))?;
        save_model(&model, &path)?;
        run.write(format!("models/{name}.loss.csv"), &history.to_csv())?;
        let last: Vec<String> = (0..history.columns().len())
            .map(|i| format!("{}={:.5}", history.columns()[i], history.column(i).last().copied().unwrap_or(f64::NAN)))
            .collect();
        println!("{name}: {} epochs, final {}", history.len(), last.join(" "));
    }
    Ok(())
}

/// Model files from explicit paths plus `*.json` files in a directory.
fn collect_models(run: &mut Run, paths: Vec<PathBuf>, dir: Option<PathBuf>) -> Result<Vec<GenerativeModel>, Failure> {
    let mut all = paths;
    if let Some(dir) = dir {
        let entries = fs::read_dir(&dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") && !name.ends_with(".manifest.json")
            })
            .collect();
        found.sort();
        all.extend(found);
    }
    if all.is_empty() {
        return Err(Failure::usage("no model files given (--model or --model-dir)"));
    }
    all.iter()
        .map(|p| {
            run.inputs.push(p.clone());
            load_model(p, None).map_err(|e| Failure::from(e).with_context(p))
        })
        .collect()
}

impl Failure {
    fn with_context(self, path: &Path) -> Self {
        Self {
            message: format!("{}: {}", path.display(), self.message),
            ..self
        }
    }
}

/// States a model answers for.
fn model_states(m: &GenerativeModel) -> Vec<ProductionState> {
    match m.state() {
        Some(s) if !m.is_conditional() => vec![s],
        _ => ProductionState::ALL.to_vec(),
    }
}

fn row_label(m: &GenerativeModel) -> String {
    format!("{} {}", m.kind().label().to_uppercase(), m.mode().label().to_uppercase())
}

fn read_sample_file(run: &mut Run, path: &Path) -> Result<SampleFile, Failure> {
    let file = run.open(path)?;
    Ok(read_samples(file)?)
}

fn generate(run: &mut Run, a: GenerateArgs) -> Result<(), Failure> {
    let smp_path = run.params.required("smp", a.smp)?;
    let model_paths = run.params.list("model", a.model)?;
    let model_dir = run.params.optional("model_dir", a.model_dir)?;
    let samples_path = run.params.optional("samples", a.samples)?;
    let n_max = run.params.get("n_max", a.n_max, 1000usize)?;
    if n_max == 0 {
        return Err(Failure::usage("--n-max must be at least 1"));
    }
    run.inputs.push(smp_path.clone());
    let smp = SemiMarkovModel::load(&smp_path)?;
    let models = collect_models(run, model_paths, model_dir)?;
    let mut packets = ModelPackets::new();
    if models.iter().any(|m| m.mode() == DataMode::OneD) {
        let path = samples_path.ok_or_else(|| Failure::usage("1D models need --samples for packet sizes"))?;
        packets = packets.with_sizes(&read_sample_file(run, &path)?.train);
    }
    for m in models {
        for s in model_states(&m) {
            if packets.covers(s) {
                return Err(Failure::usage(format!("more than one model for state {s}")));
            }
            packets = packets.with_model(s, m.clone());
        }
    }
    let trace = generate_trace(&smp, &packets, &GenerateOptions::new(n_max, run.seed))?;
    let out = run.output("trace.csv")?;
    export_trace(&trace, &out)?;
    let mut jumps = String::from("index,from,to,time_ms\n");
    for j in &trace.jumps {
        jumps.push_str(&format!("{},{},{},{}\n", j.index, j.from.name(), j.to.name(), j.time_ms));
    }
    run.write("jumps.csv", &jumps)?;
    println!("{} packets over {} jumps", trace.packets.len(), trace.jumps.len());
    Ok(())
}

fn slug(label: &str) -> String {
    label.to_lowercase().replace(' ', "_")
}

fn evaluate(run: &mut Run, a: EvaluateArgs) -> Result<(), Failure> {
    let samples_path = run.params.required("samples", a.samples)?;
    let model_paths = run.params.list("model", a.model)?;
    let model_dir = run.params.optional("model_dir", a.model_dir)?;
    let mut rows = run.params.list("rows", a.rows)?;
    let baselines = run.params.get("baselines", a.baselines.then_some(true), false)?;
    if rows.is_empty() {
        rows = ROW_LABELS.iter().map(|s| s.to_string()).collect();
    }
    if let Some(bad) = rows.iter().find(|r| !ROW_LABELS.contains(&r.as_str())) {
        return Err(Failure::usage(format!("unknown row `{bad}`; rows are {}", ROW_LABELS.join(", "))));
    }
    let file = read_sample_file(run, &samples_path)?;
    let models = collect_models(run, model_paths, model_dir)?;
    let real = interarrivals_by_state(&file.test);
    let train = interarrivals_by_state(&file.train);

    let mut table_rows: Vec<ComparisonRow> = Vec::new();
    for label in &rows {
        let mut row = ComparisonRow::new(label.clone());
        for m in models.iter().filter(|m| &row_label(m) == label) {
            for s in model_states(m) {
                if row.cells[s.index()].is_some() {
                    return Err(Failure::usage(format!("more than one model for cell {label} / {s}")));
                }
                row = row.with(s, m);
            }
        }
        table_rows.push(row);
    }
    let baseline_samplers: Vec<(ExponentialSampler, ReplaySampler)> = if baselines {
        train
            .iter()
            .zip(ProductionState::ALL)
            .map(|(v, s)| {
                let err = |e: Error| Failure::data(format!("baseline for {s}: {e}"));
                Ok((ExponentialSampler::fit(v).map_err(err)?, ReplaySampler::new(v.clone()).map_err(err)?))
            })
            .collect::<Result<_, Failure>>()?
    } else {
        Vec::new()
    };
    if baselines {
        let mut exp = ComparisonRow::new("Exponential");
        let mut replay = ComparisonRow::new("Replay");
        for s in ProductionState::ALL {
            let (e, r) = &baseline_samplers[s.index()];
            exp = exp.with(s, e as &dyn InterarrivalSampler);
            replay = replay.with(s, r as &dyn InterarrivalSampler);
        }
        table_rows.push(exp);
        table_rows.push(replay);
    }

    let (table, real_hists, generated) = compare_models_with_histograms(&real, &table_rows, run.seed)?;
    for (s, h) in ProductionState::ALL.iter().zip(&real_hists) {
        let path = run.output(format!("histograms/real_{}.csv", s.name().to_lowercase()))?;
        export_histogram(h, &path)?;
    }
    for (row, hists) in table_rows.iter().zip(&generated) {
        for (s, h) in ProductionState::ALL.iter().zip(hists) {
            let path = run.output(format!("histograms/{}_{}.csv", slug(&row.label), s.name().to_lowercase()))?;
            export_histogram(h, &path)?;
        }
    }
    let csv = table.to_csv();
    run.write("kl_table.csv", &csv)?;
    print!("{csv}");
    Ok(())
}
