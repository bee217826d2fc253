use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tpnkit::classifier::{build_classifier_corpus, train_classifier, TemporalClassifier};
use tpnkit::eval::tubelet_quality;
use tpnkit::experiment::{
    classify_and_evaluate, gradient_check_suite, ideal_pairs, make_dataset, make_videos,
    repro_table1, repro_table3, train_tpn_stage, video_tubelets, ExperimentConfig, Split,
    GRAD_CHECK_TOLERANCE,
};
use tpnkit::synth::Dataset;
use tpnkit::tpn::TpnModel;
use tpnkit::tubelet::{load_tubelets, save_tubelets};
use tpnkit::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_INPUT: u8 = 4;
const EXIT_ASSERTION: u8 = 5;
const EXIT_NUMERIC: u8 = 6;

/// Tubelet proposal and classification pipeline on synthetic video.
///
/// Exit codes: 0 success, 2 bad usage, 3 invalid configuration, 4 missing
/// or unreadable input, 5 failed ordering or gradient assertion, 6
/// non-finite numbers during training, 1 anything else.
#[derive(Parser)]
#[command(name = "tpnkit", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "tpnkit-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates train and test videos with their anchor proposals.
    GenData,
    /// Trains the two-frame and configured multi-frame TPN.
    TrainTpn,
    /// Generates tubelets for every stored anchor of both splits.
    GenTubelets,
    /// Trains the configured tubelet classifier on training tubelets.
    TrainLstm,
    /// Scores test tubelets against ideal tubelets and, when a classifier
    /// exists, reports accuracy and mean AP.
    Evaluate,
    /// Runs central-difference gradient checks of every model part.
    GradCheck,
    /// Runs an ablation over several seeds and checks its orderings.
    Repro {
        #[arg(value_enum)]
        table: Table,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Table1,
    Table3,
}

enum Failure {
    Lib(Error),
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

struct Layout {
    out: PathBuf,
}

impl Layout {
    fn data(&self, split: Split) -> PathBuf {
        self.out.join("data").join(split.name())
    }

    fn tubelets(&self, split: Split) -> PathBuf {
        self.out.join("tubelets").join(split.name())
    }

    fn models(&self) -> PathBuf {
        self.out.join("models")
    }

    fn metrics(&self) -> PathBuf {
        self.out.join("metrics")
    }
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn video_file(dir: &Path, index: usize, ext: &str) -> PathBuf {
    dir.join(format!("video_{index:03}.{ext}"))
}

fn load_split(layout: &Layout, split: Split, count: usize) -> Result<Vec<Dataset>, Error> {
    (0..count)
        .map(|i| Dataset::load(video_file(&layout.data(split), i, "json")))
        .collect()
}

fn count(cfg: &ExperimentConfig, split: Split) -> usize {
    match split {
        Split::Train => cfg.data.train_videos,
        Split::Test => cfg.data.test_videos,
    }
}

fn gen_data(cfg: &ExperimentConfig, layout: &Layout) -> Outcome {
    for split in [Split::Train, Split::Test] {
        let dir = layout.data(split);
        create_dir(&dir)?;
        for (i, video) in make_videos(&cfg.world, cfg.seed, split, count(cfg, split))?
            .into_iter()
            .enumerate()
        {
            make_dataset(video, cfg).save(video_file(&dir, i, "json"))?;
        }
        log::info!(
            "stage=gen-data split={} metric=videos value={}",
            split.name(),
            count(cfg, split)
        );
    }
    write_file(&layout.out.join("config.toml"), &cfg.to_toml())?;
    Ok(())
}

fn train_tpn(cfg: &ExperimentConfig, layout: &Layout) -> Outcome {
    let videos: Vec<_> = load_split(layout, Split::Train, cfg.data.train_videos)?
        .into_iter()
        .map(|d| d.video)
        .collect();
    let stage = train_tpn_stage(&videos, cfg)?;
    create_dir(&layout.models())?;
    stage
        .two_frame
        .model
        .save(layout.models().join("tpn_w2.json"))?;
    stage.model().save(layout.models().join("tpn.json"))?;
    println!("tpn window={} final_loss={:.6}", stage.model().window(), {
        stage
            .multi_frame
            .as_ref()
            .unwrap_or(&stage.two_frame)
            .log
            .final_loss()
    });
    Ok(())
}

fn gen_tubelets(cfg: &ExperimentConfig, layout: &Layout) -> Outcome {
    let model = TpnModel::load(layout.models().join("tpn.json"))?;
    for split in [Split::Train, Split::Test] {
        let dir = layout.tubelets(split);
        create_dir(&dir)?;
        let mut total = 0;
        for (i, ds) in load_split(layout, split, count(cfg, split))?
            .iter()
            .enumerate()
        {
            let tubelets = video_tubelets(ds, &model, cfg.tubelet.length)?;
            total += tubelets.len();
            save_tubelets(video_file(&dir, i, "tsv"), &tubelets)?;
        }
        log::info!(
            "stage=gen-tubelets split={} metric=tubelets value={total}",
            split.name()
        );
    }
    Ok(())
}

fn train_lstm(cfg: &ExperimentConfig, layout: &Layout) -> Outcome {
    let mut corpus = Vec::new();
    for (i, ds) in load_split(layout, Split::Train, cfg.data.train_videos)?
        .iter()
        .enumerate()
    {
        let tubelets = load_tubelets(video_file(&layout.tubelets(Split::Train), i, "tsv"))?;
        corpus.extend(build_classifier_corpus(&ds.video, &tubelets));
    }
    let tc = cfg.classifier_config();
    let trained = train_classifier(&corpus, cfg.world.num_classes + 1, &tc)?;
    trained
        .model
        .save(layout.models().join("classifier.json"))?;
    println!(
        "classifier mode={} tubelets={} final_batch_loss={:.6}",
        tc.mode,
        corpus.len(),
        trained.batch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, layout: &Layout) -> Outcome {
    let mut test = Vec::new();
    let (mut predicted, mut ideal) = (Vec::new(), Vec::new());
    for (i, ds) in load_split(layout, Split::Test, cfg.data.test_videos)?
        .into_iter()
        .enumerate()
    {
        let tubelets = load_tubelets(video_file(&layout.tubelets(Split::Test), i, "tsv"))?;
        let (p, t) = ideal_pairs(&ds.video, &tubelets)?;
        predicted.extend(p);
        ideal.extend(t);
        test.push((ds, tubelets));
    }
    let mut report = format!("tubelet_quality {}\n", tubelet_quality(&predicted, &ideal)?);
    let classifier_path = layout.models().join("classifier.json");
    if classifier_path.exists() {
        let model = TemporalClassifier::load(&classifier_path)?;
        let ev = classify_and_evaluate(&model, &mut test, &cfg.eval)?;
        report += &format!(
            "classifier mode={} {}\n{}\n",
            model.mode(),
            ev.classification,
            ev.detection
        );
    }
    print!("{report}");
    write_file(&layout.metrics().join("evaluate.txt"), &report)?;
    Ok(())
}

fn grad_check(cfg: &ExperimentConfig, layout: &Layout) -> Outcome {
    let mut report = String::new();
    let mut failed = Vec::new();
    for (name, r) in gradient_check_suite(cfg.seed)? {
        let ok = r.max_relative_error < GRAD_CHECK_TOLERANCE;
        report += &format!(
            "check={name} params={} max_relative_error={:.3e} pass={ok}\n",
            r.checked, r.max_relative_error
        );
        if !ok {
            failed.push(name);
        }
    }
    print!("{report}");
    write_file(&layout.metrics().join("grad_check.txt"), &report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(format!(
            "gradient checks failed: {}",
            failed.join(", ")
        )))
    }
}

fn repro(cfg: &ExperimentConfig, layout: &Layout, table: Table) -> Outcome {
    let (name, tsv, summary, ok) = match table {
        Table::Table1 => {
            let r = repro_table1(cfg)?;
            ("table1", r.metrics_tsv(), r.summary(), r.all_hold())
        }
        Table::Table3 => {
            let r = repro_table3(cfg)?;
            ("table3", r.metrics_tsv(), r.summary(), r.all_hold())
        }
    };
    print!("{summary}");
    write_file(&layout.metrics().join(format!("{name}.tsv")), &tsv)?;
    write_file(
        &layout.metrics().join(format!("{name}_summary.txt")),
        &summary,
    )?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Assertion(format!(
            "{name}: ordering checks failed"
        )))
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let layout = Layout { out: cli.out };
    match cli.command {
        Command::GenData => gen_data(&cfg, &layout),
        Command::TrainTpn => train_tpn(&cfg, &layout),
        Command::GenTubelets => gen_tubelets(&cfg, &layout),
        Command::TrainLstm => train_lstm(&cfg, &layout),
        Command::Evaluate => evaluate(&cfg, &layout),
        Command::GradCheck => grad_check(&cfg, &layout),
        Command::Repro { table } => repro(&cfg, &layout, table),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::Io { .. } | Error::Format { .. } => EXIT_INPUT,
                Error::NonFinite(_) => EXIT_NUMERIC,
                _ => EXIT_FAILURE,
            })
        }
    }
}
