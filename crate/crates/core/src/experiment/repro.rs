use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::pipeline::{
    classify_and_evaluate, ideal_pairs, make_dataset, make_videos, train_tpn_stage, video_tubelets,
    ClassifierEvaluation, Split,
};
use super::ExperimentConfig;
use crate::classifier::{
    build_classifier_corpus, train_classifier, ClassifierMode, ClassifierTrainConfig,
};
use crate::eval::{tubelet_quality, TubeletQualityReport};
use crate::synth::Dataset;
use crate::tpn::{build_corpus, train_tpn, InitMode, TpnTrainConfig, TrainedTpn};
use crate::{Error, Result};

/// The window / initialization pairs of the window ablation.
pub const TABLE1_MODELS: [(usize, InitMode); 5] = [
    (2, InitMode::Random),
    (5, InitMode::Random),
    (5, InitMode::Block),
    (11, InitMode::Block),
    (20, InitMode::Block),
];

fn init_name(init: InitMode) -> &'static str {
    match init {
        InitMode::Random => "random",
        InitMode::Block => "block",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub name: String,
    pub lhs: f64,
    pub relation: &'static str,
    pub rhs: f64,
}

impl OrderingCheck {
    fn new(name: String, lhs: f64, relation: &'static str, rhs: f64) -> Self {
        Self {
            name,
            lhs,
            relation,
            rhs,
        }
    }

    pub fn holds(&self) -> bool {
        match self.relation {
            ">" => self.lhs > self.rhs,
            ">=" => self.lhs >= self.rhs,
            "<" => self.lhs < self.rhs,
            _ => unreachable!("relations are fixed above"),
        }
    }
}

impl std::fmt::Display for OrderingCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "check={} lhs={:.6} {} rhs={:.6} holds={}",
            self.name,
            self.lhs,
            self.relation,
            self.rhs,
            self.holds()
        )
    }
}

fn seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.repro.seeds as u64).map(|k| cfg.seed + k).collect()
}

fn test_datasets(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    Ok(
        make_videos(&cfg.world, cfg.seed, Split::Test, cfg.data.test_videos)?
            .into_iter()
            .map(|v| make_dataset(v, cfg))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub seed: u64,
    pub window: usize,
    pub init: InitMode,
    pub quality: TubeletQualityReport,
    pub final_loss: f64,
}

impl Table1Row {
    pub fn label(&self) -> String {
        format!("w{}_{}", self.window, init_name(self.init))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Result {
    pub rows: Vec<Table1Row>,
    pub checks: Vec<OrderingCheck>,
}

impl Table1Result {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(OrderingCheck::holds)
    }

    pub fn row(&self, seed: u64, window: usize, init: InitMode) -> Option<&Table1Row> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.window == window && r.init == init)
    }

    /// One line per seed and model.
    pub fn metrics_tsv(&self) -> String {
        let mut out = String::from(
            "# tpnkit-table1 v1\nseed\tmodel\tmad\tmrd\tmean_iou\tfinal_loss\ttubelets\tframes\n",
        );
        for r in &self.rows {
            let q = &r.quality;
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.8}\t{:.8}\t{:.8}\t{}\t{}",
                r.seed,
                r.label(),
                q.mad,
                q.mrd,
                q.mean_iou,
                r.final_loss,
                q.n_tubelets,
                q.n_frames
            )
            .expect("writing to a String");
        }
        out
    }

    /// Means over seeds, then the ordering checks.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<10} {:>9} {:>9} {:>9}\n",
            "model", "MAD", "MRD", "meanIoU"
        );
        for (window, init) in TABLE1_MODELS {
            let rows: Vec<_> = self
                .rows
                .iter()
                .filter(|r| r.window == window && r.init == init)
                .collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&TubeletQualityReport) -> f64| {
                rows.iter().map(|r| f(&r.quality)).sum::<f64>() / n
            };
            writeln!(
                out,
                "{:<10} {:>9.4} {:>9.5} {:>9.4}",
                format!("w{window}_{}", init_name(init)),
                mean(|q| q.mad),
                mean(|q| q.mrd),
                mean(|q| q.mean_iou)
            )
            .expect("writing to a String");
        }
        for c in &self.checks {
            writeln!(out, "{c}").expect("writing to a String");
        }
        out
    }
}

fn table1_seed(cfg: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    let train = make_videos(&cfg.world, cfg.seed, Split::Train, cfg.data.train_videos)?;
    let test = test_datasets(cfg)?;
    let mut corpora = BTreeMap::new();
    for (window, _) in TABLE1_MODELS {
        if let std::collections::btree_map::Entry::Vacant(e) = corpora.entry(window) {
            e.insert(build_corpus(&train, window, &cfg.tpn.corpus)?);
        }
    }
    let two = train_tpn(&corpora[&2], &cfg.two_frame_config(), None)?;
    let mut rows = Vec::new();
    for (window, init) in TABLE1_MODELS {
        let trained: TrainedTpn = if window == 2 && init == InitMode::Random {
            two.clone()
        } else {
            let tc = TpnTrainConfig {
                window,
                init,
                ..cfg.multi_frame_config()
            };
            train_tpn(&corpora[&window], &tc, Some(&two.model))?
        };
        let (mut predicted, mut ideal) = (Vec::new(), Vec::new());
        for ds in &test {
            let tubelets = video_tubelets(ds, &trained.model, cfg.tubelet.length)?;
            let (p, i) = ideal_pairs(&ds.video, &tubelets)?;
            predicted.extend(p);
            ideal.extend(i);
        }
        let quality = tubelet_quality(&predicted, &ideal)?;
        log::info!(
            "stage=repro-table1 seed={} model=w{window}_{} metric=mean_iou value={:.6}",
            cfg.seed,
            init_name(init),
            quality.mean_iou
        );
        rows.push(Table1Row {
            seed: cfg.seed,
            window,
            init,
            quality,
            final_loss: trained.log.final_loss(),
        });
    }
    Ok(rows)
}

/// The window ablation on the configured world, one run per seed, with the
/// per-seed ordering checks: block beats random at w = 5, w = 5 block is no
/// worse than w = 2, and w = 20 block is worse than w = 5 block.
pub fn repro_table1(cfg: &ExperimentConfig) -> Result<Table1Result> {
    cfg.validate()?;
    let per_seed: Vec<Vec<Table1Row>> = seeds(cfg)
        .par_iter()
        .map(|&s| table1_seed(&cfg.with_seed(s)))
        .collect::<Result<_>>()?;
    let rows: Vec<Table1Row> = per_seed.into_iter().flatten().collect();
    let mut result = Table1Result {
        rows,
        checks: Vec::new(),
    };
    for s in seeds(cfg) {
        let iou = |w, init| {
            result
                .row(s, w, init)
                .map(|r| r.quality.mean_iou)
                .expect("every model ran")
        };
        let b5 = iou(5, InitMode::Block);
        result.checks.extend([
            OrderingCheck::new(
                format!("seed{s}:w5_block>w5_random"),
                b5,
                ">",
                iou(5, InitMode::Random),
            ),
            OrderingCheck::new(
                format!("seed{s}:w5_block>=w2_random"),
                b5,
                ">=",
                iou(2, InitMode::Random),
            ),
            OrderingCheck::new(
                format!("seed{s}:w20_block<w5_block"),
                iou(20, InitMode::Block),
                "<",
                b5,
            ),
        ]);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table3Row {
    pub seed: u64,
    pub mode: ClassifierMode,
    pub evaluation: ClassifierEvaluation,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table3Result {
    pub rows: Vec<Table3Row>,
    pub checks: Vec<OrderingCheck>,
}

impl Table3Result {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(OrderingCheck::holds)
    }

    /// `(accuracy, first-frame accuracy, mean AP)` averaged over seeds.
    pub fn mean(&self, mode: ClassifierMode) -> (f64, f64, f64) {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.mode == mode).collect();
        let n = rows.len() as f64;
        let sum = |f: &dyn Fn(&Table3Row) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        (
            sum(&|r| r.evaluation.classification.accuracy),
            sum(&|r| r.evaluation.classification.first_frame_accuracy),
            sum(&|r| r.evaluation.detection.mean_ap),
        )
    }

    pub fn metrics_tsv(&self) -> String {
        let mut out =
            String::from("# tpnkit-table3 v1\nseed\tmode\taccuracy\tfirst_frame_accuracy\tmean_ap\tfinal_loss\ttubelets\n");
        for r in &self.rows {
            let c = &r.evaluation.classification;
            writeln!(
                out,
                "{}\t{}\t{:.8}\t{:.8}\t{:.8}\t{:.8}\t{}",
                r.seed,
                r.mode,
                c.accuracy,
                c.first_frame_accuracy,
                r.evaluation.detection.mean_ap,
                r.final_loss,
                c.n_tubelets
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<18} {:>9} {:>11} {:>9}\n",
            "mode", "accuracy", "first_frame", "meanAP"
        );
        for mode in ClassifierMode::ALL {
            let (a, f, m) = self.mean(mode);
            writeln!(out, "{:<18} {a:>9.4} {f:>11.4} {m:>9.4}", mode.as_str())
                .expect("writing to a String");
        }
        for c in &self.checks {
            writeln!(out, "{c}").expect("writing to a String");
        }
        out
    }
}

fn table3_seed(cfg: &ExperimentConfig) -> Result<Vec<Table3Row>> {
    let train_videos = make_videos(&cfg.world, cfg.seed, Split::Train, cfg.data.train_videos)?;
    let tpn = train_tpn_stage(&train_videos, cfg)?;
    let model = tpn.model();
    let mut corpus = Vec::new();
    for video in train_videos {
        let ds = make_dataset(video, cfg);
        corpus.extend(build_classifier_corpus(
            &ds.video,
            &video_tubelets(&ds, model, cfg.tubelet.length)?,
        ));
    }
    let test: Vec<_> = test_datasets(cfg)?
        .into_iter()
        .map(|ds| {
            let t = video_tubelets(&ds, model, cfg.tubelet.length)?;
            Ok((ds, t))
        })
        .collect::<Result<_>>()?;
    if corpus.is_empty() {
        return Err(Error::Invalid(
            "no training tubelets for the classifier".into(),
        ));
    }
    let mut rows = Vec::new();
    for mode in ClassifierMode::ALL {
        let tc = ClassifierTrainConfig {
            mode,
            ..cfg.classifier_config()
        };
        let trained = train_classifier(&corpus, cfg.world.num_classes + 1, &tc)?;
        let evaluation = classify_and_evaluate(&trained.model, &mut test.clone(), &cfg.eval)?;
        log::info!(
            "stage=repro-table3 seed={} mode={mode} metric=mean_ap value={:.6}",
            cfg.seed,
            evaluation.detection.mean_ap
        );
        rows.push(Table3Row {
            seed: cfg.seed,
            mode,
            evaluation,
            final_loss: trained.batch_loss.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

/// The classifier ablation on the world with the ambiguous class pair,
/// with ordering checks on the means over seeds: accuracy and mean AP of
/// encoder-decoder >= vanilla >= per-frame, and first-frame accuracy of
/// encoder-decoder >= vanilla.
pub fn repro_table3(cfg: &ExperimentConfig) -> Result<Table3Result> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if cfg.repro.table3_ambiguity {
        cfg.world.oracle.temporal_ambiguity = true;
    }
    let per_seed: Vec<Vec<Table3Row>> = seeds(&cfg)
        .par_iter()
        .map(|&s| table3_seed(&cfg.with_seed(s)))
        .collect::<Result<_>>()?;
    let mut result = Table3Result {
        rows: per_seed.into_iter().flatten().collect(),
        checks: Vec::new(),
    };
    let (ed, va, pf) = (
        result.mean(ClassifierMode::EncoderDecoder),
        result.mean(ClassifierMode::VanillaLstm),
        result.mean(ClassifierMode::PerFrameLinear),
    );
    result.checks = vec![
        OrderingCheck::new(
            "accuracy:encoder_decoder>=vanilla_lstm".into(),
            ed.0,
            ">=",
            va.0,
        ),
        OrderingCheck::new(
            "accuracy:vanilla_lstm>=per_frame_linear".into(),
            va.0,
            ">=",
            pf.0,
        ),
        OrderingCheck::new(
            "mean_ap:encoder_decoder>=vanilla_lstm".into(),
            ed.2,
            ">=",
            va.2,
        ),
        OrderingCheck::new(
            "mean_ap:vanilla_lstm>=per_frame_linear".into(),
            va.2,
            ">=",
            pf.2,
        ),
        OrderingCheck::new(
            "first_frame_accuracy:encoder_decoder>=vanilla_lstm".into(),
            ed.1,
            ">=",
            va.1,
        ),
    ];
    Ok(result)
}
