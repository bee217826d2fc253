//! Trains the three tubelet classifiers on the tubelets of a few videos and
//! reports per-frame accuracy and mean AP on held-out videos.

use tpnkit::classifier::{build_classifier_corpus, train_classifier, ClassifierMode};
use tpnkit::experiment::{
    classify_and_evaluate, make_dataset, make_videos, train_tpn_stage, video_tubelets,
    ExperimentConfig, Split,
};

fn main() -> tpnkit::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.world.oracle.temporal_ambiguity = true;

    let train = make_videos(&cfg.world, 0, Split::Train, cfg.data.train_videos)?;
    let stage = train_tpn_stage(&train, &cfg)?;
    let model = stage.model();

    let mut corpus = Vec::new();
    for video in train {
        let data = make_dataset(video, &cfg);
        corpus.extend(build_classifier_corpus(
            &data.video,
            &video_tubelets(&data, model, cfg.tubelet.length)?,
        ));
    }
    let mut test = Vec::new();
    for video in make_videos(&cfg.world, 0, Split::Test, cfg.data.test_videos)? {
        let data = make_dataset(video, &cfg);
        let tubelets = video_tubelets(&data, model, cfg.tubelet.length)?;
        test.push((data, tubelets));
    }

    let classes = cfg.world.num_classes + 1;
    for mode in ClassifierMode::ALL {
        let mut ccfg = cfg.classifier_config();
        ccfg.mode = mode;
        let trained = train_classifier(&corpus, classes, &ccfg)?;
        let eval = classify_and_evaluate(&trained.model, &mut test, &cfg.eval)?;
        println!(
            "{:<16} accuracy {:.3}  first frame {:.3}  mAP {:.3}",
            mode.as_str(),
            eval.classification.accuracy,
            eval.classification.first_frame_accuracy,
            eval.detection.mean_ap
        );
    }
    Ok(())
}
