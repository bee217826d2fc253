//! Trains a two-frame movement regressor, then a five-frame one initialized
//! from it block by block, and compares their tubelet quality on held-out
//! videos.

use tpnkit::eval::tubelet_quality;
use tpnkit::experiment::{
    anchor_sets, ideal_pairs, make_dataset, make_videos, ExperimentConfig, Split,
};
use tpnkit::tpn::{build_corpus, train_tpn, CorpusConfig, InitMode, TpnModel, TpnTrainConfig};
use tpnkit::tubelet::generate_all;

fn main() -> tpnkit::Result<()> {
    let cfg = ExperimentConfig::default();
    let train = make_videos(&cfg.world, 0, Split::Train, 6)?;
    let test = make_videos(&cfg.world, 0, Split::Test, 3)?;

    let corpus2 = build_corpus(&train, 2, &CorpusConfig::default())?;
    let two = train_tpn(&corpus2, &TpnTrainConfig::default(), None)?;
    println!(
        "w=2: {} samples, loss {:.4} -> {:.4}",
        corpus2.len(),
        two.log.epoch_loss[0],
        two.log.final_loss()
    );

    let corpus5 = build_corpus(&train, 5, &CorpusConfig::default())?;
    let block_cfg = TpnTrainConfig {
        window: 5,
        init: InitMode::Block,
        epochs: 2,
        ..Default::default()
    };
    let five = train_tpn(&corpus5, &block_cfg, Some(&two.model))?;
    println!(
        "w=5 block: loss {:.4} -> {:.4}",
        five.log.epoch_loss[0],
        five.log.final_loss()
    );

    for (name, model) in [("w=2", &two.model), ("w=5 block", &five.model)] {
        println!("{name}: {}", quality(&test, model, &cfg)?);
    }
    Ok(())
}

fn quality(
    test: &[tpnkit::synth::SyntheticVideo],
    model: &TpnModel,
    cfg: &ExperimentConfig,
) -> tpnkit::Result<tpnkit::eval::TubeletQualityReport> {
    let (mut predicted, mut ideal) = (Vec::new(), Vec::new());
    for video in test {
        let data = make_dataset(video.clone(), cfg);
        let tubelets = generate_all(video, &anchor_sets(&data), cfg.tubelet.length, model)?;
        let (p, i) = ideal_pairs(video, &tubelets)?;
        predicted.extend(p);
        ideal.extend(i);
    }
    tubelet_quality(&predicted, &ideal)
}
