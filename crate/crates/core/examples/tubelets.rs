//! Chains a trained regressor into tubelets from the proposals of one frame
//! and writes them as a tubelet table on stdout.

use tpnkit::experiment::{make_dataset, make_videos, train_tpn_stage, ExperimentConfig, Split};
use tpnkit::tubelet::{generate_all, write_tubelets, AnchorSet};

fn main() -> tpnkit::Result<()> {
    let cfg = ExperimentConfig::default();
    let train = make_videos(&cfg.world, 0, Split::Train, 4)?;
    let stage = train_tpn_stage(&train, &cfg)?;

    let data = make_dataset(make_videos(&cfg.world, 0, Split::Test, 1)?.remove(0), &cfg);
    let anchors = data.proposals_on(0).unwrap_or_default()[..4].to_vec();
    let sets = [AnchorSet { frame: 0, anchors }];
    let tubelets = generate_all(&data.video, &sets, 8, stage.model())?;
    eprintln!(
        "{} tubelets of {} frames",
        tubelets.len(),
        tubelets[0].len()
    );
    write_tubelets(std::io::stdout().lock(), &tubelets)
}
