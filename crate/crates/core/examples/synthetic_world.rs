//! Generates a synthetic video and prints its tracks, static proposals and
//! how many ground-truth objects the proposals recall.

use tpnkit::synth::{
    generate_video, proposal_recall, static_proposals, ProposalConfig, WorldConfig,
};

fn main() -> tpnkit::Result<()> {
    let world = WorldConfig::default();
    let video = generate_video(&world, 7)?;
    println!(
        "{} frames of {}x{}, feature dim {}",
        video.frames(),
        video.width(),
        video.height(),
        video.oracle().feature_dim()
    );

    for (k, track) in video.tracks.iter().enumerate() {
        let first = track.boxes[0];
        let last = track.boxes[video.frames() - 1];
        println!(
            "track {k}: class {} moves ({:.0},{:.0}) -> ({:.0},{:.0}), width {:.0} -> {:.0}",
            track.class_id,
            first.x(),
            first.y(),
            last.x(),
            last.y(),
            first.w(),
            last.w()
        );
    }

    let cfg = ProposalConfig::default();
    let proposals = static_proposals(&video, 0, &cfg, 1);
    let (found, total) = proposal_recall(&video, 0, &proposals, 0.5);
    println!(
        "{} proposals on frame 0 cover {found} of {total} objects at IoU 0.5",
        proposals.len()
    );
    Ok(())
}
