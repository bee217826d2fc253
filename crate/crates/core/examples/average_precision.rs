//! Average precision, non-maximum suppression and CorLoc on a handful of
//! hand-made detections.

use tpnkit::eval::{average_precision, corloc, nms, ApProtocol, Detection, GroundTruth};
use tpnkit::BBox;

fn b(x: f64, y: f64) -> BBox {
    BBox::new(x, y, 20.0, 20.0).unwrap()
}

fn main() -> tpnkit::Result<()> {
    let gts = vec![
        GroundTruth {
            image: 0,
            class: 0,
            bbox: b(50.0, 50.0),
        },
        GroundTruth {
            image: 1,
            class: 0,
            bbox: b(30.0, 30.0),
        },
        GroundTruth {
            image: 1,
            class: 1,
            bbox: b(80.0, 40.0),
        },
    ];
    let dets = vec![
        Detection {
            image: 0,
            class: 0,
            score: 0.9,
            bbox: b(51.0, 50.0),
        },
        Detection {
            image: 0,
            class: 0,
            score: 0.8,
            bbox: b(52.0, 51.0),
        },
        Detection {
            image: 1,
            class: 0,
            score: 0.7,
            bbox: b(90.0, 90.0),
        },
        Detection {
            image: 1,
            class: 0,
            score: 0.6,
            bbox: b(31.0, 29.0),
        },
        Detection {
            image: 1,
            class: 1,
            score: 0.5,
            bbox: b(79.0, 41.0),
        },
    ];

    println!(
        "raw detections:\n{}",
        average_precision(&dets, &gts, 0.5, ApProtocol::AllPoints)?
    );
    let kept = nms(&dets, 0.3);
    println!(
        "after NMS ({} of {} kept):\n{}",
        kept.len(),
        dets.len(),
        average_precision(&kept, &gts, 0.5, ApProtocol::AllPoints)?
    );
    println!(
        "11-point: {:.4}",
        average_precision(&kept, &gts, 0.5, ApProtocol::ElevenPoint)?.mean_ap
    );
    println!("CorLoc: {:.3}", corloc(&kept, &gts, &[0, 1]).average);
    Ok(())
}
