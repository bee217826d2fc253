//! Encodes the movement between two boxes and decodes it back.

use tpnkit::geometry::{decode_movement, encode_movement, iou};
use tpnkit::BBox;

fn main() -> tpnkit::Result<()> {
    let anchor = BBox::new(120.0, 80.0, 40.0, 60.0)?;
    let moved = BBox::new(131.5, 77.0, 46.0, 57.0)?;

    let delta = encode_movement(&anchor, &moved);
    println!("delta    = {:?}", delta.to_array());
    let back = decode_movement(&anchor, &delta)?;
    println!(
        "decoded  = ({:.3}, {:.3}, {:.3}, {:.3})",
        back.x(),
        back.y(),
        back.w(),
        back.h()
    );
    println!("IoU(anchor, moved) = {:.4}", iou(&anchor, &moved));
    println!(
        "encode(B, B) = {:?}",
        encode_movement(&anchor, &anchor).to_array()
    );
    Ok(())
}
