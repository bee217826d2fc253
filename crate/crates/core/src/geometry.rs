//! Boxes, overlap, and the movement codec used for tubelet supervision.
//!
//! Boxes are stored in center form `(x, y, w, h)`. A movement delta describes
//! where a box sits relative to a reference ("anchor") box:
//!
//! ```text
//! dx = (x_t - x_1) / w_1     dw = ln(w_t / w_1)
//! dy = (y_t - y_1) / h_1     dh = ln(h_t / h_1)
//! ```

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default bound on `|dw|` and `|dh|` accepted by [`decode_movement`].
pub const DEFAULT_DECODE_CAP: f64 = 10.0;

/// Axis-aligned box in center form, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite())
            || !x.is_finite()
            || !y.is_finite()
        {
            return Err(Error::InvalidBox { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> [f64; 4] {
        [
            self.x - self.w / 2.0,
            self.y - self.h / 2.0,
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
        ]
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Scales positions and sizes about the origin.
    pub fn scaled(&self, s: f64) -> Result<BBox> {
        BBox::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }

    /// Clamps the box into a `width x height` frame, keeping both sides at
    /// least `min_size`. Returns the clamped box and whether anything changed.
    pub fn clamp_to_frame(&self, width: f64, height: f64, min_size: f64) -> (BBox, bool) {
        let w = self.w.clamp(min_size, width.max(min_size));
        let h = self.h.clamp(min_size, height.max(min_size));
        let x = self.x.clamp(w / 2.0, (width - w / 2.0).max(w / 2.0));
        let y = self.y.clamp(h / 2.0, (height - h / 2.0).max(h / 2.0));
        let out = BBox { x, y, w, h };
        (out, out != *self)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Which space a [`MovementDelta`] lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaKind {
    /// Decoded network output, or any delta in box space.
    Raw,
    /// Supervision target computed from a ground-truth track.
    Target,
    /// Target or output after per-frame-offset standardization.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementDelta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub kind: DeltaKind,
}

impl MovementDelta {
    pub const fn zero(kind: DeltaKind) -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            dw: 0.0,
            dh: 0.0,
            kind,
        }
    }

    pub fn from_array(v: [f64; 4], kind: DeltaKind) -> Self {
        Self {
            dx: v[0],
            dy: v[1],
            dw: v[2],
            dh: v[3],
            kind,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn with_kind(self, kind: DeltaKind) -> Self {
        Self { kind, ..self }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Encodes `current` relative to `anchor`.
pub fn encode_movement(anchor: &BBox, current: &BBox) -> MovementDelta {
    MovementDelta {
        dx: (current.x - anchor.x) / anchor.w,
        dy: (current.y - anchor.y) / anchor.h,
        dw: (current.w / anchor.w).ln(),
        dh: (current.h / anchor.h).ln(),
        kind: DeltaKind::Raw,
    }
}

/// Inverse of [`encode_movement`] with the default log-size cap.
pub fn decode_movement(anchor: &BBox, delta: &MovementDelta) -> Result<BBox> {
    decode_movement_capped(anchor, delta, DEFAULT_DECODE_CAP)
}

/// Inverse of [`encode_movement`]. Fails when `|dw|` or `|dh|` exceeds `cap`.
pub fn decode_movement_capped(anchor: &BBox, delta: &MovementDelta, cap: f64) -> Result<BBox> {
    if delta.kind != DeltaKind::Raw {
        return Err(Error::DeltaKind {
            expected: DeltaKind::Raw,
            actual: delta.kind,
        });
    }
    for v in [delta.dw, delta.dh] {
        if !(v.abs() <= cap) {
            return Err(Error::DeltaCap { value: v, cap });
        }
    }
    BBox::new(
        anchor.x + delta.dx * anchor.w,
        anchor.y + delta.dy * anchor.h,
        anchor.w * delta.dw.exp(),
        anchor.h * delta.dh.exp(),
    )
}

/// Smoothed L1: `0.5 x^2` inside the unit interval, `|x| - 0.5` outside.
#[inline]
pub fn smoothed_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`smoothed_l1`].
#[inline]
pub fn smoothed_l1_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = b(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 2.0, 2.0), &b(100.0, 100.0, 2.0, 2.0)), 0.0);
        // overlap strip is 1 x 2 = 2, union 4 + 4 - 2 = 6
        assert_abs_diff_eq!(iou(&a, &b(2.0, 1.0, 2.0, 2.0)), 1.0 / 3.0, epsilon = 1e-15);
        // touching edges
        assert_eq!(iou(&a, &b(3.0, 1.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn encode_hand_values() {
        let d = encode_movement(&b(10.0, 10.0, 20.0, 20.0), &b(20.0, 15.0, 40.0, 10.0));
        assert_abs_diff_eq!(d.dx, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dy, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dw, 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.dh, -(2f64.ln()), epsilon = 1e-15);

        let back = decode_movement(&b(10.0, 10.0, 20.0, 20.0), &d).unwrap();
        assert_abs_diff_eq!(back.x(), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y(), 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.w(), 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.h(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_boxes_encode_to_exact_zero() {
        let a = b(123.4, 56.7, 31.0, 17.5);
        let d = encode_movement(&a, &a);
        assert_eq!(d.to_array(), [0.0; 4]);
        assert_eq!(
            decode_movement(&a, &MovementDelta::zero(DeltaKind::Raw)).unwrap(),
            a
        );
    }

    #[test]
    fn decode_rejects_capped_and_wrong_kind() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        let big = MovementDelta::from_array([0.0, 0.0, 10.5, 0.0], DeltaKind::Raw);
        assert!(matches!(
            decode_movement(&a, &big),
            Err(Error::DeltaCap { .. })
        ));
        let nan = MovementDelta::from_array([0.0, 0.0, 0.0, f64::NAN], DeltaKind::Raw);
        assert!(decode_movement(&a, &nan).is_err());
        let norm = MovementDelta::zero(DeltaKind::Normalized);
        assert!(matches!(
            decode_movement(&a, &norm),
            Err(Error::DeltaKind { .. })
        ));
    }

    #[test]
    fn smoothed_l1_values_and_knee() {
        assert_eq!(smoothed_l1(0.0), 0.0);
        assert_eq!(smoothed_l1(0.5), 0.125);
        assert_eq!(smoothed_l1(2.0), 1.5);
        assert_eq!(smoothed_l1(-2.0), 1.5);
        for eps in [1e-3, 1e-6, 1e-9] {
            assert!((smoothed_l1(1.0 - eps) - smoothed_l1(1.0 + eps)).abs() <= 2.0 * eps + 1e-15);
        }
    }

    #[test]
    fn smoothed_l1_grad_matches_central_difference() {
        let h = 1e-6;
        for &x in &[-3.2, -1.7, -0.9, -0.3, 0.01, 0.4, 0.75, 1.3, 4.0] {
            let num = (smoothed_l1(x + h) - smoothed_l1(x - h)) / (2.0 * h);
            let ana = smoothed_l1_grad(x);
            let rel = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-8);
            assert!(rel < 1e-6, "x={x} rel={rel}");
        }
    }

    #[test]
    fn corner_form_round_trip() {
        let a = b(7.25, -3.5, 4.5, 9.0);
        let [x1, y1, x2, y2] = a.corners();
        let back = BBox::from_corners(x1, y1, x2, y2).unwrap();
        for (u, v) in <[f64; 4]>::from(a)
            .iter()
            .zip(<[f64; 4]>::from(back).iter())
        {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn clamp_keeps_min_size_and_bounds() {
        let (c, changed) = b(-5.0, 300.0, 1.0, 50.0).clamp_to_frame(480.0, 270.0, 4.0);
        assert!(changed);
        assert_eq!(c.w(), 4.0);
        let [x1, y1, x2, y2] = c.corners();
        assert!(x1 >= 0.0 && y1 >= 0.0 && x2 <= 480.0 && y2 <= 270.0);
        let inside = b(100.0, 100.0, 20.0, 20.0);
        assert_eq!(inside.clamp_to_frame(480.0, 270.0, 4.0), (inside, false));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (
            -500.0..500.0f64,
            -500.0..500.0f64,
            0.5..400.0f64,
            0.5..400.0f64,
        )
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(a in arb_box(), c in arb_box()) {
            let back = decode_movement(&a, &encode_movement(&a, &c)).unwrap();
            let (u, v): ([f64; 4], [f64; 4]) = (c.into(), back.into());
            for k in 0..4 {
                prop_assert!((u[k] - v[k]).abs() < 1e-9, "{:?} vs {:?}", c, back);
            }
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let (p, q) = (iou(&a, &c), iou(&c, &a));
            prop_assert_eq!(p, q);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn encode_translation_and_scale_invariant(
            a in arb_box(), c in arb_box(),
            tx in -100.0..100.0f64, ty in -100.0..100.0f64, s in 0.1..10.0f64,
        ) {
            let d0 = encode_movement(&a, &c).to_array();
            let d1 = encode_movement(&a.translated(tx, ty), &c.translated(tx, ty)).to_array();
            let d2 = encode_movement(&a.scaled(s).unwrap(), &c.scaled(s).unwrap()).to_array();
            for k in 0..4 {
                let tol = 1e-9 * (1.0 + d0[k].abs());
                prop_assert!((d0[k] - d1[k]).abs() < tol * 1e3);
                prop_assert!((d0[k] - d2[k]).abs() < tol);
            }
        }
    }
}
