use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Linear,
    Sinusoidal,
    ScaleChange,
    RandomWalk,
}

/// How a track moves. Velocities are px/frame, amplitudes px, periods frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionProgram {
    Linear {
        velocity: [f64; 2],
    },
    Sinusoidal {
        velocity: [f64; 2],
        amplitude: [f64; 2],
        period: f64,
        phase: f64,
    },
    ScaleChange {
        velocity: [f64; 2],
        /// Per-frame size multiplier.
        rate: f64,
    },
    RandomWalk {
        velocity: [f64; 2],
        walk_std: f64,
        /// Frames between velocity redraws.
        segment: usize,
        seed: u64,
    },
}

impl MotionProgram {
    pub fn kind(&self) -> MotionKind {
        match self {
            MotionProgram::Linear { .. } => MotionKind::Linear,
            MotionProgram::Sinusoidal { .. } => MotionKind::Sinusoidal,
            MotionProgram::ScaleChange { .. } => MotionKind::ScaleChange,
            MotionProgram::RandomWalk { .. } => MotionKind::RandomWalk,
        }
    }

    /// Unclamped `(x, y, w, h)` trajectory starting at `start`, one entry per
    /// frame.
    pub fn trajectory(&self, start: [f64; 4], frames: usize) -> Vec<[f64; 4]> {
        let [x0, y0, w0, h0] = start;
        match self {
            MotionProgram::Linear { velocity } => (0..frames)
                .map(|t| {
                    let t = t as f64;
                    [x0 + velocity[0] * t, y0 + velocity[1] * t, w0, h0]
                })
                .collect(),
            MotionProgram::Sinusoidal {
                velocity,
                amplitude,
                period,
                phase,
            } => (0..frames)
                .map(|t| {
                    let t = t as f64;
                    let arg = std::f64::consts::TAU * t / period + phase;
                    [
                        x0 + velocity[0] * t + amplitude[0] * (arg.sin() - phase.sin()),
                        y0 + velocity[1] * t + amplitude[1] * (arg.cos() - phase.cos()),
                        w0,
                        h0,
                    ]
                })
                .collect(),
            MotionProgram::ScaleChange { velocity, rate } => (0..frames)
                .map(|t| {
                    let s = rate.powi(t as i32);
                    let t = t as f64;
                    [x0 + velocity[0] * t, y0 + velocity[1] * t, w0 * s, h0 * s]
                })
                .collect(),
            MotionProgram::RandomWalk {
                velocity,
                walk_std,
                segment,
                seed,
            } => {
                let mut rng = crate::synth::rng_for(*seed, 0x57A1);
                let kick = Normal::new(0.0, walk_std.max(1e-12)).expect("valid std");
                let mut v = *velocity;
                let (mut x, mut y) = (x0, y0);
                let mut out = Vec::with_capacity(frames);
                for t in 0..frames {
                    if t > 0 {
                        if t % segment.max(&1) == 0 {
                            v = [
                                velocity[0] + kick.sample(&mut rng) * 0.5,
                                velocity[1] + kick.sample(&mut rng) * 0.5,
                            ];
                        }
                        x += v[0] + kick.sample(&mut rng);
                        y += v[1] + kick.sample(&mut rng);
                    }
                    out.push([x, y, w0, h0]);
                }
                out
            }
        }
    }

    /// Clamped per-frame boxes inside a `width x height` frame.
    pub fn boxes(
        &self,
        start: [f64; 4],
        frames: usize,
        width: f64,
        height: f64,
        min_size: f64,
    ) -> Vec<BBox> {
        self.trajectory(start, frames)
            .into_iter()
            .map(|[x, y, w, h]| {
                let w = w.clamp(min_size, width);
                let h = h.clamp(min_size, height);
                let b = BBox::new(x, y, w, h).expect("clamped sizes are positive");
                b.clamp_to_frame(width, height, min_size).0
            })
            .collect()
    }
}

pub(crate) fn sample_program<R: Rng + ?Sized>(
    kind: MotionKind,
    cfg: &super::MotionConfig,
    rng: &mut R,
) -> MotionProgram {
    let speed = rng.random_range(cfg.speed[0]..=cfg.speed[1]);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let velocity = [speed * angle.cos(), speed * angle.sin()];
    match kind {
        MotionKind::Linear => MotionProgram::Linear { velocity },
        MotionKind::Sinusoidal => MotionProgram::Sinusoidal {
            velocity,
            amplitude: [
                rng.random_range(cfg.amplitude[0]..=cfg.amplitude[1]),
                rng.random_range(cfg.amplitude[0]..=cfg.amplitude[1]),
            ],
            period: rng.random_range(cfg.period[0]..=cfg.period[1]),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        },
        MotionKind::ScaleChange => {
            let r = rng.random_range(cfg.scale_rate[0]..=cfg.scale_rate[1]);
            MotionProgram::ScaleChange {
                velocity,
                rate: if rng.random_bool(0.5) { r } else { 1.0 / r },
            }
        }
        MotionKind::RandomWalk => MotionProgram::RandomWalk {
            velocity,
            walk_std: cfg.walk_std,
            segment: cfg.walk_segment,
            seed: rng.random(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_advances_by_velocity() {
        let p = MotionProgram::Linear {
            velocity: [2.0, 0.0],
        };
        let boxes = p.boxes([100.0, 100.0, 30.0, 30.0], 20, 480.0, 270.0, 4.0);
        for t in 1..20 {
            assert_eq!(boxes[t].x() - boxes[t - 1].x(), 2.0);
            assert_eq!(boxes[t].y(), 100.0);
        }
    }

    #[test]
    fn scale_change_matches_closed_form() {
        let r = 1.03;
        let p = MotionProgram::ScaleChange {
            velocity: [0.0, 0.0],
            rate: r,
        };
        let traj = p.trajectory([200.0, 130.0, 40.0, 30.0], 15);
        // iterate the multiplication independently of powi
        let mut w = 40.0;
        for (t, b) in traj.iter().enumerate() {
            assert!((b[2] / 40.0 - r.powi(t as i32)).abs() < 1e-12);
            assert!((b[2] - w).abs() < 1e-9);
            w *= r;
        }
    }

    #[test]
    fn boxes_stay_in_frame() {
        let p = MotionProgram::Linear {
            velocity: [9.0, -7.0],
        };
        for b in p.boxes([400.0, 50.0, 60.0, 40.0], 60, 480.0, 270.0, 4.0) {
            let [x1, y1, x2, y2] = b.corners();
            assert!(x1 >= 0.0 && y1 >= 0.0 && x2 <= 480.0 && y2 <= 270.0);
        }
        let shrink = MotionProgram::ScaleChange {
            velocity: [0.0, 0.0],
            rate: 0.5,
        };
        for b in shrink.boxes([100.0, 100.0, 40.0, 40.0], 20, 480.0, 270.0, 4.0) {
            assert!(b.w() >= 4.0 && b.h() >= 4.0);
        }
    }

    #[test]
    fn random_walk_is_reproducible() {
        let p = MotionProgram::RandomWalk {
            velocity: [1.0, 0.5],
            walk_std: 1.5,
            segment: 5,
            seed: 77,
        };
        assert_eq!(
            p.trajectory([0.0, 0.0, 10.0, 10.0], 30),
            p.trajectory([0.0, 0.0, 10.0, 10.0], 30)
        );
    }
}
