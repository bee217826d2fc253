// Independent reference computations shared by unit and integration tests.
// Only std and nalgebra, nothing from this crate.

#![allow(dead_code)]

use nalgebra::{DMatrix, SVD};

pub struct LeastSquaresFit {
    /// `cols x outputs`.
    pub coef: DMatrix<f64>,
    /// `rows x outputs`.
    pub residuals: DMatrix<f64>,
}

impl LeastSquaresFit {
    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Minimum-norm least squares via SVD.
pub fn least_squares(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> LeastSquaresFit {
    let n = xs.len();
    let d = xs[0].len();
    let k = ys[0].len();
    let a = DMatrix::from_fn(n, d, |i, j| xs[i][j]);
    let b = DMatrix::from_fn(n, k, |i, j| ys[i][j]);
    let svd = SVD::new(a.clone(), true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let coef = svd.solve(&b, tol).expect("svd solve");
    let residuals = &a * &coef - &b;
    LeastSquaresFit { coef, residuals }
}

/// Average precision by brute force: sweep every score threshold, count
/// TP/FP at that cut with greedy matching, and integrate the precision
/// envelope over recall.
///
/// `dets` are `(image, score, box)`, `gts` are `(image, box)`; boxes are
/// `[x1, y1, x2, y2]`.
pub fn brute_force_ap(dets: &[(usize, f64, [f64; 4])], gts: &[(usize, [f64; 4])], thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.partial_cmp(&dets[a].1).unwrap().then(a.cmp(&b)));

    let mut points = Vec::new();
    for cut in 1..=order.len() {
        let kept = &order[..cut];
        let mut used = vec![false; gts.len()];
        let mut tp = 0usize;
        for &di in kept {
            let (img, _, db) = dets[di];
            let mut best = None;
            let mut best_iou = thr;
            for (gi, &(gimg, gb)) in gts.iter().enumerate() {
                if gimg != img || used[gi] {
                    continue;
                }
                let o = corner_iou(&db, &gb);
                if o >= best_iou && (best.is_none() || o > best_iou) {
                    best = Some(gi);
                    best_iou = o;
                }
            }
            if let Some(gi) = best {
                used[gi] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / cut as f64));
    }
    // precision envelope: best precision at any recall >= r
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let r = points[i].0;
        if r > prev_recall {
            let env = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (r - prev_recall) * env;
            prev_recall = r;
        }
    }
    ap
}

pub fn corner_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / ua
}
