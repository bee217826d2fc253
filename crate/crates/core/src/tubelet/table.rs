//! Tab-separated tubelet table.
//!
//! ```text
//! # tpnkit-tubelets v1
//! tubelet_id  anchor_frame  frame  x  y  w  h  [score_0 .. score_C]
//! ```
//!
//! One row per tubelet frame. Coordinates and scores are written with six
//! decimals; `score_0` is background. Unclassified tubelets have no score
//! columns.

use std::io::{Read, Write};
use std::path::Path;

use super::TubeletProposal;
use crate::geometry::BBox;
use crate::{Error, Result};

pub const TUBELET_HEADER: &str = "# tpnkit-tubelets v1";

pub fn write_tubelets<W: Write>(out: W, tubelets: &[TubeletProposal]) -> Result<()> {
    let n_scores = tubelets
        .iter()
        .find_map(|t| t.scores.as_ref().and_then(|s| s.first()).map(Vec::len))
        .unwrap_or(0);
    if tubelets.iter().any(|t| {
        t.scores.as_ref().map_or(n_scores != 0, |s| {
            s.len() != t.len() || s.iter().any(|r| r.len() != n_scores)
        })
    }) {
        return Err(Error::Invalid(
            "tubelets must all carry the same score layout".into(),
        ));
    }
    let mut out = out;
    writeln!(out, "{TUBELET_HEADER}").map_err(|e| Error::io("<tubelets>", e))?;
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let mut header: Vec<String> = ["tubelet_id", "anchor_frame", "frame", "x", "y", "w", "h"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_scores).map(|k| format!("score_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (id, t) in tubelets.iter().enumerate() {
        for (k, b) in t.boxes.iter().enumerate() {
            let mut row = vec![
                id.to_string(),
                t.anchor_frame.to_string(),
                (t.anchor_frame + k).to_string(),
                format!("{:.6}", b.x()),
                format!("{:.6}", b.y()),
                format!("{:.6}", b.w()),
                format!("{:.6}", b.h()),
            ];
            if let Some(scores) = &t.scores {
                row.extend(scores[k].iter().map(|s| format!("{s:.6}")));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<tubelets>", e))
}

pub fn save_tubelets(path: impl AsRef<Path>, tubelets: &[TubeletProposal]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tubelets(&mut buf, tubelets)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_tubelets(path: impl AsRef<Path>) -> Result<Vec<TubeletProposal>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tubelets(file).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        other => other,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("<tubelets>", e.to_string())
}

/// Reads a table written by [`write_tubelets`]. Counters are not stored and
/// come back as zero; the source anchor is the first box.
pub fn read_tubelets<R: Read>(input: R) -> Result<Vec<TubeletProposal>> {
    let mut text = String::new();
    let mut input = input;
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<tubelets>", e))?;
    let first = text.lines().next().unwrap_or_default();
    if first.trim() != TUBELET_HEADER {
        return Err(Error::format(
            "<tubelets>",
            format!("missing `{TUBELET_HEADER}` header"),
        ));
    }
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    let n_scores = header.len().saturating_sub(7);
    let expected: Vec<String> = ["tubelet_id", "anchor_frame", "frame", "x", "y", "w", "h"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..n_scores).map(|k| format!("score_{k}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format("<tubelets>", "unexpected column layout"));
    }

    let mut out: Vec<TubeletProposal> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::format("<tubelets>", format!("row {}: bad {what}", line + 1));
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(&expected[k]));
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(&expected[k]));
        let (id, anchor_frame, frame) = (int(0)?, int(1)?, int(2)?);
        let bx = BBox::new(num(3)?, num(4)?, num(5)?, num(6)?).map_err(|e| bad(&e.to_string()))?;
        let scores = (0..n_scores)
            .map(|k| num(7 + k))
            .collect::<Result<Vec<_>>>()?;

        if id == out.len() {
            out.push(TubeletProposal {
                anchor_frame,
                boxes: Vec::new(),
                source_anchor: bx,
                capped_decodes: 0,
                clamped_boxes: 0,
                scores: (n_scores > 0).then(Vec::new),
            });
        } else if id + 1 != out.len() {
            return Err(bad("tubelet_id ordering"));
        }
        let t = out.last_mut().expect("pushed above");
        if t.anchor_frame != anchor_frame || frame != anchor_frame + t.boxes.len() {
            return Err(bad("frame sequence"));
        }
        t.boxes.push(bx);
        if let Some(s) = t.scores.as_mut() {
            s.push(scores);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tubelet(
        anchor_frame: usize,
        boxes: Vec<BBox>,
        scores: Option<Vec<Vec<f64>>>,
    ) -> TubeletProposal {
        TubeletProposal {
            anchor_frame,
            source_anchor: boxes[0],
            boxes,
            capped_decodes: 0,
            clamped_boxes: 0,
            scores,
        }
    }

    fn text(ts: &[TubeletProposal]) -> String {
        let mut buf = Vec::new();
        write_tubelets(&mut buf, ts).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn layout_is_documented_columns() {
        let b = BBox::new(10.5, 20.25, 30.0, 40.125).unwrap();
        let t = tubelet(3, vec![b, b], Some(vec![vec![0.25, 0.75]; 2]));
        let s = text(&[t]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], TUBELET_HEADER);
        assert_eq!(
            lines[1],
            "tubelet_id\tanchor_frame\tframe\tx\ty\tw\th\tscore_0\tscore_1"
        );
        assert_eq!(
            lines[3],
            "0\t3\t4\t10.500000\t20.250000\t30.000000\t40.125000\t0.250000\t0.750000"
        );
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(read_tubelets("tubelet_id\tanchor_frame\n".as_bytes()).is_err());
        let b = BBox::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let s = text(&[tubelet(0, vec![b, b], None)]).replace("\n0\t0\t1\t", "\n0\t0\t5\t");
        assert!(read_tubelets(s.as_bytes()).is_err());
    }

    fn arb_tubelets() -> impl Strategy<Value = Vec<TubeletProposal>> {
        let bx = (0.0..500.0f64, 0.0..300.0f64, 1.0..200.0f64, 1.0..200.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap());
        let one = (
            0usize..40,
            proptest::collection::vec(bx, 1..6),
            any::<bool>(),
        );
        proptest::collection::vec(one, 1..5)
            .prop_map(|ts| {
                ts.into_iter()
                    .map(|(f, boxes, scored)| {
                        let n = boxes.len();
                        let scores = scored.then(|| vec![vec![0.125, 0.5, 0.375]; n]);
                        (f, boxes, scores)
                    })
                    .collect::<Vec<_>>()
            })
            .prop_map(|ts| {
                let any_scored = ts.iter().any(|t| t.2.is_some());
                ts.into_iter()
                    .map(|(f, boxes, scores)| {
                        let n = boxes.len();
                        let scores = any_scored
                            .then(|| scores.unwrap_or_else(|| vec![vec![1.0, 0.0, 0.0]; n]));
                        tubelet(f, boxes, scores)
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn text_is_stable_after_one_round_trip(ts in arb_tubelets()) {
            let first = text(&ts);
            let back = read_tubelets(first.as_bytes()).unwrap();
            prop_assert_eq!(back.len(), ts.len());
            for (a, b) in ts.iter().zip(&back) {
                prop_assert_eq!(a.anchor_frame, b.anchor_frame);
                for (x, y) in a.boxes.iter().zip(&b.boxes) {
                    prop_assert!((x.x() - y.x()).abs() <= 5e-7 && (x.h() - y.h()).abs() <= 5e-7);
                }
            }
            prop_assert_eq!(text(&back), first);
        }
    }
}
