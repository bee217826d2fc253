use super::*;
use crate::nn::grad_check;
use crate::synth::{generate_video, rng_for, WorldConfig};
use crate::BBox;

fn random_sequence(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, 3);
    (0..len)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn model(
    mode: ClassifierMode,
    f: usize,
    h: usize,
    c: usize,
    boxes: bool,
    seed: u64,
) -> TemporalClassifier {
    TemporalClassifier::new(mode, f, h, c, boxes, 0.5, &mut rng_for(seed, 1)).unwrap()
}

fn sample(len: usize, f: usize, c: usize, seed: u64) -> TubeletSample {
    let mut rng = rng_for(seed, 4);
    TubeletSample {
        features: random_sequence(len, f, seed),
        labels: (0..len).map(|_| rng.random_range(0..c)).collect(),
        box_targets: (0..len)
            .map(|t| (t % 2 == 0).then(|| [0.3, -0.2, 0.1, 1.4]))
            .collect(),
    }
}

fn track_tubelet(
    video: &SyntheticVideo,
    track: usize,
    start: usize,
    len: usize,
) -> TubeletProposal {
    let boxes: Vec<BBox> = (start..start + len)
        .map(|f| video.tracks[track].boxes[f])
        .collect();
    TubeletProposal {
        anchor_frame: start,
        source_anchor: boxes[0],
        boxes,
        capped_decodes: 0,
        clamped_boxes: 0,
        scores: None,
    }
}

#[test]
fn zero_parameters_give_uniform_distributions() {
    for mode in ClassifierMode::ALL {
        let m = TemporalClassifier::zeros(mode, 5, 3, 4, false).unwrap();
        for p in m.classify(&random_sequence(6, 5, 0)).unwrap() {
            for v in p {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn distributions_sum_to_one() {
    for mode in ClassifierMode::ALL {
        let m = model(mode, 4, 5, 3, false, 2);
        let out = m.classify(&random_sequence(7, 4, 1)).unwrap();
        assert_eq!(out.len(), 7);
        for p in out {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }
}

#[test]
fn decoder_runs_over_reversed_frames_from_the_encoder_state() {
    let (f, h) = (3, 4);
    let m = model(ClassifierMode::EncoderDecoder, f, h, 3, false, 7);
    let seq = random_sequence(5, f, 9);
    let enc = m.encoder.as_ref().unwrap();
    let dec = m.decoder.as_ref().unwrap();

    let mut s = LstmState::zeros(h);
    for u in &seq {
        s = enc.step(&s, u).unwrap();
    }
    // decoder step k reads frame 4 - k and its output belongs to frame 4 - k
    let order = [4, 3, 2, 1, 0];
    let mut expected = vec![Vec::new(); 5];
    for &t in &order {
        s = dec.step(&s, &seq[t]).unwrap();
        expected[t] = softmax(&m.class_head.forward(&s.h).unwrap());
    }
    assert_eq!(m.classify(&seq).unwrap(), expected);
}

#[test]
fn only_the_encoder_decoder_sees_future_frames() {
    let seq = random_sequence(6, 4, 5);
    let mut changed = seq.clone();
    changed[5].iter_mut().for_each(|v| *v += 1.0);
    for mode in ClassifierMode::ALL {
        let m = model(mode, 4, 5, 3, false, 11);
        let a = m.classify(&seq).unwrap();
        let b = m.classify(&changed).unwrap();
        let first_frame_moved = a[0] != b[0];
        assert_eq!(
            first_frame_moved,
            mode == ClassifierMode::EncoderDecoder,
            "{mode}"
        );
        assert_ne!(a[5], b[5]);
    }
}

#[test]
fn gradients_match_central_differences() {
    for mode in ClassifierMode::ALL {
        for len in [1, 3, 6] {
            let m = model(mode, 3, 4, 3, true, len as u64);
            let s = sample(len, 3, 3, 20 + len as u64);
            let report = grad_check(&m, 1e-4, |p| p.loss_and_grad(&s, 0.7)).unwrap();
            assert!(
                report.max_relative_error < 1e-4,
                "{mode} l={len}: {report:?}"
            );
        }
    }
}

#[test]
fn loss_is_mean_cross_entropy_at_uniform_output() {
    let m = TemporalClassifier::zeros(ClassifierMode::VanillaLstm, 3, 2, 5, false).unwrap();
    let (loss, _) = m.loss_and_grad(&sample(4, 3, 5, 1), 0.0).unwrap();
    assert!((loss - 5f64.ln()).abs() < 1e-12);
}

#[test]
fn rejects_malformed_inputs() {
    let m = model(ClassifierMode::VanillaLstm, 3, 2, 3, false, 0);
    assert!(m.classify(&[]).is_err());
    assert!(m.classify(&[vec![0.0; 4]]).is_err());
    assert!(TemporalClassifier::zeros(ClassifierMode::VanillaLstm, 3, 0, 3, false).is_err());
    assert!("lstm".parse::<ClassifierMode>().is_err());
    assert_eq!(
        "encoder_decoder".parse::<ClassifierMode>().unwrap(),
        ClassifierMode::EncoderDecoder
    );
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ClassifierMode::ALL {
        let m = model(mode, 3, 4, 5, mode == ClassifierMode::VanillaLstm, 3);
        let path = dir.path().join(format!("{mode}.json"));
        m.save(&path).unwrap();
        assert_eq!(TemporalClassifier::load(&path).unwrap(), m);
    }
}

#[test]
fn labels_follow_the_best_overlapping_track() {
    let video = generate_video(&WorldConfig::default(), 3).unwrap();
    for (k, track) in video.tracks.iter().enumerate() {
        let t = track_tubelet(&video, k, 0, 10);
        let labels = label_tubelet_frames(&video, &t);
        for (f, &l) in labels.iter().enumerate() {
            if track.visible[f] {
                assert_eq!(l, track.class_id + 1);
            }
        }
    }
    let mut far = track_tubelet(&video, 0, 0, 3);
    far.boxes = vec![BBox::new(-500.0, -500.0, 10.0, 10.0).unwrap(); 3];
    assert_eq!(label_tubelet_frames(&video, &far), vec![0, 0, 0]);
}

#[test]
fn training_separates_a_toy_problem() {
    // class k+1 lights up feature k; background is all zeros
    let corpus: Vec<TubeletSample> = (0..40)
        .map(|i| {
            let label = i % 3;
            let mut u = vec![0.0; 3];
            if label > 0 {
                u[label - 1] = 1.0;
            }
            TubeletSample {
                features: vec![u; 4],
                labels: vec![label; 4],
                box_targets: vec![None; 4],
            }
        })
        .collect();
    for mode in ClassifierMode::ALL {
        let cfg = ClassifierTrainConfig {
            mode,
            hidden: 6,
            iterations: 300,
            batch: 8,
            init_std: 0.1,
            ..Default::default()
        };
        let trained = train_classifier(&corpus, 3, &cfg).unwrap();
        let last = *trained.batch_loss.last().unwrap();
        assert!(last < 0.2 * trained.batch_loss[0], "{mode}: {last}");
        for s in &corpus[..3] {
            let p = trained.model.classify(&s.features).unwrap();
            let argmax = (0..3).max_by(|&a, &b| p[0][a].total_cmp(&p[0][b])).unwrap();
            assert_eq!(argmax, s.labels[0], "{mode}");
        }
    }
}
