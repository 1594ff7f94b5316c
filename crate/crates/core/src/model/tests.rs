use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dialogue::{render_dialogue, Payload, RenderedSequence, SpeechLayout, TaskKind, TaskSample, Vocabulary};
use crate::error::Error;
use crate::tensor::Matrix;
use crate::unit_codec::{GroupedUnitSequence, UnitSequence};

fn speech_sample(si: Vec<u32>, sr: Vec<u32>, g: usize) -> RenderedSequence {
    let vocab = Vocabulary::default();
    let s = TaskSample::new(
        TaskKind::SpeechToSpeech,
        Payload::Speech(UnitSequence::new(si, 25.0)),
        Payload::Speech(UnitSequence::new(sr, 25.0)),
    )
    .unwrap();
    render_dialogue(&[s], SpeechLayout::Grouped(g), &vocab).unwrap()
}

fn random_units(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(0..500)).collect()
}

fn with_segment(r: &RenderedSequence, seg: usize, units: Vec<u32>) -> RenderedSequence {
    let mut out = r.clone();
    out.segments[seg] = GroupedUnitSequence::from_groups(units, r.group_size).unwrap();
    out
}

#[test]
fn embed_groups_shapes_and_zero_weights() {
    let c = ModelConfig {
        d_model: 64,
        n_heads: 4,
        ..ModelConfig::default()
    };
    let p = Parameters::<f64>::init(&c);
    let gs = GroupedUnitSequence::from_groups((0..10).collect(), 5).unwrap();
    assert_eq!(embed_groups(&gs, &p).unwrap().shape(), (2, 64));

    let same = GroupedUnitSequence::from_groups(vec![3, 1, 4, 1, 5, 3, 1, 4, 1, 5], 5).unwrap();
    let e = embed_groups(&same, &p).unwrap();
    assert_eq!(e.row(0), e.row(1));

    let zero = Parameters::<f64>::zeros(&c);
    assert!(embed_groups(&gs, &zero).unwrap().as_slice().iter().all(|&x| x == 0.0));

    let bad = GroupedUnitSequence::from_groups(vec![0, 1, 2, 3, 500], 5).unwrap();
    assert!(matches!(
        embed_groups(&bad, &p),
        Err(Error::UnitOutOfRange { unit: 500, vocab: 500 })
    ));
}

#[test]
fn assemble_input_routes_slots() {
    let p = Parameters::<f64>::init(&ModelConfig::tiny());
    let r = speech_sample((0..10).collect(), (10..25).collect(), 5);
    assert_eq!(r.num_slots(), 5);
    let adapted = Matrix::from_fn(5, 16, |i, j| (i * 16 + j) as f64);
    let e = assemble_input(&r, &adapted, &p).unwrap();
    let mut bypass = 0;
    for t in 0..r.len() {
        let tok = p.token_embedding.row(r.tokens[t] as usize);
        let pos = p.position_embedding.row(t);
        let from_table = e
            .row(t)
            .iter()
            .zip(tok.iter().zip(pos))
            .all(|(&x, (&a, &b))| x == a + b);
        if !from_table {
            bypass += 1;
        }
    }
    assert_eq!(bypass, 5);

    let mut swapped = adapted.clone();
    swapped.row_mut(1).copy_from_slice(adapted.row(3));
    swapped.row_mut(3).copy_from_slice(adapted.row(1));
    let e2 = assemble_input(&r, &swapped, &p).unwrap();
    let changed: Vec<usize> = (0..r.len()).filter(|&t| e.row(t) != e2.row(t)).collect();
    assert_eq!(changed, vec![r.speech_slots[1].position, r.speech_slots[3].position]);

    assert!(matches!(
        assemble_input(&r, &Matrix::zeros(4, 16), &p),
        Err(Error::SlotCountMismatch { slots: 5, groups: 4 })
    ));

    let vocab = Vocabulary::default();
    let text = TaskSample::new(
        TaskKind::TextToText,
        Payload::Text("hi".into()),
        Payload::Text("yo".into()),
    )
    .unwrap();
    let rt = render_dialogue(&[text], SpeechLayout::Grouped(5), &vocab).unwrap();
    let e = assemble_input(&rt, &Matrix::zeros(0, 16), &p).unwrap();
    for t in 0..rt.len() {
        let expect: Vec<f64> = p
            .token_embedding
            .row(rt.tokens[t] as usize)
            .iter()
            .zip(p.position_embedding.row(t))
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(e.row(t), expect.as_slice());
    }
}

#[test]
fn backbone_shapes_and_length_limit() {
    let c = ModelConfig::tiny();
    let p = Parameters::<f64>::init(&c);
    let (z, logits) = backbone_forward(&Matrix::zeros(1, 16), &p).unwrap();
    assert_eq!(z.shape(), (1, 16));
    assert_eq!(logits.shape(), (1, c.text_vocab_size));
    assert!(matches!(
        backbone_forward(&Matrix::zeros(257, 16), &p),
        Err(Error::SequenceTooLong { len: 257, max: 256 })
    ));
}

#[test]
fn init_text_head_is_near_uniform() {
    let c = ModelConfig::default();
    let p = Parameters::<f32>::init(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = speech_sample(random_units(&mut rng, 40), random_units(&mut rng, 60), 5);
    let out = full_forward(&r, &p).unwrap();
    let ln_n = (c.text_vocab_size as f64).ln();
    for t in 0..r.len() {
        let row: Vec<f64> = out.text_logits.row(t).iter().map(|&x| x as f64).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let entropy: f64 = -row
            .iter()
            .map(|x| {
                let lp = x - max - sum.ln();
                lp.exp() * lp
            })
            .sum::<f64>();
        assert!((entropy - ln_n).abs() / ln_n < 0.05, "row {t}: {entropy} vs {ln_n}");
    }
}

#[test]
fn group_model_shape_and_sensitivity() {
    let c = ModelConfig::tiny();
    let p = Parameters::<f64>::init(&ModelConfig {
        init_std: 0.2,
        ..c.clone()
    });
    let z1: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
    let z2: Vec<f64> = (0..16).map(|i| (i as f64 * 0.91).cos()).collect();
    let a = group_model_forward(&z1, &p);
    let b = group_model_forward(&z2, &p);
    assert_eq!(a.shape(), (5, 500));
    for j in 0..5 {
        assert_ne!(a.row(j), b.row(j), "query {j} ignores z");
    }

    let mut zeroed = p.clone();
    zeroed.gm_proj.weight.fill(0.0);
    let zero = vec![0.0; 16];
    let x = group_model_forward(&zero, &zeroed);
    assert_eq!(x, group_model_forward(&zero, &zeroed));
    assert_eq!(x, group_model_forward(&z1, &zeroed));
}

#[test]
fn full_forward_shapes() {
    let p = Parameters::<f64>::init(&ModelConfig::tiny());
    let r = speech_sample((0..10).collect(), (10..25).collect(), 5);
    let out = full_forward(&r, &p).unwrap();
    assert_eq!(out.group_logits.shape(), (25, 500));
    assert_eq!(out.num_slots(), 5);
    assert_eq!(out.slot_logits(4).shape(), (5, 500));

    let vocab = Vocabulary::default();
    let text = TaskSample::new(
        TaskKind::TextToText,
        Payload::Text("hi".into()),
        Payload::Text("yo".into()),
    )
    .unwrap();
    let rt = render_dialogue(&[text], SpeechLayout::Grouped(5), &vocab).unwrap();
    let out = full_forward(&rt, &p).unwrap();
    assert_eq!(out.group_logits.rows(), 0);
    assert_eq!(out.text_logits.rows(), rt.len());
}

#[test]
fn suffix_perturbation_preserves_prefix_logits() {
    let p = Parameters::<f64>::init(&ModelConfig {
        init_std: 0.1,
        ..ModelConfig::tiny()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let len = rng.gen_range(2..40);
        let e = Matrix::from_fn(len, 16, |_, _| rng.gen_range(-1.0..1.0));
        let (_, base) = backbone_forward(&e, &p).unwrap();
        let t = rng.gen_range(0..len);
        let mut e2 = e.clone();
        for i in t..len {
            for v in e2.row_mut(i) {
                *v += rng.gen_range(-1.0..1.0);
            }
        }
        let (_, pert) = backbone_forward(&e2, &p).unwrap();
        for i in 0..t {
            assert_eq!(base.row(i), pert.row(i));
        }
        assert_ne!(base.row(t), pert.row(t));
    }
}

#[test]
fn last_group_perturbation_and_slot_isolation() {
    let p = Parameters::<f64>::init(&ModelConfig {
        init_std: 0.1,
        ..ModelConfig::tiny()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = speech_sample(random_units(&mut rng, 10), random_units(&mut rng, 15), 5);
    let base = full_forward(&r, &p).unwrap();

    let mut sr = r.segments[1].flat_units().to_vec();
    for u in &mut sr[10..] {
        *u = (*u + 1) % 500;
    }
    let r2 = with_segment(&r, 1, sr);
    let pert = full_forward(&r2, &p).unwrap();
    let last = r.speech_slots[4].position;
    for t in 0..last {
        assert_eq!(base.text_logits.row(t), pert.text_logits.row(t));
    }
    assert_ne!(base.text_logits.row(last), pert.text_logits.row(last));
    // Every slot's own logits come from earlier rows, so none of them move.
    assert_eq!(base.group_logits, pert.group_logits);

    for k in 0..r.num_slots() {
        let slot = r.speech_slots[k];
        let mut units = r.segments[slot.segment_id].flat_units().to_vec();
        let g = slot.group_index * 5;
        for u in &mut units[g..g + 5] {
            *u = (*u + 7) % 500;
        }
        let pert = full_forward(&with_segment(&r, slot.segment_id, units), &p).unwrap();
        assert_eq!(base.slot_logits(k), pert.slot_logits(k), "slot {k}");
        if k + 1 < r.num_slots() && r.speech_slots[k + 1].position == slot.position + 1 {
            assert_ne!(base.slot_logits(k + 1), pert.slot_logits(k + 1));
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let p = Parameters::<f32>::init(&ModelConfig::tiny());
    let r = speech_sample((0..10).collect(), (10..25).collect(), 5);
    let a = full_forward(&r, &p).unwrap();
    let b = full_forward(&r, &Parameters::<f32>::init(&ModelConfig::tiny())).unwrap();
    assert_eq!(a.text_logits, b.text_logits);
    assert_eq!(a.group_logits, b.group_logits);
}

#[test]
fn session_matches_full_forward() {
    let p = Parameters::<f64>::init(&ModelConfig {
        init_std: 0.1,
        ..ModelConfig::tiny()
    });
    let r = speech_sample((0..10).collect(), (10..25).collect(), 5);
    let full = full_forward(&r, &p).unwrap();

    let rows: Vec<InputRow> = {
        let mut slot = 0;
        r.tokens
            .iter()
            .enumerate()
            .map(|(t, &tok)| {
                if slot < r.num_slots() && r.speech_slots[slot].position == t {
                    slot += 1;
                    InputRow::Group(r.slot_units(slot - 1))
                } else {
                    InputRow::Token(tok)
                }
            })
            .collect()
    };
    let mut s = Session::new(&p);
    let split = r.len() / 2;
    let mut z = s.feed(&rows[..split]).unwrap();
    for row in &rows[split..] {
        z.push_rows(&s.feed(std::slice::from_ref(row)).unwrap());
    }
    assert_eq!(s.len(), r.len());
    for t in 0..r.len() {
        for (a, b) in z.row(t).iter().zip(full.hidden.row(t)) {
            assert!((a - b).abs() < 1e-12);
        }
        let logits = s.text_logits(z.row(t));
        for (a, b) in logits.iter().zip(full.text_logits.row(t)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let pos = r.speech_slots[2].position;
    let g = s.group_logits(z.row(pos - 1));
    for (a, b) in g.as_slice().iter().zip(full.slot_logits(2).as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}
