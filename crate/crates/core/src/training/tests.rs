use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dialogue::{render_dialogue, Payload, RenderedSequence, SpeechLayout, TaskKind, TaskSample, Vocabulary};
use crate::model::layers::BREAK_ELU_GRAD;
use crate::model::{ModelConfig, Parameters};
use crate::unit_codec::UnitSequence;

fn sample(kind: TaskKind, rng: &mut ChaCha8Rng) -> RenderedSequence {
    let vocab = Vocabulary::default();
    let mut units =
        |n: usize| Payload::Speech(UnitSequence::new((0..n).map(|_| rng.gen_range(0..500)).collect(), 25.0));
    let (si, sr) = (units(12), units(8));
    let (it, rt) = (Payload::Text("what is it?".into()), Payload::Text("a cat.".into()));
    let (ins, resp) = match kind {
        TaskKind::SpeechToSpeech => (si, sr),
        TaskKind::SpeechToText => (si, rt),
        TaskKind::TextToSpeech => (it, sr),
        TaskKind::TextToText => (it, rt),
        TaskKind::Asr => (si, Payload::Text("what is it?".into())),
        TaskKind::Tts => (it, si),
    };
    render_dialogue(
        &[TaskSample::new(kind, ins, resp).unwrap()],
        SpeechLayout::Grouped(5),
        &vocab,
    )
    .unwrap()
}

fn check_params() -> Parameters<f64> {
    Parameters::init(&ModelConfig {
        init_std: 0.3,
        seed: 7,
        ..ModelConfig::tiny()
    })
}

fn batches() -> Vec<Vec<RenderedSequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let text = vec![
        sample(TaskKind::TextToText, &mut rng),
        sample(TaskKind::TextToText, &mut rng),
    ];
    let mut speech_only = sample(TaskKind::SpeechToSpeech, &mut rng);
    // Keep only the group objective.
    speech_only.llm_mask.iter_mut().for_each(|m| *m = false);
    let mixed = vec![
        sample(TaskKind::SpeechToText, &mut rng),
        sample(TaskKind::TextToSpeech, &mut rng),
        sample(TaskKind::SpeechToSpeech, &mut rng),
    ];
    vec![text, vec![speech_only], mixed]
}

#[test]
fn gradients_match_finite_differences() {
    let p = check_params();
    for (i, b) in batches().iter().enumerate() {
        let report = grad_check(&p, b, 1e-5, 20, i as u64).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "batch {i}: {} in {}",
            report.max_rel_error,
            report.worst_tensor
        );
        assert!(report.tensors.iter().all(|t| t.checked >= 20.min(t.checked.max(1))));
    }
}

#[test]
fn broken_elu_derivative_is_caught() {
    let p = check_params();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = vec![sample(TaskKind::SpeechToSpeech, &mut rng)];
    BREAK_ELU_GRAD.with(|b| b.set(true));
    let report = grad_check(&p, &batch, 1e-5, 20, 0);
    BREAK_ELU_GRAD.with(|b| b.set(false));
    let report = report.unwrap();
    assert!(report.max_rel_error > 1e-2, "{}", report.max_rel_error);
}

#[test]
fn all_masked_out_batch_has_zero_gradient() {
    let p = check_params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = sample(TaskKind::SpeechToSpeech, &mut rng);
    r.llm_mask.iter_mut().for_each(|m| *m = false);
    r.group_mask.iter_mut().for_each(|m| *m = false);
    let (loss, g) = compute_gradients(&p, &[r.clone()], LossWeights::default()).unwrap();
    assert_eq!(loss.total, 0.0);
    assert!(g.named().iter().all(|(_, t)| t.as_slice().iter().all(|&x| x == 0.0)));
    let report = grad_check(&p, &[r], 1e-5, 20, 0).unwrap();
    assert_eq!(report.max_rel_error, 0.0);
}

#[test]
fn text_only_batch_leaves_speech_tensors_untouched() {
    let p = check_params();
    let (_, g) = compute_gradients(&p, &batches()[0], LossWeights::default()).unwrap();
    for (name, t) in g.named() {
        if name.starts_with("speech.") || name.starts_with("group_model.") {
            assert!(t.as_slice().iter().all(|&x| x == 0.0), "{name}");
        }
    }
    assert!(g.text_head.as_slice().iter().any(|&x| x != 0.0));
}

#[test]
fn scaling_the_loss_scales_the_gradient() {
    let p = check_params();
    let b = &batches()[2];
    let (l1, g1) = compute_gradients(&p, b, LossWeights::default()).unwrap();
    let (l2, g2) = compute_gradients(&p, b, LossWeights { llm: 2.0, group: 2.0 }).unwrap();
    assert_eq!(l2.total, 2.0 * l1.total);
    for ((n, a), (_, b)) in g1.named().into_iter().zip(g2.named()) {
        for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * x.abs().max(1e-30) + 1e-300, "{n}");
        }
    }
}

#[test]
fn masked_out_targets_do_not_move_losses() {
    let p = Parameters::<f32>::init(&ModelConfig::tiny());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = sample(TaskKind::SpeechToSpeech, &mut rng);
    let base = batch_loss(&p, std::slice::from_ref(&r), LossWeights::default()).unwrap();
    assert_eq!(base.total, base.loss_llm + base.loss_group);

    // User-side tokens are never llm targets; rewriting them only moves the inputs,
    // so compare the loss function directly on fixed logits.
    let out = crate::model::full_forward(&r, &p).unwrap();
    let mut tokens = r.tokens.clone();
    for t in 0..tokens.len() {
        if !r.llm_mask[t] {
            tokens[t] = (tokens[t] + 1) % 52;
        }
    }
    let a = loss_llm(&out.text_logits, &r.tokens, &r.llm_mask).unwrap();
    let b = loss_llm(&out.text_logits, &tokens, &r.llm_mask).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());

    let mut mask = r.group_mask.clone();
    mask[0] = false;
    let units = r.flat_slot_units();
    let mut changed = units.clone();
    for u in &mut changed[..5] {
        *u = (*u + 3) % 500;
    }
    let a = loss_group(&out.group_logits, &units, &mask, 5).unwrap();
    let b = loss_group(&out.group_logits, &changed, &mask, 5).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
}

#[test]
fn initial_losses_are_near_uniform() {
    let p = Parameters::<f32>::init(&ModelConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch: Vec<_> = TaskKind::ALL.iter().map(|&k| sample(k, &mut rng)).collect();
    let l = batch_loss(&p, &batch, LossWeights::default()).unwrap();
    let ln_n = 52f64.ln();
    let ln_v = 500f64.ln();
    assert!((l.loss_llm - ln_n).abs() / ln_n < 0.1, "{}", l.loss_llm);
    assert!((l.loss_group - ln_v).abs() / ln_v < 0.1, "{}", l.loss_group);
}

#[test]
fn repeated_batch_descends_and_is_deterministic() {
    let c = ModelConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch: Vec<_> = [TaskKind::SpeechToSpeech, TaskKind::TextToText]
        .iter()
        .map(|&k| sample(k, &mut rng))
        .collect();
    let cfg = TrainConfig {
        max_steps: 200,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let mut p = Parameters::<f32>::init(&c);
        let out = train(&mut p, &batch, &cfg, |_, _| Ok(())).unwrap();
        (out.history, p)
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert!(h1.last().unwrap().total < h1[0].total);
    let losses = |h: &[StepRecord]| h.iter().map(|r| (r.loss_llm, r.loss_group)).collect::<Vec<_>>();
    assert_eq!(losses(&h1), losses(&h2));
    assert_eq!(p1, p2);
}

#[test]
fn non_finite_loss_preserves_parameters() {
    let mut p = Parameters::<f32>::init(&ModelConfig::tiny());
    p.text_head.set(0, 0, f32::INFINITY);
    let before = p.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = vec![sample(TaskKind::TextToText, &mut rng)];
    let mut st = OptimizerState::new(&p);
    let err = train_step(&mut p, &batch, &mut st, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, crate::Error::NonFiniteLoss { .. }), "{err}");
    assert_eq!(p, before);
    assert_eq!(st.step, 0);
}
