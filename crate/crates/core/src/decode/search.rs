use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rules::{argmax, log_softmax, LogitRules};
use super::{compression_ratio, DecodeError, DecodeOptions, DecodeResult, TokenDecoder};
use crate::model::softmax_f64;
use crate::vocab::Vocabulary;

/// Primed decoder state: cache after the prompt, logits for the first
/// content position and the no-speech probability.
struct Primed<C> {
    cache: C,
    logits: Vec<f32>,
    no_speech_prob: f64,
    budget: usize,
}

fn prime<D: TokenDecoder>(
    model: &D,
    vocab: &Vocabulary,
    prompt: &[u32],
    options: &DecodeOptions,
) -> Result<Primed<D::Cache>, DecodeError> {
    options.validate()?;
    let sp = vocab.specials();
    let sot = prompt
        .iter()
        .position(|&t| t == sp.sot)
        .ok_or_else(|| DecodeError::Prompt("prompt lacks start-of-transcript".into()))?;
    let room = model.n_text_ctx().saturating_sub(prompt.len());
    let budget = options.max_tokens.unwrap_or(model.n_text_ctx() / 2).min(room);
    if budget == 0 {
        return Err(DecodeError::Prompt(format!(
            "prompt of {} tokens leaves no room in a context of {}",
            prompt.len(),
            model.n_text_ctx()
        )));
    }
    let mut cache = model.new_cache()?;
    let mut logits = model.step(&mut cache, &prompt[..=sot])?;
    let no_speech_prob = softmax_f64(&logits)[sp.no_speech as usize];
    if sot + 1 < prompt.len() {
        logits = model.step(&mut cache, &prompt[sot + 1..])?;
    }
    Ok(Primed {
        cache,
        logits,
        no_speech_prob,
        budget,
    })
}

fn rules_for(vocab: &Vocabulary, options: &DecodeOptions) -> LogitRules {
    LogitRules::new(
        vocab.specials().clone(),
        options.task.timestamps,
        options.initial_timestamp_max,
        options.force_timestamp_rule,
    )
}

fn finish(
    vocab: &Vocabulary,
    tokens: Vec<u32>,
    sum_logprob: f64,
    finished: bool,
    no_speech_prob: f64,
    temperature: f64,
) -> DecodeResult {
    let count = tokens.len() + usize::from(finished);
    let text = vocab.decode_text(&tokens);
    DecodeResult {
        avg_logprob: sum_logprob / count.max(1) as f64,
        compression_ratio: compression_ratio(&text),
        text,
        tokens,
        sum_logprob,
        no_speech_prob,
        temperature,
        finished,
        truncated: !finished,
        low_quality: false,
    }
}

/// Draws an index from the unnormalised weights `p`; zero weights are never
/// chosen.
fn sample_index(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

/// Single-hypothesis decoding: argmax at temperature 0, otherwise sampling
/// from `softmax(logits / temperature)` with a generator seeded by
/// `options.seed`.
pub fn greedy_decode<D: TokenDecoder>(
    model: &D,
    vocab: &Vocabulary,
    prompt: &[u32],
    options: &DecodeOptions,
) -> Result<DecodeResult, DecodeError> {
    let Primed {
        mut cache,
        mut logits,
        no_speech_prob,
        budget,
    } = prime(model, vocab, prompt, options)?;
    let rules = rules_for(vocab, options);
    let eot = vocab.specials().eot;
    let t = options.temperature;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut tokens = Vec::new();
    let mut sum = 0.0;
    let mut finished = false;
    for step in 0..budget {
        rules.apply(&mut logits, &tokens);
        let lp = log_softmax(&logits);
        let next = if t == 0.0 {
            argmax(&logits)
        } else {
            let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let weights: Vec<f64> = logits.iter().map(|&l| ((l as f64 - max) / t).exp()).collect();
            sample_index(&weights, &mut rng)
        } as u32;
        sum += lp[next as usize];
        if next == eot {
            finished = true;
            break;
        }
        tokens.push(next);
        if step + 1 < budget {
            logits = model.step(&mut cache, &[next])?;
        }
    }
    Ok(finish(vocab, tokens, sum, finished, no_speech_prob, t))
}

struct Beam<C> {
    tokens: Vec<u32>,
    score: f64,
    cache: C,
    logits: Vec<f32>,
}

/// Beam search at temperature 0 scored by cumulative log-probability.
pub fn beam_decode<D: TokenDecoder>(
    model: &D,
    vocab: &Vocabulary,
    prompt: &[u32],
    options: &DecodeOptions,
) -> Result<DecodeResult, DecodeError> {
    if options.temperature != 0.0 {
        return Err(DecodeError::Options(
            "beam search runs only at temperature 0".into(),
        ));
    }
    let Primed {
        cache,
        logits,
        no_speech_prob,
        budget,
    } = prime(model, vocab, prompt, options)?;
    let rules = rules_for(vocab, options);
    let eot = vocab.specials().eot;
    let width = options.beam_size;
    let mut beams = vec![Beam {
        tokens: Vec::new(),
        score: 0.0,
        cache,
        logits,
    }];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();

    for step in 0..budget {
        // (score, beam, token)
        let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
        for (bi, beam) in beams.iter_mut().enumerate() {
            rules.apply(&mut beam.logits, &beam.tokens);
            let lp = log_softmax(&beam.logits);
            let mut order: Vec<u32> = (0..lp.len() as u32)
                .filter(|&i| lp[i as usize] > f64::NEG_INFINITY)
                .collect();
            order.sort_by(|&a, &b| lp[b as usize].total_cmp(&lp[a as usize]).then(a.cmp(&b)));
            for &tok in order.iter().take(width + 1) {
                candidates.push((beam.score + lp[tok as usize], bi, tok));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut kept = Vec::new();
        let mut newly_finished = Vec::new();
        for &(score, bi, tok) in &candidates {
            if tok == eot {
                newly_finished.push((beams[bi].tokens.clone(), score));
            } else {
                kept.push((score, bi, tok));
                if kept.len() == width {
                    break;
                }
            }
        }
        for f in newly_finished {
            if finished.len() >= width {
                break;
            }
            finished.push(f);
        }
        if finished.len() >= width {
            break;
        }

        let last = step + 1 == budget;
        let mut next = Vec::with_capacity(kept.len());
        for (score, bi, tok) in kept {
            let parent = &beams[bi];
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            let mut cache = parent.cache.clone();
            let logits = if last {
                Vec::new()
            } else {
                model.step(&mut cache, &[tok])?
            };
            next.push(Beam {
                tokens,
                score,
                cache,
                logits,
            });
        }
        beams = next;
        if beams.is_empty() {
            break;
        }
    }

    // Unfinished hypotheses fill any remaining slots, best first.
    let mut result: Vec<(Vec<u32>, f64, bool)> =
        finished.into_iter().map(|(t, s)| (t, s, true)).collect();
    if result.len() < width {
        let mut rest: Vec<&Beam<D::Cache>> = beams.iter().collect();
        rest.sort_by(|a, b| b.score.total_cmp(&a.score));
        for b in rest {
            if result.len() >= width {
                break;
            }
            result.push((b.tokens.clone(), b.score, false));
        }
    }
    let mut best = 0;
    for (i, r) in result.iter().enumerate() {
        if r.1 > result[best].1 {
            best = i;
        }
    }
    let (tokens, score, done) = result.swap_remove(best);
    Ok(finish(vocab, tokens, score, done, no_speech_prob, 0.0))
}
