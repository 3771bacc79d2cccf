//! Caption generation: greedy decoding and beam search over characters.
//!
//! Decoding starts from `<start>` with the mean-annotation context, stops
//! on `<end>` or at the generated-length cap, and records one attention
//! row per step (the first row is the uniform one implied by the mean
//! context).

use alloc::vec;
use alloc::vec::Vec;

use crate::attention::attend;
use crate::decoder::{decode_step, init_state, DecoderParams, DecoderState};
use crate::encoder::AnnotationGrid;
use crate::ops::activation::log_softmax_rows;
use crate::rng::RngState;
use crate::tensor::{OpError, Tensor};
use crate::vocab::{TokenSequence, END, START};

/// One (partial) decode path through the search.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Token ids starting with `<start>`.
    pub tokens: Vec<u32>,
    /// Sum of the chosen tokens' log softmax probabilities.
    pub log_prob: f64,
    pub state: DecoderState,
    /// One attention row per generated token.
    pub trace_rows: Vec<Vec<f64>>,
    /// Set when the last token is `<end>` or the length cap was reached.
    pub finished: bool,
}

impl Hypothesis {
    pub fn to_sequence(&self) -> TokenSequence {
        TokenSequence::from_ids(self.tokens.clone(), self.tokens.last() == Some(&END))
    }

    fn generated_len(&self) -> usize {
        self.tokens.len() - 1
    }
}

/// Context and attention row for the next step of one hypothesis.
fn step_context(
    grid: &AnnotationGrid,
    state: &DecoderState,
    params: &DecoderParams,
    mean_context: &Tensor,
) -> Result<(Tensor, Vec<f64>), OpError> {
    let l = grid.positions();
    if state.t == 0 {
        Ok((mean_context.clone(), vec![1.0 / l as f64; l]))
    } else {
        let (att, _) = attend(&grid.features, &state.h, &params.attention)?;
        Ok((att.context, att.weights.data().to_vec()))
    }
}

/// Argmax decoding; ties go to the lowest token id. `max_len` caps the
/// number of generated tokens.
pub fn greedy_decode(
    grid: &AnnotationGrid,
    params: &DecoderParams,
    max_len: usize,
) -> Result<Hypothesis, OpError> {
    assert!(max_len >= 1);
    let (state, z0) = init_state(&grid.features, params.hidden());
    let mut rng = RngState::new(0); // dropout disabled: stream never drawn
    let mut hyp = Hypothesis {
        tokens: vec![START],
        log_prob: 0.0,
        state,
        trace_rows: Vec::new(),
        finished: false,
    };
    while !hyp.finished {
        let (context, weights) = step_context(grid, &hyp.state, params, &z0)?;
        let prev = *hyp.tokens.last().unwrap();
        let (logits, next_state, _) =
            decode_step(&[prev], &context, &hyp.state, params, &mut rng, false)?;
        let log_probs = log_softmax_rows(&logits);
        let row = log_probs.row(0);
        let mut best = 0usize;
        for (k, &lp) in row.iter().enumerate() {
            if lp > row[best] {
                best = k;
            }
        }
        hyp.tokens.push(best as u32);
        hyp.log_prob += row[best];
        hyp.trace_rows.push(weights);
        hyp.state = next_state;
        hyp.finished = best as u32 == END || hyp.generated_len() >= max_len;
    }
    Ok(hyp)
}

/// Standard beam search: each live hypothesis expands by all K tokens,
/// the top `beam_size` candidates by total log probability survive, and
/// finished candidates retire into a completed pool. Ties break by token
/// id, then by hypothesis order. Returns completed hypotheses ranked by
/// log probability (live ones only if nothing completed).
pub fn beam_search(
    grid: &AnnotationGrid,
    params: &DecoderParams,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>, OpError> {
    assert!(beam_size >= 1);
    assert!(max_len >= 1);
    let (state, z0) = init_state(&grid.features, params.hidden());
    let mut rng = RngState::new(0);
    let k = params.vocab_size();

    let mut live = vec![Hypothesis {
        tokens: vec![START],
        log_prob: 0.0,
        state,
        trace_rows: Vec::new(),
        finished: false,
    }];
    let mut completed: Vec<Hypothesis> = Vec::new();

    for depth in 0..max_len {
        if live.is_empty() {
            break;
        }
        // one decode step per live hypothesis; children share its outcome
        let mut steps = Vec::with_capacity(live.len());
        for hyp in &live {
            let (context, weights) = step_context(grid, &hyp.state, params, &z0)?;
            let prev = *hyp.tokens.last().unwrap();
            let (logits, next_state, _) =
                decode_step(&[prev], &context, &hyp.state, params, &mut rng, false)?;
            let log_probs = log_softmax_rows(&logits);
            steps.push((log_probs, next_state, weights));
        }

        let mut candidates: Vec<(f64, u32, usize)> = Vec::with_capacity(live.len() * k);
        for (i, (log_probs, _, _)) in steps.iter().enumerate() {
            for (tok, &lp) in log_probs.row(0).iter().enumerate() {
                candidates.push((live[i].log_prob + lp, tok as u32, i));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(beam_size);

        let mut next_live = Vec::with_capacity(beam_size);
        for (log_prob, tok, parent) in candidates {
            let (_, next_state, weights) = &steps[parent];
            let mut child = live[parent].clone();
            child.tokens.push(tok);
            child.log_prob = log_prob;
            child.state = next_state.clone();
            child.trace_rows.push(weights.clone());
            child.finished = tok == END || depth + 1 >= max_len;
            if child.finished {
                completed.push(child);
            } else {
                next_live.push(child);
            }
        }
        live = next_live;
    }

    let mut ranked = if completed.is_empty() { live } else { completed };
    ranked.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    Ok(ranked)
}
