//! Full-batch SGD with momentum for the attention variant, plus the
//! forward helpers shared by evaluation and the CLI.

use crate::error::{Error, Result};
use crate::frame::FrameBuffer;
use crate::tensor::autodiff::Tape;
use crate::tensor::{FlopCounter, Tensor};
use crate::track::Track;
use crate::zoom::{auto_zoom_clip, ZoomParams};

use super::{logits_taped, stage_model, AttentionModel, ReasonConfig, TapedModel};

#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 0.005,
            momentum: 0.9,
            epochs: 800,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub losses: Vec<f64>,
}

/// Flatten frames to one grayscale row each: `[T x (w*h)]`. Multi-channel
/// pixels are averaged.
pub fn frames_to_rows(frames: &[FrameBuffer]) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to flatten"));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    let p = (w as usize) * (h as usize);
    let mut data = Vec::with_capacity(frames.len() * p);
    for f in frames {
        if f.width != w || f.height != h {
            return Err(Error::shape(format!(
                "frame size {}x{} differs from first frame {}x{}",
                f.width, f.height, w, h
            )));
        }
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.0;
                for c in 0..f.channels {
                    v += f.get(x, y, c);
                }
                data.push(v / f.channels as f64);
            }
        }
    }
    Tensor::from_vec(vec![frames.len(), p], data)
}

/// Stack grayscale frames into a conv clip tensor `[1 x T x H x W]`.
pub fn frames_to_clip(frames: &[FrameBuffer]) -> Result<Tensor> {
    let rows = frames_to_rows(frames)?;
    let t = rows.shape[0];
    let (w, h) = (frames[0].width as usize, frames[0].height as usize);
    Tensor::from_vec(vec![1, t, h, w], rows.data)
}

/// Run the zoom pipeline on a clip and flatten the result for the model.
pub fn zoomed_input(
    frames: &[FrameBuffer],
    track: &Track,
    zoom: &ZoomParams,
) -> Result<Tensor> {
    let zoomed = auto_zoom_clip(frames, track, zoom)?;
    frames_to_rows(&zoomed.frames)
}

/// Class logits for one clip, `[1 x num_classes]`.
pub fn forward_logits(
    model: &AttentionModel,
    cfg: &ReasonConfig,
    pixels: &Tensor,
    flops: &mut FlopCounter,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let tm = stage_model(&mut tape, model)?;
    let out = logits_taped(&mut tape, &tm, cfg, pixels)?;
    flops.add(tape.flops.total());
    Ok(tape.value(out).clone())
}

pub fn argmax_row(logits: &Tensor) -> usize {
    let mut best = 0;
    for (i, v) in logits.data.iter().enumerate() {
        if *v > logits.data[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy over `(pixels, label)` pairs.
pub fn evaluate(
    model: &AttentionModel,
    cfg: &ReasonConfig,
    data: &[(Tensor, usize)],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut flops = FlopCounter::new();
    let mut hits = 0usize;
    for (pixels, label) in data {
        let logits = forward_logits(model, cfg, pixels, &mut flops)?;
        if argmax_row(&logits) == *label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

fn taped_param_vars(tm: &TapedModel) -> Vec<usize> {
    let mut vars = vec![
        tm.attn.latents,
        tm.embed,
        tm.attn.wq,
        tm.attn.wk,
        tm.attn.wv,
        tm.attn.wo,
    ];
    for layer in &tm.attn.layers {
        vars.extend_from_slice(layer);
    }
    vars.push(tm.head_w);
    vars.push(tm.head_b);
    vars
}

/// Cross-entropy loss for one sample plus its gradient for every weight
/// tensor, in checkpoint order. Weights the loss never touches get zero
/// gradients.
pub fn loss_and_gradients(
    model: &AttentionModel,
    cfg: &ReasonConfig,
    pixels: &Tensor,
    label: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let tm = stage_model(&mut tape, model)?;
    let logits = logits_taped(&mut tape, &tm, cfg, pixels)?;
    let loss = tape.cross_entropy(logits, label)?;
    let value = tape.value(loss).data[0];
    tape.backward(loss)?;
    let grads = taped_param_vars(&tm)
        .into_iter()
        .zip(model.params())
        .map(|(v, p)| match tape.grad(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(p.shape.clone()).expect("param shapes are valid"),
        })
        .collect();
    Ok((value, grads))
}

/// Full-batch gradient descent with momentum. Labels must be valid class
/// indices. Returns the per-epoch loss curve; `model` is updated in place.
pub fn train(
    model: &mut AttentionModel,
    cfg: &ReasonConfig,
    data: &[(Tensor, usize)],
    params: &TrainParams,
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate(cfg)?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if params.lr <= 0.0 || !(0.0..1.0).contains(&params.momentum) || params.epochs == 0 {
        return Err(Error::invalid("lr must be > 0, momentum in [0, 1), epochs >= 1"));
    }
    for (pixels, label) in data {
        if *label >= cfg.num_classes {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                cfg.num_classes
            )));
        }
        if pixels.shape != [cfg.t, cfg.input_dim] {
            return Err(Error::shape(format!(
                "sample shape {:?}, config expects {:?}",
                pixels.shape,
                [cfg.t, cfg.input_dim]
            )));
        }
    }

    let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape.clone()).collect();
    let mut velocity: Vec<Tensor> = shapes
        .iter()
        .map(|s| Tensor::zeros(s.clone()).expect("param shapes are valid"))
        .collect();
    let mut losses = Vec::with_capacity(params.epochs);
    let inv_batch = 1.0 / data.len() as f64;

    for _ in 0..params.epochs {
        let mut grads: Vec<Tensor> = shapes
            .iter()
            .map(|s| Tensor::zeros(s.clone()).expect("param shapes are valid"))
            .collect();
        let mut epoch_loss = 0.0;
        for (pixels, label) in data {
            let (loss, sample_grads) = loss_and_gradients(model, cfg, pixels, *label)?;
            epoch_loss += loss;
            for (acc, g) in grads.iter_mut().zip(&sample_grads) {
                for (a, v) in acc.data.iter_mut().zip(&g.data) {
                    *a += v;
                }
            }
        }
        losses.push(epoch_loss * inv_batch);

        let mut targets = model.params_mut();
        for (slot, target) in targets.iter_mut().enumerate() {
            for i in 0..target.data.len() {
                let g = grads[slot].data[i] * inv_batch;
                velocity[slot].data[i] = params.momentum * velocity[slot].data[i] + g;
                target.data[i] -= params.lr * velocity[slot].data[i];
            }
        }
    }
    Ok(TrainReport { losses })
}
