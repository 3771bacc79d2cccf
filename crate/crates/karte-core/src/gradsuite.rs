//! The runnable gradient-verification suite: every layer's backward and
//! the full encoder → attention → decoder → loss composition, each checked
//! against central finite differences on a fixed-seed tiny instance.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{attend, attend_backward, AttentionParams};
use crate::decoder::PaddedTargets;
use crate::encoder::{EncoderConfig, StageConfig};
use crate::gradcheck::{finite_diff_check, GradCheckReport, ParamSet};
use crate::model::{CaptionModel, ModelConfig};
use crate::ops::activation::{relu, relu_backward, softmax, softmax_backward};
use crate::ops::conv::{conv2d, conv2d_backward, maxpool2d, maxpool2d_backward};
use crate::ops::dense::{dense, dense_backward};
use crate::ops::dropout::{dropout, dropout_backward};
use crate::ops::lstm::{lstm_cell, lstm_cell_backward, LstmParams};
use crate::rng::RngState;
use crate::tensor::{Parameter, Tensor};
use crate::vocab::{TokenSequence, END, START};

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub check: String,
    pub group: String,
    pub max_rel_err: f64,
}

/// Flat bag of named parameters driven by a per-check closure.
struct Probe {
    params: Vec<Parameter>,
}

impl ParamSet for Probe {
    fn groups(&self) -> Vec<&Parameter> {
        self.params.iter().collect()
    }
    fn groups_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }
}

fn proj(rng: &mut RngState, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn collect(check: &str, report: &GradCheckReport, out: &mut Vec<SuiteEntry>) {
    for g in &report.groups {
        out.push(SuiteEntry {
            check: check.into(),
            group: g.name.clone(),
            max_rel_err: g.max_rel_err,
        });
    }
}

/// Runs every check and returns one entry per parameter group. All the
/// instances are seeded, so the suite is reproducible.
pub fn run_full_suite(eps: f64) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    let mut rng = RngState::new(0xC0FFEE);

    // dense
    {
        let mut probe = Probe {
            params: vec![
                Parameter::new("dense.x", Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng)),
                Parameter::new("dense.w", Tensor::uniform(&[4, 2], -1.0, 1.0, &mut rng)),
                Parameter::new("dense.b", Tensor::uniform(&[2], -1.0, 1.0, &mut rng)),
            ],
        };
        let p = proj(&mut rng, 6);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let y = dense(&m.params[0].value.clone(), &m.params[1], &m.params[2]).unwrap();
                if wb {
                    let dy = Tensor::from_vec(y.shape(), p.clone());
                    let x = m.params[0].value.clone();
                    let (head, tail) = m.params.split_at_mut(2);
                    let dx = dense_backward(&x, &mut head[1], &mut tail[0], &dy);
                    for (g, &d) in head[0].value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                }
                dot(y.data(), &p)
            },
            eps,
            1,
        );
        collect("dense", &report, &mut out);
    }

    // conv2d
    {
        let mut probe = Probe {
            params: vec![
                Parameter::new("conv.x", Tensor::uniform(&[1, 2, 6, 6], -1.0, 1.0, &mut rng)),
                Parameter::new("conv.kernels", Tensor::uniform(&[3, 2, 3, 3], -0.5, 0.5, &mut rng)),
                Parameter::new("conv.bias", Tensor::uniform(&[3], -0.5, 0.5, &mut rng)),
            ],
        };
        let p = proj(&mut rng, 3 * 36);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let x = m.params[0].value.clone();
                let (y, cache) = conv2d(&x, &m.params[1], &m.params[2], 1, 1).unwrap();
                if wb {
                    let dy = Tensor::from_vec(y.shape(), p.clone());
                    let (head, tail) = m.params.split_at_mut(2);
                    let dx = conv2d_backward(&cache, &mut head[1], &mut tail[0], &dy);
                    for (g, &d) in head[0].value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                }
                dot(y.data(), &p)
            },
            eps,
            1,
        );
        collect("conv2d", &report, &mut out);
    }

    // maxpool2d
    {
        let mut probe = Probe {
            params: vec![Parameter::new(
                "maxpool.x",
                Tensor::uniform(&[1, 2, 6, 6], -1.0, 1.0, &mut rng),
            )],
        };
        let p = proj(&mut rng, 2 * 9);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let x = m.params[0].value.clone();
                let (y, cache) = maxpool2d(&x, 2, 2).unwrap();
                if wb {
                    let dy = Tensor::from_vec(y.shape(), p.clone());
                    let dx = maxpool2d_backward(&cache, &dy);
                    for (g, &d) in m.params[0].value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                }
                dot(y.data(), &p)
            },
            eps,
            1,
        );
        collect("maxpool2d", &report, &mut out);
    }

    // relu, inputs kept away from the kink
    {
        let mut vals = Vec::new();
        while vals.len() < 12 {
            let v = rng.uniform(-2.0, 2.0);
            if v.abs() >= 1e-3 {
                vals.push(v);
            }
        }
        let mut probe = Probe {
            params: vec![Parameter::new("relu.x", Tensor::from_vec(&[12], vals))],
        };
        let p = proj(&mut rng, 12);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let x = m.params[0].value.clone();
                let y = relu(&x);
                if wb {
                    let dy = Tensor::from_vec(y.shape(), p.clone());
                    let dx = relu_backward(&x, &dy);
                    for (g, &d) in m.params[0].value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                }
                dot(y.data(), &p)
            },
            eps,
            1,
        );
        collect("relu", &report, &mut out);
    }

    // softmax
    {
        let mut probe = Probe {
            params: vec![Parameter::new(
                "softmax.x",
                Tensor::uniform(&[2, 5], -2.0, 2.0, &mut rng),
            )],
        };
        let p = proj(&mut rng, 10);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let x = m.params[0].value.clone();
                let y = softmax(&x, 1).unwrap();
                if wb {
                    let dy = Tensor::from_vec(y.shape(), p.clone());
                    let dx = softmax_backward(&y, &dy, 1);
                    for (g, &d) in m.params[0].value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                }
                dot(y.data(), &p)
            },
            eps,
            1,
        );
        collect("softmax", &report, &mut out);
    }

    // dropout with a fixed mask stream
    {
        let mut probe = Probe {
            params: vec![Parameter::new(
                "dropout.x",
                Tensor::uniform(&[20], -1.0, 1.0, &mut rng),
            )],
        };
        let p = proj(&mut rng, 20);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let x = m.params[0].value.clone();
                let mut mask_rng = RngState::new(99);
                let (y, mask) = dropout(&x, 0.5, &mut mask_rng, true).unwrap();
                if wb {
                    let dy = Tensor::from_vec(y.shape(), p.clone());
                    let dx = dropout_backward(&mask, &dy);
                    for (g, &d) in m.params[0].value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                }
                dot(y.data(), &p)
            },
            eps,
            1,
        );
        collect("dropout", &report, &mut out);
    }

    // lstm cell: 8 weight/bias groups plus the three inputs
    {
        struct LstmProbe {
            lstm: LstmParams,
            x: Parameter,
            h: Parameter,
            c: Parameter,
        }
        impl ParamSet for LstmProbe {
            fn groups(&self) -> Vec<&Parameter> {
                let mut v: Vec<&Parameter> = self.lstm.params().to_vec();
                v.push(&self.x);
                v.push(&self.h);
                v.push(&self.c);
                v
            }
            fn groups_mut(&mut self) -> Vec<&mut Parameter> {
                let mut v: Vec<&mut Parameter> = self.lstm.params_mut().into_iter().collect();
                v.push(&mut self.x);
                v.push(&mut self.h);
                v.push(&mut self.c);
                v
            }
        }
        let mut probe = LstmProbe {
            lstm: LstmParams::init("lstm", 3, 4, &mut rng),
            x: Parameter::new("lstm.x", Tensor::uniform(&[2, 3], -1.0, 1.0, &mut rng)),
            h: Parameter::new("lstm.h_prev", Tensor::uniform(&[2, 4], -1.0, 1.0, &mut rng)),
            c: Parameter::new("lstm.c_prev", Tensor::uniform(&[2, 4], -1.0, 1.0, &mut rng)),
        };
        let ph = proj(&mut rng, 8);
        let pc = proj(&mut rng, 8);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let (h, c, cache) =
                    lstm_cell(&m.x.value.clone(), &m.h.value.clone(), &m.c.value.clone(), &m.lstm)
                        .unwrap();
                if wb {
                    let dh = Tensor::from_vec(&[2, 4], ph.clone());
                    let dc = Tensor::from_vec(&[2, 4], pc.clone());
                    let (dx, dhp, dcp) = lstm_cell_backward(&cache, &mut m.lstm, &dh, &dc);
                    for (g, &d) in m.x.value.grad_mut().iter_mut().zip(dx.data().iter()) {
                        *g += d;
                    }
                    for (g, &d) in m.h.value.grad_mut().iter_mut().zip(dhp.data().iter()) {
                        *g += d;
                    }
                    for (g, &d) in m.c.value.grad_mut().iter_mut().zip(dcp.data().iter()) {
                        *g += d;
                    }
                }
                dot(h.data(), &ph) + dot(c.data(), &pc)
            },
            eps,
            1,
        );
        collect("lstm_cell", &report, &mut out);
    }

    // attention: four parameter groups plus annotations and hidden state
    {
        struct AttnProbe {
            att: AttentionParams,
            a: Parameter,
            h: Parameter,
        }
        impl ParamSet for AttnProbe {
            fn groups(&self) -> Vec<&Parameter> {
                let mut v: Vec<&Parameter> = self.att.params().to_vec();
                v.push(&self.a);
                v.push(&self.h);
                v
            }
            fn groups_mut(&mut self) -> Vec<&mut Parameter> {
                let mut v: Vec<&mut Parameter> = self.att.params_mut().into_iter().collect();
                v.push(&mut self.a);
                v.push(&mut self.h);
                v
            }
        }
        let mut probe = AttnProbe {
            att: AttentionParams::init("att", 3, 4, 4, &mut rng),
            a: Parameter::new("att.annotations", Tensor::uniform(&[2, 5, 3], -1.0, 1.0, &mut rng)),
            h: Parameter::new("att.h_prev", Tensor::uniform(&[2, 4], -1.0, 1.0, &mut rng)),
        };
        let pz = proj(&mut rng, 6);
        let pw = proj(&mut rng, 10);
        let report = finite_diff_check(
            &mut probe,
            |m, wb| {
                let (step, cache) = attend(&m.a.value.clone(), &m.h.value.clone(), &m.att).unwrap();
                if wb {
                    let dz = Tensor::from_vec(&[2, 3], pz.clone());
                    let dw = Tensor::from_vec(&[2, 5], pw.clone());
                    let (da, dh) = attend_backward(&cache, &mut m.att, &dz, Some(&dw));
                    for (g, &d) in m.a.value.grad_mut().iter_mut().zip(da.data().iter()) {
                        *g += d;
                    }
                    for (g, &d) in m.h.value.grad_mut().iter_mut().zip(dh.data().iter()) {
                        *g += d;
                    }
                }
                dot(step.context.data(), &pz) + dot(step.weights.data(), &pw)
            },
            eps,
            1,
        );
        collect("attend", &report, &mut out);
    }

    // full composition through the caption loss, dropout active
    {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                in_channels: 1,
                image_size: 8,
                kernel: 3,
                stages: vec![
                    StageConfig { out_channels: 2, pool: true },
                    StageConfig { out_channels: 3, pool: false },
                ],
                pretrain_classes: 3,
            },
            vocab_size: 6,
            hidden: 5,
            attn_width: 4,
            dropout: 0.5,
            lambda: 1.0,
        };
        let mut model = CaptionModel::init(cfg, &mut rng).unwrap();
        let images = Tensor::uniform(&[2, 1, 8, 8], -1.0, 1.0, &mut rng);
        let targets = PaddedTargets::from_sequences(&[
            TokenSequence::from_ids(vec![START, 4, 5, END], true),
            TokenSequence::from_ids(vec![START, 5, END], true),
        ])
        .unwrap();
        let report = finite_diff_check(
            &mut model,
            |m, wb| {
                let mut drop_rng = RngState::new(4321);
                if wb {
                    m.train_batch(&images, &targets, &mut drop_rng, true).unwrap().0
                } else {
                    m.batch_loss(&images, &targets, &mut drop_rng, true).unwrap()
                }
            },
            eps,
            1,
        );
        collect("composition", &report, &mut out);
    }

    out
}

/// Worst entry of the suite; the acceptance gate compares it to 1e-4.
pub fn worst_entry(entries: &[SuiteEntry]) -> Option<&SuiteEntry> {
    entries.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
}

/// One printable line per entry.
pub fn format_entry(e: &SuiteEntry) -> String {
    format!("{:<12} {:<24} {:.3e}", e.check, e.group, e.max_rel_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes_at_1e4() {
        let entries = run_full_suite(1e-5);
        assert!(entries.len() > 25, "suite has {} entries", entries.len());
        let worst = worst_entry(&entries).unwrap();
        assert!(
            worst.max_rel_err < 1e-4,
            "worst: {} / {} = {}",
            worst.check,
            worst.group,
            worst.max_rel_err
        );
        // every layer family is represented
        for check in ["dense", "conv2d", "maxpool2d", "relu", "softmax", "dropout", "lstm_cell", "attend", "composition"] {
            assert!(entries.iter().any(|e| e.check == check), "missing {check}");
        }
    }
}
