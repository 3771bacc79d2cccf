//! Central finite-difference verification of analytic gradients.

use crate::tensor::Parameter;
use alloc::string::String;
use alloc::vec::Vec;

/// Anything exposing named parameter groups, in a stable order.
pub trait ParamSet {
    fn groups(&self) -> Vec<&Parameter>;
    fn groups_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grads(&mut self) {
        for p in self.groups_mut() {
            p.zero_grad();
        }
    }
}

/// `|a − n| / (|a| + |n|)` with an absolute floor so exact zeros compare
/// clean. A backward pass that is wrong by a factor of two reports ≈ 1/3.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-9 {
        return 0.0;
    }
    diff / (analytic.abs() + numeric.abs()).max(1e-12)
}

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub elements_checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub epsilon: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err() < tolerance
    }

    /// Worst group first; useful for reporting.
    pub fn worst(&self) -> Option<&GroupCheck> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares analytic gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every parameter group of `model`.
///
/// `run(model, with_backward)` must return the scalar loss; when
/// `with_backward` is true it must also accumulate gradients. The closure
/// has to be deterministic across calls (fix any RNG state inside it).
/// `stride` subsamples elements within a group (1 = every element).
pub fn finite_diff_check<M, F>(model: &mut M, mut run: F, eps: f64, stride: usize) -> GradCheckReport
where
    M: ParamSet,
    F: FnMut(&mut M, bool) -> f64,
{
    assert!(stride >= 1);
    model.zero_grads();
    let _ = run(model, true);
    let analytic: Vec<(String, Vec<f64>)> = model
        .groups()
        .iter()
        .map(|p| {
            let g = p.value.grad().map(|g| g.to_vec()).unwrap_or_default();
            (p.name.clone(), g)
        })
        .collect();

    let mut groups = Vec::new();
    for (gi, (name, grads)) in analytic.iter().enumerate() {
        let mut max_rel = 0.0f64;
        let mut checked = 0usize;
        let len = model.groups()[gi].value.len();
        for idx in (0..len).step_by(stride) {
            let orig = model.groups()[gi].value.data()[idx];
            model.groups_mut()[gi].value.data_mut()[idx] = orig + eps;
            let up = run(model, false);
            model.groups_mut()[gi].value.data_mut()[idx] = orig - eps;
            let down = run(model, false);
            model.groups_mut()[gi].value.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grads.get(idx).copied().unwrap_or(0.0);
            max_rel = max_rel.max(relative_error(a, numeric));
            checked += 1;
        }
        groups.push(GroupCheck {
            name: name.clone(),
            max_rel_err: max_rel,
            elements_checked: checked,
        });
    }
    GradCheckReport { groups, epsilon: eps }
}
