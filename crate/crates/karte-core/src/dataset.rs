//! Sample bookkeeping: exclusion filtering, frequency thresholding,
//! stratified splitting and the per-epoch imbalance samplers.
//!
//! Everything here is pure; manifest parsing and image decoding live in the
//! companion crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::RngState;

/// One image/finding pair. An image annotated with several findings
/// appears as several samples sharing `image_path`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub image_path: String,
    pub finding: String,
    /// Optional class label used only for encoder pre-training.
    pub class_label: Option<String>,
    /// True when the finding equals the configured normal string.
    pub is_normal: bool,
}

impl Sample {
    pub fn new(image_path: impl Into<String>, finding: impl Into<String>, normal: &str) -> Self {
        let finding = finding.into();
        let is_normal = finding == normal;
        Sample {
            image_path: image_path.into(),
            finding,
            class_label: None,
            is_normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    EmptyAfterThreshold { threshold: usize },
    TooFewSamples { have: usize, need: usize },
    NoAbnormalSamples,
    NoNormalSamples,
    BadRatios,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::EmptyAfterThreshold { threshold } => {
                write!(f, "no samples survive the frequency threshold {threshold}")
            }
            DatasetError::TooFewSamples { have, need } => {
                write!(f, "need at least {need} samples to split, have {have}")
            }
            DatasetError::NoAbnormalSamples => write!(f, "epoch planning needs at least one abnormal sample"),
            DatasetError::NoNormalSamples => write!(f, "epoch planning needs at least one normal sample"),
            DatasetError::BadRatios => write!(f, "split ratios must be positive and sum to 1"),
        }
    }
}

impl core::error::Error for DatasetError {}

/// Verbatim or prefix match against the finding text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExclusionRule {
    Exact(String),
    Prefix(String),
}

impl ExclusionRule {
    fn matches(&self, finding: &str) -> bool {
        match self {
            ExclusionRule::Exact(s) => finding == s,
            ExclusionRule::Prefix(p) => finding.starts_with(p.as_str()),
        }
    }
}

/// Drops samples matching any rule; returns the survivors plus the removal
/// count per rule (first matching rule wins).
pub fn apply_exclusions(
    samples: Vec<Sample>,
    rules: &[ExclusionRule],
) -> (Vec<Sample>, Vec<usize>) {
    let mut counts = alloc::vec![0usize; rules.len()];
    let kept = samples
        .into_iter()
        .filter(|s| {
            for (i, rule) in rules.iter().enumerate() {
                if rule.matches(&s.finding) {
                    counts[i] += 1;
                    return false;
                }
            }
            true
        })
        .collect();
    (kept, counts)
}

/// Keeps samples whose finding occurs at least `threshold` times in the
/// full list.
pub fn threshold_filter(samples: Vec<Sample>, threshold: usize) -> Result<Vec<Sample>, DatasetError> {
    assert!(threshold >= 1);
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &samples {
        *freq.entry(s.finding.as_str()).or_insert(0) += 1;
    }
    let keep: Vec<bool> = samples
        .iter()
        .map(|s| freq[s.finding.as_str()] >= threshold)
        .collect();
    let kept: Vec<Sample> = samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::EmptyAfterThreshold { threshold });
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub threshold: usize,
}

/// Stratified 80/10/10 split by finding class. Classes with fewer than 3
/// unique (image, finding) pairs go wholly to train. Duplicated pairs stay
/// together so the splits are disjoint by pair.
pub fn split_dataset(
    samples: &[Sample],
    ratios: (f64, f64, f64),
    threshold: usize,
    rng: &mut RngState,
) -> Result<DatasetSplit, DatasetError> {
    let (r_train, r_val, r_test) = ratios;
    if r_train <= 0.0 || r_val < 0.0 || r_test < 0.0 || ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios);
    }
    if samples.len() < 3 {
        return Err(DatasetError::TooFewSamples {
            have: samples.len(),
            need: 3,
        });
    }

    // finding -> unique (path, finding) -> sample indices
    let mut classes: BTreeMap<&str, BTreeMap<(&str, &str), Vec<usize>>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        classes
            .entry(s.finding.as_str())
            .or_default()
            .entry((s.image_path.as_str(), s.finding.as_str()))
            .or_default()
            .push(i);
    }

    let round_half_up = |x: f64| libm::floor(x + 0.5) as usize;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (_, pairs) in classes {
        let mut groups: Vec<&Vec<usize>> = pairs.values().collect();
        let n = groups.len();
        if n < 3 {
            for g in groups {
                train.extend(g.iter().map(|&i| samples[i].clone()));
            }
            continue;
        }
        rng.shuffle(&mut groups);
        let n_val = round_half_up(n as f64 * r_val);
        let n_test = round_half_up(n as f64 * r_test);
        let n_train = n - n_val - n_test;
        for (gi, g) in groups.iter().enumerate() {
            let bucket = if gi < n_train {
                &mut train
            } else if gi < n_train + n_val {
                &mut validation
            } else {
                &mut test
            };
            bucket.extend(g.iter().map(|&i| samples[i].clone()));
        }
    }
    Ok(DatasetSplit {
        train,
        validation,
        test,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Oversample,
    Undersample,
    Natural,
}

impl SamplingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingMode::Oversample => "over",
            SamplingMode::Undersample => "under",
            SamplingMode::Natural => "natural",
        }
    }
}

/// Indices into the training sample list, in consumption order for one
/// epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub order: Vec<usize>,
    pub mode: SamplingMode,
    pub abnormal_count: usize,
    pub normal_count: usize,
}

fn group_abnormal(samples: &[Sample]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if !s.is_normal {
            groups.entry(s.finding.as_str()).or_default().push(i);
        }
    }
    groups
}

fn normal_indices(samples: &[Sample]) -> Vec<usize> {
    samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.is_normal.then_some(i))
        .collect()
}

/// Draws `count` indices from `pool` without replacement, falling back to
/// replacement when the pool is too small.
fn draw(pool: &[usize], count: usize, rng: &mut RngState) -> Vec<usize> {
    if count <= pool.len() {
        let mut shuffled = pool.to_vec();
        rng.shuffle(&mut shuffled);
        shuffled.truncate(count);
        shuffled
    } else {
        (0..count).map(|_| pool[rng.below(pool.len())]).collect()
    }
}

/// Every abnormal class contributes exactly `per_class` entries (whole
/// copies first, so each original appears when the class is smaller than
/// `per_class`; a random subset when it is larger). Normals are then drawn
/// to equal the abnormal total. Call once per epoch for a fresh normal
/// draw.
pub fn plan_epoch_oversample(
    samples: &[Sample],
    per_class: usize,
    rng: &mut RngState,
) -> Result<EpochPlan, DatasetError> {
    assert!(per_class >= 1);
    let groups = group_abnormal(samples);
    if groups.is_empty() {
        return Err(DatasetError::NoAbnormalSamples);
    }
    let normals = normal_indices(samples);
    if normals.is_empty() {
        return Err(DatasetError::NoNormalSamples);
    }

    let mut order = Vec::new();
    for (_, members) in &groups {
        if members.len() >= per_class {
            order.extend(draw(members, per_class, rng));
        } else {
            let copies = per_class / members.len();
            for _ in 0..copies {
                order.extend_from_slice(members);
            }
            order.extend(draw(members, per_class % members.len(), rng));
        }
    }
    let abnormal_count = order.len();
    debug_assert_eq!(abnormal_count, per_class * groups.len());
    let normal_draw = draw(&normals, abnormal_count, rng);
    let normal_count = normal_draw.len();
    order.extend(normal_draw);
    rng.shuffle(&mut order);
    Ok(EpochPlan {
        order,
        mode: SamplingMode::Oversample,
        abnormal_count,
        normal_count,
    })
}

/// All abnormal samples exactly once; normals drawn to the rounded mean
/// abnormal class size (half away from zero). Call once per epoch.
pub fn plan_epoch_undersample(samples: &[Sample], rng: &mut RngState) -> Result<EpochPlan, DatasetError> {
    let groups = group_abnormal(samples);
    if groups.is_empty() {
        return Err(DatasetError::NoAbnormalSamples);
    }
    let normals = normal_indices(samples);
    if normals.is_empty() {
        return Err(DatasetError::NoNormalSamples);
    }
    let mut order = Vec::new();
    for (_, members) in &groups {
        order.extend_from_slice(members);
    }
    let abnormal_count = order.len();
    let mean = abnormal_count as f64 / groups.len() as f64;
    let normal_count = libm::round(mean) as usize;
    order.extend(draw(&normals, normal_count, rng));
    rng.shuffle(&mut order);
    Ok(EpochPlan {
        order,
        mode: SamplingMode::Undersample,
        abnormal_count,
        normal_count,
    })
}

/// Natural distribution: every training sample once, shuffled.
pub fn plan_epoch_natural(samples: &[Sample], rng: &mut RngState) -> EpochPlan {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    let normal_count = samples.iter().filter(|s| s.is_normal).count();
    EpochPlan {
        abnormal_count: order.len() - normal_count,
        normal_count,
        order,
        mode: SamplingMode::Natural,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    const NORMAL: &str = "異常なし";

    fn sample(path: &str, finding: &str) -> Sample {
        Sample::new(path, finding, NORMAL)
    }

    fn synthetic(n_per_class: &[(&str, usize)]) -> Vec<Sample> {
        let mut out = Vec::new();
        for (finding, count) in n_per_class {
            for i in 0..*count {
                out.push(sample(&format!("{finding}_{i}.png"), finding));
            }
        }
        out
    }

    #[test]
    fn exclusions_match_exact_and_prefix() {
        let samples = vec![
            sample("a.png", "前回と変化なし"),
            sample("b.png", NORMAL),
            sample("c.png", "手入力 部位"),
        ];
        let rules = [
            ExclusionRule::Exact("前回と変化なし".to_string()),
            ExclusionRule::Prefix("手入力".to_string()),
        ];
        let (kept, counts) = apply_exclusions(samples, &rules);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].finding, NORMAL);
        assert_eq!(counts, vec![1, 1]);
    }

    #[test]
    fn empty_rule_list_is_identity() {
        let samples = vec![sample("a.png", NORMAL)];
        let (kept, counts) = apply_exclusions(samples.clone(), &[]);
        assert_eq!(kept, samples);
        assert!(counts.is_empty());
    }

    #[test]
    fn threshold_one_is_identity() {
        let samples = synthetic(&[("x", 2), ("y", 1)]);
        let kept = threshold_filter(samples.clone(), 1).unwrap();
        assert_eq!(kept, samples);
    }

    #[test]
    fn threshold_boundary_removes_below() {
        let samples = synthetic(&[("four", 4), ("five", 5)]);
        let kept = threshold_filter(samples, 5).unwrap();
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().all(|s| s.finding == "five"));
    }

    #[test]
    fn threshold_empty_result_is_an_error() {
        let samples = synthetic(&[("x", 2)]);
        assert!(matches!(
            threshold_filter(samples, 3),
            Err(DatasetError::EmptyAfterThreshold { threshold: 3 })
        ));
    }

    #[test]
    fn threshold_filter_is_monotone() {
        let samples = synthetic(&[("a", 3), ("b", 7), ("c", 12), (NORMAL, 20)]);
        let t5 = threshold_filter(samples.clone(), 5).unwrap();
        let t12 = threshold_filter(samples, 12).unwrap();
        for s in &t12 {
            assert!(t5.contains(s));
        }
    }

    #[test]
    fn split_ten_of_one_class_is_8_1_1() {
        let samples = synthetic(&[("x", 10)]);
        let mut rng = RngState::new(5);
        let split = split_dataset(&samples, (0.8, 0.1, 0.1), 1, &mut rng).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let samples = synthetic(&[("x", 10), ("y", 7), (NORMAL, 30)]);
        let a = split_dataset(&samples, (0.8, 0.1, 0.1), 1, &mut RngState::new(9)).unwrap();
        let b = split_dataset(&samples, (0.8, 0.1, 0.1), 1, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_small_classes_go_to_train() {
        let samples = synthetic(&[("rare", 2), ("common", 10)]);
        let split = split_dataset(&samples, (0.8, 0.1, 0.1), 1, &mut RngState::new(1)).unwrap();
        let rare_in_train = split.train.iter().filter(|s| s.finding == "rare").count();
        assert_eq!(rare_in_train, 2);
    }

    #[test]
    fn split_keeps_duplicate_pairs_together() {
        // the same (path, finding) pair appearing twice must not straddle splits
        let mut samples = synthetic(&[("x", 9)]);
        samples.push(samples[0].clone());
        let split = split_dataset(&samples, (0.8, 0.1, 0.1), 1, &mut RngState::new(3)).unwrap();
        for bucket in [&split.train, &split.validation, &split.test] {
            let dup = bucket.iter().filter(|s| **s == samples[0]).count();
            assert!(dup == 0 || dup == 2, "duplicate pair split across buckets");
        }
    }

    #[test]
    fn split_rejects_tiny_or_bad_input() {
        let samples = synthetic(&[("x", 2)]);
        assert!(split_dataset(&samples, (0.8, 0.1, 0.1), 1, &mut RngState::new(0)).is_err());
        let samples = synthetic(&[("x", 5)]);
        assert!(split_dataset(&samples, (0.5, 0.2, 0.2), 1, &mut RngState::new(0)).is_err());
    }

    #[test]
    fn oversample_arithmetic_from_rule() {
        // 2 abnormal classes at per_class 100 -> 200 abnormal + 200 normal
        let samples = synthetic(&[("a", 3), ("b", 150), (NORMAL, 400)]);
        let plan = plan_epoch_oversample(&samples, 100, &mut RngState::new(2)).unwrap();
        assert_eq!(plan.abnormal_count, 200);
        assert_eq!(plan.normal_count, 200);
        assert_eq!(plan.order.len(), 400);
    }

    #[test]
    fn oversample_small_class_keeps_every_original() {
        let samples = synthetic(&[("a", 3), (NORMAL, 500)]);
        for seed in 0..20 {
            let plan = plan_epoch_oversample(&samples, 100, &mut RngState::new(seed)).unwrap();
            let mut per_original = [0usize; 3];
            for &i in &plan.order {
                if samples[i].finding == "a" {
                    per_original[i] += 1;
                }
            }
            assert!(per_original.iter().all(|&c| c >= 1), "seed {seed}: {per_original:?}");
            assert_eq!(per_original.iter().sum::<usize>(), 100);
        }
    }

    #[test]
    fn oversample_large_class_truncates_without_replacement() {
        let samples = synthetic(&[("big", 150), (NORMAL, 200)]);
        let plan = plan_epoch_oversample(&samples, 100, &mut RngState::new(4)).unwrap();
        let mut seen = vec![0usize; samples.len()];
        for &i in &plan.order {
            if samples[i].finding == "big" {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c <= 1));
        assert_eq!(seen.iter().sum::<usize>(), 100);
    }

    #[test]
    fn oversample_is_seed_deterministic() {
        let samples = synthetic(&[("a", 5), ("b", 9), (NORMAL, 300)]);
        let p1 = plan_epoch_oversample(&samples, 100, &mut RngState::new(7)).unwrap();
        let p2 = plan_epoch_oversample(&samples, 100, &mut RngState::new(7)).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn oversample_requires_both_sides() {
        let only_normal = synthetic(&[(NORMAL, 10)]);
        assert!(matches!(
            plan_epoch_oversample(&only_normal, 10, &mut RngState::new(0)),
            Err(DatasetError::NoAbnormalSamples)
        ));
        let only_abnormal = synthetic(&[("a", 10)]);
        assert!(matches!(
            plan_epoch_oversample(&only_abnormal, 10, &mut RngState::new(0)),
            Err(DatasetError::NoNormalSamples)
        ));
    }

    #[test]
    fn undersample_mean_arithmetic() {
        // abnormal classes sized {10, 30} -> 20 normals, plan size 60
        let samples = synthetic(&[("a", 10), ("b", 30), (NORMAL, 100)]);
        let plan = plan_epoch_undersample(&samples, &mut RngState::new(6)).unwrap();
        assert_eq!(plan.abnormal_count, 40);
        assert_eq!(plan.normal_count, 20);
        assert_eq!(plan.order.len(), 60);
        // every abnormal appears exactly once
        let mut count = vec![0usize; samples.len()];
        for &i in &plan.order {
            count[i] += 1;
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_normal {
                assert_eq!(count[i], 1);
            }
        }
    }

    #[test]
    fn undersample_is_seed_deterministic() {
        let samples = synthetic(&[("a", 4), (NORMAL, 50)]);
        let p1 = plan_epoch_undersample(&samples, &mut RngState::new(8)).unwrap();
        let p2 = plan_epoch_undersample(&samples, &mut RngState::new(8)).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn natural_plan_is_a_permutation() {
        let samples = synthetic(&[("a", 4), (NORMAL, 6)]);
        let plan = plan_epoch_natural(&samples, &mut RngState::new(10));
        let mut order = plan.order.clone();
        order.sort_unstable();
        assert_eq!(order, (0..10).collect::<Vec<usize>>());
        assert_eq!(plan.abnormal_count, 4);
        assert_eq!(plan.normal_count, 6);
    }
}
