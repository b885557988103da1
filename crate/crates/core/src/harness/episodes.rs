//! Episode samplers for the small-sample image protocol and the few-shot
//! protocol, plus the scoring they need.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};

use super::stats::{accuracy, MeanStd};
use crate::error::{input_err, Result};
use crate::gram::GramMatrix;
use crate::ridge::{argmax_rows, one_hot, ridge_fit_with_fallback, ridge_predict};
use crate::rng::{stream_id, stream_rng};
use crate::svm::{svm_decision, svm_fit, ClassWeights, DEFAULT_TOL};

const SUBSAMPLE_STREAM: u64 = 0x7375_6273;
const FEWSHOT_STREAM: u64 = 0x6665_7773;

/// Negatives drawn per positive in a few-shot training set.
pub const FEWSHOT_NEGATIVE_RATIO: usize = 19;

/// Positive-to-negative cost multiplier used for few-shot SVMs.
pub const FEWSHOT_CLASS_WEIGHTS: ClassWeights = ClassWeights { positive: 2.0, negative: 1.0 };

fn members_by_class(labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l < classes {
            by_class[l].push(i);
        }
    }
    by_class
}

/// One class-balanced sample of `n` pool indices per repeat, drawn
/// without replacement (`n / classes` from each class).
pub fn subsample_protocol(
    labels: &[usize],
    classes: usize,
    n: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if classes == 0 || n == 0 || n % classes != 0 {
        return Err(input_err!("sample size {n} is not divisible by {classes} classes"));
    }
    let per_class = n / classes;
    let by_class = members_by_class(labels, classes);
    if let Some(c) = by_class.iter().position(|m| m.len() < per_class) {
        return Err(input_err!("class {c} has {} members, need {per_class}", by_class[c].len()));
    }
    Ok((0..repeats)
        .map(|r| {
            let mut rng = stream_rng(seed, stream_id(&[SUBSAMPLE_STREAM, r as u64]));
            let mut sample: Vec<usize> = by_class
                .iter()
                .flat_map(|m| m.choose_multiple(&mut rng, per_class).copied().collect::<Vec<_>>())
                .collect();
            sample.sort_unstable();
            sample
        })
        .collect())
}

/// Kernel regression on one-hot targets, predicting the argmax class.
/// Falls back to a small ridge if the train Gram is singular.
pub fn ridge_classify(
    train_gram: &GramMatrix,
    cross_gram: &GramMatrix,
    train_labels: &[usize],
    classes: usize,
    ridge: f64,
) -> Result<Vec<usize>> {
    let model = ridge_fit_with_fallback(train_gram, &one_hot(train_labels, classes), ridge)?;
    Ok(argmax_rows(&ridge_predict(&model, cross_gram)?))
}

pub fn ridge_accuracy(
    train_gram: &GramMatrix,
    cross_gram: &GramMatrix,
    train_labels: &[usize],
    test_labels: &[usize],
    classes: usize,
    ridge: f64,
) -> Result<f64> {
    Ok(accuracy(&ridge_classify(train_gram, cross_gram, train_labels, classes, ridge)?, test_labels))
}

/// Few-shot training set for one class in one repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FewshotEpisode {
    pub class: usize,
    pub repeat: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl FewshotEpisode {
    pub fn train_indices(&self) -> Vec<usize> {
        self.positives.iter().chain(&self.negatives).copied().collect()
    }

    pub fn train_labels(&self) -> Vec<f64> {
        let mut y = vec![1.0; self.positives.len()];
        y.resize(self.positives.len() + self.negatives.len(), -1.0);
        y
    }
}

/// For each class in `classes` and each repeat, `k` positives from that
/// class and `19k` negatives from all other classes of the pool.
pub fn fewshot_episodes(
    labels: &[usize],
    classes: &[usize],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FewshotEpisode>> {
    if k == 0 {
        return Err(input_err!("few-shot needs k >= 1"));
    }
    let mut episodes = Vec::with_capacity(classes.len() * repeats);
    for &c in classes {
        let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let negatives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != c).collect();
        if positives.len() < k {
            return Err(input_err!("class {c} has {} positives, need {k}", positives.len()));
        }
        let need = FEWSHOT_NEGATIVE_RATIO * k;
        if negatives.len() < need {
            return Err(input_err!("class {c} has {} negatives available, need {need}", negatives.len()));
        }
        for r in 0..repeats {
            let mut rng = stream_rng(seed, stream_id(&[FEWSHOT_STREAM, c as u64, k as u64, r as u64]));
            let mut pos: Vec<usize> = positives.choose_multiple(&mut rng, k).copied().collect();
            let mut neg: Vec<usize> = negatives.choose_multiple(&mut rng, need).copied().collect();
            pos.shuffle(&mut rng);
            neg.sort_unstable();
            pos.sort_unstable();
            episodes.push(FewshotEpisode { class: c, repeat: r, positives: pos, negatives: neg });
        }
    }
    Ok(episodes)
}

/// Average precision of a ranking: the mean, over relevant items, of the
/// precision at the score threshold where each is retrieved. Tied scores
/// are retrieved together.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Result<f64> {
    if scores.len() != relevant.len() {
        return Err(input_err!("{} scores for {} relevance flags", scores.len(), relevant.len()));
    }
    let total = relevant.iter().filter(|r| **r).count();
    if total == 0 {
        return Err(input_err!("average precision needs at least one relevant item"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut hits, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut new_hits = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            new_hits += usize::from(relevant[order[j]]);
            j += 1;
        }
        seen += j - i;
        hits += new_hits;
        ap += new_hits as f64 * (hits as f64 / seen as f64);
        i = j;
    }
    Ok(ap / total as f64)
}

/// `2^e` for `e` in `-19..=-4` followed by `10^e` for `e` in `-7..=2`.
pub fn fewshot_costs() -> Vec<f64> {
    let mut costs: Vec<f64> = (-19..=-4).map(|e| libm::pow(2.0, e as f64)).collect();
    costs.extend((-7..=2).map(|e| libm::pow(10.0, e as f64)));
    costs
}

/// Test-set average precision of a 2:1 weighted SVM trained on one
/// episode, for every cost in `costs`. `pool_gram` is the Gram over the
/// training pool and `cross_gram` is pool x test.
pub fn fewshot_episode_ap(
    episode: &FewshotEpisode,
    pool_gram: &GramMatrix,
    cross_gram: &GramMatrix,
    test_labels: &[usize],
    costs: &[f64],
) -> Result<Vec<f64>> {
    let idx = episode.train_indices();
    let y = episode.train_labels();
    let train = pool_gram.select(&idx, &idx);
    let all_test: Vec<usize> = (0..cross_gram.cols()).collect();
    let cross = cross_gram.select(&idx, &all_test);
    let relevant: Vec<bool> = test_labels.iter().map(|&l| l == episode.class).collect();
    costs
        .iter()
        .map(|&c| {
            let model = svm_fit(&train, &y, c, FEWSHOT_CLASS_WEIGHTS, DEFAULT_TOL)?;
            average_precision(&svm_decision(&model, &cross)?, &relevant)
        })
        .collect()
}

/// Mean AP over classes for each repeat, then mean ± std over repeats.
/// `ap[e][c]` holds the AP of episode `e` at cost index `c`.
pub fn map_over_repeats(episodes: &[FewshotEpisode], ap: &[Vec<f64>], classes: &[usize], cost_index: usize) -> MeanStd {
    let repeats = episodes.iter().map(|e| e.repeat + 1).max().unwrap_or(0);
    let per_repeat: Vec<f64> = (0..repeats)
        .map(|r| {
            let vals: Vec<f64> = episodes
                .iter()
                .zip(ap)
                .filter(|(e, _)| e.repeat == r && classes.contains(&e.class))
                .map(|(_, a)| a[cost_index])
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    MeanStd::of(&per_repeat)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FewshotSummary {
    pub k: usize,
    pub costs: Vec<f64>,
    /// Cost chosen on the tuning classes.
    pub selected_cost: f64,
    /// mAP on the held-out classes at the selected cost.
    pub held_out_map: MeanStd,
    /// Best cost over all classes and its mAP.
    pub best_cost: f64,
    pub best_map: MeanStd,
}

/// Picks the cost with the highest mean mAP over `tuning` classes (ties to
/// the smaller cost) and reports it on `held_out`; also reports the
/// best-cost mAP over every class.
pub fn summarize_fewshot(
    k: usize,
    episodes: &[FewshotEpisode],
    ap: &[Vec<f64>],
    costs: &[f64],
    tuning: &[usize],
    held_out: &[usize],
) -> FewshotSummary {
    let pick = |classes: &[usize]| {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for c in 0..costs.len() {
            let v = map_over_repeats(episodes, ap, classes, c).mean;
            if v > best_val || (v == best_val && costs[c] < costs[best]) {
                best = c;
                best_val = v;
            }
        }
        best
    };
    let selected = pick(tuning);
    let all: Vec<usize> = tuning.iter().chain(held_out).copied().collect();
    let best = pick(&all);
    FewshotSummary {
        k,
        costs: costs.to_vec(),
        selected_cost: costs[selected],
        held_out_map: map_over_repeats(episodes, ap, held_out, selected),
        best_cost: costs[best],
        best_map: map_over_repeats(episodes, ap, &all, best),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_per_class() {
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let eps = subsample_protocol(&labels, 10, 10, 3, 1).unwrap();
        assert_eq!(eps.len(), 3);
        for e in &eps {
            let mut cls: Vec<usize> = e.iter().map(|&i| labels[i]).collect();
            cls.sort_unstable();
            assert_eq!(cls, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(eps, subsample_protocol(&labels, 10, 10, 3, 1).unwrap());
        assert_ne!(eps[0], eps[1]);
    }

    #[test]
    fn subsample_errors() {
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        assert!(subsample_protocol(&labels, 10, 15, 1, 1).is_err());
        assert!(subsample_protocol(&labels, 10, 60, 1, 1).is_err());
    }

    #[test]
    fn fewshot_sizes() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let eps = fewshot_episodes(&labels, &[0, 1, 2], 1, 10, 4).unwrap();
        assert_eq!(eps.len(), 30);
        for e in &eps {
            assert_eq!(e.positives.len() + e.negatives.len(), 20);
            assert!(e.positives.iter().all(|&i| labels[i] == e.class));
            assert!(e.negatives.iter().all(|&i| labels[i] != e.class));
        }
        assert_eq!(eps, fewshot_episodes(&labels, &[0, 1, 2], 1, 10, 4).unwrap());
    }

    #[test]
    fn fewshot_errors_name_class() {
        let labels = vec![0, 0, 1, 1, 1];
        let err = fewshot_episodes(&labels, &[0], 1, 1, 0).unwrap_err();
        assert!(alloc::format!("{err}").contains("class 0"));
    }

    #[test]
    fn average_precision_cases() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]).unwrap(), 1.0);
        // relevant at ranks 2 and 3: (1/2)(1/2) + (1/2)(2/3)
        let ap = average_precision(&[0.9, 0.8, 0.7], &[false, true, true]).unwrap();
        assert!((ap - (0.25 + 1.0 / 3.0)).abs() < 1e-15);
        // all tied: precision equals prevalence
        assert_eq!(average_precision(&[0.0; 4], &[true, false, false, false]).unwrap(), 0.25);
        assert!(average_precision(&[0.1], &[false]).is_err());
    }

    #[test]
    fn cost_grid_has_26_values() {
        let c = fewshot_costs();
        assert_eq!(c.len(), 26);
        assert_eq!(c[0], libm::pow(2.0, -19.0));
        assert_eq!(c[15], 1.0 / 16.0);
        assert_eq!(c[25], 100.0);
    }
}
