use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::model::Segment;

/// One leave-one-subject-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub test_subject: String,
    /// Subjects whose segments may be used for fitting and as labelled candidates.
    pub candidates: Vec<String>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn is_candidate(&self, subject: &str) -> bool {
        self.candidates.binary_search_by(|c| c.as_str().cmp(subject)).is_ok()
    }
}

/// One fold per distinct subject id, ordered by id. Fold `i` gets seed
/// `seed + i`.
pub fn loocv_folds_for<'a>(subjects: impl IntoIterator<Item = &'a str>, seed: u64) -> Result<Vec<FoldPlan>> {
    let ids: BTreeSet<&str> = subjects.into_iter().collect();
    if ids.len() < 2 {
        return Err(Error::contract(format!("leave-one-subject-out needs at least 2 subjects, got {}", ids.len())));
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, &test)| FoldPlan {
            test_subject: test.to_string(),
            candidates: ids.iter().filter(|&&s| s != test).map(|s| s.to_string()).collect(),
            seed: seed.wrapping_add(i as u64),
        })
        .collect())
}

pub fn loocv_folds(manifest: &Manifest, seed: u64) -> Result<Vec<FoldPlan>> {
    loocv_folds_for(manifest.subjects.iter().map(|s| s.id.as_str()), seed)
}

/// Segment indices split into (training candidates, test) for a fold.
pub fn fold_indices<S>(plan: &FoldPlan, segments: &[Segment<S>]) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        if s.id.subject == plan.test_subject {
            test.push(i);
        } else if plan.is_candidate(&s.id.subject) {
            train.push(i);
        }
    }
    (train, test)
}

/// Fails with a leakage error if any of `used` (segment indices fed to
/// fitting or subsampling) belongs to the held-out subject or to no
/// candidate subject.
pub fn leakage_guard<S>(plan: &FoldPlan, segments: &[Segment<S>], used: &[usize], stage: &str) -> Result<()> {
    if plan.candidates.iter().any(|c| *c == plan.test_subject) {
        return Err(Error::Leakage(format!("fold for {} lists its test subject as a candidate", plan.test_subject)));
    }
    for &i in used {
        let subject = &segments[i].id.subject;
        if *subject == plan.test_subject || !plan.is_candidate(subject) {
            return Err(Error::Leakage(format!(
                "{stage} of the fold holding out {} received segment {:?}",
                plan.test_subject, segments[i].id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SegmentId;
    use crate::tensor::Tensor;

    fn seg(subject: &str) -> Segment<f32> {
        Segment { id: SegmentId { subject: subject.into(), trial: "t".into(), index: 0 }, data: Tensor::zeros(&[1, 1]) }
    }

    #[test]
    fn folds_cover_subjects_once() {
        let ids: Vec<String> = (0..32).map(|i| format!("s{i:02}")).collect();
        let folds = loocv_folds_for(ids.iter().map(String::as_str), 3).unwrap();
        assert_eq!(folds.len(), 32);
        for (f, id) in folds.iter().zip(&ids) {
            assert_eq!(&f.test_subject, id);
            assert!(!f.is_candidate(id));
            assert_eq!(f.candidates.len(), 31);
        }
        assert!(matches!(loocv_folds_for(["a", "a"], 0), Err(Error::Contract(_))));
    }

    #[test]
    fn guard_traps_test_subject() {
        let segs = vec![seg("a"), seg("b"), seg("c")];
        let plan = &loocv_folds_for(["a", "b", "c"], 0).unwrap()[1];
        let (train, test) = fold_indices(plan, &segs);
        assert_eq!((train.clone(), test), (vec![0, 2], vec![1]));
        leakage_guard(plan, &segs, &train, "fit").unwrap();
        assert!(matches!(leakage_guard(plan, &segs, &[0, 1], "fit"), Err(Error::Leakage(_))));
    }
}
