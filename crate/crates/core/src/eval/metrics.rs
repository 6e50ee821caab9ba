use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn check(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::contract("cannot score an empty labeling"));
    }
    Ok(())
}

/// Percentage of matching positions.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

fn f1_for(pred: &[usize], truth: &[usize], class: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fnn = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == class, t == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    // 2PR/(P+R) simplifies to 2tp/(2tp+fp+fn); zero when P+R is zero.
    let den = 2 * tp + fp + fnn;
    if tp == 0 || den == 0 {
        0.0
    } else {
        100.0 * 2.0 * tp as f64 / den as f64
    }
}

/// F1 of the designated positive class, in percent.
pub fn f1_score(pred: &[usize], truth: &[usize], positive: usize) -> Result<f64> {
    check(pred, truth)?;
    Ok(f1_for(pred, truth, positive))
}

/// Unweighted mean of the per-class F1 over classes `0..n_classes`.
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    check(pred, truth)?;
    if n_classes == 0 {
        return Err(Error::contract("macro F1 needs at least one class"));
    }
    Ok((0..n_classes).map(|c| f1_for(pred, truth, c)).sum::<f64>() / n_classes as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// `I(a;b)/sqrt(H(a)·H(b))` with natural logs. Two constant labelings give
/// 1; one constant and one varying labeling give 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check(a, b)?;
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ca.len() == 1 && cb.len() == 1 {
        return Ok(1.0);
    }
    if ca.len() == 1 || cb.len() == 1 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}
