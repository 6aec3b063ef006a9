//! Frame-level ranking metrics.

use alloc::vec::Vec;

use crate::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half (Mann-Whitney U).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg * tied_pos as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC operating points `(false positive rate, true positive rate)` from the
/// strictest threshold down, one point per distinct score.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = Vec::with_capacity(order.len() + 1);
    pts.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Equal error rate: where the false positive rate meets the false negative
/// rate, linearly interpolated between adjacent ROC points.
pub fn eer(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = roc_points(scores, labels)?;
    let gap = |(fpr, tpr): (f64, f64)| fpr - (1.0 - tpr);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (gap(a), gap(b));
        if db == 0.0 {
            return Ok(b.0);
        }
        if da < 0.0 && db > 0.0 {
            let t = -da / (db - da);
            return Ok(a.0 + t * (b.0 - a.0));
        }
    }
    // The last point is (1, 1) with gap 1, so a crossing always exists.
    Ok(pts.last().map(|p| p.0).unwrap_or(0.5))
}
