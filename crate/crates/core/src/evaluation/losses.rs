use crate::attribution::AttributionMap;
use crate::data::GroundTruthMask;
use crate::error::{Error, Result};

/// `KL(q || p)` where `q` is uniform over the mask's ones and `p` is the
/// normalized absolute attribution with `eps` added to every entry.
pub fn kl_loss(attr: &AttributionMap, mask: &GroundTruthMask, eps: f64) -> Result<f64> {
    kl_to_mask(attr.values.data(), mask, eps)
}

pub(crate) fn kl_to_mask(values: &[f64], mask: &GroundTruthMask, eps: f64) -> Result<f64> {
    if values.len() != mask.len() {
        return Err(Error::shape(&[mask.len()], &[values.len()]));
    }
    let k = mask.ones();
    if k == 0 {
        return Err(Error::Spec("ground-truth mask has no relevant feature".into()));
    }
    let total: f64 = values.iter().map(|v| v.abs() + eps).sum();
    let q = 1.0 / k as f64;
    Ok(values
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|(v, _)| {
            let p = (v.abs() + eps) / total;
            q * (q / p).ln()
        })
        .sum())
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation; `None` when either side has no rank variance.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// `1 - rho`; a constant map is uninformative and scores 1.
pub fn spearman_loss(a: &AttributionMap, b: &AttributionMap) -> Result<f64> {
    spearman_between(a.values.data(), b.values.data())
}

pub(crate) fn spearman_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(&[a.len()], &[b.len()]));
    }
    Ok(spearman_rho(a, b).map_or(1.0, |rho| 1.0 - rho))
}
