use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

fn check_scores(scores: &[f64], labels: &[bool], op: &'static str) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(op, format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("{op}: NaN score")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, counting ties as one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels, "auc")?;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("auc needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// Average precision `Σ_n (R_n - R_{n-1}) P_n` over descending score
/// thresholds, with tied scores forming a single threshold.
pub fn ap(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_scores(scores, labels, "ap")?;
    if pos == 0 {
        return Err(Error::InvalidArgument("ap needs at least one positive label".into()));
    }
    let order = descending(scores);
    let (mut tp, mut seen, mut total) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group_pos = order[i..j].iter().filter(|&&k| labels[k]).count();
        tp += group_pos;
        seen += j - i;
        if group_pos > 0 {
            total += (group_pos as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Ok(total)
}

struct Contingency {
    n: usize,
    cells: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn contingency(u: &[usize], v: &[usize], op: &'static str) -> Result<Contingency> {
    if u.len() != v.len() {
        return Err(Error::shape(op, format!("{} vs {} assignments", u.len(), v.len())));
    }
    let mut ui = HashMap::new();
    let mut vi = HashMap::new();
    let mut cell = BTreeMap::new();
    for (&a, &b) in u.iter().zip(v) {
        let nu = ui.len();
        let i = *ui.entry(a).or_insert(nu);
        let nv = vi.len();
        let j = *vi.entry(b).or_insert(nv);
        *cell.entry((i, j)).or_insert(0usize) += 1;
    }
    let mut rows = vec![0; ui.len()];
    let mut cols = vec![0; vi.len()];
    for (&(i, j), &c) in &cell {
        rows[i] += c;
        cols[j] += c;
    }
    Ok(Contingency {
        n: u.len(),
        cells: cell.into_values().collect(),
        rows,
        cols,
    })
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(U; V) / sqrt(H(U) H(V))` (natural log).
/// When both clusterings are a single cluster the value is 1; when exactly
/// one is, it is 0.
pub fn nmi(u: &[usize], v: &[usize]) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::InvalidArgument("nmi of empty clusterings".into()));
    }
    let c = contingency(u, v, "nmi")?;
    let n = c.n as f64;
    let (hu, hv) = (entropy(&c.rows, n), entropy(&c.cols, n));
    match (c.rows.len() == 1, c.cols.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    // Mutual information via H(U) + H(V) - H(U, V).
    let mi = hu + hv - entropy(&c.cells, n);
    Ok((mi / (hu * hv).sqrt()).clamp(0.0, 1.0))
}

fn pairs(c: usize) -> i128 {
    let c = c as i128;
    c * (c - 1) / 2
}

/// Adjusted Rand index, evaluated exactly in integer arithmetic and
/// converted to `f64` once at the end.
pub fn ari(u: &[usize], v: &[usize]) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::InvalidArgument(format!("ari needs at least 2 items, got {}", u.len())));
    }
    let c = contingency(u, v, "ari")?;
    let index: i128 = c.cells.iter().map(|&x| pairs(x)).sum();
    let a: i128 = c.rows.iter().map(|&x| pairs(x)).sum();
    let b: i128 = c.cols.iter().map(|&x| pairs(x)).sum();
    let total = pairs(c.n);
    let num = 2 * (index * total - a * b);
    let den = (a + b) * total - 2 * a * b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape("accuracy", format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}
