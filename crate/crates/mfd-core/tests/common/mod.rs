//! Implementation-independent oracles used by the integration and acceptance
//! suites. Everything here is deliberately naive: plain nested loops over
//! `&[Vec<f64>]` slices, no shared code with the library under test.

#![allow(dead_code)]

// ── frozen closed-form values ───────────────────────────────────────────────

/// -ln softmax([0, 0])[0] for a two-way uniform softmax.
pub const CE_TWO_WAY_UNIFORM: f64 = std::f64::consts::LN_2;

/// RBF kernel between x = [0] and y = [2] at sigma^2 = 2:
/// exp(-4 / (2 * 2)) = e^-1.
pub const RBF_0_2_SIGMA2_2: f64 = 0.36787944117144233;

/// Biased MMD^2 for X = {[0]}, Y = {[2]}, sigma^2 = 2:
/// k(0,0) + k(2,2) - 2 k(0,2) = 1 + 1 - 2 e^-1.
pub const MMD2_0_2_SIGMA2_2: f64 = 2.0 - 2.0 * RBF_0_2_SIGMA2_2;

/// Glorot uniform bound for a 4 -> 8 layer: sqrt(6 / (4 + 8)).
pub const GLOROT_BOUND_4_8: f64 = 0.7071067811865476;

/// KL(softmax([2,0]) || softmax([0,0])) in nats.
///
/// p = (e^2/(1+e^2), 1/(1+e^2)), q = (1/2, 1/2), so
/// KL = ln 2 - H(p) with H(p) = ln(1+e^2) - 2 e^2/(1+e^2).
pub fn kl_logits_20_vs_00() -> f64 {
    let z = (1.0f64 + (2.0f64).exp()).ln(); // ln(1 + e^2)
    let p1 = (2.0f64).exp() / (1.0 + (2.0f64).exp());
    let h = z - 2.0 * p1;
    std::f64::consts::LN_2 - h
}

// ── finite differences ──────────────────────────────────────────────────────

/// Central-difference gradient of `f` at `x`. The independent cross-check for
/// every reverse-mode gradient in the suite.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + eps;
        let fp = f(&xp);
        xp[i] = orig - eps;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    g
}

/// Symmetric relative error between two gradient vectors.
pub fn grad_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

// ── naive kernel sums ───────────────────────────────────────────────────────

pub fn sqdist(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn rbf(x: &[f64], y: &[f64], sigma2: f64) -> f64 {
    (-sqdist(x, y) / (2.0 * sigma2)).exp()
}

/// Mean squared distance over unordered distinct pairs of the union of X and
/// Y, floored at `floor`.
pub fn naive_bandwidth(x: &[Vec<f64>], y: &[Vec<f64>], floor: f64) -> f64 {
    let union: Vec<&Vec<f64>> = x.iter().chain(y.iter()).collect();
    let n = union.len();
    if n < 2 {
        return floor;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += sqdist(union[i], union[j]);
            count += 1;
        }
    }
    (total / count as f64).max(floor)
}

/// Biased (V-statistic) MMD^2 estimate with diagonal terms included.
pub fn naive_mmd2(x: &[Vec<f64>], y: &[Vec<f64>], sigma2: f64) -> f64 {
    let (n, m) = (x.len(), y.len());
    let mut kxx = 0.0;
    for a in x {
        for b in x {
            kxx += rbf(a, b, sigma2);
        }
    }
    let mut kyy = 0.0;
    for a in y {
        for b in y {
            kyy += rbf(a, b, sigma2);
        }
    }
    let mut kxy = 0.0;
    for a in x {
        for b in y {
            kxy += rbf(a, b, sigma2);
        }
    }
    kxx / (n * n) as f64 + kyy / (m * m) as f64 - 2.0 * kxy / (n * m) as f64
}

/// Squared RKHS distance between two weighted empirical embeddings, computed
/// point by point. Weights must sum to one on each side.
pub fn naive_weighted_mmd2(
    xa: &[Vec<f64>],
    wa: &[f64],
    xb: &[Vec<f64>],
    wb: &[f64],
    sigma2: f64,
) -> f64 {
    assert_eq!(xa.len(), wa.len());
    assert_eq!(xb.len(), wb.len());
    let mut total = 0.0;
    for (p, wp) in xa.iter().zip(wa) {
        for (q, wq) in xa.iter().zip(wa) {
            total += wp * wq * rbf(p, q, sigma2);
        }
    }
    for (p, wp) in xb.iter().zip(wb) {
        for (q, wq) in xb.iter().zip(wb) {
            total += wp * wq * rbf(p, q, sigma2);
        }
    }
    for (p, wp) in xa.iter().zip(wa) {
        for (q, wq) in xb.iter().zip(wb) {
            total -= 2.0 * wp * wq * rbf(p, q, sigma2);
        }
    }
    total
}

// ── fairness enumeration ────────────────────────────────────────────────────

/// Per-(group, class) accuracy plus DEO metrics by direct enumeration.
/// Returns (overall accuracy, deo_a, deo_m). Cells with zero support are
/// skipped; classes with fewer than two supported groups contribute zero gap.
pub fn naive_deo(
    preds: &[usize],
    labels: &[usize],
    groups: &[usize],
    num_classes: usize,
    num_groups: usize,
) -> (f64, f64, f64) {
    let mut correct = vec![vec![0usize; num_classes]; num_groups];
    let mut count = vec![vec![0usize; num_classes]; num_groups];
    let mut total_correct = 0usize;
    for i in 0..preds.len() {
        count[groups[i]][labels[i]] += 1;
        if preds[i] == labels[i] {
            correct[groups[i]][labels[i]] += 1;
            total_correct += 1;
        }
    }
    let mut gap_sum = 0.0;
    let mut gap_max = 0.0f64;
    for y in 0..num_classes {
        let mut accs = Vec::new();
        for a in 0..num_groups {
            if count[a][y] > 0 {
                accs.push(correct[a][y] as f64 / count[a][y] as f64);
            }
        }
        let mut gap = 0.0f64;
        for i in 0..accs.len() {
            for j in (i + 1)..accs.len() {
                gap = gap.max((accs[i] - accs[j]).abs());
            }
        }
        if accs.len() >= 2 {
            gap_max = gap_max.max(gap);
            gap_sum += gap;
        }
    }
    let overall = total_correct as f64 / preds.len() as f64;
    (overall, gap_sum / num_classes as f64, gap_max)
}

// ── misc ────────────────────────────────────────────────────────────────────

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Sample mean and (n-1)-denominator standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
