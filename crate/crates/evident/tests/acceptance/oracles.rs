//! Naive reference implementations used as independent oracles.

use evident_core::grid::Vec3;

/// Indices sorted by `(key, index)`.
pub fn order(key: &[f64]) -> Vec<usize> {
    let mut p: Vec<(f64, usize)> = key.iter().copied().zip(0..).collect();
    p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    p.into_iter().map(|x| x.1).collect()
}

fn mean_first(ord: &[usize], e: &[f64], m: usize) -> f64 {
    ord[..m].iter().map(|&i| e[i]).sum::<f64>() / m as f64
}

pub fn aurc(u: &[f64], e: &[f64], g: usize) -> f64 {
    let n = u.len();
    let ou = order(u);
    let ys: Vec<f64> = (1..=g)
        .map(|k| mean_first(&ou, e, ((k as f64 * n as f64 / g as f64).floor() as usize).max(1)))
        .collect();
    let mut a = ys[0] / g as f64;
    for k in 1..g {
        a += (ys[k] + ys[k - 1]) / (2.0 * g as f64);
    }
    a
}

pub fn ause(u: &[f64], e: &[f64], g: usize) -> f64 {
    let n = u.len();
    let (ou, oe) = (order(u), order(e));
    let gap: Vec<f64> = (0..g)
        .map(|k| {
            let keep = n - ((k as f64 * n as f64 / g as f64).ceil() as usize).min(n - 1);
            mean_first(&ou, e, keep) - mean_first(&oe, e, keep)
        })
        .collect();
    (1..g).map(|k| (gap[k] + gap[k - 1]) / (2.0 * g as f64)).sum()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(u: &[f64], e: &[f64]) -> Option<f64> {
    let (a, b) = (ranks(u), ranks(e));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

pub fn auroc(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1.0;
                wins += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

pub fn fpr95(s: &[f64], l: &[bool]) -> f64 {
    let p = l.iter().filter(|&&x| x).count();
    let q = l.len() - p;
    let mut best = 1.0f64;
    for &t in s {
        let tp = s.iter().zip(l).filter(|(&v, &y)| y && v >= t).count();
        let fp = s.iter().zip(l).filter(|(&v, &y)| !y && v >= t).count();
        if 100 * tp >= 95 * p {
            best = best.min(fp as f64 / q as f64);
        }
    }
    best
}

/// (accuracy, completeness, precision, recall) by exhaustive search.
pub fn cloud(p: &[Vec3], g: &[Vec3], th: f64) -> (f64, f64, f64, f64) {
    let nn = |a: &[Vec3], b: &[Vec3]| -> Vec<f64> {
        a.iter()
            .map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let (dp, dg) = (nn(p, g), nn(g, p));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let frac = |v: &[f64]| v.iter().filter(|&&d| d < th).count() as f64 / v.len() as f64;
    (mean(&dp), mean(&dg), frac(&dp), frac(&dg))
}

/// Square-window morphology by exhaustive scan (background outside).
pub fn window(m: &[bool], h: usize, w: usize, r: usize, row: usize, col: usize) -> (bool, bool) {
    let (mut any, mut every) = (false, true);
    for dr in -(r as isize)..=r as isize {
        for dc in -(r as isize)..=r as isize {
            let (rr, cc) = (row as isize + dr, col as isize + dc);
            let v = rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && m[rr as usize * w + cc as usize];
            any |= v;
            every &= v;
        }
    }
    (any, every)
}
