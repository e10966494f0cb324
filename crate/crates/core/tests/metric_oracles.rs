//! Fast metric implementations against naive brute-force references.

use evident_core::grid::{Mask, PointMap, Vec3};
use evident_core::metrics::{
    aurc, auroc_fpr_values, ause, dilate, erode, pointcloud_metrics, ring_band, risk_coverage_values,
    sparsification_values, spearman_rho_values,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;
const INSTANCES: usize = 80;

/// Random instance with deliberate ties in `u` about a third of the time.
fn instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..=100);
    let coarse = rng.random_bool(0.33);
    let u = (0..n)
        .map(|_| {
            if coarse {
                rng.random_range(0..5) as f64
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let e = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
    (u, e)
}

/// Indices sorted by `(key, index)`.
fn naive_order(key: &[f64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = key.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    pairs.into_iter().map(|p| p.1).collect()
}

fn mean_of_first(order: &[usize], e: &[f64], m: usize) -> f64 {
    order[..m].iter().map(|&i| e[i]).sum::<f64>() / m as f64
}

fn naive_aurc(u: &[f64], e: &[f64], g: usize) -> (f64, Vec<f64>) {
    let n = u.len();
    let ou = naive_order(u);
    let mut xs = vec![];
    let mut ys = vec![];
    for k in 1..=g {
        let m = std::cmp::max(1, (k as f64 * n as f64 / g as f64).floor() as usize);
        xs.push(k as f64 / g as f64);
        ys.push(mean_of_first(&ou, e, m));
    }
    let mut a = xs[0] * ys[0];
    for k in 1..g {
        a += (xs[k] - xs[k - 1]) * (ys[k] + ys[k - 1]) / 2.0;
    }
    (a, ys)
}

fn naive_ause(u: &[f64], e: &[f64], g: usize) -> f64 {
    let n = u.len();
    let (ou, oe) = (naive_order(u), naive_order(e));
    let gap: Vec<f64> = (0..g)
        .map(|k| {
            let removed = ((k as f64 * n as f64 / g as f64).ceil() as usize).min(n - 1);
            let keep = n - removed;
            mean_of_first(&ou, e, keep) - mean_of_first(&oe, e, keep)
        })
        .collect();
    (1..g).map(|k| (gap[k] + gap[k - 1]) / (2.0 * g as f64)).sum()
}

fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_spearman(u: &[f64], e: &[f64]) -> Option<f64> {
    let (a, b) = (naive_ranks(u), naive_ranks(e));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

fn naive_auroc(s: &[f64], l: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
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

fn naive_fpr95(s: &[f64], l: &[bool]) -> f64 {
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

#[test]
fn curves_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..INSTANCES {
        let (u, e) = instance(&mut rng);
        for g in [2, 7, 100] {
            let rc = risk_coverage_values(&u, &e, g).unwrap();
            let (a, ys) = naive_aurc(&u, &e, g);
            assert!((aurc(&rc) - a).abs() <= TOL);
            assert!(rc.y_unc.iter().zip(&ys).all(|(x, y)| (x - y).abs() <= TOL));
            let sp = sparsification_values(&u, &e, g).unwrap();
            assert!((ause(&sp) - naive_ause(&u, &e, g)).abs() <= TOL);
        }
    }
}

#[test]
fn spearman_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..INSTANCES {
        let (u, e) = instance(&mut rng);
        match (spearman_rho_values(&u, &e), naive_spearman(&u, &e)) {
            (Ok(a), Some(b)) => assert!((a - b).abs() <= TOL, "{a} vs {b}"),
            (Err(_), None) => {}
            other => panic!("disagreement {other:?}"),
        }
    }
}

#[test]
fn roc_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checked = 0;
    while checked < INSTANCES {
        let (s, _) = instance(&mut rng);
        let l: Vec<bool> = s.iter().map(|_| rng.random_bool(0.4)).collect();
        if l.iter().all(|&x| x) || l.iter().all(|&x| !x) {
            continue;
        }
        let r = auroc_fpr_values(&s, &l).unwrap();
        assert!((r.auroc - naive_auroc(&s, &l)).abs() <= TOL);
        assert_eq!(r.fpr_at_95tpr, naive_fpr95(&s, &l));
        checked += 1;
    }
}

#[test]
fn pointcloud_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..INSTANCES {
        let (h, w) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let n = h * w;
        let pt = |rng: &mut ChaCha8Rng| Vec3::new(rng.random(), rng.random(), rng.random::<f64>() * 0.2);
        let gt = PointMap::new(h, w, (0..n).map(|_| pt(&mut rng)).collect()).unwrap();
        let pred = PointMap::new(h, w, gt.points().iter().map(|g| g + 0.05 * pt(&mut rng)).collect()).unwrap();
        let mut vals: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        vals[0] = true;
        let mask = Mask::new(h, w, vals).unwrap();
        let th = rng.random_range(0.005..0.1);
        let m = pointcloud_metrics(&pred, &gt, &mask, th).unwrap();

        let idx = mask.indices();
        let p: Vec<Vec3> = idx.iter().map(|&i| pred.points()[i]).collect();
        let g: Vec<Vec3> = idx.iter().map(|&i| gt.points()[i]).collect();
        let nn = |a: &[Vec3], b: &[Vec3]| -> Vec<f64> {
            a.iter()
                .map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
                .collect()
        };
        let (dp, dg) = (nn(&p, &g), nn(&g, &p));
        let acc = dp.iter().sum::<f64>() / dp.len() as f64;
        let comp = dg.iter().sum::<f64>() / dg.len() as f64;
        let prec = dp.iter().filter(|&&d| d < th).count() as f64 / dp.len() as f64;
        let rec = dg.iter().filter(|&&d| d < th).count() as f64 / dg.len() as f64;
        let f1 = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        assert!((m.accuracy - acc).abs() <= TOL);
        assert!((m.completeness - comp).abs() <= TOL);
        assert!((m.chamfer - 0.5 * (acc + comp)).abs() <= TOL);
        assert_eq!((m.precision, m.recall), (prec, rec));
        assert!((m.f1 - f1).abs() <= TOL);
    }
}

#[test]
fn ring_band_matches_brute_force_morphology() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..INSTANCES {
        let (h, w) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let p = rng.random_range(0.1..0.9);
        let m = Mask::new(h, w, (0..h * w).map(|_| rng.random_bool(p)).collect()).unwrap();
        let r = rng.random_range(1..=4);
        let inside = |rr: isize, cc: isize| rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w;
        let window = |row: usize, col: usize, all: bool| {
            let mut any = false;
            let mut every = true;
            for dr in -(r as isize)..=r as isize {
                for dc in -(r as isize)..=r as isize {
                    let (rr, cc) = (row as isize + dr, col as isize + dc);
                    let v = inside(rr, cc) && m.get(rr as usize, cc as usize);
                    any |= v;
                    every &= v;
                }
            }
            if all {
                every
            } else {
                any
            }
        };
        let (d, e, ring) = (dilate(&m, r), erode(&m, r), ring_band(&m, r).unwrap());
        for row in 0..h {
            for col in 0..w {
                assert_eq!(d.get(row, col), window(row, col, false));
                assert_eq!(e.get(row, col), window(row, col, true));
                assert_eq!(ring.get(row, col), window(row, col, false) && !window(row, col, true));
            }
        }
    }
}

#[test]
fn hand_examples() {
    let e = [0.4, 0.1, 0.9, 0.3, 0.7];
    let sp = sparsification_values(&e, &e, 100).unwrap();
    assert_eq!(ause(&sp), 0.0);

    let s = [0.9, 0.8, 0.7, 0.2, 0.1];
    let l = [true, true, true, false, false];
    assert_eq!(auroc_fpr_values(&s, &l).unwrap().auroc, 1.0);

    // One positive below one of three negatives: reaching full TPR admits it.
    let s = [0.9, 0.95, 0.5, 0.1];
    let l = [true, false, false, false];
    let r = auroc_fpr_values(&s, &l).unwrap();
    assert_eq!(r.fpr_at_95tpr, 1.0 / 3.0);
    assert!((r.auroc - 2.0 / 3.0).abs() <= TOL);

    let s = [3.0, 5.0, 1.0, 2.0, 4.0];
    let l = [true, true, false, false, false];
    let r = auroc_fpr_values(&s, &l).unwrap();
    assert!((r.auroc - 5.0 / 6.0).abs() <= TOL);
    assert_eq!(r.fpr_at_95tpr, 1.0 / 3.0);

    let rho = spearman_rho_values(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
    assert!((rho - naive_spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 30.0, 40.0]).unwrap()).abs() <= TOL);
    assert!((rho - 0.9487).abs() < 1e-4);
}

#[test]
fn oracle_beats_a_thousand_random_rankings() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    for _ in 0..5 {
        let e: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let mut u: Vec<f64> = (0..20).map(|i| i as f64).collect();
        for _ in 0..1000 {
            u.shuffle(&mut rng);
            let c = risk_coverage_values(&u, &e, 20).unwrap();
            assert!(c.y_oracle.iter().zip(&c.y_unc).all(|(o, y)| *o <= y + TOL));
        }
    }
}

#[test]
fn oracle_bounds_every_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..INSTANCES {
        let (u, e) = instance(&mut rng);
        let rc = risk_coverage_values(&u, &e, 100).unwrap();
        assert!(rc.y_unc.iter().zip(&rc.y_oracle).all(|(a, b)| a + TOL >= *b));
        let sp = sparsification_values(&u, &e, 100).unwrap();
        assert!(ause(&sp) >= -TOL);
        assert!(sp.y_unc.iter().zip(&sp.y_oracle).all(|(a, b)| a + TOL >= *b));
    }
}

#[test]
fn monotone_transforms_leave_rank_metrics_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..INSTANCES {
        let (u, e) = instance(&mut rng);
        let v: Vec<f64> = u.iter().map(|x| (3.0 * x + 1.0).exp()).collect();
        let a = risk_coverage_values(&u, &e, 100).unwrap();
        let b = risk_coverage_values(&v, &e, 100).unwrap();
        assert_eq!(aurc(&a), aurc(&b));
        let a = sparsification_values(&u, &e, 100).unwrap();
        let b = sparsification_values(&v, &e, 100).unwrap();
        assert_eq!(ause(&a), ause(&b));
        if let Ok(r) = spearman_rho_values(&u, &e) {
            assert_eq!(r, spearman_rho_values(&v, &e).unwrap());
        }
    }
}
