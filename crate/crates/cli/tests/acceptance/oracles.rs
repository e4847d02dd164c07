//! Reference implementations written independently of the library code.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy)]
pub struct OlsOracle {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub r2: f64,
    pub p: f64,
}

/// Uncentred 2×2 normal equations, explicit residuals, statrs p-value.
pub fn ols(x: &[f64], y: &[f64]) -> OlsOracle {
    let n = x.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sx += xi;
        sxx += xi * xi;
        sy += yi;
        sxy += xi * yi;
    }
    let det = n * sxx - sx * sx;
    let beta = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - intercept - beta * xi).powi(2))
        .sum();
    let y_mean = sy / n;
    let sst: f64 = y.iter().map(|&yi| (yi - y_mean).powi(2)).sum();
    let df = n - 2.0;
    let se = (sse / df * n / det).sqrt();
    let t = beta / se;
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    OlsOracle {
        beta,
        se,
        t,
        r2: 1.0 - sse / sst,
        p: 2.0 * dist.cdf(-t.abs()),
    }
}

/// `P(max same-sign run >= k)` for `k = 0..=n` on a line of `n` voxels,
/// each independently positive, negative or off.
pub fn line_exceedance(n: usize, p_pos: f64, p_neg: f64) -> Vec<f64> {
    let p_off = 1.0 - p_pos - p_neg;
    let mut exceed = vec![0.0; n + 1];
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut prob = 1.0;
        let (mut best, mut run, mut prev) = (0usize, 0usize, 0usize);
        for _ in 0..n {
            let state = c % 3;
            c /= 3;
            prob *= [p_off, p_pos, p_neg][state];
            run = if state != 0 && state == prev { run + 1 } else { (state != 0) as usize };
            prev = state;
            best = best.max(run);
        }
        for e in exceed.iter_mut().take(best + 1) {
            *e += prob;
        }
    }
    exceed
}

/// Naive Ward on points: every step scans all cluster pairs and computes
/// the cost from centroids. Returns `(left id, right id, height)` per merge,
/// with the cluster holding the smaller leaf on the left.
pub fn ward_points(points: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    // (id, members)
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |m: &[usize]| -> Vec<f64> {
        let d = points[0].len();
        let mut c = vec![0.0; d];
        for &i in m {
            for k in 0..d {
                c[k] += points[i][k];
            }
        }
        c.iter().map(|v| v / m.len() as f64).collect()
    };
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        clusters.sort_by_key(|(_, m)| *m.iter().min().unwrap());
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ma, mb) = (&clusters[a].1, &clusters[b].1);
                let (ca, cb) = (centroid(ma), centroid(mb));
                let dist2: f64 = ca.iter().zip(&cb).map(|(u, v)| (u - v).powi(2)).sum();
                let (na, nb) = (ma.len() as f64, mb.len() as f64);
                let cost = 2.0 * na * nb / (na + nb) * dist2;
                if best.map_or(true, |(c, _, _)| cost < c) {
                    best = Some((cost, a, b));
                }
            }
        }
        let (cost, a, b) = best.unwrap();
        let (id_b, mb) = clusters.remove(b);
        let (id_a, ma) = clusters.remove(a);
        merges.push((id_a, id_b, cost.sqrt()));
        clusters.push((n + step, ma.into_iter().chain(mb).collect()));
    }
    merges
}

/// Flat clusters after the first `n - k` merges, numbered by first
/// appearance in leaf order.
pub fn cut(n: usize, merges: &[(usize, usize, f64)], k: usize) -> Vec<usize> {
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(a, b, _) in &merges[..n - k] {
        let mut m = members[a].clone();
        m.extend(&members[b]);
        members.push(m);
    }
    let mut leaf_node = vec![0; n];
    // Later nodes overwrite earlier ones, so each leaf ends at its top node.
    for (node, m) in members.iter().enumerate() {
        for &leaf in m {
            leaf_node[leaf] = node;
        }
    }
    let mut ids: Vec<usize> = Vec::new();
    leaf_node
        .iter()
        .map(|node| match ids.iter().position(|x| x == node) {
            Some(i) => i,
            None => {
                ids.push(*node);
                ids.len() - 1
            }
        })
        .collect()
}

/// Pearson correlation written out from sums of centred products.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}
