//! Independent reference solvers and data builders shared by the integration
//! tests. Nothing here calls the crate's own solvers.
#![allow(dead_code)]

use eurobalance::dispatch::default_eps;
use eurobalance::fixtures::{default_synth_config, europe_topology};
use eurobalance::grid::{build_topology, CapacityLayout, Link, LinkCapacity, Node, Topology};
use eurobalance::optim::BoundedLP;
use eurobalance::series::{mismatch, synth_generate, MismatchSeries};
use rand::Rng;

/// Solves a square system by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-10`.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(k: usize, n: usize, f: &mut impl FnMut(&[usize])) {
    fn go(start: usize, k: usize, n: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, k, n, cur, f);
            cur.pop();
        }
    }
    go(0, k, n, &mut Vec::new(), f);
}

/// Minimum of an LP with finite bounds by enumerating every basic point.
/// `None` means no feasible vertex exists.
pub fn lp_vertex_oracle(lp: &BoundedLP) -> Option<f64> {
    let n = lp.objective.len();
    // Every constraint as `g x <= h`.
    let mut g: Vec<Vec<f64>> = lp.rows.clone();
    let mut h: Vec<f64> = lp.rhs.clone();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        g.push(e.clone());
        h.push(lp.upper[j]);
        e[j] = -1.0;
        g.push(e);
        h.push(-lp.lower[j]);
    }
    let mut best: Option<f64> = None;
    combinations(n, g.len(), &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| g[i].clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
        if let Some(x) = gauss_solve(a, b) {
            let feasible = g
                .iter()
                .zip(&h)
                .all(|(row, &hi)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= hi + 1e-9);
            if feasible {
                let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    });
    best
}

/// Minimiser of `|x|^2` over `rows x <= rhs`, `lower <= x <= upper` (finite
/// bounds), by accelerated projected-gradient ascent on the row multipliers.
/// For fixed multipliers the box-constrained minimiser is a clamp.
pub fn min_norm_oracle(
    rows: &[Vec<f64>],
    rhs: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Vec<f64> {
    let n = lower.len();
    let m = rows.len();
    let primal = |lam: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let g: f64 = (0..m).map(|i| rows[i][j] * lam[i]).sum();
                (-0.5 * g).clamp(lower[j], upper[j])
            })
            .collect()
    };
    // The dual gradient is Lipschitz with constant |A|^2 / 2.
    let frob: f64 = rows.iter().flatten().map(|a| a * a).sum();
    if frob == 0.0 {
        return primal(&vec![0.0; m]);
    }
    let step = 2.0 / frob;
    let mut lam = vec![0.0; m];
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut x = primal(&lam);
    for it in 0..2_000_000 {
        let xy = primal(&y);
        let mut next = vec![0.0; m];
        for i in 0..m {
            let grad: f64 = rows[i].iter().zip(&xy).map(|(a, v)| a * v).sum::<f64>() - rhs[i];
            next[i] = (y[i] + step * grad).max(0.0);
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        for i in 0..m {
            y[i] = next[i] + (t - 1.0) / t_next * (next[i] - lam[i]);
        }
        // Restart the momentum when it stops helping.
        let moved: f64 = next.iter().zip(&lam).map(|(a, b)| (a - b).abs()).sum();
        lam = next;
        t = t_next;
        if it % 100 == 0 {
            let xn = primal(&lam);
            let change: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            x = xn;
            if change < 1e-15 && moved < 1e-15 {
                break;
            }
            t = 1.0;
            y = lam.clone();
        }
    }
    primal(&lam)
}

/// A random connected network of two or three nodes with random finite caps.
pub fn random_small_network(rng: &mut impl Rng) -> (Topology, CapacityLayout) {
    let three = rng.random_bool(0.5);
    let names = ["A", "B", "C"];
    let count = if three { 3 } else { 2 };
    let nodes = names[..count].iter().map(|n| Node::new(*n, 1.0)).collect();
    let mut links = Vec::new();
    for k in 0..count - 1 {
        // Random orientation of each edge of the line.
        let (a, b) = if rng.random_bool(0.5) { (k, k + 1) } else { (k + 1, k) };
        links.push(Link::new(k, names[a], names[b]));
    }
    let topo = build_topology(nodes, links).unwrap();
    let caps = (0..count - 1)
        .map(|_| {
            let mut cap = || if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..3.0) };
            LinkCapacity::new(cap(), cap())
        })
        .collect();
    (topo, CapacityLayout::new(caps).unwrap())
}

fn total_balancing(topo: &Topology, delta: &[f64], flows: &[f64]) -> f64 {
    let export = topo.net_export(flows);
    delta
        .iter()
        .zip(&export)
        .map(|(d, e)| (e - d).max(0.0))
        .sum()
}

/// Minimum total balancing by exhaustive search over the flow box at step
/// `1e-3` of each link's range, refined locally by repeated zooming.
pub fn grid_bmin_oracle(topo: &Topology, layout: &CapacityLayout, delta: &[f64]) -> f64 {
    let caps = layout.caps();
    let l = caps.len();
    let lo: Vec<f64> = caps.iter().map(|c| -c.backward).collect();
    let hi: Vec<f64> = caps.iter().map(|c| c.forward).collect();
    let mut step: Vec<f64> = (0..l).map(|k| (hi[k] - lo[k]) * 1e-3).collect();
    let mut center = vec![0.0; l];
    let mut best = f64::INFINITY;
    let mut first = true;
    for _ in 0..9 {
        let ranges: Vec<Vec<f64>> = (0..l)
            .map(|k| {
                if step[k] == 0.0 {
                    return vec![lo[k]];
                }
                let (a, b) = if first {
                    (lo[k], hi[k])
                } else {
                    ((center[k] - 10.0 * step[k]).max(lo[k]), (center[k] + 10.0 * step[k]).min(hi[k]))
                };
                let n = ((b - a) / step[k]).round() as usize;
                let mut v: Vec<f64> = (0..=n).map(|i| (a + i as f64 * step[k]).min(b)).collect();
                v.push(b);
                v
            })
            .collect();
        let mut idx = vec![0usize; l];
        let mut f = vec![0.0; l];
        let mut arg = center.clone();
        loop {
            for k in 0..l {
                f[k] = ranges[k][idx[k]];
            }
            let v = total_balancing(topo, delta, &f);
            if v < best {
                best = v;
                arg.copy_from_slice(&f);
            }
            let mut k = 0;
            while k < l {
                idx[k] += 1;
                if idx[k] < ranges[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == l {
                break;
            }
        }
        center = arg;
        first = false;
        for s in &mut step {
            *s /= 10.0;
        }
    }
    best
}

/// Step-two flows: least-squares flows whose total balancing stays within
/// `budget`. Total balancing `sum_n max((KF - Delta)_n, 0) <= budget` is
/// written as one row per non-empty node subset.
pub fn flow_qp_oracle(topo: &Topology, layout: &CapacityLayout, delta: &[f64], budget: f64) -> Vec<f64> {
    let n = topo.node_count();
    let l = topo.link_count();
    let k = topo.incidence();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for mask in 1usize..(1 << n) {
        let mut row = vec![0.0; l];
        let mut b = budget;
        for node in 0..n {
            if mask & (1 << node) != 0 {
                for link in 0..l {
                    row[link] += k[node][link] as f64;
                }
                b += delta[node];
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    let lower: Vec<f64> = layout.caps().iter().map(|c| -c.backward).collect();
    let upper: Vec<f64> = layout.caps().iter().map(|c| c.forward).collect();
    min_norm_oracle(&rows, &rhs, &lower, &upper)
}

pub fn step_two_budget(b_min: f64, delta: &[f64]) -> f64 {
    b_min + default_eps(delta)
}

/// Synthetic European year: topology, mismatches at full penetration with a
/// 70% wind share, and mean loads in topology order.
pub struct SyntheticYear {
    pub topo: Topology,
    pub ms: Vec<MismatchSeries>,
    pub mean_loads: Vec<f64>,
}

pub fn synthetic_year(hours: usize) -> SyntheticYear {
    let topo = europe_topology();
    let series = synth_generate(&default_synth_config(), hours).unwrap();
    let ms = series.iter().map(|s| mismatch(s, 1.0, 0.7).unwrap()).collect();
    let mean_loads = series.iter().map(|s| s.mean_load()).collect();
    SyntheticYear {
        topo,
        ms,
        mean_loads,
    }
}
