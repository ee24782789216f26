//! Independent oracles shared by the integration tests. Nothing here calls
//! the code paths it is used to check.

#![allow(dead_code)]

use procopt::data::{ProcessSchema, Variable};
use procopt::env::{EnvState, FnSurrogate};

/// 2-variable, 3×3-grid process with an analytic response.
pub fn toy_schema() -> ProcessSchema {
    ProcessSchema::new(
        vec![
            Variable::new("x", 0.0, 2.0, 1.0),
            Variable::new("y", 0.0, 2.0, 1.0),
        ],
        vec!["f".into(), "g".into()],
    )
    .unwrap()
}

pub fn toy_response(v: &[f64]) -> Vec<f64> {
    vec![v[0] + 0.5 * v[1], (v[0] - v[1]).powi(2)]
}

pub fn toy_surrogate() -> FnSurrogate<fn(&[f64]) -> Vec<f64>> {
    FnSurrogate::new(2, 2, toy_response as fn(&[f64]) -> Vec<f64>)
}

/// Weighted L1 distance to target, written out longhand.
pub fn l1(pred: &[f64], target: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        s += w[i] * (pred[i] - target[i]).abs();
    }
    s
}

/// Clamped 3×3 toy transition by explicit per-digit decoding.
pub fn toy_next(x: usize, y: usize, a: usize) -> (usize, usize) {
    let dx = (a / 3) as i64 - 1;
    let dy = (a % 3) as i64 - 1;
    let nx = (x as i64 + dx).clamp(0, 2) as usize;
    let ny = (y as i64 + dy).clamp(0, 2) as usize;
    (nx, ny)
}

/// Exhaustive value iteration on the toy MDP with reward = decrease in
/// weighted L1 distance. Returns Q*[state][action], state = 3x + y.
pub fn toy_value_iteration(target: &[f64], w: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    let dist = |x: usize, y: usize| l1(&toy_response(&[x as f64, y as f64]), target, w);
    let mut v = vec![0.0; 9];
    loop {
        let mut q = vec![vec![0.0; 9]; 9];
        let mut delta: f64 = 0.0;
        let mut nv = vec![0.0; 9];
        for x in 0..3 {
            for y in 0..3 {
                let s = 3 * x + y;
                for a in 0..9 {
                    let (nx, ny) = toy_next(x, y, a);
                    q[s][a] = dist(x, y) - dist(nx, ny) + gamma * v[3 * nx + ny];
                }
                nv[s] = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((nv[s] - v[s]).abs());
            }
        }
        v = nv;
        if delta < 1e-13 {
            return q;
        }
    }
}

pub fn toy_state(schema: &ProcessSchema, x: usize, y: usize) -> EnvState {
    EnvState::from_levels(schema, vec![x, y]).unwrap()
}

/// Depth-1 regression stump by enumerating every (feature, midpoint) pair.
/// Returns (feature, threshold, left mean, right mean), or None when no split exists.
pub fn brute_force_stump(x: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64, f64, f64)> {
    let n_features = x[0].len();
    let mut best: Option<(f64, usize, f64, f64, f64)> = None;
    for f in 0..n_features {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let thr = 0.5 * (pair[0] + pair[1]);
            let left: Vec<f64> = (0..x.len())
                .filter(|&i| x[i][f] <= thr)
                .map(|i| y[i])
                .collect();
            let right: Vec<f64> = (0..x.len())
                .filter(|&i| x[i][f] > thr)
                .map(|i| y[i])
                .collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let sse = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|t| (t - m) * (t - m)).sum::<f64>()
            };
            let cost = sse(&left) + sse(&right);
            if best.is_none() || cost < best.unwrap().0 - 1e-9 {
                best = Some((cost, f, thr, mean(&left), mean(&right)));
            }
        }
    }
    best.map(|(_, f, t, l, r)| (f, t, l, r))
}

/// Reference forward pass: explicit matrix-vector products.
pub fn reference_forward(
    w1: &[Vec<f64>],
    b1: &[f64],
    w2: &[Vec<f64>],
    b2: &[f64],
    x: &[f64],
    relu: bool,
) -> Vec<f64> {
    let hidden: Vec<f64> = w1
        .iter()
        .zip(b1)
        .map(|(row, b)| {
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
            if relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect();
    w2.iter()
        .zip(b2)
        .map(|(row, b)| row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + b)
        .collect()
}

/// Central difference of `f` at `x` along coordinate perturbations supplied by `set`.
pub fn central_difference(h: f64, mut eval_at: impl FnMut(f64) -> f64) -> f64 {
    (eval_at(h) - eval_at(-h)) / (2.0 * h)
}
