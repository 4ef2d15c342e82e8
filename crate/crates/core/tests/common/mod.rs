#![allow(dead_code)]

//! Test-only oracles that share no code path with the library solvers.

use sensor_select::lp::{LinearProgram, Relation, Sense};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Best objective over all basic feasible points, in the program's own sense.
/// `None` when no vertex is feasible. Only valid for programs whose optimum is
/// attained at a vertex (bounded, pointed feasible region).
pub fn vertex_optimum(lp: &LinearProgram<f64>) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    // Hyperplanes: constraints first, then finite lower bounds.
    let mut planes: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
        .collect();
    for (j, &l) in lp.lower_bounds.iter().enumerate() {
        if l.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a, Relation::Ge, l));
        }
    }
    let sign = if lp.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let mut best: Option<(f64, Vec<f64>)> = None;

    let feasible = |x: &[f64]| {
        planes.iter().all(|(a, rel, b)| {
            let lhs: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            let tol = 1e-7 * (1.0 + b.abs());
            match rel {
                Relation::Le => lhs <= b + tol,
                Relation::Ge => lhs >= b - tol,
                Relation::Eq => (lhs - b).abs() <= tol,
            }
        })
    };

    let mut consider = |active: Vec<usize>| {
        let a: Vec<Vec<f64>> = active.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = active.iter().map(|&i| planes[i].2).collect();
        if let Some(x) = gauss_solve(a, b) {
            if feasible(&x) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                if best.as_ref().is_none_or(|(bv, _)| sign * v > sign * bv) {
                    best = Some((v, x));
                }
            }
        }
    };

    // A vertex is any feasible point where n independent planes are tight.
    // Equalities are not forced into the active set: redundant equality rows
    // would make every such system singular.
    combinations(planes.len(), n, &mut |pick| consider(pick.to_vec()));
    best
}

/// The four DEA multiplier programs written out directly from their
/// definitions, on raw data, with the ratio-model floor expressed as
/// `weight * column_max >= eps` and the additive floor as `weight * scale >= 1`.
pub mod dea_oracle {
    use super::*;

    #[derive(Clone, Copy, PartialEq, Eq, Debug)]
    pub enum Kind {
        Ccr,
        IoBcc,
        OoBcc,
        Additive,
    }

    pub fn score(outputs: &[Vec<f64>], inputs: &[Vec<f64>], l: usize, kind: Kind, eps: f64) -> f64 {
        let r = outputs[0].len();
        let s = inputs[0].len();
        let k = outputs.len();
        let colmax = |m: &[Vec<f64>], i: usize| m.iter().map(|row| row[i]).fold(0.0, f64::max);
        // Additive: normalized columns <=> raw data with weights scaled by 1/colmax.
        let free = kind != Kind::Ccr;
        let nv = r + s + usize::from(free);
        let f = r + s;

        let mut c = vec![0.0; nv];
        c[..r].copy_from_slice(&outputs[l]);
        match kind {
            Kind::IoBcc => c[f] = 1.0,
            Kind::Additive => {
                for i in 0..s {
                    c[r + i] = -inputs[l][i];
                }
                c[f] = -1.0;
            }
            _ => {}
        }
        let mut lp = LinearProgram::maximize(c);
        if kind != Kind::Additive {
            let mut a = vec![0.0; nv];
            a[r..r + s].copy_from_slice(&inputs[l]);
            if kind == Kind::OoBcc {
                a[f] = 1.0;
            }
            lp = lp.constraint(a, Relation::Eq, 1.0);
        }
        for j in 0..k {
            let mut a = vec![0.0; nv];
            a[..r].copy_from_slice(&outputs[j]);
            for i in 0..s {
                a[r + i] = -inputs[j][i];
            }
            match kind {
                Kind::IoBcc => a[f] = 1.0,
                Kind::OoBcc | Kind::Additive => a[f] = -1.0,
                Kind::Ccr => {}
            }
            lp = lp.constraint(a, Relation::Le, 0.0);
        }
        let floor = if kind == Kind::Additive { 1.0 } else { eps };
        for i in 0..r {
            lp.set_lower_bound(i, floor / colmax(outputs, i));
        }
        for i in 0..s {
            lp.set_lower_bound(r + i, floor / colmax(inputs, i));
        }
        if free {
            lp.set_free(f);
        }
        vertex_optimum(&lp).expect("DEA program has a feasible vertex").0
    }
}

/// Small builders for joined datasets.
pub mod fixtures {
    use sensor_select::ingest::{
        join, ChannelKey, ChannelSeries, CostProfile, JoinedDataset, SignalDataset, StateLabel,
    };

    pub fn cost(key: &ChannelKey, total: f64) -> CostProfile<f64> {
        CostProfile {
            key: key.clone(),
            purchase: total,
            installation: 0.0,
            replacement: 0.0,
            disassembly: 0.0,
            inspection: 0.0,
            communication: 0.0,
        }
    }

    /// States are coded 1, 2, ... and state 1 is the positive class.
    pub fn joined(channels: Vec<(ChannelKey, Vec<Vec<f64>>, f64)>) -> JoinedDataset<f64> {
        let k = channels[0].1.len();
        let costs: Vec<_> = channels.iter().map(|(key, _, c)| cost(key, *c)).collect();
        let series = channels
            .into_iter()
            .map(|(key, s, _)| ChannelSeries::new(key, s))
            .collect();
        let states = (1..=k as u32).map(StateLabel::from_code).collect();
        let dataset = SignalDataset::new(series, states, 1).unwrap();
        join(dataset, &costs).unwrap()
    }
}
