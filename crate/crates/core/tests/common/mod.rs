//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use microgrid_core::lp::LinearProgram;
use rand::Rng;

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of `c·x` over all basic feasible solutions of `Ax = b`,
/// `l <= x <= u` with finite bounds. `None` when no vertex is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let (m, n) = (lp.num_rows(), lp.num_vars());
    let (lo, hi, c, rhs) = (lp.lower(), lp.upper(), lp.objective(), lp.rhs());
    let mut best: Option<f64> = None;
    let ranks: Vec<usize> = (0..=m.min(n)).rev().collect();
    for &k in &ranks {
        // k basic columns; rows beyond the rank must be satisfied implicitly
        for basis in combinations(n, k) {
            let nonbasic: Vec<usize> = (0..n).filter(|j| !basis.contains(j)).collect();
            for mask in 0..(1u32 << nonbasic.len()) {
                let mut x = vec![0.0; n];
                for (bit, &j) in nonbasic.iter().enumerate() {
                    x[j] = if mask >> bit & 1 == 1 { hi[j] } else { lo[j] };
                }
                let resid: Vec<f64> =
                    (0..m).map(|i| rhs[i] - nonbasic.iter().map(|&j| lp.coef(i, j) * x[j]).sum::<f64>()).collect();
                if k > 0 {
                    for rows in combinations(m, k) {
                        let a: Vec<Vec<f64>> =
                            rows.iter().map(|&i| basis.iter().map(|&j| lp.coef(i, j)).collect()).collect();
                        let b: Vec<f64> = rows.iter().map(|&i| resid[i]).collect();
                        if let Some(xb) = solve_dense(a, b) {
                            for (v, &j) in xb.iter().zip(&basis) {
                                x[j] = *v;
                            }
                            consider(lp, &x, c, &mut best);
                        }
                    }
                } else {
                    consider(lp, &x, c, &mut best);
                }
            }
        }
    }
    best
}

fn consider(lp: &LinearProgram, x: &[f64], c: &[f64], best: &mut Option<f64>) {
    let tol = 1e-9;
    let n = lp.num_vars();
    for j in 0..n {
        if x[j] < lp.lower()[j] - tol || x[j] > lp.upper()[j] + tol {
            return;
        }
    }
    for i in 0..lp.num_rows() {
        let ax: f64 = (0..n).map(|j| lp.coef(i, j) * x[j]).sum();
        if (ax - lp.rhs()[i]).abs() > 1e-8 * (1.0 + lp.rhs()[i].abs()) {
            return;
        }
    }
    let v: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    if best.is_none_or(|b| v < b) {
        *best = Some(v);
    }
}

/// A random LP with finite bounds whose feasible set contains an interior
/// point of the box.
pub fn random_bounded_lp<R: Rng>(rng: &mut R, n: usize, m: usize) -> LinearProgram {
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
    let hi: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + rng.random_range(0.2..0.8) * (h - l)).collect();
    let a: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(-2.0..2.0) })
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = a.iter().map(|row| row.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    LinearProgram::new(c, a, rhs, lo, hi).expect("consistent dimensions")
}

/// Checks primal feasibility, dual feasibility and strong duality of an
/// optimal solution; returns the worst violation.
pub fn kkt_violation(lp: &LinearProgram, x: &[f64], y: &[f64]) -> f64 {
    let (m, n) = (lp.num_rows(), lp.num_vars());
    let mut worst = 0.0f64;
    for i in 0..m {
        let ax: f64 = (0..n).map(|j| lp.coef(i, j) * x[j]).sum();
        worst = worst.max((ax - lp.rhs()[i]).abs());
    }
    let mut dual_obj: f64 = (0..m).map(|i| lp.rhs()[i] * y[i]).sum();
    for j in 0..n {
        let (l, u) = (lp.lower()[j], lp.upper()[j]);
        worst = worst.max(l - x[j]).max(x[j] - u);
        let d = lp.objective()[j] - (0..m).map(|i| lp.coef(i, j) * y[i]).sum::<f64>();
        let at_lo = (x[j] - l).abs() <= 1e-9;
        let at_hi = (u - x[j]).abs() <= 1e-9;
        let infeas = match (at_lo, at_hi) {
            (true, true) => 0.0,
            (true, false) => (-d).max(0.0),
            (false, true) => d.max(0.0),
            (false, false) => d.abs(),
        };
        worst = worst.max(infeas);
        dual_obj += d * x[j];
    }
    let primal_obj: f64 = lp.objective().iter().zip(x).map(|(a, b)| a * b).sum();
    worst.max((primal_obj - dual_obj).abs())
}

use microgrid_core::lp::{solve, LpBuilder, LpStatus};
use microgrid_core::model::{State, SystemParams, Uncertainty};
use microgrid_core::scenarios::DiscreteDistribution;

/// Default parameters over `steps` steps starting at 07:00, with the
/// thermal part and the tank switched off.
pub fn battery_only(steps: usize) -> SystemParams {
    let mut p = SystemParams::default();
    let start = 28;
    let cut = |v: &Vec<f64>| v[start..=start + steps].to_vec();
    p.horizon_steps = steps;
    p.theta_o = cut(&p.theta_o);
    p.p_int = cut(&p.p_int);
    p.p_ext = cut(&p.p_ext);
    p.pi_e = cut(&p.pi_e);
    p.theta_set = cut(&p.theta_set);
    p.pi_d = vec![0.0; steps + 1];
    p.f_t_max = 0.0;
    p.f_h_max = 0.0;
    p
}

/// Exact optimal expected cost from `x` at stage `t0` for the battery-only
/// problem, by one LP over the whole scenario tree of `dists[t0..]`.
/// Only the battery, the grid import and the terminal battery penalty are
/// modelled; the instance must have no tank, heater or discomfort costs.
pub fn battery_tree_value(p: &SystemParams, dists: &[DiscreteDistribution], t0: usize, x: &State, x0: &State) -> f64 {
    assert_eq!(p.f_t_max, 0.0);
    assert_eq!(p.f_h_max, 0.0);
    assert!(p.pi_d.iter().all(|&v| v == 0.0));
    let d = p.delta;
    let mut b = LpBuilder::new();
    // each frontier entry: (battery variable or fixed value, path probability)
    enum Level {
        Fixed(f64),
        Var(usize),
    }
    let mut frontier = vec![(Level::Fixed(x.b), 1.0)];
    for t in t0..p.horizon_steps {
        let dist = &dists[t];
        let mut next = Vec::new();
        for (level, prob) in frontier {
            let fp = b.add_var("fp", 0.0, 0.0, p.f_b_max);
            let fm = b.add_var("fm", 0.0, 0.0, p.f_b_max);
            for (w, q) in dist.points.iter().zip(&dist.weights) {
                let pq = prob * q;
                let fne = b.add_var("fne", pq * p.pi_e[t] * d, 0.0, f64::INFINITY);
                let spill = b.add_var("spill", 0.0, 0.0, f64::INFINITY);
                let bn = b.add_var("b", 0.0, p.b_min, p.b_max);
                b.add_eq(&[(fne, 1.0), (spill, -1.0), (fp, -1.0), (fm, 1.0)], w.d_el_net);
                let mut terms = vec![(bn, 1.0), (fp, -d * p.rho_c), (fm, d / p.rho_d)];
                let rhs = match level {
                    Level::Fixed(v) => v,
                    Level::Var(j) => {
                        terms.push((j, -1.0));
                        0.0
                    }
                };
                b.add_eq(&terms, rhs);
                next.push((Level::Var(bn), pq));
            }
        }
        frontier = next;
    }
    let mut terminal_const = 0.0;
    for (level, prob) in frontier {
        match level {
            Level::Fixed(v) => terminal_const += prob * p.kappa * (x0.b - v).max(0.0),
            Level::Var(j) => {
                let s = b.add_var("tb", prob * p.kappa, 0.0, f64::INFINITY);
                b.add_ge(&[(s, 1.0), (j, 1.0)], x0.b);
            }
        }
    }
    // the tank is empty and never used: its terminal penalty is a constant
    terminal_const += p.kappa * (x0.h - x.h).max(0.0);
    let sol = solve(&b.build().unwrap()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective + terminal_const
}

/// Two-point stagewise-independent noise on the net demand.
pub fn two_point_noise(p: &SystemParams, low: f64, high: f64) -> Vec<DiscreteDistribution> {
    (1..=p.horizon_steps)
        .map(|t| {
            let shift = 0.2 * (t as f64).sin();
            DiscreteDistribution {
                t,
                points: vec![Uncertainty::new(low + shift, 0.0), Uncertainty::new(high + shift, 0.0)],
                weights: vec![0.5, 0.5],
            }
        })
        .collect()
}
