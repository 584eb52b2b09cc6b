use crate::convex::{ConeProgram, SolverConfig};
use crate::error::{Error, Result};
use crate::ratemodel::{rate, rate_d_alpha, rate_d_power, LinkBudget};

use super::config::AoConfig;
use super::slp::{trust_region_ascent, InnerTrace, Linearization, Subproblem};

/// Per-slot split of a unit resource among the UAVs, maximizing the smallest
/// average rate. Shares of the last UAV are implied by the per-slot sum.
struct Allocation<'a> {
    uavs: usize,
    slots: usize,
    floor: f64,
    /// Normalized rate of UAV `u` in slot `n` at share `s`, and its slope.
    rate: &'a (dyn Fn(usize, usize, f64) -> (f64, f64) + Sync),
    r_min: f64,
}

impl Allocation<'_> {
    fn index(&self, u: usize, n: usize) -> usize {
        u * self.slots + n
    }

    fn dim(&self) -> usize {
        (self.uavs - 1) * self.slots
    }

    fn shares(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.uavs - 1;
        let mut out: Vec<Vec<f64>> = (0..last).map(|u| x[u * self.slots..(u + 1) * self.slots].to_vec()).collect();
        out.push((0..self.slots).map(|n| (1.0 - (0..last).map(|u| x[self.index(u, n)]).sum::<f64>()).max(0.0)).collect());
        out
    }

    fn flatten(&self, shares: &[Vec<f64>]) -> Vec<f64> {
        shares[..self.uavs - 1].iter().flatten().copied().collect()
    }

    fn rates(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.shares(x).iter().enumerate().map(|(u, s)| s.iter().enumerate().map(|(n, v)| (self.rate)(u, n, *v).0).collect()).collect()
    }
}

impl Subproblem for Allocation<'_> {
    fn objective(&self, x: &[f64]) -> Result<f64> {
        Ok(self.rates(x).iter().map(|r| r.iter().sum::<f64>() / self.slots as f64).fold(f64::INFINITY, f64::min))
    }

    fn admissible(&self, x: &[f64]) -> Result<bool> {
        let tol = 1e-9 * self.r_min.max(1e-12);
        Ok(self.rates(x).iter().flatten().all(|r| *r >= self.r_min - tol))
    }

    fn local_program(&self, x0: &[f64], radius: f64) -> Result<(ConeProgram, Vec<Linearization>)> {
        let d = self.dim();
        let gamma = d;
        let last = self.uavs - 1;
        let shares = self.shares(x0);
        let mut prog = ConeProgram::new(d + 1);
        prog.objective[gamma] = 1.0;
        for (i, v) in x0.iter().enumerate() {
            prog.bounds[i] = ((v - radius).max(self.floor), (v + radius).min(1.0));
        }
        let mut lins = Vec::with_capacity(self.uavs * self.slots);
        for n in 0..self.slots {
            let free: Vec<usize> = (0..last).map(|u| self.index(u, n)).collect();
            // The implied share stays above the floor.
            let terms: Vec<(usize, f64)> = free.iter().map(|i| (*i, 1.0)).collect();
            prog.add_sparse_inequality(&terms, 1.0 - self.floor);
        }
        for u in 0..self.uavs {
            let mut epigraph = vec![(gamma, 1.0)];
            let mut constant = 0.0;
            for n in 0..self.slots {
                let (value, slope) = (self.rate)(u, n, shares[u][n]);
                let lin = if u < last {
                    let i = self.index(u, n);
                    Linearization::new(vec![i], vec![x0[i]], value, vec![slope])
                } else {
                    let idx: Vec<usize> = (0..last).map(|v| self.index(v, n)).collect();
                    let anchor = idx.iter().map(|i| x0[*i]).collect();
                    Linearization::new(idx, anchor, value, vec![-slope; last])
                };
                for (i, g) in lin.terms(-1.0 / self.slots as f64) {
                    epigraph.push((i, g));
                }
                constant += lin.constant / self.slots as f64;
                if self.r_min > 0.0 {
                    prog.add_sparse_inequality(&lin.terms(-1.0), lin.constant - self.r_min);
                }
                lins.push(lin);
            }
            prog.add_sparse_inequality(&epigraph, constant);
        }
        Ok((prog, lins))
    }
}

/// Every UAV gets its minimum share plus an equal part of the rest. Errors
/// when the minimum shares do not fit in a slot.
fn feasible_start(min_share: &[Vec<f64>], floor: f64, kind: &str) -> Result<Vec<Vec<f64>>> {
    let (m, slots) = (min_share.len(), min_share[0].len());
    let mut bad = Vec::new();
    let mut out = vec![vec![0.0; slots]; m];
    for n in 0..slots {
        let need: f64 = (0..m).map(|u| min_share[u][n].max(floor)).sum();
        if !(need <= 1.0 + 1e-12) {
            bad.push(format!("(7g) slot {n}: minimum {kind} shares sum to {need:.6}"));
            continue;
        }
        let spare = (1.0 - need).max(0.0) / m as f64;
        for u in 0..m {
            out[u][n] = min_share[u][n].max(floor) + spare;
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::Infeasible(bad))
    }
}

fn check_shape(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>]) -> Result<(usize, usize)> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let ok = m > 0 && n > 0 && [a, b, c].iter().all(|g| g.len() == m && g.iter().all(|r| r.len() == n));
    if !ok {
        return Err(Error::InvalidInput("gains, shares and start must all be M x N and non-empty".into()));
    }
    Ok((m, n))
}

fn run_allocation(
    rate_fn: &(dyn Fn(usize, usize, f64) -> (f64, f64) + Sync),
    min_share: Vec<Vec<f64>>,
    start: Vec<Vec<f64>>,
    floor: f64,
    kind: &str,
    budget: &LinkBudget,
    cfg: &AoConfig,
    solver: &SolverConfig,
) -> Result<(Vec<Vec<f64>>, InnerTrace)> {
    let (m, slots) = (start.len(), start[0].len());
    let problem = Allocation { uavs: m, slots, floor, rate: rate_fn, r_min: budget.r_min_bps / budget.b_max_hz };
    let fallback = feasible_start(&min_share, floor, kind)?;
    if m == 1 {
        let trace = InnerTrace { objectives: vec![problem.objective(&[])?], converged: true, ..InnerTrace::default() };
        return Ok((vec![vec![1.0; slots]], trace));
    }
    let mut x0 = problem.flatten(&start);
    let in_simplex = (0..slots).all(|n| {
        let s: f64 = start.iter().map(|r| r[n]).sum();
        (s - 1.0).abs() <= 1e-9 && start.iter().all(|r| r[n] >= floor * (1.0 - 1e-12))
    });
    if !in_simplex || !problem.admissible(&x0)? {
        x0 = problem.flatten(&fallback);
    }
    let (x, trace) = trust_region_ascent(&problem, x0, 1.0, cfg.eps_alpha, cfg.i_max, solver)?;
    Ok((problem.shares(&x), trace))
}

/// Powers maximizing the smallest average rate for fixed positions and
/// bandwidth shares, with every slot spending exactly `P_max`.
pub fn solve_power(
    gains: &[Vec<f64>],
    alpha: &[Vec<f64>],
    start: &[Vec<f64>],
    budget: &LinkBudget,
    cfg: &AoConfig,
) -> Result<(Vec<Vec<f64>>, InnerTrace)> {
    check_shape(gains, alpha, start)?;
    budget.validate(gains.len())?;
    let b = budget.b_max_hz;
    let pmax = budget.p_max_w;
    let rate_fn = |u: usize, n: usize, s: f64| {
        let (a, g) = (alpha[u][n], gains[u][n]);
        (rate(a, pmax * s, g, budget) / b, rate_d_power(a, pmax * s, g, budget) * pmax / b)
    };
    // Inverting the rate gives the power that just meets R_min.
    let min_share: Vec<Vec<f64>> = gains
        .iter()
        .zip(alpha)
        .map(|(gr, ar)| {
            gr.iter()
                .zip(ar)
                .map(|(g, a)| {
                    let bw = a * b;
                    ((budget.r_min_bps / bw).exp2() - 1.0) * budget.n0_w_per_hz * bw / (g * pmax)
                })
                .collect()
        })
        .collect();
    let start_share: Vec<Vec<f64>> = start.iter().map(|r| r.iter().map(|p| p / pmax).collect()).collect();
    let (shares, trace) = run_allocation(&rate_fn, min_share, start_share, 0.0, "power", budget, cfg, &cfg.solver)?;
    Ok((shares.iter().map(|r| r.iter().map(|s| s * pmax).collect()).collect(), trace))
}

/// Smallest share in `[floor, 1]` reaching `target` normalized rate, by bisection.
fn min_alpha(power: f64, gain: f64, target: f64, floor: f64, budget: &LinkBudget) -> f64 {
    let r = |a: f64| rate(a, power, gain, budget) / budget.b_max_hz;
    if target <= 0.0 || r(floor) >= target {
        return floor;
    }
    if r(1.0) < target {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (floor, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    hi
}

/// Bandwidth shares maximizing the smallest average rate for fixed positions
/// and powers, with shares in `[epsilon, 1]` summing to one per slot.
pub fn solve_bandwidth(
    gains: &[Vec<f64>],
    power: &[Vec<f64>],
    start: &[Vec<f64>],
    budget: &LinkBudget,
    cfg: &AoConfig,
) -> Result<(Vec<Vec<f64>>, InnerTrace)> {
    check_shape(gains, power, start)?;
    budget.validate(gains.len())?;
    let b = budget.b_max_hz;
    let rate_fn = |u: usize, n: usize, a: f64| {
        let (p, g) = (power[u][n], gains[u][n]);
        (rate(a, p, g, budget) / b, rate_d_alpha(a, p, g, budget) / b)
    };
    let target = budget.r_min_bps / b;
    let min_share: Vec<Vec<f64>> = gains
        .iter()
        .zip(power)
        .map(|(gr, pr)| gr.iter().zip(pr).map(|(g, p)| min_alpha(*p, *g, target, budget.epsilon_alpha, budget)).collect())
        .collect();
    run_allocation(&rate_fn, min_share, start.to_vec(), budget.epsilon_alpha, "bandwidth", budget, cfg, &cfg.solver)
}
