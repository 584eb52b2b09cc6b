use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::program::{dot, ConeProgram, SocConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Iteration budget exhausted or a non-finite Newton step; `x` is the best feasible iterate.
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target duality gap and stationarity residual, relative to the scaled problem.
    pub tol: f64,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, mu: 10.0, max_newton: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// Objective after each barrier centering.
    pub outer_objectives: Vec<f64>,
    pub newton_steps: usize,
}

/// Second-order cone over the working variables: `||A z + b|| <= t0 + t1 * z[k]`.
#[derive(Debug, Clone)]
struct Cone {
    rows: Vec<Vec<(usize, f64)>>,
    offsets: Vec<f64>,
    t_const: f64,
    t_slack: Option<usize>,
}

impl Cone {
    fn from_constraint(c: &SocConstraint, slack: Option<usize>) -> Self {
        // Dividing every row by the bound puts all cones on a unit scale.
        let s = 1.0 / c.bound;
        Self {
            rows: c.rows.iter().map(|r| r.iter().map(|(i, a)| (*i, a * s)).collect()).collect(),
            offsets: c.offsets.iter().map(|o| o * s).collect(),
            t_const: 1.0,
            t_slack: slack,
        }
    }

    fn eval(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let u = self.rows.iter().zip(&self.offsets).map(|(row, off)| row.iter().map(|(i, a)| a * z[*i]).sum::<f64>() + off).collect();
        let t = self.t_const + self.t_slack.map_or(0.0, |k| z[k]);
        (u, t)
    }
}

/// The barrier problem `max c.z` s.t. `G z <= h`, cones, `A z = b`.
struct Working {
    nz: usize,
    c: Vec<f64>,
    lin: Vec<(Vec<f64>, f64)>,
    cones: Vec<Cone>,
    eq: Vec<(Vec<f64>, f64)>,
}

impl Working {
    fn constraint_count(&self) -> usize {
        self.lin.len() + 2 * self.cones.len()
    }

    /// Barrier value, or `None` outside the strict interior.
    fn barrier(&self, z: &[f64]) -> Option<f64> {
        let mut phi = 0.0;
        for (row, rhs) in &self.lin {
            let s = rhs - dot(row, z);
            if !(s > 0.0) {
                return None;
            }
            phi -= s.ln();
        }
        for cone in &self.cones {
            let (u, t) = cone.eval(z);
            let f = t * t - u.iter().map(|v| v * v).sum::<f64>();
            if !(t > 0.0 && f > 0.0) {
                return None;
            }
            phi -= f.ln();
        }
        Some(phi)
    }

    fn merit(&self, z: &[f64], t: f64) -> Option<f64> {
        self.barrier(z).map(|phi| -t * dot(&self.c, z) + phi)
    }

    /// Gradient and Hessian of `-t c.z + barrier(z)`.
    fn derivatives(&self, z: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.nz;
        let mut g = DVector::from_iterator(n, self.c.iter().map(|c| -t * c));
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (row, rhs) in &self.lin {
            let s = rhs - dot(row, z);
            let inv = 1.0 / s;
            let nz: Vec<(usize, f64)> = row.iter().copied().enumerate().filter(|(_, a)| *a != 0.0).collect();
            for &(i, a) in &nz {
                g[i] += a * inv;
                for &(j, b) in &nz {
                    h[(i, j)] += a * b * inv * inv;
                }
            }
        }
        for cone in &self.cones {
            let (u, tc) = cone.eval(z);
            let f = tc * tc - u.iter().map(|v| v * v).sum::<f64>();
            // d f / d z as a sparse vector; the Hessian of f is -2 J_u^T J_u + 2 J_t^T J_t.
            let mut df = vec![0.0; n];
            for (row, ui) in cone.rows.iter().zip(&u) {
                for (i, a) in row {
                    df[*i] -= 2.0 * ui * a;
                }
            }
            if let Some(k) = cone.t_slack {
                df[k] += 2.0 * tc;
            }
            let support: Vec<usize> = (0..n).filter(|i| df[*i] != 0.0).collect();
            for &i in &support {
                g[i] -= df[i] / f;
                for &j in &support {
                    h[(i, j)] += df[i] * df[j] / (f * f);
                }
            }
            for row in &cone.rows {
                for (i, a) in row {
                    for (j, b) in row {
                        h[(*i, *j)] += 2.0 * a * b / f;
                    }
                }
            }
            if let Some(k) = cone.t_slack {
                h[(k, k)] -= 2.0 / f;
            }
        }
        (g, h)
    }

    fn newton_step(&self, z: &[f64], t: f64) -> Option<(Vec<f64>, f64)> {
        let (g, mut h) = self.derivatives(z, t);
        let n = self.nz;
        let p = self.eq.len();
        let reg = 1e-12 * (1.0 + (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max));
        for i in 0..n {
            h[(i, i)] += reg;
        }
        let dz = if p == 0 {
            match h.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => h.lu().solve(&(-&g))?,
            }
        } else {
            let mut k = DMatrix::<f64>::zeros(n + p, n + p);
            k.view_mut((0, 0), (n, n)).copy_from(&h);
            for (r, (row, _)) in self.eq.iter().enumerate() {
                for (j, a) in row.iter().enumerate() {
                    k[(n + r, j)] = *a;
                    k[(j, n + r)] = *a;
                }
            }
            let mut rhs = DVector::<f64>::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&g));
            let sol = k.lu().solve(&rhs)?;
            sol.rows(0, n).into_owned()
        };
        if dz.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let decrement = -g.dot(&dz);
        Some((dz.iter().copied().collect(), decrement))
    }

    /// Minimize the merit for fixed `t` from a strictly feasible `z`.
    fn center(&self, z: &mut Vec<f64>, t: f64, budget: &mut usize, stop: &dyn Fn(&[f64]) -> bool) -> Result<(), ()> {
        let mut value = self.merit(z, t).ok_or(())?;
        let mut previous = f64::INFINITY;
        loop {
            if *budget == 0 {
                return Err(());
            }
            *budget -= 1;
            let (dz, decrement) = self.newton_step(z, t).ok_or(())?;
            if decrement / 2.0 <= 1e-10 || !(decrement > 0.0) {
                return Ok(());
            }
            // Newton converges quadratically here; a decrement that stops
            // shrinking has reached the rounding floor.
            if decrement < 0.1 && decrement > 0.5 * previous {
                return Ok(());
            }
            previous = decrement;
            // Inside the quadratic region the full step stays interior and the
            // merit change is below its rounding error, so Armijo is skipped.
            if decrement < 0.1 {
                let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + d).collect();
                if let Some(v) = self.merit(&trial, t) {
                    *z = trial;
                    value = v;
                    if stop(z) {
                        return Ok(());
                    }
                    continue;
                }
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..80 {
                let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + step * d).collect();
                if let Some(v) = self.merit(&trial, t) {
                    if v <= value - 0.25 * step * decrement {
                        accepted = Some((trial, v));
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, v)) => {
                    *z = trial;
                    value = v;
                }
                None => return Ok(()),
            }
            if stop(z) {
                return Ok(());
            }
        }
    }

    /// Barrier method from a strictly feasible start; returns the final `t`.
    fn run(
        &self,
        z: &mut Vec<f64>,
        tol: f64,
        mu: f64,
        budget: &mut usize,
        stop: &dyn Fn(&[f64]) -> bool,
        trace: &mut Vec<f64>,
    ) -> (bool, f64) {
        let m = self.constraint_count().max(1) as f64;
        let mut t = 1.0;
        loop {
            if self.center(z, t, budget, stop).is_err() {
                return (false, t);
            }
            trace.push(dot(&self.c, z));
            if stop(z) || m / t < tol {
                return (true, t);
            }
            t *= mu;
        }
    }

    /// Duality-gap bound `(m + sqrt(m) * lambda) / t` of a near-central point,
    /// with `lambda` the Newton decrement.
    fn gap_bound(&self, z: &[f64], t: f64) -> f64 {
        let m = self.constraint_count().max(1) as f64;
        let lambda = self.newton_step(z, t).map_or(f64::INFINITY, |(_, d)| d.max(0.0).sqrt());
        (m + m.sqrt() * lambda) / t
    }
}

fn normalized(row: &[f64], rhs: f64) -> (Vec<f64>, f64) {
    let s = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if s > 0.0 {
        (row.iter().map(|a| a / s).collect(), rhs / s)
    } else {
        (row.to_vec(), rhs)
    }
}

fn linear_rows(prog: &ConeProgram) -> Vec<(Vec<f64>, f64)> {
    let mut rows: Vec<(Vec<f64>, f64)> = prog.inequalities.iter().map(|(r, b)| normalized(r, *b)).collect();
    for (i, (lo, hi)) in prog.bounds.iter().enumerate() {
        if lo.is_finite() {
            let mut r = vec![0.0; prog.n];
            r[i] = -1.0;
            rows.push((r, -lo));
        }
        if hi.is_finite() {
            let mut r = vec![0.0; prog.n];
            r[i] = 1.0;
            rows.push((r, *hi));
        }
    }
    rows
}

/// Point on the equality plane closest to `x`, or `None` if the plane is empty.
fn project_onto_equalities(prog: &ConeProgram, x: &[f64]) -> Option<Vec<f64>> {
    if prog.equalities.is_empty() {
        return Some(x.to_vec());
    }
    let p = prog.equalities.len();
    let a = DMatrix::from_fn(p, prog.n, |r, c| prog.equalities[r].0[c]);
    let b = DVector::from_iterator(p, prog.equalities.iter().map(|(_, v)| *v));
    let xv = DVector::from_column_slice(x);
    let resid = &b - &a * &xv;
    let delta = a.clone().svd(true, true).solve(&resid, 1e-12).ok()?;
    let out = xv + delta;
    let err = (&a * &out - &b).amax();
    let scale = 1.0 + b.amax() + a.amax() * out.amax();
    (err <= 1e-9 * scale).then(|| out.iter().copied().collect())
}

fn infeasible(prog: &ConeProgram, x: Vec<f64>, newton_steps: usize) -> Solution {
    Solution {
        objective: prog.value(&x),
        x,
        status: SolveStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        outer_objectives: Vec::new(),
        newton_steps,
    }
}

/// Maximize `prog.objective . x` by a log-barrier interior-point method.
///
/// `start` is used directly when strictly feasible; otherwise a phase-I
/// problem minimizing the largest constraint violation finds an interior
/// point first.
pub fn solve(prog: &ConeProgram, start: Option<&[f64]>, cfg: &SolverConfig) -> Solution {
    if prog.validate().is_err() {
        return infeasible(prog, start.map_or_else(|| vec![0.0; prog.n], <[f64]>::to_vec), 0);
    }
    let n = prog.n;
    let lin = linear_rows(prog);
    let eq: Vec<(Vec<f64>, f64)> = prog.equalities.iter().map(|(r, b)| normalized(r, *b)).collect();
    let c_scale = prog.objective.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let c: Vec<f64> = if c_scale > 0.0 { prog.objective.iter().map(|v| v / c_scale).collect() } else { prog.objective.clone() };
    let phase2 =
        Working { nz: n, c, lin: lin.clone(), cones: prog.cones.iter().map(|k| Cone::from_constraint(k, None)).collect(), eq: eq.clone() };
    let mut budget = cfg.max_newton;
    let guess = start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let Some(x0) = project_onto_equalities(prog, &guess) else {
        return infeasible(prog, guess, 0);
    };

    let mut x = if phase2.barrier(&x0).is_some() {
        x0
    } else {
        // Phase I over (x, s): every constraint relaxed by s, s kept above -1.
        let k = n;
        let mut lin1: Vec<(Vec<f64>, f64)> = lin
            .iter()
            .map(|(r, b)| {
                let mut row = r.clone();
                row.push(-1.0);
                (row, *b)
            })
            .collect();
        let mut floor = vec![0.0; n + 1];
        floor[k] = -1.0;
        lin1.push((floor, 1.0));
        // A wide box around the start keeps the phase-I barrier bounded below.
        let reach = 1e3 * (1.0 + x0.iter().chain(lin.iter().map(|(_, b)| b)).fold(0.0f64, |m, v| m.max(v.abs())));
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; n + 1];
                row[i] = sign;
                lin1.push((row, sign * x0[i] + reach));
            }
        }
        let phase1 = Working {
            nz: n + 1,
            c: {
                let mut c = vec![0.0; n + 1];
                c[k] = -1.0;
                c
            },
            lin: lin1,
            cones: prog.cones.iter().map(|cn| Cone::from_constraint(cn, Some(k))).collect(),
            eq: eq
                .iter()
                .map(|(r, b)| {
                    let mut row = r.clone();
                    row.push(0.0);
                    (row, *b)
                })
                .collect(),
        };
        let mut worst = lin.iter().map(|(r, b)| dot(r, &x0) - b).fold(0.0f64, f64::max);
        for cn in &phase2.cones {
            let (u, _) = cn.eval(&x0);
            worst = worst.max(u.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0);
        }
        let mut z = x0.clone();
        z.push(worst + 1.0);
        let deep_enough = |z: &[f64]| z[k] <= -0.1;
        let mut trace = Vec::new();
        phase1.run(&mut z, 1e-9, cfg.mu, &mut budget, &deep_enough, &mut trace);
        if !(z[k] < 0.0) || phase2.barrier(&z[..n]).is_none() {
            return infeasible(prog, z[..n].to_vec(), cfg.max_newton - budget);
        }
        z.truncate(n);
        z
    };

    let mut trace = Vec::new();
    let never = |_: &[f64]| false;
    let (converged, t) = phase2.run(&mut x, cfg.tol, cfg.mu, &mut budget, &never, &mut trace);
    let kkt = phase2.gap_bound(&x, t);
    let unscale = if c_scale > 0.0 { c_scale } else { 1.0 };
    Solution {
        objective: prog.value(&x),
        x,
        status: if converged { SolveStatus::Optimal } else { SolveStatus::MaxIter },
        kkt_residual: kkt,
        outer_objectives: trace.iter().map(|v| v * unscale).collect(),
        newton_steps: cfg.max_newton - budget,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn lower_bound_is_active() {
        let mut p = ConeProgram::new(1);
        p.objective = vec![-1.0];
        p.add_inequality(vec![-1.0], -1.0);
        let s = solve(&p, None, &cfg());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-7, "{:?}", s.x);
    }

    #[test]
    fn epigraph_of_min() {
        let (a, b) = (3.5, -1.25);
        let mut p = ConeProgram::new(1);
        p.objective = vec![1.0];
        p.add_inequality(vec![1.0], a);
        p.add_inequality(vec![1.0], b);
        let s = solve(&p, Some(&[10.0]), &cfg());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - b).abs() < 1e-7);
    }

    #[test]
    fn equality_constrained_lp() {
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 1.0];
        p.add_equality(vec![1.0, 2.0], 4.0);
        p.bounds = vec![(0.0, 10.0), (0.0, 10.0)];
        let s = solve(&p, None, &cfg());
        assert!((s.objective - 4.0).abs() < 1e-7);
        assert!(p.max_violation(&s.x) <= 1e-9);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = ConeProgram::new(1);
        p.objective = vec![1.0];
        p.add_inequality(vec![1.0], 0.0);
        p.add_inequality(vec![-1.0], -1.0);
        assert_eq!(solve(&p, None, &cfg()).status, SolveStatus::Infeasible);
        let mut q = ConeProgram::new(2);
        q.add_equality(vec![1.0, 1.0], 1.0);
        q.add_equality(vec![1.0, 1.0], 2.0);
        assert_eq!(solve(&q, None, &cfg()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn ball_projection_lands_on_boundary() {
        // maximize t s.t. ||x - c|| <= r, t <= x0 + 2 x1
        let (c, r) = ([1.0, -2.0], 0.75);
        let mut p = ConeProgram::new(3);
        p.objective = vec![0.0, 0.0, 1.0];
        p.add_inequality(vec![-1.0, -2.0, 1.0], 0.0);
        p.add_cone(SocConstraint::ball(&[0, 1], &c, r));
        let s = solve(&p, None, &cfg());
        assert_eq!(s.status, SolveStatus::Optimal);
        let d = ((s.x[0] - c[0]).powi(2) + (s.x[1] - c[1]).powi(2)).sqrt();
        assert!((d - r).abs() < 1e-6, "distance {d}");
        let dir = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        assert!((s.x[0] - (c[0] + r * dir[0])).abs() < 1e-5);
        assert!((s.x[1] - (c[1] + r * dir[1])).abs() < 1e-5);
        assert!(p.max_violation(&s.x) <= 0.0);
    }

    #[test]
    fn difference_cone_limits_step() {
        let mut p = ConeProgram::new(4);
        p.objective = vec![0.0, 0.0, 1.0, 1.0];
        p.bounds = vec![(0.0, 1.0), (0.0, 1.0), (-10.0, 10.0), (-10.0, 10.0)];
        p.add_cone(SocConstraint::difference(&[2, 3], &[0, 1], 2.0));
        let s = solve(&p, None, &cfg());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-6, "{}", s.objective);
    }

    fn vertex_oracle(rows: &[(Vec<f64>, f64)], c: &[f64]) -> f64 {
        let n = c.len();
        let m = rows.len();
        let mut best = f64::NEG_INFINITY;
        let mut pick: Vec<usize> = (0..n).collect();
        loop {
            let a = DMatrix::from_fn(n, n, |r, k| rows[pick[r]].0[k]);
            let b = DVector::from_iterator(n, pick.iter().map(|&i| rows[i].1));
            if let Some(x) = a.lu().solve(&b) {
                let ok = rows.iter().all(|(r, h)| r.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() <= h + 1e-9);
                if ok && x.iter().all(|v| v.is_finite()) {
                    best = best.max(c.iter().zip(x.iter()).map(|(a, v)| a * v).sum());
                }
            }
            // Next n-subset in lexicographic order.
            let mut i = n;
            while i > 0 && pick[i - 1] == m - n + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return best;
            }
            pick[i - 1] += 1;
            for j in i..n {
                pick[j] = pick[j - 1] + 1;
            }
        }
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..20 {
            let n = rng.gen_range(2..=8);
            let m = rng.gen_range(n + 1..=12);
            let rows: Vec<(Vec<f64>, f64)> =
                (0..m).map(|_| ((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(0.1..2.0))).collect();
            // An objective inside the cone of row normals keeps the LP bounded.
            let mut c = vec![0.0; n];
            for (row, _) in rows.iter().take(n + 1) {
                let w: f64 = rng.gen_range(0.1..1.0);
                for (ci, a) in c.iter_mut().zip(row) {
                    *ci += w * a;
                }
            }
            let mut p = ConeProgram::new(n);
            p.objective = c.clone();
            for (r, b) in &rows {
                p.add_inequality(r.clone(), *b);
            }
            let s = solve(&p, None, &cfg());
            assert_eq!(s.status, SolveStatus::Optimal, "case {case}: {s:?}");
            let want = vertex_oracle(&rows, &c);
            assert!((s.objective - want).abs() <= 1e-6 * want.abs().max(1.0), "case {case}: {} vs {want}", s.objective);
            assert!(p.max_violation(&s.x) <= 0.0);
        }
    }

    #[test]
    fn outer_objectives_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let mut p = ConeProgram::new(n);
        p.objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        p.bounds = vec![(-1.0, 1.0); n];
        p.add_cone(SocConstraint::ball(&[0, 1, 2], &[0.2, 0.1, -0.3], 0.5));
        let s = solve(&p, None, &cfg());
        for w in s.outer_objectives.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        assert!(s.kkt_residual <= 1e-8, "{s:?}");
    }

    #[test]
    fn feasible_start_is_used_and_respected() {
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 0.5];
        p.add_cone(SocConstraint::ball(&[0, 1], &[0.0, 0.0], 1.0));
        let s = solve(&p, Some(&[0.1, 0.1]), &cfg());
        assert!((s.objective - 1.25f64.sqrt()).abs() < 1e-7);
        assert!(p.to_json().unwrap().contains("cones"));
    }
}
