use rayon::prelude::*;

use crate::convex::{ConeProgram, SocConstraint};
use crate::error::{Error, Result};
use crate::ratemodel::{rate, rate_d_gain, LinkBudget, Mission};

use super::channel::ChannelModel;
use super::config::AoConfig;
use super::slp::{trust_region_ascent, InnerTrace, Linearization, Subproblem};

/// Affine lower bound of `||q - c||^2` around `anchor`, exact at the anchor.
pub fn obstacle_lower_bound(q: [f64; 2], anchor: [f64; 2], c: [f64; 2]) -> f64 {
    let d = [anchor[0] - c[0], anchor[1] - c[1]];
    d[0] * d[0] + d[1] * d[1] + 2.0 * (d[0] * (q[0] - anchor[0]) + d[1] * (q[1] - anchor[1]))
}

/// Waypoints in map units: `(q - origin) / scale`, so the step bound stays isotropic.
struct Frame {
    origin: [f64; 2],
    scale: f64,
}

impl Frame {
    fn to_unit(&self, q: [f64; 2]) -> [f64; 2] {
        [(q[0] - self.origin[0]) / self.scale, (q[1] - self.origin[1]) / self.scale]
    }

    fn to_meters(&self, x: [f64; 2]) -> [f64; 2] {
        [self.origin[0] + x[0] * self.scale, self.origin[1] + x[1] * self.scale]
    }
}

struct Trajectory<'a> {
    channel: &'a dyn ChannelModel,
    mission: &'a Mission,
    budget: &'a LinkBudget,
    alpha: &'a [Vec<f64>],
    power: &'a [Vec<f64>],
    frame: Frame,
    /// Normalized rates at the pinned first and last slots.
    pinned_rates: Vec<[f64; 2]>,
}

impl Trajectory<'_> {
    fn free(&self) -> usize {
        self.mission.slots.saturating_sub(2)
    }

    fn var(&self, u: usize, n: usize) -> usize {
        2 * (u * self.free() + n - 1)
    }

    fn point(&self, x: &[f64], u: usize, n: usize) -> [f64; 2] {
        let i = self.var(u, n);
        [x[i], x[i + 1]]
    }

    fn waypoints(&self, x: &[f64]) -> Vec<Vec<[f64; 2]>> {
        let n = self.mission.slots;
        (0..self.mission.uavs())
            .map(|u| {
                (0..n)
                    .map(|s| {
                        if s == 0 {
                            self.mission.starts[u]
                        } else if s == n - 1 {
                            self.mission.ends[u]
                        } else {
                            self.mission.bounds.clip(self.frame.to_meters(self.point(x, u, s)))
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn flatten(&self, q: &[Vec<[f64; 2]>]) -> Vec<f64> {
        let mut x = vec![0.0; 2 * self.mission.uavs() * self.free()];
        for (u, row) in q.iter().enumerate() {
            for s in 1..self.mission.slots.saturating_sub(1) {
                let p = self.frame.to_unit(row[s]);
                let i = self.var(u, s);
                x[i] = p[0];
                x[i + 1] = p[1];
            }
        }
        x
    }

    fn free_slots(&self) -> Vec<(usize, usize)> {
        (0..self.mission.uavs()).flat_map(|u| (1..=self.free()).map(move |s| (u, s))).collect()
    }

    /// Normalized rates of every free waypoint.
    fn free_rates(&self, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.waypoints(x);
        let b = self.budget.b_max_hz;
        self.free_slots()
            .par_iter()
            .map(|&(u, s)| {
                let g = self.channel.gain(q[u][s])?;
                Ok(rate(self.alpha[u][s], self.power[u][s], g, self.budget) / b)
            })
            .collect()
    }

    fn averages(&self, free_rates: &[f64]) -> Vec<f64> {
        let n = self.mission.slots;
        let f = self.free();
        (0..self.mission.uavs())
            .map(|u| {
                let ends = self.pinned_rates[u][0] + if n > 1 { self.pinned_rates[u][1] } else { 0.0 };
                (ends + free_rates[u * f..(u + 1) * f].iter().sum::<f64>()) / n as f64
            })
            .collect()
    }
}

impl Subproblem for Trajectory<'_> {
    fn objective(&self, x: &[f64]) -> Result<f64> {
        let rates = self.free_rates(x)?;
        Ok(self.averages(&rates).into_iter().fold(f64::INFINITY, f64::min))
    }

    fn admissible(&self, x: &[f64]) -> Result<bool> {
        let r_min = self.budget.r_min_bps / self.budget.b_max_hz;
        if r_min <= 0.0 {
            return Ok(true);
        }
        Ok(self.free_rates(x)?.iter().all(|r| *r >= r_min * (1.0 - 1e-9)))
    }

    fn local_program(&self, x0: &[f64], radius: f64) -> Result<(ConeProgram, Vec<Linearization>)> {
        let d = x0.len();
        let gamma = d;
        let m = self.mission.uavs();
        let n = self.mission.slots;
        let b = self.budget.b_max_hz;
        let scale = self.frame.scale;
        let q0 = self.waypoints(x0);
        let slots = self.free_slots();
        let lins: Vec<Linearization> = slots.par_iter().map(|&(u, s)| self.linearize(x0, &q0, u, s)).collect::<Result<_>>()?;

        let mut prog = ConeProgram::new(d + 1);
        prog.objective[gamma] = 1.0;

        let span = self.mission.bounds.span();
        for (i, v) in x0.iter().enumerate() {
            let hi = span[i % 2] / scale;
            prog.bounds[i] = ((v - radius).max(0.0), (v + radius).min(hi));
        }

        let r_min = self.budget.r_min_bps / b;
        let f = self.free();
        for u in 0..m {
            let mut epigraph = vec![(gamma, 1.0)];
            let ends = self.pinned_rates[u][0] + if n > 1 { self.pinned_rates[u][1] } else { 0.0 };
            let mut constant = ends / n as f64;
            for lin in lins.iter().skip(u * f).take(f) {
                epigraph.extend(lin.terms(-1.0 / n as f64));
                constant += lin.constant / n as f64;
                if r_min > 0.0 {
                    prog.add_sparse_inequality(&lin.terms(-1.0), lin.constant - r_min);
                }
            }
            prog.add_sparse_inequality(&epigraph, constant);
        }

        // Squared-distance bounds, only for disks the trust box can reach.
        let reach = radius * std::f64::consts::SQRT_2;
        for &(u, s) in &slots {
            let anchor = self.point(x0, u, s);
            let i = self.var(u, s);
            for (k, o) in self.mission.obstacles.iter().enumerate() {
                let c = self.frame.to_unit(o.center_xy);
                let keep = self.mission.keep_out(k, self.budget) / scale;
                let gap = ((anchor[0] - c[0]).powi(2) + (anchor[1] - c[1]).powi(2)).sqrt() - keep;
                if gap > reach * (1.0 + 1e-9) {
                    continue;
                }
                // keep^2 <= |a - c|^2 + 2 (a - c).(x - a)
                let dx = [anchor[0] - c[0], anchor[1] - c[1]];
                let at = obstacle_lower_bound(anchor, anchor, c);
                let rhs = at - 2.0 * (dx[0] * anchor[0] + dx[1] * anchor[1]) - keep * keep;
                prog.add_sparse_inequality(&[(i, -2.0 * dx[0]), (i + 1, -2.0 * dx[1])], rhs);
            }
        }

        let step = self.budget.step_m() / scale;
        for u in 0..m {
            for s in 1..n {
                let (prev_free, next_free) = (s > 1 && s - 1 < n - 1, s < n - 1);
                let cone = match (prev_free, next_free) {
                    (true, true) => {
                        let (a, c) = (self.var(u, s), self.var(u, s - 1));
                        SocConstraint::difference(&[a, a + 1], &[c, c + 1], step)
                    }
                    (false, true) => {
                        let a = self.var(u, s);
                        SocConstraint::ball(&[a, a + 1], &self.frame.to_unit(self.mission.starts[u]), step)
                    }
                    (true, false) => {
                        let c = self.var(u, s - 1);
                        SocConstraint::ball(&[c, c + 1], &self.frame.to_unit(self.mission.ends[u]), step)
                    }
                    (false, false) => continue,
                };
                prog.add_cone(cone);
            }
        }
        Ok((prog, lins))
    }
}

impl Trajectory<'_> {
    /// Normalized rate of waypoint `(u, s)` linearized at `x`.
    fn linearize(&self, x: &[f64], q: &[Vec<[f64; 2]>], u: usize, s: usize) -> Result<Linearization> {
        let (g, grad) = self.channel.gain_with_gradient(q[u][s])?;
        let (a, p) = (self.alpha[u][s], self.power[u][s]);
        let b = self.budget.b_max_hz;
        let value = rate(a, p, g, self.budget) / b;
        let ef = rate_d_gain(a, p, g, self.budget) / b * self.frame.scale;
        let i = self.var(u, s);
        Ok(Linearization::new(vec![i, i + 1], vec![x[i], x[i + 1]], value, vec![ef * grad[0], ef * grad[1]]))
    }
}

/// Waypoints maximizing the smallest average rate for fixed bandwidth shares
/// and powers. `start` must satisfy every constraint; endpoints stay pinned.
pub fn solve_trajectory(
    channel: &dyn ChannelModel,
    mission: &Mission,
    alpha: &[Vec<f64>],
    power: &[Vec<f64>],
    start: &[Vec<[f64; 2]>],
    budget: &LinkBudget,
    cfg: &AoConfig,
) -> Result<(Vec<Vec<[f64; 2]>>, InnerTrace)> {
    let (m, n) = (mission.uavs(), mission.slots);
    let shaped = |g: usize, rows: &dyn Fn(usize) -> usize| g == m && (0..m).all(|u| rows(u) == n);
    if m == 0
        || n == 0
        || !shaped(start.len(), &|u| start[u].len())
        || !shaped(alpha.len(), &|u| alpha[u].len())
        || !shaped(power.len(), &|u| power[u].len())
    {
        return Err(Error::InvalidInput("trajectory inputs must be M x N".into()));
    }
    let b = &mission.bounds;
    let span = b.span();
    let frame = Frame { origin: [b.x_min, b.y_min], scale: span[0].max(span[1]) };
    let pinned_rates = (0..m)
        .map(|u| {
            let r = |s: usize| -> Result<f64> { Ok(rate(alpha[u][s], power[u][s], channel.gain(start[u][s])?, budget) / budget.b_max_hz) };
            Ok([r(0)?, if n > 1 { r(n - 1)? } else { 0.0 }])
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = Trajectory { channel, mission, budget, alpha, power, frame, pinned_rates };
    let x0 = problem.flatten(start);
    let radius = cfg.trust_radius(budget) / problem.frame.scale;
    let (x, trace) = trust_region_ascent(&problem, x0, radius, cfg.eps_q, cfg.j_max, &cfg.solver)?;
    Ok((problem.waypoints(&x), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Bounds, Obstacle};
    use crate::ratemodel::StatisticalChannel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn obstacle_bound_never_exceeds_squared_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut p = || -> [f64; 2] { [rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)] };
            let (q, a, c) = (p(), p(), p());
            let exact = (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2);
            assert!(obstacle_lower_bound(q, a, c) <= exact + 1e-9 * exact.max(1.0));
            let at = (a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2);
            assert!((obstacle_lower_bound(a, a, c) - at).abs() <= 1e-9 * at.max(1.0));
        }
    }

    fn open_mission(starts: Vec<[f64; 2]>, ends: Vec<[f64; 2]>, slots: usize, obstacles: Vec<Obstacle>) -> Mission {
        Mission { starts, ends, slots, obstacles, bounds: Bounds { x_min: 0.0, x_max: 1000.0, y_min: 0.0, y_max: 1000.0 } }
    }

    fn sc() -> StatisticalChannel {
        StatisticalChannel { bs_xy: [500.0, 500.0], height_gap_m: 75.0, beta0: 1e-4, min_distance_m: 4.0 }
    }

    #[test]
    fn pinned_waypoints_do_not_move() {
        let b = LinkBudget::default();
        let m = open_mission(vec![[100.0, 100.0]], vec![[100.0, 100.0]], 2, vec![]);
        let q = vec![vec![[100.0, 100.0]; 2]];
        let (out, trace) = solve_trajectory(&sc(), &m, &[vec![1.0; 2]], &[vec![10.0; 2]], &q, &b, &AoConfig::default()).unwrap();
        assert_eq!(out, q);
        assert!(trace.converged);
    }

    #[test]
    fn free_space_path_bends_toward_the_base_station() {
        let b = LinkBudget { tau_s: 10.0, ..LinkBudget::default() };
        let n = 12;
        let (s, e) = ([300.0, 200.0], [700.0, 200.0]);
        let m = open_mission(vec![s], vec![e], n, vec![Obstacle { center_xy: [500.0, 650.0], radius_m: 60.0 }]);
        let q0: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                [s[0] + t * (e[0] - s[0]), 200.0]
            })
            .collect();
        let alpha = vec![vec![1.0; n]];
        let power = vec![vec![10.0; n]];
        let ch = sc();
        let (q, trace) = solve_trajectory(&ch, &m, &alpha, &power, std::slice::from_ref(&q0), &b, &AoConfig::default()).unwrap();
        assert!(trace.is_monotone(1e-12));
        assert!(trace.max_tightness_error <= 1e-9);
        assert!(trace.objectives.last().unwrap() > &trace.objectives[0]);
        assert!(q[0][n / 2][1] > 300.0, "{:?}", q[0]);
        let plan = crate::ratemodel::PlanState { q: q.clone(), alpha, power, predicted_rates: vec![vec![0.0; n]] };
        assert!(crate::ratemodel::check_plan(&plan, &m, &b).is_empty());
        for p in &q[0] {
            assert!(((p[0] - 500.0).powi(2) + (p[1] - 650.0).powi(2)).sqrt() >= 65.0);
        }
    }
}
