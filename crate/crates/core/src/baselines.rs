//! Classical iterative solvers for sum-rate maximization under per-BS power
//! budgets: gradient projection with Armijo backtracking, and WMMSE with a
//! per-BS multiplier search.

use std::time::Instant;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{bs_power, project_power, sum_rate, sum_rate_with_gradient, BeamformerTensor};
use crate::scenario::ProblemInstance;

type C64 = Complex<f64>;

pub const GP_DEFAULT_ITERS: usize = 500;
pub const WMMSE_DEFAULT_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-5;

const ARMIJO_INITIAL_STEP: f64 = 1.0;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_COEFF: f64 = 1e-4;
const ARMIJO_MAX_BACKTRACKS: usize = 30;

const RIDGE: f64 = 1e-12;
const MU_POWER_RTOL: f64 = 1e-8;
const MU_KKT_RTOL: f64 = 1e-6;
const MU_MAX_CYCLES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Wmmse,
    Gp,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Wmmse => "wmmse",
            Solver::Gp => "gp",
        }
    }

    pub fn default_iters(self) -> usize {
        match self {
            Solver::Wmmse => WMMSE_DEFAULT_ITERS,
            Solver::Gp => GP_DEFAULT_ITERS,
        }
    }

    pub fn solve(self, inst: &ProblemInstance, max_iters: usize, tol: f64) -> Result<SolverReport> {
        match self {
            Solver::Wmmse => wmmse_solve(inst, max_iters, tol),
            Solver::Gp => gp_solve(inst, max_iters, tol),
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wmmse" => Ok(Solver::Wmmse),
            "gp" => Ok(Solver::Gp),
            other => Err(Error::Argument(format!(
                "unknown solver {other:?} (expected wmmse or gp)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub v_final: BeamformerTensor,
    /// Sum rate of every accepted iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
}

impl SolverReport {
    pub fn final_rate(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }

    /// Largest decrease between consecutive trace entries (0 when monotone).
    pub fn max_trace_decrease(&self) -> f64 {
        self.objective_trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Matched filters at equal power split: `v_{m,k} = h_{m,k} sqrt(P_m / (K ||h_{m,k}||^2))`.
pub fn matched_filter_init(inst: &ProblemInstance) -> BeamformerTensor {
    let mut v = BeamformerTensor::zeros(inst.m, inst.k, inst.n);
    for m in 0..inst.m {
        for k in 0..inst.k {
            let (hr, hi) = inst.channel(m, k);
            let norm_sq: f64 = hr.iter().chain(hi).map(|x| x * x).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let c = (inst.bs_power[m] / (inst.k as f64 * norm_sq)).sqrt();
            let (vr, vi) = v.block_mut(m, k);
            for j in 0..inst.n {
                vr[j] = c * hr[j];
                vi[j] = c * hi[j];
            }
        }
    }
    v
}

fn inner(a: &BeamformerTensor, b: &BeamformerTensor) -> f64 {
    let re: f64 = a.v.re.data().iter().zip(b.v.re.data()).map(|(x, y)| x * y).sum();
    let im: f64 = a.v.im.data().iter().zip(b.v.im.data()).map(|(x, y)| x * y).sum();
    re + im
}

fn axpy(v: &BeamformerTensor, step: f64, g: &BeamformerTensor) -> BeamformerTensor {
    let mut out = v.clone();
    for (o, &d) in out.v.re.data_mut().iter_mut().zip(g.v.re.data()) {
        *o += step * d;
    }
    for (o, &d) in out.v.im.data_mut().iter_mut().zip(g.v.im.data()) {
        *o += step * d;
    }
    out
}

fn check_feasible_start(inst: &ProblemInstance) -> Result<()> {
    if inst.bs_power.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Argument("power budgets must be positive".into()));
    }
    Ok(())
}

pub fn gp_solve(inst: &ProblemInstance, max_iters: usize, tol: f64) -> Result<SolverReport> {
    gp_solve_from(inst, matched_filter_init(inst), max_iters, tol)
}

/// Projected gradient ascent `V <- P(V + t grad)` with Armijo backtracking
/// along the projection arc. Only iterates that do not lower the objective
/// are accepted, so the trace is non-decreasing.
pub fn gp_solve_from(
    inst: &ProblemInstance,
    init: BeamformerTensor,
    max_iters: usize,
    tol: f64,
) -> Result<SolverReport> {
    check_feasible_start(inst)?;
    let start = Instant::now();
    let mut v = project_power(&init, &inst.bs_power);
    let mut rate = sum_rate(inst, &v)?;
    let mut trace = vec![rate];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let (_, grad) = sum_rate_with_gradient(inst, &v)?;
        let mut step = ARMIJO_INITIAL_STEP;
        let mut accepted = None;
        for _ in 0..=ARMIJO_MAX_BACKTRACKS {
            let cand = project_power(&axpy(&v, step, &grad), &inst.bs_power);
            let cand_rate = sum_rate(inst, &cand)?;
            let moved = inner(&grad, &axpy(&cand, -1.0, &v));
            if cand_rate >= rate && cand_rate - rate >= ARMIJO_COEFF * moved {
                accepted = Some((cand, cand_rate));
                break;
            }
            step *= ARMIJO_SHRINK;
        }
        let Some((cand, cand_rate)) = accepted else {
            converged = true;
            break;
        };
        let improvement = cand_rate - rate;
        v = cand;
        rate = cand_rate;
        trace.push(rate);
        if improvement < tol {
            converged = true;
            break;
        }
    }

    Ok(SolverReport {
        v_final: v,
        objective_trace: trace,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
    })
}

/// Channels of UE `k` stacked over BSs: entry `m * N + j` is `h_{m,k}[j]`.
fn stacked_channel(inst: &ProblemInstance, k: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(inst.m * inst.n);
    for m in 0..inst.m {
        let (re, im) = inst.channel(m, k);
        out.extend(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)));
    }
    out
}

fn stacked_beam(inst: &ProblemInstance, v: &BeamformerTensor, k: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(inst.m * inst.n);
    for m in 0..inst.m {
        let (re, im) = v.block(m, k);
        out.extend(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)));
    }
    out
}

/// `a^H b`
fn herm_dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Outcome of the per-BS multiplier search.
#[derive(Clone, Debug)]
pub struct MultiplierSearch {
    pub mu: Vec<f64>,
    pub beamformers: BeamformerTensor,
    pub cycles: usize,
    pub converged: bool,
}

/// Linear system `(A + sum_m mu_m D_m) V = B` of the WMMSE beamformer step.
struct BeamSystem<'a> {
    inst: &'a ProblemInstance,
    a: DMatrix<C64>,
    /// Column `k` is the right-hand side `w_k u_k h_k`.
    rhs: DMatrix<C64>,
}

impl BeamSystem<'_> {
    fn solve(&self, mu: &[f64]) -> Result<DMatrix<C64>> {
        let n = self.inst.n;
        let mut b = self.a.clone();
        for (m, &mu_m) in mu.iter().enumerate() {
            for j in 0..n {
                b[(m * n + j, m * n + j)] += C64::new(mu_m, 0.0);
            }
        }
        let attempt = |mat: DMatrix<C64>| {
            mat.lu()
                .solve(&self.rhs)
                .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        };
        if let Some(x) = attempt(b.clone()) {
            return Ok(x);
        }
        for d in 0..b.nrows() {
            b[(d, d)] += C64::new(RIDGE, 0.0);
        }
        attempt(b).ok_or_else(|| Error::Solver("singular beamformer system after ridge".into()))
    }

    fn block_powers(&self, x: &DMatrix<C64>) -> Vec<f64> {
        let n = self.inst.n;
        (0..self.inst.m)
            .map(|m| {
                (0..x.ncols())
                    .map(|k| (0..n).map(|j| x[(m * n + j, k)].norm_sqr()).sum::<f64>())
                    .sum()
            })
            .collect()
    }

    fn powers_at(&self, mu: &[f64]) -> Result<Vec<f64>> {
        Ok(self.block_powers(&self.solve(mu)?))
    }

    fn to_beamformers(&self, x: &DMatrix<C64>) -> BeamformerTensor {
        let (m_count, k_count, n) = (self.inst.m, self.inst.k, self.inst.n);
        let mut v = BeamformerTensor::zeros(m_count, k_count, n);
        for m in 0..m_count {
            for k in 0..k_count {
                let (re, im) = v.block_mut(m, k);
                for j in 0..n {
                    let z = x[(m * n + j, k)];
                    re[j] = z.re;
                    im[j] = z.im;
                }
            }
        }
        v
    }

    /// Finds `mu_m > 0` with `power_m(mu) = P_m`, other multipliers fixed.
    ///
    /// Power is non-increasing in `mu_m`. The bracket is grown by doubling,
    /// then shrunk by bisection interleaved with interpolation on
    /// `1/sqrt(power)`, which is close to linear in `mu_m`.
    fn search_coordinate(&self, mu: &mut [f64], m: usize, p_at_zero: f64) -> Result<()> {
        let budget = self.inst.bs_power[m];
        let target = 1.0 / budget.sqrt();
        let power = |mu: &mut [f64], x: f64| -> Result<f64> {
            mu[m] = x;
            Ok(self.powers_at(mu)?[m])
        };

        let (mut lo, mut p_lo) = (0.0, p_at_zero);
        let mut hi = if mu[m] > 0.0 {
            mu[m]
        } else {
            let rhs_norm: f64 = (0..self.inst.k)
                .map(|k| {
                    (0..self.inst.n)
                        .map(|j| self.rhs[(m * self.inst.n + j, k)].norm_sqr())
                        .sum::<f64>()
                })
                .sum();
            (rhs_norm / budget).sqrt().max(1e-12)
        };
        let mut p_hi = power(mu, hi)?;
        let mut doublings = 0;
        while p_hi > budget {
            (lo, p_lo) = (hi, p_hi);
            hi *= 2.0;
            p_hi = power(mu, hi)?;
            doublings += 1;
            if doublings > 2000 {
                return Err(Error::Solver(format!("no multiplier bracket for BS {m}")));
            }
        }

        let mut interpolate = true;
        let mut width = hi - lo;
        for _ in 0..200 {
            if (p_hi - budget).abs() <= MU_POWER_RTOL * budget || hi - lo <= 1e-15 * hi {
                break;
            }
            let f_lo = 1.0 / p_lo.sqrt() - target;
            let f_hi = 1.0 / p_hi.sqrt() - target;
            let mid = 0.5 * (lo + hi);
            let x = if interpolate && f_hi > f_lo {
                let c = lo + (hi - lo) * (-f_lo) / (f_hi - f_lo);
                if c > lo && c < hi {
                    c
                } else {
                    mid
                }
            } else {
                mid
            };
            let px = power(mu, x)?;
            if (px - budget).abs() <= MU_POWER_RTOL * budget {
                hi = x;
                break;
            }
            if px > budget {
                (lo, p_lo) = (x, px);
            } else {
                (hi, p_hi) = (x, px);
            }
            interpolate = hi - lo < 0.5 * width;
            width = hi - lo;
        }
        mu[m] = hi;
        Ok(())
    }

    fn kkt_satisfied(&self, mu: &[f64], powers: &[f64]) -> bool {
        powers
            .iter()
            .zip(&self.inst.bs_power)
            .zip(mu)
            .all(|((&p, &budget), &mu_m)| {
                p <= budget * (1.0 + MU_KKT_RTOL) && (mu_m == 0.0 || p >= budget * (1.0 - MU_KKT_RTOL))
            })
    }
}

fn beam_system<'a>(inst: &'a ProblemInstance, u: &[C64], w: &[f64]) -> BeamSystem<'a> {
    let dim = inst.m * inst.n;
    let channels: Vec<Vec<C64>> = (0..inst.k).map(|k| stacked_channel(inst, k)).collect();
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    for (l, h) in channels.iter().enumerate() {
        let c = w[l] * u[l].norm_sqr();
        if c == 0.0 {
            continue;
        }
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] += h[i] * h[j].conj() * c;
            }
        }
    }
    let mut rhs = DMatrix::<C64>::zeros(dim, inst.k);
    for (k, h) in channels.iter().enumerate() {
        for i in 0..dim {
            rhs[(i, k)] = h[i] * u[k] * w[k];
        }
    }
    BeamSystem { inst, a, rhs }
}

/// Per-BS multipliers for the WMMSE beamformer step with receivers `u` and
/// weights `w` held fixed.
///
/// Cyclic coordinate search: each `mu_m` is reset to zero when BS `m` is
/// within budget there, otherwise searched until its power meets the budget.
/// Cycles stop once every budget holds with complementary slackness.
pub fn multiplier_search(
    inst: &ProblemInstance,
    u: &[C64],
    w: &[f64],
    warm_start: Option<&[f64]>,
) -> Result<MultiplierSearch> {
    let system = beam_system(inst, u, w);

    let mut mu = warm_start.map_or_else(|| vec![0.0; inst.m], <[f64]>::to_vec);
    let mut converged = false;
    let mut cycles = 0;
    while cycles < MU_MAX_CYCLES {
        cycles += 1;
        for m in 0..inst.m {
            let previous = mu[m];
            mu[m] = 0.0;
            let p0 = system.powers_at(&mu)?[m];
            if p0 <= inst.bs_power[m] {
                continue;
            }
            mu[m] = previous;
            system.search_coordinate(&mut mu, m, p0)?;
        }
        if system.kkt_satisfied(&mu, &system.powers_at(&mu)?) {
            converged = true;
            break;
        }
    }
    let beamformers = system.to_beamformers(&system.solve(&mu)?);
    Ok(MultiplierSearch {
        mu,
        beamformers,
        cycles,
        converged,
    })
}

pub fn wmmse_solve(inst: &ProblemInstance, max_iters: usize, tol: f64) -> Result<SolverReport> {
    wmmse_solve_from(inst, matched_filter_init(inst), max_iters, tol)
}

/// WMMSE block-coordinate ascent for single-antenna receivers.
///
/// Each iteration updates receivers `u_k`, MSE weights `w_k` (clipped below
/// at 1) and beamformers `v_k`, in that order. A beamformer update that
/// would lower the sum rate is rejected and ends the run.
pub fn wmmse_solve_from(
    inst: &ProblemInstance,
    init: BeamformerTensor,
    max_iters: usize,
    tol: f64,
) -> Result<SolverReport> {
    check_feasible_start(inst)?;
    let start = Instant::now();
    let channels: Vec<Vec<C64>> = (0..inst.k).map(|k| stacked_channel(inst, k)).collect();
    let mut v = project_power(&init, &inst.bs_power);
    let mut rate = sum_rate(inst, &v)?;
    let mut trace = vec![rate];
    let mut mu: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut search_converged = true;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let beams: Vec<Vec<C64>> = (0..inst.k).map(|k| stacked_beam(inst, &v, k)).collect();
        let mut u = Vec::with_capacity(inst.k);
        let mut w = Vec::with_capacity(inst.k);
        for (k, h) in channels.iter().enumerate() {
            let desired = herm_dot(h, &beams[k]);
            let denom: f64 = beams.iter().map(|b| herm_dot(h, b).norm_sqr()).sum::<f64>() + inst.noise[k];
            let u_k = desired / denom;
            let mse = 1.0 - (u_k.conj() * desired).re;
            let w_k = if mse > 0.0 {
                (1.0 / mse).max(1.0)
            } else {
                1.0 / f64::EPSILON
            };
            u.push(u_k);
            w.push(w_k);
        }
        let search = multiplier_search(inst, &u, &w, mu.as_deref())?;
        search_converged &= search.converged;
        let cand = project_power(&search.beamformers, &inst.bs_power);
        let cand_rate = sum_rate(inst, &cand)?;
        if cand_rate < rate {
            converged = true;
            break;
        }
        let improvement = cand_rate - rate;
        v = cand;
        rate = cand_rate;
        mu = Some(search.mu);
        trace.push(rate);
        if improvement < tol {
            converged = true;
            break;
        }
    }

    Ok(SolverReport {
        v_final: v,
        objective_trace: trace,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        converged: converged && search_converged,
    })
}

/// Closed-form single-user optimum with one BS: `log2(1 + P ||h||^2 / sigma^2)`.
pub fn single_user_optimum(inst: &ProblemInstance) -> Result<f64> {
    if inst.k != 1 {
        return Err(Error::Argument("single-user optimum needs K = 1".into()));
    }
    // Every BS co-phases onto its own channel at full power.
    let amplitude: f64 = (0..inst.m)
        .map(|m| {
            let (re, im) = inst.channel(m, 0);
            let norm_sq: f64 = re.iter().chain(im).map(|x| x * x).sum();
            (inst.bs_power[m] * norm_sq).sqrt()
        })
        .sum();
    Ok((1.0 + amplitude * amplitude / inst.noise[0]).log2())
}

/// Per-BS power of a report's final beamformers.
pub fn report_powers(report: &SolverReport) -> Vec<f64> {
    bs_power(&report.v_final)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ComplexSplit, Tensor};
    use crate::scenario::{InstanceSeeds, ScenarioConfig};

    fn single_user() -> ProblemInstance {
        let c = ComplexSplit::new(
            Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap(),
            Tensor::zeros(&[1, 1, 2]),
        )
        .unwrap();
        ProblemInstance::new(c, vec![1.0], vec![1.0]).unwrap()
    }

    fn random(m: usize, k: usize, seed: u64) -> ProblemInstance {
        InstanceSeeds::derive(seed, 1)[0]
            .realize(&ScenarioConfig::new(m, k, 2))
            .unwrap()
    }

    fn random_receivers(k: usize, seed: u64) -> (Vec<C64>, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = (0..k)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let w = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
        (u, w)
    }

    #[test]
    fn bs_power_is_non_increasing_in_its_multiplier() {
        for seed in 0..10 {
            let inst = random(3, 2, seed);
            let (u, w) = random_receivers(2, seed);
            let system = beam_system(&inst, &u, &w);
            for m in 0..3 {
                let mut mu = vec![0.05, 0.2, 0.5];
                let mut last = f64::INFINITY;
                for step in 0..40 {
                    mu[m] = 1e-4 * 1.5f64.powi(step);
                    let p = system.powers_at(&mu).unwrap()[m];
                    assert!(
                        p <= last * (1.0 + 1e-12),
                        "seed {seed} bs {m} step {step}: {p} > {last}"
                    );
                    last = p;
                }
            }
        }
    }

    #[test]
    fn single_constraint_search_meets_budget() {
        for seed in 0..10 {
            let inst = random(1, 3, seed);
            let (u, w) = random_receivers(3, seed + 100);
            let r = multiplier_search(&inst, &u, &w, None).unwrap();
            assert!(r.converged);
            let p = bs_power(&r.beamformers)[0];
            if r.mu[0] > 0.0 {
                assert!((p - inst.bs_power[0]).abs() <= 1e-6 * inst.bs_power[0]);
            } else {
                assert!(p <= inst.bs_power[0] + 1e-6);
            }
        }
    }

    #[test]
    fn gp_single_user_reaches_one_bit() {
        let r = gp_solve(&single_user(), GP_DEFAULT_ITERS, DEFAULT_TOL).unwrap();
        assert!((r.final_rate() - 1.0).abs() < 1e-4);
        assert!(r.v_final.is_feasible(&[1.0], 1e-6));
    }

    #[test]
    fn gp_stays_at_optimum() {
        let inst = single_user();
        let opt = matched_filter_init(&inst);
        let r = gp_solve_from(&inst, opt, 50, 0.0).unwrap();
        assert_eq!(r.max_trace_decrease(), 0.0);
        assert!((r.final_rate() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gp_trace_is_monotone() {
        let inst = random(3, 2, 5);
        let r = gp_solve(&inst, GP_DEFAULT_ITERS, DEFAULT_TOL).unwrap();
        assert_eq!(r.max_trace_decrease(), 0.0);
        assert!(r.objective_trace.len() > 1);
        assert!(r.v_final.is_feasible(&inst.bs_power, 1e-6));
    }

    #[test]
    fn wmmse_single_user_reaches_one_bit() {
        let r = wmmse_solve(&single_user(), WMMSE_DEFAULT_ITERS, DEFAULT_TOL).unwrap();
        assert!((r.final_rate() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn wmmse_zero_channels() {
        let c = ComplexSplit::zeros(&[2, 2, 2]);
        let inst = ProblemInstance::new(c, vec![1.0; 2], vec![1.0; 2]).unwrap();
        let r = wmmse_solve(&inst, WMMSE_DEFAULT_ITERS, DEFAULT_TOL).unwrap();
        assert_eq!(r.final_rate(), 0.0);
        assert!(r
            .v_final
            .v
            .re
            .data()
            .iter()
            .chain(r.v_final.v.im.data())
            .all(|&x| x == 0.0));
    }

    #[test]
    fn wmmse_monotone_and_feasible() {
        for seed in 0..10 {
            let inst = random(3, 2, seed);
            let r = wmmse_solve(&inst, WMMSE_DEFAULT_ITERS, DEFAULT_TOL).unwrap();
            assert!(r.max_trace_decrease() <= 1e-9);
            assert!(r.v_final.is_feasible(&inst.bs_power, 1e-6));
        }
    }

    #[test]
    fn multi_bs_single_user_optimum() {
        let inst = random(3, 1, 8);
        let opt = single_user_optimum(&inst).unwrap();
        let w = wmmse_solve(&inst, WMMSE_DEFAULT_ITERS, 1e-9).unwrap();
        assert!((w.final_rate() - opt).abs() < 1e-3, "{} vs {opt}", w.final_rate());
    }

    #[test]
    fn slack_constraints_give_zero_multipliers() {
        let inst = single_user();
        // Tiny weights make the unconstrained beamformer small.
        let u = [C64::new(1e-3, 0.0)];
        let w = [1.0];
        let mut big = inst.clone();
        big.bs_power = vec![1e6];
        let r = multiplier_search(&big, &u, &w, None).unwrap();
        // A = w|u|^2 h h^H is singular off the channel direction, but the
        // right-hand side lies in its range.
        assert_eq!(r.mu, vec![0.0]);
        assert!(r.converged);
    }

    #[test]
    fn solver_names_parse() {
        assert_eq!("wmmse".parse::<Solver>().unwrap(), Solver::Wmmse);
        assert_eq!("gp".parse::<Solver>().unwrap(), Solver::Gp);
        assert!("newton".parse::<Solver>().is_err());
    }

    #[test]
    fn deterministic_reports() {
        let inst = random(3, 2, 2);
        let mut a = wmmse_solve(&inst, 100, DEFAULT_TOL).unwrap();
        let mut b = wmmse_solve(&inst, 100, DEFAULT_TOL).unwrap();
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        assert_eq!(a, b);
    }
}
