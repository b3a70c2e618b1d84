//! Fixed-step RK4 simulation of `ẋ = A(t) x` and of the matrix flow
//! `Ẋ = A(t) X + X A(t)ᵀ` under piecewise-constant switching.
//!
//! Mode changes only happen on step boundaries, so inside every interval
//! the integrator sees a smooth linear ODE and keeps its fourth order.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::SublevelSet;
use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::system::SwitchedSystem;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_DWELL: (f64, f64) = (0.05, 0.5);

/// A run is declared divergent once `‖x‖` exceeds this multiple of `‖x0‖`.
pub const DIVERGENCE_GROWTH: f64 = 1e6;

/// How the active mode is chosen. Mode indices are 0-based here.
#[derive(Debug, Clone)]
pub enum SwitchingPolicy {
    Fixed(usize),
    /// Cycle through `sequence`, spending `dwell` time units in each mode.
    Periodic { dwell: f64, sequence: Vec<usize> },
    /// i.i.d. uniform modes held for i.i.d. uniform dwell times.
    Random { dwell_min: f64, dwell_max: f64, seed: u64 },
    /// At every step pick the mode with the largest `V̇`.
    Adversarial(Box<Adversary>),
}

/// Precomputed derivative forms of a certificate.
#[derive(Debug, Clone)]
pub struct Adversary {
    cert: Certificate,
    forms: Vec<DMatrix<f64>>,
}

impl Adversary {
    fn pick(&self, x: &[f64]) -> usize {
        let y = self.cert.basis().eval(x);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, f) in self.forms.iter().enumerate() {
            let v = y.dot(&(f * &y));
            if v > best.1 {
                best = (i, v);
            }
        }
        best.0
    }
}

/// Greedy falsifier: always switch to the mode along which `V` decreases
/// slowest (or grows).
pub fn adversarial_policy(cert: &Certificate, system: &SwitchedSystem) -> Result<SwitchingPolicy> {
    let forms = cert.derivative_forms(system)?;
    Ok(SwitchingPolicy::Adversarial(Box::new(Adversary {
        cert: cert.clone(),
        forms,
    })))
}

impl SwitchingPolicy {
    pub fn random(seed: u64) -> Self {
        SwitchingPolicy::Random {
            dwell_min: DEFAULT_DWELL.0,
            dwell_max: DEFAULT_DWELL.1,
            seed,
        }
    }

    fn check(&self, num_modes: usize) -> Result<()> {
        let in_range = |i: &usize| *i < num_modes;
        let ok = match self {
            SwitchingPolicy::Fixed(i) => in_range(i),
            SwitchingPolicy::Periodic { dwell, sequence } => {
                *dwell > 0.0 && dwell.is_finite() && !sequence.is_empty() && sequence.iter().all(in_range)
            }
            SwitchingPolicy::Random { dwell_min, dwell_max, .. } => {
                *dwell_min > 0.0 && dwell_max >= dwell_min && dwell_max.is_finite()
            }
            SwitchingPolicy::Adversarial(a) => a.forms.len() == num_modes,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid switching policy {} for {num_modes} modes", self.describe())))
        }
    }

    /// One-line description, recorded in trajectory headers.
    pub fn describe(&self) -> String {
        match self {
            SwitchingPolicy::Fixed(i) => format!("fixed mode={}", i + 1),
            SwitchingPolicy::Periodic { dwell, sequence } => {
                let seq: Vec<String> = sequence.iter().map(|i| (i + 1).to_string()).collect();
                format!("periodic dwell={dwell} sequence={}", seq.join(","))
            }
            SwitchingPolicy::Random { dwell_min, dwell_max, seed } => {
                format!("random dwell=[{dwell_min},{dwell_max}] seed={seed}")
            }
            SwitchingPolicy::Adversarial(a) => format!("adversarial c={} objective={}", a.cert.c, a.cert.objective),
        }
    }

    fn schedule(&self, step: f64, num_modes: usize) -> Schedule<'_> {
        Schedule {
            policy: self,
            step,
            num_modes,
            rng: match self {
                SwitchingPolicy::Random { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
                _ => None,
            },
            current: 0,
            left: 0,
            cursor: 0,
        }
    }
}

/// Turns a policy into one mode per step.
struct Schedule<'a> {
    policy: &'a SwitchingPolicy,
    step: f64,
    num_modes: usize,
    rng: Option<ChaCha8Rng>,
    current: usize,
    left: usize,
    cursor: usize,
}

impl Schedule<'_> {
    fn steps_for(&self, dwell: f64) -> usize {
        ((dwell / self.step).round() as usize).max(1)
    }

    fn next(&mut self, x: &[f64]) -> usize {
        match self.policy {
            SwitchingPolicy::Fixed(i) => *i,
            SwitchingPolicy::Adversarial(a) => a.pick(x),
            SwitchingPolicy::Periodic { dwell, sequence } => {
                if self.left == 0 {
                    self.current = sequence[self.cursor % sequence.len()];
                    self.cursor += 1;
                    self.left = self.steps_for(*dwell);
                }
                self.left -= 1;
                self.current
            }
            SwitchingPolicy::Random { dwell_min, dwell_max, .. } => {
                if self.left == 0 {
                    let rng = self.rng.as_mut().expect("seeded");
                    let dwell = if dwell_max > dwell_min { rng.random_range(*dwell_min..*dwell_max) } else { *dwell_min };
                    self.current = rng.random_range(0..self.num_modes);
                    self.left = self.steps_for(dwell);
                }
                self.left -= 1;
                self.current
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub time: f64,
    pub reason: String,
    pub last_finite_state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `modes[k]` is active on `[times[k], times[k+1])`.
    pub modes: Vec<usize>,
    /// `X(t_k)` for matrix-flow runs.
    pub meta_states: Option<Vec<DMatrix<f64>>>,
    pub policy: String,
    pub step: f64,
    pub divergence: Option<Divergence>,
}

fn check_grid(horizon: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite() && horizon.is_finite() && horizon >= step) {
        return Err(Error::InvalidArgument(format!("need 0 < step <= horizon, got step {step}, horizon {horizon}")));
    }
    Ok((horizon / step).round() as usize)
}

fn rk4(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates `ẋ = A_{σ(t)} x` from `x0` over `[0, horizon]`.
pub fn integrate(system: &SwitchedSystem, policy: &SwitchingPolicy, x0: &[f64], horizon: f64, step: f64) -> Result<Trajectory> {
    if x0.len() != system.n() {
        return Err(Error::Dimension(format!("x0 has length {}, system n = {}", x0.len(), system.n())));
    }
    run(system, policy, horizon, step, DVector::from_column_slice(x0), None)
}

/// Integrates `Ẋ = A_{σ(t)} X + X A_{σ(t)}ᵀ` from `X0`. With the same
/// policy (and seed) as [`integrate`] the switching signal is identical,
/// so `X0 = x0 x0ᵀ` must reproduce `x(t) x(t)ᵀ`.
pub fn integrate_meta(system: &SwitchedSystem, policy: &SwitchingPolicy, x0: &DMatrix<f64>, horizon: f64, step: f64) -> Result<Trajectory> {
    let n = system.n();
    if x0.shape() != (n, n) {
        return Err(Error::Dimension(format!("X0 must be {n}x{n}")));
    }
    if matches!(policy, SwitchingPolicy::Adversarial(_)) {
        return Err(Error::Unsupported("adversarial switching needs a vector state".into()));
    }
    let flat = DVector::from_column_slice(x0.as_slice());
    run(system, policy, horizon, step, flat, Some(n))
}

fn run(
    system: &SwitchedSystem,
    policy: &SwitchingPolicy,
    horizon: f64,
    step: f64,
    start: DVector<f64>,
    meta: Option<usize>,
) -> Result<Trajectory> {
    policy.check(system.num_modes())?;
    let steps = check_grid(horizon, step)?;
    let mut schedule = policy.schedule(step, system.num_modes());
    let vector_field = |mode: usize, v: &DVector<f64>| -> DVector<f64> {
        let a = system.mode(mode);
        match meta {
            None => a * v,
            Some(n) => {
                let x = DMatrix::from_column_slice(n, n, v.as_slice());
                let d = a * &x + &x * a.transpose();
                DVector::from_column_slice(d.as_slice())
            }
        }
    };
    let limit = DIVERGENCE_GROWTH * start.norm().max(f64::MIN_POSITIVE);

    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut modes = Vec::with_capacity(steps);
    times.push(0.0);
    values.push(start.clone());
    let mut x = start;
    let mut divergence = None;
    for k in 0..steps {
        let mode = schedule.next(x.as_slice());
        let next = rk4(|v| vector_field(mode, v), &x, step);
        let t = (k + 1) as f64 * step;
        if next.iter().any(|v| !v.is_finite()) || next.norm() > limit {
            divergence = Some(Divergence {
                time: t,
                reason: if next.iter().all(|v| v.is_finite()) {
                    format!("state norm exceeded {DIVERGENCE_GROWTH:e} times the initial norm")
                } else {
                    "state became non-finite".into()
                },
                last_finite_state: x.iter().copied().collect(),
            });
            if next.iter().all(|v| v.is_finite()) {
                modes.push(mode);
                times.push(t);
                values.push(next);
            }
            break;
        }
        modes.push(mode);
        times.push(t);
        x = next;
        values.push(x.clone());
    }
    let (states, meta_states) = match meta {
        None => (values.iter().map(|v| v.iter().copied().collect()).collect(), None),
        Some(n) => (
            Vec::new(),
            Some(values.iter().map(|v| DMatrix::from_column_slice(n, n, v.as_slice())).collect()),
        ),
    };
    Ok(Trajectory {
        times,
        states,
        modes,
        meta_states,
        policy: policy.describe(),
        step,
        divergence,
    })
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// `t,x1..xn,mode` rows (modes 1-based) with the policy as a header
    /// comment. Matrix-flow runs write `X` row-major as `X11,X12,…`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# policy: {}", self.policy);
        let _ = writeln!(out, "# step: {}", self.step);
        if let Some(d) = &self.divergence {
            let _ = writeln!(out, "# diverged at t = {}: {}", d.time, d.reason);
        }
        let mode_at = |k: usize| self.modes.get(k).or(self.modes.last()).map(|m| m + 1).unwrap_or(0);
        match &self.meta_states {
            None => {
                let n = self.states.first().map_or(0, Vec::len);
                let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
                let _ = writeln!(out, "t,{},mode", cols.join(","));
                for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
                    let vals: Vec<String> = x.iter().map(f64::to_string).collect();
                    let _ = writeln!(out, "{t},{},{}", vals.join(","), mode_at(k));
                }
            }
            Some(xs) => {
                let n = xs.first().map_or(0, |x| x.nrows());
                let cols: Vec<String> = (1..=n).flat_map(|i| (1..=n).map(move |j| format!("X{i}{j}"))).collect();
                let _ = writeln!(out, "t,{},mode", cols.join(","));
                for (k, (t, x)) in self.times.iter().zip(xs).enumerate() {
                    let vals: Vec<String> = (0..n).flat_map(|i| (0..n).map(move |j| x[(i, j)].to_string())).collect();
                    let _ = writeln!(out, "{t},{},{}", vals.join(","), mode_at(k));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub monotone: bool,
    /// `V(x(t_0))`.
    pub level: f64,
    pub tolerance: f64,
    /// Largest `V(x(t_{k+1})) − V(x(t_k))`.
    pub max_increase: f64,
    /// Steps `k` whose increase exceeded the tolerance.
    pub flagged: Vec<usize>,
}

/// Flags every step along which `V` grows by more than `1e-9 · V(x0)`.
pub fn check_monotone(cert: &Certificate, traj: &Trajectory) -> Result<MonotoneReport> {
    let values = traj.states.iter().map(|x| cert.eval_v(x)).collect::<Result<Vec<f64>>>()?;
    let level = values.first().copied().unwrap_or(0.0);
    let tolerance = 1e-9 * level;
    let mut max_increase = f64::NEG_INFINITY;
    let mut flagged = Vec::new();
    for (k, w) in values.windows(2).enumerate() {
        let inc = w[1] - w[0];
        max_increase = max_increase.max(inc);
        if inc > tolerance {
            flagged.push(k);
        }
    }
    Ok(MonotoneReport {
        monotone: flagged.is_empty(),
        level,
        tolerance,
        max_increase: if values.len() < 2 { 0.0 } else { max_increase },
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub contained: bool,
    /// Largest `V(x(t)) / level` over the trajectory and the set's members.
    pub worst_ratio: f64,
}

/// Whether every state stays in `set`, up to `V ≤ level · (1 + rel_tol)`.
pub fn check_containment(set: &SublevelSet, traj: &Trajectory, rel_tol: f64) -> Result<ContainmentReport> {
    let mut worst = 0.0f64;
    for x in &traj.states {
        worst = worst.max(set.level_ratio(x)?);
    }
    Ok(ContainmentReport {
        contained: worst <= 1.0 + rel_tol,
        worst_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> SwitchedSystem {
        SwitchedSystem::new(vec![-DMatrix::<f64>::identity(2, 2)]).unwrap()
    }

    #[test]
    fn scalar_decay() {
        let tr = integrate(&decay(), &SwitchingPolicy::Fixed(0), &[1.0, 0.0], 1.0, 1e-3).unwrap();
        let x = tr.final_state().unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-8 && x[1] == 0.0);
        assert_eq!(tr.times.len(), 1001);
        assert_eq!(tr.modes.len(), 1000);
    }

    #[test]
    fn rotation_decay_norm() {
        let sys = SwitchedSystem::two_mode_example();
        let tr = integrate(&sys, &SwitchingPolicy::Fixed(0), &[1.0, 0.0], 10.0, 1e-3).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((norm - (-0.5 * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn random_schedule_is_reproducible_and_dwells() {
        let sys = SwitchedSystem::two_mode_example();
        let p = SwitchingPolicy::random(7);
        let a = integrate(&sys, &p, &[1.0, 0.0], 5.0, 1e-2).unwrap();
        let b = integrate(&sys, &p, &[1.0, 0.0], 5.0, 1e-2).unwrap();
        assert_eq!(a.modes, b.modes);
        assert_eq!(a.states, b.states);
        assert!(a.modes.contains(&0) && a.modes.contains(&1));
        // every run of equal modes is cut from dwells of at least 5 steps
        let mut run = 1;
        let mut runs = Vec::new();
        for w in a.modes.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                runs.push(run);
                run = 1;
            }
        }
        assert!(runs.iter().all(|&r| r >= 5));
    }

    #[test]
    fn periodic_schedule() {
        let sys = SwitchedSystem::two_mode_example();
        let p = SwitchingPolicy::Periodic {
            dwell: 0.02,
            sequence: vec![0, 1],
        };
        let tr = integrate(&sys, &p, &[1.0, 0.0], 0.08, 0.01).unwrap();
        assert_eq!(tr.modes, vec![0, 0, 1, 1, 0, 0, 1, 1]);
    }

    #[test]
    fn unstable_mode_diverges() {
        let sys = SwitchedSystem::new(vec![DMatrix::<f64>::identity(2, 2)]).unwrap();
        let tr = integrate(&sys, &SwitchingPolicy::random(1), &[1.0, 0.0], 20.0, 1e-3).unwrap();
        let d = tr.divergence.as_ref().expect("diverges");
        assert!(d.time < 20.0 && d.last_finite_state.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn matrix_flow_basics() {
        let sys = SwitchedSystem::two_mode_example();
        let zero = integrate_meta(&sys, &SwitchingPolicy::random(3), &DMatrix::zeros(2, 2), 2.0, 1e-2).unwrap();
        assert!(zero.meta_states.unwrap().iter().all(|x| x.amax() == 0.0));
        let p0 = DVector::from_vec(vec![1.0, 2.0]);
        let q0 = DVector::from_vec(vec![-0.5, 0.3]);
        let x0 = &p0 * q0.transpose() + &q0 * p0.transpose();
        let tr = integrate_meta(&sys, &SwitchingPolicy::random(3), &x0, 2.0, 1e-2).unwrap();
        for x in tr.meta_states.unwrap() {
            assert!((&x - x.transpose()).amax() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let sys = decay();
        assert!(integrate(&sys, &SwitchingPolicy::Fixed(1), &[1.0, 0.0], 1.0, 0.1).is_err());
        assert!(integrate(&sys, &SwitchingPolicy::Fixed(0), &[1.0, 0.0], 0.01, 0.1).is_err());
        assert!(integrate(&sys, &SwitchingPolicy::Fixed(0), &[1.0], 1.0, 0.1).is_err());
    }

    #[test]
    fn csv_layout() {
        let tr = integrate(&decay(), &SwitchingPolicy::Fixed(0), &[1.0, 2.0], 0.2, 0.1).unwrap();
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# policy: fixed mode=1");
        assert_eq!(lines[2], "t,x1,x2,mode");
        assert_eq!(lines.len(), 6);
        assert!(lines[3].starts_with("0,1,2,1"));
    }
}
