//! Browser demo. The plain functions below do the work and are tested
//! natively; the `wasm_*` exports wrap them and exchange JSON strings with
//! the page in `www/`.

use std::cell::RefCell;
use std::collections::HashMap;

use metalyap::analysis::{boundary_trace, intersect_levels, SublevelSet};
use metalyap::simulate::{adversarial_policy, check_monotone, integrate, SwitchingPolicy};
use metalyap::{certify, Certificate, CertifyOptions, Objective, Outcome, SwitchedSystem};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Largest level the page offers.
pub const MAX_LEVEL: usize = 13;
/// Points kept per plotted trajectory.
const PLOT_POINTS: usize = 1500;

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub label: String,
    pub area: f64,
    pub area_error: f64,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelView {
    pub c: usize,
    pub order: usize,
    pub objective: Objective,
    pub status: String,
    pub iterations: usize,
    pub p11: Option<f64>,
    pub floor_min_eig: Option<f64>,
    pub lmi_max_eigs: Vec<f64>,
    pub curve: Option<Curve>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub policy: String,
    pub points: Vec<[f64; 2]>,
    pub switches: usize,
    pub diverged: bool,
    /// Present when a certificate level was requested.
    pub monotone: Option<bool>,
    pub worst_level_ratio: Option<f64>,
    pub curve: Option<Curve>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NestedView {
    /// Decreasing `c`.
    pub sets: Vec<Curve>,
    pub intersection: Curve,
    /// Areas non-increasing in `c` (within their error bounds).
    pub nested: bool,
    /// The largest `V/level` seen along one random run, per set.
    pub run_ratios: Vec<f64>,
    pub run: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunRequest {
    /// `random` or `adversarial`.
    pub policy: String,
    #[serde(default)]
    pub seed: u64,
    /// Certificate level for the overlay; `0` for none.
    #[serde(default)]
    pub c: usize,
    pub x0: [f64; 2],
    pub horizon: f64,
}

thread_local! {
    static CACHE: RefCell<HashMap<(String, usize, Objective), Outcome>> = RefCell::new(HashMap::new());
}

fn parse_system(json: &str) -> Result<SwitchedSystem, String> {
    let sys = SwitchedSystem::from_json(json).map_err(|e| e.to_string())?;
    if sys.n() != 2 {
        return Err(format!("the demo draws planar systems only (n = {})", sys.n()));
    }
    Ok(sys)
}

fn solve(sys: &SwitchedSystem, c: usize, objective: Objective) -> Result<Outcome, String> {
    if !(1..=MAX_LEVEL).contains(&c) {
        return Err(format!("level must be between 1 and {MAX_LEVEL}"));
    }
    let key = (sys.digest(), c, objective);
    if let Some(hit) = CACHE.with(|m| m.borrow().get(&key).cloned()) {
        return Ok(hit);
    }
    let outcome = certify(sys, c, objective, &CertifyOptions::default()).map_err(|e| e.to_string())?;
    CACHE.with(|m| m.borrow_mut().insert(key, outcome.clone()));
    Ok(outcome)
}

fn solve_cert(sys: &SwitchedSystem, c: usize, objective: Objective) -> Result<Certificate, String> {
    match solve(sys, c, objective)? {
        Outcome::Certified(cert) => Ok(*cert),
        Outcome::Rejected(r) => Err(format!("no certificate at c = {c}: {}", r.status)),
    }
}

fn curve(set: &SublevelSet) -> Curve {
    Curve {
        label: set.label(),
        area: set.area(),
        area_error: set.area_error(),
        points: set.boundary().iter().map(|&(t, r)| [r * t.cos(), r * t.sin()]).collect(),
    }
}

/// Certifies one level and traces its sublevel set through `x0`.
pub fn certify_level(system_json: &str, c: usize, objective: &str, x0: [f64; 2], samples: usize) -> Result<LevelView, String> {
    let sys = parse_system(system_json)?;
    let objective: Objective = objective.parse().map_err(|e: metalyap::Error| e.to_string())?;
    let view = match solve(&sys, c, objective)? {
        Outcome::Certified(cert) => {
            let set = boundary_trace(&cert, &x0, samples).map_err(|e| e.to_string())?;
            LevelView {
                c,
                order: 2 * c,
                objective,
                status: "feasible".into(),
                iterations: cert.solver.iterations,
                p11: Some(cert.p[(0, 0)]),
                floor_min_eig: Some(cert.margins.floor_min_eig),
                lmi_max_eigs: cert.margins.lmi_max_eigs.clone(),
                curve: Some(curve(&set)),
            }
        }
        Outcome::Rejected(r) => LevelView {
            c,
            order: 2 * c,
            objective,
            status: r.status.to_string(),
            iterations: r.iterations,
            p11: None,
            floor_min_eig: None,
            lmi_max_eigs: Vec::new(),
            curve: None,
        },
    };
    Ok(view)
}

fn thin(states: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let every = states.len().div_ceil(PLOT_POINTS).max(1);
    let mut pts: Vec<[f64; 2]> = states.iter().step_by(every).map(|x| [x[0], x[1]]).collect();
    if let Some(last) = states.last() {
        if !(states.len() - 1).is_multiple_of(every) {
            pts.push([last[0], last[1]]);
        }
    }
    pts
}

/// Integrates one trajectory, optionally checking it against the `x1`
/// certificate of level `c`.
pub fn simulate_run(system_json: &str, req: &RunRequest) -> Result<RunView, String> {
    let sys = parse_system(system_json)?;
    let cert = match req.c {
        0 => None,
        c => Some(solve_cert(&sys, c, Objective::X1)?),
    };
    let policy = match req.policy.as_str() {
        "random" => SwitchingPolicy::random(req.seed),
        "adversarial" => {
            let cert = cert.as_ref().ok_or("the adversarial policy needs a certificate level")?;
            adversarial_policy(cert, &sys).map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown policy {other:?}")),
    };
    let tr = integrate(&sys, &policy, &req.x0, req.horizon, metalyap::simulate::DEFAULT_STEP).map_err(|e| e.to_string())?;
    let (monotone, worst_level_ratio, set) = match &cert {
        Some(cert) => {
            let report = check_monotone(cert, &tr).map_err(|e| e.to_string())?;
            let level = cert.eval_v(&req.x0).map_err(|e| e.to_string())?;
            let mut worst = 0.0f64;
            for x in &tr.states {
                worst = worst.max(cert.eval_v(x).map_err(|e| e.to_string())? / level);
            }
            let set = boundary_trace(cert, &req.x0, 360).map_err(|e| e.to_string())?;
            (Some(report.monotone), Some(worst), Some(curve(&set)))
        }
        None => (None, None, None),
    };
    Ok(RunView {
        policy: tr.policy.clone(),
        points: thin(&tr.states),
        switches: tr.modes.windows(2).filter(|w| w[0] != w[1]).count(),
        diverged: tr.diverged(),
        monotone,
        worst_level_ratio,
        curve: set,
    })
}

/// Sublevel sets of the `x1` certificates at `levels` through `x0`, their
/// intersection, and how far one random run strays from each.
pub fn nested_sets(system_json: &str, levels: &[usize], x0: [f64; 2], seed: u64, samples: usize) -> Result<NestedView, String> {
    let sys = parse_system(system_json)?;
    if levels.is_empty() {
        return Err("choose at least one level".into());
    }
    let mut levels = levels.to_vec();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    levels.dedup();
    let certs: Vec<Certificate> = levels.iter().map(|&c| solve_cert(&sys, c, Objective::X1)).collect::<Result<_, _>>()?;
    let sets: Vec<SublevelSet> = certs
        .iter()
        .map(|c| boundary_trace(c, &x0, samples))
        .collect::<metalyap::Result<_>>()
        .map_err(|e| e.to_string())?;
    let both = intersect_levels(&sets).map_err(|e| e.to_string())?;
    // sets are in decreasing c, so areas should increase along the list
    let nested = sets.windows(2).all(|w| w[0].area() <= w[1].area() + w[0].area_error() + w[1].area_error());
    let tr = integrate(&sys, &SwitchingPolicy::random(seed), &x0, 20.0, metalyap::simulate::DEFAULT_STEP).map_err(|e| e.to_string())?;
    let mut run_ratios = Vec::new();
    for set in &sets {
        let mut worst = 0.0f64;
        for x in &tr.states {
            worst = worst.max(set.level_ratio(x).map_err(|e| e.to_string())?);
        }
        run_ratios.push(worst);
    }
    Ok(NestedView {
        sets: sets.iter().map(curve).collect(),
        intersection: curve(&both),
        nested,
        run_ratios,
        run: thin(&tr.states),
    })
}

/// The bundled two-mode example in the system file format.
pub fn example_system() -> String {
    SwitchedSystem::two_mode_example().to_json()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("serialises")).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exampleSystem)]
pub fn wasm_example_system() -> String {
    example_system()
}

#[wasm_bindgen(js_name = certifyLevel)]
pub fn wasm_certify_level(system_json: &str, c: usize, objective: &str, x1: f64, x2: f64, samples: usize) -> Result<String, JsError> {
    to_js(certify_level(system_json, c, objective, [x1, x2], samples))
}

#[wasm_bindgen(js_name = simulateRun)]
pub fn wasm_simulate_run(system_json: &str, request_json: &str) -> Result<String, JsError> {
    let req: RunRequest = serde_json::from_str(request_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(simulate_run(system_json, &req))
}

#[wasm_bindgen(js_name = nestedSets)]
pub fn wasm_nested_sets(system_json: &str, levels: Vec<u32>, x1: f64, x2: f64, seed: u64, samples: usize) -> Result<String, JsError> {
    let levels: Vec<usize> = levels.into_iter().map(|c| c as usize).collect();
    to_js(nested_sets(system_json, &levels, [x1, x2], seed, samples))
}
