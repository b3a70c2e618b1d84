//! Invariant sets `{x : V_c(x) ≤ V_c(x0)}` of planar certificates.
//!
//! `V_c` is homogeneous of degree `2c` and positive definite, so every
//! sublevel set is star-shaped about the origin and its boundary along the
//! ray at angle `θ` sits at `r(θ) = (ℓ / V_c(cos θ, sin θ))^{1/(2c)}`. No
//! root finding or contouring is needed, and the result holds for the
//! non-convex level sets high orders produce.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::certificate::Certificate;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 720;
pub const MIN_SAMPLES: usize = 16;

/// One certificate and the level it is cut at.
#[derive(Debug, Clone)]
pub struct Member {
    pub cert: Certificate,
    pub level: f64,
}

impl Member {
    fn radius(&self, theta: f64) -> f64 {
        let v = self.cert.eval_v(&[theta.cos(), theta.sin()]).expect("planar certificate");
        (self.level / v).powf(1.0 / (2 * self.cert.c) as f64)
    }
}

/// A planar sublevel set, or an intersection of several, traced on a
/// uniform angular grid.
#[derive(Debug, Clone)]
pub struct SublevelSet {
    members: Vec<Member>,
    /// `(θ_k, r_k)` for `k = 0..=samples`; the last point closes the curve.
    boundary: Vec<(f64, f64)>,
    area: f64,
    area_error: f64,
}

/// What gets written next to the boundary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub label: String,
    pub level: f64,
    pub area: f64,
    pub error_bound: f64,
    pub samples: usize,
}

/// Traces `{x : V(x) ≤ V(x0)}` with `samples` rays.
pub fn boundary_trace(cert: &Certificate, x0: &[f64], samples: usize) -> Result<SublevelSet> {
    if cert.n != 2 {
        return Err(Error::Unsupported(format!("boundary tracing needs n = 2, certificate has n = {}", cert.n)));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("at least {MIN_SAMPLES} samples are required, got {samples}")));
    }
    let level = cert.eval_v(x0)?;
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::InvalidArgument("x0 must be a non-zero finite point".into()));
    }
    SublevelSet::from_members(
        vec![Member {
            cert: cert.clone(),
            level,
        }],
        samples,
    )
}

/// Pointwise-minimum radius of sets traced on the same grid.
pub fn intersect_levels(sets: &[SublevelSet]) -> Result<SublevelSet> {
    let Some(first) = sets.first() else {
        return Err(Error::InvalidArgument("nothing to intersect".into()));
    };
    for s in &sets[1..] {
        if s.samples() != first.samples() || s.boundary.iter().zip(&first.boundary).any(|(a, b)| a.0 != b.0) {
            return Err(Error::GridMismatch(format!(
                "{} samples vs {} samples",
                s.samples(),
                first.samples()
            )));
        }
    }
    let boundary: Vec<(f64, f64)> = (0..first.boundary.len())
        .map(|k| {
            let r = sets.iter().map(|s| s.boundary[k].1).fold(f64::INFINITY, f64::min);
            (first.boundary[k].0, r)
        })
        .collect();
    let members: Vec<Member> = sets.iter().flat_map(|s| s.members.iter().cloned()).collect();
    let area = polar_area(&boundary);
    let area_error = error_estimate(&members, first.samples(), area);
    Ok(SublevelSet {
        members,
        boundary,
        area,
        area_error,
    })
}

impl SublevelSet {
    fn from_members(members: Vec<Member>, samples: usize) -> Result<Self> {
        let boundary = trace(&members, samples);
        if let Some(&(theta, r)) = boundary.iter().find(|(_, r)| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "certificate is not positive definite along θ = {theta:.6} (r = {r})"
            )));
        }
        let area = polar_area(&boundary);
        let area_error = error_estimate(&members, samples, area);
        Ok(Self {
            members,
            boundary,
            area,
            area_error,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// The cut level of the first member (the only one unless this is an
    /// intersection).
    pub fn level(&self) -> f64 {
        self.members[0].level
    }

    pub fn samples(&self) -> usize {
        self.boundary.len() - 1
    }

    pub fn boundary(&self) -> &[(f64, f64)] {
        &self.boundary
    }

    /// Trapezoidal polar area `½ Σ r_k² Δθ`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// `|A_N − A_{⌈N/2⌉}|` plus a roundoff floor. The trapezoidal rule
    /// converges at least as `N⁻²`, so this bounds the change from doubling
    /// `N` as well.
    pub fn area_error(&self) -> f64 {
        self.area_error
    }

    /// `V(x) ≤ level` for every member, evaluated directly (any `n`).
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.contains_within(x, 0.0)
    }

    /// `V(x) ≤ level · (1 + rel_tol)` for every member.
    pub fn contains_within(&self, x: &[f64], rel_tol: f64) -> Result<bool> {
        for m in &self.members {
            if m.cert.eval_v(x)? > m.level * (1.0 + rel_tol) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest `V(x) / level` over members.
    pub fn level_ratio(&self, x: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for m in &self.members {
            worst = worst.max(m.cert.eval_v(x)? / m.level);
        }
        Ok(worst)
    }

    pub fn label(&self) -> String {
        self.members
            .iter()
            .map(|m| format!("c{}-{}", m.cert.c, m.cert.objective))
            .collect::<Vec<_>>()
            .join("&")
    }

    pub fn summary(&self) -> SetSummary {
        SetSummary {
            label: self.label(),
            level: self.level(),
            area: self.area,
            error_bound: self.area_error,
            samples: self.samples(),
        }
    }

    /// `theta,r,x1,x2` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,r,x1,x2\n");
        for &(theta, r) in &self.boundary {
            let _ = writeln!(out, "{theta},{r},{},{}", r * theta.cos(), r * theta.sin());
        }
        out
    }
}

fn grid(samples: usize) -> impl Iterator<Item = f64> {
    (0..=samples).map(move |k| if k == samples { 2.0 * PI } else { 2.0 * PI * k as f64 / samples as f64 })
}

fn trace(members: &[Member], samples: usize) -> Vec<(f64, f64)> {
    let mut boundary: Vec<(f64, f64)> = grid(samples)
        .map(|theta| (theta, members.iter().map(|m| m.radius(theta)).fold(f64::INFINITY, f64::min)))
        .collect();
    // close the curve exactly
    boundary[samples].1 = boundary[0].1;
    boundary
}

fn polar_area(boundary: &[(f64, f64)]) -> f64 {
    let samples = boundary.len() - 1;
    let dtheta = 2.0 * PI / samples as f64;
    0.5 * boundary[..samples].iter().map(|(_, r)| r * r).sum::<f64>() * dtheta
}

fn error_estimate(members: &[Member], samples: usize, area: f64) -> f64 {
    let coarse = polar_area(&trace(members, samples.div_ceil(2)));
    (area - coarse).abs() + 64.0 * f64::EPSILON * area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{certify, CertifyOptions, Objective};
    use crate::SwitchedSystem;
    use nalgebra::DMatrix;

    /// A level-1 certificate with a hand-picked `P` (validation is not
    /// needed for geometry).
    fn quadratic(p: [f64; 4]) -> Certificate {
        let sys = SwitchedSystem::new(vec![-DMatrix::<f64>::identity(2, 2)]).unwrap();
        let mut cert = certify(&sys, 1, Objective::Feas, &CertifyOptions::default())
            .unwrap()
            .into_certificate()
            .unwrap();
        cert.p = DMatrix::from_row_slice(2, 2, &p);
        cert
    }

    #[test]
    fn unit_circle() {
        let set = boundary_trace(&quadratic([1.0, 0.0, 0.0, 1.0]), &[1.0, 0.0], 1024).unwrap();
        assert!(set.boundary().iter().all(|(_, r)| (r - 1.0).abs() < 1e-14));
        assert!((set.area() - PI).abs() < 1e-4);
        assert!(set.contains(&[1.0, 0.0]).unwrap());
        assert!(set.contains(&[0.0, 0.0]).unwrap());
        assert!(!set.contains(&[2.0, 0.0]).unwrap());
    }

    #[test]
    fn ellipse_and_intersection() {
        let circle = boundary_trace(&quadratic([1.0, 0.0, 0.0, 1.0]), &[1.0, 0.0], 1024).unwrap();
        let ellipse = boundary_trace(&quadratic([1.0, 0.0, 0.0, 4.0]), &[1.0, 0.0], 1024).unwrap();
        for &(theta, r) in ellipse.boundary() {
            let want = (theta.cos().powi(2) + 4.0 * theta.sin().powi(2)).powf(-0.5);
            assert!((r - want).abs() < 1e-12);
        }
        assert!((ellipse.area() - PI / 2.0).abs() < 1e-4);
        let both = intersect_levels(&[circle.clone(), ellipse.clone()]).unwrap();
        assert_eq!(both.boundary(), ellipse.boundary());
        let same = intersect_levels(&[circle.clone(), circle.clone()]).unwrap();
        assert_eq!(same.boundary(), circle.boundary());
        assert_eq!(same.area(), circle.area());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cert = quadratic([1.0, 0.0, 0.0, 1.0]);
        assert!(boundary_trace(&cert, &[0.0, 0.0], 64).is_err());
        assert!(boundary_trace(&cert, &[1.0, 0.0], 8).is_err());
        let a = boundary_trace(&cert, &[1.0, 0.0], 64).unwrap();
        let b = boundary_trace(&cert, &[1.0, 0.0], 128).unwrap();
        assert!(matches!(intersect_levels(&[a, b]), Err(Error::GridMismatch(_))));
    }
}
