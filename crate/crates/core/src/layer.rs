//! The fast layer problem: heteroclinic shock connections between the outer
//! branches of the critical manifold, selected by the equal-area rule at
//! delta = 0 and by the generalised area rule for delta != 0, up to the
//! saddle-node height where the connection becomes a viscous shock landing
//! on a fold.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelParams};
use crate::ode::{self, CrossDir, Event, OdeOptions, StopReason};
use crate::quad;
use crate::roots;

/// Seed offset along saddle eigenvectors when shooting invariant manifolds.
pub const MANIFOLD_SEED: f64 = 1e-7;
/// Maximum fast-time span for a single shot.
pub const MAX_Y_SPAN: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("shock height w = {0} lies outside the admissible jump zone")]
    OutOfJumpZone(f64),
    #[error("layer shot failed to reach the section: {0}")]
    NoCrossing(String),
    #[error("no interpolated-rule root bracket at delta = {0}")]
    NoBracket(f64),
    #[error("root finding failed: {0}")]
    Root(#[from] roots::RootError),
    #[error("integration failed: {0}")]
    Ode(#[from] ode::OdeError),
}

/// Orientation of a fast heteroclinic in the (u, uhat) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockDirection {
    /// uhat > 0, travels u_l -> u_r.
    GammaPlus,
    /// uhat < 0, travels u_r -> u_l.
    GammaMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockKind {
    EqualArea,
    Interpolated,
    Viscous,
}

/// A selected shock: its height and jump endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockRule {
    pub kind: ShockKind,
    pub w: f64,
    pub u_l: f64,
    pub u_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitTerminal {
    SaddleToSaddle,
    SaddleToFold,
}

/// A computed fast heteroclinic orbit.
#[derive(Debug, Clone)]
pub struct LayerOrbit {
    /// (y, u, uhat) samples in increasing y, with y = 0 at the mid section.
    pub samples: Vec<(f64, f64, f64)>,
    pub w: f64,
    pub delta: f64,
    /// Endpoint densities ordered by u (u_left < u_right).
    pub u_left: f64,
    pub u_right: f64,
    pub direction: ShockDirection,
    pub terminal: OrbitTerminal,
}

/// Right-hand side of the layer problem: (uhat, w + Phi(u) - delta uhat).
pub fn layer_rhs(u: f64, uhat: f64, w: f64, delta: f64, p: &ModelParams) -> (f64, f64) {
    (uhat, w + model::potential(u, p) - delta * uhat)
}

/// Hamiltonian of the delta = 0 layer problem, normalised so that
/// H(u, uhat) = uhat^2 / 2 - w u - Psi(u) with Psi the antiderivative of Phi.
pub fn layer_hamiltonian(u: f64, uhat: f64, w: f64, p: &ModelParams) -> f64 {
    0.5 * uhat * uhat - w * u - model::potential_antiderivative(u, p)
}

/// Admissible shock heights: w between the potential values at the folds,
/// returned as (lower, upper) = (-Phi(gamma1), -Phi(gamma2)).
pub fn admissible_w_range(p: &ModelParams) -> (f64, f64) {
    (-model::potential(p.gamma1, p), -model::potential(p.gamma2, p))
}

/// The two outer-branch roots of Phi(u) + w = 0 (left root <= gamma1,
/// right root >= gamma2), found by bracketed root finding on each branch.
pub fn jump_endpoints(w: f64, p: &ModelParams) -> Result<(f64, f64), LayerError> {
    let (w_lo, w_hi) = admissible_w_range(p);
    let slack = 1e-12 * (1.0 + w.abs());
    if w < w_lo - slack || w > w_hi + slack {
        return Err(LayerError::OutOfJumpZone(w));
    }
    let target = |u: f64| Ok(model::potential(u, p) + w);
    // left branch: Phi increasing on (-inf, gamma1]
    let mut lo = p.gamma1 - (p.gamma2 - p.gamma1);
    for _ in 0..60 {
        if model::potential(lo, p) + w <= 0.0 {
            break;
        }
        lo = p.gamma1 - 2.0 * (p.gamma1 - lo);
    }
    let u_l = if model::potential(p.gamma1, p) + w <= 0.0 {
        p.gamma1
    } else {
        roots::brent(target, lo, p.gamma1, 1e-15, 200)?
    };
    // right branch: Phi increasing on [gamma2, inf)
    let mut hi = p.gamma2 + (p.gamma2 - p.gamma1);
    for _ in 0..60 {
        if model::potential(hi, p) + w >= 0.0 {
            break;
        }
        hi = p.gamma2 + 2.0 * (hi - p.gamma2);
    }
    let u_r = if model::potential(p.gamma2, p) + w >= 0.0 {
        p.gamma2
    } else {
        roots::brent(target, p.gamma2, hi, 1e-15, 200)?
    };
    Ok((u_l, u_r))
}

/// Equal-area shock height for delta = 0: w_h = -Phi at the inflection of the
/// cubic, cross-checked against the defining quadrature condition.
pub fn equal_area_height(p: &ModelParams) -> ShockRule {
    let w = -model::potential(model::inflection(p), p);
    let (u_l, u_r) = jump_endpoints(w, p).expect("equal-area height is admissible");
    let res = quad::adaptive_simpson(&|u| w + model::potential(u, p), u_l, u_r, 1e-12);
    assert!(
        res.abs() < 1e-9,
        "equal-area quadrature residual {res:e} out of tolerance"
    );
    ShockRule { kind: ShockKind::EqualArea, w, u_l, u_r }
}

/// Layer eigenvalues at a saddle on an outer branch: roots of
/// mu^2 + delta mu - D(u) = 0 with D(u) > 0.
fn saddle_eigs(u: f64, delta: f64, p: &ModelParams) -> (f64, f64) {
    let d = model::diffusivity(u, p);
    let s = (delta * delta + 4.0 * d).sqrt();
    (0.5 * (-delta + s), 0.5 * (-delta - s))
}

fn unit2(v: Vector2<f64>) -> Vector2<f64> {
    v / v.norm()
}

struct Shot {
    uhat_at_section: f64,
}

/// Shoot one manifold branch of a layer saddle to the section u = u_mid.
/// `unstable` picks W^u (forward time) vs W^s (backward time); `sign` picks
/// the branch of the eigenvector.
fn shoot_manifold(
    u_saddle: f64,
    unstable: bool,
    sign: f64,
    w: f64,
    delta: f64,
    u_mid: f64,
    p: &ModelParams,
) -> Result<Shot, LayerError> {
    let (mu_u, mu_s) = saddle_eigs(u_saddle, delta, p);
    let mu = if unstable { mu_u } else { mu_s };
    let dir = unit2(Vector2::new(1.0, mu)) * sign;
    let y0 = Vector2::new(u_saddle, 0.0) + dir * MANIFOLD_SEED;
    let rhs = move |_t: f64, y: &Vector2<f64>| {
        let (du, duh) = layer_rhs(y[0], y[1], w, delta, p);
        Vector2::new(du, duh)
    };
    let section = Event::new(move |_t: f64, y: &Vector2<f64>| y[0] - u_mid, CrossDir::Any);
    // a reversal of uhat means the shot turned around before the section
    let turn = Event::new(move |_t: f64, y: &Vector2<f64>| y[1], CrossDir::Any);
    let t1 = if unstable { MAX_Y_SPAN } else { -MAX_Y_SPAN };
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-13, ..Default::default() };
    let res = ode::integrate(&rhs, 0.0, y0, t1, &[section, turn], &opts)?;
    match res.reason {
        StopReason::Event(0) => Ok(Shot { uhat_at_section: res.y_end[1] }),
        StopReason::Event(1) => Err(LayerError::NoCrossing(format!(
            "shot from u = {u_saddle} turned around at u = {:.6}",
            res.y_end[0]
        ))),
        _ => Err(LayerError::NoCrossing(format!(
            "shot from u = {u_saddle} exhausted the y span"
        ))),
    }
}

/// Signed gap between the unstable and stable manifold branches measured on
/// the section u = (u_l + u_r)/2.
pub fn shoot_layer_gap(
    w: f64,
    delta: f64,
    p: &ModelParams,
    direction: ShockDirection,
) -> Result<f64, LayerError> {
    let (u_l, u_r) = jump_endpoints(w, p)?;
    let u_mid = 0.5 * (u_l + u_r);
    let (unstable_shot, stable_shot) = match direction {
        // GammaPlus: W^u(u_l) with uhat > 0 meets W^s(u_r) with uhat > 0
        ShockDirection::GammaPlus => (
            shoot_manifold(u_l, true, 1.0, w, delta, u_mid, p)?,
            shoot_manifold(u_r, false, -1.0, w, delta, u_mid, p)?,
        ),
        // GammaMinus: W^u(u_r) with uhat < 0 meets W^s(u_l) with uhat < 0
        ShockDirection::GammaMinus => (
            shoot_manifold(u_r, true, -1.0, w, delta, u_mid, p)?,
            shoot_manifold(u_l, false, 1.0, w, delta, u_mid, p)?,
        ),
    };
    Ok(unstable_shot.uhat_at_section - stable_shot.uhat_at_section)
}

/// Fold on which the viscous connection lands for the given direction and
/// sign of delta.
fn landing_fold(delta: f64, direction: ShockDirection, p: &ModelParams) -> f64 {
    match (direction, delta >= 0.0) {
        (ShockDirection::GammaMinus, true) => p.gamma1,
        (ShockDirection::GammaMinus, false) => p.gamma2,
        (ShockDirection::GammaPlus, true) => p.gamma2,
        (ShockDirection::GammaPlus, false) => p.gamma1,
    }
}

/// Shock height of the viscous (fold-landing) connection.
pub fn viscous_height(delta: f64, direction: ShockDirection, p: &ModelParams) -> f64 {
    -model::potential(landing_fold(delta, direction, p), p)
}

/// Generalised area rule: select the shock height w_h(delta) for the given
/// direction. For small |delta| this root-finds the manifold gap in w; once
/// the root escapes through the fold height the viscous rule w = w_sn
/// applies.
pub fn generalised_height(
    delta: f64,
    p: &ModelParams,
    direction: ShockDirection,
) -> Result<ShockRule, LayerError> {
    if delta == 0.0 {
        return Ok(equal_area_height(p));
    }
    let we = equal_area_height(p).w;
    let wv = viscous_height(delta, direction, p);
    // an undefined gap everywhere in the bracket (strong damping) also
    // signals the viscous regime
    let root = match interpolated_root(delta, we, wv, p, direction) {
        Ok(r) => r,
        Err(LayerError::NoBracket(_)) => None,
        Err(e) => return Err(e),
    };
    match root {
        Some(w) => {
            let (u_l, u_r) = jump_endpoints(w, p)?;
            Ok(ShockRule { kind: ShockKind::Interpolated, w, u_l, u_r })
        }
        None => {
            // confirm the viscous connection by shooting onto the fold
            fold_connection_orbit(delta, p, direction)?;
            let (u_l, u_r) = jump_endpoints(wv, p)?;
            Ok(ShockRule { kind: ShockKind::Viscous, w: wv, u_l, u_r })
        }
    }
}

/// Brent root of the gap in w between the equal-area height and the fold
/// height; `None` when no sign change exists (viscous regime).
fn interpolated_root(
    delta: f64,
    we: f64,
    wv: f64,
    p: &ModelParams,
    direction: ShockDirection,
) -> Result<Option<f64>, LayerError> {
    let margin = 1e-9 * (1.0 + wv.abs());
    let mut a = we;
    let mut b = wv + margin.copysign(we - wv);
    let mut ga = None;
    // pull a failing equal-area endpoint inward (rare)
    for _ in 0..40 {
        ga = shoot_layer_gap(a, delta, p, direction).ok();
        if ga.is_some() {
            break;
        }
        a += 0.05 * (b - a);
    }
    let ga = ga.ok_or(LayerError::NoBracket(delta))?;
    // Near the fold height the manifolds can turn around before reaching the
    // section and the gap is undefined. The root, when it exists, lies in
    // the closure of the defined region, so locate that boundary by
    // bisection instead of stepping over it.
    let mut gb = shoot_layer_gap(b, delta, p, direction).ok();
    if gb.is_none() {
        let defined = |w: f64| shoot_layer_gap(w, delta, p, direction).is_ok();
        let w_edge = roots::bisect_predicate(defined, a, b, 1e-13 * (1.0 + wv.abs()));
        for k in 1..=10 {
            let cand = w_edge + (a - w_edge) * 1e-9 * 4f64.powi(k);
            if let Ok(g) = shoot_layer_gap(cand, delta, p, direction) {
                b = cand;
                gb = Some(g);
                break;
            }
        }
    }
    let gb = gb.ok_or(LayerError::NoBracket(delta))?;
    if ga == 0.0 {
        return Ok(Some(a));
    }
    if gb == 0.0 {
        return Ok(Some(b));
    }
    if ga.signum() == gb.signum() {
        return Ok(None);
    }
    let w = roots::brent(
        |w| shoot_layer_gap(w, delta, p, direction).map_err(|e| e.to_string()),
        a,
        b,
        1e-10,
        200,
    )?;
    Ok(Some(w))
}

/// Orbit of the viscous connection: shot from the hyperbolic saddle,
/// accepted on approach to the fold point within 1e-6.
fn fold_connection_orbit(
    delta: f64,
    p: &ModelParams,
    direction: ShockDirection,
) -> Result<ode::Trajectory<2>, LayerError> {
    let fold = landing_fold(delta, direction, p);
    let w = -model::potential(fold, p);
    let (u_l, u_r) = jump_endpoints(w, p)?;
    // the non-fold endpoint carries the hyperbolic saddle
    let (u_saddle, departs) = if (fold - u_l).abs() < 1e-12 {
        (u_r, matches!(direction, ShockDirection::GammaMinus))
    } else {
        (u_l, matches!(direction, ShockDirection::GammaPlus))
    };
    let sign = match direction {
        ShockDirection::GammaPlus => {
            if departs {
                1.0
            } else {
                -1.0
            }
        }
        ShockDirection::GammaMinus => {
            if departs {
                -1.0
            } else {
                1.0
            }
        }
    };
    let (mu_u, mu_s) = saddle_eigs(u_saddle, delta, p);
    let mu = if departs { mu_u } else { mu_s };
    let dir = unit2(Vector2::new(1.0, mu)) * sign;
    let y0 = Vector2::new(u_saddle, 0.0) + dir * MANIFOLD_SEED;
    let rhs = move |_t: f64, y: &Vector2<f64>| {
        let (du, duh) = layer_rhs(y[0], y[1], w, delta, p);
        Vector2::new(du, duh)
    };
    let near_fold = Event::new(
        move |_t: f64, y: &Vector2<f64>| {
            ((y[0] - fold).powi(2) + y[1].powi(2)).sqrt() - 1e-6
        },
        CrossDir::Down,
    );
    let escape = Event::new(
        move |_t: f64, y: &Vector2<f64>| (y[0] - fold).abs() - 0.5 * (u_r - u_l).max(0.2),
        CrossDir::Up,
    );
    // the fold is approached along its centre direction, i.e. algebraically,
    // so the span must be far longer than for saddle-to-saddle shots
    let span = 1e9;
    let t1 = if departs { span } else { -span };
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-13, ..Default::default() };
    let res = ode::integrate(&rhs, 0.0, y0, t1, &[near_fold, escape], &opts)?;
    match res.reason {
        StopReason::Event(0) => {
            let mut traj = res.traj;
            if !departs {
                reverse_traj(&mut traj);
            }
            Ok(traj)
        }
        _ => Err(LayerError::NoCrossing(format!(
            "viscous shot did not approach the fold at delta = {delta}"
        ))),
    }
}

fn reverse_traj(traj: &mut ode::Trajectory<2>) {
    traj.t.reverse();
    traj.y.reverse();
    traj.dy.reverse();
}

/// Smallest positive delta at which the interpolated rule terminates on the
/// fold height w_sn for the given direction, located by bisection.
pub fn delta_m(p: &ModelParams, direction: ShockDirection) -> Result<f64, LayerError> {
    let has_root = |delta: f64| -> bool {
        let we = equal_area_height(p).w;
        let wv = viscous_height(delta, direction, p);
        matches!(interpolated_root(delta, we, wv, p, direction), Ok(Some(_)))
    };
    // expand until the interpolated root disappears
    let mut hi = 0.05;
    let mut lo = 0.0;
    for _ in 0..40 {
        if !has_root(hi) {
            break;
        }
        lo = hi;
        hi *= 1.5;
        if hi > 1e3 {
            return Err(LayerError::NoBracket(hi));
        }
    }
    Ok(roots::bisect_predicate(has_root, lo, hi, 1e-6))
}

/// Compute the fast heteroclinic orbit at the given height and delta.
///
/// For interpolated/equal-area heights this shoots from the departing saddle
/// to the arrival saddle; at the fold height it returns the viscous
/// connection.
pub fn heteroclinic_orbit(
    w: f64,
    delta: f64,
    p: &ModelParams,
    direction: ShockDirection,
) -> Result<LayerOrbit, LayerError> {
    heteroclinic_orbit_with_radius(w, delta, p, direction, 1e-6)
}

/// As [`heteroclinic_orbit`], with an explicit acceptance radius around the
/// arrival saddle (tighter radii extend the resolved tails).
pub fn heteroclinic_orbit_with_radius(
    w: f64,
    delta: f64,
    p: &ModelParams,
    direction: ShockDirection,
    stop_radius: f64,
) -> Result<LayerOrbit, LayerError> {
    let (u_l, u_r) = jump_endpoints(w, p)?;
    let at_fold = (u_l - p.gamma1).abs() < 1e-9 || (u_r - p.gamma2).abs() < 1e-9;
    let (traj, terminal) = if at_fold {
        (fold_connection_orbit(delta, p, direction)?, OrbitTerminal::SaddleToFold)
    } else {
        (
            saddle_orbit(w, delta, u_l, u_r, p, direction, stop_radius)?,
            OrbitTerminal::SaddleToSaddle,
        )
    };
    // re-anchor y = 0 at the mid-section crossing
    let u_mid = 0.5 * (u_l + u_r);
    let mut y0 = traj.t[0];
    for i in 1..traj.len() {
        if (traj.y[i - 1][0] - u_mid) * (traj.y[i][0] - u_mid) <= 0.0 {
            let f = (u_mid - traj.y[i - 1][0]) / (traj.y[i][0] - traj.y[i - 1][0]);
            y0 = traj.t[i - 1] + f * (traj.t[i] - traj.t[i - 1]);
            break;
        }
    }
    let samples: Vec<(f64, f64, f64)> = traj
        .t
        .iter()
        .zip(traj.y.iter())
        .map(|(&t, y)| (t - y0, y[0], y[1]))
        .collect();
    Ok(LayerOrbit { samples, w, delta, u_left: u_l, u_right: u_r, direction, terminal })
}

fn saddle_orbit(
    w: f64,
    delta: f64,
    u_l: f64,
    u_r: f64,
    p: &ModelParams,
    direction: ShockDirection,
    stop_radius: f64,
) -> Result<ode::Trajectory<2>, LayerError> {
    let (u_dep, u_arr, sign) = match direction {
        ShockDirection::GammaPlus => (u_l, u_r, 1.0),
        ShockDirection::GammaMinus => (u_r, u_l, -1.0),
    };
    let (mu_u, _) = saddle_eigs(u_dep, delta, p);
    let dir = unit2(Vector2::new(1.0, mu_u)) * sign;
    let y0 = Vector2::new(u_dep, 0.0) + dir * MANIFOLD_SEED;
    let rhs = move |_t: f64, y: &Vector2<f64>| {
        let (du, duh) = layer_rhs(y[0], y[1], w, delta, p);
        Vector2::new(du, duh)
    };
    let near = Event::new(
        move |_t: f64, y: &Vector2<f64>| {
            ((y[0] - u_arr).powi(2) + y[1].powi(2)).sqrt() - stop_radius
        },
        CrossDir::Down,
    );
    let overshoot = Event::new(
        move |_t: f64, y: &Vector2<f64>| (y[0] - u_arr) * sign - 1e-3,
        CrossDir::Up,
    );
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-16, ..Default::default() };
    let res = ode::integrate(&rhs, 0.0, y0, MAX_Y_SPAN, &[near, overshoot], &opts)?;
    match res.reason {
        StopReason::Event(0) => Ok(res.traj),
        _ => {
            // accept the closest approach if the shot passed nearby
            let traj = res.traj;
            let (mut best, mut best_d) = (0usize, f64::INFINITY);
            for (i, y) in traj.y.iter().enumerate() {
                let d = ((y[0] - u_arr).powi(2) + y[1].powi(2)).sqrt();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            if best_d < 1e-4 {
                let mut t = traj.t;
                let mut y = traj.y;
                let mut dy = traj.dy;
                t.truncate(best + 1);
                y.truncate(best + 1);
                dy.truncate(best + 1);
                Ok(ode::Trajectory { t, y, dy })
            } else {
                Err(LayerError::NoCrossing(format!(
                    "heteroclinic shot missed the arrival saddle by {best_d:.2e}"
                )))
            }
        }
    }
}

/// Residual of the generalised area rule along a computed orbit:
/// int (w + Phi) du - delta * int uhat du, both by trapezoid over the
/// orbit graph uhat(u).
pub fn generalised_area_residual(orbit: &LayerOrbit, p: &ModelParams) -> f64 {
    let u: Vec<f64> = orbit.samples.iter().map(|s| s.1).collect();
    let integrand: Vec<f64> = u.iter().map(|&ui| orbit.w + model::potential(ui, p)).collect();
    let uhat: Vec<f64> = orbit.samples.iter().map(|s| s.2).collect();
    let lhs = quad::trapezoid(&u, &integrand);
    let rhs = orbit.delta * quad::trapezoid(&u, &uhat);
    lhs - rhs
}

/// A point on the (delta, w) bifurcation branch.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub delta: f64,
    pub rule: Result<ShockRule, LayerError>,
}

/// Sweep the shock-height branch over a delta grid; per-point failures are
/// recorded, not fatal.
pub fn layer_bifurcation_branch(
    delta_grid: &[f64],
    p: &ModelParams,
    direction: ShockDirection,
) -> Vec<BranchPoint> {
    use rayon::prelude::*;
    delta_grid
        .par_iter()
        .map(|&delta| BranchPoint { delta, rule: generalised_height(delta, p, direction) })
        .collect()
}

/// CSV rendering of a branch sweep: `delta,w,kind,u_l,u_r`.
pub fn branch_to_csv(branch: &[BranchPoint]) -> String {
    let mut out = String::from("delta,w,kind,u_l,u_r\n");
    for pt in branch {
        if let Ok(rule) = &pt.rule {
            let kind = match rule.kind {
                ShockKind::EqualArea => "equal-area",
                ShockKind::Interpolated => "interpolated",
                ShockKind::Viscous => "viscous",
            };
            out.push_str(&format!(
                "{:.16e},{:.16e},{},{:.16e},{:.16e}\n",
                pt.delta, rule.w, kind, rule.u_l, rule.u_r
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{set_a, symmetric_set};
    use approx::assert_relative_eq;

    #[test]
    fn layer_rhs_equilibrium_and_symmetry() {
        let p = set_a();
        let w = equal_area_height(&p).w;
        let (u_l, _) = jump_endpoints(w, &p).unwrap();
        let (du, duh) = layer_rhs(u_l, 0.0, w, 0.0, &p);
        assert!(du.abs() < 1e-14 && duh.abs() < 1e-12);

        // second component independent of uhat at delta = 0
        let (_, a) = layer_rhs(0.6, 0.1, w, 0.0, &p);
        let (_, b) = layer_rhs(0.6, -0.4, w, 0.0, &p);
        assert_eq!(a, b);

        // (uhat, y, delta) -> (-uhat, -y, -delta) symmetry of the vector field
        let (du1, duh1) = layer_rhs(0.6, 0.3, w, 0.2, &p);
        let (du2, duh2) = layer_rhs(0.6, -0.3, w, -0.2, &p);
        assert_relative_eq!(du1, -du2, epsilon = 1e-15);
        assert_relative_eq!(duh1, duh2, epsilon = 1e-15);
    }

    #[test]
    fn jump_endpoints_symmetric_set() {
        let p = symmetric_set();
        let (u_l, u_r) = jump_endpoints(-0.0625, &p).unwrap();
        // closed form (2 -+ sqrt(3))/4
        assert_relative_eq!(u_l, (2.0 - 3f64.sqrt()) / 4.0, epsilon = 1e-10);
        assert_relative_eq!(u_r, (2.0 + 3f64.sqrt()) / 4.0, epsilon = 1e-10);
        assert!((u_l - 0.06699).abs() < 1e-5);
        assert!((u_r - 0.93301).abs() < 1e-5);

        // fold boundary hits gamma1 exactly
        let w_fold = -model::potential(p.gamma1, &p);
        let (ul2, _) = jump_endpoints(w_fold, &p).unwrap();
        assert_eq!(ul2, p.gamma1);

        // u_l + u_r = 1 at the equal-area height (reflection through the
        // inflection point); off that height the cubic-root-sum identity
        // u_l + u_m + u_r = 3 (gamma1 + gamma2) / 2 is the right oracle
        let (a, b) = jump_endpoints(equal_area_height(&p).w, &p).unwrap();
        assert_relative_eq!(a + b, 1.0, epsilon = 1e-8);
        let (wlo, whi) = admissible_w_range(&p);
        for i in 1..10 {
            let w = wlo + (whi - wlo) * i as f64 / 10.0;
            let (ul, ur) = jump_endpoints(w, &p).unwrap();
            let um = roots::brent(
                |u| Ok(model::potential(u, &p) + w),
                p.gamma1,
                p.gamma2,
                1e-15,
                200,
            )
            .unwrap();
            assert_relative_eq!(
                ul + um + ur,
                1.5 * (p.gamma1 + p.gamma2),
                epsilon = 1e-8
            );
        }

        assert!(matches!(
            jump_endpoints(whi + 1e-3, &p),
            Err(LayerError::OutOfJumpZone(_))
        ));
    }

    #[test]
    fn equal_area_heights() {
        let pa = set_a();
        let rule = equal_area_height(&pa);
        // -Phi(2/3) = -61/108
        assert_relative_eq!(rule.w, -61.0 / 108.0, epsilon = 1e-14);
        assert!((rule.w - (-0.5648)).abs() < 5e-4);
        // closed-form endpoints (8 -+ sqrt(3))/12
        assert_relative_eq!(rule.u_l, (8.0 - 3f64.sqrt()) / 12.0, epsilon = 1e-10);
        assert_relative_eq!(rule.u_r, (8.0 + 3f64.sqrt()) / 12.0, epsilon = 1e-10);

        let ps = symmetric_set();
        assert_relative_eq!(equal_area_height(&ps).w, -0.0625, epsilon = 1e-14);
    }

    #[test]
    fn gap_vanishes_at_equal_area_and_flips_sign() {
        let p = set_a();
        let w_h = equal_area_height(&p).w;
        for dir in [ShockDirection::GammaPlus, ShockDirection::GammaMinus] {
            let g0 = shoot_layer_gap(w_h, 0.0, &p, dir).unwrap();
            assert!(g0.abs() < 1e-8, "gap at w_h should vanish, got {g0:e}");
            let gp = shoot_layer_gap(w_h + 1e-3, 0.0, &p, dir).unwrap();
            let gm = shoot_layer_gap(w_h - 1e-3, 0.0, &p, dir).unwrap();
            assert!(gp.signum() != gm.signum());
        }
    }

    #[test]
    fn gap_symmetry_between_directions() {
        let p = set_a();
        let w = equal_area_height(&p).w + 5e-4;
        let g1 = shoot_layer_gap(w, 0.12, &p, ShockDirection::GammaPlus).unwrap();
        let g2 = shoot_layer_gap(w, -0.12, &p, ShockDirection::GammaMinus).unwrap();
        // (uhat, y, delta) -> (-uhat, -y, -delta) maps the GammaPlus manifold
        // pair onto the GammaMinus pair at -delta, exchanging stable and
        // unstable roles and flipping uhat; with the gap always measured as
        // unstable minus stable the two sign flips cancel
        assert_relative_eq!(g1, g2, epsilon = 1e-9, max_relative = 1e-6);
    }

    #[test]
    fn generalised_height_reproduces_reported_values() {
        let p = set_a();
        let r = generalised_height(0.1, &p, ShockDirection::GammaMinus).unwrap();
        assert_eq!(r.kind, ShockKind::Interpolated);
        assert!((r.w - (-0.5661)).abs() < 5e-4, "w_h(0.1) = {}", r.w);

        // delta = 0 reduces to the equal-area rule
        let r0 = generalised_height(0.0, &p, ShockDirection::GammaMinus).unwrap();
        assert_eq!(r0.kind, ShockKind::EqualArea);
        assert_eq!(r0.w, equal_area_height(&p).w);

        // far beyond delta_m the rule is viscous at the fold height
        let rv = generalised_height(0.4, &p, ShockDirection::GammaMinus).unwrap();
        assert_eq!(rv.kind, ShockKind::Viscous);
        assert_relative_eq!(rv.w, -model::potential(p.gamma1, &p), epsilon = 1e-14);
        assert_eq!(rv.u_l, p.gamma1);
    }

    #[test]
    fn delta_m_set_a() {
        let p = set_a();
        let dm = delta_m(&p, ShockDirection::GammaMinus).unwrap();
        assert!((dm - 0.248).abs() < 3e-3, "delta_m = {dm}");
        // w_h just inside delta_m sits at the fold height within 1e-5
        let r = generalised_height(dm - 2e-6, &p, ShockDirection::GammaMinus).unwrap();
        assert!((r.w - viscous_height(dm, ShockDirection::GammaMinus, &p)).abs() < 1e-5);
    }

    #[test]
    fn orbit_invariants_hamiltonian_case() {
        let p = set_a();
        let w_h = equal_area_height(&p).w;
        let orbit = heteroclinic_orbit(w_h, 0.0, &p, ShockDirection::GammaMinus).unwrap();
        assert_eq!(orbit.terminal, OrbitTerminal::SaddleToSaddle);

        // endpoints are layer equilibria
        assert!((model::potential(orbit.u_left, &p) + w_h).abs() < 1e-8);
        assert!((model::potential(orbit.u_right, &p) + w_h).abs() < 1e-8);

        // uhat single-signed, u strictly monotone
        assert!(orbit.samples.iter().all(|s| s.2 < 0.0));
        assert!(orbit.samples.windows(2).all(|w| w[1].1 < w[0].1));

        // Hamiltonian conservation along the orbit
        let h0 = layer_hamiltonian(orbit.u_right, 0.0, w_h, &p);
        let drift = orbit
            .samples
            .iter()
            .map(|&(_, u, uh)| (layer_hamiltonian(u, uh, w_h, &p) - h0).abs())
            .fold(0.0_f64, f64::max);
        assert!(drift < 1e-7, "Hamiltonian drift {drift:e}");

        // generalised-area residual (delta = 0 -> plain equal area)
        assert!(generalised_area_residual(&orbit, &p).abs() < 1e-6);
    }

    #[test]
    fn orbit_area_rule_interpolated_and_viscous() {
        let p = set_a();
        let r = generalised_height(0.15, &p, ShockDirection::GammaMinus).unwrap();
        let orbit = heteroclinic_orbit(r.w, 0.15, &p, ShockDirection::GammaMinus).unwrap();
        assert!(generalised_area_residual(&orbit, &p).abs() < 1e-6);
        let (wlo, whi) = admissible_w_range(&p);
        assert!(orbit.w >= wlo - 1e-12 && orbit.w <= whi + 1e-12);

        let rv = generalised_height(0.30, &p, ShockDirection::GammaMinus).unwrap();
        let orbv = heteroclinic_orbit(rv.w, 0.30, &p, ShockDirection::GammaMinus).unwrap();
        assert_eq!(orbv.terminal, OrbitTerminal::SaddleToFold);
        assert!(generalised_area_residual(&orbv, &p).abs() < 1e-6);
    }

    #[test]
    fn branch_shape_and_mirror_symmetry() {
        let p = set_a();
        let grid: Vec<f64> = (0..=10).map(|i| 0.03 * i as f64).collect();
        let branch = layer_bifurcation_branch(&grid, &p, ShockDirection::GammaMinus);
        let ws: Vec<f64> = branch.iter().map(|b| b.rule.as_ref().unwrap().w).collect();
        // decreasing from the equal-area height to the fold plateau
        assert_relative_eq!(ws[0], -61.0 / 108.0, epsilon = 1e-12);
        for w in ws.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let w_sn = -model::potential(p.gamma1, &p);
        assert!((ws.last().unwrap() - w_sn).abs() < 1e-12);
        assert!((ws.last().unwrap() - (-0.5671)).abs() < 5e-4);

        // Gamma+ branch at -delta mirrors Gamma- at +delta
        let minus_grid: Vec<f64> = grid.iter().map(|d| -d).collect();
        let mirror = layer_bifurcation_branch(&minus_grid, &p, ShockDirection::GammaPlus);
        for (a, b) in branch.iter().zip(mirror.iter()) {
            let (wa, wb) = (a.rule.as_ref().unwrap().w, b.rule.as_ref().unwrap().w);
            assert_relative_eq!(wa, wb, epsilon = 1e-8);
        }

        let csv = branch_to_csv(&branch);
        assert!(csv.starts_with("delta,w,kind,u_l,u_r\n"));
        assert_eq!(csv.lines().count(), grid.len() + 1);
    }
}
