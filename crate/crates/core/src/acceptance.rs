//! Reproduction gate: every quantitative target the artifact must hit, with
//! its tolerance pinned in code. Each criterion reports one pass/fail line;
//! the suite is exposed both to the integration tests and to the `accept`
//! command of the CLI.

use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cxlinalg;
use crate::fullwave::{self, BvpOptions, SaddleEnd, WaveProfile};
use crate::layer::{self, ShockDirection, ShockKind};
use crate::melnikov;
use crate::model::{self, nonmonotone_set, set_a, symmetric_set, ModelParams};
use crate::quad;
use crate::reduced::{self, ArcAnchor, Orientation, Param, SolveOptions};
use crate::roots;
use crate::spectral::{self, EvansContext};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: String,
    pub expected: String,
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let detail: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (got {}, want {})", c.name, c.observed, c.expected))
            .collect();
        if detail.is_empty() {
            format!("criterion {:2}: {status} — {}", self.id, self.title)
        } else {
            format!(
                "criterion {:2}: {status} — {} [{}]",
                self.id,
                self.title,
                detail.join("; ")
            )
        }
    }
}

fn check_abs(name: &str, observed: f64, expected: f64, tol: f64) -> Check {
    Check {
        name: name.to_string(),
        passed: (observed - expected).abs() <= tol,
        observed: format!("{observed:.6}"),
        expected: format!("{expected} +- {tol:.1e}"),
    }
}

fn check_true(name: &str, passed: bool, observed: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        passed,
        observed: observed.into(),
        expected: "true".to_string(),
    }
}

fn check_below(name: &str, observed: f64, bound: f64) -> Check {
    Check {
        name: name.to_string(),
        passed: observed <= bound,
        observed: format!("{observed:.3e}"),
        expected: format!("<= {bound:.1e}"),
    }
}

fn solve_opts() -> SolveOptions {
    SolveOptions { c_bracket: (0.05, 0.4), ..Default::default() }
}

fn set_a_wave() -> &'static (ModelParams, WaveProfile) {
    static WAVE: OnceLock<(ModelParams, WaveProfile)> = OnceLock::new();
    WAVE.get_or_init(|| {
        let p = set_a().with_a(0.5182);
        let seed = reduced::singular_het_solve(0.5182, &p, Orientation::Invasion, &solve_opts())
            .expect("set A singular heteroclinic");
        let wave = fullwave::het_bvp_solve(&seed, 1e-4, &p, &BvpOptions::default())
            .expect("set A wave at eps = 1e-4");
        (p, wave)
    })
}

/// Criterion 1: equal-area height for set A, with the closed-form and
/// quadrature-root routes agreeing independently.
pub fn criterion_1() -> CriterionResult {
    let p = set_a();
    let rule = layer::equal_area_height(&p);
    let mut checks = vec![check_abs("w_h(0)", rule.w, -0.5648, 5e-4)];
    // independent route: root of the area integral as a function of w
    let (wlo, whi) = layer::admissible_w_range(&p);
    let area = |w: f64| -> Result<f64, String> {
        let (ul, ur) = layer::jump_endpoints(w, &p).map_err(|e| e.to_string())?;
        Ok(quad::adaptive_simpson(&|u| w + model::potential(u, &p), ul, ur, 1e-13))
    };
    let w_quad = roots::brent(area, wlo + 1e-9, whi - 1e-9, 1e-13, 200).expect("quadrature root");
    checks.push(check_below(
        "|w_quadrature - (-Phi(inflection))|",
        (w_quad - rule.w).abs(),
        1e-9,
    ));
    CriterionResult { id: 1, title: "equal-area shock height (set A)", checks }
}

/// Criterion 2: the symmetric standing wave.
pub fn criterion_2() -> CriterionResult {
    let p = symmetric_set();
    let wave = reduced::standing_wave_solve(&p, None).expect("symmetric standing wave");
    let mut checks = vec![
        check_abs("u_l", wave.shock.u_l, 0.06699, 1e-4),
        check_abs("u_r", wave.shock.u_r, 0.93301, 1e-4),
        check_abs("c", wave.wavespeed, 0.0, 1e-9),
    ];
    let mut h_worst: f64 = 0.0;
    for arc in [&wave.left_arc, &wave.right_arc] {
        for &(_, u, v) in &arc.samples {
            h_worst = h_worst.max(reduced::reduced_hamiltonian(u, v, &p).abs());
        }
    }
    checks.push(check_below("max |H~| on both arcs", h_worst, 1e-8));
    CriterionResult { id: 2, title: "symmetric standing wave", checks }
}

/// Criterion 3: generalised rule heights and the saddle-node delta.
pub fn criterion_3() -> CriterionResult {
    let p = set_a();
    let dir = ShockDirection::GammaMinus;
    let mut checks = Vec::new();
    let r01 = layer::generalised_height(0.1, &p, dir).expect("w_h(0.1)");
    checks.push(check_abs("w_h(0.1)", r01.w, -0.5661, 5e-4));
    let dm = layer::delta_m(&p, dir).expect("delta_m set A");
    checks.push(check_abs("delta_m (set A)", dm, 0.248, 3e-3));
    let w_sn = layer::viscous_height(1.0, dir, &p);
    checks.push(check_abs("plateau w_sn", w_sn, -0.5671, 5e-4));
    let pn = nonmonotone_set();
    let dmn = layer::delta_m(&pn, dir).expect("delta_m nonmonotone set");
    checks.push(check_abs("delta_m (nonmonotone set)", dmn, 0.2121, 3e-3));
    CriterionResult { id: 3, title: "generalised area rule and delta_m", checks }
}

/// Criterion 4: singular heteroclinic wavespeeds across the a-family.
pub fn criterion_4() -> CriterionResult {
    let p = set_a();
    let mut checks = Vec::new();
    let w0 = reduced::singular_het_solve(0.0, &p, Orientation::Invasion, &solve_opts())
        .expect("c(a=0)");
    checks.push(check_abs("c(a = 0)", w0.wavespeed, 0.19686, 1e-4));
    let w1 = reduced::singular_het_solve(0.5182, &p, Orientation::Invasion, &solve_opts())
        .expect("c(a = 0.5182)");
    checks.push(check_abs("c(a = 0.5182)", w1.wavespeed, 0.19817, 2e-4));
    // viscous-regime wavespeed and the family endpoint a_m = delta_m / c_m
    let wv = reduced::singular_het_solve(2.0, &p, Orientation::Invasion, &solve_opts())
        .expect("viscous-regime c_m");
    let c_m = wv.wavespeed;
    checks.push(check_abs("c_m", c_m, 0.1994, 5e-4));
    let dm = layer::delta_m(&p, ShockDirection::GammaMinus).expect("delta_m");
    let a_m = dm / c_m;
    checks.push(check_abs("a_m", a_m, 1.2465, 5e-3));
    // wavespeed range over the monotone family
    let cs: Vec<f64> = (0..=8)
        .into_par_iter()
        .map(|i| {
            let a = a_m * i as f64 / 8.0;
            reduced::singular_het_solve(a, &p, Orientation::Invasion, &solve_opts())
                .map(|w| w.wavespeed)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    checks.push(check_true(
        "c over [0, a_m] within [0.1973, 0.1993] +- 5e-4",
        lo >= 0.1973 - 5e-4 && hi <= 0.1993 + 5e-4,
        format!("[{lo:.5}, {hi:.5}]"),
    ));
    CriterionResult { id: 4, title: "singular heteroclinic wavespeeds", checks }
}

/// Criterion 5: two-leg continuation from the symmetric wave to set A.
pub fn criterion_5() -> CriterionResult {
    let p0 = symmetric_set();
    let leg1 = reduced::continue_branch(Param::Alpha, (0.5, 0.2), &p0, Param::C, Orientation::Invasion)
        .expect("alpha leg");
    let p1 = Param::C.set(&Param::Alpha.set(&p0, 0.2), leg1.last().unwrap().free);
    let leg2 = reduced::continue_branch(
        Param::Gamma1,
        (0.25, 7.0 / 12.0),
        &p1,
        Param::C,
        Orientation::Invasion,
    )
    .expect("gamma1 leg");
    let c_end = leg2.last().unwrap().free;
    let checks = vec![check_abs("c after both legs", c_end, 0.19686, 2e-4)];
    CriterionResult { id: 5, title: "two-leg continuation to set A", checks }
}

/// Criterion 6: Melnikov slopes against finite differences.
pub fn criterion_6() -> CriterionResult {
    let p = set_a();
    let mut checks = Vec::new();
    let res = melnikov::layer_melnikov(&p, ShockDirection::GammaMinus).expect("layer Melnikov");
    let h = 1e-3;
    let wp = layer::generalised_height(h, &p, ShockDirection::GammaMinus).unwrap().w;
    let wm = layer::generalised_height(-h, &p, ShockDirection::GammaMinus).unwrap().w;
    let fd = (wp - wm) / (2.0 * h);
    checks.push(check_below(
        "layer slope b vs branch finite difference (relative)",
        ((res.slope_b - fd) / fd).abs(),
        0.05,
    ));

    let ps = symmetric_set();
    let pw = melnikov::piecewise_melnikov(&ps).expect("piecewise Melnikov");
    checks.push(check_true(
        "piecewise b < 0",
        pw.slope_b < 0.0,
        format!("{:.6}", pw.slope_b),
    ));
    let ha = 1e-3;
    let up = reduced::continue_branch(Param::Alpha, (0.5, 0.5 + ha), &ps, Param::C, Orientation::Invasion)
        .unwrap();
    let dn = reduced::continue_branch(Param::Alpha, (0.5, 0.5 - ha), &ps, Param::C, Orientation::Invasion)
        .unwrap();
    let fd_c = (up.last().unwrap().free - dn.last().unwrap().free) / (2.0 * ha);
    checks.push(check_below(
        "piecewise b vs continuation finite difference (relative)",
        ((pw.slope_b - fd_c) / fd_c).abs(),
        0.05,
    ));
    CriterionResult { id: 6, title: "Melnikov slope predictions", checks }
}

/// Criterion 7: global singular bifurcations of the nonmonotone set.
pub fn criterion_7() -> CriterionResult {
    let p = nonmonotone_set();
    let mut checks = Vec::new();
    let (c_t, a_t) = reduced::detect_tangency(&p, 0.5, (0.08, 0.125)).expect("tangency");
    checks.push(check_abs("tangency c", c_t, 0.0756, 2e-3));
    checks.push(check_abs("tangency alpha", a_t, 0.1212, 2e-3));

    let pn = p.with_alpha(0.115);
    let nopts = SolveOptions { c_bracket: (0.05, 0.18), scan_points: 60, ..Default::default() };
    let nm = reduced::nonmonotone_het_solve(&pn, 0.5, &nopts).expect("nonmonotone wave");
    checks.push(check_abs("nonmonotone c at alpha = 0.115", nm.wavespeed, 0.1, 2e-3));

    let (a3, c3, al3) = reduced::codim3_point(&p, (0.066, 0.138)).expect("codim-3 point");
    checks.push(check_abs("codim-3 a*", a3, 3.2304, 1e-2));
    checks.push(check_abs("codim-3 c*", c3, 0.0657, 1e-2));
    checks.push(check_abs("codim-3 alpha*", al3, 0.1384, 1e-2));

    let fig12 = nonmonotone_set().with_alpha(0.068984).with_c(0.2);
    match reduced::canard_threshold_a(&fig12, 4.0) {
        Ok(a_min) => {
            let ok = reduced::canard_crossing(&fig12.with_a((1.2 * a_min).max(0.5))).is_ok();
            checks.push(check_true(
                "canard transverse crossing above threshold a",
                a_min > 0.0 && ok,
                format!("threshold a = {a_min:.4}"),
            ));
        }
        Err(e) => checks.push(check_true("canard transverse crossing above threshold a", false, e.to_string())),
    }
    CriterionResult { id: 7, title: "tangency, nonmonotone, codim-3, canard", checks }
}

/// Criterion 8: the full 4D wave at eps = 1e-4.
pub fn criterion_8() -> CriterionResult {
    let (p, wave) = set_a_wave();
    let mut checks = vec![check_abs("c(eps = 1e-4)", wave.wavespeed, 0.19826, 1e-4)];
    let delta = p.a * wave.wavespeed;
    let rule = layer::generalised_height(delta, &p.with_c(wave.wavespeed), ShockDirection::GammaMinus)
        .expect("w_h(delta)");
    let band = 0.02 * (rule.u_r - rule.u_l);
    let mut worst: f64 = 0.0;
    for s in wave.states.iter() {
        if s[0] > rule.u_l + band && s[0] < rule.u_r - band {
            worst = worst.max((s[3] - rule.w).abs());
        }
    }
    checks.push(check_below("max |w - w_h(delta)| in the shock layer", worst, 10.0 * wave.eps));
    CriterionResult { id: 8, title: "full 4D heteroclinic at eps = 1e-4", checks }
}

/// Criterion 9: spectral stability of the monotone family.
pub fn criterion_9() -> CriterionResult {
    let mut checks = Vec::new();
    let (p, wave) = set_a_wave();

    // dispersion negativity over the k grid
    let pe = p.with_c(wave.wavespeed).with_eps(wave.eps);
    let mut neg_ok = true;
    for i in 0..=180 {
        let k = 10f64.powf(-3.0 + 9.0 * i as f64 / 180.0);
        for end in [SaddleEnd::PMinus, SaddleEnd::PPlus] {
            if spectral::dispersion(k, end, &pe).re >= 0.0 {
                neg_ok = false;
            }
        }
    }
    checks.push(check_true("Re lambda_pm(k) < 0 on k in [1e-3, 1e6]", neg_ok, format!("{neg_ok}")));

    // asymptotic spatial eigenvalues against the dense oracle at |lambda| = 1e6
    let mut asym_worst: f64 = 0.0;
    for a in [0.0, p.a] {
        let pa = pe.with_a(a);
        let ctx = EvansContext::new(wave, &pa);
        for &arg in &[0.0, 0.9, -0.9] {
            let lambda = Complex64::from_polar(1e6, arg);
            let m = ctx.matrix_at_end(SaddleEnd::PPlus, lambda);
            let eigs = cxlinalg::eigenvalues4(&m);
            for mu in spectral::asymptotic_spatial_eigs(lambda, &pa) {
                let best = eigs
                    .iter()
                    .map(|e| (e - mu).norm() / mu.norm())
                    .fold(f64::INFINITY, f64::min);
                asym_worst = asym_worst.max(best);
            }
        }
    }
    checks.push(check_below("asymptotic eigenvalue relative error (a = 0 and a > 0)", asym_worst, 0.01));

    // winding 0 on three radii for >= 10 values of a in [0, a_m]
    let dm = layer::delta_m(p, ShockDirection::GammaMinus).expect("delta_m");
    let c_m = 0.19937;
    let a_m = dm / c_m;
    let a_grid: Vec<f64> = (0..10).map(|i| a_m * i as f64 / 9.0).collect();
    let waves: Vec<(f64, ModelParams, WaveProfile)> = a_grid
        .par_iter()
        .map(|&a| {
            let pa = set_a().with_a(a);
            let seed = reduced::singular_het_solve(a, &pa, Orientation::Invasion, &solve_opts())
                .expect("singular heteroclinic for winding sweep");
            let w = fullwave::het_bvp_solve(&seed, 1e-4, &pa, &BvpOptions::default())
                .expect("wave for winding sweep");
            (a, pa, w)
        })
        .collect();
    let mut windings_ok = true;
    let mut wind_report = Vec::new();
    for radius in [1e3, 1e4, 1e5] {
        for (a, pa, w) in &waves {
            let ctx = EvansContext::new(w, pa);
            let contour = spectral::semicircle_contour(radius, 1e-3, 720);
            match spectral::winding_number(&ctx, &contour) {
                Ok((n, _)) => {
                    if n != 0 {
                        windings_ok = false;
                        wind_report.push(format!("a={a:.3} R={radius:.0e}: {n}"));
                    }
                }
                Err(e) => {
                    windings_ok = false;
                    wind_report.push(format!("a={a:.3} R={radius:.0e}: {e}"));
                }
            }
        }
    }
    checks.push(check_true(
        "winding 0 on R in {1e3, 1e4, 1e5} for 10 a-values in [0, a_m]",
        windings_ok,
        if wind_report.is_empty() { "all zero".to_string() } else { wind_report.join("; ") },
    ));

    // real-axis point spectrum
    let ctx = EvansContext::new(wave, p);
    match spectral::point_spectrum_scan(&ctx, (-0.9, 0.05), &[]) {
        Ok(report) => {
            let ok = report.eigenvalues.len() == 2
                && report.eigenvalues[0].lambda > -0.81
                && report.eigenvalues[0].lambda < -0.79
                && report.eigenvalues[0].multiplicity == 1
                && report.eigenvalues[1].lambda.abs() < 1e-6
                && report.eigenvalues[1].multiplicity == 1;
            checks.push(check_true(
                "real scan: exactly lambda_0 = 0 and lambda_1 in [-0.81, -0.79], both simple",
                ok,
                format!("{:?}", report.eigenvalues),
            ));
        }
        Err(e) => checks.push(check_true("real scan", false, e.to_string())),
    }
    CriterionResult { id: 9, title: "spectral stability (dispersion, asymptotics, winding, scan)", checks }
}

/// Criterion 10: property suites without paper-quoted numbers.
pub fn criterion_10() -> CriterionResult {
    let p = set_a();
    let mut checks = Vec::new();

    // Hamiltonian conservation on the delta = 0 heteroclinic pair
    let w_h = layer::equal_area_height(&p).w;
    let mut drift: f64 = 0.0;
    for dir in [ShockDirection::GammaPlus, ShockDirection::GammaMinus] {
        let orbit = layer::heteroclinic_orbit(w_h, 0.0, &p, dir).expect("layer orbit");
        let h0 = layer::layer_hamiltonian(orbit.u_left, 0.0, w_h, &p);
        for &(_, u, uh) in &orbit.samples {
            drift = drift.max((layer::layer_hamiltonian(u, uh, w_h, &p) - h0).abs());
        }
    }
    checks.push(check_below("Hamiltonian drift on delta = 0 orbits", drift, 1e-7));

    // generalised-area residual across the delta family
    let mut res_worst: f64 = 0.0;
    for &delta in &[0.05, 0.12, 0.2, 0.3] {
        let rule = layer::generalised_height(delta, &p, ShockDirection::GammaMinus).unwrap();
        let orbit = layer::heteroclinic_orbit(rule.w, delta, &p, ShockDirection::GammaMinus).unwrap();
        res_worst = res_worst.max(layer::generalised_area_residual(&orbit, &p).abs());
    }
    checks.push(check_below("generalised-area residual over layer heteroclinics", res_worst, 1e-6));

    // symmetry pairing of the two branch directions
    let grid: Vec<f64> = (0..=6).map(|i| 0.04 * i as f64).collect();
    let minus: Vec<f64> = grid
        .iter()
        .map(|&d| layer::generalised_height(d, &p, ShockDirection::GammaMinus).unwrap().w)
        .collect();
    let plus: Vec<f64> = grid
        .iter()
        .map(|&d| layer::generalised_height(-d, &p, ShockDirection::GammaPlus).unwrap().w)
        .collect();
    let pair_worst = minus
        .iter()
        .zip(plus.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    checks.push(check_below("Gamma+/Gamma- branch pairing", pair_worst, 1e-8));

    // chart-guard and section robustness of windings
    let (pw, wave) = set_a_wave();
    let contour = spectral::circle_contour(Complex64::new(-0.4, 0.0), 0.45, 128);
    let mut winds = Vec::new();
    for u_level in [0.6, 0.7, 0.8] {
        let z0 = wave.z_at_u(u_level).unwrap();
        let ctx = EvansContext::new(wave, pw).with_z0(z0);
        winds.push(spectral::winding_number(&ctx, &contour).map(|w| w.0).unwrap_or(-99));
    }
    for guard in [1e-6, 1e-5] {
        let mut ctx = EvansContext::new(wave, pw);
        ctx.chart_guard = guard;
        winds.push(spectral::winding_number(&ctx, &contour).map(|w| w.0).unwrap_or(-99));
    }
    let wind_ok = winds.iter().all(|&w| w == winds[0] && w >= 0);
    checks.push(check_true(
        "winding invariant under section and chart-guard changes",
        wind_ok,
        format!("{winds:?}"),
    ));

    // smooth limit of the piecewise Melnikov formula
    let smooth_ok = piecewise_smooth_limit_consistency(&p);
    checks.push(check_below("piecewise/smooth Melnikov consistency (relative)", smooth_ok, 1e-5));

    CriterionResult { id: 10, title: "property suites", checks }
}

/// Relative deviation between the piecewise formula applied to the smooth
/// layer heteroclinic (zero shift) and the smooth Melnikov integrals,
/// after removing the common positive prefactor.
fn piecewise_smooth_limit_consistency(p: &ModelParams) -> f64 {
    use nalgebra::{Matrix2, Vector2};
    let rule = layer::equal_area_height(p);
    let orbit =
        layer::heteroclinic_orbit_with_radius(rule.w, 0.0, p, ShockDirection::GammaMinus, 1e-8)
            .expect("layer orbit");
    let mut traj = crate::ode::Trajectory::new();
    for &(y, u, uh) in &orbit.samples {
        let (du, duh) = layer::layer_rhs(u, uh, rule.w, 0.0, p);
        traj.t.push(y);
        traj.y.push(Vector2::new(u, uh));
        traj.dy.push(Vector2::new(du, duh));
    }
    let w = rule.w;
    let rhs = move |y: &Vector2<f64>| {
        let (a, b) = layer::layer_rhs(y[0], y[1], w, 0.0, p);
        Vector2::new(a, b)
    };
    let jac = move |y: &Vector2<f64>| Matrix2::new(0.0, 1.0, model::diffusivity(y[0], p), 0.0);
    let incoming = melnikov::PwPiece { traj: traj.clone(), field: Box::new(rhs), jac: Box::new(jac) };
    let outgoing = melnikov::PwPiece { traj, field: Box::new(rhs), jac: Box::new(jac) };
    let spec: Vec<(&str, Box<dyn Fn(bool, &Vector2<f64>) -> Vector2<f64>>)> = vec![
        ("w", Box::new(|_i, _y: &Vector2<f64>| Vector2::new(0.0, 1.0))),
        ("delta", Box::new(|_i, y: &Vector2<f64>| Vector2::new(0.0, -y[1]))),
    ];
    let (pw, _ai, _ao, (v1m, _v1p)) =
        melnikov::piecewise_integrals(&incoming, &outgoing, &spec).expect("piecewise integrals");
    let smooth = melnikov::layer_melnikov(p, ShockDirection::GammaMinus).expect("smooth integrals");
    let mut worst: f64 = 0.0;
    for key in ["w", "delta"] {
        let expected = smooth.partials[key] / v1m;
        worst = worst.max(((pw[key] - expected) / expected).abs());
    }
    worst
}

/// Run the full acceptance battery in criterion order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_helpers() {
        assert!(check_abs("x", 1.0005, 1.0, 1e-3).passed);
        assert!(!check_abs("x", 1.01, 1.0, 1e-3).passed);
        assert!(check_below("r", 1e-9, 1e-8).passed);
        let c = CriterionResult {
            id: 3,
            title: "t",
            checks: vec![check_true("a", true, "x")],
        };
        assert!(c.passed());
        assert!(c.summary_line().contains("PASS"));
    }
}
