//! The full 4D travelling-wave heteroclinic for eps > 0, solved as a
//! two-point boundary value problem: three-stage Lobatto collocation
//! (Hermite-Simpson form) on an adapted mesh, projection boundary conditions
//! onto the saddle subspaces, one interior phase condition, and the
//! wavespeed free to balance the count.

use nalgebra::{Matrix2x4, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cxlinalg::{self, Mat4c};
use crate::layer::{self, ShockDirection};
use crate::model::{self, ModelParams};
use crate::reduced::SingularHeteroclinic;

#[derive(Debug, Error)]
pub enum FullWaveError {
    #[error("Newton iteration failed to converge (final residual {0:e})")]
    NoConvergence(f64),
    #[error("truncated domain too short: endpoint drift {0:e}")]
    DomainTooShort(f64),
    #[error("saddle linearisation does not split 2/2 (eigenvalue real part {0:e})")]
    DegenerateSplitting(f64),
    #[error("linear solve failed at block {0}")]
    SingularSystem(usize),
    #[error(transparent)]
    Layer(#[from] layer::LayerError),
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// Which asymptotic saddle of the 4D system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleEnd {
    /// (1, 0, -c, -Phi(1))
    PMinus,
    /// (0, 0, 0, 0)
    PPlus,
}

/// A converged eps > 0 wave profile on a nonuniform mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveProfile {
    pub mesh: Vec<f64>,
    /// (u, uhat, v, w) per node.
    pub states: Vec<[f64; 4]>,
    pub wavespeed: f64,
    pub residual_norm: f64,
    pub eps: f64,
}

impl WaveProfile {
    pub fn endpoint(&self, end: SaddleEnd, p: &ModelParams) -> [f64; 4] {
        equilibrium(end, self.wavespeed, p)
    }

    /// Natural cubic interpolation of the density component.
    pub fn u_spline(&self) -> CubicSpline {
        CubicSpline::new(&self.mesh, &self.states.iter().map(|s| s[0]).collect::<Vec<_>>())
    }

    /// First mesh location where u crosses the given level (descending
    /// profiles cross once for monotone waves).
    pub fn z_at_u(&self, level: f64) -> Option<f64> {
        for k in 1..self.mesh.len() {
            let (a, b) = (self.states[k - 1][0], self.states[k][0]);
            if (a - level) * (b - level) <= 0.0 && a != b {
                let f = (level - a) / (b - a);
                return Some(self.mesh[k - 1] + f * (self.mesh[k] - self.mesh[k - 1]));
            }
        }
        None
    }

    /// CSV rendering: metadata header then `z,u,uhat,v,w` rows.
    pub fn to_csv(&self, p: &ModelParams) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# beta = {:.16e}\n# gamma1 = {:.16e}\n# gamma2 = {:.16e}\n# alpha = {:.16e}\n# kappa = {:.16e}\n# a = {:.16e}\n# c = {:.16e}\n# eps = {:.16e}\n# residual_norm = {:.16e}\n",
            p.beta, p.gamma1, p.gamma2, p.alpha, p.kappa, p.a, self.wavespeed, self.eps, self.residual_norm
        ));
        out.push_str("z,u,uhat,v,w\n");
        for (z, s) in self.mesh.iter().zip(self.states.iter()) {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                z, s[0], s[1], s[2], s[3]
            ));
        }
        out
    }
}

/// Natural cubic spline on a nonuniform grid, clamped to endpoint values
/// outside the span.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    y2: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 3);
        let mut y2 = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in 1..n - 1 {
            let sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
            let p = sig * y2[i - 1] + 2.0;
            y2[i] = (sig - 1.0) / p;
            let d = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
            u[i] = (6.0 * d / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
        }
        for i in (0..n - 1).rev() {
            y2[i] = y2[i] * y2[i + 1] + u[i];
        }
        CubicSpline { x: x.to_vec(), y: y.to_vec(), y2 }
    }

    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if xq <= self.x[0] {
            return self.y[0];
        }
        if xq >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.x[mid] <= xq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.x[hi] - self.x[lo];
        let a = (self.x[hi] - xq) / h;
        let b = (xq - self.x[lo]) / h;
        a * self.y[lo]
            + b * self.y[hi]
            + ((a * a * a - a) * self.y2[lo] + (b * b * b - b) * self.y2[hi]) * h * h / 6.0
    }
}

/// Right-hand side of the equivalent fast system (fast travelling-wave
/// variable): (uhat, w + Phi(u) - delta uhat, eps f(u), eps (v + c u)).
pub fn fast_rhs(state: &[f64; 4], p: &ModelParams) -> [f64; 4] {
    let [u, uhat, v, w] = *state;
    [
        uhat,
        w + model::potential(u, p) - p.delta() * uhat,
        p.eps * model::reaction(u, p),
        p.eps * (v + p.c * u),
    ]
}

fn equilibrium(end: SaddleEnd, c: f64, p: &ModelParams) -> [f64; 4] {
    match end {
        SaddleEnd::PMinus => [1.0, 0.0, -c, -model::potential(1.0, p)],
        SaddleEnd::PPlus => [0.0, 0.0, 0.0, -model::potential(0.0, p)],
    }
}

/// Slow-form vector field (z variable) used by the collocation equations.
fn slow_rhs(y: &Vector4<f64>, c: f64, p: &ModelParams) -> Vector4<f64> {
    let eps = p.eps;
    let delta = p.a * c;
    Vector4::new(
        y[1] / eps,
        (y[3] + model::potential(y[0], p) - delta * y[1]) / eps,
        model::reaction(y[0], p),
        y[2] + c * y[0],
    )
}

fn slow_jac(y: &Vector4<f64>, c: f64, p: &ModelParams) -> Matrix4<f64> {
    let eps = p.eps;
    let delta = p.a * c;
    Matrix4::new(
        0.0, 1.0 / eps, 0.0, 0.0,
        model::diffusivity(y[0], p) / eps, -delta / eps, 0.0, 1.0 / eps,
        model::reaction_prime(y[0], p), 0.0, 0.0, 0.0,
        c, 0.0, 1.0, 0.0,
    )
}

fn slow_rhs_dc(y: &Vector4<f64>, p: &ModelParams) -> Vector4<f64> {
    Vector4::new(0.0, -p.a * y[1] / p.eps, 0.0, y[0])
}

/// 4x4 linearisation of the slow system at a saddle endpoint.
pub fn endpoint_matrix(end: SaddleEnd, c: f64, p: &ModelParams) -> Matrix4<f64> {
    let y = equilibrium(end, c, p);
    slow_jac(&Vector4::new(y[0], y[1], y[2], y[3]), c, p)
}

/// Eigen-split of an endpoint linearisation: (unstable pair, stable pair) of
/// (eigenvalue, eigenvector) entries sorted by |Re| descending within each
/// side.
#[allow(clippy::type_complexity)]
fn eigen_split(
    m: &Matrix4<f64>,
) -> Result<(Vec<(Complex64, Vector4<Complex64>)>, Vec<(Complex64, Vector4<Complex64>)>), FullWaveError>
{
    let mc: Mat4c = m.map(|x| Complex64::new(x, 0.0));
    let eigs = cxlinalg::eigenvalues4(&mc);
    let mut unstable = Vec::new();
    let mut stable = Vec::new();
    for mu in eigs {
        if mu.re.abs() < 1e-10 {
            return Err(FullWaveError::DegenerateSplitting(mu.re));
        }
        let v = cxlinalg::eigenvector4(&mc, mu);
        if mu.re > 0.0 {
            unstable.push((mu, v));
        } else {
            stable.push((mu, v));
        }
    }
    if unstable.len() != 2 || stable.len() != 2 {
        return Err(FullWaveError::DegenerateSplitting(0.0));
    }
    Ok((unstable, stable))
}

/// Orthonormal bases of the stable and unstable 2-planes of the endpoint
/// linearisation (requires eps > 0).
pub fn saddle_subspaces(
    which: SaddleEnd,
    p: &ModelParams,
) -> Result<(Matrix2x4<f64>, Matrix2x4<f64>), FullWaveError> {
    if p.eps <= 0.0 {
        return Err(FullWaveError::BadInput("saddle subspaces need eps > 0".into()));
    }
    let m = endpoint_matrix(which, p.c, p);
    let (unstable, stable) = eigen_split(&m)?;
    let realize = |pair: &[(Complex64, Vector4<Complex64>)]| -> Matrix2x4<f64> {
        // complex-conjugate pairs span a real plane via (Re, Im)
        let (v1, v2) = if pair[0].0.im.abs() > 1e-12 {
            (pair[0].1.map(|z| z.re), pair[0].1.map(|z| z.im))
        } else {
            (pair[0].1.map(|z| z.re), pair[1].1.map(|z| z.re))
        };
        // Gram-Schmidt
        let e1 = v1 / v1.norm();
        let mut e2 = v2 - e1 * e1.dot(&v2);
        e2 /= e2.norm();
        Matrix2x4::from_rows(&[e1.transpose(), e2.transpose()])
    };
    Ok((realize(&stable), realize(&unstable)))
}

/// Rows annihilating the given spectral subspace: rows of V^{-1} dual to the
/// complementary eigenvectors, as real 2x4 blocks.
fn projection_rows(
    m: &Matrix4<f64>,
    keep_unstable: bool,
) -> Result<Matrix2x4<f64>, FullWaveError> {
    let (unstable, stable) = eigen_split(m)?;
    let mut v = Mat4c::zeros();
    for (k, (_, vec)) in unstable.iter().chain(stable.iter()).enumerate() {
        v.set_column(k, vec);
    }
    let vinv = v.try_inverse().ok_or(FullWaveError::SingularSystem(0))?;
    // rows 0,1 are dual to the unstable pair, rows 2,3 to the stable pair;
    // to force membership of the unstable span we zero the stable-dual rows
    let rows = if keep_unstable { [2usize, 3] } else { [0usize, 1] };
    let mut out = Matrix2x4::zeros();
    for (r, &ri) in rows.iter().enumerate() {
        // eigen-duals of real matrices come in conjugate rows; take real and
        // imaginary parts when complex
        for ci in 0..4 {
            out[(r, ci)] = vinv[(ri, ci)].re;
        }
    }
    // normalise rows for conditioning
    for r in 0..2 {
        let n = out.row(r).norm();
        if n > 0.0 {
            for ci in 0..4 {
                out[(r, ci)] /= n;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct BvpOptions {
    /// Relative collocation residual target.
    pub tol: f64,
    /// Phase anchor: u(0) = phase_u.
    pub phase_u: f64,
    /// Newton tolerance on the root-mean-square equation residual.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_refinements: usize,
    /// Solve with the wavespeed free (phase condition active).
    pub free_c: bool,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            phase_u: 0.7,
            newton_tol: 1e-11,
            max_newton: 40,
            max_refinements: 12,
            free_c: true,
        }
    }
}

/// Build the truncation half-length from the slowest endpoint rate.
fn half_length(c: f64, p: &ModelParams) -> Result<f64, FullWaveError> {
    let mut slowest = f64::INFINITY;
    for end in [SaddleEnd::PMinus, SaddleEnd::PPlus] {
        let m = endpoint_matrix(end, c, p);
        let (u, s) = eigen_split(&m)?;
        for (mu, _) in u.iter().chain(s.iter()) {
            slowest = slowest.min(mu.re.abs());
        }
    }
    Ok(40.0 / slowest)
}

/// Initial mesh: coarse background plus geometric refinement into the shock
/// layer around z = 0.
fn initial_mesh(l: f64, eps: f64) -> Vec<f64> {
    let mut zs: Vec<f64> = Vec::new();
    // uniform background for the slow arcs
    let n_bg = 700;
    for i in 0..=n_bg {
        zs.push(-l + 2.0 * l * i as f64 / n_bg as f64);
    }
    // two-sided geometric grading from the layer core out to the boundary,
    // so the fast boundary-layer tails never straddle a coarse interval
    let mut step = eps / 4.0;
    while step < l {
        zs.push(step);
        zs.push(-step);
        step *= 1.25;
    }
    // uniform core across the shock
    let n_core = 32;
    for i in 0..=n_core {
        zs.push(-eps + 2.0 * eps * i as f64 / n_core as f64);
    }
    zs.push(0.0);
    zs.sort_by(f64::total_cmp);
    zs.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * l);
    zs
}

/// Assemble the initial guess from a singular heteroclinic seed.
fn seed_guess(
    mesh: &[f64],
    seed: &SingularHeteroclinic,
    p: &ModelParams,
    phase_u: f64,
) -> Result<(Vec<Vector4<f64>>, f64), FullWaveError> {
    let c = seed.wavespeed;
    let pc = p.with_c(c);
    let delta = pc.delta();
    let w_h = seed.shock.w;

    // layer orbit re-anchored so that u = phase_u sits at y = 0
    let orbit = layer::heteroclinic_orbit(w_h, delta, &pc, ShockDirection::GammaMinus)?;
    let mut y_phase = 0.0;
    for k in 1..orbit.samples.len() {
        let (y0, u0, _) = orbit.samples[k - 1];
        let (y1, u1, _) = orbit.samples[k];
        if (u0 - phase_u) * (u1 - phase_u) <= 0.0 && u0 != u1 {
            y_phase = y0 + (phase_u - u0) / (u1 - u0) * (y1 - y0);
            break;
        }
    }
    let eps = p.eps;
    let layer_y_min = orbit.samples.first().unwrap().0 - y_phase;
    let layer_y_max = orbit.samples.last().unwrap().0 - y_phase;
    let layer_u = |y: f64| -> (f64, f64) {
        // linear scan acceptable at seed time
        let yq = (y + y_phase).clamp(orbit.samples.first().unwrap().0, orbit.samples.last().unwrap().0);
        for k in 1..orbit.samples.len() {
            let (y0, u0, h0) = orbit.samples[k - 1];
            let (y1, u1, h1) = orbit.samples[k];
            if (yq >= y0 && yq <= y1) || (yq <= y0 && yq >= y1) {
                let f = if y1 == y0 { 0.0 } else { (yq - y0) / (y1 - y0) };
                return (u0 + f * (u1 - u0), h0 + f * (h1 - h0));
            }
        }
        let last = orbit.samples.last().unwrap();
        (last.1, last.2)
    };

    // z-parametrise the slow arcs by integrating dz = D du / (-(v+cu))
    let arc_to_z = |arc: &crate::reduced::SlowArc, end_at: f64| -> Vec<(f64, f64, f64)> {
        // returns (z, u, v) with z = end_at at the arc's section end
        let s = &arc.samples;
        let mut zs = vec![0.0; s.len()];
        for k in 1..s.len() {
            let (u0, v0) = (s[k - 1].1, s[k - 1].2);
            let (u1, v1) = (s[k].1, s[k].2);
            let du = u1 - u0;
            let mid_u = 0.5 * (u0 + u1);
            let mid_v = 0.5 * (v0 + v1);
            let slope = -(mid_v + c * mid_u) / model::diffusivity(mid_u, &pc);
            let dz = if slope.abs() > 1e-14 { du / slope } else { 0.0 };
            zs[k] = zs[k - 1] + dz;
        }
        let zl = *zs.last().unwrap();
        s.iter()
            .zip(zs.iter())
            .map(|(&(_, u, v), &z)| (z - zl + end_at, u, v))
            .collect()
    };
    // right arc ends (at the shock) where the layer leaves u_r; left arc
    // starts where the layer lands
    let z_match_r = eps * layer_y_min;
    let z_match_l = eps * layer_y_max;
    let right = arc_to_z(&seed.right_arc, z_match_r);
    let mut left = arc_to_z(&seed.left_arc, 0.0);
    // left arc is stored from the shock landing into p_+; its section end is
    // its first sample
    let z0l = left.first().map(|s| s.0).unwrap_or(0.0);
    for s in left.iter_mut() {
        s.0 = s.0 - z0l + z_match_l;
    }

    let interp_arc = |arc: &[(f64, f64, f64)], z: f64| -> (f64, f64) {
        if arc.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        if z <= arc.first().unwrap().0 {
            return (arc.first().unwrap().1, arc.first().unwrap().2);
        }
        if z >= arc.last().unwrap().0 {
            return (arc.last().unwrap().1, arc.last().unwrap().2);
        }
        for k in 1..arc.len() {
            if arc[k].0 >= z {
                let (z0, u0, v0) = arc[k - 1];
                let (z1, u1, v1) = arc[k];
                let f = if z1 == z0 { 0.0 } else { (z - z0) / (z1 - z0) };
                return (u0 + f * (u1 - u0), v0 + f * (v1 - v0));
            }
        }
        (arc.last().unwrap().1, arc.last().unwrap().2)
    };

    let v_shock = seed
        .right_arc
        .samples
        .last()
        .map(|s| s.2)
        .ok_or_else(|| FullWaveError::BadInput("empty seed arc".into()))?;

    let mut states = Vec::with_capacity(mesh.len());
    for &z in mesh {
        let st = if z < z_match_r {
            let (u, v) = interp_arc(&right, z);
            let uhat = -eps * (v + c * u) / model::diffusivity(u, &pc);
            Vector4::new(u, uhat, v, -model::potential(u, &pc))
        } else if z > z_match_l {
            let (u, v) = interp_arc(&left, z);
            let uhat = -eps * (v + c * u) / model::diffusivity(u, &pc);
            Vector4::new(u, uhat, v, -model::potential(u, &pc))
        } else {
            let (u, uhat) = layer_u(z / eps);
            Vector4::new(u, uhat, v_shock, w_h)
        };
        states.push(st);
    }
    Ok((states, c))
}

/// Hermite-Simpson collocation residual and Jacobian blocks for one interval.
struct IntervalLin {
    e: Vector4<f64>,
    d_yi: Matrix4<f64>,
    d_yn: Matrix4<f64>,
    d_c: Vector4<f64>,
}

fn interval_residual(
    yi: &Vector4<f64>,
    yn: &Vector4<f64>,
    h: f64,
    c: f64,
    p: &ModelParams,
    with_jac: bool,
) -> IntervalLin {
    let fi = slow_rhs(yi, c, p);
    let fn_ = slow_rhs(yn, c, p);
    let ym = (yi + yn) * 0.5 + (fi - fn_) * (h / 8.0);
    let fm = slow_rhs(&ym, c, p);
    let e = yn - yi - (fi + fm * 4.0 + fn_) * (h / 6.0);
    if !with_jac {
        return IntervalLin { e, d_yi: Matrix4::zeros(), d_yn: Matrix4::zeros(), d_c: Vector4::zeros() };
    }
    let ji = slow_jac(yi, c, p);
    let jn = slow_jac(yn, c, p);
    let jm = slow_jac(&ym, c, p);
    let id = Matrix4::identity();
    let dym_dyi = id * 0.5 + ji * (h / 8.0);
    let dym_dyn = id * 0.5 - jn * (h / 8.0);
    let d_yi = -id - (ji + jm * dym_dyi * 4.0) * (h / 6.0);
    let d_yn = id - (jn + jm * dym_dyn * 4.0) * (h / 6.0);
    let fic = slow_rhs_dc(yi, p);
    let fnc = slow_rhs_dc(yn, p);
    let dym_dc = (fic - fnc) * (h / 8.0);
    let fmc = slow_rhs_dc(&ym, p) + jm * dym_dc;
    let d_c = -(fic + fmc * 4.0 + fnc) * (h / 6.0);
    IntervalLin { e, d_yi, d_yn, d_c }
}

/// Boundary rows: value residual (2-vector) and derivatives wrt the endpoint
/// state and c.
fn boundary_rows(
    end: SaddleEnd,
    y: &Vector4<f64>,
    c: f64,
    p: &ModelParams,
) -> Result<(Vector2<f64>, Matrix2x4<f64>, Vector2<f64>), FullWaveError> {
    let bc_value = |cc: f64| -> Result<(Vector2<f64>, Matrix2x4<f64>), FullWaveError> {
        let m = endpoint_matrix(end, cc, p);
        let rows = projection_rows(&m, matches!(end, SaddleEnd::PMinus))?;
        let eq = equilibrium(end, cc, p);
        let diff = y - Vector4::new(eq[0], eq[1], eq[2], eq[3]);
        Ok((rows * diff, rows))
    };
    let (val, rows) = bc_value(c)?;
    let hc = 1e-7;
    let (vp, _) = bc_value(c + hc)?;
    let (vm, _) = bc_value(c - hc)?;
    let dc = (vp - vm) / (2.0 * hc);
    Ok((val, rows, dc))
}

/// One Newton step: assemble and solve the bordered almost-block-diagonal
/// system. Unknown layout: [y_0 .. y_N, c]; equation layout: BC_left (2),
/// interval blocks (4 each, with the phase row absorbed at the z = 0 node),
/// BC_right (2).
struct NewtonSystem {
    delta_y: Vec<Vector4<f64>>,
    delta_c: f64,
    rms: f64,
}

#[allow(clippy::too_many_arguments)]
fn newton_step(
    mesh: &[f64],
    states: &[Vector4<f64>],
    c: f64,
    p: &ModelParams,
    phase_idx: usize,
    phase_u: f64,
    free_c: bool,
) -> Result<NewtonSystem, FullWaveError> {
    let n = mesh.len();
    // carried rows: coefficients on the current node (4), c (1), rhs (1)
    #[derive(Clone)]
    struct Row {
        a: [f64; 4],
        b: [f64; 4],
        c: f64,
        r: f64,
    }
    let zero_row = Row { a: [0.0; 4], b: [0.0; 4], c: 0.0, r: 0.0 };

    let (bl_val, bl_rows, bl_dc) = boundary_rows(SaddleEnd::PMinus, &states[0], c, p)?;
    let mut carry: Vec<Row> = (0..2)
        .map(|r| Row {
            a: [bl_rows[(r, 0)], bl_rows[(r, 1)], bl_rows[(r, 2)], bl_rows[(r, 3)]],
            b: [0.0; 4],
            c: if free_c { bl_dc[r] } else { 0.0 },
            r: -bl_val[r],
        })
        .collect();

    let mut rms = bl_val.norm_squared();
    let mut neq = 2usize;

    // stored pivot rows for back-substitution
    struct Pivot {
        b: [[f64; 4]; 4],
        c: [f64; 4],
        r: [f64; 4],
    }
    let mut pivots: Vec<Pivot> = Vec::with_capacity(n - 1);

    for i in 0..n - 1 {
        let h = mesh[i + 1] - mesh[i];
        let lin = interval_residual(&states[i], &states[i + 1], h, c, p, true);
        rms += lin.e.norm_squared();
        neq += 4;
        let mut rows: Vec<Row> = carry.clone();
        for r in 0..4 {
            rows.push(Row {
                a: [lin.d_yi[(r, 0)], lin.d_yi[(r, 1)], lin.d_yi[(r, 2)], lin.d_yi[(r, 3)]],
                b: [lin.d_yn[(r, 0)], lin.d_yn[(r, 1)], lin.d_yn[(r, 2)], lin.d_yn[(r, 3)]],
                c: if free_c { lin.d_c[r] } else { 0.0 },
                r: -lin.e[r],
            });
        }
        if free_c && i == phase_idx {
            let mut row = zero_row.clone();
            row.a[0] = 1.0;
            row.r = phase_u - states[i][0];
            rms += row.r * row.r;
            neq += 1;
            rows.push(row);
        }
        // eliminate the 4 columns of y_i by Gauss-Jordan with partial
        // pivoting over the stacked rows
        let m = rows.len();
        let mut used = vec![false; m];
        let mut pivot_of_col = [usize::MAX; 4];
        for col in 0..4 {
            let (mut best, mut best_abs) = (usize::MAX, 0.0_f64);
            for (ri, row) in rows.iter().enumerate() {
                if !used[ri] && row.a[col].abs() > best_abs {
                    best = ri;
                    best_abs = row.a[col].abs();
                }
            }
            if best == usize::MAX || best_abs < 1e-300 {
                return Err(FullWaveError::SingularSystem(i));
            }
            used[best] = true;
            pivot_of_col[col] = best;
            // normalise pivot row
            let pa = rows[best].a[col];
            for k in 0..4 {
                rows[best].a[k] /= pa;
                rows[best].b[k] /= pa;
            }
            rows[best].c /= pa;
            rows[best].r /= pa;
            let prow = rows[best].clone();
            for (ri, row) in rows.iter_mut().enumerate() {
                if ri == best {
                    continue;
                }
                let f = row.a[col];
                if f != 0.0 {
                    for k in 0..4 {
                        row.a[k] -= f * prow.a[k];
                        row.b[k] -= f * prow.b[k];
                    }
                    row.c -= f * prow.c;
                    row.r -= f * prow.r;
                }
            }
        }
        // after the full Gauss-Jordan pass each pivot row carries a single
        // unit entry on its own column: y_i[col] = r - b . y_{i+1} - c dc
        let mut piv = Pivot { b: [[0.0; 4]; 4], c: [0.0; 4], r: [0.0; 4] };
        for col in 0..4 {
            let row = &rows[pivot_of_col[col]];
            piv.b[col] = row.b;
            piv.c[col] = row.c;
            piv.r[col] = row.r;
        }
        pivots.push(piv);
        carry = rows
            .iter()
            .zip(used.iter())
            .filter(|(_, &u)| !u)
            .map(|(row, _)| Row { a: row.b, b: [0.0; 4], c: row.c, r: row.r })
            .collect();
    }

    // final dense solve on [y_N, c]
    let (br_val, br_rows, br_dc) = boundary_rows(SaddleEnd::PPlus, &states[n - 1], c, p)?;
    rms += br_val.norm_squared();
    neq += 2;
    for r in 0..2 {
        carry.push(Row {
            a: [br_rows[(r, 0)], br_rows[(r, 1)], br_rows[(r, 2)], br_rows[(r, 3)]],
            b: [0.0; 4],
            c: if free_c { br_dc[r] } else { 0.0 },
            r: -br_val[r],
        });
    }
    let nun = if free_c { 5 } else { 4 };
    if carry.len() != nun {
        return Err(FullWaveError::SingularSystem(n));
    }
    // final dense solve by truncated SVD: with c fixed and no phase row the
    // translation mode leaves one近-zero singular value, and the minimal-norm
    // step simply pins the translate near the current iterate
    let mut a = nalgebra::DMatrix::<f64>::zeros(nun, nun);
    let mut rhs = nalgebra::DVector::<f64>::zeros(nun);
    for (ri, row) in carry.iter().enumerate() {
        for k in 0..4 {
            a[(ri, k)] = row.a[k];
        }
        if free_c {
            a[(ri, 4)] = row.c;
        }
        rhs[ri] = row.r;
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-10 * svd.singular_values.max())
        .map_err(|_| FullWaveError::SingularSystem(n))?;
    let mut delta_y = vec![Vector4::zeros(); n];
    delta_y[n - 1] = Vector4::new(sol[0], sol[1], sol[2], sol[3]);
    let delta_c = if free_c { sol[4] } else { 0.0 };

    for i in (0..n - 1).rev() {
        let piv = &pivots[i];
        let yn = delta_y[i + 1];
        let mut yi = Vector4::zeros();
        for col in 0..4 {
            let mut val = piv.r[col] - piv.c[col] * delta_c;
            for k in 0..4 {
                val -= piv.b[col][k] * yn[k];
            }
            yi[col] = val;
        }
        delta_y[i] = yi;
    }
    Ok(NewtonSystem { delta_y, delta_c, rms: (rms / neq as f64).sqrt() })
}

/// Relative collocation residual of the Hermite interpolant, probed inside
/// each interval.
fn interval_rel_residual(
    yi: &Vector4<f64>,
    yn: &Vector4<f64>,
    h: f64,
    c: f64,
    p: &ModelParams,
) -> f64 {
    let fi = slow_rhs(yi, c, p);
    let fn_ = slow_rhs(yn, c, p);
    let mut worst: f64 = 0.0;
    for &s in &[0.25_f64, 0.75] {
        let s2 = s * s;
        let s3 = s2 * s;
        let y = yi * (2.0 * s3 - 3.0 * s2 + 1.0)
            + fi * (h * (s3 - 2.0 * s2 + s))
            + yn * (-2.0 * s3 + 3.0 * s2)
            + fn_ * (h * (s3 - s2));
        let dy = (yi * (6.0 * s2 - 6.0 * s) / h
            + fi * (3.0 * s2 - 4.0 * s + 1.0)
            + yn * (6.0 * s - 6.0 * s2) / h
            + fn_ * (3.0 * s2 - 2.0 * s))
            * 1.0;
        let f = slow_rhs(&y, c, p);
        let num = (dy - f).norm();
        let den = 1.0 + f.norm();
        worst = worst.max(num / den);
    }
    worst
}

/// Solve the eps > 0 heteroclinic starting from a singular-heteroclinic seed.
pub fn het_bvp_solve(
    seed: &SingularHeteroclinic,
    eps: f64,
    p: &ModelParams,
    opts: &BvpOptions,
) -> Result<WaveProfile, FullWaveError> {
    if eps <= 0.0 || eps > 1e-2 {
        return Err(FullWaveError::BadInput(format!(
            "eps = {eps} outside the supported range (0, 1e-2]"
        )));
    }
    let pe = p.with_eps(eps).with_c(seed.wavespeed);
    let l0 = half_length(seed.wavespeed, &pe)?;
    let mut l = l0;
    for attempt in 0..2 {
        let mesh = initial_mesh(l, eps);
        let (states, c0) = seed_guess(&mesh, seed, &pe, opts.phase_u)?;
        match solve_on_mesh(mesh, states, c0, &pe, opts) {
            Ok(profile) => {
                // endpoint decay check: the truncated tails must have
                // essentially reached the fixed points
                let drift = endpoint_drift(&profile, &pe);
                if drift > 1e-5 && attempt == 0 {
                    l *= 2.0;
                    continue;
                }
                if drift > 1e-5 {
                    return Err(FullWaveError::DomainTooShort(drift));
                }
                return Ok(profile);
            }
            Err(e) => {
                if attempt == 1 {
                    return Err(e);
                }
                l *= 2.0;
            }
        }
    }
    unreachable!()
}

fn endpoint_drift(profile: &WaveProfile, p: &ModelParams) -> f64 {
    let pm = equilibrium(SaddleEnd::PMinus, profile.wavespeed, p);
    let pp = equilibrium(SaddleEnd::PPlus, profile.wavespeed, p);
    let first = profile.states.first().unwrap();
    let last = profile.states.last().unwrap();
    let d1: f64 = first.iter().zip(pm.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let d2: f64 = last.iter().zip(pp.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    d1.max(d2)
}

/// Re-solve the collocation system starting from an existing profile (used
/// for fixed-c consistency checks and eps continuation).
pub fn refine_profile(
    guess: &WaveProfile,
    p: &ModelParams,
    opts: &BvpOptions,
) -> Result<WaveProfile, FullWaveError> {
    let states = guess
        .states
        .iter()
        .map(|s| Vector4::new(s[0], s[1], s[2], s[3]))
        .collect();
    solve_on_mesh(guess.mesh.clone(), states, guess.wavespeed, &p.with_eps(guess.eps), opts)
}

fn solve_on_mesh(
    mut mesh: Vec<f64>,
    mut states: Vec<Vector4<f64>>,
    mut c: f64,
    p: &ModelParams,
    opts: &BvpOptions,
) -> Result<WaveProfile, FullWaveError> {
    for _round in 0..=opts.max_refinements {
        if mesh.len() > 60_000 {
            return Err(FullWaveError::NoConvergence(f64::NAN));
        }
        let phase_idx = mesh
            .iter()
            .position(|&z| z >= 0.0)
            .unwrap_or(mesh.len() / 2);

        // damped Newton iteration
        let mut converged = false;
        let mut last_rms = f64::INFINITY;
        let stall_floor = if opts.free_c { 1e-8 } else { 1e-4 };
        for it in 0..opts.max_newton {
            let sys = newton_step(&mesh, &states, c, p, phase_idx, opts.phase_u, opts.free_c)?;
            if sys.rms < opts.newton_tol || (it > 4 && sys.rms < stall_floor) {
                converged = true;
                break;
            }
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ls in 0..12 {
                let cand_states: Vec<Vector4<f64>> = states
                    .iter()
                    .zip(sys.delta_y.iter())
                    .map(|(y, d)| y + d * lambda)
                    .collect();
                let cand_c = c + lambda * sys.delta_c;
                if let Ok(probe) =
                    newton_step(&mesh, &cand_states, cand_c, p, phase_idx, opts.phase_u, opts.free_c)
                {
                    if probe.rms < sys.rms * (1.0 - 0.25 * lambda) || probe.rms < opts.newton_tol {
                        states = cand_states;
                        c = cand_c;
                        last_rms = probe.rms;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                // A stalled line search below the residual floor counts as
                // converged. With c fixed (translation mode unpinned) the
                // discrete system is inconsistent at the discretisation
                // level, so the floor follows the mesh instead of roundoff;
                // the interpolant residual check below still gates validity.
                if sys.rms < stall_floor {
                    converged = true;
                    break;
                }
                return Err(FullWaveError::NoConvergence(last_rms.min(sys.rms)));
            }
            if last_rms < opts.newton_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(FullWaveError::NoConvergence(last_rms));
        }

        // residual-driven mesh refinement
        let mut residuals: Vec<f64> = Vec::with_capacity(mesh.len() - 1);
        for i in 0..mesh.len() - 1 {
            residuals.push(interval_rel_residual(
                &states[i],
                &states[i + 1],
                mesh[i + 1] - mesh[i],
                c,
                p,
            ));
        }
        let worst = residuals.iter().cloned().fold(0.0_f64, f64::max);
        if worst <= opts.tol {
            return Ok(WaveProfile {
                mesh,
                states: states.iter().map(|y| [y[0], y[1], y[2], y[3]]).collect(),
                wavespeed: c,
                residual_norm: worst,
                eps: p.eps,
            });
        }
        // split offending intervals
        let mut new_mesh = Vec::with_capacity(mesh.len() * 2);
        let mut new_states = Vec::with_capacity(mesh.len() * 2);
        for i in 0..mesh.len() - 1 {
            new_mesh.push(mesh[i]);
            new_states.push(states[i]);
            if residuals[i] > 0.5 * opts.tol {
                let h = mesh[i + 1] - mesh[i];
                let fi = slow_rhs(&states[i], c, p);
                let fn_ = slow_rhs(&states[i + 1], c, p);
                let ym = (states[i] + states[i + 1]) * 0.5 + (fi - fn_) * (h / 8.0);
                new_mesh.push(0.5 * (mesh[i] + mesh[i + 1]));
                new_states.push(ym);
            }
        }
        new_mesh.push(*mesh.last().unwrap());
        new_states.push(*states.last().unwrap());
        mesh = new_mesh;
        states = new_states;
    }
    Err(FullWaveError::NoConvergence(f64::NAN))
}
