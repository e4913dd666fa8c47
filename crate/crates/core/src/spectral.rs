//! Spectral stability of computed wave profiles: the linearised eigenvalue
//! system along the wave, essential-spectrum dispersion relations, large
//! eigenvalue asymptotics, and a Riccati-Evans point-spectrum search by
//! contour winding on the Grassmannian of complex 2-planes.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cxlinalg::{self, Mat2c, Mat4c};
use crate::fullwave::{CubicSpline, SaddleEnd, WaveProfile};
use crate::model::{self, ModelParams};

type C64 = Complex64;

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("lambda = {0} is not strictly right of the essential-spectrum margin {1}")]
    LambdaInEssentialMargin(C64, f64),
    #[error("both Riccati charts degenerate simultaneously at z = {0}")]
    IrrecoverableBlowup(f64),
    #[error("contour argument gap cannot be refined below pi/2 after {0} bisections")]
    RefinementExhausted(usize),
    #[error("Riccati step size underflow at z = {0}")]
    StepUnderflow(f64),
    #[error("endpoint subspace is not a graph in either chart")]
    DegenerateSubspace,
}

/// 2x2 blocks of the linearised operator in the (p, q | r, s) splitting.
#[derive(Debug, Clone, Copy)]
pub struct EigBlocks {
    pub a: Mat2c,
    pub b: Mat2c,
    pub c: Mat2c,
    pub d: Mat2c,
}

/// Evaluation context for the eigenvalue problem along a converged wave.
pub struct EvansContext {
    pub c: f64,
    pub a: f64,
    pub eps: f64,
    u_spline: CubicSpline,
    pub z_left: f64,
    pub z_right: f64,
    pub z0: f64,
    params: ModelParams,
    /// Chart guard: swap when |det top-block| falls below this relative
    /// threshold.
    pub chart_guard: f64,
    /// Relative tolerance of the adaptive implicit Riccati transfer.
    pub step_tol: f64,
}

impl EvansContext {
    pub fn new(wave: &WaveProfile, p: &ModelParams) -> Self {
        let z0 = wave.z_at_u(0.7).unwrap_or(0.0);
        EvansContext {
            c: wave.wavespeed,
            a: p.a,
            eps: wave.eps,
            u_spline: wave.u_spline(),
            z_left: wave.mesh[0],
            z_right: *wave.mesh.last().unwrap(),
            z0,
            params: p.with_c(wave.wavespeed).with_eps(wave.eps),
            chart_guard: 1e-6,
            step_tol: 1e-8,
        }
    }

    pub fn with_z0(mut self, z0: f64) -> Self {
        self.z0 = z0;
        self
    }

    pub fn u(&self, z: f64) -> f64 {
        self.u_spline.eval(z)
    }

    /// Essential-spectrum margin: max of f'(u) over the two rest states.
    pub fn essential_margin(&self) -> f64 {
        model::reaction_prime(0.0, &self.params).max(model::reaction_prime(1.0, &self.params))
    }

    pub fn blocks(&self, z: f64, lambda: C64) -> EigBlocks {
        self.blocks_at_u(self.u(z), lambda)
    }

    fn blocks_at_u(&self, u: f64, lambda: C64) -> EigBlocks {
        let eps = self.eps;
        let delta = self.a * self.c;
        let a = Mat2c::new(
            cr(0.0),
            cr(1.0 / eps),
            (cr(model::diffusivity(u, &self.params)) + lambda * cr(eps * self.a)) / cr(eps),
            cr(-delta / eps),
        );
        let b = Mat2c::new(cr(0.0), cr(0.0), cr(0.0), cr(1.0 / eps));
        let c = Mat2c::new(
            cr(model::reaction_prime(u, &self.params)) - lambda,
            cr(0.0),
            cr(self.c),
            cr(0.0),
        );
        let d = Mat2c::new(cr(0.0), cr(0.0), cr(1.0), cr(0.0));
        EigBlocks { a, b, c, d }
    }

    /// Full 4x4 coefficient matrix M(z, lambda, eps) in (p, q, r, s) order.
    pub fn matrix(&self, z: f64, lambda: C64) -> Mat4c {
        let bl = self.blocks(z, lambda);
        cxlinalg::from_blocks(&bl.a, &bl.b, &bl.c, &bl.d)
    }

    /// Constant far-field matrix at the given rest state.
    pub fn matrix_at_end(&self, end: SaddleEnd, lambda: C64) -> Mat4c {
        let u = match end {
            SaddleEnd::PMinus => 1.0,
            SaddleEnd::PPlus => 0.0,
        };
        let bl = self.blocks_at_u(u, lambda);
        cxlinalg::from_blocks(&bl.a, &bl.b, &bl.c, &bl.d)
    }
}

/// Dispersion relation of the far-field operator at the given rest state:
/// lambda_pm(k) = (f'(u) - D(u) k^2 - eps^2 k^4)/(1 + a eps k^2) + i c k.
pub fn dispersion(k: f64, end: SaddleEnd, p: &ModelParams) -> C64 {
    let u = match end {
        SaddleEnd::PMinus => 1.0,
        SaddleEnd::PPlus => 0.0,
    };
    let num = model::reaction_prime(u, p)
        - model::diffusivity(u, p) * k * k
        - p.eps * p.eps * k.powi(4);
    let den = 1.0 + p.a * p.eps * k * k;
    C64::new(num / den, p.c * k)
}

/// Predicted spatial eigenvalues of the far-field matrices for large
/// |lambda|, in the original travelling-wave variable. For a = 0 these are
/// the four quartic roots of -lambda/eps^2; for a > 0 the fast pair
/// +-sqrt(a lambda / eps) and the slow pair +-1/sqrt(a eps).
pub fn asymptotic_spatial_eigs(lambda: C64, p: &ModelParams) -> Vec<C64> {
    let eps = p.eps;
    if p.a == 0.0 {
        let r = lambda.norm().powf(0.25) / eps.sqrt();
        let arg = lambda.arg();
        (0..4)
            .map(|m| C64::from_polar(r, (arg + std::f64::consts::PI * (1.0 + 2.0 * m as f64)) / 4.0))
            .collect()
    } else {
        let fast = (lambda * cr(p.a / eps)).sqrt();
        let slow = cr(1.0 / (p.a * eps).sqrt());
        vec![fast, -fast, slow, -slow]
    }
}

/// Graph chart of a complex 2-plane in C^4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Chart {
    /// (r, s) as a graph over (p, q): frame [I; W].
    Primary,
    /// (p, q) as a graph over (r, s): frame [V; I].
    Swapped,
}

/// State of the matrix Riccati flow: a plane in graph coordinates.
#[derive(Debug, Clone)]
pub struct RiccatiState {
    pub w: Mat2c,
    pub chart: Chart,
    pub z: f64,
    pub swaps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    Forward,
    Backward,
}

/// Relative size of det(T) against the square of the Frobenius norm.
fn det_scale(t: &Mat2c) -> f64 {
    let det = (t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)]).norm();
    let n2 = t.iter().map(|x| x.norm_sqr()).sum::<f64>();
    if n2 == 0.0 {
        0.0
    } else {
        det / n2
    }
}

fn mat2_inv(t: &Mat2c) -> Option<Mat2c> {
    let det = t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)];
    if det.norm() == 0.0 {
        return None;
    }
    Some(Mat2c::new(t[(1, 1)], -t[(0, 1)], -t[(1, 0)], t[(0, 0)]) / det)
}

/// Chordal-type distance between two planes given in graph charts.
fn plane_dist(a: (&Mat2c, Chart), b: (&Mat2c, Chart)) -> f64 {
    // orthonormalise frames and compare projectors
    let frame = |w: &Mat2c, chart: Chart| -> nalgebra::Matrix4x2<C64> {
        let mut f = nalgebra::Matrix4x2::<C64>::zeros();
        match chart {
            Chart::Primary => {
                f[(0, 0)] = cr(1.0);
                f[(1, 1)] = cr(1.0);
                for i in 0..2 {
                    for j in 0..2 {
                        f[(i + 2, j)] = w[(i, j)];
                    }
                }
            }
            Chart::Swapped => {
                for i in 0..2 {
                    for j in 0..2 {
                        f[(i, j)] = w[(i, j)];
                    }
                }
                f[(2, 0)] = cr(1.0);
                f[(3, 1)] = cr(1.0);
            }
        }
        // Gram-Schmidt
        let mut c0 = f.column(0).into_owned();
        c0 /= cr(c0.norm());
        let mut c1 = f.column(1).into_owned();
        let proj = c0.dotc(&c1);
        c1 -= c0 * proj;
        c1 /= cr(c1.norm());
        let mut out = nalgebra::Matrix4x2::<C64>::zeros();
        out.set_column(0, &c0);
        out.set_column(1, &c1);
        out
    };
    let fa = frame(a.0, a.1);
    let fb = frame(b.0, b.1);
    let overlap = fa.adjoint() * fb;
    let s = overlap.iter().map(|x| x.norm_sqr()).sum::<f64>();
    (2.0 - s).max(0.0).sqrt()
}

/// Riccati right-hand side in the current chart. In the primary chart
/// (planes as graphs of (r, s) over (p, q)) the flow is
/// W' = C + D W - W A - W B W; the swapped chart obeys the same equation
/// with the block roles (A, B, C, D) -> (D, C, B, A).
fn riccati_rhs(bl: &EigBlocks, w: &Mat2c, chart: Chart) -> Mat2c {
    match chart {
        Chart::Primary => bl.c + bl.d * w - w * bl.a - w * bl.b * w,
        Chart::Swapped => bl.b + bl.a * w - w * bl.d - w * bl.c * w,
    }
}

/// Sylvester factors of the Riccati Jacobian at W:
/// J(X) = P X - X Q with P = D - W B, Q = A + B W (chart-adjusted).
fn riccati_jac(bl: &EigBlocks, w: &Mat2c, chart: Chart) -> (Mat2c, Mat2c) {
    match chart {
        Chart::Primary => (bl.d - w * bl.b, bl.a + bl.b * w),
        Chart::Swapped => (bl.a - w * bl.c, bl.d + bl.c * w),
    }
}

/// Stage operator X -> X - alpha (P X - X Q) materialised on vec(X) and
/// LU-factored (4x4 complex).
struct StageOp {
    lu: nalgebra::LU<C64, nalgebra::U4, nalgebra::U4>,
}

impl StageOp {
    fn new(p: &Mat2c, q: &Mat2c, alpha: C64) -> StageOp {
        let mut m = Mat4c::zeros();
        for k in 0..2 {
            for l in 0..2 {
                let mut e = Mat2c::zeros();
                e[(k, l)] = cr(1.0);
                let img = e - (p * e - e * q) * alpha;
                let col = 2 * k + l;
                for i in 0..2 {
                    for j in 0..2 {
                        m[(2 * i + j, col)] = img[(i, j)];
                    }
                }
            }
        }
        StageOp { lu: nalgebra::LU::new(m) }
    }

    fn solve(&self, rhs: &Mat2c) -> Option<Mat2c> {
        let mut v = nalgebra::Vector4::<C64>::zeros();
        for i in 0..2 {
            for j in 0..2 {
                v[2 * i + j] = rhs[(i, j)];
            }
        }
        let sol = self.lu.solve(&v)?;
        let mut out = Mat2c::zeros();
        for k in 0..2 {
            for l in 0..2 {
                out[(k, l)] = sol[2 * k + l];
            }
        }
        Some(out)
    }
}

const TRBDF2_GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

fn frob(m: &Mat2c) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// One TR-BDF2 micro-step of the chart Riccati equation (L-stable, order 2)
/// with simplified-Newton stages. Returns None when the stage iteration
/// fails to contract (caller halves the step).
fn trbdf2_step(
    ctx: &EvansContext,
    lambda: C64,
    z: f64,
    h: f64,
    w: &Mat2c,
    chart: Chart,
) -> Option<Mat2c> {
    let g = TRBDF2_GAMMA;
    let bl_g = ctx.blocks(z + g * h, lambda);
    let bl_e = ctx.blocks(z + h, lambda);
    let f_n = riccati_rhs(&ctx.blocks(z, lambda), w, chart);
    let newton_tol = 1e-13;

    // trapezoidal stage to z + gamma h
    let (pj, qj) = riccati_jac(&bl_g, w, chart);
    let alpha1 = cr(0.5 * g * h);
    let op1 = StageOp::new(&pj, &qj, alpha1);
    let mut wg = *w + f_n * cr(g * h);
    let mut ok = false;
    for _ in 0..10 {
        let res = wg - w - (f_n + riccati_rhs(&bl_g, &wg, chart)) * alpha1;
        if frob(&res) < newton_tol * (1.0 + frob(&wg)) {
            ok = true;
            break;
        }
        wg -= op1.solve(&res)?;
    }
    if !ok {
        let res = wg - w - (f_n + riccati_rhs(&bl_g, &wg, chart)) * alpha1;
        if frob(&res) > 1e-9 * (1.0 + frob(&wg)) {
            return None;
        }
    }

    // BDF2 stage to z + h
    let d0 = g * (2.0 - g);
    let c_g = cr(1.0 / d0);
    let c_n = cr((1.0 - g) * (1.0 - g) / d0);
    let alpha2 = cr((1.0 - g) / (2.0 - g) * h);
    let (pj2, qj2) = riccati_jac(&bl_e, &wg, chart);
    let op2 = StageOp::new(&pj2, &qj2, alpha2);
    let base = wg * c_g - w * c_n;
    let mut we = wg + riccati_rhs(&bl_e, &wg, chart) * alpha2;
    ok = false;
    for _ in 0..10 {
        let res = we - base - riccati_rhs(&bl_e, &we, chart) * alpha2;
        if frob(&res) < newton_tol * (1.0 + frob(&we)) {
            ok = true;
            break;
        }
        we -= op2.solve(&res)?;
    }
    if !ok {
        let res = we - base - riccati_rhs(&bl_e, &we, chart) * alpha2;
        if frob(&res) > 1e-9 * (1.0 + frob(&we)) {
            return None;
        }
    }
    Some(we)
}

/// Integrate the Riccati flow from `start` to the target z with the
/// adaptive implicit (TR-BDF2) scheme: step-doubling error control on the
/// Grassmannian, local Richardson extrapolation, and chart swaps behind the
/// blow-up guard.
pub fn riccati_flow(
    ctx: &EvansContext,
    lambda: C64,
    start: &RiccatiState,
    z_target: f64,
) -> Result<RiccatiState, SpectralError> {
    let mut state = start.clone();
    let total = z_target - state.z;
    if total == 0.0 {
        return Ok(state);
    }
    let dir = total.signum();
    let mut h = (total.abs() / 64.0).min(0.25) * dir;
    let h_min = 1e-6 * ctx.eps;
    let swap_norm2 = 1.0 / ctx.chart_guard; // ||W||_F^2 beyond which the chart degenerates
    while (z_target - state.z) * dir > 1e-13 * total.abs().max(1.0) {
        if h.abs() > (z_target - state.z).abs() {
            h = z_target - state.z;
        }
        let full = trbdf2_step(ctx, lambda, state.z, h, &state.w, state.chart);
        let h2 = 0.5 * h;
        let half = trbdf2_step(ctx, lambda, state.z, h2, &state.w, state.chart)
            .and_then(|w1| trbdf2_step(ctx, lambda, state.z + h2, h2, &w1, state.chart));
        let (w_full, w_half) = match (full, half) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                h *= 0.25;
                if h.abs() < h_min {
                    return Err(SpectralError::StepUnderflow(state.z));
                }
                continue;
            }
        };
        let finite = w_full.iter().all(|x| x.re.is_finite() && x.im.is_finite())
            && w_half.iter().all(|x| x.re.is_finite() && x.im.is_finite());
        if !finite {
            h *= 0.25;
            if h.abs() < h_min {
                return Err(SpectralError::StepUnderflow(state.z));
            }
            continue;
        }
        let err = plane_dist((&w_full, state.chart), (&w_half, state.chart));
        if err <= ctx.step_tol {
            // local Richardson extrapolation of the order-2 pair
            state.w = w_half + (w_half - w_full) / cr(3.0);
            state.z += h;
            // Chart hygiene: once the graph matrix grows, the complementary
            // chart is used whenever it is strictly better conditioned; the
            // strict-improvement rule cannot ping-pong. Both charts huge at
            // once means the plane is degenerate in every graph (blow-up).
            let n = frob(&state.w);
            if n > 3.0 {
                if let Some(inv) = mat2_inv(&state.w) {
                    if frob(&inv) < n {
                        state.w = inv;
                        state.chart = match state.chart {
                            Chart::Primary => Chart::Swapped,
                            Chart::Swapped => Chart::Primary,
                        };
                        state.swaps += 1;
                    } else if n * n > swap_norm2 {
                        return Err(SpectralError::IrrecoverableBlowup(state.z));
                    }
                } else if n * n > swap_norm2 {
                    return Err(SpectralError::IrrecoverableBlowup(state.z));
                }
            }
            let grow = if err < 0.01 * ctx.step_tol { 2.0 } else { 1.4 };
            h = (h.abs() * grow).min(2.0) * dir;
        } else {
            let fac = (ctx.step_tol / err).powf(1.0 / 3.0) * 0.9;
            h *= fac.clamp(0.1, 0.7);
            if h.abs() < h_min {
                return Err(SpectralError::StepUnderflow(state.z));
            }
        }
    }
    Ok(state)
}

/// Graph coordinates of the unstable (for the forward flow) or stable (for
/// the backward flow) far-field subspace at the truncated endpoint.
pub fn boundary_state(
    ctx: &EvansContext,
    lambda: C64,
    direction: FlowDirection,
) -> Result<RiccatiState, SpectralError> {
    let (end, z, want_unstable) = match direction {
        FlowDirection::Forward => (SaddleEnd::PMinus, ctx.z_left, true),
        FlowDirection::Backward => (SaddleEnd::PPlus, ctx.z_right, false),
    };
    let m = ctx.matrix_at_end(end, lambda);
    let eigs = cxlinalg::eigenvalues4(&m);
    let mut picked: Vec<C64> = eigs
        .iter()
        .copied()
        .filter(|mu| (mu.re > 0.0) == want_unstable)
        .collect();
    if picked.len() != 2 {
        // fall back to selecting the two extreme real parts
        let mut sorted = eigs.to_vec();
        sorted.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        picked = if want_unstable {
            sorted[2..].to_vec()
        } else {
            sorted[..2].to_vec()
        };
    }
    let v1 = cxlinalg::eigenvector4(&m, picked[0]);
    let v2 = cxlinalg::eigenvector4(&m, picked[1]);
    let top = Mat2c::new(v1[0], v2[0], v1[1], v2[1]);
    let bottom = Mat2c::new(v1[2], v2[2], v1[3], v2[3]);
    let st = det_scale(&top);
    let sb = det_scale(&bottom);
    if st >= sb && st > 0.0 {
        let inv = mat2_inv(&top).ok_or(SpectralError::DegenerateSubspace)?;
        Ok(RiccatiState { w: bottom * inv, chart: Chart::Primary, z, swaps: 0 })
    } else if sb > 0.0 {
        let inv = mat2_inv(&bottom).ok_or(SpectralError::DegenerateSubspace)?;
        Ok(RiccatiState { w: top * inv, chart: Chart::Swapped, z, swaps: 1 })
    } else {
        Err(SpectralError::DegenerateSubspace)
    }
}

/// One Riccati-Evans evaluation.
#[derive(Debug, Clone)]
pub struct EvansSample {
    pub lambda: C64,
    pub value: C64,
    pub z0: f64,
    pub chart_swaps: usize,
    /// Magnitude scale of the two graph matrices at the matching section,
    /// for relative smallness tests.
    pub scale: f64,
}

/// Evaluate the Riccati-Evans function E(z0, lambda) = det(W+ - W-) with
/// both planes expressed in the primary chart at the matching section.
pub fn evans_value(ctx: &EvansContext, lambda: C64) -> Result<EvansSample, SpectralError> {
    let margin = ctx.essential_margin();
    if lambda.re <= margin {
        return Err(SpectralError::LambdaInEssentialMargin(lambda, margin));
    }
    let start_m = boundary_state(ctx, lambda, FlowDirection::Forward)?;
    let start_p = boundary_state(ctx, lambda, FlowDirection::Backward)?;
    let wm = riccati_flow(ctx, lambda, &start_m, ctx.z0)?;
    let wp = riccati_flow(ctx, lambda, &start_p, ctx.z0)?;
    let to_primary = |s: &RiccatiState| -> Result<Mat2c, SpectralError> {
        match s.chart {
            Chart::Primary => Ok(s.w),
            Chart::Swapped => mat2_inv(&s.w).ok_or(SpectralError::IrrecoverableBlowup(s.z)),
        }
    };
    let wpm = to_primary(&wm)?;
    let wpp = to_primary(&wp)?;
    let d = wpp - wpm;
    let value = d[(0, 0)] * d[(1, 1)] - d[(0, 1)] * d[(1, 0)];
    let scale = {
        let nm = wpm.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let np = wpp.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        (nm + np + 1.0).powi(2)
    };
    Ok(EvansSample {
        lambda,
        value,
        z0: ctx.z0,
        chart_swaps: wm.swaps + wp.swaps,
        scale,
    })
}

/// Closed sampling contour: semicircle of radius `r` opening into the right
/// half-plane, closed along the imaginary axis with a semicircular detour of
/// radius `r_detour` into the right half-plane around the origin.
pub fn semicircle_contour(r: f64, r_detour: f64, n: usize) -> Vec<C64> {
    let mut pts = Vec::with_capacity(n);
    let n_arc = n / 2;
    let n_leg = n / 5;
    let n_det = n - n_arc - 2 * n_leg;
    // arc from -i r to +i r through +r (counterclockwise)
    for i in 0..n_arc {
        let th = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * i as f64 / (n_arc - 1) as f64;
        pts.push(C64::from_polar(r, th));
    }
    // down the imaginary axis from +i r to +i r_detour (log spaced)
    let lg = (r / r_detour).ln();
    for i in 1..=n_leg {
        let t = lg * i as f64 / (n_leg + 1) as f64;
        pts.push(C64::new(0.0, r * (-t).exp()));
    }
    // detour around the origin through +r_detour
    for i in 0..n_det {
        let th = std::f64::consts::FRAC_PI_2
            - std::f64::consts::PI * i as f64 / (n_det - 1) as f64;
        pts.push(C64::from_polar(r_detour, th));
    }
    // back down the axis from -i r_detour to -i r
    for i in 1..=n_leg {
        let t = lg * i as f64 / (n_leg + 1) as f64;
        pts.push(C64::new(0.0, -r_detour * t.exp()));
    }
    pts
}

/// Circle contour for multiplicity counts.
pub fn circle_contour(center: C64, radius: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|i| {
            center
                + C64::from_polar(radius, 2.0 * std::f64::consts::PI * i as f64 / n as f64)
        })
        .collect()
}

/// Winding number of E(z0, .) along a closed contour, with adaptive
/// midpoint refinement until adjacent argument increments are below pi/2.
pub fn winding_number(
    ctx: &EvansContext,
    contour: &[C64],
) -> Result<(i64, Vec<EvansSample>), SpectralError> {
    let mut samples: Vec<EvansSample> = contour
        .par_iter()
        .map(|&l| evans_value(ctx, l))
        .collect::<Result<Vec<_>, _>>()?;
    for level in 0..=20 {
        // find gaps with large argument change
        let mut inserts: Vec<(usize, C64)> = Vec::new();
        let n = samples.len();
        for i in 0..n {
            let a = samples[i].value;
            let b = samples[(i + 1) % n].value;
            let dth = (b / a).arg().abs();
            if dth >= std::f64::consts::FRAC_PI_2 {
                let mid = (samples[i].lambda + samples[(i + 1) % n].lambda) * cr(0.5);
                inserts.push((i + 1, mid));
            }
        }
        if inserts.is_empty() {
            break;
        }
        if level == 20 {
            return Err(SpectralError::RefinementExhausted(level));
        }
        let new_samples: Vec<EvansSample> = inserts
            .par_iter()
            .map(|&(_, l)| evans_value(ctx, l))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, ((at, _), s)) in inserts.into_iter().zip(new_samples).enumerate().rev() {
            let _ = k;
            samples.insert(at, s);
        }
    }
    let mut total = 0.0;
    let n = samples.len();
    for i in 0..n {
        let a = samples[i].value;
        let b = samples[(i + 1) % n].value;
        total += (b / a).arg();
    }
    let winding = total / (2.0 * std::f64::consts::PI);
    debug_assert!(
        (winding - winding.round()).abs() < 1e-6,
        "winding {winding} not integral"
    );
    Ok((winding.round() as i64, samples))
}

/// CSV rendering of contour samples:
/// `re_lambda,im_lambda,re_E,im_E,chart_swaps`.
pub fn samples_to_csv(samples: &[EvansSample]) -> String {
    let mut out = String::from("re_lambda,im_lambda,re_E,im_E,chart_swaps\n");
    for s in samples {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            s.lambda.re, s.lambda.im, s.value.re, s.value.im, s.chart_swaps
        ));
    }
    out
}

/// A located point-spectrum eigenvalue.
#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueHit {
    pub lambda: f64,
    pub multiplicity: i64,
}

/// Combined point-spectrum report: real-axis scan plus contour windings.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<EigenvalueHit>,
    pub windings: Vec<(f64, i64)>,
    pub essential_margin: f64,
}

/// Real-axis sign scan combined with winding counts on semicircular
/// contours of the given radii.
pub fn point_spectrum_scan(
    ctx: &EvansContext,
    real_interval: (f64, f64),
    contour_radii: &[f64],
) -> Result<SpectrumReport, SpectralError> {
    let (lo, hi) = real_interval;
    let step = 1e-2;
    let n = ((hi - lo) / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let values: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&x| evans_value(ctx, cr(x)).map(|s| (x, s.value.re)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut eigenvalues = Vec::new();
    for w in values.windows(2) {
        let (x0, e0) = w[0];
        let (x1, e1) = w[1];
        if e0 == 0.0 || e0.signum() == e1.signum() {
            continue;
        }
        // bisection refinement to 1e-8
        let (mut a, mut b, mut ea) = (x0, x1, e0);
        while b - a > 1e-8 {
            let m = 0.5 * (a + b);
            let em = evans_value(ctx, cr(m))?.value.re;
            if em == 0.0 {
                a = m;
                b = m;
                break;
            }
            if em.signum() == ea.signum() {
                a = m;
                ea = em;
            } else {
                b = m;
            }
        }
        let root = 0.5 * (a + b);
        let (mult, _) = winding_number(ctx, &circle_contour(cr(root), 1e-3, 64))?;
        eigenvalues.push(EigenvalueHit { lambda: root, multiplicity: mult });
    }
    let mut windings = Vec::new();
    for &r in contour_radii {
        let contour = semicircle_contour(r, 1e-3, 720);
        let (w, _) = winding_number(ctx, &contour)?;
        windings.push((r, w));
    }
    Ok(SpectrumReport { eigenvalues, windings, essential_margin: ctx.essential_margin() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fullwave::{het_bvp_solve, BvpOptions};
    use crate::model::set_a;
    use crate::reduced::{singular_het_solve, Orientation, SolveOptions};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn set_a_wave() -> &'static (ModelParams, WaveProfile) {
        static WAVE: OnceLock<(ModelParams, WaveProfile)> = OnceLock::new();
        WAVE.get_or_init(|| {
            let p = set_a().with_a(0.5182);
            let opts = SolveOptions { c_bracket: (0.1, 0.3), ..Default::default() };
            let seed = singular_het_solve(0.5182, &p, Orientation::Invasion, &opts).unwrap();
            let wave = het_bvp_solve(&seed, 1e-4, &p, &BvpOptions::default()).unwrap();
            (p, wave)
        })
    }

    #[test]
    fn eig_matrix_structure() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        // affine dependence on lambda
        let z = 0.3;
        let l1 = C64::new(0.7, 0.4);
        let l2 = C64::new(-0.2, 1.1);
        let m = ctx.matrix(z, l1) + ctx.matrix(z, l2) - ctx.matrix(z, C64::new(0.0, 0.0));
        let m12 = ctx.matrix(z, l1 + l2);
        assert!((m - m12).iter().map(|x| x.norm()).fold(0.0_f64, f64::max) < 1e-10);

        // far-field limits equal the constant matrices built from u = 0, 1
        let ml = ctx.matrix(ctx.z_left - 10.0, l1);
        let mm = ctx.matrix_at_end(SaddleEnd::PMinus, l1);
        assert!((ml - mm).iter().map(|x| x.norm()).fold(0.0_f64, f64::max) < 1e-9);
        let mr = ctx.matrix(ctx.z_right + 10.0, l1);
        let mp = ctx.matrix_at_end(SaddleEnd::PPlus, l1);
        assert!((mr - mp).iter().map(|x| x.norm()).fold(0.0_f64, f64::max) < 1e-9);
    }

    #[test]
    fn translational_mode_annihilated_at_lambda_zero() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        let pe = p.with_eps(wave.eps).with_c(wave.wavespeed);
        // the z-derivative of the wave solves the lambda = 0 system; compare
        // the finite-difference derivative of the derivative field with M y
        let rhs = |z: f64, k: usize| -> f64 {
            // state from splines
            let s: Vec<CubicSpline> = (0..4)
                .map(|j| {
                    CubicSpline::new(
                        &wave.mesh,
                        &wave.states.iter().map(|st| st[j]).collect::<Vec<_>>(),
                    )
                })
                .collect();
            let y = [s[0].eval(z), s[1].eval(z), s[2].eval(z), s[3].eval(z)];
            let eps = pe.eps;
            let delta = pe.delta();
            match k {
                0 => y[1] / eps,
                1 => (y[3] + model::potential(y[0], &pe) - delta * y[1]) / eps,
                2 => model::reaction(y[0], &pe),
                _ => y[2] + pe.c * y[0],
            }
        };
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for &z in wave.mesh.iter().filter(|&&z| z.abs() < 5.0) {
            let h = 1e-6;
            let m = ctx.matrix(z, C64::new(0.0, 0.0));
            for k in 0..4 {
                let dy = (rhs(z + h, k) - rhs(z - h, k)) / (2.0 * h);
                let mut my = 0.0;
                for j in 0..4 {
                    my += m[(k, j)].re * rhs(z, j);
                }
                worst = worst.max((dy - my).abs());
                scale = scale.max(my.abs());
            }
        }
        assert!(worst / scale < 1e-2, "translational residual {worst:e} vs scale {scale:e}");
    }

    #[test]
    fn dispersion_values_and_negativity() {
        let p = set_a().with_a(0.5182).with_c(0.19826).with_eps(1e-4);
        assert_relative_eq!(dispersion(0.0, SaddleEnd::PPlus, &p).re, -1.0, epsilon = 1e-14);
        assert_relative_eq!(dispersion(0.0, SaddleEnd::PMinus, &p).re, -4.0, epsilon = 1e-14);
        for i in 0..=90 {
            let k = 10f64.powf(-3.0 + 9.0 * i as f64 / 90.0);
            for end in [SaddleEnd::PMinus, SaddleEnd::PPlus] {
                assert!(dispersion(k, end, &p).re < 0.0);
            }
        }
        // tail growth: quartic for a = 0, quadratic for a > 0
        let p0 = p.with_a(0.0);
        let (k1, k2) = (1e5, 1e6);
        let r0 = dispersion(k2, SaddleEnd::PPlus, &p0).re / dispersion(k1, SaddleEnd::PPlus, &p0).re;
        assert_relative_eq!(r0, 1e4, max_relative = 3e-2);
        let ra = dispersion(k2, SaddleEnd::PPlus, &p).re / dispersion(k1, SaddleEnd::PPlus, &p).re;
        assert_relative_eq!(ra, 1e2, max_relative = 1e-1);
        // asymptotic coefficient -(eps/a) k^2 in the viscous-weighted case
        assert_relative_eq!(
            dispersion(k2, SaddleEnd::PPlus, &p).re,
            -(p.eps / p.a) * k2 * k2,
            max_relative = 0.02
        );
    }

    #[test]
    fn asymptotic_eigs_match_dense_oracle() {
        // the leading-order formulas require |lambda| to dominate the
        // D(u)-dependent terms: D mu^2 <~ 0.01 eps^2 mu^4 needs
        // |lambda| >> 1e4 D^2/eps^2 for a = 0 and eps a |lambda| >> 100 D
        // for a > 0
        let (p, wave) = set_a_wave();
        for (a, radius) in [(0.0, 2e13), (p.a, 1e10)] {
            let pa = p.with_a(a).with_c(wave.wavespeed).with_eps(wave.eps);
            for &arg in &[0.0, 1.0, -0.8] {
                let lambda = C64::from_polar(radius, arg);
                let pred = asymptotic_spatial_eigs(lambda, &pa);
                // dense oracle: eigenvalues of the far-field matrix
                let wave_ctx = EvansContext::new(wave, &pa);
                let m = wave_ctx.matrix_at_end(SaddleEnd::PPlus, lambda);
                let eigs = cxlinalg::eigenvalues4(&m);
                for mu in pred {
                    let best = eigs
                        .iter()
                        .map(|e| (e - mu).norm() / mu.norm())
                        .fold(f64::INFINITY, f64::min);
                    assert!(best < 0.01, "a = {a}, arg = {arg}: mu = {mu} best rel err {best}");
                }
            }
        }
        // arg lambda = 0, a = 0: two predicted eigenvalues in each half-plane
        let pred = asymptotic_spatial_eigs(cr(1e6), &p.with_a(0.0).with_eps(1e-4));
        let pos = pred.iter().filter(|m| m.re > 0.0).count();
        assert_eq!(pos, 2);
    }

    #[test]
    fn frozen_coefficient_fixed_point() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        let lambda = cr(10.0);
        // backward flow from the right end keeps the stable graph fixed
        let start = boundary_state(&ctx, lambda, FlowDirection::Backward).unwrap();
        // freeze coefficients by flowing in the constant far-field region
        let mut moved = start.clone();
        moved.z = ctx.z_right + 200.0;
        let out = riccati_flow(&ctx, lambda, &moved, ctx.z_right + 190.0).unwrap();
        let d = plane_dist((&out.w, out.chart), (&start.w, start.chart));
        assert!(d < 1e-9, "frozen-coefficient drift {d:e}");
    }

    #[test]
    fn evans_zero_at_translational_eigenvalue() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        let s = evans_value(&ctx, cr(0.0)).unwrap();
        assert!(
            s.value.norm() < 1e-6 * s.scale,
            "E(0) = {} vs scale {}",
            s.value.norm(),
            s.scale
        );
    }

    #[test]
    fn evans_sign_change_at_secondary_eigenvalue() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        let e1 = evans_value(&ctx, cr(-0.81)).unwrap().value.re;
        let e2 = evans_value(&ctx, cr(-0.79)).unwrap().value.re;
        assert!(e1.signum() != e2.signum(), "E(-0.81) = {e1:e}, E(-0.79) = {e2:e}");
        // no further zeros between lambda_1 and the origin
        let mut prev: Option<f64> = None;
        for i in 0..=20 {
            let x = -0.74 + (0.73) * i as f64 / 20.0;
            let e = evans_value(&ctx, cr(x)).unwrap().value.re;
            assert!(e != 0.0);
            if let Some(pv) = prev {
                assert!(pv.signum() == e.signum(), "unexpected zero near {x}");
            }
            prev = Some(e);
        }
        // lambda far right stays in the primary chart
        let far = evans_value(&ctx, cr(10.0)).unwrap();
        assert_eq!(far.chart_swaps, 0);
    }

    #[test]
    fn winding_counts_enclosed_zeros() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        // small circle around the translational zero
        let (w0, _) = winding_number(&ctx, &circle_contour(cr(0.0), 1e-3, 64)).unwrap();
        assert_eq!(w0, 1);
        // contour enclosing both lambda_0 and lambda_1
        let (w2, _) = winding_number(&ctx, &circle_contour(cr(-0.4), 0.45, 128)).unwrap();
        assert_eq!(w2, 2);
        // semicircle with origin detour: no point spectrum inside
        let (ws, samples) = winding_number(&ctx, &semicircle_contour(1e3, 1e-3, 720)).unwrap();
        assert_eq!(ws, 0);
        let csv = samples_to_csv(&samples);
        assert!(csv.starts_with("re_lambda,im_lambda,re_E,im_E,chart_swaps\n"));
    }

    #[test]
    fn winding_robust_to_section_and_chart_guard() {
        let (p, wave) = set_a_wave();
        for u_level in [0.6, 0.8] {
            let z0 = wave.z_at_u(u_level).unwrap();
            let ctx = EvansContext::new(wave, p).with_z0(z0);
            let (w, _) = winding_number(&ctx, &circle_contour(cr(-0.4), 0.45, 128)).unwrap();
            assert_eq!(w, 2, "winding at section u = {u_level}");
        }
        // evans values are insensitive to the blow-up guard threshold
        let mut ctx1 = EvansContext::new(wave, p);
        ctx1.chart_guard = 1e-6;
        let mut ctx2 = EvansContext::new(wave, p);
        ctx2.chart_guard = 1e-5;
        for &l in &[C64::new(3.0, 2.0), C64::new(0.1, 50.0), cr(-0.5)] {
            let a = evans_value(&ctx1, l).unwrap().value;
            let b = evans_value(&ctx2, l).unwrap().value;
            assert!((a - b).norm() <= 1e-6 * a.norm().max(b.norm()));
        }
    }

    #[test]
    fn real_scan_finds_exactly_two_eigenvalues() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        let report = point_spectrum_scan(&ctx, (-0.9, 0.05), &[]).unwrap();
        assert_eq!(report.eigenvalues.len(), 2, "{:?}", report.eigenvalues);
        let l1 = report.eigenvalues[0].lambda;
        let l0 = report.eigenvalues[1].lambda;
        assert!(l1 > -0.81 && l1 < -0.79, "lambda_1 = {l1}");
        assert!(l0.abs() < 1e-6, "lambda_0 = {l0}");
        assert_eq!(report.eigenvalues[0].multiplicity, 1);
        assert_eq!(report.eigenvalues[1].multiplicity, 1);
    }

    #[test]
    fn lambda_inside_margin_rejected() {
        let (p, wave) = set_a_wave();
        let ctx = EvansContext::new(wave, p);
        assert!(matches!(
            evans_value(&ctx, cr(-1.5)),
            Err(SpectralError::LambdaInEssentialMargin(_, _))
        ));
    }
}
