//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)) with
//! dense output, event location, and trajectory recording.
//!
//! The slow/fast shooting problems in this crate are nonstiff at the scales
//! we integrate them on; the stiff Riccati flow has its own integrator in
//! the spectral module.

use nalgebra::SVector;
use thiserror::Error;

use crate::roots;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("integration exceeded the step budget ({0} steps)")]
    StepBudget(usize),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("integration span exhausted without firing an event (t = {0})")]
    SpanExhausted(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_initial: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_initial: None,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

/// A recorded solution: sample times, states and state derivatives.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<SVector<f64, N>>,
    pub dy: Vec<SVector<f64, N>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn new() -> Self {
        Self { t: Vec::new(), y: Vec::new(), dy: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> (f64, SVector<f64, N>) {
        (*self.t.last().unwrap(), *self.y.last().unwrap())
    }

    /// Cubic Hermite interpolation of the state at time `t` (clamped to the
    /// recorded span). Sample times may run in either direction.
    pub fn eval(&self, t: f64) -> SVector<f64, N> {
        let n = self.t.len();
        assert!(n >= 2, "trajectory too short to interpolate");
        let forward = self.t[n - 1] >= self.t[0];
        // binary search for the bracketing interval
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let before = if forward { self.t[mid] <= t } else { self.t[mid] >= t };
            if before {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, t1) = (self.t[lo], self.t[hi]);
        let h = t1 - t0;
        if h == 0.0 {
            return self.y[lo];
        }
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1, d0, d1) = (self.y[lo], self.y[hi], self.dy[lo], self.dy[hi]);
        let s2 = s * s;
        let s3 = s2 * s;
        y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * (h * (s3 - 2.0 * s2 + s))
            + y1 * (-2.0 * s3 + 3.0 * s2)
            + d1 * (h * (s3 - s2))
    }
}

/// Why `integrate` returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    /// Event function `k` crossed zero in the requested direction.
    Event(usize),
    /// The requested end time was reached.
    EndOfSpan,
}

/// Event direction filter for zero crossings of the event function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossDir {
    Any,
    Up,
    Down,
}

pub struct Event<'a, const N: usize> {
    pub g: Box<dyn Fn(f64, &SVector<f64, N>) -> f64 + 'a>,
    pub dir: CrossDir,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(g: impl Fn(f64, &SVector<f64, N>) -> f64 + 'a, dir: CrossDir) -> Self {
        Self { g: Box::new(g), dir }
    }
}

pub struct IntegrationResult<const N: usize> {
    pub traj: Trajectory<N>,
    pub reason: StopReason,
    pub t_end: f64,
    pub y_end: SVector<f64, N>,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense output weights (Hairer's CONTD5 construction).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct DenseStep<const N: usize> {
    t0: f64,
    h: f64,
    r: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    fn eval(&self, t: f64) -> SVector<f64, N> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        self.r[0] + (self.r[1] + (self.r[2] + (self.r[3] + self.r[4] * s1) * s) * s1) * s
    }
}

/// Integrate `y' = f(t, y)` from `t0` toward `t1` (either direction), stopping
/// at the first event crossing if any events are supplied.
///
/// The trajectory is recorded at every accepted step.
pub fn integrate<const N: usize>(
    f: &dyn Fn(f64, &SVector<f64, N>) -> SVector<f64, N>,
    t0: f64,
    y0: SVector<f64, N>,
    t1: f64,
    events: &[Event<N>],
    opts: &OdeOptions,
) -> Result<IntegrationResult<N>, OdeError> {
    let dir = (t1 - t0).signum();
    assert!(dir != 0.0, "empty integration span");
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    let mut traj = Trajectory::new();
    traj.t.push(t);
    traj.y.push(y);
    traj.dy.push(k1);

    let mut gvals: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();

    let scale0 = y.amax().max(1.0);
    let mut h = opts
        .h_initial
        .unwrap_or_else(|| {
            let d = k1.amax().max(1e-10);
            (1e-4 * scale0 / d).min((t1 - t0).abs() / 10.0)
        })
        .min(opts.h_max)
        .max(1e-300)
        * dir;

    let mut k = [SVector::<f64, N>::zeros(); 7];
    for step in 0..opts.max_steps {
        if step + 1 == opts.max_steps {
            return Err(OdeError::StepBudget(opts.max_steps));
        }
        let remaining = t1 - t;
        if remaining * dir <= 0.0 {
            return Ok(IntegrationResult { traj, reason: StopReason::EndOfSpan, t_end: t, y_end: y });
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        if h.abs() < (t.abs() + 1.0) * 1e-15 {
            return Err(OdeError::StepUnderflow(t));
        }

        // stages
        k[0] = k1;
        for i in 1..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = A[i][j];
                if a != 0.0 {
                    yi += kj * (a * h);
                }
            }
            k[i] = f(t + C[i] * h, &yi);
        }
        let mut y_new = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = A[6][j];
            if b != 0.0 {
                y_new += kj * (b * h);
            }
        }
        // The 7th stage was evaluated at (t+h, y_new) by construction (FSAL).
        let k7 = k[6];

        // error estimate
        let mut err: f64 = 0.0;
        for c in 0..N {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[c];
            }
            e *= h;
            let sc = opts.atol + opts.rtol * y[c].abs().max(y_new[c].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / N as f64).sqrt();

        if err <= 1.0 {
            // accepted; build the dense interpolant for event location
            let ydiff = y_new - y;
            let bspl = k[0] * h - ydiff;
            let mut r4 = SVector::<f64, N>::zeros();
            for (j, kj) in k.iter().enumerate() {
                if D[j] != 0.0 {
                    r4 += kj * D[j];
                }
            }
            let dense = DenseStep {
                t0: t,
                h,
                r: [y, ydiff, bspl, ydiff - k7 * h - bspl, r4 * h],
            };

            let t_new = t + h;
            // event check on this step
            let mut fired: Option<(usize, f64)> = None;
            for (idx, ev) in events.iter().enumerate() {
                let g_new = (ev.g)(t_new, &y_new);
                let g_old = gvals[idx];
                let crossed = match ev.dir {
                    CrossDir::Any => g_old.signum() != g_new.signum(),
                    CrossDir::Up => g_old < 0.0 && g_new >= 0.0,
                    CrossDir::Down => g_old > 0.0 && g_new <= 0.0,
                } && g_old != 0.0;
                if crossed {
                    let te = roots::brent(
                        |tt| Ok((ev.g)(tt, &dense.eval(tt))),
                        t,
                        t_new,
                        1e-14 * h.abs().max(1e-14),
                        200,
                    )
                    .unwrap_or(t_new);
                    match fired {
                        Some((_, tf)) if (te - t) * dir >= (tf - t) * dir => {}
                        _ => fired = Some((idx, te)),
                    }
                }
                gvals[idx] = g_new;
            }

            if let Some((idx, te)) = fired {
                let ye = dense.eval(te);
                traj.t.push(te);
                traj.y.push(ye);
                traj.dy.push(f(te, &ye));
                return Ok(IntegrationResult {
                    traj,
                    reason: StopReason::Event(idx),
                    t_end: te,
                    y_end: ye,
                });
            }

            t = t_new;
            y = y_new;
            k1 = k7;
            traj.t.push(t);
            traj.y.push(y);
            traj.dy.push(k1);

            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
            h = (h * fac).clamp(-opts.h_max, opts.h_max);
            if h == 0.0 {
                h = 1e-300 * dir;
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
            // refresh event baseline values are unchanged on rejection
        }
    }
    Err(OdeError::StepBudget(opts.max_steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;

    fn harmonic(_t: f64, y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(y[1], -y[0])
    }

    #[test]
    fn integrates_harmonic_oscillator() {
        let opts = OdeOptions::default();
        let res = integrate(&harmonic, 0.0, Vector2::new(1.0, 0.0), 10.0, &[], &opts).unwrap();
        assert_eq!(res.reason, StopReason::EndOfSpan);
        assert_relative_eq!(res.y_end[0], 10f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(res.y_end[1], -10f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn event_location_is_accurate() {
        // first downward zero of cos(t) is at t = pi/2
        let opts = OdeOptions::default();
        let ev = Event::new(|_t, y: &Vector2<f64>| y[0], CrossDir::Down);
        let res = integrate(&harmonic, 0.0, Vector2::new(1.0, 0.0), 10.0, &[ev], &opts).unwrap();
        assert_eq!(res.reason, StopReason::Event(0));
        assert_relative_eq!(res.t_end, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn backward_integration_works() {
        let opts = OdeOptions::default();
        let res = integrate(&harmonic, 0.0, Vector2::new(1.0, 0.0), -3.0, &[], &opts).unwrap();
        assert_relative_eq!(res.y_end[0], 3f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(res.y_end[1], 3f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn trajectory_interpolation_matches_solution() {
        let opts = OdeOptions::default();
        let res = integrate(&harmonic, 0.0, Vector2::new(1.0, 0.0), 6.0, &[], &opts).unwrap();
        for i in 0..=60 {
            let t = 0.1 * i as f64;
            assert_relative_eq!(res.traj.eval(t)[0], t.cos(), epsilon = 1e-6);
        }
    }
}
