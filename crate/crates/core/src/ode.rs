//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output
//! and sign-change event location.
//!
//! The state is a fixed-size array so that the right-hand sides used by the
//! shooting problems stay allocation free. Integration may run in either
//! direction; `t_end < t0` integrates backwards.

use crate::error::{KsError, Result};

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension coefficients (Hairer, Nørsett & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control parameters.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest admissible |h|.
    pub h_max: f64,
    /// Hard cap on accepted + rejected steps.
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Same tolerances scaled by `factor` (used for step-halving checks).
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            rtol: self.rtol * factor,
            atol: self.atol * factor,
            ..self
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::new(1e-12, 1e-14)
    }
}

/// One accepted step together with its interpolation polynomial.
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = r1[k] + theta * (r2[k] + theta1 * (r3[k] + theta * (r4[k] + theta1 * r5[k])));
        }
        out
    }

    fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h > 0.0 {
            (self.t0, self.t1())
        } else {
            (self.t1(), self.t0)
        };
        t >= lo && t <= hi
    }
}

/// Result of an integration: accepted nodes plus the dense output.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub segments: Vec<DenseSegment<N>>,
    /// Set when an event terminated the integration.
    pub event: Option<(f64, [f64; N])>,
    pub rejected_steps: usize,
}

impl<const N: usize> Trajectory<N> {
    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_final(&self) -> f64 {
        *self.t.last().expect("trajectory has at least one node")
    }

    pub fn y_final(&self) -> [f64; N] {
        *self.y.last().expect("trajectory has at least one node")
    }

    /// Dense evaluation anywhere in the integrated interval.
    pub fn eval(&self, t: f64) -> Option<[f64; N]> {
        if self.segments.is_empty() {
            return (t == self.t[0]).then(|| self.y[0]);
        }
        let forward = self.segments[0].h > 0.0;
        // Segments are ordered along the direction of integration.
        let idx = self.segments.partition_point(|s| {
            if forward {
                s.t1() < t
            } else {
                s.t1() > t
            }
        });
        let seg = self.segments.get(idx)?;
        seg.contains(t).then(|| seg.eval(t))
    }
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t_end`.
///
/// If `event` is given, integration stops at the first point where the
/// event function changes sign from positive to non-positive; the crossing
/// is refined by bisection on the dense output until `|g| <= event_tol` or
/// the bracket is at machine resolution.
pub fn integrate<const N: usize, F, G>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    tol: &Tolerances,
    mut event: Option<(G, f64)>,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]) -> f64,
{
    let span = t_end - t0;
    let dir = span.signum();
    let mut traj = Trajectory {
        t: vec![t0],
        y: vec![y0],
        segments: Vec::new(),
        event: None,
        rejected_steps: 0,
    };
    if span == 0.0 {
        return Ok(traj);
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let mut h = dir * initial_step(&mut rhs, t, &y, &k1, tol).min(span.abs()).min(tol.h_max);
    let mut g_prev = event.as_mut().map(|(g, _)| g(t, &y));
    let mut fac_old: f64 = 1e-4;
    let mut steps = 0usize;

    loop {
        steps += 1;
        if steps > tol.max_steps {
            return Err(KsError::Numerical(format!(
                "ODE integration exceeded {} steps at t = {t}",
                tol.max_steps
            )));
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }

        let mut ys = [0.0; N];
        for i in 0..N {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        let k2 = rhs(t + C2 * h, &ys);
        for i in 0..N {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        let k3 = rhs(t + C3 * h, &ys);
        for i in 0..N {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        let k4 = rhs(t + C4 * h, &ys);
        for i in 0..N {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        let k5 = rhs(t + C5 * h, &ys);
        for i in 0..N {
            ys[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let k6 = rhs(t + h, &ys);
        let mut y_new = [0.0; N];
        for i in 0..N {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let k7 = rhs(t + h, &y_new);

        let mut err = 0.0;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();

        if !err.is_finite() {
            h *= 0.1;
            traj.rejected_steps += 1;
            if h.abs() < 1e-300 {
                return Err(KsError::Numerical(format!("non-finite ODE state at t = {t}")));
            }
            continue;
        }

        // Lund-stabilised controller.
        let fac11 = err.powf(0.2 - 0.04 * 0.75);
        let mut fac = fac11 / fac_old.powf(0.04);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let h_new = h / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            let mut rcont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k7[i] - bspl;
                rcont[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            let seg = DenseSegment { t0: t, h, rcont };
            let t_new = t + h;

            if let Some((g, event_tol)) = event.as_mut() {
                let g_new = g(t_new, &y_new);
                let g_old = g_prev.expect("event value tracked");
                if g_old > 0.0 && g_new <= 0.0 {
                    let (te, ye) = locate_event(&seg, g, *event_tol, t, t_new, g_new);
                    // Truncate the final segment at the event.
                    traj.segments.push(seg);
                    traj.t.push(te);
                    traj.y.push(ye);
                    traj.event = Some((te, ye));
                    return Ok(traj);
                }
                g_prev = Some(g_new);
            }

            traj.segments.push(seg);
            traj.t.push(t_new);
            traj.y.push(y_new);
            t = t_new;
            y = y_new;
            k1 = k7;

            if (t - t_end) * dir >= 0.0 {
                return Ok(traj);
            }
            let limit = tol.h_max;
            h = dir * h_new.abs().min(limit);
        } else {
            traj.rejected_steps += 1;
            h /= fac11.clamp(1.0, 1.0 / 0.2) / 0.9;
        }
    }
}

fn locate_event<const N: usize, G>(
    seg: &DenseSegment<N>,
    g: &mut G,
    event_tol: f64,
    t_lo: f64,
    t_hi: f64,
    g_hi: f64,
) -> (f64, [f64; N])
where
    G: FnMut(f64, &[f64; N]) -> f64,
{
    // Invariant: g(lo) > 0, g(hi) <= 0.
    let (mut lo, mut hi) = (t_lo, t_hi);
    let mut y_hi = seg.eval(hi);
    let mut g_best = g_hi;
    for _ in 0..200 {
        if g_best.abs() <= event_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let ym = seg.eval(mid);
        let gm = g(mid, &ym);
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            y_hi = ym;
            g_best = gm;
        }
    }
    (hi, y_hi)
}

fn initial_step<const N: usize, F>(
    rhs: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    tol: &Tolerances,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    d0 = (d0 / N as f64).sqrt();
    d1 = (d1 / N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = [0.0; N];
    for i in 0..N {
        y1[i] = y[i] + h0 * f0[i];
    }
    let f1 = rhs(t + h0, &y1);
    let mut d2 = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    d2 = (d2 / N as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
