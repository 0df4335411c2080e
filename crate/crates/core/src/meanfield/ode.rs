//! Adaptive classical Runge–Kutta with step doubling and Hermite dense output.
//!
//! Each step is taken once with size `h` and twice with size `h/2`. The
//! difference estimates the local error of the two-half-step result, and the
//! accepted value is the Richardson extrapolation `y2 + (y2 - y1)/15`.

use crate::error::{Error, Result};

/// A first-order system `dy/dt = f(t, y)`.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// States for which this returns `false` are rejected and the step halved.
    fn admissible(&self, _y: &[f64]) -> bool {
        true
    }
}

/// Step control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Defaults to `1e-12 * (t_end - t0)`.
    pub min_step: Option<f64>,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            min_step: None,
            max_step: None,
            initial_step: None,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        OdeOptions {
            rtol,
            atol,
            ..Default::default()
        }
    }

    /// Steps of exactly `h` (the last one shortened), no error control.
    pub fn fixed(h: f64) -> Self {
        OdeOptions {
            rtol: f64::INFINITY,
            atol: f64::INFINITY,
            min_step: Some(0.0),
            max_step: Some(h),
            initial_step: Some(h),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0;
        if !(positive(self.rtol) || positive(self.atol)) || self.rtol < 0.0 || self.atol < 0.0 {
            return Err(Error::Parameter("tolerances must be nonnegative, not both zero".into()));
        }
        for (name, v) in [("max_step", self.max_step), ("initial_step", self.initial_step)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Accepted nodes with values and derivatives; cubic Hermite in between.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
    rejected: usize,
    rhs_evals: usize,
}

impl DenseTrajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn node_count(&self) -> usize {
        self.times.len()
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn rhs_evaluations(&self) -> usize {
        self.rhs_evals
    }

    pub fn node_value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_derivative(&self, k: usize) -> &[f64] {
        &self.derivs[k * self.dim..(k + 1) * self.dim]
    }

    /// Index `k` of the interval `[t_k, t_{k+1}]` containing `t`, clamped to the range.
    pub fn interval(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 || t <= self.times[0] {
            return 0;
        }
        if t >= self.times[n - 1] {
            return n - 2;
        }
        self.times.partition_point(|&x| x <= t) - 1
    }

    /// Hermite basis weights `(h00, h10·h, h01, h11·h)` at `t` in interval `k`.
    pub fn hermite_weights(&self, k: usize, t: f64) -> [f64; 4] {
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        [
            2.0 * s3 - 3.0 * s2 + 1.0,
            (s3 - 2.0 * s2 + s) * h,
            -2.0 * s3 + 3.0 * s2,
            (s3 - s2) * h,
        ]
    }

    /// Interpolated state at `t`, clamped to the integration interval.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.times.len() == 1 {
            out.copy_from_slice(self.node_value(0));
            return;
        }
        let k = self.interval(t);
        let [a, b, c, d] = self.hermite_weights(k, t);
        let (y0, f0) = (self.node_value(k), self.node_derivative(k));
        let (y1, f1) = (self.node_value(k + 1), self.node_derivative(k + 1));
        for (idx, o) in out.iter_mut().enumerate() {
            *o = a * y0[idx] + b * f0[idx] + c * y1[idx] + d * f1[idx];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

fn rk4_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    out: &mut [f64],
    work: &mut [Vec<f64>; 4],
) {
    let [k2, k3, k4, tmp] = work;
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    sys.rhs(t + 0.5 * h, tmp, k2);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    sys.rhs(t + 0.5 * h, tmp, k3);
    for i in 0..y.len() {
        tmp[i] = y[i] + h * k3[i];
    }
    sys.rhs(t + h, tmp, k4);
    for i in 0..y.len() {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates from `t0` to `t_end`, keeping every accepted node for dense output.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<DenseTrajectory> {
    let mut traj = DenseTrajectory {
        dim: sys.dim(),
        times: Vec::new(),
        values: Vec::new(),
        derivs: Vec::new(),
        rejected: 0,
        rhs_evals: 0,
    };
    let stats = integrate_with(sys, y0, t0, t_end, opts, |t, y, f| {
        traj.times.push(t);
        traj.values.extend_from_slice(y);
        traj.derivs.extend_from_slice(f);
    })?;
    traj.rejected = stats.rejected;
    traj.rhs_evals = stats.rhs_evals;
    Ok(traj)
}

/// Step statistics of one integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Integrates from `t0` to `t_end`, handing each accepted node `(t, y, dy/dt)`
/// (the initial one included) to `visit` instead of storing it.
pub fn integrate_with<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    opts: &OdeOptions,
    mut visit: impl FnMut(f64, &[f64], &[f64]),
) -> Result<StepStats> {
    opts.validate()?;
    let dim = sys.dim();
    if y0.len() != dim {
        return Err(Error::Input(format!(
            "initial state has length {}, system dimension is {dim}",
            y0.len()
        )));
    }
    if !(t0.is_finite() && t_end.is_finite() && t_end >= t0) {
        return Err(Error::Parameter(format!(
            "invalid time interval [{t0}, {t_end}]"
        )));
    }
    let span = t_end - t0;
    let min_step = opts.min_step.unwrap_or(1e-12 * span);
    let max_step = opts.max_step.unwrap_or(span).min(span.max(f64::MIN_POSITIVE));

    let mut y = y0.to_vec();
    let mut f = vec![0.0; dim];
    sys.rhs(t0, &y, &mut f);
    visit(t0, &y, &f);
    let mut stats = StepStats {
        accepted: 0,
        rejected: 0,
        rhs_evals: 1,
    };
    if span == 0.0 {
        return Ok(stats);
    }

    let mut h = opts.initial_step.unwrap_or(span / 100.0).min(max_step);
    let mut t = t0;
    let mut work = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut full = vec![0.0; dim];
    let mut half = vec![0.0; dim];
    let mut two_half = vec![0.0; dim];
    let mut f_mid = vec![0.0; dim];

    while t < t_end {
        let last = t + h >= t_end - 1e-12 * span;
        let step = if last { t_end - t } else { h };

        rk4_step(sys, t, &y, &f, step, &mut full, &mut work);
        rk4_step(sys, t, &y, &f, 0.5 * step, &mut half, &mut work);
        sys.rhs(t + 0.5 * step, &half, &mut f_mid);
        rk4_step(sys, t + 0.5 * step, &half, &f_mid, 0.5 * step, &mut two_half, &mut work);
        stats.rhs_evals += 11;

        let mut err: f64 = 0.0;
        let mut finite = true;
        for i in 0..dim {
            let diff = two_half[i] - full[i];
            let corrected = two_half[i] + diff / 15.0;
            if !corrected.is_finite() {
                finite = false;
            }
            let scale = opts.atol + opts.rtol * y[i].abs().max(two_half[i].abs());
            let e = diff.abs() / (15.0 * scale);
            if e.is_nan() {
                finite = false;
            } else {
                err = err.max(e);
            }
            two_half[i] = corrected;
        }
        let admissible = finite && sys.admissible(&two_half);
        if admissible && err <= 1.0 {
            t = if last { t_end } else { t + step };
            std::mem::swap(&mut y, &mut two_half);
            sys.rhs(t, &y, &mut f);
            stats.rhs_evals += 1;
            stats.accepted += 1;
            visit(t, &y, &f);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (step * factor).min(max_step);
        } else {
            stats.rejected += 1;
            let factor = if admissible {
                (0.9 * err.powf(-0.2)).clamp(0.2, 0.5)
            } else {
                0.5
            };
            h = step * factor;
            if h < min_step || h == 0.0 || t + h == t {
                return Err(Error::Integration {
                    t,
                    step: h,
                    min_step,
                });
            }
        }
    }
    Ok(stats)
}
