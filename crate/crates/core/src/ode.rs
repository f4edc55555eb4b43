//! Radial reference ODEs for maps `r(t)·id` on the unit sphere.

use crate::error::{Error, Result};

/// Classical RK4 from `0` to `t_end` with step `dt`; the last step is
/// shortened to land on `t_end`. Stops early once `stop(r)` holds.
fn rk4(r0: f64, t_end: f64, dt: f64, rhs: impl Fn(f64) -> f64, stop: impl Fn(f64) -> bool) -> (f64, f64) {
    let mut r = r0;
    let mut t = 0.0;
    let n = (t_end / dt).floor() as usize;
    let mut steps: Vec<f64> = vec![dt; n];
    let rest = t_end - n as f64 * dt;
    if rest > 1e-14 * dt.max(t_end) {
        steps.push(rest);
    }
    for h in steps {
        let k1 = rhs(r);
        let k2 = rhs(r + 0.5 * h * k1);
        let k3 = rhs(r + 0.5 * h * k2);
        let k4 = rhs(r + h * k3);
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        if stop(r) {
            break;
        }
    }
    (r, t)
}

fn check(r0: f64, t_end: f64, dt: f64) -> Result<()> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidArgument(format!("r0 = {r0} must be positive")));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0, t_end ≥ 0 (dt {dt}, t_end {t_end})")));
    }
    Ok(())
}

/// `r' = n r (1 − r⁴)/(1 + r⁴)`: the radius of `r·id` under the flow into
/// the unit sphere with the inversion metric. `S^n` attracts.
pub fn scaling_ode_rhs(r: f64, n: usize) -> f64 {
    let r4 = r.powi(4);
    n as f64 * r * (1.0 - r4) / (1.0 + r4)
}

/// RK4 value of the scaling ODE at `t_end`.
pub fn scaling_ode_reference(r0: f64, n: usize, t_end: f64, dt: f64) -> Result<f64> {
    check(r0, t_end, dt)?;
    Ok(rk4(r0, t_end, dt, |r| scaling_ode_rhs(r, n), |_| false).0)
}

/// Values of the scaling ODE at `t = k·dt`, `k = 0..=steps`.
pub fn scaling_ode_trajectory(r0: f64, n: usize, dt: f64, steps: usize) -> Result<Vec<f64>> {
    check(r0, 0.0, dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut r = r0;
    out.push(r);
    for _ in 0..steps {
        r = rk4(r, dt, dt, |r| scaling_ode_rhs(r, n), |_| false).0;
        out.push(r);
    }
    Ok(out)
}

/// Radius growth beyond which [`unstable_extension_ode`] reports blow-up.
pub const BLOW_UP_RADIUS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnstableOutcome {
    pub r: f64,
    /// Time reached; less than `t_end` after a blow-up.
    pub t: f64,
    pub blew_up: bool,
}

/// `r' = −n r + n r²`, the radial ODE of the naive extension by the
/// closest-point projection. The sphere `r = 1` is a repeller; this exists
/// as a counterexample and is not used by the solver.
pub fn unstable_extension_ode(r0: f64, n: usize, t_end: f64, dt: f64) -> Result<UnstableOutcome> {
    check(r0, t_end, dt)?;
    let nf = n as f64;
    let (r, t) = rk4(
        r0,
        t_end,
        dt,
        |r| -nf * r + nf * r * r,
        |r| !(r.abs() <= BLOW_UP_RADIUS),
    );
    Ok(UnstableOutcome {
        r,
        t,
        blew_up: !(r.abs() <= BLOW_UP_RADIUS),
    })
}
