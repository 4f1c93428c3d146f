//! Sliding-point ground contact: a blend point between heel and toe driven
//! by the global foot angle, a smoothed spring-damper vertical force and a
//! friction-cone horizontal force.
//!
//! Conventions: the ground is the plane y = 0; penetration means negative y;
//! the reported vertical force is positive upward and in body-weight units.
//! The smoothing function for the unilateral spring is softplus,
//! `zeta(u) = ln(1 + e^u)`, which reproduces the intended smoothed contact
//! shape with the stated 1/beta scaling; this is an assumption, the source
//! material does not define zeta.
//!
//! The damping factor `(1 - b*v_y)` is floored at zero so the ground never
//! pulls down. The floor introduces one kink at `v_y = 1/b` (fast upward
//! motion during penetration), far outside normal gait; everywhere else the
//! force is C1 in both penetration and its rate.

use crate::body::{HEEL_FRACTION, TOE_FRACTION};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ground contact model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactParams {
    /// Smoothing sharpness of the unilateral spring (dimensionless).
    pub beta: f64,
    /// Vertical stiffness, body-weight per meter.
    pub stiffness_k: f64,
    /// Vertical damping, s/m (treated as dimensionless gain on v_y in m/s).
    pub damping_b: f64,
    /// Friction cone half-width.
    pub mu_max: f64,
    /// Gain mapping global foot angle to the heel-toe blend (rad^-1).
    pub blend_gain: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            beta: 300.0,
            stiffness_k: 100.0,
            damping_b: 0.75,
            mu_max: 0.5,
            blend_gain: 7.0,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        let pos = self.beta > 0.0
            && self.stiffness_k > 0.0
            && self.damping_b > 0.0
            && self.blend_gain > 0.0;
        if !pos {
            return Err(Error::invalid_input("contact parameters must be positive"));
        }
        if !(self.mu_max > 0.0 && self.mu_max <= 1.0) {
            return Err(Error::invalid_input("mu_max must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Flat parameter vector for network conditioning.
    pub fn as_vec(&self) -> [f64; 5] {
        [
            self.beta,
            self.stiffness_k,
            self.damping_b,
            self.mu_max,
            self.blend_gain,
        ]
    }
}

/// Separately estimated global ankle kinematics plus the friction logit for
/// one foot (decoded from the network's ground-contact channels).
#[derive(Clone, Debug)]
pub struct AnkleState<S> {
    pub x: S,
    pub y: S,
    pub alpha: S,
    pub xd: S,
    pub yd: S,
    pub alphad: S,
    /// Friction logit; the cone fraction is `mu_max * tanh(mu)`.
    pub mu: S,
}

/// A contact point with its velocity.
#[derive(Clone, Debug)]
pub struct ContactPoint<S> {
    pub x: S,
    pub y: S,
    pub xd: S,
    pub yd: S,
}

/// Planar ground reaction force in body-weight units.
#[derive(Clone, Debug)]
pub struct Grf<S> {
    pub fx: S,
    pub fy: S,
}

/// Heel-toe blend factor from the global foot angle:
/// `(tanh(gain * alpha) + 1) / 2`, 0 = heel, 1 = toe.
pub fn blend_factor<S: Real>(alpha: &S, gain: f64) -> S {
    alpha.scale(gain).tanh().shift(1.0).scale(0.5)
}

/// Sliding contact point between heel and toe for one foot.
///
/// The velocity includes the chain-rule term from the moving blend,
/// `dlambda/dalpha * alphad * (toe - heel)`, on top of the blended
/// endpoint velocities.
pub fn contact_point<S: Real>(
    ankle: &AnkleState<S>,
    foot_length: f64,
    params: &ContactParams,
) -> ContactPoint<S> {
    let ca = ankle.alpha.cos();
    let sa = ankle.alpha.sin();
    let heel_r = -HEEL_FRACTION * foot_length;
    let toe_r = TOE_FRACTION * foot_length;

    // Heel and toe positions and velocities from the ankle globals.
    let hx = ankle.x.add(&ca.scale(heel_r));
    let hy = ankle.y.add(&sa.scale(heel_r));
    let tx = ankle.x.add(&ca.scale(toe_r));
    let ty = ankle.y.add(&sa.scale(toe_r));
    let hxd = ankle.xd.sub(&sa.scale(heel_r).mul(&ankle.alphad));
    let hyd = ankle.yd.add(&ca.scale(heel_r).mul(&ankle.alphad));
    let txd = ankle.xd.sub(&sa.scale(toe_r).mul(&ankle.alphad));
    let tyd = ankle.yd.add(&ca.scale(toe_r).mul(&ankle.alphad));

    let lam = blend_factor(&ankle.alpha, params.blend_gain);
    // dlambda/dt = gain/2 * (1 - tanh^2) * alphad
    let th = ankle.alpha.scale(params.blend_gain).tanh();
    let lamd = th
        .square()
        .neg()
        .shift(1.0)
        .scale(0.5 * params.blend_gain)
        .mul(&ankle.alphad);

    let span_x = tx.sub(&hx);
    let span_y = ty.sub(&hy);
    ContactPoint {
        x: hx.add(&lam.mul(&span_x)),
        y: hy.add(&lam.mul(&span_y)),
        xd: hxd.add(&lam.mul(&txd.sub(&hxd))).add(&lamd.mul(&span_x)),
        yd: hyd.add(&lam.mul(&tyd.sub(&hyd))).add(&lamd.mul(&span_y)),
    }
}

/// Fixed heel and toe contact points (the two-contact-point variant used by
/// the experiment harness).
pub fn contact_points_dual<S: Real>(
    ankle: &AnkleState<S>,
    foot_length: f64,
) -> [ContactPoint<S>; 2] {
    let ca = ankle.alpha.cos();
    let sa = ankle.alpha.sin();
    let mk = |r: f64| ContactPoint {
        x: ankle.x.add(&ca.scale(r)),
        y: ankle.y.add(&sa.scale(r)),
        xd: ankle.xd.sub(&sa.scale(r).mul(&ankle.alphad)),
        yd: ankle.yd.add(&ca.scale(r).mul(&ankle.alphad)),
    };
    [
        mk(-HEEL_FRACTION * foot_length),
        mk(TOE_FRACTION * foot_length),
    ]
}

/// Ground reaction force at a contact point.
///
/// `F_y = k * softplus(-beta * p_y) * max(0, 1 - b * v_y) / beta`,
/// `F_x = mu_max * tanh(mu) * F_y`, both in body-weight units.
pub fn grf<S: Real>(point: &ContactPoint<S>, mu: &S, params: &ContactParams) -> Grf<S> {
    let spring = point
        .y
        .scale(-params.beta)
        .softplus()
        .scale(params.stiffness_k / params.beta);
    let damping = point.yd.scale(-params.damping_b).shift(1.0).relu();
    let fy = spring.mul(&damping);
    let fx = mu.tanh().scale(params.mu_max).mul(&fy);
    Grf { fx, fy }
}
