//! Dynamics residual for the planar 9-DOF body, and a numerically assembled
//! forward-dynamics oracle.
//!
//! The residual is recursive planar Newton-Euler projected onto the
//! generalized speeds (chosen as the coordinate rates): for each DOF the
//! generalized inertia-plus-gravity force of the subtree it moves, minus the
//! generalized applied forces (joint torque, ground reaction force through
//! the contact-point partial velocity). A dynamically consistent
//! (state, torque, force) tuple gives a zero residual in every component.
//!
//! Units: translational residual components are reported in body weights,
//! rotational components in body-weight x body-height, matching the force
//! normalization used everywhere else. Torque inputs are body-weight x
//! body-height, ground forces body-weight; the residual is linear in each of
//! the accelerations, torques, and contact forces.
//!
//! The forward-dynamics oracle assembles the mass matrix column-by-column
//! with unit-acceleration probes of the residual's linear dependence on the
//! accelerations and solves for consistent accelerations. It backs the test
//! suite and the synthetic trial generator; a computer-algebra derivation of
//! the same equations would be an offline alternative.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::body::{BodyConstants, SegmentId, Side};
use crate::contact::Grf;
use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics_lanes, q_ankle, q_hip, q_knee, BodyLanes, GeneralizedState, PointId,
    PointKinematics, State, GRAVITY, N_Q, Q_ROOT_ROT, Q_ROOT_X, Q_ROOT_Y, TAU_JOINTS,
};
use crate::scalar::Real;

/// Generalized-force imbalance per DOF: zero for consistent dynamics.
#[derive(Clone, Debug)]
pub struct KaneResidual {
    /// Body-weight (translations) / body-weight x body-height (rotations).
    pub r: [f64; N_Q],
}

impl KaneResidual {
    pub fn norm(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// External contact forces for one foot: force and application point. The
/// sliding contact model produces one entry; the two-point variant produces
/// two.
#[derive(Clone, Debug)]
pub struct FootContact<S> {
    pub force: Grf<S>,
    pub px: S,
    pub py: S,
}

/// Contact forces for both feet, left then right.
#[derive(Clone, Debug, Default)]
pub struct ContactForces<S> {
    pub left: Vec<FootContact<S>>,
    pub right: Vec<FootContact<S>>,
}

impl ContactForces<f64> {
    pub fn none() -> Self {
        Self {
            left: vec![],
            right: vec![],
        }
    }

    pub fn single(
        left: (f64, f64, f64, f64),
        right: (f64, f64, f64, f64),
    ) -> Self {
        let mk = |(fx, fy, px, py): (f64, f64, f64, f64)| FootContact {
            force: Grf { fx, fy },
            px,
            py,
        };
        Self {
            left: vec![mk(left)],
            right: vec![mk(right)],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.left.iter().chain(self.right.iter()).all(|c| {
            c.force.fx.is_finite() && c.force.fy.is_finite() && c.px.is_finite() && c.py.is_finite()
        })
    }

    fn for_side(&self, side: Side) -> &[FootContact<f64>] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

impl<S: Real> ContactForces<S> {
    pub fn side(&self, side: Side) -> &[FootContact<S>] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

fn leg_segments(side: Side) -> [SegmentId; 3] {
    [
        SegmentId::Thigh(side),
        SegmentId::Shank(side),
        SegmentId::Foot(side),
    ]
}

/// Moment of a subtree's inertia and gravity forces about a pivot, plus the
/// rotational inertia terms, per unit total body mass:
/// `sum_i I_i*alphadd_i + m_i*((x_i-Px)*(ydd_i+g) - (y_i-Py)*xdd_i)`.
fn subtree_moment<S: Real>(
    segs: &[SegmentId],
    fk: &BTreeMap<PointId, PointKinematics<S>>,
    body: &BodyLanes<S>,
    pivot: &PointKinematics<S>,
    gravity: f64,
) -> S {
    let mut acc = pivot.x.like(0.0);
    for seg in segs {
        let com = &fk[&PointId::SegCom(*seg)];
        let m = &body.mass_frac[seg.index()];
        let inertia = &body.inertia[seg.index()];
        let dx = com.x.sub(&pivot.x);
        let dy = com.y.sub(&pivot.y);
        let term = inertia.mul(&com.alphadd).add(&m.mul(
            &dx.mul(&com.ydd.shift(gravity)).sub(&dy.mul(&com.xdd)),
        ));
        acc = acc.add(&term);
    }
    acc
}

/// Moment of the applied contact forces about a pivot (per unit body mass,
/// SI): `sum_c (px-Px)*Fy - (py-Py)*Fx`, with forces scaled from body-weight
/// by g.
fn contact_moment<S: Real>(
    contacts: &[FootContact<S>],
    pivot: &PointKinematics<S>,
    gravity: f64,
) -> S {
    let mut acc = pivot.x.like(0.0);
    for c in contacts {
        let dx = c.px.sub(&pivot.x);
        let dy = c.py.sub(&pivot.y);
        acc = acc.add(&dx.mul(&c.force.fy).sub(&dy.mul(&c.force.fx)).scale(gravity));
    }
    acc
}

/// The residual in per-unit-body-mass SI units (N and N*m per unit mass),
/// before body-weight normalization. Torques in `state.tau` are
/// body-weight x body-height and converted internally.
pub fn kane_residual_si<S: Real>(
    state: &State<S>,
    fk: &BTreeMap<PointId, PointKinematics<S>>,
    body: &BodyLanes<S>,
    contacts: &ContactForces<S>,
    gravity: f64,
) -> [S; N_Q] {
    let zero = state.q[0].like(0.0);

    // Root translations: total momentum balance.
    let mut rx = zero.clone();
    let mut ry = zero.clone();
    for seg in SegmentId::ALL {
        let com = &fk[&PointId::SegCom(seg)];
        let m = &body.mass_frac[seg.index()];
        rx = rx.add(&m.mul(&com.xdd));
        ry = ry.add(&m.mul(&com.ydd.shift(gravity)));
    }
    for c in contacts.left.iter().chain(contacts.right.iter()) {
        rx = rx.sub(&c.force.fx.scale(gravity));
        ry = ry.sub(&c.force.fy.scale(gravity));
    }

    // Root rotation: whole-body moment about the root point.
    let root = PointKinematics {
        x: state.q[Q_ROOT_X].clone(),
        y: state.q[Q_ROOT_Y].clone(),
        xd: zero.clone(),
        yd: zero.clone(),
        xdd: zero.clone(),
        ydd: zero.clone(),
        alpha: zero.clone(),
        alphad: zero.clone(),
        alphadd: zero.clone(),
    };
    let mut rrot = subtree_moment(&SegmentId::ALL, fk, body, &root, gravity);
    for side in Side::BOTH {
        rrot = rrot.sub(&contact_moment(contacts.side(side), &root, gravity));
    }

    let mut out: [S; N_Q] = [
        rx,
        ry,
        rrot,
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
    ];

    // Joint equations: subtree moment about the joint pivot minus applied
    // torque and contact moments. Torque index order follows TAU_JOINTS.
    let tau_scale = body.height.scale(gravity);
    for side in Side::BOTH {
        let legs = leg_segments(side);
        let hip_pivot = &root;
        let knee_pivot = &fk[&PointId::Knee(side)];
        let ankle_pivot = &fk[&PointId::Ankle(side)];

        let tau_at = |q_idx: usize| -> S {
            let ti = TAU_JOINTS.iter().position(|j| *j == q_idx).unwrap();
            state.tau[ti].mul(&tau_scale)
        };

        let r_hip = subtree_moment(&legs, fk, body, hip_pivot, gravity)
            .sub(&contact_moment(contacts.side(side), hip_pivot, gravity))
            .sub(&tau_at(q_hip(side)));
        let r_knee = subtree_moment(&legs[1..], fk, body, knee_pivot, gravity)
            .sub(&contact_moment(contacts.side(side), knee_pivot, gravity))
            .sub(&tau_at(q_knee(side)));
        let r_ankle = subtree_moment(&legs[2..], fk, body, ankle_pivot, gravity)
            .sub(&contact_moment(contacts.side(side), ankle_pivot, gravity))
            .sub(&tau_at(q_ankle(side)));

        out[q_hip(side)] = r_hip;
        out[q_knee(side)] = r_knee;
        out[q_ankle(side)] = r_ankle;
    }
    out
}

/// Normalize an SI residual to body-weight / body-weight x body-height
/// units. With gravity zero the body-weight unit degenerates; the residual
/// is returned unscaled (per unit body mass) in that case.
pub fn normalize_residual<S: Real>(r_si: &[S; N_Q], body: &BodyLanes<S>, gravity: f64) -> [S; N_Q] {
    let f = if gravity != 0.0 { 1.0 / gravity } else { 1.0 };
    let mut out = r_si.clone();
    for (i, r) in out.iter_mut().enumerate() {
        *r = if i == Q_ROOT_X || i == Q_ROOT_Y {
            r.scale(f)
        } else {
            r.scale(f).div(&body.height)
        };
    }
    out
}

fn fk_full(state: &GeneralizedState, body: &BodyLanes<f64>) -> BTreeMap<PointId, PointKinematics<f64>> {
    forward_kinematics_lanes(state, body, &[])
}

/// Generalized-force residual for a state, body, and contact force set.
pub fn kane_residual(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
) -> Result<KaneResidual> {
    kane_residual_with_gravity(state, body, contacts, GRAVITY)
}

pub fn kane_residual_with_gravity(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
    gravity: f64,
) -> Result<KaneResidual> {
    if !state.is_finite() || !contacts.is_finite() {
        return Err(Error::invalid_input("non-finite dynamics input"));
    }
    let lanes = BodyLanes::from_body(body);
    let fk = fk_full(state, &lanes);
    let si = kane_residual_si(state, &fk, &lanes, contacts, gravity);
    Ok(KaneResidual {
        r: normalize_residual(&si, &lanes, gravity),
    })
}

fn residual_si_at(
    state: &GeneralizedState,
    lanes: &BodyLanes<f64>,
    contacts: &ContactForces<f64>,
    gravity: f64,
) -> [f64; N_Q] {
    let fk = fk_full(state, lanes);
    kane_residual_si(state, &fk, lanes, contacts, gravity)
}

/// Mass matrix (per unit body mass, SI) and bias vector at a configuration,
/// assembled by probing the residual's linear dependence on the
/// accelerations: column j is `r(e_j) - r(0)`, bias is `-r(0)`.
pub fn probe_mass_matrix(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
    gravity: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let lanes = BodyLanes::from_body(body);
    let mut base = state.clone();
    base.qdd = [0.0; N_Q];
    let r0 = residual_si_at(&base, &lanes, contacts, gravity);
    let mut m = DMatrix::zeros(N_Q, N_Q);
    for j in 0..N_Q {
        let mut probe = base.clone();
        probe.qdd[j] = 1.0;
        let rj = residual_si_at(&probe, &lanes, contacts, gravity);
        for i in 0..N_Q {
            m[(i, j)] = rj[i] - r0[i];
        }
    }
    (m, DVector::from_iterator(N_Q, r0.iter().map(|v| -v)))
}

/// Forward dynamics: consistent accelerations for the given state, torques
/// and contact forces. Test/generator oracle; not on the training path.
pub fn forward_dynamics_oracle(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
    gravity: f64,
) -> Result<[f64; N_Q]> {
    if !state.is_finite() || !contacts.is_finite() {
        return Err(Error::invalid_input("non-finite dynamics input"));
    }
    let (m, b) = probe_mass_matrix(state, body, contacts, gravity);
    let lu = m.lu();
    let qdd = lu
        .solve(&b)
        .ok_or_else(|| Error::DegenerateConfiguration("singular mass matrix".into()))?;
    let mut out = [0.0; N_Q];
    for i in 0..N_Q {
        out[i] = qdd[i];
    }
    Ok(out)
}

/// Root-block forward dynamics: joint accelerations prescribed, root
/// accelerations solved so the three root equations balance. Used by the
/// synthetic generator.
pub fn solve_root_accelerations(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
    gravity: f64,
) -> Result<[f64; 3]> {
    let lanes = BodyLanes::from_body(body);
    let mut base = state.clone();
    base.qdd[Q_ROOT_X] = 0.0;
    base.qdd[Q_ROOT_Y] = 0.0;
    base.qdd[Q_ROOT_ROT] = 0.0;
    let r0 = residual_si_at(&base, &lanes, contacts, gravity);
    let mut m = nalgebra::Matrix3::zeros();
    for j in 0..3 {
        let mut probe = base.clone();
        probe.qdd[j] = 1.0;
        let rj = residual_si_at(&probe, &lanes, contacts, gravity);
        for i in 0..3 {
            m[(i, j)] = rj[i] - r0[i];
        }
    }
    let b = nalgebra::Vector3::new(-r0[0], -r0[1], -r0[2]);
    let sol = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::DegenerateConfiguration("singular root mass block".into()))?;
    Ok([sol[0], sol[1], sol[2]])
}

/// Inverse dynamics for the actuated joints: the torques (body-weight x
/// body-height) that zero the six joint equations at the given accelerations
/// and contact forces.
pub fn joint_torques_for(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
    gravity: f64,
) -> [f64; 6] {
    let lanes = BodyLanes::from_body(body);
    let mut s = state.clone();
    s.tau = [0.0; 6];
    let r = residual_si_at(&s, &lanes, contacts, gravity);
    let mut tau = [0.0; 6];
    for (ti, qi) in TAU_JOINTS.iter().enumerate() {
        tau[ti] = r[*qi] / (gravity * body.total_height);
    }
    tau
}

/// Total mechanical energy per unit body mass (kinetic + gravitational).
pub fn mechanical_energy(state: &GeneralizedState, body: &BodyConstants, gravity: f64) -> f64 {
    let lanes = BodyLanes::from_body(body);
    let fk = fk_full(state, &lanes);
    let mut e = 0.0;
    for seg in SegmentId::ALL {
        let com = &fk[&PointId::SegCom(seg)];
        let m = body.segment(seg).mass_frac;
        let i = body.segment(seg).inertia;
        e += 0.5 * m * (com.xd * com.xd + com.yd * com.yd);
        e += 0.5 * i * com.alphad * com.alphad;
        e += m * gravity * com.y;
    }
    e
}

/// One RK4 step of the free dynamics (fixed torques and contact forces).
pub fn rk4_step(
    state: &GeneralizedState,
    body: &BodyConstants,
    contacts: &ContactForces<f64>,
    gravity: f64,
    dt: f64,
) -> Result<GeneralizedState> {
    let deriv = |s: &GeneralizedState| -> Result<([f64; N_Q], [f64; N_Q])> {
        let qdd = forward_dynamics_oracle(s, body, contacts, gravity)?;
        Ok((s.qd, qdd))
    };
    let apply = |s: &GeneralizedState, dq: &[f64; N_Q], dqd: &[f64; N_Q], h: f64| {
        let mut out = s.clone();
        for i in 0..N_Q {
            out.q[i] += h * dq[i];
            out.qd[i] += h * dqd[i];
        }
        out
    };
    let (k1q, k1v) = deriv(state)?;
    let s2 = apply(state, &k1q, &k1v, dt / 2.0);
    let (k2q, k2v) = deriv(&s2)?;
    let s3 = apply(state, &k2q, &k2v, dt / 2.0);
    let (k3q, k3v) = deriv(&s3)?;
    let s4 = apply(state, &k3q, &k3v, dt);
    let (k4q, k4v) = deriv(&s4)?;
    let mut out = state.clone();
    for i in 0..N_Q {
        out.q[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
        out.qd[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        out.qdd[i] = k1v[i];
    }
    Ok(out)
}
