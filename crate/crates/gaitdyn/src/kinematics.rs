//! Global point kinematics along the kinematic chain and virtual IMU
//! synthesis.
//!
//! Everything here is generic over [`Real`], so the same code runs on plain
//! `f64` (oracles, synthetic generator, streaming inference) and on tape
//! tensors during training.
//!
//! Conventions (fixed once, asserted by tests):
//! - Sagittal plane, x forward, y up; angles counterclockwise-positive.
//! - Root coordinates locate the hip joint; both hip points coincide there.
//! - Trunk axis points up (+y in the trunk frame at zero rotation), thigh and
//!   shank axes point down to the next joint, the foot axis points forward
//!   with heel behind and toe ahead of the ankle.
//! - A joint point carries the angle channels of the segment distal to it
//!   (the ankle point carries the foot angle).
//! - The planar gyro reads positive for counterclockwise rotation.

use std::collections::BTreeMap;

use crate::body::{BodyConstants, ImuPlacement, SegmentId, SensorId, Side, HEEL_FRACTION, TOE_FRACTION};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const GRAVITY: f64 = 9.81;

/// Number of generalized coordinates.
pub const N_Q: usize = 9;
/// Number of actuated joints.
pub const N_TAU: usize = 6;

/// Indices into the generalized coordinate vector.
pub const Q_ROOT_X: usize = 0;
pub const Q_ROOT_Y: usize = 1;
pub const Q_ROOT_ROT: usize = 2;
pub const Q_HIP_L: usize = 3;
pub const Q_HIP_R: usize = 4;
pub const Q_KNEE_L: usize = 5;
pub const Q_KNEE_R: usize = 6;
pub const Q_ANKLE_L: usize = 7;
pub const Q_ANKLE_R: usize = 8;

pub fn q_hip(side: Side) -> usize {
    match side {
        Side::Left => Q_HIP_L,
        Side::Right => Q_HIP_R,
    }
}
pub fn q_knee(side: Side) -> usize {
    match side {
        Side::Left => Q_KNEE_L,
        Side::Right => Q_KNEE_R,
    }
}
pub fn q_ankle(side: Side) -> usize {
    match side {
        Side::Left => Q_ANKLE_L,
        Side::Right => Q_ANKLE_R,
    }
}

/// Torque vector order; index i actuates joint `TAU_JOINTS[i]`.
pub const TAU_JOINTS: [usize; N_TAU] = [Q_HIP_L, Q_HIP_R, Q_KNEE_L, Q_KNEE_R, Q_ANKLE_L, Q_ANKLE_R];

/// Generalized state: coordinates, velocities, accelerations, joint torques.
///
/// The horizontal root channel `q[0]` stores integrated horizontal root
/// velocity (a position after integration); the dynamics never reads it.
/// Torques are body-weight x body-height normalized.
#[derive(Clone, Debug)]
pub struct State<S> {
    pub q: [S; N_Q],
    pub qd: [S; N_Q],
    pub qdd: [S; N_Q],
    pub tau: [S; N_TAU],
}

/// Concrete state for oracles and tests.
pub type GeneralizedState = State<f64>;

impl GeneralizedState {
    pub fn zero() -> Self {
        State {
            q: [0.0; N_Q],
            qd: [0.0; N_Q],
            qdd: [0.0; N_Q],
            tau: [0.0; N_TAU],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite())
            && self.qd.iter().all(|v| v.is_finite())
            && self.qdd.iter().all(|v| v.is_finite())
            && self.tau.iter().all(|v| v.is_finite())
    }

    /// Swap left and right legs (joint angles, rates, torques).
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for arr in [&mut out.q, &mut out.qd, &mut out.qdd] {
            arr.swap(Q_HIP_L, Q_HIP_R);
            arr.swap(Q_KNEE_L, Q_KNEE_R);
            arr.swap(Q_ANKLE_L, Q_ANKLE_R);
        }
        out.tau.swap(0, 1);
        out.tau.swap(2, 3);
        out.tau.swap(4, 5);
        out
    }
}

/// Global kinematics of one point: position, angle, and their first and
/// second derivatives.
#[derive(Clone, Debug)]
pub struct PointKinematics<S> {
    pub x: S,
    pub xd: S,
    pub xdd: S,
    pub y: S,
    pub yd: S,
    pub ydd: S,
    pub alpha: S,
    pub alphad: S,
    pub alphadd: S,
}

pub type Point = PointKinematics<f64>;

impl Point {
    pub fn at_rest(x: f64, y: f64) -> Point {
        PointKinematics {
            x,
            xd: 0.0,
            xdd: 0.0,
            y,
            yd: 0.0,
            ydd: 0.0,
            alpha: 0.0,
            alphad: 0.0,
            alphadd: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.xd,
            self.xdd,
            self.y,
            self.yd,
            self.ydd,
            self.alpha,
            self.alphad,
            self.alphadd,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Propagate a point along the chain: the new point sits at offset
/// `(dx, dy)` expressed in the parent frame, and its angle channels are the
/// parent's plus the local joint state.
pub fn propagate_point<S: Real>(
    parent: &PointKinematics<S>,
    dx: &S,
    dy: &S,
    local_angle_state: (&S, &S, &S),
) -> PointKinematics<S> {
    let (la, lad, ladd) = local_angle_state;
    let ca = parent.alpha.cos();
    let sa = parent.alpha.sin();

    // Rotated offset, reused by every channel.
    let rx = ca.mul(dx).sub(&sa.mul(dy)); //  cos*dx - sin*dy
    let ry = sa.mul(dx).add(&ca.mul(dy)); //  sin*dx + cos*dy

    let x = parent.x.add(&rx);
    let y = parent.y.add(&ry);
    // d/dt of the rotated offset: alphad * perp(rotated offset).
    let xd = parent.xd.sub(&ry.mul(&parent.alphad));
    let yd = parent.yd.add(&rx.mul(&parent.alphad));
    // Centripetal plus angular acceleration terms.
    let w2 = parent.alphad.square();
    let xdd = parent
        .xdd
        .sub(&rx.mul(&w2))
        .sub(&ry.mul(&parent.alphadd));
    let ydd = parent
        .ydd
        .sub(&ry.mul(&w2))
        .add(&rx.mul(&parent.alphadd));

    PointKinematics {
        x,
        xd,
        xdd,
        y,
        yd,
        ydd,
        alpha: parent.alpha.add(la),
        alphad: parent.alphad.add(lad),
        alphadd: parent.alphadd.add(ladd),
    }
}

/// Points emitted by forward kinematics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointId {
    Hip(Side),
    Knee(Side),
    Ankle(Side),
    Heel(Side),
    Toe(Side),
    SegCom(SegmentId),
    Imu(SensorId),
}

/// Body constants as lane scalars, for paths where they must be
/// differentiable (placement and body-parameter gradients).
#[derive(Clone, Debug)]
pub struct BodyLanes<S> {
    /// Segment lengths indexed by `SegmentId::index()`.
    pub length: [S; 7],
    /// CoM offsets from the proximal joint.
    pub com_offset: [S; 7],
    /// Mass fractions of total body mass.
    pub mass_frac: [S; 7],
    /// Moments of inertia about the CoM per unit total body mass.
    pub inertia: [S; 7],
    /// Subject height (for body-weight x body-height torque units).
    pub height: S,
}

impl BodyLanes<f64> {
    pub fn from_body(body: &BodyConstants) -> Self {
        BodyLanes {
            length: SegmentId::ALL.map(|s| body.segment(s).length),
            com_offset: SegmentId::ALL.map(|s| body.segment(s).com_offset),
            mass_frac: SegmentId::ALL.map(|s| body.segment(s).mass_frac),
            inertia: SegmentId::ALL.map(|s| body.segment(s).inertia),
            height: body.total_height,
        }
    }
}

impl<S: Real> BodyLanes<S> {
    pub fn lift(body: &BodyConstants, template: &S) -> Self {
        BodyLanes {
            length: SegmentId::ALL.map(|s| template.like(body.segment(s).length)),
            com_offset: SegmentId::ALL.map(|s| template.like(body.segment(s).com_offset)),
            mass_frac: SegmentId::ALL.map(|s| template.like(body.segment(s).mass_frac)),
            inertia: SegmentId::ALL.map(|s| template.like(body.segment(s).inertia)),
            height: template.like(body.total_height),
        }
    }
}

/// Sensor mounts as lane scalars (differentiable for placement optimization).
#[derive(Clone, Debug)]
pub struct MountLanes<S> {
    pub sensor: SensorId,
    pub dx: S,
    pub dy: S,
    pub angle: S,
}

pub fn mounts_from_placement(placement: &ImuPlacement) -> Vec<MountLanes<f64>> {
    placement
        .mounts
        .iter()
        .map(|(id, m)| MountLanes {
            sensor: *id,
            dx: m.dx,
            dy: m.dy,
            angle: m.angle,
        })
        .collect()
}

/// Forward kinematics for the whole chain.
///
/// Chain order: the root point (hip, trunk frame) first, then per leg
/// hip -> knee -> ankle -> (heel, toe), with segment CoM and sensor points
/// emitted where their segment starts.
pub fn forward_kinematics_lanes<S: Real>(
    state: &State<S>,
    body: &BodyLanes<S>,
    mounts: &[MountLanes<S>],
) -> BTreeMap<PointId, PointKinematics<S>> {
    let zero = state.q[0].like(0.0);
    let mut out = BTreeMap::new();

    // Root point in the trunk frame.
    let root = PointKinematics {
        x: state.q[Q_ROOT_X].clone(),
        xd: state.qd[Q_ROOT_X].clone(),
        xdd: state.qdd[Q_ROOT_X].clone(),
        y: state.q[Q_ROOT_Y].clone(),
        yd: state.qd[Q_ROOT_Y].clone(),
        ydd: state.qdd[Q_ROOT_Y].clone(),
        alpha: state.q[Q_ROOT_ROT].clone(),
        alphad: state.qd[Q_ROOT_ROT].clone(),
        alphadd: state.qdd[Q_ROOT_ROT].clone(),
    };

    // Trunk CoM sits up the trunk axis.
    let trunk_com = propagate_point(
        &root,
        &zero,
        &body.com_offset[SegmentId::Trunk.index()],
        (&zero, &zero, &zero),
    );
    out.insert(PointId::SegCom(SegmentId::Trunk), trunk_com);

    for m in mounts {
        if m.sensor == SensorId::Pelvis {
            out.insert(
                PointId::Imu(SensorId::Pelvis),
                propagate_mount(&root, m),
            );
        }
    }

    for side in Side::BOTH {
        let thigh = SegmentId::Thigh(side);
        let shank = SegmentId::Shank(side);
        let foot = SegmentId::Foot(side);

        // Hip point switched into the thigh frame.
        let hip = propagate_point(
            &root,
            &zero,
            &zero,
            (
                &state.q[q_hip(side)],
                &state.qd[q_hip(side)],
                &state.qdd[q_hip(side)],
            ),
        );
        out.insert(
            PointId::SegCom(thigh),
            propagate_point(
                &hip,
                &zero,
                &body.com_offset[thigh.index()].neg(),
                (&zero, &zero, &zero),
            ),
        );
        for m in mounts {
            if m.sensor == SensorId::Thigh(side) {
                out.insert(PointId::Imu(m.sensor), propagate_mount(&hip, m));
            }
        }

        // Knee point in the shank frame.
        let knee = propagate_point(
            &hip,
            &zero,
            &body.length[thigh.index()].neg(),
            (
                &state.q[q_knee(side)],
                &state.qd[q_knee(side)],
                &state.qdd[q_knee(side)],
            ),
        );
        out.insert(
            PointId::SegCom(shank),
            propagate_point(
                &knee,
                &zero,
                &body.com_offset[shank.index()].neg(),
                (&zero, &zero, &zero),
            ),
        );
        for m in mounts {
            if m.sensor == SensorId::Shank(side) {
                out.insert(PointId::Imu(m.sensor), propagate_mount(&knee, m));
            }
        }

        // Ankle point in the foot frame.
        let ankle = propagate_point(
            &knee,
            &zero,
            &body.length[shank.index()].neg(),
            (
                &state.q[q_ankle(side)],
                &state.qd[q_ankle(side)],
                &state.qdd[q_ankle(side)],
            ),
        );
        let foot_len = &body.length[foot.index()];
        let heel = propagate_point(
            &ankle,
            &foot_len.scale(-HEEL_FRACTION),
            &zero,
            (&zero, &zero, &zero),
        );
        let toe = propagate_point(
            &ankle,
            &foot_len.scale(TOE_FRACTION),
            &zero,
            (&zero, &zero, &zero),
        );
        // Foot CoM measured from the heel (proximal end) toward the toe.
        let foot_com_dx = body.com_offset[foot.index()].sub(&foot_len.scale(HEEL_FRACTION));
        out.insert(
            PointId::SegCom(foot),
            propagate_point(&ankle, &foot_com_dx, &zero, (&zero, &zero, &zero)),
        );
        for m in mounts {
            if m.sensor == SensorId::Foot(side) {
                out.insert(PointId::Imu(m.sensor), propagate_mount(&ankle, m));
            }
        }

        out.insert(PointId::Hip(side), hip);
        out.insert(PointId::Knee(side), knee);
        out.insert(PointId::Ankle(side), ankle);
        out.insert(PointId::Heel(side), heel);
        out.insert(PointId::Toe(side), toe);
    }

    out
}

fn propagate_mount<S: Real>(
    parent: &PointKinematics<S>,
    m: &MountLanes<S>,
) -> PointKinematics<S> {
    let zero = m.dx.like(0.0);
    // The mounting angle rotates the sensor case, not the chain.
    propagate_point(parent, &m.dx, &m.dy, (&m.angle, &zero, &zero))
}

/// Forward kinematics on plain f64 state and placement.
pub fn forward_kinematics(
    state: &GeneralizedState,
    body: &BodyConstants,
    placement: &ImuPlacement,
) -> Result<BTreeMap<PointId, Point>> {
    if !state.is_finite() {
        return Err(Error::invalid_input("non-finite state"));
    }
    placement.validate()?;
    let lanes = BodyLanes::from_body(body);
    let mounts = mounts_from_placement(placement);
    Ok(forward_kinematics_lanes(state, &lanes, &mounts))
}

/// One planar IMU reading: local accelerations and angular rate.
#[derive(Clone, Debug)]
pub struct ImuReading<S> {
    pub ax: S,
    pub ay: S,
    pub omega: S,
}

/// Rotate a sensor point's kinematics into the sensor frame. Gravity is
/// added so a static upright sensor reads +1 g on its local y axis:
/// `a_local = R(-(alpha)) * (xdd, ydd + g)`, `omega = alphad`. The sensor
/// point's angle channels already include the mounting angle.
pub fn virtual_imu_reading<S: Real>(point: &PointKinematics<S>, gravity: f64) -> ImuReading<S> {
    let ct = point.alpha.cos();
    let st = point.alpha.sin();
    let ay_world = point.ydd.shift(gravity);
    ImuReading {
        ax: ct.mul(&point.xdd).add(&st.mul(&ay_world)),
        ay: st.neg().mul(&point.xdd).add(&ct.mul(&ay_world)),
        omega: point.alphad.clone(),
    }
}

/// Virtual IMU signals for every configured sensor, from an FK result.
pub fn virtual_imu(
    fk: &BTreeMap<PointId, Point>,
    placement: &ImuPlacement,
    gravity: f64,
) -> Result<BTreeMap<SensorId, ImuReading<f64>>> {
    let mut out = BTreeMap::new();
    for (id, _) in &placement.mounts {
        let point = fk
            .get(&PointId::Imu(*id))
            .ok_or_else(|| Error::invalid_input(format!("no kinematics for sensor {}", id.name())))?;
        out.insert(*id, virtual_imu_reading(point, gravity));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::TEMPLATE_HEIGHT;

    fn template_setup() -> (BodyConstants, ImuPlacement) {
        let b = BodyConstants::template();
        let p = ImuPlacement::default_full(&b);
        (b, p)
    }

    #[test]
    fn zero_offset_propagation_is_identity() {
        let p = Point::at_rest(0.3, 1.1);
        let out = propagate_point(&p, &0.0, &0.0, (&0.0, &0.0, &0.0));
        assert_eq!(out.x, p.x);
        assert_eq!(out.y, p.y);
        assert_eq!(out.alpha, p.alpha);
        assert_eq!(out.xd, 0.0);
    }

    #[test]
    fn static_offset_moves_position_only() {
        let p = Point::at_rest(2.0, 5.0);
        let out = propagate_point(&p, &1.0, &0.0, (&0.0, &0.0, &0.0));
        assert_eq!(out.x, 3.0);
        assert_eq!(out.y, 5.0);
        for v in [out.xd, out.yd, out.xdd, out.ydd, out.alphad, out.alphadd] {
            assert_eq!(v, 0.0);
        }
    }

    /// Analytic velocity/acceleration channels must match finite differences
    /// of the position channels along a smooth trajectory.
    #[test]
    fn propagation_derivatives_match_finite_differences() {
        let dt = 1e-3;
        let parent_at = |t: f64| PointKinematics {
            x: (0.7 * t).sin() * 0.4,
            xd: 0.7 * (0.7 * t).cos() * 0.4,
            xdd: -0.49 * (0.7 * t).sin() * 0.4,
            y: 1.0 + 0.2 * (1.3 * t).cos(),
            yd: -0.26 * (1.3 * t).sin(),
            ydd: -0.338 * (1.3 * t).cos(),
            alpha: 0.9 * (2.1 * t).sin(),
            alphad: 1.89 * (2.1 * t).cos(),
            alphadd: -3.969 * (2.1 * t).sin(),
        };
        let local_at = |t: f64| {
            (
                0.5 * (1.7 * t).sin(),
                0.85 * (1.7 * t).cos(),
                -1.445 * (1.7 * t).sin(),
            )
        };
        let point_at = |t: f64| {
            let p = parent_at(t);
            let (la, lad, ladd) = local_at(t);
            propagate_point(&p, &0.35, &-0.12, (&la, &lad, &ladd))
        };
        for k in 1..50 {
            let t = 0.02 * k as f64;
            let pm = point_at(t - dt);
            let p0 = point_at(t);
            let pp = point_at(t + dt);
            let fd_xd = (pp.x - pm.x) / (2.0 * dt);
            let fd_xdd = (pp.x - 2.0 * p0.x + pm.x) / (dt * dt);
            let fd_yd = (pp.y - pm.y) / (2.0 * dt);
            let fd_ydd = (pp.y - 2.0 * p0.y + pm.y) / (dt * dt);
            assert!(
                (p0.xd - fd_xd).abs() <= 1e-4 * fd_xd.abs().max(1.0),
                "xd analytic {} vs fd {}",
                p0.xd,
                fd_xd
            );
            assert!((p0.yd - fd_yd).abs() <= 1e-4 * fd_yd.abs().max(1.0));
            assert!((p0.xdd - fd_xdd).abs() <= 1e-4 * fd_xdd.abs().max(1.0));
            assert!((p0.ydd - fd_ydd).abs() <= 1e-4 * fd_ydd.abs().max(1.0));
        }
    }

    #[test]
    fn zero_pose_is_reference_standing_pose() {
        let (b, p) = template_setup();
        let mut s = GeneralizedState::zero();
        s.q[Q_ROOT_Y] = 0.9;
        let fk = forward_kinematics(&s, &b, &p).unwrap();
        let hip_l = &fk[&PointId::Hip(Side::Left)];
        let hip_r = &fk[&PointId::Hip(Side::Right)];
        assert_eq!(hip_l.x, hip_r.x);
        assert_eq!(hip_l.y, hip_r.y);
        assert_eq!(hip_l.x, 0.0);
        assert_eq!(hip_l.y, 0.9);
        // Knee below hip, ankle below knee, toe ahead of heel.
        let knee = &fk[&PointId::Knee(Side::Left)];
        let ankle = &fk[&PointId::Ankle(Side::Left)];
        let heel = &fk[&PointId::Heel(Side::Left)];
        let toe = &fk[&PointId::Toe(Side::Left)];
        assert!(knee.y < hip_l.y && ankle.y < knee.y);
        assert!((knee.x - 0.0).abs() < 1e-12);
        assert!(toe.x > ankle.x && heel.x < ankle.x);
        assert!((toe.y - ankle.y).abs() < 1e-12);
        // Trunk CoM above the hip.
        assert!(fk[&PointId::SegCom(SegmentId::Trunk)].y > hip_l.y);
    }

    #[test]
    fn rigid_translation_moves_every_point_uniformly() {
        let (b, p) = template_setup();
        let mut s = GeneralizedState::zero();
        s.q[Q_ROOT_Y] = 0.95;
        s.q[Q_HIP_L] = 0.3;
        s.q[Q_KNEE_L] = -0.4;
        s.qd[Q_ROOT_X] = 1.0;
        let fk = forward_kinematics(&s, &b, &p).unwrap();
        for (_, pt) in fk.iter() {
            assert!((pt.xd - 1.0).abs() < 1e-12);
            assert!(pt.yd.abs() < 1e-12);
            assert!(pt.alphad.abs() < 1e-12);
        }
    }

    /// Heel velocity must match finite differences of heel position along a
    /// densely sampled trajectory through a random state.
    #[test]
    fn fk_velocities_match_finite_differences() {
        let (b, p) = template_setup();
        let dt = 1e-3;
        // Smooth trajectory with non-trivial values in all channels.
        let q_at = |t: f64| -> GeneralizedState {
            let mut s = GeneralizedState::zero();
            let freqs = [1.1, 0.9, 1.7, 1.3, 0.8, 1.9, 1.2, 1.5, 0.7];
            let amps = [0.5, 0.08, 0.3, 0.45, 0.35, 0.5, 0.3, 0.25, 0.2];
            for i in 0..N_Q {
                s.q[i] = amps[i] * (freqs[i] * t).sin();
                s.qd[i] = amps[i] * freqs[i] * (freqs[i] * t).cos();
                s.qdd[i] = -amps[i] * freqs[i] * freqs[i] * (freqs[i] * t).sin();
            }
            s.q[Q_ROOT_Y] += 0.9;
            s
        };
        for k in 1..30 {
            let t = 0.05 * k as f64;
            let f = |tt: f64| forward_kinematics(&q_at(tt), &b, &p).unwrap();
            let fm = f(t - dt);
            let f0 = f(t);
            let fp = f(t + dt);
            for id in [
                PointId::Heel(Side::Left),
                PointId::Toe(Side::Right),
                PointId::Imu(SensorId::Foot(Side::Left)),
                PointId::SegCom(SegmentId::Shank(Side::Right)),
            ] {
                let fd_xd = (fp[&id].x - fm[&id].x) / (2.0 * dt);
                let fd_xdd = (fp[&id].x - 2.0 * f0[&id].x + fm[&id].x) / (dt * dt);
                assert!(
                    (f0[&id].xd - fd_xd).abs() <= 1e-4 * fd_xd.abs().max(1.0),
                    "{id:?} xd {} vs {}",
                    f0[&id].xd,
                    fd_xd
                );
                assert!(
                    (f0[&id].xdd - fd_xdd).abs() <= 2e-4 * fd_xdd.abs().max(1.0),
                    "{id:?} xdd {} vs {}",
                    f0[&id].xdd,
                    fd_xdd
                );
            }
        }
    }

    #[test]
    fn mirrored_state_mirrors_points() {
        let (b, p) = template_setup();
        let mut s = GeneralizedState::zero();
        s.q[Q_ROOT_Y] = 0.9;
        s.q[Q_HIP_L] = 0.4;
        s.q[Q_HIP_R] = -0.2;
        s.q[Q_KNEE_L] = -0.5;
        s.q[Q_KNEE_R] = -0.1;
        s.q[Q_ANKLE_L] = 0.2;
        s.q[Q_ANKLE_R] = -0.15;
        s.qd[Q_HIP_L] = 1.0;
        s.qd[Q_KNEE_R] = -0.7;
        let fk = forward_kinematics(&s, &b, &p).unwrap();
        let fk_m = forward_kinematics(&s.mirrored(), &b, &p).unwrap();
        for side in Side::BOTH {
            for (a, bpt) in [
                (PointId::Knee(side), PointId::Knee(side.mirror())),
                (PointId::Heel(side), PointId::Heel(side.mirror())),
                (PointId::Toe(side), PointId::Toe(side.mirror())),
            ] {
                assert_eq!(fk[&a].x, fk_m[&bpt].x);
                assert_eq!(fk[&a].yd, fk_m[&bpt].yd);
                assert_eq!(fk[&a].alpha, fk_m[&bpt].alpha);
            }
        }
    }

    #[test]
    fn static_sensor_reads_one_g_up() {
        let (b, p) = template_setup();
        let mut s = GeneralizedState::zero();
        s.q[Q_ROOT_Y] = 0.9;
        let fk = forward_kinematics(&s, &b, &p).unwrap();
        let r = virtual_imu(&fk, &p, GRAVITY).unwrap();
        let pelvis = &r[&SensorId::Pelvis];
        assert!((pelvis.ax - 0.0).abs() < 1e-12);
        assert!((pelvis.ay - GRAVITY).abs() < 1e-12);
        assert_eq!(pelvis.omega, 0.0);
    }

    #[test]
    fn rotated_static_sensor_sees_gravity_on_other_axis() {
        let pt = PointKinematics {
            alpha: std::f64::consts::FRAC_PI_2,
            ..Point::at_rest(0.0, 1.0)
        };
        let r = virtual_imu_reading(&pt, GRAVITY);
        assert!((r.ax - GRAVITY).abs() < 1e-12);
        assert!(r.ay.abs() < 1e-12);
    }

    #[test]
    fn accelerating_sensor_adds_linear_acceleration() {
        let pt = PointKinematics {
            xdd: 2.0,
            ..Point::at_rest(0.0, 1.0)
        };
        let r = virtual_imu_reading(&pt, GRAVITY);
        assert!((r.ax - 2.0).abs() < 1e-12);
        assert!((r.ay - GRAVITY).abs() < 1e-12);
    }

    /// Adding a constant to the horizontal root position must not change any
    /// local IMU reading.
    #[test]
    fn imu_readings_are_invariant_to_root_translation() {
        let (b, p) = template_setup();
        let mut s = GeneralizedState::zero();
        s.q[Q_ROOT_Y] = 0.9;
        s.q[Q_HIP_L] = 0.2;
        s.qd[Q_KNEE_L] = 1.3;
        s.qdd[Q_ANKLE_R] = -2.0;
        let fk1 = forward_kinematics(&s, &b, &p).unwrap();
        let r1 = virtual_imu(&fk1, &p, GRAVITY).unwrap();
        s.q[Q_ROOT_X] += 123.456;
        let fk2 = forward_kinematics(&s, &b, &p).unwrap();
        let r2 = virtual_imu(&fk2, &p, GRAVITY).unwrap();
        for id in p.sensor_ids() {
            assert!((r1[&id].ax - r2[&id].ax).abs() <= 1e-12);
            assert!((r1[&id].ay - r2[&id].ay).abs() <= 1e-12);
            assert!((r1[&id].omega - r2[&id].omega).abs() <= 1e-12);
        }
    }

    #[test]
    fn missing_sensor_point_is_reported() {
        let (b, p) = template_setup();
        let s = GeneralizedState::zero();
        let fk = forward_kinematics(&s, &b, &ImuPlacement { mounts: vec![] }).unwrap();
        assert!(virtual_imu(&fk, &p, GRAVITY).is_err());
    }

    #[test]
    fn standing_height_is_plausible() {
        // Leg length from the template should put the hip near 53% of height.
        let b = BodyConstants::template();
        let leg = b.segment(SegmentId::Thigh(Side::Left)).length
            + b.segment(SegmentId::Shank(Side::Left)).length;
        assert!(leg > 0.4 * TEMPLATE_HEIGHT && leg < 0.6 * TEMPLATE_HEIGHT);
    }
}
