//! Canonical per-timestep output channel layout and its decoding.
//!
//! The estimator emits 46 features per timestep: 8 generalized coordinates
//! (the horizontal root position is not emitted; it is reconstructed by
//! integrating the horizontal root velocity), 9 velocities, 9 accelerations,
//! 6 joint torques, and 14 ground-contact states (per foot the six global
//! ankle kinematics plus one friction logit).
//!
//! The layout is versioned; checkpoints and prediction files carry the
//! version string and loaders reject mismatches.

use crate::body::Side;
use crate::contact::AnkleState;
use crate::kinematics::{GeneralizedState, State, N_Q, N_TAU, Q_ROOT_X};

/// Total output features per timestep.
pub const N_OUT: usize = 46;

/// Version tag for the channel layout below.
pub const LAYOUT_VERSION: &str = "y46-v1";

/// q channels excluding the horizontal root position: `q[1..9]`.
pub const OUT_Q: usize = 0; // 8 channels
/// Velocity channels `qd[0..9]`.
pub const OUT_QD: usize = 8;
/// Acceleration channels `qdd[0..9]`.
pub const OUT_QDD: usize = 17;
/// Joint torques, TAU_JOINTS order.
pub const OUT_TAU: usize = 26;
/// Ground contact block: left ankle (x, y, alpha, xd, yd, alphad), right
/// ankle (same six), then the two friction logits (left, right).
pub const OUT_GC: usize = 32;
pub const OUT_GC_MU_L: usize = 44;
pub const OUT_GC_MU_R: usize = 45;

pub fn gc_base(side: Side) -> usize {
    match side {
        Side::Left => OUT_GC,
        Side::Right => OUT_GC + 6,
    }
}

pub fn gc_mu(side: Side) -> usize {
    match side {
        Side::Left => OUT_GC_MU_L,
        Side::Right => OUT_GC_MU_R,
    }
}

/// Human-readable channel names, in layout order.
pub fn channel_names() -> Vec<String> {
    let q_names = [
        "root_y", "root_rot", "hip_l", "hip_r", "knee_l", "knee_r", "ankle_l", "ankle_r",
    ];
    let qd_names = [
        "root_vx", "root_vy", "root_vrot", "hip_l", "hip_r", "knee_l", "knee_r", "ankle_l",
        "ankle_r",
    ];
    let tau_names = ["hip_l", "hip_r", "knee_l", "knee_r", "ankle_l", "ankle_r"];
    let mut names = Vec::with_capacity(N_OUT);
    for n in q_names {
        names.push(format!("q_{n}"));
    }
    for n in qd_names {
        names.push(format!("qd_{n}"));
    }
    for n in qd_names {
        names.push(format!("qdd_{n}"));
    }
    for n in tau_names {
        names.push(format!("tau_{n}"));
    }
    for side in ["l", "r"] {
        for c in ["x", "y", "alpha", "xd", "yd", "alphad"] {
            names.push(format!("gc_{side}_{c}"));
        }
    }
    names.push("gc_mu_l".into());
    names.push("gc_mu_r".into());
    names
}

/// One trial's worth of output features, one 46-vector per timestep.
#[derive(Clone, Debug, Default)]
pub struct OutputSeq {
    pub rows: Vec<[f64; N_OUT]>,
}

impl OutputSeq {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }
}

/// Cumulative trapezoidal integral starting at zero. Matches the tape
/// primitive bit-for-bit (same accumulation order).
pub fn cumtrapz(xs: &[f64], dt: f64) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    let mut acc = 0.0;
    for t in 1..xs.len() {
        acc += dt * 0.5 * (xs[t - 1] + xs[t]);
        out[t] = acc;
    }
    out
}

/// Decoded per-timestep states: generalized state plus both ankle contact
/// states. The horizontal root position comes from integrating the root
/// velocity channel across the sequence.
#[derive(Clone, Debug)]
pub struct DecodedSeq {
    pub states: Vec<GeneralizedState>,
    pub ankles: Vec<[AnkleState<f64>; 2]>,
}

pub fn decode_sequence(y: &OutputSeq, dt: f64) -> DecodedSeq {
    let vx: Vec<f64> = y.rows.iter().map(|r| r[OUT_QD + Q_ROOT_X]).collect();
    let px = cumtrapz(&vx, dt);
    let mut states = Vec::with_capacity(y.len());
    let mut ankles = Vec::with_capacity(y.len());
    for (t, row) in y.rows.iter().enumerate() {
        let mut s = State {
            q: [0.0; N_Q],
            qd: [0.0; N_Q],
            qdd: [0.0; N_Q],
            tau: [0.0; N_TAU],
        };
        s.q[0] = px[t];
        for i in 1..N_Q {
            s.q[i] = row[OUT_Q + i - 1];
        }
        for i in 0..N_Q {
            s.qd[i] = row[OUT_QD + i];
            s.qdd[i] = row[OUT_QDD + i];
        }
        for i in 0..N_TAU {
            s.tau[i] = row[OUT_TAU + i];
        }
        let ankle = |side: Side| {
            let b = gc_base(side);
            AnkleState {
                x: row[b],
                y: row[b + 1],
                alpha: row[b + 2],
                xd: row[b + 3],
                yd: row[b + 4],
                alphad: row[b + 5],
                mu: row[gc_mu(side)],
            }
        };
        ankles.push([ankle(Side::Left), ankle(Side::Right)]);
        states.push(s);
    }
    DecodedSeq { states, ankles }
}

/// Inverse of [`decode_sequence`] for ground-truth emission: pack states and
/// ankle contact states into output rows (the root-x position is dropped;
/// its velocity channel carries the information).
pub fn encode_row(state: &GeneralizedState, ankles: &[AnkleState<f64>; 2]) -> [f64; N_OUT] {
    let mut row = [0.0; N_OUT];
    for i in 1..N_Q {
        row[OUT_Q + i - 1] = state.q[i];
    }
    for i in 0..N_Q {
        row[OUT_QD + i] = state.qd[i];
        row[OUT_QDD + i] = state.qdd[i];
    }
    for i in 0..N_TAU {
        row[OUT_TAU + i] = state.tau[i];
    }
    for (k, side) in Side::BOTH.iter().enumerate() {
        let b = gc_base(*side);
        let a = &ankles[k];
        row[b] = a.x;
        row[b + 1] = a.y;
        row[b + 2] = a.alpha;
        row[b + 3] = a.xd;
        row[b + 4] = a.yd;
        row[b + 5] = a.alphad;
        row[gc_mu(*side)] = a.mu;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_covers_46_channels_without_overlap() {
        assert_eq!(OUT_QD - OUT_Q, 8);
        assert_eq!(OUT_QDD - OUT_QD, 9);
        assert_eq!(OUT_TAU - OUT_QDD, 9);
        assert_eq!(OUT_GC - OUT_TAU, 6);
        assert_eq!(N_OUT - OUT_GC, 14);
        assert_eq!(channel_names().len(), N_OUT);
        let names = channel_names();
        let mut dedup = names.clone();
        dedup.dedup();
        assert_eq!(names.len(), dedup.len());
    }

    #[test]
    fn decode_encode_round_trip() {
        let mut s = GeneralizedState::zero();
        for i in 0..N_Q {
            s.q[i] = 0.1 * i as f64;
            s.qd[i] = -0.2 * i as f64;
            s.qdd[i] = 0.3 * i as f64;
        }
        for i in 0..N_TAU {
            s.tau[i] = 0.05 * (i as f64 + 1.0);
        }
        let ank = |k: f64| AnkleState {
            x: k,
            y: k + 0.1,
            alpha: k + 0.2,
            xd: k + 0.3,
            yd: k + 0.4,
            alphad: k + 0.5,
            mu: k + 0.6,
        };
        let row = encode_row(&s, &[ank(1.0), ank(2.0)]);
        let seq = OutputSeq { rows: vec![row; 3] };
        let dec = decode_sequence(&seq, 0.01);
        // Everything except the integrated root-x must round-trip exactly.
        for t in 0..3 {
            let d = &dec.states[t];
            for i in 1..N_Q {
                assert_eq!(d.q[i], s.q[i]);
            }
            for i in 0..N_Q {
                assert_eq!(d.qd[i], s.qd[i]);
                assert_eq!(d.qdd[i], s.qdd[i]);
            }
            assert_eq!(d.tau, s.tau);
            assert_eq!(dec.ankles[t][0].mu, 1.6);
            assert_eq!(dec.ankles[t][1].alphad, 2.5);
        }
        // Integrated position: constant velocity channel integrates linearly.
        let v = s.qd[0];
        assert!((dec.states[2].q[0] - 2.0 * 0.01 * v).abs() < 1e-15);
    }

    #[test]
    fn cumtrapz_matches_tape_primitive() {
        use crate::tensor::Tape;
        let xs = vec![0.3, -0.7, 1.1, 0.9, -0.2, 0.0, 2.5];
        let dt = 0.013;
        let plain = cumtrapz(&xs, dt);
        let tape = Tape::new();
        let t = tape.constant((xs.len(), 1), xs.clone());
        let taped = t.cumtrapz_axis0(dt).value();
        for (a, b) in plain.iter().zip(taped) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
