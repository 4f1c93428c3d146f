//! Scalar abstraction so the physics is written once.
//!
//! [`Real`] is implemented for plain `f64` (fast path: oracles, the synthetic
//! generator, streaming inference) and for [`Tensor`] (training path, where
//! one "scalar" is a whole lane of timesteps/windows on the tape). Both
//! implementations perform the same arithmetic slot-by-slot, in the same
//! order, so forward values agree bit-for-bit.

use crate::tensor::Tensor;

pub trait Real: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn softplus(&self) -> Self;
    fn abs(&self) -> Self;
    fn relu(&self) -> Self;
    fn square(&self) -> Self;
    /// self * k for a plain constant.
    fn scale(&self, k: f64) -> Self;
    /// self + k for a plain constant.
    fn shift(&self, k: f64) -> Self;
    /// max(self, k).
    fn clamp_min(&self, k: f64) -> Self;
    /// A constant with the same lane structure as `self`.
    fn like(&self, v: f64) -> Self;
}

impl Real for f64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn softplus(&self) -> Self {
        crate::tensor::softplus(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn relu(&self) -> Self {
        if *self > 0.0 {
            *self
        } else {
            0.0
        }
    }
    fn square(&self) -> Self {
        self * self
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn shift(&self, k: f64) -> Self {
        self + k
    }
    fn clamp_min(&self, k: f64) -> Self {
        f64::max(*self, k)
    }
    fn like(&self, v: f64) -> Self {
        v
    }
}

impl Real for Tensor {
    fn add(&self, o: &Self) -> Self {
        Tensor::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Tensor::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Tensor::mul(self, o)
    }
    fn div(&self, o: &Self) -> Self {
        Tensor::div(self, o)
    }
    fn neg(&self) -> Self {
        Tensor::neg(self)
    }
    fn sin(&self) -> Self {
        Tensor::sin(self)
    }
    fn cos(&self) -> Self {
        Tensor::cos(self)
    }
    fn tanh(&self) -> Self {
        Tensor::tanh(self)
    }
    fn softplus(&self) -> Self {
        Tensor::softplus(self)
    }
    fn abs(&self) -> Self {
        Tensor::abs(self)
    }
    fn relu(&self) -> Self {
        Tensor::relu(self)
    }
    fn square(&self) -> Self {
        Tensor::square(self)
    }
    fn scale(&self, k: f64) -> Self {
        Tensor::scale(self, k)
    }
    fn shift(&self, k: f64) -> Self {
        Tensor::add_const(self, k)
    }
    fn clamp_min(&self, k: f64) -> Self {
        Tensor::clamp_min(self, k)
    }
    fn like(&self, v: f64) -> Self {
        self.tape().scalar(v)
    }
}
