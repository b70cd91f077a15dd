//! Test-only helpers: independent oracles and deterministic random inputs.
//!
//! Everything here stays off the implementation paths it is used to check:
//! the integrator below never touches the eigendecomposition route, and the
//! dense embedding walks basis vectors one by one.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::tensorspace::{embed, HermitianOperator, StateVector, SubsystemLayout};
use std::sync::Arc;

/// Classic fixed-step 4th-order integrator for dψ/dt = -i H ψ.
pub fn rk4_evolve(h: &DMatrix<C64>, psi0: &[C64], t: f64, steps: usize) -> Vec<C64> {
    let rhs = |psi: &Vec<C64>| -> Vec<C64> {
        let mut out = vec![C64::ZERO; psi.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = C64::ZERO;
            for (j, p) in psi.iter().enumerate() {
                acc += h[(i, j)] * p;
            }
            *slot = -C64::i() * acc;
        }
        out
    };
    let dt = t / steps as f64;
    let mut psi: Vec<C64> = psi0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&psi);
        let mid1: Vec<C64> = psi
            .iter()
            .zip(&k1)
            .map(|(p, k)| p + k * C64::new(dt / 2.0, 0.0))
            .collect();
        let k2 = rhs(&mid1);
        let mid2: Vec<C64> = psi
            .iter()
            .zip(&k2)
            .map(|(p, k)| p + k * C64::new(dt / 2.0, 0.0))
            .collect();
        let k3 = rhs(&mid2);
        let end: Vec<C64> = psi
            .iter()
            .zip(&k3)
            .map(|(p, k)| p + k * C64::new(dt, 0.0))
            .collect();
        let k4 = rhs(&end);
        for (i, p) in psi.iter_mut().enumerate() {
            *p += (k1[i] + k2[i] * C64::new(2.0, 0.0) + k3[i] * C64::new(2.0, 0.0) + k4[i])
                * C64::new(dt / 6.0, 0.0);
        }
    }
    psi
}

/// Deterministic pseudo-random stream for test inputs (xorshift).
pub struct TestRand(pub u64);

impl TestRand {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    pub fn complex(&mut self) -> C64 {
        C64::new(self.next_f64(), self.next_f64())
    }
}

pub fn random_hermitian(dim: usize, seed: u64) -> DMatrix<C64> {
    let mut r = TestRand(seed | 1);
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let re = r.next_f64();
            let im = if i == j { 0.0 } else { r.next_f64() };
            m[(i, j)] = C64::new(re, im);
            m[(j, i)] = C64::new(re, -im);
        }
    }
    m
}

pub fn random_state(layout: &Arc<SubsystemLayout>, seed: u64) -> StateVector {
    let mut r = TestRand(seed | 1);
    let amps: Vec<C64> = (0..layout.total_dim()).map(|_| r.complex()).collect();
    StateVector::from_amplitudes(layout.clone(), amps)
        .unwrap()
        .normalized()
        .unwrap()
}

/// Dense full-space matrix of an embedded term, built by applying the
/// embedding to every basis vector.
pub fn dense_of(op: &HermitianOperator, layout: &Arc<SubsystemLayout>) -> DMatrix<C64> {
    let n = layout.total_dim();
    let action = embed(op, layout).unwrap();
    let mut out = DMatrix::<C64>::zeros(n, n);
    for col in 0..n {
        let mut amps = vec![C64::ZERO; n];
        amps[col] = C64::ONE;
        let basis = StateVector::from_amplitudes(layout.clone(), amps).unwrap();
        let image = action.apply(&basis).unwrap();
        for (row, &a) in image.amplitudes().iter().enumerate() {
            out[(row, col)] = a;
        }
    }
    out
}
