#![allow(dead_code)] // each test target compiles its own copy and uses a subset

//! Shared oracle helpers for the integration suites. Everything here builds
//! on the documented index convention only (row-major over layout order,
//! leftmost slowest) and stays independent of the library's embedding and
//! propagation paths.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Deterministic xorshift stream for test inputs.
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

    pub fn pick(&mut self, n: usize) -> usize {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 % n as u64) as usize
    }
}

pub fn random_hermitian(dim: usize, rand: &mut TestRand) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let re = rand.next_f64();
            let im = if i == j { 0.0 } else { rand.next_f64() };
            m[(i, j)] = C64::new(re, im);
            m[(j, i)] = C64::new(re, -im);
        }
    }
    m
}

/// Dense full-space matrix of an operator acting on `leg_positions` of a
/// layout with factor dimensions `dims`, identity elsewhere. Pure index
/// arithmetic; no library calls.
pub fn dense_embedding(
    dims: &[usize],
    leg_positions: &[usize],
    op: &DMatrix<C64>,
) -> DMatrix<C64> {
    let total: usize = dims.iter().product();
    let decompose = |mut idx: usize| -> Vec<usize> {
        let mut digits = vec![0usize; dims.len()];
        for p in (0..dims.len()).rev() {
            digits[p] = idx % dims[p];
            idx /= dims[p];
        }
        digits
    };
    let block_index = |digits: &[usize]| -> usize {
        let mut k = 0usize;
        for &p in leg_positions {
            k = k * dims[p] + digits[p];
        }
        k
    };
    let mut out = DMatrix::<C64>::zeros(total, total);
    for row in 0..total {
        let rd = decompose(row);
        for col in 0..total {
            let cd = decompose(col);
            let rest_match = (0..dims.len())
                .all(|p| leg_positions.contains(&p) || rd[p] == cd[p]);
            if rest_match {
                out[(row, col)] = op[(block_index(&rd), block_index(&cd))];
            }
        }
    }
    out
}

/// Dense unitary evolution by Hermitian eigendecomposition of the assembled
/// full-space matrix (independent of the factorized propagation path).
pub fn dense_evolve(h: &DMatrix<C64>, psi0: &[C64], t: f64) -> Vec<C64> {
    let eig = h.clone().symmetric_eigen();
    let mut coeffs = eig.eigenvectors.adjoint() * nalgebra::DVector::from_column_slice(psi0);
    for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= C64::from_polar(1.0, -lambda * t);
    }
    let out = eig.eigenvectors * coeffs;
    out.iter().copied().collect()
}

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

/// Scratch directory unique to a test, removed by the caller.
pub fn scratch_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "wfsim-test-{}-{}",
        std::process::id(),
        tag
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
