//! Thin wrapper over the complex matrix-multiply kernel.
//!
//! The kernel has no conjugation option, so adjoints are handled at call
//! sites by materializing a conjugated copy of the smaller operand.

use num_complex::Complex64 as C64;

/// C(m×n) = A(m×k) · B(k×n), all strided, C overwritten.
///
/// Strides are in units of elements. `Complex64` is `repr(C)` with layout
/// `[f64; 2]`, so the pointer casts below are sound.
#[allow(clippy::too_many_arguments)]
pub(crate) fn zgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[C64],
    rsa: isize,
    csa: isize,
    b: &[C64],
    rsb: isize,
    csb: isize,
    c: &mut [C64],
    rsc: isize,
    csc: isize,
) {
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr().cast::<[f64; 2]>(),
            rsa,
            csa,
            b.as_ptr().cast::<[f64; 2]>(),
            rsb,
            csb,
            [0.0, 0.0],
            c.as_mut_ptr().cast::<[f64; 2]>(),
            rsc,
            csc,
        );
    }
}
