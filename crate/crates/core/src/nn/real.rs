use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type for the network: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float + NumAssign + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// `C = alpha * A·B + beta * C` with arbitrary row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                debug_assert!(extent(m, k, rsa, csa) <= a.len());
                debug_assert!(extent(k, n, rsb, csb) <= b.len());
                debug_assert!(extent(m, n, rsc, csc) <= c.len());
                // SAFETY: extents checked above; matrixmultiply reads within
                // (rows-1)*rs + (cols-1)*cs of each base pointer.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

#[allow(dead_code)]
fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Row-major `C[m×n] (+)= A[m×k] · B[k×n]`.
pub fn matmul<F: Real>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F], accumulate: bool) {
    let beta = if accumulate { F::one() } else { F::zero() };
    F::gemm(m, k, n, F::one(), a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
}

/// Row-major `C[m×n] (+)= A[m×k] · B[n×k]ᵀ`.
pub fn matmul_bt<F: Real>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F], accumulate: bool) {
    let beta = if accumulate { F::one() } else { F::zero() };
    F::gemm(m, k, n, F::one(), a, k as isize, 1, b, 1, k as isize, beta, c, n as isize, 1);
}

/// Row-major `C[m×n] (+)= A[k×m]ᵀ · B[k×n]`.
pub fn matmul_at<F: Real>(m: usize, k: usize, n: usize, a: &[F], b: &[F], c: &mut [F], accumulate: bool) {
    let beta = if accumulate { F::one() } else { F::zero() };
    F::gemm(m, k, n, F::one(), a, 1, m as isize, b, n as isize, 1, beta, c, n as isize, 1);
}

pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
