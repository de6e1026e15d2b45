//! Portable matrix multiply with a fixed per-element summation order.
//!
//! Every output element is accumulated strictly in increasing `k` order,
//! starting from either zero or the existing value of `C`. Vector widths
//! only change how many elements are processed at once, never the order of
//! the additions for a single element, and Rust never contracts `a * b + c`
//! into a fused multiply-add. The SIMD-dispatched path is therefore
//! bit-identical to the scalar path on every platform.

const MR: usize = 4;
const NR: usize = 8;

/// A strided read-only matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    /// Row-major contiguous view.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// The transpose of this view; no data is moved.
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    #[inline(always)]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.row_stride + c * self.col_stride]
    }
}

/// `C = A·B` (or `C += A·B` when `accumulate`), with `C` row-major
/// contiguous of shape `a.rows × b.cols`.
pub fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], accumulate: bool) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n, "gemm output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }

    let panels = n.div_ceil(NR);
    let mut b_pack = vec![0.0; panels * k * NR];
    for jp in 0..panels {
        let j0 = jp * NR;
        let width = NR.min(n - j0);
        let dst = &mut b_pack[jp * k * NR..(jp + 1) * k * NR];
        for p in 0..k {
            for jj in 0..width {
                dst[p * NR + jj] = b.at(p, j0 + jj);
            }
        }
    }

    let mut a_pack = vec![0.0; k * MR];
    for i0 in (0..m).step_by(MR) {
        let height = MR.min(m - i0);
        a_pack.iter_mut().for_each(|x| *x = 0.0);
        for p in 0..k {
            for ii in 0..height {
                a_pack[p * MR + ii] = a.at(i0 + ii, p);
            }
        }
        for jp in 0..panels {
            let j0 = jp * NR;
            let width = NR.min(n - j0);
            let mut acc = [[0.0f64; NR]; MR];
            if accumulate {
                for ii in 0..height {
                    for jj in 0..width {
                        acc[ii][jj] = c[(i0 + ii) * n + j0 + jj];
                    }
                }
            }
            micro(&a_pack, &b_pack[jp * k * NR..(jp + 1) * k * NR], k, &mut acc);
            for ii in 0..height {
                let row = &mut c[(i0 + ii) * n + j0..(i0 + ii) * n + j0 + width];
                row.copy_from_slice(&acc[ii][..width]);
            }
        }
    }
}

#[inline(always)]
fn micro_body(a: &[f64], b: &[f64], k: usize, acc: &mut [[f64; NR]; MR]) {
    let a = &a[..k * MR];
    let b = &b[..k * NR];
    let mut local = *acc;
    for p in 0..k {
        let bp: &[f64; NR] = b[p * NR..p * NR + NR].try_into().unwrap();
        let ap: &[f64; MR] = a[p * MR..p * MR + MR].try_into().unwrap();
        for ii in 0..MR {
            let av = ap[ii];
            for jj in 0..NR {
                local[ii][jj] += av * bp[jj];
            }
        }
    }
    *acc = local;
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn micro_avx2(a: &[f64], b: &[f64], k: usize, acc: &mut [[f64; NR]; MR]) {
    micro_body(a, b, k, acc)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn micro_avx512(a: &[f64], b: &[f64], k: usize, acc: &mut [[f64; NR]; MR]) {
    micro_body(a, b, k, acc)
}

#[inline]
fn micro(a: &[f64], b: &[f64], k: usize, acc: &mut [[f64; NR]; MR]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            unsafe { micro_avx512(a, b, k, acc) };
            return;
        }
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { micro_avx2(a, b, k, acc) };
            return;
        }
    }
    micro_body(a, b, k, acc)
}

/// Reference triple loop with the same summation order; used by tests.
pub fn gemm_naive(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], accumulate: bool) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    for i in 0..m {
        for j in 0..n {
            let mut s = if accumulate { c[i * n + j] } else { 0.0 };
            for p in 0..k {
                s += a.at(i, p) * b.at(p, j);
            }
            c[i * n + j] = s;
        }
    }
}
