//! Dense matrix kernels. All matrices are row-major `Vec<f64>`.
//!
//! Three multiply variants cover forward and both backward products without
//! ever materializing a transpose:
//!   * `matmul_nn`: C = A B        (ikj loop, unit-stride inner updates)
//!   * `matmul_nt`: C = A Bᵀ       (row-dot-row, unit stride in both)
//!   * `matmul_tn`: C = Aᵀ B       (outer-product accumulation)
//!
//! The inner loops are written over subslices so the optimizer can elide
//! bounds checks and vectorize.

/// C (m x n) = A (m x k) · B (k x n).
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C (m x n) = A (m x k) · B (n x k)ᵀ.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv = acc;
        }
    }
    c
}

/// C (m x n) = A (k x m)ᵀ · B (k x n).
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `acc += add`, elementwise.
pub fn axpy(acc: &mut [f64], add: &[f64]) {
    debug_assert_eq!(acc.len(), add.len());
    for (a, &b) in acc.iter_mut().zip(add) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 2x3 and 3x2 fixtures with a hand-checked product.
    const A: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    const B: [f64; 6] = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];

    #[test]
    fn nn_matches_hand_product() {
        // [[1,2,3],[4,5,6]] * [[7,8],[9,10],[11,12]]
        //        = [[58,64],[139,154]].
        let c = matmul_nn(&A, &B, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn nt_and_tn_agree_with_nn_on_random_shapes() {
        let (m, k, n) = (4, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 1.3).cos()).collect();
        let reference = matmul_nn(&a, &b, m, k, n);

        // A · (Bᵀ)ᵀ via nt: feed B transposed manually.
        let mut bt = vec![0.0; k * n];
        for r in 0..k {
            for c in 0..n {
                bt[c * k + r] = b[r * n + c];
            }
        }
        assert_eq!(matmul_nt(&a, &bt, m, k, n), reference);

        // (Aᵀ)ᵀ · B via tn: feed A transposed manually.
        let mut at = vec![0.0; m * k];
        for r in 0..m {
            for c in 0..k {
                at[c * m + r] = a[r * k + c];
            }
        }
        assert_eq!(matmul_tn(&at, &b, m, k, n), reference);
    }
}
