//! Row-major matrix kernels shared by the layers. Inner loops run over
//! contiguous rows so LLVM can vectorize them.

/// `out = a · b` for `a: [m×k]`, `b: [k×n]`, `out: [m×n]` (overwrites).
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.iter_mut().for_each(|x| *x = 0.0);
    matmul_acc(a, b, out, m, k, n);
}

/// `out += a · b`.
pub fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ip * b_pj;
            }
        }
    }
}

/// `out += aᵀ · b` for `a: [n×m]`, `b: [n×k]`, `out: [m×k]`.
pub fn matmul_at_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, k: usize) {
    debug_assert_eq!(a.len(), n * m);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * k);
    for r in 0..n {
        let a_row = &a[r * m..(r + 1) * m];
        let b_row = &b[r * k..(r + 1) * k];
        for (i, &a_ri) in a_row.iter().enumerate() {
            if a_ri == 0.0 {
                continue;
            }
            let out_row = &mut out[i * k..(i + 1) * k];
            for (o, &b_rj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ri * b_rj;
            }
        }
    }
}

/// `out += a · bᵀ` for `a: [m×k]`, `b: [n×k]`, `out: [m×n]`.
pub fn matmul_bt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row.iter()) {
                acc += x * y;
            }
            *o += acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matmul_matches_hand_product() {
        // [1 2; 3 4] · [5 6; 7 8] = [19 22; 43 50]
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![5.0, 6.0, 7.0, 8.0];
        let mut out = vec![0.0; 4];
        matmul(&a, &b, &mut out, 2, 2, 2);
        assert_eq!(out, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transpose_variants_agree_with_matmul() {
        let mut rng = crate::rng::RngState::new(4);
        let a: vec::Vec<f64> = (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect(); // 3x4
        let b: vec::Vec<f64> = (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect(); // 3x4

        // aᵀ·b == matmul of transposed copy
        let mut at = vec![0.0; 12]; // 4x3
        for i in 0..3 {
            for j in 0..4 {
                at[j * 3 + i] = a[i * 4 + j];
            }
        }
        let mut want = vec![0.0; 16];
        matmul(&at, &b, &mut want, 4, 3, 4);
        let mut got = vec![0.0; 16];
        matmul_at_acc(&a, &b, &mut got, 3, 4, 4);
        for (w, g) in want.iter().zip(got.iter()) {
            assert!((w - g).abs() < 1e-12);
        }

        // a·bᵀ
        let mut bt = vec![0.0; 12]; // 4x3
        for i in 0..3 {
            for j in 0..4 {
                bt[j * 3 + i] = b[i * 4 + j];
            }
        }
        let mut want2 = vec![0.0; 9];
        matmul(&a, &bt, &mut want2, 3, 4, 3);
        let mut got2 = vec![0.0; 9];
        matmul_bt_acc(&a, &b, &mut got2, 3, 4, 3);
        for (w, g) in want2.iter().zip(got2.iter()) {
            assert!((w - g).abs() < 1e-12);
        }
    }
}
