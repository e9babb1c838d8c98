//! Matrix kernels. Each output row is computed independently so the
//! parallel and sequential paths agree bit for bit.

use crate::exec;

/// Below this many multiply-adds the rayon overhead is not worth it.
const PAR_THRESHOLD: usize = 1 << 15;

fn run_rows<F>(out: &mut [f64], row_len: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if work >= PAR_THRESHOLD {
        exec::for_each_row_mut(out, row_len, f);
    } else if row_len > 0 {
        out.chunks_mut(row_len).enumerate().for_each(|(i, r)| f(i, r));
    }
}

/// `a[m×k] · b[k×n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    run_rows(&mut out, n, m * k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    });
    out
}

/// `g[m×n] · b[k×n]ᵀ`, the left-operand gradient of a matmul.
pub(crate) fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    run_rows(&mut out, k, m * k * n, |i, row| {
        let g_row = &g[i * n..(i + 1) * n];
        for (p, o) in row.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            *o = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    });
    out
}

/// `a[m×k]ᵀ · g[m×n]`, the right-operand gradient of a matmul.
pub(crate) fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    run_rows(&mut out, n, m * k * n, |p, row| {
        for i in 0..m {
            let a_ip = a[i * k + p];
            let g_row = &g[i * n..(i + 1) * n];
            for (o, &g_ij) in row.iter_mut().zip(g_row) {
                *o += a_ip * g_ij;
            }
        }
    });
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
