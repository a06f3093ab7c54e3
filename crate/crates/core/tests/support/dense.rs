//! Dense reference assembly and LU, written independently of the sparse
//! code path.

use num_complex::Complex64;

type C = Complex64;

/// Dense operator built cell by cell from ghost values.
pub fn dense_assemble(n: usize, k: f64, alpha: C, chi: &[f64], f: &[C], g: &[C], eta: &[C]) -> (Vec<Vec<C>>, Vec<C>) {
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * n + i;
    let mut a = vec![vec![C::new(0.0, 0.0); n * n]; n * n];
    let mut b = f.to_vec();
    for j in 0..n {
        for i in 0..n {
            let r = idx(i, j);
            a[r][r] += k * k;
            // west
            if i > 0 {
                a[r][idx(i - 1, j)] += 1.0 / (h * h);
                a[r][r] -= 1.0 / (h * h);
            } else {
                // ghost = 2 g - u
                a[r][r] -= 2.0 / (h * h);
                b[r] -= 2.0 * g[j] / (h * h);
            }
            // east
            if i + 1 < n {
                a[r][idx(i + 1, j)] += 1.0 / (h * h);
                a[r][r] -= 1.0 / (h * h);
            } else {
                // (ug - u)/h + a (u + ug)/2 = eta
                let ac = alpha * chi[j];
                let denom = 1.0 / h + ac / 2.0;
                let cu = (1.0 / h - ac / 2.0) / denom;
                let ce = eta[j] / denom;
                a[r][r] += (cu - 1.0) / (h * h);
                b[r] -= ce / (h * h);
            }
            // south / north: mirror ghosts cancel the link
            if j > 0 {
                a[r][idx(i, j - 1)] += 1.0 / (h * h);
                a[r][r] -= 1.0 / (h * h);
            }
            if j + 1 < n {
                a[r][idx(i, j + 1)] += 1.0 / (h * h);
                a[r][r] -= 1.0 / (h * h);
            }
        }
    }
    (a, b)
}

#[allow(clippy::needless_range_loop)]
pub fn dense_lu_solve(mut a: Vec<Vec<C>>, mut b: Vec<C>) -> Vec<C> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
            .unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let l = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= l * v;
            }
            let v = b[col];
            b[r] -= l * v;
        }
    }
    let mut x = vec![C::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: C = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}
