//! Dense symmetric eigensolver: Householder tridiagonalisation followed by
//! implicit-shift QL, in the style of EISPACK `tred2`/`tql2`.
//!
//! Only the lower triangle of the input is read.

use nalgebra::DMatrix;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

/// Full decomposition of the symmetric matrix `a`.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    if n == 0 {
        return SymmetricEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let mut work = Tridiagonal::reduce(a, true);
    work.ql(true);
    let (values, vectors) = work.sorted_descending();
    SymmetricEigen {
        values,
        vectors: vectors.expect("vectors requested"),
    }
}

/// Eigenvalues only, descending. Skips the `O(n³)` vector accumulation.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigenvalues needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let mut work = Tridiagonal::reduce(a, false);
    work.ql(false);
    work.sorted_descending().0
}

struct Tridiagonal {
    n: usize,
    /// Column-major `n × n`: Householder data, later the accumulated rotations.
    v: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    with_vectors: bool,
}

impl Tridiagonal {
    fn reduce(a: &DMatrix<f64>, with_vectors: bool) -> Self {
        let n = a.nrows();
        // v[k + j*n] holds V[k][j]; seed it from the lower triangle.
        let mut v = vec![0.0; n * n];
        for j in 0..n {
            for k in j..n {
                let x = a[(k, j)];
                v[k + j * n] = x;
                v[j + k * n] = x;
            }
        }
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        let idx = |row: usize, col: usize| row + col * n;

        for j in 0..n {
            d[j] = v[idx(n - 1, j)];
        }

        for i in (1..n).rev() {
            let mut scale = 0.0;
            let mut h = 0.0;
            for dk in &d[..i] {
                scale += dk.abs();
            }
            if scale == 0.0 {
                e[i] = d[i - 1];
                for j in 0..i {
                    d[j] = v[idx(i - 1, j)];
                    v[idx(i, j)] = 0.0;
                    v[idx(j, i)] = 0.0;
                }
            } else {
                for dk in &mut d[..i] {
                    *dk /= scale;
                    h += *dk * *dk;
                }
                let mut f = d[i - 1];
                let mut g = h.sqrt();
                if f > 0.0 {
                    g = -g;
                }
                e[i] = scale * g;
                h -= f * g;
                d[i - 1] = f - g;
                for ej in &mut e[..i] {
                    *ej = 0.0;
                }
                for j in 0..i {
                    f = d[j];
                    v[idx(j, i)] = f;
                    g = e[j] + v[idx(j, j)] * f;
                    for k in (j + 1)..i {
                        let vkj = v[idx(k, j)];
                        g += vkj * d[k];
                        e[k] += vkj * f;
                    }
                    e[j] = g;
                }
                f = 0.0;
                for j in 0..i {
                    e[j] /= h;
                    f += e[j] * d[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    e[j] -= hh * d[j];
                }
                for j in 0..i {
                    f = d[j];
                    g = e[j];
                    let col = &mut v[j * n..(j + 1) * n];
                    for k in j..i {
                        col[k] -= f * e[k] + g * d[k];
                    }
                    d[j] = v[idx(i - 1, j)];
                    v[idx(i, j)] = 0.0;
                }
            }
            d[i] = h;
        }

        if with_vectors {
            for i in 0..n - 1 {
                v[idx(n - 1, i)] = v[idx(i, i)];
                v[idx(i, i)] = 1.0;
                let h = d[i + 1];
                if h != 0.0 {
                    for k in 0..=i {
                        d[k] = v[idx(k, i + 1)] / h;
                    }
                    for j in 0..=i {
                        let mut g = 0.0;
                        for k in 0..=i {
                            g += v[idx(k, i + 1)] * v[idx(k, j)];
                        }
                        for k in 0..=i {
                            v[idx(k, j)] -= g * d[k];
                        }
                    }
                }
                for k in 0..=i {
                    v[idx(k, i + 1)] = 0.0;
                }
            }
            for j in 0..n {
                d[j] = v[idx(n - 1, j)];
                v[idx(n - 1, j)] = 0.0;
            }
            v[idx(n - 1, n - 1)] = 1.0;
        } else {
            for j in 0..n {
                d[j] = v[idx(j, j)];
            }
        }
        e[0] = 0.0;

        Self {
            n,
            v,
            d,
            e,
            with_vectors,
        }
    }

    fn ql(&mut self, accumulate: bool) {
        let n = self.n;
        let accumulate = accumulate && self.with_vectors;
        let (d, e, v) = (&mut self.d, &mut self.e, &mut self.v);
        for i in 1..n {
            e[i - 1] = e[i];
        }
        e[n - 1] = 0.0;

        let mut f = 0.0;
        let mut tst1: f64 = 0.0;
        let eps = f64::EPSILON;
        for l in 0..n {
            tst1 = tst1.max(d[l].abs() + e[l].abs());
            let mut m = l;
            while m < n {
                if e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }
            if m > l {
                let mut iter = 0;
                loop {
                    iter += 1;
                    let mut g = d[l];
                    let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    d[l] = e[l] / (p + r);
                    d[l + 1] = e[l] * (p + r);
                    let dl1 = d[l + 1];
                    let mut h = g - d[l];
                    for di in &mut d[(l + 2)..n] {
                        *di -= h;
                    }
                    f += h;

                    p = d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * e[i];
                        h = c * p;
                        r = p.hypot(e[i]);
                        e[i + 1] = s * r;
                        s = e[i] / r;
                        c = p / r;
                        p = c * d[i] - s * g;
                        d[i + 1] = h + s * (c * g + s * d[i]);
                        if accumulate {
                            let (left, right) = v.split_at_mut((i + 1) * n);
                            let col_i = &mut left[i * n..];
                            let col_next = &mut right[..n];
                            for (vi, vn) in col_i.iter_mut().zip(col_next.iter_mut()) {
                                let t = *vn;
                                *vn = s * *vi + c * t;
                                *vi = c * *vi - s * t;
                            }
                        }
                    }
                    p = -s * s2 * c3 * el1 * e[l] / dl1;
                    e[l] = s * p;
                    d[l] = c * p;
                    if e[l].abs() <= eps * tst1 || iter >= 64 {
                        break;
                    }
                }
            }
            d[l] += f;
            e[l] = 0.0;
        }
    }

    fn sorted_descending(self) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let n = self.n;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.d[b].total_cmp(&self.d[a]));
        let values = order.iter().map(|&i| self.d[i]).collect();
        let vectors = self.with_vectors.then(|| {
            DMatrix::from_fn(n, n, |row, col| self.v[row + order[col] * n])
        });
        (values, vectors)
    }
}
