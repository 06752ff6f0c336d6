//! Exact dense linear algebra for generator matrices.
//!
//! Determinants use fraction-free (Bareiss) elimination so that every
//! intermediate division is exact; rank decisions never touch floats.

use crate::scalar::Scalar;

/// Row-major square matrix over an exact scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S: Scalar> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            data.extend(row);
        }
        Matrix { n, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix {
            n,
            data: vec![S::zero(); n * n],
        };
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Fraction-free determinant.
    pub fn det(&self) -> S {
        let n = self.n;
        if n == 0 {
            return S::one();
        }
        let mut a = self.data.clone();
        let mut sign_flip = false;
        let mut prev = S::one();
        for k in 0..n - 1 {
            if a[k * n + k].is_zero() {
                match (k + 1..n).find(|&r| !a[r * n + k].is_zero()) {
                    Some(r) => {
                        for c in 0..n {
                            a.swap(k * n + c, r * n + c);
                        }
                        sign_flip = !sign_flip;
                    }
                    None => return S::zero(),
                }
            }
            let inv_prev = S::one().try_div(&prev).expect("nonzero pivot");
            for i in k + 1..n {
                for j in k + 1..n {
                    let t = a[i * n + j]
                        .mul(&a[k * n + k])
                        .sub(&a[i * n + k].mul(&a[k * n + j]));
                    // Bareiss: division by the previous pivot is exact
                    a[i * n + j] = t.mul(&inv_prev);
                }
                a[i * n + k] = S::zero();
            }
            prev = a[k * n + k].clone();
        }
        let d = a[(n - 1) * n + (n - 1)].clone();
        if sign_flip {
            d.neg()
        } else {
            d
        }
    }

    fn minor(&self, row: usize, col: usize) -> Matrix<S> {
        let n = self.n;
        let mut data = Vec::with_capacity((n - 1) * (n - 1));
        for i in 0..n {
            if i == row {
                continue;
            }
            for j in 0..n {
                if j == col {
                    continue;
                }
                data.push(self.data[i * n + j].clone());
            }
        }
        Matrix { n: n - 1, data }
    }

    /// Cofactor matrix `C[h][l] = (-1)^(h+l) * minor(h, l)`; it satisfies
    /// `sum_h M[h][i] * C[h][l] = delta_il * det(M)`.
    pub fn cofactor_matrix(&self) -> Matrix<S> {
        let n = self.n;
        let mut data = Vec::with_capacity(n * n);
        for h in 0..n {
            for l in 0..n {
                let m = self.minor(h, l).det();
                data.push(if (h + l) % 2 == 1 { m.neg() } else { m });
            }
        }
        Matrix { n, data }
    }

    /// `M^T * v` is not needed; this is `sum_l M[h][l] * v[l]` per row h.
    pub fn mat_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|h| {
                let mut acc = S::zero();
                for l in 0..self.n {
                    acc = acc.add(&self.data[h * self.n + l].mul(&v[l]));
                }
                acc
            })
            .collect()
    }
}

/// Determinant and adjugate of a small integer matrix, in i128. The adjugate
/// satisfies `M * adj = det * I`.
pub(crate) fn int_det_adjugate(m: &[Vec<i64>]) -> (i128, Vec<Vec<i128>>) {
    let n = m.len();
    let det = int_det(&m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect::<Vec<Vec<i128>>>());
    let mut adj = vec![vec![0i128; n]; n];
    for i in 0..n {
        for j in 0..n {
            // adj[j][i] = (-1)^{i+j} * minor(i, j)
            let mut sub = Vec::with_capacity(n - 1);
            for r in 0..n {
                if r == i {
                    continue;
                }
                let mut row = Vec::with_capacity(n - 1);
                for c in 0..n {
                    if c == j {
                        continue;
                    }
                    row.push(m[r][c] as i128);
                }
                sub.push(row);
            }
            let mut v = int_det(&sub);
            if (i + j) % 2 == 1 {
                v = -v;
            }
            adj[j][i] = v;
        }
    }
    (det, adj)
}

fn int_det(m: &[Vec<i128>]) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    // Bareiss over the integers.
    let mut a: Vec<Vec<i128>> = m.to_vec();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}
