//! Dense LU factorisation with partial pivoting.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular;

/// Relative pivot threshold below which the matrix is treated as singular.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Solves `a * x = b` in place of a copy of `a`.
///
/// A pivot smaller than `PIVOT_THRESHOLD * ||a||_inf` reports [`Singular`].
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, Singular> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let norm = a.inf_norm();
    if n > 0 && (norm == 0.0 || !norm.is_finite()) {
        return Err(Singular);
    }
    let floor = PIVOT_THRESHOLD * norm;
    let mut lu = a.data.clone();
    let mut x = b.to_vec();

    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot.is_nan() || pivot < floor {
            return Err(Singular);
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let diag = lu[k * n + k];
        for i in k + 1..n {
            let factor = lu[i * n + k] / diag;
            if factor == 0.0 {
                continue;
            }
            lu[i * n + k] = factor;
            for j in k + 1..n {
                lu[i * n + j] -= factor * lu[k * n + j];
            }
            x[i] -= factor * x[k];
        }
    }

    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| lu[k * n + j] * x[j]).sum();
        x[k] = (x[k] - tail) / lu[k * n + k];
    }
    Ok(x)
}
