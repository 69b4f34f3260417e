use crate::error::{Error, Result};

/// Dense row-major design matrix. Training requires every cell defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Argument(format!(
                "matrix data has {} cells, expected {n_rows} x {n_cols}",
                data.len()
            )));
        }
        Ok(Matrix { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(Error::Argument(format!(
                "row {bad} has {} columns, expected {n_cols}",
                rows[bad].len()
            )));
        }
        Ok(Matrix {
            n_rows: rows.len(),
            n_cols,
            data: rows.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { n_rows: rows.len(), n_cols: self.n_cols, data }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Matrix { n_rows: self.n_rows, n_cols: cols.len(), data }
    }

    /// Fails on the first NaN or infinite cell.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Validation(format!(
                "non-finite cell at row {}, column {}",
                i / self.n_cols.max(1),
                i % self.n_cols.max(1)
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.select_rows(&[1]).row(0), &[4.0, 5.0, 6.0]);
        assert_eq!(m.select_cols(&[2, 0]).row(1), &[6.0, 4.0]);
        assert_eq!(m.column(1), vec![2.0, 5.0]);
        assert!(Matrix::from_rows(&[vec![1.0], vec![]]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![0.0, f64::NAN]).unwrap().ensure_finite().is_err());
    }
}
