use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use super::{Point, PolarGrid};
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Complex nodal values on a [`PolarGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub name: String,
    pub values: Vec<C64>,
}

impl GridField {
    pub fn new(name: impl Into<String>, values: Vec<C64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn zeros(grid: &PolarGrid, name: impl Into<String>) -> Self {
        Self::new(name, vec![C64::new(0.0, 0.0); grid.len()])
    }

    pub fn from_fn(grid: &PolarGrid, name: impl Into<String>, f: impl Fn(Point) -> C64) -> Self {
        Self::new(name, (0..grid.len()).map(|k| f(grid.node(k))).collect())
    }

    pub fn from_real_fn(
        grid: &PolarGrid,
        name: impl Into<String>,
        f: impl Fn(Point) -> f64,
    ) -> Self {
        Self::from_fn(grid, name, |x| C64::new(f(x), 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_on(&self, grid: &PolarGrid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::InvalidParams(format!(
                "field '{}' has {} values, grid has {} nodes",
                self.name,
                self.values.len(),
                grid.len()
            )));
        }
        self.ensure_finite()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("field '{}'", self.name)))
        }
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self::new(self.name.clone(), self.values.iter().map(|&z| alpha * z).collect())
    }

    pub fn abs_sq(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Discrete `L^2(D)` norm against `dx`.
    pub fn l2_norm(&self, grid: &PolarGrid) -> Result<f64> {
        self.check_on(grid)?;
        Ok(grid.integrate_volume(&self.abs_sq())?.sqrt())
    }

    /// Field shifted by `k` angular positions: `out(i, j) = self(i, j + k)`.
    pub fn rotated(&self, grid: &PolarGrid, k: usize) -> Self {
        let nt = grid.ntheta();
        let mut out = self.values.clone();
        for i in 0..grid.nr() {
            for j in 0..nt {
                out[i * nt + j] = self.values[i * nt + (j + k) % nt];
            }
        }
        Self::new(self.name.clone(), out)
    }
}

impl Index<usize> for GridField {
    type Output = C64;
    fn index(&self, k: usize) -> &C64 {
        &self.values[k]
    }
}

impl IndexMut<usize> for GridField {
    fn index_mut(&mut self, k: usize) -> &mut C64 {
        &mut self.values[k]
    }
}

impl Add for &GridField {
    type Output = GridField;
    fn add(self, rhs: &GridField) -> GridField {
        GridField::new(
            self.name.clone(),
            self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        )
    }
}

impl Sub for &GridField {
    type Output = GridField;
    fn sub(self, rhs: &GridField) -> GridField {
        GridField::new(
            self.name.clone(),
            self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        )
    }
}

impl Mul<C64> for &GridField {
    type Output = GridField;
    fn mul(self, rhs: C64) -> GridField {
        self.scaled(rhs)
    }
}
