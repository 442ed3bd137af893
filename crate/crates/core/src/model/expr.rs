use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{ModelError, VariableHandle};

/// Key of one coefficient: (expression row, variable id, variable component).
type Key = (usize, usize, usize);

/// A vector-valued affine expression `Σ coef·x[var][comp] + constant`.
///
/// Expressions are built from [`VariableHandle`]s and remember which model
/// the handles came from; mixing models is reported when the expression is
/// combined or handed to a constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    coef: BTreeMap<Key, f64>,
    constant: Vec<f64>,
    owner: Option<u64>,
}

impl AffineExpr {
    /// The zero expression with `rows` rows.
    pub fn zeros(rows: usize) -> Self {
        Self {
            coef: BTreeMap::new(),
            constant: vec![0.0; rows],
            owner: None,
        }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self {
            coef: BTreeMap::new(),
            constant: values.to_vec(),
            owner: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(&[value])
    }

    /// The variable itself, one row per component.
    pub fn var(h: &VariableHandle) -> Self {
        let mut e = Self::zeros(h.dim());
        e.owner = Some(h.model);
        for i in 0..h.dim() {
            e.coef.insert((i, h.id, i), 1.0);
        }
        e
    }

    /// Component `i` of a variable as a scalar expression.
    pub fn component(h: &VariableHandle, i: usize) -> Result<Self, ModelError> {
        if i >= h.dim() {
            return Err(ModelError::Dimension(format!(
                "component {i} of {:?} which has dimension {}",
                h.name(),
                h.dim()
            )));
        }
        let mut e = Self::zeros(1);
        e.owner = Some(h.model);
        e.coef.insert((0, h.id, i), 1.0);
        Ok(e)
    }

    /// `Σᵢ x[i]` as a scalar expression.
    pub fn sum(h: &VariableHandle) -> Self {
        Self::dot(&vec![1.0; h.dim()], h).expect("length matches by construction")
    }

    /// `aᵀx` as a scalar expression.
    pub fn dot(a: &[f64], h: &VariableHandle) -> Result<Self, ModelError> {
        if a.len() != h.dim() {
            return Err(ModelError::Dimension(format!(
                "coefficient vector of length {} against {:?} of dimension {}",
                a.len(),
                h.name(),
                h.dim()
            )));
        }
        let mut e = Self::zeros(1);
        e.owner = Some(h.model);
        for (i, &v) in a.iter().enumerate() {
            if v != 0.0 {
                e.coef.insert((0, h.id, i), v);
            }
        }
        e.check_finite()?;
        Ok(e)
    }

    /// `M x` with one row per row of `M`.
    pub fn mul(m: &DMatrix<f64>, h: &VariableHandle) -> Result<Self, ModelError> {
        if m.ncols() != h.dim() {
            return Err(ModelError::Dimension(format!(
                "matrix with {} columns against {:?} of dimension {}",
                m.ncols(),
                h.name(),
                h.dim()
            )));
        }
        let mut e = Self::zeros(m.nrows());
        e.owner = Some(h.model);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    e.coef.insert((i, h.id, j), v);
                }
            }
        }
        e.check_finite()?;
        Ok(e)
    }

    pub fn rows(&self) -> usize {
        self.constant.len()
    }

    pub fn constant_part(&self) -> &[f64] {
        &self.constant
    }

    /// Nonzero coefficients as `(row, variable id, component, value)`,
    /// ordered by row.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.coef.iter().map(|(&(r, v, c), &x)| (r, v, c, x))
    }

    pub(crate) fn owner(&self) -> Option<u64> {
        self.owner
    }

    fn merge_owner(&self, other: &Self) -> Result<Option<u64>, ModelError> {
        match (self.owner, other.owner) {
            (Some(a), Some(b)) if a != b => Err(ModelError::ForeignVariable),
            (a, b) => Ok(a.or(b)),
        }
    }

    fn same_rows(&self, other: &Self, op: &str) -> Result<(), ModelError> {
        if self.rows() != other.rows() {
            return Err(ModelError::Dimension(format!(
                "cannot {op} expressions with {} and {} rows",
                self.rows(),
                other.rows()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, ModelError> {
        self.same_rows(other, "add")?;
        let owner = self.merge_owner(other)?;
        let mut out = self.clone();
        out.owner = owner;
        for (k, v) in &other.coef {
            *out.coef.entry(*k).or_insert(0.0) += v;
        }
        out.coef.retain(|_, v| *v != 0.0);
        for (a, b) in out.constant.iter_mut().zip(&other.constant) {
            *a += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, ModelError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, f: f64) -> Self {
        let mut out = self.clone();
        out.coef.values_mut().for_each(|v| *v *= f);
        out.coef.retain(|_, v| *v != 0.0);
        out.constant.iter_mut().for_each(|v| *v *= f);
        out
    }

    /// Adds a constant vector of matching length.
    pub fn offset(&self, c: &[f64]) -> Result<Self, ModelError> {
        self.add(&Self::constant(c))
    }

    /// `M · self` for a dense matrix with `self.rows()` columns.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<Self, ModelError> {
        if m.ncols() != self.rows() {
            return Err(ModelError::Dimension(format!(
                "matrix with {} columns applied to an expression with {} rows",
                m.ncols(),
                self.rows()
            )));
        }
        let mut out = Self::zeros(m.nrows());
        out.owner = self.owner;
        for (&(r, v, c), &x) in &self.coef {
            for i in 0..m.nrows() {
                let f = m[(i, r)];
                if f != 0.0 {
                    *out.coef.entry((i, v, c)).or_insert(0.0) += f * x;
                }
            }
        }
        out.coef.retain(|_, v| *v != 0.0);
        for i in 0..m.nrows() {
            out.constant[i] = (0..self.rows()).map(|r| m[(i, r)] * self.constant[r]).sum();
        }
        out.check_finite()?;
        Ok(out)
    }

    /// Row `i` as a scalar expression.
    pub fn row(&self, i: usize) -> Result<Self, ModelError> {
        if i >= self.rows() {
            return Err(ModelError::Dimension(format!(
                "row {i} of an expression with {} rows",
                self.rows()
            )));
        }
        let mut out = Self::zeros(1);
        out.owner = self.owner;
        out.constant[0] = self.constant[i];
        for (&(r, v, c), &x) in self.coef.range((i, 0, 0)..(i + 1, 0, 0)) {
            debug_assert_eq!(r, i);
            out.coef.insert((0, v, c), x);
        }
        Ok(out)
    }

    /// Sum of all rows as a scalar expression.
    pub fn sum_rows(&self) -> Self {
        let mut out = Self::zeros(1);
        out.owner = self.owner;
        out.constant[0] = self.constant.iter().sum();
        for (&(_, v, c), &x) in &self.coef {
            *out.coef.entry((0, v, c)).or_insert(0.0) += x;
        }
        out.coef.retain(|_, v| *v != 0.0);
        out
    }

    /// Vertical concatenation.
    pub fn stack(parts: &[AffineExpr]) -> Result<Self, ModelError> {
        let mut out = Self::zeros(0);
        for p in parts {
            out.owner = out.merge_owner(p)?;
            let base = out.rows();
            for (&(r, v, c), &x) in &p.coef {
                out.coef.insert((base + r, v, c), x);
            }
            out.constant.extend_from_slice(&p.constant);
        }
        Ok(out)
    }

    /// Value of the expression given a lookup of variable components.
    pub fn evaluate(&self, value: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let mut out = self.constant.clone();
        for (&(r, v, c), &x) in &self.coef {
            out[r] += x * value(v, c);
        }
        out
    }

    pub(crate) fn check_finite(&self) -> Result<(), ModelError> {
        if self
            .coef
            .values()
            .chain(&self.constant)
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(ModelError::NonFinite)
        }
    }
}

impl From<&VariableHandle> for AffineExpr {
    fn from(h: &VariableHandle) -> Self {
        AffineExpr::var(h)
    }
}
