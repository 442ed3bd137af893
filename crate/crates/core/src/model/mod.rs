//! Modeling layer: variables, affine expressions and cone constraints,
//! compiled to a [`StandardFormProblem`].
//!
//! Every cone constraint on an expression `e` is lifted to fresh auxiliary
//! variables `u` with `u = e` and `u ∈ K`, so the compiled problem only
//! ever places whole variable blocks in cones.

mod expr;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use thiserror::Error;

pub use expr::AffineExpr;

use crate::solver::{
    self, ConeBlock, ConeKind, ConeProduct, CscMatrix, SolverConfig, SolverError, SolverOutcome,
    StandardFormProblem, Status,
};

static NEXT_MODEL: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid variable: {0}")]
    InvalidVariable(String),
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("expression refers to a variable of another model")]
    ForeignVariable,
    #[error("non-finite coefficient in expression")]
    NonFinite,
    #[error("invalid cone constraint: {0}")]
    InvalidCone(String),
    #[error("no objective has been set")]
    NoObjective,
    #[error("model has not been solved")]
    NotSolved,
    #[error("no solution available: solver finished with status {0}")]
    NoSolution(Status),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Unbounded,
    NonNegative,
    /// Every component pinned to the given value.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Reference to a variable of one particular [`Model`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableHandle {
    model: u64,
    id: usize,
    dim: usize,
    name: String,
}

impl VariableHandle {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(usize);

#[derive(Debug, Clone)]
enum Constraint {
    Equality { expr: AffineExpr, rhs: Vec<f64> },
    Cone { expr: AffineExpr, kind: ConeKind },
}

#[derive(Debug, Clone)]
struct Variable {
    name: String,
    dim: usize,
    domain: Domain,
}

/// Where the pieces of a model ended up in the compiled problem.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub problem: StandardFormProblem,
    /// Column offset of each model variable, indexed by variable id.
    pub variable_offsets: Vec<usize>,
    /// Auxiliary block of each cone constraint: (constraint, column offset, block).
    pub cone_blocks: Vec<(ConstraintId, usize, ConeBlock)>,
    /// Constant added to `cᵀx` to obtain the minimisation objective.
    pub objective_constant: f64,
}

#[derive(Debug, Clone)]
struct Solution {
    outcome: SolverOutcome,
    compiled: CompiledModel,
}

#[derive(Debug)]
pub struct Model {
    uid: u64,
    vars: Vec<Variable>,
    names: HashMap<String, usize>,
    constraints: Vec<Constraint>,
    objective: Option<(Sense, AffineExpr)>,
    solution: Option<Solution>,
    auto_names: usize,
}

impl Default for Model {
    fn default() -> Self {
        Self::new()
    }
}

impl Model {
    pub fn new() -> Self {
        Self {
            uid: NEXT_MODEL.fetch_add(1, Ordering::Relaxed),
            vars: Vec::new(),
            names: HashMap::new(),
            constraints: Vec::new(),
            objective: None,
            solution: None,
            auto_names: 0,
        }
    }

    pub fn add_variable(
        &mut self,
        name: &str,
        dim: usize,
        domain: Domain,
    ) -> Result<VariableHandle, ModelError> {
        if name.is_empty() {
            return Err(ModelError::InvalidVariable("empty name".into()));
        }
        if dim == 0 {
            return Err(ModelError::InvalidVariable(format!(
                "{name:?} has dimension 0"
            )));
        }
        if self.names.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        if let Domain::Fixed(v) = &domain {
            if v.len() != dim {
                return Err(ModelError::Dimension(format!(
                    "fixed value of length {} for {name:?} of dimension {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
        let id = self.vars.len();
        self.vars.push(Variable {
            name: name.to_string(),
            dim,
            domain,
        });
        self.names.insert(name.to_string(), id);
        self.solution = None;
        Ok(VariableHandle {
            model: self.uid,
            id,
            dim,
            name: name.to_string(),
        })
    }

    /// A variable with a generated name that cannot clash with user names
    /// already registered.
    fn auxiliary_variable(
        &mut self,
        prefix: &str,
        dim: usize,
        domain: Domain,
    ) -> Result<VariableHandle, ModelError> {
        loop {
            let name = format!("{prefix}#{}", self.auto_names);
            self.auto_names += 1;
            if !self.names.contains_key(&name) {
                return self.add_variable(&name, dim, domain);
            }
        }
    }

    pub fn variable(&self, name: &str) -> Option<VariableHandle> {
        self.names.get(name).map(|&id| VariableHandle {
            model: self.uid,
            id,
            dim: self.vars[id].dim,
            name: self.vars[id].name.clone(),
        })
    }

    pub fn num_variables(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_cone_constraints(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| matches!(c, Constraint::Cone { .. }))
            .count()
    }

    fn check_expr(&self, e: &AffineExpr) -> Result<(), ModelError> {
        if let Some(owner) = e.owner() {
            if owner != self.uid {
                return Err(ModelError::ForeignVariable);
            }
        }
        for (_, v, c, _) in e.terms() {
            match self.vars.get(v) {
                Some(var) if c < var.dim => {}
                _ => return Err(ModelError::ForeignVariable),
            }
        }
        e.check_finite()
    }

    fn check_handle(&self, h: &VariableHandle) -> Result<(), ModelError> {
        if h.model != self.uid || h.id >= self.vars.len() {
            return Err(ModelError::ForeignVariable);
        }
        Ok(())
    }

    fn push(&mut self, c: Constraint) -> ConstraintId {
        self.constraints.push(c);
        self.solution = None;
        ConstraintId(self.constraints.len() - 1)
    }

    /// `expr = rhs`, row by row.
    pub fn add_equality(
        &mut self,
        expr: &AffineExpr,
        rhs: &[f64],
    ) -> Result<ConstraintId, ModelError> {
        self.check_expr(expr)?;
        if expr.rows() != rhs.len() {
            return Err(ModelError::Dimension(format!(
                "equality with {} rows but right-hand side of length {}",
                expr.rows(),
                rhs.len()
            )));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(self.push(Constraint::Equality {
            expr: expr.clone(),
            rhs: rhs.to_vec(),
        }))
    }

    /// `expr ≥ 0`, row by row.
    pub fn add_nonnegative(&mut self, expr: &AffineExpr) -> Result<ConstraintId, ModelError> {
        self.add_cone(expr, ConeKind::NonNegative)
    }

    /// `expr ∈ Q^rows`: `expr[0] ≥ ‖expr[1..]‖₂`.
    pub fn add_quadratic_cone(&mut self, expr: &AffineExpr) -> Result<ConstraintId, ModelError> {
        self.add_cone(expr, ConeKind::Quadratic)
    }

    /// `expr ∈ Q_r^rows`: `2·expr[0]·expr[1] ≥ ‖expr[2..]‖₂²`, `expr[0], expr[1] ≥ 0`.
    pub fn add_rotated_cone(&mut self, expr: &AffineExpr) -> Result<ConstraintId, ModelError> {
        self.add_cone(expr, ConeKind::RotatedQuadratic)
    }

    fn add_cone(&mut self, expr: &AffineExpr, kind: ConeKind) -> Result<ConstraintId, ModelError> {
        self.check_expr(expr)?;
        let min_rows = if kind == ConeKind::RotatedQuadratic {
            2
        } else {
            1
        };
        if expr.rows() < min_rows {
            return Err(ModelError::InvalidCone(format!(
                "{} cone needs at least {min_rows} rows, got {}",
                kind.label(),
                expr.rows()
            )));
        }
        Ok(self.push(Constraint::Cone {
            expr: expr.clone(),
            kind,
        }))
    }

    /// Fresh `t` with `(tᵢ, exprᵢ) ∈ Q²` for every row, i.e. `tᵢ ≥ |exprᵢ|`.
    pub fn add_abs_bound(&mut self, expr: &AffineExpr) -> Result<VariableHandle, ModelError> {
        self.check_expr(expr)?;
        let t = self.auxiliary_variable("abs", expr.rows().max(1), Domain::Unbounded)?;
        for i in 0..expr.rows() {
            let pair = AffineExpr::stack(&[AffineExpr::component(&t, i)?, expr.row(i)?])?;
            self.add_quadratic_cone(&pair)?;
        }
        Ok(t)
    }

    /// Fresh scalar `v ≥ ‖Xw − y‖₂²` via `(1/2, v, Xw − y) ∈ Q_r`.
    pub fn add_lsq_epigraph(
        &mut self,
        x: &DMatrix<f64>,
        w: &VariableHandle,
        y: &[f64],
    ) -> Result<VariableHandle, ModelError> {
        self.check_handle(w)?;
        if x.nrows() != y.len() {
            return Err(ModelError::Dimension(format!(
                "design with {} rows but target of length {}",
                x.nrows(),
                y.len()
            )));
        }
        let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
        let resid = AffineExpr::mul(x, w)?.offset(&neg_y)?;
        let v = self.auxiliary_variable("lsq", 1, Domain::Unbounded)?;
        let stack = AffineExpr::stack(&[AffineExpr::scalar(0.5), AffineExpr::var(&v), resid])?;
        self.add_rotated_cone(&stack)?;
        Ok(v)
    }

    pub fn set_objective(&mut self, sense: Sense, expr: &AffineExpr) -> Result<(), ModelError> {
        self.check_expr(expr)?;
        if expr.rows() != 1 {
            return Err(ModelError::Dimension(format!(
                "objective must be scalar, got {} rows",
                expr.rows()
            )));
        }
        self.objective = Some((sense, expr.clone()));
        self.solution = None;
        Ok(())
    }

    /// Lowers the model to standard form. Variable blocks come first, in
    /// creation order, followed by one auxiliary block per cone constraint.
    pub fn compile(&self) -> Result<CompiledModel, ModelError> {
        let (sense, obj) = self.objective.as_ref().ok_or(ModelError::NoObjective)?;

        let mut blocks = Vec::new();
        let mut offsets = Vec::with_capacity(self.vars.len());
        let mut n = 0;
        for v in &self.vars {
            offsets.push(n);
            let kind = match v.domain {
                Domain::NonNegative => ConeKind::NonNegative,
                Domain::Unbounded | Domain::Fixed(_) => ConeKind::Free,
            };
            blocks.push(ConeBlock::new(kind, v.dim)?);
            n += v.dim;
        }

        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cone_blocks = Vec::new();
        for (id, v) in self.vars.iter().enumerate() {
            if let Domain::Fixed(vals) = &v.domain {
                for (k, &val) in vals.iter().enumerate() {
                    trip.push((b.len(), offsets[id] + k, 1.0));
                    b.push(val);
                }
            }
        }
        for (ci, c) in self.constraints.iter().enumerate() {
            match c {
                Constraint::Equality { expr, rhs } => {
                    let base = b.len();
                    for (r, v, comp, x) in expr.terms() {
                        trip.push((base + r, offsets[v] + comp, x));
                    }
                    for (r, val) in rhs.iter().enumerate() {
                        b.push(val - expr.constant_part()[r]);
                    }
                }
                Constraint::Cone { expr, kind } => {
                    // u − (linear part) = constant, u ∈ K
                    let block = ConeBlock::new(*kind, expr.rows())?;
                    let base = b.len();
                    for r in 0..expr.rows() {
                        trip.push((base + r, n + r, 1.0));
                    }
                    for (r, v, comp, x) in expr.terms() {
                        trip.push((base + r, offsets[v] + comp, -x));
                    }
                    b.extend_from_slice(expr.constant_part());
                    cone_blocks.push((ConstraintId(ci), n, block));
                    blocks.push(block);
                    n += expr.rows();
                }
            }
        }

        let sign = match sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut c = vec![0.0; n];
        for (_, v, comp, x) in obj.terms() {
            c[offsets[v] + comp] += sign * x;
        }
        let a = CscMatrix::from_triplets(b.len(), n, &trip)?;
        let problem = StandardFormProblem::new(c, a, b, ConeProduct::new(blocks))?;
        Ok(CompiledModel {
            problem,
            variable_offsets: offsets,
            cone_blocks,
            objective_constant: sign * obj.constant_part()[0],
        })
    }

    /// Compiles and solves. A non-optimal status is not an error here; it is
    /// reported in the outcome and makes [`Model::level`] fail.
    pub fn solve(&mut self, config: &SolverConfig) -> Result<SolverOutcome, ModelError> {
        let compiled = self.compile()?;
        let outcome = solver::solve(&compiled.problem, config)?;
        self.solution = Some(Solution {
            outcome: outcome.clone(),
            compiled,
        });
        Ok(outcome)
    }

    pub fn outcome(&self) -> Option<&SolverOutcome> {
        self.solution.as_ref().map(|s| &s.outcome)
    }

    fn optimal(&self) -> Result<&Solution, ModelError> {
        let sol = self.solution.as_ref().ok_or(ModelError::NotSolved)?;
        if sol.outcome.status != Status::Optimal {
            return Err(ModelError::NoSolution(sol.outcome.status));
        }
        Ok(sol)
    }

    /// Primal values of a variable at the optimum.
    pub fn level(&self, h: &VariableHandle) -> Result<Vec<f64>, ModelError> {
        self.check_handle(h)?;
        let sol = self.optimal()?;
        let off = sol.compiled.variable_offsets[h.id];
        Ok(sol.outcome.x[off..off + h.dim].to_vec())
    }

    /// Value of an expression at the optimum.
    pub fn evaluate(&self, e: &AffineExpr) -> Result<Vec<f64>, ModelError> {
        self.check_expr(e)?;
        let sol = self.optimal()?;
        let offs = &sol.compiled.variable_offsets;
        Ok(e.evaluate(|v, c| sol.outcome.x[offs[v] + c]))
    }

    /// Values of the auxiliary cone variables of a cone constraint.
    pub fn cone_level(&self, id: ConstraintId) -> Result<Vec<f64>, ModelError> {
        let sol = self.optimal()?;
        let (_, off, block) = sol
            .compiled
            .cone_blocks
            .iter()
            .find(|(c, _, _)| *c == id)
            .ok_or_else(|| {
                ModelError::InvalidCone(format!("constraint {} is not a cone constraint", id.0))
            })?;
        Ok(sol.outcome.x[*off..*off + block.dim()].to_vec())
    }

    /// Objective value in the model's own sense, including constants.
    pub fn objective_value(&self) -> Result<f64, ModelError> {
        let sol = self.optimal()?;
        let (sense, _) = self.objective.as_ref().ok_or(ModelError::NoObjective)?;
        let min_value =
            sol.outcome.primal_objective(&sol.compiled.problem) + sol.compiled.objective_constant;
        Ok(match sense {
            Sense::Minimize => min_value,
            Sense::Maximize => -min_value,
        })
    }
}
