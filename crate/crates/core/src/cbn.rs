//! Discrete causal Bayes nets with exact inference by enumeration.
//!
//! A [`CausalBayesNet`] pairs a [`Dag`] over finite-domain [`Variable`]s with
//! one conditional probability table per variable. The joint distribution is
//! the product of each variable's table entry given its parents. Every query
//! (marginal, conditional, do-query) is answered by summing that product over
//! the full assignments consistent with the query, so results are exact up to
//! the scalar type's arithmetic.
//!
//! Do-queries follow the non-descendant restriction rule: given complete
//! evidence `v`, the probability of a target under `do(X = x)` is the ordinary
//! conditional given `X = x` together with `v` restricted to the
//! non-descendants of `X`. Incomplete evidence averages that quantity over the
//! complete assignments compatible with the evidence, weighted by their
//! posterior probability.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::{compensated_sum, convert, tolerance, CompensatedSum, Scalar};

/// Row-sum tolerance for conditional probability tables.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbnError {
    #[error("variable `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("variable `{variable}` repeats domain value `{value}`")]
    DuplicateValue { variable: String, value: String },
    #[error("variable `{0}` is declared twice")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{value}` is not in the domain of `{variable}`")]
    UnknownValue { variable: String, value: String },
    #[error("variable `{variable}` lists parent `{parent}` more than once")]
    DuplicateParent { variable: String, parent: String },
    #[error("graph has a cycle through {0:?}")]
    CyclicGraph(Vec<String>),
    #[error("assignment does not cover variable `{0}`")]
    IncompleteAssignment(String),
    #[error("variable `{0}` is assigned twice")]
    RepeatedAssignment(String),
    #[error("row for `{variable}` has {got} entries, expected {expected}")]
    RowLength {
        variable: String,
        expected: usize,
        got: usize,
    },
    #[error("parent values {values:?} do not index a row of `{variable}`")]
    RowIndex {
        variable: String,
        values: Vec<usize>,
    },
    #[error("table does not belong to this graph: {0}")]
    CptMismatch(String),
    #[error("invalid net: {0}")]
    Invalid(ValidationReport),
    #[error("target and conditioning event both constrain `{0}`")]
    OverlappingAssignments(String),
    #[error("conditioning event has probability zero")]
    ZeroProbabilityCondition,
    #[error("evidence has probability zero")]
    ZeroProbabilityEvidence,
}

/// Index of a variable in its [`Dag`], in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Named variable with an ordered finite domain of value labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    name: String,
    domain: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Result<Self, CbnError> {
        let name = name.into();
        let domain: Vec<String> = domain.into_iter().map(Into::into).collect();
        if domain.is_empty() {
            return Err(CbnError::EmptyDomain(name));
        }
        for (i, value) in domain.iter().enumerate() {
            if domain[..i].contains(value) {
                return Err(CbnError::DuplicateValue {
                    variable: name,
                    value: value.clone(),
                });
            }
        }
        Ok(Self { name, domain })
    }

    /// Variable over `{"0", "1"}`.
    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            domain: vec!["0".into(), "1".into()],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn cardinality(&self) -> usize {
        self.domain.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.domain.iter().position(|v| v == label)
    }
}

/// Directed graph over declared variables. Acyclicity is checked by
/// [`Dag::topological_order`] and enforced when a net is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    variables: Vec<Variable>,
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
    index: HashMap<String, VarId>,
}

impl Dag {
    /// Builds a graph from `(variable, parent names)` pairs. Parents may be
    /// declared before or after their children.
    pub fn new<P, S>(nodes: impl IntoIterator<Item = (Variable, P)>) -> Result<Self, CbnError>
    where
        P: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut variables = Vec::new();
        let mut parent_names: Vec<Vec<String>> = Vec::new();
        let mut index = HashMap::new();
        for (var, parents) in nodes {
            if index
                .insert(var.name.clone(), VarId(variables.len()))
                .is_some()
            {
                return Err(CbnError::DuplicateVariable(var.name));
            }
            parent_names.push(
                parents
                    .into_iter()
                    .map(|p| p.as_ref().to_string())
                    .collect(),
            );
            variables.push(var);
        }
        let mut parents = Vec::with_capacity(variables.len());
        let mut children = vec![Vec::new(); variables.len()];
        for (child, names) in parent_names.iter().enumerate() {
            let mut ids = Vec::with_capacity(names.len());
            for name in names {
                let id = *index
                    .get(name)
                    .ok_or_else(|| CbnError::UnknownVariable(name.clone()))?;
                if ids.contains(&id) {
                    return Err(CbnError::DuplicateParent {
                        variable: variables[child].name.clone(),
                        parent: name.clone(),
                    });
                }
                ids.push(id);
                children[id.0].push(VarId(child));
            }
            parents.push(ids);
        }
        Ok(Self {
            variables,
            parents,
            children,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn id(&self, name: &str) -> Result<VarId, CbnError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| CbnError::UnknownVariable(name.to_string()))
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.parents[id.0]
    }

    pub fn children(&self, id: VarId) -> &[VarId] {
        &self.children[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    /// Kahn's algorithm, always releasing the earliest-declared ready variable.
    pub fn topological_order(&self) -> Result<Vec<VarId>, CbnError> {
        let mut pending: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.len()).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(next) = ready.pop_first() {
            order.push(VarId(next));
            for child in &self.children[next] {
                pending[child.0] -= 1;
                if pending[child.0] == 0 {
                    ready.insert(child.0);
                }
            }
        }
        if order.len() < self.len() {
            let stuck = (0..self.len())
                .filter(|&i| pending[i] > 0)
                .map(|i| self.variables[i].name.clone())
                .collect();
            return Err(CbnError::CyclicGraph(stuck));
        }
        Ok(order)
    }

    /// Variables reachable from `id` along directed edges, excluding `id`.
    pub fn descendants(&self, id: VarId) -> BTreeSet<VarId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<VarId> = self.children[id.0].iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if seen.insert(v) {
                queue.extend(self.children[v.0].iter().copied());
            }
        }
        seen.remove(&id);
        seen
    }

    /// Variables that are neither `id` nor reachable from it.
    pub fn non_descendants(&self, id: VarId) -> BTreeSet<VarId> {
        let desc = self.descendants(id);
        self.ids()
            .filter(|v| *v != id && !desc.contains(v))
            .collect()
    }

    pub fn non_descendants_by_name(&self, name: &str) -> Result<Vec<&str>, CbnError> {
        let id = self.id(name)?;
        Ok(self
            .non_descendants(id)
            .into_iter()
            .map(|v| self.variables[v.0].name())
            .collect())
    }
}

/// Conditional probability table of one variable, one row per combination of
/// parent values. Rows are indexed in mixed radix over the parents in their
/// declared order, with the last parent varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt<T> {
    variable: VarId,
    cardinality: usize,
    radices: Vec<usize>,
    rows: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Cpt<T> {
    /// Empty table shaped for `variable` in `dag`.
    pub fn for_variable(dag: &Dag, variable: VarId) -> Self {
        let radices: Vec<usize> = dag
            .parents(variable)
            .iter()
            .map(|p| dag.variable(*p).cardinality())
            .collect();
        let row_count = radices.iter().product();
        Self {
            variable,
            cardinality: dag.variable(variable).cardinality(),
            radices,
            rows: vec![None; row_count],
        }
    }

    /// Table of a parentless variable.
    pub fn root(dag: &Dag, variable: VarId, probs: Vec<T>) -> Result<Self, CbnError> {
        let mut cpt = Self::for_variable(dag, variable);
        cpt.set_row(dag, &[], probs)?;
        Ok(cpt)
    }

    pub fn variable(&self) -> VarId {
        self.variable
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_index(&self, parent_values: &[usize]) -> Option<usize> {
        if parent_values.len() != self.radices.len() {
            return None;
        }
        let mut idx = 0;
        for (v, r) in parent_values.iter().zip(&self.radices) {
            if v >= r {
                return None;
            }
            idx = idx * r + v;
        }
        Some(idx)
    }

    /// Parent value indices of row `row`; inverse of [`Cpt::row_index`].
    pub fn parent_values(&self, mut row: usize) -> Vec<usize> {
        let mut values = vec![0; self.radices.len()];
        for (slot, r) in values.iter_mut().zip(&self.radices).rev() {
            *slot = row % r;
            row /= r;
        }
        values
    }

    pub fn set_row(
        &mut self,
        dag: &Dag,
        parent_values: &[usize],
        probs: Vec<T>,
    ) -> Result<(), CbnError> {
        let name = || dag.variable(self.variable).name.clone();
        if probs.len() != self.cardinality {
            return Err(CbnError::RowLength {
                variable: name(),
                expected: self.cardinality,
                got: probs.len(),
            });
        }
        let idx = self
            .row_index(parent_values)
            .ok_or_else(|| CbnError::RowIndex {
                variable: name(),
                values: parent_values.to_vec(),
            })?;
        self.rows[idx] = Some(probs);
        Ok(())
    }

    /// Row by parent labels, in the variable's declared parent order.
    pub fn set_row_by_labels(
        &mut self,
        dag: &Dag,
        parent_labels: &[&str],
        probs: Vec<T>,
    ) -> Result<(), CbnError> {
        let parents = dag.parents(self.variable);
        if parent_labels.len() != parents.len() {
            return Err(CbnError::RowIndex {
                variable: dag.variable(self.variable).name.clone(),
                values: vec![],
            });
        }
        let mut values = Vec::with_capacity(parents.len());
        for (label, p) in parent_labels.iter().zip(parents) {
            let var = dag.variable(*p);
            values.push(
                var.value_index(label)
                    .ok_or_else(|| CbnError::UnknownValue {
                        variable: var.name.clone(),
                        value: label.to_string(),
                    })?,
            );
        }
        self.set_row(dag, &values, probs)
    }

    pub fn row(&self, index: usize) -> Option<&[T]> {
        self.rows.get(index).and_then(|r| r.as_deref())
    }

    fn map_scalar<U: Scalar>(&self) -> Cpt<U> {
        Cpt {
            variable: self.variable,
            cardinality: self.cardinality,
            radices: self.radices.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.as_ref().map(|row| row.iter().map(convert).collect()))
                .collect(),
        }
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Cycle {
        variables: Vec<String>,
    },
    MissingCpt {
        variable: String,
    },
    CptShapeMismatch {
        variable: String,
    },
    MissingRow {
        variable: String,
        parent_values: Vec<String>,
    },
    RowSumViolation {
        variable: String,
        parent_values: Vec<String>,
        sum: f64,
    },
    EntryOutOfRange {
        variable: String,
        parent_values: Vec<String>,
        value: String,
        entry: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("no violations");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            match v {
                Violation::Cycle { variables } => write!(f, "cycle through {variables:?}")?,
                Violation::MissingCpt { variable } => write!(f, "no table for `{variable}`")?,
                Violation::CptShapeMismatch { variable } => {
                    write!(f, "table for `{variable}` does not match its parents")?
                }
                Violation::MissingRow {
                    variable,
                    parent_values,
                } => write!(f, "`{variable}` has no row for parents {parent_values:?}")?,
                Violation::RowSumViolation {
                    variable,
                    parent_values,
                    sum,
                } => write!(f, "`{variable}` row {parent_values:?} sums to {sum}")?,
                Violation::EntryOutOfRange {
                    variable,
                    parent_values,
                    value,
                    entry,
                } => write!(
                    f,
                    "`{variable}` row {parent_values:?} gives `{value}` probability {entry}"
                )?,
            }
        }
        Ok(())
    }
}

/// Checks acyclicity, table coverage, row totality, entry range, and row sums.
pub fn validate<T: Scalar>(dag: &Dag, cpts: &[Cpt<T>]) -> ValidationReport {
    let mut violations = Vec::new();
    if let Err(CbnError::CyclicGraph(variables)) = dag.topological_order() {
        violations.push(Violation::Cycle { variables });
    }
    let tol: T = tolerance(ROW_SUM_TOLERANCE);
    for id in dag.ids() {
        let var = dag.variable(id);
        let Some(cpt) = cpts.iter().find(|c| c.variable == id) else {
            violations.push(Violation::MissingCpt {
                variable: var.name.clone(),
            });
            continue;
        };
        let expected = Cpt::<T>::for_variable(dag, id);
        if cpt.radices != expected.radices || cpt.cardinality != expected.cardinality {
            violations.push(Violation::CptShapeMismatch {
                variable: var.name.clone(),
            });
            continue;
        }
        for (row_idx, row) in cpt.rows.iter().enumerate() {
            let labels = || {
                cpt.parent_values(row_idx)
                    .iter()
                    .zip(dag.parents(id))
                    .map(|(v, p)| dag.variable(*p).domain[*v].clone())
                    .collect::<Vec<_>>()
            };
            let Some(row) = row else {
                violations.push(Violation::MissingRow {
                    variable: var.name.clone(),
                    parent_values: labels(),
                });
                continue;
            };
            for (value, entry) in var.domain.iter().zip(row) {
                if !crate::scalar::is_probability(entry) {
                    violations.push(Violation::EntryOutOfRange {
                        variable: var.name.clone(),
                        parent_values: labels(),
                        value: value.clone(),
                        entry: entry.to_f64_lossy(),
                    });
                }
            }
            let sum = compensated_sum(row.iter().cloned());
            if (sum.clone() - T::one()).abs() > tol {
                violations.push(Violation::RowSumViolation {
                    variable: var.name.clone(),
                    parent_values: labels(),
                    sum: sum.to_f64_lossy(),
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Total map from every variable to a value index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FullAssignment(Vec<usize>);

impl FullAssignment {
    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, id: VarId) -> usize {
        self.0[id.0]
    }

    pub fn to_partial(&self) -> PartialAssignment {
        PartialAssignment(self.0.iter().copied().map(Some).collect())
    }

    /// Keeps only the variables in `keep`.
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a VarId>) -> PartialAssignment {
        let mut out = PartialAssignment(vec![None; self.0.len()]);
        for id in keep {
            out.0[id.0] = Some(self.0[id.0]);
        }
        out
    }
}

/// Partial map from variables to value indices; a conjunctive event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartialAssignment(Vec<Option<usize>>);

impl PartialAssignment {
    pub fn get(&self, id: VarId) -> Option<usize> {
        self.0[id.0]
    }

    pub fn with(mut self, id: VarId, value: usize) -> Self {
        self.0[id.0] = Some(value);
        self
    }

    pub fn assigned(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (VarId(i), v)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    pub fn first_overlap(&self, other: &Self) -> Option<VarId> {
        self.0
            .iter()
            .zip(&other.0)
            .position(|(a, b)| a.is_some() && b.is_some())
            .map(VarId)
    }

    /// Conjunction of two events; `None` when they disagree on a variable.
    pub fn merge(&self, other: &Self) -> Option<Self> {
        let mut out = self.0.clone();
        for (slot, v) in out.iter_mut().zip(&other.0) {
            match (*slot, *v) {
                (Some(a), Some(b)) if a != b => return None,
                (None, Some(b)) => *slot = Some(b),
                _ => {}
            }
        }
        Some(Self(out))
    }

    pub fn is_satisfied_by(&self, full: &[usize]) -> bool {
        self.0
            .iter()
            .zip(full)
            .all(|(want, got)| want.is_none_or(|w| w == *got))
    }
}

/// Validated causal Bayes net. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalBayesNet<T> {
    dag: Dag,
    cpts: Vec<Cpt<T>>,
    order: Vec<VarId>,
}

impl<T: Scalar> CausalBayesNet<T> {
    /// Builds a net, rejecting it if [`validate`] reports anything.
    pub fn new(dag: Dag, cpts: Vec<Cpt<T>>) -> Result<Self, CbnError> {
        let report = validate(&dag, &cpts);
        if !report.is_valid() {
            return Err(CbnError::Invalid(report));
        }
        if cpts.len() != dag.len() {
            return Err(CbnError::CptMismatch(format!(
                "{} tables for {} variables",
                cpts.len(),
                dag.len()
            )));
        }
        let mut cpts = cpts;
        cpts.sort_by_key(|c| c.variable);
        let order = dag.topological_order()?;
        Ok(Self { dag, cpts, order })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpt(&self, id: VarId) -> &Cpt<T> {
        &self.cpts[id.0]
    }

    pub fn topological_order(&self) -> &[VarId] {
        &self.order
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.dag, &self.cpts)
    }

    pub fn map_scalar<U: Scalar>(&self) -> CausalBayesNet<U> {
        CausalBayesNet {
            dag: self.dag.clone(),
            cpts: self.cpts.iter().map(Cpt::map_scalar).collect(),
            order: self.order.clone(),
        }
    }

    fn resolve(&self, name: &str, label: &str) -> Result<(VarId, usize), CbnError> {
        let id = self.dag.id(name)?;
        let var = self.dag.variable(id);
        let value = var
            .value_index(label)
            .ok_or_else(|| CbnError::UnknownValue {
                variable: name.to_string(),
                value: label.to_string(),
            })?;
        Ok((id, value))
    }

    pub fn value_of(&self, name: &str, label: &str) -> Result<(VarId, usize), CbnError> {
        self.resolve(name, label)
    }

    pub fn empty_assignment(&self) -> PartialAssignment {
        PartialAssignment(vec![None; self.dag.len()])
    }

    /// Event from `(variable, value label)` pairs.
    pub fn partial<N: AsRef<str>, L: AsRef<str>>(
        &self,
        pairs: &[(N, L)],
    ) -> Result<PartialAssignment, CbnError> {
        let mut out = self.empty_assignment();
        for (name, label) in pairs {
            let (id, value) = self.resolve(name.as_ref(), label.as_ref())?;
            if out.0[id.0].is_some() {
                return Err(CbnError::RepeatedAssignment(name.as_ref().to_string()));
            }
            out.0[id.0] = Some(value);
        }
        Ok(out)
    }

    pub fn full<N: AsRef<str>, L: AsRef<str>>(
        &self,
        pairs: &[(N, L)],
    ) -> Result<FullAssignment, CbnError> {
        self.complete(&self.partial(pairs)?)
    }

    /// Turns a partial assignment covering every variable into a full one.
    pub fn complete(&self, partial: &PartialAssignment) -> Result<FullAssignment, CbnError> {
        partial
            .0
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| CbnError::IncompleteAssignment(self.dag.variables[i].name.clone()))
            })
            .collect::<Result<_, _>>()
            .map(FullAssignment)
    }

    pub fn labels(&self, full: &FullAssignment) -> Vec<(&str, &str)> {
        self.dag
            .variables
            .iter()
            .zip(&full.0)
            .map(|(var, v)| (var.name(), var.domain[*v].as_str()))
            .collect()
    }

    /// Factorised joint: product of each variable's table entry given its parents.
    pub fn joint_probability(&self, v: &FullAssignment) -> T {
        self.joint_of(&v.0)
    }

    fn joint_of(&self, values: &[usize]) -> T {
        let mut p = T::one();
        let mut parent_values = Vec::new();
        for id in &self.order {
            parent_values.clear();
            parent_values.extend(self.dag.parents(*id).iter().map(|q| values[q.0]));
            let cpt = &self.cpts[id.0];
            let row = cpt
                .row_index(&parent_values)
                .and_then(|r| cpt.row(r))
                .expect("validated table is total");
            let entry = &row[values[id.0]];
            if entry.is_zero() {
                return T::zero();
            }
            p = p * entry.clone();
        }
        p
    }

    /// Calls `visit` with every full assignment consistent with `fixed`, in
    /// lexicographic order of the free variables (last variable fastest).
    pub fn for_each_extension(&self, fixed: &PartialAssignment, mut visit: impl FnMut(&[usize])) {
        let free: Vec<usize> = (0..self.dag.len())
            .filter(|&i| fixed.0[i].is_none())
            .collect();
        let mut values: Vec<usize> = fixed.0.iter().map(|v| v.unwrap_or(0)).collect();
        loop {
            visit(&values);
            let mut k = free.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                let i = free[k];
                values[i] += 1;
                if values[i] < self.dag.variables[i].cardinality() {
                    break;
                }
                values[i] = 0;
            }
        }
    }

    pub fn all_assignments(&self) -> Vec<FullAssignment> {
        let mut out = Vec::new();
        self.for_each_extension(&self.empty_assignment(), |v| {
            out.push(FullAssignment(v.to_vec()))
        });
        out
    }

    /// Sum of the joint over every full assignment.
    pub fn total_mass(&self) -> T {
        self.event_probability(&self.empty_assignment())
    }

    /// Probability of a conjunctive event, by summing the joint over its extensions.
    pub fn event_probability(&self, e: &PartialAssignment) -> T {
        let mut acc = CompensatedSum::new();
        self.for_each_extension(e, |v| acc.add(self.joint_of(v)));
        acc.total()
    }

    /// Probability that any of several conjunctive events holds.
    pub fn disjunction_probability(&self, events: &[PartialAssignment]) -> T {
        let mut acc = CompensatedSum::new();
        self.for_each_extension(&self.empty_assignment(), |v| {
            if events.iter().any(|e| e.is_satisfied_by(v)) {
                acc.add(self.joint_of(v));
            }
        });
        acc.total()
    }

    /// `P(target | given)`; the two events must constrain disjoint variables.
    pub fn conditional_probability(
        &self,
        target: &PartialAssignment,
        given: &PartialAssignment,
    ) -> Result<T, CbnError> {
        if let Some(id) = target.first_overlap(given) {
            return Err(CbnError::OverlappingAssignments(
                self.dag.variable(id).name.clone(),
            ));
        }
        self.conditional_merged(target, given)
    }

    /// `P(target ∧ given) / P(given)`, where overlapping constraints are
    /// conjoined and a contradiction makes the numerator zero.
    fn conditional_merged(
        &self,
        target: &PartialAssignment,
        given: &PartialAssignment,
    ) -> Result<T, CbnError> {
        let denom = self.event_probability(given);
        if denom.is_zero() {
            return Err(CbnError::ZeroProbabilityCondition);
        }
        match target.merge(given) {
            Some(joint) => Ok(self.event_probability(&joint) / denom),
            None => Ok(T::zero()),
        }
    }

    /// The event `{x = xval}` conjoined with `v` restricted to the
    /// non-descendants of `x`.
    pub fn intervention_condition(
        &self,
        x: VarId,
        xval: usize,
        v: &FullAssignment,
    ) -> PartialAssignment {
        v.restrict(&self.dag.non_descendants(x)).with(x, xval)
    }

    /// Probability of `target` had `x` been set to `xval`, given complete evidence `v`.
    pub fn do_query_complete(
        &self,
        x: VarId,
        xval: usize,
        v: &FullAssignment,
        target: &PartialAssignment,
    ) -> Result<T, CbnError> {
        self.check_value(x, xval)?;
        let cond = self.intervention_condition(x, xval, v);
        self.conditional_merged(target, &cond)
    }

    /// Posterior-weighted average of [`CausalBayesNet::do_query_complete`] over
    /// the full assignments compatible with `evidence`.
    ///
    /// Assignments with zero posterior weight are skipped before their inner
    /// query is evaluated.
    pub fn do_query_evidence(
        &self,
        x: VarId,
        xval: usize,
        evidence: &PartialAssignment,
        target: &PartialAssignment,
    ) -> Result<T, CbnError> {
        self.check_value(x, xval)?;
        let p_evidence = self.event_probability(evidence);
        if p_evidence.is_zero() {
            return Err(CbnError::ZeroProbabilityEvidence);
        }
        let mut worlds = Vec::new();
        self.for_each_extension(evidence, |v| {
            let p = self.joint_of(v);
            if !p.is_zero() {
                worlds.push((FullAssignment(v.to_vec()), p));
            }
        });
        self.weighted_do_query(x, xval, worlds, p_evidence, target)
    }

    /// Like [`CausalBayesNet::do_query_evidence`], with evidence given as a set
    /// of alternative conjunctive events.
    pub fn do_query_any_evidence(
        &self,
        x: VarId,
        xval: usize,
        evidence: &[PartialAssignment],
        target: &PartialAssignment,
    ) -> Result<T, CbnError> {
        self.check_value(x, xval)?;
        let mut worlds = Vec::new();
        self.for_each_extension(&self.empty_assignment(), |v| {
            if evidence.iter().any(|e| e.is_satisfied_by(v)) {
                let p = self.joint_of(v);
                if !p.is_zero() {
                    worlds.push((FullAssignment(v.to_vec()), p));
                }
            }
        });
        let p_evidence = compensated_sum(worlds.iter().map(|(_, p)| p.clone()));
        if p_evidence.is_zero() {
            return Err(CbnError::ZeroProbabilityEvidence);
        }
        self.weighted_do_query(x, xval, worlds, p_evidence, target)
    }

    fn weighted_do_query(
        &self,
        x: VarId,
        xval: usize,
        worlds: Vec<(FullAssignment, T)>,
        p_evidence: T,
        target: &PartialAssignment,
    ) -> Result<T, CbnError> {
        // The inner query only sees v restricted to NonDes[x].
        let mut inner_cache: HashMap<PartialAssignment, T> = HashMap::new();
        let mut acc = CompensatedSum::new();
        for (v, p) in worlds {
            let cond = self.intervention_condition(x, xval, &v);
            let inner = match inner_cache.get(&cond) {
                Some(q) => q.clone(),
                None => {
                    let q = self.conditional_merged(target, &cond)?;
                    inner_cache.insert(cond, q.clone());
                    q
                }
            };
            acc.add(inner * (p / p_evidence.clone()));
        }
        Ok(acc.total())
    }

    fn check_value(&self, x: VarId, xval: usize) -> Result<(), CbnError> {
        let var = self.dag.variable(x);
        if xval >= var.cardinality() {
            return Err(CbnError::UnknownValue {
                variable: var.name.clone(),
                value: xval.to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3_dag() -> Dag {
        Dag::new([
            (Variable::binary("Assign"), vec![]),
            (Variable::new("Indiv", ["1", "2"]).unwrap(), vec![]),
            (Variable::binary("Take"), vec!["Assign", "Indiv"]),
            (Variable::binary("Cure"), vec!["Take", "Indiv"]),
        ])
        .unwrap()
    }

    /// The IV net for P1 = (0.2, 0.8, 0.1, 0.7), P2 = (0.5, 0.5, 0.3, 0.9).
    fn two_mixed() -> CausalBayesNet<f64> {
        let dag = fig3_dag();
        let id = |n| dag.id(n).unwrap();
        let assign = Cpt::root(&dag, id("Assign"), vec![0.5, 0.5]).unwrap();
        let indiv = Cpt::root(&dag, id("Indiv"), vec![0.5, 0.5]).unwrap();
        let mut take = Cpt::for_variable(&dag, id("Take"));
        let mut cure = Cpt::for_variable(&dag, id("Cure"));
        let tau = [[0.2, 0.8], [0.5, 0.5]];
        let kappa = [[0.1, 0.7], [0.3, 0.9]];
        for i in 0..2 {
            for a in 0..2 {
                take.set_row(&dag, &[a, i], vec![1.0 - tau[i][a], tau[i][a]])
                    .unwrap();
                cure.set_row(&dag, &[a, i], vec![1.0 - kappa[i][a], kappa[i][a]])
                    .unwrap();
            }
        }
        CausalBayesNet::new(dag, vec![assign, indiv, take, cure]).unwrap()
    }

    fn names(dag: &Dag, ids: impl IntoIterator<Item = VarId>) -> Vec<String> {
        ids.into_iter()
            .map(|i| dag.variable(i).name().to_string())
            .collect()
    }

    #[test]
    fn topological_order_is_stable() {
        let dag = fig3_dag();
        assert_eq!(
            names(&dag, dag.topological_order().unwrap()),
            ["Assign", "Indiv", "Take", "Cure"]
        );
        let reversed = Dag::new([
            (Variable::binary("Cure"), vec!["Take", "Indiv"]),
            (Variable::binary("Take"), vec!["Assign", "Indiv"]),
            (Variable::new("Indiv", ["1", "2"]).unwrap(), vec![]),
            (Variable::binary("Assign"), vec![]),
        ])
        .unwrap();
        assert_eq!(
            names(&reversed, reversed.topological_order().unwrap()),
            ["Indiv", "Assign", "Take", "Cure"]
        );
    }

    #[test]
    fn topological_order_single_and_cyclic() {
        let single = Dag::new([(Variable::binary("A"), Vec::<&str>::new())]).unwrap();
        assert_eq!(single.topological_order().unwrap(), [VarId(0)]);
        let cyclic = Dag::new([
            (Variable::binary("A"), vec!["B"]),
            (Variable::binary("B"), vec!["A"]),
        ])
        .unwrap();
        assert!(matches!(
            cyclic.topological_order(),
            Err(CbnError::CyclicGraph(_))
        ));
    }

    #[test]
    fn dag_construction_errors() {
        assert_eq!(
            Dag::new([(Variable::binary("A"), vec!["Z"])]).unwrap_err(),
            CbnError::UnknownVariable("Z".into())
        );
        assert!(matches!(
            Dag::new([
                (Variable::binary("A"), Vec::<&str>::new()),
                (Variable::binary("A"), vec![]),
            ]),
            Err(CbnError::DuplicateVariable(_))
        ));
        assert!(matches!(
            Variable::new("V", ["x", "x"]),
            Err(CbnError::DuplicateValue { .. })
        ));
        assert!(matches!(
            Variable::new("V", Vec::<String>::new()),
            Err(CbnError::EmptyDomain(_))
        ));
    }

    #[test]
    fn non_descendants_on_iv_graph() {
        let dag = fig3_dag();
        assert_eq!(
            dag.non_descendants_by_name("Take").unwrap(),
            ["Assign", "Indiv"]
        );
        assert_eq!(
            dag.non_descendants_by_name("Cure").unwrap(),
            ["Assign", "Indiv", "Take"]
        );
        assert_eq!(dag.non_descendants_by_name("Assign").unwrap(), ["Indiv"]);
        assert!(matches!(
            dag.non_descendants_by_name("Nope"),
            Err(CbnError::UnknownVariable(_))
        ));
    }

    #[test]
    fn joint_probability_examples() {
        let net = two_mixed();
        let v = net
            .full(&[
                ("Assign", "1"),
                ("Indiv", "1"),
                ("Take", "1"),
                ("Cure", "1"),
            ])
            .unwrap();
        assert!((net.joint_probability(&v) - 0.5 * 0.5 * 0.8 * 0.7).abs() < 1e-15);
        assert!((net.joint_probability(&v) - 0.14).abs() < 1e-12);

        let dag = Dag::new([
            (Variable::binary("A"), vec![]),
            (Variable::binary("B"), vec!["A"]),
        ])
        .unwrap();
        let a = Cpt::root(&dag, VarId(0), vec![0.0, 1.0]).unwrap();
        let mut b = Cpt::for_variable(&dag, VarId(1));
        b.set_row(&dag, &[0], vec![1.0, 0.0]).unwrap();
        b.set_row(&dag, &[1], vec![1.0, 0.0]).unwrap();
        let point = CausalBayesNet::new(dag, vec![a, b]).unwrap();
        assert_eq!(
            point.joint_probability(&point.full(&[("A", "1"), ("B", "0")]).unwrap()),
            1.0
        );
        assert_eq!(
            point.joint_probability(&point.full(&[("A", "0"), ("B", "0")]).unwrap()),
            0.0
        );
    }

    #[test]
    fn event_probability_examples() {
        let net = two_mixed();
        assert!((net.event_probability(&net.empty_assignment()) - 1.0).abs() < 1e-15);
        let e = net.partial(&[("Take", "1"), ("Assign", "1")]).unwrap();
        assert!((net.event_probability(&e) - 0.325).abs() < 1e-12);
        let full = net
            .full(&[
                ("Assign", "0"),
                ("Indiv", "2"),
                ("Take", "1"),
                ("Cure", "0"),
            ])
            .unwrap();
        assert_eq!(
            net.event_probability(&full.to_partial()),
            net.joint_probability(&full)
        );
    }

    #[test]
    fn conditional_probability_examples() {
        let net = two_mixed();
        let a1 = net.partial(&[("Assign", "1")]).unwrap();
        let take = net.partial(&[("Take", "1")]).unwrap();
        let cure = net.partial(&[("Cure", "1")]).unwrap();
        assert!((net.conditional_probability(&take, &a1).unwrap() - 0.65).abs() < 1e-12);
        assert!((net.conditional_probability(&cure, &a1).unwrap() - 0.59).abs() < 1e-12);
        assert!(matches!(
            net.conditional_probability(&a1, &a1),
            Err(CbnError::OverlappingAssignments(_))
        ));
    }

    #[test]
    fn conditional_on_impossible_event_errors() {
        let dag = Dag::new([(Variable::binary("A"), Vec::<&str>::new())]).unwrap();
        let root = Cpt::root(&dag, VarId(0), vec![1.0, 0.0]).unwrap();
        let net = CausalBayesNet::new(dag, vec![root]).unwrap();
        let a1 = net.partial(&[("A", "1")]).unwrap();
        assert_eq!(
            net.conditional_probability(&net.empty_assignment(), &a1),
            Err(CbnError::ZeroProbabilityCondition)
        );
    }

    #[test]
    fn do_query_complete_examples() {
        let net = two_mixed();
        let (take, t1) = net.value_of("Take", "1").unwrap();
        let (assign, a1) = net.value_of("Assign", "1").unwrap();
        let cure1 = net.partial(&[("Cure", "1")]).unwrap();
        let v = net
            .full(&[
                ("Assign", "0"),
                ("Indiv", "1"),
                ("Take", "0"),
                ("Cure", "0"),
            ])
            .unwrap();
        let q = net.do_query_complete(take, t1, &v, &cure1).unwrap();
        assert!((q - 0.7).abs() < 1e-12);

        let v2 = net
            .full(&[
                ("Assign", "0"),
                ("Indiv", "2"),
                ("Take", "0"),
                ("Cure", "1"),
            ])
            .unwrap();
        let take1 = net.partial(&[("Take", "1")]).unwrap();
        let q = net.do_query_complete(assign, a1, &v2, &take1).unwrap();
        assert!((q - 0.5).abs() < 1e-12);

        let q = net.do_query_complete(take, t1, &v, &take1).unwrap();
        assert_eq!(q, 1.0);
    }

    #[test]
    fn do_query_evidence_examples() {
        let net = two_mixed();
        let (take, t1) = net.value_of("Take", "1").unwrap();
        let cure1 = net.partial(&[("Cure", "1")]).unwrap();

        let indiv1 = net.partial(&[("Indiv", "1")]).unwrap();
        let q = net.do_query_evidence(take, t1, &indiv1, &cure1).unwrap();
        assert!((q - 0.7).abs() < 1e-12);

        let q = net
            .do_query_evidence(take, t1, &net.empty_assignment(), &cure1)
            .unwrap();
        assert!((q - 0.8).abs() < 1e-12);

        let v = net
            .full(&[
                ("Assign", "1"),
                ("Indiv", "2"),
                ("Take", "0"),
                ("Cure", "1"),
            ])
            .unwrap();
        assert_eq!(
            net.do_query_evidence(take, t1, &v.to_partial(), &cure1)
                .unwrap(),
            net.do_query_complete(take, t1, &v, &cure1).unwrap()
        );
    }

    #[test]
    fn disjunctive_evidence_reduces_to_conjunctive() {
        let net = two_mixed();
        let (take, t1) = net.value_of("Take", "1").unwrap();
        let cure1 = net.partial(&[("Cure", "1")]).unwrap();
        let e = net.partial(&[("Indiv", "2"), ("Assign", "0")]).unwrap();
        let conj = net.do_query_evidence(take, t1, &e, &cure1).unwrap();
        let disj = net
            .do_query_any_evidence(take, t1, std::slice::from_ref(&e), &cure1)
            .unwrap();
        assert!((conj - disj).abs() < 1e-15);
        let either = [
            net.partial(&[("Indiv", "1")]).unwrap(),
            net.partial(&[("Indiv", "2")]).unwrap(),
        ];
        let q = net
            .do_query_any_evidence(take, t1, &either, &cure1)
            .unwrap();
        assert!((q - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_evidence() {
        let dag = Dag::new([
            (Variable::binary("A"), vec![]),
            (Variable::binary("B"), vec!["A"]),
        ])
        .unwrap();
        let a = Cpt::root(&dag, VarId(0), vec![1.0, 0.0]).unwrap();
        let mut b = Cpt::for_variable(&dag, VarId(1));
        b.set_row(&dag, &[0], vec![0.5, 0.5]).unwrap();
        b.set_row(&dag, &[1], vec![0.5, 0.5]).unwrap();
        let net = CausalBayesNet::new(dag, vec![a, b]).unwrap();
        let e = net.partial(&[("A", "1")]).unwrap();
        let t = net.partial(&[("B", "1")]).unwrap();
        assert_eq!(
            net.do_query_evidence(VarId(1), 1, &e, &t),
            Err(CbnError::ZeroProbabilityEvidence)
        );
        // do(A = 1) is a zero-probability conditioning event: the query is undefined.
        assert_eq!(
            net.do_query_evidence(VarId(0), 1, &net.empty_assignment(), &t),
            Err(CbnError::ZeroProbabilityCondition)
        );
    }

    #[test]
    fn validate_reports_each_violation() {
        let net = two_mixed();
        assert!(net.validate().is_valid());

        let dag = fig3_dag();
        let id = |n| dag.id(n).unwrap();
        let assign = Cpt::root(&dag, id("Assign"), vec![0.5, 0.4]).unwrap();
        let indiv = Cpt::root(&dag, id("Indiv"), vec![0.5, 0.5]).unwrap();
        let mut take = Cpt::for_variable(&dag, id("Take"));
        let mut cure = Cpt::for_variable(&dag, id("Cure"));
        for a in 0..2 {
            for i in 0..2 {
                take.set_row(&dag, &[a, i], vec![0.5, 0.5]).unwrap();
                if (a, i) != (1, 0) {
                    cure.set_row(&dag, &[a, i], vec![0.5, 0.5]).unwrap();
                }
            }
        }
        let report = validate(
            &dag,
            &[assign.clone(), indiv.clone(), take.clone(), cure.clone()],
        );
        assert_eq!(
            report.violations,
            [
                Violation::RowSumViolation {
                    variable: "Assign".into(),
                    parent_values: vec![],
                    sum: 0.9
                },
                Violation::MissingRow {
                    variable: "Cure".into(),
                    parent_values: vec!["1".into(), "1".into()]
                },
            ]
        );
        assert!(matches!(
            CausalBayesNet::new(dag.clone(), vec![assign, indiv, take]),
            Err(CbnError::Invalid(_))
        ));
    }

    #[test]
    fn validate_reports_cycles_and_bad_entries() {
        let dag = Dag::new([
            (Variable::binary("A"), vec!["B"]),
            (Variable::binary("B"), vec!["A"]),
        ])
        .unwrap();
        let mut a = Cpt::for_variable(&dag, VarId(0));
        let mut b = Cpt::for_variable(&dag, VarId(1));
        for v in 0..2 {
            a.set_row(&dag, &[v], vec![1.5, -0.5]).unwrap();
            b.set_row(&dag, &[v], vec![0.5, 0.5]).unwrap();
        }
        let report = validate(&dag, &[a, b]);
        assert!(matches!(report.violations[0], Violation::Cycle { .. }));
        assert_eq!(
            report
                .violations
                .iter()
                .filter(|v| matches!(v, Violation::EntryOutOfRange { .. }))
                .count(),
            4
        );
    }

    #[test]
    fn cpt_row_index_round_trip() {
        let dag = Dag::new([
            (Variable::new("A", ["x", "y", "z"]).unwrap(), vec![]),
            (Variable::binary("B"), vec![]),
            (Variable::binary("C"), vec!["A", "B"]),
        ])
        .unwrap();
        let cpt = Cpt::<f64>::for_variable(&dag, VarId(2));
        assert_eq!(cpt.row_count(), 6);
        for row in 0..6 {
            assert_eq!(cpt.row_index(&cpt.parent_values(row)), Some(row));
        }
        assert_eq!(cpt.row_index(&[3, 0]), None);
    }

    #[test]
    fn partial_assignment_errors() {
        let net = two_mixed();
        assert!(matches!(
            net.partial(&[("Cure", "2")]),
            Err(CbnError::UnknownValue { .. })
        ));
        assert!(matches!(
            net.partial(&[("Nope", "1")]),
            Err(CbnError::UnknownVariable(_))
        ));
        assert!(matches!(
            net.partial(&[("Cure", "1"), ("Cure", "0")]),
            Err(CbnError::RepeatedAssignment(_))
        ));
        assert!(matches!(
            net.full(&[("Cure", "1")]),
            Err(CbnError::IncompleteAssignment(_))
        ));
    }

    #[test]
    fn normalisation_and_markov_on_fixture() {
        let net = two_mixed();
        assert!((net.total_mass() - 1.0).abs() <= 1e-9);
        // Cure given its parents is unaffected by also conditioning on Assign.
        let cure1 = net.partial(&[("Cure", "1")]).unwrap();
        let given = net
            .partial(&[("Take", "1"), ("Indiv", "2"), ("Assign", "0")])
            .unwrap();
        let q = net.conditional_probability(&cure1, &given).unwrap();
        assert!((q - 0.9).abs() < 1e-12);
    }
}
