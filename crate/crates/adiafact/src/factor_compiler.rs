//! Compile an odd semiprime into a two-qubit-scale problem Hamiltonian.
//!
//! The chain is: binary multiplication table with carry variables → one
//! constraint equation per column → logic simplification to a small system →
//! squared-violation Hamiltonian with the identity part split off as an
//! energy offset. Every transformation is checked against exhaustive
//! enumeration of binary assignments, which is cheap at these sizes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcore::{cr, CMatrix};

/// Free variables may not exceed this count when emitting a matrix.
pub const DEFAULT_QUBIT_BUDGET: usize = 6;
/// Exhaustive enumeration refuses beyond this many free variables.
pub const BRUTE_FORCE_LIMIT: usize = 24;
/// Internal solution-set verification is run up to this many variables.
pub const VERIFY_LIMIT: usize = 20;

#[derive(Debug, Error)]
pub enum CompilerError {
    #[error("N={n} does not fit multiplier widths ({wx},{wy}): {reason}")]
    InvalidWidths { n: u64, wx: usize, wy: usize, reason: String },
    #[error("constraint system is infeasible: {0}")]
    Infeasible(String),
    #[error("{free} free variables exceed the qubit budget of {budget}")]
    TooManyQubits { free: usize, budget: usize },
    #[error("{vars} variables exceed the brute-force limit of {limit}")]
    TooLarge { vars: usize, limit: usize },
    #[error("basis index {index} out of range for {qubits} qubits")]
    IndexOutOfRange { index: usize, qubits: usize },
    #[error("simplification changed the solution set: {0}")]
    SolutionSetChanged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    MultiplierBit,
    Carry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BitVariable {
    pub name: String,
    pub kind: VarKind,
}

pub type VarId = usize;

/// Integer-coefficient polynomial over {0,1} variables. Monomials are sorted
/// variable sets (idempotence b² = b is built into the representation); the
/// empty monomial is the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Poly {
    terms: BTreeMap<Vec<VarId>, i64>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: i64) -> Self {
        let mut p = Self::zero();
        p.add_term(&[], c);
        p
    }

    pub fn var(v: VarId) -> Self {
        let mut p = Self::zero();
        p.add_term(&[v], 1);
        p
    }

    pub fn add_term(&mut self, mono: &[VarId], coef: i64) {
        if coef == 0 {
            return;
        }
        let mut key: Vec<VarId> = mono.to_vec();
        key.sort_unstable();
        key.dedup();
        let entry = self.terms.entry(key).or_insert(0);
        *entry += coef;
        if *entry == 0 {
            let key: Vec<VarId> = {
                let mut k = mono.to_vec();
                k.sort_unstable();
                k.dedup();
                k
            };
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m, *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m, -c);
        }
        out
    }

    pub fn negate(&self) -> Poly {
        Poly::zero().sub(self)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<i64> {
        match self.terms.len() {
            0 => Some(0),
            1 => self.terms.get(&vec![]).copied(),
            _ => None,
        }
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.terms.keys().flatten().copied().collect()
    }

    pub fn eval(&self, assign: &dyn Fn(VarId) -> bool) -> i64 {
        self.terms
            .iter()
            .map(|(m, c)| if m.iter().all(|&v| assign(v)) { *c } else { 0 })
            .sum()
    }

    /// Replace fixed variables by their values.
    pub fn substitute(&self, fixed: &BTreeMap<VarId, bool>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            if m.iter().any(|v| fixed.get(v) == Some(&false)) {
                continue;
            }
            let rest: Vec<VarId> = m.iter().copied().filter(|v| !fixed.contains_key(v)).collect();
            out.add_term(&rest, *c);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<VarId>, i64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn render(&self, vars: &[BitVariable]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let mono = if m.is_empty() {
                String::new()
            } else {
                m.iter().map(|&v| vars[v].name.clone()).collect::<Vec<_>>().join("·")
            };
            let piece = match (m.is_empty(), c.abs()) {
                (true, _) => format!("{}", c.abs()),
                (false, 1) => mono,
                (false, _) => format!("{}·{}", c.abs(), mono),
            };
            if i == 0 {
                if *c < 0 {
                    out.push('-');
                }
            } else {
                out.push_str(if *c < 0 { " - " } else { " + " });
            }
            out.push_str(&piece);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equation {
    pub lhs: Poly,
    pub rhs: Poly,
    pub label: String,
}

impl Equation {
    pub fn diff(&self) -> Poly {
        self.lhs.sub(&self.rhs)
    }

    /// Re-split a difference polynomial into positive LHS and positive RHS.
    pub fn from_diff(diff: &Poly, label: String) -> Equation {
        let mut lhs = Poly::zero();
        let mut rhs = Poly::zero();
        for (m, c) in diff.terms() {
            if c > 0 {
                lhs.add_term(m, c);
            } else {
                rhs.add_term(m, -c);
            }
        }
        Equation { lhs, rhs, label }
    }

    pub fn render(&self, vars: &[BitVariable]) -> String {
        format!("{} = {}", self.lhs.render(vars), self.rhs.render(vars))
    }
}

/// Cell of the multiplication table: a fixed bit or an unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Const(bool),
    Var(VarId),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplicationTable {
    pub n: u64,
    pub width_x: usize,
    pub width_y: usize,
    pub vars: Vec<BitVariable>,
    pub x_bits: Vec<Cell>,
    pub y_bits: Vec<Cell>,
    /// Partial-product terms per column; each term is a monomial
    /// (empty = the constant 1).
    pub columns: Vec<Vec<Vec<VarId>>>,
    /// (from_column, to_column, var) for every carry variable.
    pub carries: Vec<(usize, usize, VarId)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSystem {
    pub vars: Vec<BitVariable>,
    pub equations: Vec<Equation>,
    pub fixed: BTreeMap<VarId, bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleApplication {
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemHamiltonianSpec {
    /// Variable ids in qubit order; qubit 0 is the leftmost tensor factor.
    pub qubit_vars: Vec<VarId>,
    /// Coupling applied after dropping the identity part.
    pub g1: f64,
    /// Coefficient of the dropped identity, in unscaled squared-violation
    /// units: squared-violation spectrum = operator/g1 + offset.
    pub offset: f64,
    /// Diagonal of the emitted operator (it is diagonal in the
    /// computational basis).
    pub diagonal: Vec<f64>,
    pub fixed: BTreeMap<VarId, bool>,
}

impl ProblemHamiltonianSpec {
    pub fn operator(&self) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(
            self.diagonal.len(),
            self.diagonal.iter().map(|&d| cr(d)),
        ))
    }

    pub fn num_qubits(&self) -> usize {
        self.qubit_vars.len()
    }
}

fn bitlen(n: u64) -> usize {
    (64 - n.leading_zeros()) as usize
}

fn ceil_log2(m: usize) -> usize {
    if m <= 1 {
        0
    } else {
        usize::BITS as usize - (m - 1).leading_zeros() as usize
    }
}

/// Build the binary multiplication table for odd N with fixed multiplier
/// widths. Leading and trailing bits of both multipliers are 1; interior
/// bits are unknowns. Carry variables z_ij run from column i to column j;
/// a column with m addends sprouts ceil(log2 m) outgoing carries, matching
/// the layout of the hand-built table for 35.
pub fn build_table(n: u64, width_x: usize, width_y: usize) -> Result<MultiplicationTable, CompilerError> {
    if n % 2 == 0 || n < 9 {
        return Err(CompilerError::InvalidWidths {
            n,
            wx: width_x,
            wy: width_y,
            reason: "N must be odd and at least 9".into(),
        });
    }
    if width_x < 2 || width_y < 2 {
        return Err(CompilerError::InvalidWidths {
            n,
            wx: width_x,
            wy: width_y,
            reason: "multiplier widths must be at least 2".into(),
        });
    }
    if bitlen(n) > width_x + width_y {
        return Err(CompilerError::InvalidWidths {
            n,
            wx: width_x,
            wy: width_y,
            reason: format!("N needs {} bits, widths provide at most {}", bitlen(n), width_x + width_y),
        });
    }

    let mut vars: Vec<BitVariable> = Vec::new();
    let make_bits = |width: usize, base: &str, vars: &mut Vec<BitVariable>| -> Vec<Cell> {
        (0..width)
            .map(|i| {
                if i == 0 || i == width - 1 {
                    Cell::Const(true)
                } else {
                    let name = if width == 3 {
                        base.to_string()
                    } else {
                        format!("{base}{i}")
                    };
                    vars.push(BitVariable { name, kind: VarKind::MultiplierBit });
                    Cell::Var(vars.len() - 1)
                }
            })
            .collect()
    };
    let x_bits = make_bits(width_x, "p", &mut vars);
    let y_bits = make_bits(width_y, "q", &mut vars);

    let n_cols = bitlen(n).max(width_x + width_y - 1);
    let mut columns: Vec<Vec<Vec<VarId>>> = vec![Vec::new(); n_cols];
    for (j, yb) in y_bits.iter().enumerate() {
        for (i, xb) in x_bits.iter().enumerate() {
            let mono: Vec<VarId> = match (xb, yb) {
                (Cell::Const(true), Cell::Const(true)) => vec![],
                (Cell::Const(true), Cell::Var(v)) | (Cell::Var(v), Cell::Const(true)) => vec![*v],
                (Cell::Var(a), Cell::Var(b)) => vec![*a, *b],
                _ => continue,
            };
            columns[i + j].push(mono);
        }
    }

    let mut carries: Vec<(usize, usize, VarId)> = Vec::new();
    let mut incoming: Vec<usize> = vec![0; n_cols];
    for col in 0..n_cols {
        let addends = columns[col].len() + incoming[col];
        for k in 1..=ceil_log2(addends) {
            let to = col + k;
            if to >= n_cols {
                continue;
            }
            let name = if col < 10 && to < 10 {
                format!("z{col}{to}")
            } else {
                format!("z{col}_{to}")
            };
            vars.push(BitVariable { name, kind: VarKind::Carry });
            carries.push((col, to, vars.len() - 1));
            incoming[to] += 1;
        }
    }

    Ok(MultiplicationTable { n, width_x, width_y, vars, x_bits, y_bits, columns, carries })
}

/// One equation per column: partial-product bits plus incoming carries equal
/// the target bit plus 2^k times each outgoing carry. Constant columns that
/// hold trivially are dropped.
pub fn column_equations(table: &MultiplicationTable) -> ConstraintSystem {
    let n_cols = table.columns.len();
    let mut equations = Vec::new();
    for col in 0..n_cols {
        let mut lhs = Poly::zero();
        for mono in &table.columns[col] {
            lhs.add_term(mono, 1);
        }
        for &(_, to, v) in &table.carries {
            if to == col {
                lhs.add_term(&[v], 1);
            }
        }
        let mut rhs = Poly::constant(((table.n >> col) & 1) as i64);
        for &(from, to, v) in &table.carries {
            if from == col {
                rhs.add_term(&[v], 1 << (to - from));
            }
        }
        let eq = Equation { lhs, rhs, label: format!("column {col}") };
        let diff = eq.diff();
        if diff.is_zero() {
            continue; // trivially satisfied constant column
        }
        equations.push(eq);
    }
    ConstraintSystem { vars: table.vars.clone(), equations, fixed: BTreeMap::new() }
}

/// All satisfying assignments over the non-fixed variables that appear in the
/// registry, in lexicographic order of (v0, v1, ...).
pub fn brute_force_solutions(
    system: &ConstraintSystem,
) -> Result<Vec<BTreeMap<VarId, bool>>, CompilerError> {
    let free: Vec<VarId> =
        (0..system.vars.len()).filter(|v| !system.fixed.contains_key(v)).collect();
    if free.len() > BRUTE_FORCE_LIMIT {
        return Err(CompilerError::TooLarge { vars: free.len(), limit: BRUTE_FORCE_LIMIT });
    }
    let diffs: Vec<Poly> =
        system.equations.iter().map(|e| e.diff().substitute(&system.fixed)).collect();
    let mut out = Vec::new();
    for code in 0..(1u64 << free.len()) {
        let assign = |v: VarId| -> bool {
            let pos = free.iter().position(|&f| f == v).expect("free var");
            (code >> (free.len() - 1 - pos)) & 1 == 1
        };
        if diffs.iter().all(|d| d.eval(&assign) == 0) {
            out.push(free.iter().map(|&v| (v, assign(v))).collect());
        }
    }
    Ok(out)
}

/// Full assignments (fixed ∪ free) as canonical tuples for set comparison.
fn solution_set_full(system: &ConstraintSystem) -> Result<BTreeSet<Vec<(VarId, bool)>>, CompilerError> {
    Ok(brute_force_solutions(system)?
        .into_iter()
        .map(|mut sol| {
            for (&v, &b) in &system.fixed {
                sol.insert(v, b);
            }
            sol.into_iter().collect()
        })
        .collect())
}

/// Satisfying assignments of a single difference polynomial over its own
/// variables. Returns None when unsatisfiable.
fn equation_support(diff: &Poly) -> Option<Vec<BTreeMap<VarId, bool>>> {
    let vars: Vec<VarId> = diff.vars().into_iter().collect();
    let mut sols = Vec::new();
    for code in 0..(1u64 << vars.len()) {
        let assign = |v: VarId| -> bool {
            let pos = vars.iter().position(|&f| f == v).expect("eq var");
            (code >> pos) & 1 == 1
        };
        if diff.eval(&assign) == 0 {
            sols.push(vars.iter().map(|&v| (v, assign(v))).collect());
        }
    }
    if sols.is_empty() {
        None
    } else {
        Some(sols)
    }
}

fn canonical_diff(diff: &Poly) -> Poly {
    match diff.terms().next() {
        Some((_, c)) if c < 0 => diff.negate(),
        _ => diff.clone(),
    }
}

/// Fixed-point logic simplification. Rules, in application order:
/// substitution of fixed variables, per-equation exhaustive propagation
/// (subsumes range bounds and extreme-value fixing), duplicate removal, and
/// finally removal of equations implied by the rest. The result is verified
/// to have the same solution set as the input by exhaustive enumeration.
pub fn simplify(
    system: &ConstraintSystem,
) -> Result<(ConstraintSystem, Vec<RuleApplication>), CompilerError> {
    let mut sys = system.clone();
    let mut ledger: Vec<RuleApplication> = Vec::new();
    let names = sys.vars.clone();
    let log = |rule: &str, detail: String, ledger: &mut Vec<RuleApplication>| {
        ledger.push(RuleApplication { rule: rule.to_string(), detail });
    };

    loop {
        let mut changed = false;

        // Substitution of fixed variables (also linearizes products with a
        // fixed partner) and constant-equation handling.
        let mut kept: Vec<Equation> = Vec::new();
        for eq in &sys.equations {
            let diff = eq.diff().substitute(&sys.fixed);
            match diff.as_constant() {
                Some(0) => {
                    if !eq.diff().is_zero() || !sys.fixed.is_empty() {
                        log("drop-satisfied", eq.label.clone(), &mut ledger);
                    }
                    changed = true;
                    continue;
                }
                Some(c) => {
                    return Err(CompilerError::Infeasible(format!(
                        "{} reduces to the contradiction {c} = 0",
                        eq.label
                    )));
                }
                None => {}
            }
            let new_eq = Equation::from_diff(&diff, eq.label.clone());
            if new_eq.diff() != eq.diff() {
                changed = true;
            }
            kept.push(new_eq);
        }
        sys.equations = kept;

        // Per-equation exhaustive propagation: a variable taking the same
        // value in every satisfying assignment of one equation is fixed.
        for eq in &sys.equations.clone() {
            let diff = eq.diff();
            if diff.vars().len() > VERIFY_LIMIT {
                continue;
            }
            let Some(support) = equation_support(&diff) else {
                return Err(CompilerError::Infeasible(format!(
                    "{} ({}) has no binary solution",
                    eq.label,
                    eq.render(&names)
                )));
            };
            for v in diff.vars() {
                let first = support[0][&v];
                if support.iter().all(|s| s[&v] == first) && !sys.fixed.contains_key(&v) {
                    sys.fixed.insert(v, first);
                    log(
                        "fix-variable",
                        format!("{} = {} forced by {}", names[v].name, first as u8, eq.label),
                        &mut ledger,
                    );
                    changed = true;
                }
            }
        }

        // Duplicate removal on canonicalized differences.
        let mut seen: BTreeSet<Vec<(Vec<VarId>, i64)>> = BTreeSet::new();
        let before = sys.equations.len();
        sys.equations.retain(|eq| {
            let key: Vec<(Vec<VarId>, i64)> = canonical_diff(&eq.diff())
                .terms()
                .map(|(m, c)| (m.clone(), c))
                .collect();
            seen.insert(key)
        });
        if sys.equations.len() != before {
            log("dedupe", format!("removed {} duplicate equations", before - sys.equations.len()), &mut ledger);
            changed = true;
        }

        if !changed {
            break;
        }
    }

    // Drop equations implied by the remainder of the system (brute-force
    // checked), so e.g. p·q = 0 disappears once p + q = 1 is present.
    let free_count = (0..sys.vars.len()).filter(|v| !sys.fixed.contains_key(v)).count();
    if free_count <= VERIFY_LIMIT {
        let mut i = 0;
        while i < sys.equations.len() {
            let mut reduced = sys.clone();
            let removed = reduced.equations.remove(i);
            if solution_set_full(&reduced)? == solution_set_full(&sys)? {
                log("drop-implied", format!("{} ({})", removed.label, removed.render(&names)), &mut ledger);
                sys = reduced;
            } else {
                i += 1;
            }
        }

        // Internal oracle: the simplified system must preserve the solution set.
        if (0..system.vars.len()).count() <= VERIFY_LIMIT
            && solution_set_full(system)? != solution_set_full(&sys)?
        {
            return Err(CompilerError::SolutionSetChanged(format!(
                "{} equations remained",
                sys.equations.len()
            )));
        }
    }

    Ok((sys, ledger))
}

/// Emit the squared-violation Hamiltonian over the remaining free variables.
/// Each equation contributes (LHS−RHS)²; the identity component is dropped
/// and recorded as `offset`, and the rest scaled by g1.
pub fn to_hamiltonian(
    system: &ConstraintSystem,
    g1: f64,
    budget: usize,
) -> Result<ProblemHamiltonianSpec, CompilerError> {
    let qubit_vars: Vec<VarId> =
        (0..system.vars.len()).filter(|v| !system.fixed.contains_key(v)).collect();
    if qubit_vars.len() > budget {
        return Err(CompilerError::TooManyQubits { free: qubit_vars.len(), budget });
    }
    let n = qubit_vars.len();
    let dim = 1usize << n;
    let diffs: Vec<Poly> =
        system.equations.iter().map(|e| e.diff().substitute(&system.fixed)).collect();
    let mut violations: Vec<f64> = vec![0.0; dim];
    for (idx, slot) in violations.iter_mut().enumerate() {
        let assign = |v: VarId| -> bool {
            let pos = qubit_vars.iter().position(|&q| q == v).expect("qubit var");
            (idx >> (n - 1 - pos)) & 1 == 1
        };
        for d in &diffs {
            let r = d.eval(&assign);
            *slot += (r * r) as f64;
        }
    }
    let offset = violations.iter().sum::<f64>() / dim as f64;
    let diagonal: Vec<f64> = violations.iter().map(|&e| g1 * (e - offset)).collect();
    Ok(ProblemHamiltonianSpec {
        qubit_vars,
        g1,
        offset,
        diagonal,
        fixed: system.fixed.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodedFactors {
    pub x: u64,
    pub y: u64,
    /// Set when x·y ≠ N, i.e. the basis state is not a true ground state.
    pub not_a_ground_state: bool,
}

/// Reconstruct the multipliers from a computational-basis index by inserting
/// the decoded bits into the fixed-bit patterns.
pub fn decode_solution(
    basis_index: usize,
    spec: &ProblemHamiltonianSpec,
    table: &MultiplicationTable,
) -> Result<DecodedFactors, CompilerError> {
    let n = spec.num_qubits();
    if basis_index >= (1usize << n) {
        return Err(CompilerError::IndexOutOfRange { index: basis_index, qubits: n });
    }
    let value_of = |v: VarId| -> bool {
        if let Some(&b) = spec.fixed.get(&v) {
            b
        } else {
            let pos = spec.qubit_vars.iter().position(|&q| q == v).expect("decoded var");
            (basis_index >> (n - 1 - pos)) & 1 == 1
        }
    };
    let assemble = |bits: &[Cell]| -> u64 {
        bits.iter()
            .enumerate()
            .map(|(i, cell)| {
                let b = match cell {
                    Cell::Const(b) => *b,
                    Cell::Var(v) => value_of(*v),
                };
                (b as u64) << i
            })
            .sum()
    };
    let x = assemble(&table.x_bits);
    let y = assemble(&table.y_bits);
    Ok(DecodedFactors { x, y, not_a_ground_state: x * y != table.n })
}

/// Everything the CLI and the test harness need from one compilation,
/// JSON-serializable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompilerArtifact {
    pub n: u64,
    pub width_x: usize,
    pub width_y: usize,
    pub x_pattern: String,
    pub y_pattern: String,
    pub variables: Vec<BitVariable>,
    pub original_equations: Vec<String>,
    pub simplified_equations: Vec<String>,
    pub rule_ledger: Vec<RuleApplication>,
    pub fixed: Vec<(String, bool)>,
    pub qubit_map: Vec<(usize, String)>,
    pub operator_diagonal: Vec<f64>,
    pub energy_offset: f64,
    pub g1: f64,
    pub solutions: Vec<DecodedFactors>,
}

fn pattern(bits: &[Cell], vars: &[BitVariable]) -> String {
    // Most significant bit first.
    let mut s = String::new();
    for cell in bits.iter().rev() {
        match cell {
            Cell::Const(b) => write!(s, "{}", *b as u8).unwrap(),
            Cell::Var(v) => write!(s, "{}", vars[*v].name).unwrap(),
        }
    }
    s
}

/// Run the full compile chain for one (N, widths) choice.
pub fn compile(
    n: u64,
    width_x: usize,
    width_y: usize,
    g1: f64,
    budget: usize,
) -> Result<(CompilerArtifact, MultiplicationTable, ConstraintSystem, ProblemHamiltonianSpec), CompilerError> {
    let table = build_table(n, width_x, width_y)?;
    let system = column_equations(&table);
    let (reduced, ledger) = simplify(&system)?;
    let spec = to_hamiltonian(&reduced, g1, budget)?;
    let ground = spec.diagonal.iter().cloned().fold(f64::INFINITY, f64::min);
    let solutions: Vec<DecodedFactors> = (0..spec.diagonal.len())
        .filter(|&i| (spec.diagonal[i] - ground).abs() < 1e-12)
        .map(|i| decode_solution(i, &spec, &table))
        .collect::<Result<_, _>>()?;
    let artifact = CompilerArtifact {
        n,
        width_x,
        width_y,
        x_pattern: pattern(&table.x_bits, &table.vars),
        y_pattern: pattern(&table.y_bits, &table.vars),
        variables: table.vars.clone(),
        original_equations: system.equations.iter().map(|e| e.render(&table.vars)).collect(),
        simplified_equations: reduced.equations.iter().map(|e| e.render(&table.vars)).collect(),
        rule_ledger: ledger,
        fixed: reduced.fixed.iter().map(|(&v, &b)| (table.vars[v].name.clone(), b)).collect(),
        qubit_map: spec.qubit_vars.iter().enumerate().map(|(q, &v)| (q, table.vars[v].name.clone())).collect(),
        operator_diagonal: spec.diagonal.clone(),
        energy_offset: spec.offset,
        g1,
        solutions,
    };
    Ok((artifact, table, reduced, spec))
}

/// Pick multiplier widths for N when the caller gives none: smallest total
/// width whose fixed-leading-bit table admits a solution.
pub fn default_widths(n: u64) -> Result<(usize, usize), CompilerError> {
    let total = bitlen(n);
    for sum in total..=total + 1 {
        for wx in 2..=sum / 2 {
            let wy = sum - wx;
            if wy < 2 {
                continue;
            }
            if let Ok(table) = build_table(n, wx, wy) {
                let system = column_equations(&table);
                if let Ok(sols) = brute_force_solutions(&system) {
                    if !sols.is_empty() {
                        return Ok((wx, wy));
                    }
                }
            }
        }
    }
    Err(CompilerError::Infeasible(format!("no multiplier widths found for N={n}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var_names(sys: &ConstraintSystem) -> Vec<String> {
        sys.vars.iter().map(|v| v.name.clone()).collect()
    }

    fn id_of(sys: &ConstraintSystem, name: &str) -> VarId {
        sys.vars.iter().position(|v| v.name == name).unwrap()
    }

    #[test]
    fn table_for_35_matches_hand_layout() {
        let t = build_table(35, 3, 3).unwrap();
        let multipliers: Vec<&str> = t
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::MultiplierBit)
            .map(|v| v.name.as_str())
            .collect();
        assert_eq!(multipliers, vec!["p", "q"]);
        let carries: Vec<&str> =
            t.vars.iter().filter(|v| v.kind == VarKind::Carry).map(|v| v.name.as_str()).collect();
        assert_eq!(carries, vec!["z12", "z23", "z24", "z34", "z35", "z45"]);
    }

    #[test]
    fn table_for_9_has_no_unknown_multiplier_bits() {
        let t = build_table(9, 2, 2).unwrap();
        assert!(t.vars.iter().all(|v| v.kind != VarKind::MultiplierBit));
        assert_eq!(t.x_bits, vec![Cell::Const(true), Cell::Const(true)]);
    }

    #[test]
    fn invalid_widths_rejected() {
        assert!(matches!(build_table(35, 2, 2), Err(CompilerError::InvalidWidths { .. })));
        assert!(matches!(build_table(34, 3, 3), Err(CompilerError::InvalidWidths { .. })));
    }

    #[test]
    fn column_equations_for_35() {
        let t = build_table(35, 3, 3).unwrap();
        let sys = column_equations(&t);
        // Column 0 (1 = 1) is dropped.
        assert!(sys.equations.iter().all(|e| e.label != "column 0"));
        let names = &t.vars;
        let col1 = sys.equations.iter().find(|e| e.label == "column 1").unwrap();
        assert_eq!(col1.render(names), "p + q = 1 + 2·z12");
        let col5 = sys.equations.iter().find(|e| e.label == "column 5").unwrap();
        assert_eq!(col5.render(names), "z35 + z45 = 1");
    }

    #[test]
    fn simplify_35_reduces_to_p_plus_q_eq_1() {
        let t = build_table(35, 3, 3).unwrap();
        let sys = column_equations(&t);
        let (reduced, ledger) = simplify(&sys).unwrap();
        assert_eq!(reduced.equations.len(), 1);
        assert_eq!(reduced.equations[0].render(&t.vars), "p + q = 1");
        assert!(!ledger.is_empty());
        // Carries all pinned to the values of the p+q=1 branch.
        assert_eq!(reduced.fixed[&id_of(&sys, "z12")], false);
        assert_eq!(reduced.fixed[&id_of(&sys, "z23")], true);
        assert_eq!(reduced.fixed[&id_of(&sys, "z45")], true);
    }

    #[test]
    fn simplify_is_fixed_point_on_minimal_system() {
        let mut sys = ConstraintSystem {
            vars: vec![
                BitVariable { name: "p".into(), kind: VarKind::MultiplierBit },
                BitVariable { name: "q".into(), kind: VarKind::MultiplierBit },
            ],
            equations: vec![],
            fixed: BTreeMap::new(),
        };
        let mut lhs = Poly::var(0);
        lhs = lhs.add(&Poly::var(1));
        sys.equations.push(Equation { lhs, rhs: Poly::constant(1), label: "seed".into() });
        let (reduced, _) = simplify(&sys).unwrap();
        assert_eq!(reduced.equations.len(), 1);
        assert_eq!(reduced.equations[0].diff(), sys.equations[0].diff());
        assert!(reduced.fixed.is_empty());
    }

    #[test]
    fn brute_force_cases() {
        let t = build_table(35, 3, 3).unwrap();
        let sys = column_equations(&t);
        let sols = brute_force_solutions(&sys).unwrap();
        let p = id_of(&sys, "p");
        let q = id_of(&sys, "q");
        let pq: BTreeSet<(bool, bool)> = sols.iter().map(|s| (s[&p], s[&q])).collect();
        assert_eq!(pq, BTreeSet::from([(false, true), (true, false)]));

        // Contradictory p + q = 3.
        let contra = ConstraintSystem {
            vars: sys.vars.clone(),
            equations: vec![Equation {
                lhs: Poly::var(p).add(&Poly::var(q)),
                rhs: Poly::constant(3),
                label: "contra".into(),
            }],
            fixed: BTreeMap::new(),
        };
        assert!(brute_force_solutions(&contra).unwrap().is_empty());
        assert!(matches!(simplify(&contra), Err(CompilerError::Infeasible(_))));
    }

    #[test]
    fn solution_sets_preserved_for_small_semiprimes() {
        for (n, wx, wy) in [(15, 2, 3), (21, 2, 3), (35, 3, 3), (49, 3, 3), (25, 3, 3)] {
            let t = build_table(n, wx, wy).unwrap();
            let sys = column_equations(&t);
            // simplify carries its own internal solution-set verification.
            let (reduced, _) = simplify(&sys).unwrap();
            let before = solution_set_full(&sys).unwrap();
            let after = solution_set_full(&reduced).unwrap();
            assert_eq!(before, after, "solution set changed for N={n}");
        }
    }

    #[test]
    fn fifteen_with_2x3_widths_decodes_to_3_times_5() {
        let (artifact, _, reduced, spec) = compile(15, 2, 3, 1.0, 6).unwrap();
        assert!(reduced.equations.is_empty());
        assert_eq!(spec.num_qubits(), 0);
        assert_eq!(artifact.solutions.len(), 1);
        assert_eq!((artifact.solutions[0].x, artifact.solutions[0].y), (3, 5));
    }

    #[test]
    fn fifteen_with_3x3_widths_is_infeasible() {
        // 15 has no representation as a product of two 3-bit odd numbers with
        // forced leading bits, so the honest outcome is Infeasible.
        let t = build_table(15, 3, 3).unwrap();
        let sys = column_equations(&t);
        assert!(brute_force_solutions(&sys).unwrap().is_empty());
        assert!(matches!(simplify(&sys), Err(CompilerError::Infeasible(_))));
    }

    #[test]
    fn hamiltonian_for_35() {
        let (_, table, reduced, spec) = compile(35, 3, 3, 1.0, 6).unwrap();
        assert_eq!(reduced.equations.len(), 1);
        assert_eq!(spec.diagonal, vec![0.5, -0.5, -0.5, 0.5]);
        // Recovered squared-violation spectrum (offset restored).
        let recovered: Vec<f64> =
            spec.diagonal.iter().map(|d| d / spec.g1 + spec.offset).collect();
        assert_eq!(recovered, vec![1.0, 0.0, 0.0, 1.0]);
        // Ground states decode to the factor pairs.
        let d01 = decode_solution(1, &spec, &table).unwrap();
        assert_eq!((d01.x, d01.y, d01.not_a_ground_state), (5, 7, false));
        let d10 = decode_solution(2, &spec, &table).unwrap();
        assert_eq!((d10.x, d10.y, d10.not_a_ground_state), (7, 5, false));
        let d00 = decode_solution(0, &spec, &table).unwrap();
        assert_eq!((d00.x, d00.y, d00.not_a_ground_state), (5, 5, true));
    }

    #[test]
    fn spectrum_matches_direct_violation_sum() {
        // Eigenvalues of the emitted operator (plus offset) must equal
        // (LHS−RHS)² summed over equations for every basis assignment.
        for (n, wx, wy) in [(35, 3, 3), (21, 2, 3)] {
            let t = build_table(n, wx, wy).unwrap();
            let sys = column_equations(&t);
            let (reduced, _) = simplify(&sys).unwrap();
            let spec = to_hamiltonian(&reduced, 1.0, 6).unwrap();
            let qn = spec.num_qubits();
            for idx in 0..(1usize << qn) {
                let assign = |v: VarId| -> bool {
                    if let Some(&b) = reduced.fixed.get(&v) {
                        b
                    } else {
                        let pos = spec.qubit_vars.iter().position(|&x| x == v).unwrap();
                        (idx >> (qn - 1 - pos)) & 1 == 1
                    }
                };
                let direct: f64 = reduced
                    .equations
                    .iter()
                    .map(|e| {
                        let r = e.diff().eval(&assign);
                        (r * r) as f64
                    })
                    .sum();
                assert!((spec.diagonal[idx] / spec.g1 + spec.offset - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn offset_bookkeeping_feasible_iff_zero_minimum() {
        let (_, _, reduced, spec) = compile(35, 3, 3, 1.0, 6).unwrap();
        let min_violation = spec
            .diagonal
            .iter()
            .map(|d| d / spec.g1 + spec.offset)
            .fold(f64::INFINITY, f64::min);
        assert!(min_violation.abs() < 1e-12);
        let _ = var_names(&reduced);
    }

    #[test]
    fn qubit_budget_enforced() {
        let t = build_table(35, 3, 3).unwrap();
        let sys = column_equations(&t);
        assert!(matches!(
            to_hamiltonian(&sys, 1.0, 2),
            Err(CompilerError::TooManyQubits { .. })
        ));
    }

    #[test]
    fn default_widths_search() {
        assert_eq!(default_widths(35).unwrap(), (3, 3));
        assert_eq!(default_widths(15).unwrap(), (2, 3));
        assert_eq!(default_widths(21).unwrap(), (2, 3));
        assert_eq!(default_widths(9).unwrap(), (2, 2));
    }
}
