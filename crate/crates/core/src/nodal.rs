//! Semiexplicit nodal model `x' = f(x, y, t)`, `0 = g(x, y, t)`.
//!
//! Dynamic variables, in block order:
//! `q_c, q_mc, φ_l, φ_ml, q_m, q_ml, q_hm, q_hw, φ_w, φ_mc, φ_hm, φ_hw`.
//! Algebraic variables: `e, i_c, i_mc, i_u, i_l, i_ml, i_r, i_m, i_hm, i_hw`.
//! Currents of voltage-controlled resistors and φ-memristors are eliminated
//! into KCL. Algebraic row blocks follow the algebraic variable blocks: KCL
//! for `e`, then one constitutive row per device for each current block.

use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::devices::{Characteristic, DeviceClass};
use crate::expr::{format_number, ExprError, Point, Var};
use crate::linalg::{hcat, nullspace_basis, numerical_rank, Matrix, Vector};
use crate::netlist::{reduced_incidence, Circuit, IncidenceMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodalError {
    #[error("device `{device}`: {source}")]
    Domain { device: String, source: ExprError },
    #[error("non-finite value in row {row} ({label})")]
    NonFinite { row: usize, label: String },
    #[error("state vector has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
}

/// Which quantity a variable block holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Charge(DeviceClass),
    Flux(DeviceClass),
    Potential,
    Current(DeviceClass),
}

use DeviceClass::*;

pub const DYNAMIC_BLOCKS: [BlockKind; 12] = [
    BlockKind::Charge(Capacitor),
    BlockKind::Charge(Memcapacitor),
    BlockKind::Flux(Inductor),
    BlockKind::Flux(Meminductor),
    BlockKind::Charge(QMemristor),
    BlockKind::Charge(Meminductor),
    BlockKind::Charge(HybridM),
    BlockKind::Charge(HybridW),
    BlockKind::Flux(PhiMemristor),
    BlockKind::Flux(Memcapacitor),
    BlockKind::Flux(HybridM),
    BlockKind::Flux(HybridW),
];

pub const ALGEBRAIC_BLOCKS: [BlockKind; 10] = [
    BlockKind::Potential,
    BlockKind::Current(Capacitor),
    BlockKind::Current(Memcapacitor),
    BlockKind::Current(VSource),
    BlockKind::Current(Inductor),
    BlockKind::Current(Meminductor),
    BlockKind::Current(Resistor),
    BlockKind::Current(QMemristor),
    BlockKind::Current(HybridM),
    BlockKind::Current(HybridW),
];

impl BlockKind {
    pub fn name(self) -> String {
        match self {
            BlockKind::Charge(c) => format!("q_{}", c.subscript()),
            BlockKind::Flux(c) => format!("phi_{}", c.subscript()),
            BlockKind::Potential => "e".to_string(),
            BlockKind::Current(c) => format!("i_{}", c.subscript()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    /// Global index range inside `z`.
    pub range: Range<usize>,
    /// Branch indices (or non-reference node ids for the `e` block).
    pub members: Vec<usize>,
}

/// Index bookkeeping for `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub blocks: Vec<Block>,
    pub labels: Vec<String>,
    dynamic: usize,
}

impl VariableLayout {
    fn new(circuit: &Circuit) -> Self {
        let mut blocks = Vec::new();
        let mut labels = Vec::new();
        let mut at = 0;
        let dynamic_count: usize = circuit
            .branches()
            .iter()
            .map(|b| b.device.class.state_vars().len())
            .sum();
        for kind in DYNAMIC_BLOCKS.iter().chain(ALGEBRAIC_BLOCKS.iter()) {
            let members: Vec<usize> = match *kind {
                BlockKind::Potential => circuit.row_nodes(),
                BlockKind::Charge(c) | BlockKind::Flux(c) | BlockKind::Current(c) => circuit
                    .branches()
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.device.class == c)
                    .map(|(j, _)| j)
                    .collect(),
            };
            for &m in &members {
                labels.push(match *kind {
                    BlockKind::Potential => format!("e({})", circuit.node_name(m)),
                    BlockKind::Charge(_) => format!("q({})", circuit.branches()[m].device.name),
                    BlockKind::Flux(_) => format!("phi({})", circuit.branches()[m].device.name),
                    BlockKind::Current(_) => format!("i({})", circuit.branches()[m].device.name),
                });
            }
            let range = at..at + members.len();
            at = range.end;
            blocks.push(Block {
                kind: *kind,
                range,
                members,
            });
        }
        debug_assert_eq!(
            blocks[..12].iter().map(|b| b.range.len()).sum::<usize>(),
            dynamic_count
        );
        VariableLayout {
            blocks,
            labels,
            dynamic: dynamic_count,
        }
    }

    /// Number of dynamic variables `r`.
    pub fn dynamic_len(&self) -> usize {
        self.dynamic
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn block(&self, kind: BlockKind) -> &Block {
        self.blocks
            .iter()
            .find(|b| b.kind == kind)
            .expect("every kind has a block")
    }

    pub fn range(&self, kind: BlockKind) -> Range<usize> {
        self.block(kind).range.clone()
    }

    pub fn dynamic_range(&self) -> Range<usize> {
        0..self.dynamic
    }

    pub fn algebraic_range(&self) -> Range<usize> {
        self.dynamic..self.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Positions of one branch's variables inside `z`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Slots {
    q: Option<usize>,
    phi: Option<usize>,
    i: Option<usize>,
    plus: Option<usize>,
    minus: Option<usize>,
}

/// Jacobian of the stacked right-hand side `(f, g)` split into blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    /// Full `[[0, F12], [F21, F22]]`.
    pub f: Matrix,
    pub r: usize,
}

impl JacobianBlocks {
    pub fn f12(&self) -> Matrix {
        let n = self.f.nrows();
        self.f.view((0, self.r), (self.r, n - self.r)).into_owned()
    }

    pub fn f21(&self) -> Matrix {
        let n = self.f.nrows();
        self.f.view((self.r, 0), (n - self.r, self.r)).into_owned()
    }

    pub fn f22(&self) -> Matrix {
        let n = self.f.nrows();
        self.f
            .view((self.r, self.r), (n - self.r, n - self.r))
            .into_owned()
    }

    /// Algebraic-row Jacobian `[F21 F22]` with respect to all of `z`.
    pub fn g_z(&self) -> Matrix {
        let n = self.f.nrows();
        self.f.view((self.r, 0), (n - self.r, n)).into_owned()
    }
}

/// The assembled model of one circuit.
#[derive(Debug, Clone)]
pub struct SemiExplicitDAE {
    circuit: Circuit,
    incidence: IncidenceMatrix,
    layout: VariableLayout,
    slots: Vec<Slots>,
}

pub fn assemble(circuit: &Circuit) -> SemiExplicitDAE {
    let layout = VariableLayout::new(circuit);
    let incidence = reduced_incidence(circuit);
    let e0 = layout.range(BlockKind::Potential).start;
    let mut slots = vec![Slots::default(); circuit.branches().len()];
    for block in &layout.blocks {
        for (k, &m) in block.members.iter().enumerate() {
            let idx = block.range.start + k;
            match block.kind {
                BlockKind::Charge(_) => slots[m].q = Some(idx),
                BlockKind::Flux(_) => slots[m].phi = Some(idx),
                BlockKind::Current(_) => slots[m].i = Some(idx),
                BlockKind::Potential => {}
            }
        }
    }
    for (j, s) in slots.iter_mut().enumerate() {
        let (plus, minus) = incidence.column(j);
        s.plus = plus.map(|r| e0 + r);
        s.minus = minus.map(|r| e0 + r);
    }
    SemiExplicitDAE {
        circuit: circuit.clone(),
        incidence,
        layout,
        slots,
    }
}

impl SemiExplicitDAE {
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn dynamic_len(&self) -> usize {
        self.layout.dynamic_len()
    }

    /// `E = blockdiag(I_r, 0)`.
    pub fn e_matrix(&self) -> Matrix {
        let n = self.dim();
        let r = self.dynamic_len();
        Matrix::from_fn(n, n, |i, j| if i == j && i < r { 1.0 } else { 0.0 })
    }

    /// Dynamic start values from `.ic` directives (zero elsewhere).
    pub fn initial_dynamic(&self) -> Vector {
        let mut x = Vector::zeros(self.dynamic_len());
        for ic in self.circuit.initial_conditions() {
            let j = self
                .circuit
                .branch_index(&ic.device)
                .expect("validated by Circuit");
            let slot = match ic.var {
                Var::Q => self.slots[j].q,
                _ => self.slots[j].phi,
            };
            x[slot.expect("validated by Circuit")] = ic.value;
        }
        x
    }

    fn check_len(&self, z: &Vector) -> Result<(), NodalError> {
        if z.len() != self.dim() {
            return Err(NodalError::Dimension {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Branch voltage `A_jᵀ e`.
    pub fn branch_voltage(&self, z: &Vector, j: usize) -> f64 {
        let s = self.slots[j];
        s.plus.map_or(0.0, |k| z[k]) - s.minus.map_or(0.0, |k| z[k])
    }

    /// Local `(q, φ, i, v)` of branch `j`; absent components are zero.
    pub fn branch_point(&self, z: &Vector, j: usize) -> Point {
        let s = self.slots[j];
        let at = |k: Option<usize>| k.map_or(0.0, |k| z[k]);
        Point::new(at(s.q), at(s.phi), at(s.i), self.branch_voltage(z, j))
    }

    fn characteristic(&self, j: usize) -> Option<&Characteristic> {
        self.circuit.branches()[j].device.characteristic()
    }

    /// Branch current, evaluating eliminated currents through their characteristic.
    pub fn branch_current(&self, z: &Vector, t: f64, j: usize) -> Result<f64, NodalError> {
        let b = &self.circuit.branches()[j];
        if let Some(k) = self.slots[j].i {
            return Ok(z[k]);
        }
        match b.device.waveform() {
            Some(w) => Ok(w.value(t)),
            None => self
                .characteristic(j)
                .expect("non-source")
                .eval(&self.branch_point(z, j))
                .map_err(|source| NodalError::Domain {
                    device: b.device.name.clone(),
                    source,
                }),
        }
    }

    /// Incremental value (R, G, C, L, M, W, C_m, L_m, M_h, W_h) of branch `j` at `z`.
    pub fn incremental(&self, z: &Vector, j: usize) -> Result<Option<f64>, NodalError> {
        let Some(ch) = self.characteristic(j) else {
            return Ok(None);
        };
        ch.incremental(&self.branch_point(z, j))
            .map(Some)
            .map_err(|source| NodalError::Domain {
                device: self.circuit.branches()[j].device.name.clone(),
                source,
            })
    }

    /// Constitutive residual of branch `j` (output minus characteristic), `None` for sources.
    pub fn characteristic_residual(&self, z: &Vector, j: usize) -> Result<Option<f64>, NodalError> {
        let Some(ch) = self.characteristic(j) else {
            return Ok(None);
        };
        let p = self.branch_point(z, j);
        let value = ch.eval(&p).map_err(|source| NodalError::Domain {
            device: self.circuit.branches()[j].device.name.clone(),
            source,
        })?;
        let out = match ch.output() {
            Var::Q => p.q,
            Var::Phi => p.phi,
            Var::V => p.v,
            Var::I => match self.slots[j].i {
                Some(k) => z[k],
                None => return Ok(Some(0.0)),
            },
            Var::T => unreachable!("characteristics never yield time"),
        };
        Ok(Some(out - value))
    }

    /// Stacked `(f, g)`: the right-hand side of the dynamic rows and the algebraic residual.
    pub fn residual(&self, z: &Vector, t: f64) -> Result<Vector, NodalError> {
        Ok(self.evaluate(z, t, false)?.0)
    }

    /// Exact Jacobian of [`residual`](Self::residual) by forward-mode differentiation.
    pub fn jacobian(&self, z: &Vector, t: f64) -> Result<JacobianBlocks, NodalError> {
        let f = self.evaluate(z, t, true)?.1.expect("requested");
        Ok(JacobianBlocks {
            f,
            r: self.dynamic_len(),
        })
    }

    pub fn residual_and_jacobian(
        &self,
        z: &Vector,
        t: f64,
    ) -> Result<(Vector, JacobianBlocks), NodalError> {
        let (res, jac) = self.evaluate(z, t, true)?;
        Ok((
            res,
            JacobianBlocks {
                f: jac.expect("requested"),
                r: self.dynamic_len(),
            },
        ))
    }

    fn evaluate(
        &self,
        z: &Vector,
        t: f64,
        want_jac: bool,
    ) -> Result<(Vector, Option<Matrix>), NodalError> {
        self.check_len(z)?;
        let n = self.dim();
        let mut res = Vector::zeros(n);
        let mut jac = want_jac.then(|| Matrix::zeros(n, n));

        for (j, b) in self.circuit.branches().iter().enumerate() {
            let s = self.slots[j];
            let class = b.device.class;
            let v = self.branch_voltage(z, j);

            // d(v)/dz is +1 at the leaving node and −1 at the entering node
            let add_v = |jac: &mut Option<Matrix>, row: usize, scale: f64| {
                if let Some(m) = jac.as_mut() {
                    if let Some(k) = s.plus {
                        m[(row, k)] += scale;
                    }
                    if let Some(k) = s.minus {
                        m[(row, k)] -= scale;
                    }
                }
            };
            let add = |jac: &mut Option<Matrix>, row: usize, col: Option<usize>, value: f64| {
                if let (Some(m), Some(c)) = (jac.as_mut(), col) {
                    m[(row, c)] += value;
                }
            };

            // dynamic rows: q' = i, φ' = v
            if let Some(qk) = s.q {
                let ik = s.i.expect("charge-carrying branches keep their current");
                res[qk] = z[ik];
                add(&mut jac, qk, Some(ik), 1.0);
            }
            if let Some(pk) = s.phi {
                res[pk] = v;
                add_v(&mut jac, pk, 1.0);
            }

            // characteristic value and gradient, when the device has one
            let eval = match self.characteristic(j) {
                Some(ch) => {
                    let d = ch.eval_dual(&self.branch_point(z, j)).map_err(|source| {
                        NodalError::Domain {
                            device: b.device.name.clone(),
                            source,
                        }
                    })?;
                    Some(d)
                }
                None => None,
            };
            // adds `scale · ∂characteristic/∂z` to `row`
            let add_char = |jac: &mut Option<Matrix>, row: usize, scale: f64| {
                let d = eval.as_ref().expect("device has a characteristic");
                add(jac, row, s.q, scale * d.grad[0]);
                add(jac, row, s.phi, scale * d.grad[1]);
                add(jac, row, s.i, scale * d.grad[2]);
                add_v(jac, row, scale * d.grad[3]);
            };

            // KCL contribution of the branch current
            let kcl_rows = [(s.plus, 1.0), (s.minus, -1.0)];
            for (row, sign) in kcl_rows {
                let Some(row) = row else { continue };
                match class {
                    Conductor | PhiMemristor => {
                        res[row] += sign * eval.as_ref().expect("characteristic").value;
                        add_char(&mut jac, row, sign);
                    }
                    ISource => res[row] += sign * b.device.waveform().expect("source").value(t),
                    _ => {
                        let ik = s.i.expect("current variable");
                        res[row] += sign * z[ik];
                        add(&mut jac, row, Some(ik), sign);
                    }
                }
            }

            // own constitutive row, paired with the current variable
            let Some(row) = s.i else { continue };
            let value = eval.as_ref().map_or(0.0, |d| d.value);
            match class {
                Capacitor | Memcapacitor => {
                    let qk = s.q.expect("charge");
                    res[row] = z[qk] - value;
                    add(&mut jac, row, Some(qk), 1.0);
                    add_char(&mut jac, row, -1.0);
                }
                Inductor | Meminductor => {
                    let pk = s.phi.expect("flux");
                    res[row] = z[pk] - value;
                    add(&mut jac, row, Some(pk), 1.0);
                    add_char(&mut jac, row, -1.0);
                }
                Resistor | QMemristor | HybridM => {
                    res[row] = value - v;
                    add_char(&mut jac, row, 1.0);
                    add_v(&mut jac, row, -1.0);
                }
                HybridW => {
                    res[row] = z[row] - value;
                    add(&mut jac, row, Some(row), 1.0);
                    add_char(&mut jac, row, -1.0);
                }
                VSource => {
                    res[row] = b.device.waveform().expect("source").value(t) - v;
                    add_v(&mut jac, row, -1.0);
                }
                Conductor | PhiMemristor | ISource => unreachable!("no current variable"),
            }
        }

        if let Some(row) = res.iter().position(|x| !x.is_finite()) {
            return Err(NodalError::NonFinite {
                row,
                label: self.row_label(row),
            });
        }
        if let Some(m) = &jac {
            if let Some(k) = m.iter().position(|x| !x.is_finite()) {
                let row = k % n;
                return Err(NodalError::NonFinite {
                    row,
                    label: format!("Jacobian of {}", self.row_label(row)),
                });
            }
        }
        Ok((res, jac))
    }

    /// Label of a residual row: `d/dt <var>` for dynamic rows, the paired algebraic label otherwise.
    pub fn row_label(&self, row: usize) -> String {
        let var = &self.layout.labels[row];
        if row < self.dynamic_len() {
            return format!("d/dt {var}");
        }
        if var.starts_with("e(") {
            format!("KCL at {}", &var[2..var.len() - 1])
        } else {
            format!("law of {}", &var[2..var.len() - 1])
        }
    }

    /// KCL residual `‖A · i‖∞` with eliminated currents evaluated.
    pub fn kcl_residual(&self, z: &Vector, t: f64) -> Result<f64, NodalError> {
        let mut sums = vec![0.0; self.incidence.nrows()];
        for j in 0..self.circuit.branches().len() {
            let i = self.branch_current(z, t, j)?;
            let (plus, minus) = self.incidence.column(j);
            if let Some(r) = plus {
                sums[r] += i;
            }
            if let Some(r) = minus {
                sums[r] -= i;
            }
        }
        Ok(sums.into_iter().fold(0.0, |m, x| m.max(x.abs())))
    }

    /// Named sub-block `K0..K7` of `F21`.
    pub fn k_block(&self, jac: &JacobianBlocks, k: usize) -> Matrix {
        let (rows, cols) = match k {
            0 => (BlockKind::Potential, BlockKind::Flux(PhiMemristor)),
            1 => (
                BlockKind::Current(Memcapacitor),
                BlockKind::Flux(Memcapacitor),
            ),
            2 => (
                BlockKind::Current(Meminductor),
                BlockKind::Charge(Meminductor),
            ),
            3 => (
                BlockKind::Current(QMemristor),
                BlockKind::Charge(QMemristor),
            ),
            4 => (BlockKind::Current(HybridM), BlockKind::Charge(HybridM)),
            5 => (BlockKind::Current(HybridM), BlockKind::Flux(HybridM)),
            6 => (BlockKind::Current(HybridW), BlockKind::Charge(HybridW)),
            7 => (BlockKind::Current(HybridW), BlockKind::Flux(HybridW)),
            _ => panic!("K blocks are numbered 0..=7"),
        };
        let r = self.layout.range(rows);
        let c = self.layout.range(cols);
        jac.f
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    /// Dynamic degrees of freedom at `z`: rank of the dynamic part of a basis of ker `[F21 F22]`.
    pub fn dynamic_degrees_of_freedom(&self, jac: &JacobianBlocks, rank_tol: f64) -> usize {
        let r = self.dynamic_len();
        let basis = nullspace_basis(&jac.g_z(), rank_tol);
        if basis.ncols() == 0 || r == 0 {
            return 0;
        }
        numerical_rank(&basis.rows(0, r).into_owned(), rank_tol)
    }

    /// Sum of device state orders.
    pub fn state_order_sum(&self) -> usize {
        self.circuit
            .branches()
            .iter()
            .map(|b| b.device.classification().state_order as usize)
            .sum()
    }

    /// Plain-text dump of `E` and the Jacobian blocks with row/column labels.
    pub fn dump(&self, jac: &JacobianBlocks) -> String {
        let r = self.dynamic_len();
        let labels = &self.layout.labels;
        let rows: Vec<String> = (0..self.dim()).map(|k| self.row_label(k)).collect();
        let mut out = String::new();
        out.push_str(&format_block("E", &self.e_matrix(), &rows, labels));
        out.push_str(&format_block("F12", &jac.f12(), &rows[..r], &labels[r..]));
        out.push_str(&format_block("F21", &jac.f21(), &rows[r..], &labels[..r]));
        out.push_str(&format_block("F22", &jac.f22(), &rows[r..], &labels[r..]));
        out
    }

    /// `(A_k ...)` as a dense block, columns in class order then branch order.
    pub fn incidence_block(&self, classes: &[DeviceClass]) -> Matrix {
        if classes.is_empty() {
            return Matrix::zeros(self.incidence.nrows(), 0);
        }
        hcat(self.incidence.nrows(), &[&self.incidence.block(classes)])
    }
}

/// Labeled matrix block in the dump format:
///
/// ```text
/// [F22] 2x2
///                 e(1)     i(C1)
/// KCL at 1           2         1
/// ```
pub fn format_block(name: &str, m: &Matrix, rows: &[String], cols: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[{name}] {}x{}", m.nrows(), m.ncols());
    if m.nrows() == 0 || m.ncols() == 0 {
        return out;
    }
    let cells: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| format_number(m[(i, j)] + 0.0))
                .collect()
        })
        .collect();
    let lw = rows.iter().map(String::len).max().unwrap_or(0);
    let cw = cols
        .iter()
        .map(String::len)
        .chain(cells.iter().flatten().map(String::len))
        .max()
        .unwrap_or(1);
    let _ = write!(out, "{:lw$}", "");
    for c in cols {
        let _ = write!(out, "  {c:>cw$}");
    }
    out.push('\n');
    for (label, row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:lw$}");
        for cell in row {
            let _ = write!(out, "  {cell:>cw$}");
        }
        out.push('\n');
    }
    out
}
