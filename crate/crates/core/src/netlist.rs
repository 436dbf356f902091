//! Netlist text format, the [`Circuit`] graph and its reduced incidence matrix.
//!
//! Grammar (one device per line, `#` starts a comment):
//!
//! ```text
//! R|G|C|L  name n+ n- (value | expr <expression>)
//! V|I      name n+ n- (dc v0 | sine amp freq [phase] [offset])
//! MQ|MW|MC|ML|HM|HW name n+ n- (builtin[(args)] | expr <expression>)
//! .ref node
//! .ic q(name) value | .ic phi(name) value
//! .param name value
//! ```
//!
//! The class keyword may also be omitted when the device name starts with it
//! (`MW1 1 0 chua_w`). Branch current flows from `n+` to `n-`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::devices::{
    self, Characteristic, DeviceClass, DeviceError, DeviceSpec, Law, SourceWaveform,
};
use crate::expr::{format_number, parse_expr_with, ExprError, Var};
use crate::linalg::Matrix;
use crate::topology::UnionFind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    #[error("line {line}, column {col}: syntax error: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("line {line}: unknown device class for `{name}`")]
    UnknownClass { line: usize, name: String },
    #[error("line {line}: second-order devices are out of scope ({what})")]
    OutOfScope { line: usize, what: String },
    #[error("line {line}, column {col}: {msg}")]
    Arity {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("line {line}: branch `{name}` is a self-loop on node `{node}`")]
    SelfLoop {
        line: usize,
        name: String,
        node: String,
    },
    #[error("circuit is disconnected: {}", fmt_components(.components))]
    Disconnected { components: Vec<Vec<String>> },
    #[error("line {line}: duplicate device name `{name}`")]
    Duplicate { line: usize, name: String },
    #[error("netlist contains no devices")]
    Empty,
    #[error("reference node `{0}` does not appear in any branch")]
    Reference(String),
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

fn fmt_components(c: &[Vec<String>]) -> String {
    c.iter()
        .map(|n| format!("{{{}}}", n.join(", ")))
        .collect::<Vec<_>>()
        .join(" | ")
}

impl NetlistError {
    pub fn line(&self) -> Option<usize> {
        match self {
            NetlistError::Syntax { line, .. }
            | NetlistError::UnknownClass { line, .. }
            | NetlistError::OutOfScope { line, .. }
            | NetlistError::Arity { line, .. }
            | NetlistError::SelfLoop { line, .. }
            | NetlistError::Duplicate { line, .. }
            | NetlistError::Invalid { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub device: DeviceSpec,
    /// Node the branch leaves (`n+`).
    pub from: usize,
    /// Node the branch enters (`n-`).
    pub to: usize,
    /// Source line, 0 for programmatically built circuits.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub device: String,
    pub var: Var,
    pub value: f64,
}

impl InitialCondition {
    pub fn label(&self) -> String {
        format!("{}({})", self.var, self.device)
    }
}

/// Connected circuit graph with a designated reference node.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    nodes: Vec<String>,
    reference: usize,
    branches: Vec<Branch>,
    initial: Vec<InitialCondition>,
}

impl Circuit {
    /// Validates connectivity, self-loops, unique names and initial conditions.
    pub fn new(
        nodes: Vec<String>,
        reference: usize,
        branches: Vec<Branch>,
        initial: Vec<InitialCondition>,
    ) -> Result<Circuit, NetlistError> {
        if branches.is_empty() {
            return Err(NetlistError::Empty);
        }
        let mut seen = HashMap::new();
        let mut used = vec![false; nodes.len()];
        for b in &branches {
            if b.from == b.to {
                return Err(NetlistError::SelfLoop {
                    line: b.line,
                    name: b.device.name.clone(),
                    node: nodes[b.from].clone(),
                });
            }
            if seen.insert(b.device.name.clone(), ()).is_some() {
                return Err(NetlistError::Duplicate {
                    line: b.line,
                    name: b.device.name.clone(),
                });
            }
            used[b.from] = true;
            used[b.to] = true;
        }
        if reference >= nodes.len() || !used[reference] {
            return Err(NetlistError::Reference(
                nodes.get(reference).cloned().unwrap_or_default(),
            ));
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(NetlistError::Invalid {
                line: 0,
                msg: format!("node `{}` appears in no branch", nodes[k]),
            });
        }
        let mut uf = UnionFind::new(nodes.len());
        for b in &branches {
            uf.union(b.from, b.to);
        }
        let groups = uf.groups();
        if groups.len() > 1 {
            let components = groups
                .into_iter()
                .map(|g| g.into_iter().map(|n| nodes[n].clone()).collect())
                .collect();
            return Err(NetlistError::Disconnected { components });
        }
        for ic in &initial {
            let Some(b) = branches.iter().find(|b| b.device.name == ic.device) else {
                return Err(NetlistError::Invalid {
                    line: 0,
                    msg: format!("initial condition for unknown device `{}`", ic.device),
                });
            };
            if !b.device.class.state_vars().contains(&ic.var) {
                return Err(NetlistError::Invalid {
                    line: 0,
                    msg: format!(
                        "`{}` is not a dynamic variable of {} `{}`",
                        ic.var, b.device.class, ic.device
                    ),
                });
            }
        }
        Ok(Circuit {
            nodes,
            reference,
            branches,
            initial,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_name(&self, id: usize) -> &str {
        &self.nodes[id]
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn initial_conditions(&self) -> &[InitialCondition] {
        &self.initial
    }

    pub fn branch_index(&self, name: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.device.name == name)
    }

    /// Non-reference nodes in order of first appearance; the rows of `A`.
    pub fn row_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&n| n != self.reference)
            .collect()
    }

    /// Row of `node` in the reduced incidence matrix (`None` for the reference).
    pub fn row_of(&self, node: usize) -> Option<usize> {
        match node.cmp(&self.reference) {
            std::cmp::Ordering::Less => Some(node),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(node - 1),
        }
    }

    pub fn count(&self, class: DeviceClass) -> usize {
        self.branches
            .iter()
            .filter(|b| b.device.class == class)
            .count()
    }

    pub fn with_initial_conditions(
        mut self,
        initial: Vec<InitialCondition>,
    ) -> Result<Circuit, NetlistError> {
        self.initial = initial;
        Circuit::new(self.nodes, self.reference, self.branches, self.initial)
    }

    /// Canonical netlist text; parsing it yields an identical circuit.
    pub fn to_netlist(&self) -> String {
        let mut out = String::new();
        for b in &self.branches {
            let d = &b.device;
            let law = match &d.law {
                Law::Source(w) => w.to_string(),
                Law::Characteristic(ch) => match ch.linear_value() {
                    Some(v) if !is_memristive(d.class) => format_number(v),
                    _ => format!("expr {}", ch.to_expr()),
                },
            };
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                d.class.keyword(),
                d.name,
                self.nodes[b.from],
                self.nodes[b.to],
                law
            );
        }
        let _ = writeln!(out, ".ref {}", self.nodes[self.reference]);
        for ic in &self.initial {
            let _ = writeln!(out, ".ic {} {}", ic.label(), format_number(ic.value));
        }
        out
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_netlist())
    }
}

fn is_memristive(class: DeviceClass) -> bool {
    matches!(
        class,
        DeviceClass::QMemristor
            | DeviceClass::PhiMemristor
            | DeviceClass::Memcapacitor
            | DeviceClass::Meminductor
            | DeviceClass::HybridM
            | DeviceClass::HybridW
    )
}

/// Programmatic circuit construction with string node labels.
#[derive(Debug, Default, Clone)]
pub struct CircuitBuilder {
    nodes: Vec<String>,
    branches: Vec<Branch>,
    initial: Vec<InitialCondition>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn node(&mut self, label: &str) -> usize {
        match self.nodes.iter().position(|n| n == label) {
            Some(k) => k,
            None => {
                self.nodes.push(label.to_string());
                self.nodes.len() - 1
            }
        }
    }

    pub fn add(&mut self, device: DeviceSpec, plus: &str, minus: &str) -> &mut Self {
        let from = self.node(plus);
        let to = self.node(minus);
        self.branches.push(Branch {
            device,
            from,
            to,
            line: 0,
        });
        self
    }

    pub fn initial(&mut self, device: &str, var: Var, value: f64) -> &mut Self {
        self.initial.push(InitialCondition {
            device: device.to_string(),
            var,
            value,
        });
        self
    }

    pub fn build(&self, reference: &str) -> Result<Circuit, NetlistError> {
        let reference = self
            .nodes
            .iter()
            .position(|n| n == reference)
            .ok_or_else(|| NetlistError::Reference(reference.to_string()))?;
        Circuit::new(
            self.nodes.clone(),
            reference,
            self.branches.clone(),
            self.initial.clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// Incidence

/// Reduced incidence matrix, stored by column as the rows of the leaving and
/// entering nodes (absent for the reference node).
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    rows: usize,
    columns: Vec<(Option<usize>, Option<usize>)>,
    partition: BTreeMap<DeviceClass, Vec<usize>>,
}

impl IncidenceMatrix {
    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// `(row left by branch j, row entered by branch j)`.
    pub fn column(&self, j: usize) -> (Option<usize>, Option<usize>) {
        self.columns[j]
    }

    pub fn entry(&self, i: usize, j: usize) -> i8 {
        let (plus, minus) = self.columns[j];
        if plus == Some(i) {
            1
        } else if minus == Some(i) {
            -1
        } else {
            0
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        (0..self.rows)
            .map(|i| (0..self.ncols()).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.ncols(), |i, j| self.entry(i, j) as f64)
    }

    /// Column indices of a device class, in branch order.
    pub fn columns_of(&self, class: DeviceClass) -> &[usize] {
        self.partition.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn partition(&self) -> &BTreeMap<DeviceClass, Vec<usize>> {
        &self.partition
    }

    /// Dense column block `(A_k1 A_k2 ...)` for the listed classes.
    pub fn block(&self, classes: &[DeviceClass]) -> Matrix {
        let cols: Vec<usize> = classes
            .iter()
            .flat_map(|c| self.columns_of(*c).iter().copied())
            .collect();
        Matrix::from_fn(self.rows, cols.len(), |i, j| self.entry(i, cols[j]) as f64)
    }

    /// `Aᵀ e` for branch `j`: the branch voltage.
    pub fn branch_voltage(&self, j: usize, e: &[f64]) -> f64 {
        let (plus, minus) = self.columns[j];
        plus.map_or(0.0, |r| e[r]) - minus.map_or(0.0, |r| e[r])
    }
}

pub fn reduced_incidence(circuit: &Circuit) -> IncidenceMatrix {
    let mut partition: BTreeMap<DeviceClass, Vec<usize>> = BTreeMap::new();
    let columns = circuit
        .branches
        .iter()
        .enumerate()
        .map(|(j, b)| {
            partition.entry(b.device.class).or_default().push(j);
            (circuit.row_of(b.from), circuit.row_of(b.to))
        })
        .collect();
    IncidenceMatrix {
        rows: circuit.nodes.len() - 1,
        columns,
        partition,
    }
}

// ---------------------------------------------------------------------------
// Parsing

const OUT_OF_SCOPE: [(&str, &str); 3] = [
    ("MCQ", "charge-controlled memcapacitor"),
    ("MLF", "flux-controlled meminductor"),
    ("MSR", "sigma-rho device"),
];

struct Tok<'a> {
    text: &'a str,
    start: usize,
}

fn split_tokens(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Tok {
                    text: &line[s..k],
                    start: s,
                });
                start = None;
            }
            (false, None) => start = Some(k),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Tok {
            text: &line[s..],
            start: s,
        });
    }
    out
}

fn col(line: &str, byte: usize) -> usize {
    line[..byte].chars().count() + 1
}

fn classify_name(name: &str) -> Result<Option<DeviceClass>, &'static str> {
    let upper = name.to_ascii_uppercase();
    for (prefix, what) in OUT_OF_SCOPE {
        if upper.starts_with(prefix) {
            return Err(what);
        }
    }
    for kw in [
        "MQ", "MW", "MC", "ML", "HM", "HW", "R", "G", "C", "L", "V", "I",
    ] {
        if upper.starts_with(kw) {
            return Ok(DeviceClass::from_keyword(kw));
        }
    }
    Ok(None)
}

struct Ctx<'a> {
    line_no: usize,
    line: &'a str,
    params: &'a BTreeMap<String, f64>,
}

impl Ctx<'_> {
    fn syntax<T>(&self, byte: usize, msg: impl Into<String>) -> Result<T, NetlistError> {
        Err(NetlistError::Syntax {
            line: self.line_no,
            col: col(self.line, byte),
            msg: msg.into(),
        })
    }

    fn number(&self, tok: &Tok) -> Result<f64, NetlistError> {
        if let Some(&v) = self.params.get(tok.text) {
            return Ok(v);
        }
        match tok.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.syntax(
                tok.start,
                format!("expected a number, found `{}`", tok.text),
            ),
        }
    }

    fn expr_error(&self, offset: usize, e: ExprError) -> NetlistError {
        let base = col(self.line, offset);
        match e {
            ExprError::Syntax { col: c, msg } => NetlistError::Syntax {
                line: self.line_no,
                col: base + c - 1,
                msg,
            },
            ExprError::UnknownIdent { name, col: c } => NetlistError::Syntax {
                line: self.line_no,
                col: base + c - 1,
                msg: format!("unknown identifier `{name}`"),
            },
            ExprError::SecondOrder { name } => NetlistError::OutOfScope {
                line: self.line_no,
                what: format!("variable `{name}`"),
            },
            ExprError::Domain(msg) => NetlistError::Invalid {
                line: self.line_no,
                msg,
            },
        }
    }

    fn device_error(&self, offset: usize, e: DeviceError) -> NetlistError {
        match e {
            DeviceError::Arity { .. } | DeviceError::TimeVarying => NetlistError::Arity {
                line: self.line_no,
                col: col(self.line, offset),
                msg: e.to_string(),
            },
            DeviceError::Expr(x) => self.expr_error(offset, x),
            DeviceError::Parameter(msg) => NetlistError::Invalid {
                line: self.line_no,
                msg,
            },
        }
    }

    fn parse_expression(
        &self,
        class: DeviceClass,
        offset: usize,
    ) -> Result<Characteristic, NetlistError> {
        let text = &self.line[offset..];
        if text.trim().is_empty() {
            return self.syntax(offset, "missing expression after `expr`");
        }
        let e = parse_expr_with(text, self.params).map_err(|e| self.expr_error(offset, e))?;
        Characteristic::expression(class, e).map_err(|e| self.device_error(offset, e))
    }

    fn parse_passive(&self, class: DeviceClass, rest: &[Tok]) -> Result<Law, NetlistError> {
        let Some(first) = rest.first() else {
            return self.syntax(self.line.len(), format!("missing value for {class}"));
        };
        if first.text == "expr" {
            let offset = rest.get(1).map_or(self.line.len(), |t| t.start);
            return Ok(Law::Characteristic(self.parse_expression(class, offset)?));
        }
        // optional lowercase class tag: `R1 1 0 r 2`
        let value_tok = if first.text == class.keyword().to_ascii_lowercase() && rest.len() == 2 {
            &rest[1]
        } else {
            first
        };
        let consumed = if std::ptr::eq(value_tok, first) { 1 } else { 2 };
        if rest.len() > consumed {
            return self.syntax(rest[consumed].start, "unexpected trailing tokens");
        }
        let v = self.number(value_tok)?;
        Characteristic::linear(class, v)
            .map(Law::Characteristic)
            .map_err(|e| self.device_error(value_tok.start, e))
    }

    fn parse_source(&self, rest: &[Tok]) -> Result<Law, NetlistError> {
        let Some(first) = rest.first() else {
            return self.syntax(self.line.len(), "missing source waveform");
        };
        let wave = match first.text.to_ascii_lowercase().as_str() {
            "dc" => {
                if rest.len() != 2 {
                    return self.syntax(first.start, "expected `dc <value>`");
                }
                SourceWaveform::Dc(self.number(&rest[1])?)
            }
            "sine" | "sin" => {
                if !(3..=5).contains(&rest.len()) {
                    return self.syntax(first.start, "expected `sine amp freq [phase] [offset]`");
                }
                let nums: Vec<f64> = rest[1..]
                    .iter()
                    .map(|t| self.number(t))
                    .collect::<Result<_, _>>()?;
                SourceWaveform::Sine {
                    amplitude: nums[0],
                    frequency: nums[1],
                    phase: nums.get(2).copied().unwrap_or(0.0),
                    offset: nums.get(3).copied().unwrap_or(0.0),
                }
            }
            _ if rest.len() == 1 => SourceWaveform::Dc(self.number(first)?),
            _ => return self.syntax(first.start, format!("unknown waveform `{}`", first.text)),
        };
        Ok(Law::Source(wave))
    }

    fn parse_builtin(
        &self,
        class: DeviceClass,
        name: &str,
        offset: usize,
    ) -> Result<DeviceSpec, NetlistError> {
        let text = self.line[offset..].trim();
        let (bname, args) = match text.find('(') {
            Some(p) => {
                let Some(inner) = text[p + 1..].strip_suffix(')') else {
                    return self.syntax(offset + p, "unterminated builtin argument list");
                };
                let args: Vec<f64> = inner
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        let s = s.trim();
                        self.params
                            .get(s)
                            .copied()
                            .or_else(|| s.parse().ok())
                            .ok_or(())
                    })
                    .collect::<Result<_, _>>()
                    .or_else(|_| self.syntax(offset + p, "builtin arguments must be numbers"))?;
                (text[..p].trim(), args)
            }
            None => (text, Vec::new()),
        };
        let expected = |n: usize| -> Result<(), NetlistError> {
            if args.len() != n {
                return self.syntax(
                    offset,
                    format!(
                        "builtin `{bname}` takes {n} argument(s), got {}",
                        args.len()
                    ),
                );
            }
            Ok(())
        };
        let (builtin_class, spec) = match bname {
            "chua_m" => {
                expected(0)?;
                (DeviceClass::QMemristor, devices::chua_m(name))
            }
            "chua_w" => {
                expected(0)?;
                (DeviceClass::PhiMemristor, devices::chua_w(name))
            }
            "josephson_mc" => {
                expected(4)?;
                let d = devices::josephson_memcapacitor(name, args[0], args[1], args[2], args[3])
                    .map_err(|e| self.device_error(offset, e))?;
                (DeviceClass::Memcapacitor, d)
            }
            "hybrid_series" => {
                expected(0)?;
                (DeviceClass::HybridM, devices::hybrid_series(name))
            }
            "hybrid_parallel" => {
                expected(0)?;
                (DeviceClass::HybridW, devices::hybrid_parallel(name))
            }
            "memsystem" | "charge_mc" | "flux_ml" => {
                return Err(NetlistError::OutOfScope {
                    line: self.line_no,
                    what: format!("builtin `{bname}`"),
                })
            }
            _ => {
                return Err(NetlistError::Invalid {
                    line: self.line_no,
                    msg: format!("unknown builtin `{bname}` for {class}"),
                })
            }
        };
        if builtin_class != class {
            return Err(NetlistError::Invalid {
                line: self.line_no,
                msg: format!(
                    "builtin `{bname}` is a {builtin_class}, not valid for {}",
                    class.keyword()
                ),
            });
        }
        Ok(spec)
    }
}

/// Parse netlist text into a validated [`Circuit`].
pub fn parse_netlist(text: &str) -> Result<Circuit, NetlistError> {
    let mut nodes: Vec<String> = Vec::new();
    let mut branches = Vec::new();
    let mut ic_lines: Vec<(usize, String, Var, f64)> = Vec::new();
    let mut reference: Option<(usize, String)> = None;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();

    let node_id = |label: &str, nodes: &mut Vec<String>| match nodes.iter().position(|n| n == label)
    {
        Some(k) => k,
        None => {
            nodes.push(label.to_string());
            nodes.len() - 1
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("");
        let toks = split_tokens(line);
        let Some(head) = toks.first() else { continue };
        let ctx = Ctx {
            line_no,
            line,
            params: &params,
        };

        if let Some(directive) = head.text.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "ref" => {
                    if toks.len() != 2 {
                        return ctx.syntax(head.start, "expected `.ref <node>`");
                    }
                    reference = Some((line_no, toks[1].text.to_string()));
                }
                "ic" => {
                    if toks.len() != 3 {
                        return ctx.syntax(head.start, "expected `.ic q(name)|phi(name) <value>`");
                    }
                    let target = toks[1].text;
                    let parsed = target
                        .strip_suffix(')')
                        .and_then(|t| t.split_once('('))
                        .and_then(|(v, d)| match v {
                            "q" => Some((Var::Q, d)),
                            "phi" | "φ" => Some((Var::Phi, d)),
                            _ => None,
                        });
                    let Some((var, dev)) = parsed else {
                        return ctx.syntax(
                            toks[1].start,
                            format!("bad initial-condition target `{target}`"),
                        );
                    };
                    let value = ctx.number(&toks[2])?;
                    ic_lines.push((line_no, dev.to_string(), var, value));
                }
                "param" => {
                    if toks.len() != 3 {
                        return ctx.syntax(head.start, "expected `.param <name> <value>`");
                    }
                    let value = ctx.number(&toks[2])?;
                    params.insert(toks[1].text.to_string(), value);
                }
                "end" => break,
                other => return ctx.syntax(head.start, format!("unknown directive `.{other}`")),
            }
            continue;
        }

        // device line
        let keyword_form = DeviceClass::from_keyword(head.text).is_some()
            || OUT_OF_SCOPE.iter().any(|(k, _)| *k == head.text);
        let (class, name_tok, rest_at) = if keyword_form {
            if let Some((_, what)) = OUT_OF_SCOPE.iter().find(|(k, _)| *k == head.text) {
                return Err(NetlistError::OutOfScope {
                    line: line_no,
                    what: what.to_string(),
                });
            }
            let class = DeviceClass::from_keyword(head.text).expect("checked above");
            let Some(name) = toks.get(1) else {
                return ctx.syntax(line.len(), "missing device name");
            };
            (class, name, 2)
        } else {
            match classify_name(head.text) {
                Err(what) => {
                    return Err(NetlistError::OutOfScope {
                        line: line_no,
                        what: what.to_string(),
                    })
                }
                Ok(None) => {
                    return Err(NetlistError::UnknownClass {
                        line: line_no,
                        name: head.text.to_string(),
                    })
                }
                Ok(Some(c)) => (c, head, 1),
            }
        };
        if toks.len() < rest_at + 2 {
            return ctx.syntax(line.len(), "expected two terminal nodes");
        }
        let name = name_tok.text.to_string();
        let from = node_id(toks[rest_at].text, &mut nodes);
        let to = node_id(toks[rest_at + 1].text, &mut nodes);
        if from == to {
            return Err(NetlistError::SelfLoop {
                line: line_no,
                name,
                node: toks[rest_at].text.to_string(),
            });
        }
        let rest = &toks[rest_at + 2..];

        let device = match class {
            DeviceClass::Resistor
            | DeviceClass::Conductor
            | DeviceClass::Capacitor
            | DeviceClass::Inductor => DeviceSpec {
                name: name.clone(),
                class,
                law: ctx.parse_passive(class, rest)?,
            },
            DeviceClass::VSource | DeviceClass::ISource => DeviceSpec {
                name: name.clone(),
                class,
                law: ctx.parse_source(rest)?,
            },
            _ => {
                let Some(first) = rest.first() else {
                    return ctx.syntax(line.len(), format!("missing characteristic for {class}"));
                };
                if first.text == "expr" {
                    let offset = rest.get(1).map_or(line.len(), |t| t.start);
                    DeviceSpec::with_characteristic(
                        name.clone(),
                        ctx.parse_expression(class, offset)?,
                    )
                } else {
                    ctx.parse_builtin(class, &name, first.start)?
                }
            }
        };
        branches.push(Branch {
            device,
            from,
            to,
            line: line_no,
        });
    }

    if branches.is_empty() {
        return Err(NetlistError::Empty);
    }
    let reference = match reference {
        Some((line, label)) => {
            nodes
                .iter()
                .position(|n| *n == label)
                .ok_or(NetlistError::Invalid {
                    line,
                    msg: format!("reference node `{label}` does not appear in any branch"),
                })?
        }
        None => nodes
            .iter()
            .position(|n| n == "0")
            .ok_or_else(|| NetlistError::Reference("0".into()))?,
    };
    // per-line context for initial-condition errors
    for (line, dev, var, _) in &ic_lines {
        let Some(b) = branches.iter().find(|b: &&Branch| b.device.name == *dev) else {
            return Err(NetlistError::Invalid {
                line: *line,
                msg: format!("initial condition for unknown device `{dev}`"),
            });
        };
        if !b.device.class.state_vars().contains(var) {
            return Err(NetlistError::Invalid {
                line: *line,
                msg: format!(
                    "`{var}` is not a dynamic variable of {} `{dev}`",
                    b.device.class
                ),
            });
        }
    }
    let initial = ic_lines
        .into_iter()
        .map(|(_, device, var, value)| InitialCondition { device, var, value })
        .collect();
    Circuit::new(nodes, reference, branches, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Point;

    #[test]
    fn minimal_circuit() {
        let c = parse_netlist("V1 1 0 dc 1\nR1 1 0 r 1").unwrap();
        assert_eq!(c.nodes().len(), 2);
        let classes: Vec<_> = c.branches().iter().map(|b| b.device.class).collect();
        assert_eq!(classes, vec![DeviceClass::VSource, DeviceClass::Resistor]);
        assert_eq!(c.node_name(c.reference()), "0");
    }

    #[test]
    fn keyword_form_is_equivalent() {
        let a = parse_netlist("V V1 1 0 dc 1\nR R1 1 0 1\n").unwrap();
        let b = parse_netlist("V1 1 0 dc 1\nR1 1 0 1").unwrap();
        assert_eq!(a.to_netlist(), b.to_netlist());
    }

    #[test]
    fn builtin_chua_w_expands() {
        let c = parse_netlist("MW1 1 0 chua_w\nR1 1 0 1").unwrap();
        let d = &c.branches()[0].device;
        assert_eq!(d.class, DeviceClass::PhiMemristor);
        let ch = d.characteristic().unwrap();
        for &(phi, v) in &[(0.0, 1.0), (2.0, 0.5), (-1.5, -2.0)] {
            let got = ch.eval(&Point::new(0.0, phi, 0.0, v)).unwrap();
            assert!((got - (1.0 + phi * phi) * v).abs() < 1e-14);
        }
    }

    #[test]
    fn unknown_class() {
        let err = parse_netlist("X1 1 0 foo").unwrap_err();
        assert!(
            matches!(err, NetlistError::UnknownClass { line: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn second_order_devices_rejected() {
        for text in [
            "MCQ1 1 0 expr q",
            "MLF L 1 0 expr q",
            "MQ1 1 0 expr sigma*i",
            "MC1 1 0 charge_mc",
        ] {
            let err = parse_netlist(text).unwrap_err();
            assert!(
                matches!(err, NetlistError::OutOfScope { .. }),
                "{text}: {err}"
            );
            assert!(err
                .to_string()
                .contains("second-order devices are out of scope"));
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse_netlist("R1 1 1 2").unwrap_err(),
            NetlistError::SelfLoop { .. }
        ));
        assert!(matches!(
            parse_netlist("R1 1 0 2\nR2 2 3 1").unwrap_err(),
            NetlistError::Disconnected { .. }
        ));
        assert!(matches!(
            parse_netlist("# nothing\n").unwrap_err(),
            NetlistError::Empty
        ));
        assert!(matches!(
            parse_netlist("R1 1 2 1").unwrap_err(),
            NetlistError::Reference(_)
        ));
        assert!(matches!(
            parse_netlist("R1 1 0 1\nR1 1 0 2").unwrap_err(),
            NetlistError::Duplicate { line: 2, .. }
        ));
    }

    #[test]
    fn arity_violation_reports_line() {
        let err = parse_netlist("R1 1 0 1\nMQ1 1 0 expr (1 + phi^2)*i").unwrap_err();
        assert!(matches!(err, NetlistError::Arity { line: 2, .. }), "{err}");
    }

    #[test]
    fn syntax_error_has_line_and_column() {
        let err = parse_netlist("R1 1 0 1\nMQ1 1 0 expr q +").unwrap_err();
        match err {
            NetlistError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 17);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn directives() {
        let text = "\
.param k 2
MC1 1 0 josephson_mc(1, k, 0.5, 1)  # Josephson
ML1 1 0 expr (1 + q^2)*i
.ic phi(MC1) 0.25
.ic q(ML1) -1
.ref 1
";
        let c = parse_netlist(text).unwrap();
        assert_eq!(c.node_name(c.reference()), "1");
        assert_eq!(c.initial_conditions().len(), 2);
        assert!(parse_netlist("R1 1 0 1\n.ic q(R1) 1").is_err());
        assert!(parse_netlist("R1 1 0 1\n.ic q(C9) 1").is_err());
        assert!(parse_netlist("MC1 1 0 chua_m").is_err());
        assert!(parse_netlist("MC1 1 0 josephson_mc(1, 0, 0, 1)").is_err());
    }

    #[test]
    fn sources() {
        let c = parse_netlist("V1 1 0 sine 2 50 0.5 1\nI1 0 1 3\nR1 1 0 1").unwrap();
        let w = c.branches()[0].device.waveform().unwrap();
        assert_eq!(
            *w,
            SourceWaveform::Sine {
                amplitude: 2.0,
                frequency: 50.0,
                phase: 0.5,
                offset: 1.0
            }
        );
        assert_eq!(
            *c.branches()[1].device.waveform().unwrap(),
            SourceWaveform::Dc(3.0)
        );
    }

    #[test]
    fn incidence_single_branch() {
        let c = parse_netlist("R1 1 0 1").unwrap();
        assert_eq!(reduced_incidence(&c).to_rows(), vec![vec![1]]);
    }

    #[test]
    fn incidence_triangle() {
        let c = parse_netlist("R1 1 2 1\nR2 2 3 1\nR3 3 1 1\n.ref 3").unwrap();
        assert_eq!(
            reduced_incidence(&c).to_rows(),
            vec![vec![1, 0, -1], vec![-1, 1, 0]]
        );
    }

    #[test]
    fn reversing_orientation_negates_column() {
        let a = reduced_incidence(&parse_netlist("R1 1 2 1\nR2 2 0 1\nR3 1 0 1").unwrap());
        let b = reduced_incidence(&parse_netlist("R1 2 1 1\nR2 2 0 1\nR3 1 0 1").unwrap());
        // node order differs when the first branch is reversed; compare via labels
        let ra = a.to_rows();
        let rb = b.to_rows();
        assert_eq!(ra[0][0], -rb[1][0]);
        assert_eq!(ra[1][0], -rb[0][0]);
    }

    #[test]
    fn partition_covers_columns_disjointly() {
        let c = parse_netlist("V1 1 0 1\nR1 1 2 1\nC1 2 0 1\nMW1 2 0 chua_w\nC2 1 2 2").unwrap();
        let a = reduced_incidence(&c);
        let mut all: Vec<usize> = a.partition().values().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..a.ncols()).collect::<Vec<_>>());
        assert_eq!(a.columns_of(DeviceClass::Capacitor), &[2, 4]);
    }

    #[test]
    fn canonical_form_is_fixed_point() {
        let text = "\
V1 in 0 sine 1 0.5
MQ1 in mid chua_m
HW1 mid 0 hybrid_parallel
MC1 mid 0 josephson_mc(0.1, 1, 0.5, 1)
ML1 in 0 expr (1 + q^2)*i
C1 in mid 2.5
.ic q(MC1) 0.5
";
        let once = parse_netlist(text).unwrap().to_netlist();
        let twice = parse_netlist(&once).unwrap().to_netlist();
        assert_eq!(once, twice);
        assert_eq!(
            parse_netlist(&once).unwrap(),
            parse_netlist(&twice).unwrap()
        );
    }
}
