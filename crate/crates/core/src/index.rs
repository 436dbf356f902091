//! Index analysis of the linearized model: the `F22` test, the projector
//! chain `E1 = E − FQ`, `E2 = E1 − F1 Q1`, the two Schur-reduced matrices and
//! an independent shuffle-algorithm oracle for the Kronecker index.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::devices::DeviceClass::{self, *};
use crate::linalg::{
    condition_number, hcat, is_nonsingular, nullspace_basis, nullspace_projector, numerical_rank,
    oblique_projector, span_projector, vcat, Matrix, Vector, DEFAULT_RANK_TOL,
};
use crate::nodal::{NodalError, SemiExplicitDAE};
use crate::sim::{consistent_init, SolverConfig};
use crate::topology::{
    components_without, degeneracy_report, fundamental_cycles, DegeneracyReport, TopologyError, ILM,
};

/// Matrix pencil `λE − F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub e: Matrix,
    pub f: Matrix,
}

impl Pencil {
    pub fn new(e: Matrix, f: Matrix) -> Self {
        assert!(
            e.is_square() && e.shape() == f.shape(),
            "pencil matrices must be square and of equal size"
        );
        Pencil { e, f }
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TractabilityIndex {
    /// `E` itself is nonsingular (no algebraic part).
    Zero,
    One,
    Two,
    /// `E2` singular: index above two or hypotheses violated.
    Unresolved,
}

impl TractabilityIndex {
    pub fn as_number(self) -> Option<usize> {
        match self {
            TractabilityIndex::Zero => Some(0),
            TractabilityIndex::One => Some(1),
            TractabilityIndex::Two => Some(2),
            TractabilityIndex::Unresolved => None,
        }
    }
}

impl fmt::Display for TractabilityIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_number() {
            Some(k) => write!(f, "{k}"),
            None => f.write_str("unresolved"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorKind {
    Orthogonal,
    /// Randomized oblique projector, reproducible from the seed.
    Oblique(u64),
}

/// Relative residuals of the projector identities along the chain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectorResiduals {
    pub q_idempotent: f64,
    pub e_q: f64,
    pub q1_idempotent: f64,
    pub e1_q1: f64,
}

impl ProjectorResiduals {
    pub fn max(&self) -> f64 {
        self.q_idempotent
            .max(self.e_q)
            .max(self.q1_idempotent)
            .max(self.e1_q1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub q: Matrix,
    pub e1: Matrix,
    pub q1: Option<Matrix>,
    pub f1: Option<Matrix>,
    pub e2: Option<Matrix>,
    pub index: TractabilityIndex,
    pub e1_condition: f64,
    pub e2_condition: Option<f64>,
    pub residuals: ProjectorResiduals,
}

fn idempotency(q: &Matrix) -> f64 {
    (q * q - q).norm() / q.norm().max(1.0)
}

fn annihilation(m: &Matrix, q: &Matrix) -> f64 {
    (m * q).norm() / (m.norm() * q.norm()).max(1.0)
}

fn kernel_projector(m: &Matrix, rank_tol: f64, kind: ProjectorKind, salt: u64) -> Matrix {
    match kind {
        ProjectorKind::Orthogonal => nullspace_projector(m, rank_tol),
        ProjectorKind::Oblique(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            oblique_projector(&nullspace_basis(m, rank_tol), &mut rng)
        }
    }
}

pub fn tractability_chain(pencil: &Pencil, rank_tol: f64, kind: ProjectorKind) -> Chain {
    let n = pencil.dim();
    let (e, f) = (&pencil.e, &pencil.f);
    let q = kernel_projector(e, rank_tol, kind, 0x51);
    let e1 = e - f * &q;
    let mut residuals = ProjectorResiduals {
        q_idempotent: idempotency(&q),
        e_q: annihilation(e, &q),
        ..Default::default()
    };
    let e1_condition = condition_number(&e1);
    if is_nonsingular(&e1, rank_tol) {
        let index = if is_nonsingular(e, rank_tol) {
            TractabilityIndex::Zero
        } else {
            TractabilityIndex::One
        };
        return Chain {
            q,
            e1,
            q1: None,
            f1: None,
            e2: None,
            index,
            e1_condition,
            e2_condition: None,
            residuals,
        };
    }
    let q1 = kernel_projector(&e1, rank_tol, kind, 0xa3);
    let f1 = f * (Matrix::identity(n, n) - &q);
    let e2 = &e1 - &f1 * &q1;
    residuals.q1_idempotent = idempotency(&q1);
    residuals.e1_q1 = annihilation(&e1, &q1);
    let index = if is_nonsingular(&e2, rank_tol) {
        TractabilityIndex::Two
    } else {
        TractabilityIndex::Unresolved
    };
    Chain {
        q,
        e1,
        e2_condition: Some(condition_number(&e2)),
        q1: Some(q1),
        f1: Some(f1),
        e2: Some(e2),
        index,
        e1_condition,
        residuals,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("singular pencil: det(λE − F) vanishes at every sampled λ")]
    SingularPencil,
    #[error("deflation did not terminate within {0} stages")]
    NoProgress(usize),
}

/// Nilpotency index by repeated row compression: split `E x' = F x` into
/// `E1 x' = F1 x`, `0 = F2 x`, differentiate the constraint rows and repeat
/// until the leading matrix is nonsingular.
pub fn kronecker_oracle(pencil: &Pencil, rank_tol: f64) -> Result<usize, OracleError> {
    let n = pencil.dim();
    let regular = [0.37, -1.91, 2.63, 7.11].iter().any(|&lambda| {
        let m = &pencil.e * lambda - &pencil.f;
        is_nonsingular(&m, rank_tol)
    });
    if !regular {
        return Err(OracleError::SingularPencil);
    }
    let mut e = pencil.e.clone();
    let mut f = pencil.f.clone();
    for stage in 0..=n {
        let rank = numerical_rank(&e, rank_tol);
        if rank == n {
            return Ok(stage);
        }
        let svd = e.clone().svd(true, false);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.expect("left singular vectors requested");
        let ut = Matrix::from_fn(n, n, |i, j| u[(j, order[i])]);
        let ue = &ut * &e;
        let uf = &ut * &f;
        let mut next_e = Matrix::zeros(n, n);
        let mut next_f = Matrix::zeros(n, n);
        next_e.rows_mut(0, rank).copy_from(&ue.rows(0, rank));
        next_e
            .rows_mut(rank, n - rank)
            .copy_from(&uf.rows(rank, n - rank));
        next_f.rows_mut(0, rank).copy_from(&uf.rows(0, rank));
        e = next_e;
        f = next_f;
    }
    Err(OracleError::NoProgress(n + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchurKind {
    IndexOne,
    IndexTwo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurMatrix {
    pub kind: SchurKind,
    pub matrix: Matrix,
    pub nonsingular: bool,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchurError {
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Nodal(#[from] NodalError),
}

/// Diagonal of incremental values for `class`, in branch order.
fn incremental_diag(
    dae: &SemiExplicitDAE,
    z: &Vector,
    class: DeviceClass,
) -> Result<Vec<f64>, NodalError> {
    let mut out = Vec::new();
    for (j, b) in dae.circuit().branches().iter().enumerate() {
        if b.device.class == class {
            out.push(dae.incremental(z, j)?.expect("non-source"));
        }
    }
    Ok(out)
}

fn invert(values: Vec<f64>, what: &str) -> Result<Vec<f64>, SchurError> {
    values
        .into_iter()
        .map(|x| {
            if x.abs() > f64::EPSILON {
                Ok(1.0 / x)
            } else {
                Err(SchurError::Hypothesis(format!("{what} is singular")))
            }
        })
        .collect()
}

fn require_nonsingular(values: &[f64], what: &str) -> Result<(), SchurError> {
    if values.iter().any(|x| x.abs() <= f64::EPSILON) {
        return Err(SchurError::Hypothesis(format!("{what} is singular")));
    }
    Ok(())
}

/// `A · diag(d) · Aᵀ`.
fn stamp(a: &Matrix, d: &[f64]) -> Matrix {
    let scaled = Matrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j]);
    scaled * a.transpose()
}

fn diag(d: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(d))
}

/// Stack a grid of blocks; `rows[k]` must share row counts, columns must line up.
fn grid(rows: &[Vec<Matrix>]) -> Matrix {
    let cols: usize = rows[0].iter().map(|m| m.ncols()).sum();
    let bands: Vec<Matrix> = rows
        .iter()
        .map(|band| {
            let refs: Vec<&Matrix> = band.iter().collect();
            hcat(band[0].nrows(), &refs)
        })
        .collect();
    let refs: Vec<&Matrix> = bands.iter().collect();
    vcat(cols, &refs)
}

struct Stamps {
    a: std::collections::BTreeMap<DeviceClass, Matrix>,
    d: std::collections::BTreeMap<DeviceClass, Vec<f64>>,
}

impl Stamps {
    fn new(dae: &SemiExplicitDAE, z: &Vector) -> Result<Self, NodalError> {
        let mut a = std::collections::BTreeMap::new();
        let mut d = std::collections::BTreeMap::new();
        for class in DeviceClass::ALL {
            a.insert(class, dae.incidence().block(&[class]));
            if !class.is_source() {
                d.insert(class, incremental_diag(dae, z, class)?);
            }
        }
        Ok(Stamps { a, d })
    }

    fn a(&self, class: DeviceClass) -> &Matrix {
        &self.a[&class]
    }

    fn d(&self, class: DeviceClass) -> &[f64] {
        &self.d[&class]
    }

    fn check_reactive(&self) -> Result<(), SchurError> {
        require_nonsingular(self.d(Capacitor), "C")?;
        require_nonsingular(self.d(Memcapacitor), "C_m")?;
        require_nonsingular(self.d(Inductor), "L")?;
        require_nonsingular(self.d(Meminductor), "L_m")
    }

    /// `(A1, M1)` over `(g, w, r, m, hm, hw)` with `M1 = diag(G, W, R⁻¹, M⁻¹, M_h⁻¹, W_h)`.
    fn resistive(&self) -> Result<(Matrix, Vec<f64>), SchurError> {
        let classes = [
            Conductor,
            PhiMemristor,
            Resistor,
            QMemristor,
            HybridM,
            HybridW,
        ];
        let mut m1 = Vec::new();
        m1.extend_from_slice(self.d(Conductor));
        m1.extend_from_slice(self.d(PhiMemristor));
        m1.extend(invert(self.d(Resistor).to_vec(), "R")?);
        m1.extend(invert(self.d(QMemristor).to_vec(), "M")?);
        m1.extend(invert(self.d(HybridM).to_vec(), "M_h")?);
        m1.extend_from_slice(self.d(HybridW));
        let refs: Vec<&Matrix> = classes.iter().map(|c| self.a(*c)).collect();
        Ok((hcat(refs[0].nrows(), &refs), m1))
    }
}

/// Reduced matrix from the index-one argument:
/// `[[A1 M1 A1ᵀ, A_c, A_mc, A_u], [−A_cᵀ, 0], [−A_mcᵀ, 0], [−A_uᵀ, 0]]`.
pub fn schur_index_one(
    dae: &SemiExplicitDAE,
    z: &Vector,
    rank_tol: f64,
) -> Result<SchurMatrix, SchurError> {
    let s = Stamps::new(dae, z)?;
    s.check_reactive()?;
    let (a1, m1) = s.resistive()?;
    let top = stamp(&a1, &m1);
    let a3u = hcat(
        top.nrows(),
        &[s.a(Capacitor), s.a(Memcapacitor), s.a(VSource)],
    );
    let k = a3u.ncols();
    let matrix = grid(&[
        vec![top, a3u.clone()],
        vec![-a3u.transpose(), Matrix::zeros(k, k)],
    ]);
    Ok(finish(SchurKind::IndexOne, matrix, rank_tol))
}

/// Orthogonal projector onto `ker (A_c A_mc A_u A_g A_w A_r A_m A_hm A_hw)ᵀ` by SVD.
pub fn q_bar(dae: &SemiExplicitDAE, rank_tol: f64) -> Matrix {
    let b = dae.incidence().block(&[
        Capacitor,
        Memcapacitor,
        VSource,
        Conductor,
        PhiMemristor,
        Resistor,
        QMemristor,
        HybridM,
        HybridW,
    ]);
    nullspace_projector(&b.transpose(), rank_tol)
}

/// Orthogonal projector onto `ker (A_c A_mc A_u)` by SVD.
pub fn q_hat(dae: &SemiExplicitDAE, rank_tol: f64) -> Matrix {
    let b = dae.incidence().block(&[Capacitor, Memcapacitor, VSource]);
    nullspace_projector(&b, rank_tol)
}

/// `Q̄` from graph data: span of component indicators of the non-ILM subgraph
/// (components holding the reference node contribute nothing).
pub fn q_bar_structural(dae: &SemiExplicitDAE) -> Matrix {
    let circuit = dae.circuit();
    let rows = dae.incidence().nrows();
    let cols: Vec<Vector> = components_without(circuit, &ILM)
        .into_iter()
        .filter(|g| !g.contains(&circuit.reference()))
        .map(|g| {
            let mut v = Vector::zeros(rows);
            for n in g {
                v[circuit.row_of(n).expect("reference excluded")] = 1.0;
            }
            v
        })
        .collect();
    if cols.is_empty() {
        return Matrix::zeros(rows, rows);
    }
    span_projector(&Matrix::from_columns(&cols), DEFAULT_RANK_TOL)
}

/// `Q̂` from graph data: span of the fundamental cycles of the V/C/MC subgraph.
pub fn q_hat_structural(dae: &SemiExplicitDAE) -> Matrix {
    let inc = dae.incidence();
    let order: Vec<usize> = [Capacitor, Memcapacitor, VSource]
        .iter()
        .flat_map(|c| inc.columns_of(*c).iter().copied())
        .collect();
    let k = order.len();
    let cols: Vec<Vector> = fundamental_cycles(dae.circuit(), &[Capacitor, Memcapacitor, VSource])
        .into_iter()
        .map(|cycle| {
            let mut v = Vector::zeros(k);
            for (branch, sign) in cycle {
                v[order
                    .iter()
                    .position(|&b| b == branch)
                    .expect("cycle stays in subgraph")] = sign;
            }
            v
        })
        .collect();
    if cols.is_empty() {
        return Matrix::zeros(k, k);
    }
    span_projector(&Matrix::from_columns(&cols), DEFAULT_RANK_TOL)
}

/// Reduced matrix from the index-two argument:
/// `[[A1 M1 A1ᵀ + A2 M2 A2ᵀ Q̄, A3, A4], [−M3 A3ᵀ, Q̃, Q̌], [−A4ᵀ, 0, 0]]`.
pub fn schur_index_two(
    dae: &SemiExplicitDAE,
    z: &Vector,
    rank_tol: f64,
) -> Result<SchurMatrix, SchurError> {
    let s = Stamps::new(dae, z)?;
    s.check_reactive()?;
    let (a1, m1) = s.resistive()?;
    let rows = a1.nrows();
    let a2 = hcat(rows, &[s.a(Inductor), s.a(Meminductor)]);
    let mut m2 = invert(s.d(Inductor).to_vec(), "L")?;
    m2.extend(invert(s.d(Meminductor).to_vec(), "L_m")?);
    let a3 = hcat(rows, &[s.a(Capacitor), s.a(Memcapacitor)]);
    let mut m3 = s.d(Capacitor).to_vec();
    m3.extend_from_slice(s.d(Memcapacitor));
    let a4 = s.a(VSource).clone();
    let (k3, k4) = (a3.ncols(), a4.ncols());

    let qbar = q_bar(dae, rank_tol);
    let qhat = q_hat(dae, rank_tol);
    let q_tilde = qhat.view((0, 0), (k3, k3)).into_owned();
    let q_check = qhat.view((0, k3), (k3, k4)).into_owned();

    let top = stamp(&a1, &m1) + stamp(&a2, &m2) * qbar;
    let matrix = grid(&[
        vec![top, a3.clone(), a4.clone()],
        vec![-(diag(&m3) * a3.transpose()), q_tilde, q_check],
        vec![
            -a4.transpose(),
            Matrix::zeros(k4, k3),
            Matrix::zeros(k4, k4),
        ],
    ]);
    Ok(finish(SchurKind::IndexTwo, matrix, rank_tol))
}

fn finish(kind: SchurKind, matrix: Matrix, rank_tol: f64) -> SchurMatrix {
    SchurMatrix {
        kind,
        nonsingular: is_nonsingular(&matrix, rank_tol),
        condition: condition_number(&matrix),
        matrix,
    }
}

/// Where the Jacobian was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    User,
    /// Consistent algebraic completion of the initial dynamic state.
    Consistent,
    /// Initial dynamic state with a zero algebraic part (completion failed).
    ZeroCompletion,
}

impl fmt::Display for PointSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointSource::User => "user-supplied",
            PointSource::Consistent => "consistent completion of initial state",
            PointSource::ZeroCompletion => "initial state with zero algebraic part",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub rank_tol: f64,
    pub oracle: bool,
    pub oblique_seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            rank_tol: DEFAULT_RANK_TOL,
            oracle: false,
            oblique_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexReport {
    pub degeneracy: DegeneracyReport,
    pub labels: Vec<String>,
    pub point: Vector,
    pub point_source: PointSource,
    pub pencil: Pencil,
    pub index_one: bool,
    pub f22_condition: f64,
    pub chain: Chain,
    /// Chain verdict with a randomized oblique projector.
    pub oblique_index: TractabilityIndex,
    pub schur: Result<SchurMatrix, SchurError>,
    /// Largest gap between the graph-built and SVD-built `Q̄`, `Q̂`.
    pub structural_projector_gap: f64,
    pub oracle_index: Option<Result<usize, OracleError>>,
    pub hypothesis_warnings: Vec<String>,
    pub rank_tol: f64,
}

impl IndexReport {
    pub fn tractability_index(&self) -> TractabilityIndex {
        self.chain.index
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Nodal(#[from] NodalError),
}

/// `F22` nonsingularity and its condition number.
pub fn index_one_test(jac: &crate::nodal::JacobianBlocks, rank_tol: f64) -> (bool, f64) {
    let f22 = jac.f22();
    (is_nonsingular(&f22, rank_tol), condition_number(&f22))
}

/// Incremental values that are not strictly positive at `z`.
pub fn hypothesis_warnings(dae: &SemiExplicitDAE, z: &Vector) -> Vec<String> {
    let mut out = Vec::new();
    for (j, b) in dae.circuit().branches().iter().enumerate() {
        if let Some(ch) = b.device.characteristic() {
            if let Some(w) = ch.passivity_warning(&dae.branch_point(z, j)) {
                out.push(format!("{}: {w}", b.device.name));
            }
        }
    }
    out
}

/// Full analysis at `point` (or at the completed initial state when `None`).
pub fn analyze(
    dae: &SemiExplicitDAE,
    point: Option<Vector>,
    options: &AnalysisOptions,
) -> Result<IndexReport, AnalysisError> {
    let degeneracy = degeneracy_report(dae.circuit())?;
    let (point, point_source) = match point {
        Some(z) => (z, PointSource::User),
        None => {
            let x0 = dae.initial_dynamic();
            let config = SolverConfig {
                rank_tol: options.rank_tol,
                ..SolverConfig::default()
            };
            match consistent_init(dae, &x0, 0.0, &config) {
                Ok(z) => (z, PointSource::Consistent),
                Err(_) => {
                    let mut z = Vector::zeros(dae.dim());
                    z.rows_mut(0, x0.len()).copy_from(&x0);
                    (z, PointSource::ZeroCompletion)
                }
            }
        }
    };
    let jac = dae.jacobian(&point, 0.0)?;
    let pencil = Pencil::new(dae.e_matrix(), jac.f.clone());
    let (index_one, f22_condition) = index_one_test(&jac, options.rank_tol);
    let chain = tractability_chain(&pencil, options.rank_tol, ProjectorKind::Orthogonal);
    let oblique_index = tractability_chain(
        &pencil,
        options.rank_tol,
        ProjectorKind::Oblique(options.oblique_seed),
    )
    .index;
    let schur = if index_one {
        schur_index_one(dae, &point, options.rank_tol)
    } else {
        schur_index_two(dae, &point, options.rank_tol)
    };
    let gap = (q_bar(dae, options.rank_tol) - q_bar_structural(dae))
        .norm()
        .max((q_hat(dae, options.rank_tol) - q_hat_structural(dae)).norm());
    let oracle_index = options
        .oracle
        .then(|| kronecker_oracle(&pencil, options.rank_tol));
    Ok(IndexReport {
        degeneracy,
        labels: dae.layout().labels.clone(),
        hypothesis_warnings: hypothesis_warnings(dae, &point),
        point,
        point_source,
        pencil,
        index_one,
        f22_condition,
        chain,
        oblique_index,
        schur,
        structural_projector_gap: gap,
        oracle_index,
        rank_tol: options.rank_tol,
    })
}
