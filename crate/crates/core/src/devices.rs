//! Device taxonomy: order-zero and first-order devices, their constitutive
//! characteristics and the built-in constructors.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::expr::{format_number, Dual, Expr, ExprError, Point, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceClass {
    /// Current-controlled resistor, `v = γ_r(i)`.
    Resistor,
    /// Voltage-controlled resistor, `i = γ_g(v)`.
    Conductor,
    Capacitor,
    Inductor,
    VSource,
    ISource,
    QMemristor,
    PhiMemristor,
    Memcapacitor,
    Meminductor,
    /// Current-controlled hybrid memristor, `v = ψ(q, φ, i)`.
    HybridM,
    /// Voltage-controlled hybrid memristor, `i = ξ(q, φ, v)`.
    HybridW,
}

impl DeviceClass {
    pub const ALL: [DeviceClass; 12] = [
        DeviceClass::Resistor,
        DeviceClass::Conductor,
        DeviceClass::Capacitor,
        DeviceClass::Inductor,
        DeviceClass::VSource,
        DeviceClass::ISource,
        DeviceClass::QMemristor,
        DeviceClass::PhiMemristor,
        DeviceClass::Memcapacitor,
        DeviceClass::Meminductor,
        DeviceClass::HybridM,
        DeviceClass::HybridW,
    ];

    /// Netlist keyword.
    pub fn keyword(self) -> &'static str {
        match self {
            DeviceClass::Resistor => "R",
            DeviceClass::Conductor => "G",
            DeviceClass::Capacitor => "C",
            DeviceClass::Inductor => "L",
            DeviceClass::VSource => "V",
            DeviceClass::ISource => "I",
            DeviceClass::QMemristor => "MQ",
            DeviceClass::PhiMemristor => "MW",
            DeviceClass::Memcapacitor => "MC",
            DeviceClass::Meminductor => "ML",
            DeviceClass::HybridM => "HM",
            DeviceClass::HybridW => "HW",
        }
    }

    pub fn from_keyword(kw: &str) -> Option<DeviceClass> {
        DeviceClass::ALL.into_iter().find(|c| c.keyword() == kw)
    }

    /// Subscript used for this class in the nodal model (`c`, `mc`, `u`, ...).
    pub fn subscript(self) -> &'static str {
        match self {
            DeviceClass::Resistor => "r",
            DeviceClass::Conductor => "g",
            DeviceClass::Capacitor => "c",
            DeviceClass::Inductor => "l",
            DeviceClass::VSource => "u",
            DeviceClass::ISource => "j",
            DeviceClass::QMemristor => "m",
            DeviceClass::PhiMemristor => "w",
            DeviceClass::Memcapacitor => "mc",
            DeviceClass::Meminductor => "ml",
            DeviceClass::HybridM => "hm",
            DeviceClass::HybridW => "hw",
        }
    }

    pub fn is_source(self) -> bool {
        matches!(self, DeviceClass::VSource | DeviceClass::ISource)
    }

    /// Variables the characteristic reads.
    pub fn inputs(self) -> &'static [Var] {
        match self {
            DeviceClass::Resistor => &[Var::I],
            DeviceClass::Conductor => &[Var::V],
            DeviceClass::Capacitor => &[Var::V],
            DeviceClass::Inductor => &[Var::I],
            DeviceClass::VSource | DeviceClass::ISource => &[Var::T],
            DeviceClass::QMemristor => &[Var::Q, Var::I],
            DeviceClass::PhiMemristor => &[Var::Phi, Var::V],
            DeviceClass::Memcapacitor => &[Var::Phi, Var::V],
            DeviceClass::Meminductor => &[Var::Q, Var::I],
            DeviceClass::HybridM => &[Var::Q, Var::Phi, Var::I],
            DeviceClass::HybridW => &[Var::Q, Var::Phi, Var::V],
        }
    }

    /// Variable the characteristic yields.
    pub fn output(self) -> Var {
        match self {
            DeviceClass::Resistor => Var::V,
            DeviceClass::Conductor => Var::I,
            DeviceClass::Capacitor => Var::Q,
            DeviceClass::Inductor => Var::Phi,
            DeviceClass::VSource => Var::V,
            DeviceClass::ISource => Var::I,
            DeviceClass::QMemristor => Var::V,
            DeviceClass::PhiMemristor => Var::I,
            DeviceClass::Memcapacitor => Var::Q,
            DeviceClass::Meminductor => Var::Phi,
            DeviceClass::HybridM => Var::V,
            DeviceClass::HybridW => Var::I,
        }
    }

    /// Variable whose partial derivative defines the incremental matrix
    /// (R, G, C, L, M, W, C_m, L_m, M_h, W_h). `None` for sources.
    pub fn incremental_var(self) -> Option<Var> {
        match self {
            DeviceClass::Resistor
            | DeviceClass::Inductor
            | DeviceClass::QMemristor
            | DeviceClass::Meminductor
            | DeviceClass::HybridM => Some(Var::I),
            DeviceClass::Conductor
            | DeviceClass::Capacitor
            | DeviceClass::PhiMemristor
            | DeviceClass::Memcapacitor
            | DeviceClass::HybridW => Some(Var::V),
            DeviceClass::VSource | DeviceClass::ISource => None,
        }
    }

    pub fn incremental_name(self) -> &'static str {
        match self {
            DeviceClass::Resistor => "incremental resistance",
            DeviceClass::Conductor => "incremental conductance",
            DeviceClass::Capacitor => "incremental capacitance",
            DeviceClass::Inductor => "incremental inductance",
            DeviceClass::QMemristor => "incremental memristance",
            DeviceClass::PhiMemristor => "incremental memductance",
            DeviceClass::Memcapacitor => "incremental memcapacitance",
            DeviceClass::Meminductor => "incremental meminductance",
            DeviceClass::HybridM => "incremental hybrid memristance",
            DeviceClass::HybridW => "incremental hybrid memductance",
            DeviceClass::VSource | DeviceClass::ISource => "none",
        }
    }

    /// Dynamic variables this class contributes, in (q, φ) order.
    pub fn state_vars(self) -> &'static [Var] {
        match self {
            DeviceClass::Capacitor | DeviceClass::QMemristor => &[Var::Q],
            DeviceClass::Inductor | DeviceClass::PhiMemristor => &[Var::Phi],
            DeviceClass::Memcapacitor
            | DeviceClass::Meminductor
            | DeviceClass::HybridM
            | DeviceClass::HybridW => &[Var::Q, Var::Phi],
            _ => &[],
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DeviceClass::Resistor => "resistor (current-controlled)",
            DeviceClass::Conductor => "resistor (voltage-controlled)",
            DeviceClass::Capacitor => "capacitor",
            DeviceClass::Inductor => "inductor",
            DeviceClass::VSource => "voltage source",
            DeviceClass::ISource => "current source",
            DeviceClass::QMemristor => "q-memristor",
            DeviceClass::PhiMemristor => "phi-memristor",
            DeviceClass::Memcapacitor => "memcapacitor (voltage-controlled)",
            DeviceClass::Meminductor => "meminductor (current-controlled)",
            DeviceClass::HybridM => "hybrid memristor (current-controlled)",
            DeviceClass::HybridW => "hybrid memristor (voltage-controlled)",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub differential_order: u8,
    pub state_order: u8,
    pub controlling: &'static str,
}

pub fn classify(class: DeviceClass) -> Classification {
    let (differential_order, controlling) = match class {
        DeviceClass::Resistor => (0, "i"),
        DeviceClass::Conductor => (0, "v"),
        DeviceClass::VSource | DeviceClass::ISource => (0, "t"),
        DeviceClass::Capacitor => (1, "v"),
        DeviceClass::Inductor => (1, "i"),
        DeviceClass::QMemristor => (1, "q,i"),
        DeviceClass::PhiMemristor => (1, "phi,v"),
        DeviceClass::Memcapacitor => (1, "phi,v"),
        DeviceClass::Meminductor => (1, "q,i"),
        DeviceClass::HybridM => (1, "q,phi,i"),
        DeviceClass::HybridW => (1, "q,phi,v"),
    };
    Classification {
        differential_order,
        state_order: class.state_vars().len() as u8,
        controlling,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("{class} characteristic may only read {allowed}; found `{found}`")]
    Arity {
        class: DeviceClass,
        allowed: String,
        found: Var,
    },
    #[error("time-varying characteristics are not supported (only sources depend on t)")]
    TimeVarying,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Functional form of a constitutive map.
#[derive(Debug, Clone, PartialEq)]
pub enum Form {
    /// `offset + Σ coeffs[k]·x_k` over `(q, φ, i, v)`.
    Affine {
        offset: f64,
        coeffs: [f64; 4],
    },
    Expression(Expr),
}

/// A constitutive characteristic `output = map(inputs)` bound to its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    class: DeviceClass,
    form: Form,
}

impl Characteristic {
    pub fn new(class: DeviceClass, form: Form) -> Result<Self, DeviceError> {
        let read = match &form {
            Form::Affine { coeffs, .. } => [Var::Q, Var::Phi, Var::I, Var::V]
                .into_iter()
                .zip(coeffs)
                .filter(|(_, c)| **c != 0.0)
                .map(|(v, _)| v)
                .collect(),
            Form::Expression(e) => e.variables(),
        };
        for var in read {
            if var == Var::T {
                return Err(DeviceError::TimeVarying);
            }
            if !class.inputs().contains(&var) {
                let allowed = class
                    .inputs()
                    .iter()
                    .map(|v| v.name())
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(DeviceError::Arity {
                    class,
                    allowed,
                    found: var,
                });
            }
        }
        Ok(Characteristic { class, form })
    }

    /// Linear two-terminal law with scalar `value` on the class's incremental variable.
    pub fn linear(class: DeviceClass, value: f64) -> Result<Self, DeviceError> {
        let var = class.incremental_var().ok_or_else(|| {
            DeviceError::Parameter(format!("{class} has no linear characteristic"))
        })?;
        let mut coeffs = [0.0; 4];
        coeffs[var.slot().expect("incremental variable is differentiable")] = value;
        Characteristic::new(
            class,
            Form::Affine {
                offset: 0.0,
                coeffs,
            },
        )
    }

    pub fn expression(class: DeviceClass, expr: Expr) -> Result<Self, DeviceError> {
        Characteristic::new(class, Form::Expression(expr))
    }

    pub fn class(&self) -> DeviceClass {
        self.class
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn output(&self) -> Var {
        self.class.output()
    }

    /// Value and exact gradient w.r.t. `(q, φ, i, v)`.
    pub fn eval_dual(&self, p: &Point) -> Result<Dual, ExprError> {
        match &self.form {
            Form::Affine { offset, coeffs } => {
                let x = [p.q, p.phi, p.i, p.v];
                let value = offset + coeffs.iter().zip(x).map(|(c, x)| c * x).sum::<f64>();
                if !value.is_finite() {
                    return Err(ExprError::Domain("non-finite affine value".into()));
                }
                Ok(Dual {
                    value,
                    grad: *coeffs,
                })
            }
            Form::Expression(e) => e.eval_dual(p),
        }
    }

    pub fn eval(&self, p: &Point) -> Result<f64, ExprError> {
        Ok(self.eval_dual(p)?.value)
    }

    /// The designated partial derivative (η_i, ζ_v, ω_v, θ_i, ψ_i, ξ_v, γ').
    pub fn incremental(&self, p: &Point) -> Result<f64, ExprError> {
        let var = self
            .class
            .incremental_var()
            .expect("characteristics never belong to sources");
        let d = self.eval_dual(p)?.partial(var);
        if !d.is_finite() {
            return Err(ExprError::Domain("non-finite incremental value".into()));
        }
        Ok(d)
    }

    /// `Some(message)` when the incremental value at `p` is not strictly positive.
    pub fn passivity_warning(&self, p: &Point) -> Option<String> {
        match self.incremental(p) {
            Ok(d) if d > 0.0 => None,
            Ok(d) => Some(format!(
                "{} {} is not positive at (q={}, phi={}, i={}, v={})",
                self.class.incremental_name(),
                format_number(d),
                p.q,
                p.phi,
                p.i,
                p.v
            )),
            Err(e) => Some(format!("{}: {e}", self.class.incremental_name())),
        }
    }

    /// The characteristic as an expression tree (affine forms are expanded).
    pub fn to_expr(&self) -> Expr {
        match &self.form {
            Form::Expression(e) => e.clone(),
            Form::Affine { offset, coeffs } => {
                let mut acc: Option<Expr> = (*offset != 0.0).then_some(Expr::Const(*offset));
                for (var, &c) in [Var::Q, Var::Phi, Var::I, Var::V].into_iter().zip(coeffs) {
                    if c == 0.0 {
                        continue;
                    }
                    let term = Expr::Const(c) * Expr::Var(var);
                    acc = Some(match acc {
                        Some(a) => a + term,
                        None => term,
                    });
                }
                acc.unwrap_or(Expr::Const(0.0))
            }
        }
    }

    /// Scalar value when the law is `output = value·x_incremental`.
    pub fn linear_value(&self) -> Option<f64> {
        let Form::Affine { offset, coeffs } = &self.form else {
            return None;
        };
        let slot = self.class.incremental_var()?.slot()?;
        let only_incremental = coeffs
            .iter()
            .enumerate()
            .all(|(k, c)| k == slot || *c == 0.0);
        (*offset == 0.0 && only_incremental).then_some(coeffs[slot])
    }
}

/// Time-dependent excitation of an independent source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceWaveform {
    Dc(f64),
    /// `offset + amplitude·sin(2π·frequency·t + phase)`, phase in radians.
    Sine {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
    },
}

impl SourceWaveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            SourceWaveform::Dc(v) => v,
            SourceWaveform::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (2.0 * PI * frequency * t + phase).sin(),
        }
    }
}

impl fmt::Display for SourceWaveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SourceWaveform::Dc(v) => write!(f, "dc {}", format_number(v)),
            SourceWaveform::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => write!(
                f,
                "sine {} {} {} {}",
                format_number(amplitude),
                format_number(frequency),
                format_number(phase),
                format_number(offset)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Characteristic(Characteristic),
    Source(SourceWaveform),
}

/// One device: class, name and constitutive law. Terminals live on the
/// circuit branch that owns the device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    pub class: DeviceClass,
    pub law: Law,
}

impl DeviceSpec {
    pub fn with_characteristic(name: impl Into<String>, ch: Characteristic) -> Self {
        DeviceSpec {
            name: name.into(),
            class: ch.class(),
            law: Law::Characteristic(ch),
        }
    }

    pub fn source(name: impl Into<String>, class: DeviceClass, wave: SourceWaveform) -> Self {
        assert!(class.is_source(), "{class} is not a source");
        DeviceSpec {
            name: name.into(),
            class,
            law: Law::Source(wave),
        }
    }

    pub fn characteristic(&self) -> Option<&Characteristic> {
        match &self.law {
            Law::Characteristic(c) => Some(c),
            Law::Source(_) => None,
        }
    }

    pub fn waveform(&self) -> Option<&SourceWaveform> {
        match &self.law {
            Law::Source(w) => Some(w),
            Law::Characteristic(_) => None,
        }
    }

    pub fn classification(&self) -> Classification {
        classify(self.class)
    }

    pub fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

pub fn eval_characteristic(ch: &Characteristic, point: &Point) -> Result<f64, ExprError> {
    ch.eval(point)
}

pub fn incremental_matrix(ch: &Characteristic, point: &Point) -> Result<f64, ExprError> {
    ch.incremental(point)
}

// ---------------------------------------------------------------------------
// Built-in constructors

fn q() -> Expr {
    Expr::Var(Var::Q)
}

fn phi() -> Expr {
    Expr::Var(Var::Phi)
}

fn c(x: f64) -> Expr {
    Expr::Const(x)
}

/// Default Chua flux map φ(q) = q + q³/3, so M(q) = 1 + q².
pub fn default_flux_map() -> Expr {
    q() + q().powf(c(3.0)) / c(3.0)
}

/// Default Chua charge map γ(φ) = φ + φ³/3, so W(φ) = 1 + φ².
pub fn default_charge_map() -> Expr {
    phi() + phi().powf(c(3.0)) / c(3.0)
}

/// Chua charge-controlled memristor `v = φ'(q)·i` for a flux map over `q`.
pub fn chua_q_memristor(name: &str, flux_map: &Expr) -> Result<DeviceSpec, DeviceError> {
    only_reads(flux_map, Var::Q, "flux map")?;
    let m = flux_map.derivative(Var::Q);
    let ch = Characteristic::expression(DeviceClass::QMemristor, m * Expr::Var(Var::I))?;
    Ok(DeviceSpec::with_characteristic(name, ch))
}

/// Chua flux-controlled memristor `i = γ'(φ)·v` for a charge map over `φ`.
pub fn chua_phi_memristor(name: &str, charge_map: &Expr) -> Result<DeviceSpec, DeviceError> {
    only_reads(charge_map, Var::Phi, "charge map")?;
    let w = charge_map.derivative(Var::Phi);
    let ch = Characteristic::expression(DeviceClass::PhiMemristor, w * Expr::Var(Var::V))?;
    Ok(DeviceSpec::with_characteristic(name, ch))
}

/// `chua_m`: q-memristor with M(q) = 1 + q².
pub fn chua_m(name: &str) -> DeviceSpec {
    chua_q_memristor(name, &default_flux_map()).expect("builtin flux map reads only q")
}

/// `chua_w`: φ-memristor with W(φ) = 1 + φ².
pub fn chua_w(name: &str) -> DeviceSpec {
    chua_phi_memristor(name, &default_charge_map()).expect("builtin charge map reads only phi")
}

fn only_reads(e: &Expr, var: Var, what: &str) -> Result<(), DeviceError> {
    for v in e.variables() {
        if v != var {
            return Err(DeviceError::Parameter(format!(
                "{what} must depend on {var} only, found {v}"
            )));
        }
    }
    Ok(())
}

/// Reject `map` if it vanishes (or changes sign) on a uniform sampling of `range`.
fn check_nonvanishing(
    map: &Expr,
    var: Var,
    range: (f64, f64),
    what: &str,
) -> Result<(), DeviceError> {
    const SAMPLES: usize = 1000;
    let (lo, hi) = range;
    let mut prev: Option<f64> = None;
    for k in 0..=SAMPLES {
        let x = lo + (hi - lo) * k as f64 / SAMPLES as f64;
        let mut p = Point::default();
        p.set(var, x);
        let y = map.eval(&p)?;
        if y == 0.0 || prev.is_some_and(|py| py.signum() != y.signum()) {
            return Err(DeviceError::Parameter(format!(
                "{what} vanishes in [{lo}, {hi}] near {var} = {x}"
            )));
        }
        prev = Some(y);
    }
    Ok(())
}

/// Series connection of a Chua q-memristor (flux map φ(q)) and a Chua
/// φ-memristor (memductance W(φ)) as one current-controlled hybrid memristor:
/// `v = [φ'(q) + 1/W(φ − φ(q))]·i`.
pub fn chua_series_hybrid(
    name: &str,
    flux_map: &Expr,
    memductance_map: &Expr,
    range: Option<(f64, f64)>,
) -> Result<DeviceSpec, DeviceError> {
    only_reads(flux_map, Var::Q, "flux map")?;
    only_reads(memductance_map, Var::Phi, "memductance map")?;
    if let Some(r) = range {
        check_nonvanishing(memductance_map, Var::Phi, r, "memductance")?;
    }
    let m = flux_map.derivative(Var::Q);
    let shifted = memductance_map.substitute(Var::Phi, &(phi() - flux_map.clone()));
    let mh = m + c(1.0) / shifted;
    let ch = Characteristic::expression(DeviceClass::HybridM, mh * Expr::Var(Var::I))?;
    Ok(DeviceSpec::with_characteristic(name, ch))
}

/// Parallel connection of a Chua q-memristor (memristance M(q)) and a Chua
/// φ-memristor (charge map γ(φ)) as one voltage-controlled hybrid memristor:
/// `i = [1/M(q − γ(φ)) + γ'(φ)]·v`.
pub fn chua_parallel_hybrid(
    name: &str,
    charge_map: &Expr,
    memristance_map: &Expr,
    range: Option<(f64, f64)>,
) -> Result<DeviceSpec, DeviceError> {
    only_reads(charge_map, Var::Phi, "charge map")?;
    only_reads(memristance_map, Var::Q, "memristance map")?;
    if let Some(r) = range {
        check_nonvanishing(memristance_map, Var::Q, r, "memristance")?;
    }
    let w = charge_map.derivative(Var::Phi);
    let shifted = memristance_map.substitute(Var::Q, &(q() - charge_map.clone()));
    let wh = c(1.0) / shifted + w;
    let ch = Characteristic::expression(DeviceClass::HybridW, wh * Expr::Var(Var::V))?;
    Ok(DeviceSpec::with_characteristic(name, ch))
}

/// `hybrid_series` builtin: default flux map with W(φ) = 1 + φ².
pub fn hybrid_series(name: &str) -> DeviceSpec {
    let w = default_charge_map().derivative(Var::Phi);
    chua_series_hybrid(name, &default_flux_map(), &w, None).expect("builtin maps are well-formed")
}

/// `hybrid_parallel` builtin: default charge map with M(q) = 1 + q².
pub fn hybrid_parallel(name: &str) -> DeviceSpec {
    let m = default_flux_map().derivative(Var::Q);
    chua_parallel_hybrid(name, &default_charge_map(), &m, None)
        .expect("builtin maps are well-formed")
}

/// Josephson-junction memcapacitor `q = (I1/k1)·sin(k1·φ) + G·φ + C·v`.
pub fn josephson_memcapacitor(
    name: &str,
    i1: f64,
    k1: f64,
    g: f64,
    cap: f64,
) -> Result<DeviceSpec, DeviceError> {
    if k1 == 0.0 {
        return Err(DeviceError::Parameter(
            "josephson_mc requires k1 != 0".into(),
        ));
    }
    if ![i1, k1, g, cap].iter().all(|x| x.is_finite()) {
        return Err(DeviceError::Parameter(
            "josephson_mc parameters must be finite".into(),
        ));
    }
    let e = c(i1 / k1) * (c(k1) * phi()).sin() + c(g) * phi() + c(cap) * Expr::Var(Var::V);
    let ch = Characteristic::expression(DeviceClass::Memcapacitor, e)?;
    Ok(DeviceSpec::with_characteristic(name, ch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ch(d: &DeviceSpec) -> &Characteristic {
        d.characteristic().unwrap()
    }

    #[test]
    fn classification_table() {
        let expect = [
            (DeviceClass::Resistor, 0, 0),
            (DeviceClass::Conductor, 0, 0),
            (DeviceClass::VSource, 0, 0),
            (DeviceClass::ISource, 0, 0),
            (DeviceClass::Capacitor, 1, 1),
            (DeviceClass::Inductor, 1, 1),
            (DeviceClass::QMemristor, 1, 1),
            (DeviceClass::PhiMemristor, 1, 1),
            (DeviceClass::Memcapacitor, 1, 2),
            (DeviceClass::Meminductor, 1, 2),
            (DeviceClass::HybridM, 1, 2),
            (DeviceClass::HybridW, 1, 2),
        ];
        for (class, d, s) in expect {
            let c = classify(class);
            assert_eq!((c.differential_order, c.state_order), (d, s), "{class}");
        }
    }

    #[test]
    fn classification_consistent_with_characteristic_variables() {
        for class in DeviceClass::ALL {
            if class.is_source() {
                continue;
            }
            let mut involved: Vec<Var> = class.inputs().to_vec();
            involved.push(class.output());
            let memory = involved.iter().any(|v| matches!(v, Var::Q | Var::Phi));
            let order = classify(class).differential_order;
            assert_eq!(memory, order == 1, "{class}");
            if order == 0 {
                assert_eq!(classify(class).state_order, 0);
            }
        }
    }

    #[test]
    fn chua_memristor_value_and_memristance() {
        let m = chua_m("M1");
        let p = Point::new(1.0, 0.0, 2.0, 0.0);
        assert_eq!(ch(&m).eval(&p).unwrap(), 4.0);
        let p1 = Point::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(ch(&m).incremental(&p1).unwrap(), 2.0);
    }

    #[test]
    fn chua_w_memductance() {
        let w = chua_w("W1");
        let p = Point::new(0.0, 2.0, 0.0, 1.5);
        assert_eq!(ch(&w).eval(&p).unwrap(), 5.0 * 1.5);
        assert_eq!(ch(&w).incremental(&p).unwrap(), 5.0);
    }

    #[test]
    fn josephson_values() {
        let d = josephson_memcapacitor("J", 1.0, 1.0, 0.0, 0.0).unwrap();
        let p = Point::new(0.0, PI / 2.0, 0.0, 0.0);
        assert!((ch(&d).eval(&p).unwrap() - 1.0).abs() < 1e-15);

        let d = josephson_memcapacitor("J", 1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(ch(&d).eval(&Point::new(0.0, 0.0, 0.0, 2.0)).unwrap(), 2.0);
        assert_eq!(ch(&d).eval(&Point::default()).unwrap(), 0.0);

        let d = josephson_memcapacitor("J", 0.7, 2.0, 0.1, 3.0).unwrap();
        for &(f, v) in &[(0.0, 0.0), (1.3, -2.0), (-4.0, 0.5)] {
            assert_eq!(
                ch(&d).incremental(&Point::new(0.0, f, 0.0, v)).unwrap(),
                3.0
            );
        }
        assert!(matches!(
            josephson_memcapacitor("J", 1.0, 0.0, 0.0, 1.0),
            Err(DeviceError::Parameter(_))
        ));
    }

    #[test]
    fn josephson_periodicity() {
        let (i1, k1, g) = (0.8, 1.7, 0.3);
        let d = josephson_memcapacitor("J", i1, k1, g, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let f: f64 = rng.gen_range(-5.0..5.0);
            let v: f64 = rng.gen_range(-5.0..5.0);
            let a = ch(&d)
                .eval(&Point::new(0.0, f + 2.0 * PI / k1, 0.0, v))
                .unwrap();
            let b = ch(&d).eval(&Point::new(0.0, f, 0.0, v)).unwrap();
            assert!((a - b - 2.0 * PI * g / k1).abs() <= 1e-12);
        }
    }

    #[test]
    fn series_hybrid_values() {
        let d = hybrid_series("H");
        assert_eq!(
            ch(&d).incremental(&Point::new(0.0, 0.0, 0.0, 0.0)).unwrap(),
            2.0
        );

        let two = Expr::Const(2.0);
        let d = chua_series_hybrid("H", &default_flux_map(), &two, None).unwrap();
        assert_eq!(ch(&d).incremental(&Point::default()).unwrap(), 1.5);

        let d = chua_series_hybrid("H", &q(), &Expr::Const(1.0), None).unwrap();
        for &(qq, ff) in &[(0.0, 0.0), (3.0, -1.0), (-2.5, 7.0)] {
            assert_eq!(
                ch(&d).incremental(&Point::new(qq, ff, 1.0, 0.0)).unwrap(),
                2.0
            );
        }
    }

    #[test]
    fn series_hybrid_constant_w_reduces_to_m_plus_inverse() {
        let d = chua_series_hybrid("H", &default_flux_map(), &Expr::Const(4.0), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let qq: f64 = rng.gen_range(-3.0..3.0);
            let ff: f64 = rng.gen_range(-3.0..3.0);
            let mh = ch(&d).incremental(&Point::new(qq, ff, 0.0, 0.0)).unwrap();
            assert!((mh - (1.0 + qq * qq + 0.25)).abs() < 1e-14);
        }
    }

    #[test]
    fn parallel_hybrid_values() {
        let d = chua_parallel_hybrid("H", &phi(), &Expr::Const(2.0), None).unwrap();
        for &(qq, ff) in &[(0.0, 0.0), (1.0, 2.0)] {
            assert_eq!(
                ch(&d).incremental(&Point::new(qq, ff, 0.0, 1.0)).unwrap(),
                1.5
            );
        }
        let d = chua_parallel_hybrid("H", &default_charge_map(), &Expr::Const(1.0), None).unwrap();
        assert_eq!(ch(&d).incremental(&Point::default()).unwrap(), 2.0);
    }

    #[test]
    fn nonvanishing_range_check() {
        let w = phi() - Expr::Const(1.0);
        let err = chua_series_hybrid("H", &default_flux_map(), &w, Some((-2.0, 2.0)));
        assert!(matches!(err, Err(DeviceError::Parameter(_))));
        let ok = chua_series_hybrid("H", &default_flux_map(), &w, Some((2.0, 3.0)));
        assert!(ok.is_ok());
    }

    #[test]
    fn arity_is_enforced() {
        let e = crate::expr::parse_expr("phi*i").unwrap();
        assert!(matches!(
            Characteristic::expression(DeviceClass::QMemristor, e),
            Err(DeviceError::Arity { .. })
        ));
        let e = crate::expr::parse_expr("t*i").unwrap();
        assert!(matches!(
            Characteristic::expression(DeviceClass::QMemristor, e),
            Err(DeviceError::TimeVarying)
        ));
    }

    #[test]
    fn linear_characteristic_at_origin_is_zero() {
        for class in DeviceClass::ALL.into_iter().filter(|c| !c.is_source()) {
            let ch = Characteristic::linear(class, 3.5).unwrap();
            assert_eq!(ch.eval(&Point::default()).unwrap(), 0.0);
            assert_eq!(ch.linear_value(), Some(3.5));
        }
    }

    #[test]
    fn passivity_warning_only_for_nonpositive() {
        let r = Characteristic::linear(DeviceClass::Resistor, 2.0).unwrap();
        assert!(r.passivity_warning(&Point::default()).is_none());
        let r = Characteristic::linear(DeviceClass::Resistor, -2.0).unwrap();
        assert!(r.passivity_warning(&Point::default()).is_some());
    }

    fn all_devices() -> Vec<DeviceSpec> {
        let e = |class, s: &str| {
            DeviceSpec::with_characteristic(
                "X",
                Characteristic::expression(class, crate::expr::parse_expr(s).unwrap()).unwrap(),
            )
        };
        vec![
            chua_m("M"),
            chua_w("W"),
            josephson_memcapacitor("J", 0.4, 1.3, 0.5, 1.2).unwrap(),
            hybrid_series("HS"),
            hybrid_parallel("HP"),
            e(DeviceClass::Meminductor, "(1 + q^2)*i + 0.1*i^3"),
            e(DeviceClass::Resistor, "i + i^3"),
            e(DeviceClass::Conductor, "2*v + sin(v)"),
            e(DeviceClass::Capacitor, "v + exp(-v^2)"),
            e(DeviceClass::Inductor, "i + i^3/3"),
        ]
    }

    #[test]
    fn incremental_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in all_devices() {
            let ch = ch(&d);
            let var = d.class.incremental_var().unwrap();
            for _ in 0..100 {
                let p = Point::new(
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                );
                let h = 1e-6;
                let (mut hi, mut lo) = (p, p);
                hi.set(var, p.get(var) + h);
                lo.set(var, p.get(var) - h);
                let fd = (ch.eval(&hi).unwrap() - ch.eval(&lo).unwrap()) / (2.0 * h);
                let ad = ch.incremental(&p).unwrap();
                let rel = (fd - ad).abs() / ad.abs().max(1e-12);
                assert!(rel <= 1e-6, "{}: ad={ad} fd={fd}", d.name);
            }
        }
    }
}
