//! Consistent initialization and fixed-step backward Euler for the nodal model.

use std::io::{self, Write};

use thiserror::Error;

use crate::linalg::{Matrix, Vector, DEFAULT_RANK_TOL};
use crate::nodal::{NodalError, SemiExplicitDAE};
use crate::topology::{degeneracy_report, TopologyError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Step size in seconds.
    pub h: f64,
    /// Bound on `‖residual‖∞` accepted by Newton.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub rank_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            h: 1e-3,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::Config(what.to_string()));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("step size must be positive");
        }
        if self.newton_tol.is_nan() || self.newton_tol <= 0.0 {
            return bad("Newton tolerance must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("Newton needs at least one iteration");
        }
        if self.rank_tol.is_nan() || self.rank_tol <= 0.0 {
            return bad("rank tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("Newton did not converge in {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("refusing index-two circuit ({witness}): the algebraic Jacobian F22 is singular")]
    IndexTwo { witness: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Nodal(#[from] NodalError),
    #[error("at t = {t}: {source}")]
    Step { t: f64, source: Box<SimError> },
}

/// Full-step Newton driven by a closure returning residual and Jacobian together.
pub fn newton<F>(mut eval: F, guess: Vector, config: &SolverConfig) -> Result<Vector, SimError>
where
    F: FnMut(&Vector) -> Result<(Vector, Matrix), SimError>,
{
    let mut z = guess;
    for iteration in 0..=config.newton_max_iter {
        let (r, j) = eval(&z)?;
        let norm = r.amax();
        if !norm.is_finite() {
            return Err(SimError::NoConvergence {
                iterations: iteration,
                residual: norm,
            });
        }
        if norm <= config.newton_tol {
            return Ok(z);
        }
        if iteration == config.newton_max_iter {
            return Err(SimError::NoConvergence {
                iterations: iteration,
                residual: norm,
            });
        }
        let lu = j.lu();
        let u = lu.u();
        let pivots = u.diagonal().map(f64::abs);
        let (lo, hi) = (pivots.min(), pivots.max());
        if hi == 0.0 || lo <= config.rank_tol * hi {
            return Err(SimError::SingularJacobian { iteration });
        }
        let dz = lu
            .solve(&r)
            .ok_or(SimError::SingularJacobian { iteration })?;
        z -= dz;
    }
    unreachable!("loop returns on its last iteration")
}

/// Newton with separate residual and Jacobian callbacks.
pub fn newton_solve<R, J>(
    mut residual: R,
    mut jacobian: J,
    guess: Vector,
    config: &SolverConfig,
) -> Result<Vector, SimError>
where
    R: FnMut(&Vector) -> Result<Vector, SimError>,
    J: FnMut(&Vector) -> Result<Matrix, SimError>,
{
    newton(|z| Ok((residual(z)?, jacobian(z)?)), guess, config)
}

/// Completes the dynamic values `x0` with algebraic values solving `g(x0, y, t0) = 0`.
pub fn consistent_init(
    dae: &SemiExplicitDAE,
    x0: &Vector,
    t0: f64,
    config: &SolverConfig,
) -> Result<Vector, SimError> {
    config.validate()?;
    let report = degeneracy_report(dae.circuit())?;
    if !report.nondegenerate {
        return Err(SimError::IndexTwo {
            witness: report.summary(),
        });
    }
    let r = dae.dynamic_len();
    assert_eq!(x0.len(), r, "initial state has the wrong length");
    let m = dae.dim() - r;
    let stack = |y: &Vector| {
        let mut z = Vector::zeros(r + m);
        z.rows_mut(0, r).copy_from(x0);
        z.rows_mut(r, m).copy_from(y);
        z
    };
    let y = newton(
        |y| {
            let (res, jac) = dae.residual_and_jacobian(&stack(y), t0)?;
            Ok((res.rows(r, m).into_owned(), jac.f22()))
        },
        Vector::zeros(m),
        config,
    )?;
    Ok(stack(&y))
}

/// One backward Euler step: `x₊ = x + h f(z₊, t + h)`, `0 = g(z₊, t + h)`.
pub fn step_backward_euler(
    dae: &SemiExplicitDAE,
    z: &Vector,
    t: f64,
    h: f64,
    config: &SolverConfig,
) -> Result<Vector, SimError> {
    let r = dae.dynamic_len();
    let n = dae.dim();
    let t1 = t + h;
    newton(
        |w| {
            let (mut res, jac) = dae.residual_and_jacobian(w, t1)?;
            let mut j = jac.f;
            for k in 0..r {
                res[k] = w[k] - z[k] - h * res[k];
                for c in 0..n {
                    j[(k, c)] *= -h;
                }
                j[(k, k)] += 1.0;
            }
            Ok((res, j))
        },
        z.clone(),
        config,
    )
}

/// Time series of every model variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.states.iter().map(|z| z[k]).collect())
    }

    pub fn last(&self) -> Option<(f64, &Vector)> {
        Some((*self.times.last()?, self.states.last()?))
    }

    /// CSV with a `t,<labels>` header and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for l in &self.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for (t, z) in self.times.iter().zip(&self.states) {
            write!(w, "{t:.16e}")?;
            for x in z.iter() {
                write!(w, ",{:.16e}", x + 0.0)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ASCII output")
    }
}

/// Uniform-step integration from the consistent completion of `x0`, handing
/// every accepted `(t, z)` (the initial point included) to `observe`. The last
/// step is shortened if `t_stop − t0` is not a multiple of `h`.
pub fn simulate_observed<O>(
    dae: &SemiExplicitDAE,
    x0: &Vector,
    t0: f64,
    t_stop: f64,
    config: &SolverConfig,
    mut observe: O,
) -> Result<(), SimError>
where
    O: FnMut(f64, &Vector),
{
    config.validate()?;
    if t_stop.is_nan() || t_stop < t0 {
        return Err(SimError::Config("stop time precedes start time".into()));
    }
    let mut z = consistent_init(dae, x0, t0, config).map_err(|e| SimError::Step {
        t: t0,
        source: Box::new(e),
    })?;
    observe(t0, &z);
    let ratio = (t_stop - t0) / config.h;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.ceil()
    } as usize;
    let mut t = t0;
    for k in 1..=steps {
        let t_next = if k == steps {
            t_stop
        } else {
            t0 + k as f64 * config.h
        };
        z = step_backward_euler(dae, &z, t, t_next - t, config).map_err(|e| SimError::Step {
            t: t_next,
            source: Box::new(e),
        })?;
        t = t_next;
        observe(t, &z);
    }
    Ok(())
}

/// [`simulate_observed`] collecting the full trace.
pub fn simulate(
    dae: &SemiExplicitDAE,
    x0: &Vector,
    t0: f64,
    t_stop: f64,
    config: &SolverConfig,
) -> Result<Trace, SimError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    simulate_observed(dae, x0, t0, t_stop, config, |t, z| {
        times.push(t);
        states.push(z.clone());
    })?;
    Ok(Trace {
        labels: dae.layout().labels.clone(),
        times,
        states,
    })
}
