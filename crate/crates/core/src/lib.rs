//! Analysis and simulation of first-order nonlinear circuits with memristive
//! devices (memristors, memcapacitors, meminductors and hybrid memristors).
//!
//! The pipeline is: [`netlist::parse_netlist`] → [`topology::degeneracy_report`]
//! → [`nodal::assemble`] → [`index::analyze`] / [`sim::simulate`].

pub mod batch;
pub mod devices;
pub mod expr;
pub mod index;
pub mod linalg;
pub mod netlist;
pub mod nodal;
pub mod random;
pub mod report;
pub mod sim;
pub mod topology;

pub use devices::{
    classify, Characteristic, Classification, DeviceClass, DeviceSpec, SourceWaveform,
};
pub use expr::{parse_expr, Expr, Point, Var};
pub use index::{analyze, IndexReport, TractabilityIndex};
pub use netlist::{parse_netlist, Circuit, IncidenceMatrix};
pub use nodal::{assemble, SemiExplicitDAE};
pub use sim::{simulate, SolverConfig, Trace};
pub use topology::{degeneracy_report, DegeneracyReport};
