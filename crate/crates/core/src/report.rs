//! Human-readable and `key=value` renderings of analysis results.

use std::fmt::Write as _;

use crate::expr::format_number;
use crate::index::{IndexReport, SchurKind, TractabilityIndex};
use crate::netlist::Circuit;
use crate::topology::{DegeneracyReport, Witness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Human,
    Machine,
}

fn sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6e}")
    } else {
        "inf".to_string()
    }
}

fn witness_list(w: &Option<Witness>) -> String {
    w.as_ref().map(|w| w.names.join(",")).unwrap_or_default()
}

pub fn classification(circuit: &Circuit, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Human => {
            let rows: Vec<[String; 5]> = circuit
                .branches()
                .iter()
                .map(|b| {
                    let c = b.device.classification();
                    [
                        b.device.name.clone(),
                        b.device.class.to_string(),
                        c.differential_order.to_string(),
                        c.state_order.to_string(),
                        c.controlling.to_string(),
                    ]
                })
                .collect();
            let header = [
                "device",
                "class",
                "differential order",
                "state order",
                "controlling",
            ]
            .map(String::from);
            let mut widths = header.clone().map(|h| h.len());
            for r in &rows {
                for (w, cell) in widths.iter_mut().zip(r) {
                    *w = (*w).max(cell.len());
                }
            }
            for r in std::iter::once(&header).chain(&rows) {
                let line: Vec<String> = r
                    .iter()
                    .zip(widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect();
                let _ = writeln!(out, "{}", line.join("  ").trim_end());
            }
        }
        Format::Machine => {
            for b in circuit.branches() {
                let c = b.device.classification();
                let n = &b.device.name;
                let _ = writeln!(out, "device.{n}.class={}", b.device.class.keyword());
                let _ = writeln!(
                    out,
                    "device.{n}.differential_order={}",
                    c.differential_order
                );
                let _ = writeln!(out, "device.{n}.state_order={}", c.state_order);
                let _ = writeln!(out, "device.{n}.controlling={}", c.controlling);
            }
        }
    }
    out
}

pub fn degeneracy(report: &DegeneracyReport, format: Format) -> String {
    match format {
        Format::Human => {
            let mut out = String::from("well-posed: yes\n");
            let _ = writeln!(out, "VCM-loop: {}", report.vcm_loop.as_ref().map_or("none".into(), |w| w.to_string()));
            let _ = writeln!(out, "ILM-cutset: {}", report.ilm_cutset.as_ref().map_or("none".into(), |w| w.to_string()));
            let _ = writeln!(out, "{}", report.summary());
            out
        }
        Format::Machine => format!(
            "topology.well_posed=true\ntopology.vcm_loop={}\ntopology.ilm_cutset={}\ntopology.nondegenerate={}\n",
            witness_list(&report.vcm_loop),
            witness_list(&report.ilm_cutset),
            report.nondegenerate
        ),
    }
}

/// One-line verdict, e.g. `degenerate: VCM-loop {V1, C1}; tractability index 2`.
pub fn index_summary(report: &IndexReport) -> String {
    let index = match report.tractability_index() {
        TractabilityIndex::Unresolved => "tractability index unresolved (E2 singular)".to_string(),
        k => format!("tractability index {k}"),
    };
    format!("{}; {index}", report.degeneracy.summary())
}

pub fn index(report: &IndexReport, format: Format) -> String {
    let chain = &report.chain;
    let oracle = report.oracle_index.as_ref().map(|r| match r {
        Ok(k) => k.to_string(),
        Err(e) => format!("error: {e}"),
    });
    let mut out = String::new();
    match format {
        Format::Human => {
            let _ = writeln!(out, "topology: {}", report.degeneracy.summary());
            let _ = writeln!(out, "evaluation point ({}):", report.point_source);
            for (l, x) in report.labels.iter().zip(report.point.iter()) {
                let _ = writeln!(out, "  {l} = {}", format_number(*x + 0.0));
            }
            let _ = writeln!(
                out,
                "index-one test: F22 {} (condition {})",
                if report.index_one {
                    "nonsingular"
                } else {
                    "singular"
                },
                sci(report.f22_condition)
            );
            let _ = write!(out, "chain: E1 condition {}", sci(chain.e1_condition));
            if let Some(c) = chain.e2_condition {
                let _ = write!(out, ", E2 condition {}", sci(c));
            }
            let _ = writeln!(out);
            let _ = writeln!(out, "projector residual: {}", sci(chain.residuals.max()));
            let _ = writeln!(out, "oblique-projector verdict: {}", report.oblique_index);
            match &report.schur {
                Ok(s) => {
                    let which = match s.kind {
                        SchurKind::IndexOne => "index-one",
                        SchurKind::IndexTwo => "index-two",
                    };
                    let _ = writeln!(
                        out,
                        "Schur-reduced matrix ({which}): {} (condition {})",
                        if s.nonsingular {
                            "nonsingular"
                        } else {
                            "singular"
                        },
                        sci(s.condition)
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "Schur-reduced matrix: not computed ({e})");
                }
            }
            let _ = writeln!(
                out,
                "structural projector gap: {}",
                sci(report.structural_projector_gap)
            );
            if let Some(o) = &oracle {
                let _ = writeln!(out, "Kronecker oracle: {o}");
            }
            for w in &report.hypothesis_warnings {
                let _ = writeln!(out, "warning: {w}");
            }
            let _ = writeln!(out, "{}", index_summary(report));
        }
        Format::Machine => {
            out.push_str(&degeneracy(&report.degeneracy, Format::Machine));
            let _ = writeln!(out, "index.point_source={}", report.point_source);
            for (l, x) in report.labels.iter().zip(report.point.iter()) {
                let _ = writeln!(out, "index.point.{l}={}", format_number(*x + 0.0));
            }
            let _ = writeln!(out, "index.rank_tol={}", format_number(report.rank_tol));
            let _ = writeln!(out, "index.index_one={}", report.index_one);
            let _ = writeln!(out, "index.f22_condition={}", sci(report.f22_condition));
            let _ = writeln!(out, "index.e1_condition={}", sci(chain.e1_condition));
            let _ = writeln!(
                out,
                "index.e2_condition={}",
                chain.e2_condition.map(sci).unwrap_or_default()
            );
            let _ = writeln!(
                out,
                "index.projector_residual={}",
                sci(chain.residuals.max())
            );
            let _ = writeln!(out, "index.tractability={}", report.tractability_index());
            let _ = writeln!(out, "index.oblique_tractability={}", report.oblique_index);
            match &report.schur {
                Ok(s) => {
                    let kind = if s.kind == SchurKind::IndexOne {
                        "index1"
                    } else {
                        "index2"
                    };
                    let _ = writeln!(out, "index.schur.kind={kind}");
                    let _ = writeln!(out, "index.schur.nonsingular={}", s.nonsingular);
                    let _ = writeln!(out, "index.schur.condition={}", sci(s.condition));
                }
                Err(e) => {
                    let _ = writeln!(out, "index.schur.error={e}");
                }
            }
            let _ = writeln!(
                out,
                "index.structural_projector_gap={}",
                sci(report.structural_projector_gap)
            );
            if let Some(o) = oracle {
                let _ = writeln!(out, "index.oracle={o}");
            }
            for (k, w) in report.hypothesis_warnings.iter().enumerate() {
                let _ = writeln!(out, "warning.{k}={w}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{analyze, AnalysisOptions};
    use crate::netlist::parse_netlist;
    use crate::nodal::assemble;
    use crate::topology::degeneracy_report;

    #[test]
    fn vc_loop_summary() {
        let c = parse_netlist("V1 1 0 dc 1\nC1 1 0 1").unwrap();
        let report = analyze(&assemble(&c), None, &AnalysisOptions::default()).unwrap();
        assert_eq!(
            index_summary(&report),
            "degenerate: VCM-loop {V1, C1}; tractability index 2"
        );
        let machine = index(&report, Format::Machine);
        assert!(machine.contains("index.tractability=2\n"));
        assert!(machine.contains("topology.vcm_loop=V1,C1\n"));
    }

    #[test]
    fn classification_table() {
        let c = parse_netlist("R1 1 0 1\nMC1 1 0 josephson_mc(1, 1, 0, 1)").unwrap();
        let human = classification(&c, Format::Human);
        assert!(human.lines().nth(2).unwrap().starts_with("MC1"));
        let machine = classification(&c, Format::Machine);
        assert!(machine.contains("device.MC1.state_order=2"));
        assert!(machine.contains("device.R1.differential_order=0"));
    }

    #[test]
    fn topology_rendering() {
        let c = parse_netlist("R1 1 0 1\nL1 1 m 1\nI1 m 0 dc 1").unwrap();
        let text = degeneracy(&degeneracy_report(&c).unwrap(), Format::Human);
        assert!(text.contains("ILM-cutset: {L1, I1}"));
    }
}
