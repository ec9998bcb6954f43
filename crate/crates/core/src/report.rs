//! CSV emission and condition reports.
//!
//! Floats are written with 17 significant digits in scientific notation,
//! rows end in `\n`, and every table has a header row.

use std::fmt::Write as _;

use crate::equilibrium::SteadyState;
use crate::network::ReactionNetwork;
use crate::phs::{self, NormCondition, Theorem1Report, Theorem2Report};
use crate::sim::{record_columns, record_values, EnsembleStats, EventKind, Trajectory};
use crate::thermo::ThermoState;
use crate::transform::{self, Availability, Setpoint};

pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn event_label(net: &ReactionNetwork, kind: &EventKind) -> String {
    match kind {
        EventKind::FloorHit { species } => format!("floor:N_{}", net.species[*species].name),
        EventKind::Saturated => "saturated".into(),
        EventKind::Halved { depth } => format!("halved:{depth}"),
    }
}

/// Distinct labels in order of first occurrence, with repeat counts.
pub fn events_cell(net: &ReactionNetwork, events: &[EventKind]) -> String {
    let mut seen: Vec<(String, usize)> = Vec::new();
    for e in events {
        let label = event_label(net, e);
        match seen.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => seen.push((label, 1)),
        }
    }
    seen.iter()
        .map(|(l, c)| if *c == 1 { l.clone() } else { format!("{l}x{c}") })
        .collect::<Vec<_>>()
        .join(";")
}

pub fn trajectory_csv(net: &ReactionNetwork, traj: &Trajectory) -> String {
    let mut out = String::from("t,");
    out.push_str(&record_columns(net).join(","));
    out.push_str(",events\n");
    for r in &traj.records {
        out.push_str(&fmt_f(r.t));
        for v in record_values(r) {
            out.push(',');
            out.push_str(&fmt_f(v));
        }
        out.push(',');
        out.push_str(&events_cell(net, &r.events));
        out.push('\n');
    }
    out
}

pub fn summary_csv(stats: &EnsembleStats) -> String {
    let mut out = String::from("t");
    for c in &stats.columns {
        let _ = write!(out, ",mean_{c},std_{c}");
    }
    out.push('\n');
    for (i, t) in stats.times.iter().enumerate() {
        out.push_str(&fmt_f(*t));
        for s in &stats.series {
            let _ = write!(out, ",{},{}", fmt_f(s.mean[i]), fmt_f(s.std[i]));
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "stabilization_probability,{}",
        fmt_f(stats.stabilization_probability)
    );
    out
}

pub fn equilibria_csv(net: &ReactionNetwork, states: &[SteadyState]) -> String {
    let mut out = String::from("T");
    for s in &net.species {
        let _ = write!(out, ",N_{}", s.name);
    }
    out.push_str(",U,Qdot_required,classification,max_re_lambda,residual\n");
    for ss in states {
        out.push_str(&fmt_f(ss.t));
        for n in ss.n.iter() {
            let _ = write!(out, ",{}", fmt_f(*n));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            fmt_f(ss.u),
            fmt_f(ss.qdot_required),
            ss.classification,
            fmt_f(ss.max_real_eigenvalue()),
            fmt_f(ss.residual)
        );
    }
    out
}

/// Passivity conditions evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub norm: NormCondition,
    pub theorem1: Theorem1Report,
    pub theorem2: Theorem2Report,
    pub equivalence_residual: f64,
}

impl CheckReport {
    pub fn evaluate(net: &ReactionNetwork, sp: &Setpoint, state: &ThermoState) -> Self {
        Self {
            norm: phs::check_norm_condition(net, state),
            theorem1: phs::check_theorem1(net, state, &Availability::new(sp.clone())),
            theorem2: phs::check_theorem2(net, state, sp),
            equivalence_residual: transform::equivalence_residual(net, sp, state),
        }
    }

    pub fn all_hold(&self) -> bool {
        self.norm.holds && self.theorem1.holds() && self.theorem2.holds
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(
            "norm_holds,norm_lhs,norm_rhs,delta_frobenius,\
             theorem1_trace_holds,theorem1_trace_lhs,theorem1_trace_rhs,\
             theorem1_delta_holds,theorem1_delta_min_eigenvalue,\
             theorem2_holds,theorem2_lhs,theorem2_rhs,equivalence_residual\n",
        );
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.norm.holds,
            fmt_f(self.norm.lhs),
            fmt_f(self.norm.rhs),
            fmt_f(self.norm.delta_frobenius),
            self.theorem1.cond_trace,
            fmt_f(self.theorem1.trace_lhs),
            fmt_f(self.theorem1.trace_rhs),
            self.theorem1.cond_delta,
            fmt_f(self.theorem1.delta_min_eigenvalue),
            self.theorem2.holds,
            fmt_f(self.theorem2.lhs),
            fmt_f(self.theorem2.rhs),
            fmt_f(self.equivalence_residual),
        );
        out
    }

    pub fn human(&self) -> String {
        let verdict = |b: bool| if b { "holds" } else { "FAILS" };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "norm condition      {}  ({:.6e} <= {:.6e})",
            verdict(self.norm.holds),
            self.norm.lhs,
            self.norm.rhs
        );
        let _ = writeln!(
            out,
            "trace condition     {}  ({:.6e} <= {:.6e})",
            verdict(self.theorem1.cond_trace),
            self.theorem1.trace_lhs,
            self.theorem1.trace_rhs
        );
        let _ = writeln!(
            out,
            "feedthrough cond.   {}  (min eigenvalue {:.6e})",
            verdict(self.theorem1.cond_delta),
            self.theorem1.delta_min_eigenvalue
        );
        let _ = writeln!(
            out,
            "passivity cond.     {}  ({:.6e} <= {:.6e})",
            verdict(self.theorem2.holds),
            self.theorem2.lhs,
            self.theorem2.rhs
        );
        let _ = writeln!(out, "equivalence resid.  {:.6e}", self.equivalence_residual);
        out
    }
}
