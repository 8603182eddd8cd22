//! Rendering of campaign reports and reproduction bundles.

use dhflow_core::{CampaignReport, Counterexample};
use serde_json::json;

use crate::format::network_to_json;
use crate::table::format_float;

/// Human-readable campaign summary, one line per failing case.
pub fn render_campaign_summary(report: &CampaignReport) -> String {
    let mut out = format!(
        "campaign seed={} cases={}: {}/{} passed, {} failed\n",
        report.seed,
        report.requested_cases,
        report.passes,
        report.requested_cases,
        report.failures
    );
    for record in report.records.iter().filter(|r| !r.pass) {
        out.push_str(&format!(
            "  FAIL case {} ({}, case_seed {}): margin {}\n",
            record.index,
            record.part.as_str(),
            record.case_seed,
            format_float(record.observed_margin)
        ));
    }
    out
}

/// Serializes a violating case with everything needed to replay it: the
/// network document, both operating points, and the observed flows.
pub fn counterexample_to_json(cx: &Counterexample) -> String {
    let openings = |s: &dhflow_core::ValveSettings| {
        s.iter()
            .map(|(id, u)| (id.to_string(), json!(u)))
            .collect::<serde_json::Map<_, _>>()
    };
    let flows = |sol: &dhflow_core::EquilibriumSolution| {
        sol.consumer_flows
            .iter()
            .map(|(id, q)| (id.to_string(), json!(q)))
            .collect::<serde_json::Map<_, _>>()
    };
    let network_doc: serde_json::Value =
        serde_json::from_str(&network_to_json(&cx.network, None, None))
            .expect("serialized network reparses");
    let bundle = json!({
        "case": {
            "index": cx.index,
            "case_seed": cx.case_seed,
            "part": cx.part.as_str(),
        },
        "network": network_doc,
        "base": {
            "pump_pressure": cx.base_pressure,
            "openings": openings(&cx.base_openings),
            "consumer_flows": flows(&cx.base_solution),
            "total_flow": cx.base_solution.total_consumer_flow(),
        },
        "raised": {
            "pump_pressure": cx.raised_pressure,
            "openings": openings(&cx.raised_openings),
            "consumer_flows": flows(&cx.raised_solution),
            "total_flow": cx.raised_solution.total_consumer_flow(),
        },
        "violation": {
            "observed_margin": cx.observed_margin,
            "violating_leaf": cx.violating_leaf.map(|l| l.to_string()),
        },
    });
    let mut text = serde_json::to_string_pretty(&bundle).expect("bundle serializes");
    text.push('\n');
    text
}
