//! All eight acceptance criteria at their pinned tolerances; one line per criterion.
//! Runs without the libtest harness so the summary is printed even when output is captured.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;
use ymflow_cli::verify::{run, Check, Suite};

const TITLES: [&str; 8] = [
    "Casimir scalar and centrality (su2)",
    "norm sandwich gr + tri vs alpha",
    "holonomy gauge covariance and Wilson invariance",
    "gauge-fixed consistency order",
    "heat equation moments and exponents",
    "renormalisation constants",
    "tree tables and symmetry factors",
    "counterterm identities",
];

fn summary(checks: &[&Check]) -> String {
    checks
        .iter()
        .map(|c| {
            let vals: Vec<String> = c.measured.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
            format!("{}{}[{}]", if c.passed { "" } else { "FAILED " }, c.name, vals.join(" "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture or a name filter are accepted and ignored.
    let mut by_criterion: BTreeMap<u8, Vec<Check>> = BTreeMap::new();
    let mut errors = Vec::new();
    for suite in Suite::ALL {
        let t = Instant::now();
        match run(suite) {
            Ok(r) => {
                eprintln!("suite {} finished in {:.1} s", r.suite, t.elapsed().as_secs_f64());
                for c in r.checks {
                    by_criterion.entry(c.criterion).or_default().push(c);
                }
            }
            Err(e) => errors.push(format!("suite {} errored: {e}", suite.name())),
        }
    }
    let mut failed = !errors.is_empty();
    for (i, title) in TITLES.iter().enumerate() {
        let id = i as u8 + 1;
        let checks: Vec<&Check> = by_criterion.get(&id).map(|v| v.iter().collect()).unwrap_or_default();
        let pass = !checks.is_empty() && checks.iter().all(|c| c.passed);
        failed |= !pass;
        println!(
            "criterion {id} {}: {title} :: {}",
            if pass { "PASS" } else { "FAIL" },
            summary(&checks)
        );
    }
    for e in &errors {
        println!("{e}");
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
