//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use khk::systems::Model;
use khk::verify::{
    check_brackets, check_closed_forms_clebsch1, check_conservation, check_continuous_wronskian, check_exact_m3,
    check_functional_rank, check_hk_basis, check_hk_coefficients, check_identities_clebsch1, check_jacobian_identity,
    check_measure, check_planar_identity, check_planar_orbits, check_reversibility, check_step_residual,
    PropertyReport, RANK_EPS,
};
use khk::{build_system, SystemConfig, SystemDescriptor, SystemKind};

const SEED: u64 = 20240917;

fn system(kind: SystemKind) -> SystemDescriptor {
    build_system(&SystemConfig::default_for(kind)).expect("reference parameters are valid")
}

fn catalog() -> Vec<SystemDescriptor> {
    SystemKind::ALL.into_iter().map(system).collect()
}

fn rigid_bodies() -> Vec<SystemDescriptor> {
    catalog()
        .into_iter()
        .filter(|d| !matches!(d.model, Model::Planar(_)))
        .collect()
}

struct Outcome {
    reports: Vec<PropertyReport>,
    errors: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            reports: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn push(&mut self, label: &str, report: PropertyReport) {
        let report = PropertyReport {
            name: format!("{label} {}", report.name),
            ..report
        };
        self.reports.push(report);
    }

    fn push_result(&mut self, label: &str, report: khk::Result<PropertyReport>) {
        match report {
            Ok(r) => self.push(label, r),
            Err(e) => self.errors.push(format!("{label}: {e}")),
        }
    }

    fn passed(&self) -> bool {
        self.errors.is_empty() && self.reports.iter().all(|r| r.passed)
    }

    fn summary(&self) -> String {
        let failed: Vec<String> = self
            .reports
            .iter()
            .filter(|r| !r.passed)
            .map(|r| {
                format!(
                    "{} (violation {:.3e} > {:.1e}, skipped {}/{})",
                    r.name, r.max_violation, r.tolerance, r.skipped, r.trials
                )
            })
            .chain(self.errors.iter().cloned())
            .collect();
        let worst = self
            .reports
            .iter()
            .filter(|r| r.tolerance > 0.0)
            .map(|r| r.max_violation / r.tolerance)
            .fold(0.0, f64::max);
        if failed.is_empty() {
            format!("{} checks, worst violation/tolerance {worst:.2e}", self.reports.len())
        } else {
            format!(
                "{} of {} checks failed: {}",
                failed.len(),
                self.reports.len() + self.errors.len(),
                failed.join("; ")
            )
        }
    }
}

fn kahan_contract() -> Outcome {
    let mut out = Outcome::new();
    for d in catalog() {
        for eps in [0.01, 0.05, 0.2] {
            let label = format!("{} eps={eps}", d.kind);
            out.push(&label, check_step_residual(&d, 500, eps, SEED));
            out.push(&label, check_reversibility(&d, 500, eps, SEED));
        }
    }
    out
}

fn jacobian_identity() -> Outcome {
    let mut out = Outcome::new();
    for d in catalog() {
        out.push(d.kind.name(), check_jacobian_identity(&d, 500, 0.05, SEED));
    }
    out
}

fn conservation() -> Outcome {
    let mut out = Outcome::new();
    for d in catalog() {
        for name in d.conserved_names() {
            out.push(d.kind.name(), check_conservation(&d, name, 10, 1000, 0.05, SEED));
        }
        if matches!(d.model, Model::Kirchhoff(_) | Model::Lagrange(_)) {
            out.push(d.kind.name(), check_exact_m3(&d, 10, 1000, 0.05, SEED));
        }
    }
    out
}

fn invariant_measure() -> Outcome {
    let mut out = Outcome::new();
    for d in catalog() {
        for density in d.density_names() {
            out.push(d.kind.name(), check_measure(&d, density, 500, 0.05, SEED));
        }
    }
    out
}

fn first_clebsch_identities() -> Outcome {
    let mut out = Outcome::new();
    let d = system(SystemKind::FirstClebsch);
    let Model::FirstClebsch(fc) = d.model else {
        unreachable!()
    };
    out.push_result("first_clebsch", check_identities_clebsch1(fc.omega, 1000, 0.1, SEED));
    out.push_result("first_clebsch", check_closed_forms_clebsch1(fc.omega, 1000, 0.1, SEED));
    out
}

fn hk_bases() -> Outcome {
    let mut out = Outcome::new();
    let cases = [
        (SystemKind::FirstClebsch, 4),
        (SystemKind::SecondClebsch, 4),
        (SystemKind::GeneralClebsch, 4),
        (SystemKind::Kirchhoff, 3),
        (SystemKind::Lagrange, 3),
    ];
    for (kind, max_order) in cases {
        let d = system(kind);
        for ell in 1..=max_order {
            out.push_result(kind.name(), check_hk_basis(&d, ell, 100, 0.05, SEED));
        }
        for ell in [1, 2] {
            out.push_result(kind.name(), check_hk_coefficients(&d, ell, 100, 0.05, SEED));
        }
    }
    out
}

fn functional_independence() -> Outcome {
    let mut out = Outcome::new();
    let general = system(SystemKind::GeneralClebsch);
    for names in [
        ["I0", "J0", "J1", "J2"],
        ["I0", "J0", "J3", "J4"],
        ["J1", "J2", "J3", "J4"],
    ] {
        out.push(
            "general_clebsch",
            check_functional_rank(&general, &names, 4, 20, RANK_EPS, SEED),
        );
    }
    let kirchhoff = system(SystemKind::Kirchhoff);
    out.push(
        "kirchhoff",
        check_functional_rank(&kirchhoff, &["I0", "J0", "J1", "m3"], 4, 20, RANK_EPS, SEED),
    );
    out
}

fn continuous_flow() -> Outcome {
    let mut out = Outcome::new();
    for d in rigid_bodies() {
        out.push(d.kind.name(), check_continuous_wronskian(&d, 500, SEED));
        out.push(d.kind.name(), check_brackets(&d, 500, SEED));
    }
    out
}

fn planar_family() -> Outcome {
    let mut out = Outcome::new();
    out.push("planar_family", check_planar_orbits(50, 200, 0.05, SEED));
    let reference = system(SystemKind::PlanarFamily);
    out.push("planar_family", check_planar_identity(&reference, 50, 200, 0.05, SEED));
    out
}

fn run_cli(args: &[&str], out_dir: &std::path::Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_khk"))
        .args(args)
        .arg("--out")
        .arg(out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.code().is_some_and(|c| c <= 1) {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn determinism() -> Outcome {
    let mut out = Outcome::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for kind in ["general_clebsch", "lagrange"] {
        for dir in &dirs {
            for command in ["simulate", "verify"] {
                if let Err(e) = run_cli(&[command, "--system", kind, "--seed", "7"], dir.path()) {
                    out.errors.push(format!("{kind} {command}: {e}"));
                }
            }
        }
        for file in ["orbit.csv", "verify.json"] {
            let a = std::fs::read(dirs[0].path().join(file));
            let b = std::fs::read(dirs[1].path().join(file));
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    let identical = a == b && !a.is_empty();
                    out.reports.push(PropertyReport {
                        name: format!("{kind} {file} byte-identical"),
                        trials: 2,
                        skipped: 0,
                        max_violation: if identical { 0.0 } else { 1.0 },
                        tolerance: 0.0,
                        passed: identical,
                        worst_case_input: Vec::new(),
                        eps: 0.05,
                        seed: 7,
                    });
                }
                _ => out.errors.push(format!("{kind} {file}: missing output")),
            }
        }
    }
    out
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("Kahan map residual and reversibility", kahan_contract),
        ("Jacobian determinant identity", jacobian_identity),
        ("conservation of integrals", conservation),
        ("invariant measures", invariant_measure),
        ("first Clebsch identities and closed forms", first_clebsch_identities),
        ("Wronskian HK bases and coefficients", hk_bases),
        ("functional independence", functional_independence),
        ("continuous-flow relations", continuous_flow),
        ("planar family Fhat = F on orbits", planar_family),
        ("determinism of CLI artifacts", determinism),
    ];
    let mut failures = 0;
    for (k, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.passed() { "PASS" } else { "FAIL" };
        failures += usize::from(!outcome.passed());
        println!(
            "criterion {:>2} {verdict}: {title} [{:.1}s] {}",
            k + 1,
            start.elapsed().as_secs_f64(),
            outcome.summary()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
