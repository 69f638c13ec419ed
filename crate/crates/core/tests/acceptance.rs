//! End-to-end acceptance checks. Run with `cargo test --test acceptance`;
//! prints one line per criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use pilotwave::ensemble::{momentum_density, wigner};
use pilotwave::qstate::{density, GaussianPacket, PacketState};
use pilotwave::runner::{catalog_scenario, run_scenario, RunOptions, RunReport};
use pilotwave::{Axis, Grid, C64};

struct Outcome {
    passed: bool,
    detail: String,
}

fn run(name: &str, dir: &std::path::Path) -> RunReport {
    let s = catalog_scenario(name).expect("canned scenario").expect("parses");
    let opts = RunOptions {
        out: Some(dir.join(name)),
        quiet: true,
        ..Default::default()
    };
    run_scenario(&s, &opts).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// All the named assertions exist and passed.
fn asserted(r: &RunReport, names: &[&str]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for n in names {
        match r.assertion(n) {
            Some(a) => {
                passed &= a.passed;
                parts.push(format!("{} = {:.4e} ({} {:e})", a.name, a.value, a.relation, a.limit));
            }
            None => {
                passed = false;
                parts.push(format!("{n} missing"));
            }
        }
    }
    Outcome {
        passed,
        detail: parts.join(", "),
    }
}

fn born_fractions(dir: &std::path::Path) -> Outcome {
    let r = run("born-branches", dir);
    let mut o = asserted(&r, &["born-fraction-0-z", "born-fraction-1-z"]);
    let (f0, f1) = (r.result("fraction_0").unwrap(), r.result("fraction_1").unwrap());
    o.detail = format!("fractions ({f0:.4}, {f1:.4}); {}", o.detail);
    o
}

fn equivariance(dir: &std::path::Path) -> Outcome {
    let r = run("equivariance", dir);
    let s = catalog_scenario("equivariance").unwrap().unwrap();
    let mut o = asserted(&r, &["equivariance-tv"]);
    o.passed &= s.ensemble.n == 50_000 && s.dynamics.checkpoints == 5 && s.ensemble.cells == [32];
    o
}

fn nonequilibrium(dir: &std::path::Path) -> Outcome {
    asserted(&run("born-nonequilibrium", dir), &["branch-fraction", "born-violation-z"])
}

fn relaxation(dir: &std::path::Path) -> Outcome {
    let r = run("relax", dir);
    let mut o = asserted(&r, &["h-trend", "h-halved"]);
    let rows = std::fs::read_to_string(dir.join("relax").join("h_series.csv")).unwrap();
    let checkpoints = rows.lines().count() - 2;
    o.passed &= checkpoints == 10;
    o.detail = format!("{checkpoints} checkpoints; {}", o.detail);
    o
}

fn particle_at_rest(dir: &std::path::Path) -> Outcome {
    asserted(
        &run("kinetic-energy-pointer", dir),
        &["rest-velocity", "pointer-displacement", "particle-displacement"],
    )
}

fn momentum_acquisition(dir: &std::path::Path) -> Outcome {
    asserted(&run("momentum-split", dir), &["post-slope", "born-fraction-0-z", "born-fraction-1-z"])
}

fn double_slit(dir: &std::path::Path) -> Outcome {
    asserted(&run("double-slit", dir), &["upper-half", "far-field-tv"])
}

fn subquantum(dir: &std::path::Path) -> Outcome {
    asserted(&run("subquantum-track", dir), &["estimate-error", "wave-fidelity", "tracking-rms"])
}

fn occupancy(dir: &std::path::Path) -> Outcome {
    asserted(&run("occupancy", dir), &["occupied-agreement", "empty-agreement", "repeatable"])
}

fn bohm_consistency(dir: &std::path::Path) -> Outcome {
    asserted(&run("trajectories", dir), &["newton-residual"])
}

fn non_crossing(dir: &std::path::Path) -> Outcome {
    let r = run("trajectories", dir);
    let mut o = asserted(&r, &["non-crossing"]);
    let s = catalog_scenario("trajectories").unwrap().unwrap();
    o.passed &= s.ensemble.starts == 1000;
    o
}

fn wigner_diagnostics() -> Outcome {
    let grid = Grid::line(Axis::periodic(256, -16.0, 16.0).unwrap());
    let sigma = 0.7;
    let gauss = PacketState::single(vec![GaussianPacket::new(0.0, 0.0, sigma, 1.0)])
        .unwrap()
        .tabulate(&grid, 0.0)
        .unwrap();
    let w = wigner(&gauss).unwrap();
    let iq = w.q.iter().position(|&q| q == 0.0).unwrap();
    let ip = w.p.iter().position(|&p| p == 0.0).unwrap();
    let peak_err = (w.at(iq, ip) - 1.0 / PI).abs();

    let d = 5.0;
    let pk = |x| vec![GaussianPacket::new(x, 0.0, 0.6, 1.0)];
    let cat = PacketState::new(vec![C64::new(1.0, 0.0); 2], vec![pk(-d / 2.0), pk(d / 2.0)])
        .unwrap()
        .tabulate(&grid, 0.0)
        .unwrap();
    let wc = wigner(&cat).unwrap();
    let rho = density(&cat);
    let (_, mom) = momentum_density(&cat).unwrap();
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let qerr = max_diff(&wc.position_marginal(), &rho);
    let perr = max_diff(&wc.momentum_marginal(), &mom);

    // Fringes at q = 0 follow cos(p d): extrema half a period apart alternate in sign.
    let jq = wc.q.iter().position(|&q| q == 0.0).unwrap();
    let near = |p: f64| wc.p.iter().position(|&x| (x - p).abs() < 0.5 * wc.dp()).unwrap();
    let half = PI / d;
    let fringe: Vec<f64> = (0..5).map(|k| wc.at(jq, near(k as f64 * half))).collect();
    let alternates = fringe.windows(2).all(|v| v[0] * v[1] < 0.0);

    Outcome {
        passed: peak_err < 1e-6 && qerr < 1e-6 && perr < 1e-6 && alternates,
        detail: format!(
            "peak error {peak_err:.2e}, marginal errors {qerr:.2e} / {perr:.2e}, fringe signs {:?}",
            fringe.iter().map(|v| if *v > 0.0 { '+' } else { '-' }).collect::<String>()
        ),
    }
}

type Check = fn(&std::path::Path) -> Outcome;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: [(&str, Option<f64>, Check); 12] = [
        ("Born-rule fractions", Some(120.0), born_fractions),
        ("equivariance", Some(180.0), equivariance),
        ("nonequilibrium violation", Some(120.0), nonequilibrium),
        ("relaxation", Some(300.0), relaxation),
        ("particle at rest", None, particle_at_rest),
        ("momentum acquisition", None, momentum_acquisition),
        ("double slit", Some(300.0), double_slit),
        ("subquantum measurement", None, subquantum),
        ("occupancy probe", None, occupancy),
        ("Bohm consistency", None, bohm_consistency),
        ("non-crossing", None, non_crossing),
        ("Wigner diagnostics", None, |_| wigner_diagnostics()),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = check(dir.path());
        let secs = start.elapsed().as_secs_f64();
        if let Some(b) = budget {
            o.passed &= secs < *b;
        }
        let limit = budget.map_or(String::new(), |b| format!(" of {b:.0}s"));
        println!(
            "criterion {:>2} {:<26} {}  [{secs:.1}s{limit}] {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
