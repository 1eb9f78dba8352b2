use std::collections::BTreeMap;

use statecon::commands::{bundled, parse_overrides, BUNDLED};
use statecon::document::Kind;
use statecon::{CliError, ProblemDocument};

fn parse(text: &str) -> Result<ProblemDocument, CliError> {
    ProblemDocument::parse("t.ocp", text, &BTreeMap::new())
}

const MINIMAL: &str = "
[meta]
T = 3
[states]
z, x
[controls]
u
[dynamics]
z = x
x = u
[cost]
z_T
[control_constraints]
u^2 - 1
[state_constraint]
x
[reference]
t1 = 1
t2 = 2
u.1 = -1
u.2 = 0
u.3 = 1
initial.z = 0
initial.x = 1
";

fn with(extra: &str) -> String {
    format!("{MINIMAL}{extra}")
}

#[test]
fn bundled_documents_parse() {
    for name in BUNDLED {
        let doc = ProblemDocument::parse(name, bundled(name).unwrap(), &BTreeMap::new()).unwrap();
        assert_eq!(doc.name, *name);
    }
}

#[test]
fn density_params_are_closed_form() {
    let doc = ProblemDocument::parse("density", bundled("density").unwrap(), &BTreeMap::new()).unwrap();
    let p = &doc.params;
    assert!((p["x0h"] - 17.0 / 12.0).abs() < 1e-15);
    assert!((p["xTh"] - 17.0 / 12.0).abs() < 1e-15);
    assert!(p["z2h"].abs() < 1e-15);
    assert_eq!(doc.horizon, 3.0);
}

#[test]
fn override_reaches_dependent_params() {
    let o = parse_overrides(&["T=4".into()]).unwrap();
    let doc = ProblemDocument::parse("density", bundled("density").unwrap(), &o).unwrap();
    assert_eq!(doc.horizon, 4.0);
    // x̂_T = T − b − ((b³−T³)/3 − (a+b)(b²−T²)/2 + ab(b−T))/2 at (1, 2, 4)
    let want = 4.0 - 2.0 - ((8.0 - 64.0) / 3.0 - 3.0 * (4.0 - 16.0) / 2.0 + 2.0 * (2.0 - 4.0)) / 2.0;
    assert!((doc.params["xTh"] - want).abs() < 1e-14);
}

#[test]
fn undeclared_override_is_usage_error() {
    let o = parse_overrides(&["nope=1".into()]).unwrap();
    let err = ProblemDocument::parse("atoms", bundled("atoms").unwrap(), &o).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");
}

#[test]
fn malformed_overrides() {
    assert!(parse_overrides(&["a".into()]).is_err());
    assert!(parse_overrides(&["a=x".into()]).is_err());
    assert!(parse_overrides(&["a=1".into(), "a=2".into()]).is_err());
}

#[test]
fn minimal_document() {
    let doc = parse(MINIMAL).unwrap();
    assert_eq!(doc.kind, Kind::A);
    assert_eq!(doc.states, ["z", "x"]);
    assert_eq!(doc.reference.initial, [0.0, 1.0]);
    let (p, order) = doc.problem_a().unwrap();
    assert_eq!(p.x, "x");
    assert_eq!(order, [0, 1]);
}

#[test]
fn constrained_state_moves_last() {
    let text = MINIMAL.replace("z, x", "x, z").replace("initial.z = 0", "initial.z = 5");
    let doc = parse(&text).unwrap();
    let (p, order) = doc.problem_a().unwrap();
    assert_eq!(p.z, ["z"]);
    assert_eq!(order, [1, 0]);
}

fn line_of(err: CliError) -> usize {
    match err {
        CliError::Document { line, .. } => line,
        other => panic!("expected a document error, got {other}"),
    }
}

#[test]
fn errors_carry_line_numbers() {
    let err = parse(&MINIMAL.replace("x = u", "x = u +")).unwrap_err();
    assert_eq!(line_of(err), 10);
    let err = parse(&with("[tolerances]\nloose = 1\n")).unwrap_err();
    assert_eq!(line_of(err), 26);
}

#[test]
fn structural_errors() {
    for bad in [
        MINIMAL.replace("[meta]", "[mta]"),
        MINIMAL.replace("x = u\n", ""),
        MINIMAL.replace("u.3 = 1", ""),
        MINIMAL.replace("initial.x = 1", "initial.y = 1"),
        MINIMAL.replace("[state_constraint]\nx", "[state_constraint]\nx - 1"),
        MINIMAL.replace("z_T", "z_T\nx_T"),
        with("[change_of_vars]\np = z\n"),
        with("[grid]\nsteps = 2.5\n"),
        with("[meta]\nT = 1\n"),
        format!("T = 3\n{MINIMAL}"),
        MINIMAL.replace("z = x", "z = w"),
    ] {
        assert!(parse(&bad).is_err(), "accepted:\n{bad}");
    }
}

#[test]
fn comments_and_tolerances() {
    let doc = parse(&with("# trailing\n[tolerances]\nmaster = 1e-5\n[grid]\nsteps = 100\n")).unwrap();
    assert_eq!(doc.tolerances.master, 1e-5);
    assert_eq!(doc.steps, Some(100));
}

#[test]
fn general_constraint_needs_split() {
    let text = MINIMAL
        .replace("kind", "")
        .replace("[meta]\n", "[meta]\nkind = C\n")
        .replace("[state_constraint]\nx", "[state_constraint]\nx + 0.1*z");
    let doc = parse(&text).unwrap();
    let pc = doc.problem_c().unwrap();
    assert!(doc.change_of_variables(&pc).is_err());
    let doc = parse(&format!("{text}[change_of_vars]\np = z\n")).unwrap();
    assert_eq!(doc.change_of_variables(&pc).unwrap().dim(), 2);
}

#[test]
fn missing_file_is_usage_error() {
    let err = ProblemDocument::load(std::path::Path::new("/nonexistent/x.ocp"), &BTreeMap::new()).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}
