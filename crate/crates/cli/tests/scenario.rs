use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use steergame_cli::{parse_scenario, parse_scenario_str, CliError, Mode};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn test_example_text() -> String {
    std::fs::read_to_string(fixture("test_example")).unwrap()
}

fn parse(text: &str) -> Result<steergame_cli::Scenario, CliError> {
    parse_scenario_str(text, Path::new("inline.toml"))
}

#[test]
fn fixtures_parse_with_expected_values() {
    let sc = parse_scenario(&fixture("test_example")).unwrap();
    assert_eq!(sc.mode, Mode::Lti);
    assert_eq!(sc.stages.horizon(), 10);
    assert_eq!(sc.stages.b(3)[(2, 0)], 0.2);
    assert_eq!(sc.stages.c(0)[(0, 0)], -0.04);
    assert_eq!(sc.stages.d(9), &(DMatrix::identity(4, 4) * 0.01));
    assert_eq!(sc.boundary.mu0().as_slice(), &[-10.0, 6.0, 0.0, 0.0]);
    assert_eq!(sc.boundary.sigma_n()[(2, 2)], 0.001);
    assert_eq!(sc.weights.s(0), &(DMatrix::identity(2, 2) * 100.0));
    assert_eq!(sc.solver.samples, 1000);

    let d01 = parse_scenario(&fixture("test_example_D01")).unwrap();
    assert_eq!(d01.stages.d(0)[(1, 1)], 0.1);

    let missile = parse_scenario(&fixture("missile_endgame")).unwrap();
    assert_eq!(missile.mode, Mode::Continuous);
    assert_eq!(missile.dt, Some(0.1));
    assert_eq!(missile.stages.n_noise(), 2);
    assert_eq!(missile.parameters["v_p"], 3000.0);
}

#[test]
fn missing_table_is_named() {
    let text = test_example_text();
    let start = text.find("[boundary]").unwrap();
    let end = text.find("[weights]").unwrap();
    let cut = format!("{}{}", &text[..start], &text[end..]);
    let msg = parse(&cut).unwrap_err().to_string();
    assert!(msg.contains("boundary"), "{msg}");
}

#[test]
fn unknown_fields_are_rejected() {
    let text = test_example_text().replace("[weights]", "[weights]\nt = 1.0");
    let msg = parse(&text).unwrap_err().to_string();
    assert!(msg.contains("unknown field") && msg.contains('t'), "{msg}");

    let text = test_example_text().replace("samples = 1000", "samples = 1000\nthreads = 4");
    assert!(parse(&text).unwrap_err().to_string().contains("threads"));
}

#[test]
fn fields_of_another_mode_are_rejected() {
    let text = test_example_text().replace("d = \"0.01*I\"", "d = \"0.01*I\"\ndt = 0.2");
    let msg = parse(&text).unwrap_err().to_string();
    assert!(msg.contains("system.dt"), "{msg}");

    let text = test_example_text().replace("mode = \"lti\"", "mode = \"continuous\"");
    assert!(parse(&text).is_err());
}

#[test]
fn dimension_errors_name_the_entry() {
    let text = test_example_text().replace("[0.0, 0.04],\n    [0.2, 0.0],", "[0.0, 0.04, 1.0],\n    [0.2, 0.0],");
    let msg = parse(&text).unwrap_err().to_string();
    assert!(msg.contains("system.b[1]"), "{msg}");

    let text = test_example_text().replace("mu0 = [-10.0, 6.0, 0.0, 0.0]", "mu0 = [-10.0, 6.0, 0.0]");
    let msg = parse(&text).unwrap_err().to_string();
    assert!(msg.contains("boundary.mu0"), "{msg}");

    let text = test_example_text().replace("q = \"I\"", "q = \"diag(1, 2)\"");
    assert!(parse(&text).unwrap_err().to_string().contains("weights.q"));
}

#[test]
fn invalid_boundary_covariance_is_rejected() {
    let text = test_example_text().replace("sigma0 = \"diag(0.05, 0.05, 0.01, 0.01)\"", "sigma0 = \"diag(0.05, -0.05, 0.01, 0.01)\"");
    assert!(parse(&text).unwrap_err().to_string().contains("boundary"));
}

#[test]
fn ltv_with_repeated_stages_matches_lti() {
    let lti = parse_scenario(&fixture("test_example")).unwrap();
    let text = test_example_text();
    let start = text.find("a = [").unwrap();
    let end = text.find("[boundary]").unwrap();
    let block = &text[start..end];
    let mut stages = String::new();
    for _ in 0..10 {
        stages.push_str("[[system.stage]]\n");
        stages.push_str(block);
    }
    let weights = &text[end..];
    let head = text[..start].replace("mode = \"lti\"", "mode = \"ltv\"");
    let ltv = parse(&format!("{head}{weights}\n{stages}")).unwrap();
    assert_eq!(ltv.mode, Mode::Ltv);
    for k in 0..10 {
        assert_eq!(ltv.stages.a(k), lti.stages.a(k));
        assert_eq!(ltv.stages.b(k), lti.stages.b(k));
        assert_eq!(ltv.stages.c(k), lti.stages.c(k));
        assert_eq!(ltv.stages.d(k), lti.stages.d(k));
    }

    let short = format!("{head}{weights}\n[[system.stage]]\n{block}");
    assert!(parse(&short).unwrap_err().to_string().contains("system.stage"));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = parse_scenario(Path::new("/nonexistent/scenario.toml")).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
}
