use std::fs;
use std::path::Path;
use std::process::Command;

use spinqubit_cli::config::{parse_config, Scenario, ScenarioConfig};
use spinqubit_cli::{exit, run_scenario, validate_config, CliError};

const SMALL_CHEVRON: &str = r#"
scenario = "chevron"
seeds = [3]

[device]
shift_coeff = 0.5e6

[noise]
kind = "quasi_static"
sigma = 10e3

[chevron]
amplitude = 2.0
n_detunings = 21
n_durations = 30
t_max = 1.5e-6
shots = 4
"#;

fn small_chevron(out: &Path) -> ScenarioConfig {
    let mut c = parse_config(SMALL_CHEVRON).unwrap();
    c.output_dir = out.to_path_buf();
    c
}

fn config_error(text: &str) -> String {
    match parse_config(text).and_then(|c| c.validate().map(|_| c)) {
        Err(CliError::Config(m)) => m,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinqubit"))
}

#[test]
fn shipped_presets_validate() {
    for s in Scenario::ALL {
        let c = ScenarioConfig::preset(s);
        assert_eq!(c.scenario, Some(s));
        c.validate().unwrap_or_else(|e| panic!("{s}: {e}"));
    }
}

#[test]
fn zero_bin_width_names_the_field() {
    let m = config_error("scenario = \"rabi\"\n[estimator]\nbin_width = 0.0\n");
    assert!(m.contains("estimator.bin_width"), "{m}");
}

#[test]
fn coarse_sampling_fails_the_nyquist_check() {
    let m = config_error("scenario = \"residual-psd\"\n[residual_psd]\ndt = 1e-6\n");
    assert!(m.contains("residual_psd.dt"), "{m}");
    assert!(m.contains("1/(2 dt) >= f_high"), "{m}");
}

#[test]
fn empty_seed_list_is_rejected() {
    let m = config_error("scenario = \"rabi\"\nseeds = []\n");
    assert!(m.contains("seeds"), "{m}");
}

#[test]
fn foreign_tables_and_unknown_keys_are_rejected() {
    let m = config_error("scenario = \"rabi\"\n[chevron]\nshots = 3\n");
    assert!(m.contains("chevron"), "{m}");
    let m = config_error("scenario = \"rabi\"\n[rabi]\nshotz = 3\n");
    assert!(m.contains("shotz"), "{m}");
    let m = config_error("scenario = \"sec-compare\"\n[noise]\nkind = \"quasi_static\"\nsigma = 1e3\n");
    assert!(m.contains("noise.kind"), "{m}");
}

#[test]
fn validate_config_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, SMALL_CHEVRON).unwrap();
    assert_eq!(validate_config(&path).unwrap().scenario, Some(Scenario::Chevron));
    let missing = validate_config(&dir.path().join("none.toml")).unwrap_err();
    assert_eq!(missing.exit_code(), exit::RUNTIME_ERROR);
}

#[test]
fn runs_are_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run_scenario(&small_chevron(a.path())).unwrap();
    let sb = run_scenario(&small_chevron(b.path())).unwrap();
    assert_eq!(sa.runs[0].files, sb.runs[0].files);
    for f in &sa.runs[0].files {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        serde_json::to_string(&sa.runs).unwrap(),
        serde_json::to_string(&sb.runs).unwrap()
    );
}

#[test]
fn summary_lists_outputs_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_scenario(&small_chevron(dir.path())).unwrap();
    let run = &s.runs[0];
    assert!(run.error.is_none());
    assert!(run.files.iter().any(|f| f == "chevron.csv"));
    assert!(run.files.iter().any(|f| f == "plot_chevron.py"));
    let csv = fs::read_to_string(dir.path().join("chevron.csv")).unwrap();
    assert!(csv.starts_with("detuning_Hz,t_s,P_up\n"));
    assert_eq!(csv.lines().count(), 1 + 21 * 30);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["scenario"], "chevron");
    let check = &json["runs"][0]["checks"][0];
    assert_eq!(check["name"], "axis_Hz");
    assert!(check["lower"].as_f64().unwrap() < check["upper"].as_f64().unwrap());
    // Axis within one grid step of the injected 2 MHz shift.
    assert!((run.values["axis_Hz"] - 2e6).abs() <= run.values["grid_step_Hz"]);
}

#[test]
fn several_seeds_get_their_own_directories() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_chevron(dir.path());
    c.seeds = vec![1, 2];
    let s = run_scenario(&c).unwrap();
    assert_eq!(s.runs.len(), 2);
    assert!(dir.path().join("seed_1/chevron.csv").exists());
    assert!(dir.path().join("seed_2/chevron.csv").exists());
    assert!(s.runs[1].files.iter().all(|f| f.starts_with("seed_2/")));
}

#[test]
fn shots_override_applies_to_the_scenario() {
    let mut c = ScenarioConfig::preset(Scenario::Rabi);
    c.override_shots(7).unwrap();
    assert_eq!(c.rabi.unwrap().shots, 7);
    let mut c = ScenarioConfig::preset(Scenario::SecCompare);
    c.override_shots(9).unwrap();
    assert_eq!(c.sec_compare.unwrap().spectroscopy.shots, 9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, SMALL_CHEVRON).unwrap();

    let ok = bin()
        .args(["chevron", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("ok"))
        .output()
        .unwrap()
        .status;
    assert_eq!(ok.code(), Some(exit::PASS));

    // A band the run cannot meet.
    let failing = cfg.with_file_name("fail.toml");
    fs::write(
        &failing,
        "scenario = \"ramsey-free\"\n[ramsey_free]\nn_points = 40\nshots = 50\ntarget_t2star = 1e-6\ntolerance = 0.01\n",
    )
    .unwrap();
    let fail = bin()
        .args(["ramsey-free", "--quiet", "--config"])
        .arg(&failing)
        .arg("--out")
        .arg(dir.path().join("fail"))
        .output()
        .unwrap()
        .status;
    assert_eq!(fail.code(), Some(exit::ACCEPTANCE_FAIL));

    let bad = cfg.with_file_name("bad.toml");
    fs::write(&bad, "scenario = \"chevron\"\n[estimator]\nbin_width = 0\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(exit::CONFIG_ERROR));
    assert!(String::from_utf8_lossy(&out.stderr).contains("estimator.bin_width"));

    // Config for another scenario.
    let wrong = bin().args(["rabi", "--quiet", "--config"]).arg(&cfg).output().unwrap().status;
    assert_eq!(wrong.code(), Some(exit::CONFIG_ERROR));

    // Output directory blocked by a file.
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let io = bin()
        .args(["chevron", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(blocker.join("sub"))
        .output()
        .unwrap()
        .status;
    assert_eq!(io.code(), Some(exit::RUNTIME_ERROR));

    let all = bin().args(["validate", "--quiet"]).output().unwrap().status;
    assert_eq!(all.code(), Some(exit::PASS));
}
