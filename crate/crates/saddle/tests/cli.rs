use std::path::Path;
use std::process::{Command, Output};

use saddle::export::import_system;
use saddle_core::assembly::{assemble_system, ProblemData, ProblemSpec};
use saddle_core::precond::BlockDiagPreconditioner;

fn saddle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saddle"))
        .args(args)
        .output()
        .expect("spawn saddle")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn run_emits_spec_csv_and_is_reproducible() {
    let args = [
        "run",
        "--problem",
        "wave",
        "--degree",
        "2",
        "--level",
        "2",
        "--alpha",
        "1e-6",
        "--format",
        "csv",
    ];
    let a = saddle(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let text = stdout(&a);
    assert!(text
        .starts_with("problem,p,level,alpha,dofs,iterations,converged,final_relres,runtime_ms\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4], "3604");
    assert_eq!(rows[0][6], "true");
    let iters: usize = rows[0][5].parse().unwrap();
    // reference iteration count for this cell is 51
    assert!((26..=76).contains(&iters), "{iters}");
    let relres: f64 = rows[0][7].parse().unwrap();
    assert!(relres <= 1e-7);

    let b = saddle(&args);
    assert_eq!(csv_rows(&stdout(&b))[0][5], rows[0][5]);
}

#[test]
fn heat_runs_and_converges() {
    let o = saddle(&[
        "run",
        "--problem",
        "heat",
        "--alpha",
        "1e-6",
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0][0], "heat");
    assert_eq!(rows[0][6], "true");
}

#[test]
fn table_reports_reference_dofs() {
    let o = saddle(&[
        "table",
        "--degrees",
        "3",
        "--levels",
        "2",
        "--alphas",
        "1e-3,1e-6",
        "--workers",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("| ℓ \\ α | DoFs | 1e-3 | 1e-6 |"), "{text}");
    assert!(text.contains("| 2 | 4643 |"), "{text}");
}

#[test]
fn configuration_errors_exit_with_2() {
    for args in [
        vec!["table", "--alphas", ""],
        vec!["run", "--tol", "1.5"],
        vec!["run", "--tol", "0"],
        vec!["run", "--alpha", "-1"],
        vec!["run", "--degree", "1"],
        vec!["run", "--level", "4"],
        vec!["run", "--level", "3", "--max-memory-gb", "0.000001"],
        vec!["run", "--problem", "stokes"],
        vec!["verify", "--suite", "nope"],
        vec!["export"],
    ] {
        let o = saddle(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn large_levels_print_an_estimate_first() {
    let o = saddle(&["run", "--level", "4"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("estimated memory"), "{err}");
    assert!(err.contains("--allow-large"), "{err}");
}

#[test]
fn verify_suites_pass() {
    for suite in ["appendix", "theorem22", "lemma51"] {
        let o = saddle(&["verify", "--suite", suite, "--format", "csv"]);
        assert_eq!(o.status.code(), Some(0), "{suite}");
        let text = stdout(&o);
        assert!(text.starts_with("suite,check,status,detail\n"));
        assert!(!text.contains("FAIL"), "{text}");
    }
}

#[test]
fn history_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = saddle(&[
        "run",
        "--alpha",
        "1e-3",
        "--history-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let file = dir.path().join("history_wave_p2_l2_a1e-3.csv");
    let text = std::fs::read_to_string(file).unwrap();
    assert!(text.starts_with("iteration,estimate,true_residual\n0,1,"));
}

fn assert_export_matches(dir: &Path, spec: &ProblemSpec) {
    let imported = import_system(dir).unwrap();
    let sys = assemble_system(spec, &ProblemData::homogeneous()).unwrap();
    let pre = BlockDiagPreconditioner::build(&sys).unwrap();
    assert_eq!(imported.system, sys.matrix);
    assert!(imported.manifest.system_symmetric);
    assert_eq!(imported.blocks.len(), pre.blocks.len());
    for ((name, m), b) in imported.blocks.iter().zip(&pre.blocks) {
        assert_eq!(name, &b.name);
        assert_eq!(m, &b.matrix, "{name}");
    }
    assert_eq!(imported.manifest.alpha, spec.alpha);
    assert_eq!(imported.manifest.seed, spec.seed);
    assert_eq!(imported.manifest.dims, sys.sizes);
    assert_eq!(imported.manifest.offsets, sys.offsets);
}

#[test]
fn export_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wave22");
    let o = saddle(&[
        "export",
        "--degree",
        "2",
        "--level",
        "2",
        "--alpha",
        "1e-6",
        "--export-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let mut files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(
        files,
        [
            "M_R2.mtx",
            "P_Y.mtx",
            "S_R1.mtx",
            "alpha_M_U.mtx",
            "inv_alpha_M_U.mtx",
            "manifest.json",
            "system.mtx"
        ]
    );
    assert_export_matches(&out, &ProblemSpec::wave(2, 2, 1e-6));
}

#[test]
fn heat_export_has_four_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let o = saddle(&[
        "export",
        "--problem",
        "heat",
        "--level",
        "1",
        "--alpha",
        "1e-2",
        "--export-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let imported = import_system(dir.path()).unwrap();
    assert_eq!(imported.blocks.len(), 4);
    assert_export_matches(dir.path(), &ProblemSpec::heat(2, 1, 1e-2));
}
