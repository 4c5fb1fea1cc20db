use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MONOMER: &str = r#"
[system]
energies = [1.55]

[[environment.terms]]
gamma = 0.05908

[simulation]
dt = 0.1
rotating_frame = 1.505
"#;

const DIMER: &str = r#"
[system]
energies = [1.55, 1.46]
couplings = [[0.0, -0.01], [-0.01, 0.0]]

[[environment.terms]]
gamma = 0.05908
omega = 0.1

[simulation]
dt = 0.1
rotating_frame = 1.505
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, out: &str, args: &[&str]) -> Output {
        self.exec_env(out, args, None)
    }

    fn exec_env(&self, out: &str, args: &[&str], budget: Option<&str>) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pseudospec"));
        cmd.args(args)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out(out))
            .env_remove("PSEUDOSPEC_MEMORY_BUDGET");
        if let Some(b) = budget {
            cmd.env("PSEUDOSPEC_MEMORY_BUDGET", b);
        }
        cmd.output().unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Rows of a numeric CSV without its header.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn peak(spectrum: &[Vec<f64>]) -> (f64, f64) {
    spectrum.iter().map(|r| (r[0], r[1])).fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

#[test]
fn missing_config_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_pseudospec")).arg("absorption").output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn schema_violations_name_the_field() {
    let run = Run::new(&MONOMER.replace("dt = 0.1", "dt = 0.1\nshots = 0"));
    let o = run.exec("o", &["absorption"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("simulation.shots"), "{}", stderr(&o));
    let run = Run::new(&format!("{MONOMER}\n[absorption]\nstep = 0.25\n"));
    let o = run.exec("o", &["absorption"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absorption.step"));
    let run = Run::new(MONOMER);
    let o = run.exec("o", &["absorption", "--engine", "warp"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn absorption_peak_lands_on_transition() {
    let run = Run::new(MONOMER);
    let o = run.exec("o", &["absorption"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let spectrum = rows(&run.out("o/spectrum.csv"));
    assert_eq!(spectrum.len(), 21 * 8);
    let bin = spectrum[1][0] - spectrum[0][0];
    assert!((peak(&spectrum).0 - 1.55).abs() <= bin);
    let manifest = fs::read_to_string(run.out("o/manifest.json")).unwrap();
    for key in ["config_hash", "code_version", "seed", "model_hash"] {
        assert!(manifest.contains(key));
    }
}

#[test]
fn zero_dipole_gives_flat_spectrum() {
    let run = Run::new(&MONOMER.replace("energies = [1.55]", "energies = [1.55]\ndipoles = [0.0]"));
    let o = run.exec("o", &["absorption"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(rows(&run.out("o/spectrum.csv")).iter().all(|r| r[1] == 0.0));
}

#[test]
fn memoryless_dimer_peaks_at_exciton_energies() {
    let run = Run::new(&DIMER.replace("omega = 0.1\n", ""));
    let o = run.exec("o", &["absorption"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let spectrum = rows(&run.out("o/spectrum.csv"));
    let bin = spectrum[1][0] - spectrum[0][0];
    let local_max = |lo: f64, hi: f64| {
        spectrum.iter().filter(|r| r[0] > lo && r[0] < hi).fold((0.0, f64::NEG_INFINITY), |a, r| {
            if r[1] > a.1 {
                (r[0], r[1])
            } else {
                a
            }
        })
    };
    assert!((local_max(1.52, 1.60).0 - 1.5511).abs() <= bin);
    assert!((local_max(1.40, 1.49).0 - 1.4589).abs() <= bin);
}

#[test]
fn shot_runs_are_reproducible_and_seeded() {
    let run = Run::new(&format!("{MONOMER}\n[absorption]\noverlay = true\n"));
    let args = ["absorption", "--engine", "quantum-shots", "--shots", "20000", "--seed", "11"];
    for out in ["a", "b"] {
        let o = run.exec(out, &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["response.csv", "spectrum.csv", "spectrum_classical.csv", "spectrum.json", "manifest.json"] {
        assert_eq!(fs::read(run.out("a").join(f)).unwrap(), fs::read(run.out("b").join(f)).unwrap(), "{f}");
    }
    let o = run.exec("c", &["absorption", "--engine", "quantum-shots", "--seed", "12"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(run.out("a/response.csv")).unwrap(), fs::read(run.out("c/response.csv")).unwrap());
    assert!(fs::read_to_string(run.out("a/response.csv")).unwrap().starts_with("t1_fs,re,im,variance"));
}

#[test]
fn memory_budget_is_a_resource_error() {
    let run = Run::new(MONOMER);
    let o = run.exec_env("o", &["absorption", "--engine", "quantum-exact"], Some("100"));
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("hint"));
    let o = run.exec_env("o", &["absorption", "--engine", "quantum-exact"], Some("lots"));
    assert_eq!(code(&o), 2);
}

#[test]
fn runaway_integration_is_a_validation_failure() {
    let text = r#"
[system]
energies = [1.0, 1.0]
couplings = [[0.0, 100.0], [100.0, 0.0]]

[environment]

[simulation]
dt = 5.0

[dynamics]
t_total = 500.0
sample_every = 5.0
"#;
    let run = Run::new(text);
    let o = run.exec("o", &["dynamics"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn zero_window_echoes_initial_state() {
    let run = Run::new(&format!("{DIMER}\n[dynamics]\nt_total = 0.0\nobservables = [\"pop_1\", \"pop_2\", \"coh_1_2\"]\n"));
    let o = run.exec("o", &["dynamics"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(run.out("o/trajectory.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "time_fs,pop_1_re,pop_1_im,pop_2_re,pop_2_im,coh_1_2_re,coh_1_2_im");
    assert_eq!(rows(&run.out("o/trajectory.csv")), vec![vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
}

#[test]
fn dynamics_is_byte_identical_across_runs_and_propagators_agree() {
    let base = format!("{DIMER}\n[dynamics]\nt_total = 20.0\nsample_every = 2.0\n");
    let run = Run::new(&base);
    assert_eq!(code(&run.exec("a", &["dynamics"])), 0);
    assert_eq!(code(&run.exec("b", &["dynamics", "--threads", "2"])), 0);
    assert_eq!(fs::read(run.out("a/trajectory.csv")).unwrap(), fs::read(run.out("b/trajectory.csv")).unwrap());
    let run_c = Run::new(&format!("{base}propagator = \"collision\"\n"));
    assert_eq!(code(&run_c.exec("c", &["dynamics"])), 0);
    let a = rows(&run.out("a/trajectory.csv"));
    let c = rows(&run_c.out("c/trajectory.csv"));
    assert_eq!(a.len(), 11);
    for (x, y) in a.iter().zip(&c) {
        assert!((x[1] - y[1]).abs() < 5e-3, "{x:?} vs {y:?}");
    }
}

#[test]
fn monomer_rephasing_map_has_diagonal_peak_and_zero_esa() {
    let config = format!("{MONOMER}\n[rephasing]\ncount = 8\nt2 = [0.0, 20.0]\n");
    let run = Run::new(&config);
    let o = run.exec("o", &["2d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let map = rows(&run.out("o/spectrum2d_t2_0fs.csv"));
    assert_eq!(map.len(), 64 * 64);
    let best = map.iter().fold(&map[0], |a, r| if r[2].abs() > a[2].abs() { r } else { a });
    let bin = map[1][1] - map[0][1];
    assert!((best[0] - 1.55).abs() <= bin && (best[1] - 1.55).abs() <= bin, "{best:?}");
    assert!(run.out("o/spectrum2d_t2_20fs.dat").exists());
    let peaks = fs::read_to_string(run.out("o/peaks.csv")).unwrap();
    assert_eq!(peaks.lines().count(), 3);

    let run = Run::new(&format!("{config}pathways = [\"ESA\"]\n"));
    let o = run.exec("o", &["2d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(rows(&run.out("o/spectrum2d_t2_0fs.csv")).iter().all(|r| r[2] == 0.0));
}

#[test]
fn dimer_circuit_export_uses_six_qubits() {
    let run = Run::new(&format!("{DIMER}\n[circuit]\npathway = \"GSB\"\ndelays = [0.2, 0.0, 0.1]\nmax_circuits = 3\n"));
    let o = run.exec("o", &["circuit"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let census: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.out("o/census.json")).unwrap()).unwrap();
    assert_eq!(census["site_basis_circuits"], 256);
    assert_eq!(census["written"], 3);
    assert_eq!(census["circuits"][0]["census"]["qubits"], 6);
    let qasm = fs::read_to_string(run.out("o/circuits/GSB_000.qasm")).unwrap();
    assert!(qasm.starts_with("OPENQASM"));

    let run = Run::new(&format!("{DIMER}\n[circuit]\ndelays = [0.2, 0.1]\n"));
    assert_eq!(code(&run.exec("o", &["circuit"])), 2);
}

#[test]
fn empty_environment_export() {
    let run = Run::new("[system]\nenergies = [1.55]\n[environment]\n[simulation]\ndt = 0.1\n");
    let o = run.exec("o", &["circuit"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let census: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.out("o/census.json")).unwrap()).unwrap();
    assert_eq!(census["circuits"][0]["census"]["resets"], 0);
}
