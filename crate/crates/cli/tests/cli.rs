use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn livo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_livo")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in\n{text}"));
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

const SIM: &str = "seed = 4\nduration = 2\norbit.laps = 0.1\nlidar.azimuth_steps = 360\ncamera.width = 160\ncamera.height = 120\ncamera.intrinsics = 150 150 80 60\n";

#[test]
fn simulate_run_eval_export() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("sim.cfg"), SIM).unwrap();
    let out = stdout(&livo(&["simulate", "sim.cfg", "-o", "data"], root));
    assert!(out.contains("sweeps 20"), "{out}");
    for f in ["calib.txt", "imu.csv", "groundtruth.txt", "sweeps/000000.bin"] {
        assert!(root.join("data").join(f).exists(), "{f}");
    }

    fs::write(root.join("run.cfg"), "dataset = data\noutput = run\n").unwrap();
    let out = stdout(&livo(&["run", "run.cfg"], root));
    assert!(value(&out, "ate_rmse") < 0.05, "{out}");
    assert!(out.contains("timing_ms vision"), "{out}");
    for f in ["trajectory.txt", "camera_params.txt", "timing.csv", "packets.csv", "map.csv", "map.ply"] {
        assert!(root.join("run").join(f).exists(), "{f}");
    }

    let out = stdout(&livo(&["eval", "ate", "run/trajectory.txt", "data/groundtruth.txt"], root));
    assert!(value(&out, "ate_rmse") < 0.05);
    assert!(value(&out, "associations") > 10.0);
    let out = stdout(&livo(&["eval", "e2e", "run/trajectory.txt"], root));
    assert!(value(&out, "end_to_end").is_finite());

    let original = fs::read(root.join("run/map.ply")).unwrap();
    let out = stdout(&livo(&["export-ply", "run", "-o", "again.ply"], root));
    assert!(out.starts_with("ply again.ply"), "{out}");
    assert_eq!(fs::read(root.join("again.ply")).unwrap(), original);
    let out = stdout(&livo(&["export-ply", "run", "-o", "colored.ply", "--rendered-only"], root));
    let all = fs::read_to_string(root.join("run/map.csv")).unwrap().lines().count() - 1;
    assert!((value(&out.replace("ply colored.ply ", ""), "vertices") as usize) < all);
}

#[test]
fn runs_straight_from_a_simulator_config() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("sim.cfg"), SIM).unwrap();
    fs::write(root.join("run.cfg"), "simulation = sim.cfg\n").unwrap();
    let out = stdout(&livo(&["run", "run.cfg", "-o", "elsewhere"], root));
    assert!(out.contains("mode Medium"), "{out}");
    assert!(root.join("elsewhere/trajectory.txt").exists());
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("bad.txt"), "0 0 0 0 0 0 0 1\n1 0 0\n").unwrap();
    fs::write(root.join("bad.cfg"), "lio.voxel_size = -1\nsimulation = sim.cfg\n").unwrap();
    for args in [
        vec!["run", "missing.cfg"],
        vec!["run", "bad.cfg"],
        vec!["eval", "e2e", "bad.txt"],
        vec!["eval", "ate", "bad.txt", "missing.txt"],
        vec!["export-ply", "nowhere"],
    ] {
        let o = livo(&args, root);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{args:?}: {err}");
    }
    let o = livo(&["eval", "e2e", "bad.txt"], root);
    assert!(String::from_utf8(o.stderr).unwrap().contains("bad.txt:2:"));
}
