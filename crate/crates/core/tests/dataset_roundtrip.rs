use livo::eval::compute_ate;
use livo::io::{read_dataset, write_dataset, FrameSource, KeyValues};
use livo::pipeline::{run_pipeline, PipelineConfig};
use livo::sim::{SimConfig, Simulation};
use livo::sweep::Event;

fn sim() -> Simulation {
    let text = "seed = 9\nduration = 2\norbit.laps = 0.1\nlidar.azimuth_steps = 360\n\
                camera.width = 160\ncamera.height = 120\ncamera.intrinsics = 150 150 80 60\n";
    Simulation::new(SimConfig::from_kv(&KeyValues::parse(text).unwrap()).unwrap())
}

#[test]
fn dataset_replays_the_simulated_streams() {
    let sim = sim();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &sim.config.calibration(), sim.imu(), sim.sweeps(), sim.frames(), &sim.groundtruth()).unwrap();
    let data = read_dataset(dir.path()).unwrap();

    let kind = |e: &Event<usize>| match e {
        Event::Imu(_) => 0,
        Event::Point(_) => 1,
        Event::Image { .. } => 2,
    };
    let replay: Vec<Event<usize>> = data.events().collect::<Result<_, _>>().unwrap();
    let original: Vec<Event<usize>> = sim.events().collect();
    assert_eq!(replay.len(), original.len());
    for (a, b) in replay.iter().zip(&original) {
        assert_eq!(kind(a), kind(b));
        assert!((a.stamp().secs() - b.stamp().secs()).abs() < 1e-9);
        if let (Event::Point(p), Event::Point(q)) = (a, b) {
            assert!((p.position - q.position).norm() < 1e-5);
        }
    }
    let frames = data.frames();
    for i in [0, data.image_stamps().len() - 1] {
        // images are stored as 8-bit samples
        let stored: Vec<f32> = sim.frame(i).unwrap().data.iter().map(|v| v.round().clamp(0.0, 255.0)).collect();
        assert_eq!(frames.frame(i).unwrap().data, stored);
    }
    assert_eq!(data.groundtruth().unwrap().unwrap().len(), sim.imu().len());
}

#[test]
fn pipeline_agrees_on_both_sources() {
    let sim = sim();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &sim.config.calibration(), sim.imu(), sim.sweeps(), sim.frames(), &sim.groundtruth()).unwrap();
    let data = read_dataset(dir.path()).unwrap();

    let cfg = PipelineConfig::from_kv(&data.calib).unwrap();
    let from_disk = run_pipeline(cfg.clone(), data.events(), &data.frames()).unwrap();
    let direct = run_pipeline(cfg, sim.events().map(Ok), &sim).unwrap();
    assert_eq!(from_disk.trajectory.len(), direct.trajectory.len());
    let gt = sim.groundtruth();
    let a = compute_ate(&from_disk.trajectory, &gt).unwrap().rmse;
    let b = compute_ate(&direct.trajectory, &gt).unwrap().rmse;
    assert!(a < 0.05 && b < 0.05, "{a} {b}");
    // sweep points are stored in single precision
    assert!((a - b).abs() < 0.01, "{a} {b}");
}
