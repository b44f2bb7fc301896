use rfseek::models::{ModelParams, RidgeParams, MlpParams};
use rfseek::rf_env::{PropagationConfig, RfEnvironment, TransmitterNode};
use rfseek::seeker::{run_episode, EpisodeContext, SeekerConfig};
use rfseek::targets::TargetSpec;
use rfseek::world::{OccupancyGrid, Position, RobotFootprint};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let exponent: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3.5);
    let sx: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(24.0);
    let sy: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(15.0);
    let seeds: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(20);

    let grid = OccupancyGrid::load("crates/rfseek/maps/office.map").unwrap();
    let fp = RobotFootprint::new(0.35);
    let cfg = PropagationConfig { path_loss_exponent: exponent, shadowing_sigma_db: 4.0, ..Default::default() };
    let node = TransmitterNode { id: 1, x: sx, y: sy, ref_power_dbm: -40.0, packet_rate: 200.0 };
    let env = RfEnvironment::new(cfg, vec![node]).unwrap();
    let target = TargetSpec::SingleSource { node: 1 };
    let seeker = SeekerConfig { stop_radius: Some(2.0), ..SeekerConfig::default() };
    let source = Position::new(sx, sy);
    let start = Position::new(8.0, 10.0);
    println!("start->source distance {:.1} m", start.distance_to(source));

    for (name, model) in [
        ("ridge", ModelParams::Ridge(RidgeParams::default())),
        ("mlp", ModelParams::Mlp(MlpParams::default())),
    ] {
        let ctx = EpisodeContext {
            grid: &grid, footprint: &fp, env: &env, target: &target,
            model: &model, config: &seeker, start,
        };
        let mut ok = 0;
        let mut fails = vec![];
        let t0 = std::time::Instant::now();
        for seed in 0..seeds {
            let out = run_episode(&ctx, seed).unwrap();
            let d = out.stats.final_position.distance_to(source);
            if d <= 2.0 { ok += 1; } else { fails.push((seed, (d*100.0).round()/100.0, out.stats.iterations, out.stats.refit_count)); }
        }
        println!("{name}: {ok}/{seeds} within 2m ({:?}) fails: {fails:?}", t0.elapsed());
    }
}
