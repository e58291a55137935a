//! Recovery sweep for the three-stage schedule at `d = 100, n = 40, r = 5`.
//!
//! ```text
//! cargo run --release -p noisebias-core --example calibrate -- \
//!     [k0 k1 k2 c1 c2 [first_seed end_seed]]
//! ```
//!
//! Prints the final `‖v − v★‖∞` per seed and the number of seeds within 0.1.

use noisebias_core::engines::NoiseSpec;
use noisebias_core::model::generate_dataset;
use noisebias_core::trainer::{run_trajectory, three_stage_schedule, ThreeStageParams};
use noisebias_core::{DatasetConfig, ParamVector};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("numeric arguments"))
        .collect();
    let mut p = ThreeStageParams::calibrated();
    if args.len() >= 5 {
        (p.k0, p.k1, p.k2, p.c1, p.c2) = (args[0], args[1], args[2], args[3], args[4]);
    }
    let seeds = match args.get(5..7) {
        Some(&[a, b]) => a as u64..b as u64,
        _ => 0..10,
    };
    let schedule = three_stage_schedule(&p).expect("valid constants");
    let total = seeds.end - seeds.start;
    let mut recovered = 0;
    for seed in seeds {
        let ds = generate_dataset(&DatasetConfig::new(100, 40, 5, seed)).unwrap();
        let v0 = ParamVector::constant(100, 1.0);
        let tr = run_trajectory(&ds, &v0, NoiseSpec::label_noise(p.delta), &schedule, u64::MAX, seed).unwrap();
        let err = tr
            .final_v
            .iter()
            .zip(ds.ground_truth().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err <= 0.1 {
            recovered += 1;
        }
        println!("seed {seed:3}  linf error {err:.3}");
    }
    println!("{recovered}/{total} within 0.1");
}
