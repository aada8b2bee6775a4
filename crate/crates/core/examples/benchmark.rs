//! Generates the standard synthetic benchmark, trains on it and prints
//! per-level holdout quality.
//!
//! `cargo run --release -p freqsplat --example benchmark -- [key=value ...]`

use freqsplat::synth::{BenchmarkSpec, Dataset};
use freqsplat::train::{evaluate_levels, random_init, render_options, TrainConfig, Trainer};

fn main() -> freqsplat::Result<()> {
    let mut cfg = TrainConfig::benchmark();
    let pairs: Vec<(String, String)> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    cfg.apply_pairs(pairs)?;
    print!("{}", cfg.to_text());
    let dir = std::env::temp_dir().join("freqsplat-benchmark");
    BenchmarkSpec::default().generate(&dir)?;
    let data = Dataset::load(&dir)?;
    let scene = random_init(&cfg, data.manifest.background);
    let mut trainer = Trainer::new(cfg.clone(), scene, data.train.clone(), data.holdout.clone())?;
    let t0 = std::time::Instant::now();
    trainer.run(|row| {
        if row.step % 200 == 0 || row.psnr_holdout.is_some() {
            println!(
                "step {:5} loss {:.5} im {:.5} dft {:.3} n {:5} {:?} psnr {:?} t {:.0}s",
                row.step,
                row.loss,
                row.loss_im,
                row.loss_dft,
                row.n_gaussians,
                row.n_per_level,
                row.psnr_holdout,
                t0.elapsed().as_secs_f64()
            );
        }
    })?;
    let scene = trainer.into_scene();
    for r in evaluate_levels(&scene, &data.holdout, cfg.levels, &render_options(&cfg))? {
        println!("{r:?}");
    }
    Ok(())
}
