use std::fs;
use std::path::Path;

use freqsplat::apps::{apply_recipe, focus, foveate, FilterRecipe, FoveaSpec, Mask};
use freqsplat::model::{load_model, save_model, scene_to_json, Camera, ColorMode, GaussianScene};
use freqsplat::render::{render_all_levels, render_level, RenderOptions};
use freqsplat::synth::{BenchmarkSpec, Dataset, MANIFEST_FILE};
use freqsplat::train::{evaluate_levels, random_init, save_metrics_csv, TrainConfig, Trainer, View};
use serde_json::json;

use crate::{Cli, ColorArgs, Command, Failure, Split};

type Outcome = Result<(), Failure>;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Outcome {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn ensure_parent(path: &Path) -> Outcome {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn render_options(color: &ColorArgs, deterministic: bool) -> RenderOptions {
    RenderOptions {
        aa_opacity: color.aa,
        color_mode: if color.plain { ColorMode::Plain } else { ColorMode::Residual },
        deterministic,
    }
}

fn camera_at(data: &Dataset, index: usize) -> Result<&Camera, Failure> {
    data.manifest.cameras.get(index).ok_or_else(|| {
        input(format!(
            "camera {index} out of range: dataset has {} cameras",
            data.manifest.cameras.len()
        ))
    })
}

/// Prints the resolved invocation as one JSON line.
fn print_config(cli: &Cli, extra: serde_json::Value) {
    let mut v = serde_json::to_value(cli).unwrap_or_default();
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    println!("{v}");
}

pub fn run(cli: &Cli, train_overrides: &[(String, String)]) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input("thread count must be at least 1"));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let det = cli.deterministic;
    match &cli.command {
        Command::Synth(a) => {
            let spec = BenchmarkSpec {
                seed: a.seed,
                levels: a.levels,
                n_per_level: a.per_level.clone().unwrap_or_else(|| vec![200; a.levels as usize]),
                extent: a.extent,
                cameras: a.cameras,
                radius: a.radius,
                resolution: a.resolution,
                focal_factor: a.focal_factor,
            };
            if a.levels < 1 || spec.n_per_level.len() != a.levels as usize {
                return Err(input(format!("--per-level needs {} counts", a.levels)));
            }
            if a.cameras < 2 {
                return Err(input("--cameras must be at least 2"));
            }
            print_config(cli, json!({ "benchmark": spec }));
            let m = spec.generate(&a.out)?;
            println!(
                "{}",
                json!({ "manifest": a.out.join(MANIFEST_FILE), "train": m.train.len(), "holdout": m.holdout.len() })
            );
            Ok(())
        }
        Command::Train(a) => {
            let mut cfg = if a.benchmark { TrainConfig::benchmark() } else { TrainConfig::default() };
            if let Some(path) = &a.config {
                cfg.apply_file(path)?;
            }
            cfg.apply_pairs(train_overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
            if det {
                cfg.deterministic = true;
            }
            cfg.validate()?;
            print_config(cli, json!({ "train_config": cfg }));
            let data = Dataset::load(&a.data)?;
            let scene = random_init(&cfg, data.manifest.background);
            let mut trainer = Trainer::new(cfg.clone(), scene, data.train.clone(), data.holdout.clone())?;
            trainer.run(|row| {
                if let Some(p) = row.psnr_holdout {
                    eprintln!("step {} loss {:.6} gaussians {} holdout_psnr {:.3}", row.step, row.loss, row.n_gaussians, p);
                }
            })?;
            create_dir(&a.out)?;
            let metrics = trainer.state.metrics.clone();
            let scene = trainer.into_scene();
            save_model(&scene, a.out.join("model.fags"))?;
            save_metrics_csv(&metrics, cfg.levels, a.out.join("metrics.csv"))?;
            write_file(&a.out.join("config.txt"), cfg.to_text())?;
            println!(
                "{}",
                json!({
                    "model": a.out.join("model.fags"),
                    "metrics": a.out.join("metrics.csv"),
                    "gaussians": scene.len(),
                    "per_level": scene.counts_per_level(),
                    "final_holdout_psnr": metrics.last().and_then(|r| r.psnr_holdout),
                })
            );
            Ok(())
        }
        Command::Render(a) => {
            print_config(cli, json!({}));
            let scene = load_model(&a.model)?;
            let data = Dataset::load(&a.data)?;
            let cam = camera_at(&data, a.camera)?;
            let k = a.level.unwrap_or(scene.num_levels.max(1));
            let img = render_level(&scene, cam, k, &render_options(&a.color, det))?;
            ensure_parent(&a.out)?;
            img.save_png(&a.out)?;
            println!("{}", json!({ "image": a.out, "level": k, "camera": a.camera }));
            Ok(())
        }
        Command::Eval(a) => {
            print_config(cli, json!({}));
            let scene = load_model(&a.model)?;
            let data = Dataset::load(&a.data)?;
            let views: Vec<View> = match a.split {
                Split::Holdout => data.holdout.clone(),
                Split::Train => data.train.clone(),
                Split::All => data.train.iter().chain(&data.holdout).cloned().collect(),
            };
            if views.is_empty() {
                return Err(input("the selected split has no views"));
            }
            let levels = scene.num_levels.max(1);
            let report = evaluate_levels(&scene, &views, levels, &render_options(&a.color, det))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &report {
                w.serialize(r).map_err(|e| input(e.to_string()))?;
            }
            let text = String::from_utf8(w.into_inner().map_err(|e| input(e.to_string()))?).expect("csv is utf-8");
            print!("{text}");
            if let Some(path) = &a.csv {
                ensure_parent(path)?;
                write_file(path, &text)?;
            }
            for r in &report {
                eprintln!(
                    "level {}: {} gaussians, PSNR {:.2} dB, SSIM {:.4} (low-pass target: {:.2} dB, {:.4})",
                    r.level, r.gaussians, r.psnr, r.ssim, r.psnr_lowpass, r.ssim_lowpass
                );
            }
            Ok(())
        }
        Command::Fovea(a) => {
            let scene = load_model(&a.model)?;
            let data = Dataset::load(&a.data)?;
            let cam = camera_at(&data, a.camera)?;
            let gaze = match &a.gaze {
                Some(g) if g.len() == 2 => [g[0], g[1]],
                Some(_) => return Err(input("--gaze takes two numbers x,y")),
                None => [cam.width as f64 / 2.0, cam.height as f64 / 2.0],
            };
            let mut spec = FoveaSpec::with_default_sigmas(cam, scene.num_levels, gaze, a.threshold);
            if let Some(s) = &a.sigmas {
                spec.sigmas = s.clone();
            }
            print_config(cli, json!({ "fovea": spec }));
            let out = foveate(&scene, cam, &spec)?;
            save_transformed(&scene, &out, &a.out)
        }
        Command::Focus(a) => {
            print_config(cli, json!({}));
            let scene = load_model(&a.model)?;
            let data = Dataset::load(&a.data)?;
            let mut masks = Vec::with_capacity(data.manifest.images.len());
            for name in &data.manifest.images {
                let file = Path::new(name).file_name().ok_or_else(|| input(format!("bad image name {name}")))?;
                masks.push(Mask::load_png(a.masks.join(file))?);
            }
            let out = focus(&scene, &data.manifest.cameras, &masks, a.ratio)?;
            save_transformed(&scene, &out, &a.out)
        }
        Command::Filter(a) => {
            let scene = load_model(&a.model)?;
            let recipe = match (&a.preset, &a.recipe) {
                (Some(name), _) => FilterRecipe::preset(name, scene.num_levels)?,
                (None, Some(path)) => FilterRecipe::load(path)?,
                (None, None) => return Err(input("give --preset or --recipe")),
            };
            print_config(cli, json!({ "resolved_recipe": recipe }));
            let out = apply_recipe(&scene, &recipe, a.seed)?;
            save_transformed(&scene, &out, &a.out)
        }
        Command::ExportViewer(a) => {
            print_config(cli, json!({}));
            let scene = load_model(&a.model)?;
            let data = Dataset::load(&a.data)?;
            let cam = camera_at(&data, a.camera)?;
            create_dir(&a.out)?;
            save_model(&scene, a.out.join("model.fags"))?;
            let manifest = serde_json::to_string_pretty(&data.manifest).map_err(freqsplat::Error::from)?;
            write_file(&a.out.join("manifest.json"), manifest)?;
            let dump = serde_json::to_string(&scene_to_json(&scene)).map_err(freqsplat::Error::from)?;
            write_file(&a.out.join("model.json"), dump)?;
            let levels = scene.num_levels.max(1);
            let set = render_all_levels(&scene, cam, levels, &RenderOptions::default())?;
            let mut references = Vec::new();
            for (k, img) in (1..=levels).zip(&set.images) {
                let name = format!("reference_k{k}.png");
                img.save_png(a.out.join(&name))?;
                references.push(json!({ "level": k, "camera": a.camera, "image": name }));
            }
            let counts: Vec<usize> = (1..=levels).map(|k| scene.level_indices(k).map(|v| v.len())).collect::<Result<_, _>>()?;
            let index = json!({
                "model": "model.fags",
                "manifest": "manifest.json",
                "golden": "model.json",
                "num_levels": levels,
                "sh_degree": scene.sh_degree,
                "background": scene.background,
                "level_subset_counts": counts,
                "references": references,
            });
            write_file(&a.out.join("index.json"), serde_json::to_string_pretty(&index).expect("json"))?;
            println!("{}", json!({ "bundle": a.out, "gaussians": scene.len() }));
            Ok(())
        }
    }
}

fn save_transformed(before: &GaussianScene, after: &GaussianScene, out: &Path) -> Outcome {
    ensure_parent(out)?;
    save_model(after, out)?;
    println!(
        "{}",
        json!({
            "model": out,
            "gaussians_before": before.len(),
            "gaussians_after": after.len(),
            "per_level_after": after.counts_per_level(),
        })
    );
    Ok(())
}
