use std::path::{Path, PathBuf};

use clap::Args;
use diffckm::features::{build_feature_stack, knn_interpolate, sample_measurements, GainNormalization};
use diffckm::gridworld::compute_los_map;
use diffckm::regressor::ModelRegistry;
use diffckm::training::{evaluate_nmse, knn_baseline, normalized_truth, rasterize_ckm, train, TrainConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_dir, ManifestBuilder};
use crate::svg::Overlay;
use crate::workspace::{scene_path, write_db_grid, write_heatmap, SceneData};

/// Pseudo-kind that scores KNN interpolation of the samples without training.
pub const KNN_KIND: &str = "knn";
/// Neighbors used for the KNN feature channel and the KNN baseline.
pub const KNN_K: usize = 3;

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Scene file written by `gen`; defaults to the output directory's copy.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Model kind (ckan, cmlp, mlp, kan) or `knn` for the interpolation baseline.
    #[arg(long, default_value = "ckan")]
    pub kind: String,
    /// Fraction of cells sampled as measurements.
    #[arg(long, default_value_t = 0.03)]
    pub ratio: f64,
    /// Seeds measurement sampling, weight initialization and batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Gaussian noise added to each measurement, in dB.
    #[arg(long, default_value_t = 0.0)]
    pub noise_db: f64,
    /// Score held-out cells every this many epochs; 0 scores only the final model.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
}

pub fn run(args: &TrainArgs, out: &Path) -> CliResult<()> {
    let out = ensure_dir(out)?;
    let kind_name = args.kind.as_str();
    let registry = ModelRegistry::default();
    if kind_name != KNN_KIND {
        registry.get(kind_name)?;
    }
    let mut manifest = ManifestBuilder::new("train", &out, args)?;
    manifest.seed("sampling", args.seed);
    if kind_name != KNN_KIND {
        manifest.seed("init", args.seed);
    }

    let data = SceneData::load(&scene_path(&args.scene, &out))?;
    manifest.input(&data.scene_path)?;
    manifest.input(&data.truth_config_path)?;
    let (scene, truth) = (&data.scene, &data.truth);

    let mut ms = sample_measurements(truth, args.ratio, args.seed)?;
    if args.noise_db > 0.0 {
        manifest.seed("noise", args.seed);
        ms = ms.with_noise(args.noise_db, args.seed)?;
    }
    println!("train samples: {}", ms.len());
    let norm = GainNormalization::from_measurements(&ms)?;
    let reference = normalized_truth(truth, &norm);
    let domain = ms.complement();

    let (pred, nmse) = if kind_name == KNN_KIND {
        let pred = manifest.time("knn", || knn_baseline(&ms, KNN_K, &norm))?;
        let nmse = evaluate_nmse(&pred, &reference, &domain)?;
        (pred, nmse)
    } else {
        let kind = registry.get(kind_name)?;
        let los = compute_los_map(scene);
        let knn = knn_interpolate(&ms, KNN_K, (scene.rows(), scene.cols()))?;
        let stack = build_feature_stack(scene, &ms, &los, &knn)?;
        let features_path = out.join("features.grid");
        stack.write(&features_path)?;
        manifest.grid_output(&features_path)?;
        let cfg = TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch,
            learning_rate: args.lr,
            seed: args.seed,
            eval_every: args.eval_every,
        };
        let run = manifest.time("train", || train(kind, scene, &stack, &ms, Some(truth), &cfg))?;
        let loss_path = out.join(format!("loss_{kind_name}.csv"));
        run.write_history_csv(&loss_path)?;
        manifest.output(&loss_path)?;
        let ckpt_path = out.join(format!("model_{kind_name}.ckpt"));
        run.model.save(&ckpt_path)?;
        manifest.output(&ckpt_path)?;
        println!("head parameters: {}, encoder parameters: {}", run.model.head_parameter_count(), run.model.encoder_parameter_count());
        let pred = manifest.time("rasterize", || rasterize_ckm(&run.model, scene))?;
        let nmse = run.final_eval_nmse().ok_or_else(|| CliError::Usage("training recorded no evaluation".into()))?;
        (pred, nmse)
    };

    let pred_db = pred.map(|u| norm.denormalize(*u));
    let grid_path = out.join(format!("prediction_{kind_name}_db.grid"));
    write_db_grid(&grid_path, scene, &pred_db, &format!("{kind_name} predicted channel gain"))?;
    manifest.grid_output(&grid_path)?;
    let svg_path = out.join(format!("prediction_{kind_name}.svg"));
    let overlay = Overlay {
        obstacles: scene.obstacles.clone(),
        title: Some(format!("{kind_name} prediction, eval NMSE {nmse:.4e}")),
        ..Overlay::default()
    };
    write_heatmap(&svg_path, scene, &pred_db, &overlay)?;
    manifest.output(&svg_path)?;
    manifest.finish(&out.join(format!("manifest_train_{kind_name}.json")))?;
    println!("eval NMSE ({kind_name}): {nmse:.6e}");
    Ok(())
}
