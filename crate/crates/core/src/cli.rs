//! Command-line front end. Every command prints a one-line JSON error with a
//! stable code on failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{eval_scene, EvalOptions, EvalReport};
use crate::layout::read_layout_json;
use crate::pipeline::{
    edit_scene, run_full, save_coarse, save_layout, save_refine, BoxSource, ConditionRef, EditRequest, GenerateOptions,
    Models, SceneState,
};
use crate::server::{serve, ServerState};
use crate::stages::StageGeometry;
use crate::synthdata::{build_dataset, Category, Manifest};
use crate::training::{train_coarse, train_layout, train_refine};

#[derive(Debug, Parser)]
#[command(name = "partgen", version, about = "Part-aware 3D generation: data, training, sampling, editing, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Voxels per axis of each part grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Parts per sampling round (and model capacity when training).
    #[arg(long)]
    pub kmax: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct Sampling {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Euler steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Classifier-free guidance scale [config default: 3.5].
    #[arg(long)]
    pub cfg_scale: Option<f64>,
    /// IoU above which sampled layout boxes are suppressed [config default: 0.7].
    #[arg(long)]
    pub nms_iou: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct Training {
    /// Checkpoint directory to write into.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Optimizer steps (overrides the config).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Dataset directory (defaults to the config's data_dir).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural corpus with a manifest.
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of objects (overrides corpus.size).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the box codec and the layout transformer.
    TrainLayout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: Training,
    },
    /// Train the per-part occupancy stage.
    TrainCoarse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: Training,
    },
    /// Train the per-voxel feature stage.
    TrainRefine {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: Training,
    },
    /// Generate a scene directory.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Condition on this synthetic category (unconditional when absent).
        #[arg(long)]
        category: Option<Category>,
        /// Seed of the conditioning object.
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        /// Layout JSON to use instead of sampling a layout.
        #[arg(long, conflicts_with = "gt_boxes")]
        boxes: Option<PathBuf>,
        /// Use the conditioning object's own boxes.
        #[arg(long)]
        gt_boxes: bool,
    },
    /// Apply box edits to a scene, regenerating unfrozen parts.
    Edit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// Scene directory to edit.
        #[arg(long)]
        scene: PathBuf,
        /// JSON edit request `{ops, frozen, seed}`; its seed is replaced by --seed when given.
        #[arg(long)]
        ops: PathBuf,
        /// Output directory (defaults to editing in place).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score scene directories against their conditioning objects.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Scene directories.
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        /// Report JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report global metrics for scenes without ground-truth boxes instead of failing.
        #[arg(long)]
        global_only: bool,
    },
    /// Serve the HTTP job API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Scene store directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let mut c = match &common.config {
        Some(p) => Config::load(p)?,
        None => {
            let mut c = Config::default();
            c.apply_env();
            c
        }
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(g) = common.grid {
        c.grid = g;
    }
    if let Some(k) = common.kmax {
        c.kmax = k;
    }
    c.validate()?;
    Ok(c)
}

fn geometry(c: &Config) -> StageGeometry {
    StageGeometry {
        grid: c.grid,
        patch: c.patch,
        budget: c.token_budget,
    }
}

fn options(c: &Config, s: &Sampling) -> GenerateOptions {
    GenerateOptions {
        steps: s.steps.unwrap_or(c.steps),
        cfg_scale: s.cfg_scale.unwrap_or(c.cfg_scale),
        nms_iou: s.nms_iou.unwrap_or(c.nms_iou),
        validity_iou: c.validity_iou,
        kmax: c.kmax,
    }
}

fn corpus(c: &Config, t: &Training) -> Result<Vec<crate::synthdata::ObjectSample>> {
    let dir = t.data.clone().unwrap_or_else(|| c.data_dir.clone());
    let samples = Manifest::read(&dir)?.samples();
    if samples.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    Ok(samples)
}

fn progress(stage: &'static str, total: usize) -> impl FnMut(usize, f64) {
    let mut acc = 0.0;
    let mut n = 0;
    move |step, loss| {
        acc += loss;
        n += 1;
        if (step + 1) % 100 == 0 || step + 1 == total {
            log::info!("{stage} step {}/{total} loss {:.4}", step + 1, acc / n as f64);
            acc = 0.0;
            n = 0;
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string(v).expect("json value"));
}

fn checkpoint_dir(c: &Config, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| c.checkpoint_dir.clone())
}

/// Loads checkpoints and checks they were trained at the configured grid.
fn load_models(c: &Config, flag: &Option<PathBuf>) -> Result<Models> {
    let models = Models::load(&checkpoint_dir(c, flag))?;
    let g = models.geometry();
    if g.grid != c.grid {
        return Err(Error::InvalidArgument(format!(
            "checkpoints use grid {} but grid = {} was requested",
            g.grid, c.grid
        )));
    }
    Ok(models)
}

fn run_eval(scenes: &[PathBuf], c: &Config, out: Option<&Path>, global_only: bool) -> Result<EvalReport> {
    let opts = EvalOptions {
        points: c.eval_points,
        tau: c.eval_tau,
        seed: c.seed,
    };
    let mut rows = Vec::with_capacity(scenes.len());
    for dir in scenes {
        let scene = SceneState::load(dir)?;
        let gt = scene.condition.sample().ok_or_else(|| {
            Error::InvalidArgument(format!("scene {} has no ground-truth object", scene.scene_id))
        })?;
        if scene.box_source != BoxSource::Given && !global_only {
            return Err(Error::PartCdNotApplicable(format!(
                "scene {} was not generated from ground-truth boxes",
                scene.scene_id
            )));
        }
        rows.push(eval_scene(&scene, &gt, &opts)?);
    }
    let report = EvalReport::new(&c.to_text(), opts, rows)?;
    if let Some(path) = out {
        crate::files::write_atomic(path, &serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(report)
}

/// Runs one command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData { common, out, n } => {
            let c = load_config(&common)?;
            let out = out.unwrap_or_else(|| c.data_dir.clone());
            let m = build_dataset(c.seed, &c.categories, n.unwrap_or(c.corpus_size), c.grid, &out)?;
            print_json(&serde_json::json!({"dataset": out, "samples": m.samples.len()}));
        }
        Command::TrainLayout { common, train } => {
            let mut c = load_config(&common)?;
            if let Some(s) = train.steps {
                c.layout.train_steps = s;
            }
            let samples = corpus(&c, &train)?;
            let (model, losses) = train_layout(
                &samples,
                &c.layout,
                c.codec_steps,
                c.kmax,
                c.seed,
                progress("layout", c.layout.train_steps),
            )?;
            let path = checkpoint_dir(&c, &train.checkpoint).join(crate::pipeline::LAYOUT_CHECKPOINT);
            save_layout(&model, &path)?;
            print_json(&serde_json::json!({"checkpoint": path, "final_loss": losses.last()}));
        }
        Command::TrainCoarse { common, train } => {
            let mut c = load_config(&common)?;
            if let Some(s) = train.steps {
                c.coarse.train_steps = s;
            }
            let samples = corpus(&c, &train)?;
            let (model, losses) = train_coarse(
                &samples,
                &c.coarse,
                geometry(&c),
                c.kmax,
                c.augment_prob,
                c.seed,
                progress("coarse", c.coarse.train_steps),
            )?;
            let path = checkpoint_dir(&c, &train.checkpoint).join(crate::pipeline::COARSE_CHECKPOINT);
            save_coarse(&model, &path)?;
            print_json(&serde_json::json!({"checkpoint": path, "final_loss": losses.last()}));
        }
        Command::TrainRefine { common, train } => {
            let mut c = load_config(&common)?;
            if let Some(s) = train.steps {
                c.refine.train_steps = s;
            }
            let samples = corpus(&c, &train)?;
            let (model, losses) = train_refine(
                &samples,
                &c.refine,
                geometry(&c),
                c.kmax,
                c.seed,
                progress("refine", c.refine.train_steps),
            )?;
            let path = checkpoint_dir(&c, &train.checkpoint).join(crate::pipeline::REFINE_CHECKPOINT);
            save_refine(&model, &path)?;
            print_json(&serde_json::json!({"checkpoint": path, "final_loss": losses.last()}));
        }
        Command::Generate {
            common,
            sampling,
            out,
            category,
            sample_seed,
            boxes,
            gt_boxes,
        } => {
            let c = load_config(&common)?;
            let models = load_models(&c, &sampling.checkpoint)?;
            let condition = match category {
                Some(category) => ConditionRef::Sample {
                    category,
                    seed: sample_seed,
                },
                None => ConditionRef::Unconditional,
            };
            let given = match (boxes, gt_boxes) {
                (Some(path), _) => Some(
                    read_layout_json(&path)?
                        .iter()
                        .map(|b| b.aabb())
                        .collect::<Result<Vec<_>>>()?,
                ),
                (None, true) => Some(
                    condition
                        .sample()
                        .ok_or_else(|| Error::InvalidArgument("--gt-boxes needs --category".into()))?
                        .boxes(),
                ),
                (None, false) => None,
            };
            let scene = run_full(&models, &condition, given.as_deref(), c.seed, &options(&c, &sampling))?;
            let dir = out.unwrap_or_else(|| c.scene_dir.join(&scene.scene_id));
            scene.save(&dir)?;
            print_json(&serde_json::json!({"scene": dir, "scene_id": scene.scene_id, "parts": scene.parts.len()}));
        }
        Command::Edit {
            common,
            sampling,
            scene,
            ops,
            out,
        } => {
            let c = load_config(&common)?;
            let models = load_models(&c, &sampling.checkpoint)?;
            let state = SceneState::load(&scene)?;
            let bytes = std::fs::read(&ops).map_err(|e| Error::io(&ops, e))?;
            let mut req: EditRequest = serde_json::from_slice(&bytes)?;
            if let Some(s) = common.seed {
                req.seed = s;
            }
            let next = edit_scene(&models, &state, &req)?;
            let dir = out.unwrap_or(scene);
            next.save(&dir)?;
            print_json(&serde_json::json!({"scene": dir, "revision": next.revision, "parts": next.parts.len()}));
        }
        Command::Eval {
            common,
            scenes,
            out,
            global_only,
        } => {
            let c = load_config(&common)?;
            let report = run_eval(&scenes, &c, out.as_deref(), global_only)?;
            print!("{}", report.table());
        }
        Command::Serve {
            common,
            checkpoint,
            out,
            addr,
        } => {
            let c = load_config(&common)?;
            let models = load_models(&c, &checkpoint)?;
            let store = out.unwrap_or_else(|| c.scene_dir.clone());
            std::fs::create_dir_all(&store).map_err(|e| Error::io(&store, e))?;
            let opts = GenerateOptions {
                steps: c.steps,
                cfg_scale: c.cfg_scale,
                nms_iou: c.nms_iou,
                validity_iou: c.validity_iou,
                kmax: c.kmax,
            };
            let state = ServerState::new(models, store, opts, c.server_workers);
            let addr = addr.unwrap_or(c.server_addr);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(serve(&addr, state))?;
        }
    }
    Ok(())
}

/// Parses arguments, runs, and maps failures to a JSON error line and exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.code(), "message": e.to_string()}));
            1
        }
    }
}
