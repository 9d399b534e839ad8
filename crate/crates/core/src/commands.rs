//! The four command-line operations, callable without a process boundary.

use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::initialization::OcclusionEpisode;
use crate::media_io::{
    ensure_dir, list_matching, load_frames_any, overlay_contour, read_mask, write_labels_png, write_mask, write_unit_png,
    FrameSequence,
};
use crate::metrics::EvalReport;
use crate::pipeline::{segment_sequence, strategy_names, EnergyTrace, ExternalInputs, Segmentation, StrategyNames};

/// Optional intermediate artefacts written next to the masks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dumps {
    pub ice: bool,
    pub trimap: bool,
    pub superpixels: bool,
    pub overlay: bool,
    pub ids: bool,
}

/// Input directories shared by every command.
#[derive(Debug, Clone, Default)]
pub struct InputDirs {
    pub frames: PathBuf,
    pub flow: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub saliency: Option<PathBuf>,
}

impl InputDirs {
    pub fn external(&self) -> ExternalInputs<'_> {
        ExternalInputs {
            flow: self.flow.as_deref(),
            proposals: self.proposals.as_deref(),
            saliency: self.saliency.as_deref(),
        }
    }

    fn validate(&self) -> Result<()> {
        for dir in [&self.flow, &self.proposals, &self.saliency].into_iter().flatten() {
            if !dir.is_dir() {
                return Err(Error::io(
                    dir,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input directory does not exist"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SegmentArgs {
    pub inputs: InputDirs,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub threads: usize,
    pub se_mode: bool,
    pub dumps: Dumps,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub sequence: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub masks: Vec<String>,
    pub strategies: StrategyNames,
    pub terms: Vec<&'static str>,
    pub blob_counts: Vec<usize>,
    pub episodes: Vec<OcclusionEpisode>,
    pub config: RunConfig,
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Grey-scale masks in `dir`, in filename order.
pub fn load_masks(dir: &Path) -> Result<Vec<Mask>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "mask directory does not exist"),
        ));
    }
    list_matching(dir, "*.png")?.iter().map(|p| read_mask(p)).collect()
}

/// Writes masks, manifest, energy trace and any requested dumps.
pub fn write_segmentation(seq: &FrameSequence, seg: &Segmentation, cfg: &RunConfig, out: &Path, dumps: Dumps) -> Result<Manifest> {
    let masks_dir = out.join("masks");
    ensure_dir(&masks_dir)?;
    let mut names = Vec::with_capacity(seq.len());
    for (name, mask) in seq.frame_names.iter().zip(&seg.masks) {
        let file = format!("{name}.png");
        write_mask(mask, &masks_dir.join(&file))?;
        names.push(format!("masks/{file}"));
    }
    let sub = |name: &str| -> Result<PathBuf> {
        let d = out.join(name);
        ensure_dir(&d)?;
        Ok(d)
    };
    if dumps.ice {
        let d = sub("ice")?;
        for (name, f) in seq.frame_names.iter().zip(&seg.frames) {
            write_unit_png(&f.likelihood.m, &d.join(format!("{name}_m.png")))?;
            write_unit_png(&f.likelihood.motion, &d.join(format!("{name}_mc.png")))?;
            write_unit_png(&f.likelihood.appearance, &d.join(format!("{name}_mrgb.png")))?;
        }
    }
    if dumps.trimap {
        let d = sub("trimap")?;
        for (name, f) in seq.frame_names.iter().zip(&seg.frames) {
            write_unit_png(&f.trimap.values, &d.join(format!("{name}.png")))?;
        }
    }
    if dumps.superpixels {
        let d = sub("superpixels")?;
        for (name, f) in seq.frame_names.iter().zip(&seg.frames) {
            write_labels_png(&f.superpixels.labels, &d.join(format!("{name}.png")))?;
        }
    }
    if dumps.overlay {
        let d = sub("overlay")?;
        for ((name, frame), mask) in seq.frame_names.iter().zip(&seq.frames).zip(&seg.masks) {
            let path = d.join(format!("{name}.png"));
            overlay_contour(frame, mask)
                .save(&path)
                .map_err(|e| Error::Decode {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
        }
    }
    if dumps.ids {
        let d = sub("ids")?;
        for (name, ids) in seq.frame_names.iter().zip(&seg.ids) {
            write_labels_png(ids, &d.join(format!("{name}.png")))?;
        }
    }
    let (width, height) = seq.dims();
    let manifest = Manifest {
        sequence: seq.name.clone(),
        frames: seq.len(),
        width,
        height,
        masks: names,
        strategies: seg.strategies.clone(),
        terms: seg.terms.clone(),
        blob_counts: seg.blob_counts.clone(),
        episodes: seg.episodes.clone(),
        config: cfg.clone(),
    };
    write_json(&manifest, &out.join("manifest.json"))?;
    write_json(&seg.trace, &out.join("energy_trace.json"))?;
    Ok(manifest)
}

fn effective_config(path: Option<&Path>, se_mode: bool) -> Result<RunConfig> {
    let mut cfg = load_config(path)?;
    if se_mode {
        cfg.encoder = "se".into();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<(Manifest, EnergyTrace)> {
    let cfg = effective_config(args.config.as_deref(), args.se_mode)?;
    args.inputs.validate()?;
    let seq = load_frames_any(&args.inputs.frames)?;
    let seg = segment_sequence(&seq, &args.inputs.external(), &cfg, args.threads)?;
    ensure_dir(&args.out)?;
    let manifest = write_segmentation(&seq, &seg, &cfg, &args.out, args.dumps)?;
    info!("wrote {} masks to {}", seq.len(), args.out.display());
    Ok((manifest, seg.trace))
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub masks: PathBuf,
    pub gt: PathBuf,
    /// Report path; defaults to `report.json` inside the mask directory's parent.
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    let fg = load_masks(&args.masks)?;
    let gt = load_masks(&args.gt)?;
    let name = args
        .gt
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let config = serde_json::json!({
        "masks": args.masks,
        "gt": args.gt,
    });
    let report = EvalReport::evaluate(&name, &fg, &gt, config)?;
    let out = args.out.clone().unwrap_or_else(|| {
        args.masks
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("report.json")
    });
    report.write_json(&out)?;
    if let Some(csv) = &args.csv {
        report.write_csv(csv)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub ice: EvalReport,
    pub se: EvalReport,
}

fn config_echo(cfg: &RunConfig, seg: &Segmentation) -> serde_json::Value {
    serde_json::json!({
        "encoder": seg.strategies.encoder,
        "energy": seg.energy,
        "terms": seg.terms,
        "strategies": seg.strategies,
        "run": cfg,
    })
}

/// Runs the pipeline with the configured encoder forced to ICE and again
/// with the separate-encoding baseline, scoring both against ground truth.
pub fn run_se_ablation(seq: &FrameSequence, inputs: &ExternalInputs, cfg: &RunConfig, threads: usize) -> Result<AblationReport> {
    let gt = seq
        .gt_masks
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("ablation needs ground-truth masks".into()))?;
    let run = |encoder: &str| -> Result<EvalReport> {
        let mut c = cfg.clone();
        c.encoder = encoder.into();
        let seg = segment_sequence(seq, inputs, &c, threads)?;
        EvalReport::evaluate(&seq.name, &seg.masks, gt, config_echo(&c, &seg))
    };
    Ok(AblationReport {
        ice: run("ice")?,
        se: run("se")?,
    })
}

#[derive(Debug, Clone, Default)]
pub struct AblateArgs {
    pub inputs: InputDirs,
    pub gt: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub threads: usize,
    pub csv: bool,
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<AblationReport> {
    let cfg = effective_config(args.config.as_deref(), false)?;
    args.inputs.validate()?;
    let seq = load_frames_any(&args.inputs.frames)?.with_ground_truth(load_masks(&args.gt)?)?;
    let report = run_se_ablation(&seq, &args.inputs.external(), &cfg, args.threads)?;
    ensure_dir(&args.out)?;
    report.ice.write_json(&args.out.join("report_ice.json"))?;
    report.se.write_json(&args.out.join("report_se.json"))?;
    if args.csv {
        report.ice.write_csv(&args.out.join("errors_ice.csv"))?;
        report.se.write_csv(&args.out.join("errors_se.csv"))?;
    }
    write_json(&report, &args.out.join("ablation.json"))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Inspection {
    pub sequence: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub frame_names: Vec<String>,
    pub strategies: StrategyNames,
    pub terms: Vec<&'static str>,
    pub config: RunConfig,
}

/// Describes what `segment` would run on these inputs without running it.
pub fn cmd_inspect(inputs: &InputDirs, config: Option<&Path>, se_mode: bool) -> Result<Inspection> {
    let cfg = effective_config(config, se_mode)?;
    inputs.validate()?;
    let seq = load_frames_any(&inputs.frames)?;
    let strategies = strategy_names(&cfg, &inputs.external());
    let encoder = crate::registry::encoders().create(
        &strategies.encoder,
        &crate::registry::StrategyArgs {
            dir: None,
            config: &cfg,
        },
    )?;
    let (width, height) = seq.dims();
    Ok(Inspection {
        sequence: seq.name.clone(),
        frames: seq.len(),
        width,
        height,
        frame_names: seq.frame_names.clone(),
        strategies,
        terms: encoder.terms(&cfg),
        config: cfg,
    })
}
