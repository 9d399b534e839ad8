//! End-to-end segmentation: per-frame cue extraction and encoding,
//! adaptive initialization with ID tracking, and one refinement pass over
//! the whole sequence.

use std::path::Path;

use image::RgbImage;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EnergyModel, RunConfig};
use crate::descriptors::{node_histograms, weighted_node_histograms, DescriptorContext, NodeHistogram};
use crate::error::{Error, Result};
use crate::flow::MotionRasters;
use crate::grid::{Grid, Mask};
use crate::initialization::{
    collect_initial_labels, detect_occlusion_episodes, initialize_frame, track_ids, OcclusionEpisode,
};
use crate::media_io::FrameSequence;
use crate::proposals::{accumulate, Space};
use crate::refine::{
    assemble_graph, frame_masks, initial_node_labels, node_means, refine_labels, FrameNodes, GraphSettings,
};
use crate::registry::{
    encoders, flow_sources, proposal_sources, saliency_providers, FrameCues, Likelihood, LikelihoodEncoder,
    ProposalSource, StrategyArgs,
};
use crate::saliency::SaliencySource;
use crate::superpixels::{
    slic_segment, spatial_neighbors, temporal_neighbors, temporal_neighbors_warped, Adjacency, SuperpixelMap,
};
use crate::trimap::{block_level_map, build_trimap, Trimap};

/// Optional external inputs; absent ones engage the built-in fallbacks.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExternalInputs<'a> {
    pub flow: Option<&'a Path>,
    pub proposals: Option<&'a Path>,
    pub saliency: Option<&'a Path>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyNames {
    pub flow: String,
    pub proposals: String,
    pub saliency: String,
    pub encoder: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTrace {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub nodes: usize,
    pub spatial_edges: usize,
    pub temporal_edges: usize,
    pub kept_initial: bool,
    pub no_foreground_evidence: bool,
    pub histogram_unary_dropped: bool,
}

/// Everything computed for one frame before refinement.
pub struct FrameStage {
    pub superpixels: SuperpixelMap,
    pub adjacency: Adjacency,
    pub likelihood: Likelihood,
    pub trimap: Trimap,
    pub histograms: Vec<NodeHistogram>,
    pub raw_histograms: Vec<NodeHistogram>,
    pub initial: Mask,
    pub threshold: f64,
}

pub struct Segmentation {
    pub masks: Vec<Mask>,
    pub frames: Vec<FrameStage>,
    pub blob_counts: Vec<usize>,
    pub episodes: Vec<OcclusionEpisode>,
    pub ids: Vec<Grid<u32>>,
    pub trace: EnergyTrace,
    pub strategies: StrategyNames,
    pub energy: EnergyModel,
    pub terms: Vec<&'static str>,
}

fn pick(explicit: &Option<String>, given: bool, with_input: &str, without: &str) -> String {
    match explicit {
        Some(n) => n.clone(),
        None if given => with_input.to_string(),
        None => without.to_string(),
    }
}

pub fn strategy_names(cfg: &RunConfig, inputs: &ExternalInputs) -> StrategyNames {
    StrategyNames {
        flow: pick(&cfg.flow_method, inputs.flow.is_some(), "flo-files", "block-matching"),
        proposals: pick(&cfg.proposal_method, inputs.proposals.is_some(), "mask-files", "superpixel-merge"),
        saliency: pick(&cfg.saliency_method, inputs.saliency.is_some(), "png-files", "manifold-ranking"),
        encoder: cfg.encoder.clone(),
    }
}

#[allow(clippy::too_many_arguments)]
fn frame_stage(
    index: usize,
    image: &RgbImage,
    motion: &MotionRasters,
    cfg: &RunConfig,
    energy: &EnergyModel,
    proposals: &dyn ProposalSource,
    saliency: &dyn crate::registry::SaliencyProvider,
    encoder: &dyn LikelihoodEncoder,
    descriptors: &DescriptorContext,
) -> Result<FrameStage> {
    let sp = slic_segment(image, cfg.slic_regionsize, cfg.slic_regularizer)?;
    let sp_c = slic_segment(&motion.color, cfg.slic_regionsize, cfg.slic_regularizer)?;
    let adjacency = spatial_neighbors(&sp);

    let mut set_c = proposals.proposals(index, &motion.color, &sp_c)?;
    let mut set_rgb = proposals.proposals(index, image, &sp)?;
    if let Some(k) = cfg.proposal_top_k {
        set_c = set_c.top_k(k, &motion.gradient, &motion.intensity)?;
        set_rgb = set_rgb.top_k(k, &motion.dilated_gradient, &motion.intensity)?;
    }
    let strengths_c = accumulate(&set_c, &motion.gradient, &motion.intensity, cfg.accumulation_mode, Space::C)?;
    let strengths_rgb = accumulate(
        &set_rgb,
        &motion.dilated_gradient,
        &motion.intensity,
        cfg.accumulation_mode,
        Space::Rgb,
    )?;
    let saliency_c = saliency.saliency(index, &motion.color, &sp_c, SaliencySource::C)?;
    let saliency_rgb = saliency.saliency(index, image, &sp, SaliencySource::Rgb)?;
    let levels = block_level_map(&saliency_c.values, &cfg.trimap_grids);
    let trimap = build_trimap(&levels, cfg.theta1, cfg.theta2)?;
    let likelihood = encoder.encode(
        &FrameCues {
            strengths_c: &strengths_c,
            strengths_rgb: &strengths_rgb,
            saliency_c: &saliency_c,
            saliency_rgb: &saliency_rgb,
            trimap: &trimap,
            intensity: &motion.intensity,
        },
        cfg,
    )?;
    let (histograms, raw_histograms) = if *energy == EnergyModel::Full {
        let raw = node_histograms(image, &sp, descriptors)?;
        (weighted_node_histograms(&raw, &sp, &adjacency, cfg.knn_weighting_k)?, raw)
    } else {
        (Vec::new(), Vec::new())
    };
    let (initial, threshold, _) = initialize_frame(&likelihood.m, cfg.min_blob_area_fraction);
    Ok(FrameStage {
        superpixels: sp,
        adjacency,
        likelihood,
        trimap,
        histograms,
        raw_histograms,
        initial,
        threshold,
    })
}

/// Runs the full pipeline on `threads` worker threads. Every parallel
/// stage collects in frame order, so the output does not depend on the
/// thread count.
pub fn segment_sequence(seq: &FrameSequence, inputs: &ExternalInputs, cfg: &RunConfig, threads: usize) -> Result<Segmentation> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| segment_in_pool(seq, inputs, cfg))
}

fn segment_in_pool(seq: &FrameSequence, inputs: &ExternalInputs, cfg: &RunConfig) -> Result<Segmentation> {
    let names = strategy_names(cfg, inputs);
    let flow_src = flow_sources().create(&names.flow, &StrategyArgs { dir: inputs.flow, config: cfg })?;
    let prop_src = proposal_sources().create(&names.proposals, &StrategyArgs { dir: inputs.proposals, config: cfg })?;
    let sal_src = saliency_providers().create(&names.saliency, &StrategyArgs { dir: inputs.saliency, config: cfg })?;
    let encoder = encoders().create(&names.encoder, &StrategyArgs { dir: None, config: cfg })?;
    let energy = encoder.energy(cfg);
    info!(
        "segmenting {} ({} frames) with flow={}, proposals={}, saliency={}, encoder={}",
        seq.name,
        seq.len(),
        names.flow,
        names.proposals,
        names.saliency,
        names.encoder
    );

    let flows = flow_src.flows(seq)?;
    if flows.len() != seq.len() {
        return Err(Error::Invariant(format!("{} flow fields for {} frames", flows.len(), seq.len())));
    }
    let descriptors = DescriptorContext::fallback(
        cfg.bow_sift_dims,
        cfg.bow_rgb_dims,
        cfg.color_bins_per_channel,
        cfg.descriptor_stride,
    );
    let frames: Vec<FrameStage> = (0..seq.len())
        .into_par_iter()
        .map(|i| {
            let motion = MotionRasters::from_flow(&flows[i], cfg.dilation_radius);
            frame_stage(
                i,
                &seq.frames[i],
                &motion,
                cfg,
                &energy,
                prop_src.as_ref(),
                sal_src.as_ref(),
                encoder.as_ref(),
                &descriptors,
            )
        })
        .collect::<Result<_>>()?;

    let labels = collect_initial_labels(
        frames
            .iter()
            .map(|f| {
                let c = crate::components::label_components8(&f.initial);
                (f.initial.clone(), f.threshold, c)
            })
            .collect(),
    );
    let episodes = detect_occlusion_episodes(&labels.blob_count);
    let candidates: Vec<Vec<Mask>> = (0..seq.len())
        .into_par_iter()
        .map(|i| match episodes.iter().find(|e| e.contains(i)) {
            Some(e) => prop_src.split_candidates(i, &seq.frames[i], &frames[i].superpixels, &labels.x[i], e.n_before),
            None => Ok(Vec::new()),
        })
        .collect::<Result<_>>()?;
    let ids = track_ids(&seq.frames, &labels, &episodes, &candidates)?;

    let links = (0..seq.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let (a, b) = (&frames[i].superpixels, &frames[i + 1].superpixels);
            if cfg.temporal_warp {
                temporal_neighbors_warped(a, b, &flows[i])
            } else {
                temporal_neighbors(a, b)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let nodes: Vec<FrameNodes> = frames
        .iter()
        .map(|f| FrameNodes {
            sp: &f.superpixels,
            adj: &f.adjacency,
            hists: &f.histograms,
            raw_hists: &f.raw_histograms,
            likelihood: node_means(&f.likelihood.m, &f.superpixels),
        })
        .collect();
    let init: Vec<Vec<u8>> = frames
        .iter()
        .map(|f| initial_node_labels(&f.initial, &f.superpixels))
        .collect();
    let settings = GraphSettings {
        model: energy.clone(),
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        clamp_eps: cfg.clamp_eps,
        per_frame_models: cfg.per_frame_models,
    };
    let assembled = assemble_graph(&nodes, &links, &init, &settings)?;
    let flat_init: Vec<u8> = init.concat();
    let refined = refine_labels(&assembled.graph, &flat_init)?;
    if refined.final_energy > refined.initial_energy {
        return Err(Error::Invariant("refinement increased the energy".into()));
    }
    let sps: Vec<&SuperpixelMap> = frames.iter().map(|f| &f.superpixels).collect();
    let masks = frame_masks(&refined.labels, &sps, &assembled.offsets);
    let trace = EnergyTrace {
        initial_energy: refined.initial_energy,
        final_energy: refined.final_energy,
        nodes: assembled.graph.len(),
        spatial_edges: assembled.graph.spatial.len(),
        temporal_edges: assembled.graph.temporal.len(),
        kept_initial: refined.kept_initial,
        no_foreground_evidence: refined.no_foreground_evidence,
        histogram_unary_dropped: assembled.histogram_unary_dropped,
    };
    let terms = encoder.terms(cfg);
    Ok(Segmentation {
        masks,
        frames,
        blob_counts: labels.blob_count,
        episodes,
        ids,
        trace,
        strategies: names,
        energy,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::moving_square;

    #[test]
    fn strategy_defaults_follow_inputs() {
        let cfg = RunConfig::default();
        let none = strategy_names(&cfg, &ExternalInputs::default());
        assert_eq!(none.flow, "block-matching");
        assert_eq!(none.proposals, "superpixel-merge");
        let dir = Path::new("x");
        let given = strategy_names(
            &cfg,
            &ExternalInputs {
                flow: Some(dir),
                proposals: Some(dir),
                saliency: Some(dir),
            },
        );
        assert_eq!((given.flow.as_str(), given.saliency.as_str()), ("flo-files", "png-files"));
    }

    #[test]
    fn small_sequence_runs() {
        let seq = moving_square(4, 64, 48);
        let s = segment_sequence(&seq, &ExternalInputs::default(), &RunConfig::default(), 1).unwrap();
        assert_eq!(s.masks.len(), 4);
        assert!(s.trace.final_energy <= s.trace.initial_energy);
        assert_eq!(s.ids.len(), 4);
    }
}
