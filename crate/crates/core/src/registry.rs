//! Named, runtime-selectable strategies for the external cues: optical
//! flow, object proposals, saliency and the likelihood encoder.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;

use crate::config::{EnergyModel, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{estimate_flow_fallback, FlowField};
use crate::grid::{Mask, ScalarMap};
use crate::ice::{appearance_constrained_motion, fuse_ice, motion_constrained_appearance};
use crate::initialization::split_region;
use crate::media_io::{list_matching, load_proposals, read_flo, read_unit_png, FrameSequence};
use crate::proposals::{generate_fallback_proposals, AccumulatedStrengths, ProposalSet};
use crate::saliency::{superpixel_saliency, SaliencyMap, SaliencySource};
use crate::superpixels::SuperpixelMap;
use crate::trimap::Trimap;

pub trait FlowSource: Send + Sync {
    fn name(&self) -> &'static str;

    /// One field per frame. The last frame has no successor and gets the
    /// negated flow back to its predecessor.
    fn flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>>;
}

pub trait ProposalSource: Send + Sync {
    fn name(&self) -> &'static str;

    /// Proposals for frame `frame`, computed on `image` (the frame itself or
    /// its flow rendering) with its superpixels.
    fn proposals(&self, frame: usize, image: &RgbImage, sp: &SuperpixelMap) -> Result<ProposalSet>;

    /// Candidate object regions for splitting `region` into `n` objects.
    fn split_candidates(&self, frame: usize, image: &RgbImage, sp: &SuperpixelMap, region: &Mask, n: usize) -> Result<Vec<Mask>>;
}

pub trait SaliencyProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn saliency(&self, frame: usize, image: &RgbImage, sp: &SuperpixelMap, source: SaliencySource) -> Result<SaliencyMap>;
}

/// All per-frame cues an encoder may draw on.
pub struct FrameCues<'a> {
    pub strengths_c: &'a AccumulatedStrengths,
    pub strengths_rgb: &'a AccumulatedStrengths,
    pub saliency_c: &'a SaliencyMap,
    pub saliency_rgb: &'a SaliencyMap,
    pub trimap: &'a Trimap,
    pub intensity: &'a ScalarMap,
}

/// A per-pixel foreground likelihood in `[0, 1]` and its two halves.
#[derive(Debug, Clone, PartialEq)]
pub struct Likelihood {
    pub m: ScalarMap,
    pub motion: ScalarMap,
    pub appearance: ScalarMap,
}

pub trait LikelihoodEncoder: Send + Sync {
    fn name(&self) -> &'static str;

    fn encode(&self, cues: &FrameCues, cfg: &RunConfig) -> Result<Likelihood>;

    /// The refinement energy this encoder runs with.
    fn energy(&self, cfg: &RunConfig) -> EnergyModel;

    /// Names of the terms that enter the likelihood and the energy.
    fn terms(&self, cfg: &RunConfig) -> Vec<&'static str>;
}

/// Inputs available when instantiating a strategy.
#[derive(Debug, Clone, Copy)]
pub struct StrategyArgs<'a> {
    pub dir: Option<&'a Path>,
    pub config: &'a RunConfig,
}

type Factory<T> = Box<dyn Fn(&StrategyArgs) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: impl Fn(&StrategyArgs) -> Result<Box<T>> + Send + Sync + 'static) {
        self.entries.insert(name, Box::new(factory));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn create(&self, name: &str, args: &StrategyArgs) -> Result<Box<T>> {
        let f = self.entries.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        f(args)
    }
}

fn require_dir(kind: &str, args: &StrategyArgs) -> Result<PathBuf> {
    args.dir
        .map(Path::to_path_buf)
        .ok_or_else(|| Error::InvalidConfig(format!("{kind} strategy needs an input directory")))
}

pub struct FloFiles {
    dir: PathBuf,
}

impl FlowSource for FloFiles {
    fn name(&self) -> &'static str {
        "flo-files"
    }

    /// Reads `*.flo` in filename order. With one file fewer than frames the
    /// last field is reused for the final frame.
    fn flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>> {
        let files = list_matching(&self.dir, "*.flo")?;
        let k = seq.len();
        if files.len() + 1 < k {
            return Err(Error::InvalidConfig(format!(
                "{}: {} .flo files for {k} frames",
                self.dir.display(),
                files.len()
            )));
        }
        let mut out = files[..k.min(files.len())]
            .par_iter()
            .map(|p| {
                let f = read_flo(p)?;
                if f.dims() != seq.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: seq.dims(),
                        found: f.dims(),
                    });
                }
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        if out.len() < k {
            let last = out.last().cloned().ok_or(Error::EmptyInput)?;
            out.push(last);
        }
        Ok(out)
    }
}

pub struct BlockMatching;

impl FlowSource for BlockMatching {
    fn name(&self) -> &'static str {
        "block-matching"
    }

    fn flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>> {
        let k = seq.len();
        (0..k)
            .into_par_iter()
            .map(|i| {
                if i + 1 < k {
                    estimate_flow_fallback(&seq.frames[i], &seq.frames[i + 1])
                } else {
                    Ok(estimate_flow_fallback(&seq.frames[i], &seq.frames[i - 1])?.negated())
                }
            })
            .collect()
    }
}

pub struct SuperpixelMerge {
    groups: usize,
}

impl ProposalSource for SuperpixelMerge {
    fn name(&self) -> &'static str {
        "superpixel-merge"
    }

    fn proposals(&self, _frame: usize, image: &RgbImage, sp: &SuperpixelMap) -> Result<ProposalSet> {
        generate_fallback_proposals(image, sp, self.groups)
    }

    fn split_candidates(&self, _frame: usize, image: &RgbImage, sp: &SuperpixelMap, region: &Mask, n: usize) -> Result<Vec<Mask>> {
        split_region(image, sp, region, n)
    }
}

/// Masks from `dir/<frame:05>/*.png`; frames without files fall back to
/// superpixel merging.
pub struct MaskFiles {
    dir: PathBuf,
    fallback: SuperpixelMerge,
}

impl ProposalSource for MaskFiles {
    fn name(&self) -> &'static str {
        "mask-files"
    }

    fn proposals(&self, frame: usize, image: &RgbImage, sp: &SuperpixelMap) -> Result<ProposalSet> {
        let set = load_proposals(&self.dir, frame, sp.dims())?;
        if set.is_empty() {
            return self.fallback.proposals(frame, image, sp);
        }
        Ok(set)
    }

    fn split_candidates(&self, frame: usize, image: &RgbImage, sp: &SuperpixelMap, region: &Mask, n: usize) -> Result<Vec<Mask>> {
        let set = load_proposals(&self.dir, frame, sp.dims())?;
        if set.is_empty() {
            return self.fallback.split_candidates(frame, image, sp, region, n);
        }
        Ok(set.proposals.iter().map(|p| p.mask().clone()).collect())
    }
}

pub struct ManifoldRanking;

impl SaliencyProvider for ManifoldRanking {
    fn name(&self) -> &'static str {
        "manifold-ranking"
    }

    fn saliency(&self, _frame: usize, image: &RgbImage, sp: &SuperpixelMap, source: SaliencySource) -> Result<SaliencyMap> {
        superpixel_saliency(image, sp, source)
    }
}

/// Grey-scale maps from `dir/rgb/<frame:05>.png` and `dir/c/<frame:05>.png`;
/// missing files fall back to manifold ranking.
pub struct PngSaliency {
    dir: PathBuf,
}

impl SaliencyProvider for PngSaliency {
    fn name(&self) -> &'static str {
        "png-files"
    }

    fn saliency(&self, frame: usize, image: &RgbImage, sp: &SuperpixelMap, source: SaliencySource) -> Result<SaliencyMap> {
        let sub = match source {
            SaliencySource::Rgb => "rgb",
            SaliencySource::C => "c",
        };
        let path = self.dir.join(sub).join(format!("{frame:05}.png"));
        if !path.is_file() {
            return ManifoldRanking.saliency(frame, image, sp, source);
        }
        let values = read_unit_png(&path)?;
        if values.dims() != sp.dims() {
            return Err(Error::DimensionMismatch {
                expected: sp.dims(),
                found: values.dims(),
            });
        }
        Ok(SaliencyMap { values, source })
    }
}

/// Motion and appearance each encoded under constraints from the other.
pub struct IceEncoder;

impl LikelihoodEncoder for IceEncoder {
    fn name(&self) -> &'static str {
        "ice"
    }

    fn encode(&self, cues: &FrameCues, cfg: &RunConfig) -> Result<Likelihood> {
        let m_c = appearance_constrained_motion(cues.strengths_c, cues.saliency_c, cues.trimap, cfg.alpha, cfg.beta)?;
        let m_rgb = motion_constrained_appearance(cues.strengths_rgb, cues.saliency_rgb, cfg.alpha)?;
        let ice = fuse_ice(&m_c, &m_rgb)?;
        Ok(Likelihood {
            m: ice.m,
            motion: ice.m_c,
            appearance: ice.m_rgb,
        })
    }

    fn energy(&self, cfg: &RunConfig) -> EnergyModel {
        cfg.energy.clone()
    }

    fn terms(&self, cfg: &RunConfig) -> Vec<&'static str> {
        let mut t = vec![
            "proposal_boundary_strength",
            "proposal_intensity_strength",
            "saliency_rgb",
            "saliency_c",
            "trimap",
            "unary_likelihood",
        ];
        if cfg.energy == EnergyModel::Full {
            t.extend(["unary_histogram", "pairwise_histogram", "pairwise_connectivity"]);
        } else {
            t.push("pairwise_value_difference");
        }
        t
    }
}

/// Flow magnitude and frame saliency, each min-max normalised and averaged.
pub struct SeparateEncoder;

impl LikelihoodEncoder for SeparateEncoder {
    fn name(&self) -> &'static str {
        "se"
    }

    fn encode(&self, cues: &FrameCues, _cfg: &RunConfig) -> Result<Likelihood> {
        let motion = cues.intensity.normalized(0.0);
        let appearance = cues.saliency_rgb.values.normalized(0.0);
        let m = motion.zip_map(&appearance, |a, b| 0.5 * (a + b))?;
        Ok(Likelihood { m, motion, appearance })
    }

    fn energy(&self, _cfg: &RunConfig) -> EnergyModel {
        EnergyModel::Simplified
    }

    fn terms(&self, _cfg: &RunConfig) -> Vec<&'static str> {
        vec!["flow_intensity", "saliency_rgb", "unary_likelihood", "pairwise_value_difference"]
    }
}

pub fn flow_sources() -> Registry<dyn FlowSource> {
    let mut r: Registry<dyn FlowSource> = Registry::new("flow");
    r.register("flo-files", |a| Ok(Box::new(FloFiles { dir: require_dir("flo-files", a)? })));
    r.register("block-matching", |_| Ok(Box::new(BlockMatching)));
    r
}

pub fn proposal_sources() -> Registry<dyn ProposalSource> {
    let mut r: Registry<dyn ProposalSource> = Registry::new("proposal");
    r.register("mask-files", |a| {
        Ok(Box::new(MaskFiles {
            dir: require_dir("mask-files", a)?,
            fallback: SuperpixelMerge {
                groups: a.config.proposal_groups,
            },
        }))
    });
    r.register("superpixel-merge", |a| {
        Ok(Box::new(SuperpixelMerge {
            groups: a.config.proposal_groups,
        }))
    });
    r
}

pub fn saliency_providers() -> Registry<dyn SaliencyProvider> {
    let mut r: Registry<dyn SaliencyProvider> = Registry::new("saliency");
    r.register("png-files", |a| Ok(Box::new(PngSaliency { dir: require_dir("png-files", a)? })));
    r.register("manifold-ranking", |_| Ok(Box::new(ManifoldRanking)));
    r
}

pub fn encoders() -> Registry<dyn LikelihoodEncoder> {
    let mut r: Registry<dyn LikelihoodEncoder> = Registry::new("encoder");
    r.register("ice", |_| Ok(Box::new(IceEncoder)));
    r.register("se", |_| Ok(Box::new(SeparateEncoder)));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::moving_square;

    #[test]
    fn lookup_by_name() {
        let cfg = RunConfig::default();
        let args = StrategyArgs { dir: None, config: &cfg };
        assert_eq!(flow_sources().names(), vec!["block-matching", "flo-files"]);
        assert_eq!(flow_sources().create("block-matching", &args).unwrap().name(), "block-matching");
        assert_eq!(encoders().create("se", &args).unwrap().name(), "se");
        assert!(matches!(
            saliency_providers().create("magic", &args),
            Err(Error::UnknownStrategy { kind: "saliency", .. })
        ));
        assert!(matches!(flow_sources().create("flo-files", &args), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn block_matching_covers_every_frame() {
        let seq = moving_square(3, 48, 40);
        let flows = BlockMatching.flows(&seq).unwrap();
        assert_eq!(flows.len(), 3);
        assert!(flows.iter().all(|f| f.dims() == (48, 40)));
    }

    #[test]
    fn se_encoder_averages_normalised_cues() {
        let dims = (4, 1);
        let zero = AccumulatedStrengths {
            g_acc: ScalarMap::new(4, 1),
            i_acc: ScalarMap::new(4, 1),
            space: crate::proposals::Space::C,
        };
        let sal = SaliencyMap {
            values: ScalarMap::from_fn(4, 1, |x, _| [0.0, 1.0, 0.5, 0.5][x]),
            source: SaliencySource::Rgb,
        };
        let flat = SaliencyMap::uniform(dims, SaliencySource::C);
        let trimap = Trimap {
            values: ScalarMap::new(4, 1),
            levels: crate::grid::Grid::new(4, 1),
        };
        let intensity = ScalarMap::from_fn(4, 1, |x, _| [2.0, 2.0, 4.0, 6.0][x]);
        let cues = FrameCues {
            strengths_c: &zero,
            strengths_rgb: &zero,
            saliency_c: &flat,
            saliency_rgb: &sal,
            trimap: &trimap,
            intensity: &intensity,
        };
        let l = SeparateEncoder.encode(&cues, &RunConfig::default()).unwrap();
        assert_eq!(l.m.as_slice(), &[0.0, 0.5, 0.5, 0.75]);
    }
}
