//! Network configuration, named variants, and the parameter schema.
//!
//! `param_schema` is the single source of truth for every learnable tensor:
//! its name, shape, and initialization kind. Initialization, forward lookup,
//! checkpoint layout, and parameter counting all derive from it, so the
//! serialized order can never drift from the compute graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Architectural variants. `Full` is the complete network; the others
/// remove or rewire one mechanism for ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    /// one pyramid level, original resolution only
    SingleScale,
    /// initial features feed the fine-fusion chain directly
    NoCfm,
    /// coarse-fusion output goes straight to reconstruction
    NoFfm,
    /// per-scale streams stay independent until reconstruction
    ParallelFusion,
    Lightweight,
}

impl Variant {
    /// Cross-scale guidance links (upsample + concat + fuse) inside the
    /// coarse- and fine-fusion stages exist in every variant except the
    /// parallel one, which merges scales only at reconstruction.
    pub fn cross_scale(self) -> bool {
        self != Variant::ParallelFusion
    }

    pub fn has_cfm(self) -> bool {
        self != Variant::NoCfm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// pyramid depth
    pub levels: usize,
    /// feature width per level, coarsest first
    pub scale_channels: Vec<usize>,
    /// cascaded fine-fusion modules
    pub m: usize,
    /// channel attention units per U-shaped block
    pub n: usize,
    /// recurrent steps per residual recurrent unit
    pub t: usize,
    /// strided-conv / transposed-conv pairs per U-shaped block
    pub urab_sampling_pairs: usize,
    /// spatial kernel size of feature convolutions
    pub kernel_size: usize,
    /// channel attention squeeze ratio
    pub attention_reduction: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    /// The baseline configuration: 3 levels at widths 32/64/128, M=10, N=3.
    fn default() -> Self {
        ModelConfig {
            levels: 3,
            scale_channels: vec![32, 64, 128],
            m: 10,
            n: 3,
            t: 3,
            urab_sampling_pairs: 1,
            kernel_size: 3,
            attention_reduction: 4,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration small enough to train in minutes on a CPU.
    pub fn tiny() -> Self {
        ModelConfig {
            scale_channels: vec![8, 16, 32],
            m: 2,
            n: 1,
            t: 2,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid("model config", msg));
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if self.scale_channels.len() != self.levels {
            return bad(format!(
                "scale_channels has {} entries for {} levels",
                self.scale_channels.len(),
                self.levels
            ));
        }
        if self.scale_channels.iter().any(|&c| c == 0) {
            return bad("scale_channels must all be positive".into());
        }
        if self.m >= 1 && self.n < 1 {
            return bad("n must be >= 1 when m >= 1".into());
        }
        if self.t < 1 {
            return bad("t must be >= 1".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.attention_reduction < 1 {
            return bad("attention_reduction must be >= 1".into());
        }
        if self.variant == Variant::SingleScale && self.levels != 1 {
            return bad("single-scale variant requires levels = 1".into());
        }
        Ok(())
    }

    /// Input H and W must be divisible by this: 2^(levels−1) for the
    /// pyramid, times 2^pairs so the coarsest level still halves cleanly
    /// inside every U-shaped block.
    pub fn size_divisor(&self) -> usize {
        1 << (self.levels - 1 + self.urab_sampling_pairs)
    }
}

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// uniform(−1/√fan_in, 1/√fan_in), fan_in = in_channels · kh · kw
    ConvWeight,
    /// same rule, but transposed-conv weights store in-channels first
    TconvWeight,
    /// zeros
    Bias,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn fan_in(&self) -> usize {
        match self.kind {
            ParamKind::ConvWeight => self.shape[1] * self.shape[2] * self.shape[3],
            ParamKind::TconvWeight => self.shape[0] * self.shape[2] * self.shape[3],
            ParamKind::Bias => 1,
        }
    }
}

/// Every learnable tensor of `cfg`, in the fixed order used for
/// initialization and serialization.
///
/// Naming scheme (levels are coarsest-first indices):
/// - `init.level{l}.conv.{w,b}` — per-level input convolutions
/// - `cfm.level{l}.{up,fuse}.{w,b}` — cross-scale guidance into level l
/// - `cfm.level{l}.lstm.{w_x*,w_h*,b_*}` — recurrent gates (i, f, o, g),
///   shared across all recurrent steps
/// - `ffm{k}.level{l}.{up,fuse}.{w,b}` — cross-scale guidance, module k
/// - `ffm{k}.level{l}.urab.down{p}.{w,b}` / `.up{p}.{w,b}` — strided
///   sampling pairs
/// - `ffm{k}.level{l}.urab.cau{j}.{conv1,conv2,reduce,expand}.{w,b}`
/// - `rm.level{l}.merge.{w,b}`, `rm.level{l}.{up,fuse}.{w,b}`, `rm.out.{w,b}`
pub fn param_schema(cfg: &ModelConfig) -> Result<Vec<ParamSpec>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let k = cfg.kernel_size;
    let ch = &cfg.scale_channels;
    let mut push = |name: String, shape: Shape, kind: ParamKind| {
        out.push(ParamSpec { name, shape, kind });
    };
    let conv = |c_out: usize, c_in: usize, k: usize| [c_out, c_in, k, k];
    let tconv = |c_in: usize, c_out: usize| [c_in, c_out, 2, 2];
    let bias = |c: usize| [1usize, c, 1, 1];

    for (l, &c) in ch.iter().enumerate() {
        push(format!("init.level{l}.conv.w"), conv(c, 3, k), ParamKind::ConvWeight);
        push(format!("init.level{l}.conv.b"), bias(c), ParamKind::Bias);
    }

    if cfg.variant.has_cfm() {
        for (l, &c) in ch.iter().enumerate() {
            if l > 0 && cfg.variant.cross_scale() {
                push(format!("cfm.level{l}.up.w"), tconv(ch[l - 1], c), ParamKind::TconvWeight);
                push(format!("cfm.level{l}.up.b"), bias(c), ParamKind::Bias);
                push(format!("cfm.level{l}.fuse.w"), conv(c, 2 * c, 1), ParamKind::ConvWeight);
                push(format!("cfm.level{l}.fuse.b"), bias(c), ParamKind::Bias);
            }
            for gate in ["i", "f", "o", "g"] {
                push(format!("cfm.level{l}.lstm.w_x{gate}"), conv(c, c, k), ParamKind::ConvWeight);
                push(format!("cfm.level{l}.lstm.w_h{gate}"), conv(c, c, k), ParamKind::ConvWeight);
                push(format!("cfm.level{l}.lstm.b_{gate}"), bias(c), ParamKind::Bias);
            }
        }
    }

    for m in 0..cfg.m {
        for (l, &c) in ch.iter().enumerate() {
            if l > 0 && cfg.variant.cross_scale() {
                push(format!("ffm{m}.level{l}.up.w"), tconv(ch[l - 1], c), ParamKind::TconvWeight);
                push(format!("ffm{m}.level{l}.up.b"), bias(c), ParamKind::Bias);
                push(format!("ffm{m}.level{l}.fuse.w"), conv(c, 2 * c, 1), ParamKind::ConvWeight);
                push(format!("ffm{m}.level{l}.fuse.b"), bias(c), ParamKind::Bias);
            }
            let urab = format!("ffm{m}.level{l}.urab");
            for p in 0..cfg.urab_sampling_pairs {
                push(format!("{urab}.down{p}.w"), conv(c, c, 3), ParamKind::ConvWeight);
                push(format!("{urab}.down{p}.b"), bias(c), ParamKind::Bias);
            }
            let reduced = (c / cfg.attention_reduction).max(1);
            for j in 0..cfg.n {
                let cau = format!("{urab}.cau{j}");
                push(format!("{cau}.conv1.w"), conv(c, c, k), ParamKind::ConvWeight);
                push(format!("{cau}.conv1.b"), bias(c), ParamKind::Bias);
                push(format!("{cau}.conv2.w"), conv(c, c, k), ParamKind::ConvWeight);
                push(format!("{cau}.conv2.b"), bias(c), ParamKind::Bias);
                push(format!("{cau}.reduce.w"), conv(reduced, c, 1), ParamKind::ConvWeight);
                push(format!("{cau}.reduce.b"), bias(reduced), ParamKind::Bias);
                push(format!("{cau}.expand.w"), conv(c, reduced, 1), ParamKind::ConvWeight);
                push(format!("{cau}.expand.b"), bias(c), ParamKind::Bias);
            }
            for p in 0..cfg.urab_sampling_pairs {
                push(format!("{urab}.up{p}.w"), tconv(c, c), ParamKind::TconvWeight);
                push(format!("{urab}.up{p}.b"), bias(c), ParamKind::Bias);
            }
        }
    }

    for (l, &c) in ch.iter().enumerate() {
        push(format!("rm.level{l}.merge.w"), conv(c, 2 * c, 1), ParamKind::ConvWeight);
        push(format!("rm.level{l}.merge.b"), bias(c), ParamKind::Bias);
    }
    for (l, &c) in ch.iter().enumerate().skip(1) {
        push(format!("rm.level{l}.up.w"), tconv(ch[l - 1], c), ParamKind::TconvWeight);
        push(format!("rm.level{l}.up.b"), bias(c), ParamKind::Bias);
        push(format!("rm.level{l}.fuse.w"), conv(c, 2 * c, 1), ParamKind::ConvWeight);
        push(format!("rm.level{l}.fuse.b"), bias(c), ParamKind::Bias);
    }
    let finest = *ch.last().unwrap();
    push("rm.out.w".into(), conv(3, finest, k), ParamKind::ConvWeight);
    push("rm.out.b".into(), bias(3), ParamKind::Bias);

    Ok(out)
}

/// Total learnable scalars of a configuration.
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(param_schema(cfg)?
        .iter()
        .map(|s| crate::tensor::numel(s.shape))
        .sum())
}

pub const VARIANT_NAMES: [&str; 13] = [
    "model1",
    "model2",
    "model3",
    "model4",
    "model5",
    "model6",
    "baseline_m10n3",
    "final_m17n1",
    "m30n1",
    "m13n2",
    "m17n2",
    "m8n5",
    "lightweight",
];

/// Named configurations: numbered ablations of the baseline (model1..model6),
/// the M/N capacity grid, and the narrow lightweight build.
pub fn make_variant(name: &str) -> Result<ModelConfig> {
    let baseline = ModelConfig::default();
    let grid = |m: usize, n: usize| ModelConfig {
        m,
        n,
        ..baseline.clone()
    };
    let cfg = match name {
        "model1" => ModelConfig {
            levels: 1,
            scale_channels: vec![128],
            variant: Variant::SingleScale,
            ..baseline.clone()
        },
        "model2" => ModelConfig {
            variant: Variant::NoCfm,
            ..baseline.clone()
        },
        "model3" => ModelConfig {
            m: 0,
            variant: Variant::NoFfm,
            ..baseline.clone()
        },
        "model4" => ModelConfig {
            variant: Variant::ParallelFusion,
            ..baseline.clone()
        },
        "model5" => grid(5, 1),
        "model6" => grid(6, 3),
        "baseline_m10n3" => baseline.clone(),
        "final_m17n1" => grid(17, 1),
        "m30n1" => grid(30, 1),
        "m13n2" => grid(13, 2),
        "m17n2" => grid(17, 2),
        "m8n5" => grid(8, 5),
        "lightweight" => ModelConfig {
            scale_channels: vec![32, 32, 32],
            m: 5,
            n: 1,
            urab_sampling_pairs: 2,
            variant: Variant::Lightweight,
            ..baseline
        },
        other => return Err(Error::UnknownVariant(other.to_string())),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_matches_published_dimensions() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.scale_channels, vec![32, 64, 128]);
        assert_eq!((cfg.m, cfg.n), (10, 3));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn named_variants_have_documented_settings() {
        let final_model = make_variant("final_m17n1").unwrap();
        assert_eq!((final_model.m, final_model.n), (17, 1));
        let lw = make_variant("lightweight").unwrap();
        assert_eq!(lw.scale_channels, vec![32, 32, 32]);
        assert_eq!((lw.m, lw.n, lw.urab_sampling_pairs), (5, 1, 2));
        let m1 = make_variant("model1").unwrap();
        assert_eq!(m1.levels, 1);
        assert_eq!(make_variant("model3").unwrap().m, 0);
        assert!(matches!(
            make_variant("modelx"),
            Err(Error::UnknownVariant(_))
        ));
        for name in VARIANT_NAMES {
            assert!(make_variant(name).is_ok(), "{name}");
        }
    }

    #[test]
    fn validation_rejects_inconsistent_configs() {
        let mut cfg = ModelConfig::default();
        cfg.scale_channels = vec![32, 64];
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.t = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.n = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.kernel_size = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn schema_names_are_unique() {
        let specs = param_schema(&ModelConfig::default()).unwrap();
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        let total = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn param_count_monotone_in_capacity_knobs() {
        let count = |f: &dyn Fn(&mut ModelConfig)| {
            let mut cfg = ModelConfig::tiny();
            f(&mut cfg);
            param_count(&cfg).unwrap()
        };
        let base = count(&|_| {});
        assert!(count(&|c| c.m += 1) > base);
        assert!(count(&|c| c.n += 1) > base);
        assert!(count(&|c| {
            c.levels += 1;
            c.scale_channels.push(64);
        }) > base);
        assert!(count(&|c| c.scale_channels[2] += 8) > base);
        assert!(count(&|c| c.urab_sampling_pairs += 1) > base);
    }

    #[test]
    fn removing_modules_removes_parameters() {
        let full = param_count(&ModelConfig::default()).unwrap();
        assert!(param_count(&make_variant("model3").unwrap()).unwrap() < full);
        assert!(param_count(&make_variant("model2").unwrap()).unwrap() < full);
        assert!(param_count(&make_variant("model1").unwrap()).unwrap() < full);
    }

    #[test]
    fn size_divisor_accounts_for_pyramid_and_sampling() {
        assert_eq!(ModelConfig::default().size_divisor(), 8);
        assert_eq!(make_variant("lightweight").unwrap().size_divisor(), 16);
        assert_eq!(make_variant("model1").unwrap().size_divisor(), 2);
    }
}
