//! TOML configuration files.
//!
//! A file holds exactly one of three tables:
//!
//! ```toml
//! [layer]                 # a single layer
//! ifm_channels = 64
//! ifm_dim = 8             # default 1
//! ofm_channels = 64
//! kernel_dim = 4          # default 1
//! pe = 16
//! simd = 64
//! datapath = "standard"   # xnor | binary_weight | standard (default)
//! input_bits = 4          # default 4; ignored by xnor
//! weight_bits = 4         # default 4; standard only
//! ```
//!
//! `[sweep]` takes the same keys, with exactly one of the six shape and
//! folding keys set to `"*"`, plus `values = [...]` for the starred key and
//! optionally `datapaths = [...]` to repeat the sweep per datapath.
//!
//! `[pipeline]` may set `datapath`, `input_bits` and `weight_bits` as defaults
//! and lists its layers as `[[pipeline.layers]]` tables.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mvusim_core::{validate, DatapathKind, FoldConfig, LayerConfig, LayerShape};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const DEFAULT_BITS: u32 = 4;

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Layer(LayerConfig),
    Sweep(SweepSpec),
    Pipeline(Vec<LayerConfig>),
}

/// Which layer parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    IfmChannels,
    IfmDim,
    OfmChannels,
    KernelDim,
    Pe,
    Simd,
}

impl SweptParameter {
    pub const ALL: [Self; 6] =
        [Self::IfmChannels, Self::IfmDim, Self::OfmChannels, Self::KernelDim, Self::Pe, Self::Simd];

    pub fn name(self) -> &'static str {
        match self {
            Self::IfmChannels => "ifm_channels",
            Self::IfmDim => "ifm_dim",
            Self::OfmChannels => "ofm_channels",
            Self::KernelDim => "kernel_dim",
            Self::Pe => "pe",
            Self::Simd => "simd",
        }
    }
}

impl fmt::Display for SweptParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweptParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown layer parameter `{s}`"))
    }
}

/// The six shape and folding parameters of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerParams {
    pub ifm_channels: usize,
    pub ifm_dim: usize,
    pub ofm_channels: usize,
    pub kernel_dim: usize,
    pub pe: usize,
    pub simd: usize,
}

impl LayerParams {
    pub fn of(cfg: &LayerConfig) -> Self {
        let s = cfg.shape();
        Self {
            ifm_channels: s.ifm_channels,
            ifm_dim: s.ifm_dim,
            ofm_channels: s.ofm_channels,
            kernel_dim: s.kernel_dim,
            pe: cfg.pe(),
            simd: cfg.simd(),
        }
    }

    pub fn with(mut self, param: SweptParameter, value: usize) -> Self {
        *match param {
            SweptParameter::IfmChannels => &mut self.ifm_channels,
            SweptParameter::IfmDim => &mut self.ifm_dim,
            SweptParameter::OfmChannels => &mut self.ofm_channels,
            SweptParameter::KernelDim => &mut self.kernel_dim,
            SweptParameter::Pe => &mut self.pe,
            SweptParameter::Simd => &mut self.simd,
        } = value;
        self
    }

    pub fn validate(&self, datapath: DatapathKind, context: impl FnOnce() -> String) -> Result<LayerConfig> {
        let shape = LayerShape::conv(self.kernel_dim, self.ifm_channels, self.ifm_dim, self.ofm_channels);
        validate(shape, FoldConfig::new(self.pe, self.simd), datapath)
            .map_err(|source| CliError::Validation { context: context(), source })
    }
}

/// A one-parameter sweep around a base layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Base layer; the swept field holds the first sweep value.
    pub base: LayerParams,
    pub parameter: SweptParameter,
    pub values: Vec<usize>,
    pub datapaths: Vec<DatapathKind>,
}

impl SweepSpec {
    /// Every `(value, config)` point, value-major. All points are validated.
    pub fn points(&self) -> Result<Vec<(usize, LayerConfig)>> {
        let mut out = Vec::with_capacity(self.values.len() * self.datapaths.len());
        for &v in &self.values {
            for &kind in &self.datapaths {
                let cfg = self
                    .base
                    .with(self.parameter, v)
                    .validate(kind, || format!("sweep point {}={v} ({})", self.parameter, kind.name()))?;
                out.push((v, cfg));
            }
        }
        Ok(out)
    }
}

/// An integer or the `"*"` placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Value(usize),
    Star,
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Field;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative integer or \"*\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Field, E> {
                usize::try_from(v).map(Field::Value).map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Field, E> {
                usize::try_from(v).map(Field::Value).map_err(|_| E::invalid_value(de::Unexpected::Unsigned(v), &self))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Field, E> {
                if v == "*" {
                    Ok(Field::Star)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    layer: Option<RawLayer>,
    sweep: Option<RawSweep>,
    pipeline: Option<RawPipeline>,
}

#[derive(Debug, Default)]
struct RawPrecision {
    datapath: Option<String>,
    input_bits: Option<u32>,
    weight_bits: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    ifm_channels: usize,
    #[serde(default = "one")]
    ifm_dim: usize,
    ofm_channels: usize,
    #[serde(default = "one")]
    kernel_dim: usize,
    pe: usize,
    simd: usize,
    datapath: Option<String>,
    input_bits: Option<u32>,
    weight_bits: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    ifm_channels: Field,
    #[serde(default = "one_field")]
    ifm_dim: Field,
    ofm_channels: Field,
    #[serde(default = "one_field")]
    kernel_dim: Field,
    pe: Field,
    simd: Field,
    values: Vec<usize>,
    datapaths: Option<Vec<String>>,
    datapath: Option<String>,
    input_bits: Option<u32>,
    weight_bits: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    datapath: Option<String>,
    input_bits: Option<u32>,
    weight_bits: Option<u32>,
    layers: Vec<RawLayer>,
}

macro_rules! precision {
    ($raw:expr) => {
        RawPrecision { datapath: $raw.datapath.clone(), input_bits: $raw.input_bits, weight_bits: $raw.weight_bits }
    };
}

fn one() -> usize {
    1
}

fn one_field() -> Field {
    Field::Value(1)
}

/// Builds a datapath from its name and bit widths.
pub fn datapath_from(name: &str, input_bits: u32, weight_bits: u32) -> Result<DatapathKind> {
    let kind = match name {
        "xnor" => DatapathKind::Xnor,
        "binary_weight" => DatapathKind::BinaryWeight { input_bits },
        "standard" => DatapathKind::Standard { input_bits, weight_bits },
        other => {
            return Err(CliError::Invalid(format!(
                "unknown datapath `{other}` (expected xnor, binary_weight or standard)"
            )))
        }
    };
    kind.check().map_err(|source| CliError::Validation { context: format!("datapath {name}"), source })?;
    Ok(kind)
}

fn resolve(p: &RawPrecision, fallback: &RawPrecision, name_override: Option<&str>) -> Result<DatapathKind> {
    let name = name_override.or(p.datapath.as_deref()).or(fallback.datapath.as_deref()).unwrap_or("standard");
    let input = p.input_bits.or(fallback.input_bits).unwrap_or(DEFAULT_BITS);
    let weight = p.weight_bits.or(fallback.weight_bits).unwrap_or(DEFAULT_BITS);
    datapath_from(name, input, weight)
}

impl RawLayer {
    fn params(&self) -> LayerParams {
        LayerParams {
            ifm_channels: self.ifm_channels,
            ifm_dim: self.ifm_dim,
            ofm_channels: self.ofm_channels,
            kernel_dim: self.kernel_dim,
            pe: self.pe,
            simd: self.simd,
        }
    }
}

/// 1-based line and column of byte `offset` in `src`.
fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Parses configuration text; `origin` names the source in error messages.
pub fn parse_config_str(src: &str, origin: &str) -> Result<ConfigFile> {
    let raw: RawFile = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(src, s.start));
        CliError::Parse { path: origin.to_string(), line, column, message: e.message().trim().to_string() }
    })?;
    let none = RawPrecision::default();
    match (raw.layer, raw.sweep, raw.pipeline) {
        (Some(l), None, None) => {
            let kind = resolve(&precision!(l), &none, None)?;
            Ok(ConfigFile::Layer(l.params().validate(kind, || "layer".into())?))
        }
        (None, Some(s), None) => parse_sweep(s).map(ConfigFile::Sweep),
        (None, None, Some(p)) => {
            if p.layers.is_empty() {
                return Err(CliError::Invalid("pipeline has no layers".into()));
            }
            let mut configs = Vec::with_capacity(p.layers.len());
            for (i, l) in p.layers.iter().enumerate() {
                let kind = resolve(&precision!(l), &precision!(p), None)?;
                configs.push(l.params().validate(kind, || format!("pipeline layer {i}"))?);
            }
            Ok(ConfigFile::Pipeline(configs))
        }
        (None, None, None) => {
            Err(CliError::Invalid(format!("{origin}: expected a [layer], [sweep] or [pipeline] table")))
        }
        _ => Err(CliError::Invalid(format!("{origin}: only one of [layer], [sweep] and [pipeline] may appear"))),
    }
}

fn parse_sweep(s: RawSweep) -> Result<SweepSpec> {
    let fields = [s.ifm_channels, s.ifm_dim, s.ofm_channels, s.kernel_dim, s.pe, s.simd];
    let starred: Vec<SweptParameter> =
        SweptParameter::ALL.into_iter().zip(fields).filter(|(_, f)| *f == Field::Star).map(|(p, _)| p).collect();
    let parameter = match starred.as_slice() {
        [p] => *p,
        [] => return Err(CliError::Invalid("sweep needs one parameter set to \"*\"".into())),
        _ => return Err(CliError::Invalid(format!("sweep may star only one parameter, found {}", starred.len()))),
    };
    if s.values.is_empty() {
        return Err(CliError::Invalid(format!("sweep over {parameter} has no values")));
    }
    let value = |f: Field| match f {
        Field::Value(v) => v,
        Field::Star => s.values[0],
    };
    let base = LayerParams {
        ifm_channels: value(s.ifm_channels),
        ifm_dim: value(s.ifm_dim),
        ofm_channels: value(s.ofm_channels),
        kernel_dim: value(s.kernel_dim),
        pe: value(s.pe),
        simd: value(s.simd),
    };
    let none = RawPrecision::default();
    let datapaths = match &s.datapaths {
        Some(names) if names.is_empty() => return Err(CliError::Invalid("sweep datapaths list is empty".into())),
        Some(names) => names.iter().map(|n| resolve(&precision!(s), &none, Some(n))).collect::<Result<Vec<_>>>()?,
        None => vec![resolve(&precision!(s), &none, None)?],
    };
    let spec = SweepSpec { base, parameter, values: s.values, datapaths };
    spec.points()?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ConfigFile> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&src, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvusim_core::ConfigError;

    #[test]
    fn layer_defaults() {
        let src = "[layer]\nifm_channels = 8\nofm_channels = 4\npe = 2\nsimd = 4\n";
        let ConfigFile::Layer(cfg) = parse_config_str(src, "t").unwrap() else { panic!() };
        assert_eq!(cfg.shape().ifm_dim, 1);
        assert_eq!(cfg.datapath(), DatapathKind::Standard { input_bits: 4, weight_bits: 4 });
    }

    #[test]
    fn parse_error_location() {
        let src = "[layer]\nifm_channels = 8\npe = = 2\n";
        match parse_config_str(src, "bad.toml") {
            Err(CliError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 6)),
            other => panic!("{other:?}"),
        }
        let src = "[layer]\nifm_channels = 8\nofm_channels = 4\npe = 2\nsimd = 4\nbogus = 1\n";
        assert!(matches!(parse_config_str(src, "t"), Err(CliError::Parse { line: 6, .. })));
    }

    #[test]
    fn validation_names_invariant() {
        let src = "[layer]\nifm_channels = 6\nofm_channels = 4\npe = 2\nsimd = 4\n";
        match parse_config_str(src, "t") {
            Err(e @ CliError::Validation { source: ConfigError::NonDivisibleSimd { .. }, .. }) => {
                assert!(e.to_string().contains("NonDivisibleSimd"));
                assert_eq!(e.exit_code(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_star_rules() {
        let base = "ifm_channels = 64\nifm_dim = 8\nofm_channels = 64\nkernel_dim = 4\n";
        let ok = format!("[sweep]\n{base}pe = \"*\"\nsimd = 64\nvalues = [2, 4]\n");
        let ConfigFile::Sweep(s) = parse_config_str(&ok, "t").unwrap() else { panic!() };
        assert_eq!(s.parameter, SweptParameter::Pe);
        assert_eq!(s.points().unwrap().len(), 2);

        let none = format!("[sweep]\n{base}pe = 2\nsimd = 64\nvalues = [2]\n");
        assert!(matches!(parse_config_str(&none, "t"), Err(CliError::Invalid(_))));
        let two = format!("[sweep]\n{base}pe = \"*\"\nsimd = \"*\"\nvalues = [2]\n");
        assert!(matches!(parse_config_str(&two, "t"), Err(CliError::Invalid(_))));
        let bad = format!("[sweep]\n{base}pe = \"*\"\nsimd = 64\nvalues = [2, 3]\n");
        assert!(matches!(parse_config_str(&bad, "t"), Err(CliError::Validation { .. })));
        let word = format!("[sweep]\n{base}pe = \"all\"\nsimd = 64\nvalues = [2]\n");
        assert!(matches!(parse_config_str(&word, "t"), Err(CliError::Parse { line: 6, .. })));
    }

    #[test]
    fn pipeline_inherits_precision() {
        let src = "[pipeline]\ndatapath = \"standard\"\ninput_bits = 2\nweight_bits = 2\n\
                   [[pipeline.layers]]\nifm_channels = 8\nofm_channels = 4\npe = 4\nsimd = 8\n\
                   [[pipeline.layers]]\nifm_channels = 4\nofm_channels = 2\npe = 1\nsimd = 4\ndatapath = \"xnor\"\n";
        let ConfigFile::Pipeline(layers) = parse_config_str(src, "t").unwrap() else { panic!() };
        assert_eq!(layers[0].datapath(), DatapathKind::Standard { input_bits: 2, weight_bits: 2 });
        assert_eq!(layers[1].datapath(), DatapathKind::Xnor);
    }

    #[test]
    fn one_table_only() {
        assert!(parse_config_str("", "t").is_err());
        let src = "[layer]\nifm_channels = 1\nofm_channels = 1\npe = 1\nsimd = 1\n[pipeline]\nlayers = []\n";
        assert!(parse_config_str(src, "t").is_err());
    }
}
