use serde::{Deserialize, Serialize};

use crate::encoders::{Activation, EncoderConfig, GatConfig};
use crate::error::{Error, Result};
use crate::space::{self, ParamSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Gbt,
    CcaSsg,
    Bgrl,
    Gca,
    Graphmae,
    S2gae,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::Gbt,
        MethodKind::CcaSsg,
        MethodKind::Bgrl,
        MethodKind::Gca,
        MethodKind::Graphmae,
        MethodKind::S2gae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Gbt => "gbt",
            MethodKind::CcaSsg => "cca_ssg",
            MethodKind::Bgrl => "bgrl",
            MethodKind::Gca => "gca",
            MethodKind::Graphmae => "graphmae",
            MethodKind::S2gae => "s2gae",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
            Error::Config(format!("unknown method {s:?}; expected one of {{{}}}", names.join(", ")))
        })
    }

    pub fn is_contrastive(self) -> bool {
        matches!(self, MethodKind::Gbt | MethodKind::CcaSsg | MethodKind::Bgrl | MethodKind::Gca)
    }

    /// Method-specific rows of the search space.
    pub fn space(self) -> &'static [ParamSpec] {
        match self {
            MethodKind::Gbt => space::GBT,
            MethodKind::CcaSsg => space::CCA_SSG,
            MethodKind::Bgrl => space::BGRL,
            MethodKind::Gca => space::GCA,
            MethodKind::Graphmae => space::GRAPHMAE,
            MethodKind::S2gae => space::S2GAE,
        }
    }

    pub fn default_encoder(self) -> EncoderConfig {
        match self {
            MethodKind::Graphmae => EncoderConfig {
                in_drop: 0.2,
                ..EncoderConfig::gat(
                    vec![256, 256],
                    GatConfig {
                        num_heads: 4,
                        attn_drop: 0.1,
                        negative_slope: 0.2,
                    },
                )
            },
            _ => EncoderConfig::gcn(vec![256, 256]),
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    /// Learning rate used by this method in place of `method.lr`.
    pub lr_base: f64,
    pub p_x: f64,
    pub p_e: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            lr_base: 1e-3,
            p_x: 0.1,
            p_e: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcaSsgParams {
    pub dfr: f64,
    pub der: f64,
    pub lambda: f64,
}

impl Default for CcaSsgParams {
    fn default() -> Self {
        Self {
            dfr: 0.1,
            der: 0.4,
            lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BgrlParams {
    pub drop_edge_p_1: f64,
    pub drop_edge_p_2: f64,
    pub drop_feat_p_1: f64,
    pub drop_feat_p_2: f64,
    pub ema_decay: f64,
    pub predictor_hidden: usize,
}

impl Default for BgrlParams {
    fn default() -> Self {
        Self {
            drop_edge_p_1: 0.3,
            drop_edge_p_2: 0.2,
            drop_feat_p_1: 0.3,
            drop_feat_p_2: 0.2,
            ema_decay: 0.99,
            predictor_hidden: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcaParams {
    pub drop_edge_rate_1: f64,
    pub drop_edge_rate_2: f64,
    pub drop_feature_rate_1: f64,
    pub drop_feature_rate_2: f64,
    pub tau: f64,
    /// Scale drop probabilities by degree centrality.
    pub degree_centrality: bool,
}

impl Default for GcaParams {
    fn default() -> Self {
        Self {
            drop_edge_rate_1: 0.2,
            drop_edge_rate_2: 0.4,
            drop_feature_rate_1: 0.3,
            drop_feature_rate_2: 0.4,
            tau: 0.4,
            degree_centrality: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphmaeParams {
    pub mask_rate: f64,
    pub drop_edge_rate: f64,
    pub alpha_l: u32,
    /// Accepted for compatibility and ignored.
    pub replace_rate: f64,
}

impl Default for GraphmaeParams {
    fn default() -> Self {
        Self {
            mask_rate: 0.5,
            drop_edge_rate: 0.0,
            alpha_l: 3,
            replace_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S2gaeParams {
    pub mask_ratio: f64,
    pub decode_channels: usize,
    pub decode_layers: usize,
    /// Upper bound on masked edges scored per step; the rest stay masked.
    pub max_pos_per_step: usize,
}

impl Default for S2gaeParams {
    fn default() -> Self {
        Self {
            mask_ratio: 0.5,
            decode_channels: 256,
            decode_layers: 2,
            max_pos_per_step: 2048,
        }
    }
}

/// One SSL method with its encoder and optimizer settings. Only the table
/// matching `kind` may be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub kind: MethodKind,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbt: Option<GbtParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cca_ssg: Option<CcaSsgParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bgrl: Option<BgrlParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gca: Option<GcaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graphmae: Option<GraphmaeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2gae: Option<S2gaeParams>,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_weight_decay() -> f64 {
    1e-5
}

impl MethodConfig {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            lr: default_lr(),
            weight_decay: default_weight_decay(),
            encoder: None,
            gbt: None,
            cca_ssg: None,
            bgrl: None,
            gca: None,
            graphmae: None,
            s2gae: None,
        }
    }

    /// Same configuration with every layer of the encoder set to `width`.
    pub fn with_width(mut self, width: usize) -> Self {
        let mut enc = self.encoder_config();
        enc.hidden_dims.iter_mut().for_each(|d| *d = width);
        self.encoder = Some(enc);
        self
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        self.encoder.clone().unwrap_or_else(|| self.kind.default_encoder())
    }

    /// Learning rate the optimizer uses.
    pub fn effective_lr(&self) -> f64 {
        match self.kind {
            MethodKind::Gbt => self.gbt_params().lr_base,
            _ => self.lr,
        }
    }

    pub fn gbt_params(&self) -> GbtParams {
        self.gbt.clone().unwrap_or_default()
    }

    pub fn cca_ssg_params(&self) -> CcaSsgParams {
        self.cca_ssg.clone().unwrap_or_default()
    }

    pub fn bgrl_params(&self) -> BgrlParams {
        self.bgrl.clone().unwrap_or_default()
    }

    pub fn gca_params(&self) -> GcaParams {
        self.gca.clone().unwrap_or_default()
    }

    pub fn graphmae_params(&self) -> GraphmaeParams {
        self.graphmae.clone().unwrap_or_default()
    }

    pub fn s2gae_params(&self) -> S2gaeParams {
        self.s2gae.clone().unwrap_or_default()
    }

    /// Named numeric hyperparameters of the active method, in search-space
    /// naming.
    pub fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        let enc = self.encoder_config();
        let width = enc.out_dim() as f64;
        let mut out = vec![("lr", self.lr), ("weight_decay", self.weight_decay)];
        match self.kind {
            MethodKind::Gbt => {
                let p = self.gbt_params();
                out.extend([("emb_dim", width), ("lr_base", p.lr_base), ("p_x", p.p_x), ("p_e", p.p_e)]);
            }
            MethodKind::CcaSsg => {
                let p = self.cca_ssg_params();
                out.extend([("dfr", p.dfr), ("der", p.der), ("hid_dim", width)]);
            }
            MethodKind::Bgrl => {
                let p = self.bgrl_params();
                out.extend([
                    ("drop_edge_p_1", p.drop_edge_p_1),
                    ("drop_edge_p_2", p.drop_edge_p_2),
                    ("drop_feat_p_1", p.drop_feat_p_1),
                    ("drop_feat_p_2", p.drop_feat_p_2),
                ]);
            }
            MethodKind::Gca => {
                let p = self.gca_params();
                out.extend([
                    ("num_hidden", width),
                    ("drop_edge_rate_1", p.drop_edge_rate_1),
                    ("drop_edge_rate_2", p.drop_edge_rate_2),
                    ("drop_feature_rate_1", p.drop_feature_rate_1),
                    ("drop_feature_rate_2", p.drop_feature_rate_2),
                ]);
            }
            MethodKind::Graphmae => {
                let p = self.graphmae_params();
                out.extend([
                    ("num_hidden", width),
                    ("in_drop", enc.in_drop),
                    ("mask_rate", p.mask_rate),
                    ("drop_edge_rate", p.drop_edge_rate),
                    ("alpha_l", f64::from(p.alpha_l)),
                    ("replace_rate", p.replace_rate),
                ]);
                if let Some(g) = &enc.gat {
                    out.extend([
                        ("num_heads", g.num_heads as f64),
                        ("attn_drop", g.attn_drop),
                        ("negative_slope", g.negative_slope),
                    ]);
                }
            }
            MethodKind::S2gae => {
                let p = self.s2gae_params();
                out.extend([
                    ("dim_hidden", width),
                    ("decode_channels", p.decode_channels as f64),
                    ("decode_layers", p.decode_layers as f64),
                    ("mask_ratio", p.mask_ratio),
                ]);
            }
        }
        out
    }

    /// Set one hyperparameter by its search-space name. Width names resize
    /// every encoder layer.
    pub fn set_hyperparameter(&mut self, name: &str, value: f64) -> Result<()> {
        let kind = self.kind;
        let unknown = || Error::Config(format!("{name} is not a hyperparameter of {kind}"));
        match name {
            "lr" => {
                self.lr = value;
                return Ok(());
            }
            "weight_decay" => {
                self.weight_decay = value;
                return Ok(());
            }
            "emb_dim" | "hid_dim" | "num_hidden" | "dim_hidden" => {
                if !self.hyperparameters().iter().any(|(n, _)| *n == name) {
                    return Err(unknown());
                }
                let mut enc = self.encoder_config();
                enc.hidden_dims.iter_mut().for_each(|d| *d = value as usize);
                self.encoder = Some(enc);
                return Ok(());
            }
            _ => {}
        }
        match self.kind {
            MethodKind::Gbt => {
                let p = self.gbt.get_or_insert_with(Default::default);
                match name {
                    "lr_base" => p.lr_base = value,
                    "p_x" => p.p_x = value,
                    "p_e" => p.p_e = value,
                    _ => return Err(unknown()),
                }
            }
            MethodKind::CcaSsg => {
                let p = self.cca_ssg.get_or_insert_with(Default::default);
                match name {
                    "dfr" => p.dfr = value,
                    "der" => p.der = value,
                    _ => return Err(unknown()),
                }
            }
            MethodKind::Bgrl => {
                let p = self.bgrl.get_or_insert_with(Default::default);
                match name {
                    "drop_edge_p_1" => p.drop_edge_p_1 = value,
                    "drop_edge_p_2" => p.drop_edge_p_2 = value,
                    "drop_feat_p_1" => p.drop_feat_p_1 = value,
                    "drop_feat_p_2" => p.drop_feat_p_2 = value,
                    _ => return Err(unknown()),
                }
            }
            MethodKind::Gca => {
                let p = self.gca.get_or_insert_with(Default::default);
                match name {
                    "drop_edge_rate_1" => p.drop_edge_rate_1 = value,
                    "drop_edge_rate_2" => p.drop_edge_rate_2 = value,
                    "drop_feature_rate_1" => p.drop_feature_rate_1 = value,
                    "drop_feature_rate_2" => p.drop_feature_rate_2 = value,
                    _ => return Err(unknown()),
                }
            }
            MethodKind::Graphmae => match name {
                "in_drop" | "num_heads" | "attn_drop" | "negative_slope" => {
                    let mut enc = self.encoder_config();
                    let gat = enc.gat.get_or_insert_with(GatConfig::default);
                    match name {
                        "in_drop" => enc.in_drop = value,
                        "num_heads" => gat.num_heads = value as usize,
                        "attn_drop" => gat.attn_drop = value,
                        _ => gat.negative_slope = value,
                    }
                    self.encoder = Some(enc);
                }
                _ => {
                    let p = self.graphmae.get_or_insert_with(Default::default);
                    match name {
                        "mask_rate" => p.mask_rate = value,
                        "drop_edge_rate" => p.drop_edge_rate = value,
                        "alpha_l" => p.alpha_l = value as u32,
                        "replace_rate" => p.replace_rate = value,
                        _ => return Err(unknown()),
                    }
                }
            },
            MethodKind::S2gae => {
                let p = self.s2gae.get_or_insert_with(Default::default);
                match name {
                    "decode_channels" => p.decode_channels = value as usize,
                    "decode_layers" => p.decode_layers = value as usize,
                    "mask_ratio" => p.mask_ratio = value,
                    _ => return Err(unknown()),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let tables = [
            ("gbt", self.gbt.is_some(), MethodKind::Gbt),
            ("cca_ssg", self.cca_ssg.is_some(), MethodKind::CcaSsg),
            ("bgrl", self.bgrl.is_some(), MethodKind::Bgrl),
            ("gca", self.gca.is_some(), MethodKind::Gca),
            ("graphmae", self.graphmae.is_some(), MethodKind::Graphmae),
            ("s2gae", self.s2gae.is_some(), MethodKind::S2gae),
        ];
        for (name, present, kind) in tables {
            if present && kind != self.kind {
                return Err(Error::Config(format!(
                    "[method.{name}] given but method.kind = \"{}\"",
                    self.kind
                )));
            }
        }
        let enc = self.encoder_config();
        enc.validate()?;
        if self.kind == MethodKind::Graphmae && enc.kind == crate::encoders::EncoderKind::Mlp {
            return Err(Error::Config("graphmae needs a message-passing encoder".into()));
        }
        for (name, value) in self.hyperparameters() {
            if space::WIDTH_PARAMS.contains(&name) {
                continue;
            }
            let domain = space::lookup(space::GENERAL, name)
                .or_else(|| space::lookup(self.kind.space(), name))
                .expect("every reported hyperparameter has a domain");
            if !domain.in_hull(value) {
                return Err(Error::Config(format!(
                    "{name} = {value} is outside the search space {}",
                    domain.describe()
                )));
            }
        }
        match self.kind {
            MethodKind::CcaSsg if !(self.cca_ssg_params().lambda >= 0.0) => {
                Err(Error::Config("cca_ssg.lambda must be non-negative".into()))
            }
            MethodKind::Bgrl => {
                let p = self.bgrl_params();
                if !(0.0..=1.0).contains(&p.ema_decay) {
                    return Err(Error::Config(format!("bgrl.ema_decay {} outside [0, 1]", p.ema_decay)));
                }
                if p.predictor_hidden == 0 {
                    return Err(Error::Config("bgrl.predictor_hidden must be positive".into()));
                }
                Ok(())
            }
            MethodKind::Gca if !(self.gca_params().tau > 0.0) => Err(Error::Config("gca.tau must be positive".into())),
            MethodKind::S2gae if self.s2gae_params().max_pos_per_step == 0 => {
                Err(Error::Config("s2gae.max_pos_per_step must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Activation of the default encoder for this method.
    pub fn default_activation(&self) -> Activation {
        self.kind.default_encoder().activation
    }
}
