//! Hyperparameter search spaces. Config validation checks values against
//! the hull of each domain; random search samples from the domains.

use rand::Rng as _;

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    /// A listed set of values, sampled uniformly.
    Choice(&'static [f64]),
    /// A closed real interval, sampled log-uniformly when `lo > 0` and
    /// `hi / lo >= 100`, uniformly otherwise.
    Range(f64, f64),
    /// A closed integer interval, sampled uniformly.
    IntRange(i64, i64),
}

impl Domain {
    pub fn lo(&self) -> f64 {
        match *self {
            Domain::Choice(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
            Domain::Range(a, _) => a,
            Domain::IntRange(a, _) => a as f64,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            Domain::Choice(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Domain::Range(_, b) => b,
            Domain::IntRange(_, b) => b as f64,
        }
    }

    /// Whether `x` lies within `[lo, hi]` of the domain.
    pub fn in_hull(&self, x: f64) -> bool {
        x.is_finite() && x >= self.lo() - 1e-12 && x <= self.hi() + 1e-12
    }

    pub fn is_log_scaled(&self) -> bool {
        matches!(*self, Domain::Range(a, b) if a > 0.0 && b / a >= 100.0)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Domain::Choice(v) => v[rng.random_range(0..v.len())],
            Domain::Range(a, b) if self.is_log_scaled() => (a.ln() + rng.random::<f64>() * (b.ln() - a.ln())).exp(),
            Domain::Range(a, b) => a + rng.random::<f64>() * (b - a),
            Domain::IntRange(a, b) => rng.random_range(a..=b) as f64,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Domain::Choice(v) => {
                let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                format!("{{{}}}", items.join(", "))
            }
            Domain::Range(a, b) => format!("[{a:e}, {b:e}]"),
            Domain::IntRange(a, b) => format!("[{a}, {b}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub domain: Domain,
}

const fn choice(name: &'static str, v: &'static [f64]) -> ParamSpec {
    ParamSpec {
        name,
        domain: Domain::Choice(v),
    }
}

const DROP: &[f64] = &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
const WIDTH: &[f64] = &[128.0, 256.0, 512.0, 1024.0];
const GAT_RATE: &[f64] = &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
const MASK: &[f64] = &[0.4, 0.5, 0.6, 0.7, 0.8];

pub const GENERAL: &[ParamSpec] = &[
    ParamSpec {
        name: "lr",
        domain: Domain::Range(1e-6, 1e-2),
    },
    ParamSpec {
        name: "weight_decay",
        domain: Domain::Range(1e-6, 1e-2),
    },
    choice("batch_size", &[512.0, 1024.0, 2048.0, 4096.0, 10000.0, 20000.0]),
    choice("decode_channels_lp", &[128.0, 256.0, 512.0, 1024.0]),
    choice("decode_layers_lp", &[1.0, 2.0, 4.0, 8.0]),
];

pub const BGRL: &[ParamSpec] = &[
    choice("drop_edge_p_1", DROP),
    choice("drop_edge_p_2", DROP),
    choice("drop_feat_p_1", DROP),
    choice("drop_feat_p_2", DROP),
];

pub const CCA_SSG: &[ParamSpec] = &[choice("dfr", DROP), choice("der", DROP), choice("hid_dim", WIDTH)];

pub const GBT: &[ParamSpec] = &[
    choice("emb_dim", WIDTH),
    ParamSpec {
        name: "lr_base",
        domain: Domain::Range(1e-6, 1e-2),
    },
    choice("p_x", DROP),
    choice("p_e", DROP),
];

pub const GCA: &[ParamSpec] = &[
    choice("num_hidden", WIDTH),
    choice("drop_edge_rate_1", DROP),
    choice("drop_edge_rate_2", DROP),
    choice("drop_feature_rate_1", DROP),
    choice("drop_feature_rate_2", DROP),
];

pub const GRAPHMAE: &[ParamSpec] = &[
    choice("num_heads", &[1.0, 2.0, 4.0, 8.0]),
    choice("num_hidden", &[256.0, 512.0, 1024.0]),
    choice("attn_drop", GAT_RATE),
    choice("in_drop", GAT_RATE),
    choice("negative_slope", GAT_RATE),
    choice("mask_rate", MASK),
    choice("drop_edge_rate", &[0.0, 0.05, 0.15, 0.20]),
    choice("alpha_l", &[1.0, 2.0, 3.0]),
    choice("replace_rate", GAT_RATE),
];

pub const S2GAE: &[ParamSpec] = &[
    choice("dim_hidden", WIDTH),
    choice("decode_channels", &[128.0, 256.0, 512.0, 1024.0]),
    ParamSpec {
        name: "decode_layers",
        domain: Domain::IntRange(1, 8),
    },
    choice("mask_ratio", MASK),
];

/// Names that set layer widths. They are sampled by the sweep but not
/// range-checked in hand-written configs, so small desk-scale models stay
/// expressible.
pub const WIDTH_PARAMS: &[&str] = &["emb_dim", "hid_dim", "num_hidden", "dim_hidden", "decode_channels", "batch_size"];

pub fn lookup(space: &[ParamSpec], name: &str) -> Option<Domain> {
    space.iter().find(|p| p.name == name).map(|p| p.domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn log_uniform_learning_rate() {
        let d = lookup(GENERAL, "lr").unwrap();
        assert!(d.is_log_scaled());
        let mut r = rng::seeded(3);
        let draws: Vec<f64> = (0..1000).map(|_| d.sample(&mut r)).collect();
        assert!(draws.iter().all(|&x| (1e-6..=1e-2).contains(&x)));
        let below = draws.iter().filter(|&&x| x < 1e-5).count() as f64;
        let sigma = (1000.0 * 0.25 * 0.75f64).sqrt();
        assert!((below - 250.0).abs() <= 3.0 * sigma, "{below}");
    }

    #[test]
    fn choices_stay_in_set() {
        let mut r = rng::seeded(1);
        for spec in GRAPHMAE.iter().chain(S2GAE) {
            for _ in 0..50 {
                let x = spec.domain.sample(&mut r);
                match spec.domain {
                    Domain::Choice(v) => assert!(v.contains(&x)),
                    Domain::IntRange(a, b) => assert!(x.fract() == 0.0 && x >= a as f64 && x <= b as f64),
                    Domain::Range(a, b) => assert!(x >= a && x <= b),
                }
            }
        }
    }

    #[test]
    fn describe_lists_the_set() {
        assert_eq!(lookup(GRAPHMAE, "mask_rate").unwrap().describe(), "{0.4, 0.5, 0.6, 0.7, 0.8}");
        assert!(!lookup(GRAPHMAE, "mask_rate").unwrap().in_hull(1.5));
    }
}
