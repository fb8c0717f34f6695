//! Versioned text container for trained networks.
//!
//! One `key = value` entry per line; blank lines and lines starting with `#` are
//! skipped. Arrays are whitespace-separated decimals. The grammar is documented in
//! `docs/checkpoint.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::adam::OptimState;
use super::net::FieldNet;
use crate::error::{Error, Result};
use crate::sampler::{PriorKind, PriorSpec};
use crate::trajectory::{Bridge, Family, TrajectorySpec};
use crate::CHECKPOINT_FORMAT_VERSION;

pub const SUPPORTED_MAJOR: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: FieldNet,
    pub spec: TrajectorySpec,
    pub prior: PriorSpec,
    pub optimizer: Option<OptimState>,
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:.16e}").unwrap();
    }
    s
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String> {
        let spec = &self.spec;
        let (sigma_min, sigma_max) = match &spec.bridge {
            Bridge::Linear {
                sigma_min,
                sigma_max,
            } => (*sigma_min, *sigma_max),
            Bridge::Custom(_) => {
                return Err(Error::invalid(
                    "custom bridge schedules cannot be serialized",
                ))
            }
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("format_version", CHECKPOINT_FORMAT_VERSION.to_string());
        kv("spec.family", spec.family.name().to_string());
        kv("spec.dim", spec.dim.to_string());
        kv("spec.horizon", format!("{:.16e}", spec.horizon));
        kv("spec.t_min", format!("{:.16e}", spec.t_min));
        kv(
            "spec.curve_exponent",
            format!("{:.16e}", spec.curve_exponent),
        );
        kv("spec.overlap", spec.overlap.to_string());
        kv("spec.bridge_sigma_min", format!("{sigma_min:.16e}"));
        kv("spec.bridge_sigma_max", format!("{sigma_max:.16e}"));
        kv(
            "spec.poisson_constant",
            format!("{:.16e}", spec.poisson_constant),
        );
        let p = &self.prior;
        kv("prior.kind", p.kind.name().to_string());
        kv("prior.sigma", format!("{:.16e}", p.sigma));
        kv("prior.tau", format!("{:.16e}", p.tau));
        kv("prior.max_exponent", format!("{:.16e}", p.max_exponent));
        kv("prior.radius", format!("{:.16e}", p.radius));
        let widths: Vec<String> = self.net.widths().iter().map(|w| w.to_string()).collect();
        kv("layer_widths", widths.join(" "));
        for l in 0..self.net.layer_count() {
            let (w, b) = self.net.layer(l);
            kv(&format!("layer.{l}.weight"), join(w));
            kv(&format!("layer.{l}.bias"), join(b));
        }
        if let Some(o) = &self.optimizer {
            kv("optimizer.step", o.step.to_string());
            kv("optimizer.base_lr", format!("{:.16e}", o.base_lr));
            kv("optimizer.lr", format!("{:.16e}", o.lr));
            kv("optimizer.m", join(&o.m));
            kv("optimizer.v", join(&o.v));
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
            let k = k.trim().to_string();
            if map
                .insert(k.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::parse(i + 1, format!("duplicate key `{k}`")));
            }
        }
        let mut r = Reader { map };
        let version = r.take("format_version")?;
        let (line, version) = version;
        let major: u32 = version
            .split('.')
            .next()
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| Error::parse(line, format!("bad format_version `{version}`")))?;
        if major != SUPPORTED_MAJOR {
            return Err(Error::parse(
                line,
                format!("unsupported checkpoint major version {major} (reader supports {SUPPORTED_MAJOR})"),
            ));
        }

        let family = r.with("spec.family", Family::from_name)?;
        let mut spec = TrajectorySpec::new(family, r.num("spec.dim")?);
        spec.horizon = r.num("spec.horizon")?;
        spec.t_min = r.num("spec.t_min")?;
        spec.curve_exponent = r.num("spec.curve_exponent")?;
        spec.overlap = r.num("spec.overlap")?;
        spec.bridge = Bridge::Linear {
            sigma_min: r.num("spec.bridge_sigma_min")?,
            sigma_max: r.num("spec.bridge_sigma_max")?,
        };
        spec.poisson_constant = r.num("spec.poisson_constant")?;
        spec.validate()?;

        let prior = PriorSpec {
            kind: r.with("prior.kind", PriorKind::from_name)?,
            sigma: r.num("prior.sigma")?,
            tau: r.num("prior.tau")?,
            max_exponent: r.num("prior.max_exponent")?,
            radius: r.num("prior.radius")?,
        };
        prior.validate()?;

        let widths: Vec<usize> = r.array("layer_widths")?;
        let mut params = Vec::new();
        for l in 0..widths.len().saturating_sub(1) {
            let w: Vec<f64> = r.array(&format!("layer.{l}.weight"))?;
            if w.len() != widths[l] * widths[l + 1] {
                return Err(r.err(&format!("layer.{l}.weight"), "wrong number of weights"));
            }
            let b: Vec<f64> = r.array(&format!("layer.{l}.bias"))?;
            if b.len() != widths[l + 1] {
                return Err(r.err(&format!("layer.{l}.bias"), "wrong number of biases"));
            }
            params.extend(w);
            params.extend(b);
        }
        let net = FieldNet::from_params(&widths, params)?;
        if net.input_dim() != spec.dim + 2 || net.output_dim() != spec.dim {
            return Err(Error::invalid("layer widths do not match spec.dim"));
        }

        let optimizer = if r.map.contains_key("optimizer.step") {
            let mut o = OptimState::new(net.param_count(), r.num("optimizer.base_lr")?)?;
            o.step = r.num("optimizer.step")?;
            o.lr = r.num("optimizer.lr")?;
            o.m = r.array("optimizer.m")?;
            o.v = r.array("optimizer.v")?;
            if o.m.len() != net.param_count() || o.v.len() != net.param_count() {
                return Err(Error::invalid(
                    "optimizer moments do not match the parameter count",
                ));
            }
            Some(o)
        } else {
            None
        };

        if let Some((k, (line, _))) = r.map.iter().next() {
            return Err(Error::parse(*line, format!("unknown key `{k}`")));
        }
        Ok(Checkpoint {
            net,
            spec,
            prior,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

struct Reader {
    map: BTreeMap<String, (usize, String)>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Result<(usize, String)> {
        self.map
            .remove(key)
            .ok_or_else(|| Error::parse(0, format!("missing key `{key}`")))
    }

    fn err(&self, key: &str, msg: &str) -> Error {
        Error::parse(0, format!("{key}: {msg}"))
    }

    fn with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
        let (line, v) = self.take(key)?;
        f(&v).map_err(|e| Error::parse(line, format!("{key}: {e}")))
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.take(key)?;
        v.parse()
            .map_err(|_| Error::parse(line, format!("{key}: cannot parse `{v}`")))
    }

    fn array<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let (line, v) = self.take(key)?;
        v.split_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|_| Error::parse(line, format!("{key}: cannot parse `{tok}`")))
            })
            .collect()
    }
}
