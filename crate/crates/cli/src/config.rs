//! Layered run configuration: built-in defaults, then the JSON config file,
//! then command-line flags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use scfqkd_core::{validate_config, ChannelConfig, ProtocolConfig};

use crate::CliError;

/// Every configurable field, each optional so layers can be merged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(rename = "nu_upper_A", skip_serializing_if = "Option::is_none")]
    pub nu_upper_a: Option<f64>,
    #[serde(rename = "nu_upper_B", skip_serializing_if = "Option::is_none")]
    pub nu_upper_b: Option<f64>,
    #[serde(rename = "mu_upper_A", skip_serializing_if = "Option::is_none")]
    pub mu_upper_a: Option<f64>,
    #[serde(rename = "mu_upper_B", skip_serializing_if = "Option::is_none")]
    pub mu_upper_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_windows: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_d: Option<f64>,
    #[serde(rename = "E_d", skip_serializing_if = "Option::is_none")]
    pub e_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
}

impl ConfigLayer {
    /// Fields set in `top` win over fields set in `self`.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            nu_upper_a: top.nu_upper_a.or(self.nu_upper_a),
            nu_upper_b: top.nu_upper_b.or(self.nu_upper_b),
            mu_upper_a: top.mu_upper_a.or(self.mu_upper_a),
            mu_upper_b: top.mu_upper_b.or(self.mu_upper_b),
            p0: top.p0.or(self.p0),
            r: top.r.or(self.r),
            n_windows: top.n_windows.or(self.n_windows),
            distance_km: top.distance_km.or(self.distance_km),
            alpha_f: top.alpha_f.or(self.alpha_f),
            eta_d: top.eta_d.or(self.eta_d),
            p_d: top.p_d.or(self.p_d),
            e_d: top.e_d.or(self.e_d),
            f: top.f.or(self.f),
        }
    }

    /// Reads a flat config object, or the `config` member of a sidecar
    /// previously written next to an output file.
    pub fn from_file(path: &Path) -> Result<ConfigLayer, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let is_sidecar = value
            .as_object()
            .is_some_and(|o| o.contains_key("command") && o.contains_key("config"));
        if is_sidecar {
            value = value["config"].take();
        }
        check_field_types(&value)
            .map_err(|msg| CliError::Config(format!("{}: {msg}", path.display())))?;
        serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Names the offending key when a value has the wrong JSON type; unknown
/// keys are left for the deserializer to report.
fn check_field_types(value: &Value) -> Result<(), String> {
    let object = value
        .as_object()
        .ok_or_else(|| "config must be a JSON object".to_string())?;
    for (key, v) in object {
        let ok = match key.as_str() {
            "N" => v.is_u64(),
            _ => v.is_number(),
        };
        if !ok {
            let expected = if key == "N" {
                "a non-negative integer"
            } else {
                "a number"
            };
            return Err(format!("{key} must be {expected}, got {v}"));
        }
    }
    Ok(())
}

/// Resolved configuration, serialized as the same flat object the config file uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Effective {
    #[serde(flatten)]
    pub protocol: ProtocolConfig,
    #[serde(flatten)]
    pub channel: ChannelConfig,
}

/// Built-in values: the standard fiber link and source settings that yield a key at 100 km.
pub fn defaults() -> ConfigLayer {
    let channel = ChannelConfig::standard_fiber(50.0);
    ConfigLayer {
        nu_upper_a: Some(1e-8),
        nu_upper_b: Some(1e-8),
        mu_upper_a: Some(0.002),
        mu_upper_b: Some(0.002),
        p0: Some(0.97),
        r: Some(0.0),
        n_windows: Some(100_000_000),
        distance_km: Some(channel.distance_km),
        alpha_f: Some(channel.alpha_f),
        eta_d: Some(channel.eta_d),
        p_d: Some(channel.p_d),
        e_d: Some(channel.e_d),
        f: Some(channel.f),
    }
}

/// Source settings for Monte-Carlo runs: every test-window population is
/// large enough at `N = 1e8` for its count to be close to Gaussian.
pub fn monte_carlo_defaults() -> ConfigLayer {
    ConfigLayer {
        mu_upper_a: Some(0.1),
        mu_upper_b: Some(0.1),
        p0: Some(0.5),
        r: Some(0.1),
        ..ConfigLayer::default()
    }
}

/// Fills every field and validates the result.
pub fn resolve(layer: ConfigLayer) -> Result<Effective, CliError> {
    let layer = defaults().overlay(layer);
    let missing = |name: &str| CliError::Config(format!("{name} is not set"));
    let protocol = ProtocolConfig {
        nu_upper_a: layer.nu_upper_a.ok_or_else(|| missing("nu_upper_A"))?,
        nu_upper_b: layer.nu_upper_b.ok_or_else(|| missing("nu_upper_B"))?,
        mu_upper_a: layer.mu_upper_a.ok_or_else(|| missing("mu_upper_A"))?,
        mu_upper_b: layer.mu_upper_b.ok_or_else(|| missing("mu_upper_B"))?,
        p0: layer.p0.ok_or_else(|| missing("p0"))?,
        r: layer.r.ok_or_else(|| missing("r"))?,
        n_windows: layer.n_windows.ok_or_else(|| missing("N"))?,
    };
    let channel = ChannelConfig {
        distance_km: layer.distance_km.ok_or_else(|| missing("distance_km"))?,
        alpha_f: layer.alpha_f.ok_or_else(|| missing("alpha_f"))?,
        eta_d: layer.eta_d.ok_or_else(|| missing("eta_d"))?,
        p_d: layer.p_d.ok_or_else(|| missing("p_d"))?,
        e_d: layer.e_d.ok_or_else(|| missing("E_d"))?,
        f: layer.f.ok_or_else(|| missing("f"))?,
    };
    let (protocol, channel) =
        validate_config(protocol, channel).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Effective { protocol, channel })
}

/// Provenance record written next to an output file.
#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    config: &'a Effective,
    run: Value,
}

pub fn write_sidecar(
    out: &Path,
    command: &str,
    effective: &Effective,
    run: Value,
) -> Result<(), CliError> {
    let mut path = out.as_os_str().to_owned();
    path.push(".config.json");
    let sidecar = Sidecar {
        command,
        config: effective,
        run,
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("config serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(Path::new(&path), e))
}
