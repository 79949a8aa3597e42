//! Named setups for the reference figures.

use crate::config::{ExperimentConfig, OutputConfig};
use crate::error::CliError;

pub const PRESETS: &[&str] = &["fig3a", "fig3b", "fig3c", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Subcommand a preset is meant for.
pub fn intended_command(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3a" | "fig3b" | "fig3c" => "channel-map",
        "fig4" | "fig5" | "fig7" => "ber-sweep",
        "fig6" => "mobility",
        "fig8" => "throughput-sweep",
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let mut c = ExperimentConfig::default();
    c.output = OutputConfig {
        name: Some(name.to_string()),
        ..OutputConfig::default()
    };
    match name {
        "fig3a" => c.layout.spacings = vec![0.5],
        "fig3b" => c.layout.spacings = vec![1.0],
        "fig3c" => c.layout.spacings = vec![2.0],
        // correlation: LEDs pulled together
        "fig4" => {
            c.layout.spacings = vec![0.25, 0.5, 1.0];
            c.sweep.snr_stop_db = 120.0;
        }
        "fig5" => {
            c.layout.semi_angles = vec![15.0, 30.0, 45.0];
            c.sweep.snr_stop_db = 120.0;
        }
        "fig6" => {}
        "fig7" => c.layout.mimo_orders = vec![2, 4, 8],
        "fig8" => {
            c.layout.mimo_orders = vec![2, 4, 8];
            c.simulation.monte_carlo = false;
            c.sweep.snr_stop_db = 120.0;
        }
        _ => {
            return Err(CliError::Config(format!(
                "unknown preset `{name}`; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(c)
}
