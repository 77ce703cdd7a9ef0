//! CSV rows and the optional plotting helper.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use scfqkd_core::{KeyRateReport, Mode, RateDetail};

use crate::CliError;

pub const HEADER: [&str; 9] = [
    "distance_km",
    "nu",
    "mode",
    "p0_opt",
    "mu_opt",
    "key_rate",
    "e_ph",
    "E_K",
    "flags",
];

/// Seventeen significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One evaluated (distance, nu, mode) point.
#[derive(Debug, Clone)]
pub struct Row {
    pub distance_km: f64,
    pub nu: f64,
    pub mode: Mode,
    pub p0: f64,
    pub mu: f64,
    pub report: KeyRateReport,
    pub mu_at_bound: bool,
}

impl Row {
    /// Semicolon-separated conditions worth noticing; empty when there are none.
    pub fn flags(&self) -> String {
        let mut flags = Vec::new();
        if self.report.no_key {
            flags.push("no_key");
        }
        if self.mu_at_bound {
            flags.push("mu_at_bound");
        }
        if self.report.summary.bracket_clamped {
            flags.push("bracket_clamped");
        }
        if let RateDetail::Aopp { stats, .. } = self.report.detail {
            if stats.empty {
                flags.push("aopp_empty");
            }
        }
        flags.join(";")
    }

    fn record(&self) -> [String; 9] {
        [
            num(self.distance_km),
            num(self.nu),
            self.mode.to_string(),
            num(self.p0),
            num(self.mu),
            num(self.report.key_rate),
            num(self.report.e_ph()),
            num(self.report.bit_error()),
            self.flags(),
        ]
    }
}

/// Writes the header and `rows` to `out`, or to stdout.
pub fn write_csv(rows: &[Row], out: Option<&Path>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(File::create(path).map_err(|e| CliError::io(path, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let path = out.unwrap_or(Path::new("<stdout>"));
    let to_io = |e: csv::Error| CliError::io(path, e.into());
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(HEADER).map_err(to_io)?;
    for row in rows {
        writer.write_record(row.record()).map_err(to_io)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// A ready-to-run matplotlib script drawing key rate against distance,
/// one curve per (nu, mode), on a log scale.
pub fn plot_script(csv_path: &Path) -> String {
    let csv_path = csv_path
        .display()
        .to_string()
        .replace('\\', "\\\\")
        .replace('\'', "\\'");
    format!(
        r#"#!/usr/bin/env python3
"""Plot key rate against distance from an scfqkd sweep."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else '{csv_path}'
curves = defaultdict(list)
with open(path, newline="") as f:
    for row in csv.DictReader(f):
        rate = float(row["key_rate"])
        if rate > 0:
            curves[(float(row["nu"]), row["mode"])].append((float(row["distance_km"]), rate))

fig, ax = plt.subplots(figsize=(6, 4.5))
for (nu, mode), points in sorted(curves.items()):
    xs, ys = zip(*sorted(points))
    ax.semilogy(xs, ys, label=f"nu = {{nu:g}}, {{mode}}")
ax.set_xlabel("distance (km)")
ax.set_ylabel("key rate per window")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(0.0), "0.0000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn plot_script_names_the_csv() {
        let script = plot_script(Path::new("out/sweep.csv"));
        assert!(script.contains("'out/sweep.csv'"));
        assert!(script.contains("semilogy"));
    }
}
