//! Output directory bookkeeping and the manifest of written files.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// JSON floats with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", f64::from(v))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    files: &'a [Entry],
}

pub struct Artifacts {
    dir: PathBuf,
    entries: Vec<Entry>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    /// Writes `name` (a relative path, `/`-separated) and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        log::debug!("wrote {}", path.display());
        self.entries.push(Entry {
            path: name.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &to_json(value)?)
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self, command: &str) -> Result<PathBuf> {
        let manifest = Manifest {
            command,
            files: &self.entries,
        };
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, to_json(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Generic plotting script for the CSV files written next to it.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot tfilm CSV output.

usage: plot.py FILE.csv [X_COLUMN] [Y_COLUMN ...]

Every CSV written by tfilm has a header row and numeric columns. The first
column is the abscissa unless X_COLUMN is given; all other columns are drawn
unless Y_COLUMNs are given. Axes switch to logarithmic scale when every value
on them is positive and spans more than two decades.

Column contracts:
  trace.csv   t, mass, min_h, h4_norm, rho, phase_unwrapped, slaving_defect, dist_M0
  spiral.csv  t, delta_pred, delta_fit, theta_pred, theta_fit, r0_pred, r_fit
  *coeffs.csv n, re, im
"""
import csv
import sys

import matplotlib.pyplot as plt


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    with open(sys.argv[1]) as f:
        rows = list(csv.reader(f))
    header, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
    cols = {name: [r[i] for r in data] for i, name in enumerate(header)}
    x = sys.argv[2] if len(sys.argv) > 2 else header[0]
    ys = sys.argv[3:] or [h for h in header if h != x]
    fig, axes = plt.subplots(len(ys), 1, sharex=True, squeeze=False)
    for ax, y in zip(axes[:, 0], ys):
        ax.plot(cols[x], cols[y])
        ax.set_ylabel(y)
        for vals, setter in ((cols[x], ax.set_xscale), (cols[y], ax.set_yscale)):
            if vals and min(vals) > 0 and max(vals) > 100 * min(vals):
                setter("log")
    axes[-1, 0].set_xlabel(x)
    fig.tight_layout()
    plt.show()


if __name__ == "__main__":
    main()
"#;
