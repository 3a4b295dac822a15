//! Output formatting: CSV and JSON-line writers plus the run manifest.
//!
//! Every numeric cell uses Rust's shortest round-trip float formatting, so
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qfi_core::bench::{ConvergenceRow, PstarRow, ScalingResult, ScalingRow};
use qfi_core::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Data sink: a file (plus manifest alongside) or stdout.
pub enum Sink {
    File(PathBuf),
    Stdout,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Sink {
        match out {
            Some(p) => Sink::File(p),
            None => Sink::Stdout,
        }
    }

    pub fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match self {
            Sink::File(p) => Box::new(BufWriter::new(File::create(p)?)),
            Sink::Stdout => Box::new(std::io::stdout().lock()),
        })
    }

    pub fn manifest_path(&self) -> Option<PathBuf> {
        match self {
            Sink::File(p) => {
                let mut name = p.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                Some(p.with_file_name(name))
            }
            Sink::Stdout => None,
        }
    }
}

/// Run manifest: everything needed to regenerate the data file
/// bit-identically with the same library version.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize, S: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub format: &'a str,
    pub config: C,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<S>,
}

pub fn write_manifest<C: Serialize, S: Serialize>(
    sink: &Sink,
    manifest: &Manifest<'_, C, S>,
) -> Result<()> {
    if let Some(path) = sink.manifest_path() {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, manifest)
            .map_err(|e| qfi_core::Error::Parse(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

fn json_line<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| qfi_core::Error::Parse(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

fn opt_cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_convergence(w: &mut dyn Write, rows: &[ConvergenceRow], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "n_particles,order,p,f_n,f_q,gap")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.n_particles, r.order, r.p, r.f_n, r.f_q, r.gap
                )?;
            }
        }
        Format::Json => {
            for r in rows {
                json_line(w, r)?;
            }
        }
    }
    Ok(())
}

pub fn write_pstar(w: &mut dyn Write, rows: &[PstarRow], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "n_particles,k,order,detectable,pstar")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.n_particles,
                    r.k,
                    r.order,
                    r.detectable,
                    opt_cell(&r.pstar)
                )?;
            }
        }
        Format::Json => {
            for r in rows {
                json_line(w, r)?;
            }
        }
    }
    Ok(())
}

pub fn write_scaling_rows(w: &mut dyn Write, rows: &[ScalingRow], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "n_particles,order,m,mean_err,std_err")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.n_particles, r.order, r.m, r.mean_err, r.std_err
                )?;
            }
        }
        Format::Json => {
            for r in rows {
                json_line(w, r)?;
            }
        }
    }
    Ok(())
}

/// Sweep summary (interpolated targets and exponent fits) appended to the
/// JSON record stream, or returned for the manifest in CSV mode.
#[derive(Serialize)]
pub struct SweepSummary<'a> {
    pub target_error: f64,
    pub m_at_target: &'a [qfi_core::bench::MAtTarget],
    pub fits: &'a [qfi_core::bench::OrderFit],
}

pub fn write_sweep(w: &mut dyn Write, result: &ScalingResult, format: Format) -> Result<()> {
    write_scaling_rows(w, &result.rows, format)?;
    if format == Format::Json {
        json_line(
            w,
            &SweepSummary {
                target_error: result.target_error,
                m_at_target: &result.m_at_target,
                fits: &result.fits,
            },
        )?;
    }
    Ok(())
}

/// Estimation record with the frozen field set.
#[derive(Serialize)]
pub struct EstimateRecord {
    pub n: u32,
    #[serde(rename = "M")]
    pub m: usize,
    pub value: f64,
    pub method: String,
    pub seed: String,
}

pub fn write_estimates(w: &mut dyn Write, rows: &[EstimateRecord], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "n,M,value,method,seed")?;
            for r in rows {
                writeln!(w, "{},{},{},{},{}", r.n, r.m, r.value, r.method, r.seed)?;
            }
        }
        Format::Json => {
            for r in rows {
                json_line(w, r)?;
            }
        }
    }
    Ok(())
}

pub fn write_json_document<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| qfi_core::Error::Parse(e.to_string()))?;
    writeln!(w, "{text}")?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}
