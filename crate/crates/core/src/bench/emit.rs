use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::AggregateRow;
use crate::error::{Error, Result};
use crate::model::DesignMode;
use crate::problem::Problem;

pub const CSV_HEADER: &str = "snr_db,problem,design_mode,sum_amse,aser,total_power,max_violation,iterations";

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Shortest rendering of `x` rounded to 15 significant digits: positional
/// for decimal exponents in `[-5, 15)`, scientific otherwise.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let positional = format!("{:.*}", (14 - exp) as usize, x);
        trim_zeros(&positional).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

/// Writes the header and one line per row, LF-terminated.
pub fn write_csv<W: Write>(rows: &[AggregateRow], mut out: W) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            format_float(r.snr_db),
            r.problem,
            r.design_mode.name(),
            format_float(r.sum_amse),
            format_float(r.aser),
            format_float(r.total_power),
            format_float(r.max_violation),
            format_float(r.iterations)
        )
        .expect("writing to a String");
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn emit_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write_csv(rows, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Parses text written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or unexpected CSV header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("row {}: expected 8 fields, got {}", i + 1, f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad number '{s}'", i + 1)));
            Ok(AggregateRow {
                snr_db: num(f[0])?,
                problem: f[1].parse::<Problem>()?,
                design_mode: f[2].parse::<DesignMode>()?,
                sum_amse: num(f[3])?,
                aser: num(f[4])?,
                total_power: num(f[5])?,
                max_violation: num(f[6])?,
                iterations: num(f[7])?,
            })
        })
        .collect()
}

struct Metric {
    file: &'static str,
    label: &'static str,
    log_y: bool,
    value: fn(&AggregateRow) -> f64,
}

const METRICS: [Metric; 3] = [
    Metric { file: "amse", label: "sum AMSE", log_y: false, value: |r| r.sum_amse },
    Metric { file: "aser", label: "ASER", log_y: true, value: |r| r.aser },
    Metric { file: "power", label: "total BS power", log_y: false, value: |r| r.total_power },
];

/// Writes `amse.dat`, `aser.dat`, `power.dat` (one gnuplot data block per
/// problem and design mode) and a `plots.gp` script rendering each to SVG.
/// Returns the written paths.
pub fn emit_plots(rows: &[AggregateRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut series: Vec<(Problem, DesignMode)> = Vec::new();
    for r in rows {
        if !series.contains(&(r.problem, r.design_mode)) {
            series.push((r.problem, r.design_mode));
        }
    }
    let mut written = Vec::new();
    let mut script =
        String::from("set terminal svg size 800,600\nset grid\nset key outside right\nset xlabel \"SNR (dB)\"\n");
    for m in &METRICS {
        let mut data = String::new();
        for (i, (p, mode)) in series.iter().enumerate() {
            if i > 0 {
                data.push_str("\n\n");
            }
            writeln!(data, "# {p} {}", mode.name()).expect("writing to a String");
            for r in rows.iter().filter(|r| r.problem == *p && r.design_mode == *mode) {
                writeln!(data, "{} {}", format_float(r.snr_db), format_float((m.value)(r)))
                    .expect("writing to a String");
            }
        }
        let path = out_dir.join(format!("{}.dat", m.file));
        fs::write(&path, data)?;
        written.push(path);

        writeln!(script, "\nset output \"{}.svg\"\nset ylabel \"{}\"", m.file, m.label).expect("writing to a String");
        script.push_str(if m.log_y { "set logscale y\n" } else { "unset logscale y\n" });
        if series.is_empty() {
            continue;
        }
        let plots: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(i, (p, mode))| {
                format!("\"{}.dat\" index {i} using 1:2 with linespoints title \"{p} {}\"", m.file, mode.name())
            })
            .collect();
        writeln!(script, "plot {}", plots.join(", \\\n     ")).expect("writing to a String");
    }
    let path = out_dir.join("plots.gp");
    fs::write(&path, script)?;
    written.push(path);
    Ok(written)
}
