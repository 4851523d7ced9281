//! CSV traces, metrics summaries and gnuplot scripts.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use symctl::batch::{map_runs, sweep_alpha, Scenario, SweepRow, NOMINAL_LABEL};
use symctl::composite::{CompositeFn, GRID_POINTS};
use symctl::sim::{metrics, simulate, Metrics, SimConfig, Trajectory};

use crate::error::CliError;

/// Line colours of the compared runs; the nominal run is drawn separately.
const PALETTE: [&str; 6] = ["#2ca02c", "#d62728", "#1f77b4", "#000000", "#9467bd", "#ff7f0e"];

/// Short SHA-256 of the configuration's canonical text.
pub fn config_hash(cfg: &SimConfig) -> String {
    let digest = Sha256::digest(format!("{cfg:?}").as_bytes());
    hex::encode(&digest[..8])
}

fn channel_names(prefix: &str, k: usize) -> Vec<String> {
    if k == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=k).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// `t,x1..xn,xn1..xnn,e_norm,u,un,uf,ua,ug,V`; input columns carry an index
/// only when there is more than one input.
pub fn csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("xn{i}")));
    cols.push("e_norm".into());
    for prefix in ["u", "un", "uf", "ua", "ug"] {
        cols.extend(channel_names(prefix, m));
    }
    cols.push("V".into());
    cols.join(",")
}

pub fn write_csv<W: Write>(tr: &Trajectory, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{}", csv_header(tr.layout.n, tr.layout.m))?;
    let mut line = String::new();
    for ((t, s), sig) in tr.times.iter().zip(&tr.states).zip(&tr.signals) {
        line.clear();
        let _ = write!(line, "{t}");
        for v in s.x.iter().chain(s.x_n.iter()) {
            let _ = write!(line, ",{v}");
        }
        let _ = write!(line, ",{}", sig.e.norm2());
        for block in [&sig.u, &sig.u_n, &sig.u_f, &sig.u_a, &sig.u_g] {
            for v in block.iter() {
                let _ = write!(line, ",{v}");
            }
        }
        let _ = write!(line, ",{}", sig.v);
        writeln!(w, "{line}")?;
    }
    w.flush()
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub label: String,
    pub variant: String,
    /// `None` when this run or the nominal run failed.
    pub metrics: Option<Metrics>,
    /// Failure message of a diverged run.
    pub error: Option<String>,
    /// Trace file; `None` when the run produced no trajectory.
    pub csv: Option<PathBuf>,
    pub seconds: f64,
    pub config_hash: String,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.error.is_some()
    }
}

/// Runs nominal plus every comparison concurrently, writing one CSV per
/// run, `<scenario>_metrics.csv` and `<scenario>.gp` into `out_dir`.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let runs = sc.runs();
    let finished = map_runs(&runs, |(label, cfg)| {
        let start = Instant::now();
        let result = simulate(cfg);
        let seconds = start.elapsed().as_secs_f64();
        let csv = match &result {
            Ok(tr) => {
                let path = out_dir.join(format!("{}_{label}.csv", sc.name));
                let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                write_csv(tr, file).map_err(|e| io_err(&path, e))?;
                Some(path)
            }
            Err(_) => None,
        };
        Ok::<_, CliError>((result, csv, seconds))
    });

    let mut results = Vec::with_capacity(runs.len());
    for r in finished {
        results.push(r?);
    }
    let nominal = results[0].0.as_ref().ok();
    let records: Vec<RunRecord> = runs
        .iter()
        .zip(&results)
        .map(|((label, cfg), (result, csv, seconds))| RunRecord {
            scenario: sc.name.clone(),
            label: label.clone(),
            variant: cfg.variant.name().to_string(),
            metrics: match (result, nominal) {
                (Ok(tr), Some(nom)) => metrics(tr, nom).ok(),
                _ => None,
            },
            error: result.as_ref().err().map(|e| e.to_string()),
            csv: csv.clone(),
            seconds: *seconds,
            config_hash: config_hash(cfg),
        })
        .collect();

    let summary = out_dir.join(format!("{}_metrics.csv", sc.name));
    write_file(&summary, &metrics_summary(&records))?;
    let plotted: Vec<RunRecord> = records.iter().filter(|r| r.csv.is_some()).cloned().collect();
    emit_plot_script(&plotted, &out_dir.join(format!("{}.gp", sc.name)))?;
    Ok(records)
}

pub fn metrics_summary(records: &[RunRecord]) -> String {
    let mut s = String::from("label,variant,ise,sup_err,effort,seconds,config_hash,status\n");
    for r in records {
        let (ise, sup, eff) = match &r.metrics {
            Some(m) => (m.ise.to_string(), m.sup_err.to_string(), m.control_effort.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let status = match &r.error {
            Some(e) => format!("\"{}\"", e.replace('"', "'")),
            None => "ok".into(),
        };
        let _ = writeln!(s, "{},{},{ise},{sup},{eff},{:.3},{},{status}", r.label, r.variant, r.seconds, r.config_hash);
    }
    s
}

fn gnuplot_quote(path: &Path) -> String {
    let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    format!("'{}'", name.replace('\'', "''"))
}

/// Overlays every state and input column versus time, one panel each,
/// with the nominal run drawn thick and dashed. CSV paths are taken
/// relative to the script's directory.
pub fn emit_plot_script(records: &[RunRecord], out: &Path) -> Result<(), CliError> {
    if records.is_empty() {
        return Err(CliError::Validation("no runs to plot".into()));
    }
    let csvs: Vec<(&RunRecord, &PathBuf)> = records
        .iter()
        .map(|r| {
            r.csv.as_ref().map(|c| (r, c)).ok_or_else(|| CliError::Validation(format!("run {} has no trace", r.label)))
        })
        .collect::<Result<_, _>>()?;
    let first = fs::read_to_string(csvs[0].1).map_err(|e| io_err(csvs[0].1, e))?;
    let header = first.lines().next().unwrap_or_default();
    let columns: Vec<&str> = header
        .split(',')
        .filter(|c| {
            (c.starts_with('x') && !c.starts_with("xn"))
                || *c == "u"
                || (c.starts_with('u') && c[1..].chars().all(|d| d.is_ascii_digit()))
        })
        .collect();

    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot {}", out.file_name().map(|f| f.to_string_lossy()).unwrap_or_default());
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 1000,{} noenhanced", 300 * columns.len());
    let _ = writeln!(s, "set output '{stem}.png'");
    let mut style = 0;
    for (r, _) in &csvs {
        style += 1;
        if r.label == NOMINAL_LABEL {
            let _ = writeln!(s, "set style line {style} lc rgb '#7f7f7f' lw 4 dt 2");
        } else {
            let color = PALETTE[(style - 1) % PALETTE.len()];
            let _ = writeln!(s, "set style line {style} lc rgb '{color}' lw 1.5");
        }
    }
    let _ = writeln!(s, "set multiplot layout {},1", columns.len());
    let _ = writeln!(s, "set xlabel 't [s]'");
    let _ = writeln!(s, "set grid");
    for col in &columns {
        let _ = writeln!(s, "set ylabel '{col}'");
        let entries: Vec<String> = csvs
            .iter()
            .enumerate()
            .map(|(i, (r, path))| {
                format!("{} using 't':'{col}' with lines ls {} title '{}'", gnuplot_quote(path), i + 1, r.label)
            })
            .collect();
        let _ = writeln!(s, "plot {}", entries.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    write_file(out, &s)
}

/// Writes `composite.csv` (`z,kappa,kappa_slope,kappa_curvature` over
/// `[0, 2b]`) and `composite.gp` with one panel per column.
pub fn write_composite(f: &CompositeFn, out_dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let csv = out_dir.join("composite.csv");
    let mut s = String::from("z,kappa,kappa_slope,kappa_curvature\n");
    let upper = 2.0 * f.b();
    for i in 0..=GRID_POINTS {
        let z = upper * i as f64 / GRID_POINTS as f64;
        let k = f.eval(z).map_err(|e| CliError::Validation(e.to_string()))?;
        let _ = writeln!(s, "{z},{},{},{}", k.value, k.slope, k.curvature);
    }
    write_file(&csv, &s)?;

    let script = out_dir.join("composite.gp");
    let mut g = String::new();
    let _ = writeln!(g, "# gnuplot composite.gp");
    let _ = writeln!(g, "set datafile separator ','");
    let _ = writeln!(g, "set terminal pngcairo size 700,900 noenhanced");
    let _ = writeln!(g, "set output 'composite.png'");
    let _ = writeln!(g, "set multiplot layout 3,1 title 'a = {}, b = {}, rho = {}'", f.a(), f.b(), f.rho());
    let _ = writeln!(g, "set grid");
    let _ = writeln!(g, "set arrow 1 from {0}, graph 0 to {0}, graph 1 nohead dt 2", f.a());
    let _ = writeln!(g, "set arrow 2 from {0}, graph 0 to {0}, graph 1 nohead dt 2", f.b());
    for (col, label) in [("kappa", "kappa(z)"), ("kappa_slope", "kappa'(z)"), ("kappa_curvature", "kappa''(z)")] {
        let _ = writeln!(g, "set ylabel \"{label}\"");
        let _ = writeln!(g, "plot 'composite.csv' using 'z':'{col}' with lines lw 2 lc rgb '#1f77b4' notitle");
    }
    let _ = writeln!(g, "unset multiplot");
    write_file(&script, &g)?;
    Ok((csv, script))
}

/// Runs `label` of the scenario (default: its first run with a fixed-gain
/// parameter) at each `α`.
pub fn sweep(sc: &Scenario, label: Option<&str>, alphas: &[f64]) -> Result<(String, Vec<SweepRow>), CliError> {
    let comparison = match label {
        Some(l) => {
            sc.comparison(l).ok_or_else(|| CliError::Validation(format!("scenario {} has no run `{l}`", sc.name)))?
        }
        None => sc.comparisons.iter().find(|c| c.variant.alpha().is_some()).ok_or_else(|| {
            CliError::Validation(format!("scenario {} has no run with a fixed-gain parameter", sc.name))
        })?,
    };
    let base = sc.config_for(comparison.variant.clone());
    let rows = sweep_alpha(&base, &sc.nominal_config(), alphas).map_err(|e| match e {
        symctl::Error::Diverged { .. } | symctl::Error::NonFiniteState { .. } => CliError::Diverged(e.to_string()),
        other => CliError::Validation(other.to_string()),
    })?;
    Ok((comparison.label.clone(), rows))
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("alpha,ise,sup_err\n");
    for r in rows {
        match &r.outcome {
            Ok(m) => {
                let _ = writeln!(s, "{},{},{}", r.alpha, m.ise, m.sup_err);
            }
            Err(e) => {
                let _ = writeln!(s, "{},diverged,\"{e}\"", r.alpha);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layouts() {
        assert_eq!(csv_header(2, 1), "t,x1,x2,xn1,xn2,e_norm,u,un,uf,ua,ug,V");
        assert_eq!(csv_header(1, 2), "t,x1,xn1,e_norm,u1,u2,un1,un2,uf1,uf2,ua1,ua2,ug1,ug2,V");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let sc = Scenario::parametric();
        assert_eq!(config_hash(&sc.config), config_hash(&sc.config.clone()));
        assert_eq!(config_hash(&sc.config).len(), 16);
        let other = SimConfig { dt: 2e-3, ..sc.config.clone() };
        assert_ne!(config_hash(&sc.config), config_hash(&other));
    }

    #[test]
    fn empty_plot_is_error() {
        let dir = std::env::temp_dir();
        assert!(emit_plot_script(&[], &dir.join("never.gp")).is_err());
    }
}
