//! File emission for the command-line tool. Every number is written with 17
//! significant digits; nothing time-dependent goes into result files except
//! the separate sweep timing table.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::admissibility::{AdmissibleSet, ParamPointResult, SweepAxes, Verdict};
use crate::error::{Error, Result};
use crate::fields::fmt17;
use crate::reversal::DecompositionSolution;
use crate::solver::Trajectory;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const REVERSE_FILE: &str = "reverse.csv";
pub const BENCH_FILE: &str = "bench.txt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.json";
pub const SWEEP_TIMING_FILE: &str = "sweep_timing.csv";
pub const RESUME_MARKER_FILE: &str = "sweep.resume";
pub const PARTIAL_FILE: &str = "sweep.partial.csv";

pub fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)
}

/// Writes `trajectory.csv` and one CSV per stored snapshot field, named by
/// step index. Returns the paths written.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join(TRAJECTORY_FILE);
    let mut out = BufWriter::new(File::create(&path)?);
    traj.write_csv(&mut out)?;
    out.flush()?;
    written.push(path);
    if traj.snapshots.is_empty() {
        return Ok(written);
    }
    let snap_dir = dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir)?;
    for snap in &traj.snapshots {
        for (name, field) in [("ux", &snap.vel.ux), ("uy", &snap.vel.uy), ("rho", &snap.rho)] {
            let path = snap_dir.join(format!("step_{:08}_{name}.csv", snap.step));
            let mut out = BufWriter::new(File::create(&path)?);
            field.write_csv(name, snap.t, &mut out)?;
            out.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

pub const REVERSE_HEADER: &str = "y,c_y,j_t0,j_inf_numeric,j_inf_closed_form,rel_diff";

pub fn write_reverse_table<W: Write>(sol: &DecompositionSolution, mut out: W) -> io::Result<()> {
    writeln!(out, "{REVERSE_HEADER}")?;
    for k in 0..sol.ys.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(sol.ys[k]),
            fmt17(sol.c[k]),
            fmt17(sol.j[k][0]),
            fmt17(sol.j_inf_numeric[k]),
            fmt17(sol.j_inf_closed_form[k]),
            fmt17(sol.relative_difference(k))
        )?;
    }
    Ok(())
}

/// Structured sweep summary with the configuration text echoed verbatim.
pub fn sweep_summary_json(set: &AdmissibleSet, config_text: &str) -> String {
    let boundaries: Vec<Value> = set
        .summaries()
        .iter()
        .map(|s| json!({ "axis": s.name, "admissible_min": s.admissible_min, "admissible_max": s.admissible_max }))
        .collect();
    let results: Vec<Value> = set
        .results
        .iter()
        .map(|r| {
            json!({
                "alpha": r.spec.alpha,
                "eps": r.spec.eps,
                "k": r.spec.k,
                "verdict": r.verdict.as_str(),
                "final_l2": finite_or_null(r.final_l2),
                "energy_ratio": finite_or_null(r.energy_ratio),
                "diverged": r.diverged,
                "little_o_pass": r.little_o_pass,
                "seconds": r.t_reached,
            })
        })
        .collect();
    let summary = json!({
        "config": config_text,
        "points": set.results.len(),
        "axes": { "alpha": set.axes.alpha, "eps": set.axes.eps, "k": set.axes.k },
        "counts": {
            "admissible": set.count(Verdict::Admissible),
            "inadmissible": set.count(Verdict::Inadmissible),
            "inconclusive": set.count(Verdict::Inconclusive),
        },
        "boundaries": boundaries,
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary is valid JSON");
    text.push('\n');
    text
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Sweep results stored so far: the partial table rows whose indices are
/// listed in the resumption marker. Missing files mean nothing is stored.
pub fn load_resume(dir: &Path, axes: &SweepAxes) -> Result<BTreeMap<usize, ParamPointResult>> {
    let marker = dir.join(RESUME_MARKER_FILE);
    let partial = dir.join(PARTIAL_FILE);
    if !marker.exists() || !partial.exists() {
        return Ok(BTreeMap::new());
    }
    let mut listed = std::collections::BTreeSet::new();
    for line in BufReader::new(File::open(&marker)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let i: usize = line.trim().parse().map_err(|_| Error::domain(format!("bad marker line '{line}'")))?;
        listed.insert(i);
    }
    let mut done = BTreeMap::new();
    for line in BufReader::new(File::open(&partial)?).lines() {
        let line = line?;
        let Some((idx, row)) = line.split_once(',') else { continue };
        let Ok(i) = idx.parse::<usize>() else { continue };
        if !listed.contains(&i) {
            continue;
        }
        let r = ParamPointResult::parse_csv_row(row)?;
        if i >= axes.len() || axes.point(i) != r.spec {
            return Err(Error::domain(format!(
                "stored result {i} does not match the configured sweep; remove {} to start over",
                marker.display()
            )));
        }
        done.insert(i, r);
    }
    Ok(done)
}

/// Appends finished points to the partial table and the resumption marker.
pub struct ResumeLog {
    partial: File,
    marker: File,
}

impl ResumeLog {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let open = |name| OpenOptions::new().create(true).append(true).open(dir.join(name));
        Ok(Self { partial: open(PARTIAL_FILE)?, marker: open(RESUME_MARKER_FILE)? })
    }

    pub fn record(&mut self, index: usize, result: &ParamPointResult) -> io::Result<()> {
        writeln!(self.partial, "{index},{}", result.csv_row())?;
        self.partial.sync_data()?;
        writeln!(self.marker, "{index}")?;
        self.marker.sync_data()
    }

    /// Removes the partial table and marker after a completed sweep.
    pub fn finish(self, dir: &Path) -> io::Result<()> {
        drop(self);
        fs::remove_file(dir.join(PARTIAL_FILE))?;
        fs::remove_file(dir.join(RESUME_MARKER_FILE))
    }
}

/// Wall-clock seconds per point; zero for points loaded from a previous run.
pub fn write_sweep_timing<W: Write>(set: &AdmissibleSet, mut out: W) -> io::Result<()> {
    writeln!(out, "index,wall_seconds")?;
    for (i, r) in set.results.iter().enumerate() {
        writeln!(out, "{i},{}", fmt17(r.wall_seconds))?;
    }
    Ok(())
}
