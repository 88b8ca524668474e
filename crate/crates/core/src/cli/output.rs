//! CSV writers. Floats use Rust's shortest round-trip formatting, so identical
//! runs produce identical bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::control::SearchResult;
use crate::grid::WaveFunction;
use crate::splitting::Diagnostics;

/// Shortest round-trip decimal, in scientific notation for very small or very
/// large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn timeseries_header(dim: usize) -> String {
    let mut h = String::from("t,mass,h1,w1,w2,energy");
    for a in 0..dim {
        h.push_str(&format!(",c{}", ["x", "y", "z"][a]));
    }
    h
}

pub fn write_timeseries(path: &Path, series: &[Diagnostics], dim: usize) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", timeseries_header(dim))?;
    for d in series {
        let row = [d.t, d.mass, d.h1, d.w1, d.w2, d.energy];
        write!(w, "{}", row.map(fmt_f64).join(","))?;
        for c in &d.centroid[..dim] {
            write!(w, ",{}", fmt_f64(*c))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_{}.csv", fmt_f64(t))
}

pub fn write_snapshot(path: &Path, psi: &WaveFunction) -> io::Result<()> {
    let g = psi.grid();
    let mut w = create(path)?;
    let coords: Vec<String> = (1..=g.dim()).map(|a| format!("x{a}")).collect();
    writeln!(w, "{},re,im,abs2", coords.join(","))?;
    for (i, z) in psi.values().iter().enumerate() {
        let x = g.coords(i);
        for c in &x[..g.dim()] {
            write!(w, "{},", fmt_f64(*c))?;
        }
        writeln!(w, "{},{},{}", fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm_sqr()))?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub error: f64,
    pub rate: Option<f64>,
}

pub fn write_sweep(path: &Path, param: &str, rows: &[SweepRow]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "param,value,error,rate")?;
    for r in rows {
        match r.rate {
            Some(rate) => writeln!(w, "{param},{},{},{}", fmt_f64(r.value), fmt_f64(r.error), fmt_f64(rate))?,
            None => writeln!(w, "{param},{},{},", fmt_f64(r.value), fmt_f64(r.error))?,
        }
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub direction: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

pub fn write_gradcheck(path: &Path, rows: &[GradcheckRow]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "direction,adjoint,fd,rel_error")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.direction,
            fmt_f64(r.adjoint),
            fmt_f64(r.finite_difference),
            fmt_f64(r.rel_error)
        )?;
    }
    w.flush()
}

/// `k,a_k` rows followed by one `# baseline=…,best=…,evaluations=…` line.
pub fn write_search(path: &Path, result: &SearchResult) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "k,a_k")?;
    for (k, a) in result.coefficients.iter().enumerate() {
        writeln!(w, "{},{}", k + 1, fmt_f64(*a))?;
    }
    writeln!(
        w,
        "# baseline={},best={},evaluations={}",
        fmt_f64(result.baseline),
        fmt_f64(result.best),
        result.evaluations
    )?;
    w.flush()
}

pub fn write_control_eval(path: &Path, state: f64, penalty: f64) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "state,penalty,total")?;
    writeln!(w, "{},{},{}", fmt_f64(state), fmt_f64(penalty), fmt_f64(state + penalty))?;
    w.flush()
}
