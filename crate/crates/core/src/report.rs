//! JSON serialization with full-precision floats, and plain-text tables.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::tailsampler::{AuditReport, GroupSummary};

/// Pretty JSON whose floats always carry 17 significant digits.
struct PreciseFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for PreciseFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as indented JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn num(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| num(x, digits))
}

fn group_row(out: &mut String, role: &str, g: &GroupSummary) {
    let head = format!(
        "{:<13} {:<12} {:>7} {:>7} {:>6} {:>6}",
        role,
        g.value,
        g.n_real,
        g.n_synthetic,
        num(g.acd, 2),
        num(g.cvar, 2)
    );
    match &g.fit {
        Some(f) => {
            let _ = writeln!(
                out,
                "{head} {:>8} {:>8} {:>8} {:>8} {:>4} {:<12} {:>8}",
                num(f.gev.mu, 4),
                num(f.gev.sigma, 4),
                num(f.gev.xi, 4),
                num(f.u, 4),
                f.tail_type.to_string(),
                f.qq_class.to_string(),
                f.horizon.to_string()
            );
        }
        None if g.status == "degenerate" => {
            let _ = writeln!(out, "{head} no tail discrimination");
        }
        None => {
            let why = match &g.failure {
                Some(crate::tailsampler::FailReason::Timeout) => "timeout".to_owned(),
                Some(crate::tailsampler::FailReason::IterationCap) => "iteration cap".to_owned(),
                Some(crate::tailsampler::FailReason::Fit(m)) => m.clone(),
                None => String::new(),
            };
            let _ = writeln!(out, "{head} tail not validated ({why})");
        }
    }
}

/// Human-readable summary of an audit.
pub fn render_tables(report: &AuditReport) -> String {
    let mut out = String::new();
    let g = &report.metadata.group;
    let _ = writeln!(
        out,
        "EVT characteristics  attribute={}  model={}",
        g.attribute, report.metadata.model_id
    );
    let _ = writeln!(
        out,
        "{:<13} {:<12} {:>7} {:>7} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>4} {:<12} {:>8}",
        "group", "value", "n_real", "n_synth", "ACD", "CVaR", "mu", "sigma", "xi", "u", "type", "Q-Q", "B"
    );
    group_row(&mut out, "unprivileged", &report.unprivileged);
    group_row(&mut out, "privileged", &report.privileged);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "ACD diff {}  CVaR diff {}  ECD {}  {}",
        num(report.acd_diff, 2),
        num(report.cvar_diff, 2),
        num(report.ecd, 2),
        if report.discriminates {
            "DISCRIMINATES"
        } else {
            "no discrimination"
        }
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "Return levels");
    let _ = writeln!(out, "{:>8} {:>13} {:>13}", "m", "unprivileged", "privileged");
    for r in &report.return_levels {
        let _ = writeln!(
            out,
            "{:>8} {:>13} {:>13}",
            r.m,
            opt(r.unprivileged, 4),
            opt(r.privileged, 4)
        );
    }
    out
}

/// Q-Q points as CSV: `empirical,theoretical`.
pub fn qq_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("empirical,theoretical\n");
    for (e, t) in points {
        let _ = writeln!(out, "{e},{t}");
    }
    out
}

const DENSITY_BINS: usize = 20;

/// Histogram density of the exceedances next to the fitted GEV density, at
/// bin midpoints: `x,empirical,fitted`.
pub fn density_csv(exceedances: &[f64], gev: crate::evt::GevParams) -> String {
    let mut out = String::from("x,empirical,fitted\n");
    if exceedances.is_empty() {
        return out;
    }
    let lo = exceedances.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = exceedances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / DENSITY_BINS as f64;
    if !(width > 0.0) {
        return out;
    }
    let mut counts = [0usize; DENSITY_BINS];
    for &x in exceedances {
        counts[(((x - lo) / width) as usize).min(DENSITY_BINS - 1)] += 1;
    }
    let k = exceedances.len() as f64;
    for (i, c) in counts.iter().enumerate() {
        let x = lo + (i as f64 + 0.5) * width;
        let _ = writeln!(
            out,
            "{x},{},{}",
            *c as f64 / (k * width),
            crate::evt::gev::gev_pdf(gev, x)
        );
    }
    out
}
