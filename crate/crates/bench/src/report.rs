//! Result tables (CSV) and figures (SVG).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::breakeven::{break_even_map, Cell};
use crate::error::Result;
use crate::fit::FitPoint;
use crate::ler::LerEstimate;

pub const CSV_HEADER: [&str; 16] = [
    "family", "code", "n", "k", "d", "p", "cycles", "shots", "failures", "ler", "ler_sigma", "pc", "pc_sigma",
    "decoder", "wall_ms_mean", "wall_ms_std",
];

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: String,
    pub code: String,
    pub n: usize,
    pub k: usize,
    pub d: Option<usize>,
    pub p: f64,
    pub cycles: usize,
    pub shots: usize,
    pub failures: usize,
    pub ler: f64,
    pub ler_sigma: f64,
    pub pc: Option<f64>,
    pub pc_sigma: Option<f64>,
    pub decoder: String,
    pub wall_ms_mean: Option<f64>,
    pub wall_ms_std: Option<f64>,
}

impl ResultRow {
    pub fn from_estimate(family: &str, code: &str, (n, k, d): (usize, usize, Option<usize>), p: f64, decoder: &str, e: &LerEstimate) -> Self {
        Self {
            family: family.into(),
            code: code.into(),
            n,
            k,
            d,
            p,
            cycles: e.cycles,
            shots: e.shots,
            failures: e.failures,
            ler: e.p_hat,
            ler_sigma: e.sigma,
            pc: e.per_cycle_pc,
            pc_sigma: e.pc_sigma,
            decoder: decoder.into(),
            wall_ms_mean: None,
            wall_ms_std: None,
        }
    }

    pub fn estimate(&self, min_failures: usize) -> LerEstimate {
        let mut e = LerEstimate::from_counts(self.failures, self.shots, self.cycles, Vec::new(), min_failures);
        if self.pc.is_some() {
            e.per_cycle_pc = self.pc;
            e.pc_sigma = self.pc_sigma;
        }
        e
    }
}

/// Header first, even for an empty table.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, csv::Error>>()?)
}

/// How the size `n` in the scaling law is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeConvention {
    /// Data qubits, except bivariate bicycle codes which count data plus
    /// check qubits of one block.
    #[default]
    PerFamily,
    DataQubits,
}

/// Per-cycle rates of the rows from one decoder as fit inputs. Rows without
/// failures or a per-cycle rate are skipped.
pub fn fit_points(rows: &[ResultRow], decoder: Option<&str>, convention: SizeConvention) -> Vec<FitPoint> {
    rows.iter()
        .filter(|r| decoder.map_or(true, |d| r.decoder == d) && r.failures > 0)
        .filter_map(|r| {
            let pc = r.pc?;
            let n = match (convention, r.family.as_str()) {
                (SizeConvention::PerFamily, "bb") => 2 * r.n,
                _ => r.n,
            };
            Some(FitPoint { family: r.family.clone(), code: r.code.clone(), n: n as f64, p: r.p, ler: pc })
        })
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Five-stop perceptual ramp, `t` in `[0, 1]`.
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * 4.0;
    let i = (x.floor() as usize).min(3);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let c = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

const EMPTY_SVG: &str = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"0\" height=\"0\"></svg>\n";

/// Per-cycle LER heatmap over (code, p) with a log-scale colorbar and the
/// break-even contour. Later rows win on duplicate cells.
pub fn heatmap_svg(rows: &[ResultRow]) -> String {
    let mut codes: BTreeMap<String, usize> = BTreeMap::new();
    let mut ps: BTreeSet<u64> = BTreeSet::new();
    let mut cells: BTreeMap<(String, u64), &ResultRow> = BTreeMap::new();
    for r in rows {
        codes.insert(r.code.clone(), r.n);
        ps.insert(r.p.to_bits());
        cells.insert((r.code.clone(), r.p.to_bits()), r);
    }
    if cells.is_empty() {
        return EMPTY_SVG.to_string();
    }
    let mut order: Vec<(usize, String)> = codes.into_iter().map(|(c, n)| (n, c)).collect();
    order.sort();
    let ps: Vec<f64> = ps.into_iter().map(f64::from_bits).collect();
    let values: Vec<f64> = cells.values().filter_map(|r| r.pc.filter(|&x| x > 0.0 && r.failures > 0)).collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v.log10()), b.max(v.log10())));
    let (lo, hi) = if lo.is_finite() { (lo.floor(), hi.ceil().max(lo.floor() + 1.0)) } else { (-3.0, 0.0) };

    let (left, top, cw, ch) = (120.0, 30.0, 64.0, 32.0);
    let width = left + cw * ps.len() as f64 + 110.0;
    let height = top + ch * order.len() as f64 + 50.0;
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" font-family=\"sans-serif\" font-size=\"11\">");
    let _ = writeln!(s, "<defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">");
    for i in 0..=4 {
        let _ = writeln!(s, "<stop offset=\"{:.2}\" stop-color=\"{}\"/>", i as f64 / 4.0, ramp(i as f64 / 4.0));
    }
    let _ = writeln!(s, "</linearGradient></defs>");
    for (i, (_, code)) in order.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", left - 6.0, y + ch / 2.0 + 4.0, esc(code));
        for (j, &p) in ps.iter().enumerate() {
            let Some(r) = cells.get(&(code.clone(), p.to_bits())) else { continue };
            let x = left + cw * j as f64;
            let fill = match r.pc {
                Some(pc) if pc > 0.0 && r.failures > 0 => ramp((pc.log10() - lo) / (hi - lo)),
                _ => "#bbbbbb".to_string(),
            };
            let label = r.pc.map_or("n/a".to_string(), |pc| format!("{pc:.2e}"));
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw:.1}\" height=\"{ch:.1}\" fill=\"{fill}\"><title>{} p={p} pc={label}</title></rect>",
                esc(code)
            );
        }
    }
    for (j, p) in ps.iter().enumerate() {
        let x = left + cw * (j as f64 + 0.5);
        let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{p}</text>", top + ch * order.len() as f64 + 16.0);
    }
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">physical error rate p</text>", left + cw * ps.len() as f64 / 2.0, height - 8.0);

    // break-even contour through the interpolated crossings
    let names: Vec<String> = order.iter().map(|(_, c)| c.clone()).collect();
    let grid: Vec<Vec<LerEstimate>> = names
        .iter()
        .map(|c| {
            ps.iter()
                .map(|p| cells.get(&(c.clone(), p.to_bits())).map_or_else(|| LerEstimate::from_counts(0, 0, 1, vec![], 1), |r| r.estimate(1)))
                .collect()
        })
        .collect();
    let map = break_even_map(names, ps.clone(), &grid);
    let xpos = |p: f64| {
        let j = ps.iter().position(|&q| q >= p).unwrap_or(ps.len() - 1).max(1).min(ps.len().saturating_sub(1));
        if ps.len() < 2 {
            return left + cw / 2.0;
        }
        let t = (p.ln() - ps[j - 1].ln()) / (ps[j].ln() - ps[j - 1].ln());
        left + cw * (j as f64 - 0.5 + t)
    };
    if !map.contour.is_empty() {
        let pts: Vec<String> = map
            .contour
            .iter()
            .map(|&(i, p)| format!("{:.1},{:.1}", xpos(p), top + ch * (i as f64 + 0.5)))
            .collect();
        let _ = writeln!(s, "<polyline class=\"break-even\" points=\"{}\" fill=\"none\" stroke=\"#ffffff\" stroke-width=\"2\" stroke-dasharray=\"5,3\"/>", pts.join(" "));
    }
    let below = map.cells.iter().flatten().filter(|c| **c == Cell::Below).count();
    let _ = writeln!(s, "<!-- {below} cells below break-even -->");

    // colorbar, one tick per decade
    let bx = left + cw * ps.len() as f64 + 24.0;
    let bh = (ch * order.len() as f64).max(80.0);
    let _ = writeln!(s, "<rect class=\"colorbar\" x=\"{bx:.1}\" y=\"{top:.1}\" width=\"14\" height=\"{bh:.1}\" fill=\"url(#ramp)\"/>");
    let decades = (hi - lo).round() as i32;
    for e in 0..=decades {
        let y = top + bh * (1.0 - e as f64 / decades as f64);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">1e{}</text>", bx + 18.0, y + 4.0, lo as i32 + e);
    }
    let _ = writeln!(s, "</svg>");
    s
}

/// Mean decode time against cycle count, one series per (decoder, code),
/// with one-standard-deviation bars.
pub fn timing_svg(rows: &[ResultRow]) -> String {
    let timed: Vec<&ResultRow> = rows.iter().filter(|r| r.wall_ms_mean.is_some()).collect();
    if timed.is_empty() {
        return EMPTY_SVG.to_string();
    }
    let mut series: BTreeMap<(String, String), Vec<(usize, f64, f64)>> = BTreeMap::new();
    for r in &timed {
        series
            .entry((r.decoder.clone(), r.code.clone()))
            .or_default()
            .push((r.cycles, r.wall_ms_mean.unwrap_or(0.0), r.wall_ms_std.unwrap_or(0.0)));
    }
    let xmax = timed.iter().map(|r| r.cycles).max().unwrap_or(1).max(1) as f64;
    let ymax = timed
        .iter()
        .map(|r| r.wall_ms_mean.unwrap_or(0.0) + r.wall_ms_std.unwrap_or(0.0))
        .fold(0.0, f64::max)
        .max(1e-9);
    let (left, top, w, h) = (70.0, 20.0, 480.0, 300.0);
    let px = |c: f64| left + w * c / xmax;
    let py = |ms: f64| top + h * (1.0 - ms / ymax);
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">", left + w + 180.0, top + h + 50.0);
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>", top + h, left + w, top + h);
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{:.1}\" stroke=\"black\"/>", top + h);
    for i in 0..=4 {
        let c = xmax * i as f64 / 4.0;
        let ms = ymax * i as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{c:.0}</text>", px(c), top + h + 16.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{ms:.3}</text>", left - 6.0, py(ms) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">cycles</text>", left + w / 2.0, top + h + 36.0);
    let _ = writeln!(s, "<text x=\"14\" y=\"{:.1}\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\">decode time (ms)</text>", top + h / 2.0, top + h / 2.0);
    let n = series.len().max(1);
    for (idx, ((decoder, code), mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|p| p.0);
        let color = ramp(idx as f64 / n as f64 * 0.85);
        let line: Vec<String> = pts.iter().map(|&(c, m, _)| format!("{:.1},{:.1}", px(c as f64), py(m))).collect();
        let _ = writeln!(s, "<polyline class=\"series\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", line.join(" "));
        for &(c, m, sd) in &pts {
            let x = px(c as f64);
            let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/>", py(m - sd), py(m + sd));
            let _ = writeln!(s, "<circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>", py(m));
        }
        let ly = top + 14.0 * idx as f64;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{ly:.1}\" fill=\"{color}\">{} {}</text>", left + w + 12.0, esc(&decoder), esc(&code));
    }
    let _ = writeln!(s, "</svg>");
    s
}
