//! Particle-cloud CSV: `id,weight,x_0..x_{d-1},v_0..v_{d-1}`, optionally
//! preceded by a `t` column. Reals are written with 17 significant digits so
//! a write/read cycle reproduces every bit.

use std::io::{Read, Write};

use super::EmpiricalMeasure;
use crate::error::{Error, Result};

pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(dim: usize, with_time: bool) -> Vec<String> {
    let mut h = Vec::with_capacity(2 + 2 * dim + 1);
    if with_time {
        h.push("t".to_string());
    }
    h.push("id".into());
    h.push("weight".into());
    h.extend((0..dim).map(|a| format!("x_{a}")));
    h.extend((0..dim).map(|a| format!("v_{a}")));
    h
}

fn write_impl<W: Write>(mu: &EmpiricalMeasure, time: Option<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(mu.dim(), time.is_some()))?;
    let mut row = Vec::with_capacity(3 + 2 * mu.dim());
    for i in 0..mu.len() {
        row.clear();
        if let Some(t) = time {
            row.push(fmt_real(t));
        }
        row.push(i.to_string());
        row.push(fmt_real(mu.weights()[i]));
        row.extend(mu.position(i).iter().map(|&x| fmt_real(x)));
        row.extend(mu.velocity(i).iter().map(|&v| fmt_real(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(mu: &EmpiricalMeasure, out: W) -> Result<()> {
    write_impl(mu, None, out)
}

pub fn write_csv_with_time<W: Write>(mu: &EmpiricalMeasure, t: f64, out: W) -> Result<()> {
    write_impl(mu, Some(t), out)
}

fn read_impl<R: Read>(input: R) -> Result<(EmpiricalMeasure, Option<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let hdr: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let with_time = hdr.first().map(String::as_str) == Some("t");
    let offset = usize::from(with_time);
    let coords = hdr.len().saturating_sub(offset + 2);
    if coords == 0 || coords % 2 != 0 {
        return Err(Error::Input(format!("unrecognised particle header {hdr:?}")));
    }
    let dim = coords / 2;
    if hdr != header(dim, with_time) {
        return Err(Error::Input(format!("unrecognised particle header {hdr:?}")));
    }
    let parse = |s: &str, line: u64| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|e| Error::Input(format!("line {line}: `{s}`: {e}")))
    };
    let (mut xs, mut vs, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    let mut time = None;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != hdr.len() {
            return Err(Error::Input(format!("line {line}: expected {} fields", hdr.len())));
        }
        if with_time {
            let t = parse(&rec[0], line)?;
            match time {
                None => time = Some(t),
                Some(t0) if t0 != t => {
                    return Err(Error::Input(format!("line {line}: mixed times {t0} and {t}")))
                }
                _ => {}
            }
        }
        ws.push(parse(&rec[offset + 1], line)?);
        for a in 0..dim {
            xs.push(parse(&rec[offset + 2 + a], line)?);
        }
        for a in 0..dim {
            vs.push(parse(&rec[offset + 2 + dim + a], line)?);
        }
    }
    Ok((EmpiricalMeasure::new(dim, xs, vs, ws)?, time))
}

pub fn read_csv<R: Read>(input: R) -> Result<EmpiricalMeasure> {
    read_impl(input).map(|(mu, _)| mu)
}

pub fn read_csv_with_time<R: Read>(input: R) -> Result<(EmpiricalMeasure, Option<f64>)> {
    read_impl(input)
}
