//! Shared pieces of the `ncstab` command: family selection, utilisation
//! sweeps and CSV output.

use std::io::{self, Write};

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use ncstab::generators::{Family, THREE_RING_SHORT};
use ncstab::stability::{analyze, Method};
use ncstab::{Bound, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    #[value(alias = "uni_ring")]
    UniRing,
    #[value(alias = "bi_ring")]
    BiRing,
    #[value(alias = "three_ring")]
    ThreeRing,
    Toy,
    Fig2,
}

#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    /// Network family.
    #[arg(value_enum)]
    pub kind: Kind,
    /// Number of servers of a ring.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Servers (1-based) of a unidirectional ring kept at full utilisation;
    /// the others get twice the rate.
    #[arg(long, value_delimiter = ',')]
    pub slow: Option<Vec<usize>>,
    /// Length of the flows of the third ring of `three-ring`.
    #[arg(long, default_value_t = THREE_RING_SHORT)]
    pub short: usize,
}

impl FamilyArgs {
    pub fn family(&self) -> Result<Family> {
        Ok(match self.kind {
            Kind::UniRing => Family::UniRing {
                n: self.n,
                slow: self
                    .slow
                    .as_ref()
                    .map(|s| {
                        s.iter()
                            .map(|&j| {
                                j.checked_sub(1).ok_or_else(|| {
                                    Error::InvalidParameter("server ids start at 1".into())
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?,
            },
            Kind::BiRing => Family::BiRing { n: self.n },
            Kind::ThreeRing => Family::ThreeRing { short: self.short },
            Kind::Toy => Family::Toy,
            Kind::Fig2 => Family::Fig2,
        })
    }
}

/// Parses a comma-separated method list and returns it in column order.
pub fn parse_methods(list: &[String]) -> Result<Vec<Method>> {
    let mut methods = list
        .iter()
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<Method>>>()?;
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no method given".into()));
    }
    Ok(methods)
}

/// Formats with 9 significant digits, trailing zeros dropped.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v.is_infinite() {
            "inf".into()
        } else {
            "0".into()
        };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn format_bound(b: Bound) -> String {
    match b {
        Bound::Finite(v) => format_number(v),
        Bound::Unbounded => "inf".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub u: f64,
    pub bounds: Vec<Bound>,
}

/// Utilisations `u_min, u_min + step, ...` up to `u_max`.
pub fn grid(u_min: f64, u_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(u_min > 0.0 && u_min <= u_max && u_max < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < u-min <= u-max < 1, got {u_min} and {u_max}"
        )));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let count = ((u_max - u_min) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| u_min + k as f64 * step).collect())
}

/// Bound on the family's default target for every utilisation of the grid
/// and every method. Rows are computed in parallel and returned in `U`
/// order.
pub fn sweep(family: &Family, methods: &[Method], us: &[f64]) -> Result<Vec<SweepRow>> {
    let base = family.base()?;
    let removal = family.removal();
    let target = family.target()?;
    us.par_iter()
        .map(|&u| {
            let net = ncstab::stability::at_utilization(&base, u)?;
            let bounds = methods
                .iter()
                .map(|&m| {
                    let report = analyze(&net, m, removal.as_ref(), Some(&target))?;
                    Ok(report.bound.unwrap_or(Bound::Unbounded))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow { u, bounds })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(
    methods: &[Method],
    rows: &[SweepRow],
    mut out: W,
) -> io::Result<()> {
    let header: Vec<&str> = std::iter::once("U")
        .chain(methods.iter().map(|m| m.column()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = std::iter::once(format_number(row.u))
            .chain(row.bounds.iter().map(|&b| format_bound(b)))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
