//! CSV and JSON exports. Every row or document carries a `schema` field.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::costmodel::{cost_curve, variant_cost, CostParams};
use crate::error::{Error, Result};
use crate::experiments::{MapCell, ResultsStore, RESULTS_SCHEMA};
use crate::formulations::OpCounts;
use crate::gaussnewton::RunTrace;

pub const TRACE_SCHEMA: &str = "wc4dvar.trace/1";
pub const OUTER_SCHEMA: &str = "wc4dvar.outer/1";
pub const MAP_SCHEMA: &str = "wc4dvar.map/1";
pub const COST_SCHEMA: &str = "wc4dvar.cost/1";
pub const CURVE_SCHEMA: &str = "wc4dvar.cost_curve/1";
pub const MANIFEST_SCHEMA: &str = "wc4dvar.manifest/1";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One row per inner iteration (row 0 is the outer iterate itself). Operator
/// counts are per outer iteration and repeated on each of its rows.
pub fn write_trace_csv<W: Write>(out: W, traces: &[&RunTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["schema", "variant", "outer", "inner", "J", "q_st", "residual_norm"];
    header.extend(OpCounts::COLUMNS);
    w.write_record(&header)?;
    for t in traces {
        let name = t.variant.to_string();
        for o in &t.outer {
            let ops = o.ops.as_array().map(|c| c.to_string());
            for r in &o.inner {
                let mut row = vec![
                    TRACE_SCHEMA.to_string(),
                    name.clone(),
                    o.outer.to_string(),
                    r.iteration.to_string(),
                    opt(r.j_value),
                    opt(r.q_st),
                    format!("{:e}", r.residual_norm),
                ];
                row.extend(ops.iter().cloned());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OuterRow<'a> {
    schema: &'a str,
    variant: String,
    outer: usize,
    j: f64,
    j_exact: f64,
    gradient_norm: f64,
    step_norm: f64,
    alpha: f64,
    backtracks: usize,
    accepted: bool,
    n_inner: usize,
    n_q: usize,
    termination: &'a str,
    gtdx: f64,
    kappa1: f64,
    kappa2: f64,
    q0_mismatch: f64,
    gradient_mismatch: f64,
}

pub fn write_outer_csv<W: Write>(out: W, traces: &[&RunTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in traces {
        for o in &t.outer {
            w.serialize(OuterRow {
                schema: OUTER_SCHEMA,
                variant: t.variant.to_string(),
                outer: o.outer,
                j: o.j_value,
                j_exact: o.j_exact,
                gradient_norm: o.gradient_norm,
                step_norm: o.step_norm,
                alpha: o.alpha,
                backtracks: o.backtracks,
                accepted: o.accepted,
                n_inner: o.inner_iterations,
                n_q: o.q_evaluations,
                termination: o.termination.as_str(),
                gtdx: o.gtdx,
                kappa1: o.kappa1,
                kappa2: o.kappa2,
                q0_mismatch: o.q0_mismatch,
                gradient_mismatch: o.gradient_mismatch,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MapRow<'a> {
    schema: &'a str,
    c_dinv: f64,
    rho: f64,
    p: usize,
    mode: &'a str,
    winner: String,
    min_cost: Option<f64>,
    n_passed: usize,
}

pub fn write_map_csv<W: Write>(out: W, cells: &[MapCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(MapRow {
            schema: MAP_SCHEMA,
            c_dinv: c.c_dinv,
            rho: c.rho,
            p: c.p,
            mode: c.mode.as_str(),
            winner: c.winner.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
            min_cost: c.min_cost,
            n_passed: c.passed.len(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CostRow<'a> {
    schema: &'a str,
    variant: String,
    p: usize,
    c_dinv: f64,
    mode: &'a str,
    cost: f64,
    n_outer: usize,
    n_inner: usize,
    n_q: usize,
    final_j: f64,
}

pub fn write_cost_csv<W: Write>(out: W, traces: &[&RunTrace], params: &[CostParams]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in traces {
        for p in params {
            w.serialize(CostRow {
                schema: COST_SCHEMA,
                variant: t.variant.to_string(),
                p: p.processes,
                c_dinv: p.c_dinv,
                mode: p.mode.as_str(),
                cost: variant_cost(t, p)?,
                n_outer: t.n_outer(),
                n_inner: t.n_inner(),
                n_q: t.n_q_evaluations(),
                final_j: t.final_j_exact,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    schema: &'a str,
    variant: String,
    p: usize,
    c_dinv: f64,
    mode: &'a str,
    outer: usize,
    cost: f64,
    j: f64,
}

/// `J` against cumulative modeled cost after each outer iteration.
pub fn write_cost_curve_csv<W: Write>(out: W, traces: &[&RunTrace], params: &[CostParams]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in traces {
        for p in params {
            for (k, (cost, j)) in cost_curve(t, p)?.into_iter().enumerate() {
                w.serialize(CurveRow {
                    schema: CURVE_SCHEMA,
                    variant: t.variant.to_string(),
                    p: p.processes,
                    c_dinv: p.c_dinv,
                    mode: p.mode.as_str(),
                    outer: k,
                    cost,
                    j,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub package: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub controls: Option<serde_json::Value>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            schema: MANIFEST_SCHEMA.into(),
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config)?,
            controls: None,
            files: Vec::new(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Opens a CSV output file.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn read_results(path: &Path) -> Result<ResultsStore> {
    let store: ResultsStore = read_json(path)?;
    if store.schema != RESULTS_SCHEMA {
        return Err(Error::Format(format!("expected schema {RESULTS_SCHEMA}, found {}", store.schema)));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::CostMode;

    #[test]
    fn map_rows_carry_schema() {
        let cell = MapCell {
            c_dinv: 0.5,
            rho: 0.01,
            p: 1,
            mode: CostMode::FullyMpi,
            winner: Some("FOQ15-D".parse().unwrap()),
            min_cost: Some(12.5),
            passed: vec!["FOQ15-D".parse().unwrap()],
        };
        let mut buf = Vec::new();
        write_map_csv(&mut buf, &[cell]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "schema,c_dinv,rho,p,mode,winner,min_cost,n_passed");
        assert_eq!(lines.next().unwrap(), "wc4dvar.map/1,0.5,0.01,1,fully_mpi,FOQ15-D,12.5,1");
    }
}
