//! File formats: CSV and JSON emitters for tables, maps, and reports, the
//! little-endian binary value-table layout used by golden regression
//! files, and the custom ensemble definition schema.
//!
//! Every float printed to CSV uses 17 significant digits, so parsing the
//! text back recovers the exact double.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Belief, BeliefGrid};
use crate::cases::trine::{embed, FiniteHorizonMaps, TrineMapRow};
use crate::planner::{PlanOutput, ValueTable};
use crate::quantum::{
    validate_density, ComplexMatrix, DensityOperator, MeasurementLibrary, ParamFamily,
    QuantumError,
};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json parse error at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("ensemble field `{field}`: {problem}")]
    Ensemble { field: String, problem: String },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("bad value-table file: {0}")]
    BadTableFile(String),
}

impl From<serde_json::Error> for ExportError {
    fn from(err: serde_json::Error) -> Self {
        ExportError::Json { line: err.line(), column: err.column(), message: err.to_string() }
    }
}

/// Round-trip-safe float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Value/policy tables
// ---------------------------------------------------------------------------

/// CSV rows `(stage, point_id, value, action_kind, action_index)`.
pub fn write_values_csv<W: Write>(mut w: W, out: &PlanOutput) -> io::Result<()> {
    writeln!(w, "stage,point_id,value,action_kind,action_index")?;
    for stage in 0..=out.values.horizon() {
        let values = out.values.row(stage);
        let actions = out.policy.row(stage);
        for (id, (v, a)) in values.iter().zip(actions).enumerate() {
            let (kind, index) = a.kind_index();
            writeln!(w, "{stage},{id},{},{kind},{index}", fmt_f64(*v))?;
        }
    }
    Ok(())
}

/// Binary value-table layout: `horizon`, `grid size`, `hypotheses` as
/// little-endian u64, then the `(horizon + 1) x |B|` values row-major as
/// little-endian f64.
pub fn write_values_bin<W: Write>(mut w: W, values: &ValueTable, hypotheses: usize) -> io::Result<()> {
    w.write_all(&(values.horizon() as u64).to_le_bytes())?;
    w.write_all(&(values.row(0).len() as u64).to_le_bytes())?;
    w.write_all(&(hypotheses as u64).to_le_bytes())?;
    for stage in 0..=values.horizon() {
        for v in values.row(stage) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads the binary layout back; returns `(horizon, hypotheses, rows)`.
pub fn read_values_bin<R: Read>(mut r: R) -> Result<(usize, usize, Vec<Vec<f64>>), ExportError> {
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |r: &mut R| -> Result<u64, ExportError> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let horizon = read_u64(&mut r)? as usize;
    let size = read_u64(&mut r)? as usize;
    let hypotheses = read_u64(&mut r)? as usize;
    if size == 0 {
        return Err(ExportError::BadTableFile("empty grid".into()));
    }
    let mut rows = Vec::with_capacity(horizon + 1);
    let mut fbuf = [0u8; 8];
    for _ in 0..=horizon {
        let mut row = Vec::with_capacity(size);
        for _ in 0..size {
            r.read_exact(&mut fbuf)?;
            row.push(f64::from_le_bytes(fbuf));
        }
        rows.push(row);
    }
    Ok((horizon, hypotheses, rows))
}

// ---------------------------------------------------------------------------
// Grid and map exports
// ---------------------------------------------------------------------------

/// CSV of the grid: point id, integer coordinates, weights, and for
/// three-hypothesis grids the planar embedding.
pub fn write_grid_csv<W: Write>(mut w: W, grid: &BeliefGrid) -> io::Result<()> {
    let m = grid.dim();
    let mut header = String::from("point_id");
    for i in 0..m {
        header.push_str(&format!(",c{i}"));
    }
    for i in 0..m {
        header.push_str(&format!(",b{i}"));
    }
    if m == 3 {
        header.push_str(",x,y");
    }
    writeln!(w, "{header}")?;
    for id in 0..grid.len() {
        let mut line = id.to_string();
        for c in grid.coords(id) {
            line.push_str(&format!(",{c}"));
        }
        for b in grid.point(id).weights() {
            line.push(',');
            line.push_str(&fmt_f64(*b));
        }
        if m == 3 {
            let (x, y) = embed(grid.point(id));
            line.push(',');
            line.push_str(&fmt_f64(x));
            line.push(',');
            line.push_str(&fmt_f64(y));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// CSV of the one-step trine maps.
pub fn write_trine_maps_csv<W: Write>(mut w: W, rows: &[TrineMapRow]) -> io::Result<()> {
    writeln!(w, "point_id,b0,b1,b2,x,y,stop,one_step,gain,best_action,best_param")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.point_id,
            fmt_f64(row.weights[0]),
            fmt_f64(row.weights[1]),
            fmt_f64(row.weights[2]),
            fmt_f64(row.x),
            fmt_f64(row.y),
            fmt_f64(row.stop),
            fmt_f64(row.one_step),
            fmt_f64(row.gain),
            row.best_action,
            fmt_f64(row.best_param),
        )?;
    }
    Ok(())
}

/// CSV of the horizon-two trine maps: values, advantage maps, policies,
/// and per-stage orientation indices.
pub fn write_trine_h2_csv<W: Write>(
    mut w: W,
    grid: &BeliefGrid,
    maps: &FiniteHorizonMaps,
) -> io::Result<()> {
    writeln!(
        w,
        "point_id,b0,b1,b2,x,y,v0,v1,v2,d1,d0,stage0_kind,stage0_index,stage1_kind,stage1_index"
    )?;
    for id in 0..grid.len() {
        let b = grid.point(id);
        let (x, y) = embed(b);
        let (k0, i0) = maps.output.policy.action(0, id).kind_index();
        let (k1, i1) = maps.output.policy.action(1, id).kind_index();
        writeln!(
            w,
            "{id},{},{},{},{},{},{},{},{},{},{},{k0},{i0},{k1},{i1}",
            fmt_f64(b.weights()[0]),
            fmt_f64(b.weights()[1]),
            fmt_f64(b.weights()[2]),
            fmt_f64(x),
            fmt_f64(y),
            fmt_f64(maps.output.values.value(0, id)),
            fmt_f64(maps.output.values.value(1, id)),
            fmt_f64(maps.output.values.value(2, id)),
            fmt_f64(maps.d1[id]),
            fmt_f64(maps.d0[id]),
        )?;
    }
    Ok(())
}

/// CSV of binary study curves over the probability grid.
pub fn write_binary_curves_csv<W: Write>(
    mut w: W,
    p: &[f64],
    columns: &[(&str, &[f64])],
) -> io::Result<()> {
    let mut header = String::from("p");
    for (name, col) in columns {
        assert_eq!(col.len(), p.len());
        header.push(',');
        header.push_str(name);
    }
    writeln!(w, "{header}")?;
    for (i, &pv) in p.iter().enumerate() {
        let mut line = fmt_f64(pv);
        for (_, col) in columns {
            line.push(',');
            line.push_str(&fmt_f64(col[i]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// CSV of a scaling sweep: resolutions, grid sizes, atomic counts, wall time.
pub fn write_scaling_csv<W: Write>(
    mut w: W,
    rows: &[crate::bounds::ScalingRow],
) -> io::Result<()> {
    writeln!(
        w,
        "resolution,grid_size,stop_evals,obs_evals,posterior_evals,projection_calls,\
         projection_candidate_scans,projection_coord_comparisons,value_lookups,aggregations,\
         actmax_comparisons,zero_prob_skips,wall_secs"
    )?;
    for r in rows {
        let c = &r.counters;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.resolution,
            r.grid_size,
            c.stop_evals,
            c.obs_evals,
            c.posterior_evals,
            c.projection_calls,
            c.projection_candidate_scans,
            c.projection_coord_comparisons,
            c.value_lookups,
            c.aggregations,
            c.actmax_comparisons,
            c.zero_prob_skips,
            fmt_f64(r.wall_secs),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Custom ensemble definition files
// ---------------------------------------------------------------------------

/// JSON schema of a custom ensemble: states as row-major complex matrices
/// (`[re, im]` pairs), a prior, and a named measurement family with its
/// parameter grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub states: Vec<Vec<[f64; 2]>>,
    pub prior: Vec<f64>,
    pub family: String,
    pub params: Vec<f64>,
}

/// A parsed and validated ensemble ready for planning.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub states: Vec<DensityOperator>,
    pub prior: Belief,
    pub family: ParamFamily,
    pub params: Vec<f64>,
    pub library: MeasurementLibrary,
}

pub fn parse_ensemble(json: &str) -> Result<Ensemble, ExportError> {
    let file: EnsembleFile = serde_json::from_str(json)?;
    if file.states.len() < 2 {
        return Err(ExportError::Ensemble {
            field: "states".into(),
            problem: "need at least two candidate states".into(),
        });
    }
    let mut states = Vec::with_capacity(file.states.len());
    for (i, entries) in file.states.iter().enumerate() {
        let matrix = ComplexMatrix::from_row_major(entries).map_err(|e| ExportError::Ensemble {
            field: format!("states[{i}]"),
            problem: e.to_string(),
        })?;
        let rho = validate_density(matrix).map_err(|e| ExportError::Ensemble {
            field: format!("states[{i}]"),
            problem: e.to_string(),
        })?;
        states.push(rho);
    }
    if file.prior.len() != states.len() {
        return Err(ExportError::Ensemble {
            field: "prior".into(),
            problem: format!(
                "length {} does not match the {} states",
                file.prior.len(),
                states.len()
            ),
        });
    }
    let prior = Belief::new(file.prior.clone()).map_err(|e| ExportError::Ensemble {
        field: "prior".into(),
        problem: e.to_string(),
    })?;
    let family = ParamFamily::from_name(&file.family).ok_or_else(|| ExportError::Ensemble {
        field: "family".into(),
        problem: format!("unknown family `{}`; known: binary-projective, trine", file.family),
    })?;
    if file.params.is_empty() {
        return Err(ExportError::Ensemble {
            field: "params".into(),
            problem: "need at least one measurement parameter".into(),
        });
    }
    let library = family.library(&file.params).map_err(|e| ExportError::Ensemble {
        field: "params".into(),
        problem: e.to_string(),
    })?;
    if library.dim() != states[0].dim() {
        return Err(ExportError::Ensemble {
            field: "family".into(),
            problem: format!(
                "family dimension {} does not match state dimension {}",
                library.dim(),
                states[0].dim()
            ),
        });
    }
    Ok(Ensemble { states, prior, family, params: file.params, library })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefGrid;
    use crate::cases::binary::{binary_states, uniform_phis};
    use crate::planner::{plan, PlannerConfig};
    use crate::quantum::build_likelihood_table;
    use std::f64::consts::FRAC_PI_3;

    #[test]
    fn fmt_round_trips_doubles() {
        for &x in &[0.1, 1.0 / 3.0, 0.625, 1e-17, 123456.789, f64::MIN_POSITIVE] {
            let printed = fmt_f64(x);
            let parsed: f64 = printed.parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "{printed}");
        }
    }

    fn small_plan() -> (BeliefGrid, PlanOutput) {
        let lib = crate::quantum::ParamFamily::BinaryProjective
            .library(&uniform_phis(3))
            .unwrap();
        let table = build_likelihood_table(&binary_states(FRAC_PI_3), &lib).unwrap();
        let grid = BeliefGrid::build(6, 2, usize::MAX).unwrap();
        let cfg = PlannerConfig {
            horizon: 2,
            c_meas: 0.02,
            grid: &grid,
            library: &lib,
            table: &table,
            prior: Belief::binary(0.5),
        };
        let out = plan(&cfg).unwrap();
        (grid, out)
    }

    #[test]
    fn values_csv_has_one_row_per_stage_and_point() {
        let (grid, out) = small_plan();
        let mut buf = Vec::new();
        write_values_csv(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * grid.len());
        assert!(text.lines().nth(1).unwrap().starts_with("0,0,"));
    }

    #[test]
    fn binary_table_round_trips() {
        let (_, out) = small_plan();
        let mut buf = Vec::new();
        write_values_bin(&mut buf, &out.values, 2).unwrap();
        let (horizon, hypotheses, rows) = read_values_bin(&buf[..]).unwrap();
        assert_eq!(horizon, 2);
        assert_eq!(hypotheses, 2);
        for t in 0..=2 {
            assert_eq!(rows[t], out.values.row(t));
        }
    }

    #[test]
    fn grid_csv_embeds_three_hypothesis_grids() {
        let grid = BeliefGrid::build(3, 3, usize::MAX).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",x,y"));
        assert_eq!(text.lines().count(), 1 + grid.len());
    }

    #[test]
    fn ensemble_parsing_validates_fields() {
        let good = r#"{
            "states": [
                [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
                [[0.25, 0.0], [0.4330127018922193, 0.0], [0.4330127018922193, 0.0], [0.75, 0.0]]
            ],
            "prior": [0.5, 0.5],
            "family": "binary-projective",
            "params": [0.0, 0.5235987755982988, 1.0471975511965976]
        }"#;
        let ensemble = parse_ensemble(good).unwrap();
        assert_eq!(ensemble.states.len(), 2);
        assert_eq!(ensemble.library.len(), 3);

        let bad_json = "{ not json";
        match parse_ensemble(bad_json) {
            Err(ExportError::Json { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected a json error, got {other:?}"),
        }

        let bad_prior = good.replace("[0.5, 0.5]", "[0.9, 0.4]");
        match parse_ensemble(&bad_prior) {
            Err(ExportError::Ensemble { field, .. }) => assert_eq!(field, "prior"),
            other => panic!("expected a prior error, got {other:?}"),
        }

        let bad_family = good.replace("binary-projective", "unknown");
        assert!(matches!(parse_ensemble(&bad_family), Err(ExportError::Ensemble { .. })));

        let bad_state = good.replace("[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]",
            "[[0.6, 0.0], [0.0, 0.0], [0.0, 0.0], [0.6, 0.0]]");
        match parse_ensemble(&bad_state) {
            Err(ExportError::Ensemble { field, problem }) => {
                assert_eq!(field, "states[0]");
                assert!(problem.contains("trace"));
            }
            other => panic!("expected a state error, got {other:?}"),
        }
    }
}
