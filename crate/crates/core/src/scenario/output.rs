//! Trajectory CSV and its metadata sidecar.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sweep::{SolverStats, Tolerances, Trajectory};

/// Write `t, x1..xn, v_discrete, dist_to_set, active_set`, one row per node.
/// Active constraint indices are joined with `;`.
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let n = traj.space().ambient_dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["v_discrete", "dist_to_set", "active_set"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..traj.len() {
        let mut row = vec![traj.times[i].to_string()];
        row.extend(traj.nodes[i].coords().iter().map(|c| c.to_string()));
        row.push(traj.velocities[i].to_string());
        row.push(traj.query_distances[i].to_string());
        let active: Vec<String> = traj.active_sets[i].iter().map(|k| k.to_string()).collect();
        row.push(active.join(";"));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryMetadata {
    pub scenario: String,
    pub scenario_hash: String,
    pub h: f64,
    pub nodes: usize,
    pub tolerances: Tolerances,
    pub stats: SolverStats,
    pub certified: bool,
    pub velocity_bound_ok: bool,
    pub generator: String,
}

impl TrajectoryMetadata {
    pub fn new(scenario: &super::Scenario, traj: &Trajectory) -> Self {
        Self {
            scenario: scenario.spec.name.clone(),
            scenario_hash: scenario.hash().to_string(),
            h: traj.step,
            nodes: traj.len(),
            tolerances: scenario.spec.tolerances,
            stats: traj.stats.clone(),
            certified: traj.stats.certified,
            velocity_bound_ok: traj.stats.velocity_bound_ok,
            generator: concat!("geosweep ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

pub fn write_metadata<W: Write>(meta: &TrajectoryMetadata, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, meta).map_err(|e| Error::Serialization(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::sweep::catching_up;

    #[test]
    fn csv_layout() {
        let s = Scenario::from_json(
            r#"{"schema": 1, "name": "h", "manifold": {"kind": "euclidean", "dim": 1},
                "set": {"kind": "half_space", "normal": [1.0], "offset": 0.0, "speed": 1.0},
                "horizon": 0.5, "x0": [0.0], "constants": {"set_lipschitz": 1.0, "prox_radius": 1.0}}"#,
        )
        .unwrap();
        let tr = catching_up(&s.problem, 0.25).unwrap();
        let mut buf = Vec::new();
        write_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,x1,v_discrete,dist_to_set,active_set\n0,0,0,0,0\n0.25,0.25,1,0.25,0\n0.5,0.5,1,0.25,0\n"
        );
    }
}
