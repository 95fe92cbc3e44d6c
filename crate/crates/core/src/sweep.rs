//! Governance-simplex sweep: one solve per grid point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::instances::simplex_grid;
use crate::model::Instance;
use crate::objective::GovernanceWeights;
use crate::search::{solve, Provenance, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l_app: f64,
    pub l_op: f64,
    pub l_sys: f64,
    /// Mean final application utility.
    pub u_app: f64,
    /// Mean normalized operator utility.
    pub u_op: f64,
    pub u_sys: f64,
    pub objective: f64,
    /// `None` when the point failed; its metrics are then NaN.
    pub provenance: Option<Provenance>,
}

impl SweepRow {
    pub fn weights(&self) -> GovernanceWeights {
        GovernanceWeights { lambda_app: self.l_app, lambda_op: self.l_op, lambda_sys: self.l_sys }
    }

    pub fn failed(&self) -> bool {
        self.provenance.is_none()
    }
}

/// Rows in grid order (`l_app` outer, `l_op` inner). Grid points run on the
/// configured executor; each point's own solve is sequential.
pub fn run_sweep(instance: &Instance, resolution: usize, config: &SolverConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let grid = simplex_grid(resolution)?;
    let inner = SolverConfig { exec: Exec::Sequential, ..config.clone() };
    Ok(config.exec.map(&grid, |w| {
        let base = SweepRow {
            l_app: w.lambda_app,
            l_op: w.lambda_op,
            l_sys: w.lambda_sys,
            u_app: f64::NAN,
            u_op: f64::NAN,
            u_sys: f64::NAN,
            objective: f64::NAN,
            provenance: None,
        };
        match solve(instance, None, *w, &inner, None) {
            Ok(s) => {
                let a = s.report.aggregates;
                SweepRow {
                    u_app: a.app_final_mean,
                    u_op: a.op_normalized_mean,
                    u_sys: a.sys_final,
                    objective: s.objective(),
                    provenance: Some(s.provenance),
                    ..base
                }
            }
            Err(_) => base,
        }
    }))
}

/// CSV with the fixed columns `l_app,l_op,l_sys,u_app,u_op,u_sys,objective`.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["l_app", "l_op", "l_sys", "u_app", "u_op", "u_sys", "objective"])?;
    for r in rows {
        w.write_record([r.l_app, r.l_op, r.l_sys, r.u_app, r.u_op, r.u_sys, r.objective].map(|x| x.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::toy_example;

    #[test]
    fn row_count_and_order() {
        let cfg = SolverConfig::exact();
        let rows = run_sweep(&toy_example(), 2, &cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].weights(), GovernanceWeights::SYS);
        assert_eq!(rows[5].weights(), GovernanceWeights::APP);
        assert!(rows.iter().all(|r| !r.failed()));
    }

    #[test]
    fn failed_points_are_nan_rows() {
        let mut inst = toy_example();
        for _ in 0..20 {
            inst.apps.push(inst.apps[0].clone());
        }
        for (i, a) in inst.apps.iter_mut().enumerate() {
            a.id = format!("a{i}");
        }
        let rows = run_sweep(&inst, 1, &SolverConfig::exact()).unwrap();
        assert!(rows.iter().all(|r| r.failed() && r.objective.is_nan()));
        assert!(sweep_csv(&rows).unwrap().contains("NaN"));
    }

    #[test]
    fn executors_agree() {
        let seq = SolverConfig { exec: Exec::Sequential, budget: 200, ..Default::default() };
        let par = SolverConfig { exec: Exec::Parallel, ..seq.clone() };
        let a = sweep_csv(&run_sweep(&toy_example(), 3, &seq).unwrap()).unwrap();
        let b = sweep_csv(&run_sweep(&toy_example(), 3, &par).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("l_app,l_op,l_sys,u_app,u_op,u_sys,objective\n"));
    }
}
