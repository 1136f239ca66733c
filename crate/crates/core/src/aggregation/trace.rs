use std::fmt;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Global,
    Aggregated,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Global => "global",
            Phase::Aggregated => "agg",
        })
    }
}

/// What happened in one solver iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// 1-based iteration number.
    pub iter: usize,
    pub phase: Phase,
    pub cum_updates: u64,
    /// Entries updated this iteration: |S| for a global sweep, K otherwise.
    pub blocks: usize,
    /// ℓ∞ distance to the ground truth, when one was supplied.
    pub linf_error: Option<f64>,
    /// ℓ∞ norm of the current iterate.
    pub sup_norm: f64,
    /// Largest single-entry change made by this iteration.
    pub step_change: f64,
    /// Step size used (aggregated iterations only).
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
}

impl SolveTrace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_updates(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cum_updates)
    }

    /// Cumulative update units at the first iteration whose error is `≤ threshold`.
    pub fn updates_to_error(&self, threshold: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.linf_error.is_some_and(|e| e <= threshold))
            .map(|r| r.cum_updates)
    }

    /// CSV with header `iter,phase,cum_updates,K,linf_error`; the error
    /// column is blank when no ground truth was supplied.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,phase,cum_updates,K,linf_error")?;
        for r in &self.records {
            write!(w, "{},{},{},{},", r.iter, r.phase, r.cum_updates, r.blocks)?;
            match r.linf_error {
                Some(e) => writeln!(w, "{e}")?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    }
}
