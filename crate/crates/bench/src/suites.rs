//! Benchmark grids: the (problem, solver) cells each suite runs.

use serde::{Deserialize, Serialize};

use triccati::inexact::InexactNewtonConfig;
use triccati::riccati_dense::LineSearch;

use crate::problem::{Family, ProblemSpec};
use crate::run::{DenseConfig, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Dense ex1, Newton with and without exact line search.
    Table1,
    /// Dense ex2 with manufactured solution.
    Table2,
    /// Low-rank ex1.
    Table3,
    /// Low-rank ex2.
    Table4,
    /// Residual histories of dense ex1 with and without line search.
    Fig1,
    /// Outer and inner residual histories of a failing low-rank ex1 run.
    Fig2,
}

pub const LOWRANK_RANKS: [(usize, usize); 3] = [(1, 1), (1, 5), (5, 10)];

impl Suite {
    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            Suite::Table1 => vec![324, 784],
            Suite::Table2 => vec![500, 1000],
            Suite::Table3 => vec![10_000, 22_500, 32_400],
            Suite::Table4 => vec![10_000, 50_000, 100_000],
            Suite::Fig1 => vec![784],
            Suite::Fig2 => vec![22_500],
        }
    }

    fn family(self) -> Family {
        match self {
            Suite::Table1 | Suite::Fig1 => Family::Ex1Dense,
            Suite::Table2 => Family::Ex2Dense,
            Suite::Table3 | Suite::Fig2 => Family::Ex1LowRank,
            Suite::Table4 => Family::Ex2LowRank,
        }
    }

    pub fn is_lowrank(self) -> bool {
        self.family().is_lowrank()
    }

    /// Whether the inner residual histories are part of the output.
    pub fn wants_inner_history(self) -> bool {
        self == Suite::Fig2
    }
}

/// Overrides applied to every cell of a suite.
#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub sizes: Option<Vec<usize>>,
    pub ranks: Option<Vec<(usize, usize)>>,
    pub seed: u64,
    pub gamma: Option<f64>,
    pub sign_consistency: Option<bool>,
    pub dense: DenseConfig,
    pub lowrank: InexactNewtonConfig,
}

/// The `(spec, solver)` cells of `suite`.
pub fn cells(suite: Suite, opts: &SuiteOptions) -> Vec<(ProblemSpec, SolverConfig)> {
    let sizes = opts.sizes.clone().unwrap_or_else(|| suite.default_sizes());
    let family = suite.family();
    let tune = |mut s: ProblemSpec| {
        s.seed = opts.seed;
        if let Some(g) = opts.gamma {
            s.gamma = g;
        }
        if let Some(sc) = opts.sign_consistency {
            s.sign_consistency = sc;
        }
        s
    };
    let mut out = Vec::new();
    for &n in &sizes {
        if suite.is_lowrank() {
            let ranks = match (&opts.ranks, suite) {
                (Some(r), _) => r.clone(),
                (None, Suite::Fig2) => vec![(1, 5)],
                (None, _) => LOWRANK_RANKS.to_vec(),
            };
            for (p, q) in ranks {
                out.push((tune(ProblemSpec::lowrank(family, n, p, q)), SolverConfig::inexact(opts.lowrank.clone())));
            }
        } else {
            for ls in [LineSearch::Off, LineSearch::Exact] {
                let cfg = DenseConfig { line_search: ls, ..opts.dense.clone() };
                out.push((tune(ProblemSpec::new(family, n)), SolverConfig::Newton(cfg)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let o = SuiteOptions::default();
        assert_eq!(cells(Suite::Table1, &o).len(), 4);
        assert_eq!(cells(Suite::Table3, &o).len(), 9);
        let fig2 = cells(Suite::Fig2, &o);
        assert_eq!(fig2.len(), 1);
        assert_eq!((fig2[0].0.n, fig2[0].0.p, fig2[0].0.q), (22_500, 1, 5));
        let o = SuiteOptions { sizes: Some(vec![100]), ranks: Some(vec![(2, 3)]), seed: 4, ..Default::default() };
        let c = cells(Suite::Table4, &o);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].0.n, c[0].0.p, c[0].0.q, c[0].0.seed), (100, 2, 3, 4));
        assert!(c[0].0.sign_consistency);
    }
}
