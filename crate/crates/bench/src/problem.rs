//! Problem specifications, their realization, and Matrix Market manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use triccati::lowrank::LowRankTRiccatiProblem;
use triccati::mmio::{read_dense, read_triplets, write_dense, write_triplets, Triplets};
use triccati::riccati_dense::{audit_signs, SignAudit, TRiccatiProblem, AUDIT_MAX_ORDER};
use triccati::sparse::CsrMatrix;
use triccati::{DenseMatrix, Error, Result};

use crate::generators::{
    ex1_lowrank_parts, ex2_lowrank_parts, generate_ex1_dense, generate_ex2_dense, grid_side, LowRankParts,
    DEFAULT_GAMMA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ex1Dense,
    Ex1LowRank,
    Ex2Dense,
    Ex2LowRank,
    File,
}

impl Family {
    pub fn is_lowrank(self) -> bool {
        matches!(self, Family::Ex1LowRank | Family::Ex2LowRank)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Ex1Dense => "ex1_dense",
            Family::Ex1LowRank => "ex1_lowrank",
            Family::Ex2Dense => "ex2_dense",
            Family::Ex2LowRank => "ex2_lowrank",
            Family::File => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub gamma: f64,
    pub seed: u64,
    pub sign_consistency: bool,
    /// Manifest path for [`Family::File`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
}

impl ProblemSpec {
    /// Defaults: `γ = 10⁴`, seed 0; the low-rank families get `p = q = 1`
    /// and sign consistency, the others `p = q = 0` and none.
    pub fn new(family: Family, n: usize) -> Self {
        let r = usize::from(family.is_lowrank());
        ProblemSpec {
            family,
            n,
            p: r,
            q: r,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            sign_consistency: family.is_lowrank(),
            problem: None,
        }
    }

    pub fn lowrank(family: Family, n: usize, p: usize, q: usize) -> Self {
        ProblemSpec { p, q, ..Self::new(family, n) }
    }

    pub fn from_file(path: impl Into<PathBuf>) -> Self {
        ProblemSpec { problem: Some(path.into()), ..Self::new(Family::File, 0) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match self.family {
            Family::File => {
                if self.problem.is_none() {
                    return bad("file family needs a manifest path".into());
                }
                return Ok(());
            }
            Family::Ex1Dense | Family::Ex1LowRank => {
                grid_side(self.n)?;
                if !self.gamma.is_finite() {
                    return bad(format!("gamma must be finite, got {}", self.gamma));
                }
            }
            Family::Ex2Dense | Family::Ex2LowRank => {
                if self.n == 0 {
                    return bad("n must be positive".into());
                }
            }
        }
        if self.family.is_lowrank() && (self.p == 0 || self.q == 0) {
            return bad(format!("p and q must be positive, got p = {}, q = {}", self.p, self.q));
        }
        Ok(())
    }

    /// Short file-name stem identifying the instance.
    pub fn stem(&self) -> String {
        match self.family {
            Family::File => {
                let p = self.problem.as_deref().and_then(Path::file_stem).and_then(|s| s.to_str());
                format!("file_{}", p.unwrap_or("problem"))
            }
            f if f.is_lowrank() => format!("{}_n{}_p{}_q{}_s{}", f.name(), self.n, self.p, self.q, self.seed),
            f => format!("{}_n{}_s{}", f.name(), self.n, self.seed),
        }
    }

    /// Build the instance.
    pub fn realize(&self) -> Result<Problem> {
        self.validate()?;
        let s = self;
        match s.family {
            Family::Ex1Dense => Ok(Problem::dense(generate_ex1_dense(s.n, s.gamma, s.seed, s.sign_consistency)?, None)),
            Family::Ex2Dense => {
                let (prob, x) = generate_ex2_dense(s.n, s.seed)?;
                Ok(Problem::dense(prob, Some(x)))
            }
            Family::Ex1LowRank => Problem::lowrank(ex1_lowrank_parts(s.n, s.p, s.q, s.gamma, s.seed, s.sign_consistency)?),
            Family::Ex2LowRank => Problem::lowrank(ex2_lowrank_parts(s.n, s.p, s.q, s.seed, s.sign_consistency)?),
            Family::File => read_manifest(s.problem.as_deref().expect("validated")),
        }
    }
}

/// A realized instance.
#[derive(Debug)]
pub enum Problem {
    Dense {
        prob: TRiccatiProblem,
        x_exact: Option<DenseMatrix>,
        audit: Option<SignAudit>,
    },
    LowRank {
        prob: LowRankTRiccatiProblem,
        parts: LowRankParts,
        audit: Option<SignAudit>,
    },
}

impl Problem {
    pub fn dense(prob: TRiccatiProblem, x_exact: Option<DenseMatrix>) -> Self {
        let audit = (prob.n() <= AUDIT_MAX_ORDER)
            .then(|| audit_signs(&prob.a, &prob.b, &prob.c, &prob.d).ok())
            .flatten();
        Problem::Dense { prob, x_exact, audit }
    }

    pub fn lowrank(parts: LowRankParts) -> Result<Self> {
        let prob = parts.clone().into_problem()?;
        let audit = if prob.n() <= AUDIT_MAX_ORDER {
            let (a, b, c, d) = prob.to_dense();
            audit_signs(&a, &b, &c, &d).ok()
        } else {
            None
        };
        Ok(Problem::LowRank { prob, parts, audit })
    }

    pub fn n(&self) -> usize {
        match self {
            Problem::Dense { prob, .. } => prob.n(),
            Problem::LowRank { prob, .. } => prob.n(),
        }
    }

    /// Sign and M-matrix audit, present for orders up to 200.
    pub fn audit(&self) -> Option<&SignAudit> {
        match self {
            Problem::Dense { audit, .. } | Problem::LowRank { audit, .. } => audit.as_ref(),
        }
    }
}

/// JSON manifest naming the Matrix Market files of a problem; paths are
/// relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifest {
    Dense {
        a: PathBuf,
        b: PathBuf,
        c: PathBuf,
        d: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_exact: Option<PathBuf>,
    },
    /// `B = B₁B₂ᵀ` with `n × p` factors, `C = C₁C₂ᵀ` with `n × q` factors.
    Lowrank {
        a: PathBuf,
        d: PathBuf,
        b1: PathBuf,
        b2: PathBuf,
        c1: PathBuf,
        c2: PathBuf,
    },
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidConfig(format!("manifest: {e}"))
}

fn read_csr(path: &Path) -> Result<CsrMatrix> {
    let t = read_triplets(path)?;
    CsrMatrix::from_triplets(t.nrows, t.ncols, &t.entries)
}

pub fn read_manifest(path: &Path) -> Result<Problem> {
    let text = fs::read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(json_err)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    match manifest {
        Manifest::Dense { a, b, c, d, x_exact } => {
            let prob = TRiccatiProblem::new(
                read_dense(dir.join(a))?,
                read_dense(dir.join(b))?,
                read_dense(dir.join(c))?,
                read_dense(dir.join(d))?,
            )?;
            let x = x_exact.map(|x| read_dense(dir.join(x))).transpose()?;
            Ok(Problem::dense(prob, x))
        }
        Manifest::Lowrank { a, d, b1, b2, c1, c2 } => Problem::lowrank(LowRankParts {
            a: read_csr(&dir.join(a))?,
            d: read_csr(&dir.join(d))?,
            b1: read_dense(dir.join(b1))?,
            b2: read_dense(dir.join(b2))?,
            c1: read_dense(dir.join(c1))?,
            c2: read_dense(dir.join(c2))?,
        }),
    }
}

/// Write the problem's matrices and a manifest into `dir`; returns the manifest path.
pub fn write_manifest(problem: &Problem, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let name = |s: &str| PathBuf::from(format!("{s}.mtx"));
    let manifest = match problem {
        Problem::Dense { prob, x_exact, .. } => {
            for (s, m) in [("A", &prob.a), ("B", &prob.b), ("C", &prob.c), ("D", &prob.d)] {
                write_dense(dir.join(name(s)), m)?;
            }
            if let Some(x) = x_exact {
                write_dense(dir.join(name("X_exact")), x)?;
            }
            Manifest::Dense {
                a: name("A"),
                b: name("B"),
                c: name("C"),
                d: name("D"),
                x_exact: x_exact.as_ref().map(|_| name("X_exact")),
            }
        }
        Problem::LowRank { parts, .. } => {
            for (s, m) in [("A", &parts.a), ("D", &parts.d)] {
                let t = Triplets { nrows: m.nrows(), ncols: m.ncols(), entries: m.triplets() };
                write_triplets(dir.join(name(s)), &t)?;
            }
            for (s, m) in [("B1", &parts.b1), ("B2", &parts.b2), ("C1", &parts.c1), ("C2", &parts.c2)] {
                write_dense(dir.join(name(s)), m)?;
            }
            Manifest::Lowrank { a: name("A"), d: name("D"), b1: name("B1"), b2: name("B2"), c1: name("C1"), c2: name("C2") }
        }
    };
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(json_err)?)?;
    Ok(path)
}
