//! Discrete backdoor adjustment.
//!
//! `P(Y | do(X = x)) = Σ_z P(Y | X = x, Z = z) · P(Z = z)`, computed from a
//! joint probability table over finite domains. `Z` may be a tuple of
//! variables; its cells are the product of their domains.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Tolerance on the total mass of a table.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CausalError {
    #[error("no observations")]
    Empty,
    #[error("value {value:?} is outside the domain of {variable}")]
    OutOfDomain { variable: String, value: String },
    #[error("observation has {found} confounder values, expected {expected}")]
    Arity { expected: usize, found: usize },
    #[error("domain of {0} is empty")]
    EmptyDomain(String),
    #[error("table has {found} cells, domains need {expected}")]
    TableSize { expected: usize, found: usize },
    #[error("table entry {index} is negative or not finite")]
    InvalidProbability { index: usize },
    #[error("table sums to {0}, expected 1")]
    Mass(f64),
    #[error("pseudocount must be >= 0, got {0}")]
    Pseudocount(f64),
    #[error("positivity violated: P({x_name}={x}, {z}) = 0 while P({z}) > 0")]
    Positivity { x_name: String, x: String, z: String },
}

/// Variable names and finite domains.
#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(name: impl Into<String>, domain: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    fn index(&self, value: &str) -> Result<usize, CausalError> {
        self.domain
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| CausalError::OutOfDomain {
                variable: self.name.clone(),
                value: value.into(),
            })
    }
}

/// One `(x, y, z…)` row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub x: String,
    pub y: String,
    pub z: Vec<String>,
}

impl Observation {
    pub fn new<S: Into<String>>(x: impl Into<String>, y: impl Into<String>, z: impl IntoIterator<Item = S>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            z: z.into_iter().map(Into::into).collect(),
        }
    }
}

/// A distribution over the values of `Y`, in domain order.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub values: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl Distribution {
    pub fn get(&self, value: &str) -> Option<f64> {
        self.values.iter().position(|v| v == value).map(|i| self.probabilities[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(String::as_str).zip(self.probabilities.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// A probability table over `X × Y × Z₁ × … × Zₖ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    x: Variable,
    y: Variable,
    z: Vec<Variable>,
    /// Indexed `[x][y][z cell]`, row-major.
    table: Vec<f64>,
}

impl DiscreteJoint {
    /// Validates shape, non-negativity and unit mass.
    pub fn new(x: Variable, y: Variable, z: Vec<Variable>, table: Vec<f64>) -> Result<Self, CausalError> {
        for v in core::iter::once(&x).chain(core::iter::once(&y)).chain(&z) {
            if v.domain.is_empty() {
                return Err(CausalError::EmptyDomain(v.name.clone()));
            }
        }
        let cells: usize = z.iter().map(|v| v.domain.len()).product();
        let expected = x.domain.len() * y.domain.len() * cells;
        if table.len() != expected {
            return Err(CausalError::TableSize { expected, found: table.len() });
        }
        if let Some(index) = table.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(CausalError::InvalidProbability { index });
        }
        let mass: f64 = table.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(CausalError::Mass(mass));
        }
        Ok(Self { x, y, z, table })
    }

    /// Normalized counts, plus `pseudocount` in every cell.
    ///
    /// Without declared variables, domains are the sorted observed values and
    /// names are `x`, `y`, `z`, `z2`, ….
    pub fn from_counts(
        observations: &[Observation],
        declared: Option<(Variable, Variable, Vec<Variable>)>,
        pseudocount: f64,
    ) -> Result<Self, CausalError> {
        if !(pseudocount >= 0.0 && pseudocount.is_finite()) {
            return Err(CausalError::Pseudocount(pseudocount));
        }
        let first = observations.first().ok_or(CausalError::Empty)?;
        let arity = first.z.len();
        if let Some(o) = observations.iter().find(|o| o.z.len() != arity) {
            return Err(CausalError::Arity { expected: arity, found: o.z.len() });
        }
        let (x, y, z) = match declared {
            Some((x, y, z)) => {
                if z.len() != arity {
                    return Err(CausalError::Arity { expected: z.len(), found: arity });
                }
                (x, y, z)
            }
            None => {
                let infer = |name: String, values: &mut dyn Iterator<Item = &String>| {
                    let set: BTreeSet<&String> = values.collect();
                    Variable::new(name, set.into_iter().cloned())
                };
                let x = infer("x".into(), &mut observations.iter().map(|o| &o.x));
                let y = infer("y".into(), &mut observations.iter().map(|o| &o.y));
                let z = (0..arity)
                    .map(|k| {
                        let name = if k == 0 { "z".into() } else { alloc::format!("z{}", k + 1) };
                        infer(name, &mut observations.iter().map(|o| &o.z[k]))
                    })
                    .collect();
                (x, y, z)
            }
        };
        let cells: usize = z.iter().map(|v| v.domain.len()).product();
        let (ny, nx) = (y.domain.len(), x.domain.len());
        let mut counts = alloc::vec![pseudocount; nx * ny * cells];
        for o in observations {
            let xi = x.index(&o.x)?;
            let yi = y.index(&o.y)?;
            let mut zi = 0;
            for (v, value) in z.iter().zip(&o.z) {
                zi = zi * v.domain.len() + v.index(value)?;
            }
            counts[(xi * ny + yi) * cells + zi] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        let table = counts.into_iter().map(|c| c / total).collect();
        Self::new(x, y, z, table)
    }

    pub fn x(&self) -> &Variable {
        &self.x
    }

    pub fn y(&self) -> &Variable {
        &self.y
    }

    pub fn z(&self) -> &[Variable] {
        &self.z
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Number of `Z` cells.
    pub fn z_cells(&self) -> usize {
        self.z.iter().map(|v| v.domain.len()).product()
    }

    /// Values of each confounder in cell `index`.
    pub fn z_values(&self, mut index: usize) -> Vec<&str> {
        let mut out = alloc::vec![""; self.z.len()];
        for (k, v) in self.z.iter().enumerate().rev() {
            out[k] = &v.domain[index % v.domain.len()];
            index /= v.domain.len();
        }
        out
    }

    fn z_label(&self, index: usize) -> String {
        let parts: Vec<String> = self
            .z
            .iter()
            .zip(self.z_values(index))
            .map(|(v, value)| alloc::format!("{}={}", v.name, value))
            .collect();
        parts.join(", ")
    }

    pub fn p(&self, x: usize, y: usize, z: usize) -> f64 {
        self.table[(x * self.y.domain.len() + y) * self.z_cells() + z]
    }

    pub fn p_xz(&self, x: usize, z: usize) -> f64 {
        (0..self.y.domain.len()).map(|y| self.p(x, y, z)).sum()
    }

    pub fn p_z(&self, z: usize) -> f64 {
        (0..self.x.domain.len()).map(|x| self.p_xz(x, z)).sum()
    }

    /// `(x, z cell)` pairs with zero mass.
    pub fn zero_cells(&self) -> Vec<(usize, usize)> {
        (0..self.x.domain.len())
            .flat_map(|x| (0..self.z_cells()).map(move |z| (x, z)))
            .filter(|&(x, z)| self.p_xz(x, z) == 0.0)
            .collect()
    }

    fn distribution(&self, probabilities: Vec<f64>) -> Distribution {
        Distribution {
            values: self.y.domain.clone(),
            probabilities,
        }
    }

    /// Unadjusted `P(Y | X = x)`.
    pub fn conditional(&self, x: &str) -> Result<Distribution, CausalError> {
        let xi = self.x.index(x)?;
        let cells = self.z_cells();
        let joint: Vec<f64> = (0..self.y.domain.len())
            .map(|y| (0..cells).map(|z| self.p(xi, y, z)).sum())
            .collect();
        let px: f64 = joint.iter().sum();
        if px == 0.0 {
            return Err(CausalError::Positivity {
                x_name: self.x.name.clone(),
                x: x.into(),
                z: "any Z".into(),
            });
        }
        Ok(self.distribution(joint.into_iter().map(|p| p / px).collect()))
    }

    /// `Σ_z P(Y | X = x, z) P(z)`.
    pub fn backdoor_adjust(&self, x: &str) -> Result<Distribution, CausalError> {
        let xi = self.x.index(x)?;
        let mut out = alloc::vec![0.0; self.y.domain.len()];
        for z in 0..self.z_cells() {
            let pz = self.p_z(z);
            if pz == 0.0 {
                continue;
            }
            let pxz = self.p_xz(xi, z);
            if pxz == 0.0 {
                return Err(CausalError::Positivity {
                    x_name: self.x.name.clone(),
                    x: x.into(),
                    z: self.z_label(z),
                });
            }
            for (y, acc) in out.iter_mut().enumerate() {
                *acc += self.p(xi, y, z) / pxz * pz;
            }
        }
        Ok(self.distribution(out))
    }
}
