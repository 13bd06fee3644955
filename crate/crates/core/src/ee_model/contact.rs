use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-10;

/// Non-negative `G × G` contact weights. Entry `(g', g)` weighs how much
/// last week's counts in group `g'` feed the epidemic component of `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMatrix {
    weights: DMatrix<f64>,
    labels: Vec<String>,
}

impl ContactMatrix {
    pub fn new(weights: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let g = weights.nrows();
        if g == 0 || weights.ncols() != g {
            return Err(Error::domain(format!(
                "contact matrix must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if labels.len() != g {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: g,
            });
        }
        if let Some(x) = weights.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::domain(format!(
                "contact weight {x} is not a non-negative number"
            )));
        }
        Ok(Self { weights, labels })
    }

    fn default_labels(g: usize) -> Vec<String> {
        (1..=g).map(|i| format!("g{i}")).collect()
    }

    /// No mixing: `c_{g'g} = 1{g' = g}`.
    pub fn identity(g: usize) -> Self {
        Self {
            weights: DMatrix::identity(g, g),
            labels: Self::default_labels(g),
        }
    }

    /// Homogeneous mixing: all weights 1.
    pub fn homogeneous(g: usize) -> Self {
        Self {
            weights: DMatrix::from_element(g, g, 1.0),
            labels: Self::default_labels(g),
        }
    }

    /// Reads a CSV with a header row of labels preceded by one corner cell,
    /// and one row per group starting with its label.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let labels: Vec<String> = rdr
            .headers()?
            .iter()
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let g = labels.len();
        let mut values = Vec::with_capacity(g * g);
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != g + 1 {
                return Err(Error::Data {
                    path: name,
                    line,
                    message: format!("expected {} fields, found {}", g + 1, rec.len()),
                });
            }
            for field in rec.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| Error::Data {
                    path: name.clone(),
                    line,
                    message: format!("cannot parse '{field}' as a number"),
                })?;
                values.push(v);
            }
            rows += 1;
        }
        if rows != g {
            return Err(Error::Data {
                path: name,
                line: rows + 1,
                message: format!("expected {g} rows, found {rows}"),
            });
        }
        Self::new(DMatrix::from_row_slice(g, g, &values), labels)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Each row divided by its sum.
    pub fn row_normalize(&self) -> Result<ContactMatrix> {
        let mut w = self.weights.clone();
        for (i, mut row) in w.row_iter_mut().enumerate() {
            let s: f64 = row.sum();
            if !(s > 0.0) {
                return Err(Error::domain(format!(
                    "row {i} of the contact matrix sums to zero"
                )));
            }
            row /= s;
        }
        Ok(ContactMatrix {
            weights: w,
            labels: self.labels.clone(),
        })
    }

    /// Same weights with groups reordered: new group `i` is old group
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ContactMatrix {
        let g = self.dim();
        ContactMatrix {
            weights: DMatrix::from_fn(g, g, |i, j| self.weights[(perm[i], perm[j])]),
            labels: perm.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// `C^κ` through the eigendecomposition. The flag reports whether
    /// negative entries produced by round-off or a negative κ were clipped
    /// to zero.
    pub fn power_transform(&self, kappa: f64) -> Result<(ContactMatrix, bool)> {
        let basis = PowerBasis::new(self)?;
        let (m, clipped) = basis.power(kappa);
        Ok((
            ContactMatrix {
                weights: m,
                labels: self.labels.clone(),
            },
            clipped,
        ))
    }
}

/// Eigendecomposition of a symmetric contact matrix, reused across many
/// powers.
#[derive(Debug, Clone)]
pub(crate) struct PowerBasis {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl PowerBasis {
    pub(crate) fn new(c: &ContactMatrix) -> Result<Self> {
        let w = &c.weights;
        let scale = w.amax().max(1.0);
        for i in 0..c.dim() {
            for j in 0..i {
                if (w[(i, j)] - w[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::domain(
                        "power transform needs a symmetric contact matrix",
                    ));
                }
            }
        }
        let eig = SymmetricEigen::new(w.clone());
        let max_abs = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let mut values = eig.eigenvalues.clone();
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v < -EIGEN_TOL * max_abs {
                    return Err(Error::domain(format!(
                        "contact matrix has a negative eigenvalue {v}"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(Self {
            vectors: eig.eigenvectors,
            values,
        })
    }

    fn reconstruct(&self, diag: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.values.map(diag));
        &self.vectors * d * self.vectors.transpose()
    }

    /// `C^κ` with negative entries clipped to zero.
    pub(crate) fn power(&self, kappa: f64) -> (DMatrix<f64>, bool) {
        let mut m = self.reconstruct(|l| pow0(l, kappa));
        let clipped = clip_negative(&mut m);
        (m, clipped)
    }

    /// `(C^κ, d C^κ / dκ)`, derivative zeroed where entries were clipped.
    pub(crate) fn power_with_derivative(&self, kappa: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, _) = self.power(kappa);
        let mut dm = self.reconstruct(|l| if l > 0.0 { l.powf(kappa) * l.ln() } else { 0.0 });
        for (x, d) in m.iter().zip(dm.iter_mut()) {
            if *x == 0.0 {
                *d = 0.0;
            }
        }
        (m, dm)
    }
}

/// `λ^κ` with `0^κ = 0` for `κ ≠ 0` and `0^0 = 1`.
fn pow0(l: f64, kappa: f64) -> f64 {
    if l > 0.0 {
        l.powf(kappa)
    } else if kappa == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn clip_negative(m: &mut DMatrix<f64>) -> bool {
    let scale = m.amax();
    let mut clipped = false;
    for x in m.iter_mut() {
        if *x < 0.0 {
            // round-off noise around zero is not reported
            if *x < -1e-12 * scale {
                clipped = true;
            }
            *x = 0.0;
        }
    }
    clipped
}

/// Row-normalizes `m` and carries a derivative along:
/// `d(a_ij / r_i) = da_ij / r_i − a_ij dr_i / r_i²`.
pub(crate) fn row_normalize_with_derivative(
    m: &DMatrix<f64>,
    dm: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let g = m.nrows();
    let mut w = m.clone();
    let mut dw = dm.clone();
    for i in 0..g {
        let r: f64 = m.row(i).sum();
        if !(r > 0.0) {
            return Err(Error::domain(format!(
                "row {i} of the contact matrix sums to zero"
            )));
        }
        let dr: f64 = dm.row(i).sum();
        for j in 0..g {
            w[(i, j)] = m[(i, j)] / r;
            dw[(i, j)] = dm[(i, j)] / r - m[(i, j)] * dr / (r * r);
        }
    }
    Ok((w, dw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ContactMatrix {
        let w = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.8, 0.5, 0.8, 2.0]);
        ContactMatrix::new(w, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn power_identities() {
        let c = fixture();
        let (p1, _) = c.power_transform(1.0).unwrap();
        assert!((p1.weights() - c.weights()).amax() < 1e-10);
        let (p0, _) = c.power_transform(0.0).unwrap();
        assert!((p0.weights() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        let (p2, _) = c.power_transform(2.0).unwrap();
        assert!((p2.weights() - c.weights() * c.weights()).amax() < 1e-8);
    }

    #[test]
    fn power_derivative_matches_finite_differences() {
        let basis = PowerBasis::new(&fixture()).unwrap();
        let k = 0.7;
        let h = 1e-6;
        let (_, d) = basis.power_with_derivative(k);
        let fd = (basis.power(k + h).0 - basis.power(k - h).0) / (2.0 * h);
        assert!((d - fd).amax() < 1e-7);
    }

    #[test]
    fn rejects_asymmetric_and_negative_eigenvalues() {
        let asym = ContactMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.0]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(asym.power_transform(0.5).is_err());
        let indefinite = ContactMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(indefinite.power_transform(0.5).is_err());
    }

    #[test]
    fn row_normalization() {
        let h = ContactMatrix::homogeneous(6).row_normalize().unwrap();
        assert!(h.weights().iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-15));
        let i = ContactMatrix::identity(4).row_normalize().unwrap();
        assert_eq!(i.weights(), &DMatrix::<f64>::identity(4, 4));
        let f = fixture().row_normalize().unwrap();
        for r in f.weights().row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        let z = ContactMatrix::new(DMatrix::zeros(2, 2), vec!["a".into(), "b".into()]).unwrap();
        assert!(z.row_normalize().is_err());
    }

    #[test]
    fn rejects_negative_weights() {
        assert!(
            ContactMatrix::new(DMatrix::from_row_slice(1, 1, &[-1.0]), vec!["a".into()]).is_err()
        );
    }
}
