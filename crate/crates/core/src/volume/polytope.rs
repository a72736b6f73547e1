use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::VolumeError;

/// Origin of a polytope row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowTag {
    /// Halfspace from the barrier with the given index.
    Cbf(usize),
    /// Input-bound row.
    InputBound,
}

/// Axis-aligned input box `lower ≤ u ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, VolumeError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(VolumeError::InvalidBox(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(VolumeError::InvalidBox(format!(
                "lower {lower:?} must be strictly below upper {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self, VolumeError> {
        Self::new(half_widths.iter().map(|h| -h).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Clamps `u` into the box.
    pub fn saturate(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }

    /// The `2m` rows `eⱼ·u ≤ upperⱼ`, `−eⱼ·u ≤ −lowerⱼ`.
    pub fn rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.dim();
        let mut a = DMatrix::zeros(2 * m, m);
        let mut b = DVector::zeros(2 * m);
        for j in 0..m {
            a[(2 * j, j)] = 1.0;
            b[2 * j] = self.upper[j];
            a[(2 * j + 1, j)] = -1.0;
            b[2 * j + 1] = -self.lower[j];
        }
        (a, b)
    }
}

/// `{u : A u ≤ b}` with per-row tags.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    tags: Vec<RowTag>,
    /// Set when a zero row has a negative offset.
    trivially_empty: bool,
}

impl HPolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, tags: Vec<RowTag>) -> Result<Self, VolumeError> {
        if a.ncols() == 0 {
            return Err(VolumeError::Shape("polytope needs at least one column".into()));
        }
        if a.nrows() != b.len() || tags.len() != b.len() {
            return Err(VolumeError::Shape(format!(
                "A has {} rows, b has {}, tags has {}",
                a.nrows(),
                b.len(),
                tags.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(VolumeError::Shape("polytope data must be finite".into()));
        }
        let trivially_empty = (0..a.nrows()).any(|i| a.row(i).norm() == 0.0 && b[i] < 0.0);
        Ok(Self {
            a,
            b,
            tags,
            trivially_empty,
        })
    }

    /// The box alone.
    pub fn from_box(bounds: &InputBox) -> Self {
        let (a, b) = bounds.rows();
        let tags = vec![RowTag::InputBound; b.len()];
        Self::new(a, b, tags).expect("box rows are well formed")
    }

    /// Stacks `cbf_rows` (tagged `Cbf(0..)`) above the box rows.
    pub fn from_cbf_rows(
        cbf_a: &DMatrix<f64>,
        cbf_b: &DVector<f64>,
        bounds: &InputBox,
    ) -> Result<Self, VolumeError> {
        let m = bounds.dim();
        if cbf_a.ncols() != m && cbf_a.nrows() > 0 {
            return Err(VolumeError::Shape(format!(
                "CBF rows have {} columns, box has dimension {m}",
                cbf_a.ncols()
            )));
        }
        let n = cbf_a.nrows();
        let (box_a, box_b) = bounds.rows();
        let mut a = DMatrix::zeros(n + box_a.nrows(), m);
        let mut b = DVector::zeros(n + box_b.len());
        if n > 0 {
            a.view_mut((0, 0), (n, m)).copy_from(cbf_a);
            b.rows_mut(0, n).copy_from(cbf_b);
        }
        a.view_mut((n, 0), (box_a.nrows(), m)).copy_from(&box_a);
        b.rows_mut(n, box_b.len()).copy_from(&box_b);
        let mut tags: Vec<RowTag> = (0..n).map(RowTag::Cbf).collect();
        tags.extend(std::iter::repeat(RowTag::InputBound).take(box_b.len()));
        Self::new(a, b, tags)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn tags(&self) -> &[RowTag] {
        &self.tags
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_trivially_empty(&self) -> bool {
        self.trivially_empty
    }

    /// Indices of rows not tagged as input bounds.
    pub fn cbf_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, t)| !matches!(t, RowTag::InputBound))
            .map(|(i, _)| i)
    }

    /// `bᵢ − aᵢ·u`.
    pub fn slack(&self, i: usize, u: &DVector<f64>) -> f64 {
        self.b[i] - self.a.row(i).dot(&u.transpose())
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        (0..self.rows()).all(|i| self.slack(i, u) >= -tol)
    }

    /// Copy with replaced data and the same tags.
    pub fn with_data(&self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, VolumeError> {
        Self::new(a, b, self.tags.clone())
    }

    /// Input box spanned by the `InputBound` rows, when they form one.
    pub fn input_box(&self) -> Option<InputBox> {
        let m = self.dim();
        let mut lower = vec![f64::NEG_INFINITY; m];
        let mut upper = vec![f64::INFINITY; m];
        for (i, tag) in self.tags.iter().enumerate() {
            if *tag != RowTag::InputBound {
                continue;
            }
            let row = self.a.row(i);
            let nz: Vec<usize> = (0..m).filter(|&j| row[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let bound = self.b[i] / row[j];
            if row[j] > 0.0 {
                upper[j] = upper[j].min(bound);
            } else {
                lower[j] = lower[j].max(bound);
            }
        }
        InputBox::new(lower, upper).ok()
    }
}

/// JSON fixture layout: `{"A": [[..], ..], "b": [..], "tags": [..]}`.
///
/// Tags are `"bound"` or `"cbf"`; a missing tag list marks every row as a
/// CBF row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeFixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
}

impl PolytopeFixture {
    pub fn to_polytope(&self) -> Result<HPolytope, VolumeError> {
        let rows = self.a.len();
        let cols = self.a.first().map_or(0, Vec::len);
        if self.a.iter().any(|r| r.len() != cols) {
            return Err(VolumeError::Shape("ragged A matrix".into()));
        }
        let a = DMatrix::from_fn(rows, cols, |i, j| self.a[i][j]);
        let b = DVector::from_vec(self.b.clone());
        let mut cbf = 0;
        let tags = match &self.tags {
            None => (0..rows).map(RowTag::Cbf).collect(),
            Some(tags) => tags
                .iter()
                .map(|t| match t.as_str() {
                    "bound" | "input_bound" => Ok(RowTag::InputBound),
                    "cbf" => {
                        cbf += 1;
                        Ok(RowTag::Cbf(cbf - 1))
                    }
                    other => Err(VolumeError::Shape(format!("unknown row tag {other:?}"))),
                })
                .collect::<Result<_, _>>()?,
        };
        HPolytope::new(a, b, tags)
    }

    pub fn from_polytope(name: Option<String>, p: &HPolytope) -> Self {
        Self {
            name,
            a: (0..p.rows())
                .map(|i| p.a().row(i).iter().copied().collect())
                .collect(),
            b: p.b().iter().copied().collect(),
            tags: Some(
                p.tags()
                    .iter()
                    .map(|t| match t {
                        RowTag::Cbf(_) => "cbf".to_string(),
                        RowTag::InputBound => "bound".to_string(),
                    })
                    .collect(),
            ),
        }
    }
}
