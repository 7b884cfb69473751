use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    /// Tight box over `points`; `None` when empty.
    pub fn of(points: &[Point]) -> Option<Self> {
        let first = points.first()?;
        let mut b = BBox {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            b.include(*p);
        }
        Some(b)
    }

    pub fn include(&mut self, p: Point) {
        for k in 0..2 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        [
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }
}

/// Low-dimensional coordinates with a tight bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    points: Vec<Point>,
    bbox: BBox,
    labels: Option<Vec<usize>>,
}

impl Embedding {
    pub fn new(points: Vec<Point>, labels: Option<Vec<usize>>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("embedding".into()));
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::ShapeMismatch("labels vs points".into()));
            }
        }
        let bbox = BBox::of(&points).ok_or(Error::EmptyTable)?;
        Ok(Self {
            points,
            bbox,
            labels,
        })
    }

    pub fn from_tensor(t: &Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if t.cols() != 2 {
            return Err(Error::WidthMismatch {
                expected: 2,
                found: t.cols(),
            });
        }
        let points = (0..t.rows()).map(|i| [t.get(i, 0), t.get(i, 1)]).collect();
        Self::new(points, labels)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::ShapeMismatch("labels vs points".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Points carrying `label`.
    pub fn cluster(&self, label: usize) -> Vec<Point> {
        match &self.labels {
            Some(l) => self
                .points
                .iter()
                .zip(l)
                .filter(|(_, &c)| c == label)
                .map(|(p, _)| *p)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Sorted distinct labels.
    pub fn label_set(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.labels.clone().unwrap_or_default();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Appends points and widens the box.
    pub fn extended(&self, extra: &[Point]) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend_from_slice(extra);
        Self::new(points, None)
    }

    /// `x,y,label` rows; the label column is empty for unlabeled embeddings.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("x,y,label\n");
        for (i, p) in self.points.iter().enumerate() {
            let label = self
                .labels
                .as_ref()
                .map(|l| l[i].to_string())
                .unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", p[0], p[1], label));
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_is_tight() {
        let e = Embedding::new(vec![[0.0, 1.0], [2.0, -1.0], [1.0, 0.0]], None).unwrap();
        assert_eq!(e.bbox().min, [0.0, -1.0]);
        assert_eq!(e.bbox().max, [2.0, 1.0]);
        assert!((e.bbox().diagonal() - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_has_labels() {
        let e = Embedding::new(vec![[0.5, 1.0]], Some(vec![2])).unwrap();
        assert_eq!(e.to_csv_string(), "x,y,label\n0.5,1,2\n");
        assert!(Embedding::new(vec![], None).is_err());
    }
}
