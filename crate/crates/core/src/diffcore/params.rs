use super::DiffError;

/// A named contiguous extent inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub len: usize,
}

/// Flat parameter storage with named segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, segments: Vec<Segment>) -> Result<Self, DiffError> {
        let expected: usize = segments.iter().map(|s| s.len).sum();
        if expected != values.len() {
            return Err(DiffError::Shape {
                op: "ParamVector::new",
                expected,
                got: values.len(),
            });
        }
        Ok(Self { values, segments })
    }

    pub fn zeros(segments: Vec<Segment>) -> Self {
        let n = segments.iter().map(|s| s.len).sum();
        Self {
            values: vec![0.0; n],
            segments,
        }
    }

    /// An empty vector, for agents with nothing to train.
    pub fn empty() -> Self {
        Self {
            values: Vec::new(),
            segments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Start offset and length of the named segment.
    pub fn segment_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for s in &self.segments {
            if s.name == name {
                return Some(offset..offset + s.len);
            }
            offset += s.len;
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, DiffError> {
        Self::new(values, self.segments.clone())
    }

    /// `self + k * direction`, elementwise.
    pub fn axpy(&self, k: f64, direction: &[f64]) -> Result<Self, DiffError> {
        if direction.len() != self.values.len() {
            return Err(DiffError::Shape {
                op: "axpy",
                expected: self.values.len(),
                got: direction.len(),
            });
        }
        let values = self.values.iter().zip(direction).map(|(v, d)| v + k * d).collect();
        Ok(Self {
            values,
            segments: self.segments.clone(),
        })
    }
}
