use crate::field::RadianceField;
use crate::geometry::CameraPose;

/// Every quantity the trainer can optimize.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    pub field: RadianceField,
    pub poses: Vec<CameraPose>,
    pub focal: f64,
}

/// Which parameter groups receive gradients. Image indices are sorted and
/// deduplicated on construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Learnable {
    pub theta: bool,
    pub rotations: Vec<usize>,
    pub translations: Vec<usize>,
    pub focal: bool,
}

impl Learnable {
    pub fn new(theta: bool, mut rotations: Vec<usize>, mut translations: Vec<usize>, focal: bool) -> Self {
        rotations.sort_unstable();
        rotations.dedup();
        translations.sort_unstable();
        translations.dedup();
        Self { theta, rotations, translations, focal }
    }

    pub fn frozen() -> Self {
        Self::default()
    }

    pub fn any_camera(&self) -> bool {
        !self.rotations.is_empty() || !self.translations.is_empty() || self.focal
    }

    /// Number of learnable scalars in `store` under these flags.
    pub fn count(&self, store: &ParameterStore) -> usize {
        let theta = if self.theta { store.field.parameter_count() } else { 0 };
        theta + 3 * (self.rotations.len() + self.translations.len()) + usize::from(self.focal)
    }
}

/// Gradient restricted to the learnable groups. Frozen groups are absent.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreGradient {
    pub theta: Option<Vec<f64>>,
    pub rotations: Vec<(usize, [f64; 3])>,
    pub translations: Vec<(usize, [f64; 3])>,
    pub focal: Option<f64>,
}

impl StoreGradient {
    pub fn zeros(store: &ParameterStore, learnable: &Learnable) -> Self {
        Self {
            theta: learnable.theta.then(|| vec![0.0; store.field.parameter_count()]),
            rotations: learnable.rotations.iter().map(|&i| (i, [0.0; 3])).collect(),
            translations: learnable.translations.iter().map(|&i| (i, [0.0; 3])).collect(),
            focal: learnable.focal.then_some(0.0),
        }
    }

    /// Flat vector in layout order: θ, rotations, translations, focal.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.theta.clone().unwrap_or_default();
        for (_, g) in self.rotations.iter().chain(&self.translations) {
            out.extend_from_slice(g);
        }
        out.extend(self.focal);
        out
    }

    pub fn add_assign(&mut self, other: &StoreGradient) {
        if let (Some(a), Some(b)) = (&mut self.theta, &other.theta) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (mine, theirs) in [(&mut self.rotations, &other.rotations), (&mut self.translations, &other.translations)] {
            for ((_, a), (_, b)) in mine.iter_mut().zip(theirs) {
                for k in 0..3 {
                    a[k] += b[k];
                }
            }
        }
        if let (Some(a), Some(b)) = (&mut self.focal, other.focal) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}
