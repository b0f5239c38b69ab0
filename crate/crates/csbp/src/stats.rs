//! Deterministic reductions: Neumaier-compensated sums in index order.

#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(xs: impl IntoIterator<Item = f64>) -> MeanSe {
    let xs: Vec<f64> = xs.into_iter().collect();
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let mut s = Neumaier::default();
    for &x in &xs {
        s.add(x);
    }
    let mean = s.value() / n as f64;
    let mut ss = Neumaier::default();
    for &x in &xs {
        ss.add((x - mean) * (x - mean));
    }
    let var = if n > 1 { ss.value() / (n - 1) as f64 } else { 0.0 };
    MeanSe { mean, se: (var / n as f64).sqrt(), n }
}

/// Mean and s.e. of a − b over paired samples.
pub fn paired_diff(a: &[f64], b: &[f64]) -> MeanSe {
    assert_eq!(a.len(), b.len());
    mean_se(a.iter().zip(b).map(|(x, y)| x - y))
}
