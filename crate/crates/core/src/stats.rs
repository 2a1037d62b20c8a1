use statrs::statistics::Statistics;

/// Sample mean, standard deviation and standard error of the mean.
/// The deviation terms are `None` with fewer than two values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

impl SampleSummary {
    pub fn of(values: &[f64]) -> Self {
        let sd = (values.len() >= 2).then(|| values.std_dev());
        Self {
            count: values.len(),
            mean: if values.is_empty() { f64::NAN } else { values.mean() },
            sd,
        }
    }

    pub fn std_error(&self) -> Option<f64> {
        self.sd.map(|sd| sd / (self.count as f64).sqrt())
    }
}
