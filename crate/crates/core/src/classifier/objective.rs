use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Mean sample-weighted softmax cross-entropy plus `lambda/2 * |W|^2`.
///
/// Parameters are packed as the class-by-feature weights in row-major order
/// followed by the class biases. The bias is never penalised.
pub struct Objective<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    sample_weight: Array1<f64>,
    n_classes: usize,
    lambda: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        x: ArrayView2<'a, f64>,
        y: &'a [usize],
        sample_weight: Array1<f64>,
        n_classes: usize,
        lambda: f64,
    ) -> Self {
        assert_eq!(x.nrows(), y.len());
        assert_eq!(sample_weight.len(), y.len());
        Objective {
            x,
            y,
            sample_weight,
            n_classes,
            lambda,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_classes * (self.x.ncols() + 1)
    }

    pub(crate) fn unpack<'p>(&self, params: &'p [f64]) -> (ArrayView2<'p, f64>, ArrayView1<'p, f64>) {
        let v = self.x.ncols();
        let k = self.n_classes;
        let w = ArrayView2::from_shape((k, v), &params[..k * v]).expect("packed weights");
        let b = ArrayView1::from(&params[k * v..k * v + k]);
        (w, b)
    }

    /// Objective value and gradient at `params`.
    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = self.unpack(params);
        let n = self.x.nrows() as f64;
        let mut z = self.x.dot(&w.t());
        z += &b;

        let mut loss = 0.0;
        // z becomes the residual (p - onehot) * weight / n
        for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
            let yi = self.y[i];
            let wi = self.sample_weight[i];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let true_logit = row[yi] - max;
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            loss += wi * (sum.ln() - true_logit);
            for v in row.iter_mut() {
                *v /= sum;
            }
            row[yi] -= 1.0;
            row *= wi / n;
        }
        loss /= n;

        let mut grad_w: Array2<f64> = z.t().dot(&self.x);
        if self.lambda > 0.0 {
            loss += 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
            grad_w.scaled_add(self.lambda, &w);
        }
        let grad_b = z.sum_axis(Axis(0));

        let mut grad = Vec::with_capacity(params.len());
        grad.extend(grad_w.iter().copied());
        grad.extend(grad_b.iter().copied());
        (loss, grad)
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.value_and_gradient(params).0
    }
}
