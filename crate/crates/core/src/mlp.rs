//! Linear layers and small multi-layer perceptrons with hand-rolled
//! reverse-mode gradients.
//!
//! Hidden layers use ReLU; the output layer is affine (no activation).
//! Forward passes that will be differentiated record a [`MlpTape`] of the
//! intermediate activations, which the backward pass consumes together
//! with the incoming output gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vector<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: Vector::zeros(out_dim),
        }
    }

    /// Xavier-uniform weight init, zero bias.
    pub fn init<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weight = Matrix::zeros(out_dim, in_dim);
        for w in weight.data_mut() {
            *w = T::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        Linear {
            weight,
            bias: Vector::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[T]) -> Vector<T> {
        let mut y = self.weight.matvec(x);
        y.add_assign(&self.bias);
        y
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, x: &[T], grad_out: &[T], grads: &mut Linear<T>) -> Vector<T> {
        grads.weight.add_outer(grad_out, x);
        for (gb, &g) in grads.bias.as_mut_slice().iter_mut().zip(grad_out) {
            *gb += g;
        }
        self.weight.matvec_transposed(grad_out)
    }
}

/// Multi-layer perceptron: ReLU between layers, affine output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// Activations recorded by [`Mlp::forward_tape`]: the input to each layer
/// and each layer's pre-activation output.
#[derive(Debug, Clone)]
pub struct MlpTape<T> {
    layer_inputs: Vec<Vec<T>>,
    preacts: Vec<Vec<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Builds a zero-initialized MLP with the given layer widths,
    /// e.g. `&[8, 16, 4]` for 8 → 16 → 4.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        Mlp {
            layers: dims.windows(2).map(|w| Linear::zeros(w[1], w[0])).collect(),
        }
    }

    pub fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        Mlp {
            layers: dims
                .windows(2)
                .map(|w| Linear::init(w[1], w[0], rng))
                .collect(),
        }
    }

    /// A same-shape MLP of zeros, for use as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("empty mlp").in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("empty mlp").out_dim()
    }

    pub fn forward(&self, x: &[T]) -> Vector<T> {
        self.forward_tape(x).0
    }

    pub fn forward_tape(&self, x: &[T]) -> (Vector<T>, MlpTape<T>) {
        let last = self.layers.len() - 1;
        let mut tape = MlpTape {
            layer_inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
        };
        let mut h: Vec<T> = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            tape.layer_inputs.push(h);
            tape.preacts.push(z.0.clone());
            h = if i < last {
                z.0.into_iter().map(|v| v.max(T::zero())).collect()
            } else {
                z.0
            };
        }
        (Vector(h), tape)
    }

    /// Backpropagates `grad_out` through the recorded forward pass,
    /// accumulating parameter gradients into `grads` (same shape as
    /// `self`, see [`Mlp::zeros_like`]) and returning the gradient with
    /// respect to the network input.
    pub fn backward(&self, tape: &MlpTape<T>, grad_out: &[T], grads: &mut Mlp<T>) -> Vector<T> {
        assert_eq!(
            tape.layer_inputs.len(),
            self.layers.len(),
            "mlp backward: tape does not match network depth"
        );
        let last = self.layers.len() - 1;
        let mut g: Vec<T> = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                // gate through the ReLU that followed this layer's output
                for (gv, &z) in g.iter_mut().zip(&tape.preacts[i]) {
                    if z <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            g = self.layers[i]
                .backward(&tape.layer_inputs[i], &g, &mut grads.layers[i])
                .0;
        }
        Vector(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_layer_forward_by_hand() {
        // W = [[1,2],[3,4]], b = [0.5,-0.5], x = [1,1] → [3.5, 6.5]
        let layer = Linear {
            weight: Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]),
            bias: Vector(vec![0.5, -0.5]),
        };
        assert_eq!(layer.forward(&[1.0, 1.0]).0, vec![3.5, 6.5]);
    }

    #[test]
    fn degenerate_single_layer_nets() {
        // identity weights, zero bias: output = input (incl. negatives,
        // since the output layer has no activation)
        let identity = Mlp {
            layers: vec![Linear {
                weight: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
                bias: Vector::zeros(2),
            }],
        };
        assert_eq!(identity.forward(&[1.0, -2.0]).0, vec![1.0, -2.0]);
        // identity backward: input gradient = output gradient
        let (_, tape) = identity.forward_tape(&[1.0, -2.0]);
        let mut grads = identity.zeros_like();
        let gx = identity.backward(&tape, &[0.3, -0.7], &mut grads);
        assert_eq!(gx.0, vec![0.3, -0.7]);

        // zero weights, bias [5]: constant output, zero input gradient
        let constant = Mlp {
            layers: vec![Linear {
                weight: Matrix::zeros(1, 3),
                bias: Vector(vec![5.0]),
            }],
        };
        assert_eq!(constant.forward(&[9.0, -4.0, 0.1]).0, vec![5.0]);
        let (_, tape) = constant.forward_tape(&[9.0, -4.0, 0.1]);
        let mut grads = constant.zeros_like();
        let gx = constant.backward(&tape, &[1.0], &mut grads);
        assert_eq!(gx.0, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_clips_hidden_negatives_only() {
        // Layer 1 maps x → [x, -x]; ReLU keeps [x, 0] for x > 0.
        // Layer 2 sums its inputs, so the output is x, not 0.
        let mlp = Mlp {
            layers: vec![
                Linear {
                    weight: Matrix::from_vec(2, 1, vec![1.0, -1.0]),
                    bias: Vector::zeros(2),
                },
                Linear {
                    weight: Matrix::from_vec(1, 2, vec![1.0, 1.0]),
                    bias: Vector::zeros(1),
                },
            ],
        };
        assert_eq!(mlp.forward(&[3.0]).0, vec![3.0]);
        // output layer itself is affine: negatives pass through
        assert_eq!(mlp.forward(&[-3.0]).0, vec![3.0]); // relu(-3)=0, relu(3)=3
    }

    fn flatten(mlp: &Mlp<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &mlp.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    fn unflatten(template: &Mlp<f64>, flat: &[f64]) -> Mlp<f64> {
        let mut mlp = template.clone();
        let mut k = 0;
        for l in &mut mlp.layers {
            for w in l.weight.data_mut() {
                *w = flat[k];
                k += 1;
            }
            for b in l.bias.as_mut_slice() {
                *b = flat[k];
                k += 1;
            }
        }
        assert_eq!(k, flat.len());
        mlp
    }

    /// Scalar loss used for gradient checking: ½ Σ w_i · y_i² with fixed
    /// per-output weights, so the output gradient is non-uniform.
    fn probe_loss(mlp: &Mlp<f64>, x: &[f64]) -> f64 {
        let y = mlp.forward(x);
        y.0.iter()
            .enumerate()
            .map(|(i, &v)| 0.5 * (i as f64 + 1.0) * v * v)
            .sum()
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Mlp::<f64>::init(&[4, 6, 3], &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let (y, tape) = mlp.forward_tape(&x);
        let grad_out: Vec<f64> = y
            .0
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 + 1.0) * v)
            .collect();
        let mut grads = mlp.zeros_like();
        mlp.backward(&tape, &grad_out, &mut grads);
        let analytic = flatten(&grads);

        let mut flat = flatten(&mlp);
        let indices: Vec<usize> = (0..flat.len()).collect();
        let fd = gradcheck::finite_difference(&mut flat, &indices, 1e-5, |p| {
            probe_loss(&unflatten(&mlp, p), &x)
        });

        let report = gradcheck::compare(&analytic, &fd, 1e-6, 1e-10);
        assert!(
            report.all_passed(),
            "worst coordinate {} rel err {}",
            report.worst,
            report.max_rel_err
        );
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mlp = Mlp::<f64>::init(&[3, 5, 2], &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let (y, tape) = mlp.forward_tape(&x);
        let grad_out: Vec<f64> = y
            .0
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 + 1.0) * v)
            .collect();
        let mut grads = mlp.zeros_like();
        let gx = mlp.backward(&tape, &grad_out, &mut grads);

        let mut probe = x.clone();
        let indices: Vec<usize> = (0..probe.len()).collect();
        let fd = gradcheck::finite_difference(&mut probe, &indices, 1e-5, |p| {
            probe_loss(&mlp, p)
        });
        let report = gradcheck::compare(gx.as_slice(), &fd, 1e-6, 1e-10);
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Mlp::<f64>::init(&[4, 8, 2], &mut ChaCha8Rng::seed_from_u64(7));
        let b = Mlp::<f64>::init(&[4, 8, 2], &mut ChaCha8Rng::seed_from_u64(7));
        let c = Mlp::<f64>::init(&[4, 8, 2], &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
