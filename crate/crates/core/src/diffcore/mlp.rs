use rand::Rng;

use super::{DiffError, NodeId, ParamVector, Segment, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    /// Logistic squashing into (0, 1).
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Tanh,
    /// Linear hidden layer; only useful for hand-built test networks.
    Identity,
}

/// Input -> hidden -> output network with a single hidden layer.
///
/// Parameters are laid out as `w1 (hidden x input, row-major)`, `b1`,
/// `w2 (output x hidden, row-major)`, `b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl Mlp {
    pub fn new(input: usize, hidden: usize, output: usize, output_activation: OutputActivation) -> Self {
        Self {
            input,
            hidden,
            output,
            hidden_activation: HiddenActivation::Tanh,
            output_activation,
        }
    }

    pub fn with_hidden_activation(mut self, act: HiddenActivation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn segments(&self) -> Vec<Segment> {
        vec![
            Segment {
                name: "w1",
                len: self.hidden * self.input,
            },
            Segment {
                name: "b1",
                len: self.hidden,
            },
            Segment {
                name: "w2",
                len: self.output * self.hidden,
            },
            Segment {
                name: "b2",
                len: self.output,
            },
        ]
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector::zeros(self.segments())
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        let b1 = 1.0 / (self.input.max(1) as f64).sqrt();
        values.extend((0..self.hidden * self.input).map(|_| rng.gen_range(-b1..b1)));
        values.extend(std::iter::repeat(0.0).take(self.hidden));
        let b2 = 1.0 / (self.hidden.max(1) as f64).sqrt();
        values.extend((0..self.output * self.hidden).map(|_| rng.gen_range(-b2..b2)));
        values.extend(std::iter::repeat(0.0).take(self.output));
        ParamVector::new(values, self.segments()).expect("layout matches")
    }

    fn check(&self, params: usize, input: usize) -> Result<(), DiffError> {
        if params != self.param_count() {
            return Err(DiffError::Shape {
                op: "mlp params",
                expected: self.param_count(),
                got: params,
            });
        }
        if input != self.input {
            return Err(DiffError::Shape {
                op: "mlp input",
                expected: self.input,
                got: input,
            });
        }
        Ok(())
    }

    /// Records a forward pass. `params` is a single node holding the whole
    /// flat parameter vector.
    pub fn forward(&self, tape: &mut Tape, params: NodeId, input: NodeId) -> Result<NodeId, DiffError> {
        self.check(tape.value(params).len(), tape.value(input).len())?;
        let (i, h, o) = (self.input, self.hidden, self.output);
        let w1 = tape.slice(params, 0, h * i)?;
        let b1 = tape.slice(params, h * i, h)?;
        let w2 = tape.slice(params, h * i + h, o * h)?;
        let b2 = tape.slice(params, h * i + h + o * h, o)?;

        let pre1 = tape.matvec(w1, input, h, i)?;
        let pre1 = tape.add(pre1, b1)?;
        let hid = match self.hidden_activation {
            HiddenActivation::Tanh => tape.tanh(pre1),
            HiddenActivation::Identity => pre1,
        };
        let pre2 = tape.matvec(w2, hid, o, h)?;
        let pre2 = tape.add(pre2, b2)?;
        Ok(match self.output_activation {
            OutputActivation::Identity => pre2,
            OutputActivation::Sigmoid => tape.sigmoid(pre2),
        })
    }

    /// Same computation as [`Mlp::forward`] without recording anything.
    pub fn forward_values(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>, DiffError> {
        self.check(params.len(), input.len())?;
        let (i, h, o) = (self.input, self.hidden, self.output);
        let (w1, rest) = params.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        let hid: Vec<f64> = (0..h)
            .map(|r| {
                let z = w1[r * i..(r + 1) * i]
                    .iter()
                    .zip(input)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + b1[r];
                match self.hidden_activation {
                    HiddenActivation::Tanh => z.tanh(),
                    HiddenActivation::Identity => z,
                }
            })
            .collect();
        Ok((0..o)
            .map(|r| {
                let z = w2[r * h..(r + 1) * h].iter().zip(&hid).map(|(a, b)| a * b).sum::<f64>() + b2[r];
                match self.output_activation {
                    OutputActivation::Identity => z,
                    OutputActivation::Sigmoid => {
                        if z >= 0.0 {
                            1.0 / (1.0 + (-z).exp())
                        } else {
                            z.exp() / (1.0 + z.exp())
                        }
                    }
                }
            })
            .collect())
    }
}
