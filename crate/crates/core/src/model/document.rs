use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Feedback, Layer, ModelKind, ModelParams, ScaleSet};
use crate::error::{Error, Result};
use crate::numerics::Activation;

/// Row-major matrix with explicit dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Array2<f64>> for MatrixDoc {
    fn from(a: &Array2<f64>) -> Self {
        MatrixDoc {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }
}

impl TryFrom<MatrixDoc> for Array2<f64> {
    type Error = Error;
    fn try_from(m: MatrixDoc) -> Result<Self> {
        let (r, c, len) = (m.rows, m.cols, m.data.len());
        Array2::from_shape_vec((r, c), m.data)
            .map_err(|_| Error::Shape(format!("matrix {r}x{c} with {len} entries")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub weight: MatrixDoc,
    pub bias: Vec<f64>,
}

/// JSON form of [`ModelParams`]: dimensions, scales, activation, provenance
/// seed and every tensor flattened row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDocument {
    pub kind: ModelKind,
    pub n_inputs: usize,
    pub d_phi: usize,
    pub d_r: usize,
    pub d_o: usize,
    pub scales: Vec<f64>,
    pub activation: Activation,
    pub feedback_lag: bool,
    pub seed: Option<u64>,
    pub w_in: MatrixDoc,
    pub w_f: MatrixDoc,
    pub b_in: Vec<f64>,
    pub encoder: Option<MatrixDoc>,
    pub feedback_layers: Vec<LayerDoc>,
    pub w_o: MatrixDoc,
    pub b_o: Vec<f64>,
    pub w_y: Vec<f64>,
    pub b_y: f64,
}

impl ParamsDocument {
    pub fn new(params: &ModelParams, seed: Option<u64>) -> Self {
        ParamsDocument {
            kind: params.kind,
            n_inputs: params.n_inputs(),
            d_phi: params.d_phi(),
            d_r: params.feedback.output_dim(),
            d_o: params.d_o(),
            scales: params.scales.alphas().to_vec(),
            activation: params.activation,
            feedback_lag: params.feedback_lag,
            seed,
            w_in: (&params.w_in).into(),
            w_f: (&params.w_f).into(),
            b_in: params.b_in.to_vec(),
            encoder: params.feedback.encoder.as_ref().map(MatrixDoc::from),
            feedback_layers: params
                .feedback
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weight: (&l.weight).into(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            w_o: (&params.w_o).into(),
            b_o: params.b_o.to_vec(),
            w_y: params.w_y.to_vec(),
            b_y: params.b_y,
        }
    }

    pub fn into_params(self) -> Result<ModelParams> {
        let params = ModelParams {
            kind: self.kind,
            w_in: self.w_in.try_into()?,
            w_f: self.w_f.try_into()?,
            b_in: Array1::from(self.b_in),
            feedback: Feedback {
                encoder: self.encoder.map(Array2::try_from).transpose()?,
                layers: self
                    .feedback_layers
                    .into_iter()
                    .map(|l| {
                        Ok(Layer {
                            weight: l.weight.try_into()?,
                            bias: Array1::from(l.bias),
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            w_o: self.w_o.try_into()?,
            b_o: Array1::from(self.b_o),
            w_y: Array1::from(self.w_y),
            b_y: self.b_y,
            scales: ScaleSet::new(self.scales)?,
            activation: self.activation,
            feedback_lag: self.feedback_lag,
        };
        params.validate()?;
        if params.n_inputs() != self.n_inputs
            || params.d_phi() != self.d_phi
            || params.d_o() != self.d_o
            || params.feedback.output_dim() != self.d_r
        {
            return Err(Error::Shape("declared dimensions disagree with tensors".into()));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::numerics::SeededRng;

    #[test]
    fn document_round_trips_through_json() {
        for kind in [ModelKind::Sru, ModelKind::Esru] {
            let spec = ModelSpec { kind, ..ModelSpec::default() };
            let p = ModelParams::init(&spec, 5, &mut SeededRng::new(8), None).unwrap();
            let text = serde_json::to_string(&ParamsDocument::new(&p, Some(8))).unwrap();
            let back: ParamsDocument = serde_json::from_str(&text).unwrap();
            assert_eq!(back.seed, Some(8));
            assert_eq!(back.into_params().unwrap(), p);
        }
    }

    #[test]
    fn document_rejects_inconsistent_shapes() {
        let p = ModelParams::init(&ModelSpec::default(), 3, &mut SeededRng::new(1), None).unwrap();
        let mut doc = ParamsDocument::new(&p, None);
        doc.w_in.data.pop();
        assert!(doc.into_params().is_err());
        let mut doc = ParamsDocument::new(&p, None);
        doc.n_inputs = 4;
        assert!(doc.into_params().is_err());
    }
}
