use crate::data::Dataset;
use crate::model::{ModelParams, Network};
use crate::sparse::Mask;
use crate::{Error, Result};

const EVAL_CHUNK: usize = 512;

/// Fraction of `indices` the masked model classifies correctly.
pub fn accuracy(
    net: &Network,
    params: &ModelParams,
    mask: &Mask,
    data: &Dataset,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Argument(
            "cannot evaluate on an empty test list".into(),
        ));
    }
    let mut correct = 0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        correct += net.forward(params, mask, &data.batch(chunk))?.correct;
    }
    Ok(correct as f64 / indices.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedAccuracy {
    pub per_client: Vec<f64>,
    /// Unweighted mean over clients.
    pub mean: f64,
}

/// Evaluates each client's personalized model `m_k ⊙ w` on its own test list.
pub fn evaluate_personalized(
    net: &Network,
    global: &ModelParams,
    masks: &[Mask],
    test: &Dataset,
    client_test: &[Vec<usize>],
) -> Result<PersonalizedAccuracy> {
    if masks.len() != client_test.len() {
        return Err(Error::Argument(format!(
            "{} masks for {} client test lists",
            masks.len(),
            client_test.len()
        )));
    }
    let per_client = masks
        .iter()
        .zip(client_test)
        .map(|(m, idx)| accuracy(net, global, m, test, idx))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_client.iter().sum::<f64>() / per_client.len().max(1) as f64;
    Ok(PersonalizedAccuracy { per_client, mean })
}

/// Accuracy of the unmasked model on the pooled test set.
pub fn evaluate_global(net: &Network, global: &ModelParams, test: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..test.len()).collect();
    accuracy(net, global, &Mask::full(net.layout().clone()), test, &all)
}
