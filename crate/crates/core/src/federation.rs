//! The federated protocol: clients take `K_i` local gradient steps on their
//! least-squares objective from the broadcast model, the server averages.

use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ErrorRecord;
use crate::linalg::{entrywise_mean, Norm, ParameterMatrix};
use crate::rng::{derive_seed, substream};
use crate::systems::TrajectoryBatch;

/// Entries beyond this magnitude are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// How a mini-batch step scales the batch gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiniBatchScaling {
    /// `alpha * (y_B - theta X_B) X_B^T`, the full-batch rule restricted to
    /// the sampled columns.
    #[default]
    Sum,
    /// The same divided by the batch size.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    pub data: TrajectoryBatch,
    pub local_theta: ParameterMatrix,
    /// `K_i`
    pub local_updates: usize,
    pub learning_rate: f64,
    /// `None` for full-batch gradient descent.
    pub batch_size: Option<usize>,
    pub scaling: MiniBatchScaling,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        data: TrajectoryBatch,
        local_updates: usize,
        learning_rate: f64,
        batch_size: Option<usize>,
    ) -> Result<Self> {
        if local_updates == 0 {
            return Err(Error::Config("local_updates must be >= 1".into()));
        }
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if let Some(b) = batch_size {
            if b == 0 || b > data.n_cols() {
                return Err(Error::Config(format!(
                    "batch_size {b} must be in 1..={}",
                    data.n_cols()
                )));
            }
        }
        let local_theta = ParameterMatrix::zeros(data.n_x(), data.n_phi());
        Ok(Self {
            client_id,
            data,
            local_theta,
            local_updates,
            learning_rate,
            batch_size,
            scaling: MiniBatchScaling::default(),
        })
    }

    pub fn with_scaling(mut self, scaling: MiniBatchScaling) -> Self {
        self.scaling = scaling;
        self
    }

    /// Local objective `||X+ - theta Phi||_F^2`.
    pub fn objective(&self, theta: &ParameterMatrix) -> f64 {
        self.data.residual(theta).norm_squared()
    }
}

fn gradient_step(theta: &mut DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, step: f64) {
    let residual = y - &*theta * x;
    *theta += residual * x.transpose() * step;
}

/// Runs `K_i` local steps from `global`. Mini-batches are drawn without
/// replacement, freshly for every step, from `seed`.
pub fn client_update(client: &ClientState, global: &ParameterMatrix, seed: u64) -> Result<ParameterMatrix> {
    let data = &client.data;
    if global.shape() != (data.n_x(), data.n_phi()) {
        return Err(Error::Shape(format!(
            "global model {:?} does not match client data ({}, {})",
            global.shape(),
            data.n_x(),
            data.n_phi()
        )));
    }
    let alpha = client.learning_rate;
    let mut theta = global.as_matrix().clone();
    let mut rng = substream(seed, "minibatch", &[client.client_id as u64]);
    for k in 0..client.local_updates {
        match client.batch_size {
            None => gradient_step(&mut theta, &data.features, &data.targets, alpha),
            Some(b) => {
                let cols = index::sample(&mut rng, data.n_cols(), b).into_vec();
                let x = data.features.select_columns(&cols);
                let y = data.targets.select_columns(&cols);
                let step = match client.scaling {
                    MiniBatchScaling::Sum => alpha,
                    MiniBatchScaling::Mean => alpha / b as f64,
                };
                gradient_step(&mut theta, &x, &y, step);
            }
        }
        if theta
            .iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD)
        {
            return Err(Error::ClientDiverged {
                client: client.client_id,
                step: k + 1,
            });
        }
    }
    ParameterMatrix::new(theta)
}

/// Server averaging: the entry-wise mean of the local models.
pub fn aggregate(locals: &[ParameterMatrix]) -> Result<ParameterMatrix> {
    entrywise_mean(locals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederationOptions {
    pub norm: Norm,
    /// Run client updates on the rayon pool; results are identical either way.
    pub parallel: bool,
}

impl Default for FederationOptions {
    fn default() -> Self {
        Self {
            norm: Norm::Spectral,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FederationState {
    pub round: usize,
    pub global_theta: ParameterMatrix,
    pub clients: Vec<ClientState>,
    /// One record per completed round, for rounds `1..=round`.
    pub history: Vec<ErrorRecord>,
}

impl FederationState {
    /// Every client starts from `theta0`.
    pub fn new(mut clients: Vec<ClientState>, theta0: ParameterMatrix) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::Config("federation needs at least one client".into()));
        }
        for c in &mut clients {
            if theta0.shape() != (c.data.n_x(), c.data.n_phi()) {
                return Err(Error::Shape(format!(
                    "theta0 {:?} does not match client {} data",
                    theta0.shape(),
                    c.client_id
                )));
            }
            c.local_theta = theta0.clone();
        }
        clients.sort_by_key(|c| c.client_id);
        if clients.windows(2).any(|w| w[0].client_id == w[1].client_id) {
            return Err(Error::Config("duplicate client ids".into()));
        }
        Ok(Self {
            round: 0,
            global_theta: theta0,
            clients,
            history: Vec::new(),
        })
    }

    /// Broadcast, local updates, aggregation.
    pub fn run_round(&mut self, seed: u64, parallel: bool) -> Result<()> {
        let round = self.round;
        let global = &self.global_theta;
        let round_seed = derive_seed(seed, "round", &[round as u64]);
        let update = |c: &ClientState| client_update(c, global, round_seed);
        let locals: Vec<ParameterMatrix> = if parallel {
            self.clients.par_iter().map(update).collect::<Result<_>>()
        } else {
            self.clients.iter().map(update).collect::<Result<_>>()
        }
        .map_err(|e| e.in_round(round))?;
        self.global_theta = aggregate(&locals)?;
        for (c, t) in self.clients.iter_mut().zip(locals) {
            c.local_theta = t;
        }
        self.round += 1;
        Ok(())
    }
}

/// `rounds` rounds of the protocol, recording the error of the global model
/// against every client's true parameters after each round.
pub fn run_federation(
    clients: Vec<ClientState>,
    theta0: ParameterMatrix,
    rounds: usize,
    true_thetas: &[ParameterMatrix],
    seed: u64,
    opts: FederationOptions,
) -> Result<FederationState> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    if true_thetas.len() != clients.len() {
        return Err(Error::Shape(format!(
            "{} true parameter matrices for {} clients",
            true_thetas.len(),
            clients.len()
        )));
    }
    // Align truths with the id-sorted client list.
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by_key(|&i| clients[i].client_id);
    let truths: Vec<ParameterMatrix> = order.iter().map(|&i| true_thetas[i].clone()).collect();

    let mut state = FederationState::new(clients, theta0)?;
    state.history.reserve(rounds);
    for _ in 0..rounds {
        state.run_round(seed, opts.parallel)?;
        let rec = ErrorRecord::evaluate(state.round, &state.global_theta, &truths, opts.norm)?;
        state.history.push(rec);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, "federation-test", &[]);
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn client(id: usize, cols: usize, k: usize, alpha: f64, batch: Option<usize>) -> ClientState {
        let data = TrajectoryBatch::from_regression(
            random_matrix(3, cols, 10 + id as u64),
            random_matrix(2, cols, 20 + id as u64),
        )
        .unwrap();
        ClientState::new(id, data, k, alpha, batch).unwrap()
    }

    #[test]
    fn single_step_matches_dense_oracle() {
        let c = client(0, 12, 1, 0.01, None);
        let theta = ParameterMatrix::from(random_matrix(2, 3, 99));
        let got = client_update(&c, &theta, 0).unwrap();
        // Entry-wise evaluation of theta + alpha (y - theta X) X^T.
        let (x, y, t) = (&c.data.features, &c.data.targets, theta.as_matrix());
        let mut want = t.clone();
        for i in 0..2 {
            for j in 0..3 {
                let mut g = 0.0;
                for n in 0..12 {
                    let pred: f64 = (0..3).map(|p| t[(i, p)] * x[(p, n)]).sum();
                    g += (y[(i, n)] - pred) * x[(j, n)];
                }
                want[(i, j)] += 0.01 * g;
            }
        }
        assert!((got.as_matrix() - want).amax() < 1e-13);
    }

    #[test]
    fn exact_model_is_a_fixed_point() {
        let x = random_matrix(3, 10, 1);
        let theta = random_matrix(2, 3, 2);
        let data = TrajectoryBatch::from_regression(x.clone(), &theta * &x).unwrap();
        let c = ClientState::new(0, data, 1, 0.05, None).unwrap();
        let out = client_update(&c, &ParameterMatrix::from(theta.clone()), 0).unwrap();
        assert!((out.as_matrix() - theta).amax() < 1e-14);
    }

    #[test]
    fn full_batch_descent_is_monotone() {
        let c = client(1, 40, 1, 1.0, None);
        let lmax = crate::linalg::lambda_max(&c.data.gram());
        let c = ClientState { learning_rate: 0.9 / lmax, ..c };
        let mut theta = ParameterMatrix::zeros(2, 3);
        let mut prev = c.objective(&theta);
        for _ in 0..50 {
            theta = client_update(&c, &theta, 0).unwrap();
            let now = c.objective(&theta);
            assert!(now <= prev + 1e-12);
            prev = now;
        }
    }

    #[test]
    fn minibatch_uses_sampled_columns() {
        let c = client(2, 30, 3, 0.01, Some(10));
        let theta = ParameterMatrix::zeros(2, 3);
        let a = client_update(&c, &theta, 5).unwrap();
        let b = client_update(&c, &theta, 5).unwrap();
        let other = client_update(&c, &theta, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);

        // Batch = all columns reduces to full-batch descent.
        let full = ClientState { batch_size: None, ..c.clone() };
        let all = ClientState { batch_size: Some(30), ..c.clone() };
        let x = client_update(&full, &theta, 0).unwrap();
        let y = client_update(&all, &theta, 0).unwrap();
        assert!((x.as_matrix() - y.as_matrix()).amax() < 1e-12);

        let mean = all.with_scaling(MiniBatchScaling::Mean);
        let full_mean = ClientState { learning_rate: 0.01 / 30.0, ..full };
        let z = client_update(&mean, &theta, 0).unwrap();
        let w = client_update(&full_mean, &theta, 0).unwrap();
        assert!((z.as_matrix() - w.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn divergence_names_client_and_step() {
        let c = client(7, 20, 50, 10.0, None);
        match client_update(&c, &ParameterMatrix::zeros(2, 3), 0) {
            Err(Error::ClientDiverged { client: 7, step }) => assert!(step > 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_client_config() {
        let data = TrajectoryBatch::from_regression(random_matrix(2, 5, 1), random_matrix(1, 5, 2)).unwrap();
        assert!(ClientState::new(0, data.clone(), 1, 0.0, None).is_err());
        assert!(ClientState::new(0, data.clone(), 0, 0.1, None).is_err());
        assert!(ClientState::new(0, data, 1, 0.1, Some(6)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let t = ParameterMatrix::from(random_matrix(2, 3, 1));
        let m = aggregate(&[t.clone(), t.clone(), t.clone()]).unwrap();
        assert!((m.as_matrix() - t.as_matrix()).amax() < 1e-15);
        let neg = ParameterMatrix::from(-t.as_matrix());
        assert_eq!(aggregate(&[t.clone(), neg]).unwrap(), ParameterMatrix::zeros(2, 3));

        let mats: Vec<_> = (0..5).map(|k| ParameterMatrix::from(random_matrix(2, 3, 10 + k))).collect();
        let got = aggregate(&mats).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let mut s = 0.0;
                for m in &mats {
                    s += m.as_matrix()[(i, j)];
                }
                assert!((got.as_matrix()[(i, j)] - s / 5.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate(&[]), Err(Error::Aggregation(_))));
        let a = ParameterMatrix::zeros(2, 3);
        let b = ParameterMatrix::zeros(3, 2);
        assert!(matches!(aggregate(&[a, b]), Err(Error::Aggregation(_))));
    }

    #[test]
    fn single_client_federation_is_gradient_descent() {
        let c = client(0, 25, 1, 0.01, None);
        let truth = vec![ParameterMatrix::from(random_matrix(2, 3, 50))];
        let state = run_federation(
            vec![c.clone()],
            ParameterMatrix::zeros(2, 3),
            30,
            &truth,
            0,
            FederationOptions::default(),
        )
        .unwrap();
        let mut theta = DMatrix::zeros(2, 3);
        for _ in 0..30 {
            gradient_step(&mut theta, &c.data.features, &c.data.targets, 0.01);
        }
        assert_eq!(state.global_theta.as_matrix(), &theta);
        assert_eq!(state.history.len(), 30);
        assert_eq!(state.history.last().unwrap().round, 30);
    }

    #[test]
    fn identical_clients_stay_identical() {
        let base = client(0, 25, 3, 0.01, None);
        let clients: Vec<_> = (0..4)
            .map(|i| ClientState { client_id: i, ..base.clone() })
            .collect();
        let truth = vec![ParameterMatrix::from(random_matrix(2, 3, 50)); 4];
        let mut state = FederationState::new(clients, ParameterMatrix::zeros(2, 3)).unwrap();
        for _ in 0..10 {
            state.run_round(1, true).unwrap();
            for c in &state.clients {
                assert!((c.local_theta.as_matrix() - state.global_theta.as_matrix()).amax() < 1e-14);
            }
        }
        let _ = truth;
    }

    #[test]
    fn errors_carry_round_context() {
        let c = client(3, 20, 50, 10.0, None);
        let err = run_federation(
            vec![c],
            ParameterMatrix::zeros(2, 3),
            5,
            &[ParameterMatrix::from(random_matrix(2, 3, 1))],
            0,
            FederationOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Round { round: 0, source } => {
                assert!(matches!(*source, Error::ClientDiverged { client: 3, .. }))
            }
            other => panic!("{other:?}"),
        }
    }
}
