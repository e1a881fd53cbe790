#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "sparseness/core.hpp"
#include "sparseness/mnist.hpp"
#include "sparseness/projection.hpp"

namespace sparseness::soae {

enum class Transfer : std::uint8_t {
  sigma_projection = 0,
  l0_projection = 1,
  tanh = 2,
};

struct SoaeConfig {
  int n_hidden = 64;
  int n_classes = 10;
  double sigma_w = 0.75;           // column sparseness of the bases
  Transfer transfer = Transfer::sigma_projection;
  double sigma_h = 0.60;           // activity sparseness (sigma transfer)
  int kappa = 8;                   // activity sparseness (L0 transfer)
  double step_size = 1.0;
  double anneal_factor = 0.999;
  int samples_per_epoch = 21600;   // clamped to the dataset size
  double stop_rel_tol = 1e-4;
  int stop_window = 10;
  int max_epochs = 2000;
};

/// Trade-off between reconstruction and classification at epoch nu:
/// alpha(nu) = 1 - exp(-nu/100); starts near zero, tends to one.
double alpha_schedule(int epoch);

/// Shared bases W (d x n), output weights W_out (n x c), thresholds (c).
struct SoaeParams {
  Eigen::MatrixXd w;
  Eigen::MatrixXd w_out;
  Eigen::VectorXd theta_out;
};

struct ForwardRecord {
  Eigen::VectorXd u;        // pre-activation W^T x
  Eigen::VectorXd h;        // hidden representation f(u)
  Eigen::VectorXd x_tilde;  // reconstruction W h
  Eigen::VectorXd y;        // softmax class posterior
  std::optional<ProjectionTraced> transfer_trace;
};

ForwardRecord forward(const SoaeParams& params, const Eigen::VectorXd& x,
                      const SoaeConfig& cfg);

/// Blended objective (1-alpha)*(-corr(x_tilde, x)) + alpha*xent(y, target);
/// a constant x or x_tilde contributes zero to the reconstruction term.
double loss(const ForwardRecord& rec, const Eigen::VectorXd& x,
            const Eigen::VectorXd& target, double alpha);

struct ParamGradients {
  Eigen::MatrixXd w;
  Eigen::MatrixXd w_out;
  Eigen::VectorXd theta_out;
};

/// Exact gradient of the blended loss w.r.t. all parameter blocks. Throws
/// NotDifferentiableError when the transfer sat at a non-differentiable point.
ParamGradients grad_params(const SoaeParams& params, const ForwardRecord& rec,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& target, double alpha,
                           const SoaeConfig& cfg);

/// Columns of W drawn from the learning set (with replacement only when the
/// set is smaller than n_hidden) and projected to sparseness sigma_w; output
/// layer from N(0, 1/100^2).
SoaeParams init_params(const mnist::LabeledDataset& data,
                       const SoaeConfig& cfg, std::mt19937_64& rng);

/// Scale-free sparseness projection applied to every column.
void project_columns(Eigen::MatrixXd& w, double sigma_w);

/// Worst deviations observed while training; the activity entries cover every
/// forward pass, the connectivity entry every epoch boundary.
struct TrainDiagnostics {
  double max_connectivity_sigma_error = 0.0;
  double max_activity_sigma_error = 0.0;
  double max_activity_norm_error = 0.0;
  Index max_activity_l0 = 0;
  long skipped_updates = 0;
};

struct EpochResult {
  double mean_loss = 0.0;
  double alpha = 0.0;
  double step = 0.0;
};

EpochResult train_epoch(SoaeParams& params, const mnist::LabeledDataset& data,
                        const SoaeConfig& cfg, int epoch, std::mt19937_64& rng,
                        TrainDiagnostics* diag = nullptr);

struct TrainResult {
  std::vector<double> loss_history;
  TrainDiagnostics diagnostics;
};

/// Runs train_epoch until the loss spread over the last stop_window epochs
/// falls below stop_rel_tol relative to the window mean, or max_epochs is
/// reached. An infinite tolerance stops after the first epoch. The optional
/// callback sees every epoch result (for metrics/evaluation hooks).
TrainResult train(
    SoaeParams& params, const mnist::LabeledDataset& data,
    const SoaeConfig& cfg, std::mt19937_64& rng,
    const std::function<void(int, const EpochResult&)>& per_epoch = nullptr);

/// Argmax of the class posterior; ties resolve to the lowest class index.
int classify(const SoaeParams& params, const Eigen::VectorXd& x,
             const SoaeConfig& cfg);

/// Fraction of misclassified samples.
double evaluation_error(const SoaeParams& params,
                        const mnist::LabeledDataset& data,
                        const SoaeConfig& cfg);

}  // namespace sparseness::soae
