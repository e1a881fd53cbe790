#include "sparseness/soae.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "sparseness/gradient.hpp"

namespace sparseness::soae {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd y = (z.array() - z.maxCoeff()).exp();
  y /= y.sum();
  return y;
}

ForwardRecord forward_from_u(const SoaeParams& params, Eigen::VectorXd u,
                             const SoaeConfig& cfg) {
  ForwardRecord rec;
  rec.u = std::move(u);
  switch (cfg.transfer) {
    case Transfer::sigma_projection: {
      const auto target =
          SparseTargetd::for_sigma(cfg.n_hidden, cfg.sigma_h);
      ProjectionResultd res = project_unrestricted(rec.u, target);
      rec.h = std::move(res.point);
      rec.transfer_trace = std::move(res.trace);
      break;
    }
    case Transfer::l0_projection:
      rec.h = project_l0(rec.u, cfg.kappa);
      break;
    case Transfer::tanh:
      rec.h = rec.u.array().tanh();
      break;
  }
  rec.x_tilde = params.w * rec.h;
  rec.y = softmax(params.w_out.transpose() * rec.h + params.theta_out);
  return rec;
}

// Gradient of the correlation coefficient w.r.t. the reconstruction, or zero
// when either vector is constant.
Eigen::VectorXd correlation_gradient(const Eigen::VectorXd& x_tilde,
                                     const Eigen::VectorXd& x) {
  const auto d = static_cast<double>(x.size());
  const double mean_xt = x_tilde.mean();
  const double mean_x = x.mean();
  const double lambda = x_tilde.squaredNorm() - d * mean_xt * mean_xt;
  const double mu = x.squaredNorm() - d * mean_x * mean_x;
  if (lambda <= std::numeric_limits<double>::min() ||
      mu <= std::numeric_limits<double>::min())
    return Eigen::VectorXd::Zero(x.size());
  const double corr =
      (x.dot(x_tilde) - d * mean_x * mean_xt) / std::sqrt(lambda * mu);
  return ((x.array() - mean_x) / std::sqrt(lambda * mu) -
          corr / lambda * (x_tilde.array() - mean_xt))
      .matrix();
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const auto d = static_cast<double>(a.size());
  const double ma = a.mean(), mb = b.mean();
  const double la = a.squaredNorm() - d * ma * ma;
  const double lb = b.squaredNorm() - d * mb * mb;
  if (la <= std::numeric_limits<double>::min() ||
      lb <= std::numeric_limits<double>::min())
    return 0.0;
  return (a.dot(b) - d * ma * mb) / std::sqrt(la * lb);
}

// f'(u)^T v for the configured transfer.
Eigen::VectorXd backprop_transfer(const ForwardRecord& rec,
                                  const Eigen::VectorXd& v,
                                  const SoaeConfig& cfg) {
  switch (cfg.transfer) {
    case Transfer::sigma_projection:
      return GradientOperator<double>(*rec.transfer_trace).apply_adjoint(v);
    case Transfer::l0_projection:
      return (grad_l0(rec.u, cfg.kappa).array() * v.array()).matrix();
    case Transfer::tanh:
      return ((1.0 - rec.h.array().square()) * v.array()).matrix();
  }
  return v;  // unreachable
}

}  // namespace

double alpha_schedule(int epoch) { return 1.0 - std::exp(-epoch / 100.0); }

ForwardRecord forward(const SoaeParams& params, const Eigen::VectorXd& x,
                      const SoaeConfig& cfg) {
  return forward_from_u(params, params.w.transpose() * x, cfg);
}

double loss(const ForwardRecord& rec, const Eigen::VectorXd& x,
            const Eigen::VectorXd& target, double alpha) {
  const double corr = correlation(rec.x_tilde, x);
  double xent = 0.0;
  for (Index i = 0; i < target.size(); ++i)
    if (target(i) != 0.0)
      xent -= target(i) * std::log(std::max(rec.y(i), 1e-300));
  return (1.0 - alpha) * (-corr) + alpha * xent;
}

ParamGradients grad_params(const SoaeParams& params, const ForwardRecord& rec,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& target, double alpha,
                           const SoaeConfig& cfg) {
  if (cfg.transfer == Transfer::sigma_projection &&
      !rec.transfer_trace->differentiable())
    throw NotDifferentiableError("transfer projection not differentiable");

  const Eigen::VectorXd g_rec =
      -(1.0 - alpha) * correlation_gradient(rec.x_tilde, x);
  const Eigen::VectorXd residual = rec.y - target;

  Eigen::VectorXd omega = params.w.transpose() * g_rec;
  if (alpha != 0.0) omega.noalias() += alpha * (params.w_out * residual);
  const Eigen::VectorXd q = backprop_transfer(rec, omega, cfg);

  ParamGradients g;
  g.w.noalias() = g_rec * rec.h.transpose();
  g.w.noalias() += x * q.transpose();
  g.w_out = alpha * (rec.h * residual.transpose());
  g.theta_out = alpha * residual;
  return g;
}

void project_columns(Eigen::MatrixXd& w, double sigma_w) {
  const auto target = SparseTargetd::for_sigma(w.rows(), sigma_w);
  for (Index j = 0; j < w.cols(); ++j)
    w.col(j) = project_scale_free(w.col(j), target);
}

SoaeParams init_params(const mnist::LabeledDataset& data,
                       const SoaeConfig& cfg, std::mt19937_64& rng) {
  if (data.size() == 0) throw DomainError("init_params: empty learning set");
  const Index d = data.dim();
  const Index n = cfg.n_hidden;
  SoaeParams params;
  params.w.resize(d, n);

  if (data.size() >= n) {
    std::vector<Index> idx(static_cast<std::size_t>(data.size()));
    std::iota(idx.begin(), idx.end(), Index(0));
    for (Index i = 0; i < n; ++i) {
      std::uniform_int_distribution<Index> pick(i, data.size() - 1);
      std::swap(idx[static_cast<std::size_t>(i)],
                idx[static_cast<std::size_t>(pick(rng))]);
      params.w.col(i) = data.samples.col(idx[static_cast<std::size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<Index> pick(0, data.size() - 1);
    for (Index i = 0; i < n; ++i)
      params.w.col(i) = data.samples.col(pick(rng));
  }
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (Index j = 0; j < n; ++j)
    if (params.w.col(j).isZero(0.0))
      for (Index i = 0; i < d; ++i) params.w(i, j) = gauss(rng);
  project_columns(params.w, cfg.sigma_w);

  params.w_out.resize(n, cfg.n_classes);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < cfg.n_classes; ++j) params.w_out(i, j) = gauss(rng);
  params.theta_out.resize(cfg.n_classes);
  for (Index j = 0; j < cfg.n_classes; ++j) params.theta_out(j) = gauss(rng);
  return params;
}

namespace {

void note_activity(const ForwardRecord& rec, const SoaeConfig& cfg,
                   TrainDiagnostics* diag) {
  if (diag == nullptr) return;
  const Index l0 = (rec.h.array() != 0.0).count();
  diag->max_activity_l0 = std::max(diag->max_activity_l0, l0);
  if (cfg.transfer == Transfer::sigma_projection) {
    diag->max_activity_sigma_error =
        std::max(diag->max_activity_sigma_error,
                 std::abs(sigma(rec.h) - cfg.sigma_h));
    diag->max_activity_norm_error = std::max(
        diag->max_activity_norm_error, std::abs(rec.h.norm() - 1.0));
  }
}

}  // namespace

EpochResult train_epoch(SoaeParams& params, const mnist::LabeledDataset& data,
                        const SoaeConfig& cfg, int epoch, std::mt19937_64& rng,
                        TrainDiagnostics* diag) {
  if (epoch < 1) throw DomainError("train_epoch: epoch index starts at 1");
  const double alpha = alpha_schedule(epoch);
  const double step =
      cfg.step_size * std::pow(cfg.anneal_factor, epoch - 1);
  const Index count = std::min<Index>(cfg.samples_per_epoch, data.size());

  // Uniform draw without replacement, fresh each epoch.
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index(0));
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, data.size() - 1);
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(pick(rng))]);
  }

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double loss_sum = 0.0;
  for (Index s = 0; s < count; ++s) {
    const Index idx = order[static_cast<std::size_t>(s)];
    const Eigen::VectorXd x = data.samples.col(idx);
    const Eigen::VectorXd target =
        mnist::one_hot(data.labels[static_cast<std::size_t>(idx)],
                       cfg.n_classes);
    ForwardRecord rec = forward(params, x, cfg);
    bool updated = false;
    for (int attempt = 0; attempt <= 3 && !updated; ++attempt) {
      if (attempt > 0) {
        // Measure-zero event: nudge the pre-activation and re-project.
        Eigen::VectorXd u = rec.u;
        const double mag = 1e-9 * u.norm();
        for (Index i = 0; i < u.size(); ++i) u(i) += mag * unit(rng);
        rec = forward_from_u(params, std::move(u), cfg);
      }
      try {
        const ParamGradients g = grad_params(params, rec, x, target, alpha, cfg);
        params.w.noalias() -= step * g.w;
        params.w_out.noalias() -= step * g.w_out;
        params.theta_out.noalias() -= step * g.theta_out;
        updated = true;
      } catch (const NotDifferentiableError&) {
      }
    }
    if (!updated && diag != nullptr) ++diag->skipped_updates;
    note_activity(rec, cfg, diag);
    loss_sum += loss(rec, x, target, alpha);
  }

  project_columns(params.w, cfg.sigma_w);
  if (diag != nullptr) {
    for (Index j = 0; j < params.w.cols(); ++j)
      diag->max_connectivity_sigma_error =
          std::max(diag->max_connectivity_sigma_error,
                   std::abs(sigma(params.w.col(j)) - cfg.sigma_w));
  }
  return {loss_sum / static_cast<double>(count), alpha, step};
}

TrainResult train(
    SoaeParams& params, const mnist::LabeledDataset& data,
    const SoaeConfig& cfg, std::mt19937_64& rng,
    const std::function<void(int, const EpochResult&)>& per_epoch) {
  TrainResult result;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const EpochResult er =
        train_epoch(params, data, cfg, epoch, rng, &result.diagnostics);
    result.loss_history.push_back(er.mean_loss);
    if (per_epoch) per_epoch(epoch, er);
    if (std::isinf(cfg.stop_rel_tol)) break;
    const auto window = static_cast<std::size_t>(cfg.stop_window);
    if (result.loss_history.size() >= window && window > 0) {
      const auto first = result.loss_history.end() - cfg.stop_window;
      const double lo = *std::min_element(first, result.loss_history.end());
      const double hi = *std::max_element(first, result.loss_history.end());
      const double mean =
          std::accumulate(first, result.loss_history.end(), 0.0) /
          static_cast<double>(cfg.stop_window);
      if (hi - lo < cfg.stop_rel_tol * std::abs(mean)) break;
    }
  }
  return result;
}

int classify(const SoaeParams& params, const Eigen::VectorXd& x,
             const SoaeConfig& cfg) {
  const ForwardRecord rec = forward(params, x, cfg);
  int best = 0;
  for (Index i = 1; i < rec.y.size(); ++i)
    if (rec.y(i) > rec.y(best)) best = static_cast<int>(i);
  return best;
}

double evaluation_error(const SoaeParams& params,
                        const mnist::LabeledDataset& data,
                        const SoaeConfig& cfg) {
  Index wrong = 0;
  for (Index i = 0; i < data.size(); ++i)
    if (classify(params, data.samples.col(i), cfg) !=
        static_cast<int>(data.labels[static_cast<std::size_t>(i)]))
      ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace sparseness::soae
