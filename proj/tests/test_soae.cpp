#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "sparseness/checkpoint.hpp"
#include "sparseness/gradient.hpp"
#include "sparseness/soae.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace sparseness;
using namespace sparseness::soae;
using testsupport::random_vector;

namespace {

SoaeConfig small_config(Transfer transfer) {
  SoaeConfig cfg;
  cfg.n_hidden = 8;
  cfg.n_classes = 3;
  cfg.sigma_w = 0.5;
  cfg.transfer = transfer;
  cfg.sigma_h = 0.6;
  cfg.kappa = 3;
  return cfg;
}

SoaeParams random_params(Index d, const SoaeConfig& cfg, std::mt19937_64& rng) {
  SoaeParams p;
  p.w = MatrixXd::NullaryExpr(d, cfg.n_hidden, [&]() {
    return std::normal_distribution<double>()(rng);
  });
  p.w_out = MatrixXd::NullaryExpr(cfg.n_hidden, cfg.n_classes, [&]() {
    return std::normal_distribution<double>()(rng);
  });
  p.theta_out = VectorXd::NullaryExpr(cfg.n_classes, [&]() {
    return std::normal_distribution<double>()(rng);
  });
  return p;
}

// Flattened finite-difference gradient of the loss over all parameters.
struct FlatModel {
  Index d;
  SoaeConfig cfg;

  Index size(const SoaeParams& p) const {
    return p.w.size() + p.w_out.size() + p.theta_out.size();
  }
  VectorXd flatten(const SoaeParams& p) const {
    VectorXd v(size(p));
    v << Eigen::Map<const VectorXd>(p.w.data(), p.w.size()),
        Eigen::Map<const VectorXd>(p.w_out.data(), p.w_out.size()),
        p.theta_out;
    return v;
  }
  SoaeParams unflatten(const VectorXd& v) const {
    SoaeParams p;
    p.w = Eigen::Map<const MatrixXd>(v.data(), d, cfg.n_hidden);
    p.w_out = Eigen::Map<const MatrixXd>(v.data() + d * cfg.n_hidden,
                                         cfg.n_hidden, cfg.n_classes);
    p.theta_out = v.tail(cfg.n_classes);
    return p;
  }
};

}  // namespace

TEST_CASE("forward honours the transfer contracts") {
  std::mt19937_64 rng(301);
  const Index d = 6;

  SUBCASE("sigma projection") {
    const SoaeConfig cfg = small_config(Transfer::sigma_projection);
    const SoaeParams p = random_params(d, cfg, rng);
    const VectorXd x = random_vector(d, rng);
    const ForwardRecord rec = forward(p, x, cfg);
    CHECK(rec.h.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sigma(rec.h) == doctest::Approx(cfg.sigma_h).epsilon(1e-6));
    CHECK(rec.transfer_trace.has_value());
    CHECK(rec.y.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rec.y.minCoeff() > 0.0);
  }
  SUBCASE("l0 projection") {
    const SoaeConfig cfg = small_config(Transfer::l0_projection);
    const SoaeParams p = random_params(d, cfg, rng);
    const VectorXd x = random_vector(d, rng);
    const ForwardRecord rec = forward(p, x, cfg);
    CHECK(Index((rec.h.array() != 0.0).count()) <= cfg.kappa);
    CHECK(rec.y.sum() == doctest::Approx(1.0));
  }
  SUBCASE("tanh") {
    const SoaeConfig cfg = small_config(Transfer::tanh);
    const SoaeParams p = random_params(d, cfg, rng);
    const VectorXd x = random_vector(d, rng);
    const ForwardRecord rec = forward(p, x, cfg);
    CHECK((rec.h.array().abs() <= 1.0).all());
    CHECK(rec.y.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("loss at canonical points") {
  ForwardRecord rec;
  rec.x_tilde = VectorXd::LinSpaced(4, 0.0, 1.0);
  rec.y = VectorXd::Zero(3);
  rec.y << 0.0, 1.0, 0.0;
  VectorXd target(3);
  target << 0, 1, 0;

  // perfect reconstruction and classification at alpha = 1/2
  CHECK(loss(rec, rec.x_tilde, target, 0.5) == doctest::Approx(-0.5));
  // alpha = 1 ignores reconstruction
  CHECK(loss(rec, (2.0 * rec.x_tilde).eval(), target, 1.0) ==
        doctest::Approx(0.0));
  // constant reconstruction contributes nothing
  ForwardRecord flat = rec;
  flat.x_tilde = VectorXd::Constant(4, 0.3);
  CHECK(loss(flat, rec.x_tilde, target, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("alpha = 0 sends no gradient to the classifier block") {
  std::mt19937_64 rng(307);
  const Index d = 6;
  const SoaeConfig cfg = small_config(Transfer::tanh);
  const SoaeParams p = random_params(d, cfg, rng);
  const VectorXd x = random_vector(d, rng);
  const VectorXd target = mnist::one_hot(1, cfg.n_classes);
  const ForwardRecord rec = forward(p, x, cfg);
  const ParamGradients g = grad_params(p, rec, x, target, 0.0, cfg);
  CHECK(g.w_out.norm() == 0.0);
  CHECK(g.theta_out.norm() == 0.0);
  CHECK(g.w.norm() > 0.0);
}

TEST_CASE("alpha = 1 classifier gradients are the softmax residuals") {
  std::mt19937_64 rng(311);
  const Index d = 6;
  const SoaeConfig cfg = small_config(Transfer::tanh);
  const SoaeParams p = random_params(d, cfg, rng);
  const VectorXd x = random_vector(d, rng);
  const VectorXd target = mnist::one_hot(2, cfg.n_classes);
  const ForwardRecord rec = forward(p, x, cfg);
  const ParamGradients g = grad_params(p, rec, x, target, 1.0, cfg);
  const VectorXd residual = rec.y - target;
  CHECK((g.theta_out - residual).norm() <= 1e-15);
  CHECK((g.w_out - rec.h * residual.transpose()).norm() <= 1e-15);
}

TEST_CASE("parameter gradients match finite differences for all transfers") {
  std::mt19937_64 rng(313);
  const Index d = 6;
  for (const Transfer transfer :
       {Transfer::sigma_projection, Transfer::l0_projection, Transfer::tanh}) {
    const SoaeConfig cfg = small_config(transfer);
    const FlatModel model{d, cfg};
    for (const double alpha : {0.0, 0.5, 1.0}) {
      SoaeParams p = random_params(d, cfg, rng);
      const VectorXd x = random_vector(d, rng);
      const VectorXd target = mnist::one_hot(0, cfg.n_classes);

      const ForwardRecord rec = forward(p, x, cfg);
      if (transfer == Transfer::sigma_projection &&
          !rec.transfer_trace->differentiable())
        continue;
      const ParamGradients g = grad_params(p, rec, x, target, alpha, cfg);
      VectorXd analytic(model.size(p));
      analytic << Eigen::Map<const VectorXd>(g.w.data(), g.w.size()),
          Eigen::Map<const VectorXd>(g.w_out.data(), g.w_out.size()),
          g.theta_out;

      const VectorXd theta0 = model.flatten(p);
      const auto f = [&](const VectorXd& theta) {
        const SoaeParams pp = model.unflatten(theta);
        VectorXd out(1);
        out(0) = loss(forward(pp, x, cfg), x, target, alpha);
        return out;
      };
      const MatrixXd fd = testsupport::fd_jacobian(f, theta0, 1e-6);
      double worst = 0.0;
      for (Index j = 0; j < analytic.size(); ++j)
        worst = std::max(worst, std::abs(fd(0, j) - analytic(j)) /
                                    std::max(1.0, std::abs(analytic(j))));
      CAPTURE(int(transfer));
      CAPTURE(alpha);
      CHECK(worst <= 1e-5);
    }
  }
}

TEST_CASE("correlation gradient is stationary at perfect reconstruction") {
  // At x_tilde = x the correlation is maximal, so the gradient must be
  // orthogonal to the span of scaling and shifting directions of x_tilde.
  std::mt19937_64 rng(317);
  const Index d = 8;
  const VectorXd x = random_vector(d, rng);
  ForwardRecord rec;
  rec.x_tilde = x;
  rec.y = VectorXd::Constant(3, 1.0 / 3.0);
  const VectorXd target = mnist::one_hot(1, 3);
  // directional finite differences of corr along x and e vanish at maximum
  for (const VectorXd& dir :
       {VectorXd(x.normalized()), VectorXd(VectorXd::Ones(d).normalized())}) {
    const double h = 1e-6;
    ForwardRecord plus = rec, minus = rec;
    plus.x_tilde = x + h * dir;
    minus.x_tilde = x - h * dir;
    const double fd =
        (loss(plus, x, target, 0.0) - loss(minus, x, target, 0.0)) / (2 * h);
    CHECK(std::abs(fd) <= 1e-6);
  }
}

TEST_CASE("init_params is deterministic and projected") {
  const auto data = testsupport::make_synthetic_digits(200, 31);
  SoaeConfig cfg;
  cfg.n_hidden = 16;
  cfg.sigma_w = 0.75;
  std::mt19937_64 rng_a(9), rng_b(9);
  const SoaeParams a = init_params(data, cfg, rng_a);
  const SoaeParams b = init_params(data, cfg, rng_b);
  CHECK((a.w - b.w).norm() == 0.0);
  CHECK((a.w_out - b.w_out).norm() == 0.0);
  for (Index j = 0; j < a.w.cols(); ++j)
    CHECK(sigma(a.w.col(j)) == doctest::Approx(0.75).epsilon(1e-6));

  // more hidden units than samples: sampling with replacement
  const auto tiny = testsupport::make_synthetic_digits(8, 32);
  std::mt19937_64 rng_c(9);
  const SoaeParams c = init_params(tiny, cfg, rng_c);
  CHECK(c.w.cols() == 16);
}

TEST_CASE("output layer initialization has standard deviation 1/100") {
  const auto data = testsupport::make_synthetic_digits(64, 33);
  SoaeConfig cfg;
  cfg.n_hidden = 100;
  cfg.n_classes = 100;  // 10^4 draws in w_out
  std::mt19937_64 rng(123);
  const SoaeParams p = init_params(data, cfg, rng);
  const double std_dev =
      std::sqrt(p.w_out.array().square().sum() / double(p.w_out.size()));
  CHECK(std_dev == doctest::Approx(0.01).epsilon(0.10));
}

TEST_CASE("train_epoch keeps the connectivity constraint and anneals the step") {
  const auto data = testsupport::make_synthetic_digits(120, 41);
  SoaeConfig cfg;
  cfg.n_hidden = 12;
  cfg.sigma_w = 0.6;
  cfg.sigma_h = 0.5;
  cfg.samples_per_epoch = 60;
  cfg.step_size = 0.5;
  std::mt19937_64 rng(77);
  SoaeParams params = init_params(data, cfg, rng);
  TrainDiagnostics diag;
  const EpochResult e1 = train_epoch(params, data, cfg, 1, rng, &diag);
  CHECK(e1.alpha == doctest::Approx(1.0 - std::exp(-0.01)));
  CHECK(e1.step == doctest::Approx(0.5));
  const EpochResult e5 = train_epoch(params, data, cfg, 5, rng, &diag);
  CHECK(e5.step == doctest::Approx(0.5 * std::pow(0.999, 4)));
  for (Index j = 0; j < params.w.cols(); ++j)
    CHECK(sigma(params.w.col(j)) == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(diag.max_connectivity_sigma_error <= 1e-6);
  CHECK(diag.max_activity_sigma_error <= 1e-6);
  CHECK(diag.max_activity_norm_error <= 1e-9);
  CHECK_THROWS_AS(train_epoch(params, data, cfg, 0, rng, nullptr),
                  DomainError);
}

TEST_CASE("train stops immediately with an infinite tolerance") {
  const auto data = testsupport::make_synthetic_digits(50, 43);
  SoaeConfig cfg;
  cfg.n_hidden = 6;
  cfg.samples_per_epoch = 25;
  cfg.stop_rel_tol = std::numeric_limits<double>::infinity();
  cfg.max_epochs = 50;
  std::mt19937_64 rng(5);
  SoaeParams params = init_params(data, cfg, rng);
  const TrainResult res = train(params, data, cfg, rng);
  CHECK(res.loss_history.size() == 1);
}

TEST_CASE("training is deterministic given the seed") {
  const auto data = testsupport::make_synthetic_digits(80, 47);
  SoaeConfig cfg;
  cfg.n_hidden = 8;
  cfg.samples_per_epoch = 40;
  cfg.max_epochs = 3;
  cfg.stop_rel_tol = 0.0;

  auto run = [&]() {
    std::mt19937_64 rng(99);
    SoaeParams params = init_params(data, cfg, rng);
    return train(params, data, cfg, rng).loss_history;
  };
  CHECK(run() == run());
}

TEST_CASE("desk-scale smoke run learns something") {
  const auto data = testsupport::make_synthetic_digits(100, 53);
  SoaeConfig cfg;
  cfg.n_hidden = 16;
  cfg.samples_per_epoch = 100;
  cfg.max_epochs = 5;
  cfg.stop_rel_tol = 0.0;
  cfg.step_size = 1.0;
  std::mt19937_64 rng(7);
  SoaeParams params = init_params(data, cfg, rng);
  const TrainResult res = train(params, data, cfg, rng);
  CHECK(res.loss_history.size() == 5);
  // strictly below chance on the training data
  CHECK(evaluation_error(params, data, cfg) < 0.9);
}

TEST_CASE("activity spread shrinks at higher target sparseness") {
  const auto data = testsupport::make_synthetic_digits(300, 61);
  SoaeConfig cfg;
  cfg.n_hidden = 64;
  cfg.sigma_w = 0.75;
  cfg.samples_per_epoch = 300;
  cfg.max_epochs = 3;
  cfg.stop_rel_tol = 0.0;
  auto std_of_l0 = [&](double sigma_h) {
    SoaeConfig c = cfg;
    c.sigma_h = sigma_h;
    std::mt19937_64 rng(21);
    SoaeParams params = init_params(data, c, rng);
    train(params, data, c, rng);
    double sum = 0.0, sum_sq = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
      const auto rec = forward(params, data.samples.col(i), c);
      const double l0 = double((rec.h.array() != 0.0).count());
      sum += l0;
      sum_sq += l0 * l0;
    }
    const double mean = sum / double(data.size());
    return std::sqrt(std::max(0.0, sum_sq / double(data.size()) - mean * mean));
  };
  CHECK(std_of_l0(0.95) < std_of_l0(0.5));
}

TEST_CASE("classification is equivariant under output permutations") {
  std::mt19937_64 rng(331);
  const Index d = 10;
  const SoaeConfig cfg = small_config(Transfer::tanh);
  const SoaeParams p = random_params(d, cfg, rng);
  SoaeParams swapped = p;
  swapped.w_out.col(0).swap(swapped.w_out.col(2));
  std::swap(swapped.theta_out(0), swapped.theta_out(2));
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd x = random_vector(d, rng);
    const int c = classify(p, x, cfg);
    const int cs = classify(swapped, x, cfg);
    const int expected = c == 0 ? 2 : (c == 2 ? 0 : c);
    CHECK(cs == expected);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly and rejects corruption") {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(337);
  const SoaeConfig cfg = small_config(Transfer::sigma_projection);
  const SoaeParams p = random_params(5, cfg, rng);
  const auto path =
      (fs::temp_directory_path() / "sparseness_ckpt.bin").string();
  save_checkpoint(path, p, cfg);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(std::memcmp(ck.params.w.data(), p.w.data(),
                    sizeof(double) * p.w.size()) == 0);
  CHECK(std::memcmp(ck.params.w_out.data(), p.w_out.data(),
                    sizeof(double) * p.w_out.size()) == 0);
  CHECK(std::memcmp(ck.params.theta_out.data(), p.theta_out.data(),
                    sizeof(double) * p.theta_out.size()) == 0);
  CHECK(ck.config.transfer == cfg.transfer);
  CHECK(ck.config.sigma_h == cfg.sigma_h);
  CHECK(ck.config.sigma_w == cfg.sigma_w);

  // flip one payload byte
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(40);
    f.put(char(0xAB));
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  fs::remove(path);
}
