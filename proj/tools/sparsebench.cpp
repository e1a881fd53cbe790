// sparsebench: experiment driver for the sparseness projection algorithms and
// the sparse auto-encoder trainer. Subcommands write CSV (header row,
// '#'-prefixed metadata) to --output, or stdout when the path is "-".

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparseness/checkpoint.hpp"
#include "sparseness/gradient.hpp"
#include "sparseness/hoyer.hpp"
#include "sparseness/mnist.hpp"
#include "sparseness/projection.hpp"
#include "sparseness/soae.hpp"

namespace {

using sparseness::Index;
using sparseness::SparseTargetd;
using sparseness::VectorXd;

bool verbose() {
  const char* v = std::getenv("SPARSEBENCH_VERBOSE");
  return v != nullptr && v[0] != '\0' && v[0] != '0';
}

void progress(const std::string& msg) {
  if (verbose()) std::cerr << "[sparsebench] " << msg << "\n";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream)));
}

// Benchmark input: a signed Gaussian vector carried to the requested
// sparseness by the scale-free projection.
VectorXd sample_input(Index n, double sigma_in, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  VectorXd g(n);
  for (Index i = 0; i < n; ++i) g(i) = gauss(rng);
  return sparseness::project_scale_free(g,
                                        SparseTargetd::for_sigma(n, sigma_in));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) {
    if (path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open output: " + path);
    }
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }
  void meta(const std::string& line) { out() << "# " << line << "\n"; }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out() << cells[i] << (i + 1 < cells.size() ? "," : "");
    out() << "\n";
  }

 private:
  std::ofstream file_;
};

struct CommonOpts {
  std::uint64_t seed = 1;
  std::string output = "-";
  double input_sigma = 0.15;
  double target_sigma = 0.90;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_sigmas = true) {
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("-o,--output", o.output, "output CSV path ('-' = stdout)");
  if (with_sigmas) {
    cmd->add_option("--input-sigma", o.input_sigma,
                    "sparseness of the sampled inputs");
    cmd->add_option("--target-sigma", o.target_sigma,
                    "target sparseness of the projection");
  }
}

void meta_common(CsvWriter& csv, const std::string& cmd, const CommonOpts& o) {
  csv.meta("sparsebench " + cmd);
  csv.meta("seed=" + std::to_string(o.seed));
  csv.meta("input_model=normal+scale_free_sigma(" + fmt(o.input_sigma) + ")");
  csv.meta("target_sigma=" + fmt(o.target_sigma));
}

int cmd_iterations(const CommonOpts& o, const std::vector<Index>& dims,
                   int trials) {
  CsvWriter csv(o.output);
  meta_common(csv, "iterations", o);
  csv.meta("trials=" + std::to_string(trials));
  csv.row({"n", "algo", "mean_iters", "min_iters", "max_iters"});
  for (std::size_t di = 0; di < dims.size(); ++di) {
    const Index n = dims[di];
    const auto target = SparseTargetd::for_sigma(n, o.target_sigma);
    long sum_imp = 0, sum_org = 0;
    Index min_imp = n + 1, max_imp = 0, min_org = n + 1, max_org = 0;
    for (int t = 0; t < trials; ++t) {
      auto rng = stream_rng(o.seed, di * 1000003ull + std::uint64_t(t));
      const VectorXd x = sample_input(n, o.input_sigma, rng);
      const auto imp =
          static_cast<Index>(sparseness::project_nonneg(x, target)
                                 .trace.iterations.size());
      const Index org = sparseness::hoyer_project(x, target).trace.iterations;
      sum_imp += imp;
      sum_org += org;
      min_imp = std::min(min_imp, imp);
      max_imp = std::max(max_imp, imp);
      min_org = std::min(min_org, org);
      max_org = std::max(max_org, org);
    }
    progress("iterations n=" + std::to_string(n));
    const double den = trials;
    csv.row({std::to_string(n), "original", fmt(sum_org / den),
             std::to_string(min_org), std::to_string(max_org)});
    csv.row({std::to_string(n), "improved", fmt(sum_imp / den),
             std::to_string(min_imp), std::to_string(max_imp)});
  }
  return 0;
}

int cmd_support_decay(const CommonOpts& o, Index n, int trials) {
  CsvWriter csv(o.output);
  meta_common(csv, "support-decay", o);
  csv.meta("n=" + std::to_string(n));
  csv.meta("trials=" + std::to_string(trials));
  csv.meta("runs that finished early extend at their final support");
  const auto target = SparseTargetd::for_sigma(n, o.target_sigma);
  std::vector<std::vector<Index>> imp(trials), org(trials);
  std::size_t depth = 0;
  for (int t = 0; t < trials; ++t) {
    auto rng = stream_rng(o.seed, std::uint64_t(t));
    const VectorXd x = sample_input(n, o.input_sigma, rng);
    const auto res = sparseness::project_nonneg(x, target);
    for (const auto& it : res.trace.iterations)
      imp[std::size_t(t)].push_back(it.d);
    org[std::size_t(t)] =
        sparseness::hoyer_project(x, target).trace.support_per_iteration;
    depth = std::max({depth, imp[std::size_t(t)].size(),
                      org[std::size_t(t)].size()});
  }
  csv.row({"iteration", "algo", "mean_support_fraction"});
  auto mean_at = [n](const std::vector<std::vector<Index>>& rows,
                     std::size_t k) {
    double acc = 0.0;
    for (const auto& r : rows)
      acc += static_cast<double>(k < r.size() ? r[k] : r.back()) /
             static_cast<double>(n);
    return acc / static_cast<double>(rows.size());
  };
  for (std::size_t k = 0; k < depth; ++k) {
    csv.row({std::to_string(k + 1), "original", fmt(mean_at(org, k))});
    csv.row({std::to_string(k + 1), "improved", fmt(mean_at(imp, k))});
  }
  return 0;
}

int cmd_speedup(const CommonOpts& o, const std::vector<Index>& dims,
                const std::vector<double>& sigmas, int probes,
                double min_cell_ms, int reps) {
  using clock = std::chrono::steady_clock;
  CsvWriter csv(o.output);
  meta_common(csv, "speedup", o);
  csv.meta("probe_trials=" + std::to_string(probes));
  csv.meta("min_cell_ms=" + fmt(min_cell_ms) + " reps=" +
           std::to_string(reps));
  csv.meta("time_ratio = wall(original) / wall(improved); timing column only");
  csv.row({"n", "sigma_in", "probe_trials", "mean_iters_original",
           "mean_iters_improved", "time_ratio"});
  std::uint64_t cell = 0;
  for (const Index n : dims) {
    for (const double sig_in : sigmas) {
      const auto target = SparseTargetd::for_sigma(n, o.target_sigma);
      std::vector<VectorXd> inputs;
      inputs.reserve(std::size_t(probes));
      long iters_imp = 0, iters_org = 0;
      for (int t = 0; t < probes; ++t) {
        auto rng = stream_rng(o.seed, cell * 1000003ull + std::uint64_t(t));
        inputs.push_back(sample_input(n, sig_in, rng));
        iters_imp += static_cast<long>(
            sparseness::project_nonneg(inputs.back(), target)
                .trace.iterations.size());
        iters_org +=
            sparseness::hoyer_project(inputs.back(), target).trace.iterations;
      }
      // Auto-scale the batch length until the improved path fills the cell
      // budget, then take the median of `reps` repetitions per algorithm.
      long batch = probes;
      auto run_improved = [&](long count) {
        const auto begin = clock::now();
        for (long i = 0; i < count; ++i)
          sparseness::project_nonneg(inputs[std::size_t(i) % inputs.size()],
                                     target);
        return std::chrono::duration<double, std::milli>(clock::now() - begin)
            .count();
      };
      auto run_original = [&](long count) {
        const auto begin = clock::now();
        for (long i = 0; i < count; ++i)
          sparseness::hoyer_project(inputs[std::size_t(i) % inputs.size()],
                                    target);
        return std::chrono::duration<double, std::milli>(clock::now() - begin)
            .count();
      };
      while (run_improved(batch) < min_cell_ms) batch *= 2;
      std::vector<double> t_imp, t_org;
      for (int r = 0; r < reps; ++r) {
        t_imp.push_back(run_improved(batch));
        t_org.push_back(run_original(batch));
      }
      std::sort(t_imp.begin(), t_imp.end());
      std::sort(t_org.begin(), t_org.end());
      const double ratio =
          t_org[t_org.size() / 2] / t_imp[t_imp.size() / 2];
      progress("speedup n=" + std::to_string(n) + " sigma=" + fmt(sig_in));
      csv.row({std::to_string(n), fmt(sig_in), std::to_string(probes),
               fmt(iters_org / double(probes)), fmt(iters_imp / double(probes)),
               fmt(ratio)});
      ++cell;
    }
  }
  return 0;
}

struct TrainOpts {
  std::string images, labels, eval_images, eval_labels;
  Index train_size = 0, eval_size = 0;
  bool jitter = false;
  int eval_every = 1;
  std::string checkpoint, metrics = "-";
  std::uint64_t seed = 1;
  sparseness::soae::SoaeConfig cfg;
  std::string transfer_name = "sigma";
};

void add_model_options(CLI::App* cmd, TrainOpts& t) {
  cmd->add_option("--images", t.images, "IDX image file (learning set)")
      ->required();
  cmd->add_option("--labels", t.labels, "IDX label file (learning set)")
      ->required();
  cmd->add_option("--eval-images", t.eval_images, "IDX image file (eval)");
  cmd->add_option("--eval-labels", t.eval_labels, "IDX label file (eval)");
  cmd->add_option("--train-size", t.train_size,
                  "subset size for training (0 = all)");
  cmd->add_option("--eval-size", t.eval_size,
                  "subset size for evaluation (0 = all)");
  cmd->add_flag("--jitter", t.jitter, "augment the learning set by jitter8");
  cmd->add_option("--n-hidden", t.cfg.n_hidden, "hidden units");
  cmd->add_option("--sigma-w", t.cfg.sigma_w, "connectivity sparseness");
  cmd->add_option("--transfer", t.transfer_name,
                  "hidden transfer: sigma | l0 | tanh");
  cmd->add_option("--sigma-h", t.cfg.sigma_h, "activity sparseness (sigma)");
  cmd->add_option("--kappa", t.cfg.kappa, "active units (l0 transfer)");
  cmd->add_option("--step", t.cfg.step_size, "initial step size");
  cmd->add_option("--anneal", t.cfg.anneal_factor, "step annealing factor");
  cmd->add_option("--samples-per-epoch", t.cfg.samples_per_epoch,
                  "SGD updates per epoch (clamped to the set size)");
  cmd->add_option("--max-epochs", t.cfg.max_epochs, "epoch cap");
  cmd->add_option("--stop-tol", t.cfg.stop_rel_tol,
                  "relative loss spread for stopping");
  cmd->add_option("--stop-window", t.cfg.stop_window, "stopping window");
  cmd->add_option("--seed", t.seed, "RNG seed");
}

sparseness::soae::Transfer parse_transfer(const std::string& name) {
  if (name == "sigma") return sparseness::soae::Transfer::sigma_projection;
  if (name == "l0") return sparseness::soae::Transfer::l0_projection;
  if (name == "tanh") return sparseness::soae::Transfer::tanh;
  throw CLI::ValidationError("--transfer must be sigma, l0 or tanh");
}

sparseness::mnist::LabeledDataset load_for_training(const TrainOpts& t) {
  auto data = sparseness::mnist::load_idx(t.images, t.labels);
  if (t.jitter) data = sparseness::mnist::jitter8(data);
  if (t.train_size > 0)
    data = sparseness::mnist::subset(data, t.train_size, t.seed);
  return data;
}

int cmd_train(TrainOpts& t) {
  namespace soae = sparseness::soae;
  t.cfg.transfer = parse_transfer(t.transfer_name);
  const auto data = load_for_training(t);
  progress("learning set: " + std::to_string(data.size()) + " samples");

  std::unique_ptr<sparseness::mnist::LabeledDataset> eval;
  if (!t.eval_images.empty()) {
    eval = std::make_unique<sparseness::mnist::LabeledDataset>(
        sparseness::mnist::load_idx(t.eval_images, t.eval_labels));
    if (t.eval_size > 0)
      *eval = sparseness::mnist::subset(*eval, t.eval_size, t.seed + 1);
  }

  CsvWriter csv(t.metrics);
  csv.meta("sparsebench train");
  csv.meta("seed=" + std::to_string(t.seed) + " transfer=" + t.transfer_name);
  csv.meta("n_hidden=" + std::to_string(t.cfg.n_hidden) + " sigma_w=" +
           fmt(t.cfg.sigma_w));
  csv.row({"epoch", "mean_loss", "alpha", "step", "eval_error"});

  auto rng = stream_rng(t.seed, 0);
  soae::SoaeParams params = soae::init_params(data, t.cfg, rng);
  const auto result = soae::train(
      params, data, t.cfg, rng,
      [&](int epoch, const soae::EpochResult& er) {
        std::string eval_cell;
        if (eval && t.eval_every > 0 && epoch % t.eval_every == 0)
          eval_cell = fmt(soae::evaluation_error(params, *eval, t.cfg));
        csv.row({std::to_string(epoch), fmt(er.mean_loss), fmt(er.alpha),
                 fmt(er.step), eval_cell});
        progress("epoch " + std::to_string(epoch) + " loss " +
                 fmt(er.mean_loss));
      });
  csv.meta("epochs_run=" + std::to_string(result.loss_history.size()));
  csv.meta("max_connectivity_sigma_error=" +
           fmt(result.diagnostics.max_connectivity_sigma_error));
  if (!t.checkpoint.empty())
    soae::save_checkpoint(t.checkpoint, params, t.cfg);
  return 0;
}

int cmd_activity_sweep(TrainOpts& t, const std::vector<double>& sigma_h_values,
                       const std::string& output) {
  namespace soae = sparseness::soae;
  t.cfg.transfer = soae::Transfer::sigma_projection;
  const auto data = load_for_training(t);
  auto probe = data;
  if (!t.eval_images.empty()) {
    probe = sparseness::mnist::load_idx(t.eval_images, t.eval_labels);
    if (t.eval_size > 0)
      probe = sparseness::mnist::subset(probe, t.eval_size, t.seed + 1);
  }

  CsvWriter csv(output);
  csv.meta("sparsebench activity-sweep");
  csv.meta("seed=" + std::to_string(t.seed) + " n_hidden=" +
           std::to_string(t.cfg.n_hidden) + " epochs<=" +
           std::to_string(t.cfg.max_epochs));
  csv.row({"sigma_h", "mean_l0", "std_l0"});
  for (std::size_t k = 0; k < sigma_h_values.size(); ++k) {
    soae::SoaeConfig cfg = t.cfg;
    cfg.sigma_h = sigma_h_values[k];
    auto rng = stream_rng(t.seed, 100 + k);
    soae::SoaeParams params = soae::init_params(data, cfg, rng);
    soae::train(params, data, cfg, rng);
    double sum = 0.0, sum_sq = 0.0;
    for (Index i = 0; i < probe.size(); ++i) {
      const auto rec = soae::forward(params, probe.samples.col(i), cfg);
      const double l0 = double((rec.h.array() != 0.0).count());
      sum += l0;
      sum_sq += l0 * l0;
    }
    const double mean = sum / double(probe.size());
    const double variance = std::max(0.0, sum_sq / double(probe.size()) -
                                              mean * mean);
    progress("sweep sigma_h=" + fmt(cfg.sigma_h) + " mean_l0=" + fmt(mean));
    csv.row({fmt(cfg.sigma_h), fmt(mean), fmt(std::sqrt(variance))});
  }
  return 0;
}

int cmd_project(const std::string& input, const std::string& output,
                double sigma_star, double lambda1, double lambda2, bool nonneg,
                Index l0_kappa) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open input vector: " + input);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    std::replace(token.begin(), token.end(), ',', ' ');
    std::istringstream parts(token);
    double v;
    while (parts >> v) values.push_back(v);
  }
  if (values.empty()) throw std::runtime_error("input vector is empty");
  VectorXd x = Eigen::Map<VectorXd>(values.data(), Index(values.size()));

  CsvWriter csv(output);
  if (l0_kappa > 0) {
    const VectorXd p = sparseness::project_l0(x, l0_kappa);
    csv.meta("l0 projection kappa=" + std::to_string(l0_kappa));
    csv.meta("iterations=0");
    for (Index i = 0; i < p.size(); ++i) csv.out() << fmt(p(i)) << "\n";
    return 0;
  }
  if (sigma_star <= 0.0 && lambda1 <= 0.0)
    throw std::runtime_error(
        "project: pass --sigma, --lambda1/--lambda2, or --l0");
  const auto target = sigma_star > 0
                          ? SparseTargetd::for_sigma(x.size(), sigma_star)
                          : SparseTargetd(x.size(), lambda1, lambda2);
  const auto res = nonneg ? sparseness::project_nonneg(x, target)
                          : sparseness::project_unrestricted(x, target);
  csv.meta("iterations=" + std::to_string(res.trace.iterations.size()));
  csv.meta("support=" + std::to_string(res.trace.final_support));
  csv.meta("sigma=" + fmt(sparseness::sigma(res.point)));
  for (Index i = 0; i < res.point.size(); ++i)
    csv.out() << fmt(res.point(i)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparseness projection benchmarks and SOAE training"};
  app.require_subcommand(1);
  app.set_config("--config");

  // iterations
  CommonOpts it_opts;
  std::vector<Index> it_dims{1000, 10000, 100000};
  int it_trials = 1000;
  auto* it_cmd = app.add_subcommand(
      "iterations", "iteration counts of both projection algorithms");
  add_common(it_cmd, it_opts);
  it_cmd->add_option("--dims", it_dims, "problem dimensionalities")
      ->delimiter(',');
  it_cmd->add_option("--trials", it_trials, "inputs per dimensionality");

  // support-decay
  CommonOpts sd_opts;
  Index sd_dim = 1000;
  int sd_trials = 1000;
  auto* sd_cmd = app.add_subcommand(
      "support-decay", "per-iteration nonzero fraction of the working vector");
  add_common(sd_cmd, sd_opts);
  sd_cmd->add_option("--dim", sd_dim, "problem dimensionality");
  sd_cmd->add_option("--trials", sd_trials, "number of inputs");

  // speedup
  CommonOpts sp_opts;
  std::vector<Index> sp_dims{16, 128, 1024, 8192};
  std::vector<double> sp_sigmas{0.05, 0.2, 0.4, 0.6, 0.8};
  int sp_probes = 32, sp_reps = 5;
  double sp_min_ms = 100.0;
  auto* sp_cmd = app.add_subcommand(
      "speedup", "wall-clock ratio original/improved over a parameter grid");
  add_common(sp_cmd, sp_opts);
  sp_cmd->add_option("--dims", sp_dims, "dimensionalities")->delimiter(',');
  sp_cmd->add_option("--input-sigmas", sp_sigmas, "input sparseness grid")
      ->delimiter(',');
  sp_cmd->add_option("--probes", sp_probes, "deterministic inputs per cell");
  sp_cmd->add_option("--min-cell-ms", sp_min_ms, "minimum timing per cell");
  sp_cmd->add_option("--reps", sp_reps, "timing repetitions (median)");

  // train
  TrainOpts tr;
  auto* tr_cmd =
      app.add_subcommand("train", "train a supervised online auto-encoder");
  add_model_options(tr_cmd, tr);
  tr_cmd->add_option("--eval-every", tr.eval_every,
                     "evaluate every k epochs (0 = never)");
  tr_cmd->add_option("--checkpoint", tr.checkpoint, "checkpoint output path");
  tr_cmd->add_option("--metrics", tr.metrics, "metrics CSV path");

  // activity-sweep
  TrainOpts sw;
  std::vector<double> sw_sigma_h{0.2, 0.5, 0.8, 0.95};
  std::string sw_output = "-";
  auto* sw_cmd = app.add_subcommand(
      "activity-sweep", "hidden-layer activity vs target sparseness");
  add_model_options(sw_cmd, sw);
  sw_cmd->add_option("--sigma-h-values", sw_sigma_h, "sweep grid")
      ->delimiter(',');
  sw_cmd->add_option("-o,--output", sw_output, "output CSV path");

  // project
  std::string pj_input, pj_output = "-";
  double pj_sigma = 0.0, pj_l1 = 0.0, pj_l2 = 1.0;
  bool pj_nonneg = false;
  Index pj_l0 = 0;
  auto* pj_cmd = app.add_subcommand(
      "project", "one-shot projection of a vector read from a file");
  pj_cmd->add_option("-i,--input", pj_input, "text file with the vector")
      ->required();
  pj_cmd->add_option("-o,--output", pj_output, "output path ('-' = stdout)");
  auto* pj_sigma_opt =
      pj_cmd->add_option("--sigma", pj_sigma, "target sparseness in (0,1)");
  auto* pj_l1_opt = pj_cmd->add_option("--lambda1", pj_l1, "target L1 norm");
  pj_cmd->add_option("--lambda2", pj_l2, "target L2 norm");
  pj_cmd->add_flag("--nonneg", pj_nonneg, "non-negative variant");
  auto* pj_l0_opt =
      pj_cmd->add_option("--l0", pj_l0, "L0 projection with the given kappa");
  pj_sigma_opt->excludes(pj_l1_opt)->excludes(pj_l0_opt);
  pj_l1_opt->excludes(pj_l0_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (it_cmd->parsed()) return cmd_iterations(it_opts, it_dims, it_trials);
    if (sd_cmd->parsed()) return cmd_support_decay(sd_opts, sd_dim, sd_trials);
    if (sp_cmd->parsed())
      return cmd_speedup(sp_opts, sp_dims, sp_sigmas, sp_probes, sp_min_ms,
                         sp_reps);
    if (tr_cmd->parsed()) return cmd_train(tr);
    if (sw_cmd->parsed()) return cmd_activity_sweep(sw, sw_sigma_h, sw_output);
    if (pj_cmd->parsed())
      return cmd_project(pj_input, pj_output, pj_sigma, pj_l1, pj_l2,
                         pj_nonneg, pj_l0);
  } catch (const std::exception& ex) {
    std::cerr << "sparsebench: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
