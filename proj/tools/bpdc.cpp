// bpdc: command-line driver for training, coding and inspecting models.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "bpdc/bpdc.hpp"
#include "bpdc/config.hpp"
#include "bpdc/verify.hpp"

namespace fs = std::filesystem;
using namespace bpdc;

namespace {

struct Flags {
  std::string config;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "key=value configuration file");
  for (const auto& key : RunConfig::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&flags, key](const std::string& v) { flags.values[key] = v; },
        "override '" + key + "'");
  }
}

RunConfig resolve(const Flags& flags) {
  RunConfig cfg;
  if (!flags.config.empty()) cfg.load_file(flags.config);
  for (const auto& [k, v] : flags.values) cfg.set(k, v);
  return cfg;
}

int thread_count() {
  int n = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("BPDC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap < 1) throw ConfigError("BPDC_THREADS must be a positive integer");
    n = std::min(n, cap);
  }
  return n;
}

Dataset load_data(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no data file given (--data)");
  std::optional<fs::path> labels;
  if (!cfg.labels.empty()) labels = cfg.labels;
  return load_dataset(cfg.data, labels, cfg.scaling);
}

Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint)");
  return load_checkpoint(cfg.checkpoint);
}

void check_data_matches(const Dataset& ds, const ModelState& m) {
  if (ds.D() != m.hyper.D) {
    throw ShapeError("data have D = " + std::to_string(ds.D()) + " but the model expects D = " +
                     std::to_string(m.hyper.D));
  }
}

// ------------------------------------------------------------------ train
int cmd_train(const RunConfig& cfg) {
  const Dataset ds = load_data(cfg);
  HyperParams h = cfg.resolved_hyper();
  if (!cfg.is_set("D")) h.D = ds.D();
  TrainConfig tc = cfg.train;
  tc.threads = thread_count();
  tc.validate();
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");

  TrainerState state;
  if (!cfg.resume.empty()) {
    state = load_checkpoint(cfg.resume);
    if (state.iter > static_cast<std::uint64_t>(tc.n_iters)) {
      throw ConfigError("checkpoint is already at iteration " + std::to_string(state.iter) +
                        ", beyond iters = " + std::to_string(tc.n_iters));
    }
    tc.seed = state.seed;
  } else {
    h.validate();
    Rng rng(tc.seed);
    state = initial_state(make_model(h, cfg.hidden, cfg.activation, rng), tc);
  }
  check_data_matches(ds, state.model);
  if (tc.n_iters > 0 && ds.N() < tc.batch_size) {
    throw DomainError("batch_size " + std::to_string(tc.batch_size) + " exceeds N = " +
                      std::to_string(ds.N()));
  }

  // Everything validated; outputs may be written from here on.
  const fs::path out = cfg.out;
  fs::create_directories(out);
  const fs::path final_ckpt = cfg.checkpoint.empty() ? out / "final.ckpt" : fs::path(cfg.checkpoint);
  const long remaining = tc.n_iters - static_cast<long>(state.iter);
  if (remaining <= 0) {
    save_checkpoint(final_ckpt, state);
    write_file_atomic(out / "metrics.csv", metrics_csv({}));
    std::printf("no iterations run; checkpoint written to %s\n", final_ckpt.string().c_str());
    return 0;
  }

  Trainer trainer(ds.X, std::move(state), tc);
  trainer.set_metrics_sink([](const MetricsRow& r) {
    std::printf("iter %6lu  mse %.6g  card %.3f  active %d  objective %.6g\n",
                static_cast<unsigned long>(r.iter), r.mse, r.mean_card, r.active_factors, r.objective);
    std::fflush(stdout);
  });
  for (long done = 0; done < remaining; ++done) {
    trainer.step();
    const auto it = trainer.state().iter;
    if (cfg.checkpoint_every > 0 && it % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
      save_checkpoint(out / ("checkpoint_" + std::to_string(it) + ".ckpt"), trainer.state());
    }
  }
  save_checkpoint(final_ckpt, trainer.state());
  write_file_atomic(out / "metrics.csv", metrics_csv(trainer.metrics()));
  write_file_atomic(out / "pi_trace.csv", pi_trace_csv(trainer.pi_trace()));

  const TrainerState& st = trainer.state();
  if (cfg.export_figures) {
    const auto codes = encode_all(ds.X, st.model, st.bank, st.mask);
    const ExportReport rep = export_figures(st.model, st.bank, ds, codes, out / "figures", trainer.pi_trace());
    for (const auto& n : rep.notices) std::printf("note: %s\n", n.c_str());
  }
  const Vector pi = st.bank.expected_pi();
  int active = 0;
  for (int k = 0; k < st.model.hyper.K; ++k) active += st.mask[static_cast<std::size_t>(k)] && pi[k] > 0.01;
  const double mse = trainer.metrics().empty() ? NAN : trainer.metrics().back().mse;
  std::printf("done: %lu iterations, final MSE %.6g, %d active factors (%d unpruned); checkpoint %s\n",
              static_cast<unsigned long>(st.iter), mse, active, st.mask.count(),
              final_ckpt.string().c_str());
  return 0;
}

// ------------------------------------------------------------------ encode / reconstruct
int cmd_encode(const RunConfig& cfg) {
  const Checkpoint ck = require_checkpoint(cfg);
  const Dataset ds = load_data(cfg);
  check_data_matches(ds, ck.model);
  const auto codes = encode_all(ds.X, ck.model, ck.bank, ck.mask);
  write_file_atomic(fs::path(cfg.out) / "codes.csv", codes_csv(codes));
  std::printf("coded %d data into %s\n", ds.N(), (fs::path(cfg.out) / "codes.csv").string().c_str());
  return 0;
}

int cmd_reconstruct(const RunConfig& cfg) {
  const Checkpoint ck = require_checkpoint(cfg);
  const Dataset ds = load_data(cfg);
  check_data_matches(ds, ck.model);
  const auto codes = encode_all(ds.X, ck.model, ck.bank, ck.mask);
  ExportReport rep;
  fs::create_directories(cfg.out);
  export_reconstructions(ck.model, ds, codes, cfg.out, rep);
  for (const auto& p : rep.written) std::printf("wrote %s\n", p.string().c_str());
  for (const auto& n : rep.notices) std::printf("note: %s\n", n.c_str());
  return 0;
}

// ------------------------------------------------------------------ sample
int cmd_sample(const RunConfig& cfg) {
  if (cfg.n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (!(cfg.c_sample > 0.0)) throw ConfigError("c_sample must be positive");
  ModelState model;
  SampleOptions opts;
  opts.c_sample = cfg.c_sample;
  Rng rng(cfg.train.seed);
  if (!cfg.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    model = ck.model;
    Vector pi = ck.bank.expected_pi();
    for (int k = 0; k < pi.size(); ++k) {
      if (!ck.mask[static_cast<std::size_t>(k)]) pi[k] = 0.0;
    }
    opts.pi = pi;
  } else {
    const HyperParams h = cfg.resolved_hyper();
    h.validate();
    model = make_model(h, cfg.hidden, cfg.activation, rng);
  }
  const SyntheticData data = sample_dataset(model, cfg.n_samples, rng, opts);
  const fs::path out = cfg.out;
  write_file_atomic(out / "samples.csv", matrix_to_csv(data.X));
  std::vector<SparseCode> codes(data.Z.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    codes[i].z = data.Z[i];
    codes[i].active_set = support(data.Z[i]);
  }
  write_file_atomic(out / "sample_codes.csv", codes_csv(codes));
  std::string lam = "index,lambda\n";
  for (Eigen::Index i = 0; i < data.lambda.size(); ++i) {
    lam += std::to_string(i) + ',' + format_double(data.lambda[i]) + '\n';
  }
  write_file_atomic(out / "sample_lambda.csv", lam);
  std::string pi = "factor,pi\n";
  for (Eigen::Index k = 0; k < data.pi.size(); ++k) pi += std::to_string(k) + ',' + format_double(data.pi[k]) + '\n';
  write_file_atomic(out / "sample_pi.csv", pi);
  if (cfg.checkpoint.empty()) save_checkpoint(out / "sample_model.ckpt", initial_state(model, cfg.train));
  std::printf("sampled %d data of dimension %d into %s\n", cfg.n_samples, model.hyper.D,
              out.string().c_str());
  return 0;
}

// ------------------------------------------------------------------ inspect
int cmd_inspect(const RunConfig& cfg) {
  const Checkpoint ck = require_checkpoint(cfg);
  std::optional<Dataset> ds;
  if (!cfg.data.empty()) {
    ds = load_data(cfg);
    check_data_matches(*ds, ck.model);
  }
  const fs::path out = cfg.out;
  fs::create_directories(out);
  const Vector pi = ck.bank.expected_pi();
  std::string table = "factor,a,b,expected_pi,active\n";
  std::printf("iteration %lu, K = %d, %d unpruned\n", static_cast<unsigned long>(ck.iter),
              ck.model.hyper.K, ck.mask.count());
  std::printf("%6s %12s %12s %12s %6s\n", "factor", "a", "b", "E[pi]", "active");
  for (int k = 0; k < ck.model.hyper.K; ++k) {
    const bool on = ck.mask[static_cast<std::size_t>(k)];
    std::printf("%6d %12.6g %12.6g %12.6g %6d\n", k, ck.bank.a[k], ck.bank.b[k], pi[k], on);
    table += std::to_string(k) + ',' + format_double(ck.bank.a[k]) + ',' + format_double(ck.bank.b[k]) +
             ',' + format_double(pi[k]) + ',' + (on ? "1" : "0") + '\n';
  }
  write_file_atomic(out / "expected_pi.csv", table);
  write_file_atomic(out / "top_bits.csv", top_bits_csv(top_bits_table(ck.model, ck.bank)));
  if (ds && ds->labels) {
    const auto codes = encode_all(ds->X, ck.model, ck.bank, ck.mask);
    write_file_atomic(out / "factor_sharing.csv",
                      sharing_csv(factor_sharing(codes, *ds->labels, ck.model.hyper.K)));
  } else {
    std::printf("note: no labelled data given; factor-sharing export skipped\n");
  }
  return 0;
}

// ------------------------------------------------------------------ gradcheck
int cmd_gradcheck(const RunConfig& cfg) {
  Rng rng(cfg.train.seed);
  HyperParams h;
  h.K = 4;
  h.M = 5;
  h.D = 6;
  h.L_max = 4;
  h.sigma2 = 0.5;
  h.c = 1.0;
  ModelState m = make_model(h, {6}, cfg.activation, rng);
  for (std::size_t l = 0; l < m.net.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < m.net.bias(l).size(); ++i) m.net.bias(l)[i] = 0.3 * rng.normal();
  }
  const int B = 3;
  Matrix X(h.D, B);
  std::vector<SparseCode> codes(B);
  std::vector<ScalePosterior> qs(B);
  for (int n = 0; n < B; ++n) {
    for (int d = 0; d < h.D; ++d) X(d, n) = rng.normal();
    auto& c = codes[static_cast<std::size_t>(n)];
    c.z.resize(static_cast<std::size_t>(h.K));
    for (auto& b : c.z) b = rng.bernoulli(0.5);
    c.active_set = support(c.z);
    qs[static_cast<std::size_t>(n)] = {rng.normal(), 0.1 + rng.uniform()};
  }
  const auto g = theta_gradient(m, X, codes, qs);
  const auto fd = verify::theta_gradient_fd(m, X, codes, qs);
  const std::size_t split = m.net.parameter_count();
  const double err_net = verify::max_gradient_rel_error(std::span(g).first(split), std::span(fd).first(split));
  const double err_phi = verify::max_gradient_rel_error(std::span(g).subspan(split), std::span(fd).subspan(split));
  const double err = std::max(err_net, err_phi);
  std::printf("parameters   %zu (network %zu, dictionary %zu)\n", g.size(), split, g.size() - split);
  std::printf("network      max rel err %.3e\n", err_net);
  std::printf("dictionary   max rel err %.3e\n", err_phi);
  std::printf("%s (threshold 1e-4)\n", err <= 1e-4 ? "PASS" : "FAIL");
  return err <= 1e-4 ? 0 : 1;
}

// ------------------------------------------------------------------ oracle
std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

int cmd_oracle(const RunConfig& cfg) {
  Rng rng(cfg.train.seed);
  struct Row {
    std::string name;
    bool pass;
    std::string detail;
  };
  std::vector<Row> rows;

  {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const int D = 1 + static_cast<int>(rng.uniform_index(8));
      HyperParams h;
      h.D = D;
      h.sigma2 = 0.2 + rng.uniform();
      h.c = rng.bernoulli(0.3) ? 1e15 : 0.5 + 4.0 * rng.uniform();
      Vector x(D), f(D);
      for (int d = 0; d < D; ++d) x[d] = 2.0 * rng.normal(), f[d] = rng.normal();
      const ScalePosterior q = update_q_lambda(x, f, h);
      const auto quad = verify::scale_posterior_quadrature(x, f, h.sigma2, h.c);
      worst = std::max({worst,
                        std::abs(q.mean - quad.mean) / std::max(std::abs(quad.mean), std::sqrt(quad.var)),
                        verify::rel_error(q.var, quad.var)});
    }
    rows.push_back({"q(lambda) vs quadrature", worst <= 1e-6, "max rel err " + sci(worst)});
  }
  {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const int D = 1 + static_cast<int>(rng.uniform_index(16));
      HyperParams h;
      h.D = D;
      h.sigma2 = 0.2 + rng.uniform();
      h.c = rng.bernoulli(0.3) ? 1e15 : 0.5 + 4.0 * rng.uniform();
      Vector x(D), f(D);
      for (int d = 0; d < D; ++d) x[d] = 2.0 * rng.normal(), f[d] = rng.normal();
      worst = std::max(worst, verify::rel_error(marginal_loglik(x, f, h),
                                                verify::dense_marginal_loglik(x, f, h.sigma2, h.c)));
    }
    rows.push_back({"marginal vs dense Gaussian", worst <= 1e-10, "max rel err " + sci(worst)});
  }
  {
    int above = 0, optimal = 0, mismatched = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
      HyperParams h;
      h.K = 2 + static_cast<int>(rng.uniform_index(9));
      h.M = 5;
      h.D = 6;
      h.L_max = h.K;
      h.sigma2 = 0.05 + 0.5 * rng.uniform();
      h.c = 1e15;
      const ModelState m = make_model(h, {8}, Activation::kTanh, rng);
      BetaPosteriorBank bank{Vector(h.K), Vector(h.K)};
      for (int k = 0; k < h.K; ++k) bank.a[k] = 0.05 + 5 * rng.uniform(), bank.b[k] = 0.05 + 5 * rng.uniform();
      Vector x(h.D);
      for (int d = 0; d < h.D; ++d) x[d] = rng.normal();
      const ActiveMask mask = ActiveMask::all(h.K);
      const SparseCode g = greedy_sparse_code(x, m, bank, mask);
      const SparseCode e = exhaustive_sparse_code(x, m, bank, mask, 10);
      const SparseCode b = verify::brute_force_code(x, m, bank, mask);
      above += g.score > e.score;
      optimal += g.score == e.score;
      mismatched += e.z != b.z;
    }
    rows.push_back({"greedy <= exhaustive", above == 0,
                    std::to_string(optimal) + "/" + std::to_string(trials) + " greedy optimal"});
    rows.push_back({"exhaustive vs brute force", mismatched == 0,
                    std::to_string(mismatched) + " disagreements"});
  }

  bool all = true;
  for (const auto& r : rows) {
    std::printf("%-28s %s  %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL", r.detail.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse coding with a Beta-process prior and a multiplexer network"};
  app.require_subcommand(1);
  Flags flags;
  std::map<std::string, std::function<int(const RunConfig&)>> commands{
      {"train", cmd_train},         {"encode", cmd_encode},   {"reconstruct", cmd_reconstruct},
      {"sample", cmd_sample},       {"inspect", cmd_inspect}, {"gradcheck", cmd_gradcheck},
      {"oracle", cmd_oracle}};
  const std::map<std::string, std::string> help{
      {"train", "fit a model to data, writing metrics, checkpoints and figure data"},
      {"encode", "sparse codes for every datum under a checkpoint"},
      {"reconstruct", "reconstructions of data from their sparse codes"},
      {"sample", "draw a synthetic dataset from a checkpoint or a fresh model"},
      {"inspect", "E[pi] table, top-bit table and factor sharing for a checkpoint"},
      {"gradcheck", "compare analytic and finite-difference gradients"},
      {"oracle", "check coding and conjugate updates against brute-force oracles"}};
  for (const auto& [name, fn] : commands) add_config_flags(app.add_subcommand(name, help.at(name)), flags);

  CLI11_PARSE(app, argc, argv);
  try {
    const RunConfig cfg = resolve(flags);
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) return fn(cfg);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
