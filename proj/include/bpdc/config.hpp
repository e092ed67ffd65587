#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bpdc/dataset.hpp"
#include "bpdc/errors.hpp"
#include "bpdc/model.hpp"
#include "bpdc/trainer.hpp"

namespace bpdc {

/// Flat run configuration. Defaults are the reference MNIST setting:
/// alpha = gamma = 1, sigma = 10, c = 1e15, K = 75, a [K, 100, 100, M]
/// network with ADAM stepsize 1e-3, tau0 = 100, kappa = 0.6, batch 200,
/// 10000 iterations.
struct RunConfig {
  HyperParams hyper;
  TrainConfig train;
  bool L_max_set = false;
  std::vector<int> hidden{100, 100};
  Activation activation = Activation::kTanh;
  Scaling scaling = Scaling::kUnitInterval;
  std::string data;
  std::string labels;
  std::string checkpoint;
  std::string out = "out";
  std::string resume;
  long checkpoint_every = 0;  // 0: only the final checkpoint
  bool export_figures = true;
  int n_samples = 1000;
  double c_sample = 1.0;
  std::set<std::string> explicit_keys;  // keys given in a file or on the command line

  bool is_set(const std::string& key) const { return explicit_keys.count(key) != 0; }

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{
        "alpha",      "gamma",     "sigma2",          "c",          "K",
        "M",          "D",         "L_max",           "prune_threshold",
        "nonneg_dict", "hidden",   "activation",      "batch_size", "iters",
        "tau0",       "kappa",     "adam_stepsize",   "seed",       "log_every",
        "data",       "labels",    "checkpoint",      "out",        "resume",
        "scaling",    "checkpoint_every", "export_figures", "n_samples", "c_sample"};
    return k;
  }

  void set(const std::string& key, const std::string& value) {
    assign(key, value);
    explicit_keys.insert(key);
  }

  void assign(const std::string& key, const std::string& value) {
    if (key == "alpha") hyper.alpha = parse_real(key, value);
    else if (key == "gamma") hyper.gamma = parse_real(key, value);
    else if (key == "sigma2") hyper.sigma2 = parse_real(key, value);
    else if (key == "c") hyper.c = parse_real(key, value);
    else if (key == "K") hyper.K = static_cast<int>(parse_int(key, value));
    else if (key == "M") hyper.M = static_cast<int>(parse_int(key, value));
    else if (key == "D") hyper.D = static_cast<int>(parse_int(key, value));
    else if (key == "L_max") {
      hyper.L_max = static_cast<int>(parse_int(key, value));
      L_max_set = true;
    } else if (key == "prune_threshold") hyper.prune_threshold = parse_real(key, value);
    else if (key == "nonneg_dict") hyper.nonneg_dict = parse_bool(key, value);
    else if (key == "hidden") hidden = parse_int_list(key, value);
    else if (key == "activation") {
      try {
        activation = activation_from_string(value);
      } catch (const DomainError& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "batch_size") train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "iters") train.n_iters = parse_int(key, value);
    else if (key == "tau0") train.tau0 = parse_real(key, value);
    else if (key == "kappa") train.kappa = parse_real(key, value);
    else if (key == "adam_stepsize") train.adam_stepsize = parse_real(key, value);
    else if (key == "seed") train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "log_every") train.log_every = static_cast<int>(parse_int(key, value));
    else if (key == "data") data = value;
    else if (key == "labels") labels = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "out") out = value;
    else if (key == "resume") resume = value;
    else if (key == "scaling") scaling = scaling_from_string(value);
    else if (key == "checkpoint_every") checkpoint_every = parse_int(key, value);
    else if (key == "export_figures") export_figures = parse_bool(key, value);
    else if (key == "n_samples") n_samples = static_cast<int>(parse_int(key, value));
    else if (key == "c_sample") c_sample = parse_real(key, value);
    else throw ConfigError("unknown configuration key '" + key + "'");
  }

  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
      }
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }

  /// L_max defaults to K unless given explicitly.
  HyperParams resolved_hyper() const {
    HyperParams h = hyper;
    if (!L_max_set) h.L_max = h.K;
    return h;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double parse_real(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  static long parse_int(const std::string& key, const std::string& v) {
    long out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
  }

  static bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
  }

  static std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto comma = v.find(',', start);
      const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      out.push_back(static_cast<int>(parse_int(key, item)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }
};

}  // namespace bpdc
