#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sane/common.hpp"
#include "sane/graph.hpp"
#include "sane/search.hpp"

namespace sane {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

namespace detail {

template <class... Parts>
[[noreturn]] inline void config_fail(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ConfigError(os.str());
}

inline void check_keys(const nlohmann::json& obj, const std::string& pointer,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    config_fail("config: expected an object at ", pointer.empty() ? "/" : pointer);
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* name : allowed) ok = ok || key == name;
    if (!ok) config_fail("config: unknown key at ", pointer, "/", key);
  }
}

template <class T>
inline T get_or(const nlohmann::json& obj, const char* key, T fallback,
                const std::string& pointer) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const std::exception&) {
    config_fail("config: bad value at ", pointer, "/", key);
  }
}

}  // namespace detail

struct SynthConfig {
  std::size_t num_nodes = 300;
  std::size_t num_classes = 3;
  std::size_t feat_dim = 16;
  double p_in = 0.05;
  double p_out = 0.005;
  std::uint64_t seed = 7;
};

struct DataConfig {
  std::string bundle_path;  // empty: generate the synthetic graph
  SynthConfig synth;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 1;
};

struct TrainerConfig {
  int trials = 50;
  int repeats = 5;
  int epochs = 600;
  int patience = 30;
};

struct BaselineConfig {
  int budget = 200;
  int epochs = 200;
  int patience = 30;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/out";
  int workers = 0;  // 0: hardware concurrency
  DataConfig data;
  SearchConfig search;
  int search_runs = 5;
  TrainerConfig trainer;
  BaselineConfig baseline;

  static RunConfig parse(const nlohmann::json& j) {
    detail::check_keys(j, "", {"seed", "output_dir", "workers", "data",
                               "search", "trainer", "baseline"});
    RunConfig c;
    c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed, "");
    c.output_dir =
        detail::get_or<std::string>(j, "output_dir", c.output_dir, "");
    c.workers = detail::get_or<int>(j, "workers", c.workers, "");

    if (!j.contains("data"))
      detail::config_fail("config: missing section /data");
    {
      const auto& d = j.at("data");
      detail::check_keys(d, "/data", {"bundle_path", "synth", "split"});
      c.data.bundle_path =
          detail::get_or<std::string>(d, "bundle_path", "", "/data");
      if (d.contains("synth")) {
        const auto& s = d.at("synth");
        detail::check_keys(s, "/data/synth",
                           {"num_nodes", "num_classes", "feat_dim", "p_in",
                            "p_out", "seed"});
        auto& sc = c.data.synth;
        sc.num_nodes = detail::get_or<std::size_t>(s, "num_nodes",
                                                   sc.num_nodes, "/data/synth");
        sc.num_classes = detail::get_or<std::size_t>(
            s, "num_classes", sc.num_classes, "/data/synth");
        sc.feat_dim = detail::get_or<std::size_t>(s, "feat_dim", sc.feat_dim,
                                                  "/data/synth");
        sc.p_in = detail::get_or<double>(s, "p_in", sc.p_in, "/data/synth");
        sc.p_out = detail::get_or<double>(s, "p_out", sc.p_out, "/data/synth");
        sc.seed = detail::get_or<std::uint64_t>(s, "seed", sc.seed,
                                                "/data/synth");
      }
      if (d.contains("split")) {
        const auto& s = d.at("split");
        detail::check_keys(s, "/data/split", {"fractions", "seed"});
        if (s.contains("fractions")) {
          const auto fr = s.at("fractions").get<std::vector<double>>();
          if (fr.size() != 3)
            detail::config_fail(
                "config: /data/split/fractions needs 3 entries");
          c.data.fractions = {fr[0], fr[1], fr[2]};
        }
        c.data.split_seed = detail::get_or<std::uint64_t>(
            s, "seed", c.data.split_seed, "/data/split");
      }
    }

    if (j.contains("search")) {
      const auto& s = j.at("search");
      detail::check_keys(s, "/search",
                         {"epochs", "lr_w", "weight_decay_w", "lr_alpha",
                          "weight_decay_alpha", "epsilon", "K", "hidden",
                          "heads", "dropout", "runs"});
      auto& sc = c.search;
      sc.epochs = detail::get_or<int>(s, "epochs", sc.epochs, "/search");
      sc.lr_w = detail::get_or<double>(s, "lr_w", sc.lr_w, "/search");
      sc.weight_decay_w = detail::get_or<double>(s, "weight_decay_w",
                                                 sc.weight_decay_w, "/search");
      sc.lr_alpha =
          detail::get_or<double>(s, "lr_alpha", sc.lr_alpha, "/search");
      sc.weight_decay_alpha = detail::get_or<double>(
          s, "weight_decay_alpha", sc.weight_decay_alpha, "/search");
      sc.epsilon = detail::get_or<double>(s, "epsilon", sc.epsilon, "/search");
      sc.k_layers = detail::get_or<int>(s, "K", sc.k_layers, "/search");
      sc.hidden = detail::get_or<int>(s, "hidden", sc.hidden, "/search");
      sc.heads = detail::get_or<int>(s, "heads", sc.heads, "/search");
      sc.dropout = detail::get_or<double>(s, "dropout", sc.dropout, "/search");
      c.search_runs = detail::get_or<int>(s, "runs", c.search_runs, "/search");
      try {
        sc.validate();
        if (c.search_runs < 1)
          detail::config_fail("config: /search/runs must be >= 1");
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        detail::config_fail("config: /search invalid: ", e.what());
      }
    }

    if (j.contains("trainer")) {
      const auto& t = j.at("trainer");
      detail::check_keys(t, "/trainer",
                         {"trials", "repeats", "epochs", "patience"});
      c.trainer.trials =
          detail::get_or<int>(t, "trials", c.trainer.trials, "/trainer");
      c.trainer.repeats =
          detail::get_or<int>(t, "repeats", c.trainer.repeats, "/trainer");
      c.trainer.epochs =
          detail::get_or<int>(t, "epochs", c.trainer.epochs, "/trainer");
      c.trainer.patience =
          detail::get_or<int>(t, "patience", c.trainer.patience, "/trainer");
    }

    if (j.contains("baseline")) {
      const auto& b = j.at("baseline");
      detail::check_keys(b, "/baseline", {"budget", "epochs", "patience"});
      c.baseline.budget =
          detail::get_or<int>(b, "budget", c.baseline.budget, "/baseline");
      c.baseline.epochs =
          detail::get_or<int>(b, "epochs", c.baseline.epochs, "/baseline");
      c.baseline.patience =
          detail::get_or<int>(b, "patience", c.baseline.patience, "/baseline");
    }
    return c;
  }

  // Fully expanded view written beside every run's outputs.
  nlohmann::ordered_json resolved() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["workers"] = workers;
    j["data"]["bundle_path"] = data.bundle_path;
    j["data"]["synth"]["num_nodes"] = data.synth.num_nodes;
    j["data"]["synth"]["num_classes"] = data.synth.num_classes;
    j["data"]["synth"]["feat_dim"] = data.synth.feat_dim;
    j["data"]["synth"]["p_in"] = data.synth.p_in;
    j["data"]["synth"]["p_out"] = data.synth.p_out;
    j["data"]["synth"]["seed"] = data.synth.seed;
    j["data"]["split"]["fractions"] = data.fractions;
    j["data"]["split"]["seed"] = data.split_seed;
    j["search"]["epochs"] = search.epochs;
    j["search"]["lr_w"] = search.lr_w;
    j["search"]["weight_decay_w"] = search.weight_decay_w;
    j["search"]["lr_alpha"] = search.lr_alpha;
    j["search"]["weight_decay_alpha"] = search.weight_decay_alpha;
    j["search"]["epsilon"] = search.epsilon;
    j["search"]["K"] = search.k_layers;
    j["search"]["hidden"] = search.hidden;
    j["search"]["heads"] = search.heads;
    j["search"]["dropout"] = search.dropout;
    j["search"]["runs"] = search_runs;
    j["trainer"]["trials"] = trainer.trials;
    j["trainer"]["repeats"] = trainer.repeats;
    j["trainer"]["epochs"] = trainer.epochs;
    j["trainer"]["patience"] = trainer.patience;
    j["baseline"]["budget"] = baseline.budget;
    j["baseline"]["epochs"] = baseline.epochs;
    j["baseline"]["patience"] = baseline.patience;
    return j;
  }
};

// "a.b.c=value" flat overrides applied to the raw JSON before parsing.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    detail::config_fail("config: --set expects key.path=value, got '",
                        assignment, "'");
  std::string pointer = "/" + assignment.substr(0, eq);
  for (auto& ch : pointer)
    if (ch == '.') ch = '/';
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (...) {
    value = raw;  // plain string
  }
  try {
    j[nlohmann::json::json_pointer(pointer)] = value;
  } catch (const std::exception& e) {
    detail::config_fail("config: cannot apply --set at ", pointer, ": ",
                        e.what());
  }
}

/// Graph named by the data section: a bundle when bundle_path is set,
/// the planted synthetic otherwise. A graph without stored masks gets the
/// configured split.
inline Graph load_graph(const DataConfig& d) {
  Graph g = d.bundle_path.empty()
                ? synth_planted(d.synth.num_nodes, d.synth.num_classes,
                                d.synth.feat_dim, d.synth.p_in, d.synth.p_out,
                                d.synth.seed)
                : load_bundle(d.bundle_path);
  if (!g.has_masks()) g = make_splits(g, d.fractions, d.split_seed);
  return g;
}

}  // namespace sane
