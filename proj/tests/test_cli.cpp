#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string stdout_text;
  std::string stderr_text;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunOutput run_cli(const std::string& args, const std::string& tag) {
  const fs::path out = fs::temp_directory_path() / ("cli_out_" + tag);
  const fs::path err = fs::temp_directory_path() / ("cli_err_" + tag);
  const std::string cmd = std::string(SANE_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunOutput r;
  r.exit_code = WEXITSTATUS(status);
  r.stdout_text = slurp(out);
  r.stderr_text = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("sane_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_tiny_config(const fs::path& dir, int epochs = 3, int runs = 2) {
  nlohmann::json j;
  j["seed"] = 7;
  j["output_dir"] = (dir / "out").string();
  j["data"]["synth"] = {{"num_nodes", 60}, {"num_classes", 3},
                        {"feat_dim", 8},  {"p_in", 0.1},
                        {"p_out", 0.01},  {"seed", 3}};
  j["search"] = {{"epochs", epochs}, {"K", 2}, {"hidden", 8},
                 {"heads", 2},       {"runs", runs}};
  j["trainer"] = {{"trials", 2}, {"repeats", 2}, {"epochs", 15},
                  {"patience", 5}};
  j["baseline"] = {{"budget", 3}, {"epochs", 10}, {"patience", 5}};
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << j.dump(2);
  return path;
}

}  // namespace

TEST_CASE("enumerate prints the space size") {
  const RunOutput r = run_cli("enumerate 3", "enum3");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text == "31944\n");

  CHECK(run_cli("enumerate 1", "enum1").stdout_text == "66\n");
  CHECK(run_cli("enumerate 0", "enum0").exit_code == 2);
}

TEST_CASE("config errors exit with code 2") {
  const auto dir = fresh_dir("badcfg");
  {
    std::ofstream out(dir / "config.json");
    out << R"({"search": {"epochs": 5}})";  // no data section
  }
  const RunOutput r =
      run_cli("search --config " + (dir / "config.json").string(), "nodata");
  CHECK(r.exit_code == 2);
  CHECK(r.stderr_text.find("/data") != std::string::npos);

  const RunOutput miss = run_cli("search --config /nonexistent.json", "miss");
  CHECK(miss.exit_code == 2);
}

TEST_CASE("search command writes its outputs and is byte-deterministic") {
  const auto dir = fresh_dir("search");
  const auto cfg = write_tiny_config(dir);
  const RunOutput r = run_cli("search --config " + cfg.string(), "search1");
  INFO(r.stderr_text);
  REQUIRE(r.exit_code == 0);

  const fs::path out = dir / "out";
  for (const char* name :
       {"genotype.json", "genotype_run0.json", "genotype_run1.json",
        "history.csv", "supernet.json", "supernet.bin",
        "resolved_config.json", "summary.json"}) {
    INFO(name);
    CHECK(fs::exists(out / name));
  }

  // history row count equals the epoch budget
  std::istringstream hist(slurp(out / "history.csv"));
  std::string line;
  int rows = -1;  // header
  while (std::getline(hist, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);

  const auto resolved =
      nlohmann::json::parse(slurp(out / "resolved_config.json"));
  CHECK(resolved.contains("version"));
  CHECK(resolved["search"]["epochs"] == 3);

  const auto genotype = nlohmann::json::parse(slurp(out / "genotype.json"));
  CHECK(genotype.contains("node_ops"));
  CHECK(genotype["provenance"].contains("dataset_hash"));

  // identical config and seed: byte-identical genotype.json
  const std::string first = slurp(out / "genotype.json");
  const RunOutput again = run_cli("search --config " + cfg.string() +
                                      " --set output_dir=" +
                                      (dir / "out2").string(),
                                  "search2");
  REQUIRE(again.exit_code == 0);
  CHECK(slurp(dir / "out2" / "genotype.json") == first);
}

TEST_CASE("retrain command") {
  const auto dir = fresh_dir("retrain");
  const auto cfg = write_tiny_config(dir);

  SECTION("unknown op names exit 3 and list the legal names") {
    const fs::path bad = dir / "bad_genotype.json";
    {
      std::ofstream out(bad);
      out << R"({"node_ops":["GAT-FOO","GCN"],"skip_ops":["IDENTITY","ZERO"],"layer_op":"MAX"})";
    }
    const RunOutput r = run_cli("retrain --config " + cfg.string() +
                                    " --genotype " + bad.string(),
                                "badgeno");
    CHECK(r.exit_code == 3);
    CHECK(r.stderr_text.find("GAT-FOO") != std::string::npos);
    CHECK(r.stderr_text.find("SAGE-SUM") != std::string::npos);
  }
  SECTION("report has the configured repeats and mean within range") {
    const fs::path geno = dir / "genotype.json";
    {
      std::ofstream out(geno);
      out << R"({"node_ops":["GCN","GCN"],"skip_ops":["IDENTITY","IDENTITY"],"layer_op":"CONCAT"})";
    }
    const RunOutput r = run_cli("retrain --config " + cfg.string() +
                                    " --genotype " + geno.string(),
                                "retrain_ok");
    INFO(r.stderr_text);
    REQUIRE(r.exit_code == 0);
    const auto rep =
        nlohmann::json::parse(slurp(dir / "out" / "eval_report.json"));
    CHECK(rep["values"].size() == 2);
    CHECK(rep["repeats"] == 2);
    double lo = 1e9, hi = -1e9;
    for (double v : rep["values"]) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = rep["mean"].get<double>();
    CHECK(mean >= lo);
    CHECK(mean <= hi);
    CHECK(rep.contains("best_hyperparams"));
  }
}

TEST_CASE("baseline commands") {
  const auto dir = fresh_dir("baseline");
  const auto cfg = write_tiny_config(dir, 2, 1);

  SECTION("random baseline writes a row per trial") {
    const RunOutput r = run_cli("baseline --kind random --config " +
                                    cfg.string(),
                                "random");
    INFO(r.stderr_text);
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(dir / "out" / "results.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "trial_index,genotype_json,val_metric,test_metric,seconds");
    int rows = 0;
    while (std::getline(csv, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 3);
    CHECK(fs::exists(dir / "out" / "best_report.json"));
  }
  SECTION("unknown kind exits 3 naming the legal kinds") {
    const RunOutput r = run_cli("baseline --kind bayesian --config " +
                                    cfg.string(),
                                "unknown");
    CHECK(r.exit_code == 3);
    CHECK(r.stderr_text.find("random, mlp, epsilon") != std::string::npos);
  }
  SECTION("epsilon ablation emits one row per grid point") {
    const RunOutput r = run_cli("baseline --kind epsilon --config " +
                                    cfg.string(),
                                "epsilon");
    INFO(r.stderr_text);
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(dir / "out" / "epsilon.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "epsilon,mean_test,std_test,seconds");
    int rows = 0;
    std::string first_col;
    while (std::getline(csv, line))
      if (!line.empty()) {
        ++rows;
        if (rows == 1) first_col = line.substr(0, line.find(','));
      }
    CHECK(rows == 5);
    CHECK(first_col == "0");
  }
  SECTION("k-sweep emits K = 1..6") {
    const RunOutput r = run_cli("baseline --kind epsilon --k-sweep --config " +
                                    cfg.string() + " --set output_dir=" +
                                    (dir / "ksweep").string(),
                                "ksweep");
    INFO(r.stderr_text);
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(slurp(dir / "ksweep" / "ksweep.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 6);
  }
}
