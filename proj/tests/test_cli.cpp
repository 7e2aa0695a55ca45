#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "cmde/serialize.hpp"

using namespace cmde;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "cmde_test_cli";

std::string binary() {
  const char* bin = std::getenv("CMDE_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "CMDE_BIN must point at the cmde-cli executable");
  return bin;
}

fs::path write_config(const std::string& name, const Json& doc) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  write_json_file(p.string(), doc);
  return p;
}

int run_cli(const std::string& command, const fs::path& config, const fs::path& out,
            const std::string& extra = "") {
  const std::string line = "CMDE_LOG=error '" + binary() + "' " + command + " --config '" +
                           config.string() + "' --out '" + out.string() + "' " + extra +
                           " 2>/dev/null";
  const int status = std::system(line.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string header_of(const fs::path& csv) {
  const std::string text = read_text_file(csv.string());
  return text.substr(0, text.find('\n'));
}

std::size_t line_count(const fs::path& csv) {
  const std::string text = read_text_file(csv.string());
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("gen writes the synthetic dataset and its resolved config") {
  const fs::path out = kRoot / "gen";
  fs::remove_all(out);
  REQUIRE(run_cli("gen", write_config("gen.json", Json{{"seed", 1}}), out) == 0);
  const fs::path csv = out / "data.csv";
  CHECK(line_count(csv) == 3001);
  CHECK(header_of(csv).rfind("x_0,t,y,y0,y1,mu0,mu1", 0) == 0);
  const Json resolved = read_json_file((out / "resolved_config.json").string());
  CHECK(resolved.at("command") == "gen");
  CHECK(resolved.at("n") == 3000);
  CHECK(resolved.at("seed") == 1);

  // Replaying the resolved config reproduces the output bitwise.
  const fs::path replay = kRoot / "gen_replay";
  REQUIRE(run_cli("gen", out / "resolved_config.json", replay) == 0);
  CHECK(read_text_file(csv.string()) == read_text_file((replay / "data.csv").string()));

  // The seed flag overrides the config and is recorded.
  const fs::path other = kRoot / "gen_seed";
  REQUIRE(run_cli("gen", out / "resolved_config.json", other, "--seed 9") == 0);
  CHECK(read_json_file((other / "resolved_config.json").string()).at("seed") == 9);
  CHECK(read_text_file(csv.string()) != read_text_file((other / "data.csv").string()));
}

TEST_CASE("eval on perfect predictions reports zero pehe") {
  const fs::path data_dir = kRoot / "eval_data";
  REQUIRE(run_cli("gen", write_config("gen_small.json", Json{{"seed", 2}, {"n", 200}}), data_dir) == 0);
  const std::string data = (data_dir / "data.csv").string();

  // Predictions file holding the true means.
  const std::string text = read_text_file(data);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::string pred = "x,mean0,mean1\n";
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    pred += cells[0] + "," + cells[5] + "," + cells[6] + "\n";
  }
  const fs::path pred_path = kRoot / "perfect.csv";
  write_text_file(pred_path.string(), pred);

  const fs::path out = kRoot / "eval";
  const Json cfg{{"dataset", data}, {"predictions", pred_path.string()},
                 {"metrics", {"pehe", "ate_error"}}};
  REQUIRE(run_cli("eval", write_config("eval.json", cfg), out) == 0);
  const Json reports = read_json_file((out / "metrics.json").string());
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].at("metric") == "pehe");
  CHECK(reports[0].at("value") == 0.0);
  CHECK(reports[1].at("value") == 0.0);
  CHECK(fs::exists(out / "metrics.csv"));
}

TEST_CASE("unknown activation is a config error naming the field") {
  const fs::path out = kRoot / "bad_activation";
  fs::remove_all(out);
  const Json cfg{{"dataset", "unused.csv"}, {"architectures", {{{"activation", "gelu"}}}}};
  CHECK(run_cli("train", write_config("bad_activation.json", cfg), out) == 2);
  const Json err = read_json_file((out / "error.json").string());
  CHECK(err.at("error") == "ConfigError");
  CHECK(err.at("field") == "architectures[0].activation");
  CHECK(err.at("exit_code") == 2);
}

TEST_CASE("schema problems exit 2, runtime failures exit 3") {
  CHECK(run_cli("train", write_config("typo.json", Json{{"dataset", "x.csv"}, {"epochz", 3}}),
                kRoot / "typo") == 2);
  CHECK(read_json_file((kRoot / "typo" / "error.json").string()).at("field") == "epochz");
  CHECK(run_cli("train", write_config("missing.json", Json::object()), kRoot / "missing") == 2);
  CHECK(run_cli("train", kRoot / "does_not_exist.json", kRoot / "noconfig") == 2);

  const fs::path out = kRoot / "runtime";
  CHECK(run_cli("predict",
                write_config("predict_missing.json",
                             Json{{"checkpoint", (kRoot / "nope.json").string()},
                                  {"queries", {{"source", "range"}}}}),
                out) == 3);
  const Json err = read_json_file((out / "error.json").string());
  CHECK(err.at("error") == "IoError");
  CHECK(fs::exists(out / "resolved_config.json"));
}

TEST_CASE("train, predict and gp-fit produce their artifacts") {
  const fs::path data_dir = kRoot / "pipeline_data";
  REQUIRE(run_cli("gen", write_config("gen_pipe.json", Json{{"seed", 3}, {"n", 120}}), data_dir) == 0);
  const std::string data = (data_dir / "data.csv").string();

  const fs::path train_dir = kRoot / "pipeline_train";
  const Json train_cfg{{"dataset", data},
                       {"members", 2},
                       {"architectures", {{{"hidden_widths", {16}}}}},
                       {"training", {{"epochs", 2}}}};
  REQUIRE(run_cli("train", write_config("train.json", train_cfg), train_dir) == 0);
  CHECK(line_count(train_dir / "training_report.csv") == 3);
  CHECK(fs::exists(train_dir / "checkpoint.json"));

  const fs::path pred_dir = kRoot / "pipeline_predict";
  const Json pred_cfg{{"checkpoint", (train_dir / "checkpoint.json").string()},
                      {"queries", {{"source", "range"}, {"min", -1}, {"max", 1}, {"count", 5}}}};
  REQUIRE(run_cli("predict", write_config("predict.json", pred_cfg), pred_dir) == 0);
  CHECK(header_of(pred_dir / "predictions.csv") == "x,mean0,mean1,cate,sd0,sd1,cate_sd");
  CHECK(line_count(pred_dir / "predictions.csv") == 6);

  const fs::path gp_dir = kRoot / "pipeline_gp";
  REQUIRE(run_cli("gp-fit", write_config("gp.json", Json{{"dataset", data}}), gp_dir) == 0);
  CHECK(header_of(gp_dir / "oracle_predictions.csv") == "x,mean0,mean1,cate,sd0,sd1,cate_sd");
  CHECK(line_count(gp_dir / "oracle_predictions.csv") == 121);
}
