#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli/run.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "spdcbell");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = spdcbell_cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("spdcbell_cli_test_" + std::to_string(std::hash<std::string>{}(
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)))));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& contents = {}) const {
    const auto p = path_ / name;
    if (!contents.empty()) std::ofstream(p) << contents;
    return p.string();
  }

 private:
  fs::path path_;
};

std::string read(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("simulate the default configuration") {
  const auto r = cli({"simulate"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 7);
  CHECK(l[0].rfind("# spdcbell simulate ", 0) == 0);
  CHECK(l[0].find("source.lambda1=0.62") != std::string::npos);
  CHECK(l[1].rfind("setting,theta_a,theta_b,correlator,p0,", 0) == 0);
  CHECK(l[2].rfind("11,", 0) == 0);
  CHECK(l[6] == "# S=2.29869752458");
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"simulate", "--no-such-flag"}).code == 2);
  CHECK(cli({"--eta", "1.5", "simulate"}).code == 2);
  CHECK(cli({"--lambda", "abc", "simulate"}).code == 2);
  CHECK(cli({"--format", "xml", "simulate"}).code == 2);
  CHECK(cli({"--jobs", "0", "simulate"}).code == 2);
  CHECK(cli({"estimate"}).code == 2);
  CHECK(cli({"compensate", "--counts", "/nonexistent/file.csv"}).code == 2);
  const auto r = cli({"--eta1", "0.5", "scan-lambda"});
  CHECK(r.code == 2);
  CHECK(r.err.find("common efficiency") != std::string::npos);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("angles accept multiples of pi") {
  const auto a = cli({"--a2", "pi/5", "--b1", "3pi/5", "--b2", "-3*pi/5", "simulate"});
  const auto b = cli({"simulate"});
  REQUIRE(a.code == 0);
  CHECK(lines(a.out).back() == lines(b.out).back());
}

TEST_CASE("config file and overrides") {
  TempDir dir;
  const auto cfg = dir.file("run.cfg",
                            "# reference system with loss\n"
                            "source.lambda = 0.3\n"
                            "detectors.eta = 0.9   # all four\n"
                            "detectors.nu = 1e-4\n");
  const auto base = cli({"--config", cfg, "simulate"});
  REQUIRE(base.code == 0);
  CHECK(lines(base.out)[0].find("source.lambda1=0.3 ") != std::string::npos);
  CHECK(lines(base.out)[0].find("detectors.eta4=0.9 ") != std::string::npos);

  const auto over = cli({"--config", cfg, "--lambda2", "0.5", "simulate"});
  REQUIRE(over.code == 0);
  CHECK(lines(over.out)[0].find("source.lambda2=0.5") != std::string::npos);
  CHECK(lines(over.out)[0].find("source.lambda1=0.3") != std::string::npos);

  CHECK(cli({"--config", dir.file("dup.cfg", "seed = 1\nseed = 2\n"), "simulate"}).code == 2);
  CHECK(cli({"--config", dir.file("unk.cfg", "colour = blue\n"), "simulate"}).code == 2);
  CHECK(cli({"--config", dir.file("bad.cfg", "no equals sign\n"), "simulate"}).code == 2);
  CHECK(cli({"--config", dir.file("missing.cfg"), "simulate"}).code == 2);
}

TEST_CASE("json output") {
  const auto r = cli({"--format", "json", "simulate"});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["command"] == "simulate");
  CHECK(doc["config"]["source.lambda1"] == "0.62");
  CHECK(doc["rows"].size() == 4);
  CHECK(doc["rows"][0]["setting"] == 11);
  CHECK(doc["summary"]["S"].get<double>() == doctest::Approx(2.298697524583571).epsilon(1e-11));
}

TEST_CASE("optimization output is deterministic") {
  const std::vector<std::string> args{"--restarts", "2", "--seed", "5", "optimize", "--at-lambda",
                                      "0.5"};
  const auto a = cli(args);
  const auto b = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(lines(a.out)[2].rfind("fixed-lambda,0.5,1,,", 0) == 0);

  const auto jobs = cli({"--restarts", "2", "--jobs", "2", "scan-lambda", "--lambda-min", "0.1",
                         "--lambda-max", "0.3", "--lambda-step", "0.1"});
  const auto serial = cli({"--restarts", "2", "scan-lambda", "--lambda-min", "0.1",
                           "--lambda-max", "0.3", "--lambda-step", "0.1"});
  REQUIRE(jobs.code == 0);
  CHECK(jobs.out == serial.out);
  const auto l = lines(serial.out);
  REQUIRE(l.size() == 7);
  CHECK(l[5].rfind("# best_lambda=0.3", 0) == 0);
}

TEST_CASE("scan-eta with several caps") {
  const auto r = cli({"--restarts", "2", "scan-eta", "--eta-min", "0.9", "--eta-max", "1",
                      "--eta-step", "0.1", "--lambda-cap", "0.01,inf"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 6);
  CHECK(l[1].rfind("eta,lambda_cap,S,", 0) == 0);
  CHECK(l[1].find(",ratio,error") != std::string::npos);
  CHECK(l[2].rfind("0.9,0.01,", 0) == 0);
  CHECK(l[5].rfind("1,inf,", 0) == 0);
}

TEST_CASE("failing scan rows exit with 1") {
  const auto r = cli({"--restarts", "1", "scan-lambda", "--lambda-min", "-0.1", "--lambda-max",
                      "0.1", "--lambda-step", "0.1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("scan row") != std::string::npos);
  CHECK(lines(r.out).size() == 7);  // three rows, two summary lines
}

TEST_CASE("estimate efficiencies from counts") {
  TempDir dir;
  // C12 = 525, S1 = 4115, S2 = 5010, N = 1e6
  const auto counts = dir.file("counts.csv",
                               "setting,pattern,count\n"
                               "11,0,990000\n"
                               "11,1,3590\n"
                               "11,2,4485\n"
                               "11,3,525\n"
                               "11,4,1400\n"
                               "total,1000000\n");
  const auto r = cli({"--format", "json", "estimate", "--counts", counts, "--pairs", "1:2"});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  REQUIRE(doc["rows"].size() == 2);
  CHECK(doc["rows"][0]["detector"] == 1);
  CHECK(doc["rows"][0]["eta"].get<double>() == doctest::Approx(0.1048).epsilon(1e-3));
  CHECK(doc["rows"][1]["eta"].get<double>() == doctest::Approx(0.1276).epsilon(1e-3));
  const double f = 4115e-6;
  CHECK(doc["rows"][0]["lambda"].get<double>() ==
        doctest::Approx(f / (525.0 / 5010.0 * (1 - f))).epsilon(1e-9));

  CHECK(cli({"estimate", "--counts", counts, "--setting", "12"}).code == 2);
  CHECK(cli({"estimate", "--counts", counts, "--pairs", "1:5"}).code == 2);
}

TEST_CASE("simulate counts, then compensate them") {
  TempDir dir;
  const auto counts = dir.file("sim.csv");
  const std::vector<std::string> common{"--lambda",   "0.02",     "--eta1", "0.1048",
                                        "--eta2",     "0.1276",   "--eta3", "0.1272",
                                        "--eta4",     "0.1186"};
  auto args = common;
  args.insert(args.end(), {"simulate", "--counts-out", counts, "--trials", "1000000000"});
  REQUIRE(cli(args).code == 0);
  const auto text = read(counts);
  CHECK(text.rfind("# spdcbell simulate counts", 0) == 0);
  CHECK(text.find("total,1000000000") != std::string::npos);

  args = common;
  args.insert(args.end(), {"--format", "json", "compensate", "--counts", counts, "--resamples",
                           "0"});
  const auto r = cli(args);
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["rows"].size() == 4);
  const double s = doc["summary"]["S_compensated"].get<double>();
  CHECK(s > doc["summary"]["S_raw"].get<double>());
  CHECK(s > 2.0);
  CHECK(doc["summary"]["outside_validity"] == 0);
  CHECK_FALSE(doc["summary"].contains("S_compensated_bootstrap_se"));

  args = common;
  args.insert(args.end(), {"--seed", "3", "compensate", "--counts", counts, "--resamples", "5"});
  const auto boot = cli(args);
  REQUIRE(boot.code == 0);
  CHECK(boot.out.find("# bootstrap_resamples=5") != std::string::npos);
  CHECK(cli(args).out == boot.out);
}

TEST_CASE("output file and note line") {
  TempDir dir;
  const auto out = dir.file("table.csv");
  const auto r = cli({"--out", out, "simulate"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "S=2.29869752458\n");
  CHECK(read(out) == cli({"simulate"}).out);
  CHECK(cli({"--out", "/nonexistent/dir/table.csv", "simulate"}).code == 2);
}

TEST_CASE("verify against the photon-number model") {
  const auto ok = cli({"--lambda", "0.1", "verify", "--configs", "2", "--cutoff", "20"});
  REQUIRE(ok.code == 0);
  const auto l = lines(ok.out);
  REQUIRE(l.size() == 7);
  CHECK(l[2].rfind("configured,0.1,0.1,", 0) == 0);
  CHECK(l.back() == "# failures=0");

  const auto strict =
      cli({"--lambda", "0.1", "verify", "--configs", "1", "--cutoff", "3", "--tolerance", "1e-12"});
  CHECK(strict.code == 1);
  CHECK(strict.err.find("differ") != std::string::npos);
}
