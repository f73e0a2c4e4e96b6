#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "morphopt_cli_tests";

std::string path_of(const char* name) { return (kRoot / name).string(); }

int run_cli(const std::string& args, const std::string& log_name) {
  const std::string cmd =
      std::string(MORPHOPT_CLI_PATH) + " " + args + " > " + path_of(log_name.c_str()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("cli end-to-end workflows and exit codes") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);

  SUBCASE("gen-toy writes a dataset and a run manifest") {
    const std::string out = path_of("toy1");
    CHECK(run_cli("gen-toy --n 1 --nx 6 --ny 8 --out " + out, "gen1.log") == 0);
    const json manifest = read_json(out + "/manifest.json");
    CHECK(manifest.at("samples").size() == 1);
    CHECK(manifest.at("beta").size() == 1);
    CHECK(manifest.at("beta")[0].get<double>() == 0.0);
    CHECK(fs::exists(out + "/reference.mesh"));
    CHECK(fs::exists(out + "/field_000.field"));

    const json run = read_json(out + "/run_manifest.json");
    CHECK(run.at("command").get<std::string>() == "gen-toy");
    CHECK(run.at("config_hash").get<std::string>().size() == 16);
    CHECK(run.at("versions").contains("morphopt"));
    CHECK(run.at("versions").contains("eigen"));
    CHECK(run.at("wall_time_seconds").get<double>() >= 0.0);
  }

  SUBCASE("unknown config keys are rejected by name with exit code 2") {
    const std::string cfg = path_of("bad.json");
    write_text(cfg, R"({"r": 1, "bogus_knob": 2})");
    CHECK(run_cli("gen-toy --config " + cfg + " --out " + path_of("bad_out"), "bad.log") == 2);
    CHECK(slurp(path_of("bad.log")).find("bogus_knob") != std::string::npos);

    write_text(cfg, "{ not json");
    CHECK(run_cli("gen-toy --config " + cfg + " --out " + path_of("bad_out"), "bad2.log") == 2);
  }

  SUBCASE("optimize, pod, and checkpoint-resume on a tiny dataset") {
    const std::string data = path_of("data");
    REQUIRE(run_cli("gen-toy --n 3 --nx 6 --ny 8 --beta-min -0.2 --beta-max 0.2 --out " + data,
                    "gen3.log") == 0);

    const std::string cfg = path_of("opt.json");
    write_text(cfg, std::string(R"({"dataset_dir": ")") + data +
                        R"(", "r": 1, "step": 2.5, "c1": 0.005,
                            "penalty": "neo_hookean", "max_iters": 4,
                            "rel_tol": 0.0, "checkpoint_interval": 2})");
    const std::string out = path_of("opt_out");
    CHECK(run_cli("optimize --config " + cfg + " --out " + out, "opt.log") == 0);

    const std::string trace = slurp(out + "/trace.csv");
    CHECK(trace.rfind("iter,J,I,c1,c2,min_area,max_normal_violation,step\n", 0) == 0);
    const json report = read_json(out + "/report.json");
    CHECK(report.at("final_j").get<double>() > 0.0);
    CHECK(report.at("iterations").get<int>() == 4);
    CHECK(report.at("non_bijective_morphings").get<int>() == 0);
    CHECK(fs::exists(out + "/morphing_002.field"));
    const json run = read_json(out + "/run_manifest.json");
    CHECK(run.at("command").get<std::string>() == "optimize");
    CHECK(run.at("config").at("r").get<int>() == 1);

    // Eigenvalue-decay report on the optimized morphings.
    const std::string pod_out = path_of("pod_out");
    CHECK(run_cli("pod --config " + cfg + " --morphings " + out + " --out " + pod_out,
                  "pod.log") == 0);
    const json pod_report = read_json(pod_out + "/report.json");
    CHECK(pod_report.at("morphed_efficiency").get<double>() >=
          pod_report.at("raw_efficiency").get<double>() - 1e-12);
    CHECK(slurp(pod_out + "/decay.csv")
              .rfind("k,raw_fraction,raw_cumulative,morphed_fraction,morphed_cumulative\n",
                     0) == 0);

    // Resume requires --resume; with it, the run picks up and finishes.
    CHECK(run_cli("checkpoint-resume --config " + cfg + " --out " + path_of("resume_out"),
                  "resume_missing.log") == 2);
    CHECK(fs::exists(out + "/checkpoints/latest.chk"));
    CHECK(run_cli("checkpoint-resume --config " + cfg + " --resume " + out +
                      "/checkpoints/latest.chk --out " + path_of("resume_out"),
                  "resume.log") == 0);
    CHECK(slurp(path_of("resume.log")).find("resumed from iteration") != std::string::npos);
  }

  SUBCASE("pod rejects r above the snapshot count with exit code 2") {
    const std::string data = path_of("data_r");
    REQUIRE(run_cli("gen-toy --n 3 --nx 6 --ny 8 --out " + data, "genr.log") == 0);
    const std::string cfg = path_of("big_r.json");
    write_text(cfg, std::string(R"({"dataset_dir": ")") + data + R"(", "r": 5})");
    CHECK(run_cli("pod --config " + cfg + " --out " + path_of("pod_r"), "podr.log") == 2);
    CHECK(slurp(path_of("podr.log")).find("exceeds") != std::string::npos);
  }

  SUBCASE("train then predict; predict without a bundle fails cleanly") {
    CHECK(run_cli("predict --bundle " + path_of("no_bundle") + " --mu 0.1",
                  "predict_missing.log") == 2);

    const std::string data = path_of("data_train");
    REQUIRE(run_cli("gen-toy --n 4 --nx 6 --ny 8 --beta-min -0.2 --beta-max 0.2 --out " + data,
                    "gent.log") == 0);
    const std::string cfg = path_of("train.json");
    write_text(cfg, std::string(R"({"dataset_dir": ")") + data +
                        R"(", "r": 1, "step": 2.5, "c1": 0.005,
                            "penalty": "neo_hookean", "max_iters": 10,
                            "rel_tol": 0.001})");
    const std::string out = path_of("train_out");
    CHECK(run_cli("train --config " + cfg + " --out " + out, "train.log") == 0);
    const json report = read_json(out + "/report.json");
    CHECK(report.at("r").get<int>() == 1);
    CHECK(fs::exists(out + "/bundle/gp.json"));

    const std::string pred_out = path_of("pred_out");
    CHECK(run_cli("predict --bundle " + out + "/bundle --mu 0.05 --out " + pred_out,
                  "pred.log") == 0);
    CHECK(fs::exists(pred_out + "/prediction.field"));

    // Split evaluation over one held-out sample.
    CHECK(run_cli("eval --config " + cfg + " --split 1 --out " + path_of("eval_out"),
                  "eval.log") == 0);
    const json eval_report = read_json(path_of("eval_out") + "/eval.json");
    CHECK(eval_report.at("mode").get<std::string>() == "split");
    CHECK(eval_report.at("rel_l2").size() == 1);
  }
}
