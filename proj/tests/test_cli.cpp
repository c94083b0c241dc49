#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "acopf/datagen.hpp"
#include "acopf/neural.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string data_path(const std::string& name) {
    return std::string(ACOPF_DATA_DIR) + "/" + name;
}

const fs::path& scratch_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() /
                     ("acopf-cli-tests-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct RunResult {
    int code = -1;
    std::string out, err;
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    fs::path base = scratch_dir() / ("run" + std::to_string(counter++));
    fs::path so = base.string() + ".out";
    fs::path se = base.string() + ".err";
    std::string cmd = std::string(ACOPF_CLI_PATH) + " " + args + " >" +
                      so.string() + " 2>" + se.string();
    int rc = std::system(cmd.c_str());
    RunResult r;
    if (WIFEXITED(rc)) r.code = WEXITSTATUS(rc);
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

fs::path write_file(const std::string& name, const std::string& text) {
    fs::path p = scratch_dir() / name;
    std::ofstream f(p, std::ios::binary);
    f << text;
    return p;
}

fs::path write_config(const std::string& name, json extra) {
    json j;
    j["version"] = 1;
    j["case"] = data_path("case30.m");
    j["perturbation"] = 0.1;
    j["n_target"] = 6;
    j["seed"] = 5;
    j.update(extra);
    return write_file(name, j.dump(2));
}

}  // namespace

TEST_CASE("validate prints a case summary") {
    RunResult r = run_cli("validate " + data_path("case30.m"));
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["case"] == "case30");
    CHECK(j["buses"] == 30);
    CHECK(j["generators"] == 6);
    CHECK(j["branches"] == 41);
    CHECK(r.err.find("ok") != std::string::npos);
}

TEST_CASE("validate reports malformed cases on stderr") {
    fs::path bad = write_file("dup.m",
                              "function mpc = dup\n"
                              "mpc.version = '2';\n"
                              "mpc.baseMVA = 100;\n"
                              "mpc.bus = [\n"
                              "\t1\t3\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.05\t0.95;\n"
                              "\t1\t1\t10\t2\t0\t0\t1\t1\t0\t135\t1\t1.05\t0.95;\n"
                              "];\n"
                              "mpc.gen = [\n"
                              "\t1\t0\t0\t50\t-50\t1\t100\t1\t100\t0;\n"
                              "];\n"
                              "mpc.branch = [\n"
                              "\t1\t1\t0.02\t0.06\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n"
                              "];\n"
                              "mpc.gencost = [\n"
                              "\t2\t0\t0\t2\t2\t0;\n"
                              "];\n");
    RunResult r = run_cli("validate " + bad.string());
    CHECK(r.code == 1);
    CHECK(r.err.find("duplicate bus id 1") != std::string::npos);
}

TEST_CASE("solve runs a power flow by default") {
    RunResult r = run_cli("solve " + data_path("case30.m"));
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["mode"] == "pf");
    CHECK(j["converged"] == true);
    CHECK(j["iterations"].get<int>() <= 10);
    CHECK(j["max_mismatch"].get<double>() <= 1e-8);
    CHECK(j["v_mag"].size() == 30);
}

TEST_CASE("solve runs the interior point in opf mode") {
    RunResult r = run_cli("solve " + data_path("case30.m") + " --mode opf");
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["mode"] == "opf");
    CHECK(j["converged"] == true);
    CHECK(j["objective"].get<double>() > 0.0);
    CHECK(j["kkt_residual"].get<double>() < 1e-6);
    CHECK(j["p_gen"].size() == 6);
    CHECK(j["active_set"].get<std::string>().size() == 72);
}

TEST_CASE("usage errors exit with code two") {
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
    RunResult r = run_cli("solve --frobnicate " + data_path("case30.m"));
    CHECK(r.code == 2);
    CHECK(r.err.find("[usage]") != std::string::npos);

    RunResult bench = run_cli("bench-warmstart --config whatever.json");
    CHECK(bench.code == 2);
    CHECK(bench.err.find("--model or") != std::string::npos);
}

TEST_CASE("missing inputs exit with code two") {
    CHECK(run_cli("solve /nonexistent/case.m").code == 2);
    CHECK(run_cli("report /nonexistent/report.json").code == 2);
    RunResult r = run_cli("generate --config /nonexistent/config.json");
    CHECK(r.code == 2);
    CHECK(r.err.find("/nonexistent/config.json") != std::string::npos);
}

TEST_CASE("help requests succeed") {
    RunResult top = run_cli("--help");
    CHECK(top.code == 0);
    CHECK(top.out.find("bench-warmstart") != std::string::npos);
    CHECK(run_cli("solve --help").code == 0);
}

TEST_CASE("config files are gated on their version field") {
    fs::path cfg = write_file("v2.json",
                              json{{"version", 2},
                                   {"case", data_path("case30.m")}}
                                  .dump());
    RunResult r = run_cli("generate --config " + cfg.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("version") != std::string::npos);
}

TEST_CASE("generate writes a loadable dataset and repeats byte for byte") {
    fs::path dir_a = scratch_dir() / "ds-a";
    fs::path dir_b = scratch_dir() / "ds-b";
    fs::path cfg = write_config("gen.json", {{"dataset", dir_a.string()}});

    RunResult first = run_cli("generate --config " + cfg.string());
    REQUIRE(first.code == 0);
    json j = json::parse(first.out);
    CHECK(j["solved"] == 6);
    CHECK(j["dataset"] == dir_a.string());

    acopf::Dataset ds = acopf::load_dataset(dir_a.string());
    CHECK(ds.samples.size() == 6);
    CHECK(ds.manifest.case_name == "case30");

    RunResult second = run_cli("generate --config " + cfg.string() + " --out " +
                               dir_b.string() + " --threads 1");
    REQUIRE(second.code == 0);
    CHECK(slurp(dir_a / "manifest.json") == slurp(dir_b / "manifest.json"));
    CHECK(slurp(dir_a / "samples.csv") == slurp(dir_b / "samples.csv"));
}

TEST_CASE("train writes reports and the best model for both tasks") {
    fs::path dir = scratch_dir() / "ds-train";
    fs::path out = scratch_dir() / "train-out";
    json grid = {{"hidden", json::array({json::array({8})})},
                 {"activations", json::array({"relu"})},
                 {"penalty", json::array({false})}};
    fs::path cfg = write_config(
        "train.json",
        {{"dataset", dir.string()},
         {"out", out.string()},
         {"n_target", 24},
         {"grid", grid},
         {"seeds", json::array({1})},
         {"train", {{"max_epochs", 30}, {"batch_size", 16}}}});
    REQUIRE(run_cli("generate --config " + cfg.string()).code == 0);

    RunResult e2e = run_cli("train --config " + cfg.string() + " --task e2e");
    INFO(e2e.err);
    REQUIRE(e2e.code == 0);
    CHECK(fs::exists(out / "report-case30-e2e-seeds1.json"));
    CHECK(fs::exists(out / "report-case30-e2e-seeds1.csv"));
    acopf::nn::MlpModel best =
        acopf::nn::load_model((out / "model-case30-e2e-best.json").string());
    CHECK(best.config.output_dim == 10);

    RunResult con =
        run_cli("train --config " + cfg.string() + " --task constraints");
    INFO(con.err);
    REQUIRE(con.code == 0);
    json rep = json::parse(
        slurp(out / "report-case30-constraints-seeds1.json"));
    CHECK(rep["task"] == "constraints");
    CHECK(fs::exists(out / "model-case30-constraints-best.json"));
}

TEST_CASE("bench-warmstart consumes oracle labels and feeds report") {
    fs::path dir = scratch_dir() / "ds-train";  // reuse the train dataset
    fs::path out = scratch_dir() / "bench-out";
    fs::path cfg = write_config("bench.json", {{"dataset", dir.string()},
                                               {"out", out.string()}});
    if (!fs::exists(dir / "manifest.json"))
        REQUIRE(run_cli("generate --config " + cfg.string()).code == 0);
    RunResult r = run_cli("bench-warmstart --config " + cfg.string() +
                          " --oracle-labels --limit 4");
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.err.find("paired=4") != std::string::npos);

    fs::path rep_path = out / "report-case30-warmstart-seed5.json";
    REQUIRE(fs::exists(rep_path));
    json rep = json::parse(slurp(rep_path));
    CHECK(rep["task"] == "warmstart");
    CHECK(rep["paired"] == 4);
    CHECK(rep["instances"].size() == 4);

    fs::path csv = scratch_dir() / "summary.csv";
    RunResult view = run_cli("report " + rep_path.string() + " --csv " +
                             csv.string());
    REQUIRE(view.code == 0);
    CHECK(view.out.find("task: warmstart") != std::string::npos);
    CHECK(view.out.find("instances: 4") != std::string::npos);
    CHECK(slurp(csv).rfind("key,value\n", 0) == 0);
}
