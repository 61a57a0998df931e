#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* cli_path() { return LMN_CLI_PATH; }

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lmn_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& log_dir) {
    const std::string cmd = std::string(cli_path()) + " " + args + " > " +
                            (log_dir / "stdout.log").string() + " 2> " +
                            (log_dir / "stderr.log").string();
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -2;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "missing file: ", path.string());
    return json::parse(in);
}

void write_config(const fs::path& path, const json& cfg) {
    std::ofstream out(path);
    out << cfg.dump(1);
}

json delayed_copy_config() {
    json cfg;
    cfg["dataset"]["synthetic"] = {{"kind", "delayed-copy"}, {"dim", 6},   {"train", 6},
                                   {"valid", 2},             {"test", 2},  {"length", 12},
                                   {"delay", 2},             {"pattern_pool", 4}, {"seed", 3}};
    cfg["model"] = {{"kind", "lmn-b"}, {"f", 8}, {"m", 8}};
    cfg["train"] = {{"learning_rate", 0.01}, {"max_epochs", 4}, {"patience", 4}};
    return cfg;
}

// CSV body without the elapsed-seconds column, which is timing noise.
std::vector<std::string> history_rows_without_timing(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto last_comma = line.rfind(',');
        rows.push_back(line.substr(0, last_comma));
    }
    return rows;
}

}  // namespace

TEST_CASE("train runs end to end and leaves the full artifact set") {
    const fs::path dir = fresh_dir("train_basic");
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, delayed_copy_config());

    const int rc = run_cli("train --config " + cfg_path.string() + " --out " +
                               (dir / "out").string() + " --seed 11",
                           dir);
    REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));

    for (const char* name : {"manifest.json", "checkpoint.json", "history.csv", "metrics.json"})
        CHECK_MESSAGE(fs::exists(dir / "out" / name), name);

    const json manifest = read_json(dir / "out" / "manifest.json");
    CHECK(manifest["command"] == "train");
    CHECK(manifest["seed"] == 11);
    CHECK(manifest["format_version"] == 1);
    CHECK(manifest["config"].contains("dataset"));

    const json metrics = read_json(dir / "out" / "metrics.json");
    CHECK(metrics["model"] == "lmn-b");
    CHECK(metrics["epochs"].get<int>() >= 1);
    CHECK(metrics["epochs"].get<int>() <= 4);
    CHECK(metrics["parameter_count"].get<int>() > 0);
    for (const char* split : {"train", "valid", "test"}) {
        const double acc = metrics["accuracy"][split].get<double>();
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }

    const json ckpt = read_json(dir / "out" / "checkpoint.json");
    CHECK(ckpt["arch"] == "lmn");
    CHECK(ckpt["variant"] == "B");
}

TEST_CASE("identical seeds give identical runs") {
    const fs::path dir = fresh_dir("train_determinism");
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, delayed_copy_config());

    for (const char* out : {"a", "b"}) {
        const int rc = run_cli("train --config " + cfg_path.string() + " --out " +
                                   (dir / out).string() + " --seed 21",
                               dir);
        REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));
    }
    CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
    CHECK(slurp(dir / "a" / "checkpoint.json") == slurp(dir / "b" / "checkpoint.json"));
    const auto ra = history_rows_without_timing(dir / "a" / "history.csv");
    const auto rb = history_rows_without_timing(dir / "b" / "history.csv");
    REQUIRE(ra.size() == rb.size());
    CHECK(ra == rb);
}

TEST_CASE("config overrides reach the training loop") {
    const fs::path dir = fresh_dir("train_override");
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, delayed_copy_config());

    const int rc = run_cli("train --config " + cfg_path.string() + " --out " +
                               (dir / "out").string() + " --seed 1 --set train.max_epochs=1",
                           dir);
    REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));
    const json metrics = read_json(dir / "out" / "metrics.json");
    CHECK(metrics["epochs"] == 1);
    const json manifest = read_json(dir / "out" / "manifest.json");
    CHECK(manifest["config"]["train"]["max_epochs"] == 1);
}

TEST_CASE("a saved model evaluates to its recorded validation accuracy") {
    const fs::path dir = fresh_dir("eval_roundtrip");
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, delayed_copy_config());

    REQUIRE(run_cli("train --config " + cfg_path.string() + " --out " + (dir / "t").string() +
                        " --seed 31",
                    dir) == 0);
    REQUIRE(run_cli("eval --checkpoint " + (dir / "t" / "checkpoint.json").string() +
                        " --config " + cfg_path.string() + " --out " + (dir / "e").string() +
                        " --seed 31",
                    dir) == 0);

    const json train_metrics = read_json(dir / "t" / "metrics.json");
    const json eval_metrics = read_json(dir / "e" / "metrics.json");
    CHECK(eval_metrics["arch"] == "lmn");
    CHECK(eval_metrics.contains("recurrent_parameter_count"));
    const double recorded = train_metrics["best_val_accuracy"].get<double>();
    const double evaluated = eval_metrics["accuracy"]["valid"].get<double>();
    CHECK(std::abs(recorded - evaluated) < 1e-12);

    // Evaluating twice gives identical numbers.
    REQUIRE(run_cli("eval --checkpoint " + (dir / "t" / "checkpoint.json").string() +
                        " --config " + cfg_path.string() + " --out " + (dir / "e2").string() +
                        " --seed 31",
                    dir) == 0);
    CHECK(slurp(dir / "e" / "metrics.json") == slurp(dir / "e2" / "metrics.json"));
}

TEST_CASE("autoencoder sweep reports both error curves") {
    const fs::path dir = fresh_dir("fit_ae");
    json cfg;
    cfg["dataset"]["synthetic"] = {{"kind", "random-binary"}, {"dim", 5}, {"train", 4},
                                   {"valid", 1},              {"test", 1}, {"length", 6},
                                   {"density", 0.4},          {"seed", 8}};
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, cfg);

    const int rc = run_cli("fit-ae --config " + cfg_path.string() + " --out " +
                               (dir / "out").string() + " --seed 2",
                           dir);
    REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));

    std::ifstream report(dir / "out" / "fit_ae_report.csv");
    REQUIRE(report.good());
    std::string line;
    std::getline(report, line);
    CHECK(line == "p,svd_error,la_error");
    std::vector<std::size_t> ps;
    std::vector<double> svd_errors, la_errors;
    while (std::getline(report, line)) {
        std::size_t p;
        double svd_e, la_e;
        char comma;
        std::istringstream row(line);
        row >> p >> comma >> svd_e >> comma >> la_e;
        ps.push_back(p);
        svd_errors.push_back(svd_e);
        la_errors.push_back(la_e);
    }
    REQUIRE(ps.size() >= 2);
    for (std::size_t i = 1; i < ps.size(); ++i) {
        CHECK(ps[i] > ps[i - 1]);
        CHECK(svd_errors[i] <= svd_errors[i - 1] + 1e-12);
    }
    CHECK(la_errors.back() < 1e-8);
    CHECK(svd_errors.back() < 1e-8);

    // The saved autoencoder loads back through eval and reports its
    // reconstruction errors; the train split it was fitted on is exact.
    const int erc = run_cli("eval --checkpoint " + (dir / "out" / "checkpoint.json").string() +
                                " --config " + cfg_path.string() + " --out " +
                                (dir / "e").string() + " --seed 2",
                            dir);
    REQUIRE_MESSAGE(erc == 0, slurp(dir / "stderr.log"));
    const json metrics = read_json(dir / "e" / "metrics.json");
    CHECK(metrics["arch"] == "seqae");
    CHECK(metrics["reconstruction_error"]["train"].get<double>() < 1e-8);
    CHECK(metrics["reconstruction_error"]["valid"].get<double>() >= 0.0);
}

TEST_CASE("pretraining emits diagnostics, a profile, and a loadable checkpoint") {
    const fs::path dir = fresh_dir("pretrain");
    json cfg = delayed_copy_config();
    cfg["pretrain"] = {{"k", 2}, {"hidden", 6}, {"selu_hidden", false}};
    cfg["train"]["max_epochs"] = 2;
    cfg["train"]["patience"] = 2;
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, cfg);

    const int rc = run_cli("pretrain --config " + cfg_path.string() + " --out " +
                               (dir / "out").string() + " --seed 5",
                           dir);
    REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));

    for (const char* name : {"manifest.json", "checkpoint.json", "unfolded_history.csv",
                             "diagnostics.json", "recon_profile.csv", "metrics.json"})
        CHECK_MESSAGE(fs::exists(dir / "out" / name), name);

    const json diag = read_json(dir / "out" / "diagnostics.json");
    for (const char* key : {"ae_rank", "ae_total_error", "max_hidden_diff", "max_output_diff",
                            "per_timestep_error_profile"})
        CHECK_MESSAGE(diag.contains(key), key);
    CHECK(diag["ae_rank"].get<int>() >= 1);
    CHECK(diag["max_hidden_diff"].get<double>() < 1e-6);
    CHECK(diag["max_output_diff"].get<double>() < 1e-6);

    // Profile rows sum to the reported total error.
    std::ifstream profile(dir / "out" / "recon_profile.csv");
    std::string line;
    std::getline(profile, line);
    CHECK(line == "timestep,error");
    double sum = 0.0;
    std::size_t rows = 0;
    while (std::getline(profile, line)) {
        const auto comma = line.find(',');
        sum += std::stod(line.substr(comma + 1));
        ++rows;
    }
    CHECK(rows == diag["per_timestep_error_profile"].size());
    const double total = diag["ae_total_error"].get<double>();
    CHECK(std::abs(sum - total) <= 1e-9 * (1.0 + total));

    const json ckpt = read_json(dir / "out" / "checkpoint.json");
    CHECK(ckpt["arch"] == "lmn");
}

TEST_CASE("fine-tuning lifts the transferred model on the delayed-copy task") {
    const fs::path dir = fresh_dir("pretrain_finetune");
    json cfg = delayed_copy_config();
    cfg["dataset"]["synthetic"]["length"] = 24;
    cfg["dataset"]["synthetic"]["train"] = 8;
    // A capped memory keeps the transfer lossy and the fine-tune problem
    // small, so the extra training budget shows up as a clear gap.
    cfg["pretrain"] = {
        {"k", 2}, {"hidden", 6}, {"p_mem", 8}, {"selu_hidden", false}, {"fine_tune", true}};
    cfg["train"] = {{"learning_rate", 0.01}, {"max_epochs", 40}, {"patience", 40}};
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, cfg);

    const int rc = run_cli("pretrain --config " + cfg_path.string() + " --out " +
                               (dir / "out").string() + " --seed 7",
                           dir);
    REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));

    CHECK(fs::exists(dir / "out" / "fine_tuned_checkpoint.json"));
    CHECK(fs::exists(dir / "out" / "fine_tune_history.csv"));
    const json metrics = read_json(dir / "out" / "metrics.json");
    const double before = metrics["accuracy"]["valid"].get<double>();
    const double after = metrics["fine_tuned_accuracy"]["valid"].get<double>();
    CHECK(after > before + 0.2);
}

TEST_CASE("the size sweep writes one row per grid point and reruns identically") {
    const fs::path dir = fresh_dir("sweep");
    json cfg = delayed_copy_config();
    cfg["train"]["max_epochs"] = 2;
    cfg["train"]["patience"] = 2;
    cfg["sweep"] = {{"model", "lmn-b"},
                    {"pairs", json::array({json::array({3, 3}), json::array({3, 5})})},
                    {"l2_grid", json::array({0.0, 1e-5})}};
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, cfg);

    for (const char* out : {"a", "b"}) {
        const int rc = run_cli("sweep --config " + cfg_path.string() + " --out " +
                                   (dir / out).string() + " --seed 13",
                               dir);
        REQUIRE_MESSAGE(rc == 0, slurp(dir / "stderr.log"));
    }

    std::ifstream report(dir / "a" / "sweep.csv");
    std::string line;
    std::getline(report, line);
    CHECK(line == "model,size,f,m,l2,val_accuracy,best_epoch");
    std::size_t rows = 0;
    while (std::getline(report, line)) {
        ++rows;
        CHECK(line.substr(0, 6) == "lmn-b,");
        if (rows <= 2) CHECK(line.find(",6,3,3,") != std::string::npos);
        if (rows > 2) CHECK(line.find(",8,3,5,") != std::string::npos);
    }
    CHECK(rows == 4);
    CHECK(slurp(dir / "a" / "sweep.csv") == slurp(dir / "b" / "sweep.csv"));
}

TEST_CASE("configuration mistakes exit with the config error code") {
    const fs::path dir = fresh_dir("errors");
    const fs::path cfg_path = dir / "config.json";
    write_config(cfg_path, delayed_copy_config());

    CHECK(run_cli("train --config " + cfg_path.string() + " --out " + (dir / "o1").string() +
                      " --set model.kind=transformer",
                  dir) == 2);

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run_cli("train --config " + (dir / "broken.json").string() + " --out " +
                      (dir / "o2").string(),
                  dir) == 2);

    CHECK(run_cli("eval --config " + cfg_path.string() + " --out " + (dir / "o3").string(),
                  dir) == 2);

    json no_data;
    no_data["model"] = {{"kind", "rnn"}};
    write_config(dir / "nodata.json", no_data);
    CHECK(run_cli("train --config " + (dir / "nodata.json").string() + " --out " +
                      (dir / "o4").string(),
                  dir) == 2);
}
