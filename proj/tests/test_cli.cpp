#include "doctest.h"

#include "webnn/cli.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace webnn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = WEBNN_DATA_DIR;
const std::string kCsv = kData + "/titanic/train.csv";
const std::string kImages = kData + "/mnist/images-idx3-ubyte";
const std::string kLabels = kData + "/mnist/labels-idx1-ubyte";

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "webnn_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir.parent_path());
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

std::string field(const std::string& row, std::size_t index) {
    std::istringstream in(row);
    std::string cell;
    for (std::size_t i = 0; i <= index; ++i) {
        std::getline(in, cell, ',');
    }
    return cell;
}

std::string printed(const std::string& out, const std::string& key) {
    for (const auto& line : lines(out)) {
        if (line.rfind(key + ": ", 0) == 0) {
            return line.substr(key.size() + 2);
        }
    }
    return "";
}

} // namespace

TEST_CASE("usage errors") {
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({}).code == kExitConfig);
    CHECK(run({"train"}).code == kExitConfig);
    CHECK(run({"train", "cats", "--out", "x"}).code == kExitConfig);
    CHECK(run({"bench", "--q", "1"}).code == kExitConfig);
    CHECK(run({"train", "titanic", "--train", kCsv, "--q", "5", "--out",
               fresh_dir("bad_q").string()})
              .code == kExitConfig);
    CHECK(run({"train", "titanic", "--train", kCsv, "--sched-gamma", "1.5", "--out",
               fresh_dir("bad_gamma").string()})
              .code == kExitConfig);
    CHECK(run({"train", "titanic", "--train", "/nonexistent/train.csv", "--out",
               fresh_dir("missing").string()})
              .code == kExitMissingInput);
    CHECK(run({"eval", "--checkpoint", "/nonexistent.wnn", "--train", kCsv}).code ==
          kExitMissingInput);
}

TEST_CASE("titanic run directory, determinism, eval and history") {
    const fs::path a = fresh_dir("titanic_a");
    const fs::path b = fresh_dir("titanic_b");
    const std::vector<std::string> common = {"train", "titanic", "--train", kCsv, "--seed", "42",
                                             "--epochs", "4"};
    auto args_a = common;
    args_a.insert(args_a.end(), {"--out", a.string()});
    auto args_b = common;
    args_b.insert(args_b.end(), {"--out", b.string()});
    REQUIRE(run(args_a).code == kExitOk);
    REQUIRE(run(args_b).code == kExitOk);

    const std::string metrics = slurp(a / "metrics.csv");
    CHECK(metrics == slurp(b / "metrics.csv"));
    CHECK(metrics.find('\r') == std::string::npos);
    const auto rows = lines(metrics);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "epoch,lr,train_loss,train_acc,val_loss,val_acc");
    CHECK(field(rows[3], 1) == "0.00810000");

    const json resolved = json::parse(slurp(a / "resolved-config.json"));
    CHECK(resolved["seed"] == 42);
    CHECK(resolved["train"]["epochs"] == 4);
    CHECK(resolved["train"]["batch_size"] == 64);
    CHECK(resolved["train"]["lr"] == 0.01);
    CHECK(resolved["train"]["weight_decay"] == 0.001);
    CHECK(resolved["train"]["scheduler_gamma"] == 0.9);
    CHECK(resolved["web"]["Q"] == 15);
    CHECK(resolved["web"]["T"] == 30);
    CHECK(resolved["data"]["val_samples"] == 178);
    CHECK(fs::exists(a / "checkpoint-best.wnn"));
    CHECK(fs::exists(a / "checkpoint-final.wnn"));

    const std::string checkpoint = (a / "checkpoint-final.wnn").string();
    const fs::path eval_json = a / "eval.json";
    const Result ev = run({"eval", "--checkpoint", checkpoint, "--train", kCsv, "--json",
                           eval_json.string()});
    REQUIRE(ev.code == kExitOk);
    CHECK(printed(ev.out, "accuracy") == field(rows[4], 5));
    CHECK(printed(ev.out, "loss") == field(rows[4], 4));
    CHECK(printed(ev.out, "accuracy").size() == 6); // 0.xxxx

    const fs::path history_path = a / "history_cli.json";
    REQUIRE(run({"history", "--checkpoint", checkpoint, "--train", kCsv, "--out",
                 history_path.string()})
                .code == kExitOk);
    const json history = json::parse(slurp(history_path));
    const json evaluated = json::parse(slurp(eval_json));
    CHECK(history["T"] == 30);
    CHECK(history["O"] == 1);
    REQUIRE(history["samples"].size() == 178);
    for (std::size_t i = 0; i < history["samples"].size(); ++i) {
        const json& s = history["samples"][i];
        CHECK(s["outputs"].size() == 30);
        CHECK(s["outputs"][0].size() == 1);
        CHECK(s["trace"].size() == 30);
        for (int t : s["trace"]) {
            CHECK((t == 0 || t == 1));
        }
        CHECK(s["trace"][29] == evaluated["predictions"][i]);
        CHECK(s["label"] == evaluated["labels"][i]);
    }
    CHECK(slurp(a / "history.json") == slurp(history_path));

    const std::string bytes = slurp(checkpoint);
    const fs::path truncated = a / "truncated.wnn";
    std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK(run({"eval", "--checkpoint", truncated.string(), "--train", kCsv}).code ==
          kExitBadCheckpoint);
    const fs::path garbage = a / "garbage.wnn";
    std::ofstream(garbage, std::ios::binary) << "not a checkpoint at all";
    CHECK(run({"history", "--checkpoint", garbage.string(), "--train", kCsv, "--out",
               (a / "h.json").string()})
              .code == kExitBadCheckpoint);
}

TEST_CASE("small mnist run") {
    const fs::path dir = fresh_dir("mnist");
    REQUIRE(run({"train", "mnist", "--preset", "desk", "--images", kImages, "--labels", kLabels,
                 "--limit", "300", "--epochs", "1", "--timesteps", "3", "--out", dir.string()})
                .code == kExitOk);
    const auto rows = lines(slurp(dir / "metrics.csv"));
    REQUIRE(rows.size() == 2);
    const json resolved = json::parse(slurp(dir / "resolved-config.json"));
    CHECK(resolved["mnist"]["web"]["Q"] == 100);
    CHECK(resolved["mnist"]["web"]["T"] == 3);
    CHECK(resolved["train"]["batch_size"] == 128);
    CHECK(resolved["train"]["lr"] == 0.001);
    CHECK(resolved["data"]["val_samples"] == 60);

    const std::string checkpoint = (dir / "checkpoint-final.wnn").string();
    const Result ev = run({"eval", "--checkpoint", checkpoint, "--images", kImages, "--labels",
                           kLabels, "--json", (dir / "eval.json").string()});
    REQUIRE(ev.code == kExitOk);
    CHECK(printed(ev.out, "accuracy") == field(rows[1], 5));

    const json history = json::parse(slurp(dir / "history.json"));
    const json evaluated = json::parse(slurp(dir / "eval.json"));
    CHECK(history["T"] == 3);
    CHECK(history["O"] == 10);
    for (std::size_t i = 0; i < history["samples"].size(); ++i) {
        CHECK(history["samples"][i]["outputs"][2].size() == 10);
        CHECK(history["samples"][i]["trace"][2] == evaluated["predictions"][i]);
    }
}

TEST_CASE("bench writes its report") {
    const fs::path dir = fresh_dir("bench");
    fs::create_directories(dir);
    const fs::path report = dir / "bench.json";
    const Result r = run({"bench", "--q", "12", "--batch", "3", "--timesteps", "2", "--iters", "1",
                          "--json", report.string()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("ratio") != std::string::npos);
    const json j = json::parse(slurp(report));
    CHECK(j["q"] == 12);
    CHECK(j["batch"] == 3);
    CHECK(j["timesteps"] == 2);
    CHECK(j["iters"] == 1);
    CHECK(j["naive_ms"].get<double>() >= 0.0);
    CHECK(j["vectorized_ms"].get<double>() >= 0.0);
    CHECK(j["ratio"].get<double>() >= 0.0);
}
