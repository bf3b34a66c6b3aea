#include "webnn/cli.hpp"

#include "webnn/checkpoint.hpp"
#include "webnn/data.hpp"
#include "webnn/models.hpp"
#include "webnn/ops.hpp"
#include "webnn/training.hpp"
#include "webnn/web_layer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace webnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadCheckpoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) {
        throw ValidationError(std::string("missing required flag for the ") + what);
    }
    if (!fs::is_regular_file(path)) {
        throw MissingInput(std::string(what) + " not found: " + path);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

struct DataFlags {
    std::string csv;
    std::string images;
    std::string labels;
    std::size_t limit = 0; // 0 = every sample
    std::string split = "val";
};

void add_data_flags(CLI::App* cmd, DataFlags& flags, bool with_split) {
    cmd->add_option("--train,--csv", flags.csv, "Titanic CSV (Kaggle layout)");
    cmd->add_option("--images", flags.images, "MNIST IDX image file");
    cmd->add_option("--labels", flags.labels, "MNIST IDX label file");
    cmd->add_option("--limit", flags.limit, "Use only the first N MNIST samples");
    if (with_split) {
        cmd->add_option("--split", flags.split, "Which samples to use")
            ->check(CLI::IsMember({"val", "train", "all"}));
    }
}

// Data loading --------------------------------------------------------------

std::vector<TitanicRecord> read_titanic(const DataFlags& flags) {
    require_file(flags.csv, "Titanic CSV");
    std::vector<TitanicRecord> records = load_titanic_csv(flags.csv);
    if (records.empty()) {
        throw ValidationError("Titanic CSV holds no records: " + flags.csv);
    }
    for (const auto& r : records) {
        if (!r.survived) {
            throw ValidationError("Titanic CSV needs a Survived label on every row");
        }
    }
    return records;
}

std::vector<TitanicRecord> pick(const std::vector<TitanicRecord>& records,
                                const std::vector<std::size_t>& indices) {
    std::vector<TitanicRecord> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(records[i]);
    }
    return out;
}

MnistSet read_mnist(const DataFlags& flags, std::size_t limit) {
    require_file(flags.images, "MNIST image file");
    require_file(flags.labels, "MNIST label file");
    MnistSet set = load_mnist_idx(flags.images, flags.labels);
    return limit > 0 ? set.head(limit) : set;
}

const std::vector<std::size_t>& choose(const SplitIndices& split, const std::string& which) {
    return which == "train" ? split.train : split.val;
}

// Model output helpers ------------------------------------------------------

/// (N,T,O) history of every sample, computed batch by batch without a graph.
template <template <typename> class Model>
Tensor<float> full_history(const Model<float>& model, const Dataset<float>& data,
                           std::size_t batch_size = 256) {
    NoGradGuard no_grad;
    std::vector<float> values;
    Shape shape;
    for (const Batch& indices : batches(data.size(), batch_size)) {
        const Tensor<float> h = model.history(gather(data, indices).inputs);
        shape = {data.size(), h.dim(1), h.dim(2)};
        values.insert(values.end(), h.data().begin(), h.data().end());
    }
    return Tensor<float>(std::move(shape), std::move(values));
}

json history_json(const Tensor<float>& history, const std::vector<int>& labels) {
    const std::size_t n = history.dim(0);
    const std::size_t t_count = history.dim(1);
    const std::size_t o_count = history.dim(2);
    const PredictionTrace trace = predict_history(history);
    auto values = history.data();
    json samples = json::array();
    for (std::size_t s = 0; s < n; ++s) {
        json outputs = json::array();
        json steps = json::array();
        for (std::size_t t = 0; t < t_count; ++t) {
            const float* row = values.data() + (s * t_count + t) * o_count;
            outputs.push_back(std::vector<float>(row, row + o_count));
            steps.push_back(trace.at(s, t));
        }
        samples.push_back({{"label", labels[s]}, {"outputs", outputs}, {"trace", steps}});
    }
    return json{{"T", t_count}, {"O", o_count}, {"samples", samples}};
}

// Checkpoints ---------------------------------------------------------------

struct LoadedCheckpoint {
    Checkpoint checkpoint;
    std::string task;
    double val_fraction = 0.2;
    std::uint64_t seed = 42;
    std::size_t limit = 0;
    std::optional<FeatureStats> stats;
};

LoadedCheckpoint read_checkpoint(const std::string& path) {
    require_file(path, "checkpoint");
    LoadedCheckpoint loaded;
    try {
        loaded.checkpoint = load_checkpoint(path);
        const json& config = loaded.checkpoint.config;
        loaded.task = config.at("task").get<std::string>();
        const json& data = config.at("data");
        loaded.val_fraction = data.at("val_fraction").get<double>();
        loaded.seed = config.at("seed").get<std::uint64_t>();
        loaded.limit = data.value("limit", std::size_t{0});
        if (loaded.task == "titanic") {
            loaded.stats = FeatureStats::from_json(config.at("feature_stats"));
        } else if (loaded.task != "mnist") {
            throw FormatError("unknown checkpoint task '" + loaded.task + "'");
        }
    } catch (const FormatError& e) {
        throw BadCheckpoint(path + ": " + e.what());
    } catch (const json::exception& e) {
        throw BadCheckpoint(path + ": checkpoint config is incomplete: " + e.what());
    }
    return loaded;
}

TitanicModel<float> titanic_from(const LoadedCheckpoint& loaded) {
    try {
        return titanic_model_from(loaded.checkpoint);
    } catch (const FormatError& e) {
        throw BadCheckpoint(e.what());
    }
}

MnistModel<float> mnist_from(const LoadedCheckpoint& loaded) {
    try {
        return mnist_model_from(loaded.checkpoint);
    } catch (const FormatError& e) {
        throw BadCheckpoint(e.what());
    }
}

/// The samples an eval or history command runs on, rebuilt the way training
/// split them.
Dataset<float> titanic_eval_set(const LoadedCheckpoint& loaded, const DataFlags& flags) {
    std::vector<TitanicRecord> records = read_titanic(flags);
    if (flags.split != "all") {
        const SplitIndices split = split_train_val(records.size(), loaded.val_fraction, loaded.seed);
        records = pick(records, choose(split, flags.split));
    }
    return titanic_dataset<float>(preprocess_titanic(records, loaded.stats));
}

Dataset<float> mnist_eval_set(const LoadedCheckpoint& loaded, const DataFlags& flags) {
    const MnistSet set = read_mnist(flags, flags.limit > 0 ? flags.limit : loaded.limit);
    Dataset<float> all = mnist_dataset<float>(set);
    if (flags.split == "all") {
        return all;
    }
    const SplitIndices split = split_train_val(set.count, loaded.val_fraction, loaded.seed);
    return gather(all, choose(split, flags.split));
}

// train ---------------------------------------------------------------------

struct TrainFlags {
    std::string task;
    std::string preset = "paper";
    std::size_t epochs = 0;
    std::size_t batch = 0;
    std::size_t q = 0;
    std::size_t timesteps = 0;
    double lr = 0.0;
    double wd = 0.0;
    double sched_gamma = 0.0;
    double clip = 0.0;
    std::uint64_t seed = 42;
    double val_fraction = 0.2;
    std::string out_dir;
    DataFlags data;
    // Which of the optional flags were given.
    bool has_epochs = false, has_batch = false, has_q = false, has_timesteps = false,
         has_lr = false, has_wd = false, has_sched = false, has_clip = false;
};

TrainConfig resolve_train_config(const TrainFlags& f) {
    TrainConfig c;
    if (f.task == "titanic") {
        c.epochs = 40;
        c.batch_size = 64;
        c.lr = 0.01;
        c.weight_decay = 0.001;
        c.scheduler_gamma = 0.9;
        c.loss = LossKind::bce;
    } else {
        c.epochs = 5;
        c.batch_size = 128;
        c.lr = 0.001;
        c.weight_decay = 0.01;
        c.scheduler_gamma = 1.0;
        c.loss = LossKind::cross_entropy;
    }
    if (f.has_epochs) c.epochs = f.epochs;
    if (f.has_batch) c.batch_size = f.batch;
    if (f.has_lr) c.lr = f.lr;
    if (f.has_wd) c.weight_decay = f.wd;
    if (f.has_sched) c.scheduler_gamma = f.sched_gamma;
    if (f.has_clip) c.clip_norm = f.clip;
    c.seed = f.seed;
    c.validate();
    return c;
}

json train_config_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"scheduler", "exponential"},
                {"scheduler_gamma", c.scheduler_gamma},
                {"scheduler_step", "epoch"},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"eps", c.eps},
                {"clip_norm", c.clip_norm ? json(*c.clip_norm) : json(nullptr)},
                {"loss", loss_name(c.loss)},
                {"shuffle", "seeded permutation per epoch"}};
}

std::string metrics_row(const EpochMetrics& m) {
    return std::to_string(m.epoch) + "," + fixed(m.lr, 8) + "," + fixed(m.train_loss, 6) + "," +
           fixed(m.train_accuracy, 4) + "," + fixed(m.val_loss, 6) + "," +
           fixed(m.val_accuracy, 4) + "\n";
}

template <template <typename> class Model>
void run_training(const Model<float>& model, const Dataset<float>& train,
                  const Dataset<float>& val, const TrainConfig& config, json resolved,
                  const fs::path& out_dir, std::ostream& out) {
    write_text(out_dir / "resolved-config.json", resolved.dump(2) + "\n");

    std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) {
        throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
    }
    metrics << "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";

    double best_accuracy = -1.0;
    fit(model, train, val, config, [&](const EpochMetrics& m) {
        metrics << metrics_row(m);
        metrics.flush();
        out << "epoch " << m.epoch << "/" << config.epochs << "  lr " << fixed(m.lr, 6)
            << "  train_loss " << fixed(m.train_loss, 4) << "  train_acc "
            << fixed(m.train_accuracy, 4) << "  val_loss " << fixed(m.val_loss, 4)
            << "  val_acc " << fixed(m.val_accuracy, 4) << std::endl;
        if (m.val_accuracy > best_accuracy) {
            best_accuracy = m.val_accuracy;
            json extra = resolved;
            extra["epoch"] = m.epoch;
            save_checkpoint(out_dir / "checkpoint-best.wnn", make_checkpoint(model, extra));
        }
    });
    json extra = resolved;
    extra["epoch"] = config.epochs;
    save_checkpoint(out_dir / "checkpoint-final.wnn", make_checkpoint(model, extra));

    const Tensor<float> history = full_history(model, val);
    write_text(out_dir / "history.json", history_json(history, val.labels).dump() + "\n");
    out << "wrote " << out_dir.string() << " (best val_acc " << fixed(best_accuracy, 4) << ")"
        << std::endl;
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
    const TrainConfig config = resolve_train_config(f);
    if (!(f.val_fraction > 0.0 && f.val_fraction < 1.0)) {
        throw ValidationError("--val-fraction must lie in (0,1)");
    }
    if (f.out_dir.empty()) {
        throw ValidationError("train needs --out DIR");
    }
    json resolved = {{"task", f.task},
                     {"preset", f.preset},
                     {"dtype", "f32"},
                     {"seed", f.seed},
                     {"train", train_config_json(config)}};

    if (f.task == "titanic") {
        if (f.preset != "paper") {
            throw ValidationError("titanic has only the paper preset");
        }
        const WebConfig base = TitanicModel<float>::paper_config();
        const WebConfig web(f.has_q ? f.q : base.neurons(), base.inputs(), base.outputs(),
                            f.has_timesteps ? f.timesteps : base.timesteps(), base.alpha());
        const std::vector<TitanicRecord> records = read_titanic(f.data);
        const SplitIndices split = split_train_val(records.size(), f.val_fraction, f.seed);
        const TitanicFeatures train_features = preprocess_titanic(pick(records, split.train));
        const TitanicFeatures val_features =
            preprocess_titanic(pick(records, split.val), train_features.stats);
        const Dataset<float> train = titanic_dataset<float>(train_features);
        const Dataset<float> val = titanic_dataset<float>(val_features);

        resolved["web"] = web_config_to_json(web);
        resolved["feature_stats"] = train_features.stats.to_json();
        resolved["data"] = {{"train", f.data.csv},
                            {"val_fraction", f.val_fraction},
                            {"split_seed", f.seed},
                            {"train_samples", train.size()},
                            {"val_samples", val.size()},
                            {"features", kTitanicFeatureNames}};
        fs::create_directories(f.out_dir);
        const TitanicModel<float> model(web, f.seed);
        run_training(model, train, val, config, resolved, f.out_dir, out);
        return kExitOk;
    }

    const MnistConfig base = f.preset == "desk" ? MnistConfig::desk() : MnistConfig::paper();
    const WebConfig& bw = base.web();
    const MnistConfig mnist(base.image_side(), base.convs(),
                            WebConfig(f.has_q ? f.q : bw.neurons(), bw.inputs(), bw.outputs(),
                                      f.has_timesteps ? f.timesteps : bw.timesteps(), bw.alpha()));
    const MnistSet set = read_mnist(f.data, f.data.limit);
    if (set.rows != mnist.image_side() || set.cols != mnist.image_side()) {
        throw ValidationError("MNIST images are " + std::to_string(set.rows) + "x" +
                              std::to_string(set.cols) + ", the model expects " +
                              std::to_string(mnist.image_side()) + "x" +
                              std::to_string(mnist.image_side()));
    }
    const SplitIndices split = split_train_val(set.count, f.val_fraction, f.seed);
    const Dataset<float> all = mnist_dataset<float>(set);
    const Dataset<float> train = gather(all, split.train);
    const Dataset<float> val = gather(all, split.val);

    resolved["mnist"] = mnist_config_to_json(mnist);
    resolved["data"] = {{"images", f.data.images},
                        {"labels", f.data.labels},
                        {"limit", f.data.limit},
                        {"val_fraction", f.val_fraction},
                        {"split_seed", f.seed},
                        {"train_samples", train.size()},
                        {"val_samples", val.size()}};
    fs::create_directories(f.out_dir);
    const MnistModel<float> model(mnist, f.seed);
    run_training(model, train, val, config, resolved, f.out_dir, out);
    return kExitOk;
}

// eval / history -------------------------------------------------------------

template <template <typename> class Model>
int eval_model(const Model<float>& model, const Dataset<float>& data, LossKind loss,
               const std::string& split, const std::string& json_path, std::ostream& out) {
    const SplitMetrics m = evaluate(model, data, loss);
    out << "split: " << split << " (" << data.size() << " samples)\n"
        << "loss: " << fixed(m.loss, 6) << "\n"
        << "accuracy: " << fixed(m.accuracy, 4) << std::endl;
    if (!json_path.empty()) {
        const std::vector<int> predictions = final_predictions(full_history(model, data));
        write_text(json_path, json{{"split", split},
                                   {"samples", data.size()},
                                   {"loss", m.loss},
                                   {"accuracy", m.accuracy},
                                   {"predictions", predictions},
                                   {"labels", data.labels}}
                                      .dump() +
                                  "\n");
    }
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const DataFlags& flags, const std::string& json_path,
             std::ostream& out) {
    const LoadedCheckpoint loaded = read_checkpoint(checkpoint);
    if (loaded.task == "titanic") {
        return eval_model(titanic_from(loaded), titanic_eval_set(loaded, flags), LossKind::bce,
                          flags.split, json_path, out);
    }
    return eval_model(mnist_from(loaded), mnist_eval_set(loaded, flags), LossKind::cross_entropy,
                      flags.split, json_path, out);
}

int cmd_history(const std::string& checkpoint, const DataFlags& flags,
                const std::string& out_path, std::ostream& out) {
    const LoadedCheckpoint loaded = read_checkpoint(checkpoint);
    Tensor<float> history;
    std::vector<int> labels;
    if (loaded.task == "titanic") {
        const Dataset<float> data = titanic_eval_set(loaded, flags);
        history = full_history(titanic_from(loaded), data);
        labels = data.labels;
    } else {
        const Dataset<float> data = mnist_eval_set(loaded, flags);
        history = full_history(mnist_from(loaded), data);
        labels = data.labels;
    }
    write_text(out_path, history_json(history, labels).dump() + "\n");
    out << "wrote " << out_path << " (" << labels.size() << " samples, T=" << history.dim(1)
        << ", O=" << history.dim(2) << ")" << std::endl;
    return kExitOk;
}

// bench -----------------------------------------------------------------------

int cmd_bench(std::size_t q, std::size_t batch, std::size_t timesteps, std::size_t iters,
              const std::string& json_path, std::ostream& out) {
    const WebConfig config(q, 1, 1, timesteps);
    const BenchReport r = bench_step(config, batch, iters);
    char line[256];
    std::snprintf(line, sizeof line, "%6s %6s %10s %6s %12s %15s %8s\n", "q", "batch",
                  "timesteps", "iters", "naive_ms", "vectorized_ms", "ratio");
    out << line;
    std::snprintf(line, sizeof line, "%6zu %6zu %10zu %6zu %12.4f %15.4f %8.2f\n", q, batch,
                  timesteps, iters, r.naive_ms, r.vectorized_ms, r.ratio);
    out << line;
    out << "max |naive - vectorized| = " << r.max_abs_diff << std::endl;
    write_text(json_path, json{{"q", q},
                               {"batch", batch},
                               {"timesteps", timesteps},
                               {"iters", iters},
                               {"naive_ms", r.naive_ms},
                               {"vectorized_ms", r.vectorized_ms},
                               {"ratio", r.ratio},
                               {"max_abs_diff", r.max_abs_diff}}
                                  .dump(2) +
                              "\n");
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Web neural network: training, evaluation, history and benchmarks", "webnn"};
    app.require_subcommand(1);

    TrainFlags train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
    train_cmd->add_option("task", train.task, "titanic or mnist")
        ->required()
        ->check(CLI::IsMember({"titanic", "mnist"}));
    train_cmd->add_option("--preset", train.preset, "Model preset")
        ->check(CLI::IsMember({"paper", "desk"}));
    CLI::Option* epochs = train_cmd->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
    CLI::Option* batch = train_cmd->add_option("--batch", train.batch)->check(CLI::PositiveNumber);
    CLI::Option* q = train_cmd->add_option("--q", train.q, "Neurons in the web layer");
    CLI::Option* timesteps = train_cmd->add_option("--timesteps", train.timesteps);
    CLI::Option* lr = train_cmd->add_option("--lr", train.lr);
    CLI::Option* wd = train_cmd->add_option("--wd", train.wd, "AdamW weight decay");
    CLI::Option* sched = train_cmd->add_option("--sched-gamma", train.sched_gamma);
    CLI::Option* clip = train_cmd->add_option("--clip", train.clip, "Gradient max-norm");
    train_cmd->add_option("--seed", train.seed);
    train_cmd->add_option("--val-fraction", train.val_fraction);
    train_cmd->add_option("--out", train.out_dir, "Run directory")->required();
    add_data_flags(train_cmd, train.data, false);

    std::string eval_checkpoint;
    std::string eval_json;
    DataFlags eval_data;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
    eval_cmd->add_option("--json", eval_json, "Also write metrics and predictions as JSON");
    add_data_flags(eval_cmd, eval_data, true);

    std::string history_checkpoint;
    std::string history_out;
    DataFlags history_data;
    CLI::App* history_cmd = app.add_subcommand("history", "Write per-timestep outputs and traces");
    history_cmd->add_option("--checkpoint", history_checkpoint)->required();
    history_cmd->add_option("--out", history_out)->required();
    add_data_flags(history_cmd, history_data, true);

    std::size_t bench_q = 100;
    std::size_t bench_batch = 64;
    std::size_t bench_timesteps = 5;
    std::size_t bench_iters = 10;
    std::string bench_json = "bench.json";
    CLI::App* bench_cmd = app.add_subcommand("bench", "Time naive against vectorized steps");
    bench_cmd->add_option("--q", bench_q)->check(CLI::Range(std::size_t{2}, std::size_t{4096}));
    bench_cmd->add_option("--batch", bench_batch)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--timesteps", bench_timesteps)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--iters", bench_iters)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--json", bench_json, "Report file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train_cmd) {
            train.has_epochs = epochs->count() > 0;
            train.has_batch = batch->count() > 0;
            train.has_q = q->count() > 0;
            train.has_timesteps = timesteps->count() > 0;
            train.has_lr = lr->count() > 0;
            train.has_wd = wd->count() > 0;
            train.has_sched = sched->count() > 0;
            train.has_clip = clip->count() > 0;
            return cmd_train(train, out);
        }
        if (*eval_cmd) {
            return cmd_eval(eval_checkpoint, eval_data, eval_json, out);
        }
        if (*history_cmd) {
            return cmd_history(history_checkpoint, history_data, history_out, out);
        }
        return cmd_bench(bench_q, bench_batch, bench_timesteps, bench_iters, bench_json, out);
    } catch (const MissingInput& e) {
        err << "error: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const BadCheckpoint& e) {
        err << "error: bad checkpoint: " << e.what() << "\n";
        return kExitBadCheckpoint;
    } catch (const EquivalenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitEquivalence;
    } catch (const FormatError& e) {
        err << "error: unreadable input: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const std::invalid_argument& e) {
        err << "error: invalid configuration: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace webnn
