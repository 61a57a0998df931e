#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lmn/checkpoint.hpp"
#include "lmn/data.hpp"
#include "lmn/errors.hpp"
#include "lmn/model.hpp"
#include "lmn/pretrain.hpp"
#include "lmn/seqae.hpp"
#include "lmn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lmn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInput("config parse error in " + path + ": " + e.what());
    }
}

void apply_overrides(json& cfg, const std::vector<std::string>& sets) {
    for (const auto& entry : sets) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0)
            throw InvalidInput("--set expects key=value, got '" + entry + "'");
        std::string key = entry.substr(0, eq);
        const std::string raw = entry.substr(eq + 1);
        for (auto& ch : key)
            if (ch == '.') ch = '/';
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;  // bare strings need no quoting
        }
        cfg[json::json_pointer("/" + key)] = std::move(value);
    }
}

const json& section(const json& cfg, const std::string& name) {
    static const json empty = json::object();
    if (!cfg.contains(name)) return empty;
    if (!cfg[name].is_object()) throw InvalidInput("config: '" + name + "' must be an object");
    return cfg[name];
}

data::SyntheticKind parse_kind(const std::string& kind) {
    if (kind == "random-binary") return data::SyntheticKind::RandomBinary;
    if (kind == "delayed-copy") return data::SyntheticKind::DelayedCopy;
    if (kind == "low-rank") return data::SyntheticKind::LowRank;
    throw InvalidInput("config: unknown synthetic kind '" + kind + "'");
}

data::PianoRollDataset resolve_dataset(const json& cfg, std::uint64_t seed) {
    const json& d = section(cfg, "dataset");
    if (d.contains("path")) return data::load_dataset(d["path"].get<std::string>());
    if (d.contains("synthetic")) {
        const json& s = d["synthetic"];
        data::SyntheticSpec spec;
        spec.kind = parse_kind(s.value("kind", std::string("random-binary")));
        spec.dim = s.value("dim", spec.dim);
        spec.train_count = s.value("train", spec.train_count);
        spec.valid_count = s.value("valid", spec.valid_count);
        spec.test_count = s.value("test", spec.test_count);
        spec.length = s.value("length", spec.length);
        spec.delay = s.value("delay", spec.delay);
        spec.pattern_pool = s.value("pattern_pool", spec.pattern_pool);
        spec.rank = s.value("rank", spec.rank);
        spec.density = s.value("density", spec.density);
        spec.seed = s.value("seed", seed);
        return data::make_synthetic(spec);
    }
    throw InvalidInput("config: dataset needs either 'path' or 'synthetic'");
}

train::TrainConfig parse_train(const json& cfg, std::uint64_t seed) {
    const json& t = section(cfg, "train");
    train::TrainConfig c;
    c.seed = seed;
    c.learning_rate = t.value("learning_rate", c.learning_rate);
    c.l2 = t.value("l2", c.l2);
    c.max_epochs = t.value("max_epochs", c.max_epochs);
    c.patience = t.value("patience", c.patience);
    c.batch_size = t.value("batch_size", c.batch_size);
    c.clip_norm = t.value("clip_norm", c.clip_norm);
    c.threshold = t.value("threshold", c.threshold);
    c.freeze_w_mh = t.value("freeze_w_mh", c.freeze_w_mh);
    const std::size_t window = t.value("truncation_window", std::size_t{0});
    if (window > 0) c.truncation_window = window;
    return c;
}

struct ModelSpec {
    std::string kind = "lmn-b";
    std::size_t f = 16;
    std::size_t m = 16;
    std::size_t h = 16;
    std::size_t k = 10;
    std::string activation = "tanh";
};

ModelSpec parse_model(const json& cfg) {
    const json& m = section(cfg, "model");
    ModelSpec spec;
    spec.kind = m.value("kind", spec.kind);
    spec.f = m.value("f", spec.f);
    spec.m = m.value("m", spec.m);
    spec.h = m.value("h", spec.h);
    spec.k = m.value("k", spec.k);
    spec.activation = m.value("activation", spec.activation);
    return spec;
}

model::Activation parse_activation(const std::string& name) {
    if (name == "tanh") return model::Activation::Tanh;
    if (name == "selu") return model::Activation::Selu;
    throw InvalidInput("config: unknown activation '" + name + "'");
}

train::ModelParams build_model(const ModelSpec& spec, std::size_t dim, std::uint64_t seed) {
    if (spec.kind == "rnn") return model::init_rnn(dim, spec.h, dim, seed);
    if (spec.kind == "lmn-a")
        return model::init_lmn(dim, spec.f, spec.m, dim, model::LmnVariant::A, seed);
    if (spec.kind == "lmn-b")
        return model::init_lmn(dim, spec.f, spec.m, dim, model::LmnVariant::B, seed);
    if (spec.kind == "unfolded")
        return model::init_unfolded(dim, spec.h, dim, spec.k,
                                    parse_activation(spec.activation), seed);
    throw InvalidInput("config: unknown model kind '" + spec.kind + "'");
}

checkpoint::AnyParams to_any(const train::ModelParams& params) {
    return std::visit([](const auto& p) { return checkpoint::AnyParams(p); }, params);
}

train::ModelParams to_model(const checkpoint::AnyParams& params) {
    return std::visit(
        [](const auto& p) -> train::ModelParams {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, seqae::AutoencoderParams>)
                throw InvalidInput("checkpoint holds an autoencoder, not a model");
            else
                return train::ModelParams(p);
        },
        params);
}

std::size_t total_entries(const train::ModelParams& params) {
    std::size_t n = 0;
    for (const Matrix* w : train::parameter_views(params)) n += w->rows() * w->cols();
    return n;
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

void write_manifest(const fs::path& out_dir, const std::string& command, std::uint64_t seed,
                    const json& cfg) {
    json doc;
    doc["command"] = command;
    doc["seed"] = seed;
    doc["format_version"] = checkpoint::kFormatVersion;
    doc["config"] = cfg;
    write_json(out_dir / "manifest.json", doc);
}

json split_metrics(const train::ModelParams& params, const data::PianoRollDataset& dataset,
                   double threshold) {
    json out;
    for (data::Split s : {data::Split::Train, data::Split::Valid, data::Split::Test}) {
        const auto examples = train::make_next_frame_examples(dataset, s);
        out[data::split_name(s)] = train::evaluate_accuracy(params, examples, threshold);
    }
    return out;
}

// ---------------------------------------------------------------- commands

int cmd_fit_ae(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
    const auto dataset = resolve_dataset(cfg, seed);
    seqae::SequenceBatch batch;
    batch.dim = dataset.dim;
    for (const auto& seq : dataset.train)
        batch.sequences.push_back(data::to_frames(seq, dataset.dim, dataset.base_pitch));

    const auto full = seqae::fit(batch, std::nullopt);
    std::vector<std::size_t> p_values;
    const json& fa = section(cfg, "fit_ae");
    if (fa.contains("p_values")) {
        p_values = fa["p_values"].get<std::vector<std::size_t>>();
        if (p_values.empty()) throw InvalidInput("config: fit_ae.p_values must be non-empty");
    } else {
        for (std::size_t p = 1; p < full.params.p; p *= 2) p_values.push_back(p);
        p_values.push_back(full.params.p);
    }

    double total_energy = 0.0;
    for (double s : full.spectrum) total_energy += s * s;

    std::ofstream report(out_dir / "fit_ae_report.csv");
    if (!report) throw InvalidInput("cannot write fit_ae_report.csv");
    report << "p,svd_error,la_error\n" << std::setprecision(17);
    for (std::size_t p : p_values) {
        const auto params = seqae::truncate_to(full, p);
        double kept = 0.0;
        for (std::size_t i = 0; i < std::min(p, full.spectrum.size()); ++i)
            kept += full.spectrum[i] * full.spectrum[i];
        const double svd_error = std::max(total_energy - kept, 0.0);
        const double la_error = seqae::reconstruction_error(params, batch).total;
        report << params.p << ',' << svd_error << ',' << la_error << '\n';
    }

    checkpoint::save(out_dir / "checkpoint.json", {full.params, seed});
    return 0;
}

int cmd_train(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
    const auto dataset = resolve_dataset(cfg, seed);
    const auto spec = parse_model(cfg);
    const auto config = parse_train(cfg, seed);
    const auto init = build_model(spec, dataset.dim, seed);

    const auto train_set = train::make_next_frame_examples(dataset, data::Split::Train);
    const auto valid_set = train::make_next_frame_examples(dataset, data::Split::Valid);
    const auto result = train::train_loop(init, train_set, valid_set, config);

    checkpoint::save(out_dir / "checkpoint.json", {to_any(result.best), seed});
    train::write_history_csv(out_dir / "history.csv", result.history);

    json metrics;
    metrics["model"] = spec.kind;
    metrics["epochs"] = result.history.size();
    metrics["best_epoch"] = result.best_epoch;
    metrics["best_val_accuracy"] = result.best_val_accuracy;
    metrics["parameter_count"] = total_entries(result.best);
    metrics["accuracy"] = split_metrics(result.best, dataset, config.threshold);
    write_json(out_dir / "metrics.json", metrics);
    return 0;
}

int cmd_pretrain(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
    const auto dataset = resolve_dataset(cfg, seed);
    const json& pt = section(cfg, "pretrain");

    pretrain::PretrainConfig config;
    config.k = pt.value("k", config.k);
    config.hidden = pt.value("hidden", config.hidden);
    const std::size_t p_mem = pt.value("p_mem", std::size_t{0});
    if (p_mem > 0) config.p_mem = p_mem;
    config.selu_hidden = pt.value("selu_hidden", config.selu_hidden);
    config.zero_last_output_lag = pt.value("zero_last_output_lag", config.zero_last_output_lag);
    config.unfolded_train = parse_train(cfg, seed);

    auto [lmn, diag] = pretrain::pretrain_pipeline(dataset, config);

    checkpoint::save(out_dir / "checkpoint.json", {lmn, seed});
    train::write_history_csv(out_dir / "unfolded_history.csv", diag.unfolded_history);

    json diagnostics;
    diagnostics["ae_rank"] = diag.ae_rank;
    diagnostics["ae_total_error"] = diag.ae_total_error;
    diagnostics["max_hidden_diff"] = diag.max_hidden_diff;
    diagnostics["max_output_diff"] = diag.max_output_diff;
    diagnostics["per_timestep_error_profile"] = diag.per_timestep_error_profile;
    write_json(out_dir / "diagnostics.json", diagnostics);

    {
        std::ofstream profile(out_dir / "recon_profile.csv");
        if (!profile) throw InvalidInput("cannot write recon_profile.csv");
        profile << "timestep,error\n" << std::setprecision(17);
        for (std::size_t t = 0; t < diag.per_timestep_error_profile.size(); ++t)
            profile << t + 1 << ',' << diag.per_timestep_error_profile[t] << '\n';
    }

    const auto config_train = parse_train(cfg, seed);
    json metrics;
    metrics["model"] = "lmn-b";
    metrics["parameter_count"] = total_entries(train::ModelParams(lmn));
    metrics["accuracy"] = split_metrics(train::ModelParams(lmn), dataset, config_train.threshold);

    if (pt.value("fine_tune", false)) {
        const auto train_set = train::make_next_frame_examples(dataset, data::Split::Train);
        const auto valid_set = train::make_next_frame_examples(dataset, data::Split::Valid);
        const auto tuned =
            train::train_loop(train::ModelParams(lmn), train_set, valid_set, config_train);
        checkpoint::save(out_dir / "fine_tuned_checkpoint.json",
                         {to_any(tuned.best), seed});
        train::write_history_csv(out_dir / "fine_tune_history.csv", tuned.history);
        metrics["fine_tuned_accuracy"] =
            split_metrics(tuned.best, dataset, config_train.threshold);
        metrics["fine_tuned_best_val_accuracy"] = tuned.best_val_accuracy;
    }
    write_json(out_dir / "metrics.json", metrics);
    return 0;
}

int cmd_eval(const json& cfg, const fs::path& out_dir, std::uint64_t seed,
             const std::string& checkpoint_path) {
    const auto dataset = resolve_dataset(cfg, seed);
    const auto ckpt = checkpoint::load(checkpoint_path);
    const double threshold = parse_train(cfg, seed).threshold;

    json metrics;
    metrics["arch"] = checkpoint::arch_name(ckpt.params);
    if (std::holds_alternative<seqae::AutoencoderParams>(ckpt.params)) {
        const auto& ae = std::get<seqae::AutoencoderParams>(ckpt.params);
        metrics["parameter_count"] = ae.A.rows() * ae.A.cols() + ae.B.rows() * ae.B.cols();
        json recon;
        for (data::Split s : {data::Split::Train, data::Split::Valid, data::Split::Test}) {
            seqae::SequenceBatch batch;
            batch.dim = dataset.dim;
            for (const auto& seq : dataset.split(s))
                batch.sequences.push_back(data::to_frames(seq, dataset.dim, dataset.base_pitch));
            recon[data::split_name(s)] = seqae::reconstruction_error(ae, batch).total;
        }
        metrics["reconstruction_error"] = recon;
    } else {
        const auto params = to_model(ckpt.params);
        metrics["parameter_count"] = total_entries(params);
        if (const auto* lmn = std::get_if<model::LmnParams>(&params))
            metrics["recurrent_parameter_count"] = model::parameter_count(
                model::Arch::Lmn, static_cast<std::int64_t>(lmn->a),
                static_cast<std::int64_t>(lmn->p), static_cast<std::int64_t>(lmn->m));
        if (const auto* rnn = std::get_if<model::RnnParams>(&params))
            metrics["recurrent_parameter_count"] = model::parameter_count(
                model::Arch::Rnn, static_cast<std::int64_t>(rnn->a),
                static_cast<std::int64_t>(rnn->p));
        metrics["accuracy"] = split_metrics(params, dataset, threshold);
    }
    write_json(out_dir / "metrics.json", metrics);
    return 0;
}

int cmd_sweep(const json& cfg, const fs::path& out_dir, std::uint64_t seed) {
    const auto dataset = resolve_dataset(cfg, seed);
    const json& sw = section(cfg, "sweep");
    const std::string kind = sw.value("model", std::string("lmn-b"));
    const bool is_lmn = kind == "lmn-a" || kind == "lmn-b";

    std::vector<std::pair<std::size_t, std::size_t>> points;  // (f, m) or (h, 0)
    if (is_lmn) {
        std::vector<std::vector<std::size_t>> pairs =
            sw.contains("pairs") ? sw["pairs"].get<std::vector<std::vector<std::size_t>>>()
                                 : std::vector<std::vector<std::size_t>>{
                                       {50, 50}, {50, 100}, {100, 100},
                                       {100, 250}, {250, 250}, {250, 500}};
        for (const auto& pr : pairs) {
            if (pr.size() != 2) throw InvalidInput("config: sweep.pairs entries must be [f, m]");
            points.emplace_back(pr[0], pr[1]);
        }
    } else {
        std::vector<std::size_t> sizes =
            sw.contains("sizes") ? sw["sizes"].get<std::vector<std::size_t>>()
                                 : std::vector<std::size_t>{50, 100, 250, 500, 750};
        for (std::size_t h : sizes) points.emplace_back(h, 0);
    }
    if (points.empty()) throw InvalidInput("config: sweep grid is empty");

    std::vector<double> l2_grid;
    if (sw.contains("l2_grid"))
        l2_grid = sw["l2_grid"].get<std::vector<double>>();
    else
        l2_grid = {parse_train(cfg, seed).l2};
    if (l2_grid.empty()) throw InvalidInput("config: sweep.l2_grid must be non-empty");

    const auto train_set = train::make_next_frame_examples(dataset, data::Split::Train);
    const auto valid_set = train::make_next_frame_examples(dataset, data::Split::Valid);

    std::ofstream report(out_dir / "sweep.csv");
    if (!report) throw InvalidInput("cannot write sweep.csv");
    report << "model,size,f,m,l2,val_accuracy,best_epoch\n" << std::setprecision(17);
    for (const auto& [first, second] : points) {
        for (double l2 : l2_grid) {
            ModelSpec spec = parse_model(cfg);
            spec.kind = kind;
            std::size_t size = 0;
            if (is_lmn) {
                spec.f = first;
                spec.m = second;
                size = first + second;  // reported size is functional + memory units
            } else {
                spec.h = first;
                size = first;
            }
            auto config = parse_train(cfg, seed);
            config.l2 = l2;
            const auto init = build_model(spec, dataset.dim, seed);
            const auto result = train::train_loop(init, train_set, valid_set, config);
            report << kind << ',' << size << ',' << (is_lmn ? first : 0) << ','
                   << (is_lmn ? second : 0) << ',' << l2 << ',' << result.best_val_accuracy
                   << ',' << result.best_epoch << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear memory network experiment runner"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = "run";
    std::vector<std::string> sets;
    std::uint64_t seed_flag = 0;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", sets, "override config entries, key.path=value");
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed_flag, "random seed");

    auto* fit_ae = app.add_subcommand("fit-ae", "fit the linear autoencoder over a size sweep");
    auto* train_cmd = app.add_subcommand("train", "train a model with early stopping");
    auto* pretrain_cmd = app.add_subcommand("pretrain", "three-stage pretraining pipeline");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    app.add_subcommand("sweep", "train across a size grid");
    std::string checkpoint_path;
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << e.what() << '\n';
        return kExitConfig;
    }

    try {
        json cfg = load_config(config_path);
        apply_overrides(cfg, sets);
        std::uint64_t seed = 0;
        if (cfg.contains("seed")) seed = cfg["seed"].get<std::uint64_t>();
        if (seed_opt->count() > 0) seed = seed_flag;
        cfg["seed"] = seed;

        fs::create_directories(out_dir);
        std::string command;
        if (fit_ae->parsed()) command = "fit-ae";
        else if (train_cmd->parsed()) command = "train";
        else if (pretrain_cmd->parsed()) command = "pretrain";
        else if (eval_cmd->parsed()) command = "eval";
        else command = "sweep";
        write_manifest(out_dir, command, seed, cfg);

        if (fit_ae->parsed()) return cmd_fit_ae(cfg, out_dir, seed);
        if (train_cmd->parsed()) return cmd_train(cfg, out_dir, seed);
        if (pretrain_cmd->parsed()) return cmd_pretrain(cfg, out_dir, seed);
        if (eval_cmd->parsed()) return cmd_eval(cfg, out_dir, seed, checkpoint_path);
        return cmd_sweep(cfg, out_dir, seed);
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ConvergenceFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 1;
    }
}
