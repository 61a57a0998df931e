#include "lmn/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "lmn/errors.hpp"

namespace lmn::checkpoint {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json node;
    node["rows"] = m.rows();
    node["cols"] = m.cols();
    node["data"] = std::vector<double>(m.data(), m.data() + m.rows() * m.cols());
    return node;
}

Matrix matrix_from_json(const json& node, const std::string& name) {
    if (!node.is_object() || !node.contains("rows") || !node.contains("cols") ||
        !node.contains("data"))
        throw InvalidInput("checkpoint: matrix '" + name + "' needs rows, cols, data");
    const auto rows = node["rows"].get<std::size_t>();
    const auto cols = node["cols"].get<std::size_t>();
    const auto data = node["data"].get<std::vector<double>>();
    if (data.size() != rows * cols)
        throw InvalidInput("checkpoint: matrix '" + name + "' declares " + std::to_string(rows) +
                           "x" + std::to_string(cols) + " but carries " +
                           std::to_string(data.size()) + " values");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

Matrix require_matrix(const json& matrices, const std::string& name, std::size_t rows,
                      std::size_t cols) {
    if (!matrices.contains(name))
        throw InvalidInput("checkpoint: missing matrix '" + name + "'");
    Matrix m = matrix_from_json(matrices[name], name);
    if (m.rows() != rows || m.cols() != cols)
        throw InvalidInput("checkpoint: matrix '" + name + "' is " + std::to_string(m.rows()) +
                           "x" + std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                           "x" + std::to_string(cols));
    return m;
}

std::size_t require_size(const json& sizes, const std::string& key) {
    if (!sizes.contains(key))
        throw InvalidInput("checkpoint: missing size '" + key + "'");
    return sizes[key].get<std::size_t>();
}

}  // namespace

std::string arch_name(const AnyParams& params) {
    return std::visit(
        [](const auto& p) -> std::string {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, model::RnnParams>) return "rnn";
            else if constexpr (std::is_same_v<T, model::LmnParams>) return "lmn";
            else if constexpr (std::is_same_v<T, model::UnfoldedParams>) return "unfolded";
            else return "seqae";
        },
        params);
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["arch"] = arch_name(ckpt.params);
    doc["rng_seed"] = ckpt.rng_seed;
    json sizes;
    json matrices;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, model::RnnParams>) {
                sizes = {{"a", p.a}, {"p", p.p}, {"o", p.o}};
                matrices["w_xh"] = matrix_to_json(p.w_xh);
                matrices["w_hh"] = matrix_to_json(p.w_hh);
                matrices["w_o"] = matrix_to_json(p.w_o);
            } else if constexpr (std::is_same_v<T, model::LmnParams>) {
                sizes = {{"a", p.a}, {"p", p.p}, {"m", p.m}, {"o", p.o}};
                doc["variant"] = p.variant == model::LmnVariant::A ? "A" : "B";
                matrices["w_xh"] = matrix_to_json(p.w_xh);
                matrices["w_mh"] = matrix_to_json(p.w_mh);
                matrices["w_hm"] = matrix_to_json(p.w_hm);
                matrices["w_mm"] = matrix_to_json(p.w_mm);
                matrices["w_out"] = matrix_to_json(p.w_out);
            } else if constexpr (std::is_same_v<T, model::UnfoldedParams>) {
                sizes = {{"a", p.a}, {"p", p.p}, {"o", p.o}, {"k", p.k}};
                doc["activation"] =
                    p.hidden_activation == model::Activation::Tanh ? "tanh" : "selu";
                matrices["w_xh"] = matrix_to_json(p.w_xh);
                for (std::size_t i = 0; i < p.k; ++i)
                    matrices["w_hh_" + std::to_string(i + 1)] = matrix_to_json(p.w_hh[i]);
                for (std::size_t i = 0; i <= p.k; ++i)
                    matrices["w_o_" + std::to_string(i)] = matrix_to_json(p.w_o[i]);
            } else {
                sizes = {{"a", p.a}, {"p", p.p}, {"train_len", p.train_len}};
                matrices["A"] = matrix_to_json(p.A);
                matrices["B"] = matrix_to_json(p.B);
            }
        },
        ckpt.params);
    doc["sizes"] = std::move(sizes);
    doc["matrices"] = std::move(matrices);

    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write checkpoint to " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw InvalidInput("failed writing checkpoint to " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInput("checkpoint parse error in " + path.string() + ": " + e.what());
    }
    if (!doc.contains("format_version") || doc["format_version"].get<int>() != kFormatVersion)
        throw InvalidInput("checkpoint: unsupported format_version in " + path.string());
    if (!doc.contains("arch") || !doc.contains("sizes") || !doc.contains("matrices"))
        throw InvalidInput("checkpoint: missing arch, sizes, or matrices in " + path.string());
    const std::string arch = doc["arch"].get<std::string>();
    const json& sizes = doc["sizes"];
    const json& matrices = doc["matrices"];

    Checkpoint ckpt;
    if (doc.contains("rng_seed")) ckpt.rng_seed = doc["rng_seed"].get<std::uint64_t>();

    if (arch == "rnn") {
        model::RnnParams p;
        p.a = require_size(sizes, "a");
        p.p = require_size(sizes, "p");
        p.o = require_size(sizes, "o");
        p.w_xh = require_matrix(matrices, "w_xh", p.p, p.a);
        p.w_hh = require_matrix(matrices, "w_hh", p.p, p.p);
        p.w_o = require_matrix(matrices, "w_o", p.o, p.p);
        ckpt.params = std::move(p);
    } else if (arch == "lmn") {
        model::LmnParams p;
        p.a = require_size(sizes, "a");
        p.p = require_size(sizes, "p");
        p.m = require_size(sizes, "m");
        p.o = require_size(sizes, "o");
        const std::string variant =
            doc.contains("variant") ? doc["variant"].get<std::string>() : "B";
        if (variant != "A" && variant != "B")
            throw InvalidInput("checkpoint: unknown variant '" + variant + "'");
        p.variant = variant == "A" ? model::LmnVariant::A : model::LmnVariant::B;
        p.w_xh = require_matrix(matrices, "w_xh", p.p, p.a);
        p.w_mh = require_matrix(matrices, "w_mh", p.p, p.m);
        p.w_hm = require_matrix(matrices, "w_hm", p.m, p.p);
        p.w_mm = require_matrix(matrices, "w_mm", p.m, p.m);
        p.w_out = require_matrix(matrices, "w_out", p.o,
                                 p.variant == model::LmnVariant::B ? p.m : p.p);
        ckpt.params = std::move(p);
    } else if (arch == "unfolded") {
        model::UnfoldedParams p;
        p.a = require_size(sizes, "a");
        p.p = require_size(sizes, "p");
        p.o = require_size(sizes, "o");
        p.k = require_size(sizes, "k");
        const std::string act =
            doc.contains("activation") ? doc["activation"].get<std::string>() : "tanh";
        if (act != "tanh" && act != "selu")
            throw InvalidInput("checkpoint: unknown activation '" + act + "'");
        p.hidden_activation = act == "tanh" ? model::Activation::Tanh : model::Activation::Selu;
        p.w_xh = require_matrix(matrices, "w_xh", p.p, p.a);
        p.w_hh.reserve(p.k);
        for (std::size_t i = 0; i < p.k; ++i)
            p.w_hh.push_back(require_matrix(matrices, "w_hh_" + std::to_string(i + 1), p.p, p.p));
        p.w_o.reserve(p.k + 1);
        for (std::size_t i = 0; i <= p.k; ++i)
            p.w_o.push_back(require_matrix(matrices, "w_o_" + std::to_string(i), p.o, p.p));
        ckpt.params = std::move(p);
    } else if (arch == "seqae") {
        seqae::AutoencoderParams p;
        p.a = require_size(sizes, "a");
        p.p = require_size(sizes, "p");
        p.train_len = require_size(sizes, "train_len");
        p.A = require_matrix(matrices, "A", p.p, p.a);
        p.B = require_matrix(matrices, "B", p.p, p.p);
        ckpt.params = std::move(p);
    } else {
        throw InvalidInput("checkpoint: unknown arch '" + arch + "'");
    }
    return ckpt;
}

}  // namespace lmn::checkpoint
