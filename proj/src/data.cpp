#include "lmn/data.hpp"

#include <fstream>
#include <random>

#include "json.hpp"
#include "lmn/errors.hpp"

namespace lmn::data {

std::string split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    throw InvalidInput("unknown split");
}

const std::vector<PitchSequence>& PianoRollDataset::split(Split s) const {
    switch (s) {
        case Split::Train: return train;
        case Split::Valid: return valid;
        case Split::Test: return test;
    }
    throw InvalidInput("unknown split");
}

std::vector<PitchSequence>& PianoRollDataset::split(Split s) {
    return const_cast<std::vector<PitchSequence>&>(
        static_cast<const PianoRollDataset&>(*this).split(s));
}

namespace {

PitchSequence parse_sequence(const nlohmann::json& node, const std::string& where, int lo,
                             int hi) {
    if (!node.is_array()) throw InvalidInput(where + ": sequence is not an array");
    PitchSequence seq;
    seq.reserve(node.size());
    for (std::size_t t = 0; t < node.size(); ++t) {
        const auto& frame_node = node[t];
        if (!frame_node.is_array())
            throw InvalidInput(where + " frame " + std::to_string(t) + ": not an array");
        Frame frame;
        frame.reserve(frame_node.size());
        for (const auto& pitch_node : frame_node) {
            if (!pitch_node.is_number_integer())
                throw InvalidInput(where + " frame " + std::to_string(t) +
                                   ": pitch is not an integer");
            const int pitch = pitch_node.get<int>();
            if (pitch < lo || pitch > hi)
                throw InvalidInput(where + " frame " + std::to_string(t) + ": pitch " +
                                   std::to_string(pitch) + " outside [" + std::to_string(lo) +
                                   ", " + std::to_string(hi) + "]");
            frame.push_back(pitch);
        }
        seq.push_back(std::move(frame));
    }
    if (seq.size() < 2)
        throw InvalidInput(where + ": sequence has " + std::to_string(seq.size()) +
                           " frames, need at least 2");
    return seq;
}

}  // namespace

PianoRollDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open dataset file: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput("parse error in " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw InvalidInput(path.string() + ": top level is not an object");

    PianoRollDataset ds;
    const int lo = ds.base_pitch;
    const int hi = ds.base_pitch + static_cast<int>(ds.dim) - 1;
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        const std::string name = split_name(s);
        if (!doc.contains(name)) throw InvalidInput(path.string() + ": missing split '" + name + "'");
        const auto& split_node = doc[name];
        if (!split_node.is_array())
            throw InvalidInput(path.string() + ": split '" + name + "' is not an array");
        auto& out = ds.split(s);
        out.reserve(split_node.size());
        for (std::size_t i = 0; i < split_node.size(); ++i) {
            out.push_back(parse_sequence(split_node[i],
                                         name + " sequence " + std::to_string(i), lo, hi));
        }
    }
    return ds;
}

SplitStats stats(const PianoRollDataset& dataset, Split split) {
    SplitStats st;
    for (const auto& seq : dataset.split(split)) {
        ++st.sequences;
        st.max_length = std::max(st.max_length, seq.size());
    }
    return st;
}

std::vector<Vec> to_frames(const PitchSequence& sequence, std::size_t dim, int base_pitch) {
    std::vector<Vec> frames;
    frames.reserve(sequence.size());
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        Vec row(dim, 0.0);
        for (int pitch : sequence[t]) {
            const int idx = pitch - base_pitch;
            if (idx < 0 || idx >= static_cast<int>(dim))
                throw InvalidInput("frame " + std::to_string(t) + ": pitch " +
                                   std::to_string(pitch) + " does not fit " +
                                   std::to_string(dim) + " notes from base " +
                                   std::to_string(base_pitch));
            row[static_cast<std::size_t>(idx)] = 1.0;
        }
        frames.push_back(std::move(row));
    }
    return frames;
}

void AccuracyCounts::add(std::span<const double> prediction, std::span<const double> target,
                         double threshold) {
    if (prediction.size() != target.size())
        throw InvalidInput("accuracy: prediction width " + std::to_string(prediction.size()) +
                           " vs target width " + std::to_string(target.size()));
    for (std::size_t j = 0; j < prediction.size(); ++j) {
        const bool on = prediction[j] > threshold;
        const bool want = target[j] > 0.5;
        if (on && want)
            ++tp;
        else if (on)
            ++fp;
        else if (want)
            ++fn;
    }
}

double AccuracyCounts::value() const {
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(tp) / static_cast<double>(denom);
}

double frame_accuracy(const std::vector<std::vector<Vec>>& predictions,
                      const std::vector<std::vector<Vec>>& targets, double threshold) {
    if (predictions.size() != targets.size())
        throw InvalidInput("accuracy: " + std::to_string(predictions.size()) +
                           " prediction sequences vs " + std::to_string(targets.size()) +
                           " target sequences");
    AccuracyCounts counts;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != targets[i].size())
            throw InvalidInput("accuracy: sequence " + std::to_string(i) + " has " +
                               std::to_string(predictions[i].size()) + " predictions vs " +
                               std::to_string(targets[i].size()) + " targets");
        for (std::size_t t = 0; t < predictions[i].size(); ++t)
            counts.add(predictions[i][t], targets[i][t], threshold);
    }
    return counts.value();
}

namespace {

Frame singleton(int base_pitch, std::size_t note) {
    return Frame{base_pitch + static_cast<int>(note)};
}

std::vector<PitchSequence> random_binary_split(std::size_t count, const SyntheticSpec& spec,
                                               int base_pitch, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<PitchSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        PitchSequence seq(spec.length);
        for (auto& frame : seq)
            for (std::size_t j = 0; j < spec.dim; ++j)
                if (coin(rng) < spec.density) frame.push_back(base_pitch + static_cast<int>(j));
        out.push_back(std::move(seq));
    }
    return out;
}

std::vector<PitchSequence> delayed_copy_split(std::size_t count, const SyntheticSpec& spec,
                                              int base_pitch, std::mt19937_64& rng) {
    const std::size_t period = spec.delay + 1;
    std::uniform_int_distribution<std::size_t> pick(0, spec.pattern_pool - 1);
    std::vector<PitchSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<std::size_t> phases(period);
        for (auto& ph : phases) ph = pick(rng);
        PitchSequence seq(spec.length);
        for (std::size_t t = 0; t < spec.length; ++t)
            seq[t] = singleton(base_pitch, phases[t % period]);
        out.push_back(std::move(seq));
    }
    return out;
}

std::vector<PitchSequence> low_rank_split(std::size_t count, const SyntheticSpec& spec,
                                          int base_pitch) {
    std::vector<PitchSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        PitchSequence seq(spec.length);
        seq.back() = singleton(base_pitch, i % spec.rank);
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace

PianoRollDataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.dim == 0) throw InvalidInput("synthetic: dim must be positive");
    if (spec.length < 2) throw InvalidInput("synthetic: length must be at least 2");
    if (spec.train_count == 0 || spec.valid_count == 0 || spec.test_count == 0)
        throw InvalidInput("synthetic: all split counts must be positive");
    if (spec.density < 0.0 || spec.density > 1.0)
        throw InvalidInput("synthetic: density must lie in [0, 1]");
    if (spec.kind == SyntheticKind::DelayedCopy &&
        (spec.pattern_pool == 0 || spec.pattern_pool > spec.dim))
        throw InvalidInput("synthetic: pattern_pool must lie in [1, dim]");
    if (spec.kind == SyntheticKind::LowRank && (spec.rank == 0 || spec.rank > spec.dim))
        throw InvalidInput("synthetic: rank must lie in [1, dim]");

    PianoRollDataset ds;
    ds.dim = spec.dim;
    ds.base_pitch = 21;
    std::mt19937_64 rng(spec.seed);
    const std::size_t counts[3] = {spec.train_count, spec.valid_count, spec.test_count};
    const Split splits[3] = {Split::Train, Split::Valid, Split::Test};
    for (int i = 0; i < 3; ++i) {
        auto& out = ds.split(splits[i]);
        switch (spec.kind) {
            case SyntheticKind::RandomBinary:
                out = random_binary_split(counts[i], spec, ds.base_pitch, rng);
                break;
            case SyntheticKind::DelayedCopy:
                out = delayed_copy_split(counts[i], spec, ds.base_pitch, rng);
                break;
            case SyntheticKind::LowRank:
                out = low_rank_split(counts[i], spec, ds.base_pitch);
                break;
        }
    }
    return ds;
}

}  // namespace lmn::data
