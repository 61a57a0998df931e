#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lmn/data.hpp"
#include "lmn/errors.hpp"
#include "lmn/seqae.hpp"
#include "lmn/svd.hpp"

using namespace lmn;
using namespace lmn::data;

namespace {

std::filesystem::path write_temp_json(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << body;
    return path;
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(std::filesystem::path p) : path(std::move(p)) {}
    ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("a minimal dataset file round-trips") {
    TempFile f(write_temp_json("lmn_data_ok.json", R"({
        "train": [[[60, 64], [62]], [[21], [108]]],
        "valid": [[[30], [31, 32]]],
        "test":  [[[40], [40]]]
    })"));
    const PianoRollDataset ds = load_dataset(f.path);
    CHECK(ds.dim == 88);
    CHECK(ds.base_pitch == 21);
    REQUIRE(ds.train.size() == 2);
    REQUIRE(ds.valid.size() == 1);
    REQUIRE(ds.test.size() == 1);
    CHECK(ds.train[0][0] == Frame{60, 64});
    CHECK(ds.train[1][1] == Frame{108});

    const SplitStats st = stats(ds, Split::Train);
    CHECK(st.sequences == 2);
    CHECK(st.max_length == 2);
    CHECK(split_name(Split::Valid) == "valid");
}

TEST_CASE("loading reports malformed json with context") {
    TempFile f(write_temp_json("lmn_data_bad.json", "{\"train\": [[[60]"));
    CHECK_THROWS_AS(load_dataset(f.path), InvalidInput);
    CHECK_THROWS_AS(load_dataset("/nonexistent/lmn_nope.json"), InvalidInput);
}

TEST_CASE("loading rejects structural mistakes by name") {
    TempFile missing(write_temp_json("lmn_data_missing.json", R"({
        "train": [[[60], [61]]], "valid": [[[60], [61]]]
    })"));
    CHECK_THROWS_WITH_AS(load_dataset(missing.path), doctest::Contains("test"), InvalidInput);

    TempFile range(write_temp_json("lmn_data_range.json", R"({
        "train": [[[60], [200]]],
        "valid": [[[60], [61]]],
        "test":  [[[60], [61]]]
    })"));
    CHECK_THROWS_WITH_AS(load_dataset(range.path), doctest::Contains("200"), InvalidInput);

    TempFile tiny(write_temp_json("lmn_data_short.json", R"({
        "train": [[[60]]],
        "valid": [[[60], [61]]],
        "test":  [[[60], [61]]]
    })"));
    CHECK_THROWS_AS(load_dataset(tiny.path), InvalidInput);
}

TEST_CASE("frames become dense binary rows") {
    const auto rows = to_frames({{21, 23}, {}, {108}});
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].size() == 88);
    CHECK(rows[0][0] == 1.0);
    CHECK(rows[0][2] == 1.0);
    CHECK(rows[0][1] == 0.0);
    double sum1 = 0.0;
    for (double v : rows[1]) sum1 += v;
    CHECK(sum1 == 0.0);
    CHECK(rows[2][87] == 1.0);

    CHECK_THROWS_AS(to_frames({{20}}), InvalidInput);
    CHECK_THROWS_AS(to_frames({{109}}), InvalidInput);
}

TEST_CASE("frame accuracy counts true positives over all mismatches") {
    // Frame 1: predict {A}, truth {A, B} -> TP 1, FN 1.
    // Frame 2: predict {C}, truth {}     -> FP 1.
    const std::vector<std::vector<Vec>> preds = {{Vec{0.9, 0.1, 0.0}, Vec{0.2, 0.3, 0.8}}};
    const std::vector<std::vector<Vec>> truth = {{Vec{1.0, 1.0, 0.0}, Vec{0.0, 0.0, 0.0}}};
    CHECK(frame_accuracy(preds, truth) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("frame accuracy endpoints") {
    const std::vector<std::vector<Vec>> perfect = {{Vec{0.9, 0.1}, Vec{0.1, 0.95}}};
    const std::vector<std::vector<Vec>> truth = {{Vec{1.0, 0.0}, Vec{0.0, 1.0}}};
    CHECK(frame_accuracy(perfect, truth) == 1.0);

    const std::vector<std::vector<Vec>> silent = {{Vec{0.1, 0.1}, Vec{0.1, 0.1}}};
    CHECK(frame_accuracy(silent, truth) == 0.0);

    // Nothing predicted, nothing true: define as perfect rather than 0/0.
    const std::vector<std::vector<Vec>> empty_truth = {{Vec{0.0, 0.0}}};
    CHECK(frame_accuracy({{Vec{0.0, 0.0}}}, empty_truth) == 1.0);
}

TEST_CASE("frame accuracy pools counts globally rather than averaging frames") {
    // Frame 1: TP 1 of 1. Frame 2: TP 1, FN 2.
    // Global: 2 / 4 = 0.5; a per-frame mean would give (1 + 1/3) / 2 = 2/3.
    const std::vector<std::vector<Vec>> preds = {
        {Vec{1.0, 0.0, 0.0, 0.0}, Vec{1.0, 0.0, 0.0, 0.0}}};
    const std::vector<std::vector<Vec>> truth = {
        {Vec{1.0, 0.0, 0.0, 0.0}, Vec{1.0, 1.0, 1.0, 0.0}}};
    CHECK(frame_accuracy(preds, truth) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("frame accuracy is permutation invariant and monotone under correction") {
    std::vector<std::vector<Vec>> preds = {{Vec{1.0, 0.0}, Vec{0.0, 0.0}},
                                           {Vec{0.0, 1.0}, Vec{1.0, 0.0}}};
    std::vector<std::vector<Vec>> truth = {{Vec{1.0, 1.0}, Vec{0.0, 1.0}},
                                           {Vec{0.0, 1.0}, Vec{0.0, 0.0}}};
    const double base = frame_accuracy(preds, truth);

    const std::vector<std::vector<Vec>> preds_swapped = {preds[1], preds[0]};
    const std::vector<std::vector<Vec>> truth_swapped = {truth[1], truth[0]};
    CHECK(frame_accuracy(preds_swapped, truth_swapped) == base);

    double last = base;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        for (std::size_t t = 0; t < preds[s].size(); ++t) {
            for (std::size_t i = 0; i < preds[s][t].size(); ++i) {
                if (preds[s][t][i] != truth[s][t][i]) {
                    preds[s][t][i] = truth[s][t][i];
                    const double now = frame_accuracy(preds, truth);
                    CHECK(now >= last);
                    last = now;
                }
            }
        }
    }
    CHECK(last == 1.0);

    CHECK_THROWS_AS(frame_accuracy(preds, {}), InvalidInput);
}

TEST_CASE("accuracy counts respect a strict threshold") {
    AccuracyCounts counts;
    counts.add(Vec{0.5, 0.51}, Vec{1.0, 1.0});
    CHECK(counts.tp == 1);  // 0.5 is not > 0.5
    CHECK(counts.fn == 1);
    CHECK(counts.fp == 0);
    counts.add(Vec{0.9}, Vec{0.0}, 0.95);
    CHECK(counts.fp == 0);  // raised threshold silences the prediction
    CHECK(AccuracyCounts{}.value() == 1.0);
}

TEST_CASE("synthetic generation is deterministic per seed") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::RandomBinary;
    spec.dim = 6;
    spec.length = 10;
    spec.seed = 77;
    const auto a = make_synthetic(spec);
    const auto b = make_synthetic(spec);
    CHECK(a.train == b.train);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);
    CHECK(a.train.size() == spec.train_count);
    CHECK(a.valid.size() == spec.valid_count);
    CHECK(a.test.size() == spec.test_count);
    for (const auto& seq : a.train) CHECK(seq.size() == spec.length);

    spec.seed = 78;
    const auto c = make_synthetic(spec);
    CHECK(a.train != c.train);
}

TEST_CASE("delayed-copy sequences repeat with the configured period") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::DelayedCopy;
    spec.dim = 8;
    spec.delay = 2;
    spec.length = 12;
    spec.pattern_pool = 5;
    spec.seed = 5;
    const auto ds = make_synthetic(spec);
    for (const auto& seq : ds.train) {
        REQUIRE(seq.size() == 12);
        for (std::size_t t = spec.delay + 1; t < seq.size(); ++t)
            CHECK(seq[t] == seq[t - (spec.delay + 1)]);
        for (const auto& frame : seq) {
            REQUIRE(frame.size() == 1);
            CHECK(frame[0] >= ds.base_pitch);
            CHECK(frame[0] < ds.base_pitch + static_cast<int>(spec.pattern_pool));
        }
    }

    // delay 0 degenerates to constant sequences: next frame = current frame.
    spec.delay = 0;
    const auto flat = make_synthetic(spec);
    for (const auto& seq : flat.train)
        for (std::size_t t = 1; t < seq.size(); ++t) CHECK(seq[t] == seq[0]);
}

TEST_CASE("low-rank sequences produce a data matrix of the requested rank") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::LowRank;
    spec.dim = 8;
    spec.rank = 3;
    spec.length = 6;
    spec.train_count = 7;
    spec.seed = 9;
    const auto ds = make_synthetic(spec);

    seqae::SequenceBatch batch;
    batch.dim = spec.dim;
    for (const auto& seq : ds.train)
        batch.sequences.push_back(to_frames(seq, spec.dim, ds.base_pitch));
    const auto fitted = seqae::fit(batch, std::nullopt);
    CHECK(rank_estimate(fitted.spectrum, 1e-10) == 3);
}

TEST_CASE("synthetic specs are validated") {
    SyntheticSpec spec;
    spec.dim = 0;
    CHECK_THROWS_AS(make_synthetic(spec), InvalidInput);

    spec = SyntheticSpec{};
    spec.length = 1;
    CHECK_THROWS_AS(make_synthetic(spec), InvalidInput);

    spec = SyntheticSpec{};
    spec.kind = SyntheticKind::DelayedCopy;
    spec.pattern_pool = 100;
    spec.dim = 8;
    CHECK_THROWS_AS(make_synthetic(spec), InvalidInput);

    spec = SyntheticSpec{};
    spec.density = 1.5;
    CHECK_THROWS_AS(make_synthetic(spec), InvalidInput);

    spec = SyntheticSpec{};
    spec.kind = SyntheticKind::LowRank;
    spec.rank = 9;
    spec.dim = 8;
    CHECK_THROWS_AS(make_synthetic(spec), InvalidInput);
}
