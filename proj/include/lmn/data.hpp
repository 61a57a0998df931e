#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmn/matrix.hpp"

namespace lmn::data {

/// One frame is the set of active MIDI pitches.
using Frame = std::vector<int>;
using PitchSequence = std::vector<Frame>;

enum class Split { Train, Valid, Test };

std::string split_name(Split split);

struct PianoRollDataset {
    std::size_t dim = 88;    // note indices 0..dim-1
    int base_pitch = 21;     // A0; note index = pitch - base_pitch
    std::vector<PitchSequence> train;
    std::vector<PitchSequence> valid;
    std::vector<PitchSequence> test;

    const std::vector<PitchSequence>& split(Split s) const;
    std::vector<PitchSequence>& split(Split s);
};

struct SplitStats {
    std::size_t sequences = 0;
    std::size_t max_length = 0;
};

/// Loads {"train": [...], "valid": [...], "test": [...]} where each sequence
/// is an array of frames and each frame an array of integer pitches.
PianoRollDataset load_dataset(const std::filesystem::path& path);

SplitStats stats(const PianoRollDataset& dataset, Split split);

/// Binary frame encoding: row t has a 1 at index pitch - base_pitch for each
/// active pitch of frame t.
std::vector<Vec> to_frames(const PitchSequence& sequence, std::size_t dim = 88,
                           int base_pitch = 21);

/// Running true/false-positive/negative counts for threshold-binarized
/// multi-label predictions, aggregated over every frame seen.
struct AccuracyCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    void add(std::span<const double> prediction, std::span<const double> target,
             double threshold = 0.5);
    /// TP / (TP + FP + FN); 1.0 when nothing has been counted.
    double value() const;
};

/// Global-sum frame accuracy over aligned prediction/target sequences.
double frame_accuracy(const std::vector<std::vector<Vec>>& predictions,
                      const std::vector<std::vector<Vec>>& targets, double threshold = 0.5);

enum class SyntheticKind { RandomBinary, DelayedCopy, LowRank };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::RandomBinary;
    std::size_t dim = 8;
    std::size_t train_count = 8;
    std::size_t valid_count = 2;
    std::size_t test_count = 2;
    std::size_t length = 20;
    std::size_t delay = 2;         // delayed-copy: next frame repeats the one delay steps back
    std::size_t pattern_pool = 6;  // delayed-copy: number of distinct frame patterns
    std::size_t rank = 2;          // low-rank: rank of the fitted data matrix
    double density = 0.25;         // random-binary: expected fraction of active notes
    std::uint64_t seed = 0;
};

/// Deterministic synthetic datasets shaped like piano rolls:
///  - random-binary: iid Bernoulli frames at the given density
///  - delayed-copy: periodic sequences of period delay+1 drawn from a small
///    pattern pool, so the next frame equals the frame delay steps earlier
///  - low-rank: sequences whose stacked-prefix data matrix has the given rank
PianoRollDataset make_synthetic(const SyntheticSpec& spec);

}  // namespace lmn::data
