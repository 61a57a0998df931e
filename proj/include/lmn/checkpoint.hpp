#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "lmn/model.hpp"
#include "lmn/seqae.hpp"

namespace lmn::checkpoint {

inline constexpr int kFormatVersion = 1;

using AnyParams = std::variant<model::RnnParams, model::LmnParams, model::UnfoldedParams,
                               seqae::AutoencoderParams>;

struct Checkpoint {
    AnyParams params;
    std::uint64_t rng_seed = 0;
};

/// "rnn", "lmn", "unfolded", or "seqae".
std::string arch_name(const AnyParams& params);

/// One JSON document: {format_version, arch, sizes, variant?, activation?,
/// rng_seed, matrices: {name -> {rows, cols, data}}}. Values round-trip
/// exactly through save/load.
void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

}  // namespace lmn::checkpoint
