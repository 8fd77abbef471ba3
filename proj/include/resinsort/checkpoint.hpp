#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "resinsort/image.hpp"
#include "resinsort/nets.hpp"

namespace resinsort {

/// Malformed or inconsistent checkpoint file.
class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

struct Checkpoint {
    Model model;
    ChannelStats stats;  // normalization the model was trained with
};

inline constexpr char kCheckpointMagic[] = "RSRT1";

/// Layout: the 5 magic bytes "RSRT1", a little-endian uint64 byte length,
/// that many bytes of JSON header (kind, margin, trunk config, parameter
/// shapes, normalization stats), then every parameter tensor as raw
/// little-endian float64 values in declaration order.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const ChannelStats& stats);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const ChannelStats& stats, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace resinsort
