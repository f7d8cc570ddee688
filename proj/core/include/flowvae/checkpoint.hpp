#pragma once

#include <string>

#include "flowvae/classifiers.hpp"

namespace flowvae {

/// Binary checkpoint: magic "FVAE", format version u16, preset name,
/// layer count, per-layer kind tag + shape header + little-endian f64
/// parameters, then the head, feature schema, and scaling sections.
/// save/load round-trips bit-exactly.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

inline constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace flowvae
