#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "flowcast/config.hpp"

namespace flowcast {

inline constexpr char kCheckpointMagic[8] = {'F', 'C', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

/// Everything a run persists. Missing parts are simply absent from the file.
struct Checkpoint {
  RunConfig config;
  std::optional<Codec> codec;
  std::optional<DitModel> model;
  std::optional<Adam> adam;  // moments keyed like model parameters
  nlohmann::json extra = nlohmann::json::object();
};

/// Layout: 8-byte magic, little-endian u64 manifest length, UTF-8 JSON
/// manifest, then the tensor blob (little-endian float64, offsets tile it).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Manifest only, for inspection and tests.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Decodes a model-space member back to physical units. Static channels are
/// copied from `like` so the output keeps them time-invariant.
FieldSequence decode_member(const Codec& codec, const LatentSequence& model_space, const FieldSequence& like);

/// One MRCHK1 file per member plus ensemble.json listing files, seeds and
/// checksums. Returns the manifest.
nlohmann::json write_ensemble(const std::filesystem::path& dir, const EnsembleForecast& fc, const Codec& codec,
                              const FieldSequence& like);

}  // namespace flowcast
