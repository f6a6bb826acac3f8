#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowcast/grid.hpp"
#include "flowcast/params.hpp"

namespace flowcast {

struct CodecConfig {
  int patch = 4;
  int latent_channels = 5;
  int hidden = 64;
  int channels = 5;  // pixel channels, static ones included

  void validate() const;
  int patch_dim() const { return patch * patch * channels; }
  /// spatial-element ratio p^2 * C / c_z
  double compression_ratio() const { return static_cast<double>(patch_dim()) / latent_channels; }
};

/// Latent frames stored token-major: frame t is [h * w, c_z] with row
/// y * w + x. at() exposes the [T, c_z, h, w] view.
struct LatentSequence {
  int c_z = 0;
  int h = 0;
  int w = 0;
  CalendarTime start;
  int step_hours = 6;
  std::uint64_t codec_hash = 0;
  std::vector<Matrix> frames;

  int n_steps() const { return static_cast<int>(frames.size()); }
  int tokens() const { return h * w; }
  double at(int t, int c, int y, int x) const { return frames[t](y * w + x, c); }
  CalendarTime time_at(int t) const { return start.plus_hours(static_cast<std::int64_t>(t) * step_hours); }
  LatentSequence slice(int begin, int count) const;
};

/// Patch autoencoder: flatten -> affine -> GELU -> affine to c_z, and the
/// mirror image for decoding. Pixel data is z-scored per channel first.
struct Codec {
  CodecConfig config;
  GridSpec grid;
  ParameterStore params;
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
  // per latent channel, used to hand the DiT unit-scale latents
  std::vector<double> latent_mean;
  std::vector<double> latent_std;

  int lat_tokens() const { return grid.n_lat / config.patch; }
  int lon_tokens() const { return grid.n_lon / config.patch; }
  std::uint64_t hash() const;
};

/// Registers the codec arrays in `params` with their init recipes.
void add_codec_params(ParameterStore& params, const CodecConfig& config);
Codec make_codec(const CodecConfig& config, const GridSpec& grid, std::uint64_t seed);

/// Per-channel mean / std over all frames and gridpoints.
void fit_normalization(Codec& codec, const FieldSequence& data);
double standardize(const Codec& codec, int channel, double value);
double destandardize(const Codec& codec, int channel, double z);

/// Normalized pixel frame [C, H, W] -> [h * w, p^2 C] patch rows and back.
Matrix patchify(const Codec& codec, std::span<const float> frame);
std::vector<float> unpatchify(const Codec& codec, const Matrix& patches);

Matrix encode_patches(const Codec& codec, const Matrix& patches);
Matrix decode_patches(const Codec& codec, const Matrix& latents);

/// Physical-unit frame -> raw latent frame [h * w, c_z] and back.
Matrix encode(const Codec& codec, std::span<const float> frame);
std::vector<float> decode(const Codec& codec, const Matrix& latent);

LatentSequence encode_sequence(const Codec& codec, const FieldSequence& data);
FieldSequence decode_sequence(const Codec& codec, const LatentSequence& latents, const FieldSequence& like);

/// Latent standardization fitted on encoded training data.
void fit_latent_stats(Codec& codec, const LatentSequence& raw);
LatentSequence to_model_space(const Codec& codec, const LatentSequence& raw);
LatentSequence from_model_space(const Codec& codec, const LatentSequence& model);
Matrix frame_to_model_space(const Codec& codec, const Matrix& raw);
Matrix frame_from_model_space(const Codec& codec, const Matrix& model);

struct CodecTrainConfig {
  int steps = 3000;
  int batch = 256;  // patches per step
  double lr = 2e-3;
  std::uint64_t seed = 7;
};

struct CodecTrainResult {
  Codec codec;
  std::vector<double> losses;
};

/// Fits normalization on `data`, then minimizes reconstruction MSE on
/// randomly drawn patches with Adam. Throws DivergenceError on a non-finite
/// loss.
CodecTrainResult train_codec(const FieldSequence& data, const CodecConfig& config, const CodecTrainConfig& train);

/// sqrt(sum (decode(encode(x)) - x)^2 / sum (x - fitted channel mean)^2) in
/// normalized units over every frame of `data`.
double relative_reconstruction_rmse(const Codec& codec, const FieldSequence& data);

}  // namespace flowcast
