#include "flowcast/codec.hpp"

#include <cmath>
#include <string_view>

#include "flowcast/autodiff.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/rng.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

void CodecConfig::validate() const {
  if (patch < 1) throw ConfigError("codec patch must be >= 1");
  if (latent_channels < 1) throw ConfigError("codec latent_channels must be >= 1");
  if (hidden < 1) throw ConfigError("codec hidden must be >= 1");
  if (channels < 1) throw ConfigError("codec channels must be >= 1");
}

LatentSequence LatentSequence::slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > n_steps()) throw DataError("latent slice out of range");
  LatentSequence out = *this;
  out.frames.assign(frames.begin() + begin, frames.begin() + begin + count);
  out.start = time_at(begin);
  return out;
}

std::uint64_t Codec::hash() const {
  std::uint64_t h = fnv1a("codec");
  const int dims[4] = {config.patch, config.latent_channels, config.hidden, config.channels};
  h = fnv1a(std::string_view(reinterpret_cast<const char*>(dims), sizeof dims), h);
  for (const Parameter* p : params.all()) {
    h = fnv1a(p->name, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(p->value.data()), p->size() * sizeof(double)), h);
  }
  for (const auto* v : {&channel_mean, &channel_std}) {
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(double)), h);
  }
  return h;
}

void add_codec_params(ParameterStore& params, const CodecConfig& c) {
  const int in = c.patch_dim();
  auto tn = [](int fan_in) { return InitRecipe{InitKind::trunc_normal, 1.0 / std::sqrt(static_cast<double>(fan_in))}; };
  params.add("codec.enc1.w", c.hidden, in, tn(in));
  params.add("codec.enc1.b", 1, c.hidden, {});
  params.add("codec.enc2.w", c.latent_channels, c.hidden, tn(c.hidden));
  params.add("codec.enc2.b", 1, c.latent_channels, {});
  params.add("codec.dec1.w", c.hidden, c.latent_channels, tn(c.latent_channels));
  params.add("codec.dec1.b", 1, c.hidden, {});
  params.add("codec.dec2.w", in, c.hidden, tn(c.hidden));
  params.add("codec.dec2.b", 1, in, {});
}

Codec make_codec(const CodecConfig& config, const GridSpec& grid, std::uint64_t seed) {
  config.validate();
  grid.validate();
  if (grid.n_lat % config.patch != 0 || grid.n_lon % config.patch != 0) {
    throw ConfigError("grid " + std::to_string(grid.n_lat) + "x" + std::to_string(grid.n_lon) +
                      " not divisible by patch " + std::to_string(config.patch));
  }
  Codec codec;
  codec.config = config;
  codec.grid = grid;
  add_codec_params(codec.params, config);
  codec.params.initialize(seed);
  codec.channel_mean.assign(config.channels, 0.0);
  codec.channel_std.assign(config.channels, 1.0);
  codec.latent_mean.assign(config.latent_channels, 0.0);
  codec.latent_std.assign(config.latent_channels, 1.0);
  return codec;
}

void fit_normalization(Codec& codec, const FieldSequence& data) {
  if (data.n_channels != codec.config.channels) throw DataError("channel count does not match codec");
  const std::size_t pts = data.grid.points();
  for (int c = 0; c < data.n_channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int t = 0; t < data.n_steps; ++t) {
      for (float v : data.channel(t, c)) sum += v;
    }
    const double n = static_cast<double>(pts) * data.n_steps;
    const double mean = sum / n;
    for (int t = 0; t < data.n_steps; ++t) {
      for (float v : data.channel(t, c)) sq += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(sq / n);
    codec.channel_mean[c] = mean;
    codec.channel_std[c] = sd > 1e-12 ? sd : 1.0;
  }
}

double standardize(const Codec& codec, int channel, double value) {
  return (value - codec.channel_mean[channel]) / codec.channel_std[channel];
}

double destandardize(const Codec& codec, int channel, double z) {
  return z * codec.channel_std[channel] + codec.channel_mean[channel];
}

Matrix patchify(const Codec& codec, std::span<const float> frame) {
  const int p = codec.config.patch;
  const int C = codec.config.channels;
  const int H = codec.grid.n_lat, W = codec.grid.n_lon;
  if (frame.size() != static_cast<std::size_t>(C) * H * W) throw DataError("frame size does not match codec");
  const int h = H / p, w = W / p;
  Matrix out(h * w, codec.config.patch_dim());
  for (int c = 0; c < C; ++c) {
    const double mean = codec.channel_mean[c];
    const double inv = 1.0 / codec.channel_std[c];
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int row = (y / p) * w + x / p;
        const int col = c * p * p + (y % p) * p + x % p;
        out(row, col) = (frame[(static_cast<std::size_t>(c) * H + y) * W + x] - mean) * inv;
      }
    }
  }
  return out;
}

std::vector<float> unpatchify(const Codec& codec, const Matrix& patches) {
  const int p = codec.config.patch;
  const int C = codec.config.channels;
  const int H = codec.grid.n_lat, W = codec.grid.n_lon;
  const int h = H / p, w = W / p;
  if (patches.rows() != h * w || patches.cols() != codec.config.patch_dim()) {
    throw DataError("patch matrix shape does not match codec");
  }
  std::vector<float> frame(static_cast<std::size_t>(C) * H * W);
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int row = (y / p) * w + x / p;
        const int col = c * p * p + (y % p) * p + x % p;
        frame[(static_cast<std::size_t>(c) * H + y) * W + x] =
            static_cast<float>(destandardize(codec, c, patches(row, col)));
      }
    }
  }
  return frame;
}

namespace {

Matrix dense(const Matrix& x, const Parameter& w, const Parameter& b) {
  Matrix out = x * w.value.transpose();
  out.rowwise() += b.value.row(0);
  return out;
}

Matrix gelu_matrix(Matrix m) {
  return m.unaryExpr([](double v) { return ad::gelu_value(v); });
}

}  // namespace

Matrix encode_patches(const Codec& codec, const Matrix& patches) {
  if (patches.cols() != codec.config.patch_dim()) throw DataError("patch width does not match codec");
  const auto& P = codec.params;
  const Matrix hidden = gelu_matrix(dense(patches, P.get("codec.enc1.w"), P.get("codec.enc1.b")));
  return dense(hidden, P.get("codec.enc2.w"), P.get("codec.enc2.b"));
}

Matrix decode_patches(const Codec& codec, const Matrix& latents) {
  if (latents.cols() != codec.config.latent_channels) throw DataError("latent width does not match codec");
  const auto& P = codec.params;
  const Matrix hidden = gelu_matrix(dense(latents, P.get("codec.dec1.w"), P.get("codec.dec1.b")));
  return dense(hidden, P.get("codec.dec2.w"), P.get("codec.dec2.b"));
}

Matrix encode(const Codec& codec, std::span<const float> frame) {
  return encode_patches(codec, patchify(codec, frame));
}

std::vector<float> decode(const Codec& codec, const Matrix& latent) {
  if (latent.rows() != codec.lat_tokens() * codec.lon_tokens()) throw DataError("latent frame has wrong token count");
  return unpatchify(codec, decode_patches(codec, latent));
}

LatentSequence encode_sequence(const Codec& codec, const FieldSequence& data) {
  if (!(data.grid == codec.grid)) throw DataError("dataset grid does not match codec grid");
  LatentSequence out;
  out.c_z = codec.config.latent_channels;
  out.h = codec.lat_tokens();
  out.w = codec.lon_tokens();
  out.start = data.start;
  out.step_hours = data.step_hours;
  out.codec_hash = codec.hash();
  out.frames.reserve(data.n_steps);
  for (int t = 0; t < data.n_steps; ++t) out.frames.push_back(encode(codec, data.frame(t)));
  return out;
}

FieldSequence decode_sequence(const Codec& codec, const LatentSequence& latents, const FieldSequence& like) {
  FieldSequence out(codec.grid, like.n_channels, like.n_static, latents.start, latents.step_hours,
                    latents.n_steps());
  out.channel_names = like.channel_names;
  out.channel_units = like.channel_units;
  for (int t = 0; t < latents.n_steps(); ++t) {
    const auto frame = decode(codec, latents.frames[t]);
    std::copy(frame.begin(), frame.end(), out.frame(t).begin());
  }
  return out;
}

void fit_latent_stats(Codec& codec, const LatentSequence& raw) {
  const int cz = codec.config.latent_channels;
  std::vector<double> sum(cz, 0.0), sq(cz, 0.0);
  double n = 0.0;
  for (const Matrix& f : raw.frames) {
    for (int c = 0; c < cz; ++c) sum[c] += f.col(c).sum();
    n += static_cast<double>(f.rows());
  }
  if (n == 0.0) throw DataError("no latent frames to fit statistics");
  for (int c = 0; c < cz; ++c) sum[c] /= n;
  for (const Matrix& f : raw.frames) {
    for (int c = 0; c < cz; ++c) sq[c] += (f.col(c).array() - sum[c]).square().sum();
  }
  for (int c = 0; c < cz; ++c) {
    const double sd = std::sqrt(sq[c] / n);
    codec.latent_mean[c] = sum[c];
    codec.latent_std[c] = sd > 1e-12 ? sd : 1.0;
  }
}

Matrix frame_to_model_space(const Codec& codec, const Matrix& raw) {
  Matrix out = raw;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    out.col(c) = (out.col(c).array() - codec.latent_mean[c]) / codec.latent_std[c];
  }
  return out;
}

Matrix frame_from_model_space(const Codec& codec, const Matrix& model) {
  Matrix out = model;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    out.col(c) = out.col(c).array() * codec.latent_std[c] + codec.latent_mean[c];
  }
  return out;
}

LatentSequence to_model_space(const Codec& codec, const LatentSequence& raw) {
  LatentSequence out = raw;
  for (Matrix& f : out.frames) f = frame_to_model_space(codec, f);
  return out;
}

LatentSequence from_model_space(const Codec& codec, const LatentSequence& model) {
  LatentSequence out = model;
  for (Matrix& f : out.frames) f = frame_from_model_space(codec, f);
  return out;
}

CodecTrainResult train_codec(const FieldSequence& data, const CodecConfig& config, const CodecTrainConfig& train) {
  data.validate();
  if (config.channels != data.n_channels) throw ConfigError("codec channels must equal dataset channel count");
  CodecTrainResult result;
  result.codec = make_codec(config, data.grid, stream_seed(train.seed, SeedStream::init));
  Codec& codec = result.codec;
  fit_normalization(codec, data);
  if (train.steps <= 0) return result;

  AdamConfig ac;
  ac.lr = train.lr;
  ac.total_steps = train.steps;
  ac.warmup_steps = std::min(100, train.steps / 10);
  Adam adam(codec.params, ac);
  Rng rng(stream_seed(train.seed, SeedStream::window));

  const int tokens = codec.lat_tokens() * codec.lon_tokens();
  auto& P = codec.params;
  Matrix batch(train.batch, config.patch_dim());
  result.losses.reserve(train.steps);
  for (int step = 0; step < train.steps; ++step) {
    // Draw whole frames and keep a random subset of their patches.
    for (int r = 0; r < train.batch;) {
      const Matrix patches = patchify(codec, data.frame(rng.uniform_int(0, data.n_steps - 1)));
      for (int k = 0; k < std::min(4, tokens) && r < train.batch; ++k, ++r) {
        batch.row(r) = patches.row(rng.uniform_int(0, tokens - 1));
      }
    }
    P.zero_grad();
    ad::Tape tape;
    ad::Var x = tape.constant(batch);
    ad::Var h = ad::gelu(ad::linear(x, tape.param(P.get("codec.enc1.w")), tape.param(P.get("codec.enc1.b"))));
    ad::Var z = ad::linear(h, tape.param(P.get("codec.enc2.w")), tape.param(P.get("codec.enc2.b")));
    h = ad::gelu(ad::linear(z, tape.param(P.get("codec.dec1.w")), tape.param(P.get("codec.dec1.b"))));
    ad::Var y = ad::linear(h, tape.param(P.get("codec.dec2.w")), tape.param(P.get("codec.dec2.b")));
    ad::Var loss = ad::mse(y, batch);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw DivergenceError("codec loss became non-finite at step " + std::to_string(step));
    }
    tape.backward(loss);
    adam.step(P);
    result.losses.push_back(value);
  }
  return result;
}

double relative_reconstruction_rmse(const Codec& codec, const FieldSequence& data) {
  double err = 0.0, var = 0.0;
  for (int t = 0; t < data.n_steps; ++t) {
    const Matrix x = patchify(codec, data.frame(t));
    const Matrix y = decode_patches(codec, encode_patches(codec, x));
    err += (y - x).squaredNorm();
    var += x.squaredNorm();
  }
  return std::sqrt(err / var);
}

}  // namespace flowcast
