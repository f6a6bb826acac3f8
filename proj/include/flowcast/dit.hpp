#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "flowcast/autodiff.hpp"
#include "flowcast/positional.hpp"

namespace flowcast {

enum class PositionalScheme { rope1d_spatial2d, rope3d };
enum class CrossAttnKv { timestamps, concat };

std::string to_string(PositionalScheme s);
std::string to_string(CrossAttnKv k);
PositionalScheme parse_positional(const std::string& s);
CrossAttnKv parse_xattn_kv(const std::string& s);

struct DitConfig {
  int d_model = 192;
  int n_heads = 6;
  int n_blocks = 8;
  int mlp_ratio = 4;
  int lora_rank = 8;
  int timestamp_dim = 64;
  int time_embed_dim = 256;
  int max_context_frames = 4;
  int max_target_frames = 32;
  int latent_channels = 5;
  int lat_tokens = 6;
  int lon_tokens = 12;
  PositionalScheme positional = PositionalScheme::rope1d_spatial2d;
  CrossAttnKv xattn_kv = CrossAttnKv::timestamps;
  bool use_timestamps = true;
  double rope_base = 10000.0;
  std::array<int, 3> rope_axis_split{0, 0, 0};  // zeros: half / quarter / quarter
  double init_std = 0.02;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  int tokens_per_frame() const { return lat_tokens * lon_tokens; }
  int max_frames() const { return max_context_frames + max_target_frames; }
  RopeConfig rope() const;
};

/// Registers every array with its init recipe (projections truncated normal,
/// gates / output head / LoRA B zero).
void add_dit_params(ParameterStore& params, const DitConfig& config);

struct DitModel {
  DitConfig config;
  ParameterStore params;
};

DitModel make_dit(const DitConfig& config, std::uint64_t seed);

/// Sinusoidal embedding of flow time t (scaled by 1000), [1, dim]:
/// first half cosines, second half sines.
Matrix flow_time_embedding(double t, int dim);

/// Rotations shared by all blocks for a window of frames.
struct DitPlans {
  std::shared_ptr<const RotaryPlan> self_attn;
  std::shared_ptr<const RotaryPlan> cross_query;
  std::shared_ptr<const RotaryPlan> cross_key;
};

DitPlans make_plans(const DitConfig& config, int n_frames);

/// context [K * S, c_z], noisy [N * S, c_z] -> tokens [(K + N) * S, d].
ad::Var tokenize(ad::Tape& tape, const ParameterStore& params, const DitConfig& config, const Matrix& context,
                 const Matrix& noisy);

/// [1, 6d]: (shift1, scale1, gate1, shift2, scale2, gate2) for one block.
ad::Var modulation(ad::Tape& tape, const ParameterStore& params, const DitConfig& config, double flow_time,
                   int block);

/// Timestamp rows projected to d_model, one per frame slot.
ad::Var timestamp_rows(ad::Tape& tape, const ParameterStore& params, const DitConfig& config,
                       const std::vector<int>& slots);

struct BlockTrace {
  std::vector<Matrix> self_weights;
  std::vector<Matrix> cross_weights;
};

ad::Var dit_block(ad::Tape& tape, const ParameterStore& params, const DitConfig& config, int block, ad::Var tokens,
                  ad::Var ts_rows, ad::Var mod, const DitPlans& plans, BlockTrace* trace = nullptr);

/// Velocity for the target frames, [N * S, c_z]. `slots` holds one
/// timestamp index per frame (K + N entries).
ad::Var dit_forward(ad::Tape& tape, const ParameterStore& params, const DitConfig& config, const Matrix& context,
                    const Matrix& noisy, double flow_time, const std::vector<int>& slots);

/// Non-recording forward.
Matrix predict_velocity(const DitModel& model, const Matrix& context, const Matrix& noisy, double flow_time,
                        const std::vector<int>& slots);

struct ParamReport {
  std::size_t total = 0;
  std::size_t shared_head = 0;
  std::size_t lora = 0;
  std::size_t modulation = 0;            // shared_head + lora
  std::size_t per_block_hypothetical = 0;  // n_blocks * shared_head
  double modulation_fraction = 0.0;
  double per_block_fraction = 0.0;  // of the model with per-block heads instead
  std::vector<std::pair<std::string, std::size_t>> groups;
};

ParamReport param_report(const DitConfig& config);
std::string format_param_report(const ParamReport& report);

}  // namespace flowcast
