#include "flowcast/dit.hpp"

#include <cmath>
#include <sstream>

#include "flowcast/errors.hpp"
#include "flowcast/grid.hpp"

namespace flowcast {

std::string to_string(PositionalScheme s) {
  return s == PositionalScheme::rope3d ? "rope3d" : "rope1d+spatial2d";
}

std::string to_string(CrossAttnKv k) { return k == CrossAttnKv::concat ? "concat" : "timestamps"; }

PositionalScheme parse_positional(const std::string& s) {
  if (s == "rope1d+spatial2d") return PositionalScheme::rope1d_spatial2d;
  if (s == "rope3d") return PositionalScheme::rope3d;
  throw ConfigError("unknown positional scheme '" + s + "' (rope1d+spatial2d|rope3d)");
}

CrossAttnKv parse_xattn_kv(const std::string& s) {
  if (s == "timestamps") return CrossAttnKv::timestamps;
  if (s == "concat") return CrossAttnKv::concat;
  throw ConfigError("unknown xattn_kv '" + s + "' (timestamps|concat)");
}

void DitConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("dit: " + what);
  };
  need(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  need(head_dim() % 2 == 0, "head_dim must be even for rotary embeddings");
  need(n_blocks >= 1, "n_blocks >= 1");
  need(mlp_ratio >= 1, "mlp_ratio >= 1");
  need(lora_rank >= 0, "lora_rank >= 0");
  need(timestamp_dim >= 1, "timestamp_dim >= 1");
  need(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "time_embed_dim must be even");
  need(max_context_frames >= 1 && max_target_frames >= 1, "frame maxima >= 1");
  need(latent_channels >= 1 && lat_tokens >= 1 && lon_tokens >= 1, "latent shape must be positive");
  if (positional == PositionalScheme::rope3d) rope().validate();
}

RopeConfig DitConfig::rope() const {
  RopeConfig r;
  r.head_dim = head_dim();
  r.base = rope_base;
  r.axis_split = rope_axis_split == std::array<int, 3>{0, 0, 0} ? RopeConfig::default_split(head_dim())
                                                                 : rope_axis_split;
  return r;
}

void add_dit_params(ParameterStore& P, const DitConfig& c) {
  c.validate();
  const int d = c.d_model;
  const InitRecipe tn{InitKind::trunc_normal, c.init_std};
  const InitRecipe zero{};
  P.add("embed.w", d, c.latent_channels, tn);
  P.add("embed.b", 1, d, zero);
  P.add("embed.context_flag", 1, d, tn);
  if (c.positional == PositionalScheme::rope1d_spatial2d) P.add("embed.spatial", c.tokens_per_frame(), d, tn);
  if (c.use_timestamps) {
    P.add("ts.table", kTimestampSlots, c.timestamp_dim, tn);
    P.add("ts.proj.w", d, c.timestamp_dim, tn);
    P.add("ts.proj.b", 1, d, zero);
  }
  P.add("mod.shared1.w", d, c.time_embed_dim, tn);
  P.add("mod.shared1.b", 1, d, zero);
  P.add("mod.shared2.w", 6 * d, d, zero);
  P.add("mod.shared2.b", 1, 6 * d, zero);
  const int hidden = c.mlp_ratio * d;
  for (int b = 0; b < c.n_blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    if (c.lora_rank > 0) {
      P.add(p + "lora.a", c.lora_rank, c.time_embed_dim, tn);
      P.add(p + "lora.b", 6 * d, c.lora_rank, zero);
    }
    P.add(p + "attn.qkv.w", 3 * d, d, tn);
    P.add(p + "attn.qkv.b", 1, 3 * d, zero);
    P.add(p + "attn.out.w", d, d, tn);
    P.add(p + "attn.out.b", 1, d, zero);
    if (c.use_timestamps) {
      P.add(p + "xattn.q.w", d, d, tn);
      P.add(p + "xattn.q.b", 1, d, zero);
      P.add(p + "xattn.kv.w", 2 * d, d, tn);
      P.add(p + "xattn.kv.b", 1, 2 * d, zero);
      P.add(p + "xattn.out.w", d, d, zero);
      P.add(p + "xattn.out.b", 1, d, zero);
    }
    P.add(p + "mlp.fc1.w", hidden, d, tn);
    P.add(p + "mlp.fc1.b", 1, hidden, zero);
    P.add(p + "mlp.fc2.w", d, hidden, tn);
    P.add(p + "mlp.fc2.b", 1, d, zero);
  }
  P.add("final.w", c.latent_channels, d, zero);
  P.add("final.b", 1, c.latent_channels, zero);
}

DitModel make_dit(const DitConfig& config, std::uint64_t seed) {
  DitModel m;
  m.config = config;
  add_dit_params(m.params, config);
  m.params.initialize(seed);
  return m;
}

Matrix flow_time_embedding(double t, int dim) {
  const int half = dim / 2;
  Matrix e(1, dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    const double a = 1000.0 * t * freq;
    e(0, i) = std::cos(a);
    e(0, half + i) = std::sin(a);
  }
  return e;
}

DitPlans make_plans(const DitConfig& c, int n_frames) {
  const int S = c.tokens_per_frame();
  std::vector<int> frame_of(static_cast<std::size_t>(n_frames) * S), lat(frame_of.size()), lon(frame_of.size());
  for (int f = 0; f < n_frames; ++f) {
    for (int s = 0; s < S; ++s) {
      frame_of[f * S + s] = f;
      lat[f * S + s] = s / c.lon_tokens;
      lon[f * S + s] = s % c.lon_tokens;
    }
  }
  RopeConfig r1 = c.rope();
  DitPlans plans;
  if (c.positional == PositionalScheme::rope3d) {
    plans.self_attn = std::make_shared<const RotaryPlan>(rope3d_plan(frame_of, lat, lon, r1));
  } else {
    plans.self_attn = std::make_shared<const RotaryPlan>(rope1d_plan(frame_of, r1));
  }
  // Cross-attention always uses the temporal rotation only: timestamp rows
  // have a frame position and no spatial one.
  plans.cross_query = std::make_shared<const RotaryPlan>(rope1d_plan(frame_of, r1));
  std::vector<int> key_pos(n_frames);
  for (int f = 0; f < n_frames; ++f) key_pos[f] = f;
  if (c.xattn_kv == CrossAttnKv::concat) key_pos.insert(key_pos.end(), frame_of.begin(), frame_of.end());
  plans.cross_key = std::make_shared<const RotaryPlan>(rope1d_plan(key_pos, r1));
  return plans;
}

namespace {

const Parameter& prm(const ParameterStore& P, const std::string& name) { return P.get(name); }

ad::Var lin(ad::Tape& t, const ParameterStore& P, const std::string& name, ad::Var x) {
  return ad::linear(x, t.param(prm(P, name + ".w")), t.param(prm(P, name + ".b")));
}

ad::Var shared_modulation(ad::Tape& t, const ParameterStore& P, ad::Var temb) {
  return lin(t, P, "mod.shared2", ad::silu(lin(t, P, "mod.shared1", temb)));
}

ad::Var block_modulation(ad::Tape& t, const ParameterStore& P, const DitConfig& c, ad::Var shared, ad::Var temb,
                         int block) {
  if (c.lora_rank == 0) return shared;
  const std::string p = "blocks." + std::to_string(block) + ".lora.";
  ad::Var low = ad::matmul_nt(temb, t.param(prm(P, p + "a")));
  return ad::add(shared, ad::matmul_nt(low, t.param(prm(P, p + "b"))));
}

}  // namespace

ad::Var tokenize(ad::Tape& t, const ParameterStore& P, const DitConfig& c, const Matrix& context,
                 const Matrix& noisy) {
  const int S = c.tokens_per_frame();
  if (context.cols() != c.latent_channels || noisy.cols() != c.latent_channels) {
    throw std::invalid_argument("latent width does not match dit config");
  }
  if (context.rows() % S != 0 || noisy.rows() % S != 0) throw std::invalid_argument("latent rows not whole frames");
  const int K = static_cast<int>(context.rows() / S);
  const int N = static_cast<int>(noisy.rows() / S);
  if (K < 1 || K > c.max_context_frames) throw std::invalid_argument("context frame count outside [1, max]");
  if (N < 1 || N > c.max_target_frames) throw std::invalid_argument("target frame count outside [1, max]");
  Matrix stacked(context.rows() + noisy.rows(), c.latent_channels);
  stacked << context, noisy;
  ad::Var x = lin(t, P, "embed", t.constant(std::move(stacked)));
  std::vector<int> flag(static_cast<std::size_t>((K + N) * S), -1);
  std::fill(flag.begin(), flag.begin() + K * S, 0);
  x = ad::add_gathered(x, t.param(prm(P, "embed.context_flag")), std::move(flag));
  if (c.positional == PositionalScheme::rope1d_spatial2d) {
    x = ad::apply_spatial_embed(x, t.param(prm(P, "embed.spatial")));
  }
  return x;
}

ad::Var modulation(ad::Tape& t, const ParameterStore& P, const DitConfig& c, double flow_time, int block) {
  ad::Var temb = t.constant(flow_time_embedding(flow_time, c.time_embed_dim));
  return block_modulation(t, P, c, shared_modulation(t, P, temb), temb, block);
}

ad::Var timestamp_rows(ad::Tape& t, const ParameterStore& P, const DitConfig& c, const std::vector<int>& slots) {
  const Parameter& table = prm(P, "ts.table");
  Matrix rows(static_cast<Eigen::Index>(slots.size()), c.timestamp_dim);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] < 0 || slots[i] >= kTimestampSlots) throw std::invalid_argument("timestamp slot out of range");
    rows.row(static_cast<Eigen::Index>(i)) = table.value.row(slots[i]);
  }
  ad::Var looked = t.leaf(std::move(rows), [&table, slots](const Matrix& g) {
    for (std::size_t i = 0; i < slots.size(); ++i) table.grad.row(slots[i]) += g.row(static_cast<Eigen::Index>(i));
  });
  return lin(t, P, "ts.proj", looked);
}

ad::Var dit_block(ad::Tape& t, const ParameterStore& P, const DitConfig& c, int block, ad::Var x, ad::Var ts,
                  ad::Var mod, const DitPlans& plans, BlockTrace* trace) {
  const int d = c.d_model;
  const std::string p = "blocks." + std::to_string(block) + ".";
  auto piece = [&](int k) { return ad::slice_cols(mod, k * d, d); };

  // self-attention
  ad::Var h = ad::modulate(ad::layer_norm(x), piece(0), piece(1));
  ad::Var qkv = lin(t, P, p + "attn.qkv", h);
  ad::Var q = ad::rotary(ad::slice_cols(qkv, 0, d), plans.self_attn);
  ad::Var k = ad::rotary(ad::slice_cols(qkv, d, d), plans.self_attn);
  ad::Var v = ad::slice_cols(qkv, 2 * d, d);
  ad::Var a = ad::attention(q, k, v, c.n_heads, trace ? &trace->self_weights : nullptr);
  x = ad::gated_residual(x, piece(2), lin(t, P, p + "attn.out", a));

  // cross-attention to timestamp rows
  if (c.use_timestamps) {
    ad::Var hc = ad::layer_norm(x);
    ad::Var src = c.xattn_kv == CrossAttnKv::concat ? ad::concat_rows({ts, hc}) : ts;
    ad::Var kv = lin(t, P, p + "xattn.kv", src);
    ad::Var cq = ad::rotary(lin(t, P, p + "xattn.q", hc), plans.cross_query);
    ad::Var ck = ad::rotary(ad::slice_cols(kv, 0, d), plans.cross_key);
    ad::Var cv = ad::slice_cols(kv, d, d);
    ad::Var ca = ad::attention(cq, ck, cv, c.n_heads, trace ? &trace->cross_weights : nullptr);
    x = ad::add(x, lin(t, P, p + "xattn.out", ca));
  }

  // MLP
  h = ad::modulate(ad::layer_norm(x), piece(3), piece(4));
  h = lin(t, P, p + "mlp.fc2", ad::gelu(lin(t, P, p + "mlp.fc1", h)));
  return ad::gated_residual(x, piece(5), h);
}

ad::Var dit_forward(ad::Tape& t, const ParameterStore& P, const DitConfig& c, const Matrix& context,
                    const Matrix& noisy, double flow_time, const std::vector<int>& slots) {
  if (!std::isfinite(flow_time)) throw std::invalid_argument("flow time is not finite");
  const int S = c.tokens_per_frame();
  ad::Var x = tokenize(t, P, c, context, noisy);
  const int n_frames = static_cast<int>(x.rows() / S);
  const int K = static_cast<int>(context.rows() / S);
  const DitPlans plans = make_plans(c, n_frames);

  ad::Var ts{};
  if (c.use_timestamps) {
    if (static_cast<int>(slots.size()) != n_frames) throw std::invalid_argument("need one timestamp per frame");
    ts = timestamp_rows(t, P, c, slots);
  }
  ad::Var temb = t.constant(flow_time_embedding(flow_time, c.time_embed_dim));
  ad::Var shared = shared_modulation(t, P, temb);
  for (int b = 0; b < c.n_blocks; ++b) {
    x = dit_block(t, P, c, b, x, ts, block_modulation(t, P, c, shared, temb, b), plans);
  }
  ad::Var target = ad::slice_rows(x, K * S, (n_frames - K) * S);
  return lin(t, P, "final", ad::layer_norm(target));
}

Matrix predict_velocity(const DitModel& model, const Matrix& context, const Matrix& noisy, double flow_time,
                        const std::vector<int>& slots) {
  ad::Tape tape(false);
  return dit_forward(tape, model.params, model.config, context, noisy, flow_time, slots).value();
}

ParamReport param_report(const DitConfig& config) {
  ParameterStore P;
  add_dit_params(P, config);
  ParamReport r;
  std::map<std::string, std::size_t> groups;
  for (const Parameter* p : P.all()) {
    const std::string& n = p->name;
    r.total += p->size();
    std::string group;
    if (n.starts_with("mod.shared")) {
      r.shared_head += p->size();
      group = "modulation.shared";
    } else if (n.find(".lora.") != std::string::npos) {
      r.lora += p->size();
      group = "modulation.lora";
    } else if (n.starts_with("blocks.")) {
      const auto dot = n.find('.', 7);
      group = "blocks." + n.substr(dot + 1, n.find('.', dot + 1) - dot - 1);
    } else {
      group = n.substr(0, n.find('.'));
    }
    groups[group] += p->size();
  }
  r.modulation = r.shared_head + r.lora;
  r.per_block_hypothetical = static_cast<std::size_t>(config.n_blocks) * r.shared_head;
  r.modulation_fraction = static_cast<double>(r.modulation) / r.total;
  const double alt_total = static_cast<double>(r.total - r.modulation + r.per_block_hypothetical);
  r.per_block_fraction = r.per_block_hypothetical / alt_total;
  r.groups.assign(groups.begin(), groups.end());
  return r;
}

std::string format_param_report(const ParamReport& r) {
  std::ostringstream os;
  os << "group params\n";
  for (const auto& [name, n] : r.groups) os << name << ' ' << n << '\n';
  os << "total " << r.total << '\n'
     << "modulation_shared " << r.shared_head << '\n'
     << "modulation_lora " << r.lora << '\n'
     << "modulation_fraction " << r.modulation_fraction << '\n'
     << "per_block_modulation_hypothetical " << r.per_block_hypothetical << '\n'
     << "per_block_modulation_fraction " << r.per_block_fraction << '\n';
  return os.str();
}

}  // namespace flowcast
