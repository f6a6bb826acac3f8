#include "flowcast/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <iomanip>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowcast/errors.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

struct TensorRef {
  std::string name;
  const Matrix* value;
};

Matrix row_of(const std::vector<double>& v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

std::vector<double> vec_of(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

json adam_config_json(const AdamConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps},
          {"min_lr_fraction", c.min_lr_fraction},
          {"grad_clip", c.grad_clip}};
}

AdamConfig adam_config_from(const json& j) {
  AdamConfig c;
  c.lr = j.at("lr");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.eps = j.at("eps");
  c.weight_decay = j.at("weight_decay");
  c.warmup_steps = j.at("warmup_steps");
  c.total_steps = j.at("total_steps");
  c.min_lr_fraction = j.at("min_lr_fraction");
  c.grad_clip = j.at("grad_clip");
  return c;
}

struct RawFile {
  json manifest;
  std::string blob;
};

RawFile read_raw(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::exception& e) {
    throw FormatError(FormatErrorKind::io, e.what());
  }
  if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError(FormatErrorKind::bad_magic, path.string() + " is not a checkpoint");
  }
  std::size_t pos = sizeof kCheckpointMagic;
  if (bytes.size() < pos + 8) throw FormatError(FormatErrorKind::truncated_header, "missing manifest length");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + pos, 8);
  pos += 8;
  if (len > bytes.size() - pos) throw FormatError(FormatErrorKind::truncated_header, "manifest runs past end of file");
  RawFile raw;
  try {
    raw.manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::bad_header, std::string("manifest is not valid JSON: ") + e.what());
  }
  raw.blob = bytes.substr(pos + len);
  return raw;
}

// Checks that the tensor directory tiles the blob and returns name -> matrix.
std::map<std::string, Matrix> read_tensors(const json& manifest, const std::string& blob) {
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw FormatError(FormatErrorKind::bad_header, "manifest has no tensor directory");
  }
  std::map<std::string, Matrix> out;
  std::uint64_t expect = 0;
  for (const auto& t : manifest["tensors"]) {
    std::string name;
    std::uint64_t rows = 0, cols = 0, offset = 0, nbytes = 0;
    try {
      name = t.at("name").get<std::string>();
      rows = t.at("shape").at(0).get<std::uint64_t>();
      cols = t.at("shape").at(1).get<std::uint64_t>();
      offset = t.at("offset").get<std::uint64_t>();
      nbytes = t.at("bytes").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(FormatErrorKind::bad_header, std::string("bad tensor entry: ") + e.what());
    }
    if (offset != expect) {
      throw FormatError(FormatErrorKind::manifest_inconsistent,
                        "tensor " + name + " at offset " + std::to_string(offset) + ", expected " +
                            std::to_string(expect));
    }
    if (nbytes != rows * cols * sizeof(double)) {
      throw FormatError(FormatErrorKind::manifest_inconsistent, "tensor " + name + " byte length disagrees with shape");
    }
    if (offset + nbytes > blob.size()) {
      throw FormatError(FormatErrorKind::manifest_inconsistent, "tensor " + name + " runs past end of blob");
    }
    if (out.contains(name)) throw FormatError(FormatErrorKind::manifest_inconsistent, "duplicate tensor " + name);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (nbytes) std::memcpy(m.data(), blob.data() + offset, nbytes);
    out.emplace(name, std::move(m));
    expect = offset + nbytes;
  }
  if (expect != blob.size()) {
    throw FormatError(FormatErrorKind::manifest_inconsistent,
                      "blob has " + std::to_string(blob.size()) + " bytes, tensors cover " + std::to_string(expect));
  }
  return out;
}

Matrix take(std::map<std::string, Matrix>& tensors, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError(FormatErrorKind::manifest_inconsistent, "missing tensor " + name);
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw FormatError(FormatErrorKind::shape_mismatch,
                      name + " is " + std::to_string(it->second.rows()) + "x" + std::to_string(it->second.cols()) +
                          ", config expects " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m = std::move(it->second);
  tensors.erase(it);
  return m;
}

void load_store(std::map<std::string, Matrix>& tensors, const std::string& prefix, ParameterStore& store) {
  for (Parameter* p : store.all()) p->value = take(tensors, prefix + p->name, p->value.rows(), p->value.cols());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<TensorRef> refs;
  std::vector<std::unique_ptr<Matrix>> owned;
  auto keep = [&](const std::string& name, Matrix m) {
    owned.push_back(std::make_unique<Matrix>(std::move(m)));
    refs.push_back({name, owned.back().get()});
  };

  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["dtype"] = "float64-le";
  manifest["config"] = to_flat_json(ckpt.config);
  manifest["parts"] = json::array();
  if (ckpt.codec) {
    const Codec& c = *ckpt.codec;
    manifest["parts"].push_back("codec");
    manifest["codec"] = {{"hash", std::to_string(c.hash())},
                         {"channel_mean", c.channel_mean},
                         {"channel_std", c.channel_std},
                         {"latent_mean", c.latent_mean},
                         {"latent_std", c.latent_std}};
    for (const Parameter* p : c.params.all()) refs.push_back({"codec/" + p->name, &p->value});
    keep("codec/norm.channel_mean", row_of(c.channel_mean));
    keep("codec/norm.channel_std", row_of(c.channel_std));
    keep("codec/norm.latent_mean", row_of(c.latent_mean));
    keep("codec/norm.latent_std", row_of(c.latent_std));
  }
  if (ckpt.model) {
    manifest["parts"].push_back("model");
    for (const Parameter* p : ckpt.model->params.all()) refs.push_back({"model/" + p->name, &p->value});
  }
  if (ckpt.adam) {
    if (!ckpt.model) throw ConfigError("optimizer state without a model");
    manifest["parts"].push_back("adam");
    manifest["adam"] = {{"step", ckpt.adam->steps_taken()}, {"config", adam_config_json(ckpt.adam->config())}};
    for (const auto& [name, m] : ckpt.adam->first_moments()) refs.push_back({"adam.m/" + name, &m});
    for (const auto& [name, v] : ckpt.adam->second_moments()) refs.push_back({"adam.v/" + name, &v});
  }
  manifest["extra"] = ckpt.extra;

  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& r : refs) {
    const std::uint64_t nbytes = static_cast<std::uint64_t>(r.value->size()) * sizeof(double);
    dir.push_back({{"name", r.name}, {"shape", {r.value->rows(), r.value->cols()}}, {"offset", offset}, {"bytes", nbytes}});
    offset += nbytes;
  }
  manifest["tensors"] = std::move(dir);

  const std::string text = manifest.dump(1);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError(FormatErrorKind::io, "cannot write " + tmp.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint64_t len = text.size();
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& r : refs) {
      os.write(reinterpret_cast<const char*>(r.value->data()), static_cast<std::streamsize>(r.value->size() * sizeof(double)));
    }
    if (!os) throw FormatError(FormatErrorKind::io, "short write to " + tmp.string());
  }
  // rename keeps the previous checkpoint intact until the new one is complete
  std::filesystem::rename(tmp, path);
}

json read_checkpoint_manifest(const std::filesystem::path& path) { return read_raw(path).manifest; }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  RawFile raw = read_raw(path);
  const json& man = raw.manifest;
  if (!man.contains("format_version") || !man["format_version"].is_number_integer()) {
    throw FormatError(FormatErrorKind::bad_header, "manifest lacks format_version");
  }
  if (man["format_version"].get<int>() != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::version_mismatch,
                      "checkpoint version " + man["format_version"].dump() + ", reader supports " +
                          std::to_string(kCheckpointVersion));
  }
  auto tensors = read_tensors(man, raw.blob);

  Checkpoint ck;
  try {
    apply_flat_json(ck.config, man.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::bad_header, e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::bad_header, std::string("stored config: ") + e.what());
  }
  const auto parts = man.value("parts", json::array());
  auto has = [&](const char* p) { return std::find(parts.begin(), parts.end(), p) != parts.end(); };

  if (has("codec")) {
    Codec c = make_codec(ck.config.codec, ck.config.data.grid, 0);
    load_store(tensors, "codec/", c.params);
    const int C = c.config.channels, cz = c.config.latent_channels;
    c.channel_mean = vec_of(take(tensors, "codec/norm.channel_mean", 1, C));
    c.channel_std = vec_of(take(tensors, "codec/norm.channel_std", 1, C));
    c.latent_mean = vec_of(take(tensors, "codec/norm.latent_mean", 1, cz));
    c.latent_std = vec_of(take(tensors, "codec/norm.latent_std", 1, cz));
    const std::string stored = man.at("codec").value("hash", "");
    if (stored != std::to_string(c.hash())) {
      throw FormatError(FormatErrorKind::manifest_inconsistent, "codec hash does not match its tensors");
    }
    ck.codec = std::move(c);
  }
  if (has("model")) {
    DitModel m{ck.config.dit, {}};
    add_dit_params(m.params, m.config);
    load_store(tensors, "model/", m.params);
    ck.model = std::move(m);
  }
  if (has("adam")) {
    if (!ck.model) throw FormatError(FormatErrorKind::manifest_inconsistent, "optimizer state without a model");
    Adam a(ck.model->params, adam_config_from(man.at("adam").at("config")));
    for (auto& [name, mom] : a.first_moments()) mom = take(tensors, "adam.m/" + name, mom.rows(), mom.cols());
    for (auto& [name, mom] : a.second_moments()) mom = take(tensors, "adam.v/" + name, mom.rows(), mom.cols());
    a.set_steps_taken(man.at("adam").at("step").get<long>());
    ck.adam = std::move(a);
  }
  if (!tensors.empty()) {
    throw FormatError(FormatErrorKind::manifest_inconsistent, "unclaimed tensor " + tensors.begin()->first);
  }
  ck.extra = man.value("extra", json::object());
  return ck;
}

FieldSequence decode_member(const Codec& codec, const LatentSequence& model_space, const FieldSequence& like) {
  FieldSequence out = decode_sequence(codec, from_model_space(codec, model_space), like);
  for (int t = 0; t < out.n_steps; ++t) {
    for (int c = out.n_channels - out.n_static; c < out.n_channels; ++c) {
      const auto src = like.channel(0, c);
      std::copy(src.begin(), src.end(), out.values.begin() + static_cast<std::ptrdiff_t>(out.index(t, c, 0, 0)));
    }
  }
  return out;
}

json write_ensemble(const std::filesystem::path& dir, const EnsembleForecast& fc, const Codec& codec,
                    const FieldSequence& like) {
  std::filesystem::create_directories(dir);
  json man;
  man["init_time"] = fc.init_time.to_string();
  man["init_hours_since_epoch"] = fc.init_time.hours_since_epoch();
  man["lead_frames"] = fc.lead_frames();
  man["step_hours"] = fc.members.empty() ? 0 : fc.members.front().step_hours;
  man["codec_hash"] = std::to_string(codec.hash());
  man["members"] = json::array();
  for (std::size_t m = 0; m < fc.members.size(); ++m) {
    std::ostringstream name;
    name << "member_" << std::setw(3) << std::setfill('0') << m << ".mrchk";
    const auto file = dir / name.str();
    write_fields(decode_member(codec, fc.members[m], like), file);
    man["members"].push_back({{"index", m},
                              {"seed", std::to_string(fc.seeds[m])},
                              {"file", name.str()},
                              {"fnv1a", std::to_string(fnv1a(read_file_bytes(file)))}});
  }
  std::ofstream os(dir / "ensemble.json");
  os << man.dump(2) << "\n";
  if (!os) throw FormatError(FormatErrorKind::io, "cannot write ensemble manifest");
  return man;
}

}  // namespace flowcast
