#include "w2s/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "w2s/errors.hpp"

namespace w2s {
namespace {

constexpr char kMagic[4] = {'W', '2', 'S', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError("truncated checkpoint header", bytes.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[offset + i]} << (8 * i);
  return v;
}

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> get_floats(std::span<const std::uint8_t> bytes, std::size_t& offset,
                              std::size_t count) {
  if (offset + 4 * count > bytes.size()) throw ParseError("truncated checkpoint payload", bytes.size());
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::bit_cast<float>(get_u32(bytes, offset));
    offset += 4;
  }
  return out;
}

}  // namespace

Checkpoint make_checkpoint(const Model<float>& model, const SgdState<float>* state,
                           const OptimConfig* optim, std::size_t epoch, std::string rng) {
  Checkpoint c;
  c.config = model.config();
  for (const auto& p : model.params()) {
    c.names.push_back(p.name);
    c.shapes.push_back(p.value.shape());
    c.params.emplace_back(p.value.data().begin(), p.value.data().end());
  }
  if (state && !state->velocity.empty()) {
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      const auto* v = i < state->velocity.size() ? &state->velocity[i] : nullptr;
      if (v && v->size() == c.params[i].size()) c.momentum.push_back(*v);
      else c.momentum.emplace_back(c.params[i].size(), 0.0f);
    }
  }
  c.epoch = epoch;
  if (optim) c.optimizer = *optim;
  c.rng = std::move(rng);
  return c;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["model"] = ckpt.config;
  header["epoch"] = ckpt.epoch;
  header["optimizer"] = ckpt.optimizer;
  header["rng"] = ckpt.rng;
  header["has_momentum"] = !ckpt.momentum.empty();
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    params.push_back({{"name", ckpt.names[i]}, {"shape", ckpt.shapes[i]}, {"dtype", "f32"}});
  }
  header["params"] = std::move(params);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : ckpt.params) put_floats(out, p);
  for (const auto& m : ckpt.momentum) put_floats(out, m);
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("bad magic", 0);
  }
  Checkpoint c;
  c.version = get_u32(bytes, 4);
  if (c.version != Checkpoint::kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(c.version), 4);
  }
  const std::size_t len = get_u32(bytes, 8);
  if (12 + len > bytes.size()) throw ParseError("truncated checkpoint header", bytes.size());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
    c.config = header.at("model").get<ModelConfig>();
    c.epoch = header.at("epoch").get<std::size_t>();
    c.optimizer = header.at("optimizer");
    c.rng = header.at("rng").get<std::string>();
    for (const auto& p : header.at("params")) {
      if (p.at("dtype").get<std::string>() != "f32") throw ParseError("unsupported dtype", 12);
      c.names.push_back(p.at("name").get<std::string>());
      c.shapes.push_back(p.at("shape").get<Shape>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint header: ") + e.what(), 12);
  }
  std::size_t offset = 12 + len;
  for (const auto& s : c.shapes) c.params.push_back(get_floats(bytes, offset, numel(s)));
  if (header.value("has_momentum", false)) {
    for (const auto& s : c.shapes) c.momentum.push_back(get_floats(bytes, offset, numel(s)));
  }
  if (offset != bytes.size()) throw ParseError("trailing bytes after checkpoint payload", offset);
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void save_checkpoint(const Model<float>& model, const SgdState<float>* state,
                     const OptimConfig* optim, std::size_t epoch, const std::string& rng,
                     const std::filesystem::path& path) {
  save_checkpoint(make_checkpoint(model, state, optim, epoch, rng), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return deserialize(bytes);
}

void load_into(Model<float>& model, const Checkpoint& ckpt) {
  auto& params = model.params();
  if (params.size() != ckpt.params.size()) {
    throw ShapeError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt.names[i] || params[i].value.shape() != ckpt.shapes[i]) {
      throw ShapeError("checkpoint parameter '" + ckpt.names[i] + "' " + shape_str(ckpt.shapes[i]) +
                       " does not match model parameter '" + params[i].name + "' " +
                       shape_str(params[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(ckpt.params[i].begin(), ckpt.params[i].end(), params[i].value.data().begin());
  }
}

Model<float> restore_model(const Checkpoint& ckpt) {
  Model<float> model = Model<float>::build(ckpt.config, 0);
  load_into(model, ckpt);
  return model;
}

SgdState<float> restore_state(const Checkpoint& ckpt) {
  SgdState<float> state;
  state.velocity = ckpt.momentum;
  return state;
}

}  // namespace w2s
