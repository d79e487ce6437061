#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kigan/adam.hpp"
#include "kigan/gan.hpp"
#include "kigan/json_io.hpp"

namespace kigan {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Generator + discriminator + both optimizer states, enough to resume a
// run exactly where it stopped.
struct Checkpoint {
  ModelConfig model;
  std::uint64_t seed = 0;
  int epochs_completed = 0;
  GeneratorModel gen;
  DiscriminatorModel disc;
  AdamState adam_g, adam_d;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

class ByteCursor {
 public:
  explicit ByteCursor(std::string_view data) : data_(data) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw_format("checkpoint: truncated file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void put_named_tensor(std::string& out, const std::string& name, const Shape& shape,
                             std::span<const double> data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_u64(out, d);
  for (double v : data) put_f64(out, v);
}

struct NamedBuffers {
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::span<const double>> data;
  std::vector<std::span<double>> mutable_data;

  void add(const std::string& name, const Shape& shape, std::span<double> buf) {
    names.push_back(name);
    shapes.push_back(shape);
    data.emplace_back(buf.data(), buf.size());
    mutable_data.push_back(buf);
  }
};

inline NamedBuffers collect_buffers(Checkpoint& ck) {
  NamedBuffers out;
  const auto& gnames = ck.gen.params.names();
  auto& gtensors = ck.gen.params.tensors();
  for (std::size_t i = 0; i < gtensors.size(); ++i)
    out.add("gen." + gnames[i], gtensors[i].shape(), gtensors[i].values());
  const auto& dnames = ck.disc.params.names();
  auto& dtensors = ck.disc.params.tensors();
  for (std::size_t i = 0; i < dtensors.size(); ++i)
    out.add("disc." + dnames[i], dtensors[i].shape(), dtensors[i].values());
  for (std::size_t i = 0; i < ck.adam_g.m.size(); ++i) {
    out.add("adam_g.m." + gnames[i], gtensors[i].shape(), ck.adam_g.m[i]);
    out.add("adam_g.v." + gnames[i], gtensors[i].shape(), ck.adam_g.v[i]);
  }
  for (std::size_t i = 0; i < ck.adam_d.m.size(); ++i) {
    out.add("adam_d.m." + dnames[i], dtensors[i].shape(), ck.adam_d.m[i]);
    out.add("adam_d.v." + dnames[i], dtensors[i].shape(), ck.adam_d.v[i]);
  }
  return out;
}

}  // namespace detail

constexpr char kCheckpointMagic[4] = {'K', 'I', 'G', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Takes a copy: parameter tensors share storage, so only the optimizer
// moment vectors are duplicated.
inline std::string checkpoint_serialize(Checkpoint ck) {
  json meta = {{"model", model_config_to_json(ck.model)},
               {"seed", ck.seed},
               {"epochs_completed", ck.epochs_completed},
               {"adam_g",
                {{"lr", ck.adam_g.learning_rate}, {"step", ck.adam_g.step}}},
               {"adam_d",
                {{"lr", ck.adam_d.learning_rate}, {"step", ck.adam_d.step}}}};
  const std::string meta_str = meta.dump();

  std::string out;
  out.append(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
  out += meta_str;

  auto buffers = detail::collect_buffers(ck);
  detail::put_u32(out, static_cast<std::uint32_t>(buffers.names.size()));
  for (std::size_t i = 0; i < buffers.names.size(); ++i)
    detail::put_named_tensor(out, buffers.names[i], buffers.shapes[i], buffers.data[i]);

  detail::put_u64(out, fnv1a64(out));
  return out;
}

inline Checkpoint checkpoint_deserialize(std::string_view bytes) {
  if (bytes.size() < 20) throw_format("checkpoint: truncated file");
  const std::uint64_t stored_sum = detail::ByteCursor(bytes.substr(bytes.size() - 8)).u64();
  if (fnv1a64(bytes.substr(0, bytes.size() - 8)) != stored_sum)
    throw_format("checkpoint: checksum mismatch (corrupt file)");

  detail::ByteCursor cur(bytes.substr(0, bytes.size() - 8));
  if (cur.bytes(4) != std::string(kCheckpointMagic, 4))
    throw_format("checkpoint: bad magic (not a checkpoint file)");
  const std::uint32_t version = cur.u32();
  if (version != kCheckpointVersion)
    throw_version("checkpoint: unsupported version " + std::to_string(version));

  const std::uint32_t meta_len = cur.u32();
  json meta;
  try {
    meta = json::parse(cur.bytes(meta_len));
  } catch (const json::exception&) {
    throw_format("checkpoint: unreadable metadata");
  }

  Checkpoint ck;
  try {
    ck.model = model_config_from_json(meta.at("model"), "checkpoint model config");
    ck.seed = meta.at("seed").get<std::uint64_t>();
    ck.epochs_completed = meta.at("epochs_completed").get<int>();
  } catch (const json::exception&) {
    throw_format("checkpoint: missing metadata fields");
  }

  ck.gen = GeneratorModel(ck.model, ck.seed);
  ck.disc = DiscriminatorModel(ck.model, ck.seed);
  ck.adam_g.init(ck.gen.params.tensors(), meta.at("adam_g").at("lr").get<double>());
  ck.adam_d.init(ck.disc.params.tensors(), meta.at("adam_d").at("lr").get<double>());
  ck.adam_g.step = meta.at("adam_g").at("step").get<std::int64_t>();
  ck.adam_d.step = meta.at("adam_d").at("step").get<std::int64_t>();

  auto buffers = detail::collect_buffers(ck);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < buffers.names.size(); ++i) index.emplace(buffers.names[i], i);

  const std::uint32_t count = cur.u32();
  if (count != buffers.names.size())
    throw_format("checkpoint: tensor count mismatch (" + std::to_string(count) + " stored, " +
                 std::to_string(buffers.names.size()) + " expected)");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = cur.u32();
    const std::string name = cur.bytes(name_len);
    auto it = index.find(name);
    if (it == index.end()) throw_format("checkpoint: unexpected tensor '" + name + "'");
    const std::uint32_t ndim = cur.u32();
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = cur.u64();
    if (shape != buffers.shapes[it->second])
      throw_format("checkpoint: shape mismatch for tensor '" + name + "'");
    auto dst = buffers.mutable_data[it->second];
    for (double& v : dst) v = cur.f64();
  }
  return ck;
}

inline void checkpoint_save(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("checkpoint: cannot open '" + path + "' for writing");
  const std::string bytes = checkpoint_serialize(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_data("checkpoint: write to '" + path + "' failed");
}

inline Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("checkpoint: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_deserialize(bytes);
}

// Load with a guard: the stored architecture must match what the caller
// expects to run.
inline Checkpoint checkpoint_load_expect(const std::string& path, const ModelConfig& expected) {
  Checkpoint ck = checkpoint_load(path);
  if (!(ck.model == expected))
    throw_config("checkpoint: stored model configuration does not match the requested one");
  return ck;
}

}  // namespace kigan
