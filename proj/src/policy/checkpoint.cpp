#include "mtvrp/policy/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mtvrp/core/io.hpp"

namespace mtvrp::policy {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'T', 'V', 'R', 'P', 'C', 'K', 'P'};
constexpr std::uint8_t kDtypeF64 = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint is truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

// Name -> shape of every tensor a checkpoint with this header must contain.
std::map<std::string, ad::Shape> expected_shapes(const ModelConfig& cfg, Stage stage, std::optional<Basis> expert) {
  std::map<std::string, ad::Shape> shapes;
  for (const auto& l : layer_specs(cfg)) {
    shapes[l.name + ".weight"] = {l.d_out, l.d_in};
    if (l.bias) shapes[l.name + ".bias"] = {l.d_out};
    if (!l.adapted) continue;
    const int rf = effective_rank(cfg.rank_frozen, l);
    if (stage == Stage::expert) {
      const auto p = expert_prefix(l, *expert);
      shapes[p + ".A"] = {rf, l.d_in};
      shapes[p + ".B"] = {l.d_out, rf};
      shapes[p + ".g"] = {1, l.d_in};
    } else if (stage == Stage::unified) {
      for (Basis b : kExpertBases) {
        const auto p = expert_prefix(l, b);
        shapes[p + ".A"] = {rf, l.d_in};
        shapes[p + ".B"] = {l.d_out, rf};
        shapes[p + ".g"] = {1, l.d_in};
      }
      const int rr = effective_rank(cfg.rank_free, l);
      shapes[free_prefix(l) + ".A"] = {rr, l.d_in};
      shapes[free_prefix(l) + ".B"] = {l.d_out, rr};
      shapes[gate_name(l)] = {kGateWidth, l.d_in};
    }
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (const char* n : {"norm1", "norm2"}) {
      for (const char* p : {"gamma", "beta"}) shapes["enc." + std::to_string(l) + "." + n + "." + p] = {cfg.d_model};
    }
  }
  return shapes;
}

}  // namespace

std::string serialize_checkpoint(const Policy& policy) {
  const ModelConfig& c = policy.config();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(policy.stage()));
  w.put<std::uint8_t>(policy.expert() ? static_cast<std::uint8_t>(*policy.expert()) : 0xFF);
  for (int v : {c.d_model, c.n_heads, c.n_layers, c.d_ff, c.rank_frozen, c.rank_free}) w.put<std::int32_t>(v);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.activation));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.routing));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.expert_kind));
  w.put<std::uint8_t>((c.adapt_embedding ? 1 : 0) | (c.adapt_encoder ? 2 : 0) | (c.adapt_decoder ? 4 : 0));
  w.put<double>(c.lora_beta);
  w.put<double>(c.logit_clip);
  w.put<double>(c.norm_softplus_eps);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(policy.params().size()));
  std::vector<std::uint8_t> frozen((policy.params().size() + 7) / 8, 0);
  std::size_t i = 0;
  for (const auto& [name, p] : policy.params()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(kDtypeF64);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (int d : p.value.shape()) w.put<std::int32_t>(d);
    w.bytes(p.value.data(), p.value.size() * sizeof(double));
    if (p.frozen) frozen[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    ++i;
  }
  w.bytes(frozen.data(), frozen.size());
  return w.take();
}

Policy parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto stage_raw = r.get<std::uint8_t>();
  const auto expert_raw = r.get<std::uint8_t>();
  if (stage_raw > 2) throw CheckpointError("bad stage tag");
  const Stage stage = static_cast<Stage>(stage_raw);
  std::optional<Basis> expert;
  if (expert_raw != 0xFF) {
    if (expert_raw < 1 || expert_raw > 4) throw CheckpointError("bad expert tag");
    expert = static_cast<Basis>(expert_raw);
  }
  if ((stage == Stage::expert) != expert.has_value()) throw CheckpointError("stage and expert tag disagree");

  ModelConfig c;
  c.d_model = r.get<std::int32_t>();
  c.n_heads = r.get<std::int32_t>();
  c.n_layers = r.get<std::int32_t>();
  c.d_ff = r.get<std::int32_t>();
  c.rank_frozen = r.get<std::int32_t>();
  c.rank_free = r.get<std::int32_t>();
  const auto act = r.get<std::uint8_t>();
  const auto routing = r.get<std::uint8_t>();
  const auto kind = r.get<std::uint8_t>();
  const auto flags = r.get<std::uint8_t>();
  if (act > 2 || routing > 2 || kind > 1 || flags > 7) throw CheckpointError("bad option byte");
  c.activation = static_cast<GateActivation>(act);
  c.routing = static_cast<Routing>(routing);
  c.expert_kind = static_cast<ExpertKind>(kind);
  c.adapt_embedding = flags & 1;
  c.adapt_encoder = flags & 2;
  c.adapt_decoder = flags & 4;
  c.lora_beta = r.get<double>();
  c.logit_clip = r.get<double>();
  c.norm_softplus_eps = r.get<double>();
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad dimensions: ") + e.what());
  }
  if (c.d_model > (1 << 16) || c.d_ff > (1 << 20) || c.n_layers > 1024) {
    throw CheckpointError("implausible dimensions in header");
  }

  const auto shapes = expected_shapes(c, stage, expert);
  const auto count = r.get<std::uint32_t>();
  if (count != shapes.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, header implies " +
                          std::to_string(shapes.size()));
  }
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    if (len > 4096) throw CheckpointError("tensor name too long");
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    if (r.get<std::uint8_t>() != kDtypeF64) throw CheckpointError("unsupported dtype for " + name);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("bad rank for " + name);
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::int32_t>();
    auto it = shapes.find(name);
    if (it == shapes.end()) throw CheckpointError("unexpected tensor " + name);
    if (it->second != shape) {
      throw CheckpointError("tensor " + name + " has shape " + ad::shape_str(shape) + ", header implies " +
                            ad::shape_str(it->second));
    }
    ad::Tensor t(shape);
    r.bytes(t.data(), t.size() * sizeof(double));
    tensors.emplace_back(std::move(name), std::move(t));
  }
  std::vector<std::uint8_t> frozen((count + 7) / 8);
  r.bytes(frozen.data(), frozen.size());
  if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint");

  ParameterSet ps;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const bool fz = (frozen[i / 8] >> (i % 8)) & 1u;
    try {
      ps.add(tensors[i].first, std::move(tensors[i].second), fz);
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(e.what());
    }
  }
  return Policy(c, stage, expert, std::move(ps));
}

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  write_text_file(path, serialize_checkpoint(policy));
}

Policy load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  return parse_checkpoint(bytes);
}

}  // namespace mtvrp::policy
