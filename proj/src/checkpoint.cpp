#include "ctl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "ctl/errors.hpp"

namespace ctl {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'L', 'C', 'K', 'P', 'T', '\x01'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_i64(std::string& b, std::int64_t v) {
  put_u64(b, static_cast<std::uint64_t>(v));
}
void put_f64(std::string& b, double v) {
  put_u64(b, std::bit_cast<std::uint64_t>(v));
}
void put_str(std::string& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.append(s);
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw ChecksumMismatchError("checkpoint payload truncated");
    }
  }
  std::string data_;
  std::size_t pos_ = 0;
};

void put_config(std::string& b, const TrainConfig& c) {
  put_f64(b, c.margin);
  put_u32(b, static_cast<std::uint32_t>(c.batch_size));
  put_u32(b, static_cast<std::uint32_t>(c.epochs));
  put_u32(b, static_cast<std::uint32_t>(c.validate_every));
  put_f64(b, c.learning_rate);
  put_f64(b, c.adam_beta1);
  put_f64(b, c.adam_beta2);
  put_f64(b, c.adam_eps);
  put_f64(b, c.dropout);
  put_u64(b, c.seed);
  put_u64(b, c.eval_seed);
  put_str(b, to_string(c.variant));
  put_u32(b, static_cast<std::uint32_t>(c.embed_dim));
}

TrainConfig read_config(Reader& r) {
  TrainConfig c;
  c.margin = r.f64();
  c.batch_size = static_cast<int>(r.u32());
  c.epochs = static_cast<int>(r.u32());
  c.validate_every = static_cast<int>(r.u32());
  c.learning_rate = r.f64();
  c.adam_beta1 = r.f64();
  c.adam_beta2 = r.f64();
  c.adam_eps = r.f64();
  c.dropout = r.f64();
  c.seed = r.u64();
  c.eval_seed = r.u64();
  c.variant = variant_from_string(r.str());
  c.embed_dim = static_cast<int>(r.u32());
  return c;
}

void put_head_config(std::string& b, const HeadConfig& h) {
  put_u32(b, static_cast<std::uint32_t>(h.spec.d1));
  put_u32(b, static_cast<std::uint32_t>(h.spec.map_w));
  put_u32(b, static_cast<std::uint32_t>(h.spec.map_h));
  put_u32(b, static_cast<std::uint32_t>(h.spec.d2));
  put_u32(b, static_cast<std::uint32_t>(h.embed_dim));
  put_u32(b, static_cast<std::uint32_t>(h.n_categories));
  put_str(b, to_string(h.variant));
  put_f64(b, h.bn_eps);
  put_f64(b, h.bn_momentum);
  put_f64(b, h.dropout);
}

HeadConfig read_head_config(Reader& r) {
  HeadConfig h;
  h.spec.d1 = static_cast<int>(r.u32());
  h.spec.map_w = static_cast<int>(r.u32());
  h.spec.map_h = static_cast<int>(r.u32());
  h.spec.d2 = static_cast<int>(r.u32());
  h.embed_dim = static_cast<int>(r.u32());
  h.n_categories = static_cast<int>(r.u32());
  h.variant = variant_from_string(r.str());
  h.bn_eps = r.f64();
  h.bn_momentum = r.f64();
  h.dropout = r.f64();
  return h;
}

}  // namespace

AdamState init_adam(Head& head) {
  AdamState s;
  for (const auto& t : trainable_tensors(head)) {
    s.m.emplace_back(t.size, 0.0);
    s.v.emplace_back(t.size, 0.0);
  }
  return s;
}

Head allocate_head(const HeadConfig& cfg) {
  Head h;
  h.cfg = cfg;
  const int hidden = cfg.hidden_dim();
  auto alloc = [&](int in) {
    ProjectionParams p;
    p.w1 = Mat(in, hidden);
    p.b1.assign(hidden, 0.0);
    p.gamma.assign(hidden, 0.0);
    p.beta.assign(hidden, 0.0);
    p.running_mean.assign(hidden, 0.0);
    p.running_var.assign(hidden, 0.0);
    p.w2 = Mat(hidden, cfg.embed_dim);
    p.b2.assign(cfg.embed_dim, 0.0);
    return p;
  };
  h.global_net = alloc(cfg.spec.d1);
  h.local_net = alloc(cfg.spec.d2);
  h.attn_net = alloc(cfg.spec.d2);
  h.categories = Mat(cfg.n_categories, cfg.embed_dim);
  return h;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string b(kMagic, sizeof(kMagic));
  put_u32(b, kVersion);
  put_config(b, ckpt.config);
  put_head_config(b, ckpt.head_cfg);
  put_i64(b, ckpt.epoch);
  put_f64(b, ckpt.val_accuracy);

  Head& head = const_cast<Head&>(ckpt.head);
  const auto tensors = state_tensors(head);
  put_u32(b, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_str(b, t.name);
    put_u32(b, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(b, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size; ++i) put_f64(b, t.data[i]);
  }

  put_i64(b, ckpt.adam.step);
  put_u32(b, static_cast<std::uint32_t>(ckpt.adam.m.size()));
  for (const auto& vec : ckpt.adam.m) {
    put_u64(b, vec.size());
    for (double x : vec) put_f64(b, x);
  }
  for (const auto& vec : ckpt.adam.v) {
    put_u64(b, vec.size());
    for (double x : vec) put_f64(b, x);
  }

  put_str(b, ckpt.sampler_rng);
  put_str(b, ckpt.dropout_rng);

  const auto crc = static_cast<std::uint32_t>(::crc32(
      0L, reinterpret_cast<const Bytef*>(b.data()), static_cast<uInt>(b.size())));
  put_u32(b, crc);
  return b;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatVersionMismatchError("'" + path + "' is not a checkpoint");
  }
  const std::string payload = bytes.substr(0, bytes.size() - 4);
  Reader crc_reader(bytes.substr(bytes.size() - 4));
  const std::uint32_t stored_crc = crc_reader.u32();
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));
  if (crc != stored_crc) {
    throw ChecksumMismatchError("checkpoint '" + path + "' failed its CRC");
  }

  Reader r(payload.substr(sizeof(kMagic)));
  if (r.u32() != kVersion) {
    throw FormatVersionMismatchError("unsupported checkpoint version in '" +
                                     path + "'");
  }
  Checkpoint ckpt;
  ckpt.config = read_config(r);
  ckpt.head_cfg = read_head_config(r);
  ckpt.epoch = r.i64();
  ckpt.val_accuracy = r.f64();

  ckpt.head = allocate_head(ckpt.head_cfg);
  auto tensors = state_tensors(ckpt.head);
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != tensors.size()) {
    throw FormatVersionMismatchError("unexpected tensor count in '" + path +
                                     "'");
  }
  for (auto& t : tensors) {
    const std::string name = r.str();
    if (name != t.name) {
      throw FormatVersionMismatchError("tensor '" + name +
                                       "' out of order in '" + path + "'");
    }
    const std::uint32_t ndims = r.u32();
    if (ndims != t.shape.size()) {
      throw FormatVersionMismatchError("tensor '" + name + "' rank mismatch");
    }
    for (std::size_t d = 0; d < ndims; ++d) {
      if (static_cast<int>(r.u32()) != t.shape[d]) {
        throw FormatVersionMismatchError("tensor '" + name + "' shape mismatch");
      }
    }
    for (std::size_t i = 0; i < t.size; ++i) t.data[i] = r.f64();
  }

  ckpt.adam.step = r.i64();
  const std::uint32_t n_moments = r.u32();
  ckpt.adam.m.resize(n_moments);
  ckpt.adam.v.resize(n_moments);
  for (auto& vec : ckpt.adam.m) {
    vec.resize(r.u64());
    for (auto& x : vec) x = r.f64();
  }
  for (auto& vec : ckpt.adam.v) {
    vec.resize(r.u64());
    for (auto& x : vec) x = r.f64();
  }

  ckpt.sampler_rng = r.str();
  ckpt.dropout_rng = r.str();
  if (!r.done()) {
    throw ChecksumMismatchError("trailing bytes in checkpoint '" + path + "'");
  }
  return ckpt;
}

}  // namespace ctl
