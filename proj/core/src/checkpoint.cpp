#include "sdpm/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "sdpm/errors.hpp"

namespace sdpm {

namespace {

struct RawTensor {
  std::uint64_t rows = 0, cols = 0;
  std::vector<double> data;
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

void put_tensor(std::string& out, const std::string& name, std::uint64_t rows, std::uint64_t cols,
                std::span<const double> data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u64(out, rows);
  put_u64(out, cols);
  for (double v : data) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}
  std::string_view bytes(std::size_t n) {
    if (n > buf_.size() - pos_) throw ValidationError("checkpoint: truncated file");
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    const auto s = bytes(4);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(k)]);
    return v;
  }
  std::uint64_t u64() {
    const auto s = bytes(8);
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(k)]);
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

nlohmann::json meta_json(const Checkpoint& c) {
  return {{"format_version", kCheckpointVersion},
          {"schema_hash", c.schema_hash()},
          {"preprocessor", c.preprocessor.to_json()},
          {"target_transform", c.transform.to_json()},
          {"schedule", c.schedule.to_json()},
          {"network", c.net.config().to_json()},
          {"info", c.info}};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& os) {
  if (ckpt.train_times.size() != ckpt.train_events.size()) {
    throw ValidationError("checkpoint: training times and events differ in length");
  }
  const std::string meta = meta_json(ckpt).dump();

  std::string tens;
  const auto& tensors = ckpt.net.tensors();
  put_u32(tens, static_cast<std::uint32_t>(tensors.size() + 2));
  const auto params = ckpt.net.parameters();
  for (const auto& t : tensors) put_tensor(tens, t.name, t.rows, t.cols, params.subspan(t.offset, t.size()));
  put_tensor(tens, "data.train_times", 1, ckpt.train_times.size(), ckpt.train_times);
  std::vector<double> ev(ckpt.train_events.begin(), ckpt.train_events.end());
  put_tensor(tens, "data.train_events", 1, ev.size(), ev);

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, 2);
  out += "META";
  put_u64(out, meta.size());
  out += meta;
  out += "TENS";
  put_u64(out, tens.size());
  out += tens;
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("checkpoint: write failed");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(ckpt, os);
}

Checkpoint load_checkpoint(std::istream& is) {
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string buf = ss.str();
  Reader r(buf);
  if (buf.size() < sizeof kCheckpointMagic ||
      std::memcmp(buf.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw ValidationError("checkpoint: bad magic, not a checkpoint file");
  }
  r.bytes(sizeof kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t sections = r.u32();

  nlohmann::json meta;
  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string tag(r.bytes(4));
    const std::uint64_t len = r.u64();
    Reader body(r.bytes(len));
    if (tag == "META") {
      try {
        meta = nlohmann::json::parse(body.bytes(len));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: corrupt metadata: ") + e.what());
      }
    } else if (tag == "TENS") {
      const std::uint32_t count = body.u32();
      for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name(body.bytes(body.u32()));
        RawTensor t;
        t.rows = body.u64();
        t.cols = body.u64();
        if (t.cols != 0 && t.rows > (len / 8) / t.cols) throw ValidationError("checkpoint: tensor too large");
        t.data.resize(t.rows * t.cols);
        for (double& v : t.data) v = std::bit_cast<double>(body.u64());
        tensors.emplace(name, std::move(t));
      }
    }
  }
  if (meta.is_null()) throw ValidationError("checkpoint: missing META section");
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");

  try {
    auto pre = Preprocessor::from_json(meta.at("preprocessor"));
    if (pre.schema_hash() != meta.at("schema_hash").get<std::uint64_t>()) {
      throw ValidationError("checkpoint: schema hash does not match preprocessor");
    }
    auto net_cfg = NetConfig::from_json(meta.at("network"));
    Checkpoint c{std::move(pre),
                 TargetTransform::from_json(meta.at("target_transform")),
                 DiffusionSchedule::from_json(meta.at("schedule")),
                 DenoiserNet(net_cfg, Preprocessor::from_json(meta.at("preprocessor")).layout(), 0),
                 {},
                 {},
                 meta.at("info")};
    auto params = c.net.parameters();
    for (const auto& t : c.net.tensors()) {
      auto it = tensors.find(t.name);
      if (it == tensors.end()) throw ValidationError("checkpoint: missing tensor '" + t.name + "'");
      if (it->second.rows != t.rows || it->second.cols != t.cols) {
        throw ValidationError("checkpoint: shape mismatch for tensor '" + t.name + "'");
      }
      std::copy(it->second.data.begin(), it->second.data.end(), params.begin() + static_cast<std::ptrdiff_t>(t.offset));
    }
    const auto times = tensors.find("data.train_times");
    const auto events = tensors.find("data.train_events");
    if (times == tensors.end() || events == tensors.end()) throw ValidationError("checkpoint: missing training targets");
    c.train_times = times->second.data;
    for (double e : events->second.data) c.train_events.push_back(static_cast<int>(e));
    if (c.train_times.size() != c.train_events.size()) throw ValidationError("checkpoint: inconsistent training targets");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: invalid metadata: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(is);
}

void describe_checkpoint(const Checkpoint& ckpt, std::ostream& os) {
  os << meta_json(ckpt).dump(2) << '\n';
  os << "training subjects: " << ckpt.train_times.size() << '\n';
  os << "parameters: " << ckpt.net.parameter_count() << '\n';
  os << "tensors:\n";
  const auto params = ckpt.net.parameters();
  for (const auto& t : ckpt.net.tensors()) {
    double sq = 0.0;
    for (double v : params.subspan(t.offset, t.size())) sq += v * v;
    os << "  " << t.name << " [" << t.rows << " x " << t.cols << "] l2=" << std::sqrt(sq) << '\n';
  }
}

}  // namespace sdpm
