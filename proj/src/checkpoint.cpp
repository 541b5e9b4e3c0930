#include "cp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cp/error.hpp"
#include "cp/run_config.hpp"

namespace cp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'P', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() < pos_ || bytes_.size() - pos_ < n) throw Error("corrupt checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const CatchProlongNet& net, const json& training) {
  json table = json::array();
  for (const auto& [name, t] : net.params()) table.push_back({{"name", name}, {"shape", t.shape}});
  const json header{{"model", to_json(net.config())}, {"training", training}, {"tensors", table}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, t] : net.params()) {
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  return out;
}

void save_checkpoint(const std::string& path, const CatchProlongNet& net, const json& training) {
  const std::string bytes = encode_checkpoint(net, training);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("checkpoint write failed for '" + path + "'");
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Cursor cur(bytes);
  if (cur.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw Error("not a checkpoint: bad magic");
  const auto version = cur.get<std::uint32_t>();
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = cur.get<std::uint64_t>();
  json header;
  try {
    header = json::parse(cur.take(header_len));
  } catch (const json::exception& e) {
    throw Error(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  ck.model = model_from_json(header.at("model"));
  ck.training = header.value("training", json(nullptr));
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t(shape);
    const std::string raw = cur.take(t.size() * sizeof(double));
    std::memcpy(t.values.data(), raw.data(), raw.size());
    ck.params.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  const std::size_t body = cur.pos();
  const auto stored = cur.get<std::uint64_t>();
  if (cur.pos() != bytes.size()) throw Error("corrupt checkpoint: trailing bytes");
  if (stored != fnv1a(bytes.data(), body)) throw Error("corrupt checkpoint: checksum mismatch");
  // Shape consistency with the config.
  (void)CatchProlongNet(ck.model, ck.params);
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

CatchProlongNet to_network(const Checkpoint& ckpt) { return CatchProlongNet(ckpt.model, ckpt.params); }

}  // namespace cp
