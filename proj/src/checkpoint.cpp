#include "advdrive/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace advdrive {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void Put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void PutString(const std::string& s) {
    Put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    out_ += s;
  }
  void PutDoubles(const std::vector<double>& v) {
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string GetString() {
    const auto n = Get<std::uint16_t>();
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void GetDoubles(std::vector<double>& v) {
    Need(v.size() * sizeof(double));
    std::memcpy(v.data(), bytes_.data() + pos_, v.size() * sizeof(double));
    pos_ += v.size() * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > limit_) throw CheckpointError("checkpoint_truncated", "checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kDigestSize = 32;

std::string RawSha256(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  return std::string(reinterpret_cast<const char*>(digest), len);
}

std::string Hex(const std::string& raw) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : raw) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xF]);
  }
  return out;
}

struct DirectoryEntry {
  std::string name;
  std::vector<int> shape;
};

std::size_t Elements(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

std::string Sha256Hex(const std::string& bytes) { return Hex(RawSha256(bytes)); }

std::string EncodeCheckpoint(const Checkpoint& ckpt) {
  std::vector<const ParamArray*> arrays;
  std::vector<std::string> names;
  for (const auto& a : ckpt.params.arrays) {
    arrays.push_back(&a);
    names.push_back(a.name);
  }
  if (ckpt.adam) {
    for (const auto& a : ckpt.adam->m.arrays) {
      arrays.push_back(&a);
      names.push_back("adam.m/" + a.name);
    }
    for (const auto& a : ckpt.adam->v.arrays) {
      arrays.push_back(&a);
      names.push_back("adam.v/" + a.name);
    }
  }

  Writer w;
  w.bytes().append(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.Put<std::uint32_t>(kCheckpointVersion);
  w.PutString(ckpt.agent_id);
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.role));
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.reward_kind));
  w.PutString(ckpt.params.arch.name);
  w.Put<std::int64_t>(ckpt.episodes);
  w.Put<std::int64_t>(ckpt.steps);
  w.Put<double>(ckpt.kl_coef);
  w.Put<std::int64_t>(ckpt.adam ? ckpt.adam->step : -1);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    w.PutString(names[i]);
    w.Put<std::uint8_t>(static_cast<std::uint8_t>(arrays[i]->shape.size()));
    for (int d : arrays[i]->shape) w.Put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  for (const ParamArray* a : arrays) w.PutDoubles(a->values);
  w.bytes() += RawSha256(w.bytes());
  return std::move(w.bytes());
}

Checkpoint DecodeCheckpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointError("checkpoint_format", "not a checkpoint file (bad magic)");
  }
  if (bytes.size() < sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + kDigestSize) {
    throw CheckpointError("checkpoint_truncated", "checkpoint is truncated");
  }
  const std::size_t body_end = bytes.size() - kDigestSize;
  Reader r(bytes, body_end);
  for (std::size_t i = 0; i < sizeof(kCheckpointMagic); ++i) r.Get<char>();
  const auto version = r.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint_version", "unsupported checkpoint version " +
                                                    std::to_string(version) + " (expected " +
                                                    std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  ckpt.agent_id = r.GetString();
  const auto role = r.Get<std::uint8_t>();
  const auto kind = r.Get<std::uint8_t>();
  if (role > 1 || kind > 2) throw CheckpointError("checkpoint_format", "invalid role or reward kind");
  ckpt.role = static_cast<Role>(role);
  ckpt.reward_kind = static_cast<RewardKind>(kind);
  const std::string arch_name = r.GetString();
  ckpt.episodes = r.Get<std::int64_t>();
  ckpt.steps = r.Get<std::int64_t>();
  ckpt.kl_coef = r.Get<double>();
  const auto adam_step = r.Get<std::int64_t>();
  const auto n_arrays = r.Get<std::uint32_t>();

  std::vector<DirectoryEntry> dir(n_arrays);
  std::size_t payload = 0;
  for (auto& e : dir) {
    e.name = r.GetString();
    const auto ndim = r.Get<std::uint8_t>();
    for (int d = 0; d < ndim; ++d) e.shape.push_back(static_cast<int>(r.Get<std::uint32_t>()));
    payload += Elements(e.shape) * sizeof(double);
  }
  if (r.pos() + payload > body_end) {
    throw CheckpointError("checkpoint_truncated", "checkpoint is truncated");
  }
  if (r.pos() + payload < body_end) {
    throw CheckpointError("checkpoint_format", "unexpected trailing bytes in checkpoint");
  }
  if (RawSha256(bytes.substr(0, body_end)) != bytes.substr(body_end)) {
    throw CheckpointError("checkpoint_checksum", "checkpoint checksum mismatch");
  }

  NetArch arch;
  try {
    arch = NetArch::ByName(arch_name);
  } catch (const ContractViolation&) {
    throw CheckpointError("checkpoint_format", "unknown architecture '" + arch_name + "'");
  }
  ckpt.params = NetworkParams::Zeros(arch);
  const bool has_adam = adam_step >= 0;
  if (has_adam) ckpt.adam = AdamState::Zeros(arch);

  const std::size_t n_params = ckpt.params.arrays.size();
  const std::size_t expected = has_adam ? 3 * n_params : n_params;
  if (dir.size() != expected) {
    throw CheckpointError("checkpoint_shape", "checkpoint holds " + std::to_string(dir.size()) +
                                                  " arrays, architecture needs " +
                                                  std::to_string(expected));
  }
  for (std::size_t i = 0; i < dir.size(); ++i) {
    const std::size_t slot = i % n_params;
    ParamArray& dst = i < n_params       ? ckpt.params.arrays[slot]
                      : i < 2 * n_params ? ckpt.adam->m.arrays[slot]
                                         : ckpt.adam->v.arrays[slot];
    const std::string prefix = i < n_params ? "" : i < 2 * n_params ? "adam.m/" : "adam.v/";
    if (dir[i].name != prefix + dst.name || dir[i].shape != dst.shape) {
      throw CheckpointError("checkpoint_shape", "array '" + dir[i].name +
                                                    "' does not match the expected layout of '" +
                                                    prefix + dst.name + "'");
    }
    r.GetDoubles(dst.values);
  }
  if (has_adam) ckpt.adam->step = adam_step;
  return ckpt;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileAtomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  WriteFileAtomic(path, EncodeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::string& path) { return DecodeCheckpoint(ReadFile(path)); }

std::string FileSha256(const std::string& path) { return Sha256Hex(ReadFile(path)); }

std::string ParamsChecksum(const NetworkParams& params) {
  Writer w;
  w.PutString(params.arch.name);
  for (const auto& a : params.arrays) {
    w.PutString(a.name);
    for (int d : a.shape) w.Put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.PutDoubles(a.values);
  }
  return Sha256Hex(w.bytes());
}

}  // namespace advdrive
