#include "emcom/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "emcom/bytes.hpp"
#include "emcom/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace emcom::ckpt {

namespace {

constexpr std::uint32_t kMagic = 0x4B434D45;  // "EMCK"
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc_of(const std::string& data) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size())));
}

template <class S>
void flatten_params(const nn::ParamSet<S>& p, std::vector<float>& out) {
  for (const auto& l : p.layers) {
    for (int i = 0; i < l.w.rows(); ++i)
      for (int j = 0; j < l.w.cols(); ++j) out.push_back(static_cast<float>(l.w(i, j)));
    for (int i = 0; i < l.b.size(); ++i) out.push_back(static_cast<float>(l.b[i]));
  }
}

void write_arch(ByteWriter& w, const ArchDescriptor& a) {
  w.str(a.env_name);
  w.i32(a.env_dim);
  w.i32(a.num_actions);
  w.i32(a.lang.vocab_size);
  w.i32(a.lang.seq_len);
  w.u64(a.hidden.size());
  for (int h : a.hidden) w.i32(h);
  w.u8(a.critic_sees_messages ? 1 : 0);
  w.f64(a.actor_head_scale);
  w.u8(static_cast<std::uint8_t>(a.scalar_width));
}

ArchDescriptor read_arch(ByteReader& r) {
  ArchDescriptor a;
  a.env_name = r.str();
  a.env_dim = r.i32();
  a.num_actions = r.i32();
  a.lang.vocab_size = r.i32();
  a.lang.seq_len = r.i32();
  const std::uint64_t n = r.u64();
  a.hidden.resize(n);
  for (auto& h : a.hidden) h = r.i32();
  a.critic_sees_messages = r.u8() != 0;
  a.actor_head_scale = r.f64();
  a.scalar_width = r.u8();
  return a;
}

// Verifies the checksum and returns the payload (everything but the trailing
// CRC) ready for parsing. Any truncation or bit damage lands here.
std::string checked_payload(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string blob = ss.str();
  if (blob.size() < 12) throw ArtifactError("checkpoint " + path + " is truncated");
  const std::string payload = blob.substr(0, blob.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, blob.data() + blob.size() - 4, 4);
  if (stored != crc_of(payload))
    throw ArtifactError("checkpoint checksum mismatch in " + path +
                        " (file is truncated or corrupted)");
  return payload;
}

struct Parsed {
  CheckpointInfo info;
  std::vector<float> params;
  std::string trainer_blob;
};

Parsed parse_checkpoint(const std::string& path) {
  const std::string payload = checked_payload(path);
  ByteReader r(payload);
  if (r.u32() != kMagic) throw ArtifactError(path + " is not a checkpoint file");
  Parsed p;
  p.info.version = r.u32();
  if (p.info.version != kVersion)
    throw ArtifactError("unsupported checkpoint version " + std::to_string(p.info.version) +
                        " in " + path);
  p.info.arch = read_arch(r);
  p.info.config_hash = r.str();
  p.info.update_index = r.i32();
  p.info.global_step = r.i64();
  const std::uint64_t n = r.u64();
  p.params.resize(n);
  for (auto& v : p.params) v = r.f32();
  p.trainer_blob = r.str();
  if (!r.at_end()) throw ArtifactError("trailing bytes after checkpoint payload in " + path);
  return p;
}

void check_field(bool ok, const std::string& field) {
  if (!ok)
    throw ConfigError("checkpoint does not match this run: " + field + " differs");
}

template <class S>
void check_arch(const ArchDescriptor& got, const train::Trainer<S>& trainer) {
  const ArchDescriptor want = describe(trainer);
  check_field(got.env_name == want.env_name, "environment (" + got.env_name + " vs " +
                                                 want.env_name + ")");
  check_field(got.env_dim == want.env_dim, "observation width");
  check_field(got.num_actions == want.num_actions, "action count");
  check_field(got.lang.vocab_size == want.lang.vocab_size, "vocabulary size");
  check_field(got.lang.seq_len == want.lang.seq_len, "message length");
  check_field(got.hidden == want.hidden, "hidden layer sizes");
  check_field(got.critic_sees_messages == want.critic_sees_messages, "critic input mode");
  check_field(got.actor_head_scale == want.actor_head_scale, "actor head scale");
  check_field(got.scalar_width == want.scalar_width,
              "scalar width (" + std::to_string(got.scalar_width) + "-byte vs " +
                  std::to_string(want.scalar_width) + "-byte training)");
}

}  // namespace

template <class S>
ArchDescriptor describe(const train::Trainer<S>& trainer) {
  ArchDescriptor a;
  a.env_name = trainer.setup().env_factory()->name();
  a.env_dim = trainer.env_obs_dim();
  a.num_actions = trainer.env_num_actions();
  a.lang = trainer.setup().lang;
  a.hidden = trainer.setup().net.hidden;
  a.critic_sees_messages = trainer.setup().net.critic_sees_messages;
  a.actor_head_scale = trainer.setup().net.actor_head_scale;
  a.scalar_width = static_cast<int>(sizeof(S));
  return a;
}

template <class S>
void save_checkpoint(const train::Trainer<S>& trainer, const std::string& config_hash,
                     const std::string& path) {
  ByteWriter w;
  w.u32(kMagic);
  w.u32(kVersion);
  write_arch(w, describe(trainer));
  w.str(config_hash);
  w.i32(trainer.update_index());
  w.i64(trainer.global_step());
  std::vector<float> flat;
  flatten_params(trainer.nets().actor, flat);
  flatten_params(trainer.nets().critic, flat);
  w.u64(flat.size());
  for (float v : flat) w.f32(v);
  w.str(trainer.serialize_state());
  const std::string payload = w.take();
  const std::uint32_t crc = crc_of(payload);

  namespace fs = std::filesystem;
  const fs::path tmp = fs::path(path).string() + ".part";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ArtifactError("cannot write checkpoint to " + path);
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    f.write(reinterpret_cast<const char*>(&crc), 4);
    if (!f) throw ArtifactError("failed while writing checkpoint to " + path);
  }
  fs::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  return parse_checkpoint(path).info;
}

std::vector<float> read_checkpoint_params(const std::string& path) {
  return parse_checkpoint(path).params;
}

template <class S>
void resume_from_checkpoint(train::Trainer<S>& trainer, const std::string& path,
                            const std::string& expected_config_hash) {
  const Parsed p = parse_checkpoint(path);
  check_arch(p.info.arch, trainer);
  if (!expected_config_hash.empty() && p.info.config_hash != expected_config_hash)
    throw ConfigError("checkpoint was produced under config " + p.info.config_hash +
                      " but this run uses " + expected_config_hash);
  trainer.restore_state(p.trainer_blob);
}

template ArchDescriptor describe<float>(const train::Trainer<float>&);
template ArchDescriptor describe<double>(const train::Trainer<double>&);
template void save_checkpoint<float>(const train::Trainer<float>&, const std::string&,
                                     const std::string&);
template void save_checkpoint<double>(const train::Trainer<double>&, const std::string&,
                                      const std::string&);
template void resume_from_checkpoint<float>(train::Trainer<float>&, const std::string&,
                                            const std::string&);
template void resume_from_checkpoint<double>(train::Trainer<double>&, const std::string&,
                                             const std::string&);

}  // namespace emcom::ckpt
