#include "mtlfno/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "mtlfno/error.hpp"

#include "binary_io.hpp"
#include "config_json.hpp"

namespace mtlfno {

using json = nlohmann::json;

std::string model_config_to_json(const ModelConfig& cfg) { return detail::model_json(cfg).dump(2); }

ModelConfig model_config_from_json(std::string_view text) {
  try {
    return detail::model_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

namespace {

constexpr char kMagic[4] = {'M', 'T', 'L', 'F'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8;

}  // namespace

std::uint32_t save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  if (ckpt.task_names.size() != m.config().tasks) {
    throw ContractError("checkpoint names " + std::to_string(ckpt.task_names.size()) +
                        " tasks, model has " + std::to_string(m.config().tasks));
  }
  io::Writer body;
  const std::string meta = json{{"model", detail::model_json(m.config())}, {"tasks", ckpt.task_names}}.dump();
  body.put<std::uint64_t>(meta.size());
  body.put_bytes(meta.data(), meta.size());
  body.put<std::uint64_t>(m.params().size());
  for (const auto& [name, t] : m.params().entries()) {
    body.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    body.put_bytes(name.data(), name.size());
    body.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (const std::size_t d : t.shape()) body.put<std::uint64_t>(d);
    body.put_doubles(t.data());
  }

  io::Writer out;
  out.put_bytes(kMagic, 4);
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint64_t>(body.bytes().size());
  out.put_bytes(body.bytes().data(), body.bytes().size());
  const std::uint32_t crc = io::crc_of(out.bytes());
  out.put<std::uint32_t>(crc);
  io::write_file(path, out.bytes());
  return crc;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::vector<char> bytes = io::read_file(path);
  io::Reader head(bytes, file);
  head.need(kHeaderBytes);
  char magic[4];
  for (char& c : magic) c = head.get<char>();
  if (!std::equal(magic, magic + 4, kMagic)) throw LoadError(file + ": not an MTLF checkpoint");
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError(file + ": checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto payload = head.get<std::uint64_t>();
  const std::size_t avail = bytes.size() - kHeaderBytes;
  if (avail < 4 || payload > avail - 4) {
    throw TruncatedFileError(file + ": truncated (" + std::to_string(bytes.size()) + " bytes, header declares " +
                             std::to_string(kHeaderBytes + payload + 4) + ")");
  }
  if (payload != avail - 4) {
    throw LoadError(file + ": " + std::to_string(avail - 4 - payload) +
                    " trailing bytes");
  }
  std::vector<char> covered(bytes.begin(), bytes.end() - 4);
  const std::uint32_t stored = [&] {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 4, 4);
    return io::to_little(v);
  }();
  if (io::crc_of(covered) != stored) throw ChecksumError(file + ": checksum mismatch");

  io::Reader rd(covered, file);
  rd.skip(kHeaderBytes);
  const std::string meta_text = rd.get_string(rd.get<std::uint64_t>());

  ModelConfig cfg;
  std::vector<std::string> names;
  try {
    const json meta = json::parse(meta_text);
    cfg = detail::model_from_json(meta.at("model"));
    names = meta.at("tasks").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw LoadError(file + ": bad metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(file + ": " + e.what());
  }
  if (names.size() != cfg.tasks) {
    throw LoadError(file + ": " + std::to_string(names.size()) + " task names for " +
                    std::to_string(cfg.tasks) + " tasks");
  }

  ParamStore params;
  try {
    const auto count = rd.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name = rd.get_string(rd.get<std::uint32_t>());
      const auto rank = rd.get<std::uint32_t>();
      Shape shape(rank);
      std::size_t size = 1;
      for (auto& d : shape) {
        d = rd.get<std::uint64_t>();
        size *= d;
      }
      rd.need(size * sizeof(double));
      Tensor t(shape);
      rd.get_doubles(t.data());
      params.add(std::move(name), std::move(t));
    }
    if (rd.pos() != covered.size()) throw LoadError(file + ": unread bytes after the last tensor");
    return {Model(cfg, std::move(params)), std::move(names)};
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(file + ": " + e.what());
  }
}

}  // namespace mtlfno
