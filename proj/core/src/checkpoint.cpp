#include "gmeld/dc/checkpoint.hpp"

#include "gmeld/io_util.hpp"

namespace gmeld::dc {

namespace {
constexpr char kMagic[8] = {'G', 'M', 'C', 'K', 'P', 'T', '\0', '\0'};
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& meta) {
  io::ByteWriter payload;
  nlohmann::json manifest;
  manifest["step_count"] = params.step_count;
  manifest["meta"] = meta;
  manifest["params"] = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    manifest["params"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.bytes().size()}});
    payload.put_doubles(t.data());
  }
  const std::string header = manifest.dump();

  io::ByteWriter out;
  out.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic)));
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put_string(header);
  out.put<std::uint32_t>(io::crc32(payload.bytes()));
  out.put_bytes(payload.bytes());
  io::write_file(path, out.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  if (in.get_raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("'" + path.string() + "' is not a checkpoint");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " unsupported (reader is v" +
                       std::to_string(kCheckpointVersion) + ")");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  const auto crc = in.get<std::uint32_t>();
  const auto payload = in.get_span(in.remaining());
  if (io::crc32(payload) != crc) throw ChecksumError("checkpoint payload checksum mismatch in '" + path.string() + "'");

  Checkpoint ck;
  ck.meta = manifest.value("meta", nlohmann::json::object());
  ck.params.step_count = manifest.at("step_count").get<std::uint64_t>();
  for (const auto& entry : manifest.at("params")) {
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    std::vector<double> values(numel(shape));
    if (offset + values.size() * sizeof(double) > payload.size()) throw FormatError("truncated checkpoint payload");
    std::memcpy(values.data(), payload.data() + offset, values.size() * sizeof(double));
    ck.params.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(values), true));
  }
  return ck;
}

}  // namespace gmeld::dc
