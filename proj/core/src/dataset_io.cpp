#include "gmeld/world/dataset_io.hpp"

#include <map>
#include <sstream>

#include "gmeld/io_util.hpp"

namespace gmeld::world {

namespace {

constexpr char kMagic[6] = {'D', 'M', 'S', 'E', 'A', '1'};

void write_clips(io::ByteWriter& out, const std::vector<ClipSample>& clips, const WorldSpec& spec) {
  const std::size_t bits = spec.frames_per_clip * spec.num_classes;
  for (const auto& clip : clips) {
    out.put_string(clip.clip_id);
    out.put_doubles(clip.features);
    std::vector<std::uint8_t> packed((bits + 7) / 8, 0);
    for (std::size_t i = 0; i < bits; ++i) {
      if (clip.strong_labels[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    out.put_bytes(packed);
  }
}

std::vector<ClipSample> read_clips(io::ByteReader& in, std::size_t count, const WorldSpec& spec) {
  const std::size_t bits = spec.frames_per_clip * spec.num_classes;
  const std::size_t values = spec.num_sensors * spec.frames_per_clip * spec.feature_dim_raw;
  std::vector<ClipSample> clips(count);
  for (auto& clip : clips) {
    clip.clip_id = in.get_string();
    clip.features.resize(values);
    in.get_doubles(clip.features);
    const auto packed = in.get_span((bits + 7) / 8);
    clip.strong_labels.resize(bits);
    for (std::size_t i = 0; i < bits; ++i) clip.strong_labels[i] = (packed[i / 8] >> (i % 8)) & 1u;
    clip.weak_label = make_weak_label(clip.strong_labels, spec.frames_per_clip, spec.num_classes);
  }
  return clips;
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  const auto& spec = dataset.spec;
  const std::string spec_text = nlohmann::json(spec).dump(2) + "\n";

  io::ByteWriter out;
  out.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic)));
  out.put<std::uint32_t>(kDatasetFormatVersion);
  for (std::size_t n : {dataset.split.train.size(), dataset.split.validation.size(), dataset.split.test.size(),
                        spec.num_sensors, spec.frames_per_clip, spec.feature_dim_raw, spec.num_classes}) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(n));
  }
  write_clips(out, dataset.split.train, spec);
  write_clips(out, dataset.split.validation, spec);
  write_clips(out, dataset.split.test, spec);

  io::write_text(dir / "spec.json", spec_text);
  io::write_file(dir / "clips.bin", out.bytes());
  std::ostringstream sums;
  sums << io::hex32(io::crc32(as_bytes(spec_text))) << "  spec.json\n";
  sums << io::hex32(io::crc32(out.bytes())) << "  clips.bin\n";
  io::write_text(dir / "checksums.txt", sums.str());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::map<std::string, std::string> expected;
  {
    std::istringstream sums(io::read_text(dir / "checksums.txt"));
    std::string crc, name;
    while (sums >> crc >> name) expected[name] = crc;
  }
  auto verify = [&](const std::string& name, std::span<const std::uint8_t> bytes) {
    auto it = expected.find(name);
    if (it == expected.end()) throw ChecksumError("checksums.txt has no entry for " + name);
    if (it->second != io::hex32(io::crc32(bytes))) throw ChecksumError("checksum mismatch for " + name);
  };

  const std::string spec_text = io::read_text(dir / "spec.json");
  verify("spec.json", as_bytes(spec_text));
  const auto clips = io::read_file(dir / "clips.bin");
  verify("clips.bin", clips);

  Dataset ds;
  try {
    ds.spec = nlohmann::json::parse(spec_text).get<WorldSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("spec.json: ") + e.what());
  }
  ds.spec.validate();

  io::ByteReader in(clips);
  if (in.get_raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw FormatError("clips.bin: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetFormatVersion) {
    throw VersionError("clips.bin format version " + std::to_string(version) + " unsupported (reader is v" +
                       std::to_string(kDatasetFormatVersion) + ")");
  }
  std::uint32_t dims[7];
  for (auto& d : dims) d = in.get<std::uint32_t>();
  if (dims[3] != ds.spec.num_sensors || dims[4] != ds.spec.frames_per_clip || dims[5] != ds.spec.feature_dim_raw ||
      dims[6] != ds.spec.num_classes) {
    throw FormatError("clips.bin dimensions disagree with spec.json");
  }
  ds.split.train = read_clips(in, dims[0], ds.spec);
  ds.split.validation = read_clips(in, dims[1], ds.spec);
  ds.split.test = read_clips(in, dims[2], ds.spec);
  if (in.remaining() != 0) throw FormatError("clips.bin has trailing bytes");

  ds.split.class_counts.assign(ds.spec.num_classes, 0);
  for (const auto& clip : ds.split.train) {
    const auto counts = count_event_instances(clip.strong_labels, ds.spec.frames_per_clip, ds.spec.num_classes);
    for (std::size_t c = 0; c < counts.size(); ++c) ds.split.class_counts[c] += counts[c];
  }
  return ds;
}

}  // namespace gmeld::world
