#include "qglut/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qglut/error.hpp"

namespace qglut {
namespace {

constexpr char kMagic[8] = {'Q', 'G', 'L', 'U', 'T', 'C', 'K', 'P'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::uint32_t crc(const std::uint8_t* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

nlohmann::json centers_json(const SkinToneCenters& c) {
  nlohmann::json j;
  j["provenance"] = std::string(to_string(c.provenance));
  auto& arr = j["centers"] = nlohmann::json::array();
  for (const auto& p : c.centers) arr.push_back({p.l, p.a, p.b});
  return j;
}

SkinToneCenters centers_from_json(const nlohmann::json& j) {
  SkinToneCenters c;
  const auto prov = j.at("provenance").get<std::string>();
  c.provenance = prov == "IMPORTED" ? CenterProvenance::Imported : CenterProvenance::Clustered;
  for (const auto& p : j.at("centers")) {
    c.centers.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  }
  c.validate();
  return c;
}

}  // namespace

ModelCheckpoint make_checkpoint(const ArchitectureConfig& arch, std::uint64_t seed) {
  ModelCheckpoint ckpt;
  ckpt.arch = arch;
  ckpt.params = init_params(arch, seed);
  ckpt.metadata.seed = seed;
  return ckpt;
}

void require_architecture(const ModelCheckpoint& ckpt, const ArchitectureConfig& wanted) {
  if (!(ckpt.arch == wanted)) {
    fail(ErrorCode::ArchitectureMismatch,
         "checkpoint architecture " + to_json(ckpt.arch).dump() +
             " differs from requested " + to_json(wanted).dump());
  }
}

nlohmann::json to_json(const ArchitectureConfig& a) {
  return {{"input_size", a.input_size},
          {"widths", a.widths},
          {"head_hidden", a.head_hidden},
          {"lut_bins", a.lut_bins},
          {"lut_dim", a.lut_dim},
          {"basis_count", a.basis_count},
          {"use_label", a.use_label},
          {"use_1d_luts", a.use_1d_luts},
          {"score_encoding", std::string(to_string(a.score_encoding))},
          {"label_encoding", std::string(to_string(a.label_encoding))}};
}

ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  a.input_size = j.at("input_size").get<int>();
  a.widths = j.at("widths").get<std::array<int, kLayers>>();
  a.head_hidden = j.at("head_hidden").get<int>();
  a.lut_bins = j.at("lut_bins").get<int>();
  a.lut_dim = j.at("lut_dim").get<int>();
  a.basis_count = j.at("basis_count").get<int>();
  a.use_label = j.at("use_label").get<bool>();
  a.use_1d_luts = j.at("use_1d_luts").get<bool>();
  a.score_encoding = parse_score_encoding(j.at("score_encoding").get<std::string>());
  a.label_encoding = parse_label_encoding(j.at("label_encoding").get<std::string>());
  a.validate();
  return a;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt) {
  check_shapes(ckpt.params, ckpt.arch);
  std::vector<std::uint8_t> payload;
  payload.reserve(ckpt.params.scalar_count() * 4);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : ckpt.params.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    for (float v : t.values) put_f32(payload, v);
  }
  nlohmann::json header;
  header["format"] = "qglut-checkpoint";
  header["version"] = kCheckpointVersion;
  header["architecture"] = to_json(ckpt.arch);
  header["metadata"] = {{"epochs_completed", ckpt.metadata.epochs_completed},
                        {"final_loss", ckpt.metadata.final_loss},
                        {"seed", ckpt.metadata.seed}};
  header["centers"] = ckpt.centers ? centers_json(*ckpt.centers) : nlohmann::json(nullptr);
  header["tensors"] = std::move(tensors);
  header["payload_bytes"] = payload.size();
  header["payload_crc32"] = crc(payload.data(), payload.size());
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    fail(ErrorCode::CorruptCheckpoint, "missing checkpoint magic");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) fail(ErrorCode::CorruptCheckpoint, "truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("unreadable header: ") + e.what());
  }
  ModelCheckpoint ckpt;
  try {
    if (header.value("format", "") != "qglut-checkpoint") {
      fail(ErrorCode::CorruptCheckpoint, "not a qglut checkpoint");
    }
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      fail(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                           " (supported: " +
                                           std::to_string(kCheckpointVersion) + ")");
    }
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    const std::size_t offset = 16 + header_len;
    if (bytes.size() - offset != payload_bytes) {
      fail(ErrorCode::CorruptCheckpoint, "payload length mismatch (truncated or padded file)");
    }
    const std::uint8_t* payload = bytes.data() + offset;
    if (crc(payload, payload_bytes) != header.at("payload_crc32").get<std::uint32_t>()) {
      fail(ErrorCode::CorruptCheckpoint, "payload checksum mismatch");
    }
    ckpt.arch = architecture_from_json(header.at("architecture"));
    const auto& meta = header.at("metadata");
    ckpt.metadata.epochs_completed = meta.at("epochs_completed").get<int>();
    ckpt.metadata.final_loss = meta.at("final_loss").get<double>();
    ckpt.metadata.seed = meta.at("seed").get<std::uint64_t>();
    if (!header.at("centers").is_null()) ckpt.centers = centers_from_json(header.at("centers"));

    std::size_t pos = 0;
    for (const auto& t : header.at("tensors")) {
      ParamTensor<float> tensor;
      tensor.name = t.at("name").get<std::string>();
      tensor.shape = t.at("shape").get<std::vector<int>>();
      std::size_t count = 1;
      for (int s : tensor.shape) {
        if (s < 0) fail(ErrorCode::CorruptCheckpoint, "negative tensor extent");
        count *= static_cast<std::size_t>(s);
      }
      if (pos + count * 4 > payload_bytes) fail(ErrorCode::CorruptCheckpoint, "tensor overruns payload");
      tensor.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) tensor.values[i] = get_f32(payload + pos + i * 4);
      pos += count * 4;
      ckpt.params.tensors.push_back(std::move(tensor));
    }
    if (pos != payload_bytes) fail(ErrorCode::CorruptCheckpoint, "unused payload bytes");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("malformed header: ") + e.what());
  }
  try {
    check_shapes(ckpt.params, ckpt.arch);
  } catch (const Error& e) {
    fail(ErrorCode::CorruptCheckpoint, e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace qglut
