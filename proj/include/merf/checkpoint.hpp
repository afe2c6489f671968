#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "merf/assets.hpp"
#include "merf/fit.hpp"
#include "merf/model.hpp"

namespace merf {

static_assert(std::endian::native == std::endian::little, "raw grid files are little-endian");

inline constexpr const char* kCheckpointVersion = "1.0";

// An unbaked fit: raw grid parameters, MLP, training cameras and loss log.
struct Checkpoint {
  FieldModel model;
  std::vector<Camera> cameras;
  std::vector<LossRecord> history;
};

inline std::vector<std::uint8_t> raw_grid_bytes(const RawGrids& raw) {
  std::vector<std::uint8_t> out(raw.parameter_count() * sizeof(double));
  std::size_t off = 0;
  raw.for_each_array([&](const std::vector<double>& v) {
    std::memcpy(out.data() + off, v.data(), v.size() * sizeof(double));
    off += v.size() * sizeof(double);
  });
  return out;
}

inline std::string format_loss_log(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os << "# iteration loss train_psnr\n" << std::setprecision(10);
  for (const auto& r : history) os << r.iteration << ' ' << r.loss << ' ' << r.train_psnr << '\n';
  return os.str();
}

inline std::vector<LossRecord> parse_loss_log(const std::string& text) {
  std::vector<LossRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    LossRecord r;
    std::string psnr;
    if (!(ls >> r.iteration >> r.loss >> psnr)) throw ValidationError("malformed loss log line: " + line);
    r.train_psnr = psnr == "inf" ? std::numeric_limits<double>::infinity() : std::stod(psnr);
    out.push_back(r);
  }
  return out;
}

inline void write_checkpoint(const Checkpoint& ckpt, const fs::path& directory,
                             const std::vector<TrainingView>* views = nullptr) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());
  std::map<std::string, std::vector<std::uint8_t>> files;
  files["raw_grids.bin"] = raw_grid_bytes(ckpt.model.raw);
  const std::string log = format_loss_log(ckpt.history);
  files["loss.txt"] = std::vector<std::uint8_t>(log.begin(), log.end());
  if (views) {
    for (std::size_t i = 0; i < views->size(); ++i) {
      std::ostringstream name;
      name << "view_" << std::setw(3) << std::setfill('0') << i << ".png";
      files[name.str()] = encode_png(to_image((*views)[i].image));
    }
  }
  const auto& m = ckpt.model;
  nlohmann::json j;
  j["format"] = "merf-checkpoint";
  j["version"] = kCheckpointVersion;
  j["voxel_resolution"] = m.raw.shape.voxel_res;
  j["plane_resolution"] = m.raw.shape.plane_res;
  j["channels"] = kChannels;
  j["quantization"] = {{"m_density", m.quant.m_density},
                       {"m_appearance", m.quant.m_appearance},
                       {"levels", m.quant.levels}};
  j["quantization_aware"] = m.quantization_aware;
  j["raw_layout"] = "float64 little-endian; voxel then planes x, y, z; channels interleaved";
  j["mlp"] = mlp_to_json(m.mlp);
  nlohmann::json listing = nlohmann::json::object();
  for (const auto& [name, bytes] : files) {
    listing[name] = {{"bytes", bytes.size()}, {"crc32", hex32(crc32_of(bytes))}};
  }
  j["files"] = listing;
  for (const auto& [name, bytes] : files) write_file_bytes(directory / name, bytes);
  write_cameras(directory / "cameras.txt", ckpt.cameras);
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(directory / "checkpoint.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline Checkpoint read_checkpoint(const fs::path& directory) {
  const fs::path path = directory / "checkpoint.json";
  if (!fs::exists(path)) throw IoError("missing checkpoint " + path.string());
  nlohmann::json j;
  try {
    const auto bytes = read_file_bytes(path);
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "merf-checkpoint") throw ValidationError("not a merf checkpoint");
    const std::string version = j.at("version").get<std::string>();
    if (version.substr(0, version.find('.')) != "1") {
      throw ValidationError("unsupported checkpoint version " + version);
    }
    if (j.at("channels").get<int>() != kChannels) throw ValidationError("unsupported channel count");
    Checkpoint c;
    GridShape shape{j.at("voxel_resolution").get<int>(), j.at("plane_resolution").get<int>()};
    try {
      shape.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    c.model.quant.m_density = j.at("quantization").at("m_density").get<double>();
    c.model.quant.m_appearance = j.at("quantization").at("m_appearance").get<double>();
    c.model.quant.levels = j.at("quantization").at("levels").get<int>();
    c.model.quantization_aware = j.at("quantization_aware").get<bool>();
    c.model.mlp = mlp_from_json(j.at("mlp"));
    c.model.raw = RawGrids(shape);
    const auto bytes = read_payload(directory, j, "raw_grids.bin");
    if (bytes.size() != c.model.raw.parameter_count() * sizeof(double)) {
      throw ValidationError("size mismatch for raw_grids.bin");
    }
    std::size_t off = 0;
    c.model.raw.for_each_array([&](std::vector<double>& v) {
      std::memcpy(v.data(), bytes.data() + off, v.size() * sizeof(double));
      off += v.size() * sizeof(double);
    });
    const auto log = read_payload(directory, j, "loss.txt");
    c.history = parse_loss_log(std::string(log.begin(), log.end()));
    if (fs::exists(directory / "cameras.txt")) c.cameras = read_cameras(directory / "cameras.txt");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace merf
