#pragma once

#include <zlib.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "merf/bundle.hpp"
#include "merf/errors.hpp"
#include "merf/png.hpp"
#include "merf/render.hpp"

namespace merf {

namespace fs = std::filesystem;

inline constexpr int kMaxRasterWidth = 4096;
inline constexpr std::array<const char*, 3> kPlaneNames = {"x", "y", "z"};

inline std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Raster layouts

// One plane's bytes as (density, diffuse, features) rasters. Column u, row v.
inline std::array<Image, 3> plane_rasters(const QuantizedPlanes& planes, int a) {
  const int r = planes.plane_res;
  std::array<Image, 3> out{Image(r, r, 1), Image(r, r, 3), Image(r, r, 4)};
  const std::size_t cells = static_cast<std::size_t>(r) * r;
  for (std::size_t i = 0; i < cells; ++i) {
    out[0].pixels[i] = planes.density[a][i];
    const std::uint8_t* app = planes.appearance[a].data() + i * kAppearanceChannels;
    for (int c = 0; c < 3; ++c) out[1].pixels[i * 3 + c] = app[c];
    for (int c = 0; c < kFeatures; ++c) out[2].pixels[i * 4 + c] = app[3 + c];
  }
  return out;
}

struct AtlasLayout {
  int blocks = 0;
  int blocks_per_row = 0;
  int rows = 0;
  int span = 0;  // block edge including apron
  int width() const { return blocks_per_row * span; }
  int height() const { return rows * span; }  // of one z slice
  int depth() const { return span; }
};

inline AtlasLayout atlas_layout(int blocks, int span) {
  AtlasLayout l;
  l.blocks = blocks;
  l.span = span;
  if (blocks == 0) return l;
  l.blocks_per_row = std::min(blocks, kMaxRasterWidth / span);
  l.rows = (blocks + l.blocks_per_row - 1) / l.blocks_per_row;
  return l;
}

// Atlas as a 3D texture (width x height x depth) written as its z slices
// stacked top to bottom. Blocks are placed row-major in allocation order.
inline std::array<Image, 3> atlas_rasters(const BlockSparseGrid& grid) {
  const AtlasLayout l = atlas_layout(static_cast<int>(grid.allocated_blocks()), grid.block_span());
  const int w = l.width();
  const int h = l.height() * l.depth();
  std::array<Image, 3> out{Image(w, h, 1), Image(w, h, 3), Image(w, h, 4)};
  for (auto& img : out) std::fill(img.pixels.begin(), img.pixels.end(), kEmptyCellByte);
  for (int n = 0; n < l.blocks; ++n) {
    const int col = n % l.blocks_per_row;
    const int row = n / l.blocks_per_row;
    for (int lz = 0; lz < l.span; ++lz) {
      for (int ly = 0; ly < l.span; ++ly) {
        for (int lx = 0; lx < l.span; ++lx) {
          const std::size_t px = static_cast<std::size_t>(lz * l.height() + row * l.span + ly) * w +
                                 (col * l.span + lx);
          const std::size_t local = grid.local_index(lx, ly, lz);
          out[0].pixels[px] = grid.density_at(n, local);
          const std::uint8_t* app = grid.appearance_at(n, local);
          for (int c = 0; c < 3; ++c) out[1].pixels[px * 3 + c] = app[c];
          for (int c = 0; c < kFeatures; ++c) out[2].pixels[px * 4 + c] = app[3 + c];
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json mlp_to_json(const DeferredMlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : mlp.layers) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  }
  return {{"layers", layers},
          {"hidden_activation", "relu"},
          {"output_activation", "sigmoid"},
          {"residual", "clamp(diffuse + output, 0, 1)"},
          {"direction_encoding",
           {{"frequencies", kDirectionFrequencies}, {"order", "axis-major, sin before cos"}}}};
}

inline DeferredMlp mlp_from_json(const nlohmann::json& j) {
  DeferredMlp mlp;
  for (const auto& l : j.at("layers")) {
    DenseLayer layer(l.at("in").get<int>(), l.at("out").get<int>());
    layer.weights = l.at("weights").get<std::vector<double>>();
    layer.bias = l.at("bias").get<std::vector<double>>();
    mlp.layers.push_back(std::move(layer));
  }
  try {
    mlp.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("manifest MLP: ") + e.what());
  }
  return mlp;
}

inline void check_version(const std::string& version) {
  const auto dot = version.find('.');
  const std::string major = version.substr(0, dot);
  const std::string ours = std::string(kBundleVersion).substr(0, std::string(kBundleVersion).find('.'));
  if (major != ours) {
    throw ValidationError("unsupported bundle version " + version + " (reader supports " +
                          kBundleVersion + ")");
  }
}

inline void validate_bundle(const AssetBundle& b) {
  const auto fail = [](const std::string& m) { throw ValidationError("bundle: " + m); };
  b.shape.validate();
  const std::size_t r2 = b.shape.plane_cells();
  if (b.planes.plane_res != b.shape.plane_res) fail("plane resolution mismatch");
  for (int a = 0; a < 3; ++a) {
    if (b.planes.density[a].size() != r2 || b.planes.appearance[a].size() != r2 * kAppearanceChannels) {
      fail("plane payload size mismatch");
    }
  }
  if (b.voxels.voxel_res() != b.shape.voxel_res) fail("voxel resolution mismatch");
  if (b.occupancy.levels.size() != b.occupancy.factors.size()) fail("occupancy level count mismatch");
  for (std::size_t l = 0; l < b.occupancy.levels.size(); ++l) {
    if (b.occupancy.levels[l].resolution() * b.occupancy.factors[l] != b.occupancy.base.resolution()) {
      fail("occupancy level resolution mismatch");
    }
  }
  try {
    b.mlp.validate();
    b.march.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

// Writes manifest.json plus PNG and bitmap payloads into directory.
inline void write_bundle(const AssetBundle& bundle, const fs::path& directory) {
  validate_bundle(bundle);
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());

  std::map<std::string, std::vector<std::uint8_t>> files;
  for (int a = 0; a < 3; ++a) {
    const auto rasters = plane_rasters(bundle.planes, a);
    const std::string p = std::string("plane_") + kPlaneNames[a];
    files[p + "_density.png"] = encode_png(rasters[0]);
    files[p + "_diffuse.png"] = encode_png(rasters[1]);
    files[p + "_features.png"] = encode_png(rasters[2]);
  }
  const AtlasLayout layout =
      atlas_layout(static_cast<int>(bundle.voxels.allocated_blocks()), bundle.voxels.block_span());
  if (layout.blocks > 0) {
    const auto rasters = atlas_rasters(bundle.voxels);
    files["atlas_density.png"] = encode_png(rasters[0]);
    files["atlas_diffuse.png"] = encode_png(rasters[1]);
    files["atlas_features.png"] = encode_png(rasters[2]);
  }
  files["occupancy_1.bin"] = bundle.occupancy.base.bytes();
  for (std::size_t l = 0; l < bundle.occupancy.levels.size(); ++l) {
    files["occupancy_" + std::to_string(bundle.occupancy.factors[l]) + ".bin"] =
        bundle.occupancy.levels[l].bytes();
  }

  nlohmann::json manifest;
  manifest["format"] = "merf-bundle";
  manifest["version"] = bundle.version;
  manifest["voxel_resolution"] = bundle.shape.voxel_res;
  manifest["plane_resolution"] = bundle.shape.plane_res;
  manifest["channels"] = kChannels;
  manifest["features"] = kFeatures;
  manifest["quantization"] = {{"m_density", bundle.quant.m_density},
                              {"m_appearance", bundle.quant.m_appearance},
                              {"levels", bundle.quant.levels}};
  manifest["grid_layout"] = "values at cell corners; index = (p + 2) / 4 * (N - 1)";
  manifest["contraction"] = "piecewise-projective";
  manifest["block_size"] = bundle.voxels.block_size();
  nlohmann::json indirection = nlohmann::json::array();
  for (const auto& c : bundle.voxels.block_coords()) indirection.push_back(c);
  manifest["atlas"] = {{"blocks", layout.blocks},
                       {"blocks_per_row", layout.blocks_per_row},
                       {"width", layout.width()},
                       {"height", layout.height()},
                       {"depth", layout.depth()},
                       {"indirection", indirection}};
  manifest["occupancy"] = {{"base_resolution", bundle.occupancy.base.resolution()},
                           {"pooling_factors", bundle.occupancy.factors},
                           {"bit_order", "little-endian bits, x fastest then y then z"}};
  manifest["march"] = {{"step_size", bundle.march.step_size},
                       {"termination_transmittance", bundle.march.termination_transmittance},
                       {"max_steps", bundle.march.max_steps}};
  manifest["background"] = {{"color", {0, 0, 0}}, {"opacity_exported", true}};
  manifest["mlp"] = mlp_to_json(bundle.mlp);
  nlohmann::json listing = nlohmann::json::object();
  for (const auto& [name, bytes] : files) {
    listing[name] = {{"bytes", bytes.size()}, {"crc32", hex32(crc32_of(bytes))}};
  }
  manifest["files"] = listing;

  for (const auto& [name, bytes] : files) write_file_bytes(directory / name, bytes);
  const std::string text = manifest.dump(2) + "\n";
  write_file_bytes(directory / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline nlohmann::json read_manifest(const fs::path& directory) {
  const fs::path path = directory / "manifest.json";
  if (!fs::exists(path)) throw IoError("missing " + path.string());
  try {
    const auto bytes = read_file_bytes(path);
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// Reads a payload listed in the manifest and checks its length and CRC.
inline std::vector<std::uint8_t> read_payload(const fs::path& directory,
                                              const nlohmann::json& manifest,
                                              const std::string& name) {
  const auto& files = manifest.at("files");
  if (!files.contains(name)) throw ValidationError("manifest does not list " + name);
  const fs::path path = directory / name;
  if (!fs::exists(path)) throw IoError("missing payload " + path.string());
  auto bytes = read_file_bytes(path);
  const auto& entry = files.at(name);
  if (bytes.size() != entry.at("bytes").get<std::size_t>()) {
    throw ValidationError("size mismatch for " + name);
  }
  if (hex32(crc32_of(bytes)) != entry.at("crc32").get<std::string>()) {
    throw ValidationError("checksum mismatch for " + name);
  }
  return bytes;
}

inline Image read_raster(const fs::path& directory, const nlohmann::json& manifest,
                         const std::string& name, int width, int height, int channels) {
  Image img = decode_png(read_payload(directory, manifest, name), name);
  if (img.width != width || img.height != height || img.channels != channels) {
    throw ValidationError("size mismatch for " + name + ": raster is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height) + "x" + std::to_string(img.channels) +
                          ", manifest expects " + std::to_string(width) + "x" +
                          std::to_string(height) + "x" + std::to_string(channels));
  }
  return img;
}

// Total payload bytes listed in a manifest (manifest itself excluded).
inline std::size_t payload_bytes(const nlohmann::json& manifest) {
  std::size_t n = 0;
  for (const auto& [name, entry] : manifest.at("files").items()) n += entry.at("bytes").get<std::size_t>();
  return n;
}

inline AssetBundle read_bundle(const fs::path& directory) {
  const nlohmann::json m = read_manifest(directory);
  try {
    if (m.value("format", "") != "merf-bundle") throw ValidationError("not a merf bundle manifest");
    AssetBundle b;
    b.version = m.at("version").get<std::string>();
    check_version(b.version);
    if (m.at("channels").get<int>() != kChannels || m.at("features").get<int>() != kFeatures) {
      throw ValidationError("unsupported channel layout");
    }
    b.shape.voxel_res = m.at("voxel_resolution").get<int>();
    b.shape.plane_res = m.at("plane_resolution").get<int>();
    if (b.shape.voxel_res < 2 || b.shape.plane_res < 2) {
      throw ValidationError("size mismatch: resolutions must be at least 2");
    }
    b.quant.m_density = m.at("quantization").at("m_density").get<double>();
    b.quant.m_appearance = m.at("quantization").at("m_appearance").get<double>();
    b.quant.levels = m.at("quantization").at("levels").get<int>();
    b.march.step_size = m.at("march").at("step_size").get<double>();
    b.march.termination_transmittance = m.at("march").at("termination_transmittance").get<double>();
    b.march.max_steps = m.at("march").at("max_steps").get<int>();
    b.mlp = mlp_from_json(m.at("mlp"));

    const int r = b.shape.plane_res;
    b.planes.plane_res = r;
    const std::size_t r2 = b.shape.plane_cells();
    for (int a = 0; a < 3; ++a) {
      const std::string p = std::string("plane_") + kPlaneNames[a];
      const Image d = read_raster(directory, m, p + "_density.png", r, r, 1);
      const Image c = read_raster(directory, m, p + "_diffuse.png", r, r, 3);
      const Image f = read_raster(directory, m, p + "_features.png", r, r, 4);
      b.planes.density[a] = d.pixels;
      auto& app = b.planes.appearance[a];
      app.resize(r2 * kAppearanceChannels);
      for (std::size_t i = 0; i < r2; ++i) {
        for (int k = 0; k < 3; ++k) app[i * kAppearanceChannels + k] = c.pixels[i * 3 + k];
        for (int k = 0; k < kFeatures; ++k) app[i * kAppearanceChannels + 3 + k] = f.pixels[i * 4 + k];
      }
    }

    const int block_size = m.at("block_size").get<int>();
    if (block_size < 1 || b.shape.voxel_res % block_size != 0) {
      throw ValidationError("size mismatch: voxel resolution is not a multiple of block size");
    }
    const auto& atlas = m.at("atlas");
    const auto coords = atlas.at("indirection").get<std::vector<std::array<int, 3>>>();
    const AtlasLayout layout = atlas_layout(static_cast<int>(coords.size()), block_size + 1);
    if (atlas.at("blocks").get<int>() != layout.blocks ||
        atlas.at("blocks_per_row").get<int>() != layout.blocks_per_row ||
        atlas.at("width").get<int>() != layout.width() ||
        atlas.at("height").get<int>() != layout.height() ||
        atlas.at("depth").get<int>() != layout.depth()) {
      throw ValidationError("size mismatch: atlas geometry disagrees with its block count");
    }
    std::vector<std::uint8_t> density;
    std::vector<std::uint8_t> appearance;
    if (layout.blocks > 0) {
      const int w = layout.width();
      const int h = layout.height() * layout.depth();
      const Image d = read_raster(directory, m, "atlas_density.png", w, h, 1);
      const Image c = read_raster(directory, m, "atlas_diffuse.png", w, h, 3);
      const Image f = read_raster(directory, m, "atlas_features.png", w, h, 4);
      const int span = layout.span;
      const std::size_t per_block = static_cast<std::size_t>(span) * span * span;
      density.resize(per_block * layout.blocks);
      appearance.resize(density.size() * kAppearanceChannels);
      for (int n = 0; n < layout.blocks; ++n) {
        const int col = n % layout.blocks_per_row;
        const int row = n / layout.blocks_per_row;
        for (int lz = 0; lz < span; ++lz) {
          for (int ly = 0; ly < span; ++ly) {
            for (int lx = 0; lx < span; ++lx) {
              const std::size_t px =
                  static_cast<std::size_t>(lz * layout.height() + row * span + ly) * w +
                  (col * span + lx);
              const std::size_t dst =
                  n * per_block + (static_cast<std::size_t>(lz) * span + ly) * span + lx;
              density[dst] = d.pixels[px];
              for (int k = 0; k < 3; ++k) appearance[dst * kAppearanceChannels + k] = c.pixels[px * 3 + k];
              for (int k = 0; k < kFeatures; ++k) {
                appearance[dst * kAppearanceChannels + 3 + k] = f.pixels[px * 4 + k];
              }
            }
          }
        }
      }
    }
    b.voxels = BlockSparseGrid::from_parts(b.shape.voxel_res, block_size, coords,
                                           std::move(density), std::move(appearance));

    const auto& occ = m.at("occupancy");
    const int base_res = occ.at("base_resolution").get<int>();
    const auto factors = occ.at("pooling_factors").get<std::vector<int>>();
    auto read_bits = [&](const std::string& name, int res) {
      auto bytes = read_payload(directory, m, name);
      if (res < 1 || bytes.size() != (BitGrid::cell_count(res) + 7) / 8) {
        throw ValidationError("size mismatch for " + name);
      }
      return BitGrid(res, std::move(bytes));
    };
    b.occupancy.base = read_bits("occupancy_1.bin", base_res);
    for (int f : factors) {
      if (f < 1 || base_res % f != 0) throw ValidationError("size mismatch: bad pooling factor");
      b.occupancy.factors.push_back(f);
      b.occupancy.levels.push_back(read_bits("occupancy_" + std::to_string(f) + ".bin", base_res / f));
    }
    validate_bundle(b);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Camera files: one camera per line,
//   width height fx fy cx cy  r00 r01 r02 tx  r10 r11 r12 ty  r20 r21 r22 tz  near far
// '#' starts a comment; blank lines are ignored.

inline constexpr int kCameraFields = 20;

inline std::vector<Camera> parse_cameras(std::istream& in, const std::string& name) {
  std::vector<Camera> cameras;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<double> v;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ValidationError(name + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
    }
    if (v.empty()) continue;
    if (static_cast<int>(v.size()) != kCameraFields) {
      throw ValidationError(name + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(kCameraFields) + " values, got " +
                            std::to_string(v.size()));
    }
    Camera cam;
    if (v[0] != std::floor(v[0]) || v[1] != std::floor(v[1])) {
      throw ValidationError(name + ":" + std::to_string(line_no) + ": width/height must be integers");
    }
    cam.width = static_cast<int>(v[0]);
    cam.height = static_cast<int>(v[1]);
    cam.fx = v[2];
    cam.fy = v[3];
    cam.cx = v[4];
    cam.cy = v[5];
    std::copy(v.begin() + 6, v.begin() + 18, cam.camera_to_world.begin());
    cam.near = v[18];
    cam.far = v[19];
    try {
      cam.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
    cameras.push_back(cam);
  }
  return cameras;
}

inline std::vector<Camera> read_cameras(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_cameras(in, path.string());
}

inline void write_cameras(const fs::path& path, const std::vector<Camera>& cameras) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "# width height fx fy cx cy  camera_to_world (3x4 row-major)  near far\n";
  out.precision(17);
  for (const auto& c : cameras) {
    out << c.width << ' ' << c.height << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy;
    for (double v : c.camera_to_world) out << ' ' << v;
    out << ' ' << c.near << ' ' << c.far << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace merf
