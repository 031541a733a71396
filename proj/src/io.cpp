// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

#include <png.h>

#include "json.hpp"

#include "splathead/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary serialization assumes a little-endian host");

namespace splathead {

namespace {

using ojson = nlohmann::ordered_json;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError(path + ": read failed");
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path + ": write failed");
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path + ": write failed");
}

float byteswap_f32(float v) {
  auto u = std::bit_cast<std::uint32_t>(v);
  u = ((u & 0x000000FFu) << 24) | ((u & 0x0000FF00u) << 8) |
      ((u & 0x00FF0000u) >> 8) | ((u & 0xFF000000u) >> 24);
  return std::bit_cast<float>(u);
}

// ---------------------------------------------------------------------------
// PFM

ImageKind default_kind(int channels) {
  return channels == 1 ? ImageKind::Depth : ImageKind::Color;
}

}  // namespace

void write_pfm(const std::string& path, const GeomImage& img) {
  const int ch = img.channels();
  if (ch != 1 && ch != 3) {
    throw InvalidInputError("write_pfm: image must have 1 or 3 channels");
  }
  for (double v : img.data()) {
    if (std::isnan(v)) throw InvalidInputError("write_pfm: NaN values are not allowed");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << (ch == 3 ? "PF" : "Pf") << "\n"
      << img.width() << " " << img.height() << "\n"
      << "-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width()) * ch);
  for (int y = img.height() - 1; y >= 0; --y) {  // file rows run bottom to top
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) {
        row[static_cast<std::size_t>(x) * ch + c] = static_cast<float>(img.at(x, y, c));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError(path + ": write failed");
}

GeomImage read_pfm(const std::string& path, ImageKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (!in || (magic != "PF" && magic != "Pf")) {
    throw IoError(path + ": malformed pfm header");
  }
  if (width <= 0 || height <= 0 || scale == 0.0) {
    throw IoError(path + ": malformed pfm header");
  }
  const int sep = in.get();  // single whitespace byte before the payload
  if (sep != ' ' && sep != '\n' && sep != '\r' && sep != '\t') {
    throw IoError(path + ": malformed pfm header");
  }
  const int ch = magic == "PF" ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * ch;
  std::vector<float> payload(count);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
    throw IoError(path + ": truncated pfm payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path + ": trailing bytes after pfm payload");
  }
  if (scale > 0.0) {  // positive scale marks big-endian payloads
    for (float& v : payload) v = byteswap_f32(v);
  }
  GeomImage img(width, height, ch, kind);
  for (int r = 0; r < height; ++r) {
    const int y = height - 1 - r;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < ch; ++c) {
        img.at(x, y, c) =
            payload[(static_cast<std::size_t>(r) * width + x) * ch + c];
      }
    }
  }
  return img;
}

GeomImage read_pfm(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError(path + ": cannot open for reading");
  std::string magic;
  probe >> magic;
  probe.close();
  return read_pfm(path, default_kind(magic == "PF" ? 3 : 1));
}

// ---------------------------------------------------------------------------
// PNG (libpng simplified API)

void write_png(const std::string& path, const GeomImage& img) {
  const int ch = img.channels();
  if (ch != 1 && ch != 3) {
    throw InvalidInputError("write_png: image must have 1 or 3 channels");
  }
  std::vector<png_byte> buffer(img.data().size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = ch == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError(path + ": png write failed: " + image.message);
  }
}

GeomImage read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError(path + ": png read failed: " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path + ": png read failed: " + msg);
  }
  GeomImage img(static_cast<int>(image.width), static_cast<int>(image.height), 3,
                ImageKind::Color);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    img.data()[i] = buffer[i] / 255.0;
  }
  return img;
}

// ---------------------------------------------------------------------------
// PLY

namespace {

enum class PlyType { Char, UChar, Short, UShort, Int, UInt, Float, Double };

PlyType ply_type(const std::string& name, const std::string& path) {
  if (name == "char" || name == "int8") return PlyType::Char;
  if (name == "uchar" || name == "uint8") return PlyType::UChar;
  if (name == "short" || name == "int16") return PlyType::Short;
  if (name == "ushort" || name == "uint16") return PlyType::UShort;
  if (name == "int" || name == "int32") return PlyType::Int;
  if (name == "uint" || name == "uint32") return PlyType::UInt;
  if (name == "float" || name == "float32") return PlyType::Float;
  if (name == "double" || name == "float64") return PlyType::Double;
  throw IoError(path + ": unsupported ply property type '" + name + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Char:
    case PlyType::UChar:
      return 1;
    case PlyType::Short:
    case PlyType::UShort:
      return 2;
    case PlyType::Int:
    case PlyType::UInt:
    case PlyType::Float:
      return 4;
    case PlyType::Double:
      return 8;
  }
  return 0;
}

double read_scalar(const unsigned char* p, PlyType t) {
  switch (t) {
    case PlyType::Char: {
      std::int8_t v;
      std::memcpy(&v, p, 1);
      return v;
    }
    case PlyType::UChar:
      return *p;
    case PlyType::Short: {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PlyType::UShort: {
      std::uint16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PlyType::Int: {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::UInt: {
      std::uint32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::Float: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::Double: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
  }
  return 0.0;
}

struct PlyProperty {
  PlyType type;
  std::string name;
  std::size_t offset = 0;
};

struct PlyFile {
  std::size_t vertex_count = 0;
  std::size_t stride = 0;
  std::vector<PlyProperty> props;
  std::vector<std::string> comments;
  std::vector<unsigned char> payload;

  const PlyProperty* find(const std::string& name) const {
    for (const PlyProperty& p : props) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  const PlyProperty& require(const std::string& name, const std::string& path) const {
    const PlyProperty* p = find(name);
    if (!p) throw IoError(path + ": missing ply property '" + name + "'");
    return *p;
  }
  double value(std::size_t vertex, const PlyProperty& p) const {
    return read_scalar(payload.data() + vertex * stride + p.offset, p.type);
  }
};

PlyFile read_ply_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string line;
  auto next_line = [&] {
    if (!std::getline(in, line)) throw IoError(path + ": truncated ply header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next_line();
  if (line != "ply") throw IoError(path + ": not a ply file");

  PlyFile ply;
  bool format_seen = false, vertex_seen = false;
  for (;;) {
    next_line();
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info") {
      ply.comments.push_back(line.size() > tok.size() + 1 ? line.substr(tok.size() + 1)
                                                          : std::string());
    } else if (tok == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt != "binary_little_endian") {
        throw IoError(path + ": unsupported ply format '" + fmt + "'");
      }
      format_seen = true;
    } else if (tok == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (ls.fail() || name != "vertex" || vertex_seen || count < 0) {
        throw IoError(path + ": only a single vertex element is supported");
      }
      vertex_seen = true;
      ply.vertex_count = static_cast<std::size_t>(count);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (ls.fail() || type == "list") {
        throw IoError(path + ": unsupported ply property line '" + line + "'");
      }
      if (!vertex_seen) throw IoError(path + ": property before vertex element");
      const PlyType pt = ply_type(type, path);
      ply.props.push_back({pt, name, ply.stride});
      ply.stride += ply_size(pt);
    } else {
      throw IoError(path + ": unknown ply header line '" + line + "'");
    }
  }
  if (!format_seen || !vertex_seen) throw IoError(path + ": incomplete ply header");

  const std::size_t bytes = ply.vertex_count * ply.stride;
  ply.payload.resize(bytes);
  in.read(reinterpret_cast<char*>(ply.payload.data()),
          static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw IoError(path + ": ply payload does not match vertex count");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path + ": trailing bytes after ply payload");
  }
  return ply;
}

void append_f32(std::vector<unsigned char>& buf, double v) {
  const auto f = static_cast<float>(v);
  unsigned char b[4];
  std::memcpy(b, &f, 4);
  buf.insert(buf.end(), b, b + 4);
}

void append_i32(std::vector<unsigned char>& buf, std::int32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}

void append_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}

const char* const kGaussianFloatProps[] = {
    "x",      "y",      "z",      "scale_0", "scale_1", "scale_2",
    "rot_0",  "rot_1",  "rot_2",  "rot_3",   "opacity", "f_dc_0",
    "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1", "f_rest_2", "f_rest_3",
    "f_rest_4", "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8"};

}  // namespace

void write_ply(const std::string& path, const GaussianCloud& cloud) {
  cloud.validate();
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "comment splathead gaussian cloud\n"
         << "element vertex " << cloud.size() << "\n";
  for (const char* name : kGaussianFloatProps) {
    header << "property float " << name << "\n";
  }
  header << "property uchar provenance\nproperty int grid_index\nend_header\n";

  const std::string head = header.str();
  std::vector<unsigned char> buf(head.begin(), head.end());
  buf.reserve(buf.size() + cloud.size() * (23 * 4 + 1 + 4));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) append_f32(buf, cloud.positions[i][k]);
    for (int k = 0; k < 3; ++k) append_f32(buf, cloud.log_scales[i][k]);
    const Eigen::Vector4d q = cloud.rotations[i].as_vec4();
    for (int k = 0; k < 4; ++k) append_f32(buf, q[k]);
    append_f32(buf, cloud.opacity_logits[i]);
    for (int k = 0; k < 12; ++k) append_f32(buf, cloud.color_coeffs[i][k]);
    buf.push_back(static_cast<unsigned char>(cloud.provenance[i]));
    append_i32(buf, cloud.grid_index[i]);
  }
  write_bytes(path, buf);
}

GaussianCloud read_gaussian_ply(const std::string& path) {
  const PlyFile ply = read_ply_file(path);
  std::vector<const PlyProperty*> fp;
  fp.reserve(23);
  for (const char* name : kGaussianFloatProps) fp.push_back(&ply.require(name, path));
  const PlyProperty& prov = ply.require("provenance", path);
  const PlyProperty* gidx = ply.find("grid_index");

  GaussianCloud cloud;
  cloud.resize(ply.vertex_count);
  for (std::size_t i = 0; i < ply.vertex_count; ++i) {
    for (int k = 0; k < 3; ++k) cloud.positions[i][k] = ply.value(i, *fp[k]);
    for (int k = 0; k < 3; ++k) cloud.log_scales[i][k] = ply.value(i, *fp[3 + k]);
    Eigen::Vector4d q;
    for (int k = 0; k < 4; ++k) q[k] = ply.value(i, *fp[6 + k]);
    cloud.rotations[i] = Quaternion::from_vec4(q);
    cloud.opacity_logits[i] = ply.value(i, *fp[10]);
    for (int k = 0; k < 12; ++k) cloud.color_coeffs[i][k] = ply.value(i, *fp[11 + k]);
    const double p = ply.value(i, prov);
    if (p != 0.0 && p != 1.0 && p != 2.0) {
      throw IoError(path + ": provenance value out of range");
    }
    cloud.provenance[i] = static_cast<Provenance>(static_cast<int>(p));
    cloud.grid_index[i] =
        gidx ? static_cast<std::int32_t>(ply.value(i, *gidx)) : -1;
  }
  return cloud;
}

void write_ply(const std::string& path, const GridPointCloud& cloud) {
  if (cloud.width <= 0 || cloud.height <= 0 ||
      cloud.positions.size() != cloud.cell_count() ||
      cloud.valid.size() != cloud.cell_count()) {
    throw InvalidInputError("write_ply: malformed grid cloud");
  }
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "comment splathead_grid " << cloud.width << " " << cloud.height << "\n"
         << "element vertex " << cloud.valid_count() << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "property uint grid_index\nend_header\n";

  const std::string head = header.str();
  std::vector<unsigned char> buf(head.begin(), head.end());
  for (std::size_t i = 0; i < cloud.cell_count(); ++i) {
    if (!cloud.valid[i]) continue;
    for (int k = 0; k < 3; ++k) append_f32(buf, cloud.positions[i][k]);
    append_u32(buf, static_cast<std::uint32_t>(i));
  }
  write_bytes(path, buf);
}

GridPointCloud read_grid_ply(const std::string& path) {
  const PlyFile ply = read_ply_file(path);
  int width = 0, height = 0;
  bool shape_seen = false;
  for (const std::string& c : ply.comments) {
    std::istringstream cs(c);
    std::string tag;
    if (cs >> tag && tag == "splathead_grid" && (cs >> width >> height)) {
      shape_seen = true;
      break;
    }
  }
  if (!shape_seen || width <= 0 || height <= 0) {
    throw IoError(path + ": missing or malformed splathead_grid comment");
  }
  const PlyProperty& px = ply.require("x", path);
  const PlyProperty& py = ply.require("y", path);
  const PlyProperty& pz = ply.require("z", path);
  const PlyProperty& pi = ply.require("grid_index", path);

  GridPointCloud cloud(width, height);
  for (std::size_t i = 0; i < ply.vertex_count; ++i) {
    const double raw = ply.value(i, pi);
    if (raw < 0.0 || raw >= static_cast<double>(cloud.cell_count())) {
      throw IoError(path + ": grid_index out of range");
    }
    const auto cell = static_cast<std::size_t>(raw);
    if (cloud.valid[cell]) throw IoError(path + ": duplicate grid_index");
    cloud.valid[cell] = 1;
    cloud.positions[cell] =
        Eigen::Vector3d(ply.value(i, px), ply.value(i, py), ply.value(i, pz));
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// JSON documents

namespace {

void require_keys(const ojson& obj, const std::string& ctx,
                  std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InvalidInputError(ctx + " must be a json object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw InvalidInputError(ctx + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void load_field(const ojson& obj, const char* key, T& out) {
  if (const auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

ojson vec_to_json(const double* v, int n) {
  ojson arr = ojson::array();
  for (int i = 0; i < n; ++i) arr.push_back(v[i]);
  return arr;
}

void load_vec(const ojson& obj, const char* key, const std::string& ctx, double* v,
              int n) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array() || static_cast<int>(it->size()) != n) {
    throw InvalidInputError(ctx + "." + key + " must be an array of " +
                            std::to_string(n) + " numbers");
  }
  for (int i = 0; i < n; ++i) v[i] = (*it)[i].get<double>();
}

ojson camera_to_json(const Camera& c) {
  ojson j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  const Eigen::Vector4d q = c.rotation.as_vec4();
  j["rotation"] = vec_to_json(q.data(), 4);
  j["translation"] = vec_to_json(c.translation.data(), 3);
  return j;
}

Camera camera_from_json(const ojson& j, const std::string& ctx, const Camera& base) {
  require_keys(j, ctx,
               {"fx", "fy", "cx", "cy", "width", "height", "rotation", "translation"});
  Camera c = base;
  load_field(j, "fx", c.fx);
  load_field(j, "fy", c.fy);
  load_field(j, "cx", c.cx);
  load_field(j, "cy", c.cy);
  load_field(j, "width", c.width);
  load_field(j, "height", c.height);
  Eigen::Vector4d q = c.rotation.as_vec4();
  load_vec(j, "rotation", ctx, q.data(), 4);
  c.rotation = Quaternion::from_vec4(q);
  load_vec(j, "translation", ctx, c.translation.data(), 3);
  return c;
}

ojson config_to_json(const PipelineConfig& cfg) {
  ojson j;
  ojson& bini = j["bini"];
  bini["k"] = cfg.bini.k;
  bini["data_weight"] = cfg.bini.data_weight;
  bini["irls_iters"] = cfg.bini.irls_iters;
  bini["cg_tol"] = cfg.bini.cg_tol;
  bini["cg_max_iters"] = cfg.bini.cg_max_iters;
  bini["bilateral"] = cfg.bini.bilateral;

  ojson& voxel = j["voxel"];
  voxel["voxel_size"] = cfg.voxel.voxel_size;
  voxel["neighborhood_radius"] = cfg.voxel.neighborhood_radius;
  voxel["z_margin"] = cfg.voxel.z_margin;

  ojson& loss = j["loss"];
  loss["lambda_p"] = cfg.loss.lambda_p;
  loss["lambda_ssim"] = cfg.loss.lambda_ssim;
  loss["ssim_window"] = cfg.loss.ssim_window;
  loss["ssim_sigma"] = cfg.loss.ssim_sigma;
  loss["lr"] = cfg.loss.lr;
  loss["lr_decay"] = cfg.loss.lr_decay;
  loss["steps"] = cfg.loss.steps;
  loss["seed"] = cfg.loss.seed;

  ojson& synth = j["synth"];
  synth["radii"] = vec_to_json(cfg.synth.radii.data(), 3);
  ojson bumps = ojson::array();
  for (const SynthBump& b : cfg.synth.bumps) {
    ojson jb;
    jb["center"] = vec_to_json(b.center.data(), 3);
    jb["radius"] = b.radius;
    bumps.push_back(std::move(jb));
  }
  synth["bumps"] = std::move(bumps);
  synth["asymmetry"] = cfg.synth.asymmetry;
  synth["asymmetry_center"] = vec_to_json(cfg.synth.asymmetry_center.data(), 3);
  synth["smooth_k"] = cfg.synth.smooth_k;
  synth["image_size"] = cfg.synth.image_size;
  synth["camera_distance"] = cfg.synth.camera_distance;
  synth["seed"] = cfg.synth.seed;

  j["camera"] = camera_to_json(cfg.camera);
  j["expression_dim"] = cfg.expression_dim;
  j["hidden_width"] = cfg.hidden_width;
  j["seed"] = cfg.seed;
  return j;
}

PipelineConfig config_from_json(const ojson& j) {
  require_keys(j, "config",
               {"bini", "voxel", "loss", "synth", "camera", "expression_dim",
                "hidden_width", "seed"});
  PipelineConfig cfg;
  if (const auto it = j.find("bini"); it != j.end()) {
    require_keys(*it, "config.bini",
                 {"k", "data_weight", "irls_iters", "cg_tol", "cg_max_iters",
                  "bilateral"});
    load_field(*it, "k", cfg.bini.k);
    load_field(*it, "data_weight", cfg.bini.data_weight);
    load_field(*it, "irls_iters", cfg.bini.irls_iters);
    load_field(*it, "cg_tol", cfg.bini.cg_tol);
    load_field(*it, "cg_max_iters", cfg.bini.cg_max_iters);
    load_field(*it, "bilateral", cfg.bini.bilateral);
  }
  if (const auto it = j.find("voxel"); it != j.end()) {
    require_keys(*it, "config.voxel", {"voxel_size", "neighborhood_radius", "z_margin"});
    load_field(*it, "voxel_size", cfg.voxel.voxel_size);
    load_field(*it, "neighborhood_radius", cfg.voxel.neighborhood_radius);
    load_field(*it, "z_margin", cfg.voxel.z_margin);
  }
  if (const auto it = j.find("loss"); it != j.end()) {
    require_keys(*it, "config.loss",
                 {"lambda_p", "lambda_ssim", "ssim_window", "ssim_sigma", "lr",
                  "lr_decay", "steps", "seed"});
    load_field(*it, "lambda_p", cfg.loss.lambda_p);
    load_field(*it, "lambda_ssim", cfg.loss.lambda_ssim);
    load_field(*it, "ssim_window", cfg.loss.ssim_window);
    load_field(*it, "ssim_sigma", cfg.loss.ssim_sigma);
    load_field(*it, "lr", cfg.loss.lr);
    load_field(*it, "lr_decay", cfg.loss.lr_decay);
    load_field(*it, "steps", cfg.loss.steps);
    load_field(*it, "seed", cfg.loss.seed);
  }
  if (const auto it = j.find("synth"); it != j.end()) {
    require_keys(*it, "config.synth",
                 {"radii", "bumps", "asymmetry", "asymmetry_center", "smooth_k",
                  "image_size", "camera_distance", "seed"});
    load_vec(*it, "radii", "config.synth", cfg.synth.radii.data(), 3);
    if (const auto bit = it->find("bumps"); bit != it->end()) {
      if (!bit->is_array()) {
        throw InvalidInputError("config.synth.bumps must be an array");
      }
      cfg.synth.bumps.clear();
      int idx = 0;
      for (const ojson& jb : *bit) {
        const std::string ctx = "config.synth.bumps[" + std::to_string(idx++) + "]";
        require_keys(jb, ctx, {"center", "radius"});
        SynthBump b;
        load_vec(jb, "center", ctx, b.center.data(), 3);
        load_field(jb, "radius", b.radius);
        cfg.synth.bumps.push_back(b);
      }
    }
    load_field(*it, "asymmetry", cfg.synth.asymmetry);
    load_vec(*it, "asymmetry_center", "config.synth", cfg.synth.asymmetry_center.data(),
             3);
    load_field(*it, "smooth_k", cfg.synth.smooth_k);
    load_field(*it, "image_size", cfg.synth.image_size);
    load_field(*it, "camera_distance", cfg.synth.camera_distance);
    load_field(*it, "seed", cfg.synth.seed);
  }
  if (const auto it = j.find("camera"); it != j.end()) {
    cfg.camera = camera_from_json(*it, "config.camera", cfg.camera);
  }
  load_field(j, "expression_dim", cfg.expression_dim);
  load_field(j, "hidden_width", cfg.hidden_width);
  load_field(j, "seed", cfg.seed);
  return cfg;
}

ojson parse_json(const std::string& text, const std::string& what) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(what + ": " + e.what());
  }
}

}  // namespace

void write_camera_json(const std::string& path, const Camera& camera) {
  write_text(path, camera_to_json(camera).dump(2) + "\n");
}

Camera read_camera_json(const std::string& path) {
  const ojson j = parse_json(read_text(path), path);
  try {
    return camera_from_json(j, "camera", Camera{});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(path + ": " + e.what());
  }
}

std::string config_to_string(const PipelineConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

PipelineConfig config_from_string(const std::string& text) {
  const ojson j = parse_json(text, "config");
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("config: ") + e.what());
  }
}

void write_config_json(const std::string& path, const PipelineConfig& cfg) {
  write_text(path, config_to_string(cfg));
}

PipelineConfig read_config_json(const std::string& path) {
  return config_from_string(read_text(path));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using NetRef = std::pair<const char*, const Mlp*>;

std::array<NetRef, 7> net_list(const RegressorBundle& b) {
  return {{{"refine", &b.refine},
           {"deform", &b.deform},
           {"decode", &b.decode},
           {"sym_scale", &b.sym_scale},
           {"sym_rot", &b.sym_rot},
           {"sym_color", &b.sym_color},
           {"sym_opacity", &b.sym_opacity}}};
}

}  // namespace

void write_checkpoint(const std::string& path, const RegressorBundle& bundle) {
  ojson header;
  header["version"] = 1;
  header["feature_dim"] = bundle.feature_dim;
  header["expression_dim"] = bundle.expression_dim;
  ojson nets = ojson::array();
  for (const NetRef& n : net_list(bundle)) {
    ojson jn;
    jn["name"] = n.first;
    jn["widths"] = n.second->widths();
    jn["seed"] = n.second->seed();
    nets.push_back(std::move(jn));
  }
  header["nets"] = std::move(nets);
  const std::string head = header.dump();

  std::vector<unsigned char> buf;
  append_u32(buf, static_cast<std::uint32_t>(head.size()));
  buf.insert(buf.end(), head.begin(), head.end());
  for (const NetRef& n : net_list(bundle)) {
    const Eigen::VectorXd& p = n.second->parameters();
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data());
    buf.insert(buf.end(), bytes, bytes + p.size() * sizeof(double));
  }
  write_bytes(path, buf);
}

RegressorBundle read_checkpoint(const std::string& path) {
  const std::vector<unsigned char> buf = read_bytes(path);
  if (buf.size() < 4) throw IoError(path + ": truncated checkpoint");
  std::uint32_t head_len = 0;
  std::memcpy(&head_len, buf.data(), 4);
  if (buf.size() < 4 + static_cast<std::size_t>(head_len)) {
    throw IoError(path + ": truncated checkpoint header");
  }
  ojson header;
  try {
    header = ojson::parse(buf.begin() + 4, buf.begin() + 4 + head_len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint header: " + e.what());
  }

  RegressorBundle bundle;
  std::size_t offset = 4 + head_len;
  try {
    if (header.at("version").get<int>() != 1) {
      throw IoError(path + ": unsupported checkpoint version");
    }
    bundle.feature_dim = header.at("feature_dim").get<int>();
    bundle.expression_dim = header.at("expression_dim").get<int>();
    const ojson& nets = header.at("nets");
    std::array<Mlp*, 7> slots = {&bundle.refine,    &bundle.deform,
                                 &bundle.decode,    &bundle.sym_scale,
                                 &bundle.sym_rot,   &bundle.sym_color,
                                 &bundle.sym_opacity};
    const auto names = net_list(bundle);
    if (nets.size() != slots.size()) {
      throw IoError(path + ": checkpoint expects 7 nets");
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const ojson& jn = nets[i];
      if (jn.at("name").get<std::string>() != names[i].first) {
        throw IoError(path + ": checkpoint net order mismatch, expected '" +
                      names[i].first + "'");
      }
      Mlp net(jn.at("widths").get<std::vector<int>>(),
              jn.at("seed").get<std::uint64_t>());
      const std::size_t bytes = net.parameters().size() * sizeof(double);
      if (buf.size() < offset + bytes) {
        throw IoError(path + ": truncated checkpoint parameters");
      }
      std::memcpy(net.parameters().data(), buf.data() + offset, bytes);
      offset += bytes;
      *slots[i] = std::move(net);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint header: " + e.what());
  }
  if (offset != buf.size()) {
    throw IoError(path + ": trailing bytes after checkpoint parameters");
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Hashing

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t hash_file(const std::string& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace splathead
