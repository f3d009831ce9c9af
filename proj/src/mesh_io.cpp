#include "defurnish/mesh_io.hpp"

#include "defurnish/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace defurnish {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view tok, const fs::path& path, std::size_t line) {
  double value = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) parse_fail(path, line, "bad number '" + std::string(tok) + "'");
  return value;
}

long parse_long(std::string_view tok, const fs::path& path, std::size_t line) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) parse_fail(path, line, "bad index '" + std::string(tok) + "'");
  return value;
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

// Polygon as read from file, before triangulation.
struct RawFace {
  std::vector<std::uint32_t> v;
  std::vector<std::uint32_t> vt;  // empty when untextured
  std::uint32_t page = 0;
};

struct RawMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec2> texcoords;
  std::vector<RawFace> faces;
  std::vector<std::optional<FaceLabel>> labels;  // per raw face (PLY only)
  std::vector<std::uint8_t> is_new;              // per raw face (PLY only)
  std::vector<std::shared_ptr<const TextureImage>> textures;
};

// ---------------------------------------------------------------------------
// OBJ

// Materials with a diffuse map, in file order.
std::vector<std::pair<std::string, fs::path>> read_mtl(const fs::path& path) {
  std::vector<std::pair<std::string, fs::path>> maps;
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::string current;
  while (std::getline(in, line)) {
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    const auto toks = split_ws(l);
    if (toks[0] == "newmtl" && toks.size() >= 2) {
      current = std::string(toks[1]);
    } else if (toks[0] == "map_Kd" && toks.size() >= 2 && !current.empty()) {
      // Options precede the file name; the name is the last token.
      maps.emplace_back(current, path.parent_path() / std::string(toks.back()));
    }
  }
  return maps;
}

RawMesh read_obj(const fs::path& path) {
  RawMesh raw;
  const std::string text = read_file(path);
  std::unordered_map<std::string, std::uint32_t> page_of_material;
  std::uint32_t current_page = 0;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto toks = split_ws(line);
    const std::string_view kind = toks[0];
    if (kind == "v") {
      if (toks.size() < 4) parse_fail(path, line_no, "vertex needs 3 coordinates");
      raw.vertices.emplace_back(parse_double(toks[1], path, line_no), parse_double(toks[2], path, line_no),
                                parse_double(toks[3], path, line_no));
    } else if (kind == "vt") {
      if (toks.size() < 3) parse_fail(path, line_no, "texcoord needs 2 coordinates");
      raw.texcoords.emplace_back(parse_double(toks[1], path, line_no), parse_double(toks[2], path, line_no));
    } else if (kind == "f") {
      if (toks.size() < 4) parse_fail(path, line_no, "face needs at least 3 vertices");
      RawFace face;
      face.page = current_page;
      bool any_vt = false;
      bool all_vt = true;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        const std::string_view tok = toks[i];
        const std::size_t s1 = tok.find('/');
        const std::string_view vs = tok.substr(0, s1);
        long vi = parse_long(vs, path, line_no);
        vi = vi < 0 ? static_cast<long>(raw.vertices.size()) + vi : vi - 1;
        if (vi < 0 || vi >= static_cast<long>(raw.vertices.size())) parse_fail(path, line_no, "vertex index out of range");
        face.v.push_back(static_cast<std::uint32_t>(vi));
        std::string_view ts;
        if (s1 != std::string_view::npos) {
          const std::size_t s2 = tok.find('/', s1 + 1);
          ts = tok.substr(s1 + 1, s2 == std::string_view::npos ? std::string_view::npos : s2 - s1 - 1);
        }
        if (ts.empty()) {
          all_vt = false;
          continue;
        }
        any_vt = true;
        long ti = parse_long(ts, path, line_no);
        ti = ti < 0 ? static_cast<long>(raw.texcoords.size()) + ti : ti - 1;
        if (ti < 0 || ti >= static_cast<long>(raw.texcoords.size())) parse_fail(path, line_no, "texcoord index out of range");
        face.vt.push_back(static_cast<std::uint32_t>(ti));
      }
      if (any_vt && !all_vt) parse_fail(path, line_no, "face mixes textured and untextured corners");
      raw.faces.push_back(std::move(face));
    } else if (kind == "mtllib" && toks.size() >= 2) {
      const fs::path mtl = path.parent_path() / std::string(toks[1]);
      if (fs::exists(mtl)) {
        for (auto& [name, tex] : read_mtl(mtl)) {
          if (page_of_material.count(name)) continue;
          page_of_material[name] = static_cast<std::uint32_t>(raw.textures.size());
          raw.textures.push_back(std::make_shared<const TextureImage>(read_image(tex)));
        }
      }
    } else if (kind == "usemtl" && toks.size() >= 2) {
      const std::string name(toks[1]);
      if (auto known = page_of_material.find(name); known != page_of_material.end()) current_page = known->second;
    }
  }
  return raw;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType ply_type(std::string_view name, const fs::path& path, std::size_t line) {
  if (name == "char" || name == "int8") return PlyType::Int8;
  if (name == "uchar" || name == "uint8") return PlyType::UInt8;
  if (name == "short" || name == "int16") return PlyType::Int16;
  if (name == "ushort" || name == "uint16") return PlyType::UInt16;
  if (name == "int" || name == "int32") return PlyType::Int32;
  if (name == "uint" || name == "uint32") return PlyType::UInt32;
  if (name == "float" || name == "float32") return PlyType::Float32;
  if (name == "double" || name == "float64") return PlyType::Float64;
  parse_fail(path, line, "unknown PLY type '" + std::string(name) + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 1;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
  PlyType value_type = PlyType::Float32;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

class PlyReader {
 public:
  PlyReader(const std::string& data, std::size_t pos, int format, const fs::path& path)
      : data_(data), pos_(pos), format_(format), path_(path) {}

  double read(PlyType t) {
    if (format_ == 0) return read_ascii();
    const std::size_t n = ply_size(t);
    if (pos_ + n > data_.size()) throw Error(ErrorKind::Parse, path_.string() + ": unexpected end of PLY body");
    unsigned char buf[8];
    std::memcpy(buf, data_.data() + pos_, n);
    pos_ += n;
    const bool swap = (format_ == 2) == (std::endian::native == std::endian::little);
    if (swap) std::reverse(buf, buf + n);
    switch (t) {
      case PlyType::Int8: return static_cast<std::int8_t>(buf[0]);
      case PlyType::UInt8: return buf[0];
      case PlyType::Int16: return load<std::int16_t>(buf);
      case PlyType::UInt16: return load<std::uint16_t>(buf);
      case PlyType::Int32: return load<std::int32_t>(buf);
      case PlyType::UInt32: return load<std::uint32_t>(buf);
      case PlyType::Float32: return load<float>(buf);
      case PlyType::Float64: return load<double>(buf);
    }
    return 0.0;
  }

 private:
  template <typename T>
  static double load(const unsigned char* buf) {
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return static_cast<double>(v);
  }

  double read_ascii() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (start == pos_) throw Error(ErrorKind::Parse, path_.string() + ": unexpected end of PLY body");
    return parse_double(std::string_view(data_).substr(start, pos_ - start), path_, 0);
  }

  const std::string& data_;
  std::size_t pos_;
  int format_;  // 0 ascii, 1 binary little endian, 2 binary big endian
  const fs::path& path_;
};

RawMesh read_ply(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= data.size()) parse_fail(path, line_no, "unterminated PLY header");
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    std::string_view line = std::string_view(data).substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    return trim(line);
  };
  if (next_line() != "ply") parse_fail(path, 1, "missing 'ply' magic");
  int format = -1;
  std::vector<PlyElement> elements;
  std::vector<std::string> texture_files;
  for (;;) {
    const std::string_view line = next_line();
    if (line == "end_header") break;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() < 2) parse_fail(path, line_no, "bad format line");
      if (toks[1] == "ascii") format = 0;
      else if (toks[1] == "binary_little_endian") format = 1;
      else if (toks[1] == "binary_big_endian") format = 2;
      else parse_fail(path, line_no, "unknown PLY format");
    } else if (toks[0] == "comment") {
      if (toks.size() >= 3 && toks[1] == "TextureFile") texture_files.emplace_back(toks[2]);
    } else if (toks[0] == "element") {
      if (toks.size() < 3) parse_fail(path, line_no, "bad element line");
      elements.push_back({std::string(toks[1]), static_cast<std::size_t>(parse_long(toks[2], path, line_no)), {}});
    } else if (toks[0] == "property") {
      if (elements.empty()) parse_fail(path, line_no, "property before element");
      PlyProperty prop;
      if (toks.size() >= 5 && toks[1] == "list") {
        prop.is_list = true;
        prop.count_type = ply_type(toks[2], path, line_no);
        prop.value_type = ply_type(toks[3], path, line_no);
        prop.name = std::string(toks[4]);
      } else if (toks.size() >= 3) {
        prop.value_type = ply_type(toks[1], path, line_no);
        prop.name = std::string(toks[2]);
      } else {
        parse_fail(path, line_no, "bad property line");
      }
      elements.back().properties.push_back(prop);
    }
  }
  if (format < 0) parse_fail(path, line_no, "missing format line");

  RawMesh raw;
  bool any_label = false;
  PlyReader reader(data, pos, format, path);
  for (const PlyElement& el : elements) {
    for (std::size_t i = 0; i < el.count; ++i) {
      Vec3 p = Vec3::Zero();
      Vec2 uv(std::nan(""), std::nan(""));
      RawFace face;
      std::optional<int> cls;
      std::optional<int> inst;
      std::uint8_t is_new = 0;
      std::vector<double> face_uv;
      for (const PlyProperty& prop : el.properties) {
        if (prop.is_list) {
          const std::size_t n = static_cast<std::size_t>(reader.read(prop.count_type));
          std::vector<double> values(n);
          for (auto& v : values) v = reader.read(prop.value_type);
          if (el.name == "face" && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            for (double v : values) face.v.push_back(static_cast<std::uint32_t>(v));
          } else if (el.name == "face" && prop.name == "texcoord") {
            face_uv = std::move(values);
          }
          continue;
        }
        const double v = reader.read(prop.value_type);
        if (el.name == "vertex") {
          if (prop.name == "x") p.x() = v;
          else if (prop.name == "y") p.y() = v;
          else if (prop.name == "z") p.z() = v;
          else if (prop.name == "u" || prop.name == "s" || prop.name == "texture_u") uv.x() = v;
          else if (prop.name == "v" || prop.name == "t" || prop.name == "texture_v") uv.y() = v;
        } else if (el.name == "face") {
          if (prop.name == "class") cls = static_cast<int>(v);
          else if (prop.name == "instance") inst = static_cast<int>(v);
          else if (prop.name == "is_new") is_new = v != 0.0 ? 1 : 0;
        }
      }
      if (el.name == "vertex") {
        raw.vertices.push_back(p);
        raw.texcoords.push_back(uv);
      } else if (el.name == "face") {
        if (face.v.size() < 3) throw Error(ErrorKind::Parse, path.string() + ": face " + std::to_string(i) + " has fewer than 3 vertices");
        for (std::uint32_t v : face.v) {
          if (v >= raw.vertices.size()) throw Error(ErrorKind::Parse, path.string() + ": face " + std::to_string(i) + " index out of range");
        }
        if (face_uv.size() == 2 * face.v.size()) {
          for (std::size_t k = 0; k < face.v.size(); ++k) {
            face.vt.push_back(static_cast<std::uint32_t>(raw.texcoords.size()));
            raw.texcoords.emplace_back(face_uv[2 * k], face_uv[2 * k + 1]);
          }
        } else if (std::all_of(face.v.begin(), face.v.end(), [&](std::uint32_t v) {
                     return std::isfinite(raw.texcoords[v].x()) && std::isfinite(raw.texcoords[v].y());
                   })) {
          face.vt = face.v;
        }
        if (cls || inst) any_label = true;
        raw.labels.push_back(cls ? std::optional<FaceLabel>(FaceLabel{*cls, inst.value_or(0)}) : std::nullopt);
        raw.is_new.push_back(is_new);
        raw.faces.push_back(std::move(face));
      }
    }
  }
  if (!any_label) raw.labels.clear();
  for (const std::string& name : texture_files) {
    raw.textures.push_back(std::make_shared<const TextureImage>(read_image(path.parent_path() / name)));
  }
  return raw;
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

}  // namespace

fs::path labels_sidecar_path(const fs::path& mesh_path) {
  fs::path p = mesh_path;
  p.replace_extension(".labels.json");
  return p;
}

SidecarLabels read_label_sidecar(const fs::path& path, std::size_t face_count, const ClassMap& class_map) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Parse, path.string() + ": label sidecar must be a JSON object");
  if (doc.size() > face_count) {
    throw Error(ErrorKind::LabelCountMismatch,
                path.string() + ": " + std::to_string(doc.size()) + " labels for " + std::to_string(face_count) + " faces");
  }
  SidecarLabels out;
  out.labels.assign(face_count, std::nullopt);
  out.is_new.assign(face_count, 0);
  for (const auto& [key, value] : doc.items()) {
    std::size_t face = 0;
    auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), face);
    if (ec != std::errc() || ptr != key.data() + key.size()) {
      throw Error(ErrorKind::Parse, path.string() + ": face key '" + key + "' is not an index");
    }
    if (face >= face_count) {
      throw Error(ErrorKind::LabelCountMismatch, path.string() + ": face " + key + " beyond " + std::to_string(face_count) + " faces");
    }
    if (!value.is_object() || !value.contains("class") || !value["class"].is_number_integer()) {
      throw Error(ErrorKind::Parse, path.string() + ": face " + key + " needs an integer 'class'");
    }
    const int cls = value["class"].get<int>();
    if (!class_map.contains(cls)) {
      throw Error(ErrorKind::UnknownClass, path.string() + ": face " + key + " references class " + std::to_string(cls));
    }
    const int inst = value.value("instance", 0);
    out.labels[face] = FaceLabel{cls, inst};
    out.is_new[face] = value.value("new", false) ? 1 : 0;
  }
  return out;
}

void write_label_sidecar(const LabeledMesh& mesh, const fs::path& path) {
  // Written by hand to keep numeric keys in face order.
  std::string out;
  out.reserve(mesh.face_count() * 40);
  out += "{\n";
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    out += "  \"" + std::to_string(f) + "\": {\"class\": " + std::to_string(mesh.labels[f].class_id) +
           ", \"instance\": " + std::to_string(mesh.labels[f].instance_id);
    if (mesh.face_is_new[f]) out += ", \"new\": true";
    out += f + 1 < mesh.face_count() ? "},\n" : "}\n";
  }
  out += "}\n";
  write_text(path, out);
}

LabeledMesh load_mesh(const fs::path& path, const std::optional<fs::path>& labels_path, const ClassMap& class_map) {
  if (!fs::exists(path)) throw Error(ErrorKind::FileNotFound, path.string());
  const std::string ext = lower_extension(path);
  RawMesh raw;
  if (ext == ".obj") raw = read_obj(path);
  else if (ext == ".ply") raw = read_ply(path);
  else throw Error(ErrorKind::Parse, path.string() + ": unsupported mesh format '" + ext + "'");

  std::optional<fs::path> sidecar = labels_path;
  if (!sidecar && fs::exists(labels_sidecar_path(path))) sidecar = labels_sidecar_path(path);
  if (labels_path && !fs::exists(*labels_path)) throw Error(ErrorKind::FileNotFound, labels_path->string());

  std::vector<std::optional<FaceLabel>> labels = raw.labels;
  std::vector<std::uint8_t> is_new = raw.is_new;
  if (sidecar) {
    SidecarLabels side = read_label_sidecar(*sidecar, raw.faces.size(), class_map);
    labels = std::move(side.labels);
    is_new = std::move(side.is_new);
  } else {
    for (std::size_t f = 0; f < labels.size(); ++f) {
      if (labels[f] && !class_map.contains(labels[f]->class_id)) {
        throw Error(ErrorKind::UnknownClass,
                    path.string() + ": face " + std::to_string(f) + " references class " + std::to_string(labels[f]->class_id));
      }
    }
  }

  LabeledMesh mesh;
  mesh.vertices = std::move(raw.vertices);
  mesh.textures = std::move(raw.textures);
  const bool any_uv = std::any_of(raw.faces.begin(), raw.faces.end(), [](const RawFace& f) { return !f.vt.empty(); });
  const FaceLabel fallback{class_map.unknown_class(), 0};
  for (std::size_t f = 0; f < raw.faces.size(); ++f) {
    const RawFace& face = raw.faces[f];
    const FaceLabel label = (f < labels.size() && labels[f]) ? *labels[f] : fallback;
    const bool fresh = f < is_new.size() && is_new[f];
    for (std::size_t k = 1; k + 1 < face.v.size(); ++k) {
      const Triangle tri{face.v[0], face.v[k], face.v[k + 1]};
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
        throw Error(ErrorKind::Parse, path.string() + ": face " + std::to_string(f) + " repeats a vertex");
      }
      std::optional<CornerUvs> uvs;
      if (any_uv) {
        uvs = face.vt.empty() ? missing_uvs()
                              : CornerUvs{raw.texcoords[face.vt[0]], raw.texcoords[face.vt[k]], raw.texcoords[face.vt[k + 1]]};
      }
      mesh.add_face(tri, label, fresh, uvs, face.page);
    }
  }
  if (mesh.textures.size() <= 1) mesh.face_texture.clear();
  mesh.check_invariants();
  return mesh;
}

void save_mesh(const LabeledMesh& mesh, const fs::path& path) {
  mesh.check_invariants();
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "directory does not exist: " + dir.string());
  const std::string stem = path.stem().string();
  std::vector<std::string> page_files;
  for (std::size_t k = 0; k < mesh.textures.size(); ++k) {
    page_files.push_back(stem + "_page" + std::to_string(k) + ".png");
    write_png(*mesh.textures[k], dir / page_files.back());
  }
  auto page_of = [&](std::size_t f) -> std::uint32_t { return mesh.face_texture.empty() ? 0 : mesh.face_texture[f]; };

  const std::string ext = lower_extension(path);
  if (ext == ".ply") {
    std::string header = "ply\nformat binary_little_endian 1.0\n";
    for (const auto& name : page_files) header += "comment TextureFile " + name + "\n";
    header += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
    header += "property double x\nproperty double y\nproperty double z\n";
    header += "element face " + std::to_string(mesh.face_count()) + "\n";
    header += "property list uchar int vertex_indices\n";
    if (mesh.has_uvs()) header += "property list uchar double texcoord\n";
    header += "property int class\nproperty int instance\nproperty uchar is_new\nend_header\n";
    std::string body = header;
    auto put = [&body](const auto& v) {
      const char* p = reinterpret_cast<const char*>(&v);
      body.append(p, sizeof(v));
    };
    static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");
    for (const Vec3& p : mesh.vertices) {
      put(p.x());
      put(p.y());
      put(p.z());
    }
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
      put(std::uint8_t{3});
      for (std::uint32_t v : mesh.triangles[f]) put(static_cast<std::int32_t>(v));
      if (mesh.has_uvs()) {
        if (mesh.face_has_uv(f)) {
          put(std::uint8_t{6});
          for (const Vec2& uv : mesh.corner_uvs[f]) {
            put(uv.x());
            put(uv.y());
          }
        } else {
          put(std::uint8_t{0});
        }
      }
      put(static_cast<std::int32_t>(mesh.labels[f].class_id));
      put(static_cast<std::int32_t>(mesh.labels[f].instance_id));
      put(static_cast<std::uint8_t>(mesh.face_is_new[f] ? 1 : 0));
    }
    write_text(path, body);
    return;
  }
  if (ext != ".obj") throw Error(ErrorKind::Io, "unsupported output format '" + ext + "'");

  std::string obj;
  obj.reserve(mesh.vertices.size() * 60 + mesh.face_count() * 150);
  obj += "# defurnish labeled mesh\n";
  if (!page_files.empty()) {
    std::string mtl;
    for (std::size_t k = 0; k < page_files.size(); ++k) {
      mtl += "newmtl page" + std::to_string(k) + "\nKd 1 1 1\nmap_Kd " + page_files[k] + "\n";
    }
    write_text(dir / (stem + ".mtl"), mtl);
    obj += "mtllib " + stem + ".mtl\n";
  }
  for (const Vec3& p : mesh.vertices) {
    obj += "v ";
    append_number(obj, p.x());
    obj += ' ';
    append_number(obj, p.y());
    obj += ' ';
    append_number(obj, p.z());
    obj += '\n';
  }
  std::vector<std::size_t> vt_base(mesh.face_count(), 0);
  std::size_t vt_count = 0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    if (!mesh.face_has_uv(f)) continue;
    vt_base[f] = vt_count;
    for (const Vec2& uv : mesh.corner_uvs[f]) {
      obj += "vt ";
      append_number(obj, uv.x());
      obj += ' ';
      append_number(obj, uv.y());
      obj += '\n';
    }
    vt_count += 3;
  }
  std::int64_t current_page = -1;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    if (!page_files.empty() && static_cast<std::int64_t>(page_of(f)) != current_page) {
      current_page = page_of(f);
      obj += "usemtl page" + std::to_string(current_page) + "\n";
    }
    obj += 'f';
    for (int k = 0; k < 3; ++k) {
      obj += ' ';
      obj += std::to_string(mesh.triangles[f][k] + 1);
      if (mesh.face_has_uv(f)) {
        obj += '/';
        obj += std::to_string(vt_base[f] + k + 1);
      }
    }
    obj += '\n';
  }
  write_text(path, obj);
  write_label_sidecar(mesh, labels_sidecar_path(path));
}

}  // namespace defurnish
