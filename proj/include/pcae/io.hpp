#pragma once

// Mesh and point-cloud file formats: OBJ (read), PLY ascii / binary
// little-endian and whitespace XYZ (read and write).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pcae/geometry.hpp"

namespace pcae {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CloudFormat { ply_ascii, ply_binary, xyz };

inline CloudFormat parse_cloud_format(const std::string& s) {
  if (s == "ply_ascii") return CloudFormat::ply_ascii;
  if (s == "ply_binary" || s == "ply") return CloudFormat::ply_binary;
  if (s == "xyz") return CloudFormat::xyz;
  throw IoError("unknown point-cloud format '" + s + "' (expected ply_ascii, ply_binary or xyz)");
}

/// ASCII OBJ: `v` and `f` records; polygons are fan-triangulated. Face
/// indices may carry texture/normal refs (`1/2/3`) and may be negative.
inline Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh " + path.string());
  Mesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v[0] >> v[1] >> v[2])) throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::size_t> idx;
      std::string tok;
      while (ls >> tok) {
        long i = 0;
        try {
          i = std::stol(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad face index '" + tok + "'");
        }
        const long nv = static_cast<long>(mesh.vertices.size());
        const long resolved = i < 0 ? nv + i : i - 1;
        if (i == 0 || resolved < 0 || resolved >= nv)
          throw IoError(path.string() + ":" + std::to_string(lineno) + ": face index out of range");
        idx.push_back(static_cast<std::size_t>(resolved));
      }
      if (idx.size() < 3) throw IoError(path.string() + ":" + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (mesh.vertices.empty() || mesh.triangles.empty()) throw IoError("mesh " + path.string() + " has no geometry");
  return mesh;
}

inline void write_cloud(const PointCloud& pc, const std::filesystem::path& path, CloudFormat fmt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (fmt == CloudFormat::xyz) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : pc.points) out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  } else {
    out << "ply\nformat " << (fmt == CloudFormat::ply_ascii ? "ascii" : "binary_little_endian")
        << " 1.0\nelement vertex " << pc.size() << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    if (fmt == CloudFormat::ply_ascii) {
      out << std::setprecision(std::numeric_limits<float>::max_digits10);
      for (const auto& p : pc.points)
        out << static_cast<float>(p[0]) << ' ' << static_cast<float>(p[1]) << ' ' << static_cast<float>(p[2]) << '\n';
    } else {
      static_assert(std::endian::native == std::endian::little, "binary PLY writer assumes a little-endian host");
      for (const auto& p : pc.points) {
        const float v[3] = {static_cast<float>(p[0]), static_cast<float>(p[1]), static_cast<float>(p[2])};
        out.write(reinterpret_cast<const char*>(v), sizeof v);
      }
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw IoError("unsupported PLY property type '" + t + "'");
}

inline double ply_read_binary(const char* p, const std::string& t) {
  auto load = [p]<class V>(V) {
    V v;
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return load(std::int8_t{});
  if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
  if (t == "short" || t == "int16") return load(std::int16_t{});
  if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
  if (t == "int" || t == "int32") return load(std::int32_t{});
  if (t == "uint" || t == "uint32") return load(std::uint32_t{});
  if (t == "float" || t == "float32") return load(float{});
  return load(double{});
}

}  // namespace detail

inline PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw IoError(path.string() + ": not a PLY file");
  std::string format;
  std::size_t vertex_count = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<detail::PlyProperty> props;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_count = count;
        seen_vertex = true;
      } else if (!seen_vertex && count > 0) {
        throw IoError(path.string() + ": elements before 'vertex' are not supported");
      }
    } else if (kw == "property" && in_vertex) {
      detail::PlyProperty p;
      ls >> p.type;
      if (p.type == "list") throw IoError(path.string() + ": list properties on vertices are not supported");
      ls >> p.name;
      props.push_back(p);
    } else if (kw == "end_header") {
      break;
    }
  }
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i].name == "x") ix = static_cast<int>(i);
    if (props[i].name == "y") iy = static_cast<int>(i);
    if (props[i].name == "z") iz = static_cast<int>(i);
  }
  if (!seen_vertex || ix < 0 || iy < 0 || iz < 0) throw IoError(path.string() + ": missing vertex x/y/z");
  PointCloud pc;
  pc.points.resize(vertex_count);
  if (format == "ascii") {
    std::vector<double> row(props.size());
    for (auto& p : pc.points) {
      for (auto& v : row)
        if (!(in >> v)) throw IoError(path.string() + ": truncated vertex data");
      p = {row[ix], row[iy], row[iz]};
    }
  } else if (format == "binary_little_endian") {
    std::vector<std::size_t> offset(props.size());
    std::size_t stride = 0;
    for (std::size_t i = 0; i < props.size(); ++i) {
      offset[i] = stride;
      stride += detail::ply_type_size(props[i].type);
    }
    std::vector<char> buf(stride);
    for (auto& p : pc.points) {
      if (!in.read(buf.data(), static_cast<std::streamsize>(stride)))
        throw IoError(path.string() + ": truncated vertex data");
      p = {detail::ply_read_binary(buf.data() + offset[ix], props[ix].type),
           detail::ply_read_binary(buf.data() + offset[iy], props[iy].type),
           detail::ply_read_binary(buf.data() + offset[iz], props[iz].type)};
    }
  } else {
    throw IoError(path.string() + ": unsupported PLY format '" + format + "'");
  }
  return pc;
}

inline PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  PointCloud pc;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p[0])) continue;  // blank line
    if (!(ls >> p[1] >> p[2])) throw IoError(path.string() + ": malformed XYZ line '" + line + "'");
    pc.points.push_back(p);
  }
  return pc;
}

/// Dispatches on extension: .ply or .xyz (anything else is read as XYZ).
inline PointCloud read_cloud(const std::filesystem::path& path) {
  PointCloud pc = path.extension() == ".ply" ? read_ply(path) : read_xyz(path);
  if (pc.empty()) throw IoError(path.string() + ": no points");
  return pc;
}

}  // namespace pcae
