#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcmorph/geom.hpp"

namespace pcmorph {
namespace {

// Line cursor over an in-memory document. Errors cite 1-based line numbers;
// hitting end-of-input reports the last line that actually existed.
class LineReader {
 public:
  explicit LineReader(const std::string& bytes) : text_(bytes) {}

  // Next non-blank, non-comment line. Returns false at end of input.
  bool next(std::string& line) {
    while (pos_ < text_.size()) {
      std::size_t eol = text_.find('\n', pos_);
      if (eol == std::string::npos) eol = text_.size();
      line.assign(text_, pos_, eol - pos_);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      pos_ = eol + 1;
      ++line_no_;
      const std::size_t first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      if (line[first] == '#') continue;
      return true;
    }
    return false;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

[[noreturn]] void fail(const char* format_name, std::size_t line,
                       const std::string& what) {
  throw ParseError(std::string(format_name) + ": line " +
                   std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_double(const char* fmt, std::size_t line, const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(fmt, line, "expected a number, got '" + s + "'");
  if (!std::isfinite(v)) fail(fmt, line, "non-finite coordinate '" + s + "'");
  return v;
}

long parse_long(const char* fmt, std::size_t line, const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(fmt, line, "expected an integer, got '" + s + "'");
  return v;
}

// Fan-triangulate a polygon given as mesh-vertex indices.
void emit_fan(const char* fmt, std::size_t line,
              const std::vector<std::uint32_t>& poly, std::size_t vertex_count,
              std::vector<Face>& faces) {
  if (poly.size() < 3) fail(fmt, line, "face needs at least 3 vertices");
  for (std::uint32_t idx : poly)
    if (idx >= vertex_count)
      fail(fmt, line,
           "face index " + std::to_string(idx) + " out of range (mesh has " +
               std::to_string(vertex_count) + " vertices)");
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
    const Face f{poly[0], poly[i], poly[i + 1]};
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      fail(fmt, line, "face has repeated vertex indices");
    faces.push_back(f);
  }
}

}  // namespace

TriMesh load_off(const std::string& bytes) {
  LineReader reader(bytes);
  std::string line;

  if (!reader.next(line)) fail("off", reader.line_no(), "empty document");
  // Header is "OFF"; ModelNet files sometimes glue the counts to it.
  std::string rest;
  if (line.rfind("OFF", 0) != 0)
    fail("off", reader.line_no(), "missing OFF header");
  rest = line.substr(3);

  std::vector<std::string> counts = split_ws(rest);
  if (counts.empty()) {
    if (!reader.next(line))
      fail("off", reader.line_no(), "unexpected end of file (expected counts)");
    counts = split_ws(line);
  }
  if (counts.size() < 2)
    fail("off", reader.line_no(), "counts line needs vertex and face counts");
  const long nv = parse_long("off", reader.line_no(), counts[0]);
  const long nf = parse_long("off", reader.line_no(), counts[1]);
  if (nv < 0 || nf < 0) fail("off", reader.line_no(), "negative count");

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    if (!reader.next(line))
      fail("off", reader.line_no(),
           "unexpected end of file (expected vertex " + std::to_string(i) +
               " of " + std::to_string(nv) + ")");
    const auto tokens = split_ws(line);
    if (tokens.size() < 3)
      fail("off", reader.line_no(), "vertex line needs 3 coordinates");
    mesh.vertices.push_back({parse_double("off", reader.line_no(), tokens[0]),
                             parse_double("off", reader.line_no(), tokens[1]),
                             parse_double("off", reader.line_no(), tokens[2])});
  }

  for (long i = 0; i < nf; ++i) {
    if (!reader.next(line))
      fail("off", reader.line_no(),
           "unexpected end of file (expected face " + std::to_string(i) +
               " of " + std::to_string(nf) + ")");
    const auto tokens = split_ws(line);
    if (tokens.empty()) fail("off", reader.line_no(), "empty face line");
    const long sides = parse_long("off", reader.line_no(), tokens[0]);
    if (sides < 3) fail("off", reader.line_no(), "face needs >= 3 sides");
    if (tokens.size() < static_cast<std::size_t>(sides) + 1)
      fail("off", reader.line_no(), "face line shorter than its count");
    std::vector<std::uint32_t> poly;
    for (long s = 0; s < sides; ++s) {
      const long idx = parse_long("off", reader.line_no(), tokens[1 + s]);
      if (idx < 0) fail("off", reader.line_no(), "negative face index");
      poly.push_back(static_cast<std::uint32_t>(idx));
    }
    emit_fan("off", reader.line_no(), poly, mesh.vertices.size(), mesh.faces);
  }
  return mesh;
}

TriMesh load_obj(const std::string& bytes) {
  LineReader reader(bytes);
  std::string line;
  TriMesh mesh;

  while (reader.next(line)) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    const std::string& tag = tokens[0];
    if (tag == "v") {
      if (tokens.size() < 4)
        fail("obj", reader.line_no(), "v record needs 3 coordinates");
      mesh.vertices.push_back(
          {parse_double("obj", reader.line_no(), tokens[1]),
           parse_double("obj", reader.line_no(), tokens[2]),
           parse_double("obj", reader.line_no(), tokens[3])});
    } else if (tag == "f") {
      std::vector<std::uint32_t> poly;
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        // "i", "i/t", "i//n", "i/t/n" — only the vertex index matters here.
        std::string head = tokens[t].substr(0, tokens[t].find('/'));
        const long idx = parse_long("obj", reader.line_no(), head);
        if (idx < 1 || static_cast<std::size_t>(idx) > mesh.vertices.size())
          fail("obj", reader.line_no(),
               "face index " + std::to_string(idx) +
                   " out of range (1.." + std::to_string(mesh.vertices.size()) +
                   ")");
        poly.push_back(static_cast<std::uint32_t>(idx - 1));
      }
      emit_fan("obj", reader.line_no(), poly, mesh.vertices.size(), mesh.faces);
    }
    // vn / vt / usemtl / o / g / s / mtllib are ignored.
  }
  return mesh;
}

std::string write_obj(const TriMesh& mesh) {
  mesh.validate();
  std::string out;
  out.reserve(mesh.vertices.size() * 32 + mesh.faces.size() * 16);
  char buf[1024];  // %.6f of a huge-but-finite double runs past 300 chars
  for (const Point3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const Face& f : mesh.faces) {
    std::snprintf(buf, sizeof(buf), "f %u %u %u\n", f[0] + 1, f[1] + 1,
                  f[2] + 1);
    out += buf;
  }
  return out;
}

std::string write_ply_points(const PointCloud& cloud,
                             const std::string& comment) {
  cloud.validate();
  std::string out = "ply\nformat ascii 1.0\n";
  if (!comment.empty()) out += "comment " + comment + "\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out +=
      "property float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[1024];
  for (const Point3& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f\n", p.x, p.y, p.z);
    out += buf;
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return out.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

TriMesh load_mesh_file(const std::string& path) {
  const std::string bytes = read_file(path);
  const std::size_t dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (char& c : ext)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  try {
    if (ext == "off") return load_off(bytes);
    if (ext == "obj") return load_obj(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
  throw InvalidArgument("unsupported mesh extension '" + ext + "' for " +
                        path + " (expected .off or .obj)");
}

}  // namespace pcmorph
