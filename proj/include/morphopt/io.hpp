#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "morphopt/error.hpp"
#include "morphopt/log.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

/// All floats are serialized with 17 significant digits, enough to
/// round-trip an IEEE double exactly.
inline std::string fmt_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

/// Line-oriented reader that reports the 1-based line number on failure.
class LineReader {
 public:
  LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw Error("cannot open '" + path + "' for reading");
  }

  /// Next non-empty line (whitespace-only lines are skipped).
  std::string next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) return line;
    }
    throw ParseError(path_, line_no_ + 1, std::string("unexpected end of file, expected ") + what);
  }

  /// Splits the next line into exactly n doubles after an optional keyword.
  std::vector<double> numbers(int n, const char* what, const char* keyword = nullptr) {
    std::istringstream ss(next(what));
    if (keyword) {
      std::string word;
      if (!(ss >> word) || word != keyword) fail(std::string("expected '") + keyword + "'");
    }
    std::vector<double> vals(n);
    for (int i = 0; i < n; ++i)
      if (!(ss >> vals[i])) fail(std::string("expected ") + what);
    return vals;
  }

  /// Like next(), but signals end of file instead of throwing.
  bool try_next(std::string& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) {
        out = line;
        return true;
      }
    }
    return false;
  }

  void expect(const std::string& literal) {
    if (next(literal.c_str()) != literal) fail("expected '" + literal + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(path_, line_no_, msg); }
  int line() const { return line_no_; }

 private:
  std::string path_;
  std::ifstream in_;
  int line_no_ = 0;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.precision(17);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Native plain-text format
// ---------------------------------------------------------------------------

inline void write_mesh(const std::string& path, const TriangleMesh& mesh) {
  auto out = detail::open_out(path);
  out << "MORPHMESH v1\n";
  out << "nodes " << mesh.node_count() << "\n";
  for (const auto& p : mesh.nodes) out << fmt_float(p.x()) << " " << fmt_float(p.y()) << "\n";
  out << "triangles " << mesh.triangle_count() << "\n";
  for (const auto& t : mesh.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "boundary_edges " << mesh.boundary_edges.size() << "\n";
  for (const auto& e : mesh.boundary_edges) out << e.a << " " << e.b << " " << e.facet << "\n";
}

/// Reads the native format; non-CCW triangles are repaired in place and the
/// repair count is reported through `repaired` (a warning is logged).
inline std::shared_ptr<TriangleMesh> read_mesh(const std::string& path,
                                               int* repaired = nullptr) {
  detail::LineReader rd(path);
  rd.expect("MORPHMESH v1");
  auto mesh = std::make_shared<TriangleMesh>();
  const int n_nodes = static_cast<int>(rd.numbers(1, "node count", "nodes")[0]);
  if (n_nodes <= 0) rd.fail("node count must be positive");
  mesh->nodes.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const auto v = rd.numbers(2, "node coordinates");
    mesh->nodes[i] = Vec2(v[0], v[1]);
  }
  const int n_tris = static_cast<int>(rd.numbers(1, "triangle count", "triangles")[0]);
  if (n_tris <= 0) rd.fail("triangle count must be positive");
  mesh->triangles.resize(n_tris);
  int flips = 0;
  for (int i = 0; i < n_tris; ++i) {
    const auto v = rd.numbers(3, "triangle node indices");
    std::array<int, 3> t = {static_cast<int>(v[0]), static_cast<int>(v[1]),
                            static_cast<int>(v[2])};
    for (int a : t)
      if (a < 0 || a >= n_nodes) rd.fail("triangle node index out of range");
    if (triangle_signed_area(mesh->nodes[t[0]], mesh->nodes[t[1]], mesh->nodes[t[2]]) < 0.0) {
      std::swap(t[1], t[2]);
      ++flips;
    }
    mesh->triangles[i] = t;
  }
  const int n_edges = static_cast<int>(rd.numbers(1, "boundary edge count", "boundary_edges")[0]);
  mesh->boundary_edges.resize(n_edges);
  for (int i = 0; i < n_edges; ++i) {
    const auto v = rd.numbers(3, "boundary edge");
    mesh->boundary_edges[i] = {static_cast<int>(v[0]), static_cast<int>(v[1]),
                               static_cast<int>(v[2])};
  }
  if (flips > 0) log_warn("repaired orientation of " + std::to_string(flips) +
                          " triangles in '" + path + "'");
  if (repaired) *repaired = flips;
  mesh->finalize();
  return mesh;
}

inline void write_field(std::ostream& out, const NodalField& field) {
  out << "MORPHFIELD v1\n";
  out << "components " << field.components << "\n";
  out << "nodes " << field.node_count() << "\n";
  for (int a = 0; a < field.node_count(); ++a) {
    for (int c = 0; c < field.components; ++c)
      out << (c ? " " : "") << fmt_float(field.values[a * field.components + c]);
    out << "\n";
  }
}

inline void write_field(const std::string& path, const NodalField& field) {
  auto out = detail::open_out(path);
  write_field(out, field);
}

inline NodalField read_field(detail::LineReader& rd, const TriangleMesh& mesh) {
  rd.expect("MORPHFIELD v1");
  const int components = static_cast<int>(rd.numbers(1, "component count", "components")[0]);
  if (components != 1 && components != 2) rd.fail("components must be 1 or 2");
  const int n_nodes = static_cast<int>(rd.numbers(1, "node count", "nodes")[0]);
  if (n_nodes != mesh.node_count()) rd.fail("field node count does not match mesh");
  NodalField f = make_field(mesh, components);
  for (int a = 0; a < n_nodes; ++a) {
    const auto v = rd.numbers(components, "field values");
    for (int c = 0; c < components; ++c) f.values[a * components + c] = v[c];
  }
  return f;
}

inline NodalField read_field(const std::string& path, const TriangleMesh& mesh) {
  detail::LineReader rd(path);
  return read_field(rd, mesh);
}

// ---------------------------------------------------------------------------
// Optimizer checkpoints: all morphings + config + iteration in one file.
// ---------------------------------------------------------------------------

struct CheckpointData {
  int iteration = 0;
  double c1 = 0.0;
  double c2 = 0.0;
  double prev_j = -1.0;  // previous-iteration J, drives the continuation trigger
  int events = 0;           // continuation events so far (drives c1/c2 alternation)
  std::string config_json;  // single line, exactly as loaded
  std::vector<NodalField> displacements;
  // Point-location warm starts (one triangle index per node per morphing).
  // Restoring them makes a resumed run reproduce the uninterrupted one bit
  // for bit: a cold walk may settle edge-straddling queries into the other
  // adjacent triangle, which perturbs results at the last ulp.
  std::vector<std::vector<int>> seeds;
};

inline void write_checkpoint(const std::string& path, const CheckpointData& ck) {
  auto out = detail::open_out(path);
  out << "MORPHCHECKPOINT v1\n";
  out << "iteration " << ck.iteration << "\n";
  out << "c1 " << fmt_float(ck.c1) << "\n";
  out << "c2 " << fmt_float(ck.c2) << "\n";
  out << "prev_j " << fmt_float(ck.prev_j) << "\n";
  out << "events " << ck.events << "\n";
  out << "config " << ck.config_json << "\n";
  out << "morphings " << ck.displacements.size() << "\n";
  for (const auto& d : ck.displacements) write_field(out, d);
  if (!ck.seeds.empty()) {
    out << "seeds " << ck.seeds.size() << "\n";
    for (const auto& row : ck.seeds) {
      for (std::size_t a = 0; a < row.size(); ++a) out << (a ? " " : "") << row[a];
      out << "\n";
    }
  }
}

inline CheckpointData read_checkpoint(const std::string& path, const TriangleMesh& mesh) {
  detail::LineReader rd(path);
  rd.expect("MORPHCHECKPOINT v1");
  CheckpointData ck;
  ck.iteration = static_cast<int>(rd.numbers(1, "iteration", "iteration")[0]);
  ck.c1 = rd.numbers(1, "c1", "c1")[0];
  ck.c2 = rd.numbers(1, "c2", "c2")[0];
  ck.prev_j = rd.numbers(1, "prev_j", "prev_j")[0];
  ck.events = static_cast<int>(rd.numbers(1, "events", "events")[0]);
  const std::string cfg_line = rd.next("config");
  if (cfg_line.rfind("config ", 0) != 0) rd.fail("expected 'config'");
  ck.config_json = cfg_line.substr(7);
  const int n = static_cast<int>(rd.numbers(1, "morphing count", "morphings")[0]);
  ck.displacements.reserve(n);
  for (int i = 0; i < n; ++i) ck.displacements.push_back(read_field(rd, mesh));
  // The seed section is optional; a checkpoint without it resumes with a
  // cold point-location walk.
  std::string line;
  if (rd.try_next(line)) {
    std::istringstream ss(line);
    std::string word;
    int count = 0;
    if (!(ss >> word) || word != "seeds" || !(ss >> count) || count != n)
      rd.fail("expected 'seeds' section matching the morphing count");
    ck.seeds.assign(n, {});
    for (auto& row : ck.seeds) {
      std::istringstream vals(rd.next("seed row"));
      row.reserve(mesh.node_count());
      int t = 0;
      while (vals >> t) row.push_back(t);
      if (static_cast<int>(row.size()) != mesh.node_count())
        rd.fail("seed row length does not match mesh node count");
    }
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Legacy VTK ASCII (unstructured grid, triangle cells)
// ---------------------------------------------------------------------------

inline void write_vtk(const std::string& path, const TriangleMesh& mesh,
                      const std::vector<std::pair<std::string, NodalField>>& fields = {}) {
  auto out = detail::open_out(path);
  out << "# vtk DataFile Version 3.0\n";
  out << "morphopt mesh\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.node_count() << " double\n";
  for (const auto& p : mesh.nodes)
    out << fmt_float(p.x()) << " " << fmt_float(p.y()) << " 0\n";
  out << "CELLS " << mesh.triangle_count() << " " << 4 * mesh.triangle_count() << "\n";
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "CELL_TYPES " << mesh.triangle_count() << "\n";
  for (int i = 0; i < mesh.triangle_count(); ++i) out << "5\n";
  if (!fields.empty()) {
    out << "POINT_DATA " << mesh.node_count() << "\n";
    for (const auto& [name, f] : fields) {
      check_field(mesh, f);
      if (f.components == 1) {
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (int a = 0; a < mesh.node_count(); ++a) out << fmt_float(f.values[a]) << "\n";
      } else {
        out << "VECTORS " << name << " double\n";
        for (int a = 0; a < mesh.node_count(); ++a)
          out << fmt_float(f.values[2 * a]) << " " << fmt_float(f.values[2 * a + 1]) << " 0\n";
      }
    }
  }
}

struct VtkData {
  std::shared_ptr<TriangleMesh> mesh;
  std::vector<std::pair<std::string, NodalField>> fields;
  int repaired_triangles = 0;
};

inline VtkData read_vtk(const std::string& path) {
  detail::LineReader rd(path);
  std::string line = rd.next("VTK header");
  if (line.rfind("# vtk DataFile", 0) != 0) rd.fail("not a legacy VTK file");
  rd.next("title line");
  if (rd.next("format") != "ASCII") rd.fail("only ASCII VTK is supported");
  if (rd.next("dataset") != "DATASET UNSTRUCTURED_GRID")
    rd.fail("only DATASET UNSTRUCTURED_GRID is supported");

  VtkData data;
  data.mesh = std::make_shared<TriangleMesh>();
  auto& mesh = *data.mesh;

  {
    std::istringstream ss(rd.next("POINTS"));
    std::string kw, type;
    int n = 0;
    if (!(ss >> kw >> n >> type) || kw != "POINTS") rd.fail("expected POINTS");
    mesh.nodes.resize(n);
    for (int i = 0; i < n; ++i) {
      const auto v = rd.numbers(3, "point coordinates");
      mesh.nodes[i] = Vec2(v[0], v[1]);
    }
  }
  {
    std::istringstream ss(rd.next("CELLS"));
    std::string kw;
    int n = 0, total = 0;
    if (!(ss >> kw >> n >> total) || kw != "CELLS") rd.fail("expected CELLS");
    mesh.triangles.reserve(n);
    for (int i = 0; i < n; ++i) {
      const auto v = rd.numbers(4, "cell connectivity");
      if (static_cast<int>(v[0]) != 3) rd.fail("only triangle cells (3 nodes) are supported");
      std::array<int, 3> t = {static_cast<int>(v[1]), static_cast<int>(v[2]),
                              static_cast<int>(v[3])};
      if (triangle_signed_area(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]) < 0.0) {
        std::swap(t[1], t[2]);
        ++data.repaired_triangles;
      }
      mesh.triangles.push_back(t);
    }
  }
  {
    std::istringstream ss(rd.next("CELL_TYPES"));
    std::string kw;
    int n = 0;
    if (!(ss >> kw >> n) || kw != "CELL_TYPES") rd.fail("expected CELL_TYPES");
    for (int i = 0; i < n; ++i)
      if (static_cast<int>(rd.numbers(1, "cell type")[0]) != 5)
        rd.fail("only VTK cell type 5 (triangle) is supported");
  }
  if (data.repaired_triangles > 0)
    log_warn("repaired orientation of " + std::to_string(data.repaired_triangles) +
             " triangles in '" + path + "'");
  mesh.finalize();

  // Optional POINT_DATA section with any number of SCALARS/VECTORS blocks.
  std::string section;
  try {
    section = rd.next("POINT_DATA");
  } catch (const ParseError&) {
    return data;  // clean EOF: no point data
  }
  {
    std::istringstream ss(section);
    std::string kw;
    int n = 0;
    if (!(ss >> kw >> n) || kw != "POINT_DATA" || n != mesh.node_count())
      rd.fail("expected POINT_DATA with the mesh node count");
  }
  while (true) {
    std::string header;
    try {
      header = rd.next("field header");
    } catch (const ParseError&) {
      break;  // clean EOF after the last field
    }
    std::istringstream ss(header);
    std::string kind, name, type;
    ss >> kind >> name >> type;
    if (kind == "SCALARS") {
      rd.next("LOOKUP_TABLE");
      NodalField f = make_field(mesh, 1);
      for (int a = 0; a < mesh.node_count(); ++a)
        f.values[a] = rd.numbers(1, "scalar value")[0];
      data.fields.emplace_back(name, std::move(f));
    } else if (kind == "VECTORS") {
      NodalField f = make_field(mesh, 2);
      for (int a = 0; a < mesh.node_count(); ++a) {
        const auto v = rd.numbers(3, "vector value");
        f.values[2 * a] = v[0];
        f.values[2 * a + 1] = v[1];
      }
      data.fields.emplace_back(name, std::move(f));
    } else {
      rd.fail("unsupported point-data block '" + kind + "'");
    }
  }
  return data;
}

}  // namespace morphopt
