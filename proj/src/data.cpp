#include "rigcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "rigcn/errors.hpp"

namespace rigcn {

namespace fs = std::filesystem;

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

PointCloud sample_mesh_surface(const Mesh& mesh, std::size_t count, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    for (auto idx : f) {
      if (idx >= mesh.vertices.size()) throw InvalidInputError("mesh face index out of range");
    }
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidInputError("mesh has zero total surface area");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud out;
  out.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double target = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    // upper_bound never lands on a zero-area face except past the end.
    while (it == cumulative.end() || (it != cumulative.begin() && *it == *(it - 1))) --it;
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double s = std::sqrt(unit(rng));
    const double t = unit(rng);
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    out.points.push_back((1.0 - s) * a + s * (1.0 - t) * b + s * t * c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

namespace {

constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double jittered(Rng& rng, double base, double jitter) {
  return base * uniform(rng, 1.0 - jitter, 1.0 + jitter);
}

Mesh box_mesh(double sx, double sy, double sz) {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1 ? 1 : -1) * sx, (i & 2 ? 1 : -1) * sy, (i & 4 ? 1 : -1) * sz);
  }
  const std::size_t quads[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                                   {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

Mesh pyramid_mesh(double half_base, double height) {
  Mesh m;
  m.vertices = {{-half_base, -half_base, 0}, {half_base, -half_base, 0},
                {half_base, half_base, 0},   {-half_base, half_base, 0},
                {0, 0, height}};
  m.faces = {{0, 2, 1}, {0, 3, 2}, {0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  return m;
}

Vec3 on_unit_circle(Rng& rng, double z) {
  const double a = uniform(rng, 0.0, 2.0 * kPi);
  return {std::cos(a), std::sin(a), z};
}

PointCloud sample_sphere(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud c;
  while (c.size() < n) {
    Vec3 p(g(rng), g(rng), g(rng));
    if (p.norm() > 1e-9) c.points.push_back(p.normalized());
  }
  return c;
}

PointCloud sample_cylinder(std::size_t n, double radius, double height, Rng& rng) {
  const double side = 2.0 * kPi * radius * height;
  const double cap = kPi * radius * radius;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = uniform(rng, 0.0, side + 2.0 * cap);
    if (pick < side) {
      Vec3 p = on_unit_circle(rng, 0.0) * radius;
      p.z() = uniform(rng, -0.5 * height, 0.5 * height);
      c.points.push_back(p);
    } else {
      Vec3 p = on_unit_circle(rng, 0.0) * (radius * std::sqrt(uniform(rng, 0.0, 1.0)));
      p.z() = pick < side + cap ? -0.5 * height : 0.5 * height;
      c.points.push_back(p);
    }
  }
  return c;
}

PointCloud sample_cone(std::size_t n, double radius, double height, Rng& rng) {
  const double slant = std::hypot(radius, height);
  const double lateral = kPi * radius * slant;
  const double base = kPi * radius * radius;
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::sqrt(uniform(rng, 0.0, 1.0));
    Vec3 p = on_unit_circle(rng, 0.0) * (radius * t);
    if (uniform(rng, 0.0, lateral + base) < lateral) {
      p.z() = height * (1.0 - t);
    } else {
      p.z() = 0.0;
    }
    c.points.push_back(p);
  }
  return c;
}

PointCloud sample_torus(std::size_t n, double major, double minor, Rng& rng) {
  PointCloud c;
  while (c.size() < n) {
    const double phi = uniform(rng, 0.0, 2.0 * kPi);
    // Accept with probability proportional to the local area element.
    if (uniform(rng, 0.0, major + minor) > major + minor * std::cos(phi)) continue;
    const double theta = uniform(rng, 0.0, 2.0 * kPi);
    const double ring = major + minor * std::cos(phi);
    c.points.emplace_back(ring * std::cos(theta), ring * std::sin(theta), minor * std::sin(phi));
  }
  return c;
}

PointCloud sample_plane_pair(std::size_t n, double gap, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (i % 2 == 0 ? 0.5 : -0.5) * gap;
    c.points.emplace_back(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), z);
  }
  return c;
}

PointCloud sample_helix(std::size_t n, double turns, double pitch, double tube, Rng& rng) {
  PointCloud c;
  const double span = turns * 2.0 * kPi;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = uniform(rng, 0.0, span);
    const Vec3 center(std::cos(t), std::sin(t), pitch * t);
    const Vec3 tangent = Vec3(-std::sin(t), std::cos(t), pitch).normalized();
    const Vec3 normal(-std::cos(t), -std::sin(t), 0.0);
    const Vec3 binormal = tangent.cross(normal);
    const double a = uniform(rng, 0.0, 2.0 * kPi);
    c.points.push_back(center + tube * (std::cos(a) * normal + std::sin(a) * binormal));
  }
  return c;
}

}  // namespace

const std::vector<std::string>& synthetic_families() {
  static const std::vector<std::string> families{"sphere",     "cube",  "cylinder", "cone",
                                                 "torus",      "plane_pair", "helix", "pyramid"};
  return families;
}

PointCloud generate_shape(const std::string& family, std::size_t points, double scale_jitter,
                          double proportion_jitter, Rng& rng) {
  if (points == 0) throw InvalidArgumentError("generate_shape: points must be >= 1");
  const double pj = proportion_jitter;
  PointCloud cloud;
  if (family == "sphere") {
    cloud = sample_sphere(points, rng);
  } else if (family == "cube") {
    cloud = sample_mesh_surface(box_mesh(1.0, jittered(rng, 1.0, pj), jittered(rng, 1.0, pj)),
                                points, rng);
  } else if (family == "cylinder") {
    cloud = sample_cylinder(points, jittered(rng, 0.5, pj), jittered(rng, 2.0, pj), rng);
  } else if (family == "cone") {
    cloud = sample_cone(points, jittered(rng, 0.8, pj), jittered(rng, 1.6, pj), rng);
  } else if (family == "torus") {
    cloud = sample_torus(points, 1.0, jittered(rng, 0.35, pj), rng);
  } else if (family == "plane_pair") {
    cloud = sample_plane_pair(points, jittered(rng, 0.8, pj), rng);
  } else if (family == "helix") {
    cloud = sample_helix(points, jittered(rng, 2.5, pj), 0.15, 0.12, rng);
  } else if (family == "pyramid") {
    cloud = sample_mesh_surface(pyramid_mesh(1.0, jittered(rng, 1.4, pj)), points, rng);
  } else {
    throw ConfigError("unknown synthetic family '" + family + "'");
  }
  const Vec3 scale(uniform(rng, 1.0 - scale_jitter, 1.0 + scale_jitter),
                   uniform(rng, 1.0 - scale_jitter, 1.0 + scale_jitter),
                   uniform(rng, 1.0 - scale_jitter, 1.0 + scale_jitter));
  for (auto& p : cloud.points) p = p.cwiseProduct(scale);
  return normalize_unit_sphere(cloud);
}

DatasetSplit generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes.size() < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.instances_per_class < 2) throw ConfigError("need at least 2 instances per class");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (spec.scale_jitter < 0.0 || spec.scale_jitter >= 1.0 || spec.proportion_jitter < 0.0 ||
      spec.proportion_jitter >= 1.0) {
    throw ConfigError("jitter values must lie in [0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(spec.instances_per_class)));
  if (n_train == 0 || n_train >= spec.instances_per_class) {
    throw ConfigError("train/test split leaves an empty side");
  }

  DatasetSplit split;
  split.class_names = spec.classes;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (std::size_t i = 0; i < spec.instances_per_class; ++i) {
      Rng rng(derive_seed(seed, c + 1, i));
      LabeledCloud item;
      item.cloud = generate_shape(spec.classes[c], spec.points, spec.scale_jitter,
                                  spec.proportion_jitter, rng);
      item.label = c;
      item.source_id = spec.classes[c] + "_" + std::to_string(i);
      (i < n_train ? split.train : split.test).push_back(std::move(item));
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// File formats

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-blank line with '#' comments removed, split into tokens.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ss(line);
      tokens.clear();
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

double parse_double(const std::string& token, std::size_t line) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw ParseError("expected a number, got '" + token + "'", line);
  return value;
}

std::size_t parse_index(const std::string& token, std::size_t line) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("expected a non-negative integer, got '" + token + "'", line);
  }
  return value;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

Mesh read_off(std::istream& in) {
  LineReader reader(in);
  std::vector<std::string> tokens;
  if (!reader.next(tokens) || tokens[0].rfind("OFF", 0) != 0) {
    throw ParseError("missing OFF header", std::max<std::size_t>(reader.line(), 1));
  }
  std::vector<std::string> counts;
  if (tokens[0] != "OFF") {
    // "OFF3 1 0" style: counts glued onto the header token.
    counts.push_back(tokens[0].substr(3));
    counts.insert(counts.end(), tokens.begin() + 1, tokens.end());
  } else if (tokens.size() > 1) {
    counts.assign(tokens.begin() + 1, tokens.end());
  } else if (!reader.next(counts)) {
    throw ParseError("missing vertex/face counts", reader.line());
  }
  if (counts.size() < 2) throw ParseError("expected vertex and face counts", reader.line());
  const std::size_t nv = parse_index(counts[0], reader.line());
  const std::size_t nf = parse_index(counts[1], reader.line());

  Mesh mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!reader.next(tokens)) throw ParseError("unexpected end of file in vertices", reader.line());
    if (tokens.size() < 3) throw ParseError("vertex needs 3 coordinates", reader.line());
    mesh.vertices.emplace_back(parse_double(tokens[0], reader.line()),
                               parse_double(tokens[1], reader.line()),
                               parse_double(tokens[2], reader.line()));
  }
  for (std::size_t i = 0; i < nf; ++i) {
    if (!reader.next(tokens)) throw ParseError("unexpected end of file in faces", reader.line());
    const std::size_t arity = parse_index(tokens[0], reader.line());
    if (arity < 3) throw ParseError("face needs at least 3 vertices", reader.line());
    if (tokens.size() < arity + 1) throw ParseError("face is missing vertex indices", reader.line());
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < arity; ++j) {
      idx.push_back(parse_index(tokens[j + 1], reader.line()));
      if (idx.back() >= nv) {
        throw ParseError("face vertex index " + std::to_string(idx.back()) + " out of range",
                         reader.line());
      }
    }
    for (std::size_t j = 1; j + 1 < arity; ++j) mesh.faces.push_back({idx[0], idx[j], idx[j + 1]});
  }
  return mesh;
}

Mesh read_off(const fs::path& path) {
  auto in = open_input(path);
  return read_off(in);
}

PointCloud read_xyz(std::istream& in) {
  LineReader reader(in);
  std::vector<std::string> tokens;
  PointCloud cloud;
  while (reader.next(tokens)) {
    if (tokens.size() != 3) throw ParseError("expected 'x y z'", reader.line());
    cloud.points.emplace_back(parse_double(tokens[0], reader.line()),
                              parse_double(tokens[1], reader.line()),
                              parse_double(tokens[2], reader.line()));
  }
  return cloud;
}

PointCloud read_xyz(const fs::path& path) {
  auto in = open_input(path);
  return read_xyz(in);
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

void write_xyz(const fs::path& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write '" + path.string() + "'");
  write_xyz(out, cloud);
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<ManifestRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (header) {
      if (cells != std::vector<std::string>{"source_id", "split", "class_name", "path"}) {
        throw ParseError("manifest header must be source_id,split,class_name,path", line_no);
      }
      header = false;
      continue;
    }
    if (cells.size() != 4) throw ParseError("manifest row needs 4 columns", line_no);
    if (cells[1] != "train" && cells[1] != "test") {
      throw ParseError("split must be 'train' or 'test', got '" + cells[1] + "'", line_no);
    }
    rows.push_back({cells[0], cells[1], cells[2], cells[3]});
  }
  if (header) throw ParseError("manifest is empty", 1);
  return rows;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write '" + path.string() + "'");
  out << "source_id,split,class_name,path\n";
  for (const auto& r : rows) {
    out << r.source_id << ',' << r.split << ',' << r.class_name << ',' << r.path << '\n';
  }
}

fs::path export_dataset(const DatasetSplit& split, const fs::path& directory) {
  std::vector<ManifestRow> rows;
  for (const char* part : {"train", "test"}) {
    const auto& items = std::string(part) == "train" ? split.train : split.test;
    fs::create_directories(directory / part);
    for (const auto& item : items) {
      const fs::path rel = fs::path(part) / (item.source_id + ".xyz");
      write_xyz(directory / rel, item.cloud);
      rows.push_back({item.source_id, part, split.class_names.at(item.label), rel.generic_string()});
    }
  }
  const fs::path manifest = directory / "manifest.csv";
  write_manifest(manifest, rows);
  return manifest;
}

DatasetSplit load_manifest_dataset(const fs::path& manifest, std::size_t points,
                                   std::uint64_t seed) {
  const auto rows = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  DatasetSplit split;
  std::map<std::string, std::size_t> label_of;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    auto [it, inserted] = label_of.try_emplace(row.class_name, split.class_names.size());
    if (inserted) split.class_names.push_back(row.class_name);
    fs::path file(row.path);
    if (file.is_relative()) file = base / file;
    PointCloud cloud;
    if (file.extension() == ".off") {
      Rng rng(derive_seed(seed, 0x0ff, i));
      cloud = sample_mesh_surface(read_off(file), points, rng);
    } else {
      cloud = read_xyz(file);
    }
    LabeledCloud item{normalize_unit_sphere(cloud), it->second, row.source_id};
    (row.split == "train" ? split.train : split.test).push_back(std::move(item));
  }
  std::vector<char> seen(split.class_names.size(), 0);
  for (const auto& item : split.train) seen[item.label] = 1;
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw ConfigError("class '" + split.class_names[c] + "' has no training samples");
  }
  return split;
}

}  // namespace rigcn
