#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rigcn/geom.hpp"

namespace rigcn {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;
};

struct LabeledCloud {
  PointCloud cloud;
  std::size_t label = 0;
  std::string source_id;
};

struct DatasetSplit {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
  std::vector<std::string> class_names;
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Area-weighted face choice, then uniform barycentric sampling (sqrt trick).
PointCloud sample_mesh_surface(const Mesh& mesh, std::size_t count, Rng& rng);

/// Built-in shape families.
const std::vector<std::string>& synthetic_families();

struct SyntheticSpec {
  std::vector<std::string> classes{"sphere", "cube"};
  std::size_t instances_per_class = 10;
  std::size_t points = 1024;
  /// Each axis is scaled by a factor drawn from [1 - j, 1 + j].
  double scale_jitter = 0.15;
  /// Relative jitter on family-specific proportions (radii, heights, gaps).
  double proportion_jitter = 0.2;
  double train_fraction = 0.8;
};

/// One normalized instance of `family`.
PointCloud generate_shape(const std::string& family, std::size_t points,
                          double scale_jitter, double proportion_jitter, Rng& rng);

/// Balanced, normalized dataset; the first round(train_fraction * n)
/// instances of each class go to train, the rest to test.
DatasetSplit generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

/// OFF subset: `OFF`, counts, vertices, faces; polygons are fan-triangulated.
Mesh read_off(std::istream& in);
Mesh read_off(const std::filesystem::path& path);
/// One `x y z` triple per line.
PointCloud read_xyz(std::istream& in);
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

struct ManifestRow {
  std::string source_id;
  std::string split;  // "train" | "test"
  std::string class_name;
  std::string path;   // relative to the manifest directory unless absolute
};

/// CSV with header `source_id,split,class_name,path`.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

/// Writes one XYZ file per cloud under `directory` plus `manifest.csv`.
std::filesystem::path export_dataset(const DatasetSplit& split,
                                     const std::filesystem::path& directory);

/// Loads clouds listed in a manifest (XYZ files, or OFF meshes sampled to
/// `points` points), normalized to the unit sphere.
DatasetSplit load_manifest_dataset(const std::filesystem::path& manifest, std::size_t points,
                                   std::uint64_t seed);

}  // namespace rigcn
